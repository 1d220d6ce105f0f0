//! Prime counts by Frobenius class for cyclic fields, the error-term shapes
//! they are compared against, and the κ constant chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::sieve_primes;
use crate::error::{Error, Result};
use crate::fields::{frobenius_class, CyclicField, Frobenius};

pub const PI_COUNT_X_MAX: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Large,
}

/// Constants entering the paper-shaped error bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub kappa: f64,
    pub c3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebotarevReport {
    pub field_label: String,
    pub x: f64,
    pub class_index: u64,
    pub pi_x: u64,
    pub pi_c: u64,
    pub ramified: u64,
    pub normalized_error: f64,
    pub regime: Regime,
    /// `x ≥ (log D)^{2/κ}`, below which neither shape is claimed.
    pub in_range: bool,
    /// `(|C|/n) x^{1−κ}`.
    pub paper_bound_small: f64,
    /// `(|C|/n) x / exp(c₃ (log x)^{1/2} n^{−1/2})`.
    pub paper_bound_large: f64,
}

/// Shared ascending prime list for repeated counts.
pub struct PrimeTable {
    pub limit: u64,
    pub primes: Vec<u64>,
}

impl PrimeTable {
    pub fn new(limit: f64) -> Result<Self> {
        if !(limit <= PI_COUNT_X_MAX) {
            return Err(Error::Range(format!("x = {limit} above {PI_COUNT_X_MAX}")));
        }
        let l = limit.max(0.0).floor() as u64;
        let primes = if l < 2 { Vec::new() } else { sieve_primes(l)? };
        Ok(PrimeTable { limit: l, primes })
    }

    pub fn upto(&self, x: f64) -> &[u64] {
        let end = self.primes.partition_point(|&p| (p as f64) <= x);
        &self.primes[..end]
    }
}

/// One report per class, from a shared prime table covering `x`.
pub fn pi_counts_with(
    field: &CyclicField,
    x: f64,
    primes: &PrimeTable,
    consts: BoundConstants,
) -> Result<Vec<ChebotarevReport>> {
    if x > primes.limit as f64 + 1.0 - 1e-9 && x >= 2.0 {
        return Err(Error::Contract(format!(
            "prime table to {} does not cover x = {x}",
            primes.limit
        )));
    }
    let n = field.degree;
    let ps = primes.upto(x);
    let mut by_class = vec![0u64; n as usize];
    let mut ramified = 0u64;
    for &p in ps {
        match frobenius_class(field, p) {
            Frobenius::Class(c) => by_class[c as usize] += 1,
            Frobenius::Ramified => ramified += 1,
        }
    }
    let pi_x = ps.len() as u64;
    let share = pi_x as f64 / n as f64;
    let ln_d = (field.discriminant as f64).ln();
    let ln_x = x.ln();
    let regime = if x > 1.0 && ln_x >= ln_d / (24.0 * consts.kappa) {
        Regime::Large
    } else {
        Regime::Small
    };
    let in_range = x > 1.0 && ln_x >= 2.0 / consts.kappa * ln_d.ln();
    let small = x.powf(1.0 - consts.kappa) / n as f64;
    let large = if x > 1.0 {
        x / (consts.c3 * ln_x.sqrt() / (n as f64).sqrt()).exp() / n as f64
    } else {
        0.0
    };
    Ok(by_class
        .iter()
        .enumerate()
        .map(|(c, &pi_c)| ChebotarevReport {
            field_label: field.label.clone(),
            x,
            class_index: c as u64,
            pi_x,
            pi_c,
            ramified,
            normalized_error: if share > 0.0 {
                (pi_c as f64 - share).abs() / share
            } else {
                0.0
            },
            regime,
            in_range,
            paper_bound_small: small,
            paper_bound_large: large,
        })
        .collect())
}

pub fn pi_counts(field: &CyclicField, x: f64, consts: BoundConstants) -> Result<Vec<ChebotarevReport>> {
    let table = PrimeTable::new(x)?;
    pi_counts_with(field, x, &table, consts)
}

/// Reports for many fields on a shared table, in input order.
pub fn pi_counts_batch(fields: &[CyclicField], x: f64, consts: BoundConstants) -> Result<Vec<ChebotarevReport>> {
    let table = PrimeTable::new(x)?;
    let per: Vec<Result<Vec<ChebotarevReport>>> = fields
        .par_iter()
        .map(|k| pi_counts_with(k, x, &table, consts))
        .collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

/// `Σ_C π_C + ramified = π(x)` over one field's reports.
pub fn partition_holds(reports: &[ChebotarevReport]) -> bool {
    let Some(first) = reports.first() else {
        return true;
    };
    let sum: u64 = reports.iter().map(|r| r.pi_c).sum();
    sum + first.ramified == first.pi_x
}

/// The constant chain ending in κ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaChain {
    pub a: f64,
    pub d: f64,
    pub c_j1: f64,
    pub c_j2: f64,
    pub alpha_j: f64,
    pub delta: f64,
    pub kappa: f64,
    pub alpha_at_least_three_quarters: bool,
}

/// `A = |G|/2`, `d = n|G|+1`, `c_{j,1} = 2d+4nA+A/2+1+ε`,
/// `c_{j,2} = nn_k/2+3+ε`, `(c_{j,1}+|G|c_{j,2}/2)(1−α_j) = ε/2`,
/// `δ = ε/(2(c_{j,1}+|G|c_{j,2}/2))`, `κ = δ/8`.
pub fn kappa(n: f64, n_k: f64, g_order: f64, eps: f64) -> Result<KappaChain> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Range(format!("eps = {eps} outside (0, 1)")));
    }
    let a = g_order / 2.0;
    let d = n * g_order + 1.0;
    let c_j1 = 2.0 * d + 4.0 * n * a + a / 2.0 + 1.0 + eps;
    let c_j2 = n * n_k / 2.0 + 3.0 + eps;
    let weight = c_j1 + g_order / 2.0 * c_j2;
    let alpha_j = 1.0 - eps / (2.0 * weight);
    let delta = eps / (2.0 * weight);
    Ok(KappaChain {
        a,
        d,
        c_j1,
        c_j2,
        alpha_j,
        delta,
        kappa: delta / 8.0,
        alpha_at_least_three_quarters: alpha_j >= 0.75,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdtzfBound {
    pub value: f64,
    pub terms: [f64; 3],
    /// `x ≥ (log D_L)^{16/δ}`.
    pub valid: bool,
}

/// `(|C|/|G|)(x/log x)(x^{−δ/8} + T^{−1/24}e^{−√(c₄ log x/n_L)/24}
/// + T^{−1/24}e^{−c₄ log x/(24 log D_L)})`.
pub fn cdtzf_bound(d_l: f64, n_l: f64, delta: f64, t: f64, x: f64, c4: f64, class_ratio: f64) -> CdtzfBound {
    let lx = x.ln();
    let ld = d_l.ln();
    let t24 = t.powf(-1.0 / 24.0);
    let terms = [
        x.powf(-delta / 8.0),
        t24 * (-(c4 * lx / n_l).sqrt() / 24.0).exp(),
        t24 * (-c4 * lx / (24.0 * ld)).exp(),
    ];
    CdtzfBound {
        value: class_ratio * x / lx * (terms[0] + terms[1] + terms[2]),
        terms,
        valid: lx >= 16.0 / delta * ld.ln(),
    }
}

/// `field_label,x,class,pi_C,pi,normalized_error,paper_bound_small,paper_bound_large`.
pub fn write_chebotarev_csv<W: std::io::Write>(w: W, reports: &[ChebotarevReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "field_label",
        "x",
        "class",
        "pi_C",
        "pi",
        "normalized_error",
        "paper_bound_small",
        "paper_bound_large",
    ])?;
    for r in reports {
        wr.write_record([
            r.field_label.clone(),
            r.x.to_string(),
            r.class_index.to_string(),
            r.pi_c.to_string(),
            r.pi_x.to_string(),
            format!("{:.12e}", r.normalized_error),
            format!("{:.12e}", r.paper_bound_small),
            format!("{:.12e}", r.paper_bound_large),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
