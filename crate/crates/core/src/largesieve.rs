//! Large-sieve harnesses: the zero-weighted inequality, its dyadic form and
//! the dual operator, the well-spaced zero reduction, and the parameter
//! calculator.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand_core::RngCore;
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characters::{CharacterFamily, DirichletCharacter};
use crate::error::{Error, Result};
use crate::lfunc::{rankin_selberg_residue, Rectangle, Zero};
use crate::sievekit::PseudoCharacterContext;

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `η = (c/6)/log(qT)`.
pub fn eta(q: f64, t: f64, c: f64) -> Result<f64> {
    if !(q * t > 1.0) {
        return Err(Error::Domain(format!("qT = {} must exceed 1", q * t)));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("c = {c} must be positive")));
    }
    Ok(c / 6.0 / (q * t).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// One representative zero per strip `R_j = [α,1]×[jη,(j+1)η]`, restricted
/// to one parity of `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSpacedSelection {
    pub eta: f64,
    /// Smallest and largest `j` with a representative (if any).
    pub rectangles: Option<(i64, i64)>,
    pub chosen: Vec<Zero>,
    pub parity: Parity,
    /// Number of nonempty strips before the parity split.
    pub representatives: usize,
}

impl WellSpacedSelection {
    pub fn empty(eta: f64) -> Self {
        WellSpacedSelection {
            eta,
            rectangles: None,
            chosen: Vec::new(),
            parity: Parity::Even,
            representatives: 0,
        }
    }

    /// Smallest gap between chosen ordinates.
    pub fn min_gap(&self) -> Option<f64> {
        self.chosen
            .windows(2)
            .map(|w| (w[1].gamma - w[0].gamma).abs())
            .min_by(f64::total_cmp)
    }
}

fn strip_index(gamma: f64, eta: f64) -> i64 {
    (gamma / eta).floor() as i64
}

/// Zero counts per strip index `j`.
pub fn rectangle_counts(zeros: &[Zero], eta: f64) -> BTreeMap<i64, u64> {
    let mut out = BTreeMap::new();
    for z in zeros {
        *out.entry(strip_index(z.gamma, eta)).or_insert(0) += 1;
    }
    out
}

/// `⌈κ₁(1−α)log(q(|t_j|+3)) + κ₂⌉` with `t_j = (2j+1)η/2`.
pub fn rectangle_count_envelope(q: f64, j: i64, eta: f64, alpha: f64, kappa1: f64, kappa2: f64) -> u64 {
    let tj = (2 * j + 1) as f64 * eta / 2.0;
    (kappa1 * (1.0 - alpha) * (q * (tj.abs() + 3.0)).ln() + kappa2).ceil() as u64
}

/// Representative per strip (lowest γ, then lowest β), then the parity
/// class with more strips (even on ties).
pub fn well_spaced_zeros(zeros: &[Zero], rect: Rectangle, eta: f64) -> Result<WellSpacedSelection> {
    if !(eta > 0.0) {
        return Err(Error::Domain("eta must be positive".into()));
    }
    // A located zero is an enclosure; it belongs to the rectangle when the
    // enclosure meets it.
    let inside = |z: &Zero| {
        let r = z.refinement_radius.max(0.0);
        z.beta >= rect.alpha - r && z.beta <= 1.0 + r && z.gamma.abs() <= rect.t + r
    };
    if let Some(z) = zeros.iter().find(|z| !inside(z)) {
        return Err(Error::Contract(format!(
            "zero {}+{}i outside the rectangle",
            z.beta, z.gamma
        )));
    }
    let mut reps: BTreeMap<i64, Zero> = BTreeMap::new();
    for z in zeros {
        let j = strip_index(z.gamma, eta);
        match reps.get(&j) {
            Some(cur) if (cur.gamma, cur.beta) <= (z.gamma, z.beta) => {}
            _ => {
                reps.insert(j, z.clone());
            }
        }
    }
    if reps.is_empty() {
        return Ok(WellSpacedSelection::empty(eta));
    }
    let even = reps.keys().filter(|j| j.rem_euclid(2) == 0).count();
    let odd = reps.len() - even;
    let parity = if even >= odd { Parity::Even } else { Parity::Odd };
    let want = if parity == Parity::Even { 0 } else { 1 };
    let chosen: Vec<Zero> = reps
        .iter()
        .filter(|(j, _)| j.rem_euclid(2) == want)
        .map(|(_, z)| z.clone())
        .collect();
    let lo = *reps.keys().next().expect("nonempty");
    let hi = *reps.keys().next_back().expect("nonempty");
    Ok(WellSpacedSelection {
        eta,
        rectangles: Some((lo, hi)),
        chosen,
        parity,
        representatives: reps.len(),
    })
}

/// Whether the `n ≥ M` support hypothesis is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportMode {
    /// Coefficients below `M` are a contract violation.
    Paper,
    /// Support constraint relaxed; reports are stamped accordingly.
    Desk,
}

/// Family shape and sieve parameters shared by the harnesses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveParams {
    pub q: f64,
    pub t: f64,
    pub r: u64,
    pub delta: f64,
    pub z: f64,
    pub eps0: f64,
    /// Degree `n` of the L-functions (1 for Dirichlet characters).
    pub n: f64,
    /// Conductor exponent `A` and size exponent `d` of the family.
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
}

impl SieveParams {
    /// `M = 2(q^{d+nA/2} T R^{1+3δ} log R)^{1/(1/2−ε₀)}`.
    pub fn big_m(&self) -> Result<f64> {
        if !(self.eps0 > 0.0 && self.eps0 < 0.5) {
            return Err(Error::Range(format!("eps0 = {} outside (0, 1/2)", self.eps0)));
        }
        let r = self.r as f64;
        let base = self.q.powf(self.d + self.n * self.a / 2.0) * self.t * r.powf(1.0 + 3.0 * self.delta) * r.ln();
        Ok(2.0 * base.powf(1.0 / (0.5 - self.eps0)))
    }
}

/// `M′ = (q^{d+nA/2} (τ−1)⁻¹ R^{1+3δ} log R)^{1/(1/2−ε₀)}`.
pub fn m_prime(q: f64, d: f64, n: f64, a: f64, tau: f64, r: f64, delta: f64, eps0: f64) -> f64 {
    let base = q.powf(d + n * a / 2.0) / (tau - 1.0) * r.powf(1.0 + 3.0 * delta) * r.ln();
    base.powf(1.0 / (0.5 - eps0))
}

/// Per-character data for the sieve sums: `1/s(f)` and the admissible `r`
/// with `1/|ψ_f(r)|` and `ψ_{f,r}(n)λ_f(n)` for the needed `n`.
struct FamilyMember {
    inv_s: f64,
    rs: Vec<(u64, f64)>,
    ctx: PseudoCharacterContext,
}

fn family_members(family: &CharacterFamily, r_cap: u64, delta: f64, z: f64) -> Result<Vec<FamilyMember>> {
    family
        .members
        .iter()
        .map(|chi| {
            let ctx = PseudoCharacterContext::new(chi.clone(), delta, z, r_cap)?;
            let mut rs = Vec::new();
            for r in ctx.admissible_r_set() {
                let psi = ctx.psi_f(r)?;
                rs.push((r, (*psi.denom() as f64 / *psi.numer() as f64).abs()));
            }
            Ok(FamilyMember {
                inv_s: 1.0 / rankin_selberg_residue(chi).residue,
                rs,
                ctx,
            })
        })
        .collect()
}

fn psi_lambda(ctx: &PseudoCharacterContext, r: u64, n: u64) -> Result<Complex64> {
    let chi: &DirichletCharacter = ctx.character();
    let lam = chi.evaluate(n % chi.modulus());
    if lam.norm() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let psi = ctx.psi_fr(r, n)?;
    Ok(lam * (*psi.numer() as f64 / *psi.denom() as f64))
}

/// Left side of the zero-weighted large sieve:
/// `Σ_f s(f)⁻¹ Σ_ρ Σ_{r≤R} |ψ_f(r)|⁻¹ |Σ_n a_n ψ_{f,r}(n)λ_f(n)n^{−ρ}|²`,
/// with `a_n = coeffs[n−1]`.
pub fn lhs_theorem14(
    family: &CharacterFamily,
    selections: &[WellSpacedSelection],
    coeffs: &[Complex64],
    params: &SieveParams,
    mode: SupportMode,
) -> Result<f64> {
    if selections.len() != family.members.len() {
        return Err(Error::Contract("one selection per family member required".into()));
    }
    if mode == SupportMode::Paper {
        let m = params.big_m()?;
        if let Some(n) = coeffs
            .iter()
            .enumerate()
            .find(|(i, a)| ((i + 1) as f64) < m && a.norm() != 0.0)
            .map(|(i, _)| i + 1)
        {
            return Err(Error::Contract(format!(
                "a_{n} != 0 but n < M = {m:e} (use desk mode to relax)"
            )));
        }
    }
    let (_, terms) = lhs_terms(family, selections, coeffs, params)?;
    Ok(pairwise_sum(&terms))
}

/// One `(f, r)` summand of a sieve left side (summed over zeros when the
/// side has them).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub character: String,
    pub r: u64,
    pub value: f64,
}

/// [`lhs_theorem14`] split by `(f, r)`, in family then `r` order.
pub fn lhs_theorem14_breakdown(
    family: &CharacterFamily,
    selections: &[WellSpacedSelection],
    coeffs: &[Complex64],
    params: &SieveParams,
) -> Result<Vec<Contribution>> {
    if selections.len() != family.members.len() {
        return Err(Error::Contract("one selection per family member required".into()));
    }
    let (triples, terms) = lhs_terms(family, selections, coeffs, params)?;
    let members = family_members(family, params.r, params.delta, params.z)?;
    let mut out: Vec<Contribution> = Vec::new();
    for (m, _) in members.iter().zip(selections) {
        for &(r, _) in &m.rs {
            out.push(Contribution {
                character: m.ctx.character().label(),
                r,
                value: 0.0,
            });
        }
    }
    let mut offsets = Vec::with_capacity(members.len());
    let mut acc = 0;
    for m in &members {
        offsets.push(acc);
        acc += m.rs.len();
    }
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); out.len()];
    for (&(fi, _, ri), &v) in triples.iter().zip(&terms) {
        parts[offsets[fi] + ri].push(v);
    }
    for (c, p) in out.iter_mut().zip(parts) {
        c.value = pairwise_sum(&p);
    }
    Ok(out)
}

type Triple = (usize, usize, usize);

fn lhs_terms(
    family: &CharacterFamily,
    selections: &[WellSpacedSelection],
    coeffs: &[Complex64],
    params: &SieveParams,
) -> Result<(Vec<Triple>, Vec<f64>)> {
    let members = family_members(family, params.r, params.delta, params.z)?;
    let support: Vec<(u64, Complex64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() != 0.0)
        .map(|(i, a)| ((i + 1) as u64, *a))
        .collect();

    let mut triples = Vec::new();
    for (fi, (m, sel)) in members.iter().zip(selections).enumerate() {
        for (zi, _) in sel.chosen.iter().enumerate() {
            for (ri, _) in m.rs.iter().enumerate() {
                triples.push((fi, zi, ri));
            }
        }
    }
    let terms: Vec<Result<f64>> = triples
        .par_iter()
        .map(|&(fi, zi, ri)| {
            let m = &members[fi];
            let rho = selections[fi].chosen[zi].rho();
            let (r, inv_psi) = m.rs[ri];
            let mut acc = Complex64::new(0.0, 0.0);
            for &(n, a) in &support {
                let c = psi_lambda(&m.ctx, r, n)?;
                if c.norm() != 0.0 {
                    acc += a * c * (-rho * (n as f64).ln()).exp();
                }
            }
            Ok(m.inv_s * inv_psi * acc.norm_sqr())
        })
        .collect();
    let terms: Vec<f64> = terms.into_iter().collect::<Result<_>>()?;
    Ok((triples, terms))
}

/// `character_label,r,contribution`.
pub fn write_breakdown_csv<W: std::io::Write>(w: W, rows: &[Contribution]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["character_label", "r", "contribution"])?;
    for c in rows {
        wr.write_record([c.character.clone(), c.r.to_string(), format!("{:e}", c.value)])?;
    }
    wr.flush()?;
    Ok(())
}

/// `log(qTN)(1 + log(log N / log qTR)) Σ_{n≤N} |a_n|² n^{1−2α}`.
pub fn rhs_theorem14(coeffs: &[Complex64], q: f64, t: f64, n: f64, r: f64, alpha: f64) -> Result<f64> {
    let qtr = q * t * r;
    if !(n > qtr && n > std::f64::consts::E) {
        return Err(Error::Domain(format!(
            "N = {n} must exceed max(qTR, e) = {}",
            qtr.max(std::f64::consts::E)
        )));
    }
    let inner = n.ln() / qtr.ln();
    if !(qtr > 1.0) || !(inner > 0.0) {
        return Err(Error::Domain("log-log argument not positive".into()));
    }
    let terms: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .take_while(|(i, _)| ((i + 1) as f64) <= n)
        .map(|(i, a)| a.norm_sqr() * ((i + 1) as f64).powf(1.0 - 2.0 * alpha))
        .collect();
    Ok((q * t * n).ln() * (1.0 + inner.ln()) * pairwise_sum(&terms))
}

/// Echo of harness parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveReportParams {
    pub q: f64,
    pub t: Option<f64>,
    pub r: u64,
    pub n: Option<f64>,
    pub n_prime: Option<u64>,
    pub tau: Option<f64>,
    pub m: Option<f64>,
    pub m_prime: Option<f64>,
    pub delta: f64,
    pub eps0: f64,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub params: SieveReportParams,
    /// `N′ > M′` (dyadic) or `N > M` (zero-weighted).
    pub above_threshold: bool,
    pub mode: SupportMode,
}

/// Dyadic instance `(family, R, N′, τ)` with its explicit coefficient
/// matrix `c_{n,(f,r)} = ψ_{f,r}(n)λ_f(n)/√(s(f)|ψ_f(r)|)`.
pub struct DyadicInstance {
    pub n_prime: u64,
    pub tau: f64,
    /// Indices `n` of the rows, `N′ ≤ n ≤ τN′`.
    pub ns: Vec<u64>,
    /// Column labels `(character label, r)`.
    pub columns: Vec<(String, u64)>,
    /// Row-major `|ns| × |columns|`.
    pub matrix: Vec<Complex64>,
}

impl DyadicInstance {
    pub fn new(family: &CharacterFamily, r_cap: u64, delta: f64, z: f64, n_prime: u64, tau: f64) -> Result<Self> {
        if !(tau > 1.0 && tau <= 2.0) {
            return Err(Error::Domain(format!("tau = {tau} outside (1, 2]")));
        }
        if n_prime == 0 {
            return Err(Error::Domain("N' must be positive".into()));
        }
        let members = family_members(family, r_cap, delta, z)?;
        let hi = (tau * n_prime as f64).floor() as u64;
        let ns: Vec<u64> = (n_prime..=hi).collect();
        let mut columns = Vec::new();
        let mut cols = Vec::new();
        for m in &members {
            for &(r, inv_psi) in &m.rs {
                columns.push((m.ctx.character().label(), r));
                cols.push((m, r, (m.inv_s * inv_psi).sqrt()));
            }
        }
        let mut matrix = Vec::with_capacity(ns.len() * cols.len());
        for &n in &ns {
            for &(m, r, w) in &cols {
                matrix.push(psi_lambda(&m.ctx, r, n)? * w);
            }
        }
        Ok(DyadicInstance {
            n_prime,
            tau,
            ns,
            columns,
            matrix,
        })
    }

    pub fn rows(&self) -> usize {
        self.ns.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * self.cols() + j]
    }

    /// `Σ_γ |Σ_n c_{n,γ} a_n|²`: the dyadic left side for `a`.
    pub fn primal_form(&self, a: &[Complex64]) -> f64 {
        let v = self.apply(a);
        pairwise_sum(&v.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
    }

    /// [`primal_form`](Self::primal_form) split by column.
    pub fn contributions(&self, a: &[Complex64]) -> Vec<Contribution> {
        self.apply(a)
            .iter()
            .zip(&self.columns)
            .map(|(v, (label, r))| Contribution {
                character: label.clone(),
                r: *r,
                value: v.norm_sqr(),
            })
            .collect()
    }

    /// `Σ_n |Σ_γ c_{n,γ} b_γ|²`: the dual (smoothed) form for `b`.
    pub fn dual_form(&self, b: &[Complex64]) -> f64 {
        let v = self.apply_dual(b);
        pairwise_sum(&v.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
    }

    /// `A a = {Σ_n c_{n,γ} a_n}_γ`.
    fn apply(&self, a: &[Complex64]) -> Vec<Complex64> {
        (0..self.cols())
            .map(|j| (0..self.rows()).map(|i| self.entry(i, j) * a[i]).sum())
            .collect()
    }

    /// `A* b = {Σ_γ c_{n,γ} b_γ}_n` (transpose, no conjugation).
    fn apply_dual(&self, b: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.entry(i, j) * b[j]).sum())
            .collect()
    }

    fn apply_adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.entry(i, j).conj() * v[j]).sum())
            .collect()
    }

    fn apply_dual_adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.cols())
            .map(|j| (0..self.rows()).map(|i| self.entry(i, j).conj() * v[i]).sum())
            .collect()
    }

    /// `‖A‖²` by power iteration on `A^H A`.
    pub fn primal_norm_sq(&self, seed: u64, tol: f64) -> PowerIteration {
        power_iterate(self.rows(), seed, tol, |x| self.apply_adjoint(&self.apply(x)))
    }

    /// `‖A*‖²` by power iteration on the dual side.
    pub fn dual_norm_sq(&self, seed: u64, tol: f64) -> PowerIteration {
        power_iterate(self.cols(), seed, tol, |x| self.apply_dual_adjoint(&self.apply_dual(x)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub value: f64,
    pub iterations: u32,
    pub converged: bool,
}

fn norm(v: &[Complex64]) -> f64 {
    pairwise_sum(&v.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).sqrt()
}

/// Uniform in `[0,1)` from the top 53 bits.
pub fn unit_f64(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random complex vector with unit norm.
pub fn random_unit_vector(len: usize, rng: &mut SplitMix64) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(unit_f64(rng) - 0.5, unit_f64(rng) - 0.5))
        .collect();
    let n = norm(&v);
    v.into_iter().map(|z| z / n).collect()
}

fn power_iterate<F>(len: usize, seed: u64, tol: f64, op: F) -> PowerIteration
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if len == 0 {
        return PowerIteration {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut x = random_unit_vector(len, &mut rng);
    let mut prev = 0.0;
    for it in 1..=20_000u32 {
        let y = op(&x);
        // Rayleigh quotient of the Hermitian operator.
        let value: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
        let ny = norm(&y);
        if ny == 0.0 {
            return PowerIteration {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        x = y.into_iter().map(|z| z / ny).collect();
        if it > 1 && (value - prev).abs() <= tol * value.abs() {
            return PowerIteration {
                value,
                iterations: it,
                converged: true,
            };
        }
        prev = value;
    }
    PowerIteration {
        value: prev,
        iterations: 20_000,
        converged: false,
    }
}

/// Dyadic harness: `(13eqn)` left side against `(τ−1)N′Σ|a_n|²`, with
/// `a_n = coeffs[n − N′]` for `N′ ≤ n ≤ τN′`.
pub fn dyadic_harness(
    family: &CharacterFamily,
    coeffs: &[Complex64],
    tau: f64,
    n_prime: u64,
    params: &SieveParams,
) -> Result<SieveReport> {
    let inst = DyadicInstance::new(family, params.r, params.delta, params.z, n_prime, tau)?;
    if coeffs.len() != inst.rows() {
        return Err(Error::Contract(format!(
            "expected {} coefficients on [N', tau N'], got {}",
            inst.rows(),
            coeffs.len()
        )));
    }
    Ok(dyadic_report(&inst, coeffs, params))
}

fn dyadic_report(inst: &DyadicInstance, coeffs: &[Complex64], params: &SieveParams) -> SieveReport {
    let lhs = inst.primal_form(coeffs);
    let mass = pairwise_sum(&coeffs.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
    let rhs = (inst.tau - 1.0) * inst.n_prime as f64 * mass;
    let mp = m_prime(
        params.q,
        params.d,
        params.n,
        params.a,
        inst.tau,
        params.r as f64,
        params.delta,
        params.eps0,
    );
    SieveReport {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        params: SieveReportParams {
            q: params.q,
            t: None,
            r: params.r,
            n: None,
            n_prime: Some(inst.n_prime),
            tau: Some(inst.tau),
            m: None,
            m_prime: Some(mp),
            delta: params.delta,
            eps0: params.eps0,
            alpha: None,
        },
        above_threshold: inst.n_prime as f64 > mp,
        mode: SupportMode::Desk,
    }
}

/// Ratio statistics over random unit coefficient vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub trials: usize,
    pub median_ratio: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

pub fn dyadic_stability(inst: &DyadicInstance, params: &SieveParams, trials: usize, seed: u64) -> StabilityReport {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut ratios: Vec<f64> = (0..trials)
        .map(|_| {
            let a = random_unit_vector(inst.rows(), &mut rng);
            dyadic_report(inst, &a, params).ratio
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.is_empty() {
        0.0
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]) / 2.0
    };
    StabilityReport {
        trials,
        median_ratio: median,
        max_ratio: ratios.last().copied().unwrap_or(0.0),
        min_ratio: ratios.first().copied().unwrap_or(0.0),
    }
}

/// Primal versus dual operator norm on one dyadic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub rows: usize,
    pub cols: usize,
    pub primal_norm_sq: f64,
    pub dual_norm_sq: f64,
    pub relative_gap: f64,
    pub primal_iterations: u32,
    pub dual_iterations: u32,
    pub converged: bool,
    /// Best of the random trials on each side (lower bounds for the norms).
    pub primal_sampled_max: f64,
    pub dual_sampled_max: f64,
}

pub fn duality_check(inst: &DyadicInstance, seed: u64, tol: f64, samples: usize) -> DualityReport {
    let p = inst.primal_norm_sq(seed, tol);
    let d = inst.dual_norm_sq(seed.wrapping_add(1), tol);
    let mut rng = SplitMix64::seed_from_u64(seed.wrapping_add(2));
    let mut pmax: f64 = 0.0;
    let mut dmax: f64 = 0.0;
    for _ in 0..samples {
        pmax = pmax.max(inst.primal_form(&random_unit_vector(inst.rows(), &mut rng)));
        dmax = dmax.max(inst.dual_form(&random_unit_vector(inst.cols(), &mut rng)));
    }
    DualityReport {
        rows: inst.rows(),
        cols: inst.cols(),
        primal_norm_sq: p.value,
        dual_norm_sq: d.value,
        relative_gap: (p.value - d.value).abs() / p.value.max(d.value),
        primal_iterations: p.iterations,
        dual_iterations: d.iterations,
        converged: p.converged && d.converged,
        primal_sampled_max: pmax,
        dual_sampled_max: dmax,
    }
}

/// A value that may overflow `f64`; `log10` is always finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Big {
    pub value: Option<f64>,
    pub log10: f64,
}

impl Big {
    fn from_log10(log10: f64) -> Self {
        let v = 10f64.powf(log10);
        Big {
            value: v.is_finite().then_some(v),
            log10,
        }
    }
}

/// Inputs of the parameter calculator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsInput {
    pub n: f64,
    pub n_k: f64,
    pub a: f64,
    pub d: f64,
    pub q: Option<f64>,
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    /// `ε₀ … ε₄`; `δ = ε₁`.
    pub eps: [f64; 5],
    pub tau: f64,
    /// The zero-free-region constant `c` of `η = (c/6)/log qT`.
    pub c: f64,
}

impl ConstantsInput {
    pub fn basic(n: f64, n_k: f64, a: f64, d: f64) -> Self {
        ConstantsInput {
            n,
            n_k,
            a,
            d,
            q: None,
            t: None,
            r: None,
            alpha: None,
            eps: [0.1; 5],
            tau: 2.0,
            c: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    /// `c₁` at `d = 2nA`: `8nA + A/2 + 1`.
    pub c1_at_d_2na: f64,
    pub z: f64,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub r: Option<Big>,
    pub m: Option<Big>,
    pub m_prime: Option<Big>,
    pub w: Option<Big>,
    pub y: Option<Big>,
    pub x: Option<Big>,
}

/// Closed-form constants; heights-dependent parameters in log space.
pub fn constants(inp: &ConstantsInput) -> Result<Constants> {
    let (n, nk, a, d) = (inp.n, inp.n_k, inp.a, inp.d);
    if !(n > 0.0 && nk > 0.0 && a > 0.0 && d > 0.0) {
        return Err(Error::Range("n, n_k, A, d must be positive".into()));
    }
    let c1 = 2.0 * d + 4.0 * n * a + a / 2.0 + 1.0;
    let c2 = n * nk / 2.0 + 3.0;
    let c1_at_d_2na = 8.0 * n * a + a / 2.0 + 1.0;
    let z = 4.0 * n.powi(4) * nk.powi(4);
    let mut out = Constants {
        c1,
        c2,
        c1_at_d_2na,
        z,
        delta: None,
        eta: None,
        r: None,
        m: None,
        m_prime: None,
        w: None,
        y: None,
        x: None,
    };
    let (Some(q), Some(t)) = (inp.q, inp.t) else {
        return Ok(out);
    };
    let [e0, e1, e2, e3, e4] = inp.eps;
    if !(e0 > 0.0 && e0 < 0.5) {
        return Err(Error::Range(format!("eps0 = {e0} outside (0, 1/2)")));
    }
    if !(e1 > 0.0 && e1 < 0.25) {
        return Err(Error::Range(format!("delta = eps1 = {e1} outside (0, 1/4)")));
    }
    if !(inp.tau > 1.0 && inp.tau <= 2.0) {
        return Err(Error::Range(format!("tau = {} outside (1, 2]", inp.tau)));
    }
    let delta = e1;
    let lq = q.log10();
    let lt = t.log10();
    let lqt = lq + lt;
    out.delta = Some(delta);
    out.eta = eta(q, t, inp.c).ok();

    // R = q^{nA}(qT)^{ε₂} unless given.
    let lr = match inp.r {
        Some(r) => r.log10(),
        None => n * a * lq + e2 * lqt,
    };
    let r_ln = lr * std::f64::consts::LN_10;
    if !(r_ln > 0.0) {
        return Err(Error::Range("R must exceed 1".into()));
    }
    let expo = 1.0 / (0.5 - e0);
    let base_m = (d + n * a / 2.0) * lq + lt + (1.0 + 3.0 * delta) * lr + r_ln.log10();
    let lm = 2f64.log10() + expo * base_m;
    let base_mp = (d + n * a / 2.0) * lq - (inp.tau - 1.0).log10() + (1.0 + 3.0 * delta) * lr + r_ln.log10();
    let lmp = expo * base_mp;
    let lw = lm;
    let ly = lw + e3 * lqt;
    out.r = Some(Big::from_log10(lr));
    out.m = Some(Big::from_log10(lm));
    out.m_prime = Some(Big::from_log10(lmp));
    out.w = Some(Big::from_log10(lw));
    out.y = Some(Big::from_log10(ly));
    if let Some(alpha) = inp.alpha {
        if !(0.75..1.0).contains(&alpha) {
            return Err(Error::Range(format!("alpha = {alpha} outside [3/4, 1)")));
        }
        let inner = ly + a / 2.0 * lq + n * nk / 2.0 * lt + (1.0 + 4.0 * delta) * lr;
        out.x = Some(Big::from_log10(inner * (1.0 / (2.0 * alpha - 1.0) + e4)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::primitive_characters;
    use crate::lfunc::Zero;

    fn zero(beta: f64, gamma: f64) -> Zero {
        Zero {
            beta,
            gamma,
            character_id: "x".into(),
            refinement_radius: 1e-9,
        }
    }

    #[test]
    fn eta_examples() {
        let e = eta(5.0, 10.0, 0.1).unwrap();
        assert!((e - 0.1 / 6.0 / 50f64.ln()).abs() < 1e-18);
        assert!((e - 0.004_260_37).abs() < 1e-8);
        let e6 = 6f64.exp();
        assert!((eta(e6, 1.0, 6.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(eta(5.0, 10.0, 0.2).unwrap(), 2.0 * e);
        assert!(eta(0.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn well_spaced_examples() {
        let rect = Rectangle::new(0.5, 10.0).unwrap();
        let sel = well_spaced_zeros(&[], rect, 1.0).unwrap();
        assert!(sel.chosen.is_empty());
        let zs = vec![zero(0.5, 1.0), zero(0.5, 1.2), zero(0.5, 5.0)];
        let sel = well_spaced_zeros(&zs, rect, 2.0).unwrap();
        assert_eq!(sel.chosen.iter().map(|z| z.gamma).collect::<Vec<_>>(), vec![1.0, 5.0]);
        assert_eq!(sel.parity, Parity::Even);
        assert_eq!(sel.rectangles, Some((0, 2)));
        // Negative ordinates use floor, so −0.5 lands in j = −1 (odd).
        let zs = vec![zero(0.5, -0.5), zero(0.5, 2.5), zero(0.5, 4.5)];
        let sel = well_spaced_zeros(&zs, rect, 1.0).unwrap();
        assert_eq!(sel.parity, Parity::Even);
        assert_eq!(sel.chosen.len(), 2);
        assert!(well_spaced_zeros(&[zero(0.3, 1.0)], rect, 1.0).is_err());
        // Enclosures straddling Re s = 1/2 count as inside; clear misses do not.
        assert!(well_spaced_zeros(&[zero(0.5 - 5e-16, 1.0)], rect, 1.0).is_ok());
        assert!(well_spaced_zeros(&[zero(0.5 - 1e-6, 1.0)], rect, 1.0).is_err());
    }

    #[test]
    fn well_spaced_random_corpora() {
        let mut rng = SplitMix64::seed_from_u64(7);
        let rect = Rectangle::new(0.5, 30.0).unwrap();
        for _ in 0..100 {
            let k = (unit_f64(&mut rng) * 40.0) as usize;
            let eta = 0.05 + unit_f64(&mut rng);
            let zs: Vec<Zero> = (0..k)
                .map(|_| zero(0.5 + 0.5 * unit_f64(&mut rng), 60.0 * unit_f64(&mut rng) - 30.0))
                .collect();
            let sel = well_spaced_zeros(&zs, rect, eta).unwrap();
            if let Some(g) = sel.min_gap() {
                assert!(g >= eta);
            }
            assert!(2 * sel.chosen.len() >= sel.representatives);
        }
    }

    fn family5() -> CharacterFamily {
        CharacterFamily::primitive(5).unwrap()
    }

    fn params(r: u64) -> SieveParams {
        SieveParams {
            q: 5.0,
            t: 10.0,
            r,
            delta: 0.1,
            z: 4.0,
            eps0: 0.25,
            n: 1.0,
            a: 1.0,
            d: 1.0,
            alpha: 0.75,
        }
    }

    #[test]
    fn lhs_examples() {
        let fam = family5();
        let rect = Rectangle::new(0.5, 20.0).unwrap();
        let sels: Vec<_> = fam
            .members
            .iter()
            .map(|_| well_spaced_zeros(&[zero(0.6, 3.0)], rect, 0.5).unwrap())
            .collect();
        let zeros = vec![Complex64::new(0.0, 0.0); 30];
        assert_eq!(
            lhs_theorem14(&fam, &sels, &zeros, &params(15), SupportMode::Desk).unwrap(),
            0.0
        );
        let empty: Vec<_> = fam.members.iter().map(|_| WellSpacedSelection::empty(0.5)).collect();
        let mut a = zeros.clone();
        a[22] = Complex64::new(1.0, 0.0);
        assert_eq!(
            lhs_theorem14(&fam, &empty, &a, &params(15), SupportMode::Desk).unwrap(),
            0.0
        );

        // Single character, single zero, r = 1, a_N = 1 at N = 23.
        let one = CharacterFamily::new(5, vec![fam.members[0].clone()], 1.0, 1.0).unwrap();
        let sel = vec![sels[0].clone()];
        let v = lhs_theorem14(&one, &sel, &a, &params(1), SupportMode::Desk).unwrap();
        let rho = Complex64::new(0.6, 3.0);
        let lam = fam.members[0].evaluate(23 % 5);
        let hand = (lam * (-rho * 23f64.ln()).exp()).norm_sqr() / 0.8;
        assert!((v - hand).abs() < 1e-14);

        // Paper mode rejects small support.
        assert!(matches!(
            lhs_theorem14(&one, &sel, &a, &params(15), SupportMode::Paper),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn lhs_monotone_and_homogeneous() {
        let fam = family5();
        let rect = Rectangle::new(0.5, 20.0).unwrap();
        let small: Vec<_> = fam
            .members
            .iter()
            .map(|_| well_spaced_zeros(&[zero(0.7, 2.0)], rect, 0.5).unwrap())
            .collect();
        let big: Vec<_> = fam
            .members
            .iter()
            .map(|_| well_spaced_zeros(&[zero(0.7, 2.0), zero(0.8, 9.0)], rect, 0.5).unwrap())
            .collect();
        let mut rng = SplitMix64::seed_from_u64(1);
        let a: Vec<Complex64> = random_unit_vector(60, &mut rng);
        let l1 = lhs_theorem14(&fam, &small, &a, &params(15), SupportMode::Desk).unwrap();
        let l2 = lhs_theorem14(&fam, &big, &a, &params(15), SupportMode::Desk).unwrap();
        let l3 = lhs_theorem14(&fam, &big, &a, &params(40), SupportMode::Desk).unwrap();
        assert!(l1 <= l2 && l2 <= l3);
        let lam = Complex64::new(1.5, -2.0);
        let scaled: Vec<Complex64> = a.iter().map(|x| x * lam).collect();
        let l4 = lhs_theorem14(&fam, &big, &scaled, &params(40), SupportMode::Desk).unwrap();
        assert!((l4 - lam.norm_sqr() * l3).abs() <= 1e-12 * l4);
        let r1 = rhs_theorem14(&a, 5.0, 10.0, 400.0, 10.0, 0.75);
        assert!(r1.is_err());
        let r1 = rhs_theorem14(&a, 5.0, 1.0, 60.0, 10.0, 0.75).unwrap();
        let r2 = rhs_theorem14(&scaled, 5.0, 1.0, 60.0, 10.0, 0.75).unwrap();
        assert!((r2 - lam.norm_sqr() * r1).abs() <= 1e-12 * r2);
    }

    #[test]
    fn breakdowns_sum_to_totals() {
        let fam = family5();
        let rect = Rectangle::new(0.5, 20.0).unwrap();
        let sels: Vec<_> = fam
            .members
            .iter()
            .map(|_| well_spaced_zeros(&[zero(0.7, 2.0), zero(0.8, 9.0)], rect, 0.5).unwrap())
            .collect();
        let mut rng = SplitMix64::seed_from_u64(3);
        let a = random_unit_vector(60, &mut rng);
        let total = lhs_theorem14(&fam, &sels, &a, &params(15), SupportMode::Desk).unwrap();
        let parts = lhs_theorem14_breakdown(&fam, &sels, &a, &params(15)).unwrap();
        assert_eq!(parts.len(), 3 * 4);
        let sum: f64 = parts.iter().map(|c| c.value).sum();
        assert!((sum - total).abs() <= 1e-12 * total);

        let inst = DyadicInstance::new(&fam, 15, 0.1, 4.0, 50, 1.5).unwrap();
        let b = random_unit_vector(inst.rows(), &mut rng);
        let cols = inst.contributions(&b);
        assert_eq!(cols.len(), inst.cols());
        let sum: f64 = cols.iter().map(|c| c.value).sum();
        assert!((sum - inst.primal_form(&b)).abs() <= 1e-12 * sum);
        let mut buf = Vec::new();
        write_breakdown_csv(&mut buf, &cols).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("character_label,r,contribution\n"));
    }

    #[test]
    fn rhs_examples() {
        let mut a = vec![Complex64::new(0.0, 0.0); 100];
        assert_eq!(rhs_theorem14(&a, 5.0, 2.0, 100.0, 3.0, 0.5).unwrap(), 0.0);
        a[99] = Complex64::new(1.0, 0.0);
        let v = rhs_theorem14(&a, 5.0, 2.0, 100.0, 3.0, 0.5).unwrap();
        let expect = (5.0f64 * 2.0 * 100.0).ln() * (1.0 + (100f64.ln() / 30f64.ln()).ln());
        assert!((v - expect).abs() < 1e-13);
        let doubled: Vec<Complex64> = a.iter().map(|x| x * 2.0).collect();
        assert_eq!(rhs_theorem14(&doubled, 5.0, 2.0, 100.0, 3.0, 0.5).unwrap(), 4.0 * v);
    }

    #[test]
    fn m_prime_example() {
        let v = m_prime(5.0, 1.0, 1.0, 1.0, 1.5, 4.0, 0.1, 0.25);
        let oracle = (5f64.powf(1.5) * 2.0 * 4f64.powf(1.3) * 4f64.ln()).powi(4);
        assert!((v - oracle).abs() < 1e-6 * oracle);
        assert!((v / 1.25e9 - 1.0).abs() < 0.01);
    }

    #[test]
    fn dyadic_and_duality() {
        let fam = family5();
        let p = params(15);
        let inst = DyadicInstance::new(&fam, 15, 0.1, 4.0, 50, 1.5).unwrap();
        assert_eq!(inst.cols(), 3 * 4);
        assert_eq!(inst.rows(), 26);
        let zeros = vec![Complex64::new(0.0, 0.0); inst.rows()];
        let rep = dyadic_harness(&fam, &zeros, 1.5, 50, &p).unwrap();
        assert_eq!(rep.ratio, 0.0);
        assert!(dyadic_harness(&fam, &zeros, 2.5, 50, &p).is_err());
        let d = duality_check(&inst, 11, 1e-10, 20);
        assert!(d.converged);
        assert!(d.relative_gap < 1e-6, "{d:?}");
        assert!(d.primal_sampled_max <= d.primal_norm_sq * (1.0 + 1e-9));
        let st = dyadic_stability(&inst, &p, 20, 3);
        assert!(st.max_ratio <= 3.0 * st.median_ratio);
    }

    #[test]
    fn constants_examples() {
        let c = constants(&ConstantsInput::basic(1.0, 1.0, 1.0, 2.0)).unwrap();
        assert_eq!((c.c1, c.c2, c.z), (9.5, 3.5, 4.0));
        assert_eq!(c.c1_at_d_2na, 9.5);
        let mut inp = ConstantsInput::basic(1.0, 1.0, 1.0, 2.0);
        inp.q = Some(5.0);
        inp.t = Some(10.0);
        inp.alpha = Some(0.8);
        let c = constants(&inp).unwrap();
        assert!(c.x.unwrap().log10 > c.y.unwrap().log10);
        assert!(c.y.unwrap().log10 > c.w.unwrap().log10);
        inp.alpha = Some(0.6);
        assert!(constants(&inp).is_err());
        // M′ against the standalone formula.
        let mut inp = ConstantsInput::basic(1.0, 1.0, 1.0, 1.0);
        inp.q = Some(5.0);
        inp.t = Some(10.0);
        inp.r = Some(4.0);
        inp.tau = 1.5;
        inp.eps = [0.25, 0.1, 0.1, 0.1, 0.1];
        let c = constants(&inp).unwrap();
        let mp = m_prime(5.0, 1.0, 1.0, 1.0, 1.5, 4.0, 0.1, 0.25);
        let got = c.m_prime.unwrap().value.unwrap();
        assert!((got / mp - 1.0).abs() < 1e-12, "{got} vs {mp}");
    }

    #[test]
    fn rectangle_count_envelope_shape() {
        assert_eq!(rectangle_count_envelope(1.0, 0, 0.1, 0.99, 1.0, 1.0), 2);
        assert!(rectangle_count_envelope(50.0, 1000, 0.01, 0.75, 1.0, 1.0) >= 2);
        let zs = vec![zero(0.5, 0.05), zero(0.5, 0.07), zero(0.5, -0.05)];
        let counts = rectangle_counts(&zs, 0.1);
        assert_eq!(counts.get(&0), Some(&2));
        assert_eq!(counts.get(&-1), Some(&1));
        let _ = primitive_characters(3);
    }
}
