//! Split-prime supply and the resulting ℓ-torsion bound for cyclic fields,
//! joined against ingested class-group tables.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::arith::{gcd, sieve_primes};
use crate::error::{Error, Result};
use crate::fields::{frobenius_class, CyclicField, Frobenius};

/// `#{p ≤ D_K^δ : p unramified and split completely}`.
pub fn split_prime_count(field: &CyclicField, delta: f64) -> Result<u64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta = {delta} must be positive")));
    }
    let bound = (field.discriminant as f64).powf(delta);
    if bound < 2.0 {
        return Ok(0);
    }
    if !(bound <= crate::arith::SIEVE_LIMIT_MAX as f64) {
        return Err(Error::Range(format!("prime bound {bound} too large")));
    }
    Ok(sieve_primes(bound.floor() as u64)?
        .iter()
        .filter(|&&p| frobenius_class(field, p) == Frobenius::Class(0))
        .count() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvBound {
    /// `D^{1/2+ε} / max(M, 1)`.
    pub bound: f64,
    /// `D^{1/2+ε}`.
    pub trivial: f64,
    /// `D^{1/2 − 1/(2ℓ(n−1)) + ε}`.
    pub target: f64,
    /// `M = 0`: no split primes, so only the trivial bound.
    pub degenerate: bool,
}

/// Torsion bound with implied constant 1.
pub fn ev_bound(d: f64, ell: u64, n: u64, m: u64, eps: f64) -> EvBound {
    let trivial = d.powf(0.5 + eps);
    EvBound {
        bound: trivial / m.max(1) as f64,
        trivial,
        target: d.powf(0.5 - 1.0 / (2.0 * ell as f64 * (n - 1) as f64) + eps),
        degenerate: m == 0,
    }
}

/// Largest admissible δ is strictly below `1/(2ℓ(n−1))`.
pub fn delta_limit(ell: u64, n: u64) -> f64 {
    1.0 / (2.0 * ell as f64 * (n - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsionReport {
    pub field_label: String,
    pub degree: u64,
    pub conductor: u64,
    pub discriminant: u64,
    pub ell: u64,
    pub delta: f64,
    pub m: u64,
    pub bound: f64,
    pub trivial_bound: f64,
    pub target: f64,
    pub degenerate: bool,
    pub table_value: Option<u64>,
    pub exponent_ratio: Option<f64>,
}

pub fn torsion_report(field: &CyclicField, ell: u64, delta: f64, eps: f64) -> Result<TorsionReport> {
    if ell == 0 {
        return Err(Error::Domain("ell must be at least 1".into()));
    }
    let lim = delta_limit(ell, field.degree);
    if !(delta > 0.0 && delta < lim) {
        return Err(Error::Domain(format!("delta = {delta} not in (0, {lim})")));
    }
    let m = split_prime_count(field, delta)?;
    let b = ev_bound(field.discriminant as f64, ell, field.degree, m, eps);
    Ok(TorsionReport {
        field_label: field.label.clone(),
        degree: field.degree,
        conductor: field.conductor,
        discriminant: field.discriminant,
        ell,
        delta,
        m,
        bound: b.bound,
        trivial_bound: b.trivial,
        target: b.target,
        degenerate: b.degenerate,
        table_value: None,
        exponent_ratio: None,
    })
}

/// One row of an ingested class-group table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub degree: u64,
    pub conductor: u64,
    pub discriminant: u64,
    pub class_number: u64,
    pub class_group: Vec<u64>,
}

impl ClassRow {
    /// `|Cl[ℓ]| = ∏ gcd(dᵢ, ℓ)` over the elementary divisors.
    pub fn torsion(&self, ell: u64) -> u64 {
        self.class_group.iter().map(|&d| gcd(d, ell)).product()
    }
}

fn parse_group(s: &str) -> Option<Vec<u64>> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(',')
        .map(|t| t.trim().parse().ok().filter(|&d: &u64| d >= 1))
        .collect()
}

/// Read `label,degree,conductor,discriminant,class_number,class_group`.
/// Row numbers in errors count the header as row 1.
pub fn read_class_table<R: Read>(r: R) -> Result<Vec<ClassRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let expected = [
        "label",
        "degree",
        "conductor",
        "discriminant",
        "class_number",
        "class_group",
    ];
    let headers = rd.headers().map_err(|e| Error::Ingest {
        row: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::Ingest {
            row: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingest {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != 6 {
            return Err(Error::Ingest {
                row,
                msg: format!("expected 6 fields, got {}", rec.len()),
            });
        }
        let num = |j: usize| -> Result<u64> {
            rec[j].trim().parse().map_err(|_| Error::Ingest {
                row,
                msg: format!("{} is not a nonnegative integer: {:?}", expected[j], &rec[j]),
            })
        };
        let class_group = parse_group(&rec[5]).ok_or_else(|| Error::Ingest {
            row,
            msg: format!("bad class_group {:?}", &rec[5]),
        })?;
        let class_number = num(4)?;
        if class_group.iter().product::<u64>() != class_number {
            return Err(Error::Ingest {
                row,
                msg: "class_number differs from the product of the class_group".into(),
            });
        }
        out.push(ClassRow {
            label: rec[0].trim().to_string(),
            degree: num(1)?,
            conductor: num(2)?,
            discriminant: num(3)?,
            class_number,
            class_group,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub field_label: String,
    pub table_value: u64,
    pub exponent_ratio: f64,
    pub exceeds_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub max_exponent_ratio: Option<f64>,
    /// Reports whose `(degree, conductor)` matched rows with differing
    /// torsion, left unjoined.
    pub ambiguous: Vec<String>,
    pub unmatched: Vec<String>,
}

/// Join by label, falling back to `(degree, conductor)`. A fallback is
/// accepted only when every candidate row has the same ℓ-torsion.
/// Reports are updated with the joined values.
pub fn compare_with_table(reports: &mut [TorsionReport], table: &[ClassRow]) -> Comparison {
    let by_label: BTreeMap<&str, &ClassRow> = table.iter().map(|r| (r.label.as_str(), r)).collect();
    let mut by_key: BTreeMap<(u64, u64), Vec<&ClassRow>> = BTreeMap::new();
    for r in table {
        by_key.entry((r.degree, r.conductor)).or_default().push(r);
    }
    let mut cmp = Comparison {
        rows: Vec::new(),
        max_exponent_ratio: None,
        ambiguous: Vec::new(),
        unmatched: Vec::new(),
    };
    for rep in reports.iter_mut() {
        let value = if let Some(row) = by_label.get(rep.field_label.as_str()) {
            Some(row.torsion(rep.ell))
        } else if let Some(rows) = by_key.get(&(rep.degree, rep.conductor)) {
            let vals: Vec<u64> = rows.iter().map(|r| r.torsion(rep.ell)).collect();
            if vals.windows(2).all(|w| w[0] == w[1]) {
                Some(vals[0])
            } else {
                cmp.ambiguous.push(rep.field_label.clone());
                None
            }
        } else {
            cmp.unmatched.push(rep.field_label.clone());
            None
        };
        let Some(v) = value else { continue };
        let ratio = (v as f64).ln() / (rep.discriminant as f64).ln();
        rep.table_value = Some(v);
        rep.exponent_ratio = Some(ratio);
        cmp.max_exponent_ratio = Some(cmp.max_exponent_ratio.map_or(ratio, |m: f64| m.max(ratio)));
        cmp.rows.push(ComparisonRow {
            field_label: rep.field_label.clone(),
            table_value: v,
            exponent_ratio: ratio,
            exceeds_bound: v as f64 > rep.bound,
        });
    }
    cmp
}

/// `field_label,ell,delta,M,bound,trivial_bound,table_value,exponent_ratio`.
pub fn write_torsion_csv<W: std::io::Write>(w: W, reports: &[TorsionReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "field_label",
        "ell",
        "delta",
        "M",
        "bound",
        "trivial_bound",
        "table_value",
        "exponent_ratio",
    ])?;
    for r in reports {
        wr.write_record([
            r.field_label.clone(),
            r.ell.to_string(),
            r.delta.to_string(),
            r.m.to_string(),
            format!("{:.12e}", r.bound),
            format!("{:.12e}", r.trivial_bound),
            r.table_value.map(|v| v.to_string()).unwrap_or_default(),
            r.exponent_ratio.map(|v| format!("{v:.12e}")).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::enumerate_cyclic;

    fn k7() -> CyclicField {
        enumerate_cyclic(3, 49.0).unwrap().remove(0)
    }

    #[test]
    fn split_counts() {
        let k = k7();
        assert_eq!(split_prime_count(&k, 0.125).unwrap(), 0);
        let delta = 100f64.ln() / 49f64.ln();
        assert_eq!(split_prime_count(&k, delta).unwrap(), 7);
        let mut last = 0;
        for i in 1..40 {
            let m = split_prime_count(&k, i as f64 * 0.1).unwrap();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn bound_algebra() {
        let b0 = ev_bound(1e8, 2, 3, 0, 0.01);
        assert!(b0.degenerate);
        assert_eq!(b0.bound, b0.trivial);
        let b1 = ev_bound(1e8, 2, 3, 1, 0.01);
        for m in [2u64, 3, 17, 1000] {
            let b = ev_bound(1e8, 2, 3, m, 0.01);
            assert!((b.bound * m as f64 - b1.bound).abs() <= 1e-12 * b1.bound);
            assert!(b.bound < b.trivial);
        }
        // M = D^{1/(2ℓ(n−1))} lands on the target exponent.
        let d: f64 = 1e8;
        let m = d.powf(0.125).round() as u64;
        let b = ev_bound(d, 2, 3, m, 0.01);
        assert!((b.bound.ln() - b.target.ln()).abs() < 0.05 * b.target.ln());
    }

    #[test]
    fn delta_admissibility() {
        let k = k7();
        assert!(torsion_report(&k, 2, 0.125, 0.01).is_err());
        assert!(torsion_report(&k, 2, 0.12, 0.01).is_ok());
    }

    #[test]
    fn ingestion() {
        let csv = "label,degree,conductor,discriminant,class_number,class_group\n\
                   3.7.1,3,7,49,1,[]\n\
                   x:63/1,3,63,3969,3,[3]\n\
                   x:63/2,3,63,3969,3,[3]\n\
                   x:163/1,3,163,26569,4,\"[2,2]\"\n";
        let rows = read_class_table(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].torsion(2), 4);
        assert_eq!(rows[1].torsion(2), 1);
        let bad =
            "label,degree,conductor,discriminant,class_number,class_group\n3.7.1,3,7,49,1,[]\n3.9.1,3,nine,81,1,[]\n";
        assert!(matches!(
            read_class_table(bad.as_bytes()),
            Err(Error::Ingest { row: 3, .. })
        ));
        let bad = "label,degree,conductor,discriminant,class_number,class_group\n3.7.1,3,7,49,2,[3]\n";
        assert!(matches!(
            read_class_table(bad.as_bytes()),
            Err(Error::Ingest { row: 2, .. })
        ));
        let empty = "label,degree,conductor,discriminant,class_number,class_group\n";
        assert!(read_class_table(empty.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn join() {
        let fs = enumerate_cyclic(3, 163f64 * 163.0).unwrap();
        let mut reps: Vec<TorsionReport> = fs.iter().map(|k| torsion_report(k, 2, 0.12, 0.01).unwrap()).collect();
        let cmp = compare_with_table(&mut reps, &[]);
        assert!(cmp.rows.is_empty() && cmp.max_exponent_ratio.is_none());
        let table = read_class_table(
            "label,degree,conductor,discriminant,class_number,class_group\n\
             3.7.1,3,7,49,1,[]\n\
             p:163/1,3,163,26569,4,\"[2,2]\"\n"
                .as_bytes(),
        )
        .unwrap();
        let cmp = compare_with_table(&mut reps, &table);
        assert_eq!(cmp.rows.len(), 2);
        assert_eq!(cmp.rows[0].table_value, 1);
        assert_eq!(cmp.rows[0].exponent_ratio, 0.0);
        let r163 = 4f64.ln() / 26569f64.ln();
        assert_eq!(cmp.max_exponent_ratio, Some(r163));
        assert!(reps.iter().any(|r| r.table_value == Some(4)));
    }

    #[test]
    fn csv_is_deterministic() {
        let fs = enumerate_cyclic(3, 1e6).unwrap();
        let run = || {
            let reps: Vec<TorsionReport> = fs.iter().map(|k| torsion_report(k, 2, 0.12, 0.01).unwrap()).collect();
            let mut buf = Vec::new();
            write_torsion_csv(&mut buf, &reps).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }
}
