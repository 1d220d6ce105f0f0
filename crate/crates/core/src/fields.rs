//! Cyclic fields of prime degree over ℚ, described by their defining
//! Dirichlet characters: enumeration by conductor, labels, Frobenius classes
//! and count statistics.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, SpfTable};
use crate::characters::{CharacterGroup, DirichletCharacter};
use crate::error::{Error, Result};

/// Degrees supported by the enumerator.
pub const SUPPORTED_DEGREES: [u64; 3] = [3, 5, 7];

/// Largest discriminant bound accepted by [`enumerate_cyclic`].
pub const DISCRIMINANT_MAX: f64 = 1e12;

/// A cyclic field of prime degree `n` and conductor `f`, `D_K = f^{n−1}`.
#[derive(Clone, Debug)]
pub struct CyclicField {
    pub degree: u64,
    pub conductor: u64,
    pub discriminant: u64,
    /// The `n−1` conjugate primitive characters, representative first.
    pub characters: Vec<DirichletCharacter>,
    pub label: String,
}

/// Serializable view of a [`CyclicField`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicFieldRecord {
    pub label: String,
    pub degree: u64,
    pub conductor: u64,
    pub discriminant: u64,
    pub character_exponents: Vec<u64>,
}

impl CyclicField {
    /// The character used for Frobenius classes.
    pub fn character(&self) -> &DirichletCharacter {
        &self.characters[0]
    }

    pub fn record(&self) -> CyclicFieldRecord {
        CyclicFieldRecord {
            label: self.label.clone(),
            degree: self.degree,
            conductor: self.conductor,
            discriminant: self.discriminant,
            character_exponents: self.character().exponents().to_vec(),
        }
    }

    pub fn ramified_primes(&self) -> Vec<u64> {
        self.character().group().factorization().primes().collect()
    }
}

/// Frobenius at `p`: a class in `0..n` or ramified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frobenius {
    Class(u64),
    Ramified,
}

/// `χ(p) = e(k/n)` for the representative character; `0` means `p` splits
/// completely.
pub fn frobenius_class(field: &CyclicField, p: u64) -> Frobenius {
    match field.character().value_index(p % field.conductor) {
        Some(k) => Frobenius::Class(k),
        None => Frobenius::Ramified,
    }
}

fn check_degree(n: u64) -> Result<()> {
    if SUPPORTED_DEGREES.contains(&n) {
        Ok(())
    } else {
        Err(Error::Domain(format!("degree {n} not in {SUPPORTED_DEGREES:?}")))
    }
}

/// Conductors that can carry a primitive character of prime order `n`:
/// squarefree products of primes `≡ 1 (mod n)`, optionally times `n²`.
pub fn is_admissible_conductor(n: u64, f: u64, spf: &SpfTable) -> bool {
    if f < 2 {
        return false;
    }
    spf.factorize(f as usize)
        .factors
        .iter()
        .all(|&(p, e)| (p == n && e == 2) || (p % n == 1 && e == 1))
}

/// Primitive order-`n` characters mod `f`, split into Galois-conjugacy
/// classes `{χ^k : 1 ≤ k < n}`. Classes are sorted by the exponent vector
/// of their smallest member, which comes first in each class.
pub fn conjugacy_classes(group: &std::sync::Arc<CharacterGroup>, n: u64) -> Vec<Vec<DirichletCharacter>> {
    let prims: Vec<DirichletCharacter> = group
        .characters_of_order(n)
        .into_iter()
        .filter(|c| c.is_primitive())
        .collect();
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut classes = Vec::new();
    for chi in &prims {
        if seen.contains(chi.exponents()) {
            continue;
        }
        let mut class: Vec<DirichletCharacter> = (1..n).filter(|&k| gcd(k, n) == 1).map(|k| chi.pow(k)).collect();
        class.sort_by(|a, b| a.exponents().cmp(b.exponents()));
        class.dedup_by(|a, b| a.exponents() == b.exponents());
        for c in &class {
            seen.insert(c.exponents().to_vec());
        }
        classes.push(class);
    }
    classes.sort_by(|a, b| a[0].exponents().cmp(b[0].exponents()));
    classes
}

fn fields_of_conductor(n: u64, f: u64) -> Result<Vec<CyclicField>> {
    let group = CharacterGroup::new(f)?;
    let disc = f.checked_pow((n - 1) as u32).ok_or(Error::Overflow("discriminant"))?;
    Ok(conjugacy_classes(&group, n)
        .into_iter()
        .enumerate()
        .map(|(i, characters)| CyclicField {
            degree: n,
            conductor: f,
            discriminant: disc,
            characters,
            label: format!("{n}.{f}.{}", i + 1),
        })
        .collect())
}

/// Largest conductor with `f^{n−1} ≤ x`.
pub fn conductor_bound(n: u64, x: f64) -> u64 {
    let mut f = x.powf(1.0 / (n - 1) as f64).floor().max(0.0) as u64;
    let pow = |f: u64| (f as f64).powi((n - 1) as i32);
    while f > 0 && pow(f) > x {
        f -= 1;
    }
    while pow(f + 1) <= x {
        f += 1;
    }
    f
}

/// All cyclic fields of degree `n` with `D_K ≤ x`, sorted by `(D_K, label)`.
pub fn enumerate_cyclic(n: u64, x: f64) -> Result<Vec<CyclicField>> {
    check_degree(n)?;
    if !(x <= DISCRIMINANT_MAX) {
        return Err(Error::Range(format!("discriminant bound {x} above {DISCRIMINANT_MAX}")));
    }
    let f_max = conductor_bound(n, x);
    let spf = SpfTable::new(f_max as usize);
    let conductors: Vec<u64> = (2..=f_max).filter(|&f| is_admissible_conductor(n, f, &spf)).collect();
    let per: Vec<Result<Vec<CyclicField>>> = conductors.par_iter().map(|&f| fields_of_conductor(n, f)).collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    // Conductors are ascending and labels within a conductor are ranked.
    Ok(out)
}

/// `[G:H] − #orbits` for `⟨g⟩` acting on `G/H` with `G = ℤ/n`, `H = 1`.
pub fn discriminant_exponent(n: u64, g: u64) -> Result<u64> {
    if n < 2 {
        return Err(Error::Domain(format!("group order {n} too small")));
    }
    let g = g % n;
    let mut seen = vec![false; n as usize];
    let mut orbits = 0;
    for start in 0..n {
        if seen[start as usize] {
            continue;
        }
        orbits += 1;
        let mut x = start;
        while !seen[x as usize] {
            seen[x as usize] = true;
            x = (x + g) % n;
        }
    }
    if orbits != 1 {
        return Err(Error::Domain(format!("{g} does not generate Z/{n}")));
    }
    Ok(n - orbits)
}

/// Least-squares fit of `log count` against `log X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub degree: u64,
    pub grid: Vec<f64>,
    pub counts: Vec<u64>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    /// Set when a count is zero or all counts coincide.
    pub degenerate: bool,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, residuals)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let res = xs.iter().zip(ys).map(|(x, y)| y - (a + b * x)).collect();
    (b, a, res)
}

/// Count fields at each grid point and fit the growth exponent.
pub fn count_slope(n: u64, grid: &[f64]) -> Result<SlopeRecord> {
    check_degree(n)?;
    if grid.len() < 4 {
        return Err(Error::Domain(format!(
            "need at least 4 grid points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("grid points must be positive".into()));
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    if hi / lo < 1e3 * (1.0 - 1e-12) {
        return Err(Error::Domain("grid must span at least 3 decades".into()));
    }
    let fields = enumerate_cyclic(n, hi)?;
    let counts: Vec<u64> = grid
        .iter()
        .map(|&x| fields.iter().filter(|k| k.discriminant as f64 <= x).count() as u64)
        .collect();
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&x, &c)| (x.ln(), (c as f64).ln()))
        .collect();
    let degenerate = pts.len() < grid.len() || counts.windows(2).all(|w| w[0] == w[1]);
    let (slope, intercept, residuals) = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        least_squares(&xs, &ys)
    } else {
        (0.0, 0.0, vec![0.0; pts.len()])
    };
    Ok(SlopeRecord {
        degree: n,
        grid: grid.to_vec(),
        counts,
        slope,
        intercept,
        residuals,
        degenerate,
    })
}

/// `label,degree,conductor,discriminant,character_exponents`.
pub fn write_fields_csv<W: std::io::Write>(w: W, fields: &[CyclicField]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["label", "degree", "conductor", "discriminant", "character_exponents"])?;
    for k in fields {
        let exps = k
            .character()
            .exponents()
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(",");
        wr.write_record([
            k.label.clone(),
            k.degree.to_string(),
            k.conductor.to_string(),
            k.discriminant.to_string(),
            format!("[{exps}]"),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{pow_mod, sieve_primes};
    use crate::characters::character_group;

    /// Every character mod `f`, filtered by order and primitivity, counted
    /// in classes of size `n − 1`.
    fn brute_force_count(n: u64, f: u64) -> usize {
        let k = character_group(f)
            .unwrap()
            .into_iter()
            .filter(|c| c.order() == n && c.is_primitive())
            .count();
        assert_eq!(k % (n as usize - 1), 0);
        k / (n as usize - 1)
    }

    #[test]
    fn cubic_examples() {
        let fs = enumerate_cyclic(3, 1e4).unwrap();
        let conds: Vec<u64> = fs.iter().map(|k| k.conductor).collect();
        assert_eq!(
            conds,
            vec![7, 9, 13, 19, 31, 37, 43, 61, 63, 63, 67, 73, 79, 91, 91, 97]
        );
        assert!(enumerate_cyclic(3, 48.0).unwrap().is_empty());
        assert_eq!(enumerate_cyclic(3, 49.0).unwrap().len(), 1);
        assert_eq!(fs[8].label, "3.63.1");
        assert_eq!(fs[9].label, "3.63.2");
        for k in &fs {
            assert!(k.discriminant as f64 <= 1e4);
            assert!(k.ramified_primes().iter().all(|&p| p % 3 == 1 || p == 3));
            assert_eq!(k.characters.len(), 2);
        }
        assert!(matches!(enumerate_cyclic(4, 1e4), Err(Error::Domain(_))));
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for n in [3u64, 5, 7] {
            let x = match n {
                3 => 400f64.powi(2),
                5 => 150f64.powi(4),
                _ => 100f64.powi(6),
            };
            let fs = enumerate_cyclic(n, x).unwrap();
            let f_max = conductor_bound(n, x);
            for f in 2..=f_max {
                let mine = fs.iter().filter(|k| k.conductor == f).count();
                assert_eq!(mine, brute_force_count(n, f), "n = {n}, f = {f}");
            }
        }
    }

    #[test]
    fn classes_partition_primitive_characters() {
        for f in [7u64, 63, 91, 819, 1729, 7 * 13 * 19 * 31] {
            let g = CharacterGroup::new(f).unwrap();
            let prims = g
                .characters_of_order(3)
                .into_iter()
                .filter(|c| c.is_primitive())
                .count();
            let classes = conjugacy_classes(&g, 3);
            assert_eq!(classes.iter().map(|c| c.len()).sum::<usize>(), prims);
            let t = crate::arith::factorize(f).factors.len() as u32;
            if f % 9 != 0 {
                assert_eq!(classes.len(), 2usize.pow(t - 1));
            }
        }
    }

    #[test]
    fn frobenius_examples() {
        let k = enumerate_cyclic(3, 49.0).unwrap().remove(0);
        assert_eq!(frobenius_class(&k, 13), Frobenius::Class(0));
        assert_eq!(frobenius_class(&k, 7), Frobenius::Ramified);
        assert!(matches!(frobenius_class(&k, 2), Frobenius::Class(c) if c != 0));
        // Cube residues mod 7 are ±1.
        for &p in sieve_primes(2000).unwrap().iter().filter(|&&p| p != 7) {
            let cube = (1..7).any(|a| pow_mod(a, 3, 7) == p % 7);
            assert_eq!(frobenius_class(&k, p) == Frobenius::Class(0), cube, "p = {p}");
        }
    }

    #[test]
    fn frobenius_equidistribution_smoke() {
        let k = enumerate_cyclic(3, 49.0).unwrap().remove(0);
        let mut counts = [0usize; 3];
        let mut total = 0;
        for &p in &sieve_primes(100_000).unwrap() {
            if let Frobenius::Class(c) = frobenius_class(&k, p) {
                counts[c as usize] += 1;
                total += 1;
            }
        }
        for c in counts {
            let share = c as f64 / total as f64;
            assert!((0.30..=0.366).contains(&share), "{counts:?}");
        }
    }

    #[test]
    fn discriminant_exponents() {
        assert_eq!(discriminant_exponent(3, 1).unwrap(), 2);
        assert_eq!(discriminant_exponent(5, 2).unwrap(), 4);
        assert!(discriminant_exponent(5, 0).is_err());
        assert!(discriminant_exponent(6, 2).is_err());
        for k in enumerate_cyclic(3, 1e6)
            .unwrap()
            .iter()
            .filter(|k| k.conductor % 3 != 0)
        {
            let e = discriminant_exponent(3, 1).unwrap() as u32;
            let prod: u64 = k.ramified_primes().iter().map(|p| p.pow(e)).product();
            assert_eq!(prod, k.discriminant);
        }
    }

    #[test]
    fn slopes() {
        let r = count_slope(3, &[1e4, 1e5, 1e6, 1e7, 1e8]).unwrap();
        assert_eq!(r.counts[0], 16);
        assert!((0.45..=0.55).contains(&r.slope), "{r:?}");
        let r = count_slope(5, &[1e5, 1e6, 1e7, 1e8]).unwrap();
        assert!((0.20..=0.30).contains(&r.slope), "{r:?}");
        let r = count_slope(7, &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.slope, 0.0);
        assert!(count_slope(3, &[1e4, 1e5, 1e6]).is_err());
        assert!(count_slope(3, &[1e4, 2e4, 3e4, 4e4]).is_err());
    }

    #[test]
    fn csv_output() {
        let fs = enumerate_cyclic(3, 1e4).unwrap();
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, &fs[..2]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next(),
            Some("label,degree,conductor,discriminant,character_exponents")
        );
        assert!(lines.next().unwrap().starts_with("3.7.1,3,7,49,"));
    }
}
