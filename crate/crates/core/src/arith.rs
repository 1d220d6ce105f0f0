//! Integer backbone: prime sieves, factorization, Möbius and divisor
//! helpers, modular arithmetic and exact rationals.
//!
//! Everything here works on 64-bit integers. Products that could leave the
//! 64-bit range are checked and reported as [`Error::Overflow`].

use std::sync::OnceLock;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational used for the pseudo-character identities.
pub type Rational = Ratio<i128>;

/// Largest sieve limit accepted by [`sieve_primes`].
pub const SIEVE_LIMIT_MAX: u64 = 1 << 31;

const SEGMENT: usize = 1 << 18;

/// Primes `≤ limit`, ascending. Segmented sieve of Eratosthenes over odd
/// numbers.
pub fn sieve_primes(limit: u64) -> Result<Vec<u64>> {
    if !(2..=SIEVE_LIMIT_MAX).contains(&limit) {
        return Err(Error::Range(format!(
            "sieve limit {limit} outside [2, {SIEVE_LIMIT_MAX}]"
        )));
    }
    let root = isqrt(limit);
    let base = simple_sieve(root.max(2));
    let mut out = Vec::with_capacity(estimate_pi(limit));
    out.push(2);

    let mut seg = vec![true; SEGMENT];
    // Segment k covers odd numbers low, low+2, ..., low + 2*(SEGMENT-1).
    let mut low = 3u64;
    while low <= limit {
        let high = (low + 2 * SEGMENT as u64 - 2).min(limit | 1);
        let len = ((high - low) / 2 + 1) as usize;
        seg[..len].iter_mut().for_each(|b| *b = true);
        for &p in base.iter().skip(1) {
            let p2 = p * p;
            if p2 > high {
                break;
            }
            let mut start = if p2 >= low {
                p2
            } else {
                let r = low.div_ceil(p) * p;
                if r % 2 == 0 {
                    r + p
                } else {
                    r
                }
            };
            while start <= high {
                seg[((start - low) / 2) as usize] = false;
                start += 2 * p;
            }
        }
        for (i, &flag) in seg[..len].iter().enumerate() {
            let v = low + 2 * i as u64;
            if flag && v <= limit {
                out.push(v);
            }
        }
        low = high + 2;
    }
    Ok(out)
}

fn simple_sieve(limit: u64) -> Vec<u64> {
    let n = limit as usize;
    let mut is_p = vec![true; n + 1];
    is_p[0] = false;
    if n >= 1 {
        is_p[1] = false;
    }
    let mut i = 2;
    while i * i <= n {
        if is_p[i] {
            let mut j = i * i;
            while j <= n {
                is_p[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    is_p.iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u64))
        .collect()
}

fn estimate_pi(x: u64) -> usize {
    if x < 17 {
        return 8;
    }
    let xf = x as f64;
    (1.26 * xf / xf.ln()) as usize
}

/// Shared table of primes up to 10⁶, built once.
pub fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| sieve_primes(1_000_000).expect("static limit in range"))
}

pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u64;
    while x.checked_mul(x).is_none_or(|v| v > n) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|v| v <= n) {
        x += 1;
    }
    x
}

/// Canonical factorization `n = ∏ pᵉ` with strictly increasing primes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factorization {
    pub n: u64,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    /// Rebuild `n` from the factor list; `None` on overflow.
    pub fn recompose(factors: &[(u64, u32)]) -> Option<u64> {
        factors
            .iter()
            .try_fold(1u64, |acc, &(p, e)| acc.checked_mul(p.checked_pow(e)?))
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    pub fn moebius(&self) -> i8 {
        if !self.is_squarefree() {
            0
        } else if self.factors.len().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn euler_phi(&self) -> u64 {
        self.factors.iter().map(|&(p, e)| (p - 1) * p.pow(e - 1)).product()
    }

    pub fn radical(&self) -> u64 {
        self.primes().product()
    }

    /// All positive divisors, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let len = divs.len();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs.sort_unstable();
        divs
    }

    /// Squarefree divisors, ascending.
    pub fn squarefree_divisors(&self) -> Vec<u64> {
        squarefree_divisors_of_primes(&self.primes().collect::<Vec<_>>())
    }
}

/// All products of subsets of `primes` (which must be distinct), ascending.
pub fn squarefree_divisors_of_primes(primes: &[u64]) -> Vec<u64> {
    let mut divs = vec![1u64];
    for &p in primes {
        let len = divs.len();
        for i in 0..len {
            divs.push(divs[i] * p);
        }
    }
    divs.sort_unstable();
    divs
}

/// Factor `1 ≤ n ≤ 2⁶³−1` by trial division over the shared prime table,
/// finishing with a deterministic primality test on the cofactor.
pub fn factorize(n: u64) -> Factorization {
    assert!(n >= 1, "factorize requires n >= 1");
    let mut m = n;
    let mut factors = Vec::new();
    for &p in small_primes() {
        if p * p > m {
            break;
        }
        if m.is_multiple_of(p) {
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            factors.push((p, e));
        }
    }
    if m > 1 {
        let last = *small_primes().last().unwrap();
        if m <= last * last || is_prime(m) {
            factors.push((m, 1));
        } else {
            // Cofactor is composite with all prime factors above 10⁶.
            let mut d = last + 2;
            while d * d <= m {
                if m.is_multiple_of(d) {
                    let mut e = 0;
                    while m.is_multiple_of(d) {
                        m /= d;
                        e += 1;
                    }
                    factors.push((d, e));
                    if m > 1 && is_prime(m) {
                        break;
                    }
                }
                d += 2;
            }
            if m > 1 {
                factors.push((m, 1));
            }
        }
    }
    Factorization { n, factors }
}

pub fn moebius(n: u64) -> i8 {
    assert!(n >= 1, "moebius requires n >= 1");
    factorize(n).moebius()
}

pub fn is_squarefree(n: u64) -> bool {
    factorize(n).is_squarefree()
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n).euler_phi()
}

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest primitive root modulo `p^k` for an odd prime `p`.
pub fn primitive_root_prime_power(p: u64, k: u32) -> u64 {
    debug_assert!(p % 2 == 1 && k >= 1);
    let phi_p = p - 1;
    let qs: Vec<u64> = factorize(phi_p).primes().collect();
    let g = (2..p)
        .find(|&g| qs.iter().all(|&q| pow_mod(g, phi_p / q, p) != 1))
        .unwrap_or(1); // p = 3 falls through to 2 above; only p=2 would reach here
    if k == 1 {
        return g;
    }
    // g is a primitive root mod p^k (k ≥ 2) iff g^(p-1) ≠ 1 mod p².
    let p2 = p * p;
    if pow_mod(g, p - 1, p2) != 1 {
        g
    } else {
        g + p
    }
}

/// Extended gcd inverse of `a` modulo `m`; `None` when not coprime.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (g, x, _) = egcd(a as i128 % m as i128, m as i128);
    (g == 1).then(|| x.rem_euclid(m as i128) as u64)
}

fn egcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = egcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// Product of the primes `< z`, checked against 64-bit overflow.
pub fn primorial_below(z: f64) -> Result<u64> {
    let mut acc = 1u64;
    for &p in small_primes() {
        if (p as f64) >= z {
            break;
        }
        acc = acc.checked_mul(p).ok_or(Error::Overflow("primorial"))?;
    }
    Ok(acc)
}

/// Smallest-prime-factor table for fast factorization of all `n ≤ limit`.
#[derive(Clone, Debug)]
pub struct SpfTable {
    spf: Vec<u32>,
}

impl SpfTable {
    pub fn new(limit: usize) -> Self {
        let mut spf = vec![0u32; limit + 1];
        let mut primes: Vec<u32> = Vec::new();
        for i in 2..=limit {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            for &p in &primes {
                let ip = i * p as usize;
                if p > spf[i] || ip > limit {
                    break;
                }
                spf[ip] = p;
            }
        }
        SpfTable { spf }
    }

    pub fn limit(&self) -> usize {
        self.spf.len() - 1
    }

    /// Distinct prime factors of `n` if `n` is squarefree.
    pub fn squarefree_primes(&self, mut n: usize) -> Option<Vec<u64>> {
        let mut out = Vec::new();
        while n > 1 {
            let p = self.spf[n] as usize;
            n /= p;
            if n.is_multiple_of(p) {
                return None;
            }
            out.push(p as u64);
        }
        Some(out)
    }

    pub fn factorize(&self, n: usize) -> Factorization {
        let mut m = n;
        let mut factors: Vec<(u64, u32)> = Vec::new();
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            factors.push((p as u64, e));
        }
        Factorization { n: n as u64, factors }
    }

    pub fn moebius(&self, n: usize) -> i8 {
        match self.squarefree_primes(n) {
            None => 0,
            Some(ps) if ps.len() % 2 == 0 => 1,
            Some(_) => -1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_division_is_prime(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn sieve_small_examples() {
        assert_eq!(sieve_primes(10).unwrap(), vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes(2).unwrap(), vec![2]);
        assert_eq!(sieve_primes(3).unwrap(), vec![2, 3]);
    }

    #[test]
    fn sieve_range_errors() {
        assert!(matches!(sieve_primes(1), Err(Error::Range(_))));
        assert!(matches!(sieve_primes(SIEVE_LIMIT_MAX + 1), Err(Error::Range(_))));
    }

    #[test]
    fn sieve_matches_trial_division_to_1e4() {
        let sieved = sieve_primes(10_000).unwrap();
        let oracle: Vec<u64> = (2..=10_000).filter(|&n| trial_division_is_prime(n)).collect();
        assert_eq!(sieved, oracle);
    }

    #[test]
    fn prime_count_to_1e6() {
        let primes = sieve_primes(1_000_000).unwrap();
        assert_eq!(primes.len(), 78_498);
        // Sample of the sieve output agrees with trial division.
        for &p in primes.iter().step_by(997) {
            assert!(trial_division_is_prime(p));
        }
        // Cross-count across a segment boundary region.
        let seg_edge = 3 + 2 * SEGMENT as u64 - 2;
        let lo = seg_edge - 200;
        let hi = seg_edge + 200;
        let count_sieve = primes.iter().filter(|&&p| p >= lo && p <= hi).count();
        let count_oracle = (lo..=hi).filter(|&n| trial_division_is_prime(n)).count();
        assert_eq!(count_sieve, count_oracle);
    }

    #[test]
    fn moebius_examples() {
        assert_eq!(moebius(1), 1);
        assert_eq!(moebius(12), 0);
        assert_eq!(moebius(30), -1);
    }

    #[test]
    fn moebius_sum_over_divisors_is_indicator() {
        let spf = SpfTable::new(100_000);
        for n in 1..=100_000usize {
            let s: i64 = spf
                .factorize(n)
                .divisors()
                .iter()
                .map(|&d| spf.moebius(d as usize) as i64)
                .sum();
            assert_eq!(s, (n == 1) as i64, "n = {n}");
        }
    }

    #[test]
    fn factorize_examples() {
        assert!(factorize(1).factors.is_empty());
        assert_eq!(factorize(63).factors, vec![(3, 2), (7, 1)]);
        // Large prime and product of two primes above the table.
        let p = 1_000_000_007u64;
        assert_eq!(factorize(p).factors, vec![(p, 1)]);
        let q = 1_000_003u64;
        assert_eq!(factorize(q * 1_000_033).factors, vec![(q, 1), (1_000_033, 1)]);
        assert_eq!(factorize((1u64 << 63) - 1).n, (1u64 << 63) - 1);
    }

    #[test]
    fn spf_agrees_with_trial_factorization() {
        let spf = SpfTable::new(5000);
        for n in 1..=5000usize {
            assert_eq!(spf.factorize(n).factors, factorize(n as u64).factors);
        }
    }

    #[test]
    fn primitive_roots() {
        assert_eq!(primitive_root_prime_power(5, 1), 2);
        assert_eq!(primitive_root_prime_power(7, 1), 3);
        assert_eq!(primitive_root_prime_power(3, 2), 2);
        // 10 is a primitive root mod 487 but not mod 487².
        let g = primitive_root_prime_power(487, 2);
        let m = 487u64 * 487;
        let order = (1..=m).find(|&k| pow_mod(g, k, m) == 1).unwrap();
        assert_eq!(order, 486 * 487);
    }

    #[test]
    fn primorial() {
        assert_eq!(primorial_below(4.0).unwrap(), 6);
        assert_eq!(primorial_below(1.0).unwrap(), 1);
        assert!(matches!(primorial_below(1000.0), Err(Error::Overflow(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn factorization_recomposes(n in 1u64..1_000_000_000) {
            let f = factorize(n);
            prop_assert_eq!(Factorization::recompose(&f.factors), Some(n));
            prop_assert!(f.factors.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(f.factors.iter().all(|&(p, e)| e >= 1 && is_prime(p)));
        }
    }
}
