//! Pseudo-characters `ψ_f`, `ψ_{f,r}` with their exact orthogonality
//! identities, Selberg weights `Δ(n)`, the mollifier `M_r(f,s)` and the
//! zero detector `z_r(f,s)` together with a numerical check of its Mellin
//! representation.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{One, Signed, Zero as _};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{factorize, gcd, primorial_below, squarefree_divisors_of_primes, Rational, SpfTable};
use crate::characters::DirichletCharacter;
use crate::error::{Error, Result};
use crate::lfunc::{hurwitz_zeta, ln_gamma, rankin_selberg_residue, FlatSharp};

/// Default sifting parameter for degree one, `z = 4n⁴n_k⁴` with `n = n_k = 1`.
pub const DEFAULT_Z: f64 = 4.0;
pub const DEFAULT_DELTA: f64 = 0.1;

/// The data `(f, δ, z, P, R_cap)` that fixes `R(f)`, `ψ_f`, `ψ_{f,r}`.
#[derive(Clone, Debug)]
pub struct PseudoCharacterContext {
    character: DirichletCharacter,
    delta: f64,
    z: f64,
    p: u64,
    r_cap: u64,
}

fn ratio(n: i128) -> Rational {
    Rational::from_integer(n)
}

impl PseudoCharacterContext {
    pub fn new(character: DirichletCharacter, delta: f64, z: f64, r_cap: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(Error::Range(format!("delta = {delta} outside (0, 1/4)")));
        }
        if !(z >= 1.0) {
            return Err(Error::Range(format!("z = {z} below 1")));
        }
        if r_cap == 0 {
            return Err(Error::Range("R_cap must be positive".into()));
        }
        let p = primorial_below(z)?;
        Ok(PseudoCharacterContext {
            character,
            delta,
            z,
            p,
            r_cap,
        })
    }

    /// Context with `δ = 0.1`, `z = 4`.
    pub fn with_defaults(character: DirichletCharacter, r_cap: u64) -> Result<Self> {
        Self::new(character, DEFAULT_DELTA, DEFAULT_Z, r_cap)
    }

    pub fn character(&self) -> &DirichletCharacter {
        &self.character
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// `P = ∏_{p<z} p`.
    pub fn primorial(&self) -> u64 {
        self.p
    }

    pub fn r_cap(&self) -> u64 {
        self.r_cap
    }

    fn lambda_abs(&self, n: u64) -> f64 {
        self.character.evaluate(n % self.character.modulus()).norm()
    }

    fn lambda(&self, n: u64) -> Complex64 {
        self.character.evaluate(n % self.character.modulus())
    }

    /// Membership in `R(f)` (no cap).
    pub fn is_admissible(&self, r: u64) -> bool {
        if r == 0 {
            return false;
        }
        let fac = factorize(r);
        fac.is_squarefree()
            && gcd(r, self.character.conductor()) == 1
            && gcd(r, self.p) == 1
            && fac.primes().all(|p| self.lambda_abs(p) > (p as f64).powf(-self.delta))
    }

    /// `R(f) ∩ [1, R_cap]`, ascending.
    pub fn admissible_r_set(&self) -> Vec<u64> {
        (1..=self.r_cap).filter(|&r| self.is_admissible(r)).collect()
    }

    /// `|λ_f(r)|²` as an exact rational; characters take root-of-unity
    /// values so this is 1 on units and 0 otherwise.
    fn lambda_abs_sq(&self, r: u64) -> Rational {
        if self.character.value_index(r % self.character.modulus()).is_some() {
            Rational::one()
        } else {
            Rational::zero()
        }
    }

    /// `ψ_f(r) = μ(r)·r·|λ_f(r)|⁻²`.
    pub fn psi_f(&self, r: u64) -> Result<Rational> {
        if r == 0 {
            return Err(Error::Domain("psi_f(0)".into()));
        }
        let l2 = self.lambda_abs_sq(r);
        if l2.is_zero() {
            return Err(Error::Domain(format!("lambda_f({r}) = 0")));
        }
        let mu = factorize(r).moebius() as i128;
        Ok(ratio(mu * r as i128) / l2)
    }

    /// `ψ_{f,r}(n) = μ(n)²·ψ_f((n,r))`.
    pub fn psi_fr(&self, r: u64, n: u64) -> Result<Rational> {
        if n == 0 {
            return Err(Error::Domain("psi_fr at n = 0".into()));
        }
        if !crate::arith::is_squarefree(n) {
            return Ok(Rational::zero());
        }
        self.psi_f(gcd(n, r))
    }

    /// `ρ_f(d) = ∏_{p|d} (1 + |λ_f(p)|²/p)⁻¹`.
    pub fn rho_f(&self, d: u64) -> Result<Rational> {
        if d == 0 {
            return Err(Error::Domain("rho_f(0)".into()));
        }
        let mut acc = Rational::one();
        for p in factorize(d).primes() {
            let l2 = self.lambda_abs_sq(p);
            acc /= Rational::one() + l2 / ratio(p as i128);
        }
        Ok(acc)
    }
}

fn prime_list(n: u64) -> Vec<u64> {
    factorize(n).primes().collect()
}

/// `h(d)` on the squarefree divisors of `rt`, by the closed product form.
pub fn h_coeffs(
    ctx_f: &PseudoCharacterContext,
    ctx_g: &PseudoCharacterContext,
    r: u64,
    t: u64,
) -> Result<BTreeMap<u64, Rational>> {
    if !ctx_f.is_admissible(r) {
        return Err(Error::Domain(format!("r = {r} not in R(f)")));
    }
    if !ctx_g.is_admissible(t) {
        return Err(Error::Domain(format!("t = {t} not in R(g)")));
    }
    let mut local: Vec<(u64, Rational)> = Vec::new();
    let mut primes: Vec<u64> = prime_list(r);
    for p in prime_list(t) {
        if !primes.contains(&p) {
            primes.push(p);
        }
    }
    primes.sort_unstable();
    for &p in &primes {
        let in_r = r.is_multiple_of(p);
        let in_t = t.is_multiple_of(p);
        let v = match (in_r, in_t) {
            (true, false) => ctx_f.psi_f(p)? - 1,
            (false, true) => ctx_g.psi_f(p)? - 1,
            _ => ctx_f.psi_f(p)? * ctx_g.psi_f(p)? - 1,
        };
        local.push((p, v));
    }
    let mut out = BTreeMap::new();
    for d in squarefree_divisors_of_primes(&primes) {
        let v = local
            .iter()
            .filter(|(p, _)| d % p == 0)
            .fold(Rational::one(), |acc, (_, v)| acc * v);
        out.insert(d, v);
    }
    Ok(out)
}

/// Right side of the `|h(d)|` bound: `∏_{p|r} 2|ψ_f(p)| · ∏_{p|t} 2|ψ_g(p)|`.
pub fn h_bound(ctx_f: &PseudoCharacterContext, ctx_g: &PseudoCharacterContext, r: u64, t: u64) -> Result<Rational> {
    let mut acc = Rational::one();
    for p in prime_list(r) {
        acc *= ratio(2) * ctx_f.psi_f(p)?.abs();
    }
    for p in prime_list(t) {
        acc *= ratio(2) * ctx_g.psi_f(p)?.abs();
    }
    Ok(acc)
}

/// Outcome of the exact orthogonality check for one `(r,t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub character: String,
    pub r: u64,
    pub t: u64,
    pub n_max: u64,
    /// Product identity held for every `n ≤ n_max`.
    pub product_identity: bool,
    pub first_counterexample: Option<u64>,
    /// `Σ_d h(d)|λ_f(d)|²ρ_f(d)/d`, as `num/den`.
    pub weighted_sum: String,
    /// `δ(r,t)|ψ_f(r)|`.
    pub expected_sum: String,
    pub sum_identity: bool,
    pub h_bound_holds: bool,
}

impl OrthogonalityReport {
    pub fn passed(&self) -> bool {
        self.product_identity && self.sum_identity && self.h_bound_holds
    }
}

/// Per-`n` data shared by every pair of a sweep: squarefreeness and, for
/// each `r`, the position of `gcd(n, r)` among the divisors of `r`.
struct GcdPatterns {
    squarefree: Vec<bool>,
    by_r: HashMap<u64, (Vec<u64>, Vec<u16>)>,
}

impl GcdPatterns {
    fn new(rs: &[u64], n_max: u64) -> Self {
        let spf = SpfTable::new(n_max.max(2) as usize);
        let squarefree = (0..=n_max).map(|n| n > 0 && spf.moebius(n as usize) != 0).collect();
        let by_r = rs
            .iter()
            .map(|&r| {
                let divs = factorize(r).divisors();
                let pos: HashMap<u64, u16> = divs.iter().enumerate().map(|(i, &d)| (d, i as u16)).collect();
                let idx = (0..=n_max).map(|n| pos[&gcd(n, r)]).collect();
                (r, (divs, idx))
            })
            .collect();
        GcdPatterns { squarefree, by_r }
    }
}

/// Checks `ψ_{f,r}(n)ψ_{g,t}(n) = μ(n)² Σ_{d|n} h(d)` for all `n ≤ n_max`
/// with `g = f̄`, and the weighted sum identity, in exact arithmetic.
pub fn orthogonality_check(ctx: &PseudoCharacterContext, r: u64, t: u64, n_max: u64) -> Result<OrthogonalityReport> {
    if !ctx.is_admissible(r) || !ctx.is_admissible(t) {
        return Err(Error::Domain(format!("(r, t) = ({r}, {t}) not in R(f)")));
    }
    let pats = GcdPatterns::new(&[r, t], n_max);
    orthogonality_check_with(ctx, r, t, n_max, &pats)
}

fn orthogonality_check_with(
    ctx: &PseudoCharacterContext,
    r: u64,
    t: u64,
    n_max: u64,
    pats: &GcdPatterns,
) -> Result<OrthogonalityReport> {
    let ctx_g = PseudoCharacterContext {
        character: ctx.character.conj(),
        ..ctx.clone()
    };
    let h = h_coeffs(ctx, &ctx_g, r, t)?;

    // For squarefree n both sides depend only on (gcd(n,r), gcd(n,t)), and
    // gcd(n, lcm(r,t)) is their lcm. Decide each pattern once, then walk n.
    // Non-squarefree n give 0 = 0.
    let (divs_r, idx_r) = &pats.by_r[&r];
    let (divs_t, idx_t) = &pats.by_r[&t];
    let mut ok = vec![false; divs_r.len() * divs_t.len()];
    for (i, &g1) in divs_r.iter().enumerate() {
        for (j, &g2) in divs_t.iter().enumerate() {
            let lhs = ctx.psi_f(g1)? * ctx_g.psi_f(g2)?;
            let g = g1 / gcd(g1, g2) * g2;
            let rhs = h
                .iter()
                .filter(|(d, _)| g.is_multiple_of(**d))
                .fold(Rational::zero(), |acc, (_, v)| acc + v);
            ok[i * divs_t.len() + j] = lhs == rhs;
        }
    }
    let first = (1..=n_max as usize)
        .find(|&n| pats.squarefree[n] && !ok[idx_r[n] as usize * divs_t.len() + idx_t[n] as usize])
        .map(|n| n as u64);

    let mut sum = Rational::zero();
    for (&d, v) in &h {
        sum += *v * ctx.lambda_abs_sq(d) * ctx.rho_f(d)? / ratio(d as i128);
    }
    let expected = if r == t { ctx.psi_f(r)?.abs() } else { Rational::zero() };
    let bound = h_bound(ctx, &ctx_g, r, t)?;
    Ok(OrthogonalityReport {
        character: ctx.character.label(),
        r,
        t,
        n_max,
        product_identity: first.is_none(),
        first_counterexample: first,
        weighted_sum: sum.to_string(),
        expected_sum: expected.to_string(),
        sum_identity: sum == expected,
        h_bound_holds: h.values().all(|v| v.abs() <= bound),
    })
}

/// All admissible pairs `(r,t)` with `r,t ≤ R_cap`, lexicographic.
pub fn identity_sweep(ctx: &PseudoCharacterContext, n_max: u64) -> Result<Vec<OrthogonalityReport>> {
    let rs = ctx.admissible_r_set();
    let pairs: Vec<(u64, u64)> = rs.iter().flat_map(|&r| rs.iter().map(move |&t| (r, t))).collect();
    let pats = GcdPatterns::new(&rs, n_max);
    pairs
        .par_iter()
        .map(|&(r, t)| orthogonality_check_with(ctx, r, t, n_max, &pats))
        .collect()
}

/// Writes `r,t,n_max,status,first_counterexample`.
pub fn write_sweep_csv<W: std::io::Write>(w: W, reports: &[OrthogonalityReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["r", "t", "n_max", "status", "first_counterexample"])?;
    for rep in reports {
        let status = if rep.passed() { "pass" } else { "fail" };
        wr.write_record([
            rep.r.to_string(),
            rep.t.to_string(),
            rep.n_max.to_string(),
            status.to_string(),
            rep.first_counterexample.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `Σ_{r≤R, r∈R(f)} 1/|ψ_f(r)|  ÷  (s(f)·log R)`.
pub fn inverse_psi_sum_ratio(ctx: &PseudoCharacterContext, big_r: u64) -> Result<f64> {
    if big_r < 2 {
        return Err(Error::Range("R must be at least 2".into()));
    }
    let mut sum = 0.0;
    for r in 1..=big_r {
        if ctx.is_admissible(r) {
            let v = ctx.psi_f(r)?.abs();
            sum += *v.denom() as f64 / *v.numer() as f64;
        }
    }
    let s_f = rankin_selberg_residue(&ctx.character).residue;
    Ok(sum / (s_f * (big_r as f64).ln()))
}

/// Selberg weights `λ_d = μ(d)m(d)` and the damping of the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelbergWeightScheme {
    pub w: f64,
    pub y: f64,
    pub x: f64,
    pub qt: f64,
}

impl SelbergWeightScheme {
    pub fn new(w: f64, y: f64, x: f64, qt: f64) -> Result<Self> {
        if !(w >= 1.0) {
            return Err(Error::Range(format!("w = {w} below 1")));
        }
        if !(y > w) {
            return Err(Error::Range(format!("y = {y} not above w = {w}")));
        }
        if !(x > y) {
            return Err(Error::Range(format!("x = {x} not above y = {y}")));
        }
        if !(qt > 1.0) {
            return Err(Error::Range(format!("qT = {qt} not above 1")));
        }
        Ok(SelbergWeightScheme { w, y, x, qt })
    }

    /// Scheme whose damping scale `X = x/(log qT)²` equals `big_x`.
    pub fn with_big_x(w: f64, y: f64, big_x: f64, qt: f64) -> Result<Self> {
        let l = qt.ln();
        Self::new(w, y, big_x * l * l, qt)
    }

    /// `m(d)`.
    pub fn m(&self, d: u64) -> f64 {
        let d = d as f64;
        if d <= self.w {
            1.0
        } else if d <= self.y {
            (self.y / d).ln() / (self.y / self.w).ln()
        } else {
            0.0
        }
    }

    pub fn lambda_d(&self, d: u64) -> f64 {
        crate::arith::moebius(d) as f64 * self.m(d)
    }

    /// `Δ(n) = Σ_{d|n} μ(d)m(d)`; exactly 0 for `1 < n ≤ w`.
    pub fn delta(&self, n: u64) -> f64 {
        if n == 1 {
            return 1.0;
        }
        if (n as f64) <= self.w {
            return 0.0;
        }
        let primes: Vec<u64> = factorize(n).primes().collect();
        self.delta_from_primes(&primes)
    }

    fn delta_from_primes(&self, primes: &[u64]) -> f64 {
        squarefree_divisors_of_primes(primes)
            .into_iter()
            .take_while(|&d| (d as f64) <= self.y)
            .map(|d| {
                let sign = if d == 1 {
                    1.0
                } else {
                    let k = primes.iter().filter(|&&p| d % p == 0).count();
                    if k % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                };
                sign * self.m(d)
            })
            .sum()
    }

    /// `X = x (log qT)⁻²`.
    pub fn big_x(&self) -> f64 {
        let l = self.qt.ln();
        self.x / (l * l)
    }

    /// `a_n = Δ(n) e^{−n(log qT)²/x}`.
    pub fn a_n(&self, n: u64) -> f64 {
        self.delta(n) * (-(n as f64) / self.big_x()).exp()
    }
}

/// `Δ(n)` for all `n ≤ limit` (index 0 unused).
pub fn delta_table(scheme: &SelbergWeightScheme, limit: usize) -> Vec<f64> {
    let spf = SpfTable::new(limit.max(2));
    let mut out = vec![0.0; limit + 1];
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        *slot = if n == 1 {
            1.0
        } else if (n as f64) <= scheme.w {
            0.0
        } else {
            let primes: Vec<u64> = spf.factorize(n).primes().collect();
            scheme.delta_from_primes(&primes)
        };
    }
    out
}

/// `Σ_{n≤x} Δ(n)² n^{1−2α}  ÷  [log(x/w)/log(y/w) · x^{2−2α}]`.
pub fn graham_ratio(scheme: &SelbergWeightScheme, alpha: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::Range(format!("alpha = {alpha} outside (1/2, 1)")));
    }
    let x = scheme.x;
    if x > 1e8 {
        return Err(Error::Range("x too large to materialize".into()));
    }
    let table = delta_table(scheme, x.floor() as usize);
    let sum: f64 = table
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &d)| d * d * (n as f64).powf(1.0 - 2.0 * alpha))
        .sum();
    let norm = (x / scheme.w).ln() / (scheme.y / scheme.w).ln() * x.powf(2.0 - 2.0 * alpha);
    Ok(sum / norm)
}

/// Precomputed mollifier terms for fixed `(f, r, scheme)`.
#[derive(Clone, Debug)]
pub struct Mollifier {
    r_primes: Vec<(f64, Complex64, f64)>,
    terms: Vec<MollifierTerm>,
}

#[derive(Clone, Debug)]
struct MollifierTerm {
    d: f64,
    coef: Complex64,
    /// `(log p, λ_f(p))` for `p | d`, `p ∤ r`.
    extra: Vec<(f64, Complex64)>,
    /// `ψ_f(p)` factors are dropped for `p | (r,d)`: flags per `r_primes`.
    r_div: Vec<bool>,
}

impl Mollifier {
    pub fn new(ctx: &PseudoCharacterContext, r: u64, scheme: &SelbergWeightScheme) -> Result<Self> {
        if !ctx.is_admissible(r) {
            return Err(Error::Domain(format!("r = {r} not in R(f)")));
        }
        let rp = prime_list(r);
        let mut r_primes = Vec::new();
        for &p in &rp {
            let psi = ctx.psi_f(p)?;
            let psi = *psi.numer() as f64 / *psi.denom() as f64;
            r_primes.push(((p as f64).ln(), ctx.lambda(p), psi));
        }
        let y = scheme.y.floor() as u64;
        let spf = SpfTable::new(y.max(2) as usize);
        let mut terms = Vec::new();
        for d in 1..=y {
            if gcd(d, ctx.p) != 1 {
                continue;
            }
            let Some(dp) = spf.squarefree_primes(d as usize) else {
                continue;
            };
            let lam_f = ctx.lambda(d);
            if lam_f.norm() == 0.0 {
                continue;
            }
            let lambda_d = if dp.len() % 2 == 0 { 1.0 } else { -1.0 } * scheme.m(d);
            if lambda_d == 0.0 {
                continue;
            }
            let psi = ctx.psi_fr(r, d)?;
            let psi = *psi.numer() as f64 / *psi.denom() as f64;
            terms.push(MollifierTerm {
                d: d as f64,
                coef: lam_f * (lambda_d * psi),
                extra: dp
                    .iter()
                    .filter(|&&p| !r.is_multiple_of(p))
                    .map(|&p| ((p as f64).ln(), ctx.lambda(p)))
                    .collect(),
                r_div: rp.iter().map(|&p| d % p == 0).collect(),
            });
        }
        Ok(Mollifier { r_primes, terms })
    }

    /// `M_r(f,s)` for any `s` with `Re(s) > 0`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        // Factors over p | r: (1 + ψ_f(p)λ(p)p^{−s}) unless p | d, always
        // divided by (1 + λ(p)p^{−s}).
        let r_fac: Vec<(Complex64, Complex64)> = self
            .r_primes
            .iter()
            .map(|&(lp, lam, psi)| {
                let ps = (-s * lp).exp();
                (1.0 + lam * ps * psi, 1.0 + lam * ps)
            })
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut v = t.coef * (-s * t.d.ln()).exp();
            for (k, &(with_psi, base)) in r_fac.iter().enumerate() {
                if !t.r_div[k] {
                    v *= with_psi;
                }
                v /= base;
            }
            for &(lp, lam) in &t.extra {
                v /= 1.0 + lam * (-s * lp).exp();
            }
            total += v;
        }
        total
    }

    /// `Σ |coef| d^{−σ} ∏ (1+|ψ|p^{−σ}) ∏ (1−p^{−σ})⁻¹`, a bound for
    /// `sup_t |M_r(σ+it)|`.
    pub fn sup_bound(&self, sigma: f64) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let mut v = t.coef.norm() * t.d.powf(-sigma);
            for (k, &(lp, _, psi)) in self.r_primes.iter().enumerate() {
                let ps = (-sigma * lp).exp();
                if !t.r_div[k] {
                    v *= 1.0 + psi.abs() * ps;
                }
                v /= 1.0 - ps;
            }
            for &(lp, _) in &t.extra {
                v /= 1.0 - (-sigma * lp).exp();
            }
            total += v;
        }
        total
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }
}

/// `M_r(f,s)` with its envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierReport {
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// `M_r(f,s)` for `1/2 ≤ Re(s) ≤ 1`, alongside
/// `r^{1+2δ−σ+ε} y^{1−σ+ε}`.
pub fn mollifier_value(
    ctx: &PseudoCharacterContext,
    r: u64,
    s: Complex64,
    scheme: &SelbergWeightScheme,
    eps: f64,
) -> Result<MollifierReport> {
    if !(0.5..=1.0).contains(&s.re) {
        return Err(Error::Domain(format!("Re(s) = {} outside [1/2, 1]", s.re)));
    }
    if ctx.z < DEFAULT_Z {
        return Err(Error::Domain(format!("z = {} below 4", ctx.z)));
    }
    let v = Mollifier::new(ctx, r, scheme)?.eval(s);
    let sigma = s.re;
    let envelope = (r as f64).powf(1.0 + 2.0 * ctx.delta - sigma + eps) * scheme.y.powf(1.0 - sigma + eps);
    Ok(MollifierReport {
        re: v.re,
        im: v.im,
        abs: v.norm(),
        envelope,
        ratio: v.norm() / envelope,
    })
}

/// `|ψ_{f,r}(d)λ_f(d)| ≤ r^δ (r,d) d^{ε/2}` for every squarefree
/// `d ≤ y` coprime to `P`. Returns the first failing `d`, if any.
pub fn psilam_check(
    ctx: &PseudoCharacterContext,
    r: u64,
    scheme: &SelbergWeightScheme,
    eps: f64,
) -> Result<Option<u64>> {
    for d in 1..=scheme.y.floor() as u64 {
        if gcd(d, ctx.p) != 1 || !crate::arith::is_squarefree(d) {
            continue;
        }
        let lam = ctx.lambda_abs(d);
        let psi = if lam == 0.0 {
            0.0
        } else {
            let v = ctx.psi_fr(r, d)?.abs();
            *v.numer() as f64 / *v.denom() as f64
        };
        let bound = (r as f64).powf(ctx.delta) * gcd(r, d) as f64 * (d as f64).powf(eps / 2.0);
        if psi * lam > bound * (1.0 + 1e-12) {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// Coefficients `Δ(n)ψ_{f,r}(n)λ_f(n)` on squarefree `n` coprime to `P`,
/// for `n ≤ limit` (index 0 unused).
fn detector_coeffs(
    ctx: &PseudoCharacterContext,
    r: u64,
    scheme: &SelbergWeightScheme,
    limit: usize,
) -> Result<Vec<Complex64>> {
    let spf = SpfTable::new(limit.max(2));
    let mut out = vec![Complex64::new(0.0, 0.0); limit + 1];
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        let n64 = n as u64;
        if gcd(n64, ctx.p) != 1 {
            continue;
        }
        let Some(primes) = spf.squarefree_primes(n) else {
            continue;
        };
        let lam = ctx.lambda(n64);
        if lam.norm() == 0.0 {
            continue;
        }
        let delta = if n == 1 {
            1.0
        } else if (n as f64) <= scheme.w {
            0.0
        } else {
            scheme.delta_from_primes(&primes)
        };
        if delta == 0.0 {
            continue;
        }
        let psi = ctx.psi_f(gcd(n64, r))?;
        let psi = *psi.numer() as f64 / *psi.denom() as f64;
        *slot = lam * (delta * psi);
    }
    Ok(out)
}

/// `z_r(f,s)`: the squarefree sum over `w ≤ n ≤ x`, `(n,P) = 1`, with
/// `a_n = Δ(n)e^{−n(log qT)²/x}`.
pub fn detector_value(
    ctx: &PseudoCharacterContext,
    r: u64,
    rho: Complex64,
    scheme: &SelbergWeightScheme,
) -> Result<Complex64> {
    if !ctx.is_admissible(r) {
        return Err(Error::Domain(format!("r = {r} not in R(f)")));
    }
    if scheme.x < scheme.w {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let xmax = scheme.x.floor() as usize;
    let coeffs = detector_coeffs(ctx, r, scheme, xmax)?;
    let big_x = scheme.big_x();
    let start = scheme.w.ceil().max(1.0) as usize;
    Ok((start..=xmax)
        .map(|n| {
            let nf = n as f64;
            coeffs[n] * (-nf / big_x).exp() * (-rho * nf.ln()).exp()
        })
        .sum())
}

/// Numerical settings for [`detector_identity_check_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorIdentityOptions {
    pub contour_height: f64,
    /// Trapezoid step on `Re(s) = 3`.
    pub step: f64,
    /// Largest certified tail bound accepted.
    pub tolerance: f64,
}

impl Default for DetectorIdentityOptions {
    fn default() -> Self {
        DetectorIdentityOptions {
            contour_height: 40.0,
            step: 0.1,
            tolerance: 1e-8,
        }
    }
}

/// Both sides of the Mellin identity for the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorIdentityReport {
    pub r: u64,
    pub rho_re: f64,
    pub rho_im: f64,
    pub big_x: f64,
    /// `e^{−1/X}`.
    pub unit_term: f64,
    /// `Σ_{1<n≤x}` part of the left side.
    pub middle_re: f64,
    pub middle_im: f64,
    /// `Σ_{n>x}` part of the left side.
    pub tail_re: f64,
    pub tail_im: f64,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub residual: f64,
    pub lhs_terms: u64,
    pub lhs_truncation_bound: f64,
    pub contour_height: f64,
    pub contour_tail_bound: f64,
}

pub fn detector_identity_check(
    ctx: &PseudoCharacterContext,
    r: u64,
    rho: Complex64,
    scheme: &SelbergWeightScheme,
    contour_height: f64,
) -> Result<DetectorIdentityReport> {
    let opts = DetectorIdentityOptions {
        contour_height,
        ..Default::default()
    };
    detector_identity_check_with(ctx, r, rho, scheme, &opts)
}

/// Left side: the full squarefree sum `Σ_{n≥1} Δ(n)ψ_{f,r}(n)e^{−n/X}λ_f(n)n^{−ρ}`
/// (truncated with an explicit bound). Right side:
/// `(1/2π) ∫_{−H}^{H} L♭(3+it+ρ) M_r(3+it+ρ) Γ(3+it) X^{3+it} dt` by the
/// trapezoid rule, plus a certified bound for `|t| > H`.
pub fn detector_identity_check_with(
    ctx: &PseudoCharacterContext,
    r: u64,
    rho: Complex64,
    scheme: &SelbergWeightScheme,
    opts: &DetectorIdentityOptions,
) -> Result<DetectorIdentityReport> {
    if !(rho.re >= 0.5) {
        return Err(Error::Domain(format!("Re(rho) = {} below 1/2", rho.re)));
    }
    if !ctx.is_admissible(r) {
        return Err(Error::Domain(format!("r = {r} not in R(f)")));
    }
    let h_max = opts.contour_height;
    if !(h_max > 5.0) || !(opts.step > 0.0) {
        return Err(Error::Range("contour height must exceed 5 and step be positive".into()));
    }
    let big_x = scheme.big_x();

    // Left side. |coef(n)| ≤ τ(n)·r ≤ 2√n·r and n^{−Re ρ} ≤ n^{−1/2}, so
    // the tail beyond N is at most 2r e^{−N/X}/(1 − e^{−1/X}).
    let rf = r as f64;
    let tail_of = |n: f64| 2.0 * rf * (-n / big_x).exp() / (1.0 - (-1.0 / big_x).exp());
    let mut n_lhs = (big_x * (2.0 * rf * (big_x + 1.0) / 1e-14).ln())
        .ceil()
        .max(scheme.x.ceil() + 1.0);
    while tail_of(n_lhs) > 1e-13 {
        n_lhs *= 1.2;
    }
    let n_lhs = n_lhs as usize;
    if n_lhs > 50_000_000 {
        return Err(Error::Precision("left side needs too many terms".into()));
    }
    let coeffs = detector_coeffs(ctx, r, scheme, n_lhs)?;
    let xmax = scheme.x.floor() as usize;
    let mut middle = Complex64::new(0.0, 0.0);
    let mut tail = Complex64::new(0.0, 0.0);
    for (n, &cn) in coeffs.iter().enumerate().skip(2) {
        if cn.norm() == 0.0 {
            continue;
        }
        let nf = n as f64;
        let v = cn * (-nf / big_x).exp() * (-rho * nf.ln()).exp();
        if n <= xmax {
            middle += v;
        } else {
            tail += v;
        }
    }
    let unit = (-1.0 / big_x).exp();
    let lhs = unit + middle + tail;

    // Right side.
    let fs = FlatSharp::new(ctx.character(), ctx.z.max(2.0))?.with_target(1e-15);
    let moll = Mollifier::new(ctx, r, scheme)?;
    let steps = (h_max / opts.step).ceil() as i64;
    let h = h_max / steps as f64;
    let ln_x = big_x.ln();
    let integrand = |t: f64| -> Result<Complex64> {
        let s = Complex64::new(3.0, t);
        let w = s + rho;
        let g = (ln_gamma(s)? + s * ln_x).exp();
        Ok(fs.flat(w)? * moll.eval(w) * g)
    };
    let values: Vec<Result<Complex64>> = (-steps..=steps)
        .into_par_iter()
        .map(|k| integrand(k as f64 * h))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        let wgt = if i == 0 || i == (2 * steps) as usize { 0.5 } else { 1.0 };
        acc += v * wgt;
    }
    let rhs = acc * h / (2.0 * PI);

    // Tail |t| > H: |Γ(3+it)|² = (4+t²)(1+t²)πt/sinh(πt) ≤ 2.2π t⁵ e^{−πt}
    // for t ≥ 10, and ∫_H^∞ t^{5/2}e^{−πt/2} ≤ H^{5/2}e^{−πH/2}/(π/2 − 5/(2H)).
    let sigma = 3.0 + rho.re;
    let sup_flat = hurwitz_zeta(Complex64::new(sigma, 0.0), 1.0, 1e-14)?.re;
    let sup_moll = moll.sup_bound(sigma);
    let gamma_tail = (2.2 * PI).sqrt() * h_max.powf(2.5) * (-PI * h_max / 2.0).exp() / (PI / 2.0 - 2.5 / h_max);
    let tail_bound = 2.0 / (2.0 * PI) * sup_flat * sup_moll * big_x.powi(3) * gamma_tail;
    if tail_bound > opts.tolerance {
        return Err(Error::Precision(format!(
            "contour tail bound {tail_bound:e} exceeds tolerance {:e}",
            opts.tolerance
        )));
    }

    Ok(DetectorIdentityReport {
        r,
        rho_re: rho.re,
        rho_im: rho.im,
        big_x,
        unit_term: unit,
        middle_re: middle.re,
        middle_im: middle.im,
        tail_re: tail.re,
        tail_im: tail.im,
        lhs_re: lhs.re,
        lhs_im: lhs.im,
        rhs_re: rhs.re,
        rhs_im: rhs.im,
        residual: (lhs - rhs).norm(),
        lhs_terms: n_lhs as u64,
        lhs_truncation_bound: tail_of(n_lhs as f64),
        contour_height: h_max,
        contour_tail_bound: tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::primitive_characters;

    fn ctx5(r_cap: u64) -> PseudoCharacterContext {
        let chi = primitive_characters(5).unwrap().remove(0);
        PseudoCharacterContext::with_defaults(chi, r_cap).unwrap()
    }

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn admissible_examples() {
        let ctx = ctx5(15);
        assert_eq!(ctx.primorial(), 6);
        assert_eq!(ctx.admissible_r_set(), vec![1, 7, 11, 13]);
        assert_eq!(ctx5(1).admissible_r_set(), vec![1]);
        for r in ctx5(500).admissible_r_set() {
            assert!(crate::arith::is_squarefree(r) && gcd(r, 30) == 1);
        }
        // Brute-force filter.
        let brute: Vec<u64> = (1..=500u64)
            .filter(|&r| crate::arith::moebius(r) != 0 && gcd(r, 30) == 1)
            .collect();
        assert_eq!(ctx5(500).admissible_r_set(), brute);
        let chi = primitive_characters(5).unwrap().remove(0);
        assert!(PseudoCharacterContext::new(chi.clone(), 0.25, 4.0, 10).is_err());
        assert!(PseudoCharacterContext::new(chi, 0.0, 4.0, 10).is_err());
    }

    #[test]
    fn psi_examples() {
        let ctx = ctx5(100);
        assert_eq!(ctx.psi_f(1).unwrap(), q(1, 1));
        assert_eq!(ctx.psi_f(7).unwrap(), q(-7, 1));
        assert_eq!(ctx.psi_f(77).unwrap(), q(77, 1));
        assert!(matches!(ctx.psi_f(10), Err(Error::Domain(_))));
        assert_eq!(ctx.psi_fr(7, 4).unwrap(), q(0, 1));
        assert_eq!(ctx.psi_fr(7, 14).unwrap(), q(-7, 1));
        assert_eq!(ctx.psi_fr(7, 3).unwrap(), q(1, 1));
    }

    #[test]
    fn h_examples() {
        let ctx = ctx5(100);
        let g = PseudoCharacterContext {
            character: ctx.character.conj(),
            ..ctx.clone()
        };
        let h = h_coeffs(&ctx, &g, 1, 1).unwrap();
        assert_eq!(h.into_iter().collect::<Vec<_>>(), vec![(1, q(1, 1))]);
        let h = h_coeffs(&ctx, &g, 7, 7).unwrap();
        assert_eq!(h.into_iter().collect::<Vec<_>>(), vec![(1, q(1, 1)), (7, q(48, 1))]);
        let h = h_coeffs(&ctx, &g, 7, 11).unwrap();
        assert_eq!(
            h.into_iter().collect::<Vec<_>>(),
            vec![(1, q(1, 1)), (7, q(-8, 1)), (11, q(-12, 1)), (77, q(96, 1))]
        );
        assert!(h_coeffs(&ctx, &g, 6, 1).is_err());
    }

    #[test]
    fn h_matches_generating_product() {
        // Expand the Euler product of the generating series independently.
        let ctx = ctx5(200);
        let g = PseudoCharacterContext {
            character: ctx.character.conj(),
            ..ctx.clone()
        };
        for (r, t) in [(7u64, 77u64), (143, 13), (1, 1001), (7 * 11 * 13, 7 * 17)] {
            let h = h_coeffs(&ctx, &g, r, t).unwrap();
            let mut series: BTreeMap<u64, Rational> = BTreeMap::from([(1, Rational::one())]);
            let mut primes: Vec<u64> = prime_list(r * t);
            primes.dedup();
            for p in primes {
                let c = if r % p == 0 && t % p == 0 {
                    ctx.psi_f(p).unwrap() * g.psi_f(p).unwrap() - 1
                } else if r % p == 0 {
                    ctx.psi_f(p).unwrap() - 1
                } else {
                    g.psi_f(p).unwrap() - 1
                };
                let old: Vec<(u64, Rational)> = series.iter().map(|(k, v)| (*k, *v)).collect();
                for (k, v) in old {
                    series.insert(k * p, v * c);
                }
            }
            assert_eq!(h, series);
        }
    }

    #[test]
    fn rho_examples() {
        let ctx = ctx5(100);
        assert_eq!(ctx.rho_f(1).unwrap(), q(1, 1));
        assert_eq!(ctx.rho_f(7).unwrap(), q(7, 8));
        assert_eq!(ctx.rho_f(77).unwrap(), q(77, 96));
    }

    #[test]
    fn orthogonality_examples() {
        let ctx = ctx5(100);
        let rep = orthogonality_check(&ctx, 7, 7, 1000).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.weighted_sum, "7");
        let rep = orthogonality_check(&ctx, 7, 11, 1000).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.weighted_sum, "0");
        let rep = orthogonality_check(&ctx, 1, 1, 1000).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.weighted_sum, "1");
    }

    #[test]
    fn sweep_small_and_csv() {
        for modulus in [5u64, 7] {
            for chi in primitive_characters(modulus).unwrap() {
                let ctx = PseudoCharacterContext::with_defaults(chi, 60).unwrap();
                let reps = identity_sweep(&ctx, 2000).unwrap();
                assert!(reps.iter().all(|r| r.passed()));
            }
        }
        let reps = identity_sweep(&ctx5(15), 100).unwrap();
        assert_eq!(reps.len(), 16);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &reps).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,t,n_max,status,first_counterexample\n1,1,100,pass,\n"));
    }

    #[test]
    fn product_identity_brute_force() {
        // Direct Σ_{d|n} h(d) by trial division, independent of the memo.
        let ctx = ctx5(100);
        let g = PseudoCharacterContext {
            character: ctx.character.conj(),
            ..ctx.clone()
        };
        for (r, t) in [(7u64, 11u64), (77, 7), (13, 13)] {
            let h = h_coeffs(&ctx, &g, r, t).unwrap();
            for n in 1..=3000u64 {
                let lhs = ctx.psi_fr(r, n).unwrap() * g.psi_fr(t, n).unwrap();
                let mu2 = crate::arith::moebius(n).abs() as i128;
                let rhs: Rational = (1..=n)
                    .filter(|d| n % d == 0)
                    .map(|d| h.get(&d).copied().unwrap_or_else(Rational::zero))
                    .fold(Rational::zero(), |a, b| a + b)
                    * mu2;
                assert_eq!(lhs, rhs, "r={r} t={t} n={n}");
            }
        }
    }

    #[test]
    fn selberg_examples() {
        let s = SelbergWeightScheme::new(2.0, 4.0, 100.0, 50.0).unwrap();
        assert_eq!(s.delta(1), 1.0);
        assert_eq!(s.delta(2), 0.0);
        assert!((s.delta(3) - (1.0 - (4.0f64 / 3.0).ln() / 2f64.ln())).abs() < 1e-15);
        assert!((s.delta(3) - 0.5850).abs() < 1e-4);
        let s = SelbergWeightScheme::new(10.0, 100.0, 1000.0, 50.0).unwrap();
        for n in 2..=10 {
            assert_eq!(s.delta(n), 0.0);
        }
        let mut prev = 1.0;
        for d in 1..200 {
            let m = s.m(d);
            assert!((0.0..=1.0).contains(&m) && m <= prev);
            prev = m;
        }
        assert_eq!(s.m(101), 0.0);
        let table = delta_table(&s, 500);
        for n in 1..=500u64 {
            assert!((table[n as usize] - s.delta(n)).abs() < 1e-14);
        }
        assert!(SelbergWeightScheme::new(2.0, 2.0, 3.0, 5.0).is_err());
    }

    #[test]
    fn delta_matches_divisor_sum() {
        let s = SelbergWeightScheme::new(3.0, 30.0, 1000.0, 50.0).unwrap();
        for n in 1..=600u64 {
            let direct: f64 = (1..=n).filter(|d| n % d == 0).map(|d| s.lambda_d(d)).sum();
            assert!((direct - s.delta(n)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn mollifier_trivial_and_envelope() {
        let ctx = ctx5(100);
        let s = SelbergWeightScheme::new(1.0, 1.5, 10.0, 50.0).unwrap();
        let m = mollifier_value(&ctx, 1, Complex64::new(0.7, 3.0), &s, 0.1).unwrap();
        assert!((m.re - 1.0).abs() < 1e-15 && m.im.abs() < 1e-15);
        assert!(mollifier_value(&ctx, 1, Complex64::new(1.5, 0.0), &s, 0.1).is_err());

        let s = SelbergWeightScheme::new(2.0, 50.0, 500.0, 50.0).unwrap();
        let mut worst: f64 = 0.0;
        for r in [1u64, 7, 11, 13, 77] {
            for sigma in [0.5, 0.625, 0.75, 0.875, 1.0] {
                let m = mollifier_value(&ctx, r, Complex64::new(sigma, 2.0), &s, 0.1).unwrap();
                worst = worst.max(m.ratio);
            }
            assert_eq!(psilam_check(&ctx, r, &s, 0.1).unwrap(), None);
        }
        assert!(worst < 10.0, "worst ratio {worst}");
    }

    #[test]
    fn mollifier_generating_identity() {
        // Σ♭ Δ(n)ψ_{f,r}(n)λ(n)n^{−s} = L♭(s) M_r(s) at Re s = 3.
        let ctx = ctx5(100);
        let scheme = SelbergWeightScheme::new(2.0, 20.0, 100.0, 50.0).unwrap();
        let s = Complex64::new(3.2, 1.7);
        for r in [1u64, 7, 77] {
            let coeffs = detector_coeffs(&ctx, r, &scheme, 200_000).unwrap();
            let direct: Complex64 = coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, c)| c * (-s * (n as f64).ln()).exp())
                .sum();
            let fs = FlatSharp::new(ctx.character(), 4.0).unwrap();
            let prod = fs.flat(s).unwrap() * Mollifier::new(&ctx, r, &scheme).unwrap().eval(s);
            assert!((direct - prod).norm() < 1e-9, "r={r} {direct} {prod}");
        }
    }

    #[test]
    fn detector_examples() {
        let ctx = ctx5(100);
        let s = SelbergWeightScheme::new(20.0, 30.0, 40.0, 50.0).unwrap();
        let mut s2 = s;
        s2.x = 10.0;
        assert_eq!(
            detector_value(&ctx, 1, Complex64::new(0.7, 1.0), &s2).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let coeffs = detector_coeffs(&ctx, 7, &s, 1000).unwrap();
        for (n, c) in coeffs.iter().enumerate().skip(1) {
            if c.norm() != 0.0 {
                assert!(crate::arith::is_squarefree(n as u64) && gcd(n as u64, 30) == 1);
            }
        }
    }

    #[test]
    fn detector_identity_examples() {
        let ctx = ctx5(100);
        let qt: f64 = 50.0;
        let scheme = SelbergWeightScheme::with_big_x(2.0, 10.0, 50.0, qt).unwrap();
        let rep = detector_identity_check(&ctx, 7, Complex64::new(0.8, 2.0), &scheme, 40.0).unwrap();
        assert!(rep.residual < 1e-6, "{rep:?}");
        let scheme = SelbergWeightScheme::with_big_x(1.0, 2.0, 5.0, qt).unwrap();
        let rep = detector_identity_check(&ctx, 1, Complex64::new(0.6, 0.0), &scheme, 40.0).unwrap();
        assert!(rep.residual < 1e-8, "{rep:?}");
    }

    #[test]
    fn detector_tail_shrinks_as_cutoff_grows() {
        // Fixed X; x = X(log qT)² grows with qT and the n > x part decays.
        let ctx = ctx5(100);
        let mut prev = f64::INFINITY;
        for qt in [8.0, 20.0, 60.0] {
            let scheme = SelbergWeightScheme::with_big_x(2.0, 5.0, 5.0, qt).unwrap();
            let rep = detector_identity_check(&ctx, 7, Complex64::new(0.7, 1.0), &scheme, 40.0).unwrap();
            let tail = Complex64::new(rep.tail_re, rep.tail_im).norm();
            assert!(tail < prev);
            prev = tail;
        }
    }

    #[test]
    fn inverse_psi_ratio_and_graham() {
        for modulus in [5u64, 7, 11] {
            let chi = primitive_characters(modulus).unwrap().remove(0);
            let ctx = PseudoCharacterContext::with_defaults(chi, 1).unwrap();
            let v = inverse_psi_sum_ratio(&ctx, 1000).unwrap();
            assert!(v > 0.0 && v < 2.0);
        }
        let s = SelbergWeightScheme::new(2.0, 20.0, 1000.0, 50.0).unwrap();
        let g = graham_ratio(&s, 0.75).unwrap();
        assert!(g > 0.0 && g.is_finite());
    }
}
