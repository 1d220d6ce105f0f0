//! Dirichlet L-functions: Hurwitz-zeta evaluation, the `L♭`/`L♯`
//! factorization, Rankin–Selberg residues, convexity ratios and zero
//! counting/location by the argument principle.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::arith::{euler_phi, factorize, gcd, lcm, sieve_primes};
use crate::characters::DirichletCharacter;
use crate::error::{Error, Result};

/// Default absolute target for L-value evaluation.
pub const DEFAULT_TARGET: f64 = 1e-12;
/// `L♭`/`L♯` are only evaluated for `Re(s)` strictly above this.
pub const FLAT_SIGMA_MIN: f64 = 0.55;
/// Largest `z` accepted by the `L♭`/`L♯` evaluators.
pub const FLAT_Z_MAX: f64 = 1e7;

const EM_ORDER: usize = 8;
// B_2 .. B_16
const BERNOULLI_EVEN: [f64; EM_ORDER] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];
const EM_MAX_TERMS: f64 = 1e6;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Number of directly summed terms so the Euler–Maclaurin remainder of
/// order 8 is at most `target / 2`. Uses
/// `|R| ≤ 4 |(s)₁₆| (2π)⁻¹⁶ (N+a)^{−σ−15} / (σ+15)` with `a ≥ 0`.
fn em_cutoff(s: Complex64, target: f64) -> Result<usize> {
    let sigma = s.re;
    let mut poch_log = 0.0;
    for j in 0..(2 * EM_ORDER) {
        poch_log += (s + j as f64).norm().ln();
    }
    let log_const = 4f64.ln() + poch_log - 16.0 * TAU.ln() - (sigma + 15.0).ln();
    let log_n = (log_const - (target / 2.0).ln()) / (sigma + 15.0);
    // Keep N past |s| so the asymptotic terms are small individually.
    let n = log_n.exp().max(s.norm() / 4.0).max(8.0).ceil();
    if !n.is_finite() || n > EM_MAX_TERMS {
        return Err(Error::Precision(format!(
            "Euler-Maclaurin needs more than {EM_MAX_TERMS} terms at s = {s}"
        )));
    }
    Ok(n as usize)
}

/// `(e^u − 1)/u`, stable near 0.
fn exprel(u: Complex64) -> Complex64 {
    if u.norm() < 0.5 {
        let mut term = c(1.0, 0.0);
        let mut sum = term;
        for k in 2..30 {
            term = term * u / k as f64;
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (u.exp() - 1.0) / u
    }
}

/// `ζ(s,a) − 1/(s−1)` with `N` direct terms; entire in `s`.
fn hurwitz_regular(s: Complex64, a: f64, n: usize) -> Complex64 {
    let mut sum = c(0.0, 0.0);
    for k in 0..n {
        sum += (-s * (k as f64 + a).ln()).exp();
    }
    let x = n as f64 + a;
    let lx = x.ln();
    let x_ms = (-s * lx).exp();
    sum += -lx * exprel((1.0 - s) * lx) + x_ms * 0.5;
    // Σ_j B_{2j}/(2j)! (s)_{2j−1} x^{−s−2j+1}
    let mut poch = s;
    let mut fact = 2.0;
    let mut xpow = x_ms / x;
    for j in 1..=EM_ORDER {
        sum += poch * xpow * (BERNOULLI_EVEN[j - 1] / fact);
        let m = (2 * j) as f64;
        poch = poch * (s + (m - 1.0)) * (s + m);
        fact *= (m + 1.0) * (m + 2.0);
        xpow /= x * x;
    }
    sum
}

fn check_strip(s: Complex64) -> Result<()> {
    if !(s.re > -2.0) || !(s.im.abs() <= 1e3) {
        return Err(Error::Domain(format!("s = {s} outside Re(s) > -2, |Im(s)| <= 1000")));
    }
    Ok(())
}

/// Hurwitz zeta `ζ(s,a)` for `a ∈ (0,1]`, to absolute error `target`.
pub fn hurwitz_zeta(s: Complex64, a: f64, target: f64) -> Result<Complex64> {
    if s == c(1.0, 0.0) {
        return Err(Error::Pole);
    }
    check_strip(s)?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("a = {a} outside (0, 1]")));
    }
    if !(target >= 1e-14) {
        return Err(Error::Range(format!("target {target} below 1e-14")));
    }
    let n = em_cutoff(s, target)?;
    Ok(hurwitz_regular(s, a, n) + 1.0 / (s - 1.0))
}

/// Dirichlet series with periodic coefficients, `Σ c(n) n^{−s}`.
///
/// `coeffs[a]` is `c(n)` for `n ≡ a (mod Q)`, `Q = coeffs.len()`. The
/// series has a simple pole at `s = 1` with residue `Σ c / Q`.
#[derive(Clone, Debug)]
pub struct PeriodicSeries {
    coeffs: Vec<Complex64>,
    pole_mass: Complex64,
    coeff_mass: f64,
}

impl PeriodicSeries {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("empty coefficient period".into()));
        }
        let pole_mass: Complex64 = coeffs.iter().sum();
        let coeff_mass = coeffs.iter().map(|z| z.norm()).sum::<f64>().max(1.0);
        Ok(PeriodicSeries {
            coeffs,
            pole_mass,
            coeff_mass,
        })
    }

    pub fn period(&self) -> u64 {
        self.coeffs.len() as u64
    }

    pub fn has_pole(&self) -> bool {
        self.pole_mass.norm() > 1e-9
    }

    /// Residue at `s = 1`.
    pub fn residue(&self) -> Complex64 {
        if self.has_pole() {
            self.pole_mass / self.period() as f64
        } else {
            c(0.0, 0.0)
        }
    }

    /// Returns `(Q^{−s} Σ c(a) [ζ(s,a/Q) − 1/(s−1)], Q^{−s} Σ c)`.
    fn parts(&self, s: Complex64, target: f64) -> Result<(Complex64, Complex64)> {
        check_strip(s)?;
        let q = self.period() as f64;
        let q_ms = (-s * q.ln()).exp();
        let per_term = target * q.powf(s.re) / self.coeff_mass;
        let n = em_cutoff(s, per_term)?;
        let mut acc = c(0.0, 0.0);
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == c(0.0, 0.0) {
                continue;
            }
            let a = if a == 0 { q } else { a as f64 };
            acc += ca * hurwitz_regular(s, a / q, n);
        }
        let pole = if self.has_pole() {
            q_ms * self.pole_mass
        } else {
            c(0.0, 0.0)
        };
        Ok((q_ms * acc, pole))
    }

    pub fn value_with_target(&self, s: Complex64, target: f64) -> Result<Complex64> {
        if self.has_pole() && s == c(1.0, 0.0) {
            return Err(Error::Pole);
        }
        let (reg, pole) = self.parts(s, target)?;
        Ok(if self.has_pole() { reg + pole / (s - 1.0) } else { reg })
    }

    pub fn value(&self, s: Complex64) -> Result<Complex64> {
        self.value_with_target(s, DEFAULT_TARGET)
    }

    /// `(s−1)·F(s)` when `F` has a pole, otherwise `F(s)`; entire.
    pub fn entire_value(&self, s: Complex64) -> Result<Complex64> {
        let (reg, pole) = self.parts(s, DEFAULT_TARGET)?;
        Ok(if self.has_pole() { (s - 1.0) * reg + pole } else { reg })
    }
}

/// `L(s,χ)` with the coefficient table precomputed.
#[derive(Clone, Debug)]
pub struct LFunction {
    series: PeriodicSeries,
    label: String,
    conductor: u64,
}

impl LFunction {
    pub fn new(chi: &DirichletCharacter) -> Self {
        LFunction {
            series: PeriodicSeries::new(chi.value_table()).expect("modulus >= 1"),
            label: chi.label(),
            conductor: chi.conductor(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn modulus(&self) -> u64 {
        self.series.period()
    }

    pub fn conductor(&self) -> u64 {
        self.conductor
    }

    pub fn has_pole(&self) -> bool {
        self.series.has_pole()
    }

    pub fn value(&self, s: Complex64) -> Result<Complex64> {
        self.series.value(s)
    }

    pub fn value_with_target(&self, s: Complex64, target: f64) -> Result<Complex64> {
        self.series.value_with_target(s, target)
    }

    /// `(s−1)L(s,χ)` for principal χ, `L(s,χ)` otherwise.
    pub fn entire_value(&self, s: Complex64) -> Result<Complex64> {
        self.series.entire_value(s)
    }
}

/// `L(s,χ) = Σ χ(n) n^{−s}` (imprimitive χ allowed; this is `L^{ur}`).
pub fn l_value(chi: &DirichletCharacter, s: Complex64) -> Result<Complex64> {
    LFunction::new(chi).value(s)
}

/// Alias making the unramified normalization explicit at call sites.
pub fn l_unramified(chi: &DirichletCharacter, s: Complex64) -> Result<Complex64> {
    l_value(chi, s)
}

/// Evaluator for `L♯(f,s)` and `L♭(f,s) = L^{ur}/L♯` at fixed `(χ, z)`.
///
/// `L♯(s) = ∏_{p<z} (1−χ(p)p^{−s})^{−1} · ∏_{p≥z} (1−χ(p)²p^{−2s})^{−1}` and
/// the second product is `L(2s,χ²) ∏_{p<z} (1−χ(p)²p^{−2s})`.
#[derive(Clone, Debug)]
pub struct FlatSharp {
    l: LFunction,
    l_sq: LFunction,
    small: Vec<(f64, Complex64)>,
    z: f64,
    target: f64,
}

impl FlatSharp {
    pub fn new(chi: &DirichletCharacter, z: f64) -> Result<Self> {
        if !(z >= 2.0) || z > FLAT_Z_MAX {
            return Err(Error::Range(format!("z = {z} outside [2, {FLAT_Z_MAX}]")));
        }
        let limit = (z.ceil() as u64).saturating_sub(1);
        let primes = if limit >= 2 { sieve_primes(limit)? } else { Vec::new() };
        let small = primes
            .into_iter()
            .filter(|&p| (p as f64) < z)
            .map(|p| (p as f64, chi.evaluate(p % chi.modulus())))
            .collect();
        Ok(FlatSharp {
            l: LFunction::new(chi),
            l_sq: LFunction::new(&chi.pow(2)),
            small,
            z,
            target: DEFAULT_TARGET,
        })
    }

    /// Same evaluator with a different absolute target for the underlying
    /// L-values.
    pub fn with_target(mut self, target: f64) -> Self {
        self.target = target;
        self
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    fn check(&self, s: Complex64) -> Result<()> {
        if !(s.re > FLAT_SIGMA_MIN) {
            return Err(Error::Domain(format!("Re(s) = {} not above {FLAT_SIGMA_MIN}", s.re)));
        }
        Ok(())
    }

    pub fn sharp(&self, s: Complex64) -> Result<Complex64> {
        self.check(s)?;
        let mut v = self.l_sq.value_with_target(2.0 * s, self.target)?;
        for &(p, chi_p) in &self.small {
            let ps = (-s * p.ln()).exp();
            v *= (1.0 - chi_p * chi_p * ps * ps) / (1.0 - chi_p * ps);
        }
        Ok(v)
    }

    pub fn flat(&self, s: Complex64) -> Result<Complex64> {
        self.check(s)?;
        Ok(self.l.value_with_target(s, self.target)? / self.sharp(s)?)
    }

    pub fn unramified(&self, s: Complex64) -> Result<Complex64> {
        self.l.value_with_target(s, self.target)
    }
}

pub fn l_sharp_value(chi: &DirichletCharacter, s: Complex64, z: f64) -> Result<Complex64> {
    FlatSharp::new(chi, z)?.sharp(s)
}

/// `L♭(f,s)`, the Dirichlet series over squarefree `n` coprime to
/// `P = ∏_{p<z} p`.
pub fn l_flat_value(chi: &DirichletCharacter, s: Complex64, z: f64) -> Result<Complex64> {
    FlatSharp::new(chi, z)?.flat(s)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
// B_{2k} / (2k(2k−1)), k = 1..8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// `log Γ(z)`; the analytic branch on `Re z > 0`, some branch elsewhere.
pub fn ln_gamma(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.floor() {
        return Err(Error::Pole);
    }
    let mut shift = c(0.0, 0.0);
    let mut w = z;
    while w.re < 10.0 {
        shift += w.ln();
        w += 1.0;
    }
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut series = c(0.0, 0.0);
    let mut p = inv;
    for coef in STIRLING {
        series += p * coef;
        p *= inv2;
    }
    Ok((w - 0.5) * w.ln() - w + LN_SQRT_2PI + series - shift)
}

pub fn gamma(z: Complex64) -> Result<Complex64> {
    Ok(ln_gamma(z)?.exp())
}

/// Completed `Λ(s,χ) = (q/π)^{(s+κ)/2} Γ((s+κ)/2) L(s,χ)` for primitive χ,
/// κ = 0 for even and 1 for odd χ.
pub fn completed_l(chi: &DirichletCharacter, s: Complex64) -> Result<Complex64> {
    if !chi.is_primitive() {
        return Err(Error::Domain("completed L needs a primitive character".into()));
    }
    let kappa = if chi.is_odd() { 1.0 } else { 0.0 };
    let h = (s + kappa) / 2.0;
    let q = chi.modulus() as f64;
    let log_factor = h * (q / PI).ln() + ln_gamma(h)?;
    Ok(log_factor.exp() * l_value(chi, s)?)
}

/// Residue of `L^{ur}(f×f̄,s)` at `s = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankinSelbergData {
    pub numerator: u64,
    pub denominator: u64,
    pub residue: f64,
}

impl RankinSelbergData {
    pub fn ratio(&self) -> Ratio<i128> {
        Ratio::new(self.numerator as i128, self.denominator as i128)
    }
}

/// `s(f) = φ(q)/q`. For a Dirichlet character mod `q`,
/// `L^{ur}(χ×χ̄,s) = ζ(s) ∏_{p|q}(1−p^{−s})`; this holds for every χ mod `q`,
/// primitive or not.
pub fn rankin_selberg_residue(chi: &DirichletCharacter) -> RankinSelbergData {
    let q = chi.modulus();
    let phi = euler_phi(q);
    let g = gcd(phi, q);
    RankinSelbergData {
        numerator: phi / g,
        denominator: q / g,
        residue: phi as f64 / q as f64,
    }
}

fn product_series(f: &DirichletCharacter, g: &DirichletCharacter, conj_g: bool) -> PeriodicSeries {
    let m = lcm(f.modulus(), g.modulus());
    let coeffs = (0..m)
        .map(|n| {
            let gv = g.evaluate(n % g.modulus());
            f.evaluate(n % f.modulus()) * if conj_g { gv.conj() } else { gv }
        })
        .collect();
    PeriodicSeries::new(coeffs).expect("nonempty period")
}

/// `Σ χ(n) conj(g(n)) n^{−s}`.
pub fn rankin_selberg_series(f: &DirichletCharacter, g: &DirichletCharacter, s: Complex64) -> Result<Complex64> {
    product_series(f, g, true).value(s)
}

/// `(s−1)·L^{ur}(χ×χ̄, s)` at `s = 1 + h`.
pub fn rankin_selberg_numeric_residue(chi: &DirichletCharacter, h: f64) -> Result<f64> {
    let v = product_series(chi, chi, true).entire_value(c(1.0 + h, 0.0))?;
    Ok(v.re)
}

/// Ratio of `|L|` to its convexity envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub abs_value: f64,
    pub conductor_bound: f64,
    pub exponent: f64,
    pub envelope: f64,
    pub ratio: f64,
}

fn convexity(abs_value: f64, cond: f64, degree: f64, s: Complex64, eps: f64) -> ConvexityReport {
    let exponent = (1.0 - s.re) / 2.0 + eps;
    let envelope = (cond * (s.im.abs() + 2.0).powf(degree)).powf(exponent);
    ConvexityReport {
        abs_value,
        conductor_bound: cond,
        exponent,
        envelope,
        ratio: abs_value / envelope,
    }
}

fn check_convexity_args(s: Complex64, eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s.re) {
        return Err(Error::Domain(format!("Re(s) = {} outside [0, 1]", s.re)));
    }
    if !(eps > 0.0) {
        return Err(Error::Range("epsilon must be positive".into()));
    }
    Ok(())
}

/// `|L(s,χ)| / (Cond·(|t|+2))^{(1−σ)/2+ε}` (degree one).
pub fn convexity_ratio(chi: &DirichletCharacter, s: Complex64, eps: f64) -> Result<ConvexityReport> {
    check_convexity_args(s, eps)?;
    let v = l_value(chi, s)?.norm();
    Ok(convexity(v, chi.conductor() as f64, 1.0, s, eps))
}

/// Pair version: `|L(f×g,s)|` against the `f×g` envelope with
/// `Cond(f×g) ≤ Cond(f)·Cond(g)`.
pub fn convexity_ratio_pair(
    f: &DirichletCharacter,
    g: &DirichletCharacter,
    s: Complex64,
    eps: f64,
) -> Result<ConvexityReport> {
    check_convexity_args(s, eps)?;
    let v = product_series(f, g, false).value(s)?.norm();
    let cond = (f.conductor() * g.conductor()) as f64;
    Ok(convexity(v, cond, 1.0, s, eps))
}

/// `M(α,T) = {α ≤ Re z ≤ 1, |Im z| ≤ T}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub alpha: f64,
    pub t: f64,
}

impl Rectangle {
    pub fn new(alpha: f64, t: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&alpha) {
            return Err(Error::Range(format!("alpha = {alpha} outside [1/2, 1)")));
        }
        if !(t >= 0.0) || t > 1e3 {
            return Err(Error::Range(format!("T = {t} outside [0, 1000]")));
        }
        Ok(Rectangle { alpha, t })
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.re >= self.alpha && s.re <= 1.0 && s.im.abs() <= self.t
    }
}

/// A validated zero `β + iγ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub beta: f64,
    pub gamma: f64,
    pub character_id: String,
    pub refinement_radius: f64,
}

impl Zero {
    pub fn rho(&self) -> Complex64 {
        c(self.beta, self.gamma)
    }
}

/// Tunables for the argument-principle routines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSearchOptions {
    /// Zeros closer than this to a horizontal edge trigger a nudge.
    pub clearance: f64,
    /// Step used to push `T` upward.
    pub nudge_step: f64,
    pub max_nudges: u32,
    /// When `α` is this close to 1/2 the left edge moves to `α − guard`.
    pub critical_guard: f64,
    /// Target enclosure radius for located zeros.
    pub enclosure: f64,
}

impl Default for ZeroSearchOptions {
    fn default() -> Self {
        ZeroSearchOptions {
            clearance: 1e-4,
            nudge_step: 1e-3,
            max_nudges: 1,
            critical_guard: 1e-3,
            enclosure: 1e-8,
        }
    }
}

/// Count together with how the contour was actually placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub count: u64,
    pub left_edge: f64,
    pub t_used: f64,
    pub nudged: bool,
}

#[derive(Debug)]
enum Trouble {
    /// Near-zero detected close to edge `k` (0 bottom, 1 right, 2 top, 3 left).
    Near(usize),
    Fail(Error),
}

impl From<Error> for Trouble {
    fn from(e: Error) -> Self {
        Trouble::Fail(e)
    }
}

const PIECE: f64 = 0.25;

/// Single-zero boxes below this size are refined by Newton first.
const NEWTON_BOX: f64 = 0.6;

/// Strip height for the first pass of the locator.
const STRIP: f64 = 0.5;

fn arg_ratio(b: Complex64, a: Complex64) -> f64 {
    (b / a).arg()
}

/// Total change of `arg f` along the segment `za → zb`.
fn track_segment<F>(f: &F, za: Complex64, zb: Complex64, clearance: f64) -> std::result::Result<f64, bool>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    // Err(true) means a zero sits (nearly) on the segment; Err(false) is
    // reserved for evaluation failures, surfaced by the caller.
    let eval = |z: Complex64| f(z).map_err(|_| false);
    let scale = za.norm().max(zb.norm()).max(1.0);
    let min_len = 1e-13 * scale;
    let pieces = ((zb - za).norm() / PIECE).ceil().max(1.0) as usize;
    let mut total = 0.0;
    let mut prev_z = za;
    let mut prev_f = eval(za)?;
    if prev_f.norm() == 0.0 {
        return Err(true);
    }
    for i in 1..=pieces {
        let next_z = za + (zb - za) * (i as f64 / pieces as f64);
        let next_f = eval(next_z)?;
        let mut stack = vec![(prev_z, prev_f, next_z, next_f)];
        while let Some((a, fa, b, fb)) = stack.pop() {
            if fb.norm() == 0.0 || fa.norm() == 0.0 {
                return Err(true);
            }
            let m = (a + b) * 0.5;
            let fm = eval(m)?;
            if fm.norm() == 0.0 {
                return Err(true);
            }
            let d1 = arg_ratio(fm, fa);
            let d2 = arg_ratio(fb, fm);
            let lin = (fm - (fa + fb) * 0.5).norm();
            let small = fa.norm().min(fb.norm()).min(fm.norm());
            let ok = d1.abs() < PI / 4.0 && d2.abs() < PI / 4.0 && lin < 0.25 * small;
            if ok {
                if clearance > 0.0 {
                    let slope = (fb - fa).norm() / (b - a).norm();
                    if slope > 0.0 && small / slope < clearance {
                        return Err(true);
                    }
                }
                total += d1 + d2;
                continue;
            }
            if (b - a).norm() < min_len {
                return Err(true);
            }
            // Process the left half first: push right, then left.
            stack.push((m, fm, b, fb));
            stack.push((a, fa, m, fm));
        }
        prev_z = next_z;
        prev_f = next_f;
    }
    Ok(total)
}

/// Winding number of `f` around the box `[x0,x1]×[y0,y1]`.
fn box_winding<F>(f: &F, x0: f64, x1: f64, y0: f64, y1: f64, clearance: f64) -> std::result::Result<u64, Trouble>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let corners = [c(x0, y0), c(x1, y0), c(x1, y1), c(x0, y1)];
    let mut total = 0.0;
    for k in 0..4 {
        match track_segment(f, corners[k], corners[(k + 1) % 4], clearance) {
            Ok(d) => total += d,
            Err(true) => return Err(Trouble::Near(k)),
            Err(false) => {
                // Re-evaluate to surface the underlying error.
                for z in corners {
                    f(z)?;
                }
                return Err(Trouble::Fail(Error::Precision(
                    "evaluation failed along contour".into(),
                )));
            }
        }
    }
    let w = total / TAU;
    let r = w.round();
    if (w - r).abs() > 0.05 || r < 0.0 {
        return Err(Trouble::Fail(Error::Precision(format!("non-integral winding {w:.4}"))));
    }
    Ok(r as u64)
}

fn left_edge(alpha: f64, opts: &ZeroSearchOptions) -> f64 {
    if (alpha - 0.5).abs() < opts.critical_guard {
        alpha - opts.critical_guard
    } else {
        alpha
    }
}

/// Count of zeros of the entire function `f` in the closed rectangle, with
/// `T` nudged upward if a zero sits near a horizontal edge.
pub fn count_zeros_with<F>(f: &F, rect: Rectangle, opts: &ZeroSearchOptions) -> Result<ZeroCount>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let x0 = left_edge(rect.alpha, opts);
    if rect.t == 0.0 {
        return Ok(ZeroCount {
            count: 0,
            left_edge: x0,
            t_used: 0.0,
            nudged: false,
        });
    }
    for k in 0..=opts.max_nudges {
        let t = rect.t + k as f64 * opts.nudge_step;
        match box_winding(f, x0, 1.0, -t, t, opts.clearance) {
            Ok(count) => {
                return Ok(ZeroCount {
                    count,
                    left_edge: x0,
                    t_used: t,
                    nudged: k > 0,
                })
            }
            Err(Trouble::Near(edge)) if edge == 0 || edge == 2 => continue,
            Err(Trouble::Near(edge)) => {
                return Err(Error::Contour(format!(
                    "zero within clearance of the {} edge",
                    if edge == 1 { "right" } else { "left" }
                )))
            }
            Err(Trouble::Fail(e)) => return Err(e),
        }
    }
    Err(Error::Contour(format!(
        "zero near |Im s| = T persists after nudging T by {}",
        opts.max_nudges as f64 * opts.nudge_step
    )))
}

/// `N(f;α,T)` counted with multiplicity.
pub fn count_zeros_rectangle(chi: &DirichletCharacter, rect: Rectangle) -> Result<u64> {
    Ok(count_zeros_detailed(&LFunction::new(chi), rect, &ZeroSearchOptions::default())?.count)
}

pub fn count_zeros_detailed(lf: &LFunction, rect: Rectangle, opts: &ZeroSearchOptions) -> Result<ZeroCount> {
    count_zeros_with(&|s| lf.entire_value(s), rect, opts)
}

fn newton<F>(f: &F, z0: Complex64) -> Option<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let h = 1e-6;
    let mut z = z0;
    for _ in 0..60 {
        let fz = f(z).ok()?;
        let d = (f(z + h).ok()? - f(z - h).ok()?) / (2.0 * h);
        if d.norm() == 0.0 {
            return None;
        }
        let step = fz / d;
        z -= step;
        if !z.re.is_finite() || step.norm() > 1.0 {
            return None;
        }
        if step.norm() < 1e-14 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    Some(z)
}

struct Locator<'a, F> {
    f: &'a F,
    label: String,
    half_width: f64,
    out: Vec<Zero>,
}

impl<F> Locator<'_, F>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    fn clear(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        (0.02 * (x1 - x0).min(y1 - y0)).min(1e-4)
    }

    fn push(&mut self, z: Complex64, radius: f64, k: u64) {
        for _ in 0..k {
            self.out.push(Zero {
                beta: z.re,
                gamma: z.im,
                character_id: self.label.clone(),
                refinement_radius: radius,
            });
        }
    }

    fn try_newton(&mut self, x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
        let centre = c((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let Some(z) = newton(self.f, centre) else {
            return false;
        };
        let pad = (x1 - x0).max(y1 - y0);
        if z.re < x0 - pad || z.re > x1 + pad || z.im < y0 - pad || z.im > y1 + pad {
            return false;
        }
        let h = self.half_width;
        match box_winding(self.f, z.re - h, z.re + h, z.im - h, z.im + h, 0.0) {
            Ok(1) if z.re >= x0 && z.re <= x1 && z.im >= y0 && z.im <= y1 => {
                self.push(z, h * std::f64::consts::SQRT_2, 1);
                true
            }
            _ => false,
        }
    }

    /// Cut `[x0,1]×[−t,t]` into strips of height about [`STRIP`], count
    /// each, and refine the nonempty ones.
    fn strips(&mut self, x0: f64, t: f64, total: u64) -> Result<()> {
        let n = (2.0 * t / STRIP).ceil().max(1.0) as usize;
        let step = 2.0 * t / n as f64;
        let mut lo = -t;
        let mut found = 0;
        for i in 1..=n {
            let nominal = -t + step * i as f64;
            let mut placed = false;
            for shift in [0.0, 0.1, -0.1, 0.2, -0.2, 0.3, -0.3] {
                let hi = if i == n { t } else { nominal + shift * step };
                let cl = self.clear(x0, 1.0, lo, hi);
                match box_winding(self.f, x0, 1.0, lo, hi, cl) {
                    Ok(k) => {
                        self.split(x0, 1.0, lo, hi, k)?;
                        found += k;
                        lo = hi;
                        placed = true;
                        break;
                    }
                    Err(Trouble::Near(2)) if i < n => continue,
                    Err(Trouble::Near(_)) => {
                        return Err(Error::Contour(format!("zero near the strip edge at Im s = {lo}")))
                    }
                    Err(Trouble::Fail(e)) => return Err(e),
                }
            }
            if !placed {
                return Err(Error::Contour("no clean strip boundary found".into()));
            }
        }
        if found != total {
            return Err(Error::Precision(format!(
                "strip counts sum to {found}, rectangle has {total}"
            )));
        }
        Ok(())
    }

    fn split(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, k: u64) -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        let w = x1 - x0;
        let h = y1 - y0;
        let diag = (w * w + h * h).sqrt();
        if diag <= 2.0 * self.half_width * std::f64::consts::SQRT_2 {
            self.push(c((x0 + x1) / 2.0, (y0 + y1) / 2.0), diag / 2.0, k);
            return Ok(());
        }
        if k == 1 && w.max(h) < NEWTON_BOX && self.try_newton(x0, x1, y0, y1) {
            return Ok(());
        }
        let vertical = w > h;
        let (lo, hi) = if vertical { (x0, x1) } else { (y0, y1) };
        for shift in [0.0, 0.1, -0.1, 0.2, -0.2, 0.3, -0.3, 0.37, -0.37] {
            let cut = lo + (hi - lo) * (0.5 + shift);
            let (a, b) = if vertical {
                ((x0, cut, y0, y1), (cut, x1, y0, y1))
            } else {
                ((x0, x1, y0, cut), (x0, x1, cut, y1))
            };
            let ca = self.clear(a.0, a.1, a.2, a.3);
            let cb = self.clear(b.0, b.1, b.2, b.3);
            let ka = match box_winding(self.f, a.0, a.1, a.2, a.3, ca) {
                Ok(v) => v,
                Err(Trouble::Near(_)) => continue,
                Err(Trouble::Fail(e)) => return Err(e),
            };
            let kb = match box_winding(self.f, b.0, b.1, b.2, b.3, cb) {
                Ok(v) => v,
                Err(Trouble::Near(_)) => continue,
                Err(Trouble::Fail(e)) => return Err(e),
            };
            if ka + kb != k {
                return Err(Error::Precision(format!("sub-box windings {ka} + {kb} != {k}")));
            }
            self.split(a.0, a.1, a.2, a.3, ka)?;
            self.split(b.0, b.1, b.2, b.3, kb)?;
            return Ok(());
        }
        Err(Error::Contour("no clean split line found".into()))
    }
}

/// Zeros of the entire function `f` in the rectangle, each validated by a
/// winding-number enclosure.
pub fn locate_zeros_with<F>(
    f: &F,
    label: &str,
    rect: Rectangle,
    opts: &ZeroSearchOptions,
) -> Result<(ZeroCount, Vec<Zero>)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let count = count_zeros_with(f, rect, opts)?;
    let mut loc = Locator {
        f,
        label: label.to_string(),
        half_width: opts.enclosure / 2.0,
        out: Vec::new(),
    };
    if count.count > 0 {
        loc.strips(count.left_edge, count.t_used, count.count)?;
    }
    let mut zeros = loc.out;
    zeros.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.beta.total_cmp(&b.beta)));
    Ok((count, zeros))
}

pub fn locate_zeros(chi: &DirichletCharacter, rect: Rectangle) -> Result<Vec<Zero>> {
    let lf = LFunction::new(chi);
    Ok(locate_zeros_detailed(&lf, rect, &ZeroSearchOptions::default())?.1)
}

pub fn locate_zeros_detailed(
    lf: &LFunction,
    rect: Rectangle,
    opts: &ZeroSearchOptions,
) -> Result<(ZeroCount, Vec<Zero>)> {
    locate_zeros_with(&|s| lf.entire_value(s), lf.label(), rect, opts)
}

/// Largest `c` with `β < 1 − c/log(Cond·(|γ|+3))` for every zero, i.e.
/// `min (1−β)·log(Cond(|γ|+3))`. `None` for an empty list.
pub fn zero_free_constant(zeros: &[Zero], conductor: u64) -> Option<f64> {
    zeros
        .iter()
        .map(|z| (1.0 - z.beta) * (conductor as f64 * (z.gamma.abs() + 3.0)).ln())
        .min_by(f64::total_cmp)
}

/// Writes `character_label,beta,gamma,enclosure` rows.
pub fn write_zeros_csv<W: std::io::Write>(w: W, zeros: &[Zero]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["character_label", "beta", "gamma", "enclosure"])?;
    for z in zeros {
        wr.write_record([
            z.character_id.clone(),
            format!("{:.12}", z.beta),
            format!("{:.12}", z.gamma),
            format!("{:e}", z.refinement_radius),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `L(s,χ₀)` for principal χ₀ mod `q` via `ζ(s) ∏_{p|q}(1−p^{−s})`; used
/// as a cross-check of the periodic evaluator.
pub fn principal_l_value(q: u64, s: Complex64) -> Result<Complex64> {
    let mut v = hurwitz_zeta(s, 1.0, 1e-14)?;
    for p in factorize(q).primes() {
        v *= 1.0 - (-s * (p as f64).ln()).exp();
    }
    Ok(v)
}
