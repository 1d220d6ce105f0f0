//! Dirichlet characters modulo `q`.
//!
//! A character is stored as an exponent vector on a fixed CRT generator
//! basis of `(ℤ/qℤ)×`: for every cyclic component `i` with generator `gᵢ`
//! of order `oᵢ`, `χ(gᵢ) = e(eᵢ/oᵢ)`. Values are computed exactly as an
//! index `k` with `χ(n) = e(k/ord χ)` through precomputed discrete-log
//! tables, so multiplicativity and orthogonality hold without rounding.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{factorize, gcd, lcm, pow_mod, primitive_root_prime_power, Factorization};
use crate::error::{Error, Result};

/// Largest modulus accepted by [`character_group`].
pub const MODULUS_MAX: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ComponentKind {
    /// `(ℤ/pᵏ)×` for odd `p`, cyclic.
    Odd,
    /// The `⟨−1⟩` factor of `(ℤ/2ᵏ)×`, `k ≥ 2`.
    TwoSign,
    /// The `⟨5⟩` factor of `(ℤ/2ᵏ)×`, `k ≥ 3`.
    TwoFive,
}

#[derive(Debug)]
struct Component {
    prime: u64,
    prime_power: u64,
    order: u64,
    kind: ComponentKind,
    /// Generator lifted to `ℤ/qℤ` (≡ 1 on the other prime powers).
    crt_generator: u64,
    local_generator: u64,
    dlog: OnceLock<Vec<u32>>,
}

const NOT_A_UNIT: u32 = u32::MAX;

impl Component {
    fn table(&self) -> &[u32] {
        self.dlog.get_or_init(|| {
            let m = self.prime_power;
            let mut t = vec![NOT_A_UNIT; m as usize];
            match self.kind {
                ComponentKind::Odd => {
                    let mut v = 1u64;
                    for j in 0..self.order {
                        t[v as usize] = j as u32;
                        v = v * self.local_generator % m;
                    }
                }
                ComponentKind::TwoSign => {
                    for (r, slot) in t.iter_mut().enumerate() {
                        if r % 2 == 1 {
                            *slot = (r % 4 == 3) as u32;
                        }
                    }
                }
                ComponentKind::TwoFive => {
                    let mut v = 1u64;
                    for j in 0..self.order {
                        t[v as usize] = j as u32;
                        t[(m - v) as usize] = j as u32;
                        v = v * 5 % m;
                    }
                }
            }
            t
        })
    }

    fn log(&self, n: u64) -> Option<u64> {
        let v = self.table()[(n % self.prime_power) as usize];
        (v != NOT_A_UNIT).then_some(v as u64)
    }

    /// Local conductor of a character with exponent `e` on this component,
    /// as a power of `self.prime` (2-adic pieces are combined by the caller).
    fn local_order(&self, e: u64) -> u64 {
        self.order / gcd(e % self.order, self.order)
    }
}

/// The group `(ℤ/qℤ)×` with its fixed generator basis.
#[derive(Debug)]
pub struct CharacterGroup {
    modulus: u64,
    factorization: Factorization,
    components: Vec<Component>,
    exponent: u64,
}

impl CharacterGroup {
    /// Build the generator basis for any `q ≥ 1`. Discrete-log tables are
    /// built lazily on first evaluation.
    pub fn new(q: u64) -> Result<Arc<Self>> {
        if q == 0 {
            return Err(Error::Range("modulus must be positive".into()));
        }
        let factorization = factorize(q);
        let mut components = Vec::new();
        for &(p, k) in &factorization.factors {
            let pk = p.pow(k);
            let lift = |g_local: u64| crt_lift(g_local, pk, q);
            if p == 2 {
                if k >= 2 {
                    components.push(Component {
                        prime: 2,
                        prime_power: pk,
                        order: 2,
                        kind: ComponentKind::TwoSign,
                        crt_generator: lift(pk - 1),
                        local_generator: pk - 1,
                        dlog: OnceLock::new(),
                    });
                }
                if k >= 3 {
                    components.push(Component {
                        prime: 2,
                        prime_power: pk,
                        order: pk / 4,
                        kind: ComponentKind::TwoFive,
                        crt_generator: lift(5),
                        local_generator: 5,
                        dlog: OnceLock::new(),
                    });
                }
            } else {
                let g = primitive_root_prime_power(p, k);
                components.push(Component {
                    prime: p,
                    prime_power: pk,
                    order: (p - 1) * pk / p,
                    kind: ComponentKind::Odd,
                    crt_generator: lift(g),
                    local_generator: g,
                    dlog: OnceLock::new(),
                });
            }
        }
        let exponent = components.iter().fold(1, |acc, c| lcm(acc, c.order));
        Ok(Arc::new(CharacterGroup {
            modulus: q,
            factorization,
            components,
            exponent,
        }))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    /// Orders of the cyclic components, in basis order.
    pub fn component_orders(&self) -> Vec<u64> {
        self.components.iter().map(|c| c.order).collect()
    }

    pub fn generators(&self) -> Vec<u64> {
        self.components.iter().map(|c| c.crt_generator).collect()
    }

    pub fn order(&self) -> u64 {
        self.components.iter().map(|c| c.order).product()
    }

    /// Exponent of the group (lcm of component orders).
    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    /// Discrete logs of `n` on the generator basis; `None` if `gcd(n,q) > 1`.
    pub fn dlog(&self, n: u64) -> Option<Vec<u64>> {
        // A factor 2 ∥ q contributes no component, so test coprimality here.
        if gcd(n, self.modulus) != 1 {
            return None;
        }
        self.components.iter().map(|c| c.log(n)).collect()
    }

    fn conductor_of(&self, exps: &[u64]) -> u64 {
        let mut cond = 1u64;
        let mut two_sign = 0u64;
        let mut two_five_order = 1u64;
        let mut has_two = false;
        for (c, &e) in self.components.iter().zip(exps) {
            let o = c.local_order(e);
            match c.kind {
                ComponentKind::Odd => {
                    if o > 1 {
                        let mut v = 0;
                        let mut t = o;
                        while t % c.prime == 0 {
                            t /= c.prime;
                            v += 1;
                        }
                        cond *= c.prime.pow(1 + v);
                    }
                }
                ComponentKind::TwoSign => {
                    has_two = true;
                    two_sign = e % 2;
                }
                ComponentKind::TwoFive => {
                    has_two = true;
                    two_five_order = o;
                }
            }
        }
        if has_two {
            if two_five_order > 1 {
                cond *= 4 * two_five_order;
            } else if two_sign == 1 {
                cond *= 4;
            }
        }
        cond
    }

    /// Character with the given exponent vector.
    pub fn character(self: &Arc<Self>, exponents: Vec<u64>) -> Result<DirichletCharacter> {
        if exponents.len() != self.components.len() {
            return Err(Error::Domain(format!(
                "exponent vector has {} entries, group has {} components",
                exponents.len(),
                self.components.len()
            )));
        }
        let exponents: Vec<u64> = exponents
            .iter()
            .zip(&self.components)
            .map(|(&e, c)| e % c.order)
            .collect();
        let order = self
            .components
            .iter()
            .zip(&exponents)
            .fold(1, |acc, (c, &e)| lcm(acc, c.local_order(e)));
        let conductor = self.conductor_of(&exponents);
        Ok(DirichletCharacter {
            group: Arc::clone(self),
            primitive: conductor == self.modulus,
            exponents,
            order,
            conductor,
            roots: OnceLock::new(),
        })
    }

    /// All `φ(q)` characters, in lexicographic order of exponent vectors.
    pub fn characters(self: &Arc<Self>) -> Vec<DirichletCharacter> {
        let orders = self.component_orders();
        let mut out = Vec::with_capacity(self.order() as usize);
        for_each_mixed_radix(&orders, |e| {
            out.push(self.character(e.to_vec()).expect("well-formed exponents"));
        });
        out
    }

    /// Characters of exact order `n`, lexicographic in exponent vectors.
    pub fn characters_of_order(self: &Arc<Self>, n: u64) -> Vec<DirichletCharacter> {
        // Exponents with n·e ≡ 0 mod oᵢ are the multiples of oᵢ / gcd(oᵢ, n).
        let steps: Vec<u64> = self.components.iter().map(|c| c.order / gcd(c.order, n)).collect();
        let counts: Vec<u64> = self.components.iter().map(|c| gcd(c.order, n)).collect();
        let mut out = Vec::new();
        for_each_mixed_radix(&counts, |idx| {
            let e: Vec<u64> = idx.iter().zip(&steps).map(|(&i, &s)| i * s).collect();
            let chi = self.character(e).expect("well-formed exponents");
            if chi.order == n {
                out.push(chi);
            }
        });
        out
    }
}

fn crt_lift(g_local: u64, pk: u64, q: u64) -> u64 {
    if pk == q {
        return g_local % q;
    }
    let rest = q / pk;
    // x ≡ g (mod pk), x ≡ 1 (mod rest)
    let inv = crate::arith::inv_mod(rest % pk, pk).expect("coprime CRT moduli");
    let t = crate::arith::mul_mod((g_local + pk - 1) % pk, inv, pk);
    (1 + rest * t) % q
}

fn for_each_mixed_radix(radices: &[u64], mut f: impl FnMut(&[u64])) {
    if radices.contains(&0) {
        return;
    }
    let mut idx = vec![0u64; radices.len()];
    loop {
        f(&idx);
        let mut i = radices.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < radices[i] {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// A Dirichlet character modulo `q`.
#[derive(Clone)]
pub struct DirichletCharacter {
    group: Arc<CharacterGroup>,
    exponents: Vec<u64>,
    order: u64,
    conductor: u64,
    primitive: bool,
    roots: OnceLock<Arc<Vec<Complex64>>>,
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.group.modulus == other.group.modulus && self.exponents == other.exponents
    }
}

impl Eq for DirichletCharacter {}

impl fmt::Debug for DirichletCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletCharacter")
            .field("modulus", &self.modulus())
            .field("exponents", &self.exponents)
            .field("order", &self.order)
            .field("conductor", &self.conductor)
            .field("primitive", &self.primitive)
            .finish()
    }
}

/// Serializable summary of a character.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterInfo {
    pub label: String,
    pub modulus: u64,
    pub exponents: Vec<u64>,
    pub order: u64,
    pub conductor: u64,
    pub primitive: bool,
}

impl DirichletCharacter {
    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exponents
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn conductor(&self) -> u64 {
        self.conductor
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    pub fn is_principal(&self) -> bool {
        self.order == 1
    }

    pub fn group(&self) -> &Arc<CharacterGroup> {
        &self.group
    }

    /// Position in the lexicographic enumeration of the group.
    pub fn index(&self) -> u64 {
        self.exponents
            .iter()
            .zip(self.group.component_orders())
            .fold(0, |acc, (&e, o)| acc * o + e)
    }

    /// Stable label `q.index`.
    pub fn label(&self) -> String {
        format!("{}.{}", self.modulus(), self.index())
    }

    pub fn info(&self) -> CharacterInfo {
        CharacterInfo {
            label: self.label(),
            modulus: self.modulus(),
            exponents: self.exponents.clone(),
            order: self.order,
            conductor: self.conductor,
            primitive: self.primitive,
        }
    }

    /// `k` with `χ(n) = e(k / ord χ)`, or `None` when `gcd(n, q) > 1`.
    pub fn value_index(&self, n: u64) -> Option<u64> {
        let logs = self.group.dlog(n)?;
        let big = self.group.exponent;
        let mut acc = 0u64;
        for ((c, &e), l) in self.group.components.iter().zip(&self.exponents).zip(logs) {
            let scaled = (e * l % c.order) * (big / c.order);
            acc = (acc + scaled) % big;
        }
        // χ^ord = 1, so ord · acc ≡ 0 (mod big).
        Some(acc * self.order / big)
    }

    /// Value index for a signed argument.
    pub fn value_index_signed(&self, n: i64) -> Option<u64> {
        let q = self.modulus() as i64;
        self.value_index(n.rem_euclid(q) as u64)
    }

    fn root_table(&self) -> &Arc<Vec<Complex64>> {
        self.roots.get_or_init(|| {
            Arc::new(
                (0..self.order)
                    .map(|k| {
                        let (s, c) = (TAU * k as f64 / self.order as f64).sin_cos();
                        Complex64::new(c, s)
                    })
                    .collect(),
            )
        })
    }

    /// `χ(n)` as a complex number (0 when `gcd(n,q) > 1`).
    pub fn evaluate(&self, n: u64) -> Complex64 {
        match self.value_index(n) {
            Some(k) => self.root_table()[k as usize],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn evaluate_signed(&self, n: i64) -> Complex64 {
        let q = self.modulus() as i64;
        self.evaluate(n.rem_euclid(q) as u64)
    }

    /// Table of `χ(a)` for `a = 0..q`.
    pub fn value_table(&self) -> Vec<Complex64> {
        (0..self.modulus()).map(|a| self.evaluate(a)).collect()
    }

    /// `χ(−1) = −1`.
    pub fn is_odd(&self) -> bool {
        let q = self.modulus();
        q > 2 && self.value_index(q - 1) != Some(0)
    }

    pub fn conj(&self) -> DirichletCharacter {
        let e = self
            .exponents
            .iter()
            .zip(self.group.component_orders())
            .map(|(&e, o)| (o - e % o) % o)
            .collect();
        self.group.character(e).expect("same group")
    }

    pub fn pow(&self, k: u64) -> DirichletCharacter {
        let e = self
            .exponents
            .iter()
            .zip(self.group.component_orders())
            .map(|(&e, o)| (e * (k % o)) % o)
            .collect();
        self.group.character(e).expect("same group")
    }

    /// Product of two characters of the same modulus.
    pub fn mul(&self, other: &DirichletCharacter) -> Result<DirichletCharacter> {
        if self.modulus() != other.modulus() {
            return Err(Error::Domain("characters have different moduli".into()));
        }
        let e = self
            .exponents
            .iter()
            .zip(&other.exponents)
            .zip(self.group.component_orders())
            .map(|((&a, &b), o)| (a + b) % o)
            .collect();
        self.group.character(e)
    }

    /// Gauss sum `Σ_a χ(a) e(a/q)`.
    pub fn gauss_sum(&self) -> Complex64 {
        let q = self.modulus();
        (1..=q)
            .map(|a| {
                let (s, c) = (TAU * a as f64 / q as f64).sin_cos();
                self.evaluate(a % q) * Complex64::new(c, s)
            })
            .sum()
    }
}

/// All `φ(q)` characters mod `q` for `1 ≤ q ≤ 10⁴`.
pub fn character_group(q: u64) -> Result<Vec<DirichletCharacter>> {
    if q == 0 || q > MODULUS_MAX {
        return Err(Error::Range(format!("modulus {q} outside [1, {MODULUS_MAX}]")));
    }
    Ok(CharacterGroup::new(q)?.characters())
}

/// Primitive characters mod `q`.
pub fn primitive_characters(q: u64) -> Result<Vec<DirichletCharacter>> {
    Ok(character_group(q)?.into_iter().filter(|c| c.is_primitive()).collect())
}

/// `χ(n)` helper matching the operation name used in reports.
pub fn evaluate(chi: &DirichletCharacter, n: i64) -> Complex64 {
    chi.evaluate_signed(n)
}

pub fn conductor(chi: &DirichletCharacter) -> u64 {
    chi.conductor()
}

/// The family `S(q)`: characters mod `q` with conductor `≤ q^A` and size
/// `≤ q^d`.
#[derive(Clone, Debug)]
pub struct CharacterFamily {
    pub q: u64,
    pub members: Vec<DirichletCharacter>,
    pub conductor_exponent: f64,
    pub size_exponent: f64,
}

impl CharacterFamily {
    pub fn new(q: u64, members: Vec<DirichletCharacter>, conductor_exponent: f64, size_exponent: f64) -> Result<Self> {
        let qf = q as f64;
        let cap = qf.powf(conductor_exponent);
        if let Some(bad) = members.iter().find(|c| c.conductor() as f64 > cap * (1.0 + 1e-12)) {
            return Err(Error::Contract(format!(
                "member {} has conductor {} > q^A",
                bad.label(),
                bad.conductor()
            )));
        }
        if members.len() as f64 > qf.powf(size_exponent) * (1.0 + 1e-12) {
            return Err(Error::Contract(format!("family size {} exceeds q^d", members.len())));
        }
        Ok(CharacterFamily {
            q,
            members,
            conductor_exponent,
            size_exponent,
        })
    }

    /// All primitive characters mod `q`, with `A = d = 1`.
    pub fn primitive(q: u64) -> Result<Self> {
        Self::new(q, primitive_characters(q)?, 1.0, 1.0)
    }
}

/// Direct check of a character's value at a prime power argument, used by
/// tests and reports: `χ(g)^k` for the `i`th generator.
pub fn generator_value_index(chi: &DirichletCharacter, i: usize, k: u64) -> u64 {
    let g = chi.group().generators()[i];
    let q = chi.modulus();
    chi.value_index(pow_mod(g, k, q)).expect("generator is a unit")
}
