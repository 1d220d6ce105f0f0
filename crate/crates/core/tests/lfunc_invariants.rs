use pseudosieve::arith::gcd;
use pseudosieve::characters::primitive_characters;
use pseudosieve::largesieve::unit_f64;
use pseudosieve::lfunc::{completed_l, count_zeros_rectangle, l_value, locate_zeros, zero_free_constant};
use pseudosieve::{Complex64, DirichletCharacter, Rectangle};
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

fn gauss_sum(chi: &DirichletCharacter) -> Complex64 {
    let q = chi.modulus();
    (1..q)
        .filter(|&a| gcd(a, q) == 1)
        .map(|a| chi.evaluate(a) * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * a as f64 / q as f64))
        .sum()
}

#[test]
fn functional_equation_at_twenty_points() {
    let mut rng = SplitMix64::seed_from_u64(11);
    let moduli = [3u64, 4, 5, 7, 8, 11, 13, 15, 24, 31];
    for i in 0..20 {
        let chars = primitive_characters(moduli[i % moduli.len()]).unwrap();
        let chi = &chars[(unit_f64(&mut rng) * chars.len() as f64) as usize];
        let s = Complex64::new(-0.5 + 2.0 * unit_f64(&mut rng), -25.0 + 50.0 * unit_f64(&mut rng));
        let q = chi.modulus() as f64;
        let a = if chi.is_odd() { 1.0 } else { 0.0 };
        let root = gauss_sum(chi) / (Complex64::i().powf(a) * q.sqrt());
        let lhs = completed_l(chi, s).unwrap();
        // Λ(s,χ) = ε(χ) Λ(1−s, χ̄).
        let rhs = root * completed_l(&chi.conj(), Complex64::new(1.0, 0.0) - s).unwrap();
        let scale = lhs.norm().max(1e-300);
        assert!(
            (lhs - rhs).norm() / scale < 1e-8,
            "{} at {s}: {lhs} vs {rhs}",
            chi.label()
        );
    }
}

/// Ordinates of the first ten zeta zeros (published tables).
const ZETA_ORDINATES: [f64; 10] = [
    14.134725141734,
    21.022039638771,
    25.010857580145,
    30.424876125859,
    32.935061587739,
    37.586178158825,
    40.918719012147,
    43.327073280914,
    48.005150881167,
    49.773832477672,
];

#[test]
fn zeta_zeros_match_tables() {
    let zeta = primitive_characters(1).unwrap().remove(0);
    let rect = Rectangle::new(0.5, 50.0).unwrap();
    assert_eq!(count_zeros_rectangle(&zeta, rect).unwrap(), 20);
    let mut gammas: Vec<f64> = locate_zeros(&zeta, rect)
        .unwrap()
        .iter()
        .filter(|z| z.gamma > 0.0)
        .map(|z| z.gamma)
        .collect();
    gammas.sort_by(f64::total_cmp);
    assert_eq!(gammas.len(), 10);
    for (g, want) in gammas.iter().zip(ZETA_ORDINATES) {
        assert!((g - want).abs() < 1e-6, "{g} vs {want}");
    }
}

#[test]
fn counts_stable_under_small_height_shifts() {
    let mut rng = SplitMix64::seed_from_u64(2024);
    for _ in 0..50 {
        let q = 3 + (unit_f64(&mut rng) * 58.0) as u64;
        let chars = primitive_characters(q).unwrap();
        if chars.is_empty() {
            continue;
        }
        let chi = &chars[(unit_f64(&mut rng) * chars.len() as f64) as usize];
        let t = 2.0 + 18.0 * unit_f64(&mut rng);
        let counts: Vec<u64> = [t - 1e-3, t, t + 1e-3]
            .iter()
            .map(|&h| count_zeros_rectangle(chi, Rectangle::new(0.5, h).unwrap()).unwrap())
            .collect();
        if counts[0] != counts[2] {
            // Only a zero with |γ| inside the shift window may change the count.
            let zs = locate_zeros(chi, Rectangle::new(0.5, t + 2e-3).unwrap()).unwrap();
            assert!(
                zs.iter().any(|z| (z.gamma.abs() - t).abs() <= 1.1e-3),
                "{} T={t}: {counts:?}",
                chi.label()
            );
        } else {
            assert_eq!(counts[0], counts[1], "{} T={t}", chi.label());
        }
    }
}

/// Regression observation: every located zero for conductor ≤ 100 and
/// height ≤ 10 sits on the critical line.
#[test]
fn located_zeros_on_critical_line() {
    let rect = Rectangle::new(0.5, 10.0).unwrap();
    let mut zfc = f64::INFINITY;
    let mut total = 0;
    for q in 3..=100u64 {
        for chi in primitive_characters(q).unwrap() {
            if chi.conj().exponents() < chi.exponents() {
                continue;
            }
            let zs = locate_zeros(&chi, rect).unwrap();
            for z in &zs {
                assert!((z.beta - 0.5).abs() < 1e-6, "{} {z:?}", chi.label());
                assert!(l_value(&chi, z.rho()).unwrap().norm() < 1e-6);
            }
            if let Some(v) = zero_free_constant(&zs, q) {
                zfc = zfc.min(v);
            }
            total += zs.len();
        }
    }
    eprintln!("{total} zeros; empirical zero-free constant {zfc:.4}");
    assert!(zfc > 0.1);
}
