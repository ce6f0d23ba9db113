use std::f64::consts::PI;

use harmap_core::iwasawa::{iwasawa_factorize, iwasawa_with, IwasawaOptions};
use harmap_core::matrix::{c64, identity, unit, ComplexMatrix, C64};
use harmap_core::LaurentLoop;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar loop `exp(f(λ))` by a naive DFT on 256 points, frequencies |k| ≤ 40.
fn scalar_exp_loop(f: impl Fn(C64) -> C64, trunc: usize) -> LaurentLoop {
    let s = 256;
    let vals: Vec<C64> = (0..s)
        .map(|j| f(C64::from_polar(1.0, 2.0 * PI * j as f64 / s as f64)).exp())
        .collect();
    let coeffs = (-40..=40)
        .map(|k: i32| {
            let c: C64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * C64::from_polar(1.0, -2.0 * PI * (k as f64) * j as f64 / s as f64)
                })
                .sum();
            ComplexMatrix::from_element(1, 1, c / s as f64)
        })
        .collect();
    LaurentLoop::new(1, -40, coeffs, trunc).unwrap().trim(1e-18)
}

fn sup_on_circle(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
    (0..64)
        .map(|j| {
            let lam = C64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.25) / 64.0);
            (a.eval(lam).unwrap() - b.eval(lam).unwrap()).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn abelian_closed_form() {
    let a = c64(0.7, -0.4);
    let gamma = scalar_exp_loop(|l| a / l, 48);
    let (phi, b) = iwasawa_factorize(&gamma, 48).unwrap();
    let phi_expected = scalar_exp_loop(|l| a / l - a.conj() * l + a.conj() - a, 48);
    let b_expected = scalar_exp_loop(|l| a.conj() * l + a - a.conj(), 48);
    assert!(
        sup_on_circle(&phi, &phi_expected) < 1e-9,
        "{}",
        sup_on_circle(&phi, &phi_expected)
    );
    assert!(sup_on_circle(&b, &b_expected) < 1e-9);
}

#[test]
fn nilpotent_loop_agrees_with_double_truncation() {
    let g = LaurentLoop::identity(2, 32).add(&LaurentLoop::monomial(-1, &unit(2, 0, 1), 32));
    let (phi, b) = iwasawa_factorize(&g, 32).unwrap();
    let (phi2, b2) = iwasawa_factorize(&g.clone().with_trunc(64), 64).unwrap();
    assert!(sup_on_circle(&phi, &phi2) < 1e-8);
    assert!(sup_on_circle(&b, &b2) < 1e-8);
}

fn random_loop(rng: &mut ChaCha8Rng, n: usize, bw: i32, trunc: usize) -> LaurentLoop {
    let coeffs = (-bw..=bw)
        .map(|k| {
            let mut m = ComplexMatrix::from_fn(n, n, |_, _| {
                c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            // Geometric decay keeps det γ zero-free on an annulus around S¹,
            // which is what makes the finite sections converge quickly.
            m *= c64(0.25 * 0.5f64.powi(k.abs()) / n.max(2) as f64, 0.0);
            if k == 0 {
                m += identity(n);
            }
            m
        })
        .collect();
    LaurentLoop::new(n, -bw, coeffs, trunc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_loops_round_trip(seed in 0u64..1_000_000, n in 1usize..=4, bw in 1i32..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_loop(&mut rng, n, bw, 32);
        let it = iwasawa_with(&g, &IwasawaOptions::default()).unwrap();
        let prod = it.phi.mul(&it.b).unwrap();
        prop_assert!(sup_on_circle(&g, &prod) < 1e-8);
        prop_assert!(it.phi.unitary_circle_defect(64) < 1e-9);
        prop_assert!(it.phi.based_defect() < 1e-9);
        prop_assert!(it.b.kmin() >= 0);
        prop_assert!(it.plus_defect < 1e-10 * g.l1_norm().max(1.0));
    }

    #[test]
    fn unitary_part_is_invariant_under_plus_factors(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_loop(&mut rng, 2, 3, 32);
        let p = random_loop(&mut rng, 2, 2, 32).keep_from(0);
        let (phi, _) = iwasawa_factorize(&g, 32).unwrap();
        let (phi_p, _) = iwasawa_factorize(&g.mul(&p).unwrap(), 32).unwrap();
        prop_assert!(sup_on_circle(&phi, &phi_p) < 1e-8);
    }

    #[test]
    fn truncations_m_and_2m_agree(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_loop(&mut rng, 3, 4, 32);
        let (phi, _) = iwasawa_factorize(&g, 32).unwrap();
        let (phi2, _) = iwasawa_factorize(&g.clone().with_trunc(64), 64).unwrap();
        prop_assert!(sup_on_circle(&phi, &phi2) < 1e-7);
    }
}
