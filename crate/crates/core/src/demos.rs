//! Ready-made potentials shared by the tests and the command-line front end.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid;
use crate::laurent::LaurentLoop;
use crate::matrix::{c64, diag, unit, ComplexMatrix};
use crate::potential::{finite_type_potential, FiniteTypePotential, PolyFrame, Potential};

pub const DEMO_TRUNC: usize = 32;

/// `[−½, ½]²` sampled at `h = 1/32`.
pub fn demo_grid() -> Grid {
    Grid::centered(0.5, 33)
}

fn eta_from(a: &ComplexMatrix, mid: &ComplexMatrix) -> LaurentLoop {
    LaurentLoop::new(
        a.nrows(),
        -1,
        vec![a.clone(), mid.clone(), -a.adjoint()],
        DEMO_TRUNC,
    )
    .expect("three equal blocks")
}

/// `d = 1`, `n = 2`, `Q₀ = diag(1, −1)`, `η = λ⁻¹A − λA` with `A = 0.8σ_x`:
/// a harmonic map into `S² = G₁(ℂ²)`.
pub fn sphere_demo() -> FiniteTypePotential {
    let a = (unit(2, 0, 1) + unit(2, 1, 0)) * c64(0.8, 0.0);
    let q0 = diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)]);
    finite_type_potential(
        1,
        &eta_from(&a, &ComplexMatrix::zeros(2, 2)),
        Some(&q0),
        1e-12,
    )
    .expect("the sphere demo is twisted and real")
}

/// `d = 1`, `n = 3`, `Q₀ = diag(1, −1, −1)`; `η⁻₋₁` has a one-dimensional
/// kernel in `V₀⊥`.
pub fn grassmann_demo() -> FiniteTypePotential {
    let mut a = unit(3, 0, 1) * c64(0.6, 0.0) + unit(3, 0, 2) * c64(0.0, 0.3);
    a += a.adjoint();
    let mid = diag(&[c64(0.0, 0.0), c64(0.0, 0.4), c64(0.0, -0.4)]);
    let q0 = diag(&[c64(1.0, 0.0), c64(-1.0, 0.0), c64(-1.0, 0.0)]);
    finite_type_potential(1, &eta_from(&a, &mid), Some(&q0), 1e-12)
        .expect("the n = 3 demo is twisted and real")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteTypeDemo {
    Sphere,
    Grassmann,
}

impl FiniteTypeDemo {
    pub fn potential(self) -> FiniteTypePotential {
        match self {
            FiniteTypeDemo::Sphere => sphere_demo(),
            FiniteTypeDemo::Grassmann => grassmann_demo(),
        }
    }
}

/// A potential with a holomorphic subbundle `ℓ` satisfying `π⊥μ₋₁π = 0`.
#[derive(Clone, Debug)]
pub struct UnitonPair {
    pub name: &'static str,
    pub mu: Potential,
    pub frame: PolyFrame,
}

fn col(entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_iterator(entries.len(), 1, entries.iter().map(|&x| c64(x, 0.0)))
}

fn mono(k: i32, m: ComplexMatrix) -> LaurentLoop {
    LaurentLoop::monomial(k, &m, DEMO_TRUNC)
}

/// Three admissible pairs: a finite-type one and two with polynomial `ξ`.
pub fn uniton_pairs() -> Result<Vec<UnitonPair>> {
    let span_1_z = PolyFrame::new(vec![col(&[1.0, 0.0, 0.0]), col(&[0.0, 1.0, 0.0])])?;

    let alpha = c64(0.5, 0.2);
    let e13 = unit(3, 0, 2) * alpha;
    let finite = Potential::constant(mono(-1, e13.clone()).add(&mono(1, -e13.adjoint())));

    // ξ = λ⁻¹(1 + z)E₁₂ + λ⁰(0.5i z E₂₁) + 0.2λE₁₁, ℓ = span e₁.
    let poly2 = Potential::polynomial(vec![
        mono(-1, unit(2, 0, 1)).add(&mono(1, unit(2, 0, 0) * c64(0.2, 0.0))),
        mono(-1, unit(2, 0, 1)).add(&mono(0, unit(2, 1, 0) * c64(0.0, 0.5))),
    ])?;
    let e1 = PolyFrame::constant(col(&[1.0, 0.0]))?;

    // μ₋₁ = (1 + 0.5z)E₁₃ + 0.3E₂₃ kills span(1, z, 0).
    let poly3 = Potential::polynomial(vec![
        mono(-1, unit(3, 0, 2) + unit(3, 1, 2) * c64(0.3, 0.0))
            .add(&mono(0, unit(3, 2, 1) * c64(-0.2, 0.0))),
        mono(-1, unit(3, 0, 2) * c64(0.5, 0.0)).add(&mono(0, unit(3, 1, 0) * c64(0.4, 0.0))),
    ])?;

    Ok(vec![
        UnitonPair {
            name: "finite_type_e13",
            mu: finite,
            frame: span_1_z.clone(),
        },
        UnitonPair {
            name: "polynomial_n2",
            mu: poly2,
            frame: e1,
        },
        UnitonPair {
            name: "polynomial_n3",
            mu: poly3,
            frame: span_1_z,
        },
    ])
}

/// `span(1, z²)ᵀ ⊂ ℂ²`: holomorphic, with `A′` vanishing at `z = 0`.
pub fn singular_curve() -> Result<PolyFrame> {
    PolyFrame::new(vec![col(&[1.0, 0.0]), col(&[0.0, 0.0]), col(&[0.0, 1.0])])
}
