//! Dressing of extended solutions by plus loops and by simple factors, and
//! the completion limit of simple-factor dressing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpw::{extended_solution, ExtendedSolution, PipelineOptions};
use crate::error::{Error, Result};
use crate::fourier::{coeff_recover, root_of_unity};
use crate::grid::{try_tabulate, Field, Grid, LoopField, MapField, Stat};
use crate::iwasawa::{iwasawa_with, IwasawaOptions};
use crate::laurent::LaurentLoop;
use crate::matrix::{
    c64, checked_inverse, identity, matrix_exp, qr_orthonormalize, svd_image, zeros, ComplexMatrix,
    C64, DEFAULT_COND_CAP,
};
use crate::potential::{admissibility_tol, constant_uniton, gauge_action, Potential};

/// `γ_{a,V} = π_V + ξ_a π_V⊥` with
/// `ξ_a(λ) = (āλ − 1)/(λ − a) · (1 − a)/(ā − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFactor {
    a: C64,
    frame: ComplexMatrix,
    pi: ComplexMatrix,
    scale: C64,
}

impl SimpleFactor {
    /// `frame` spans `V`; it need not be orthonormal and may be empty.
    pub fn new(a: C64, frame: &ComplexMatrix) -> Result<SimpleFactor> {
        let r = a.norm();
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidInput(format!(
                "simple factor needs 0 < |a| < 1, got {a}"
            )));
        }
        let (_, q) = qr_orthonormalize(frame);
        let pi = &q * q.adjoint();
        let scale = (c64(1.0, 0.0) - a) / (a.conj() - 1.0);
        Ok(SimpleFactor {
            a,
            frame: q,
            pi,
            scale,
        })
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.pi.nrows()
    }

    /// Orthonormal frame of `V`.
    pub fn frame(&self) -> &ComplexMatrix {
        &self.frame
    }

    pub fn projection(&self) -> &ComplexMatrix {
        &self.pi
    }

    /// The same `a` with `V` replaced by the span of `frame`.
    pub fn with_subspace(&self, frame: &ComplexMatrix) -> Result<SimpleFactor> {
        SimpleFactor::new(self.a, frame)
    }

    pub fn xi(&self, lambda: C64) -> Result<C64> {
        let den = lambda - self.a;
        if den.norm() < 1e-14 {
            return Err(Error::InvalidInput(format!(
                "simple factor has a pole at λ = {}",
                self.a
            )));
        }
        Ok((self.a.conj() * lambda - 1.0) / den * self.scale)
    }

    /// `γ_{a,V}(λ)⁻¹ = π_V + ξ_a(λ)⁻¹π_V⊥`.
    pub fn eval_inverse(&self, lambda: C64) -> Result<ComplexMatrix> {
        let num = self.a.conj() * lambda - 1.0;
        if num.norm() < 1e-14 {
            return Err(Error::InvalidInput(
                "inverse simple factor has a pole at λ = 1/ā".into(),
            ));
        }
        let x = (lambda - self.a) / (num * self.scale);
        Ok(self.combine(x))
    }

    fn combine(&self, x: C64) -> ComplexMatrix {
        let n = self.n();
        &self.pi + (identity(n) - &self.pi) * x
    }
}

/// `π_V + ξ_a(λ)π_V⊥`.
pub fn simple_factor_eval(sf: &SimpleFactor, lambda: C64) -> Result<ComplexMatrix> {
    Ok(sf.combine(sf.xi(lambda)?))
}

/// `h#Φ`: the unitary Iwasawa factor of `hΦ(z)` at every grid point.
pub fn dress_plus(h: &LaurentLoop, phi: &LoopField, opts: &IwasawaOptions) -> Result<LoopField> {
    if !h.is_plus(1e-12) {
        return Err(Error::InvalidInput(
            "dressing loop has negative frequencies".into(),
        ));
    }
    phi.try_map(|_, _, l| {
        let t = l.trunc().max(opts.trunc);
        let it = iwasawa_with(
            &h.mul_full(l).with_trunc(t),
            &IwasawaOptions { trunc: t, ..*opts },
        )?;
        Ok(it.phi)
    })
}

/// Output of simple-factor dressing with its certificates.
#[derive(Clone, Debug)]
pub struct SimpleDressing {
    pub phi: LoopField,
    /// Orthonormal frames of `W(z) = Φ(z)(a)⁻¹V`.
    pub subspaces: MapField,
    /// Coefficient mass of the sampled product outside the band of `Φ`.
    pub tail: Stat,
}

/// Samples used to read `γ_VΦγ_W⁻¹` back into coefficients.
fn dressing_samples(l: &LaurentLoop, pad: i32) -> usize {
    let width = (l.kmax() - l.kmin() + 1 + 2 * pad) as usize;
    (2 * width).max(64).next_power_of_two()
}

const BAND_PAD: i32 = 8;

fn dress_point(
    sf: &SimpleFactor,
    l: &LaurentLoop,
    w: &ComplexMatrix,
) -> Result<(LaurentLoop, f64)> {
    let gw = sf.with_subspace(w)?;
    let s = dressing_samples(l, BAND_PAD);
    let values: Vec<ComplexMatrix> = (0..s)
        .map(|k| {
            let lam = root_of_unity(k, s);
            Ok(simple_factor_eval(sf, lam)? * l.eval(lam)? * gw.eval_inverse(lam)?)
        })
        .collect::<Result<_>>()?;
    let (lo, hi) = (l.kmin() - BAND_PAD, l.kmax() + BAND_PAD);
    let full = coeff_recover(&values, lo, hi, l.trunc())?;
    let tail = full.mass_outside(l.kmin(), l.kmax());
    let coeffs = (l.kmin()..=l.kmax()).map(|k| full.coeff(k)).collect();
    Ok((LaurentLoop::new(l.n(), l.kmin(), coeffs, l.trunc())?, tail))
}

/// `γ_{a,V}Φγ_{a,W}⁻¹` with `W` supplied per point.
pub fn dress_simple_with(
    sf: &SimpleFactor,
    phi: &LoopField,
    subspaces: &MapField,
) -> Result<SimpleDressing> {
    let parts = phi.try_map(|i, j, l| dress_point(sf, l, subspaces.at(i, j)))?;
    let tail = Stat::over(&phi.grid, 0, |i, j| parts.at(i, j).1);
    Ok(SimpleDressing {
        phi: Field {
            grid: phi.grid,
            values: parts.values.into_iter().map(|p| p.0).collect(),
        },
        subspaces: subspaces.clone(),
        tail,
    })
}

/// `W = Φ(a)⁻¹V` from a direct evaluation of `Φ` at `a`. The negative
/// frequencies of `Φ` get amplified by `|a|^{kmin}`, so this is only
/// reliable for moderate `|a|`; see [`dressing_subspaces`] otherwise.
pub fn dress_simple(sf: &SimpleFactor, phi: &LoopField) -> Result<SimpleDressing> {
    let subspaces = phi.try_map(|_, _, l| {
        let at = l.clone().trim(1e-15).eval(sf.a())?;
        let inv = checked_inverse(&at, DEFAULT_COND_CAP)?;
        Ok(orth(&(inv * sf.frame())))
    })?;
    dress_simple_with(sf, phi, &subspaces)
}

fn orth(f: &ComplexMatrix) -> ComplexMatrix {
    if f.ncols() == 0 {
        return f.clone();
    }
    svd_image(f, 1e-12)
        .map(|x| x.1)
        .unwrap_or_else(|_| zeros(f.nrows(), 0))
}

/// The generator of `Ψ(·)(a)` along a path, with polynomial potentials
/// evaluated at `a` once.
enum Generator<'a> {
    Poly(Vec<ComplexMatrix>),
    General(&'a Potential, C64),
}

impl<'a> Generator<'a> {
    fn new(mu: &'a Potential, a: C64) -> Result<Generator<'a>> {
        Ok(match mu {
            Potential::Holomorphic(p) => {
                Generator::Poly(p.terms().iter().map(|t| t.eval(a)).collect::<Result<_>>()?)
            }
            _ => Generator::General(mu, a),
        })
    }

    /// `ξ(z)(a)·e + ζ(z)(a)·ē` for the path direction `e`.
    fn at(&self, z: C64, e: C64) -> Result<ComplexMatrix> {
        match self {
            Generator::Poly(c) => {
                let mut acc = c.last().unwrap().clone();
                for t in c.iter().rev().skip(1) {
                    acc = acc * z + t;
                }
                Ok(acc * e)
            }
            Generator::General(mu, a) => {
                let v = mu.at(z)?;
                let mut m = v.xi.eval(*a)? * e;
                if let Some(zeta) = v.zeta {
                    m += zeta.eval(*a)? * e.conj();
                }
                Ok(m)
            }
        }
    }
}

/// Span of `Ψ(z)(a)⁻¹V`, transported from `z = 0` along the straight path by
/// fourth-order Magnus steps with re-orthonormalization. A constant
/// generator is applied as repeated short exponentials.
fn inverse_flow(gen: &Generator, z: C64, v: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut u = v.clone();
    if z.norm() == 0.0 || v.ncols() == 0 {
        return Ok(u);
    }
    if let Generator::Poly(c) = gen {
        if c.len() == 1 {
            let m = &c[0] * z;
            let steps = (m.norm() / 0.5).ceil().max(1.0);
            let e = matrix_exp(&(m * c64(-1.0 / steps, 0.0)));
            for _ in 0..steps as usize {
                u = orth(&(&e * u));
            }
            return Ok(u);
        }
    }
    let (c1, c2) = (0.5 - 3f64.sqrt() / 6.0, 0.5 + 3f64.sqrt() / 6.0);
    let mut t = 0.0;
    while t < 1.0 {
        let rough = gen.at(z * t, z)?.norm();
        let h = (0.5 / rough.max(1e-300)).min(1.0 - t).min(0.125);
        // U′ = −M(t)U.
        let m1 = -gen.at(z * (t + c1 * h), z)?;
        let m2 = -gen.at(z * (t + c2 * h), z)?;
        let omega = (&m1 + &m2) * c64(0.5 * h, 0.0)
            + (&m2 * &m1 - &m1 * &m2) * c64(3f64.sqrt() * h * h / 12.0, 0.0);
        u = orth(&(matrix_exp(&omega) * u));
        t += h;
    }
    Ok(u)
}

/// `W(z) = Φ(z)(a)⁻¹V = b(z)(a)·Ψ(z)(a)⁻¹V`, avoiding any evaluation of
/// negative frequencies at `a`.
pub fn dressing_subspaces(sf: &SimpleFactor, mu: &Potential, b: &LoopField) -> Result<MapField> {
    let gen = Generator::new(mu, sf.a())?;
    b.try_map(|i, j, l| {
        let z = b.grid.point(i, j);
        let u = inverse_flow(&gen, z, sf.frame())?;
        Ok(orth(&(l.eval(sf.a())? * u)))
    })
}

/// `‖π_V⊥Φ(a)π_W‖` in the stable form `‖π_U⊥ b(a)⁻¹ π_W‖` with `U = Ψ(a)⁻¹V`.
pub fn residue_defect(
    sf: &SimpleFactor,
    mu: &Potential,
    b: &LoopField,
    subspaces: &MapField,
) -> Result<Stat> {
    let gen = Generator::new(mu, sf.a())?;
    let vals = b.try_map(|i, j, l| {
        let z = b.grid.point(i, j);
        let u = inverse_flow(&gen, z, sf.frame())?;
        let pu = &u * u.adjoint();
        let w = subspaces.at(i, j);
        let inv = checked_inverse(&l.eval(sf.a())?, DEFAULT_COND_CAP)?;
        Ok(((identity(u.nrows()) - pu) * inv * w).norm())
    })?;
    Ok(Stat::over(&b.grid, 0, |i, j| *vals.at(i, j)))
}

/// `γ_{a,V}Φγ_{a,W}⁻¹` with `W = b(a)V`: the unitary factor of `γ_aΨγ_a⁻¹`
/// split on the unit circle. Unlike [`dress_extended`] the result keeps a
/// pole at `a` and is not an extended solution for `a ≠ 0`.
pub fn dress_circle(sf: &SimpleFactor, ext: &ExtendedSolution) -> Result<SimpleDressing> {
    let w = ext
        .b
        .try_map(|_, _, l| Ok(orth(&(l.eval(sf.a())? * sf.frame()))))?;
    dress_simple_with(sf, &ext.phi, &w)
}

/// `γ_{a,V}#Φ_μ` with `W` from the stable transport.
pub fn dress_extended(
    sf: &SimpleFactor,
    mu: &Potential,
    ext: &ExtendedSolution,
) -> Result<SimpleDressing> {
    let w = dressing_subspaces(sf, mu, &ext.b)?;
    dress_simple_with(sf, &ext.phi, &w)
}

/// One row of the completion experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRow {
    pub a: f64,
    /// `sup_grid max_k ‖(γ_a·μ)_k − (γ·μ)_k‖`.
    pub delta: f64,
    /// `sup_grid sup_{S¹} ‖γ_a#Φ_μ − Φ_{γ·μ}‖`.
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    /// The same distance for `γ_aΦ_μγ_{a,W}⁻¹` with `W = b(a)V`, the
    /// unit-circle factorization of `γ_aΨ_μγ_a⁻¹`.
    #[serde(rename = "Delta_circle")]
    pub circle_delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionReport {
    pub rows: Vec<CompletionRow>,
    pub passed: bool,
}

pub const DEFAULT_A_SEQUENCE: [f64; 3] = [1e-1, 1e-2, 1e-3];
const MIN_A: f64 = 1e-3;
const POTENTIAL_SAMPLES: usize = 256;

/// Coefficients of `γ_a ξ γ_a⁻¹` read off the circle.
fn conjugated_potential(sf: &SimpleFactor, xi: &LaurentLoop) -> Result<LaurentLoop> {
    let s = POTENTIAL_SAMPLES;
    let values: Vec<ComplexMatrix> = (0..s)
        .map(|k| {
            let lam = root_of_unity(k, s);
            Ok(simple_factor_eval(sf, lam)? * xi.eval(lam)? * sf.eval_inverse(lam)?)
        })
        .collect::<Result<_>>()?;
    let half = (s / 2) as i32;
    coeff_recover(&values, -half, half - 1, xi.trunc())
}

/// Distances of `γ_a·μ` from `γ·μ` and of `γ_a#Φ_μ` from `Φ_{γ·μ}` along a
/// sequence `a → 0`, with `γ = π_V + λ⁻¹π_V⊥` and `μ` holomorphic.
pub fn completion_limit_experiment(
    mu: &Potential,
    v: &ComplexMatrix,
    a_sequence: &[f64],
    grid: &Grid,
    opts: &PipelineOptions,
) -> Result<CompletionReport> {
    if !mu.is_holomorphic() {
        return Err(Error::InvalidInput(
            "completion needs a holomorphic potential".into(),
        ));
    }
    if let Some(&a) = a_sequence.iter().find(|&&a| !(a >= MIN_A && a < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "a = {a} is outside [{MIN_A}, 1)"
        )));
    }
    let gamma = constant_uniton(v)?;
    // gauge_action checks π_V⊥μ₋₁π_V = 0 at every grid point.
    let limit_mu = gauge_action(&gamma, mu, grid)?;
    let limit = extended_solution(&limit_mu, grid, opts)?;
    let base = extended_solution(mu, grid, opts)?;
    let limit_xi = try_tabulate(*grid, |_, _, z| Ok(limit_mu.at(z)?.xi))?;
    let base_xi = try_tabulate(*grid, |_, _, z| Ok(mu.at(z)?.xi))?;
    let rows = a_sequence
        .iter()
        .map(|&a| {
            let sf = SimpleFactor::new(c64(a, 0.0), v)?;
            let deltas: Vec<f64> = base_xi
                .values
                .par_iter()
                .zip(&limit_xi.values)
                .map(|(x, y)| Ok(conjugated_potential(&sf, x)?.coeff_distance(y)))
                .collect::<Result<_>>()?;
            let delta = deltas.into_iter().fold(0.0, f64::max);
            let dressed = dress_extended(&sf, mu, &base)?;
            let big_delta = dressed.phi.distance(&limit.phi, 0).max;
            let circle_delta = dress_circle(&sf, &base)?.phi.distance(&limit.phi, 0).max;
            Ok(CompletionRow {
                a,
                delta,
                big_delta,
                circle_delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = completion_passes(&rows);
    Ok(CompletionReport { rows, passed })
}

/// Strictly decreasing, ending below a tenth of the first value.
pub fn sequence_converges(values: &[f64]) -> bool {
    values.len() >= 2
        && values.windows(2).all(|w| w[1] < w[0])
        && values[values.len() - 1] < 0.1 * values[0]
}

/// `δ` and `Δ` both converge.
pub fn completion_passes(rows: &[CompletionRow]) -> bool {
    let col = |f: fn(&CompletionRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    sequence_converges(&col(|r| r.delta)) && sequence_converges(&col(|r| r.big_delta))
}

/// `π_V⊥ξ₋₁π_V` over the grid, for callers that want the hypothesis
/// without running the experiment.
pub fn completion_hypothesis(
    mu: &Potential,
    v: &ComplexMatrix,
    grid: &Grid,
) -> Result<(Stat, f64)> {
    let n = v.nrows();
    let (_, q) = qr_orthonormalize(v);
    let p = &q * q.adjoint();
    let vals = try_tabulate(*grid, |_, _, z| {
        let x = mu.xi_minus_one(z)?;
        Ok((((identity(n) - &p) * &x * &p).norm(), x.norm()))
    })?;
    let scale = vals.values.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok((
        Stat::over(grid, 0, |i, j| vals.at(i, j).0),
        admissibility_tol(scale),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{from_real, unitary_defect};

    fn sf(a: C64) -> SimpleFactor {
        SimpleFactor::new(a, &from_real(2, 1, &[1.0, 0.0])).unwrap()
    }

    #[test]
    fn factor_examples() {
        let s = sf(c64(0.3, -0.2));
        assert!((simple_factor_eval(&s, c64(1.0, 0.0)).unwrap() - identity(2)).norm() < 1e-15);
        for k in 0..16 {
            let lam = C64::from_polar(1.0, 0.37 + k as f64);
            assert!(unitary_defect(&simple_factor_eval(&s, lam).unwrap()) < 1e-12);
            let prod = simple_factor_eval(&s, lam).unwrap() * s.eval_inverse(lam).unwrap();
            assert!((prod - identity(2)).norm() < 1e-13);
        }
        // For real a the unimodular constant is −1, so ξ_a(−1) = −1.
        let real = sf(c64(0.4, 0.0));
        assert!((real.xi(c64(-1.0, 0.0)).unwrap() + 1.0).norm() < 1e-15);
        let q = from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!((simple_factor_eval(&real, c64(-1.0, 0.0)).unwrap() - q).norm() < 1e-15);
        assert!(simple_factor_eval(&s, c64(0.3, -0.2)).is_err());
        assert!(SimpleFactor::new(c64(1.0, 0.0), &identity(2)).is_err());
    }

    #[test]
    fn trivial_dressings() {
        let g = Grid::centered(0.5, 5);
        let id = Field {
            grid: g,
            values: vec![LaurentLoop::identity(2, 8); g.len()],
        };
        let out = dress_simple(&sf(c64(0.2, 0.1)), &id).unwrap();
        assert!(out.phi.distance(&id, 0).max < 1e-13);
        let all = SimpleFactor::new(c64(0.2, 0.1), &identity(2)).unwrap();
        let out = dress_simple(&all, &id).unwrap();
        assert!(out.phi.distance(&id, 0).max < 1e-13);
        let out = dress_plus(
            &LaurentLoop::identity(2, 8),
            &id,
            &IwasawaOptions::default(),
        )
        .unwrap();
        assert!(out.distance(&id, 0).max < 1e-12);
    }
}
