//! The DPW pipeline: integrate `Ψ⁻¹dΨ = μ`, `Ψ(0) = I`; split `Ψ = Φb`;
//! evaluate `φ = Φ(−1)`; and numerical checks of the resulting PDEs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{centered_window, coeff_recover, root_of_unity};
use crate::grid::{tabulate, Field, Grid, LoopField, MapField, Stat, FD_MARGIN};
use crate::iwasawa::{iwasawa_with, IwasawaOptions};
use crate::laurent::LaurentLoop;
use crate::matrix::{c64, checked_inverse, matrix_exp, ComplexMatrix, C64, DEFAULT_COND_CAP};
use crate::potential::Potential;

/// Relative size below which edge coefficients are dropped after each step.
const CLEAN_TOL: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact exponential for constant `ξ`, RK4 otherwise.
    Auto,
    Exact,
    Rk4,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub method: Method,
    /// Local error target per RK4 step, relative to `‖Ψ‖`.
    pub step_tol: f64,
    /// Cap on the number of step halvings per grid edge.
    pub max_halvings: u32,
    /// Sample count on S¹ for the exact branch.
    pub samples: usize,
    /// Whether to integrate the non-tree edges as a path-independence check.
    pub certificate: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            method: Method::Auto,
            step_tol: 1e-12,
            max_halvings: 8,
            samples: 128,
            certificate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Integration {
    pub psi: LoopField,
    pub method: Method,
    /// Largest discrepancy between `Ψ` at a point and `Ψ` carried there along
    /// a non-tree edge; zero for the exact branch.
    pub holonomy_defect: f64,
    /// Largest coefficient mass discarded by truncation.
    pub truncation_loss: f64,
}

/// `Ψ_μ` on the grid.
pub fn integrate_potential(
    mu: &Potential,
    grid: &Grid,
    opts: &IntegrateOptions,
) -> Result<Integration> {
    if !grid.contains_origin() {
        return Err(Error::InvalidInput("the grid must contain z = 0".into()));
    }
    let method = match (opts.method, mu.constant_xi()) {
        (Method::Auto, Some(_)) | (Method::Exact, Some(_)) => Method::Exact,
        (Method::Exact, None) => {
            return Err(Error::InvalidInput(
                "the exact branch needs a z-independent holomorphic potential".into(),
            ))
        }
        _ => Method::Rk4,
    };
    match method {
        Method::Exact => integrate_exact(mu.constant_xi().unwrap(), grid, opts.samples),
        _ => integrate_rk4(mu, grid, opts),
    }
}

/// `exp(zξ)` sampled at roots of unity and recovered by DFT.
pub fn exp_loop(xi: &LaurentLoop, z: C64, samples: usize) -> Result<(LaurentLoop, f64)> {
    let n = xi.n();
    let values: Vec<ComplexMatrix> = (0..samples)
        .map(|s| matrix_exp(&(xi.eval(root_of_unity(s, samples)).unwrap() * z)))
        .collect();
    let (lo, hi) = centered_window(samples);
    let mut l = coeff_recover(&values, lo, hi, xi.trunc())?;
    let lost = l.truncate();
    debug_assert_eq!(l.n(), n);
    Ok((l.trim(1e-15), lost))
}

fn integrate_exact(xi: &LaurentLoop, grid: &Grid, samples: usize) -> Result<Integration> {
    let field = crate::grid::try_tabulate(*grid, |_, _, z| exp_loop(xi, z, samples))?;
    let truncation_loss = field.values.iter().map(|v| v.1).fold(0.0, f64::max);
    let psi = Field {
        grid: *grid,
        values: field.values.into_iter().map(|v| v.0).collect(),
    };
    Ok(Integration {
        psi,
        method: Method::Exact,
        holonomy_defect: 0.0,
        truncation_loss,
    })
}

/// `ξ(z)·e + ζ(z)·ē`, the generator along direction `e`.
fn generator(mu: &Potential, z: C64, e: C64) -> Result<LaurentLoop> {
    let v = mu.at(z)?;
    let mut a = v.xi.scale(e);
    if let Some(zeta) = v.zeta {
        a = a.add(&zeta.scale(e.conj()));
    }
    Ok(a)
}

/// Generators along one segment, memoized by the (dyadic) parameter `t`.
struct SegmentGenerator<'a> {
    mu: &'a Potential,
    z0: C64,
    e: C64,
    cache: HashMap<u64, LaurentLoop>,
}

impl SegmentGenerator<'_> {
    fn at(&mut self, t: f64) -> Result<&LaurentLoop> {
        let key = t.to_bits();
        if !self.cache.contains_key(&key) {
            let a = generator(self.mu, self.z0 + self.e * t, self.e)?;
            self.cache.insert(key, a);
        }
        Ok(&self.cache[&key])
    }
}

/// One RK4 step of `dΨ/dt = Ψ·a(t)`.
fn rk4_step(gen: &mut SegmentGenerator, psi: &LaurentLoop, t: f64, dt: f64) -> Result<LaurentLoop> {
    let half = c64(0.5 * dt, 0.0);
    let k1 = psi.mul_t(gen.at(t)?);
    let am = gen.at(t + 0.5 * dt)?.clone();
    let k2 = psi.add(&k1.scale(half)).mul_t(&am);
    let k3 = psi.add(&k2.scale(half)).mul_t(&am);
    let k4 = psi.add(&k3.scale(c64(dt, 0.0))).mul_t(gen.at(t + dt)?);
    let sum = k1
        .add(&k2.scale(c64(2.0, 0.0)))
        .add(&k3.scale(c64(2.0, 0.0)))
        .add(&k4);
    Ok(psi.add(&sum.scale(c64(dt / 6.0, 0.0))).trim(CLEAN_TOL))
}

/// Carries `Ψ` from `z₀` to `z₀ + e` (t ∈ [0, 1]) with step doubling.
pub fn integrate_segment(
    mu: &Potential,
    psi0: &LaurentLoop,
    z0: C64,
    e: C64,
    opts: &IntegrateOptions,
) -> Result<LaurentLoop> {
    let mut gen = SegmentGenerator {
        mu,
        z0,
        e,
        cache: HashMap::new(),
    };
    let mut steps = 1usize;
    let mut halvings = 0;
    loop {
        let dt = 1.0 / steps as f64;
        let mut psi = psi0.clone();
        let mut worst: f64 = 0.0;
        for s in 0..steps {
            let t = s as f64 * dt;
            let full = rk4_step(&mut gen, &psi, t, dt)?;
            let mid = rk4_step(&mut gen, &psi, t, 0.5 * dt)?;
            let two = rk4_step(&mut gen, &mid, t + 0.5 * dt, 0.5 * dt)?;
            let err = two.sub(&full).l1_norm() / two.l1_norm().max(1.0);
            worst = worst.max(err);
            if worst > opts.step_tol {
                break;
            }
            // Local extrapolation of the doubled step.
            psi = two
                .add(&two.sub(&full).scale(c64(1.0 / 15.0, 0.0)))
                .trim(CLEAN_TOL);
        }
        if worst <= opts.step_tol {
            return Ok(psi);
        }
        if halvings >= opts.max_halvings {
            return Err(Error::Integration {
                z: z0,
                reason: format!(
                    "local error {worst:.3e} above {:.1e} after {halvings} halvings",
                    opts.step_tol
                ),
            });
        }
        halvings += 1;
        steps *= 2;
    }
}

fn integrate_rk4(mu: &Potential, grid: &Grid, opts: &IntegrateOptions) -> Result<Integration> {
    let n = mu.n();
    let trunc = mu.trunc();
    let m = grid.samples;
    let h = grid.spacing();
    let (ai, aj) = grid.anchor();
    let za = grid.point(ai, aj);
    let id = LaurentLoop::identity(n, trunc);
    let at_anchor = if za.norm() == 0.0 {
        id
    } else {
        integrate_segment(mu, &id, c64(0.0, 0.0), za, opts)?
    };

    // The row through the anchor, outward in both directions.
    let mut row: Vec<Option<LaurentLoop>> = vec![None; m];
    row[ai] = Some(at_anchor);
    for i in ai + 1..m {
        let prev = row[i - 1].as_ref().unwrap();
        let next = integrate_segment(mu, prev, grid.point(i - 1, aj), c64(h, 0.0), opts)
            .map_err(|e| e.at(i, aj, grid.point(i, aj)))?;
        row[i] = Some(next);
    }
    for i in (0..ai).rev() {
        let prev = row[i + 1].as_ref().unwrap();
        let next = integrate_segment(mu, prev, grid.point(i + 1, aj), c64(-h, 0.0), opts)
            .map_err(|e| e.at(i, aj, grid.point(i, aj)))?;
        row[i] = Some(next);
    }

    // Columns are independent.
    let columns: Vec<Vec<LaurentLoop>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut col: Vec<Option<LaurentLoop>> = vec![None; m];
            col[aj] = row[i].clone();
            for j in aj + 1..m {
                let prev = col[j - 1].as_ref().unwrap();
                col[j] = Some(
                    integrate_segment(mu, prev, grid.point(i, j - 1), c64(0.0, h), opts)
                        .map_err(|e| e.at(i, j, grid.point(i, j)))?,
                );
            }
            for j in (0..aj).rev() {
                let prev = col[j + 1].as_ref().unwrap();
                col[j] = Some(
                    integrate_segment(mu, prev, grid.point(i, j + 1), c64(0.0, -h), opts)
                        .map_err(|e| e.at(i, j, grid.point(i, j)))?,
                );
            }
            Ok(col.into_iter().map(Option::unwrap).collect())
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(m * m);
    for col in columns {
        values.extend(col);
    }
    let psi = Field {
        grid: *grid,
        values,
    };

    let holonomy_defect = if opts.certificate {
        let edges: Vec<(usize, usize)> = (0..m - 1)
            .flat_map(|i| (0..m).filter(move |&j| j != aj).map(move |j| (i, j)))
            .collect();
        let defects = edges
            .par_iter()
            .map(|&(i, j)| {
                let carried =
                    integrate_segment(mu, psi.at(i, j), grid.point(i, j), c64(h, 0.0), opts)?;
                Ok(carried.sub(psi.at(i + 1, j)).l1_norm() / psi.at(i + 1, j).l1_norm().max(1.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        defects.into_iter().fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(Integration {
        psi,
        method: Method::Rk4,
        holonomy_defect,
        truncation_loss: 0.0,
    })
}

/// `Ψ`, `Φ` and `b` with the worst factorization diagnostics over the grid.
#[derive(Clone, Debug)]
pub struct ExtendedSolution {
    pub psi: LoopField,
    pub phi: LoopField,
    pub b: LoopField,
    pub integration_method: Method,
    pub holonomy_defect: f64,
    /// Worst `sup_{S¹}‖Ψ − Φb‖` bound over the grid.
    pub reconstruction: f64,
    pub unitary_defect: f64,
    pub based_defect: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineOptions {
    pub integrate: IntegrateOptions,
    pub iwasawa: IwasawaOptions,
}

/// Pointwise Iwasawa split of a field of loops.
pub fn factor_field(
    psi: &LoopField,
    opts: &IwasawaOptions,
) -> Result<(LoopField, LoopField, [f64; 3])> {
    let parts = psi.try_map(|_, _, l| iwasawa_with(l, opts))?;
    let mut worst = [0.0f64; 3];
    for it in &parts.values {
        worst[0] = worst[0].max(it.residual);
        worst[1] = worst[1].max(it.unitary_defect);
        worst[2] = worst[2].max(it.based_defect);
    }
    let phi = Field {
        grid: psi.grid,
        values: parts.values.iter().map(|it| it.phi.clone()).collect(),
    };
    let b = Field {
        grid: psi.grid,
        values: parts.values.into_iter().map(|it| it.b).collect(),
    };
    Ok((phi, b, worst))
}

pub fn extended_solution(
    mu: &Potential,
    grid: &Grid,
    opts: &PipelineOptions,
) -> Result<ExtendedSolution> {
    let integ = integrate_potential(mu, grid, &opts.integrate)?;
    let iw = IwasawaOptions {
        trunc: mu.trunc(),
        ..opts.iwasawa
    };
    let (phi, b, worst) = factor_field(&integ.psi, &iw)?;
    Ok(ExtendedSolution {
        psi: integ.psi,
        phi,
        b,
        integration_method: integ.method,
        holonomy_defect: integ.holonomy_defect,
        reconstruction: worst[0],
        unitary_defect: worst[1],
        based_defect: worst[2],
    })
}

/// `φ = Φ(−1)`.
pub fn harmonic_map(phi: &LoopField) -> MapField {
    phi.map(|_, _, l| l.eval(c64(-1.0, 0.0)).expect("λ = −1 is nonzero"))
}

/// The `dz`-coefficient of `α′ = −Ad_{b₀}(ξ₋₁)`.
pub fn alpha_prime(b: &LoopField, mu: &Potential) -> Result<MapField> {
    b.try_map(|i, j, l| {
        let b0 = l.coeff(0);
        let inv = checked_inverse(&b0, DEFAULT_COND_CAP)
            .map_err(|_| Error::Factorization("b₀ is singular".into()))?;
        let x = mu.xi_minus_one(b.grid.point(i, j))?;
        Ok(-(b0 * x * inv))
    })
}

/// Defects of `Φ⁻¹dΦ = (1 − λ⁻¹)α′ + (1 − λ)α″` at interior points.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExtendedReport {
    /// Mass of `Φ⁻¹∂Φ` outside `{−1, 0}` plus that of `Φ⁻¹∂̄Φ` outside `{0, 1}`.
    pub support: Stat,
    /// `‖L₀ + L₋₁‖ + ‖L̄₀ + L̄₁‖`.
    pub structural: Stat,
    /// `‖L̄₀ + L₀*‖`, i.e. `α″ = −(α′)*`.
    pub conjugacy: Stat,
}

impl ExtendedReport {
    pub fn worst(&self) -> f64 {
        self.support
            .max
            .max(self.structural.max)
            .max(self.conjugacy.max)
    }
}

fn mass_outside(l: &LaurentLoop, lo: i32, hi: i32) -> f64 {
    (l.kmin()..=l.kmax())
        .filter(|&k| k < lo || k > hi)
        .map(|k| l.coeff(k).norm())
        .sum()
}

/// `Φ⁻¹∂Φ` and `Φ⁻¹∂̄Φ` at an interior point (`Φ⁻¹ = Φ†` on S¹).
pub fn maurer_cartan(phi: &LoopField, i: usize, j: usize) -> (LaurentLoop, LaurentLoop) {
    let inv = phi.at(i, j).adjoint_circle();
    (inv.mul_full(&phi.dz(i, j)), inv.mul_full(&phi.dzbar(i, j)))
}

pub fn verify_extended_solution(phi: &LoopField) -> ExtendedReport {
    let g = phi.grid;
    let per_point: Vec<((usize, usize), [f64; 3])> = (0..g.len())
        .map(|idx| g.coords(idx))
        .filter(|&(i, j)| g.is_interior(i, j, FD_MARGIN))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            let (l, lb) = maurer_cartan(phi, i, j);
            let support = mass_outside(&l, -1, 0) + mass_outside(&lb, 0, 1);
            let structural = (l.coeff(0) + l.coeff(-1)).norm() + (lb.coeff(0) + lb.coeff(1)).norm();
            let conjugacy = (lb.coeff(0) + l.coeff(0).adjoint()).norm();
            ((i, j), [support, structural, conjugacy])
        })
        .collect();
    let pick = |k: usize| Stat::collect(per_point.iter().map(|(p, v)| (*p, v[k])));
    ExtendedReport {
        support: pick(0),
        structural: pick(1),
        conjugacy: pick(2),
    }
}

/// `‖∂̄b + (1 − λ)α″b − bζ‖` with `α″ = Φ⁻¹∂̄Φ|_{λ⁰}`; vanishes because
/// `Ψ = Φb` and `Ψ⁻¹∂̄Ψ = ζ`.
pub fn plus_factor_defect(phi: &LoopField, b: &LoopField, zeta: Option<&LoopField>) -> Stat {
    Stat::over(&phi.grid, FD_MARGIN, |i, j| {
        let (_, lb) = maurer_cartan(phi, i, j);
        let a2 = lb.coeff(0);
        let n = a2.nrows();
        let t = b.at(i, j).trunc();
        let one_minus_lambda = LaurentLoop::constant(&a2, t).sub(&LaurentLoop::monomial(1, &a2, t));
        let mut r = b.dzbar(i, j).add(&one_minus_lambda.mul_full(b.at(i, j)));
        if let Some(zeta) = zeta {
            r = r.sub(&b.at(i, j).mul_full(zeta.at(i, j)));
        }
        debug_assert_eq!(r.n(), n);
        r.l1_norm()
    })
}

/// Residual of `∂̄(φ⁻¹∂φ) + ∂(φ⁻¹∂̄φ)` by nested differences.
pub fn verify_harmonic(phi: &MapField) -> Result<Stat> {
    let g = phi.grid;
    let n = phi.values[0].nrows();
    let parts = tabulate(g, |i, j, _| {
        if !g.is_interior(i, j, FD_MARGIN) {
            return Ok((ComplexMatrix::zeros(n, n), ComplexMatrix::zeros(n, n)));
        }
        let inv = checked_inverse(phi.at(i, j), DEFAULT_COND_CAP)?;
        Ok((&inv * phi.dz(i, j), inv * phi.dzbar(i, j)))
    });
    let mut a = Vec::with_capacity(g.len());
    let mut b = Vec::with_capacity(g.len());
    for v in parts.values {
        let (x, y) = v?;
        a.push(x);
        b.push(y);
    }
    let a = Field { grid: g, values: a };
    let b = Field { grid: g, values: b };
    Ok(Stat::over(&g, 2 * FD_MARGIN, |i, j| {
        (a.dzbar(i, j) + b.dz(i, j)).norm()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{identity, unit};

    #[test]
    fn zero_potential_gives_identity() {
        let grid = Grid::centered(0.5, 9);
        let mu = Potential::zero(2, 16);
        let ext = extended_solution(&mu, &grid, &PipelineOptions::default()).unwrap();
        let id = LaurentLoop::identity(2, 16);
        for v in ext
            .psi
            .values
            .iter()
            .chain(&ext.phi.values)
            .chain(&ext.b.values)
        {
            assert!(v.coeff_distance(&id) < 1e-12);
        }
        let phi = harmonic_map(&ext.phi);
        assert!(phi.values.iter().all(|m| (m - identity(2)).norm() < 1e-12));
        assert!(verify_extended_solution(&ext.phi).worst() < 1e-12);
    }

    #[test]
    fn nilpotent_exponential_is_exact() {
        let grid = Grid::centered(0.5, 5);
        let n = unit(2, 0, 1);
        let mu = Potential::constant(LaurentLoop::monomial(-1, &n, 16));
        for method in [Method::Exact, Method::Rk4] {
            let opts = IntegrateOptions {
                method,
                ..Default::default()
            };
            let psi = integrate_potential(&mu, &grid, &opts).unwrap().psi;
            for (i, j, z) in grid.points() {
                let expected =
                    LaurentLoop::identity(2, 16).add(&LaurentLoop::monomial(-1, &(&n * z), 16));
                assert!(psi.at(i, j).coeff_distance(&expected) < 1e-13, "{method:?}");
            }
        }
    }

    #[test]
    fn plus_valued_potential_has_trivial_unitary_part() {
        let grid = Grid::centered(0.5, 5);
        let a = crate::matrix::from_real(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        let xi = LaurentLoop::constant(&a, 32).add(&LaurentLoop::monomial(1, &unit(2, 1, 1), 32));
        let ext = extended_solution(&Potential::constant(xi), &grid, &PipelineOptions::default())
            .unwrap();
        for idx in 0..grid.len() {
            assert!(ext.phi.values[idx].coeff_distance(&LaurentLoop::identity(2, 32)) < 1e-9);
            assert!(ext.b.values[idx].coeff_distance(&ext.psi.values[idx]) < 1e-9);
        }
    }

    #[test]
    fn rotation_by_modulus_squared_is_not_harmonic() {
        let grid = Grid::centered(0.5, 33);
        let phi = tabulate(grid, |_, _, z| {
            let t = z.norm_sqr();
            crate::matrix::from_real(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
        });
        assert!(verify_harmonic(&phi).unwrap().max > 1e-2);
    }
}
