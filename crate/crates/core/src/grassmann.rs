//! Grassmannian model: Cartan embedding, second fundamental forms, Gauss
//! bundles and unitons, all phrased through Hermitian projections.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::dpw::{extended_solution, harmonic_map, ExtendedSolution, PipelineOptions};
use crate::error::{Error, Result};
use crate::grid::{
    d_z, d_zbar, tabulate, try_tabulate, Field, Grid, LoopField, MapField, Stat, SubbundleField,
    FD_MARGIN,
};
use crate::laurent::LaurentLoop;
use crate::matrix::{
    c64, checked_inverse, commutator, hermitian_projection, identity, svd_image, symmetrize, zeros,
    ComplexMatrix, DEFAULT_COND_CAP,
};
use crate::potential::{constant_uniton, gauge_action, FiniteTypePotential, PolyFrame, Potential};

/// `Q₀ = π₀ − π₀⊥` for the basepoint `V₀` spanned by `frame`.
pub fn basepoint_involution(frame: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = frame.nrows();
    if frame.ncols() == 0 {
        return Ok(-identity(n));
    }
    let p = hermitian_projection(frame)?;
    Ok(&p * c64(2.0, 0.0) - identity(n))
}

fn check_q0(q0: &ComplexMatrix, n: usize) -> Result<()> {
    if q0.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Q₀ is {}×{}, bundle lives in ℂ^{n}",
            q0.nrows(),
            q0.ncols()
        )));
    }
    Ok(())
}

/// `φ = Q₀(π_ψ − π_ψ⊥)`.
pub fn cartan_embed(psi: &SubbundleField, q0: &ComplexMatrix) -> Result<MapField> {
    let n = psi.n();
    check_q0(q0, n)?;
    let two = c64(2.0, 0.0);
    Ok(Field {
        grid: psi.grid,
        values: psi
            .projections
            .iter()
            .map(|p| q0 * (p * two - identity(n)))
            .collect(),
    })
}

/// `‖(Q₀φ)² − I‖ + ‖Q₀φ − (Q₀φ)*‖` at every grid point.
pub fn involution_defect(phi: &MapField, q0: &ComplexMatrix) -> Stat {
    let n = q0.nrows();
    Stat::over(&phi.grid, 0, |i, j| {
        let s = q0 * phi.at(i, j);
        (&s * &s - identity(n)).norm() + (&s - s.adjoint()).norm()
    })
}

/// `π_ψ = ½(I + Q₀φ)`. Points whose rank differs from the most common one
/// are flagged.
pub fn cartan_invert(phi: &MapField, q0: &ComplexMatrix, tol: f64) -> Result<SubbundleField> {
    let n = q0.nrows();
    check_q0(q0, phi.values[0].nrows())?;
    let defect = involution_defect(phi, q0);
    if defect.max > tol {
        return Err(Error::NotGrassmannian {
            defect: defect.max,
            tol,
        });
    }
    let half = c64(0.5, 0.0);
    let projections: Vec<ComplexMatrix> = phi
        .values
        .iter()
        .map(|m| symmetrize(&((identity(n) + q0 * m) * half)))
        .collect();
    let ranks: Vec<usize> = projections
        .iter()
        .map(|p| p.trace().re.round().max(0.0) as usize)
        .collect();
    let mut counts = vec![0usize; n + 1];
    for &r in &ranks {
        counts[r.min(n)] += 1;
    }
    let rank = (0..=n)
        .max_by_key(|&r| (counts[r], std::cmp::Reverse(r)))
        .unwrap_or(0);
    let flags = ranks.iter().map(|&r| r != rank).collect();
    Ok(SubbundleField::with_flags(
        phi.grid,
        rank,
        projections,
        flags,
    ))
}

/// `A′ = π⊥(∂π)π` and `A″ = π⊥(∂̄π)π`. Zero outside the stencil interior.
#[derive(Clone, Debug)]
pub struct FundamentalForms {
    pub a_prime: MapField,
    pub a_second: MapField,
    pub margin: usize,
}

fn forms_at(
    pi: &ComplexMatrix,
    d: &ComplexMatrix,
    db: &ComplexMatrix,
) -> (ComplexMatrix, ComplexMatrix) {
    let perp = identity(pi.nrows()) - pi;
    (&perp * d * pi, perp * db * pi)
}

fn fd_forms(psi: &SubbundleField, margin: usize) -> FundamentalForms {
    let g = psi.grid;
    let n = psi.n();
    let h = g.spacing();
    let inner = margin + FD_MARGIN;
    let vals = tabulate(g, |i, j, _| {
        if !g.is_interior(i, j, inner) {
            return (zeros(n, n), zeros(n, n));
        }
        let f = |a: usize, b: usize| psi.at(a, b).clone();
        forms_at(psi.at(i, j), &d_z(f, i, j, h), &d_zbar(f, i, j, h))
    });
    split_forms(g, vals.values, inner)
}

fn split_forms(
    grid: Grid,
    vals: Vec<(ComplexMatrix, ComplexMatrix)>,
    margin: usize,
) -> FundamentalForms {
    let (a, b): (Vec<_>, Vec<_>) = vals.into_iter().unzip();
    FundamentalForms {
        a_prime: Field { grid, values: a },
        a_second: Field { grid, values: b },
        margin,
    }
}

/// Second fundamental forms: from the exact jet when `ψ` carries a
/// holomorphic frame, otherwise by sixth-order centered differences of `π`.
pub fn second_fundamental_forms(psi: &SubbundleField) -> FundamentalForms {
    match &psi.frame {
        Some(f) => {
            second_fundamental_forms_exact(f, &psi.grid).unwrap_or_else(|_| fd_forms(psi, 0))
        }
        None => fd_forms(psi, 0),
    }
}

/// Always by finite differences, ignoring any frame.
pub fn second_fundamental_forms_fd(psi: &SubbundleField) -> FundamentalForms {
    fd_forms(psi, 0)
}

/// The same forms from the exact jet of a holomorphic frame; `A″ = 0`
/// identically up to rounding.
pub fn second_fundamental_forms_exact(frame: &PolyFrame, grid: &Grid) -> Result<FundamentalForms> {
    let vals = try_tabulate(*grid, |_, _, z| {
        let jet = frame.projection_jet(z)?;
        Ok(forms_at(&jet.pi, &jet.d_pi, &jet.dbar_pi()))
    })?;
    Ok(split_forms(*grid, vals.values, 0))
}

/// `‖A′_ψ + (A″_{ψ⊥})*‖`, each side differenced independently.
pub fn adjoint_duality_defect(psi: &SubbundleField) -> Stat {
    let f = second_fundamental_forms(psi);
    let g = second_fundamental_forms(&psi.complement());
    Stat::over(&psi.grid, f.margin, |i, j| {
        (f.a_prime.at(i, j) + g.a_second.at(i, j).adjoint()).norm()
    })
}

/// `A′_ψ + A′_{ψ⊥}` at interior points (zero elsewhere).
pub fn pullback_form(psi: &SubbundleField) -> MapField {
    let f = second_fundamental_forms(psi);
    let g = second_fundamental_forms(&psi.complement());
    Field {
        grid: psi.grid,
        values: f
            .a_prime
            .values
            .iter()
            .zip(&g.a_prime.values)
            .map(|(a, b)| a + b)
            .collect(),
    }
}

/// `‖½φ⁻¹∂φ + A′_ψ + A′_{ψ⊥}‖` over the interior.
pub fn derivative_identity_check(psi: &SubbundleField, phi: &MapField) -> Result<Stat> {
    let pb = pullback_form(psi);
    let inv = phi.try_map(|_, _, m| checked_inverse(m, DEFAULT_COND_CAP))?;
    Ok(Stat::over(&psi.grid, FD_MARGIN, |i, j| {
        (inv.at(i, j) * phi.dz(i, j) * c64(0.5, 0.0) + pb.at(i, j)).norm()
    }))
}

/// `‖A′_ψ + A′_{ψ⊥} − Ad_{b₀}(η_{−d})‖` for a finite-type potential.
pub fn forms_sum_defect(
    psi: &SubbundleField,
    b: &LoopField,
    ft: &FiniteTypePotential,
) -> Result<Stat> {
    let pb = pullback_form(psi);
    let eta = ft.eta_minus_d();
    let ad = b.try_map(|_, _, l| {
        let b0 = l.coeff(0);
        let inv = checked_inverse(&b0, DEFAULT_COND_CAP)?;
        Ok(b0 * &eta * inv)
    })?;
    Ok(Stat::over(&psi.grid, FD_MARGIN, |i, j| {
        (pb.at(i, j) - ad.at(i, j)).norm()
    }))
}

/// `+1` gives `G^{(1)} = Im A′`, `−1` gives `G^{(−1)} = Im A″`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum Direction {
    Forward,
    Backward,
}

impl TryFrom<i32> for Direction {
    type Error = String;
    fn try_from(v: i32) -> std::result::Result<Direction, String> {
        match v {
            1 => Ok(Direction::Forward),
            -1 => Ok(Direction::Backward),
            _ => Err(format!("direction must be 1 or -1, got {v}")),
        }
    }
}

impl From<Direction> for i32 {
    fn from(d: Direction) -> i32 {
        match d {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

/// Relative singular-value threshold for Gauss-bundle ranks.
pub const GAUSS_RANK_TOL: f64 = 1e-6;

/// A Gauss bundle together with its rank data.
#[derive(Clone, Debug)]
pub struct GaussBundle {
    /// Flags mark every point whose projection was filled in: rank drops
    /// and points outside `margin`.
    pub bundle: SubbundleField,
    pub generic_rank: usize,
    /// Interior points where the rank falls below the generic rank.
    pub rank_drops: Vec<(usize, usize)>,
    /// `min σ_k / scale` over the interior, `k` the generic rank and `scale`
    /// the largest norm of either form.
    pub min_sigma: f64,
    /// Points within this distance of the edge carry filled values.
    pub margin: usize,
}

fn singular(a: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let mut f = zeros(a.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        f.set_column(c, &u.column(i));
    }
    (order.iter().map(|&i| svd.singular_values[i]).collect(), f)
}

/// Fill flagged entries with the nearest unflagged one (index distance,
/// ties broken by scan order).
fn nearest_fill(grid: &Grid, values: &mut [ComplexMatrix], good: &[bool]) -> Result<()> {
    let donors: Vec<usize> = (0..values.len()).filter(|&k| good[k]).collect();
    if donors.is_empty() {
        return Err(Error::RankDeficient {
            expected: 1,
            found: 0,
        });
    }
    for k in 0..values.len() {
        if good[k] {
            continue;
        }
        let (i, j) = grid.coords(k);
        let best = donors
            .iter()
            .copied()
            .min_by_key(|&d| {
                let (a, b) = grid.coords(d);
                (a as i64 - i as i64).pow(2) + (b as i64 - j as i64).pow(2)
            })
            .expect("donors is nonempty");
        values[k] = values[best].clone();
    }
    Ok(())
}

/// Largest interior singular value among the given forms.
fn form_scale(forms: &[&MapField], margin: usize) -> f64 {
    forms
        .iter()
        .map(|f| Stat::over(&f.grid, margin, |i, j| f.at(i, j).norm()).max)
        .fold(0.0, f64::max)
}

/// Image of `forms` with singular values counted above `rank_tol · scale`.
fn image_bundle(forms: &MapField, margin: usize, rank_tol: f64, scale: f64) -> Result<GaussBundle> {
    let g = forms.grid;
    let n = forms.values[0].nrows();
    let interior: Vec<bool> = (0..g.len())
        .map(|k| {
            let (i, j) = g.coords(k);
            g.is_interior(i, j, margin)
        })
        .collect();
    if !interior.iter().any(|&b| b) {
        return Err(Error::InvalidInput(
            "grid has no interior points for the stencil".into(),
        ));
    }
    let svds = tabulate(g, |i, j, _| singular(forms.at(i, j)));
    let thresh = rank_tol * scale;
    let rank_of = |s: &[f64]| {
        if scale == 0.0 {
            0
        } else {
            s.iter().filter(|&&x| x > thresh).count()
        }
    };
    let generic = svds
        .values
        .iter()
        .zip(&interior)
        .filter(|(_, &ok)| ok)
        .map(|(s, _)| rank_of(&s.0))
        .max()
        .unwrap_or(0);
    let mut projections = Vec::with_capacity(g.len());
    let mut good = Vec::with_capacity(g.len());
    let mut drops = Vec::new();
    let mut min_sigma = f64::INFINITY;
    for (k, (s, u)) in svds.values.iter().enumerate() {
        let ok = interior[k] && rank_of(s) == generic;
        if interior[k] && !ok {
            drops.push(g.coords(k));
        }
        if interior[k] && generic > 0 && scale > 0.0 {
            min_sigma = min_sigma.min(s[generic - 1] / scale);
        }
        let frame = u.columns(0, generic).into_owned();
        projections.push(&frame * frame.adjoint());
        good.push(ok);
    }
    if generic == 0 {
        min_sigma = 0.0;
        let bundle =
            SubbundleField::with_flags(g, 0, vec![zeros(n, n); g.len()], vec![true; g.len()]);
        return Ok(GaussBundle {
            bundle,
            generic_rank: 0,
            rank_drops: drops,
            min_sigma,
            margin,
        });
    }
    nearest_fill(&g, &mut projections, &good)?;
    let flags = good.iter().map(|&b| !b).collect();
    Ok(GaussBundle {
        bundle: SubbundleField::with_flags(g, generic, projections, flags),
        generic_rank: generic,
        rank_drops: drops,
        min_sigma,
        margin,
    })
}

/// `G^{(±1)}(ψ)`: the image of `A′` or `A″`, extended across rank drops.
pub fn gauss_bundle(
    psi: &SubbundleField,
    direction: Direction,
    rank_tol: f64,
) -> Result<GaussBundle> {
    gauss_bundle_inner(psi, direction, rank_tol, 0)
}

fn gauss_bundle_inner(
    psi: &SubbundleField,
    direction: Direction,
    rank_tol: f64,
    margin: usize,
) -> Result<GaussBundle> {
    let f = fd_forms(psi, margin);
    let forms = match direction {
        Direction::Forward => &f.a_prime,
        Direction::Backward => &f.a_second,
    };
    // Both forms set the scale, so a form that vanishes up to truncation
    // error gets rank 0.
    let scale = form_scale(&[&f.a_prime, &f.a_second], f.margin);
    image_bundle(forms, f.margin, rank_tol, scale)
}

/// `G^{(±1)}, G^{(±2)}, …` up to `steps`. Each step loses a stencil width
/// of valid points; iteration stops early once a bundle has rank 0.
pub fn gauss_iterate(
    psi: &SubbundleField,
    direction: Direction,
    steps: usize,
    rank_tol: f64,
) -> Result<Vec<GaussBundle>> {
    let mut out: Vec<GaussBundle> = Vec::new();
    for _ in 0..steps {
        let (src, margin) = match out.last() {
            Some(b) if b.generic_rank == 0 => break,
            Some(b) => (&b.bundle, b.margin),
            None => (psi, 0),
        };
        let next = gauss_bundle_inner(src, direction, rank_tol, margin)?;
        out.push(next);
    }
    Ok(out)
}

/// `ℓ = ker A′_{ψ⊥}` as a subbundle of `ψ⊥`; adding it as a uniton yields
/// `G^{(−1)}(ψ)`.
pub fn backward_uniton(psi: &SubbundleField, rank_tol: f64) -> Result<SubbundleField> {
    let g = second_fundamental_forms(&psi.complement());
    let n = psi.n();
    let perp_frames: Vec<ComplexMatrix> = psi
        .projections
        .iter()
        .map(|p| svd_image(&(identity(n) - p), 0.5).map(|x| x.1))
        .collect::<Result<_>>()?;
    let restricted = Field {
        grid: psi.grid,
        values: g
            .a_prime
            .values
            .iter()
            .zip(&perp_frames)
            .map(|(a, f)| a * f)
            .collect(),
    };
    // Kernel of A restricted to ψ⊥ = ψ⊥ ⊖ image of A*.
    let adj = restricted.map(|_, _, m| m.adjoint());
    let scale = form_scale(&[&g.a_prime, &g.a_second], g.margin);
    let img = image_bundle(&adj, g.margin, rank_tol, scale)?;
    let projections = img
        .bundle
        .projections
        .iter()
        .zip(&perp_frames)
        .map(|(q, f)| {
            let k = identity(f.ncols()) - q;
            symmetrize(&(f * k * f.adjoint()))
        })
        .collect();
    Ok(SubbundleField::with_flags(
        psi.grid,
        n - psi.rank - img.generic_rank,
        projections,
        img.bundle.flags,
    ))
}

/// Max defects of the uniton conditions over the interior.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UnitonReport {
    /// `‖π̂⊥A_zπ̂‖`.
    pub cond_a: Stat,
    /// `‖π̂⊥(∂̄π̂ + A_z̄π̂)‖`.
    pub cond_b: Stat,
    /// `‖[φ, π̂]‖`, only meaningful for Grassmannian targets.
    pub commutation: Stat,
}

/// Conditions with `A_z dz + A_z̄ dz̄ = ½φ⁻¹dφ`.
pub fn uniton_condition_check(pi_hat: &SubbundleField, phi: &MapField) -> Result<UnitonReport> {
    if pi_hat.grid != phi.grid {
        return Err(Error::InvalidInput(
            "uniton and map live on different grids".into(),
        ));
    }
    let n = pi_hat.n();
    let inv = phi.try_map(|_, _, m| checked_inverse(m, DEFAULT_COND_CAP))?;
    let h = pi_hat.grid.spacing();
    let half = c64(0.5, 0.0);
    let per: Field<[f64; 2]> = tabulate(pi_hat.grid, |i, j, _| {
        if !pi_hat.grid.is_interior(i, j, FD_MARGIN) {
            return [0.0; 2];
        }
        let p = pi_hat.at(i, j);
        let perp = identity(n) - p;
        let az = inv.at(i, j) * phi.dz(i, j) * half;
        let azb = inv.at(i, j) * phi.dzbar(i, j) * half;
        let dbp = d_zbar(|a, b| pi_hat.at(a, b).clone(), i, j, h);
        [(&perp * az * p).norm(), (&perp * (dbp + azb * p)).norm()]
    });
    Ok(UnitonReport {
        cond_a: Stat::over(&pi_hat.grid, FD_MARGIN, |i, j| per.at(i, j)[0]),
        cond_b: Stat::over(&pi_hat.grid, FD_MARGIN, |i, j| per.at(i, j)[1]),
        commutation: Stat::over(&pi_hat.grid, 0, |i, j| {
            commutator(phi.at(i, j), pi_hat.at(i, j)).norm()
        }),
    })
}

/// `Φ(π̂ + λπ̂⊥)`, left-multiplied by `π̂₀ + λ⁻¹π̂₀⊥` when `π̂₀` is given.
pub fn add_uniton_unchecked(
    phi: &LoopField,
    pi_hat: &SubbundleField,
    pi_hat0: Option<&ComplexMatrix>,
) -> Result<LoopField> {
    phi.try_map(|i, j, l| {
        let t = l.trunc();
        let right = LaurentLoop::projection_loop(pi_hat.at(i, j), 1, t);
        let mut out = l.mul_full(&right);
        if let Some(p0) = pi_hat0 {
            out = LaurentLoop::projection_loop(p0, -1, t).mul_full(&out);
        }
        Ok(out.with_trunc(t))
    })
}

/// As [`add_uniton_unchecked`], refusing when either uniton condition
/// exceeds `tol`.
pub fn add_uniton(
    phi: &LoopField,
    pi_hat: &SubbundleField,
    pi_hat0: Option<&ComplexMatrix>,
    tol: f64,
) -> Result<LoopField> {
    let r = uniton_condition_check(pi_hat, &harmonic_map(phi))?;
    if r.cond_a.max > tol || r.cond_b.max > tol {
        return Err(Error::UnitonConditions {
            cond_a: r.cond_a.max,
            cond_b: r.cond_b.max,
            tol,
        });
    }
    add_uniton_unchecked(phi, pi_hat, pi_hat0)
}

/// `b₀ℓ` for a holomorphic frame of `ℓ`.
pub fn transported_bundle(frame: &PolyFrame, b: &LoopField) -> Result<SubbundleField> {
    let f = b.try_map(|i, j, l| {
        let z = b.grid.point(i, j);
        let jet = frame.projection_jet(z)?;
        let (_, basis) = svd_image(&jet.pi, 0.5)?;
        hermitian_projection(&(l.coeff(0) * basis))
    })?;
    Ok(SubbundleField::from_projections(
        b.grid,
        frame.rank(),
        f.values,
    ))
}

#[derive(Clone, Debug)]
pub struct ConverseReport {
    pub ell: SubbundleField,
    /// `‖π⊥(∂̄π)π‖` of `ℓ = b₀⁻¹ℓ̂`.
    pub dbar_defect: Stat,
    /// `‖π⊥ξ₋₁π‖`.
    pub admissibility: Stat,
}

/// Recover `ℓ = b₀⁻¹ℓ̂` and report whether it is a holomorphic, admissible
/// subbundle for `μ`.
pub fn converse_uniton(
    ell_hat: &SubbundleField,
    b: &LoopField,
    mu: &Potential,
) -> Result<ConverseReport> {
    let n = ell_hat.n();
    let projections = b.try_map(|i, j, l| {
        let inv = checked_inverse(&l.coeff(0), DEFAULT_COND_CAP)?;
        let (_, basis) = svd_image(ell_hat.at(i, j), 0.5)?;
        hermitian_projection(&(inv * basis))
    })?;
    let ell = SubbundleField::with_flags(
        ell_hat.grid,
        ell_hat.rank,
        projections.values,
        ell_hat.flags.clone(),
    );
    let f = second_fundamental_forms(&ell);
    let dbar_defect = Stat::over(&ell.grid, f.margin, |i, j| f.a_second.at(i, j).norm());
    let xs = try_tabulate(ell.grid, |_, _, z| mu.xi_minus_one(z))?;
    let admissibility = Stat::over(&ell.grid, 0, |i, j| {
        let p = ell.at(i, j);
        ((identity(n) - p) * xs.at(i, j) * p).norm()
    });
    Ok(ConverseReport {
        ell,
        dbar_defect,
        admissibility,
    })
}

/// Both sides of `Φ_{γ_ℓ·μ} = (π̂₀ + λ⁻¹π̂₀⊥)Φ_μ(π̂ + λπ̂⊥)` with `ℓ̂ = b₀ℓ`.
#[derive(Clone, Debug)]
pub struct UnitonTheorem {
    pub base: ExtendedSolution,
    pub gauged: ExtendedSolution,
    pub ell_hat: SubbundleField,
    pub added: LoopField,
    /// Pointwise sup over S¹ of `Φ_{γ_ℓ·μ} − added`.
    pub distance: Stat,
    pub conditions: UnitonReport,
    pub converse: ConverseReport,
    /// `‖π_{b₀ℓ'} − π̂‖` for the recovered `ℓ'`.
    pub converse_closure: Stat,
    /// `‖π_{ℓ'} − π_ℓ‖`.
    pub converse_recovery: Stat,
}

pub fn uniton_theorem(
    mu: &Potential,
    frame: &PolyFrame,
    grid: &Grid,
    opts: &PipelineOptions,
) -> Result<UnitonTheorem> {
    let gauge = crate::potential::GaugeMap::Uniton(frame.clone());
    let gauged_mu = gauge_action(&gauge, mu, grid)?;
    let base = extended_solution(mu, grid, opts)?;
    let gauged = extended_solution(&gauged_mu, grid, opts)?;
    let ell_hat = transported_bundle(frame, &base.b)?;
    let (ai, aj) = grid.anchor();
    let pi_hat0 = hermitian_projection(&frame.eval(c64(0.0, 0.0)))?;
    if grid.point(ai, aj).norm() > 0.0 {
        return Err(Error::InvalidInput("the grid must contain z = 0".into()));
    }
    let added = add_uniton_unchecked(&base.phi, &ell_hat, Some(&pi_hat0))?;
    let distance = gauged.phi.distance(&added, 0);
    let conditions = uniton_condition_check(&ell_hat, &harmonic_map(&base.phi))?;
    let converse = converse_uniton(&ell_hat, &base.b, mu)?;
    let back = converse
        .ell
        .projections
        .iter()
        .zip(&base.b.values)
        .map(|(p, b)| {
            let (_, basis) = svd_image(p, 0.5)?;
            hermitian_projection(&(b.coeff(0) * basis))
        });
    let back: Vec<ComplexMatrix> = back.collect::<Result<_>>()?;
    let converse_closure = Stat::over(grid, 0, |i, j| {
        (&back[grid.index(i, j)] - ell_hat.at(i, j)).norm()
    });
    let original = SubbundleField::from_frame(*grid, frame)?;
    let converse_recovery = converse.ell.distance(&original, 0);
    Ok(UnitonTheorem {
        base,
        gauged,
        ell_hat,
        added,
        distance,
        conditions,
        converse,
        converse_closure,
        converse_recovery,
    })
}

/// Both sides of the Gauss-bundle finite-type theorem for a twisted constant
/// potential.
#[derive(Clone, Debug)]
pub struct GaussTheorem {
    pub base: ExtendedSolution,
    pub psi: SubbundleField,
    /// `G^{(−1)}(ψ)` from the second fundamental form.
    pub gauss: GaussBundle,
    /// `ℓ₀`, an orthonormal frame inside `V₀⊥` (possibly empty).
    pub ell0: ComplexMatrix,
    /// Cartan basepoint `(2π_{ℓ₀} − I)Q₀` of the uniton-modified map.
    pub q0_tilde: ComplexMatrix,
    /// The map of `γ_{ℓ₀}·μ` read back as a subbundle.
    pub psi_tilde: SubbundleField,
    pub distance: Stat,
    pub forms_sum: Stat,
    pub involution: Stat,
}

pub fn finite_type_gauss_theorem(
    ft: &FiniteTypePotential,
    grid: &Grid,
    opts: &PipelineOptions,
    tol: f64,
) -> Result<GaussTheorem> {
    let q0 = ft
        .q0
        .clone()
        .ok_or_else(|| Error::InvalidInput("the Gauss-bundle theorem needs Q₀".into()))?;
    let n = q0.nrows();
    let mu = ft.potential();
    let base = extended_solution(&mu, grid, opts)?;
    let phi = harmonic_map(&base.phi);
    let involution = involution_defect(&phi, &q0);
    let psi = cartan_invert(&phi, &q0, tol)?;
    let gauss = gauss_bundle(&psi, Direction::Backward, GAUSS_RANK_TOL)?;
    let ell0 = ft.ker_minus_part()?;
    let (q0_tilde, phi_tilde) = if ell0.ncols() == 0 {
        // γ = λ⁻¹I acts trivially.
        (-q0.clone(), phi)
    } else {
        let gauged = gauge_action(&constant_uniton(&ell0)?, &mu, grid)?;
        let ext = extended_solution(&gauged, grid, opts)?;
        let p = hermitian_projection(&ell0)?;
        (
            (&p * c64(2.0, 0.0) - identity(n)) * &q0,
            harmonic_map(&ext.phi),
        )
    };
    let psi_tilde = cartan_invert(&phi_tilde, &q0_tilde, tol)?;
    let distance = psi_tilde.distance(&gauss.bundle, gauss.margin);
    let forms_sum = forms_sum_defect(&psi, &base.b, ft)?;
    Ok(GaussTheorem {
        base,
        psi,
        gauss,
        ell0,
        q0_tilde,
        psi_tilde,
        distance,
        forms_sum,
        involution,
    })
}
