//! Holomorphic potentials, the gauge action `h·μ = hμh⁻¹ − dh h⁻¹`, uniton
//! gauges `γ_ℓ = π + λ⁻¹π⊥` and constant finite-type potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{try_tabulate, Field, Grid, LoopField, Stat, FD_MARGIN};
use crate::laurent::{LaurentLoop, DEFAULT_TOL};
use crate::matrix::{
    c64, hermitian_projection, identity, kernel_frame, singular_values, svd_image, ComplexMatrix,
    MatrixJson, C64,
};

/// Largest polynomial degree in `z` accepted for potentials, gauges and frames.
pub const MAX_Z_DEGREE: usize = 8;

/// `Σ_j z^j C_j` with loop coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyLoop {
    terms: Vec<LaurentLoop>,
}

impl PolyLoop {
    pub fn new(terms: Vec<LaurentLoop>) -> Result<PolyLoop> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidInput(
                "polynomial needs at least one term".into(),
            ));
        };
        if terms.len() > MAX_Z_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "z-degree above the cap {MAX_Z_DEGREE}"
            )));
        }
        if terms.iter().any(|t| t.n() != first.n()) {
            return Err(Error::Dimension("terms have differing matrix sizes".into()));
        }
        Ok(PolyLoop { terms })
    }

    pub fn constant(l: LaurentLoop) -> PolyLoop {
        PolyLoop { terms: vec![l] }
    }

    pub fn n(&self) -> usize {
        self.terms[0].n()
    }

    pub fn terms(&self) -> &[LaurentLoop] {
        &self.terms
    }

    pub fn eval(&self, z: C64) -> LaurentLoop {
        let mut acc = self.terms.last().unwrap().clone();
        for t in self.terms.iter().rev().skip(1) {
            acc = acc.scale(z).add(t);
        }
        acc
    }

    /// `d/dz` of the polynomial at `z`.
    pub fn deriv(&self, z: C64) -> LaurentLoop {
        if self.terms.len() == 1 {
            return LaurentLoop::zero(self.n(), self.terms[0].trunc());
        }
        let mut acc = self
            .terms
            .last()
            .unwrap()
            .scale(c64((self.terms.len() - 1) as f64, 0.0));
        for (j, t) in self.terms.iter().enumerate().rev().skip(1) {
            if j == 0 {
                break;
            }
            acc = acc.scale(z).add(&t.scale(c64(j as f64, 0.0)));
        }
        acc
    }

    pub fn as_constant(&self) -> Option<&LaurentLoop> {
        if self.terms.len() == 1 {
            Some(&self.terms[0])
        } else {
            None
        }
    }

    /// Largest coefficient norm below frequency `k` over all terms.
    pub fn mass_below(&self, k: i32) -> f64 {
        self.terms
            .iter()
            .map(|t| t.mass_below(k))
            .fold(0.0, f64::max)
    }
}

/// Holomorphic polynomial frame `F(z) = Σ_j z^j F_j` (`n × k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFrame {
    terms: Vec<ComplexMatrix>,
}

/// `π(z)` and `∂π(z)` of a frame's Hermitian projection; `∂̄π = (∂π)*`.
#[derive(Clone, Debug)]
pub struct ProjectionJet {
    pub pi: ComplexMatrix,
    pub d_pi: ComplexMatrix,
    /// The frame drops rank here; values are limits from neighbouring points.
    pub flagged: bool,
}

impl ProjectionJet {
    pub fn dbar_pi(&self) -> ComplexMatrix {
        self.d_pi.adjoint()
    }
}

/// Relative singular-value threshold below which a frame is treated as
/// rank-deficient at a point.
pub const FRAME_DROP_TOL: f64 = 1e-8;
const LIMIT_OFFSET: f64 = 1e-4;

impl PolyFrame {
    pub fn new(terms: Vec<ComplexMatrix>) -> Result<PolyFrame> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidInput("frame needs at least one term".into()));
        };
        if terms.len() > MAX_Z_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "z-degree above the cap {MAX_Z_DEGREE}"
            )));
        }
        let (n, k) = first.shape();
        if k == 0 || k > n {
            return Err(Error::Dimension(format!("frame shape {n}×{k}")));
        }
        if terms.iter().any(|t| t.shape() != (n, k)) {
            return Err(Error::Dimension("frame terms have differing shapes".into()));
        }
        Ok(PolyFrame { terms })
    }

    pub fn constant(f: ComplexMatrix) -> Result<PolyFrame> {
        PolyFrame::new(vec![f])
    }

    pub fn n(&self) -> usize {
        self.terms[0].nrows()
    }

    pub fn rank(&self) -> usize {
        self.terms[0].ncols()
    }

    pub fn terms(&self) -> &[ComplexMatrix] {
        &self.terms
    }

    pub fn eval(&self, z: C64) -> ComplexMatrix {
        let mut acc = self.terms.last().unwrap().clone();
        for t in self.terms.iter().rev().skip(1) {
            acc = acc * z + t;
        }
        acc
    }

    pub fn deriv(&self, z: C64) -> ComplexMatrix {
        let (n, k) = self.terms[0].shape();
        let mut acc = ComplexMatrix::zeros(n, k);
        for j in (1..self.terms.len()).rev() {
            acc = acc * z + &self.terms[j] * c64(j as f64, 0.0);
        }
        acc
    }

    /// Left multiplication of every coefficient by a constant matrix.
    pub fn left_mul(&self, m: &ComplexMatrix) -> PolyFrame {
        PolyFrame {
            terms: self.terms.iter().map(|t| m * t).collect(),
        }
    }

    fn is_degenerate(&self, f: &ComplexMatrix) -> bool {
        let s = singular_values(f);
        s[0] == 0.0 || s[s.len() - 1] <= FRAME_DROP_TOL * s[0]
    }

    fn exact_jet(&self, z: C64) -> Result<ProjectionJet> {
        let f = self.eval(z);
        let pi = hermitian_projection(&f)?;
        let gram_inv = crate::matrix::checked_inverse(&(f.adjoint() * &f), 1e16)?;
        let n = self.n();
        let d_pi = (identity(n) - &pi) * self.deriv(z) * gram_inv * f.adjoint();
        Ok(ProjectionJet {
            pi,
            d_pi,
            flagged: false,
        })
    }

    /// Exact `π` and `∂π = π⊥F′(F*F)⁻¹F*`. Where `F` drops rank the average of
    /// the values at `z ± δ` is used and the point is flagged.
    pub fn projection_jet(&self, z: C64) -> Result<ProjectionJet> {
        if !self.is_degenerate(&self.eval(z)) {
            return self.exact_jet(z);
        }
        let d = c64(LIMIT_OFFSET, 0.0);
        let (a, b) = (self.exact_jet(z + d)?, self.exact_jet(z - d)?);
        let half = c64(0.5, 0.0);
        Ok(ProjectionJet {
            pi: (a.pi + b.pi) * half,
            d_pi: (a.d_pi + b.d_pi) * half,
            flagged: true,
        })
    }
}

/// Values of `h`, `h⁻¹`, `∂h` and `∂̄h` at a point.
#[derive(Clone, Debug)]
pub struct GaugeJet {
    pub h: LaurentLoop,
    pub h_inv: LaurentLoop,
    pub dh: LaurentLoop,
    pub dbar_h: Option<LaurentLoop>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GaugeMap {
    /// `h(z)` polynomial in `z` with values in `Λ₊`; `∂̄h = 0`.
    Plus(PolyLoop),
    /// `γ_ℓ = π + λ⁻¹π⊥` for the subbundle spanned by a holomorphic frame.
    Uniton(PolyFrame),
}

impl GaugeMap {
    pub fn plus(h: PolyLoop, tol: f64) -> Result<GaugeMap> {
        let neg = h.mass_below(0);
        if neg > tol {
            return Err(Error::InvalidInput(format!(
                "gauge has negative frequencies of size {neg:.3e}"
            )));
        }
        let terms = h.terms.into_iter().map(|t| t.keep_from(0)).collect();
        Ok(GaugeMap::Plus(PolyLoop { terms }))
    }

    pub fn n(&self) -> usize {
        match self {
            GaugeMap::Plus(h) => h.n(),
            GaugeMap::Uniton(f) => f.n(),
        }
    }

    pub fn jet(&self, z: C64, trunc: usize) -> Result<GaugeJet> {
        match self {
            GaugeMap::Plus(p) => {
                let h = p.eval(z);
                let h_inv = h.plus_inverse()?;
                Ok(GaugeJet {
                    dh: p.deriv(z),
                    h,
                    h_inv,
                    dbar_h: None,
                    flagged: false,
                })
            }
            GaugeMap::Uniton(frame) => {
                let jet = frame.projection_jet(z)?;
                let h = LaurentLoop::projection_loop(&jet.pi, -1, trunc);
                let h_inv = LaurentLoop::projection_loop(&jet.pi, 1, trunc);
                // dγ = (1 − λ⁻¹)dπ.
                let one_minus = |m: &ComplexMatrix| {
                    LaurentLoop::constant(m, trunc).sub(&LaurentLoop::monomial(-1, m, trunc))
                };
                Ok(GaugeJet {
                    dh: one_minus(&jet.d_pi),
                    dbar_h: Some(one_minus(&jet.dbar_pi())),
                    h,
                    h_inv,
                    flagged: jet.flagged,
                })
            }
        }
    }

    /// The value `h(z)`; for uniton gauges `π(z) + λ⁻¹π(z)⊥`.
    pub fn eval(&self, z: C64, trunc: usize) -> Result<LaurentLoop> {
        match self {
            GaugeMap::Plus(p) => Ok(p.eval(z)),
            GaugeMap::Uniton(f) => Ok(LaurentLoop::projection_loop(
                &f.projection_jet(z)?.pi,
                -1,
                trunc,
            )),
        }
    }
}

/// `μ = ξ dz + ζ dz̄` at a point.
#[derive(Clone, Debug)]
pub struct PotentialValue {
    pub xi: LaurentLoop,
    pub zeta: Option<LaurentLoop>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    /// `μ = ξ(z) dz` with `ξ` polynomial in `z`.
    Holomorphic(PolyLoop),
    /// `h·μ`, evaluated pointwise from the closed forms of `h` and `μ`.
    Gauged {
        gauge: GaugeMap,
        base: Box<Potential>,
    },
}

impl Potential {
    pub fn zero(n: usize, trunc: usize) -> Potential {
        Potential::Holomorphic(PolyLoop::constant(LaurentLoop::zero(n, trunc)))
    }

    pub fn constant(xi: LaurentLoop) -> Potential {
        Potential::Holomorphic(PolyLoop::constant(xi))
    }

    pub fn polynomial(terms: Vec<LaurentLoop>) -> Result<Potential> {
        let p = PolyLoop::new(terms)?;
        let below = p.mass_below(-1);
        if below > DEFAULT_TOL {
            return Err(Error::InvalidInput(format!(
                "potential has frequencies below −1 of size {below:.3e}"
            )));
        }
        Ok(Potential::Holomorphic(p))
    }

    pub fn n(&self) -> usize {
        match self {
            Potential::Holomorphic(p) => p.n(),
            Potential::Gauged { base, .. } => base.n(),
        }
    }

    pub fn trunc(&self) -> usize {
        match self {
            Potential::Holomorphic(p) => p.terms[0].trunc(),
            Potential::Gauged { base, .. } => base.trunc(),
        }
    }

    /// Whether the `dz̄` part vanishes identically.
    pub fn is_holomorphic(&self) -> bool {
        match self {
            Potential::Holomorphic(_) => true,
            Potential::Gauged {
                gauge: GaugeMap::Plus(_),
                base,
            } => base.is_holomorphic(),
            Potential::Gauged {
                gauge: GaugeMap::Uniton(_),
                ..
            } => false,
        }
    }

    /// `ξ` when the potential is `ξ dz` with `ξ` independent of `z`.
    pub fn constant_xi(&self) -> Option<&LaurentLoop> {
        match self {
            Potential::Holomorphic(p) => p.as_constant(),
            Potential::Gauged { .. } => None,
        }
    }

    pub fn at(&self, z: C64) -> Result<PotentialValue> {
        match self {
            Potential::Holomorphic(p) => Ok(PotentialValue {
                xi: p.eval(z),
                zeta: None,
            }),
            Potential::Gauged { gauge, base } => {
                let v = base.at(z)?;
                let j = gauge.jet(z, self.trunc())?;
                let conj = |m: &LaurentLoop| j.h.mul_t(m).mul_t(&j.h_inv);
                let xi = conj(&v.xi).sub(&j.dh.mul_t(&j.h_inv));
                let zeta = match (&v.zeta, &j.dbar_h) {
                    (None, None) => None,
                    (z0, dbh) => {
                        let mut acc = LaurentLoop::zero(self.n(), self.trunc());
                        if let Some(z0) = z0 {
                            acc = acc.add(&conj(z0));
                        }
                        if let Some(dbh) = dbh {
                            acc = acc.sub(&dbh.mul_t(&j.h_inv));
                        }
                        Some(acc)
                    }
                };
                Ok(PotentialValue {
                    xi: xi.trim(1e-17),
                    zeta: zeta.map(|z| z.trim(1e-17)),
                })
            }
        }
    }

    /// Coefficient `ξ₋₁(z)`.
    pub fn xi_minus_one(&self, z: C64) -> Result<ComplexMatrix> {
        Ok(self.at(z)?.xi.coeff(-1))
    }
}

/// `max_grid ‖π⊥ ξ₋₁ π‖` with its location.
pub fn admissibility_defect(frame: &PolyFrame, mu: &Potential, grid: &Grid) -> Result<(Stat, f64)> {
    let n = frame.n();
    let vals = try_tabulate(*grid, |_, _, z| {
        let pi = frame.projection_jet(z)?.pi;
        let x = mu.xi_minus_one(z)?;
        Ok((((identity(n) - &pi) * &x * &pi).norm(), x.norm()))
    })?;
    let scale = vals.values.iter().map(|v| v.1).fold(0.0, f64::max);
    let stat = Stat::over(grid, 0, |i, j| vals.at(i, j).0);
    Ok((stat, scale))
}

/// Default admissibility tolerance: `1e−8·max‖ξ₋₁‖` plus an absolute floor.
pub fn admissibility_tol(scale: f64) -> f64 {
    1e-8 * scale + 1e-13
}

/// `h·μ`. For uniton gauges the precondition `π⊥ξ₋₁π = 0` is checked on every
/// grid point.
pub fn gauge_action(h: &GaugeMap, mu: &Potential, grid: &Grid) -> Result<Potential> {
    if h.n() != mu.n() {
        return Err(Error::Dimension(format!(
            "gauge is {}×{}, potential {}×{}",
            h.n(),
            h.n(),
            mu.n(),
            mu.n()
        )));
    }
    if let GaugeMap::Uniton(frame) = h {
        let (stat, scale) = admissibility_defect(frame, mu, grid)?;
        let tol = admissibility_tol(scale);
        if stat.max > tol {
            return Err(Error::Admissibility {
                residual: stat.max,
                tol,
                point: stat.argmax,
            });
        }
    }
    Ok(Potential::Gauged {
        gauge: h.clone(),
        base: Box::new(mu.clone()),
    })
}

/// `γ_ℓ` for the subbundle spanned by `frame`. Frames that drop rank at grid
/// points are accepted; the points are reported.
pub fn build_uniton_gauge(
    frame: &PolyFrame,
    grid: &Grid,
) -> Result<(GaugeMap, Vec<(usize, usize)>)> {
    let flags = try_tabulate(*grid, |_, _, z| Ok(frame.projection_jet(z)?.flagged))?;
    let flagged = flags
        .values
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(idx, _)| grid.coords(idx))
        .collect();
    Ok((GaugeMap::Uniton(frame.clone()), flagged))
}

/// Values of `ξ` and `ζ` over the grid.
pub fn tabulate_potential(mu: &Potential, grid: &Grid) -> Result<(LoopField, Option<LoopField>)> {
    let vals = try_tabulate(*grid, |_, _, z| mu.at(z))?;
    let xi = Field {
        grid: *grid,
        values: vals.values.iter().map(|v| v.xi.clone()).collect(),
    };
    let zeta = if vals.values.iter().all(|v| v.zeta.is_none()) {
        None
    } else {
        let n = mu.n();
        let t = mu.trunc();
        Some(Field {
            grid: *grid,
            values: vals
                .values
                .into_iter()
                .map(|v| v.zeta.unwrap_or_else(|| LaurentLoop::zero(n, t)))
                .collect(),
        })
    };
    Ok((xi, zeta))
}

/// Interior statistics of `‖∂ζ − ∂̄ξ + [ξ, ζ]‖` (sum of coefficient norms),
/// the `dz ∧ dz̄` component of `dμ + ½[μ ∧ μ]`.
pub fn flatness_residual(mu: &Potential, grid: &Grid) -> Result<Stat> {
    let (xi, zeta) = tabulate_potential(mu, grid)?;
    Ok(flatness_residual_fields(&xi, zeta.as_ref()))
}

pub fn flatness_residual_fields(xi: &LoopField, zeta: Option<&LoopField>) -> Stat {
    Stat::over(&xi.grid, FD_MARGIN, |i, j| {
        let mut r = xi.dzbar(i, j).scale(c64(-1.0, 0.0));
        if let Some(zeta) = zeta {
            let (x, y) = (xi.at(i, j), zeta.at(i, j));
            r = r.add(&zeta.dz(i, j)).add(&x.mul_t(y)).sub(&y.mul_t(x));
        }
        r.l1_norm()
    })
}

/// Constant potential `ξ = λ^{d−1}η` with `η` anti-Hermitian on S¹ and of
/// bandwidth `d`, `d` odd.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTypePotential {
    pub d: usize,
    pub eta: LaurentLoop,
    pub q0: Option<ComplexMatrix>,
}

/// `max_k ‖η_{−k} + η_k*‖`.
pub fn loop_algebra_reality_defect(eta: &LaurentLoop) -> f64 {
    let m = eta.kmin().unsigned_abs().max(eta.kmax().unsigned_abs()) as i32;
    (-m..=m)
        .map(|k| (eta.coeff(-k) + eta.coeff(k).adjoint()).norm())
        .fold(0.0, f64::max)
}

pub fn finite_type_potential(
    d: usize,
    eta: &LaurentLoop,
    q0: Option<&ComplexMatrix>,
    tol: f64,
) -> Result<FiniteTypePotential> {
    if d % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "finite-type degree must be odd, got {d}"
        )));
    }
    let outside = eta.mass_outside(-(d as i32), d as i32);
    if outside > tol {
        return Err(Error::InvalidInput(format!(
            "η has frequencies beyond ±{d} of size {outside:.3e}"
        )));
    }
    let real = loop_algebra_reality_defect(eta);
    if real > tol {
        return Err(Error::Hypothesis(format!(
            "η is not anti-Hermitian on S¹: defect {real:.3e}"
        )));
    }
    if let Some(q) = q0 {
        let n = eta.n();
        if q.shape() != (n, n) {
            return Err(Error::Dimension("Q₀ has the wrong size".into()));
        }
        let inv = (q * q - identity(n)).norm() + crate::matrix::hermitian_defect(q);
        if inv > tol {
            return Err(Error::InvalidInput(format!(
                "Q₀ is not a Hermitian involution: defect {inv:.3e}"
            )));
        }
        let tw = eta.twist_defect(q);
        if tw > tol {
            return Err(Error::Hypothesis(format!(
                "η is not twisted by Q₀: defect {tw:.3e}"
            )));
        }
    }
    let mut eta = eta.clone();
    eta.truncate_to(d);
    Ok(FiniteTypePotential {
        d,
        eta,
        q0: q0.cloned(),
    })
}

/// Relative rank threshold for the kernels below.
pub const KERNEL_RANK_TOL: f64 = 1e-10;

impl FiniteTypePotential {
    pub fn xi(&self) -> LaurentLoop {
        self.eta.shift(self.d as i32 - 1)
    }

    pub fn potential(&self) -> Potential {
        Potential::constant(self.xi())
    }

    pub fn eta_minus_d(&self) -> ComplexMatrix {
        self.eta.coeff(-(self.d as i32))
    }

    /// `π₀ = ½(I + Q₀)`, the projection onto `V₀`.
    pub fn pi0(&self) -> Result<ComplexMatrix> {
        let q = self
            .q0
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("potential has no Q₀".into()))?;
        Ok((identity(q.nrows()) + q) * c64(0.5, 0.0))
    }

    /// `η⁻_{−d} = π₀ η_{−d} π₀⊥ ∈ Hom(V₀⊥, V₀)`.
    pub fn eta_minus_part(&self) -> Result<ComplexMatrix> {
        let p = self.pi0()?;
        let n = p.nrows();
        Ok(&p * self.eta_minus_d() * (identity(n) - &p))
    }

    /// `η⁺_{−d} = π₀⊥ η_{−d} π₀ ∈ Hom(V₀, V₀⊥)`.
    pub fn eta_plus_part(&self) -> Result<ComplexMatrix> {
        let p = self.pi0()?;
        let n = p.nrows();
        Ok((identity(n) - &p) * self.eta_minus_d() * &p)
    }

    /// Kernel of `η⁻_{−d}` as a map `V₀⊥ → V₀`: an orthonormal frame of a
    /// subspace of `V₀⊥`. This is the `ℓ₀` of the Gauss-bundle theorem.
    pub fn ker_minus_part(&self) -> Result<ComplexMatrix> {
        let p = self.pi0()?;
        let n = p.nrows();
        let (_, perp) = svd_image(&(identity(n) - &p), 0.5)?;
        if perp.ncols() == 0 {
            return Ok(ComplexMatrix::zeros(n, 0));
        }
        let restricted = self.eta_minus_part()? * &perp;
        let coords = kernel_frame(&restricted, KERNEL_RANK_TOL)?;
        Ok(perp * coords)
    }

    /// Kernel of `η⁻_{−d}` as an endomorphism of `ℂⁿ` (it contains `V₀`).
    pub fn ker_minus_part_ambient(&self) -> Result<ComplexMatrix> {
        kernel_frame(&self.eta_minus_part()?, KERNEL_RANK_TOL)
    }

    /// `ker η_{−d}`, for which `γ_ℓ₀` is always admissible.
    pub fn ker_eta(&self) -> Result<ComplexMatrix> {
        kernel_frame(&self.eta_minus_d(), KERNEL_RANK_TOL)
    }
}

/// Uniton gauge for a constant subspace with orthonormal frame `v`.
pub fn constant_uniton(v: &ComplexMatrix) -> Result<GaugeMap> {
    Ok(GaugeMap::Uniton(PolyFrame::constant(v.clone())?))
}

/// Version of the JSON potential schema below.
pub const POTENTIAL_SCHEMA: u32 = 1;

/// One `z^j`-term of a polynomial potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZTerm {
    pub zpow: usize,
    #[serde(rename = "loop")]
    pub coeff: LaurentLoop,
}

/// JSON potential description.
///
/// ```json
/// {"type": "finite_type", "d": 1, "eta": <loop>, "Q0": [[[1,0],[0,0]],[[0,0],[-1,0]]]}
/// {"type": "polynomial", "terms": [{"zpow": 0, "loop": <loop>}]}
/// {"type": "demo", "name": "sphere"}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    FiniteType {
        d: usize,
        eta: LaurentLoop,
        #[serde(rename = "Q0", default, skip_serializing_if = "Option::is_none")]
        q0: Option<MatrixJson>,
    },
    Polynomial {
        terms: Vec<ZTerm>,
    },
    Demo {
        name: crate::demos::FiniteTypeDemo,
    },
}

/// A built potential, with its finite-type data when it has any.
#[derive(Clone, Debug)]
pub struct BuiltPotential {
    pub potential: Potential,
    pub finite_type: Option<FiniteTypePotential>,
}

impl PotentialSpec {
    /// Validates the description and builds it with truncation `trunc`.
    pub fn build(&self, trunc: usize) -> Result<BuiltPotential> {
        match self {
            PotentialSpec::FiniteType { d, eta, q0 } => {
                let ft = finite_type_potential(
                    *d,
                    &eta.clone().with_trunc(trunc),
                    q0.as_ref().map(|m| &m.0),
                    1e-10,
                )?;
                Ok(BuiltPotential {
                    potential: ft.potential(),
                    finite_type: Some(ft),
                })
            }
            PotentialSpec::Polynomial { terms } => {
                let Some(first) = terms.first() else {
                    return Err(Error::InvalidInput(
                        "polynomial potential needs at least one term".into(),
                    ));
                };
                let n = first.coeff.n();
                let degree = terms.iter().map(|t| t.zpow).max().unwrap_or(0);
                if degree > MAX_Z_DEGREE {
                    return Err(Error::InvalidInput(format!(
                        "z-degree {degree} above the cap {MAX_Z_DEGREE}"
                    )));
                }
                let mut coeffs = vec![LaurentLoop::zero(n, trunc); degree + 1];
                for t in terms {
                    if t.coeff.n() != n {
                        return Err(Error::Dimension(
                            "potential terms have differing matrix sizes".into(),
                        ));
                    }
                    coeffs[t.zpow] = coeffs[t.zpow].add(&t.coeff.clone().with_trunc(trunc));
                }
                Ok(BuiltPotential {
                    potential: Potential::polynomial(coeffs)?,
                    finite_type: None,
                })
            }
            PotentialSpec::Demo { name } => {
                let mut ft = name.potential();
                ft.eta = ft.eta.with_trunc(trunc);
                Ok(BuiltPotential {
                    potential: ft.potential(),
                    finite_type: Some(ft),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{diag, from_real, unit};

    fn q0() -> ComplexMatrix {
        diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)])
    }

    #[test]
    fn frame_projection_examples() {
        let f = PolyFrame::new(vec![
            from_real(2, 1, &[1.0, 0.0]),
            from_real(2, 1, &[0.0, 1.0]),
        ])
        .unwrap();
        let jet = f.projection_jet(c64(0.0, 0.0)).unwrap();
        assert!((&jet.pi - from_real(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
        // At z = 0, ∂π = π⊥F′F* = E₂₁.
        assert!((jet.d_pi - unit(2, 1, 0)).norm() < 1e-15);
        let g = LaurentLoop::projection_loop(&jet.pi, -1, 8);
        assert!((g.eval(c64(1.0, 0.0)).unwrap() - identity(2)).norm() < 1e-15);
    }

    #[test]
    fn exact_projection_derivative_matches_differences() {
        let f = PolyFrame::new(vec![
            from_real(3, 1, &[1.0, 0.0, 0.5]),
            from_real(3, 1, &[0.0, 1.0, 0.0]),
            from_real(3, 1, &[0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let z = c64(0.3, -0.2);
        let h = 1e-5;
        let pi = |w: C64| f.projection_jet(w).unwrap().pi;
        let dx = (pi(z + c64(h, 0.0)) - pi(z - c64(h, 0.0))) / c64(2.0 * h, 0.0);
        let dy = (pi(z + c64(0.0, h)) - pi(z - c64(0.0, h))) / c64(2.0 * h, 0.0);
        let dz = (dx - dy * c64(0.0, 1.0)) * c64(0.5, 0.0);
        assert!((f.projection_jet(z).unwrap().d_pi - dz).norm() < 1e-8);
    }

    #[test]
    fn rank_drop_is_flagged() {
        // (z, z²) vanishes at 0; its span is constant, so the limit is e₁.
        let f = PolyFrame::new(vec![
            ComplexMatrix::zeros(2, 1),
            from_real(2, 1, &[1.0, 0.0]),
            from_real(2, 1, &[0.0, 1.0]),
        ])
        .unwrap();
        let jet = f.projection_jet(c64(0.0, 0.0)).unwrap();
        assert!(jet.flagged);
        assert!((jet.pi - from_real(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-3);
    }

    #[test]
    fn constant_uniton_on_admissible_potential() {
        // ξ = λ⁻¹η with π⊥ηπ = 0 for π = diag(1, 0): η upper triangular.
        let eta = from_real(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let mu = Potential::constant(LaurentLoop::monomial(-1, &eta, 8));
        let pi = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let perp = identity(2) - &pi;
        let g = constant_uniton(&from_real(2, 1, &[1.0, 0.0])).unwrap();
        let grid = Grid::centered(0.5, 5);
        let out = gauge_action(&g, &mu, &grid)
            .unwrap()
            .at(c64(0.2, 0.1))
            .unwrap();
        let expected = LaurentLoop::monomial(-1, &(&pi * &eta * &pi + &perp * &eta * &perp), 8)
            .add(&LaurentLoop::constant(&(&pi * &eta * &perp), 8));
        assert!(out.xi.coeff_distance(&expected) < 1e-14);
        assert!(out.zeta.unwrap().l1_norm() < 1e-15);
    }

    #[test]
    fn inadmissible_uniton_is_refused() {
        let mu = Potential::constant(LaurentLoop::monomial(-1, &unit(2, 1, 0), 8));
        let g = constant_uniton(&from_real(2, 1, &[1.0, 0.0])).unwrap();
        let grid = Grid::centered(0.5, 5);
        assert!(matches!(
            gauge_action(&g, &mu, &grid),
            Err(Error::Admissibility { .. })
        ));
    }

    #[test]
    fn identity_and_unitary_constant_gauges() {
        let xi = LaurentLoop::monomial(-1, &unit(2, 0, 1), 8)
            .add(&LaurentLoop::constant(&unit(2, 1, 1), 8));
        let mu = Potential::constant(xi.clone());
        let grid = Grid::centered(0.5, 5);
        let id = GaugeMap::plus(PolyLoop::constant(LaurentLoop::identity(2, 8)), 1e-12).unwrap();
        let z = c64(0.1, 0.2);
        assert!(
            gauge_action(&id, &mu, &grid)
                .unwrap()
                .at(z)
                .unwrap()
                .xi
                .coeff_distance(&xi)
                < 1e-13
        );
        let k = from_real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let kg = GaugeMap::plus(PolyLoop::constant(LaurentLoop::constant(&k, 8)), 1e-12).unwrap();
        let out = gauge_action(&kg, &mu, &grid).unwrap().at(z).unwrap();
        assert!(
            out.xi
                .coeff_distance(&xi.left_mul(&k).right_mul(&k.adjoint()))
                < 1e-13
        );
        assert!(out.zeta.is_none());
    }

    #[test]
    fn finite_type_validation() {
        let a = unit(2, 0, 1);
        let eta = LaurentLoop::monomial(-1, &a, 8).sub(&LaurentLoop::monomial(1, &a.adjoint(), 8));
        let ft = finite_type_potential(1, &eta, Some(&q0()), 1e-10).unwrap();
        assert!((ft.eta_minus_part().unwrap() - &a).norm() < 1e-15);
        assert!(finite_type_potential(2, &eta, None, 1e-10).is_err());
        let herm = LaurentLoop::constant(&from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]), 8);
        assert!(finite_type_potential(1, &herm, None, 1e-10).is_err());
    }

    #[test]
    fn kernel_variants() {
        let a = unit(2, 0, 1);
        let eta = LaurentLoop::monomial(-1, &a, 8).sub(&LaurentLoop::monomial(1, &a.adjoint(), 8));
        let ft = finite_type_potential(1, &eta, Some(&q0()), 1e-10).unwrap();
        // Ambient kernel of E₁₂ is span e₁ = V₀; restricted to V₀⊥ it is zero.
        let amb = ft.ker_minus_part_ambient().unwrap();
        assert_eq!(amb.ncols(), 1);
        assert!((amb[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(ft.ker_minus_part().unwrap().ncols(), 0);

        let zero_eta = LaurentLoop::zero(2, 8);
        let ft0 = finite_type_potential(1, &zero_eta, Some(&q0()), 1e-10).unwrap();
        assert_eq!(ft0.ker_minus_part_ambient().unwrap().ncols(), 2);
        assert_eq!(ft0.ker_minus_part().unwrap().ncols(), 1);
    }

    #[test]
    fn polynomial_derivative() {
        let c = |x: f64| LaurentLoop::constant(&(identity(1) * c64(x, 0.0)), 4);
        let p = PolyLoop::new(vec![c(1.0), c(2.0), c(3.0)]).unwrap();
        let z = c64(0.5, 1.0);
        assert!((p.deriv(z).coeff(0)[(0, 0)] - (z * 6.0 + 2.0)).norm() < 1e-14);
        assert!((p.eval(z).coeff(0)[(0, 0)] - (z * z * 3.0 + z * 2.0 + 1.0)).norm() < 1e-14);
    }

    #[test]
    fn potential_specs_parse_and_build() {
        let demo: PotentialSpec =
            serde_json::from_str(r#"{"type": "demo", "name": "sphere"}"#).unwrap();
        let built = demo.build(16).unwrap();
        assert_eq!(built.potential.trunc(), 16);
        assert!(built.finite_type.is_some());

        let poly = r#"{"type": "polynomial", "terms": [
            {"zpow": 1, "loop": {"n": 1, "kmin": -1, "kmax": -1, "coeffs": [[2, 0]]}}]}"#;
        let built = serde_json::from_str::<PotentialSpec>(poly)
            .unwrap()
            .build(32)
            .unwrap();
        let xi = built.potential.at(c64(0.5, 0.0)).unwrap().xi;
        assert!((xi.coeff(-1)[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);

        let sphere = crate::demos::sphere_demo();
        let spec = PotentialSpec::FiniteType {
            d: 1,
            eta: sphere.eta.clone(),
            q0: sphere.q0.clone().map(MatrixJson),
        };
        let back: PotentialSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(back.build(32).unwrap().finite_type.unwrap().q0.is_some());

        assert!(serde_json::from_str::<PotentialSpec>(
            r#"{"type": "demo", "name": "sphere", "x": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"type": "torus"}"#).is_err());
        let even = PotentialSpec::FiniteType {
            d: 2,
            eta: sphere.eta.clone(),
            q0: None,
        };
        assert!(even.build(32).is_err());
    }
}
