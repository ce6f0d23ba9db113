//! Rectangular z-grids, fields of loops and matrices over them, finite
//! differences, reports and export.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::LaurentLoop;
use crate::matrix::{c64, ComplexMatrix, C64};
use crate::potential::PolyFrame;

/// Square lattice `center + (−w + i·h) + i(−w + j·h)`, `0 ≤ i, j < samples`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub center: [f64; 2],
    pub half_width: f64,
    pub samples: usize,
}

impl Grid {
    pub fn new(center: C64, half_width: f64, samples: usize) -> Result<Grid> {
        if samples < 2 || !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 samples and a positive half-width (got {samples}, {half_width})"
            )));
        }
        Ok(Grid {
            center: [center.re, center.im],
            half_width,
            samples,
        })
    }

    /// Centered at 0; the spacing is `2·half_width/(samples − 1)`.
    pub fn centered(half_width: f64, samples: usize) -> Grid {
        Grid::new(c64(0.0, 0.0), half_width, samples).expect("valid grid")
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.samples - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.samples * self.samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.samples + j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.samples, idx % self.samples)
    }

    pub fn point(&self, i: usize, j: usize) -> C64 {
        let h = self.spacing();
        c64(
            self.center[0] - self.half_width + i as f64 * h,
            self.center[1] - self.half_width + j as f64 * h,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.len()).map(move |idx| {
            let (i, j) = self.coords(idx);
            (i, j, self.point(i, j))
        })
    }

    /// True when every stencil point within `margin` of `(i, j)` exists.
    pub fn is_interior(&self, i: usize, j: usize, margin: usize) -> bool {
        i >= margin && j >= margin && i + margin < self.samples && j + margin < self.samples
    }

    /// Grid point nearest to 0.
    pub fn anchor(&self) -> (usize, usize) {
        let h = self.spacing();
        let clamp =
            |c: f64| (((c + self.half_width) / h).round().max(0.0) as usize).min(self.samples - 1);
        (clamp(-self.center[0]), clamp(-self.center[1]))
    }

    /// Whether 0 lies in the closed square.
    pub fn contains_origin(&self) -> bool {
        self.center[0].abs() <= self.half_width + 1e-12
            && self.center[1].abs() <= self.half_width + 1e-12
    }
}

/// Values attached to each grid point, stored in [`Grid::index`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub grid: Grid,
    pub values: Vec<T>,
}

pub type LoopField = Field<LaurentLoop>;
pub type MapField = Field<ComplexMatrix>;

impl<T> Field<T> {
    pub fn at(&self, i: usize, j: usize) -> &T {
        &self.values[self.grid.index(i, j)]
    }

    pub fn map<U: Send>(&self, f: impl Fn(usize, usize, &T) -> U + Sync) -> Field<U>
    where
        T: Sync,
    {
        let g = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(idx, v)| {
                let (i, j) = g.coords(idx);
                f(i, j, v)
            })
            .collect();
        Field { grid: g, values }
    }

    pub fn try_map<U: Send>(
        &self,
        f: impl Fn(usize, usize, &T) -> Result<U> + Sync,
    ) -> Result<Field<U>>
    where
        T: Sync,
    {
        let g = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(idx, v)| {
                let (i, j) = g.coords(idx);
                f(i, j, v).map_err(|e| e.at(i, j, g.point(i, j)))
            })
            .collect::<Result<Vec<U>>>()?;
        Ok(Field { grid: g, values })
    }
}

/// Builds a field from a per-point function, in parallel.
pub fn tabulate<U: Send>(grid: Grid, f: impl Fn(usize, usize, C64) -> U + Sync) -> Field<U> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            f(i, j, grid.point(i, j))
        })
        .collect();
    Field { grid, values }
}

pub fn try_tabulate<U: Send>(
    grid: Grid,
    f: impl Fn(usize, usize, C64) -> Result<U> + Sync,
) -> Result<Field<U>> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            let z = grid.point(i, j);
            f(i, j, z).map_err(|e| e.at(i, j, z))
        })
        .collect::<Result<Vec<U>>>()?;
    Ok(Field { grid, values })
}

/// Values that finite-difference stencils can combine linearly.
pub trait Linear: Sized {
    fn combine(terms: &[(C64, &Self)]) -> Self;
}

impl Linear for ComplexMatrix {
    fn combine(terms: &[(C64, &Self)]) -> Self {
        let mut out = terms[0].1 * terms[0].0;
        for (c, m) in &terms[1..] {
            out += *m * *c;
        }
        out
    }
}

impl Linear for LaurentLoop {
    fn combine(terms: &[(C64, &Self)]) -> Self {
        let mut out = terms[0].1.scale(terms[0].0);
        for (c, m) in &terms[1..] {
            out = out.add(&m.scale(*c));
        }
        out
    }
}

/// Stencil half-width of the sixth-order centered differences.
pub const FD_MARGIN: usize = 3;

const D1: [(isize, f64); 6] = [
    (-3, -1.0 / 60.0),
    (-2, 3.0 / 20.0),
    (-1, -3.0 / 4.0),
    (1, 3.0 / 4.0),
    (2, -3.0 / 20.0),
    (3, 1.0 / 60.0),
];

/// `∂_z` (`sign = −1`) or `∂_z̄` (`sign = +1`) of `f` at `(i, j)`, as
/// `½(∂_x ∓ i∂_y)` with sixth-order centered differences.
fn wirtinger<T: Linear>(
    f: &impl Fn(usize, usize) -> T,
    i: usize,
    j: usize,
    h: f64,
    sign: f64,
) -> T {
    let mut vals = Vec::with_capacity(12);
    let mut coefs = Vec::with_capacity(12);
    for &(o, w) in &D1 {
        vals.push(f((i as isize + o) as usize, j));
        coefs.push(c64(0.5 * w / h, 0.0));
    }
    for &(o, w) in &D1 {
        vals.push(f(i, (j as isize + o) as usize));
        coefs.push(c64(0.0, sign * 0.5 * w / h));
    }
    let terms: Vec<(C64, &T)> = coefs.into_iter().zip(vals.iter()).collect();
    T::combine(&terms)
}

/// `∂_z f` at an interior point.
pub fn d_z<T: Linear>(f: impl Fn(usize, usize) -> T, i: usize, j: usize, h: f64) -> T {
    wirtinger(&f, i, j, h, -1.0)
}

/// `∂_z̄ f` at an interior point.
pub fn d_zbar<T: Linear>(f: impl Fn(usize, usize) -> T, i: usize, j: usize, h: f64) -> T {
    wirtinger(&f, i, j, h, 1.0)
}

impl<T: Linear + Clone> Field<T> {
    pub fn dz(&self, i: usize, j: usize) -> T {
        d_z(|a, b| self.at(a, b).clone(), i, j, self.grid.spacing())
    }

    pub fn dzbar(&self, i: usize, j: usize) -> T {
        d_zbar(|a, b| self.at(a, b).clone(), i, j, self.grid.spacing())
    }
}

/// Max / mean of a per-point quantity with the location of the max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub max: f64,
    pub mean: f64,
    pub argmax: (usize, usize),
}

impl Stat {
    pub fn zero() -> Stat {
        Stat {
            max: 0.0,
            mean: 0.0,
            argmax: (0, 0),
        }
    }

    /// Deterministic in the iteration order; NaN counts as the maximum.
    pub fn collect(items: impl IntoIterator<Item = ((usize, usize), f64)>) -> Stat {
        let mut s = Stat::zero();
        let mut count = 0usize;
        let mut sum = 0.0;
        for (pt, v) in items {
            if count == 0 || v > s.max || v.is_nan() && !s.max.is_nan() {
                s.max = v;
                s.argmax = pt;
            }
            sum += v;
            count += 1;
        }
        if count > 0 {
            s.mean = sum / count as f64;
        }
        s
    }

    /// Over interior points of `grid` with the given margin.
    pub fn over(grid: &Grid, margin: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Stat {
        let pts: Vec<(usize, usize)> = (0..grid.len())
            .map(|idx| grid.coords(idx))
            .filter(|&(i, j)| grid.is_interior(i, j, margin))
            .collect();
        let vals: Vec<f64> = pts.par_iter().map(|&(i, j)| f(i, j)).collect();
        Stat::collect(pts.into_iter().zip(vals))
    }
}

/// Rank-`k` Hermitian projections per grid point, with flags for points
/// whose value was filled in rather than computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubbundleField {
    pub grid: Grid,
    pub rank: usize,
    pub projections: Vec<ComplexMatrix>,
    pub flags: Vec<bool>,
    /// Holomorphic frame the projections were computed from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<PolyFrame>,
}

impl SubbundleField {
    pub fn from_projections(
        grid: Grid,
        rank: usize,
        projections: Vec<ComplexMatrix>,
    ) -> SubbundleField {
        let flags = vec![false; projections.len()];
        SubbundleField {
            grid,
            rank,
            projections,
            flags,
            frame: None,
        }
    }

    pub fn with_flags(
        grid: Grid,
        rank: usize,
        projections: Vec<ComplexMatrix>,
        flags: Vec<bool>,
    ) -> SubbundleField {
        SubbundleField {
            grid,
            rank,
            projections,
            flags,
            frame: None,
        }
    }

    /// Projections of a polynomial frame; rank drops of the frame are flagged.
    pub fn from_frame(grid: Grid, frame: &PolyFrame) -> Result<SubbundleField> {
        let jets = try_tabulate(grid, |_, _, z| frame.projection_jet(z))?;
        let flags = jets.values.iter().map(|j| j.flagged).collect();
        let projections = jets.values.into_iter().map(|j| j.pi).collect();
        Ok(SubbundleField {
            grid,
            rank: frame.rank(),
            projections,
            flags,
            frame: Some(frame.clone()),
        })
    }

    pub fn constant(grid: Grid, pi: &ComplexMatrix) -> SubbundleField {
        let rank = pi.trace().re.round() as usize;
        SubbundleField::from_projections(grid, rank, vec![pi.clone(); grid.len()])
    }

    pub fn at(&self, i: usize, j: usize) -> &ComplexMatrix {
        &self.projections[self.grid.index(i, j)]
    }

    pub fn flagged(&self, i: usize, j: usize) -> bool {
        self.flags[self.grid.index(i, j)]
    }

    pub fn flag_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn n(&self) -> usize {
        self.projections[0].nrows()
    }

    /// `ψ⊥`.
    pub fn complement(&self) -> SubbundleField {
        let n = self.n();
        let id = ComplexMatrix::identity(n, n);
        SubbundleField {
            grid: self.grid,
            rank: n - self.rank,
            projections: self.projections.iter().map(|p| &id - p).collect(),
            flags: self.flags.clone(),
            frame: None,
        }
    }

    pub fn as_map_field(&self) -> MapField {
        Field {
            grid: self.grid,
            values: self.projections.clone(),
        }
    }

    /// Interior-point maximum of `‖π − π'‖_F`.
    pub fn distance(&self, other: &SubbundleField, margin: usize) -> Stat {
        Stat::over(&self.grid, margin, |i, j| {
            (self.at(i, j) - other.at(i, j)).norm()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = matrix_csv_header(self.n());
        out.push_str(",flag\n");
        for (idx, p) in self.projections.iter().enumerate() {
            let (i, j) = self.grid.coords(idx);
            write_matrix_row(&mut out, i, j, p);
            let _ = writeln!(out, ",{}", u8::from(self.flags[idx]));
        }
        out
    }
}

fn matrix_csv_header(n: usize) -> String {
    let mut out = String::from("i,j");
    for r in 0..n {
        for c in 0..n {
            let _ = write!(out, ",re_{r}{c},im_{r}{c}");
        }
    }
    out
}

fn write_matrix_row(out: &mut String, i: usize, j: usize, m: &ComplexMatrix) {
    let _ = write!(out, "{i},{j}");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            let _ = write!(out, ",{:e},{:e}", z.re, z.im);
        }
    }
}

impl MapField {
    /// One row per grid point: `i, j`, then real and imaginary parts of the
    /// entries in row-major order.
    pub fn to_csv(&self) -> String {
        let n = self.values.first().map_or(0, |m| m.nrows());
        let mut out = matrix_csv_header(n);
        out.push('\n');
        for (idx, m) in self.values.iter().enumerate() {
            let (i, j) = self.grid.coords(idx);
            write_matrix_row(&mut out, i, j, m);
            out.push('\n');
        }
        out
    }

    /// Interior-point statistics of `‖A − B‖_F`.
    pub fn distance(&self, other: &MapField, margin: usize) -> Stat {
        Stat::over(&self.grid, margin, |i, j| {
            (self.at(i, j) - other.at(i, j)).norm()
        })
    }

    /// `max ‖φ*φ − I‖_F` over all points.
    pub fn unitary_defect(&self) -> Stat {
        Stat::over(&self.grid, 0, |i, j| {
            crate::matrix::unitary_defect(self.at(i, j))
        })
    }
}

impl LoopField {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("loop fields serialize")
    }

    /// Interior-point statistics of the sup over S¹ (64 midpoint samples) of
    /// the pointwise difference.
    pub fn distance(&self, other: &LoopField, margin: usize) -> Stat {
        Stat::over(&self.grid, margin, |i, j| {
            loop_sup_distance(self.at(i, j), other.at(i, j))
        })
    }

    /// Pointwise evaluation at a fixed `λ`.
    pub fn eval(&self, lambda: C64) -> Result<MapField> {
        self.try_map(|_, _, l| l.eval(lambda))
    }
}

/// `sup_{S¹} ‖a − b‖_F` estimated on 64 points offset from the roots of unity.
pub fn loop_sup_distance(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
    let d = a.sub(b);
    crate::fourier::midpoint_sup(64, |lam| d.eval(lam).unwrap().norm())
}
