//! Matrix-valued finite Laurent series `γ(λ) = Σ_{k=kmin}^{kmax} A_k λ^k`.
//!
//! Loops carry a working truncation `M`: products keep only frequencies with
//! `|k| ≤ M` and report the mass they discard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{c64, ComplexMatrix, C64};

/// Default working truncation half-width.
pub const DEFAULT_TRUNC: usize = 32;

/// Default tolerance for membership predicates.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "LoopJson", try_from = "LoopJson")]
pub struct LaurentLoop {
    n: usize,
    kmin: i32,
    /// `kmax − kmin + 1` row-major `n × n` blocks.
    data: Vec<C64>,
    trunc: usize,
}

const ZERO: C64 = C64::new(0.0, 0.0);

/// `out += a · b` for row-major `n × n` blocks.
#[inline]
pub(crate) fn block_mul_acc(n: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let dst = &mut out[i * n..(i + 1) * n];
        for (l, &ail) in row.iter().enumerate() {
            if ail == ZERO {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (d, &blj) in dst.iter_mut().zip(brow) {
                *d += ail * blj;
            }
        }
    }
}

#[inline]
fn block_norm(b: &[C64]) -> f64 {
    b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn matrix_to_block(m: &ComplexMatrix) -> Vec<C64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn block_to_matrix(n: usize, b: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(n, n, b)
}

impl LaurentLoop {
    pub fn new(n: usize, kmin: i32, coeffs: Vec<ComplexMatrix>, trunc: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("matrix size must be positive".into()));
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidInput(
                "a loop needs at least one coefficient".into(),
            ));
        }
        let mut data = Vec::with_capacity(coeffs.len() * n * n);
        for (idx, c) in coeffs.iter().enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "coefficient {} is {}×{}, expected {n}×{n}",
                    kmin + idx as i32,
                    c.nrows(),
                    c.ncols()
                )));
            }
            data.extend(matrix_to_block(c));
        }
        Ok(LaurentLoop {
            n,
            kmin,
            data,
            trunc,
        })
    }

    pub(crate) fn from_raw(n: usize, kmin: i32, data: Vec<C64>, trunc: usize) -> Self {
        debug_assert!(!data.is_empty() && data.len() % (n * n) == 0);
        LaurentLoop {
            n,
            kmin,
            data,
            trunc,
        }
    }

    pub fn constant(m: &ComplexMatrix, trunc: usize) -> Self {
        Self::monomial(0, m, trunc)
    }

    pub fn monomial(k: i32, m: &ComplexMatrix, trunc: usize) -> Self {
        assert!(m.is_square(), "loop coefficients are square");
        LaurentLoop {
            n: m.nrows(),
            kmin: k,
            data: matrix_to_block(m),
            trunc,
        }
    }

    pub fn identity(n: usize, trunc: usize) -> Self {
        Self::constant(&ComplexMatrix::identity(n, n), trunc)
    }

    pub fn zero(n: usize, trunc: usize) -> Self {
        LaurentLoop {
            n,
            kmin: 0,
            data: vec![ZERO; n * n],
            trunc,
        }
    }

    /// `π + λ^k π⊥` for a projection `π`.
    pub fn projection_loop(pi: &ComplexMatrix, k: i32, trunc: usize) -> Self {
        let n = pi.nrows();
        let perp = ComplexMatrix::identity(n, n) - pi;
        Self::monomial(0, pi, trunc).add(&Self::monomial(k, &perp, trunc))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kmin(&self) -> i32 {
        self.kmin
    }

    pub fn kmax(&self) -> i32 {
        self.kmin + self.len() as i32 - 1
    }

    fn len(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn with_trunc(mut self, trunc: usize) -> Self {
        self.trunc = trunc;
        self
    }

    pub(crate) fn block(&self, k: i32) -> Option<&[C64]> {
        if k < self.kmin || k > self.kmax() {
            return None;
        }
        let nn = self.n * self.n;
        let off = (k - self.kmin) as usize * nn;
        Some(&self.data[off..off + nn])
    }

    /// Coefficient `A_k` (zero outside the stored window).
    pub fn coeff(&self, k: i32) -> ComplexMatrix {
        match self.block(k) {
            Some(b) => block_to_matrix(self.n, b),
            None => ComplexMatrix::zeros(self.n, self.n),
        }
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (i32, ComplexMatrix)> + '_ {
        (self.kmin..=self.kmax()).map(move |k| (k, self.coeff(k)))
    }

    /// `Σ A_k λ^k` by Horner's rule in `λ` and `λ⁻¹`.
    pub fn eval(&self, lambda: C64) -> Result<ComplexMatrix> {
        if lambda == ZERO && self.kmin < 0 {
            return Err(Error::InvalidInput(
                "cannot evaluate a loop with negative frequencies at λ = 0".into(),
            ));
        }
        Ok(block_to_matrix(self.n, &self.eval_block(lambda)))
    }

    pub(crate) fn eval_block(&self, lambda: C64) -> Vec<C64> {
        let nn = self.n * self.n;
        let mut pos = vec![ZERO; nn];
        let mut neg = vec![ZERO; nn];
        let kmax = self.kmax();
        if kmax >= 0 {
            for k in (self.kmin.max(0)..=kmax).rev() {
                let b = self.block(k).unwrap();
                for (p, &x) in pos.iter_mut().zip(b) {
                    *p = *p * lambda + x;
                }
            }
            if self.kmin > 0 {
                let s = lambda.powi(self.kmin);
                pos.iter_mut().for_each(|p| *p *= s);
            }
        }
        if self.kmin < 0 {
            let inv = lambda.inv();
            for k in self.kmin..=kmax.min(-1) {
                let b = self.block(k).unwrap();
                for (p, &x) in neg.iter_mut().zip(b) {
                    *p = *p * inv + x;
                }
            }
            let top = kmax.min(-1);
            let s = inv.powi(-top);
            for (p, q) in pos.iter_mut().zip(neg) {
                *p += q * s;
            }
        }
        pos
    }

    /// Full convolution, no truncation.
    pub(crate) fn mul_full(&self, other: &LaurentLoop) -> LaurentLoop {
        assert_eq!(self.n, other.n, "loop sizes differ");
        let n = self.n;
        let nn = n * n;
        let len = self.len() + other.len() - 1;
        let mut data = vec![ZERO; len * nn];
        for (ia, a) in self.data.chunks_exact(nn).enumerate() {
            if a.iter().all(|z| *z == ZERO) {
                continue;
            }
            for (ib, b) in other.data.chunks_exact(nn).enumerate() {
                let off = (ia + ib) * nn;
                block_mul_acc(n, a, b, &mut data[off..off + nn]);
            }
        }
        LaurentLoop {
            n,
            kmin: self.kmin + other.kmin,
            data,
            trunc: self.trunc.max(other.trunc),
        }
    }

    /// Product truncated to `|k| ≤ M`, with the discarded coefficient mass
    /// (sum of Frobenius norms).
    pub fn mul_report(&self, other: &LaurentLoop) -> Result<(LaurentLoop, f64)> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "loop sizes {} and {} differ",
                self.n, other.n
            )));
        }
        let mut p = self.mul_full(other);
        let discarded = p.truncate();
        Ok((p, discarded))
    }

    /// Product truncated to `|k| ≤ M`.
    pub fn mul(&self, other: &LaurentLoop) -> Result<LaurentLoop> {
        self.mul_report(other).map(|(p, _)| p)
    }

    /// Like [`mul`](Self::mul) for callers that have already checked sizes.
    pub(crate) fn mul_t(&self, other: &LaurentLoop) -> LaurentLoop {
        let mut p = self.mul_full(other);
        p.truncate();
        p
    }

    /// Drops frequencies outside `|k| ≤ M`; returns the discarded mass.
    pub fn truncate(&mut self) -> f64 {
        self.truncate_to(self.trunc)
    }

    pub fn truncate_to(&mut self, m: usize) -> f64 {
        let m = m as i32;
        let lo = self.kmin.max(-m);
        let hi = self.kmax().min(m);
        let nn = self.n * self.n;
        let mut discarded = 0.0;
        for k in self.kmin..=self.kmax() {
            if k < lo || k > hi {
                discarded += block_norm(self.block(k).unwrap());
            }
        }
        if lo > hi {
            *self = LaurentLoop::zero(self.n, self.trunc);
            return discarded;
        }
        let start = (lo - self.kmin) as usize * nn;
        let end = (hi - self.kmin + 1) as usize * nn;
        self.data = self.data[start..end].to_vec();
        self.kmin = lo;
        discarded
    }

    /// Strips edge coefficients whose norm is at most `rel_tol` times the
    /// largest coefficient norm.
    pub fn trim(mut self, rel_tol: f64) -> Self {
        let nn = self.n * self.n;
        let norms: Vec<f64> = self.data.chunks_exact(nn).map(block_norm).collect();
        let cut = rel_tol * norms.iter().cloned().fold(0.0, f64::max);
        let first = norms.iter().position(|&x| x > cut);
        let Some(first) = first else {
            return LaurentLoop::zero(self.n, self.trunc);
        };
        let last = norms.iter().rposition(|&x| x > cut).unwrap();
        self.data = self.data[first * nn..(last + 1) * nn].to_vec();
        self.kmin += first as i32;
        self
    }

    /// Coefficient window extended to `[lo, hi]` with zero blocks.
    fn widened(&self, lo: i32, hi: i32) -> LaurentLoop {
        let lo = lo.min(self.kmin);
        let hi = hi.max(self.kmax());
        let nn = self.n * self.n;
        let mut data = vec![ZERO; (hi - lo + 1) as usize * nn];
        let off = (self.kmin - lo) as usize * nn;
        data[off..off + self.data.len()].copy_from_slice(&self.data);
        LaurentLoop {
            n: self.n,
            kmin: lo,
            data,
            trunc: self.trunc,
        }
    }

    fn zip_with(&self, other: &LaurentLoop, f: impl Fn(C64, C64) -> C64) -> LaurentLoop {
        assert_eq!(self.n, other.n, "loop sizes differ");
        let lo = self.kmin.min(other.kmin);
        let hi = self.kmax().max(other.kmax());
        let mut a = self.widened(lo, hi);
        let b = other.widened(lo, hi);
        for (x, &y) in a.data.iter_mut().zip(&b.data) {
            *x = f(*x, y);
        }
        a.trunc = self.trunc.max(other.trunc);
        a
    }

    pub fn add(&self, other: &LaurentLoop) -> LaurentLoop {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &LaurentLoop) -> LaurentLoop {
        self.zip_with(other, |x, y| x - y)
    }

    pub fn scale(&self, c: C64) -> LaurentLoop {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// `λ^s γ(λ)`.
    pub fn shift(&self, s: i32) -> LaurentLoop {
        let mut out = self.clone();
        out.kmin += s;
        out
    }

    /// `m · γ`.
    pub fn left_mul(&self, m: &ComplexMatrix) -> LaurentLoop {
        let mb = matrix_to_block(m);
        self.map_blocks(|n, b, out| block_mul_acc(n, &mb, b, out))
    }

    /// `γ · m`.
    pub fn right_mul(&self, m: &ComplexMatrix) -> LaurentLoop {
        let mb = matrix_to_block(m);
        self.map_blocks(|n, b, out| block_mul_acc(n, b, &mb, out))
    }

    fn map_blocks(&self, f: impl Fn(usize, &[C64], &mut [C64])) -> LaurentLoop {
        let nn = self.n * self.n;
        let mut data = vec![ZERO; self.data.len()];
        for (src, dst) in self.data.chunks_exact(nn).zip(data.chunks_exact_mut(nn)) {
            f(self.n, src, dst);
        }
        LaurentLoop {
            n: self.n,
            kmin: self.kmin,
            data,
            trunc: self.trunc,
        }
    }

    /// `γ†` with `γ†(λ) = γ(λ)*` on the unit circle: `(γ†)_k = (A_{−k})*`.
    pub fn adjoint_circle(&self) -> LaurentLoop {
        let n = self.n;
        let nn = n * n;
        let len = self.len();
        let mut data = vec![ZERO; self.data.len()];
        for (idx, b) in self.data.chunks_exact(nn).enumerate() {
            let dst = &mut data[(len - 1 - idx) * nn..(len - idx) * nn];
            for i in 0..n {
                for j in 0..n {
                    dst[j * n + i] = b[i * n + j].conj();
                }
            }
        }
        LaurentLoop {
            n,
            kmin: -self.kmax(),
            data,
            trunc: self.trunc,
        }
    }

    /// `max_k ‖A_k − conj(A_{−k})‖` with entrywise conjugation; zero iff
    /// `conj(γ(λ)) = γ(1/λ̄)`.
    pub fn adjoint_reality_defect(&self) -> f64 {
        let lo = self.kmin.min(-self.kmax());
        let hi = self.kmax().max(-self.kmin);
        (lo..=hi)
            .map(|k| (self.coeff(k) - self.coeff(-k).map(|z| z.conj())).norm())
            .fold(0.0, f64::max)
    }

    /// `max_k ‖A_k − B_k‖_F`.
    pub fn coeff_distance(&self, other: &LaurentLoop) -> f64 {
        let d = self.sub(other);
        d.data
            .chunks_exact(self.n * self.n)
            .map(block_norm)
            .fold(0.0, f64::max)
    }

    /// `Σ_k ‖A_k‖_F`, an upper bound for `sup_{S¹} ‖γ(λ)‖_F`.
    pub fn l1_norm(&self) -> f64 {
        self.data
            .chunks_exact(self.n * self.n)
            .map(block_norm)
            .sum()
    }

    /// `sqrt(Σ_k ‖A_k‖_F²)`, the L² norm on the circle.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient norm among frequencies below `k`.
    pub fn mass_below(&self, k: i32) -> f64 {
        (self.kmin..k.min(self.kmax() + 1))
            .map(|j| block_norm(self.block(j).unwrap()))
            .fold(0.0, f64::max)
    }

    /// Largest coefficient norm among frequencies outside `[lo, hi]`.
    pub fn mass_outside(&self, lo: i32, hi: i32) -> f64 {
        (self.kmin..=self.kmax())
            .filter(|&k| k < lo || k > hi)
            .map(|k| block_norm(self.block(k).unwrap()))
            .fold(0.0, f64::max)
    }

    /// Keeps only frequencies `≥ k`.
    pub fn keep_from(&self, k: i32) -> LaurentLoop {
        let mut out = self.clone();
        if k > self.kmax() {
            return LaurentLoop::zero(self.n, self.trunc);
        }
        if k > self.kmin {
            let nn = self.n * self.n;
            out.data = self.data[(k - self.kmin) as usize * nn..].to_vec();
            out.kmin = k;
        }
        out
    }

    /// Inverse of a loop in `Λ₊` as a power series up to `λ^M`, by
    /// recursion on the coefficients. Frequencies below 0 are ignored.
    pub fn plus_inverse(&self) -> Result<LaurentLoop> {
        let n = self.n;
        let m = self.trunc as i32;
        let c0 = crate::matrix::checked_inverse(&self.coeff(0), crate::matrix::DEFAULT_COND_CAP)?;
        let mut out: Vec<ComplexMatrix> = vec![c0.clone()];
        for k in 1..=m {
            let mut acc = ComplexMatrix::zeros(n, n);
            for j in 1..=k.min(self.kmax()) {
                acc += self.coeff(j) * &out[(k - j) as usize];
            }
            out.push(-(&c0 * acc));
        }
        Ok(LaurentLoop::new(n, 0, out, self.trunc)?.trim(1e-17))
    }

    pub fn based_defect(&self) -> f64 {
        (self.eval(c64(1.0, 0.0)).unwrap() - ComplexMatrix::identity(self.n, self.n)).norm()
    }

    /// Membership in `ΩG`: `γ(1) = I`.
    pub fn is_based(&self, tol: f64) -> bool {
        self.based_defect() < tol
    }

    /// `max_s ‖γ(λ_s)*γ(λ_s) − I‖` over `samples` equally spaced points of S¹.
    pub fn unitary_circle_defect(&self, samples: usize) -> f64 {
        let id = ComplexMatrix::identity(self.n, self.n);
        (0..samples.max(1))
            .map(|s| {
                let t = 2.0 * std::f64::consts::PI * (s as f64 + 0.5) / samples.max(1) as f64;
                let g = self.eval(C64::from_polar(1.0, t)).unwrap();
                (g.adjoint() * &g - &id).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_unitary_circle(&self, tol: f64, samples: usize) -> bool {
        self.unitary_circle_defect(samples) < tol
    }

    /// Membership in `Λ₊`: no negative frequencies above `tol`.
    pub fn is_plus(&self, tol: f64) -> bool {
        self.mass_below(0) <= tol
    }

    /// Values in `Λ_{−1,∞}`: no frequencies below `−1` above `tol`.
    pub fn is_minus_one_infty(&self, tol: f64) -> bool {
        self.mass_below(-1) <= tol
    }

    /// `max_k ‖Q₀A_kQ₀ − (−1)^k A_k‖`.
    pub fn twist_defect(&self, q0: &ComplexMatrix) -> f64 {
        self.coefficients()
            .map(|(k, a)| {
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                (q0 * &a * q0 - a * c64(sign, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_twisted(&self, q0: &ComplexMatrix, tol: f64) -> bool {
        self.twist_defect(q0) < tol
    }

    /// Derivative of an entrywise map over the coefficients; used by callers
    /// that need e.g. the real part of a loop.
    pub fn map_entries(&self, f: impl Fn(C64) -> C64) -> LaurentLoop {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x = f(*x));
        out
    }
}

/// Wire format: `{n, kmin, kmax, coeffs: [[re, im], ...]}` with coefficients
/// ordered by frequency, each block row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopJson {
    n: usize,
    kmin: i32,
    kmax: i32,
    coeffs: Vec<[f64; 2]>,
}

impl From<LaurentLoop> for LoopJson {
    fn from(l: LaurentLoop) -> Self {
        LoopJson {
            n: l.n,
            kmin: l.kmin,
            kmax: l.kmax(),
            coeffs: l.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<LoopJson> for LaurentLoop {
    type Error = String;

    fn try_from(j: LoopJson) -> std::result::Result<Self, String> {
        if j.n == 0 {
            return Err("n must be positive".into());
        }
        if j.kmax < j.kmin {
            return Err(format!("kmax {} < kmin {}", j.kmax, j.kmin));
        }
        let expected = (j.kmax - j.kmin + 1) as usize * j.n * j.n;
        if j.coeffs.len() != expected {
            return Err(format!(
                "expected {expected} coefficient entries, found {}",
                j.coeffs.len()
            ));
        }
        let trunc = DEFAULT_TRUNC
            .max(j.kmin.unsigned_abs() as usize)
            .max(j.kmax.unsigned_abs() as usize);
        Ok(LaurentLoop {
            n: j.n,
            kmin: j.kmin,
            data: j.coeffs.iter().map(|&[re, im]| c64(re, im)).collect(),
            trunc,
        })
    }
}

/// Product with a discarded-mass estimate; sizes must agree.
pub fn loop_mul(a: &LaurentLoop, b: &LaurentLoop) -> Result<(LaurentLoop, f64)> {
    a.mul_report(b)
}
