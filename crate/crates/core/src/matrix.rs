//! Dense complex matrices and the finite-dimensional factorizations used by
//! every other module.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense `rows × cols` double-precision complex matrix.
pub type ComplexMatrix = DMatrix<C64>;

/// Default cap on the condition number of matrices that must be invertible.
pub const DEFAULT_COND_CAP: f64 = 1e12;

/// Relative threshold below which a frame column is considered dependent.
const FRAME_RANK_TOL: f64 = 1e-10;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Matrix from real row-major entries.
pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| c64(x, 0.0)))
}

pub fn diag(entries: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

/// Elementary matrix `E_{ij}` (zero-based).
pub fn unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(n, n);
    m[(i, j)] = c64(1.0, 0.0);
    m
}

/// Entrywise complex conjugate (no transpose).
pub fn conj(m: &ComplexMatrix) -> ComplexMatrix {
    m.map(|z| z.conj())
}

pub fn unitary_defect(m: &ComplexMatrix) -> f64 {
    (m.adjoint() * m - identity(m.ncols())).norm()
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && unitary_defect(m) < tol
}

pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_defect(m) < tol
}

/// `max(‖P² − P‖, ‖P − P*‖)`.
pub fn projection_defect(p: &ComplexMatrix) -> f64 {
    (p * p - p).norm().max(hermitian_defect(p))
}

pub fn is_projection(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && projection_defect(m) < tol
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// Singular values in descending order.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn condition_number(a: &ComplexMatrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Inverse with a condition-number guard.
pub fn checked_inverse(a: &ComplexMatrix, cond_cap: f64) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "cannot invert a {}×{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let cond = condition_number(a);
    if !(cond <= cond_cap) {
        return Err(Error::Factorization(format!(
            "matrix condition number {cond:.3e} exceeds cap {cond_cap:.1e}"
        )));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("matrix is singular".into()))
}

/// Factor an invertible `A = U·B` with `U` unitary and `B` upper triangular
/// with strictly positive real diagonal.
pub fn qr_unitary_positive(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    qr_unitary_positive_with_cap(a, DEFAULT_COND_CAP)
}

pub fn qr_unitary_positive_with_cap(
    a: &ComplexMatrix,
    cond_cap: f64,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "QR needs a square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let cond = condition_number(a);
    if !(cond <= cond_cap) {
        return Err(Error::Factorization(format!(
            "condition number {cond:.3e} exceeds cap {cond_cap:.1e}"
        )));
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..a.ncols() {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c64(1.0, 0.0)
        };
        // Q ← Q·diag(phase), R ← diag(phase)* R
        for i in 0..q.nrows() {
            q[(i, k)] *= phase;
        }
        for j in 0..r.ncols() {
            r[(k, j)] *= phase.conj();
        }
        r[(k, k)] = c64(r[(k, k)].re, 0.0);
    }
    Ok((q, r))
}

/// Hermitian projection onto the column space of a full-rank frame,
/// `P = F (F*F)⁻¹ F*`.
pub fn hermitian_projection(frame: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = frame.ncols();
    let n = frame.nrows();
    if k == 0 {
        return Ok(zeros(n, n));
    }
    let s = singular_values(frame);
    let found = s.iter().filter(|&&x| x > FRAME_RANK_TOL * s[0]).count();
    if found < k || s[0] == 0.0 {
        return Err(Error::RankDeficient {
            expected: k,
            found: if s[0] == 0.0 { 0 } else { found },
        });
    }
    let gram = frame.adjoint() * frame;
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { expected: k, found })?;
    let p = frame * chol.solve(&frame.adjoint());
    Ok(symmetrize(&p))
}

pub(crate) fn symmetrize(p: &ComplexMatrix) -> ComplexMatrix {
    (p + p.adjoint()) * c64(0.5, 0.0)
}

/// Numerical image of `A`: the left singular vectors whose singular values
/// exceed `rank_tol · σ_max`. Returns the rank and an orthonormal frame.
pub fn svd_image(a: &ComplexMatrix, rank_tol: f64) -> Result<(usize, ComplexMatrix)> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be positive, got {rank_tol}"
        )));
    }
    let n = a.nrows();
    if n == 0 || a.ncols() == 0 {
        return Ok((0, zeros(n, 0)));
    }
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let smax = svd.singular_values[order[0]];
    if smax == 0.0 {
        return Ok((0, zeros(n, 0)));
    }
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > rank_tol * smax)
        .collect();
    let mut f = zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        f.set_column(c, &u.column(i));
    }
    Ok((keep.len(), f))
}

/// Orthonormal frame of the orthogonal complement of the span of `frame`.
pub fn orthogonal_complement(frame: &ComplexMatrix) -> ComplexMatrix {
    let n = frame.nrows();
    let p = if frame.ncols() == 0 {
        zeros(n, n)
    } else {
        frame * frame.adjoint()
    };
    let (_, f) = svd_image(&(identity(n) - p), 0.5).expect("positive tolerance");
    f
}

/// Orthonormal frame of `ker A`.
pub fn kernel_frame(a: &ComplexMatrix, rank_tol: f64) -> Result<ComplexMatrix> {
    let (_, row_space) = svd_image(&a.adjoint(), rank_tol)?;
    if row_space.ncols() == 0 {
        return Ok(identity(a.ncols()));
    }
    let (_, q) = qr_orthonormalize(&row_space);
    Ok(orthogonal_complement(&q))
}

/// Orthonormal frame for the column span of an arbitrary (possibly
/// rank-deficient) matrix, with the numerical rank.
pub fn qr_orthonormalize(frame: &ComplexMatrix) -> (usize, ComplexMatrix) {
    svd_image(frame, FRAME_RANK_TOL).unwrap_or((0, zeros(frame.nrows(), 0)))
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn matrix_exp(a: &ComplexMatrix) -> ComplexMatrix {
    assert!(a.is_square(), "matrix_exp needs a square matrix");
    if a.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return identity(a.nrows());
    }
    a.exp()
}


/// JSON form of a complex matrix: rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixJson(pub ComplexMatrix);

impl serde::Serialize for MatrixJson {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.0.nrows())
            .map(|r| {
                (0..self.0.ncols())
                    .map(|c| [self.0[(r, c)].re, self.0[(r, c)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for MatrixJson {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom(
                "matrix rows have differing lengths",
            ));
        }
        Ok(MatrixJson(ComplexMatrix::from_fn(nrows, ncols, |r, c| {
            c64(rows[r][c][0], rows[r][c][1])
        })))
    }
}
