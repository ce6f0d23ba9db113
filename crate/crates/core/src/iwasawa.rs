//! Iwasawa factorization `γ = Φ·b` with `Φ ∈ ΩU(n)` and `b ∈ Λ₊GL(n,ℂ)`.
//!
//! In the Grassmannian model `γH₊ = ΦH₊`, so the part of `γe_i` orthogonal to
//! `γλH₊` is `Φ b₀ e_i`. We truncate `λH₊` to `λ, …, λ^N`, run a banded
//! Householder QR on the block-Toeplitz matrix of multiplication by `γ` with
//! the columns `γe_i` last, and read `Φ` (up to a constant unitary) off the
//! trailing columns of `Q`. Re-basing at `λ = 1` removes the constant.

use crate::error::{Error, Result};
use crate::laurent::LaurentLoop;
use crate::matrix::{checked_inverse, C64, DEFAULT_COND_CAP};

#[derive(Clone, Copy, Debug)]
pub struct IwasawaOptions {
    /// Working truncation `M`; at most `2M` shifts are used.
    pub trunc: usize,
    /// Acceptance threshold for the unitarity, plus-part and round-trip defects.
    pub tol: f64,
}

impl Default for IwasawaOptions {
    fn default() -> Self {
        IwasawaOptions {
            trunc: 32,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Iwasawa {
    pub phi: LaurentLoop,
    pub b: LaurentLoop,
    /// `Σ_k ‖(γ − Φb)_k‖`, bounding the sup-norm residual on S¹.
    pub residual: f64,
    /// `Σ_k ‖(Φ†Φ − I)_k‖`.
    pub unitary_defect: f64,
    pub based_defect: f64,
    /// Largest negative-frequency coefficient of `Φ†γ` before it was dropped.
    pub plus_defect: f64,
    /// Number of shifts `N` that met the tolerance.
    pub shifts: usize,
}

/// Factorizes with the default tolerance and truncation `trunc`.
pub fn iwasawa_factorize(gamma: &LaurentLoop, trunc: usize) -> Result<(LaurentLoop, LaurentLoop)> {
    let it = iwasawa_with(
        gamma,
        &IwasawaOptions {
            trunc,
            ..Default::default()
        },
    )?;
    Ok((it.phi, it.b))
}

pub fn iwasawa_with(gamma: &LaurentLoop, opts: &IwasawaOptions) -> Result<Iwasawa> {
    let gamma = gamma.clone().trim(1e-17);
    let bw = (gamma.kmax() - gamma.kmin()) as usize;
    let max_shifts = (2 * opts.trunc).max(bw + 4);
    let mut shifts = (2 * bw + 8).min(max_shifts);
    let scale = gamma.l1_norm().max(1.0);
    loop {
        let it = factor_once(&gamma, shifts, opts.trunc)?;
        let ok = it.unitary_defect < opts.tol
            && it.based_defect < opts.tol
            && it.plus_defect < opts.tol * scale
            && it.residual < opts.tol * scale;
        if ok {
            return Ok(it);
        }
        if shifts >= max_shifts {
            return Err(Error::Truncation(format!(
                "Iwasawa factorization with {shifts} shifts: unitarity {:.2e}, basedness {:.2e}, \
                 plus-part {:.2e}, residual {:.2e} (tolerance {:.1e}); increase the truncation",
                it.unitary_defect, it.based_defect, it.plus_defect, it.residual, opts.tol
            )));
        }
        shifts = (2 * shifts).min(max_shifts);
    }
}

/// Householder reflector `I − 2vv†` acting on rows `start..start+v.len()`.
struct Reflector {
    start: usize,
    v: Vec<C64>,
}

impl Reflector {
    fn apply(&self, col: &mut [C64]) {
        let seg = &mut col[self.start..self.start + self.v.len()];
        let dot: C64 = self
            .v
            .iter()
            .zip(seg.iter())
            .map(|(v, x)| v.conj() * x)
            .sum();
        if dot == C64::new(0.0, 0.0) {
            return;
        }
        let s = dot * 2.0;
        for (x, v) in seg.iter_mut().zip(&self.v) {
            *x -= v * s;
        }
    }
}

fn factor_once(gamma: &LaurentLoop, shifts: usize, trunc: usize) -> Result<Iwasawa> {
    let n = gamma.n();
    let bw = (gamma.kmax() - gamma.kmin()) as usize;
    let rows = (bw + shifts + 1) * n;
    let cols = (shifts + 1) * n;
    let kmin = gamma.kmin();

    // Column-major; shifted columns first, then the unshifted γe_i.
    let mut a = vec![C64::new(0.0, 0.0); rows * cols];
    let place = |col: usize, shift: usize, i: usize, a: &mut [C64]| {
        for f in 0..=bw {
            let block = gamma.block(kmin + f as i32).unwrap();
            for r in 0..n {
                a[col * rows + (f + shift) * n + r] = block[r * n + i];
            }
        }
    };
    for j in 1..=shifts {
        for i in 0..n {
            place((j - 1) * n + i, j, i, &mut a);
        }
    }
    for i in 0..n {
        place(shifts * n + i, 0, i, &mut a);
    }

    let scale = gamma.l2_norm();
    let mut reflectors = Vec::with_capacity(cols);
    for c in 0..cols {
        // Last row that can be nonzero in column c at this stage.
        let end = if c < shifts * n {
            (c / n + 2 + bw) * n
        } else {
            rows
        };
        let x = &a[c * rows + c..c * rows + end];
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-13 * scale {
            return Err(Error::Factorization(
                "multiplication operator is singular; the loop is not invertible on S¹".into(),
            ));
        }
        let phase = if x[0].norm() > 0.0 {
            x[0] / x[0].norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let alpha = -phase * norm;
        let mut v: Vec<C64> = x.to_vec();
        v[0] -= alpha;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vn);
        let refl = Reflector { start: c, v };
        // Shifted columns beyond the band are still zero on these rows.
        let band_end = ((c / n + bw + 2) * n).min(shifts * n);
        for c2 in (c..band_end).chain((shifts * n).max(c)..cols) {
            refl.apply(&mut a[c2 * rows..(c2 + 1) * rows]);
        }
        reflectors.push(refl);
    }

    // Trailing columns of Q: Q e_c = H_0 ⋯ H_{p−1} e_c.
    let mut phi_data = vec![C64::new(0.0, 0.0); (bw + shifts + 1) * n * n];
    for i in 0..n {
        let c = shifts * n + i;
        let mut q = vec![C64::new(0.0, 0.0); rows];
        q[c] = C64::new(1.0, 0.0);
        for refl in reflectors.iter().rev() {
            refl.apply(&mut q);
        }
        for f in 0..=(bw + shifts) {
            for r in 0..n {
                phi_data[f * n * n + r * n + i] = q[f * n + r];
            }
        }
    }
    let raw = LaurentLoop::from_raw(n, kmin, phi_data, trunc);
    let at_one = raw.eval(C64::new(1.0, 0.0))?;
    let rebase = checked_inverse(&at_one, DEFAULT_COND_CAP)?;
    let mut phi = raw.right_mul(&rebase).trim(1e-17);
    let phi_lost = phi.truncate_to(trunc.max(gamma.kmax().unsigned_abs() as usize));

    let phi_dag = phi.adjoint_circle();
    let full_b = phi_dag.mul_full(gamma);
    let plus_defect = full_b.mass_below(0);
    let b = full_b.keep_from(0).with_trunc(trunc);

    let id = LaurentLoop::identity(n, trunc);
    let unitary_defect = phi_dag.mul_full(&phi).sub(&id).l1_norm();
    let based_defect = phi.based_defect();
    let residual = gamma.sub(&phi.mul_full(&b)).l1_norm() + phi_lost;
    Ok(Iwasawa {
        phi: phi.with_trunc(trunc),
        b,
        residual,
        unitary_defect,
        based_defect,
        plus_defect,
        shifts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{from_real, identity, unit};

    #[test]
    fn plus_loops_have_trivial_unitary_part() {
        // det b = 2 − λ, so b⁻¹ decays like 2^{−k} and needs about 40 shifts.
        let b = LaurentLoop::new(
            2,
            0,
            vec![from_real(2, 2, &[2.0, 1.0, 0.0, 1.0]), unit(2, 1, 0)],
            32,
        )
        .unwrap();
        let it = iwasawa_with(
            &b,
            &IwasawaOptions {
                trunc: 32,
                tol: 1e-11,
            },
        )
        .unwrap();
        assert!(it.phi.coeff_distance(&LaurentLoop::identity(2, 32)) < 1e-11);
        assert!(it.b.coeff_distance(&b) < 1e-11);
    }

    #[test]
    fn projection_loop_is_already_unitary() {
        let p = from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let g = LaurentLoop::projection_loop(&p, -1, 16);
        let (phi, b) = iwasawa_factorize(&g, 16).unwrap();
        // γ(1) = I, so γ itself is the based unitary factor.
        assert!(phi.coeff_distance(&g) < 1e-11);
        assert!(b.coeff_distance(&LaurentLoop::identity(2, 16)) < 1e-11);
    }

    #[test]
    fn nilpotent_loop_factors() {
        let g = LaurentLoop::identity(2, 32).add(&LaurentLoop::monomial(-1, &unit(2, 0, 1), 32));
        let it = iwasawa_with(&g, &IwasawaOptions::default()).unwrap();
        assert!(it.residual < 1e-9 && it.unitary_defect < 1e-10);
        assert!(it.phi.is_based(1e-10));
        assert!(it.b.kmin() >= 0);
    }

    #[test]
    fn singular_loop_is_rejected() {
        let g = LaurentLoop::new(1, 0, vec![identity(1), identity(1)], 8).unwrap();
        assert!(iwasawa_with(
            &g,
            &IwasawaOptions {
                trunc: 8,
                tol: 1e-10
            }
        )
        .is_err());
    }
}
