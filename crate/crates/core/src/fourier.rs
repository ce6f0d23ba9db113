//! Sampling loops at roots of unity and recovering coefficients by DFT.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::laurent::{LaurentLoop, DEFAULT_TOL};
use crate::matrix::{checked_inverse, ComplexMatrix, C64, DEFAULT_COND_CAP};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

/// The `s`-th of `samples` roots of unity.
pub fn root_of_unity(s: usize, samples: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * s as f64 / samples as f64)
}

/// Frequency window recovered from `samples` points: `[−⌊S/2⌋, ⌈S/2⌉−1]`.
pub fn centered_window(samples: usize) -> (i32, i32) {
    let s = samples as i32;
    (-(s / 2), (s + 1) / 2 - 1)
}

/// Values `γ(λ_s)` at `λ_s = e^{2πis/S}`, `s = 0..S`.
pub fn circle_sample(a: &LaurentLoop, samples: usize) -> Result<Vec<ComplexMatrix>> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let n = a.n();
    let nn = n * n;
    let mut buf = vec![C64::new(0.0, 0.0); nn * samples];
    // Entry e occupies buf[e*S .. (e+1)*S]; aliased frequencies accumulate.
    for k in a.kmin()..=a.kmax() {
        let m = k.rem_euclid(samples as i32) as usize;
        let block = a.block(k).unwrap();
        for (e, &x) in block.iter().enumerate() {
            buf[e * samples + m] += x;
        }
    }
    let fft = plan(samples, false);
    for chunk in buf.chunks_exact_mut(samples) {
        fft.process(chunk);
    }
    Ok((0..samples)
        .map(|s| ComplexMatrix::from_fn(n, n, |i, j| buf[(i * n + j) * samples + s]))
        .collect())
}

/// Coefficients on the window `[lo, hi]` from values at the `S` roots of unity.
pub fn coeff_recover(
    values: &[ComplexMatrix],
    lo: i32,
    hi: i32,
    trunc: usize,
) -> Result<LaurentLoop> {
    let samples = values.len();
    if samples == 0 {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if hi < lo {
        return Err(Error::InvalidInput(format!("empty window [{lo}, {hi}]")));
    }
    let width = (hi - lo + 1) as usize;
    if width > samples {
        return Err(Error::InvalidInput(format!(
            "{samples} samples cannot resolve {width} frequencies"
        )));
    }
    let n = values[0].nrows();
    let nn = n * n;
    let mut buf = vec![C64::new(0.0, 0.0); nn * samples];
    for (s, v) in values.iter().enumerate() {
        if v.nrows() != n || v.ncols() != n {
            return Err(Error::Dimension("samples have differing sizes".into()));
        }
        for i in 0..n {
            for j in 0..n {
                buf[(i * n + j) * samples + s] = v[(i, j)];
            }
        }
    }
    let fft = plan(samples, true);
    for chunk in buf.chunks_exact_mut(samples) {
        fft.process(chunk);
    }
    let scale = 1.0 / samples as f64;
    let mut data = Vec::with_capacity(width * nn);
    for k in lo..=hi {
        let m = k.rem_euclid(samples as i32) as usize;
        for e in 0..nn {
            data.push(buf[e * samples + m] * scale);
        }
    }
    Ok(LaurentLoop::from_raw(n, lo, data, trunc))
}

/// Sample-then-recover round trip on the centered window.
///
/// Returns the recovered loop and the coefficient defect against `a`, which is
/// positive exactly when the sample count aliases the bandwidth.
pub fn round_trip(a: &LaurentLoop, samples: usize) -> Result<(LaurentLoop, f64)> {
    let bandwidth = a.kmin().unsigned_abs().max(a.kmax().unsigned_abs()) as usize;
    if samples < bandwidth.max(1) {
        return Err(Error::InvalidInput(format!(
            "{samples} samples is below the bandwidth {bandwidth}"
        )));
    }
    let values = circle_sample(a, samples)?;
    let (lo, hi) = centered_window(samples);
    let rec = coeff_recover(&values, lo, hi, a.trunc())?;
    let defect = rec.coeff_distance(a);
    Ok((rec, defect))
}

/// Loop whose values at the `S` roots of unity are `f(λ_s)`, recovered on the
/// centered window and truncated to `|k| ≤ trunc`.
pub fn from_circle_fn(
    n: usize,
    samples: usize,
    trunc: usize,
    mut f: impl FnMut(C64) -> Result<ComplexMatrix>,
) -> Result<LaurentLoop> {
    let values = (0..samples)
        .map(|s| {
            let v = f(root_of_unity(s, samples))?;
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::Dimension(format!(
                    "sample is {}×{}, expected {n}×{n}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = centered_window(samples);
    let t = trunc as i32;
    coeff_recover(&values, lo.max(-t), hi.min(t), trunc)
}

/// `max ‖f(λ)‖_F` over `count` points of S¹ offset by half a step from the
/// roots of unity, so that a DFT-exact fit cannot hide aliasing.
pub fn midpoint_sup(count: usize, f: impl Fn(C64) -> f64) -> f64 {
    (0..count)
        .map(|s| {
            f(C64::from_polar(
                1.0,
                2.0 * PI * (s as f64 + 0.5) / count as f64,
            ))
        })
        .fold(0.0, f64::max)
}

/// Default sample count for a loop: `4M` rounded up to a power of two.
pub fn default_samples(a: &LaurentLoop) -> usize {
    let width = (a.kmax() - a.kmin()) as usize;
    (4 * a.trunc()).max(2 * width + 1).next_power_of_two()
}

/// Pointwise inverse on S¹; see [`loop_inverse_with`].
pub fn loop_inverse(a: &LaurentLoop, samples: usize) -> Result<LaurentLoop> {
    loop_inverse_with(a, samples, DEFAULT_TOL).map(|(inv, _)| inv)
}

/// Inverts at `samples` roots of unity, recovers the coefficients with
/// `|k| ≤ M`, and checks `‖a·a⁻¹ − I‖` at the midpoints between samples.
pub fn loop_inverse_with(a: &LaurentLoop, samples: usize, tol: f64) -> Result<(LaurentLoop, f64)> {
    let width = (a.kmax() - a.kmin()) as usize;
    if samples < 2 * width + 1 {
        return Err(Error::InvalidInput(format!(
            "{samples} samples is below the {} needed for the coefficient window",
            2 * width + 1
        )));
    }
    let values = circle_sample(a, samples)?;
    let inverted = values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            checked_inverse(v, DEFAULT_COND_CAP).map_err(|_| Error::SingularSample {
                lambda: root_of_unity(s, samples),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = centered_window(samples);
    let m = a.trunc() as i32;
    let inv = coeff_recover(&inverted, lo.max(-m), hi.min(m), a.trunc())?.trim(1e-17);
    let n = a.n();
    let id = ComplexMatrix::identity(n, n);
    let residual = midpoint_sup(samples, |lam| {
        (a.eval(lam).unwrap() * inv.eval(lam).unwrap() - &id).norm()
    });
    if residual > tol {
        return Err(Error::Aliasing { residual, tol });
    }
    Ok((inv, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c64, from_real, identity, unit};

    #[test]
    fn constant_loop_recovered_from_any_sample_count() {
        let a = LaurentLoop::constant(&from_real(2, 2, &[1.0, 2.0, -3.0, 0.5]), 8);
        for s in 1..6 {
            let (_, d) = round_trip(&a, s).unwrap();
            assert!(d < 1e-15, "samples {s}: {d}");
        }
    }

    #[test]
    fn nyquist_and_aliasing() {
        let coeffs = (0..5)
            .map(|k| identity(2) * c64(1.0 + k as f64, -0.5))
            .collect();
        let bw2 = LaurentLoop::new(2, -2, coeffs, 8).unwrap();
        assert!(round_trip(&bw2, 8).unwrap().1 < 1e-14);
        let coeffs = (0..11)
            .map(|k| unit(2, 0, 1) * c64(1.0, k as f64))
            .collect();
        let bw5 = LaurentLoop::new(2, -5, coeffs, 8).unwrap();
        assert!(round_trip(&bw5, 8).unwrap().1 > 0.1);
        assert!(round_trip(&bw5, 4).is_err());
    }

    #[test]
    fn sampling_matches_eval() {
        let a = LaurentLoop::new(
            2,
            -1,
            vec![unit(2, 0, 1), identity(2), unit(2, 1, 0) * c64(0.0, 2.0)],
            8,
        )
        .unwrap();
        let v = circle_sample(&a, 16).unwrap();
        for (s, m) in v.iter().enumerate() {
            assert!((m - a.eval(root_of_unity(s, 16)).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_examples() {
        let id = LaurentLoop::identity(2, 8);
        assert!(loop_inverse(&id, 32).unwrap().coeff_distance(&id) < 1e-15);

        let p = from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let g = LaurentLoop::projection_loop(&p, -1, 8);
        let expected = LaurentLoop::projection_loop(&p, 1, 8);
        assert!(loop_inverse(&g, 32).unwrap().coeff_distance(&expected) < 1e-14);

        let nil = LaurentLoop::identity(2, 8).add(&LaurentLoop::monomial(-1, &unit(2, 0, 1), 8));
        let expected =
            LaurentLoop::identity(2, 8).sub(&LaurentLoop::monomial(-1, &unit(2, 0, 1), 8));
        assert!(loop_inverse(&nil, 32).unwrap().coeff_distance(&expected) < 1e-14);
    }

    #[test]
    fn singular_sample_is_reported() {
        // 1 + λ vanishes at λ = −1, a root of unity for even sample counts.
        let a = LaurentLoop::new(1, 0, vec![identity(1), identity(1)], 8).unwrap();
        assert!(matches!(
            loop_inverse(&a, 32),
            Err(Error::SingularSample { .. })
        ));
    }

    #[test]
    fn slowly_decaying_inverse_is_flagged_as_aliasing() {
        // 1/(1 − 0.95λ) needs far more than 8 coefficients.
        let a =
            LaurentLoop::new(1, 0, vec![identity(1), identity(1) * c64(-0.95, 0.0)], 8).unwrap();
        assert!(matches!(loop_inverse(&a, 32), Err(Error::Aliasing { .. })));
    }
}
