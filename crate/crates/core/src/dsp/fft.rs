use num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, Result};
use crate::scalar::Real;

/// Largest transform the direct O(N²) DFT accepts.
const NAIVE_MAX_LEN: usize = 1 << 16;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Direct evaluation of `X[k] = Σ x(n)·e^(−j2πkn/N)`.
///
/// Kept as the reference transform for checking [`fft`]; the twiddle index is
/// reduced mod N before the angle is formed so large `k·n` does not lose
/// precision.
pub fn dft_naive<T: Real>(x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let n = x.len();
    if n == 0 {
        return Err(DspError::Argument("empty input".into()));
    }
    if n > NAIVE_MAX_LEN {
        return Err(DspError::Argument(format!("naive DFT limited to {NAIVE_MAX_LEN} points, got {n}")));
    }
    let step = -2.0 * std::f64::consts::PI / n as f64;
    let twiddles: Vec<Complex<T>> = (0..n)
        .map(|m| {
            let (s, c) = (step * m as f64).sin_cos();
            Complex::new(T::of(c), T::of(s))
        })
        .collect();
    Ok((0..n)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (i, xi) in x.iter().enumerate() {
                acc += *xi * twiddles[(k * i) % n];
            }
            acc
        })
        .collect())
}

/// Forward FFT of `x` truncated or zero-padded to `n_fft` points.
pub fn fft<T: Real>(x: &[Complex<T>], n_fft: usize) -> Result<Vec<Complex<T>>> {
    if !is_power_of_two(n_fft) {
        return Err(DspError::Argument(format!("n_fft must be a power of two, got {n_fft}")));
    }
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
    let m = x.len().min(n_fft);
    buf[..m].copy_from_slice(&x[..m]);
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(buf)
}

/// Unnormalized inverse transform of any length, in place. Divide by the
/// length to invert [`fft`].
pub fn ifft_in_place<T: Real>(buf: &mut [Complex<T>]) {
    if buf.is_empty() {
        return;
    }
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
}
