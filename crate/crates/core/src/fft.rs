//! Real-sequence convolution and autocorrelation on top of `rustfft`.
//!
//! Inputs shorter than [`DIRECT_CUTOFF`] in either operand are handled by the
//! quadratic direct sum, which is exact up to ordinary summation round-off.
//! Longer inputs go through a zero-padded power-of-two complex FFT. The FFT
//! path carries an absolute error of roughly `1e-16 * log2(len) * max|x|` per
//! output entry, which is what the trimming threshold in
//! [`crate::distributions`] is sized against.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Below this operand length the direct sum is both faster and more accurate.
pub const DIRECT_CUTOFF: usize = 32;

fn padded_len(required: usize) -> usize {
    required.next_power_of_two()
}

fn forward(data: &[f64], len: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    buf
}

fn inverse_real(mut buf: Vec<Complex64>, keep: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let len = buf.len();
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    buf.iter().take(keep).map(|z| z.re * scale).collect()
}

/// Linear convolution of two real sequences; output length `a.len() + b.len() - 1`.
pub fn convolve_real(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) < DIRECT_CUTOFF {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let len = padded_len(out_len);
    let mut planner = FftPlanner::new();
    let fa = forward(a, len, &mut planner);
    let fb = forward(b, len, &mut planner);
    let prod = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    inverse_real(prod, out_len, &mut planner)
}

/// `a ⊛ a` with a single forward transform.
pub fn square_real(a: &[f64]) -> Vec<f64> {
    if a.len() < DIRECT_CUTOFF {
        return convolve_real(a, a);
    }
    let out_len = 2 * a.len() - 1;
    let len = padded_len(out_len);
    let mut planner = FftPlanner::new();
    let fa = forward(a, len, &mut planner);
    let prod = fa.iter().map(|x| x * x).collect();
    inverse_real(prod, out_len, &mut planner)
}

/// One-sided autocorrelation `r[k] = Σ_n a[n] a[n + k]` for `k = 0..a.len()`.
pub fn autocorrelation(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    if n < 4 * DIRECT_CUTOFF {
        return (0..n).map(|k| a[..n - k].iter().zip(&a[k..]).map(|(x, y)| x * y).sum()).collect();
    }
    let len = padded_len(2 * n - 1);
    let mut planner = FftPlanner::new();
    let fa = forward(a, len, &mut planner);
    let power = fa.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
    inverse_real(power, n, &mut planner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[i + j] += a[i] * b[j];
            }
        }
        out
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let a: Vec<f64> = (0..100).map(|i| ((i * 37 % 11) as f64) / 11.0).collect();
        let b: Vec<f64> = (0..77).map(|i| ((i * 13 % 7) as f64) / 7.0).collect();
        let fast = convolve_real(&a, &b);
        let slow = direct_conv(&a, &b);
        assert_eq!(fast.len(), slow.len());
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        let sq = square_real(&a);
        for (x, y) in sq.iter().zip(&direct_conv(&a, &a)) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn autocorrelation_fft_matches_direct() {
        let a: Vec<f64> = (0..300).map(|i| (i as f64 * 0.01).sin().abs()).collect();
        let fast = autocorrelation(&a);
        for k in [0usize, 1, 7, 150, 299] {
            let direct: f64 = (0..a.len() - k).map(|n| a[n] * a[n + k]).sum();
            assert!((fast[k] - direct).abs() < 1e-9);
        }
    }
}
