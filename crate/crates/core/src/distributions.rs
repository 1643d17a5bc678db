//! Probability mass functions on contiguous integer ranges.
//!
//! [`IntDistribution`] carries number spectra, N-copy number distributions and
//! Z_d coefficient vectors. Positions are absolute integers, so convolving two
//! spectra that do not start at zero lands on the right support without any
//! bookkeeping by the caller.
//!
//! Supports are trimmed: after every derived computation, leading and trailing
//! masses below [`TRIM_THRESHOLD`] are dropped (see [`ConvolutionOptions`] to
//! change it). User-supplied vectors are only stripped of exact zeros at the
//! edges.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fft;

/// Edge masses below this are dropped from derived distributions.
pub const TRIM_THRESHOLD: f64 = 1e-15;
/// Allowed deviation of the total mass from 1 for a valid distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Mass drift above this is logged when a convolution power is renormalized.
pub const RENORM_WARN: f64 = 1e-10;
/// Mass drift above this aborts a convolution power.
pub const PRECISION_BUDGET: f64 = 1e-6;
/// Largest tail mass a discretized Gaussian may lose to truncation.
pub const GAUSSIAN_TRUNCATION_BUDGET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IntDistribution {
    offset: i64,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl IntDistribution {
    /// Validates masses (finite, nonnegative, total within [`MASS_TOLERANCE`] of 1)
    /// and strips exact zeros from both ends.
    pub fn new(offset: i64, probs: Vec<f64>) -> Result<Self> {
        if let Some((i, &x)) = probs.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidDistribution(format!("mass {x} at position {}", offset + i as i64)));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("total mass {total} is not 1")));
        }
        Ok(Self::from_trimmed(offset, probs, 0.0))
    }

    /// Same as [`IntDistribution::new`] but rescales the masses to sum to 1 first.
    pub fn normalized(offset: i64, probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDistribution(format!("total mass {total} cannot be normalized")));
        }
        Self::new(offset, probs.into_iter().map(|x| x / total).collect())
    }

    pub fn point(at: i64) -> Self {
        Self { offset: at, probs: vec![1.0] }
    }

    /// Internal constructor for derived vectors: clamps negatives (round-off)
    /// to zero and trims edge masses `<= threshold`. Never returns an empty
    /// support; if everything is below the threshold the largest entry is kept.
    pub(crate) fn from_trimmed(offset: i64, mut probs: Vec<f64>, threshold: f64) -> Self {
        for x in probs.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let first = probs.iter().position(|&x| x > threshold);
        let last = probs.iter().rposition(|&x| x > threshold);
        match (first, last) {
            (Some(lo), Some(hi)) => {
                probs.truncate(hi + 1);
                probs.drain(..lo);
                Self { offset: offset + lo as i64, probs }
            }
            _ => {
                let (arg, _) =
                    probs
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
                Self { offset: offset + arg as i64, probs: vec![1.0] }
            }
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest support point.
    pub fn end(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    pub fn support(&self) -> RangeInclusive<i64> {
        self.offset..=self.end()
    }

    /// Mass at absolute position `n` (zero off the support).
    pub fn get(&self, n: i64) -> f64 {
        if n < self.offset {
            return 0.0;
        }
        self.probs.get((n - self.offset) as usize).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Position of the first zero mass inside the support, if any.
    pub fn first_gap(&self) -> Option<i64> {
        self.probs.iter().position(|&x| x <= 0.0).map(|i| self.offset + i as i64)
    }

    /// Drops edge masses at or below `threshold` and renormalizes.
    pub fn trimmed(&self, threshold: f64) -> Self {
        let mut out = Self::from_trimmed(self.offset, self.probs.clone(), threshold);
        let total = out.total_mass();
        out.probs.iter_mut().for_each(|x| *x /= total);
        out
    }

    pub fn moments(&self) -> Moments {
        moments(self)
    }

    pub fn mean(&self) -> f64 {
        self.moments().mean
    }

    pub fn variance(&self) -> f64 {
        self.moments().variance
    }

    pub fn char_fn(&self, gamma: f64) -> Complex64 {
        char_fn(self, gamma)
    }

    pub fn amp_char_fn(&self, gamma: f64) -> Complex64 {
        amp_char_fn(self, gamma)
    }

    /// Amplitudes `√p_n` on the support.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.sqrt()).collect()
    }
}

/// Mean and variance of a Gaussian reference distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel {
    mean: f64,
    variance: f64,
}

impl GaussianModel {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
            return Err(Error::ZeroVariance(variance));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Density `exp(-(x-mean)²/(2 var)) / √(2π var)`.
    pub fn density(&self, x: f64) -> f64 {
        let z = x - self.mean;
        (-z * z / (2.0 * self.variance)).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }

    /// Integer range `mean ± width·σ`, rounded outward.
    pub fn covering_support(&self, width_sigmas: f64) -> RangeInclusive<i64> {
        let half = width_sigmas * self.std_dev();
        ((self.mean - half).floor() as i64)..=((self.mean + half).ceil() as i64)
    }

    /// Continuous mass outside `[lo - 1/2, hi + 1/2]`.
    fn mass_outside(&self, lo: i64, hi: i64) -> f64 {
        let scale = (2.0 * self.variance).sqrt();
        let below = 0.5 * erfc((self.mean - (lo as f64 - 0.5)) / scale);
        let above = 0.5 * erfc(((hi as f64 + 0.5) - self.mean) / scale);
        below + above
    }
}

/// Tunables for [`power_convolve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionOptions {
    pub trim_threshold: f64,
    /// Largest untrimmed intermediate support the squaring chain may create.
    pub max_len: usize,
}

impl Default for ConvolutionOptions {
    fn default() -> Self {
        Self { trim_threshold: TRIM_THRESHOLD, max_len: 1 << 24 }
    }
}

/// Distribution of the sum of independent draws from `a` and `b`.
pub fn convolve(a: &IntDistribution, b: &IntDistribution) -> IntDistribution {
    let probs = fft::convolve_real(&a.probs, &b.probs);
    IntDistribution::from_trimmed(a.offset + b.offset, probs, TRIM_THRESHOLD)
}

/// `p` convolved with itself `n` times, with default options.
pub fn power_convolve(p: &IntDistribution, n: u64) -> Result<IntDistribution> {
    power_convolve_with(p, n, &ConvolutionOptions::default())
}

/// Exponentiation by squaring over FFT convolutions. Each intermediate is
/// clamped at zero and trimmed; the result is renormalized, with a warning
/// logged if the drift exceeds [`RENORM_WARN`] and an error if it exceeds
/// [`PRECISION_BUDGET`].
pub fn power_convolve_with(p: &IntDistribution, n: u64, opts: &ConvolutionOptions) -> Result<IntDistribution> {
    if n == 0 {
        return Err(Error::InvalidArgument("copy count must be at least 1".into()));
    }
    let check = |len: usize| {
        if len > opts.max_len {
            Err(Error::ResourceExhausted { required: len, cap: opts.max_len })
        } else {
            Ok(())
        }
    };
    if p.len() == 1 {
        return Ok(IntDistribution::point(p.offset * n as i64));
    }

    let mut result: Option<IntDistribution> = None;
    let mut base = p.clone();
    let mut remaining = n;
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(acc) => {
                    check(acc.len() + base.len() - 1)?;
                    let probs = fft::convolve_real(&acc.probs, &base.probs);
                    IntDistribution::from_trimmed(acc.offset + base.offset, probs, opts.trim_threshold)
                }
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        check(2 * base.len() - 1)?;
        let probs = fft::square_real(&base.probs);
        base = IntDistribution::from_trimmed(2 * base.offset, probs, opts.trim_threshold);
    }

    let mut out = result.expect("n >= 1");
    let total = out.total_mass();
    let deviation = (total - 1.0).abs();
    if deviation > PRECISION_BUDGET {
        return Err(Error::PrecisionLoss { deviation, budget: PRECISION_BUDGET });
    }
    if deviation > RENORM_WARN {
        log::warn!("convolution power n={n}: renormalizing after mass drift {deviation:e}");
    }
    out.probs.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Exact mean and central second moment, normalized by the total mass.
pub fn moments(p: &IntDistribution) -> Moments {
    let total = p.total_mass();
    let rel_mean: f64 = p.probs.iter().enumerate().map(|(k, &x)| k as f64 * x).sum::<f64>() / total;
    let variance: f64 = p
        .probs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let d = k as f64 - rel_mean;
            d * d * x
        })
        .sum::<f64>()
        / total;
    Moments { mean: p.offset as f64 + rel_mean, variance }
}

/// Discretized Gaussian `P_n` on `support`, renormalized to unit mass.
///
/// Fails when more than [`GAUSSIAN_TRUNCATION_BUDGET`] of the continuous mass
/// lies outside the half-integer-padded support.
pub fn gaussian_pmf(model: &GaussianModel, support: RangeInclusive<i64>) -> Result<IntDistribution> {
    let (lo, hi) = (*support.start(), *support.end());
    if hi < lo {
        return Err(Error::InvalidArgument(format!("empty support {lo}..={hi}")));
    }
    let truncated = model.mass_outside(lo, hi);
    if truncated > GAUSSIAN_TRUNCATION_BUDGET {
        return Err(Error::SupportTooNarrow { truncated, lo, hi });
    }
    let raw: Vec<f64> = (lo..=hi).map(|n| model.density(n as f64)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.into_iter().map(|x| x / total).collect();
    let mut out = IntDistribution::from_trimmed(lo, probs, TRIM_THRESHOLD);
    let total = out.total_mass();
    out.probs.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// [`gaussian_pmf`] on `mean ± 10σ`.
pub fn gaussian_pmf_auto(model: &GaussianModel) -> Result<IntDistribution> {
    gaussian_pmf(model, model.covering_support(10.0))
}

/// `Σ_n |a_n - b_n|` over the union of both supports.
pub fn l1_distance(a: &IntDistribution, b: &IntDistribution) -> f64 {
    let lo = a.offset.min(b.offset);
    let hi = a.end().max(b.end());
    (lo..=hi).map(|n| (a.get(n) - b.get(n)).abs()).sum()
}

fn phase_sum<I: Iterator<Item = f64>>(offset: i64, weights: I, gamma: f64) -> Complex64 {
    let rel: Complex64 = weights.enumerate().map(|(k, w)| Complex64::from_polar(w, k as f64 * gamma)).sum();
    rel * Complex64::from_polar(1.0, offset as f64 * gamma)
}

/// `Σ_n p_n e^{inγ}` with `n` the absolute position.
pub fn char_fn(p: &IntDistribution, gamma: f64) -> Complex64 {
    phase_sum(p.offset, p.probs.iter().copied(), gamma)
}

/// `Σ_n √p_n e^{inγ}`.
pub fn amp_char_fn(p: &IntDistribution, gamma: f64) -> Complex64 {
    phase_sum(p.offset, p.probs.iter().map(|x| x.sqrt()), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bit(q: f64) -> IntDistribution {
        IntDistribution::new(0, vec![1.0 - q, q]).unwrap()
    }

    fn assert_probs(d: &IntDistribution, offset: i64, expected: &[f64], tol: f64) {
        assert_eq!(d.offset(), offset);
        assert_eq!(d.len(), expected.len(), "{:?}", d.probs());
        for (x, y) in d.probs().iter().zip(expected) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(IntDistribution::new(0, vec![0.5, 0.4]).is_err());
        assert!(IntDistribution::new(0, vec![1.1, -0.1]).is_err());
        assert!(IntDistribution::new(0, vec![f64::NAN, 1.0]).is_err());
        assert!(IntDistribution::new(0, vec![]).is_err());
    }

    #[test]
    fn strips_edge_zeros_keeps_interior() {
        let d = IntDistribution::new(3, vec![0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(d.offset(), 4);
        assert_eq!(d.len(), 3);
        assert_eq!(d.first_gap(), Some(5));
    }

    #[test]
    fn convolve_examples() {
        assert_probs(&convolve(&bit(0.5), &bit(0.5)), 0, &[0.25, 0.5, 0.25], 1e-15);
        let p = IntDistribution::new(2, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(convolve(&p, &IntDistribution::point(0)), p);
        assert_probs(&convolve(&bit(0.1), &bit(0.1)), 0, &[0.81, 0.18, 0.01], 1e-15);
    }

    #[test]
    fn convolve_shifted_offsets_add() {
        let a = IntDistribution::new(5, vec![0.5, 0.5]).unwrap();
        let b = IntDistribution::new(-2, vec![0.25, 0.75]).unwrap();
        let c = convolve(&a, &b);
        assert_eq!(c.offset(), 3);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn power_convolve_examples() {
        let p = bit(0.5);
        assert_probs(&power_convolve(&p, 4).unwrap(), 0, &[1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0], 1e-15);
        assert_probs(&power_convolve(&p, 2).unwrap(), 0, &[0.25, 0.5, 0.25], 1e-15);
        let q = IntDistribution::new(1, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(power_convolve(&q, 1).unwrap(), q);
        assert!(power_convolve(&q, 0).is_err());
        assert_eq!(power_convolve(&IntDistribution::point(3), 7).unwrap(), IntDistribution::point(21));
    }

    #[test]
    fn power_convolve_respects_cap() {
        let opts = ConvolutionOptions { max_len: 100, ..Default::default() };
        let err = power_convolve_with(&bit(0.5), 1000, &opts).unwrap_err();
        assert!(err.is_resource_cap());
    }

    #[test]
    fn moments_examples() {
        let m = bit(0.5).moments();
        assert_eq!((m.mean, m.variance), (0.5, 0.25));
        let m = IntDistribution::point(3).moments();
        assert_eq!((m.mean, m.variance), (3.0, 0.0));
        let m = bit(0.1).moments();
        assert!((m.mean - 0.1).abs() < 1e-15 && (m.variance - 0.09).abs() < 1e-15);
    }

    #[test]
    fn gaussian_pmf_examples() {
        let std = GaussianModel::new(0.0, 1.0).unwrap();
        assert!((std.density(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let g = gaussian_pmf(&std, -10..=10).unwrap();
        for k in 1..=10 {
            assert!((g.get(k) - g.get(-k)).abs() < 1e-16);
        }
        assert!(g.mean().abs() < 1e-14);

        let model = GaussianModel::new(50.0, 100.0 * 0.25).unwrap();
        let g = gaussian_pmf_auto(&model).unwrap();
        assert!((g.variance() - 25.0).abs() / 25.0 < 1e-3);
        assert!((g.mean() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_pmf_rejects_narrow_support() {
        let model = GaussianModel::new(0.0, 4.0).unwrap();
        assert!(matches!(gaussian_pmf(&model, -4..=4), Err(Error::SupportTooNarrow { .. })));
        assert!(gaussian_pmf(&model, -13..=13).is_ok());
        assert!(GaussianModel::new(0.0, 0.0).is_err());
    }

    #[test]
    fn l1_examples() {
        let a = bit(0.3);
        assert_eq!(l1_distance(&a, &a), 0.0);
        assert_eq!(l1_distance(&IntDistribution::point(0), &IntDistribution::point(5)), 2.0);
        let b = IntDistribution::new(1, vec![0.5, 0.5]).unwrap();
        assert!((l1_distance(&bit(0.5), &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn char_fn_examples() {
        let p = IntDistribution::new(4, vec![0.1, 0.2, 0.7]).unwrap();
        assert!((char_fn(&p, 0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for gamma in [-3.0, -0.5, 0.3, PI] {
            let expected = Complex64::new(0.5, 0.0) + Complex64::from_polar(0.5, gamma);
            assert!((char_fn(&bit(0.5), gamma) - expected).norm() < 1e-15);
            let z = char_fn(&IntDistribution::point(7), gamma);
            assert!((z - Complex64::from_polar(1.0, 7.0 * gamma)).norm() < 1e-14);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn amp_char_fn_examples() {
        assert!((amp_char_fn(&IntDistribution::point(0), 1.3) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((amp_char_fn(&bit(0.5), 0.0).re - 2f64.sqrt()).abs() < 1e-15);
        assert!(amp_char_fn(&bit(0.5), PI).norm() < 1e-15);
    }
}
