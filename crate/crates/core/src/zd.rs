//! The Z_d protocol.
//!
//! N copies of `Σ_j √p_j |j⟩` reduce to the canonical representative
//! `Σ_j √c_j |j⟩` with `c_j = Pr[sum of N draws from p ≡ j mod d]`, which is
//! computed through the DFT: `ĉ_k = p̂_k^N`. The frame offset `m` is then read
//! out with the projective measurement in the Fourier basis
//! `|η_m⟩ = d^{-1/2} Σ_j ω^{mj} |j⟩`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point mass has contraction rate 1 up to this tolerance.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;
/// Default limit on `d^N` for [`brute_force_coeffs`].
pub const BRUTE_FORCE_CAP: usize = 1 << 24;

/// Pure state on the d-dimensional carrier space of the regular representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicState {
    amplitudes: Vec<Complex64>,
}

impl CyclicState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidArgument(format!("d must be at least 2, got {}", amplitudes.len())));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("state norm² is {norm}")));
        }
        Ok(Self { amplitudes })
    }

    /// `|η_m⟩`.
    pub fn fourier_basis(d: usize, m: usize) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Self { amplitudes: (0..d).map(|j| omega(d, (m * j) as i64) * s).collect() }
    }

    /// `Σ_j √p_j |j⟩`.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        validate_probs(p)?;
        Self::new(p.iter().map(|x| Complex64::new(x.sqrt(), 0.0)).collect())
    }

    pub fn d(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `U(m)|ψ⟩` with `U(m)|j⟩ = ω^{mj}|j⟩`.
    pub fn shifted(&self, m: usize) -> Self {
        let d = self.d();
        Self { amplitudes: self.amplitudes.iter().enumerate().map(|(j, a)| a * omega(d, (m * j) as i64)).collect() }
    }

    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Canonical-representative coefficients together with the contraction rate
/// of the generating single-copy distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicCoeffs {
    pub c: Vec<f64>,
    pub epsilon: f64,
}

impl CyclicCoeffs {
    pub fn d(&self) -> usize {
        self.c.len()
    }

    /// Point-mass input: the rate bound does not apply.
    pub fn is_degenerate(&self) -> bool {
        self.epsilon >= 1.0 - DEGENERATE_TOLERANCE
    }

    pub fn max_deviation_from_flat(&self) -> f64 {
        let flat = 1.0 / self.d() as f64;
        self.c.iter().map(|c| (c - flat).abs()).fold(0.0, f64::max)
    }
}

/// `ω^k` with `ω = e^{2πi/d}`; the exponent is reduced mod d first.
pub fn omega(d: usize, k: i64) -> Complex64 {
    let r = k.rem_euclid(d as i64);
    Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)
}

/// `Σ_{j<d} ω^{kj}`.
pub fn character_sum(d: usize, k: i64) -> Complex64 {
    (0..d as i64).map(|j| omega(d, k * j)).sum()
}

fn validate_probs(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::InvalidArgument(format!("d must be at least 2, got {}", p.len())));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidDistribution("negative or non-finite mass".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("total mass {total} is not 1")));
    }
    Ok(())
}

/// `p̂_k = Σ_j p_j ω^{kj}`.
pub fn dft(p: &[f64]) -> Vec<Complex64> {
    let d = p.len();
    (0..d).map(|k| p.iter().enumerate().map(|(j, &x)| omega(d, (k * j) as i64) * x).sum()).collect()
}

/// `max_{k≠0} |p̂_k|`.
pub fn contraction_rate(p: &[f64]) -> Result<f64> {
    validate_probs(p)?;
    Ok(dft(p).iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max).min(1.0))
}

/// `c_j` for N copies: inverse DFT of `p̂^N`, clamped at zero and renormalized.
pub fn canonical_coeffs(p: &[f64], n: u64) -> Result<CyclicCoeffs> {
    validate_probs(p)?;
    let d = p.len();
    let powered: Vec<Complex64> = dft(p).into_iter().map(|z| pow(z, n)).collect();
    let mut c: Vec<f64> = (0..d)
        .map(|j| {
            let s: Complex64 = powered.iter().enumerate().map(|(k, z)| z * omega(d, -((k * j) as i64))).sum();
            (s.re / d as f64).max(0.0)
        })
        .collect();
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= total);
    Ok(CyclicCoeffs { c, epsilon: contraction_rate(p)? })
}

fn pow(z: Complex64, mut n: u64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    let mut base = z;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

/// Definitional oracle: sums `Π_t p_{x_t}` over all `d^N` tuples, grouped by
/// the residue of `Σ_t x_t`.
pub fn brute_force_coeffs(p: &[f64], n: u32) -> Result<Vec<f64>> {
    brute_force_coeffs_capped(p, n, BRUTE_FORCE_CAP)
}

pub fn brute_force_coeffs_capped(p: &[f64], n: u32, cap: usize) -> Result<Vec<f64>> {
    validate_probs(p)?;
    let d = p.len();
    if n == 0 || n > 12 {
        return Err(Error::CapExceeded { required: n as usize, cap: 12 });
    }
    let count = (d as u128).pow(n);
    if count > cap as u128 {
        return Err(Error::CapExceeded { required: count.min(usize::MAX as u128) as usize, cap });
    }
    let mut c = vec![0.0; d];
    let mut digits = vec![0usize; n as usize];
    for _ in 0..count {
        let weight: f64 = digits.iter().map(|&x| p[x]).product();
        let residue = digits.iter().sum::<usize>() % d;
        c[residue] += weight;
        for digit in digits.iter_mut() {
            *digit += 1;
            if *digit < d {
                break;
            }
            *digit = 0;
        }
    }
    Ok(c)
}

/// `Pr(m₁ | m)` for every outcome `m₁`, given true offset `m_true`:
/// `(1/d) |Σ_j ω^{(m - m₁) j} √c_j|²`.
pub fn outcome_distribution(p: &[f64], n: u64, m_true: usize) -> Result<Vec<f64>> {
    let coeffs = canonical_coeffs(p, n)?;
    Ok(outcome_distribution_from(&coeffs, m_true))
}

pub fn outcome_distribution_from(coeffs: &CyclicCoeffs, m_true: usize) -> Vec<f64> {
    let d = coeffs.d();
    let amps: Vec<f64> = coeffs.c.iter().map(|c| c.sqrt()).collect();
    (0..d)
        .map(|m1| {
            let shift = m_true as i64 - m1 as i64;
            let s: Complex64 = amps.iter().enumerate().map(|(j, a)| omega(d, shift * j as i64) * *a).sum();
            s.norm_sqr() / d as f64
        })
        .collect()
}

/// `Pr(m | m)`, computed at every `m` and checked to agree.
pub fn success_probability(p: &[f64], n: u64) -> Result<f64> {
    let coeffs = canonical_coeffs(p, n)?;
    let d = coeffs.d();
    let per_offset: Vec<f64> = (0..d).map(|m| outcome_distribution_from(&coeffs, m)[m]).collect();
    let first = per_offset[0];
    if per_offset.iter().any(|x| (x - first).abs() > 1e-12) {
        return Err(Error::InvalidArgument(format!("success probability depends on the offset: {per_offset:?}")));
    }
    Ok(first)
}

/// `Σ_{m₁≠m} Pr(m₁ | m)`, summed directly to avoid cancellation against 1.
pub fn failure_probability(p: &[f64], n: u64) -> Result<f64> {
    let coeffs = canonical_coeffs(p, n)?;
    let dist = outcome_distribution_from(&coeffs, 0);
    Ok(dist.iter().skip(1).sum())
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fitted geometric decay of the failure probability against the DFT rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceFit {
    /// Least-squares slope of `ln(1 - Pr(m|m))` against N.
    pub slope: f64,
    /// `exp(intercept)`: the measured prefactor of `ε^{2N}`.
    pub prefactor: f64,
    /// `2 ln ε`.
    pub predicted_slope: f64,
    pub epsilon: f64,
}

impl ConvergenceFit {
    pub fn relative_error(&self) -> f64 {
        ((self.slope - self.predicted_slope) / self.predicted_slope).abs()
    }
}

pub fn convergence_fit(p: &[f64], ns: &[u64]) -> Result<ConvergenceFit> {
    let epsilon = contraction_rate(p)?;
    if ns.len() < 2 {
        return Err(Error::InvalidArgument("need at least two copy counts to fit".into()));
    }
    let mut xs = Vec::with_capacity(ns.len());
    let mut ys = Vec::with_capacity(ns.len());
    for &n in ns {
        let fail = failure_probability(p, n)?;
        if fail <= 0.0 {
            return Err(Error::InvalidArgument(format!("failure probability underflowed at N={n}")));
        }
        xs.push(n as f64);
        ys.push(fail.ln());
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(ConvergenceFit { slope, prefactor: intercept.exp(), predicted_slope: 2.0 * epsilon.ln(), epsilon })
}
