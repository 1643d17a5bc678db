//! U(1) estimation-preparation.
//!
//! N copies of a standard-form source `Σ √p_n |n⟩` are measured with the
//! covariant POVM seeded by the flat vector `Σ_n |n⟩`. The Born probability
//! only depends on the misalignment `γ = θ - θ₀`:
//!
//! ```text
//! posterior(γ) = |Σ_n √P_n e^{inγ}|² / 2π,      P = p^{⊛N}
//! ```
//!
//! The estimate is used to prepare M copies of a target `Σ √q_n |n⟩`, whose
//! fidelity with the correctly aligned copies is `|Σ_n Q_n e^{inγ}|²` with
//! `Q = q^{⊛M}`. Both factors are trigonometric polynomials, so the figure of
//! merit (their γ-average) is the finite inner product of their Fourier
//! coefficients, i.e. of the autocorrelations of `√P` and `Q`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::distributions::{
    amp_char_fn, char_fn, power_convolve_with, ConvolutionOptions, GaussianModel, IntDistribution,
};
use crate::error::{Error, Result};
use crate::fft;

/// Edge masses below this are cut from (possibly unbounded) input spectra.
pub const TRUNCATION_MASS: f64 = 1e-12;
/// Minimum number of grid points used by the inverse-CDF sampler.
pub const MIN_SAMPLER_GRID: usize = 4096;
/// Default terminal figure of merit for a schedule to count as converging.
pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 0.95;

/// Standard-form pure state: the number spectrum `p_n`, amplitudes `√p_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberState {
    spectrum: IntDistribution,
    truncated_mass: f64,
}

impl NumberState {
    /// Builds the standard form of a spectrum bounded below by zero. Edge masses
    /// below [`TRUNCATION_MASS`] are cut (the cut mass is kept in
    /// [`NumberState::truncated_mass`]) and the remainder must be gapless.
    pub fn standardize(raw: &IntDistribution) -> Result<Self> {
        let state = Self::truncate(raw)?;
        if let Some(position) = state.spectrum.first_gap() {
            return Err(Error::GappedSpectrum { position });
        }
        Ok(state)
    }

    /// Like [`NumberState::standardize`] but accepts gapped spectra. Only meant for
    /// exercising code paths outside the gapless hypothesis.
    pub fn standardize_allow_gaps(raw: &IntDistribution) -> Result<Self> {
        Self::truncate(raw)
    }

    fn truncate(raw: &IntDistribution) -> Result<Self> {
        let before = raw.total_mass();
        let spectrum = raw.trimmed(TRUNCATION_MASS);
        if spectrum.offset() < 0 {
            return Err(Error::NegativeOffset(spectrum.offset()));
        }
        let kept: f64 = spectrum.support().map(|n| raw.get(n)).sum();
        Ok(Self { spectrum, truncated_mass: (before - kept).max(0.0) })
    }

    pub fn spectrum(&self) -> &IntDistribution {
        &self.spectrum
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn mean(&self) -> f64 {
        self.spectrum.mean()
    }

    pub fn variance(&self) -> f64 {
        self.spectrum.variance()
    }

    /// A number eigenstate is invariant under the phase group and carries no
    /// frame information; its posterior is flat.
    pub fn is_asymmetry_free(&self) -> bool {
        self.spectrum.len() == 1
    }
}

pub fn standardize(raw: &IntDistribution) -> Result<NumberState> {
    NumberState::standardize(raw)
}

/// Posterior over the misalignment for N copies of a source state.
#[derive(Debug, Clone)]
pub struct PosteriorSpec {
    ncopy_spectrum: IntDistribution,
    n_copies: u64,
    gauss: Option<GaussianModel>,
    /// `A(k) = Σ_n √P_n √P_{n+k}`, `k >= 0`.
    coeffs: Vec<f64>,
}

impl PosteriorSpec {
    pub fn new(source: &NumberState, n_copies: u64) -> Result<Self> {
        Self::with_options(source, n_copies, &ConvolutionOptions::default())
    }

    pub fn with_options(source: &NumberState, n_copies: u64, opts: &ConvolutionOptions) -> Result<Self> {
        let ncopy_spectrum = power_convolve_with(source.spectrum(), n_copies, opts)?;
        let n = n_copies as f64;
        let gauss = GaussianModel::new(n * source.mean(), n * source.variance()).ok();
        let coeffs = fft::autocorrelation(&ncopy_spectrum.amplitudes());
        Ok(Self { ncopy_spectrum, n_copies, gauss, coeffs })
    }

    pub fn ncopy_spectrum(&self) -> &IntDistribution {
        &self.ncopy_spectrum
    }

    pub fn n_copies(&self) -> u64 {
        self.n_copies
    }

    /// Gaussian model `(Nμ_φ, Nσ_φ²)`; `None` for an asymmetry-free source.
    pub fn gauss(&self) -> Option<&GaussianModel> {
        self.gauss.as_ref()
    }

    /// Nonnegative-index Fourier coefficients of `2π · posterior`.
    pub fn fourier_coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Posterior density from its cosine series.
    pub fn density_from_coeffs(&self, gamma: f64) -> f64 {
        let tail: f64 = self.coeffs.iter().enumerate().skip(1).map(|(k, a)| a * (k as f64 * gamma).cos()).sum();
        ((self.coeffs[0] + 2.0 * tail) / (2.0 * PI)).max(0.0)
    }

    /// `∫_{-π}^{x} posterior(γ) dγ`, exact for the trigonometric polynomial.
    pub fn cdf(&self, x: f64) -> f64 {
        let tail: f64 = self.coeffs.iter().enumerate().skip(1).map(|(k, a)| a * (k as f64 * x).sin() / k as f64).sum();
        (self.coeffs[0] * (x + PI) + 2.0 * tail) / (2.0 * PI)
    }

    /// Joint density of (true offset θ₀, estimate θ) with θ₀ Haar-distributed,
    /// evaluated from the Born rule on the rotated state without reducing to γ.
    pub fn born_density(&self, theta0: f64, theta: f64) -> f64 {
        let amp: num_complex::Complex64 = self
            .ncopy_spectrum
            .support()
            .map(|n| {
                let a = self.ncopy_spectrum.get(n).sqrt();
                num_complex::Complex64::from_polar(a, n as f64 * theta0)
                    * num_complex::Complex64::from_polar(1.0, -(n as f64) * theta)
            })
            .sum();
        amp.norm_sqr() / (4.0 * PI * PI)
    }
}

/// `|Σ_n √P_n e^{inγ}|² / 2π` evaluated directly on the N-copy spectrum.
pub fn posterior_density_exact(spec: &PosteriorSpec, gamma: f64) -> f64 {
    amp_char_fn(&spec.ncopy_spectrum, gamma).norm_sqr() / (2.0 * PI)
}

/// Large-N model `√(2Nσ²/π) · exp(-2Nσ²γ²)`.
pub fn posterior_density_gauss(spec: &PosteriorSpec, gamma: f64) -> Result<f64> {
    let g = spec.gauss.ok_or(Error::ZeroVariance(0.0))?;
    let s = 2.0 * g.variance();
    Ok((s / PI).sqrt() * (-s * gamma * gamma).exp())
}

/// Total-variation distance `½∫|exact - gauss|` between the exact posterior and
/// its Gaussian model, by midpoint quadrature on `grid_points` cells.
pub fn posterior_tv_distance(spec: &PosteriorSpec, grid_points: usize) -> Result<f64> {
    let h = 2.0 * PI / grid_points as f64;
    let mut acc = 0.0;
    for i in 0..grid_points {
        let g = -PI + (i as f64 + 0.5) * h;
        acc += (spec.density_from_coeffs(g) - posterior_density_gauss(spec, g)?).abs();
    }
    Ok(0.5 * acc * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Inverse CDF of the exact posterior on a dense grid.
    Exact,
    /// Gaussian model wrapped to (-π, π].
    Gauss,
}

/// Reusable sampler for the misalignment posterior.
#[derive(Debug, Clone)]
pub struct GammaSampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Grid { cdf: Vec<f64>, step: f64 },
    Wrapped(Normal<f64>),
    Uniform,
}

impl GammaSampler {
    /// `grid_points` defaults to `max(4096, 4 · support)`.
    pub fn new(spec: &PosteriorSpec, mode: SamplingMode, grid_points: Option<usize>) -> Self {
        let kind = match mode {
            SamplingMode::Exact => {
                let g = grid_points.unwrap_or(MIN_SAMPLER_GRID.max(4 * spec.coeffs.len()));
                let step = 2.0 * PI / g as f64;
                let mut cdf: Vec<f64> = (0..=g).map(|i| spec.cdf(-PI + i as f64 * step)).collect();
                let last = cdf[g];
                let mut running: f64 = 0.0;
                for c in cdf.iter_mut() {
                    running = running.max(*c / last);
                    *c = running;
                }
                cdf[0] = 0.0;
                cdf[g] = 1.0;
                SamplerKind::Grid { cdf, step }
            }
            SamplingMode::Gauss => match spec.gauss {
                Some(g) => {
                    let std = 1.0 / (2.0 * g.variance().sqrt());
                    SamplerKind::Wrapped(Normal::new(0.0, std).expect("finite std"))
                }
                None => SamplerKind::Uniform,
            },
        };
        Self { kind }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Grid { cdf, step } => {
                let u: f64 = rng.random();
                let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
                let (lo, hi) = (cdf[i - 1], cdf[i]);
                let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
                wrap(-PI + (i as f64 - 1.0 + frac) * step)
            }
            SamplerKind::Wrapped(normal) => wrap(normal.sample(rng)),
            SamplerKind::Uniform => wrap(rng.random_range(-PI..PI)),
        }
    }
}

/// Maps an angle into (-π, π].
pub fn wrap(x: f64) -> f64 {
    let mut y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y += 2.0 * PI;
    }
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// One deterministic draw for a given seed.
pub fn sample_gamma(spec: &PosteriorSpec, rng_seed: u64, mode: SamplingMode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    GammaSampler::new(spec, mode, None).sample(&mut rng)
}

/// M-copy target with its number distribution precomputed.
#[derive(Debug, Clone)]
pub struct TargetFidelity {
    mcopy: IntDistribution,
    m_copies: u64,
}

impl TargetFidelity {
    pub fn new(target: &NumberState, m_copies: u64) -> Result<Self> {
        Self::with_options(target, m_copies, &ConvolutionOptions::default())
    }

    pub fn with_options(target: &NumberState, m_copies: u64, opts: &ConvolutionOptions) -> Result<Self> {
        let mcopy = power_convolve_with(target.spectrum(), m_copies, opts)?;
        Ok(Self { mcopy, m_copies })
    }

    pub fn mcopy_spectrum(&self) -> &IntDistribution {
        &self.mcopy
    }

    pub fn m_copies(&self) -> u64 {
        self.m_copies
    }

    /// `|Σ_n Q_n e^{inγ}|²`.
    pub fn at(&self, gamma: f64) -> f64 {
        char_fn(&self.mcopy, gamma).norm_sqr().min(1.0)
    }

    /// `B(k) = Σ_n Q_n Q_{n+k}`, `k >= 0`.
    pub fn fourier_coeffs(&self) -> Vec<f64> {
        fft::autocorrelation(self.mcopy.probs())
    }
}

pub fn fidelity_pure_exact(target: &NumberState, m_copies: u64, gamma: f64) -> Result<f64> {
    Ok(TargetFidelity::new(target, m_copies)?.at(gamma))
}

/// Gaussian fidelity model `exp(-M σ² γ²)`.
pub fn fidelity_pure_gauss(sigma_sq: f64, m_copies: u64, gamma: f64) -> f64 {
    (-(m_copies as f64) * sigma_sq * gamma * gamma).exp()
}

fn fourier_inner_product(a: &[f64], b: &[f64]) -> f64 {
    let tail: f64 = a.iter().zip(b).skip(1).map(|(x, y)| x * y).sum();
    (a[0] * b[0] + 2.0 * tail).clamp(0.0, 1.0)
}

/// Figure of merit as the exact Fourier inner product `Σ_k A(k) B(k)`.
pub fn figure_of_merit_exact(source: &NumberState, n: u64, target: &NumberState, m: u64) -> Result<f64> {
    figure_of_merit_exact_with(source, n, target, m, &ConvolutionOptions::default())
}

pub fn figure_of_merit_exact_with(
    source: &NumberState,
    n: u64,
    target: &NumberState,
    m: u64,
    opts: &ConvolutionOptions,
) -> Result<f64> {
    let posterior = PosteriorSpec::with_options(source, n, opts)?;
    let fidelity = TargetFidelity::with_options(target, m, opts)?;
    Ok(figure_of_merit_prepared(&posterior, &fidelity))
}

/// Figure of merit from precomputed pieces.
pub fn figure_of_merit_prepared(posterior: &PosteriorSpec, fidelity: &TargetFidelity) -> f64 {
    fourier_inner_product(posterior.fourier_coeffs(), &fidelity.fourier_coeffs())
}

/// Smallest uniform grid on which the rectangle rule integrates
/// `posterior · fidelity` exactly, using the untrimmed support widths:
/// `2(N·w_φ + M·w_ψ) + 2` points.
pub fn exact_quadrature_grid(source: &NumberState, n: u64, target: &NumberState, m: u64) -> usize {
    let w_src = source.spectrum().len() as u64 - 1;
    let w_tgt = target.spectrum().len() as u64 - 1;
    (2 * (n * w_src + m * w_tgt) + 2) as usize
}

/// Figure of merit by the rectangle rule on a uniform grid, evaluating the
/// posterior and fidelity pointwise from their defining sums. Exact (up to
/// round-off) whenever `grid_points` exceeds the degree of the integrand.
pub fn figure_of_merit_quadrature(
    source: &NumberState,
    n: u64,
    target: &NumberState,
    m: u64,
    grid_points: Option<usize>,
) -> Result<f64> {
    let posterior = PosteriorSpec::new(source, n)?;
    let fidelity = TargetFidelity::new(target, m)?;
    let g = grid_points.unwrap_or_else(|| exact_quadrature_grid(source, n, target, m));
    let h = 2.0 * PI / g as f64;
    let sum: f64 = (0..g)
        .into_par_iter()
        .map(|i| {
            let gamma = -PI + i as f64 * h;
            posterior_density_exact(&posterior, gamma) * fidelity.at(gamma)
        })
        .sum();
    Ok(sum * h)
}

/// Large-N, M closed form `1/√(1 + Mσ_ψ²/(2Nσ_φ²))`.
pub fn figure_of_merit_closed(sigma_phi_sq: f64, n: u64, sigma_psi_sq: f64, m: u64) -> Result<f64> {
    if sigma_phi_sq.is_nan() || sigma_phi_sq <= 0.0 {
        return Err(Error::ZeroVariance(sigma_phi_sq));
    }
    let ratio = m as f64 * sigma_psi_sq / (2.0 * n as f64 * sigma_phi_sq);
    Ok(1.0 / (1.0 + ratio).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo average of the exact fidelity over exact posterior draws.
pub fn figure_of_merit_mc(
    source: &NumberState,
    n: u64,
    target: &NumberState,
    m: u64,
    draws: usize,
    rng_seed: u64,
) -> Result<McEstimate> {
    figure_of_merit_mc_with(source, n, target, m, draws, rng_seed, &ConvolutionOptions::default(), None)
}

/// [`figure_of_merit_mc`] with explicit convolution caps and sampler grid.
#[allow(clippy::too_many_arguments)]
pub fn figure_of_merit_mc_with(
    source: &NumberState,
    n: u64,
    target: &NumberState,
    m: u64,
    draws: usize,
    rng_seed: u64,
    opts: &ConvolutionOptions,
    grid_points: Option<usize>,
) -> Result<McEstimate> {
    if draws < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 draws, got {draws}")));
    }
    let posterior = PosteriorSpec::with_options(source, n, opts)?;
    let fidelity = TargetFidelity::with_options(target, m, opts)?;
    let sampler = GammaSampler::new(&posterior, SamplingMode::Exact, grid_points);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let values: Vec<f64> = (0..draws).map(|_| fidelity.at(sampler.sample(&mut rng))).collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    Ok(McEstimate { estimate: mean, stderr: (var / draws as f64).sqrt() })
}

/// How the number of target copies M grows with N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSchedule {
    /// `M = ⌈N^a⌉`, `a ∈ (0, 1]`.
    Power(f64),
    /// `M = ⌈cN⌉`, `c > 0`.
    Linear(f64),
}

impl RateSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RateSchedule::Power(a) if !(a > 0.0 && a <= 1.0) => {
                Err(Error::InvalidArgument(format!("exponent {a} outside (0, 1]")))
            }
            RateSchedule::Linear(c) if !(c > 0.0 && c.is_finite()) => {
                Err(Error::InvalidArgument(format!("slope {c} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Target copies for `n` source copies. The ceiling forgives a relative
    /// excess of 1e-9 so that e.g. `1600^0.5` lands on 40 and not 41.
    pub fn m_for(&self, n: u64) -> u64 {
        let x = match *self {
            RateSchedule::Power(a) => (n as f64).powf(a),
            RateSchedule::Linear(c) => c * n as f64,
        };
        ((x * (1.0 - 1e-12) - 1e-9).ceil() as u64).max(1)
    }

    pub fn label(&self) -> String {
        match *self {
            RateSchedule::Power(a) => format!("M=ceil(N^{a})"),
            RateSchedule::Linear(c) => format!("M=ceil({c}*N)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: u64,
    pub m: u64,
    pub f_exact: f64,
    pub f_closed: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateVerdict {
    Converges,
    Plateaus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub label: String,
    pub verdict: RateVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    pub threshold: f64,
    pub convolution: ConvolutionOptions,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { threshold: DEFAULT_CONVERGENCE_THRESHOLD, convolution: ConvolutionOptions::default() }
    }
}

/// One schedule row; the building block of [`rate_analysis`].
pub fn rate_row(
    source: &NumberState,
    n: u64,
    target: &NumberState,
    m: u64,
    opts: &ConvolutionOptions,
) -> Result<RateRow> {
    let f_exact = figure_of_merit_exact_with(source, n, target, m, opts)?;
    let f_closed = figure_of_merit_closed(source.variance(), n, target.variance(), m)?;
    Ok(RateRow { n, m, f_exact, f_closed, gap: (f_exact - f_closed).abs() })
}

/// Tabulates the exact and closed-form figure of merit along a schedule and
/// classifies it: "converges" when the exact values strictly increase and end
/// above the threshold.
pub fn rate_analysis(
    source: &NumberState,
    target: &NumberState,
    schedule: RateSchedule,
    n_grid: &[u64],
    opts: &RateOptions,
) -> Result<RateReport> {
    schedule.validate()?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidArgument("N grid must be nonempty, positive and increasing".into()));
    }
    let rows = n_grid
        .par_iter()
        .map(|&n| rate_row(source, n, target, schedule.m_for(n), &opts.convolution))
        .collect::<Result<Vec<_>>>()?;
    let increasing = rows.windows(2).all(|w| w[1].f_exact > w[0].f_exact);
    let terminal = rows.last().map_or(0.0, |r| r.f_exact);
    let verdict = if increasing && terminal > opts.threshold { RateVerdict::Converges } else { RateVerdict::Plateaus };
    Ok(RateReport { rows, label: schedule.label(), verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(offset: i64, probs: &[f64]) -> NumberState {
        NumberState::standardize(&IntDistribution::new(offset, probs.to_vec()).unwrap()).unwrap()
    }

    fn fair() -> NumberState {
        state(0, &[0.5, 0.5])
    }

    #[test]
    fn standardize_examples() {
        let s = fair();
        assert_eq!((s.mean(), s.variance()), (0.5, 0.25));
        assert!(!s.is_asymmetry_free());
        let flat = state(0, &[1.0]);
        assert!(flat.is_asymmetry_free());
        assert_eq!(flat.variance(), 0.0);
        let gapped = IntDistribution::new(0, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(NumberState::standardize(&gapped), Err(Error::GappedSpectrum { position: 1 }));
        assert!(NumberState::standardize_allow_gaps(&gapped).is_ok());
        let neg = IntDistribution::new(-1, vec![0.5, 0.5]).unwrap();
        assert_eq!(NumberState::standardize(&neg), Err(Error::NegativeOffset(-1)));
    }

    #[test]
    fn standardize_truncates_long_tails() {
        // geometric spectrum cut at a finite length standing in for an unbounded one
        let probs: Vec<f64> = (0..80).map(|n| 0.5f64.powi(n + 1)).collect();
        let raw = IntDistribution::normalized(0, probs).unwrap();
        let s = NumberState::standardize(&raw).unwrap();
        assert!(s.spectrum().len() < 80);
        assert!(s.truncated_mass() > 0.0 && s.truncated_mass() < 1e-11);
        assert!((s.spectrum().total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn posterior_single_fair_bit() {
        let spec = PosteriorSpec::new(&fair(), 1).unwrap();
        for g in [-3.0, -1.0, 0.0, 0.4, PI] {
            let expected = (1.0 + f64::cos(g)) / (2.0 * PI);
            assert!((posterior_density_exact(&spec, g) - expected).abs() < 1e-15);
            assert!((spec.density_from_coeffs(g) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_asymmetry_free_is_flat() {
        let spec = PosteriorSpec::new(&state(3, &[1.0]), 10).unwrap();
        for g in [-2.0, 0.0, 1.5] {
            assert!((posterior_density_exact(&spec, g) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
        assert!(spec.gauss().is_none());
        assert!(matches!(posterior_density_gauss(&spec, 0.0), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn posterior_peaks_at_zero() {
        let spec = PosteriorSpec::new(&state(0, &[0.2, 0.5, 0.3]), 7).unwrap();
        let peak = posterior_density_exact(&spec, 0.0);
        for i in 1..2048 {
            let g = -PI + i as f64 * 2.0 * PI / 2048.0;
            assert!(posterior_density_exact(&spec, g) <= peak + 1e-15);
        }
    }

    #[test]
    fn posterior_gauss_examples() {
        let spec = PosteriorSpec::new(&fair(), 100).unwrap();
        assert!((posterior_density_gauss(&spec, 0.0).unwrap() - (50.0 / PI).sqrt()).abs() < 1e-12);
        assert!((posterior_density_gauss(&spec, 0.0).unwrap() - 3.98942).abs() < 1e-5);
        assert!(posterior_density_gauss(&spec, 3.1).unwrap() < 1e-100);
        assert_eq!(posterior_density_gauss(&spec, 0.3).unwrap(), posterior_density_gauss(&spec, -0.3).unwrap());
    }

    #[test]
    fn cdf_matches_numerical_integral() {
        let spec = PosteriorSpec::new(&state(0, &[0.3, 0.7]), 5).unwrap();
        assert!(spec.cdf(-PI).abs() < 1e-15);
        assert!((spec.cdf(PI) - 1.0).abs() < 1e-14);
        let steps = 20000;
        let h = (0.7 + PI) / steps as f64;
        let simpson: f64 = (0..steps)
            .map(|i| {
                let a = -PI + i as f64 * h;
                h / 6.0
                    * (spec.density_from_coeffs(a)
                        + 4.0 * spec.density_from_coeffs(a + h / 2.0)
                        + spec.density_from_coeffs(a + h))
            })
            .sum();
        assert!((spec.cdf(0.7) - simpson).abs() < 1e-12);
    }

    #[test]
    fn born_probability_depends_only_on_difference() {
        let spec = PosteriorSpec::new(&state(0, &[0.2, 0.5, 0.3]), 6).unwrap();
        for &(t0, t) in &[(0.0, 0.4), (1.1, 1.5), (-2.0, -1.6), (3.0, 3.4)] {
            let joint = spec.born_density(t0, t);
            assert!((joint - posterior_density_exact(&spec, t - t0) / (2.0 * PI)).abs() < 1e-14);
            assert!((joint - spec.born_density(0.0, 0.4)).abs() < 1e-14);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let spec = PosteriorSpec::new(&fair(), 50).unwrap();
        for mode in [SamplingMode::Exact, SamplingMode::Gauss] {
            let a = sample_gamma(&spec, 42, mode);
            assert_eq!(a.to_bits(), sample_gamma(&spec, 42, mode).to_bits());
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn wrap_range() {
        for x in [-10.0, -PI, -3.0, 0.0, PI, 4.0, 100.0] {
            let y = wrap(x);
            assert!(y > -PI && y <= PI, "{x} -> {y}");
            assert!(((x - y) / (2.0 * PI) - ((x - y) / (2.0 * PI)).round()).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let t = state(0, &[0.2, 0.3, 0.5]);
        assert!((fidelity_pure_exact(&t, 9, 0.0).unwrap() - 1.0).abs() < 1e-14);
        for g in [-2.0, 0.3, 1.0] {
            let expected = (g / 2.0f64).cos().powi(2);
            assert!((fidelity_pure_exact(&fair(), 1, g).unwrap() - expected).abs() < 1e-15);
        }
        let f = fidelity_pure_exact(&fair(), 100, 0.1).unwrap();
        assert!((f - (-0.25f64).exp()).abs() < 0.02);
        // the fair-bit M-copy fidelity is cos^{2M}(γ/2)
        assert!((f - (0.05f64).cos().powi(200)).abs() < 1e-12);
    }

    #[test]
    fn fidelity_gauss_examples() {
        assert_eq!(fidelity_pure_gauss(0.3, 10, 0.0), 1.0);
        assert_eq!(fidelity_pure_gauss(0.0, 10, 2.0), 1.0);
        assert!((fidelity_pure_gauss(0.25, 100, 0.1) - 0.778_800_783_071_404_9).abs() < 1e-15);
    }

    #[test]
    fn figure_of_merit_examples() {
        let flat = state(0, &[1.0]);
        assert!((figure_of_merit_exact(&fair(), 40, &flat, 7).unwrap() - 1.0).abs() < 1e-14);
        assert!((figure_of_merit_exact(&flat, 5, &fair(), 1).unwrap() - 0.5).abs() < 1e-15);
        let f = figure_of_merit_exact(&fair(), 800, &fair(), 100).unwrap();
        assert!((f - 1.0 / 1.0625f64.sqrt()).abs() < 0.05, "{f}");
    }

    #[test]
    fn figure_of_merit_closed_examples() {
        assert_eq!(figure_of_merit_closed(0.25, 10, 0.0, 5).unwrap(), 1.0);
        assert!((figure_of_merit_closed(0.25, 800, 0.25, 100).unwrap() - 0.970_142_500_145_332).abs() < 1e-12);
        for n in [10, 1000, 100_000] {
            assert!((figure_of_merit_closed(0.25, n, 0.25, n).unwrap() - 1.0 / 1.5f64.sqrt()).abs() < 1e-15);
        }
        assert!(figure_of_merit_closed(0.0, 1, 0.25, 1).is_err());
    }

    #[test]
    fn mc_trivial_cases() {
        let flat = state(0, &[1.0]);
        let est = figure_of_merit_mc(&fair(), 64, &flat, 8, 500, 3).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.stderr, 0.0);
        let a = figure_of_merit_mc(&fair(), 64, &fair(), 8, 500, 3).unwrap();
        let b = figure_of_merit_mc(&fair(), 64, &fair(), 8, 500, 3).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert!(figure_of_merit_mc(&fair(), 64, &fair(), 8, 99, 3).is_err());
    }

    #[test]
    fn schedule_arithmetic() {
        let s = RateSchedule::Power(0.5);
        assert_eq!([400, 1600, 6400].map(|n| s.m_for(n)), [20, 40, 80]);
        assert_eq!(RateSchedule::Power(0.8).m_for(100_000), 10_000);
        assert_eq!(RateSchedule::Power(0.5).m_for(401), 21);
        assert_eq!(RateSchedule::Linear(1.0).m_for(2000), 2000);
        assert_eq!(RateSchedule::Linear(0.5).m_for(3), 2);
        assert!(RateSchedule::Power(1.5).validate().is_err());
        assert!(RateSchedule::Linear(0.0).validate().is_err());
    }

    #[test]
    fn rate_analysis_rejects_bad_grid() {
        let opts = RateOptions::default();
        assert!(rate_analysis(&fair(), &fair(), RateSchedule::Power(0.5), &[], &opts).is_err());
        assert!(rate_analysis(&fair(), &fair(), RateSchedule::Power(0.5), &[10, 5], &opts).is_err());
        let capped = RateOptions { convolution: ConvolutionOptions { max_len: 64, ..Default::default() }, ..opts };
        let err = rate_analysis(&fair(), &fair(), RateSchedule::Power(0.5), &[1000], &capped).unwrap_err();
        assert!(err.is_resource_cap());
    }
}
