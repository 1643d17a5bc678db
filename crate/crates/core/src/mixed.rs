//! Mixed targets `τ = Σ_k t_k |ψ_k⟩⟨ψ_k|`.
//!
//! `τ^{⊗M}` is expanded over type classes `k = (k_1, …, k_R)`, `Σ k_i = M`:
//! class `k` has weight `multinomial(M; k) Π t_i^{k_i}` and every product state
//! in it has the number distribution `⊛_i q_i^{⊛k_i}`. Classes whose empirical
//! frequencies `k/M` lie within ℓ1 distance ε of `t` are kept; the rest is the
//! residual mass δ.
//!
//! The fidelity bound follows from joint concavity of the root fidelity:
//! `F(τ^{⊗M}, τ_γ^{⊗M}) >= (Σ_j r_j √F_j)² >= (1 - δ)² min_j F_j` over typical
//! classes `j`. The squared fidelity itself is not jointly concave, so the
//! prefactor has to be squared to stay a bound at finite M.

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::factorial::ln_factorial;

use crate::distributions::{char_fn, ConvolutionOptions, IntDistribution};
use crate::error::{Error, Result};
use crate::u1::{fidelity_pure_gauss, NumberState, PosteriorSpec};

pub const DEFAULT_CLASS_CAP: usize = 1_000_000;
/// Slack on the ℓ1 ball membership test.
const BALL_SLACK: f64 = 1e-12;
/// Eigenvalues below this are treated as exact zeros when taking square roots.
pub const EIGEN_FLOOR: f64 = 1e-14;
pub const DEFAULT_DENSE_CAP: usize = 216;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedTarget {
    weights: Vec<f64>,
    states: Vec<NumberState>,
}

impl MixedTarget {
    pub fn new(components: Vec<(f64, NumberState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixed target needs at least one component".into()));
        }
        let (weights, states): (Vec<f64>, Vec<NumberState>) = components.into_iter().unzip();
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidDistribution(format!("weights must be positive: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        if let Some(position) = states.iter().find_map(|s| s.spectrum().first_gap()) {
            return Err(Error::GappedSpectrum { position });
        }
        Ok(Self { weights, states })
    }

    pub fn pure(state: NumberState) -> Self {
        Self { weights: vec![1.0], states: vec![state] }
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[NumberState] {
        &self.states
    }

    /// `σ_τ² = Σ_k t_k σ_{ψ_k}²`.
    pub fn mixed_variance(&self) -> f64 {
        self.weights.iter().zip(&self.states).map(|(t, s)| t * s.variance()).sum()
    }
}

/// `((ln M)/M)^{1/4}`.
pub fn epsilon_schedule(m: u64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("schedule needs M >= 2, got {m}")));
    }
    let m = m as f64;
    Ok((m.ln() / m).powf(0.25))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeClass {
    pub counts: Vec<u64>,
    pub weight: f64,
    /// Per-copy mean `Σ (k_i/M) μ_i`.
    pub mu: f64,
    /// Per-copy standard deviation `√(Σ (k_i/M) σ_i²)`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypicalDecomposition {
    pub classes: Vec<TypeClass>,
    pub residual_mass: f64,
    pub epsilon: f64,
    pub m: u64,
}

impl TypicalDecomposition {
    pub fn typical_mass(&self) -> f64 {
        self.classes.iter().map(|c| c.weight).sum()
    }
}

/// `(μ, σ)` per copy for the product state of a type class.
pub fn typeclass_gaussian(target: &MixedTarget, counts: &[u64], m: u64) -> Result<(f64, f64)> {
    if counts.len() != target.rank() {
        return Err(Error::DimensionMismatch(counts.len(), target.rank()));
    }
    if counts.iter().sum::<u64>() != m || m == 0 {
        return Err(Error::InvalidArgument(format!("counts {counts:?} do not sum to M={m}")));
    }
    let m = m as f64;
    let mut mu = 0.0;
    let mut var = 0.0;
    for (&k, s) in counts.iter().zip(target.states()) {
        let f = k as f64 / m;
        mu += f * s.mean();
        var += f * s.variance();
    }
    Ok((mu, var.sqrt()))
}

pub fn typical_decomposition(target: &MixedTarget, m: u64, epsilon: f64) -> Result<TypicalDecomposition> {
    typical_decomposition_capped(target, m, epsilon, DEFAULT_CLASS_CAP)
}

struct Enumeration<'a> {
    target: &'a MixedTarget,
    log_t: Vec<f64>,
    /// `tail_t[i] = Σ_{j >= i} t_j`.
    tail_t: Vec<f64>,
    m: u64,
    epsilon: f64,
    cap: usize,
    counts: Vec<u64>,
    classes: Vec<TypeClass>,
    residual: f64,
}

impl Enumeration<'_> {
    /// Probability that the first `i` counts equal `self.counts[..i]`.
    fn prefix_mass(&self, i: usize, used: u64) -> f64 {
        let rest = self.m - used;
        let mut log = ln_factorial(self.m) - ln_factorial(rest);
        for j in 0..i {
            let k = self.counts[j];
            log -= ln_factorial(k);
            if k > 0 {
                log += k as f64 * self.log_t[j];
            }
        }
        if rest > 0 {
            if self.tail_t[i] <= 0.0 {
                return 0.0;
            }
            log += rest as f64 * self.tail_t[i].ln();
        }
        log.exp()
    }

    fn visit(&mut self, i: usize, used: u64, partial_l1: f64) -> Result<()> {
        let r = self.target.rank();
        let mf = self.m as f64;
        let rest = self.m - used;
        // remaining components can at best contribute |rest/M - Σ_{j>=i} t_j|
        let bound = partial_l1 + (rest as f64 / mf - self.tail_t[i]).abs();
        if bound > self.epsilon + BALL_SLACK {
            self.residual += self.prefix_mass(i, used);
            return Ok(());
        }
        if i == r - 1 {
            self.counts[i] = rest;
            let l1 = partial_l1 + (rest as f64 / mf - self.target.weights[i]).abs();
            let weight = self.prefix_mass(r, self.m);
            if l1 <= self.epsilon + BALL_SLACK {
                if self.classes.len() == self.cap {
                    return Err(Error::CombinatorialBlowup { cap: self.cap });
                }
                let (mu, sigma) = typeclass_gaussian(self.target, &self.counts, self.m)?;
                self.classes.push(TypeClass { counts: self.counts.clone(), weight, mu, sigma });
            } else {
                self.residual += weight;
            }
            return Ok(());
        }
        for k in 0..=rest {
            self.counts[i] = k;
            let l1 = partial_l1 + (k as f64 / mf - self.target.weights[i]).abs();
            self.visit(i + 1, used + k, l1)?;
        }
        self.counts[i] = 0;
        Ok(())
    }
}

/// Enumerates the type classes inside the ℓ1 ball of radius `epsilon`.
/// Subtrees that cannot reach the ball are pruned and their exact marginal
/// mass is booked as residual, so `residual_mass` stays accurate even when it
/// is far below machine epsilon relative to 1.
pub fn typical_decomposition_capped(
    target: &MixedTarget,
    m: u64,
    epsilon: f64,
    cap: usize,
) -> Result<TypicalDecomposition> {
    if !(0.0..=2.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 2]")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }
    let r = target.rank();
    let mut tail_t = vec![0.0; r + 1];
    for i in (0..r).rev() {
        tail_t[i] = tail_t[i + 1] + target.weights[i];
    }
    let mut e = Enumeration {
        target,
        log_t: target.weights.iter().map(|t| t.ln()).collect(),
        tail_t,
        m,
        epsilon,
        cap,
        counts: vec![0; r],
        classes: Vec::new(),
        residual: 0.0,
    };
    e.visit(0, 0, 0.0)?;
    Ok(TypicalDecomposition { classes: e.classes, residual_mass: e.residual.clamp(0.0, 1.0), epsilon, m })
}

/// Per-class fidelity used inside the mixed bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFidelity {
    /// `exp(-M σ_j² γ²)`.
    Gaussian,
    /// `Π_i |Σ_n q_{i,n} e^{inγ}|^{2 k_i}`, the exact pure-product fidelity.
    Exact,
}

fn class_fidelity(target: &MixedTarget, class: &TypeClass, m: u64, gamma: f64, model: ClassFidelity) -> f64 {
    match model {
        ClassFidelity::Gaussian => fidelity_pure_gauss(class.sigma * class.sigma, m, gamma),
        ClassFidelity::Exact => class
            .counts
            .iter()
            .zip(target.states())
            .map(|(&k, s)| char_fn(s.spectrum(), gamma).norm_sqr().min(1.0).powi(k as i32))
            .product(),
    }
}

/// `(1 - δ)² min_j F_j(γ)` over typical classes; 0 when no class is typical.
pub fn bound_from_decomposition(
    target: &MixedTarget,
    decomposition: &TypicalDecomposition,
    gamma: f64,
    model: ClassFidelity,
) -> f64 {
    let worst = decomposition
        .classes
        .iter()
        .map(|c| class_fidelity(target, c, decomposition.m, gamma, model))
        .fold(f64::INFINITY, f64::min);
    if !worst.is_finite() {
        return 0.0;
    }
    let keep = 1.0 - decomposition.residual_mass;
    (keep * keep * worst).clamp(0.0, 1.0)
}

/// Gaussian-model lower bound on `F(τ^{⊗M}, τ_γ^{⊗M})`.
pub fn fidelity_mixed_lower_bound(target: &MixedTarget, m: u64, gamma: f64, epsilon: f64) -> Result<f64> {
    let decomposition = typical_decomposition(target, m, epsilon)?;
    Ok(bound_from_decomposition(target, &decomposition, gamma, ClassFidelity::Gaussian))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedBound {
    pub value: f64,
    pub epsilon: f64,
    pub residual_mass: f64,
    pub classes: usize,
}

/// Midpoint grid used for the posterior average in [`figure_of_merit_mixed_bound`]:
/// `max(8192, 16 · posterior support)` cells.
pub fn mixed_bound_grid(posterior: &PosteriorSpec) -> usize {
    8192usize.max(16 * posterior.fourier_coeffs().len())
}

/// Posterior average of the Gaussian-model mixed bound, with `ε = ε(M)`.
pub fn figure_of_merit_mixed_bound(source: &NumberState, n: u64, target: &MixedTarget, m: u64) -> Result<MixedBound> {
    figure_of_merit_mixed_bound_with(source, n, target, m, &ConvolutionOptions::default(), DEFAULT_CLASS_CAP)
}

/// [`figure_of_merit_mixed_bound`] with explicit convolution and class caps.
pub fn figure_of_merit_mixed_bound_with(
    source: &NumberState,
    n: u64,
    target: &MixedTarget,
    m: u64,
    opts: &ConvolutionOptions,
    class_cap: usize,
) -> Result<MixedBound> {
    let epsilon = epsilon_schedule(m)?;
    let decomposition = typical_decomposition_capped(target, m, epsilon, class_cap)?;
    let posterior = PosteriorSpec::with_options(source, n, opts)?;
    let g = mixed_bound_grid(&posterior);
    let h = 2.0 * std::f64::consts::PI / g as f64;
    let value: f64 = (0..g)
        .map(|i| {
            let gamma = -std::f64::consts::PI + (i as f64 + 0.5) * h;
            posterior.density_from_coeffs(gamma)
                * bound_from_decomposition(target, &decomposition, gamma, ClassFidelity::Gaussian)
        })
        .sum::<f64>()
        * h;
    Ok(MixedBound {
        value: value.clamp(0.0, 1.0),
        epsilon,
        residual_mass: decomposition.residual_mass,
        classes: decomposition.classes.len(),
    })
}

/// Dense density matrix used by the small-instance oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let herm_err = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > 1e-12 {
            return Err(Error::NotDensityMatrix(format!("not Hermitian (deviation {herm_err:e})")));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > 1e-10 {
            return Err(Error::NotDensityMatrix(format!("trace {trace}")));
        }
        let min_eig = matrix.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::NotDensityMatrix(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        Self::new(&v * v.adjoint())
    }

    /// `Σ w_i ρ_i`.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let dim = parts.first().ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?.1.dim();
        let mut acc = DMatrix::zeros(dim, dim);
        for (w, rho) in parts {
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch(dim, rho.dim()));
            }
            acc += &rho.matrix * Complex64::new(*w, 0.0);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { matrix: self.matrix.kronecker(&other.matrix) }
    }

    pub fn tensor_power(&self, m: u32) -> DensityMatrix {
        let mut out = self.clone();
        for _ in 1..m {
            out = out.tensor(self);
        }
        out
    }

    /// `U ρ U†` for diagonal `U = diag(phases)`.
    pub fn conjugate_diagonal(&self, phases: &[Complex64]) -> DensityMatrix {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] *= phases[i] * phases[j].conj();
            }
        }
        DensityMatrix { matrix: m }
    }

    fn sqrt_psd(&self) -> DMatrix<Complex64> {
        let eig = self.matrix.clone().symmetric_eigen();
        let roots =
            eig.eigenvalues
                .map(|l| if l > EIGEN_FLOOR { Complex64::new(l.sqrt(), 0.0) } else { Complex64::new(0.0, 0.0) });
        &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
    }
}

/// `Tr|√ρ √σ|`, i.e. the square root of [`uhlmann_fidelity`].
pub fn root_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let product = rho.sqrt_psd() * sigma.sqrt_psd();
    let nuclear: f64 = product.singular_values().iter().sum();
    Ok(nuclear.clamp(0.0, 1.0))
}

/// `(Tr √(√ρ σ √ρ))²`, computed as the squared nuclear norm of `√ρ √σ` so that
/// round-off in near-zero eigenvalues does not get amplified by a square root.
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    root_fidelity(rho, sigma).map(|f| f * f)
}

/// Single-copy `τ` in the number basis `0..dim`.
pub fn target_density_matrix(target: &MixedTarget, dim: usize) -> Result<DensityMatrix> {
    let mut acc = DMatrix::zeros(dim, dim);
    for (t, s) in target.weights().iter().zip(target.states()) {
        let v = number_vector(s.spectrum(), dim)?;
        acc += (&v * v.adjoint()) * Complex64::new(*t, 0.0);
    }
    DensityMatrix::new(acc)
}

fn number_vector(spectrum: &IntDistribution, dim: usize) -> Result<nalgebra::DVector<Complex64>> {
    if spectrum.end() as usize >= dim {
        return Err(Error::CapExceeded { required: spectrum.end() as usize + 1, cap: dim });
    }
    Ok(nalgebra::DVector::from_fn(dim, |n, _| Complex64::new(spectrum.get(n as i64).sqrt(), 0.0)))
}

/// Number-basis dimension needed to hold every component.
pub fn embedding_dim(target: &MixedTarget) -> usize {
    target.states().iter().map(|s| s.spectrum().end() as usize + 1).max().unwrap_or(1)
}

/// Dense `F(τ^{⊗M}, τ_γ^{⊗M})` for `M <= 3`, with `dim^M <= dense_cap`.
pub fn exact_mixed_fidelity_small(target: &MixedTarget, m: u32, gamma: f64, dense_cap: usize) -> Result<f64> {
    if m == 0 || m > 3 {
        return Err(Error::CapExceeded { required: m as usize, cap: 3 });
    }
    let dim = embedding_dim(target);
    let total = dim.pow(m);
    if total > dense_cap {
        return Err(Error::CapExceeded { required: total, cap: dense_cap });
    }
    let tau = target_density_matrix(target, dim)?;
    let phases: Vec<Complex64> = (0..dim).map(|n| Complex64::from_polar(1.0, n as f64 * gamma)).collect();
    let tau_gamma = tau.conjugate_diagonal(&phases);
    let single = uhlmann_fidelity(&tau, &tau_gamma)?;
    let dense = uhlmann_fidelity(&tau.tensor_power(m), &tau_gamma.tensor_power(m))?;
    debug_assert!((dense - single.powi(m as i32)).abs() < 1e-8, "multiplicativity: {dense} vs {single}^{m}");
    Ok(dense)
}
