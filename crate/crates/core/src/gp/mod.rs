//! Gaussian process regression over the joint design × fidelity space.
//!
//! A [`GpModel`] stores normalized training data together with the Cholesky
//! factor of `K + nugget·I`. Inputs handed to [`GpModel::predict`] and
//! friends are in physical units and normalized internally with the
//! model's [`NormStats`].

mod fit;
mod kernel;
mod norm;

pub use fit::{fit_hyperparameters, fit_with, log_param_bounds, FitOptions};
pub use kernel::{KernelFamily, KernelSpec};
pub use norm::{NormStats, STD_FLOOR};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative jitter levels (multiples of the signal variance) tried when the
/// covariance fails to factorize.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

/// A design point paired with a fidelity vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl JointPoint {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Self {
        Self { x, z }
    }

    /// `x` followed by `z`.
    pub fn concat(&self) -> Vec<f64> {
        join(&self.x, &self.z)
    }
}

pub(crate) fn join(x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + z.len());
    v.extend_from_slice(x);
    v.extend_from_slice(z);
    v
}

/// Posterior mean and standard deviation at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub std: f64,
}

/// Serialized form of a trained model; the factorization is recomputed on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: KernelSpec,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub normalization: NormStats,
}

/// A conditioned Gaussian process. Immutable once built.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "GpSnapshot", try_from = "GpSnapshot")]
pub struct GpModel {
    kernel: KernelSpec,
    inputs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    norm: NormStats,
    jitter: f64,
}

impl From<GpModel> for GpSnapshot {
    fn from(m: GpModel) -> Self {
        GpSnapshot {
            kernel: m.kernel,
            inputs: m.inputs,
            targets: m.targets.iter().copied().collect(),
            normalization: m.norm,
        }
    }
}

impl TryFrom<GpSnapshot> for GpModel {
    type Error = Error;

    fn try_from(s: GpSnapshot) -> Result<Self> {
        GpModel::from_normalized(s.kernel, s.normalization, s.inputs, s.targets)
    }
}

pub(crate) fn covariance_matrix(kernel: &KernelSpec, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.signal_variance;
        for j in 0..i {
            let v = kernel.eval_unchecked(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factorizes `K + (nugget + jitter)·I`, walking the jitter ladder on failure.
pub(crate) fn factorize(
    kernel: &KernelSpec,
    k: &DMatrix<f64>,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut attempted = Vec::with_capacity(JITTER_LADDER.len() + 1);
    for jitter in std::iter::once(0.0).chain(JITTER_LADDER.iter().map(|r| r * kernel.signal_variance)) {
        let diag = kernel.nugget + jitter;
        attempted.push(diag);
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += diag;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok((c, jitter));
            }
        }
    }
    Err(Error::NotPositiveDefinite { attempted })
}

impl GpModel {
    /// Conditions a GP on already-normalized data.
    pub fn from_normalized(
        kernel: KernelSpec,
        norm: NormStats,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        kernel.validate()?;
        if inputs.is_empty() {
            return Err(Error::Config("GP needs at least one training point".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for p in &inputs {
            if p.len() != kernel.dim() {
                return Err(Error::DimensionMismatch {
                    expected: kernel.dim(),
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite training input {p:?}")));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite training target".into()));
        }
        if norm.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: norm.dim(),
            });
        }
        let k = covariance_matrix(&kernel, &inputs);
        let (chol, jitter) = factorize(&kernel, &k)?;
        let targets = DVector::from_vec(targets);
        let alpha = chol.solve(&targets);
        Ok(Self {
            kernel,
            inputs,
            targets,
            chol,
            alpha,
            norm,
            jitter,
        })
    }

    /// Normalizes raw data with fresh statistics and conditions a GP with the given kernel.
    pub fn from_raw(kernel: KernelSpec, inputs: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let norm = NormStats::from_data(inputs, targets);
        let xs = inputs.iter().map(|p| norm.normalize_input(p)).collect();
        let ys = targets.iter().map(|&y| norm.normalize_target(y)).collect();
        Self::from_normalized(kernel, norm, xs, ys)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn normalization(&self) -> &NormStats {
        &self.norm
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn training_targets(&self) -> &[f64] {
        self.targets.as_slice()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Extra diagonal added by the jitter ladder (zero when the nugget sufficed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + (nugget + jitter)·I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    /// `−½ yᵀα − Σ log L_ii − (D/2) log 2π` on the normalized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let data_fit = -0.5 * self.targets.dot(&self.alpha);
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let n = self.targets.len() as f64;
        data_fit - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    fn cross_covariance(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|q| self.kernel.eval_unchecked(p, q)),
        )
    }

    /// Posterior of the latent function at a normalized point, in normalized target units.
    pub fn posterior(&self, p: &[f64]) -> Result<Posterior> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(self.posterior_unchecked(p))
    }

    /// Variance before clamping at zero. Exposed for diagnostics.
    pub fn raw_variance(&self, p: &[f64]) -> f64 {
        let k = self.cross_covariance(p);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal");
        self.kernel.signal_variance - v.norm_squared()
    }

    fn posterior_unchecked(&self, p: &[f64]) -> Posterior {
        let k = self.cross_covariance(p);
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal");
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Posterior {
            mean,
            std: var.sqrt(),
        }
    }

    /// Posterior at a raw (physical-unit) point, in normalized target units.
    pub fn posterior_at(&self, raw: &[f64]) -> Result<Posterior> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: raw.len(),
            });
        }
        Ok(self.posterior_unchecked(&self.norm.normalize_input(raw)))
    }

    /// Posterior at a raw point, de-normalized to target units.
    pub fn predict(&self, raw: &[f64]) -> Result<Posterior> {
        let p = self.posterior_at(raw)?;
        Ok(Posterior {
            mean: self.norm.denormalize_target(p.mean),
            std: self.norm.denormalize_std(p.std),
        })
    }

    /// Noise-free correlation between two raw points under this model's kernel.
    pub fn correlation(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.kernel
            .correlation(&self.norm.normalize_input(a), &self.norm.normalize_input(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(dim: usize, nugget: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0; dim], 1.0, nugget).unwrap()
    }

    fn model(inputs: Vec<Vec<f64>>, targets: Vec<f64>, spec: KernelSpec) -> GpModel {
        let dim = spec.dim();
        GpModel::from_normalized(spec, NormStats::identity(dim), inputs, targets).unwrap()
    }

    #[test]
    fn single_point_log_marginal_likelihood() {
        // K + nugget·I = [2]
        let m = model(vec![vec![0.0]], vec![0.0], kernel(1, 1.0));
        let expected = -0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(m.log_marginal_likelihood(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, -1.265_512_123_484_645_4, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_point_changes_likelihood_only_through_nugget() {
        // Two identical inputs with target 0: K + νI = [[1+ν, 1], [1, 1+ν]], det = ν(2+ν).
        let nu = 0.3;
        let m = model(vec![vec![0.5], vec![0.5]], vec![0.0, 0.0], kernel(1, nu));
        let expected = -0.5 * (nu * (2.0 + nu)).ln() - (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(m.log_marginal_likelihood(), expected, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = kernel(3, 1e-4);
        let m = model(inputs.clone(), targets.clone(), spec.clone());
        let l = m.cholesky_factor();
        let mut k = covariance_matrix(&spec, &inputs);
        for i in 0..12 {
            k[(i, i)] += spec.nugget + m.jitter();
        }
        let diff = (&l * l.transpose() - &k).abs().max();
        assert!(diff <= 1e-8 * k.abs().max(), "reconstruction error {diff}");
        let residual = &k * DVector::from_column_slice(m.alpha()) - DVector::from_vec(targets);
        assert!(residual.abs().max() < 1e-8);
    }

    #[test]
    fn interpolates_training_points_with_tiny_nugget() {
        let m = model(
            vec![vec![0.0], vec![1.5], vec![3.0]],
            vec![0.2, -0.7, 1.1],
            kernel(1, 1e-10),
        );
        let p = m.posterior(&[1.5]).unwrap();
        assert_relative_eq!(p.mean, -0.7, epsilon = 1e-6);
        assert!(p.std < 1e-4);
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let mut spec = kernel(2, 1e-6);
        spec.signal_variance = 2.5;
        let m = model(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![1.0, -1.0], spec);
        let p = m.posterior(&[50.0, -40.0]).unwrap();
        assert!(p.mean.abs() < 1e-12);
        assert_relative_eq!(p.std, 2.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn two_point_posterior_matches_hand_inverse() {
        let nu = 0.01;
        let (x1, x2, y1, y2) = (0.0, 0.8, 1.0, -0.5);
        let m = model(vec![vec![x1], vec![x2]], vec![y1, y2], kernel(1, nu));
        let q = 0.3;
        let k12 = (-0.5f64 * (x1 - x2) * (x1 - x2)).exp();
        let (a, b, d) = (1.0 + nu, k12, 1.0 + nu);
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let ks = [(-0.5f64 * (q - x1) * (q - x1)).exp(), (-0.5f64 * (q - x2) * (q - x2)).exp()];
        let w = [
            inv[0][0] * y1 + inv[0][1] * y2,
            inv[1][0] * y1 + inv[1][1] * y2,
        ];
        let mean = ks[0] * w[0] + ks[1] * w[1];
        let quad = ks[0] * (inv[0][0] * ks[0] + inv[0][1] * ks[1])
            + ks[1] * (inv[1][0] * ks[0] + inv[1][1] * ks[1]);
        let p = m.posterior(&[q]).unwrap();
        assert_relative_eq!(p.mean, mean, epsilon = 1e-10);
        assert_relative_eq!(p.std, (1.0 - quad).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn correlation_uses_normalized_inputs() {
        let norm = NormStats {
            input_mean: vec![10.0, 0.0],
            input_std: vec![2.0, 4.0],
            target_mean: 0.0,
            target_std: 1.0,
        };
        let m = GpModel::from_normalized(
            kernel(2, 1e-6),
            norm,
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![0.0, 1.0],
        )
        .unwrap();
        // one normalized lengthscale apart in the second component
        let c = m.correlation(&[10.0, 0.0], &[10.0, 4.0]).unwrap();
        assert_relative_eq!(c, (-0.5f64).exp(), epsilon = 1e-14);
        assert_eq!(m.correlation(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn jitter_ladder_rescues_singular_covariance() {
        let spec = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], 1.0, 1e-300).unwrap();
        let m = model(vec![vec![0.0], vec![0.0], vec![0.0]], vec![0.0, 0.0, 0.0], spec);
        assert!(m.jitter() > 0.0);
    }

    #[test]
    fn snapshot_round_trip_refactorizes() {
        let m = model(vec![vec![0.0], vec![1.0]], vec![0.5, -0.5], kernel(1, 1e-3));
        let json = serde_json::to_string(&m).unwrap();
        let back: GpModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.alpha(), m.alpha());
        assert_eq!(back.posterior(&[0.4]).unwrap(), m.posterior(&[0.4]).unwrap());
    }
}
