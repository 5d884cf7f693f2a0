//! Hyperparameter fitting by maximizing the log marginal likelihood.
//!
//! Parameters are optimized on the log scale:
//! `θ = [log l_1 … log l_D, log σ², log ν]`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GpModel, KernelFamily, KernelSpec, NormStats};
use crate::error::{Error, Result};
use crate::optim::minimize_box;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const NUGGET_BOUNDS: (f64, f64) = (1e-8, 1e-1);

const DEFAULT_NUGGET: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub family: KernelFamily,
    /// Total number of local optimizations; the first starts from `initial`
    /// (or unit hyperparameters), the rest from seeded random draws.
    pub restarts: usize,
    pub seed: u64,
    pub initial: Option<KernelSpec>,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            restarts: 3,
            seed: 0,
            initial: None,
            max_iter: 100,
        }
    }
}

/// Lower and upper bounds of the log-parameter vector for `dim` inputs.
pub fn log_param_bounds(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![LENGTHSCALE_BOUNDS.0.ln(); dim];
    let mut hi = vec![LENGTHSCALE_BOUNDS.1.ln(); dim];
    lo.push(SIGNAL_VARIANCE_BOUNDS.0.ln());
    hi.push(SIGNAL_VARIANCE_BOUNDS.1.ln());
    lo.push(NUGGET_BOUNDS.0.ln());
    hi.push(NUGGET_BOUNDS.1.ln());
    (lo, hi)
}

pub(crate) fn spec_from_log(family: KernelFamily, theta: &[f64]) -> KernelSpec {
    let d = theta.len() - 2;
    KernelSpec {
        family,
        lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
        signal_variance: theta[d].exp(),
        nugget: theta[d + 1].exp(),
    }
}

pub(crate) fn log_from_spec(spec: &KernelSpec) -> Vec<f64> {
    spec.lengthscales
        .iter()
        .map(|l| l.ln())
        .chain([spec.signal_variance.ln(), spec.nugget.ln()])
        .collect()
}

/// Log marginal likelihood and its gradient with respect to the log-parameters.
/// Returns `None` when the covariance does not factorize.
pub(crate) fn lml_and_grad(
    family: KernelFamily,
    theta: &[f64],
    inputs: &[Vec<f64>],
    targets: &DVector<f64>,
) -> Option<(f64, Vec<f64>)> {
    let n = inputs.len();
    let d = theta.len() - 2;
    let spec = spec_from_log(family, theta);
    let sv = spec.signal_variance;
    let nu = spec.nugget;

    let mut ks = DMatrix::zeros(n, n);
    let mut r2 = DMatrix::zeros(n, n);
    for i in 0..n {
        ks[(i, i)] = sv;
        for j in 0..i {
            let r = spec.scaled_sq_dist(&inputs[i], &inputs[j]);
            let v = sv * family.correlation_from_sq_dist(r);
            ks[(i, j)] = v;
            ks[(j, i)] = v;
            r2[(i, j)] = r;
        }
    }
    let mut kn = ks.clone();
    for i in 0..n {
        kn[(i, i)] += nu;
    }
    let chol = Cholesky::new(kn)?;
    let diag = chol.l_dirty().diagonal();
    if !diag.iter().all(|v| v.is_finite() && *v > 0.0) {
        return None;
    }
    let alpha = chol.solve(targets);
    let lml = -0.5 * targets.dot(&alpha)
        - diag.iter().map(|v| v.ln()).sum::<f64>()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !lml.is_finite() {
        return None;
    }

    let kinv = chol.inverse();
    let mut grad = vec![0.0; d + 2];
    let mut trace_w = 0.0;
    let mut sv_term = 0.0;
    for i in 0..n {
        let w_ii = alpha[i] * alpha[i] - kinv[(i, i)];
        trace_w += w_ii;
        sv_term += 0.5 * w_ii * ks[(i, i)];
        for j in 0..i {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            // symmetric pair: ½·2·W_ij·dK_ij
            sv_term += w * ks[(i, j)];
            let base = w * sv * family.lengthscale_grad_factor(r2[(i, j)]);
            for (k, g) in grad.iter_mut().take(d).enumerate() {
                let diff = (inputs[i][k] - inputs[j][k]) / spec.lengthscales[k];
                *g += base * diff * diff;
            }
        }
    }
    grad[d] = sv_term;
    grad[d + 1] = 0.5 * nu * trace_w;
    Some((lml, grad))
}

/// Fits a squared-exponential ARD GP with `restarts` local optimizations.
pub fn fit_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<GpModel> {
    fit_with(
        inputs,
        targets,
        &FitOptions {
            restarts,
            seed,
            ..FitOptions::default()
        },
    )
}

/// Normalizes the data, maximizes the log marginal likelihood from several
/// starts and returns the best conditioned model. Deterministic in `options.seed`.
pub fn fit_with(inputs: &[Vec<f64>], targets: &[f64], options: &FitOptions) -> Result<GpModel> {
    if inputs.len() < 2 {
        return Err(Error::Config(format!(
            "hyperparameter fitting needs at least 2 points, got {}",
            inputs.len()
        )));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    if options.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let dim = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let norm = NormStats::from_data(inputs, targets);
    let xs: Vec<Vec<f64>> = inputs.iter().map(|p| norm.normalize_input(p)).collect();
    let ys = DVector::from_iterator(targets.len(), targets.iter().map(|&y| norm.normalize_target(y)));

    let (lo, hi) = log_param_bounds(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let first = match &options.initial {
        Some(spec) if spec.dim() == dim => log_from_spec(spec),
        _ => {
            let mut t = vec![0.0; dim + 1];
            t.push(DEFAULT_NUGGET.ln());
            t
        }
    };
    let mut starts = vec![first];
    for _ in 1..options.restarts {
        let mut t: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(0.1f64.ln()..10f64.ln()))
            .collect();
        t.push(rng.random_range(0.1f64.ln()..10f64.ln()));
        t.push(rng.random_range(1e-6f64.ln()..1e-2f64.ln()));
        starts.push(t);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in &starts {
        let objective = |theta: &[f64]| {
            lml_and_grad(options.family, theta, &xs, &ys)
                .map(|(f, g)| (-f, g.into_iter().map(|v| -v).collect()))
        };
        let Some(min) = minimize_box(objective, start, &lo, &hi, options.max_iter) else {
            log::debug!("GP restart from {start:?} failed to factorize");
            continue;
        };
        let lml = -min.value;
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, min.x));
        }
    }
    let (_, theta) = best.ok_or_else(|| {
        Error::Numerical(format!(
            "all {} hyperparameter restarts failed to factorize",
            options.restarts
        ))
    })?;
    let spec = spec_from_log(options.family, &theta);
    GpModel::from_normalized(spec, norm, xs, ys.iter().copied().collect())
}
