//! Stationary ARD covariance functions over the concatenated design/fidelity vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    #[default]
    #[serde(rename = "squared-exponential")]
    SquaredExponential,
    #[serde(rename = "matern-5/2")]
    Matern52,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-exponential" | "se" | "rbf" => Ok(Self::SquaredExponential),
            "matern-5/2" | "matern52" => Ok(Self::Matern52),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

impl KernelFamily {
    /// Correlation as a function of the squared scaled distance.
    pub fn correlation_from_sq_dist(self, r2: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
        }
    }

    /// Factor `g` such that `d k / d log(l_i) = g(r²) · d_i² / l_i²` for unit signal variance.
    pub(crate) fn lengthscale_grad_factor(self, r2: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
        }
    }
}

/// Kernel family plus its hyperparameters.
///
/// `nugget` is the diagonal noise variance added to the training covariance only;
/// [`KernelSpec::eval`] is the noise-free covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub nugget: f64,
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        lengthscales: Vec<f64>,
        signal_variance: f64,
        nugget: f64,
    ) -> Result<Self> {
        let spec = Self {
            family,
            lengthscales,
            signal_variance,
            nugget,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::Config("kernel needs at least one lengthscale".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.lengthscales.iter().all(|&l| positive(l)) {
            return Err(Error::Config(format!(
                "lengthscales must be positive and finite: {:?}",
                self.lengthscales
            )));
        }
        if !positive(self.signal_variance) {
            return Err(Error::Config(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !positive(self.nugget) {
            return Err(Error::Config(format!(
                "nugget must be positive, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn check_dims(&self, a: &[f64], b: &[f64]) -> Result<()> {
        for p in [a, b] {
            if p.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum()
    }

    /// Noise-free covariance `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dims(a, b)?;
        Ok(self.eval_unchecked(a, b))
    }

    /// `k(a, b) / signal_variance`, in `(0, 1]`.
    pub fn correlation(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dims(a, b)?;
        Ok(self.correlation_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * self.correlation_unchecked(a, b)
    }

    pub(crate) fn correlation_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.family
            .correlation_from_sq_dist(self.scaled_sq_dist(a, b))
    }
}
