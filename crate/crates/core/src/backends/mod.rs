//! Simulator backends behind one evaluation contract: `(x, z, seed) → (y, cost)`.

mod external;
mod reactor;
mod synthetic;

pub use external::{ExternalProcess, ExternalProcessSpec, Semaphore};
pub use reactor::{MockReactor, MockReactorSpec, MockReactorTruth, REACTOR_DESIGN_NAMES, REACTOR_FIDELITY_NAMES};
pub use synthetic::{SyntheticBenchmark, SyntheticFunction, SyntheticSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rtd::{RtdCurve, TisFit};
use crate::space::Bounds;

/// Result of one successful evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub objective: f64,
    /// Strictly positive cost in the campaign's budget units.
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<RtdCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<TisFit>,
}

impl EvalOutput {
    pub fn scalar(objective: f64, cost: f64) -> Self {
        Self {
            objective,
            cost,
            curve: None,
            fit: None,
        }
    }
}

/// A black-box simulator. Implementations are deterministic in `(x, z, seed)`
/// and safe to call from several threads at once.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput>;

    /// Design and fidelity boxes the evaluator accepts, if it restricts them.
    fn domain(&self) -> Option<(Bounds, Bounds)> {
        None
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        (**self).evaluate(x, z, seed)
    }
    fn domain(&self) -> Option<(Bounds, Bounds)> {
        (**self).domain()
    }
}

/// Adapts a closure `(x, z, seed) → Result<EvalOutput>` into an [`Evaluator`].
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&[f64], &[f64], u64) -> Result<EvalOutput> + Send + Sync,
{
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        (self.0)(x, z, seed)
    }
}

pub(crate) fn check_inside(what: &str, p: &[f64], b: &Bounds) -> Result<()> {
    if p.len() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            got: p.len(),
        });
    }
    for (i, v) in p.iter().enumerate() {
        let tol = 1e-9 * (1.0 + b.width(i));
        if !(v.is_finite() && *v >= b.low[i] - tol && *v <= b.high[i] + tol) {
            return Err(Error::Domain(format!(
                "{what}[{i}] = {v} is outside [{}, {}]",
                b.low[i], b.high[i]
            )));
        }
    }
    Ok(())
}

/// Replaces the reported cost of every evaluation with a fixed value.
pub struct ConstantCost<E> {
    pub inner: E,
    pub cost: f64,
}

impl<E: Evaluator> Evaluator for ConstantCost<E> {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        match self.inner.evaluate(x, z, seed) {
            Ok(out) => Ok(EvalOutput { cost: self.cost, ..out }),
            Err(Error::Evaluation { message, .. }) => Err(Error::evaluation(message, Some(self.cost))),
            Err(e) => Err(e),
        }
    }
    fn domain(&self) -> Option<(Bounds, Bounds)> {
        self.inner.domain()
    }
}

/// Turns a seeded fraction of evaluations into failures that still report their cost.
pub struct FaultInjector<E> {
    pub inner: E,
    pub failure_rate: f64,
}

const FAULT_STREAM: u64 = 0xA076_1D64_78BD_642F;

impl<E: Evaluator> Evaluator for FaultInjector<E> {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        let out = self.inner.evaluate(x, z, seed)?;
        let draw: f64 = ChaCha8Rng::seed_from_u64(seed ^ FAULT_STREAM).random();
        if draw < self.failure_rate {
            return Err(Error::evaluation(
                format!("injected failure (draw {draw:.4} < rate {})", self.failure_rate),
                Some(out.cost),
            ));
        }
        Ok(out)
    }
    fn domain(&self) -> Option<(Bounds, Bounds)> {
        self.inner.domain()
    }
}

/// Serializable evaluator configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorSpec {
    SyntheticBenchmark(SyntheticSpec),
    MockReactor(MockReactorSpec),
    ExternalProcess(ExternalProcessSpec),
}

impl EvaluatorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SyntheticBenchmark(_) => "synthetic-benchmark",
            Self::MockReactor(_) => "mock-reactor",
            Self::ExternalProcess(_) => "external-process",
        }
    }

    pub fn failure_rate(&self) -> f64 {
        match self {
            Self::SyntheticBenchmark(s) => s.failure_rate,
            Self::MockReactor(s) => s.failure_rate,
            Self::ExternalProcess(s) => s.failure_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = self.failure_rate();
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("evaluator.failure_rate must lie in [0, 1), got {rate}")));
        }
        match self {
            Self::SyntheticBenchmark(s) => s.validate(),
            Self::MockReactor(s) => s.validate(),
            Self::ExternalProcess(s) => s.validate(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Evaluator>> {
        self.validate()?;
        let inner: Box<dyn Evaluator> = match self {
            Self::SyntheticBenchmark(s) => Box::new(SyntheticBenchmark::new(s.clone())?),
            Self::MockReactor(s) => Box::new(MockReactor::new(s.clone())?),
            Self::ExternalProcess(s) => Box::new(ExternalProcess::new(s.clone())?),
        };
        let rate = self.failure_rate();
        Ok(if rate > 0.0 {
            Box::new(FaultInjector {
                inner,
                failure_rate: rate,
            })
        } else {
            inner
        })
    }
}
