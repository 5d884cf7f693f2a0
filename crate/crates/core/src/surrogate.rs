//! Objective and cost surrogates.
//!
//! The cost GP is trained on `log c`, so every cost it predicts is positive and
//! the `μ + p·σ` upper bound becomes a log-normal quantile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_with, join, FitOptions, GpModel, KernelFamily};

/// Anything that can predict a strictly positive evaluation cost.
pub trait CostPredictor {
    /// Point prediction of cost on the positive scale.
    fn mean_cost(&self, x: &[f64], z: &[f64]) -> Result<f64>;
}

/// Gaussian process over `(x, z) → log c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostModel(GpModel);

impl CostModel {
    pub fn new(log_cost_gp: GpModel) -> Self {
        Self(log_cost_gp)
    }

    pub fn gp(&self) -> &GpModel {
        &self.0
    }

    /// Mean and standard deviation of the log cost, in log-cost units.
    pub fn log_posterior(&self, x: &[f64], z: &[f64]) -> Result<(f64, f64)> {
        let p = self.0.predict(&join(x, z))?;
        Ok((p.mean, p.std))
    }

    /// `exp(μ_log + p_λ σ_log)`.
    pub fn upper(&self, x: &[f64], z: &[f64], p_lambda: f64) -> Result<f64> {
        let (mu, sigma) = self.log_posterior(x, z)?;
        Ok((mu + p_lambda * sigma).exp())
    }
}

impl CostPredictor for CostModel {
    fn mean_cost(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.log_posterior(x, z)?.0.exp())
    }
}

/// Upper bound on the cost of evaluating `(x, z)`.
pub fn predict_cost_upper(cost_model: &CostModel, x: &[f64], z: &[f64], p_lambda: f64) -> Result<f64> {
    cost_model.upper(x, z, p_lambda)
}

/// Upper bound on the cost of one more standard evaluation at `(x_next, z_next)`
/// followed by the greedy evaluation at `(x_greedy, z_star)`.
pub fn c_max(
    cost_model: &CostModel,
    x_next: &[f64],
    z_next: &[f64],
    x_greedy: &[f64],
    z_star: &[f64],
    p_lambda: f64,
) -> Result<CostBound> {
    let standard = cost_model.upper(x_next, z_next, p_lambda)?;
    let greedy = cost_model.upper(x_greedy, z_star, p_lambda)?;
    Ok(CostBound { standard, greedy })
}

/// The two terms of the stopping-rule cost bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBound {
    pub standard: f64,
    pub greedy: f64,
}

impl CostBound {
    pub fn total(&self) -> f64 {
        self.standard + self.greedy
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateOptions {
    pub family: KernelFamily,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            restarts: 3,
            seed: 0,
        }
    }
}

/// Trained objective GP `f̂` and cost GP `λ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurrogatePair {
    pub objective: GpModel,
    pub cost: CostModel,
}

impl SurrogatePair {
    /// Fits both models from scratch. Objective and cost training sets may differ
    /// (failed evaluations carry a cost but no objective).
    pub fn fit(
        objective_inputs: &[Vec<f64>],
        objectives: &[f64],
        cost_inputs: &[Vec<f64>],
        costs: &[f64],
        options: &SurrogateOptions,
    ) -> Result<Self> {
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Numerical(format!("cost {c} is not strictly positive")));
        }
        let fit = |seed| FitOptions {
            family: options.family,
            restarts: options.restarts,
            seed,
            ..FitOptions::default()
        };
        let objective = fit_with(objective_inputs, objectives, &fit(options.seed))?;
        let log_costs: Vec<f64> = costs.iter().map(|c| c.ln()).collect();
        let cost = fit_with(
            cost_inputs,
            &log_costs,
            &fit(options.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        )?;
        Ok(Self {
            objective,
            cost: CostModel(cost),
        })
    }
}
