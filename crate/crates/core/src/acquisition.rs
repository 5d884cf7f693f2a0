//! Acquisition functions and their multi-start box maximizer.
//!
//! * [`ucb`]: `μ + √β·σ` of the objective GP.
//! * [`cost_adjusted_ucb`]: UCB at the highest fidelity divided by
//!   `γ · μ_λ(x, z) · max(√(1 − ρ²), floor)` where `ρ` is the noise-free
//!   correlation between `(x, z)` and `(x, z•)`.
//! * [`greedy_highest_fidelity`]: argmax of the posterior mean at `z•`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{join, GpModel};
use crate::space::{latin_hypercube, Bounds};
use crate::surrogate::CostPredictor;

/// Values closer than this are ties, broken lexicographically.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// β in `μ + β^{1/2} σ`.
    pub beta: f64,
    /// γ, the weight on predicted cost.
    pub gamma: f64,
    /// Lower floor on the information-loss discount `√(1 − ρ²)`.
    pub discount_floor: f64,
    pub restarts: usize,
    pub local_steps: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 2.5,
            gamma: 1.5,
            discount_floor: 1e-2,
            restarts: 16,
            local_steps: 40,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.discount_floor > 0.0 && self.discount_floor < 1.0) {
            return Err(Error::Config(format!(
                "discount_floor must lie in (0, 1), got {}",
                self.discount_floor
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("acquisition restarts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Upper confidence bound in normalized target units.
pub fn ucb(f_model: &GpModel, x: &[f64], z: &[f64], beta: f64) -> Result<f64> {
    let p = f_model.posterior_at(&join(x, z))?;
    Ok(p.mean + beta.sqrt() * p.std)
}

/// Information-loss discount `max(√(1 − ρ²), floor)` for evaluating at `z` instead of `z•`.
pub fn fidelity_discount(f_model: &GpModel, x: &[f64], z: &[f64], z_star: &[f64], floor: f64) -> Result<f64> {
    let rho = f_model.correlation(&join(x, z), &join(x, z_star))?;
    Ok((1.0 - rho * rho).max(0.0).sqrt().max(floor))
}

/// Cost-adjusted UCB. The numerator is always evaluated at `z_star`.
pub fn cost_adjusted_ucb<C: CostPredictor + ?Sized>(
    f_model: &GpModel,
    cost_model: &C,
    x: &[f64],
    z: &[f64],
    z_star: &[f64],
    config: &AcquisitionConfig,
) -> Result<f64> {
    let numerator = ucb(f_model, x, z_star, config.beta)?;
    let cost = cost_model.mean_cost(x, z)?;
    if !(cost.is_finite() && cost > 0.0) {
        return Err(Error::Numerical(format!(
            "cost prediction {cost} at x={x:?}, z={z:?} is not positive"
        )));
    }
    let discount = fidelity_discount(f_model, x, z, z_star, config.discount_floor)?;
    Ok(numerator / (config.gamma * cost * discount))
}

/// `argmax_x μ(x, z•)` over `x_bounds`. Returns the design point and its
/// normalized posterior mean.
pub fn greedy_highest_fidelity(
    f_model: &GpModel,
    x_bounds: &Bounds,
    z_star: &[f64],
    config: &AcquisitionConfig,
    extra_starts: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let objective = |x: &[f64]| {
        f_model
            .posterior_at(&join(x, z_star))
            .map(|p| p.mean)
            .unwrap_or(f64::NAN)
    };
    maximize_box(objective, x_bounds, config, extra_starts)
}

/// Result of maximizing an acquisition over `X × Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionOptimum {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
}

/// Maximizes `objective(x, z)` over the joint box.
pub fn maximize_acquisition<F>(
    objective: F,
    x_bounds: &Bounds,
    z_bounds: &Bounds,
    config: &AcquisitionConfig,
    extra_starts: &[Vec<f64>],
) -> Result<AcquisitionOptimum>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = x_bounds.dim();
    let joint = x_bounds.join(z_bounds);
    let (best, value) = maximize_box(|p: &[f64]| objective(&p[..n], &p[n..]), &joint, config, extra_starts)?;
    Ok(AcquisitionOptimum {
        x: best[..n].to_vec(),
        z: best[n..].to_vec(),
        value,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// `true` when `(v, p)` beats `(best_v, best_p)`: strictly larger value, or a tie
/// with a lexicographically smaller point.
fn beats(v: f64, p: &[f64], best_v: f64, best_p: &[f64]) -> bool {
    v > best_v + TIE_TOLERANCE || ((v - best_v).abs() <= TIE_TOLERANCE && lex_cmp(p, best_p) == Ordering::Less)
}

fn compass_search<F>(objective: &F, bounds: &Bounds, start: Vec<f64>, steps: usize) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start;
    let mut v = objective(&x);
    if !v.is_finite() {
        return None;
    }
    let dim = bounds.dim();
    let mut step: Vec<f64> = (0..dim).map(|i| 0.25 * bounds.width(i)).collect();
    for _ in 0..steps {
        let mut moved = false;
        'poll: for i in 0..dim {
            if step[i] <= 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (x[i] + sign * step[i]).clamp(bounds.low[i], bounds.high[i]);
                if cand[i] == x[i] {
                    continue;
                }
                let cv = objective(&cand);
                if cv.is_finite() && beats(cv, &cand, v, &x) {
                    x = cand;
                    v = cv;
                    moved = true;
                    break 'poll;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
            if (0..dim).all(|i| step[i] <= 1e-10 * bounds.width(i).max(1e-300)) {
                break;
            }
        }
    }
    Some((x, v))
}

/// Multi-start compass search over a box.
///
/// Starts are `config.restarts` Latin-hypercube points (seeded by `config.seed`)
/// followed by `extra_starts`, each refined for `config.local_steps` polls.
/// Starts whose objective is non-finite are abandoned. Deterministic: the best
/// result is selected by value, then by lexicographically smallest point.
pub fn maximize_box<F>(
    objective: F,
    bounds: &Bounds,
    config: &AcquisitionConfig,
    extra_starts: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if bounds.dim() == 0 {
        return Err(Error::Config("cannot maximize over an empty box".into()));
    }
    let mut starts = latin_hypercube(config.restarts, bounds, config.seed);
    for s in extra_starts {
        if s.len() == bounds.dim() {
            let mut s = s.clone();
            bounds.clip(&mut s);
            starts.push(s);
        }
    }
    let results: Vec<Option<(Vec<f64>, f64)>> = starts
        .into_par_iter()
        .map(|s| compass_search(&objective, bounds, s, config.local_steps))
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            None => log::debug!("acquisition start {i} abandoned: non-finite objective"),
            Some((p, v)) => {
                if best.as_ref().is_none_or(|(bp, bv)| beats(v, &p, *bv, bp)) {
                    best = Some((p, v));
                }
            }
        }
    }
    best.map(|(p, v)| (p, v))
        .ok_or_else(|| Error::Numerical("every acquisition start produced a non-finite value".into()))
}
