//! The optimization loop.
//!
//! A campaign evaluates a Latin-hypercube design of experiments, then
//! repeatedly refits the objective and cost surrogates, proposes the next
//! `(x, z)` with the cost-adjusted UCB, proposes the greedy design `x_g` at the
//! highest fidelity `z•`, and bounds the cost of evaluating both. While the
//! remaining budget exceeds that bound the proposal is evaluated; otherwise the
//! greedy design is evaluated at `z•` and the campaign ends.
//!
//! Every random choice is seeded by [`derive_seed`] from the campaign seed, a
//! purpose tag and a counter, so a campaign restored from a saved
//! [`EngineState`] continues exactly as the uninterrupted one would have.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    cost_adjusted_ucb, greedy_highest_fidelity, maximize_acquisition, maximize_box, ucb, AcquisitionConfig,
};
use crate::backends::{EvalOutput, Evaluator};
use crate::error::{Error, Result};
use crate::gp::{join, KernelFamily};
use crate::rtd::{RtdCurve, TisFit};
use crate::space::{latin_hypercube, Bounds};
use crate::surrogate::{c_max, CostBound, SurrogateOptions, SurrogatePair};

/// Purpose tags for [`derive_seed`].
pub mod seed_purpose {
    pub const DOE: u64 = 1;
    pub const FIT: u64 = 2;
    pub const ACQUISITION: u64 = 3;
    pub const GREEDY: u64 = 4;
    pub const EVALUATION: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent, reproducible seed for `(base, purpose, counter)`.
pub fn derive_seed(base: u64, purpose: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ purpose) ^ counter)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Doe,
    Acquisition,
    Greedy,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Doe => "doe",
            Self::Acquisition => "acquisition",
            Self::Greedy => "greedy",
        }
    }
}

/// One evaluation `(x, z, y, c)` with its bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub index: usize,
    /// 0 for the design of experiments, then 1, 2, … per loop step.
    pub iteration: usize,
    pub provenance: Provenance,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: Option<f64>,
    /// Cost paid; 0 for a failure that reported none.
    pub cost: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    /// Running total of every recorded cost, DoE included. Serves as the
    /// campaign's clock.
    pub cumulative_cost: f64,
    /// Budget left after this record.
    pub remaining_budget: f64,
    /// Stopping-rule bound computed when this point was chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<CostBound>,
    /// Acquisition value of a standard point, or the predicted objective of the greedy point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<TisFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<RtdCurve>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn successes(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.failed)
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub total: f64,
    pub spent: f64,
}

impl BudgetState {
    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    BudgetStoppingRule,
    EvaluatorFailureLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BudgetStoppingRule => "budget-stopping-rule",
            Self::EvaluatorFailureLimit => "evaluator-failure-limit",
        }
    }
}

/// Final answer of a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub x_star: Vec<f64>,
    pub y_star: f64,
    pub z_star: Vec<f64>,
    pub termination: Termination,
    pub spent: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub x_star: Vec<f64>,
    pub y_star: f64,
    pub z_star: Vec<f64>,
    pub termination: Termination,
    pub budget: BudgetState,
    pub iterations: usize,
    pub trace: Dataset,
}

/// Everything the loop needs besides the evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub design_bounds: Bounds,
    /// Fidelity box; its upper corner is `z•`.
    pub fidelity_bounds: Bounds,
    pub doe_count: usize,
    pub budget_total: f64,
    /// Charge the design of experiments to the budget.
    pub include_doe_cost: bool,
    pub p_lambda: f64,
    pub acquisition: AcquisitionConfig,
    pub kernel: KernelFamily,
    pub gp_restarts: usize,
    pub seed: u64,
    /// Divide the UCB by `γ · μ_λ · discount`; when off the plain UCB at `z•` is maximized.
    pub cost_adjustment: bool,
    /// Evaluate everything at `z•` and leave `z` out of the surrogates.
    pub fixed_fidelity: bool,
    pub max_consecutive_failures: usize,
    /// Worker threads for the design of experiments.
    pub doe_threads: usize,
}

impl Settings {
    pub fn new(design_bounds: Bounds, fidelity_bounds: Bounds, budget_total: f64) -> Self {
        Self {
            design_bounds,
            fidelity_bounds,
            doe_count: 25,
            budget_total,
            include_doe_cost: false,
            p_lambda: 2.0,
            acquisition: AcquisitionConfig::default(),
            kernel: KernelFamily::SquaredExponential,
            gp_restarts: 3,
            seed: 0,
            cost_adjustment: true,
            fixed_fidelity: false,
            max_consecutive_failures: 3,
            doe_threads: 4,
        }
    }

    pub fn z_star(&self) -> Vec<f64> {
        self.fidelity_bounds.high.clone()
    }

    pub fn validate(&self) -> Result<()> {
        if self.design_bounds.dim() == 0 {
            return Err(Error::Config("at least one design variable is required".into()));
        }
        for i in 0..self.design_bounds.dim() {
            if !(self.design_bounds.low[i] < self.design_bounds.high[i]) {
                return Err(Error::Config(format!(
                    "design bound {i}: low {} must be below high {}",
                    self.design_bounds.low[i], self.design_bounds.high[i]
                )));
            }
        }
        if self.doe_count < 2 {
            return Err(Error::Config(format!("doe_count must be at least 2, got {}", self.doe_count)));
        }
        if !(self.budget_total.is_finite() && self.budget_total > 0.0) {
            return Err(Error::Config(format!("budget_total must be positive, got {}", self.budget_total)));
        }
        if !(self.p_lambda.is_finite() && self.p_lambda >= 0.0) {
            return Err(Error::Config(format!("p_lambda must be non-negative, got {}", self.p_lambda)));
        }
        if self.gp_restarts == 0 {
            return Err(Error::Config("gp_restarts must be at least 1".into()));
        }
        if self.max_consecutive_failures == 0 {
            return Err(Error::Config("max_consecutive_failures must be at least 1".into()));
        }
        self.acquisition.validate()
    }

    /// Surrogate input for `(x, z)`: `x` alone in fixed-fidelity mode.
    fn input(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        if self.fixed_fidelity {
            x.to_vec()
        } else {
            join(x, z)
        }
    }

    /// `z` as seen by the surrogates.
    fn model_z<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        if self.fixed_fidelity {
            &[]
        } else {
            z
        }
    }

    /// Points of the design of experiments, in evaluation order.
    pub fn doe_points(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let seed = derive_seed(self.seed, seed_purpose::DOE, 0);
        let n = self.design_bounds.dim();
        if self.fixed_fidelity {
            latin_hypercube(self.doe_count, &self.design_bounds, seed)
                .into_iter()
                .map(|x| (x, self.z_star()))
                .collect()
        } else {
            latin_hypercube(self.doe_count, &self.design_bounds.join(&self.fidelity_bounds), seed)
                .into_iter()
                .map(|p| (p[..n].to_vec(), p[n..].to_vec()))
                .collect()
        }
    }
}

/// Serializable campaign state, sufficient to resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub settings: Settings,
    pub dataset: Dataset,
    pub budget: BudgetState,
    /// Last completed loop iteration.
    pub iteration: usize,
    pub consecutive_failures: usize,
    pub outcome: Option<Outcome>,
}

impl EngineState {
    pub fn new(settings: Settings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            budget: BudgetState {
                total: settings.budget_total,
                spent: 0.0,
            },
            settings,
            dataset: Dataset::default(),
            iteration: 0,
            consecutive_failures: 0,
            outcome: None,
        })
    }

    pub fn doe_done(&self) -> bool {
        self.dataset.len() >= self.settings.doe_count
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn result(&self) -> Option<CampaignResult> {
        self.outcome.as_ref().map(|o| CampaignResult {
            x_star: o.x_star.clone(),
            y_star: o.y_star,
            z_star: o.z_star.clone(),
            termination: o.termination,
            budget: self.budget,
            iterations: o.iterations,
            trace: self.dataset.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Continue,
    Finished(CampaignResult),
}

/// What the loop decided at one step, before evaluating.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub x_next: Vec<f64>,
    pub z_next: Vec<f64>,
    pub acquisition_value: f64,
    pub x_greedy: Vec<f64>,
    /// Predicted objective at `(x_g, z•)` in target units.
    pub greedy_mean: f64,
    pub bound: CostBound,
    pub remaining: f64,
}

impl Proposal {
    pub fn continues(&self) -> bool {
        self.remaining > self.bound.total()
    }
}

/// Callback run after every appended record, e.g. to checkpoint.
pub type Observer<'a> = dyn FnMut(&EngineState, &Record) -> Result<()> + 'a;

pub struct Campaign<'e> {
    state: EngineState,
    evaluator: &'e dyn Evaluator,
}

impl<'e> Campaign<'e> {
    pub fn new(settings: Settings, evaluator: &'e dyn Evaluator) -> Result<Self> {
        Self::from_state(EngineState::new(settings)?, evaluator)
    }

    pub fn from_state(state: EngineState, evaluator: &'e dyn Evaluator) -> Result<Self> {
        state.settings.validate()?;
        Ok(Self { state, evaluator })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }

    fn push(
        &mut self,
        iteration: usize,
        provenance: Provenance,
        x: Vec<f64>,
        z: Vec<f64>,
        seed: u64,
        result: Result<EvalOutput>,
        decision: Option<&Proposal>,
    ) -> Result<()> {
        let index = self.state.dataset.len();
        let (objective, cost, error, fit, curve) = match result {
            Ok(out) => {
                if !(out.cost.is_finite() && out.cost > 0.0) {
                    return Err(Error::Evaluation {
                        message: format!("evaluator reported non-positive cost {}", out.cost),
                        cost: None,
                    });
                }
                if !out.objective.is_finite() {
                    let message = format!("evaluator reported objective {}", out.objective);
                    (None, out.cost, Some(message), out.fit, out.curve)
                } else {
                    (Some(out.objective), out.cost, None, out.fit, out.curve)
                }
            }
            Err(e) => {
                let cost = e.paid_cost().filter(|c| c.is_finite() && *c > 0.0).unwrap_or(0.0);
                (None, cost, Some(e.to_string()), None, None)
            }
        };
        let failed = objective.is_none();
        if provenance != Provenance::Doe || self.state.settings.include_doe_cost {
            self.state.budget.spent += cost;
        }
        let cumulative_cost = self.state.dataset.last().map_or(0.0, |r| r.cumulative_cost) + cost;
        let (c_max, predicted) = match (decision, provenance) {
            (Some(p), Provenance::Acquisition) => (Some(p.bound), Some(p.acquisition_value)),
            (Some(p), Provenance::Greedy) => (Some(p.bound), Some(p.greedy_mean)),
            _ => (None, None),
        };
        let record = Record {
            index,
            iteration,
            provenance,
            x,
            z,
            objective,
            cost,
            failed,
            error,
            seed,
            cumulative_cost,
            remaining_budget: self.state.budget.remaining(),
            c_max,
            predicted,
            fit,
            curve_checksum: curve.as_ref().map(RtdCurve::checksum),
            curve,
        };
        if failed {
            log::warn!("evaluation {index} failed: {}", record.error.as_deref().unwrap_or(""));
        }
        self.state.dataset.records.push(record);
        Ok(())
    }

    fn notify(&self, observer: &mut Observer<'_>) -> Result<()> {
        observer(&self.state, self.state.dataset.last().expect("at least one record"))
    }

    /// Evaluates the remaining design-of-experiments points.
    pub fn run_doe(&mut self, observer: &mut Observer<'_>) -> Result<()> {
        let points = self.state.settings.doe_points();
        let threads = self.state.settings.doe_threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start DoE workers: {e}")))?;
        let base = self.state.settings.seed;
        while !self.state.doe_done() {
            let start = self.state.dataset.len();
            let end = (start + threads).min(points.len());
            let evaluator = self.evaluator;
            let results: Vec<Result<EvalOutput>> = pool.install(|| {
                points[start..end]
                    .par_iter()
                    .enumerate()
                    .map(|(k, (x, z))| evaluator.evaluate(x, z, derive_seed(base, seed_purpose::EVALUATION, (start + k) as u64)))
                    .collect()
            });
            for (k, result) in results.into_iter().enumerate() {
                let (x, z) = points[start + k].clone();
                let seed = derive_seed(base, seed_purpose::EVALUATION, (start + k) as u64);
                self.push(0, Provenance::Doe, x, z, seed, result, None)?;
                self.notify(observer)?;
            }
        }
        if self.state.dataset.successes().count() < 2 {
            return Err(Error::evaluation(
                "fewer than two design-of-experiments evaluations succeeded",
                None,
            ));
        }
        Ok(())
    }

    /// Refits both surrogates on the current data.
    pub fn refit(&self, iteration: usize) -> Result<SurrogatePair> {
        let s = &self.state.settings;
        let records = &self.state.dataset.records;
        let (obj_in, obj_y): (Vec<Vec<f64>>, Vec<f64>) = records
            .iter()
            .filter_map(|r| r.objective.map(|y| (s.input(&r.x, &r.z), y)))
            .unzip();
        let (cost_in, cost_y): (Vec<Vec<f64>>, Vec<f64>) = records
            .iter()
            .filter(|r| r.cost > 0.0)
            .map(|r| (s.input(&r.x, &r.z), r.cost))
            .unzip();
        SurrogatePair::fit(
            &obj_in,
            &obj_y,
            &cost_in,
            &cost_y,
            &SurrogateOptions {
                family: s.kernel,
                restarts: s.gp_restarts,
                seed: derive_seed(s.seed, seed_purpose::FIT, iteration as u64),
            },
        )
    }

    /// Best successful design at `z•`, falling back to the best at any fidelity.
    fn incumbent(&self) -> Option<&Record> {
        let z_star = self.state.settings.z_star();
        let best = |at_top: bool| {
            self.state
                .dataset
                .successes()
                .filter(|r| !at_top || r.z == z_star)
                .max_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()))
        };
        best(true).or_else(|| best(false))
    }

    /// Computes the next standard point, the greedy point and the stopping bound.
    pub fn propose(&self, iteration: usize, models: &SurrogatePair) -> Result<Proposal> {
        let s = &self.state.settings;
        let z_star_full = s.z_star();
        let z_star = s.model_z(&z_star_full);
        let f = &models.objective;
        let acq = s.acquisition.with_seed(derive_seed(s.seed, seed_purpose::ACQUISITION, iteration as u64));

        let value = |x: &[f64], z: &[f64]| -> f64 {
            let v = if s.cost_adjustment {
                cost_adjusted_ucb(f, &models.cost, x, z, z_star, &acq)
            } else {
                ucb(f, x, z_star, acq.beta)
            };
            v.unwrap_or(f64::NAN)
        };
        let (x_next, z_next, acquisition_value) = if s.fixed_fidelity {
            let (x, v) = maximize_box(|x: &[f64]| value(x, &[]), &s.design_bounds, &acq, &[])?;
            (x, z_star_full.clone(), v)
        } else {
            let opt = maximize_acquisition(value, &s.design_bounds, &s.fidelity_bounds, &acq, &[])?;
            (opt.x, opt.z, opt.value)
        };

        let greedy_cfg = acq.with_seed(derive_seed(s.seed, seed_purpose::GREEDY, iteration as u64));
        let extra: Vec<Vec<f64>> = self.incumbent().map(|r| r.x.clone()).into_iter().collect();
        let (x_greedy, _) = greedy_highest_fidelity(f, &s.design_bounds, z_star, &greedy_cfg, &extra)?;
        let greedy_mean = f.predict(&join(&x_greedy, z_star))?.mean;

        let bound = c_max(&models.cost, &x_next, s.model_z(&z_next), &x_greedy, z_star, s.p_lambda)?;
        Ok(Proposal {
            x_next,
            z_next,
            acquisition_value,
            x_greedy,
            greedy_mean,
            bound,
            remaining: self.state.budget.remaining(),
        })
    }

    fn finish(&mut self, termination: Termination) -> Result<CampaignResult> {
        let best = match termination {
            Termination::BudgetStoppingRule => self.state.dataset.last(),
            Termination::EvaluatorFailureLimit => self.incumbent(),
        }
        .ok_or_else(|| Error::evaluation("no successful evaluation to report", None))?;
        self.state.outcome = Some(Outcome {
            x_star: best.x.clone(),
            y_star: best.objective.expect("successful record"),
            z_star: best.z.clone(),
            termination,
            spent: self.state.budget.spent,
            iterations: self.state.iteration,
        });
        Ok(self.state.result().expect("outcome set"))
    }

    /// One loop iteration: refit, propose, evaluate.
    pub fn step(&mut self, observer: &mut Observer<'_>) -> Result<StepOutcome> {
        if let Some(result) = self.state.result() {
            return Ok(StepOutcome::Finished(result));
        }
        if !self.state.doe_done() {
            return Err(Error::Config("design of experiments is incomplete".into()));
        }
        let t = self.state.iteration + 1;
        let models = self.refit(t)?;
        let proposal = self.propose(t, &models)?;
        let (provenance, x, z) = if proposal.continues() {
            (Provenance::Acquisition, proposal.x_next.clone(), proposal.z_next.clone())
        } else {
            (Provenance::Greedy, proposal.x_greedy.clone(), self.state.settings.z_star())
        };
        let seed = derive_seed(self.state.settings.seed, seed_purpose::EVALUATION, self.state.dataset.len() as u64);
        let result = self.evaluator.evaluate(&x, &z, seed);
        self.state.iteration = t;
        self.push(t, provenance, x, z, seed, result, Some(&proposal))?;

        let failed = self.state.dataset.last().is_some_and(|r| r.failed);
        let outcome = if failed {
            self.state.consecutive_failures += 1;
            if self.state.consecutive_failures >= self.state.settings.max_consecutive_failures {
                StepOutcome::Finished(self.finish(Termination::EvaluatorFailureLimit)?)
            } else {
                StepOutcome::Continue
            }
        } else {
            self.state.consecutive_failures = 0;
            if provenance == Provenance::Greedy {
                StepOutcome::Finished(self.finish(Termination::BudgetStoppingRule)?)
            } else {
                StepOutcome::Continue
            }
        };
        self.notify(observer)?;
        Ok(outcome)
    }

    /// Runs the design of experiments (if needed) and the loop until it finishes.
    pub fn run(&mut self, observer: &mut Observer<'_>) -> Result<CampaignResult> {
        if !self.state.doe_done() {
            self.run_doe(observer)?;
        }
        loop {
            if let StepOutcome::Finished(result) = self.step(observer)? {
                return Ok(result);
            }
        }
    }
}

/// Runs a full campaign without observation.
pub fn run(settings: Settings, evaluator: &dyn Evaluator) -> Result<CampaignResult> {
    Campaign::new(settings, evaluator)?.run(&mut |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ConstantCost, FnEvaluator};

    fn quad(x: &[f64], z: &[f64], _seed: u64) -> Result<EvalOutput> {
        let y = -(x[0] - 0.3).powi(2) - 0.1 * (1.0 - z[0]);
        Ok(EvalOutput::scalar(y, 1.0 + 4.0 * z[0]))
    }

    fn settings(budget: f64) -> Settings {
        let mut s = Settings::new(
            Bounds::new(vec![0.0], vec![1.0]).unwrap(),
            Bounds::new(vec![0.0], vec![1.0]).unwrap(),
            budget,
        );
        s.doe_count = 5;
        s.acquisition.restarts = 4;
        s.acquisition.local_steps = 20;
        s.seed = 9;
        s
    }

    #[test]
    fn derived_seeds_differ_by_every_argument() {
        let a = derive_seed(1, 2, 3);
        assert_eq!(a, derive_seed(1, 2, 3));
        assert_ne!(a, derive_seed(0, 2, 3));
        assert_ne!(a, derive_seed(1, 3, 3));
        assert_ne!(a, derive_seed(1, 2, 4));
    }

    #[test]
    fn doe_is_stratified_and_tagged() {
        let e = FnEvaluator(quad);
        let mut c = Campaign::new(settings(20.0), &e).unwrap();
        c.run_doe(&mut |_, _| Ok(())).unwrap();
        let recs = &c.state().dataset.records;
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().all(|r| r.provenance == Provenance::Doe && r.iteration == 0));
        assert_eq!(c.state().budget.spent, 0.0);
    }

    #[test]
    fn tiny_budget_goes_straight_to_greedy() {
        let e = FnEvaluator(quad);
        let r = run(settings(1e-6), &e).unwrap();
        assert_eq!(r.trace.len(), 6);
        assert_eq!(r.trace.last().unwrap().provenance, Provenance::Greedy);
        assert_eq!(r.z_star, vec![1.0]);
        assert_eq!(r.termination, Termination::BudgetStoppingRule);
    }

    #[test]
    fn large_budget_continues_then_ends_at_top_fidelity() {
        let e = FnEvaluator(quad);
        let r = run(settings(40.0), &e).unwrap();
        let last = r.trace.last().unwrap();
        assert_eq!(last.provenance, Provenance::Greedy);
        assert_eq!(last.z, vec![1.0]);
        assert!(r.trace.records.iter().filter(|r| r.provenance == Provenance::Acquisition).count() >= 1);
        let spent: f64 = r.trace.records.iter().filter(|r| r.provenance != Provenance::Doe).map(|r| r.cost).sum();
        assert!((spent - r.budget.spent).abs() < 1e-9);
        assert!((r.x_star[0] - 0.3).abs() < 0.1);
    }

    #[test]
    fn branch_follows_the_cost_inequality() {
        // constant cost 2 → cost GP is flat and certain, c_max ≈ 4
        let e = ConstantCost {
            inner: FnEvaluator(quad),
            cost: 2.0,
        };
        for (budget, expect_continue) in [(4.5, true), (3.5, false)] {
            let mut c = Campaign::new(settings(budget), &e).unwrap();
            c.run_doe(&mut |_, _| Ok(())).unwrap();
            let models = c.refit(1).unwrap();
            let p = c.propose(1, &models).unwrap();
            assert!((p.bound.standard - 2.0).abs() < 1e-6 && (p.bound.greedy - 2.0).abs() < 1e-6);
            assert_eq!(p.continues(), expect_continue);
            let outcome = c.step(&mut |_, _| Ok(())).unwrap();
            assert_eq!(matches!(outcome, StepOutcome::Continue), expect_continue);
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let e = FnEvaluator(quad);
        let a = run(settings(30.0), &e).unwrap();
        let b = run(settings(30.0), &e).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    }

    #[test]
    fn resume_from_saved_state_matches_uninterrupted_run() {
        let e = FnEvaluator(quad);
        let full = run(settings(30.0), &e).unwrap();
        let mut snapshots = Vec::new();
        let mut c = Campaign::new(settings(30.0), &e).unwrap();
        c.run(&mut |s, _| {
            snapshots.push(serde_json::to_string(s)?);
            Ok(())
        })
        .unwrap();
        for snap in [&snapshots[2], &snapshots[6], &snapshots[snapshots.len() - 2]] {
            let state: EngineState = serde_json::from_str(snap).unwrap();
            let resumed = Campaign::from_state(state, &e).unwrap().run(&mut |_, _| Ok(())).unwrap();
            assert_eq!(resumed.trace, full.trace);
        }
    }

    #[test]
    fn repeated_failures_stop_the_campaign() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let e = FnEvaluator(|x: &[f64], z: &[f64], s: u64| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 5 {
                Err(Error::evaluation("solver diverged", Some(0.5)))
            } else {
                quad(x, z, s)
            }
        });
        let r = run(settings(100.0), &e).unwrap();
        assert_eq!(r.termination, Termination::EvaluatorFailureLimit);
        assert_eq!(r.trace.len(), 8);
        assert!(r.trace.records[5..].iter().all(|r| r.failed && r.cost == 0.5));
        assert!((r.budget.spent - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_fidelity_evaluates_only_at_the_top() {
        let e = FnEvaluator(quad);
        let mut s = settings(30.0);
        s.fixed_fidelity = true;
        s.cost_adjustment = false;
        let r = run(s, &e).unwrap();
        assert!(r.trace.records.iter().all(|r| r.z == vec![1.0]));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut s = settings(10.0);
        s.doe_count = 1;
        assert!(s.validate().is_err());
        let mut s = settings(10.0);
        s.budget_total = 0.0;
        assert!(s.validate().is_err());
        let mut s = settings(10.0);
        s.p_lambda = -1.0;
        assert!(s.validate().is_err());
    }
}
