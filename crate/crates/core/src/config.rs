//! Campaign configuration file (JSON).
//!
//! ```json
//! {
//!   "design": [{"name": "pitch", "low": 7.5, "high": 15.0, "unit": "mm"}, ...],
//!   "fidelity": [{"name": "axial", "low": 20, "high": 60, "unit": "cells"}, ...],
//!   "evaluator": {"kind": "mock-reactor"},
//!   "budget_total": 230400, "budget_units": "s", "seed": 0
//! }
//! ```
//!
//! Every other key is optional; see [`CampaignConfig::default`] for values.
//! `z•` is the upper corner of the fidelity box.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionConfig;
use crate::backends::{EvaluatorSpec, MockReactorSpec, SyntheticSpec, REACTOR_DESIGN_NAMES, REACTOR_FIDELITY_NAMES};
use crate::engine::Settings;
use crate::error::{Error, Result};
use crate::gp::KernelFamily;
use crate::space::Bounds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub unit: String,
}

impl Variable {
    pub fn new(name: &str, low: f64, high: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            low,
            high,
            unit: unit.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub design: Vec<Variable>,
    pub fidelity: Vec<Variable>,
    pub evaluator: EvaluatorSpec,
    pub doe_count: usize,
    pub beta: f64,
    pub gamma: f64,
    pub p_lambda: f64,
    pub discount_floor: f64,
    pub budget_total: f64,
    pub budget_units: String,
    pub include_doe_cost: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub acq_restarts: usize,
    pub acq_local_steps: usize,
    pub kernel: KernelFamily,
    pub gp_restarts: usize,
    pub cost_adjustment: bool,
    pub fixed_fidelity: bool,
    pub max_consecutive_failures: usize,
    pub doe_threads: usize,
}

impl Default for CampaignConfig {
    /// The six-variable, two-fidelity coiled-tube problem on the mock reactor
    /// with a 64 hour budget.
    fn default() -> Self {
        let units = ["mm", "mm", "", "mm", "Hz", ""];
        let db = MockReactorSpec::design_bounds();
        let fb = MockReactorSpec::fidelity_bounds();
        Self {
            design: (0..6)
                .map(|i| Variable::new(REACTOR_DESIGN_NAMES[i], db.low[i], db.high[i], units[i]))
                .collect(),
            fidelity: (0..2)
                .map(|i| Variable::new(REACTOR_FIDELITY_NAMES[i], fb.low[i], fb.high[i], "cells"))
                .collect(),
            evaluator: EvaluatorSpec::MockReactor(MockReactorSpec::default()),
            doe_count: 25,
            beta: 2.5,
            gamma: 1.5,
            p_lambda: 2.0,
            discount_floor: 1e-2,
            budget_total: 64.0 * 3600.0,
            budget_units: "s".into(),
            include_doe_cost: false,
            seed: 0,
            output_dir: PathBuf::from("mfbo-output"),
            acq_restarts: 16,
            acq_local_steps: 40,
            kernel: KernelFamily::SquaredExponential,
            gp_restarts: 3,
            cost_adjustment: true,
            fixed_fidelity: false,
            max_consecutive_failures: 3,
            doe_threads: 4,
        }
    }
}

impl CampaignConfig {
    /// Two-variable synthetic benchmark on the unit square.
    pub fn synthetic(spec: SyntheticSpec, budget_total: f64) -> Self {
        let fb = spec.fidelity_bounds();
        Self {
            design: vec![Variable::new("x0", 0.0, 1.0, ""), Variable::new("x1", 0.0, 1.0, "")],
            fidelity: (0..fb.dim())
                .map(|i| Variable::new(&format!("z{i}"), fb.low[i], fb.high[i], ""))
                .collect(),
            evaluator: EvaluatorSpec::SyntheticBenchmark(spec),
            doe_count: 10,
            budget_total,
            budget_units: "units".into(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&text))
    }

    pub fn design_bounds(&self) -> Bounds {
        Bounds {
            low: self.design.iter().map(|v| v.low).collect(),
            high: self.design.iter().map(|v| v.high).collect(),
        }
    }

    pub fn fidelity_bounds(&self) -> Bounds {
        Bounds {
            low: self.fidelity.iter().map(|v| v.low).collect(),
            high: self.fidelity.iter().map(|v| v.high).collect(),
        }
    }

    /// All problems found, one line per field.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.design.is_empty() {
            out.push("design: at least one variable is required".to_string());
        }
        if self.fidelity.is_empty() {
            out.push("fidelity: at least one variable is required".to_string());
        }
        for (group, vars) in [("design", &self.design), ("fidelity", &self.fidelity)] {
            for (i, v) in vars.iter().enumerate() {
                if !(v.low.is_finite() && v.high.is_finite()) {
                    out.push(format!("{group}[{i}] ({}): bounds must be finite", v.name));
                } else if group == "design" && v.low >= v.high {
                    out.push(format!("{group}[{i}] ({}): low {} must be below high {}", v.name, v.low, v.high));
                } else if group == "fidelity" && v.low > v.high {
                    out.push(format!("{group}[{i}] ({}): low {} exceeds high {}", v.name, v.low, v.high));
                }
                if vars[..i].iter().any(|w| w.name == v.name) {
                    out.push(format!("{group}[{i}]: duplicate name {:?}", v.name));
                }
            }
        }
        if self.doe_count < 2 {
            out.push(format!("doe_count: must be at least 2, got {}", self.doe_count));
        }
        if !(self.budget_total.is_finite() && self.budget_total > 0.0) {
            out.push(format!("budget_total: must be positive, got {}", self.budget_total));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name}: must be positive, got {v}"));
            }
        }
        if !(self.p_lambda.is_finite() && self.p_lambda >= 0.0) {
            out.push(format!("p_lambda: must be non-negative, got {}", self.p_lambda));
        }
        if !(self.discount_floor > 0.0 && self.discount_floor <= 1.0) {
            out.push(format!("discount_floor: must lie in (0, 1], got {}", self.discount_floor));
        }
        for (name, v) in [
            ("acq_restarts", self.acq_restarts),
            ("acq_local_steps", self.acq_local_steps),
            ("gp_restarts", self.gp_restarts),
            ("max_consecutive_failures", self.max_consecutive_failures),
            ("doe_threads", self.doe_threads),
        ] {
            if v == 0 {
                out.push(format!("{name}: must be at least 1"));
            }
        }
        if let Err(e) = self.evaluator.validate() {
            out.push(format!("evaluator: {e}"));
        }
        out.extend(self.domain_diagnostics());
        out
    }

    fn domain_diagnostics(&self) -> Vec<String> {
        let domain = match &self.evaluator {
            EvaluatorSpec::SyntheticBenchmark(s) => Some((s.design_bounds(), s.fidelity_bounds())),
            EvaluatorSpec::MockReactor(_) => Some((MockReactorSpec::design_bounds(), MockReactorSpec::fidelity_bounds())),
            EvaluatorSpec::ExternalProcess(_) => None,
        };
        let Some((d, f)) = domain else { return Vec::new() };
        let mut out = Vec::new();
        for (group, vars, b) in [("design", &self.design, &d), ("fidelity", &self.fidelity, &f)] {
            if vars.len() != b.dim() {
                out.push(format!(
                    "{group}: {} evaluator expects {} variables, got {}",
                    self.evaluator.kind(),
                    b.dim(),
                    vars.len()
                ));
                continue;
            }
            for (i, v) in vars.iter().enumerate() {
                if v.low < b.low[i] || v.high > b.high[i] {
                    out.push(format!(
                        "{group}[{i}] ({}): [{}, {}] exceeds the evaluator's range [{}, {}]",
                        v.name, v.low, v.high, b.low[i], b.high[i]
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(d.join("; ")))
        }
    }

    pub fn settings(&self) -> Result<Settings> {
        self.validate()?;
        let settings = Settings {
            design_bounds: self.design_bounds(),
            fidelity_bounds: self.fidelity_bounds(),
            doe_count: self.doe_count,
            budget_total: self.budget_total,
            include_doe_cost: self.include_doe_cost,
            p_lambda: self.p_lambda,
            acquisition: AcquisitionConfig {
                beta: self.beta,
                gamma: self.gamma,
                discount_floor: self.discount_floor,
                restarts: self.acq_restarts,
                local_steps: self.acq_local_steps,
                seed: 0,
            },
            kernel: self.kernel,
            gp_restarts: self.gp_restarts,
            seed: self.seed,
            cost_adjustment: self.cost_adjustment,
            fixed_fidelity: self.fixed_fidelity,
            max_consecutive_failures: self.max_consecutive_failures,
            doe_threads: self.doe_threads,
        };
        settings.validate()?;
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_the_full_reactor_problem() {
        let c = CampaignConfig::default();
        c.validate().unwrap();
        assert_eq!(c.design.len(), 6);
        assert_eq!(c.fidelity_bounds().high, vec![60.0, 5.0]);
        assert_eq!(c.fidelity_bounds().low, vec![20.0, 1.0]);
        assert_eq!((c.doe_count, c.beta, c.gamma, c.p_lambda), (25, 2.5, 1.5, 2.0));
        assert_eq!(c.budget_total, 230_400.0);
        let b = c.design_bounds();
        assert_eq!(b.low, vec![7.5, 3.0, 0.0, 1.0, 2.0, 10.0]);
        assert_eq!(b.high, vec![15.0, 12.5, 1.0, 8.0, 8.0, 50.0]);
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let c = CampaignConfig::from_json(r#"{"seed": 7, "gamma": 0.5, "beta": 0.5}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.doe_count, 25);
        assert_ne!(c.hash(), CampaignConfig::default().hash());
    }

    #[test]
    fn round_trips_and_hash_is_stable() {
        let c = CampaignConfig::default();
        let back = CampaignConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn inverted_bounds_name_the_variable() {
        let mut c = CampaignConfig::default();
        c.design[1].low = 13.0;
        c.design[1].high = 4.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("coil_radius"), "{msg}");
    }

    #[test]
    fn collects_every_problem() {
        let mut c = CampaignConfig::default();
        c.doe_count = 1;
        c.budget_total = -1.0;
        c.p_lambda = -2.0;
        let d = c.diagnostics();
        assert!(d.iter().any(|m| m.starts_with("doe_count")));
        assert!(d.iter().any(|m| m.starts_with("budget_total")));
        assert!(d.iter().any(|m| m.starts_with("p_lambda")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(CampaignConfig::from_json(r#"{"gama": 0.5}"#).is_err());
    }

    #[test]
    fn bounds_outside_the_evaluator_range_are_rejected() {
        let mut c = CampaignConfig::default();
        c.fidelity[0].high = 80.0;
        assert!(c.validate().unwrap_err().to_string().contains("axial"));
        c = CampaignConfig::default();
        c.design.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn settings_carry_the_hyperparameters() {
        let mut c = CampaignConfig::synthetic(SyntheticSpec::default(), 10.0);
        c.gamma = 0.5;
        let s = c.settings().unwrap();
        assert_eq!(s.acquisition.gamma, 0.5);
        assert_eq!(s.z_star(), vec![1.0, 1.0]);
    }
}
