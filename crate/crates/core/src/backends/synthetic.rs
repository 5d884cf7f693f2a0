//! Analytic two-design, two-fidelity benchmark with a known optimum.
//!
//! ```text
//! y(x, z)    = f(x) − B(x) · mean_j (1 − s_j(z_j))
//! cost(x, z) = c₀ · g(x) · Π_j (z_j / z_j,max)^p_j
//! ```
//!
//! with `s_j` the fidelity normalized to `[0, 1]`. Every fidelity dimension
//! below its maximum adds its own share of the bias.

use serde::{Deserialize, Serialize};

use super::{check_inside, EvalOutput, Evaluator};
use crate::error::{Error, Result};
use crate::space::Bounds;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFunction {
    /// A narrow global bump beside a broad, lower local bump.
    #[default]
    TwoBump,
    /// Branin–Hoo mapped onto the unit square and flipped into a maximization
    /// problem with optimum 1.
    Branin,
}

impl SyntheticFunction {
    /// Highest-fidelity objective `f(x)` on `[0, 1]²`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::TwoBump => {
                let bump = |c: [f64; 2], w: f64, h: f64| {
                    let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    h * (-d2 / (2.0 * w * w)).exp()
                };
                bump([0.72, 0.28], 0.15, 1.0) + bump([0.25, 0.7], 0.25, 0.5)
            }
            Self::Branin => {
                let (u, v) = (15.0 * x[0] - 5.0, 15.0 * x[1]);
                let b = 5.1 / (4.0 * std::f64::consts::PI.powi(2));
                let c = 5.0 / std::f64::consts::PI;
                let t = 1.0 / (8.0 * std::f64::consts::PI);
                let br = (v - b * u * u + c * u - 6.0).powi(2) + 10.0 * (1.0 - t) * u.cos() + 10.0;
                1.0 - (br - 0.397_887_357_729_738_2) / 308.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub function: SyntheticFunction,
    /// Amplitude of the low-fidelity bias field `B(x)`.
    pub bias_scale: f64,
    /// `c₀`.
    pub cost_base: f64,
    /// `p_j`, one per fidelity dimension.
    pub cost_exponents: Vec<f64>,
    /// Lowest fidelity per dimension; the highest is 1.
    pub fidelity_low: Vec<f64>,
    pub failure_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            function: SyntheticFunction::TwoBump,
            bias_scale: 0.4,
            cost_base: 1.0,
            cost_exponents: vec![1.0, 1.0],
            fidelity_low: vec![0.1, 0.1],
            failure_rate: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias_scale.is_finite() && self.bias_scale >= 0.0) {
            return Err(Error::Config(format!("bias_scale must be non-negative, got {}", self.bias_scale)));
        }
        if !(self.cost_base.is_finite() && self.cost_base > 0.0) {
            return Err(Error::Config(format!("cost_base must be positive, got {}", self.cost_base)));
        }
        if self.cost_exponents.len() != self.fidelity_low.len() || self.fidelity_low.is_empty() {
            return Err(Error::Config(
                "cost_exponents and fidelity_low need one entry per fidelity dimension".into(),
            ));
        }
        if let Some(p) = self.cost_exponents.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Config(format!("cost exponent {p} must be non-negative")));
        }
        if let Some(l) = self.fidelity_low.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::Config(format!("fidelity_low entry {l} must lie in (0, 1)")));
        }
        Ok(())
    }

    pub fn design_bounds(&self) -> Bounds {
        Bounds {
            low: vec![0.0, 0.0],
            high: vec![1.0, 1.0],
        }
    }

    pub fn fidelity_bounds(&self) -> Bounds {
        Bounds {
            low: self.fidelity_low.clone(),
            high: vec![1.0; self.fidelity_low.len()],
        }
    }
}

pub struct SyntheticBenchmark {
    spec: SyntheticSpec,
    design: Bounds,
    fidelity: Bounds,
}

impl SyntheticBenchmark {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            design: spec.design_bounds(),
            fidelity: spec.fidelity_bounds(),
            spec,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn truth(&self, x: &[f64]) -> f64 {
        self.spec.function.eval(x)
    }

    /// Low-fidelity bias field `B(x) ≥ 0`.
    pub fn bias_field(&self, x: &[f64]) -> f64 {
        self.spec.bias_scale * (0.6 + 0.4 * x[0])
    }

    /// Design-dependent cost factor `g(x) ∈ [1, 1.5]`.
    pub fn cost_factor(&self, x: &[f64]) -> f64 {
        1.0 + 0.5 * x[1]
    }

    pub fn objective(&self, x: &[f64], z: &[f64]) -> f64 {
        let s = self.fidelity.to_unit(z);
        let gap = s.iter().map(|s| 1.0 - s).sum::<f64>() / s.len() as f64;
        self.truth(x) - self.bias_field(x) * gap
    }

    pub fn cost(&self, x: &[f64], z: &[f64]) -> f64 {
        let shape: f64 = z
            .iter()
            .zip(&self.fidelity.high)
            .zip(&self.spec.cost_exponents)
            .map(|((z, hi), p)| (z / hi).powf(*p))
            .product();
        self.spec.cost_base * self.cost_factor(x) * shape
    }

    /// Best value and location of `f` on a `(n+1) × (n+1)` grid.
    pub fn grid_optimum(&self, n: usize) -> (Vec<f64>, f64) {
        let mut best = (vec![0.0, 0.0], f64::NEG_INFINITY);
        for i in 0..=n {
            for j in 0..=n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                let v = self.truth(&x);
                if v > best.1 {
                    best = (x.to_vec(), v);
                }
            }
        }
        best
    }
}

impl Evaluator for SyntheticBenchmark {
    fn evaluate(&self, x: &[f64], z: &[f64], _seed: u64) -> Result<EvalOutput> {
        check_inside("design", x, &self.design)?;
        check_inside("fidelity", z, &self.fidelity)?;
        let mut x = x.to_vec();
        let mut z = z.to_vec();
        self.design.clip(&mut x);
        self.fidelity.clip(&mut z);
        Ok(EvalOutput::scalar(self.objective(&x, &z), self.cost(&x, &z)))
    }

    fn domain(&self) -> Option<(Bounds, Bounds)> {
        Some((self.design.clone(), self.fidelity.clone()))
    }
}
