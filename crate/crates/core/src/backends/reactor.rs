//! Mock pulsed-flow coil reactor.
//!
//! Stands in for a CFD pipeline: a made-up smooth landscape `n_true(x)` of
//! tanks-in-series numbers is degraded by a fidelity-dependent bias, turned
//! into a sampled outlet RTD curve and reduced back to `N` by the same fit a
//! real simulation would go through. Cost grows with mesh fidelity and with
//! the simulated time needed for the tracer to wash out.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_inside, EvalOutput, Evaluator};
use crate::error::{Error, Result};
use crate::geometry::{self, net_velocity};
use crate::rtd::{self, FitMethod, RtdCurve};
use crate::space::Bounds;

pub const REACTOR_DESIGN_NAMES: [&str; 6] = ["pitch", "coil_radius", "inversion", "amplitude", "frequency", "reynolds"];
pub const REACTOR_FIDELITY_NAMES: [&str; 2] = ["axial", "radial"];

/// Tail level below which the synthesized tracer signal counts as washed out.
pub const WASHOUT_LEVEL: f64 = 1e-7;
/// Consecutive washed-out samples that end a simulation.
pub const WASHOUT_SAMPLES: usize = 10;

/// Hidden ground truth of the mock reactor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockReactorTruth {
    /// Relative loss of `N` at the lowest setting of each fidelity dimension.
    pub bias_scale: Vec<f64>,
    /// Virtual seconds charged per full-fidelity run before the duration term.
    pub cost_base: f64,
    /// Exponent of `z_j / z_j,max` in the cost, per fidelity dimension.
    pub cost_exponents: Vec<f64>,
    /// Virtual seconds charged per simulated second of flow.
    pub duration_rate: f64,
    /// Standard deviation of additive noise on `E(θ)` samples.
    pub noise_std: f64,
}

impl Default for MockReactorTruth {
    fn default() -> Self {
        Self {
            bias_scale: vec![0.03, 0.25],
            cost_base: 3600.0,
            cost_exponents: vec![1.0, 0.75],
            duration_rate: 20.0,
            noise_std: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockReactorSpec {
    #[serde(flatten)]
    pub truth: MockReactorTruth,
    pub fit_method: FitMethod,
    /// Sampling step in dimensionless time.
    pub theta_step: f64,
    /// Hard stop in dimensionless time.
    pub theta_max: f64,
    pub failure_rate: f64,
}

impl Default for MockReactorSpec {
    fn default() -> Self {
        Self {
            truth: MockReactorTruth::default(),
            fit_method: FitMethod::PeakMatching,
            theta_step: 0.004,
            theta_max: 25.0,
            failure_rate: 0.0,
        }
    }
}

impl MockReactorSpec {
    pub fn validate(&self) -> Result<()> {
        let t = &self.truth;
        if t.bias_scale.len() != 2 || t.cost_exponents.len() != 2 {
            return Err(Error::Config("mock reactor needs two bias_scale and two cost_exponents entries".into()));
        }
        if t.bias_scale.iter().any(|b| !(*b >= 0.0)) || t.bias_scale.iter().sum::<f64>() >= 0.5 {
            return Err(Error::Config(format!(
                "bias_scale entries must be non-negative and sum below 0.5, got {:?}",
                t.bias_scale
            )));
        }
        if t.cost_exponents.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("cost_exponents must be positive, got {:?}", t.cost_exponents)));
        }
        for (name, v) in [("cost_base", t.cost_base), ("theta_step", self.theta_step), ("theta_max", self.theta_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("duration_rate", t.duration_rate), ("noise_std", t.noise_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.theta_max < 50.0 * self.theta_step {
            return Err(Error::Config("theta_max must cover at least 50 sampling steps".into()));
        }
        Ok(())
    }

    pub fn design_bounds() -> Bounds {
        let (p, r, d) = (geometry::PITCH_BOUNDS, geometry::COIL_RADIUS_BOUNDS, geometry::INVERSION_BOUNDS);
        let (a, f, re) = (geometry::AMPLITUDE_BOUNDS, geometry::FREQUENCY_BOUNDS, geometry::REYNOLDS_BOUNDS);
        Bounds {
            low: vec![p.0, r.0, d.0, a.0, f.0, re.0],
            high: vec![p.1, r.1, d.1, a.1, f.1, re.1],
        }
    }

    /// Axial and radial fidelity; `z•` is the upper corner.
    pub fn fidelity_bounds() -> Bounds {
        Bounds {
            low: vec![20.0, 1.0],
            high: vec![60.0, 5.0],
        }
    }
}

pub struct MockReactor {
    spec: MockReactorSpec,
    design: Bounds,
    fidelity: Bounds,
}

/// `(center, width, height)` of each bump of the landscape, in unit-cube coordinates.
const BUMPS: [([f64; 6], f64, f64); 2] = [
    ([0.35, 0.8, 0.6, 0.2, 0.15, 0.7], 0.3, 0.97),
    ([0.7, 0.3, 0.0, 0.6, 0.6, 0.3], 0.35, 0.6),
];

impl MockReactor {
    pub fn new(spec: MockReactorSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            design: MockReactorSpec::design_bounds(),
            fidelity: MockReactorSpec::fidelity_bounds(),
        })
    }

    pub fn spec(&self) -> &MockReactorSpec {
        &self.spec
    }

    /// Highest-fidelity tanks-in-series number, in `[2, 60]`.
    pub fn n_true(&self, x: &[f64]) -> f64 {
        let u = self.design.to_unit(x);
        let miss: f64 = BUMPS
            .iter()
            .map(|(c, w, h)| {
                let d2: f64 = u.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                1.0 - h * (-d2 / (2.0 * w * w)).exp()
            })
            .product();
        2.0 + 58.0 * (1.0 - miss)
    }

    /// Maximizer of the landscape's dominant bump, in physical units.
    pub fn nominal_optimum(&self) -> Vec<f64> {
        self.design.from_unit(&BUMPS[0].0)
    }

    /// Fidelities as the simulator uses them: rounded to whole cells.
    pub fn round_fidelity(&self, z: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = z.iter().map(|v| v.round()).collect();
        self.fidelity.clip(&mut r);
        r
    }

    /// `N` the simulator would report without sampling noise.
    pub fn n_effective(&self, x: &[f64], z_rounded: &[f64]) -> f64 {
        let s = self.fidelity.to_unit(z_rounded);
        let loss: f64 = self.spec.truth.bias_scale.iter().zip(&s).map(|(b, s)| b * (1.0 - s)).sum();
        self.n_true(x) * (1.0 - loss)
    }

    /// Mean residence time in seconds at Reynolds number `re` for the fixed 75 mm tube.
    pub fn residence_time(re: f64) -> f64 {
        75.0 / net_velocity(re, 2.5)
    }

    fn fidelity_factor(&self, z_rounded: &[f64]) -> f64 {
        z_rounded
            .iter()
            .zip(&self.fidelity.high)
            .zip(&self.spec.truth.cost_exponents)
            .map(|((z, hi), p)| (z / hi).powf(*p))
            .product()
    }

    /// Virtual cost of a simulation that ran for `t_end` seconds of flow time.
    pub fn cost_for(&self, z_rounded: &[f64], t_end: f64) -> f64 {
        self.fidelity_factor(z_rounded) * (self.spec.truth.cost_base + self.spec.truth.duration_rate * t_end)
    }

    /// Synthesizes the outlet curve for a tanks-in-series number `n`.
    pub fn synthesize_curve(&self, n: f64, tau: f64, seed: u64) -> Result<RtdCurve> {
        let dtheta = self.spec.theta_step;
        let mode = rtd::tanks_in_series_mode(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.spec.truth.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut times = Vec::new();
        let mut conc = Vec::new();
        let mut quiet = 0;
        for i in 0.. {
            let theta = i as f64 * dtheta;
            let clean = rtd::tanks_in_series_curve(&[theta], n)?[0];
            let noisy = if self.spec.truth.noise_std > 0.0 {
                (clean + noise.sample(&mut rng)).max(0.0)
            } else {
                clean
            };
            times.push(theta * tau);
            conc.push(noisy);
            if theta > mode && clean < WASHOUT_LEVEL {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= WASHOUT_SAMPLES || theta >= self.spec.theta_max {
                break;
            }
        }
        RtdCurve::new(times, conc)
    }
}

impl Evaluator for MockReactor {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        check_inside("design", x, &self.design)?;
        check_inside("fidelity", z, &self.fidelity)?;
        let mut x = x.to_vec();
        self.design.clip(&mut x);
        let zr = self.round_fidelity(z);
        let n = self.n_effective(&x, &zr);
        let tau = Self::residence_time(x[5]);
        let curve = self.synthesize_curve(n, tau, seed)?;
        let t_end = *curve.times.last().unwrap();
        let cost = self.cost_for(&zr, t_end);
        let fit = rtd::to_dimensionless(&curve)
            .and_then(|d| rtd::fit_tanks_in_series_with(&d, self.spec.fit_method, rtd::DEFAULT_N_MAX))
            .map_err(|e| Error::evaluation(format!("RTD reduction failed: {e}"), Some(cost)))?;
        Ok(EvalOutput {
            objective: fit.n,
            cost,
            curve: Some(curve),
            fit: Some(fit),
        })
    }

    fn domain(&self) -> Option<(Bounds, Bounds)> {
        Some((self.design.clone(), self.fidelity.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::latin_hypercube;

    fn quiet_reactor() -> MockReactor {
        let mut spec = MockReactorSpec::default();
        spec.truth.noise_std = 0.0;
        MockReactor::new(spec).unwrap()
    }

    fn sample_designs(count: usize) -> Vec<Vec<f64>> {
        latin_hypercube(count, &MockReactorSpec::design_bounds(), 11)
    }

    #[test]
    fn landscape_stays_in_range_and_peaks_with_inversion() {
        let r = quiet_reactor();
        for x in sample_designs(200) {
            let n = r.n_true(&x);
            assert!((2.0..=60.0).contains(&n), "{n}");
        }
        let best = r.nominal_optimum();
        assert!(best[2] > 0.0);
        assert!(r.n_true(&best) > 55.0);
    }

    #[test]
    fn highest_fidelity_recovers_n_true() {
        let r = quiet_reactor();
        for x in sample_designs(12).into_iter().chain([r.nominal_optimum()]) {
            let out = r.evaluate(&x, &[60.0, 5.0], 1).unwrap();
            let n = r.n_true(&x);
            assert!((out.objective - n).abs() < 0.01 * n, "{} vs {n}", out.objective);
        }
    }

    #[test]
    fn objective_rises_with_fidelity() {
        let r = quiet_reactor();
        for x in sample_designs(8) {
            let y = |z: [f64; 2]| r.evaluate(&x, &z, 3).unwrap().objective;
            let (lo, mid, hi) = (y([20.0, 1.0]), y([40.0, 3.0]), y([60.0, 5.0]));
            assert!(lo <= mid && mid <= hi, "{lo} {mid} {hi}");
        }
    }

    #[test]
    fn cost_rises_with_each_fidelity() {
        let r = quiet_reactor();
        let x = r.nominal_optimum();
        let c = |z: [f64; 2]| r.evaluate(&x, &z, 0).unwrap().cost;
        for a in 20..60 {
            assert!(c([a as f64 + 1.0, 3.0]) > c([a as f64, 3.0]));
        }
        for b in 1..5 {
            assert!(c([40.0, b as f64 + 1.0]) > c([40.0, b as f64]));
        }
    }

    #[test]
    fn cost_depends_on_design() {
        let r = quiet_reactor();
        let mut slow = r.nominal_optimum();
        let mut fast = slow.clone();
        slow[5] = 10.0;
        fast[5] = 50.0;
        let cs = r.evaluate(&slow, &[60.0, 5.0], 0).unwrap().cost;
        let cf = r.evaluate(&fast, &[60.0, 5.0], 0).unwrap().cost;
        assert!(cs > cf);
    }

    #[test]
    fn curves_are_long_enough_and_wash_out() {
        let r = quiet_reactor();
        for n in [1.5, 2.0, 10.0, 60.0] {
            let curve = r.synthesize_curve(n, 10.0, 0).unwrap();
            let d = rtd::to_dimensionless(&curve).unwrap();
            let support = d.e_theta.iter().filter(|e| **e > WASHOUT_LEVEL).count();
            assert!(support >= 200, "N={n}: {support}");
            let tail = &curve.concentrations[curve.len() - WASHOUT_SAMPLES..];
            assert!(tail.iter().all(|c| *c < WASHOUT_LEVEL));
        }
    }

    #[test]
    fn deterministic_given_seed_and_noisy_across_seeds() {
        let r = MockReactor::new(MockReactorSpec::default()).unwrap();
        let x = r.nominal_optimum();
        let a = r.evaluate(&x, &[33.3, 2.2], 5).unwrap();
        let b = r.evaluate(&x, &[33.3, 2.2], 5).unwrap();
        let c = r.evaluate(&x, &[33.3, 2.2], 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn cost_is_bounded_and_log_lipschitz() {
        let r = quiet_reactor();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for x in sample_designs(10) {
            let mut prev: Option<f64> = None;
            for a in 20..=60 {
                let c = r.evaluate(&x, &[a as f64, 3.0], 0).unwrap().cost;
                lo = lo.min(c);
                hi = hi.max(c);
                if let Some(p) = prev {
                    assert!((c.ln() - p.ln()).abs() < 0.06);
                }
                prev = Some(c);
            }
        }
        assert!(lo > 0.0 && hi < 1e5);
    }

    #[test]
    fn rejects_out_of_bounds() {
        let r = quiet_reactor();
        let mut x = r.nominal_optimum();
        assert!(r.evaluate(&x, &[70.0, 5.0], 0).is_err());
        x[0] = 20.0;
        assert!(matches!(r.evaluate(&x, &[60.0, 5.0], 0), Err(Error::Domain(_))));
    }
}
