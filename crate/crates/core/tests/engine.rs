use mfbo_core::backends::{
    ConstantCost, EvalOutput, Evaluator, EvaluatorSpec, FnEvaluator, SyntheticBenchmark, SyntheticSpec,
};
use mfbo_core::engine::{self, Campaign, CampaignResult, EngineState, Provenance, Settings, StepOutcome, Termination};
use mfbo_core::{Error, Result};
use proptest::prelude::*;

fn synthetic_settings(budget: f64, seed: u64) -> Settings {
    let spec = SyntheticSpec::default();
    let mut s = Settings::new(spec.design_bounds(), spec.fidelity_bounds(), budget);
    s.doe_count = 6;
    s.seed = seed;
    s.gp_restarts = 2;
    s.acquisition.restarts = 4;
    s.acquisition.local_steps = 15;
    s
}

fn check_invariants(s: &Settings, r: &CampaignResult) {
    let recs = &r.trace.records;
    assert_eq!(recs.iter().filter(|r| r.provenance == Provenance::Doe).count(), s.doe_count);
    assert!(recs[..s.doe_count].iter().all(|r| r.provenance == Provenance::Doe));
    for (i, rec) in recs.iter().enumerate() {
        assert_eq!(rec.index, i);
        assert_eq!(rec.x.len(), s.design_bounds.dim());
        assert_eq!(rec.z.len(), s.fidelity_bounds.dim());
        assert!(s.design_bounds.contains(&rec.x) && s.fidelity_bounds.contains(&rec.z));
        assert_eq!(rec.failed, rec.objective.is_none());
        if !rec.failed {
            assert!(rec.cost > 0.0);
        }
        if i > 0 {
            assert!(rec.cumulative_cost >= recs[i - 1].cumulative_cost);
            assert!(rec.remaining_budget <= recs[i - 1].remaining_budget);
        }
    }
    let loop_cost: f64 = recs.iter().filter(|r| r.provenance != Provenance::Doe).map(|r| r.cost).sum();
    assert!((loop_cost - r.budget.spent).abs() <= 1e-9 * (1.0 + loop_cost));
    assert!((recs.last().unwrap().remaining_budget - (r.budget.total - r.budget.spent)).abs() < 1e-9);
    let greedy: Vec<_> = recs.iter().filter(|r| r.provenance == Provenance::Greedy).collect();
    assert!(greedy.iter().all(|g| g.z == s.z_star()));
    match r.termination {
        Termination::BudgetStoppingRule => {
            let last = recs.last().unwrap();
            assert_eq!(last.provenance, Provenance::Greedy);
            assert!(!last.failed);
            assert_eq!(r.z_star, s.z_star());
            assert_eq!(r.x_star, last.x);
            assert_eq!(Some(r.y_star), last.objective);
            assert!(greedy[..greedy.len() - 1].iter().all(|g| g.failed));
        }
        Termination::EvaluatorFailureLimit => {
            assert!(recs[recs.len() - s.max_consecutive_failures..].iter().all(|r| r.failed));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn campaigns_keep_their_invariants_under_faults(seed in 0u64..1000, budget in 2.0f64..8.0) {
        let spec = EvaluatorSpec::SyntheticBenchmark(SyntheticSpec { failure_rate: 0.2, ..SyntheticSpec::default() });
        let evaluator = spec.build().unwrap();
        let s = synthetic_settings(budget, seed);
        match engine::run(s.clone(), evaluator.as_ref()) {
            Ok(r) => check_invariants(&s, &r),
            Err(Error::Evaluation { message, .. }) => prop_assert!(message.contains("design-of-experiments")),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn stopping_rule_always_ends_at_top_fidelity(seed in 0u64..1000, budget in 0.1f64..8.0) {
        let evaluator = SyntheticBenchmark::new(SyntheticSpec::default()).unwrap();
        let s = synthetic_settings(budget, seed);
        let r = engine::run(s.clone(), &evaluator).unwrap();
        prop_assert_eq!(r.termination, Termination::BudgetStoppingRule);
        prop_assert_eq!(&r.z_star, &s.z_star());
        check_invariants(&s, &r);
    }
}

#[test]
fn zero_iteration_budget_evaluates_only_the_greedy_point() {
    let evaluator = SyntheticBenchmark::new(SyntheticSpec::default()).unwrap();
    let s = synthetic_settings(1e-9, 3);
    let r = engine::run(s.clone(), &evaluator).unwrap();
    assert_eq!(r.trace.len(), s.doe_count + 1);
    assert_eq!(r.trace.last().unwrap().provenance, Provenance::Greedy);
    assert_eq!(r.iterations, 1);
}

#[test]
fn deterministic_cost_never_overshoots() {
    let evaluator = ConstantCost {
        inner: SyntheticBenchmark::new(SyntheticSpec::default()).unwrap(),
        cost: 0.7,
    };
    for (seed, budget) in [(1, 2.0), (2, 3.1), (3, 4.9)] {
        let r = engine::run(synthetic_settings(budget, seed), &evaluator).unwrap();
        assert!(r.budget.spent <= budget + 1e-12, "{} > {budget}", r.budget.spent);
    }
}

#[test]
fn doe_thread_count_does_not_change_the_trace() {
    let evaluator = SyntheticBenchmark::new(SyntheticSpec::default()).unwrap();
    let mut a = synthetic_settings(2.0, 11);
    a.doe_threads = 1;
    let mut b = a.clone();
    b.doe_threads = 8;
    assert_eq!(engine::run(a, &evaluator).unwrap().trace, engine::run(b, &evaluator).unwrap().trace);
}

#[test]
fn doe_failures_below_two_successes_abort() {
    let e = FnEvaluator(|_: &[f64], _: &[f64], _: u64| -> Result<EvalOutput> { Err(Error::evaluation("down", Some(1.0))) });
    let err = engine::run(synthetic_settings(5.0, 0), &e).unwrap_err();
    assert!(err.to_string().contains("design-of-experiments"));
}

#[test]
fn failed_evaluations_are_excluded_from_the_objective_fit() {
    // every loop evaluation at low fidelity fails; the campaign must still finish
    let e = FnEvaluator(|x: &[f64], z: &[f64], seed: u64| -> Result<EvalOutput> {
        let b = SyntheticBenchmark::new(SyntheticSpec::default())?;
        let out = b.evaluate(x, z, seed)?;
        if z[0] < 0.5 && seed % 2 == 0 {
            Err(Error::evaluation("low-fidelity mesh failed", Some(out.cost)))
        } else {
            Ok(out)
        }
    });
    let mut s = synthetic_settings(4.0, 5);
    s.max_consecutive_failures = 50;
    let r = engine::run(s.clone(), &e).unwrap();
    check_invariants(&s, &r);
}

#[test]
fn step_by_step_matches_run() {
    let evaluator = SyntheticBenchmark::new(SyntheticSpec::default()).unwrap();
    let s = synthetic_settings(3.0, 21);
    let full = engine::run(s.clone(), &evaluator).unwrap();
    let mut c = Campaign::new(s, &evaluator).unwrap();
    c.run_doe(&mut |_, _| Ok(())).unwrap();
    let result = loop {
        let state: EngineState = serde_json::from_str(&serde_json::to_string(c.state()).unwrap()).unwrap();
        c = Campaign::from_state(state, &evaluator).unwrap();
        if let StepOutcome::Finished(r) = c.step(&mut |_, _| Ok(())).unwrap() {
            break r;
        }
    };
    assert_eq!(result, full);
}
