mod common;

use common::{gain_suite, passive_suite, random_state, rng};
use passivity::extract::{
    default_horizon, epsilon_feedback, epsilon_sweep, exact_feedback, extrapolated_storage,
    simulate_extraction, simulate_input, FeedbackLaw, LawKind,
};
use passivity::fixtures;
use passivity::numkernel::{min_eigenvalue, symmetrize, Mat, Vector};
use passivity::polymat::{behavior_from_realization, feedthrough, select_signature, PolyPair};
use passivity::reduction::{
    factor_residual, run_chain, run_chain_gain, run_chain_passive, sigma_transform, ReductionStep,
    StepKind,
};
use passivity::statespace::{is_observable, StateSpaceSystem};
use passivity::storage::{available_energy, lmi_matrix, SupplyRate};
use rand::Rng;

const SEED: u64 = 20_240_917;

fn measure(pair: &PolyPair) -> (usize, usize) {
    (pair.inputs(), pair.q.det().degree().unwrap_or(0))
}

/// Every step moves the measure `(n, deg det Q)` down or establishes its
/// target form (symmetrize: symmetric feedthrough). Every pass of the
/// symmetrize → compress → degree-reduce loop except the last strictly
/// decreases it, and the passes number at most `deg det Q₁ + 2n₁`.
fn check_progress(steps: &[ReductionStep]) -> Result<(), String> {
    let Some(first) = steps.first() else {
        return Ok(());
    };
    for (i, s) in steps.iter().enumerate() {
        let (before, after) = (measure(&s.pair_before), measure(&s.pair_after));
        let ok = match s.kind {
            StepKind::Symmetrize => {
                after == before && feedthrough(&s.pair_after).unwrap().is_symmetric()
            }
            StepKind::Compress => after <= before,
            StepKind::DegreeReduce => after.1 < before.1,
        };
        if !ok {
            return Err(format!("step {i} ({:?}): {before:?} → {after:?}", s.kind));
        }
    }
    // A pass ends with its degree-reduce step (or with the chain).
    let mut passes: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for (i, s) in steps.iter().enumerate() {
        if s.kind == StepKind::DegreeReduce || i + 1 == steps.len() {
            passes.push((start, i));
            start = i + 1;
        }
    }
    for &(a, b) in &passes[..passes.len() - 1] {
        let (before, after) = (
            measure(&steps[a].pair_before),
            measure(&steps[b].pair_after),
        );
        if after >= before {
            return Err(format!(
                "pass at steps {a}..={b} does not decrease {before:?} → {after:?}"
            ));
        }
    }
    let (n1, deg1) = measure(&first.pair_before);
    if passes.len() > deg1 + 2 * n1 {
        return Err(format!(
            "{} passes exceed deg det Q₁ + 2n₁ = {}",
            passes.len(),
            deg1 + 2 * n1
        ));
    }
    Ok(())
}

fn generated() -> Vec<(StateSpaceSystem, SupplyRate)> {
    passive_suite(SEED, 50)
        .into_iter()
        .map(|g| (g.sys, SupplyRate::Passive))
        .chain(
            gain_suite(SEED + 1, 20)
                .into_iter()
                .map(|g| (g.sys, SupplyRate::Gain)),
        )
        .collect()
}

#[test]
fn chain_progress_and_termination() {
    for (i, (sys, supply)) in generated().iter().enumerate() {
        let (_, _, trace) = run_chain(sys, *supply).unwrap_or_else(|e| panic!("#{i}: {e}"));
        check_progress(&trace.steps).unwrap_or_else(|e| panic!("#{i}: {e}"));
    }
}

#[test]
fn chain_factors_reconstruct_the_lmi() {
    for (i, (sys, supply)) in generated().iter().enumerate() {
        let (st, f, _) = run_chain(sys, *supply).unwrap();
        let res = factor_residual(sys, &st.x, &f, *supply).unwrap();
        assert!(res <= 1e-7, "#{i}: residual {res:.3e}");
        let lmi = min_eigenvalue(&symmetrize(&lmi_matrix(sys, &st.x, *supply).unwrap()));
        assert!(lmi >= -1e-7, "#{i}: LMI {lmi:.3e}");
    }
}

fn singular_fixtures() -> Vec<StateSpaceSystem> {
    vec![
        fixtures::scalar(-1.0, 1.0, 1.0, 0.0),
        fixtures::circuit2(),
        fixtures::circuit2_observable(),
    ]
}

fn singular_generated() -> Vec<StateSpaceSystem> {
    passive_suite(SEED, 50)
        .into_iter()
        .filter(|g| !g.regular)
        .map(|g| g.sys)
        .collect()
}

#[test]
fn chain_agrees_with_epsilon_extrapolation_on_singular_fixtures() {
    for sys in singular_fixtures() {
        let (chain, _, _) = run_chain_passive(&sys).unwrap();
        let ex = extrapolated_storage(&sys, SupplyRate::Passive).unwrap();
        let err = (&chain.x - &ex.x).norm();
        assert!(err <= 2e-4, "{}: {err:.3e}", sys.label);
    }
}

/// The ε-law extracts at least `½xᵀX₋^εx`, which cannot exceed the available
/// energy, so every point of the sweep lies below the chain's `X₋`.
#[test]
fn epsilon_storages_stay_below_chain_storage() {
    for (i, sys) in singular_generated().iter().enumerate() {
        let (chain, _, _) = run_chain_passive(sys).unwrap();
        for (eps, x) in epsilon_sweep(sys, SupplyRate::Passive).unwrap() {
            let gap = min_eigenvalue(&symmetrize(&(&chain.x - &x)));
            assert!(
                gap >= -1e-7 * (1.0 + chain.x.norm()),
                "#{i} ε={eps:e}: {gap:.3e}"
            );
        }
    }
}

#[test]
fn gain_chain_matches_passive_chain_of_sigma_transform() {
    for (i, g) in gain_suite(SEED + 1, 20).iter().enumerate() {
        let sys = &g.sys;
        if sys.inputs() != sys.outputs() || !is_observable(sys) {
            continue;
        }
        let (pair, _) = behavior_from_realization(sys).unwrap();
        let sigma = select_signature(&pair).unwrap();
        let hat = sigma_transform(sys, &sigma).unwrap();
        let gain = run_chain_gain(sys).unwrap().0.x;
        let passive = run_chain_passive(&hat).unwrap().0.x;
        assert!(
            (&gain - &passive).norm() <= 1e-7,
            "#{i}: {:.3e}",
            (&gain - &passive).norm()
        );
    }
}

#[test]
fn epsilon_laws_approach_the_supremum() {
    let mut r = rng(SEED + 20);
    for sys in singular_fixtures()
        .into_iter()
        .chain(singular_generated().into_iter().take(6))
    {
        let x_minus = available_energy(&sys, SupplyRate::Passive).unwrap().0.x;
        let x0 = random_state(&mut r, sys.states());
        let target = 0.5 * x0.dot(&(&x_minus * &x0));
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.1, 0.05, 0.025] {
            let (law, x_eps) = epsilon_feedback(&sys, eps, SupplyRate::Passive).unwrap();
            let horizon = default_horizon(&sys, &law).unwrap();
            let got = simulate_extraction(&sys, &law, &x0, horizon, 1e-3)
                .unwrap()
                .extracted_energy;
            let slack = 0.5 * x0.dot(&((&x_minus - &x_eps) * &x0));
            assert!(
                got >= prev - 1e-9,
                "{} ε={eps}: {got} after {prev}",
                sys.label
            );
            assert!(
                got <= target + 1e-6,
                "{} ε={eps}: {got} exceeds {target}",
                sys.label
            );
            assert!(
                target - got <= slack + 1e-4,
                "{} ε={eps}: gap {} vs {slack}",
                sys.label,
                target - got
            );
            prev = got;
        }
    }
}

#[test]
fn no_run_extracts_more_than_the_available_energy() {
    let mut r = rng(SEED + 21);
    for g in passive_suite(SEED + 22, 20) {
        let (d, n) = (g.sys.states(), g.sys.inputs());
        let target_x = available_energy(&g.sys, SupplyRate::Passive).unwrap().0.x;
        let x0 = random_state(&mut r, d);
        let target = 0.5 * x0.dot(&(&target_x * &x0));
        let mut runs = Vec::new();
        // Any finite horizon is a valid run; short ones keep the test fast.
        if let Ok(law) = exact_feedback(&g.sys, &target_x, SupplyRate::Passive) {
            runs.push(simulate_extraction(&g.sys, &law, &x0, 10.0, 1e-3).unwrap());
        }
        let k = Mat::from_fn(n, d, |_, _| r.random_range(-2.0..2.0));
        let law = FeedbackLaw {
            k,
            kind: LawKind::Exact,
            supply: SupplyRate::Passive,
            closed_loop_spectrum: vec![],
        };
        runs.push(simulate_extraction(&g.sys, &law, &x0, 2.0, 1e-3).unwrap());
        let freq: f64 = r.random_range(0.5..3.0);
        runs.push(
            simulate_input(
                &g.sys,
                SupplyRate::Passive,
                |t| Vector::from_element(n, -(freq * t).cos()),
                &x0,
                3.0,
                1e-3,
            )
            .unwrap(),
        );
        for run in runs {
            assert!(
                run.extracted_energy <= target + 1e-6,
                "{} > {target}",
                run.extracted_energy
            );
        }
    }
}
