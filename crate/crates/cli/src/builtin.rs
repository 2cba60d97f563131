//! `fixtures`: reruns the published circuit and pair examples against their
//! closed-form answers and fails on any tolerance breach.

use crate::report::{Details, FixtureResult, Report, StorageFormula, Verdict};
use passivity::extract::{epsilon_feedback, exact_feedback, simulate_extraction};
use passivity::fixtures::{circuit1, circuit2};
use passivity::numkernel::{Mat, Vector};
use passivity::polymat::{
    is_bounded_real_pair, is_positive_real_pair, Condition, PolyPair, Verdict as PairOutcome,
};
use passivity::reduction::run_chain_passive;
use passivity::storage::{available_energy, SupplyRate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    results: Vec<FixtureResult>,
}

impl Gate {
    fn record(&mut self, name: &str, error: f64, tolerance: f64) {
        self.results.push(FixtureResult {
            name: name.to_string(),
            pass: error <= tolerance,
            error,
            tolerance,
            note: None,
        });
    }

    fn flag(&mut self, name: &str, ok: bool, note: impl Into<String>) {
        self.results.push(FixtureResult {
            name: name.to_string(),
            pass: ok,
            error: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            note: Some(note.into()),
        });
    }

    fn failed(&mut self, name: &str, e: impl std::fmt::Display) {
        self.flag(name, false, e.to_string());
    }
}

fn random_states(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vector> {
    (0..count)
        .map(|_| Vector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
        .collect()
}

fn circuit1_cases(g: &mut Gate, rng: &mut ChaCha8Rng) {
    let sys = circuit1();
    let t = Vector::from_column_slice(&[1.0, 1.0, -1.0, -1.0]);
    let (st, rep) = match available_energy(&sys, SupplyRate::Passive) {
        Ok(v) => v,
        Err(e) => return g.failed("circuit1 available energy", e),
    };
    g.record(
        "circuit1 X₋ = ¼·ttᵀ, t = (1,1,−1,−1)",
        (&st.x - &t * t.transpose() * 0.25).norm(),
        1e-9,
    );
    let formula = StorageFormula::from_x(&st.x, SupplyRate::Passive);
    let coeff = formula
        .terms
        .first()
        .map_or(f64::INFINITY, |t| t.coefficient);
    g.record(
        "circuit1 S_a coefficient 1/8",
        (coeff - 0.125).abs() + (formula.terms.len() as f64 - 1.0).abs(),
        1e-9,
    );
    let worst = random_states(rng, 5, 4)
        .iter()
        .map(|x0| (st.value(x0) - 0.125 * t.dot(x0).powi(2)).abs())
        .fold(0.0, f64::max);
    g.record(
        "circuit1 S_a(x₀) = ⅛(i₁+i₂−v₃−v₄)² on 5 states",
        worst,
        1e-8,
    );
    g.flag(
        "circuit1 not bounded above",
        !rep.bounded_above,
        "uncontrollable modes at ±j",
    );

    let law = match exact_feedback(&sys, &st.x, SupplyRate::Passive) {
        Ok(l) => l,
        Err(e) => return g.failed("circuit1 exact feedback", e),
    };
    g.record(
        "circuit1 K = ½(1,1,−1,−1)",
        (&law.k - t.transpose() * 0.5).norm(),
        1e-9,
    );
    let x0 = random_states(rng, 1, 4).remove(0);
    let run = match simulate_extraction(&sys, &law, &x0, 30.0, 1e-3) {
        Ok(r) => r,
        Err(e) => return g.failed("circuit1 extraction", e),
    };
    let c0 = t.dot(&x0);
    let worst = run
        .times
        .iter()
        .zip(&run.outputs)
        .map(|(tt, y)| (y[0] + 0.5 * (-tt).exp() * c0).abs())
        .fold(0.0, f64::max);
    g.record("circuit1 v(t) = −½e^{−t}(i₁+i₂−v₃−v₄)(0)", worst, 1e-5);
    g.record(
        "circuit1 extracted energy = S_a(x₀)",
        (run.extracted_energy - st.value(&x0)).abs(),
        1e-5,
    );
}

fn circuit2_cases(g: &mut Gate, rng: &mut ChaCha8Rng) {
    let sys = circuit2();
    match run_chain_passive(&sys) {
        Ok((st, f, _)) => {
            let expect = Mat::from_diagonal(&Vector::from_column_slice(&[0.5, 0.5, 0.0, 0.0]));
            g.record("circuit2 X₋ = diag(½,½,0,0)", (&st.x - expect).norm(), 1e-7);
            g.flag(
                "circuit2 L = 0, W = 0 (empty factor)",
                f.l.norm() + f.w.norm() == 0.0,
                format!("factor rows {}", f.rows()),
            );
        }
        Err(e) => g.failed("circuit2 reduction chain", e),
    }
    for eps in [0.1, 0.01] {
        match epsilon_feedback(&sys, eps, SupplyRate::Passive) {
            Ok((law, x)) => {
                let v = (1.0 - eps).powi(2) / (2.0 * (1.0 + eps * eps));
                let expect = Mat::from_diagonal(&Vector::from_column_slice(&[v, v, 0.0, 0.0]));
                g.record(
                    &format!("circuit2 X₋^ε = (1−ε)²/(2(1+ε²))·I, ε = {eps}"),
                    (&x - expect).norm(),
                    1e-9,
                );
                g.record(
                    &format!("circuit2 ε-law u = −y, ε = {eps}"),
                    (&law.k + &sys.c).norm(),
                    1e-9,
                );
            }
            Err(e) => g.failed(&format!("circuit2 ε-feedback, ε = {eps}"), e),
        }
    }
    let (law, _) = match epsilon_feedback(&sys, 0.01, SupplyRate::Passive) {
        Ok(v) => v,
        Err(e) => return g.failed("circuit2 ε-feedback", e),
    };
    let x0 = random_states(rng, 1, 4).remove(0);
    let run = match simulate_extraction(&sys, &law, &x0, 40.0, 1e-3) {
        Ok(r) => r,
        Err(e) => return g.failed("circuit2 extraction", e),
    };
    let target = 0.25 * (x0[0] * x0[0] + x0[1] * x0[1]);
    g.record(
        "circuit2 extracted energy = ¼((i₁+i₂)² + (v₃+v₄)²)(0)",
        (run.extracted_energy - target).abs(),
        1e-3,
    );
    let worst = run
        .times
        .iter()
        .zip(&run.inputs)
        .map(|(t, u)| {
            let e = (-t).exp();
            (u[0] - (t * e * x0[0] + (t * e - e) * x0[1])).abs()
        })
        .fold(0.0, f64::max);
    g.record(
        "circuit2 i(t) = te^{−t}(i₁+i₂)(0) + (te^{−t}−e^{−t})(v₃+v₄)(0)",
        worst,
        1e-4,
    );
}

fn pair_cases(g: &mut Gate) {
    let p = PolyPair::scalar(&[1, 1], &[1, 1]);
    g.flag(
        "(ξ+1, ξ+1) is positive-real",
        is_positive_real_pair(&p).verdict == PairOutcome::Pass,
        "H = 1",
    );
    let br = is_bounded_real_pair(&p);
    g.flag(
        "(ξ+1, ξ+1) is not bounded-real, condition (c)",
        br.verdict == PairOutcome::Fail
            && br.failed_condition == Condition::C
            && br.witness.is_some(),
        format!("{:?} at {:?}", br.verdict, br.failed_condition),
    );
    let q = PolyPair::scalar(&[1], &[2, 1]);
    g.flag(
        "(1, ξ+2) is bounded-real",
        is_bounded_real_pair(&q).verdict == PairOutcome::Pass,
        "‖1/(s+2)‖∞ = ½",
    );
}

pub fn fixtures(seed: u64) -> Report {
    let mut g = Gate {
        results: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    circuit1_cases(&mut g, &mut rng);
    circuit2_cases(&mut g, &mut rng);
    pair_cases(&mut g);
    let mut r = Report::new("fixtures", None, None);
    let failed = g.results.iter().filter(|f| !f.pass).count();
    r.verdict = if failed == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    r.message = Some(format!(
        "{} of {} checks passed",
        g.results.len() - failed,
        g.results.len()
    ));
    r.details = Some(Details::Fixtures(g.results));
    r
}
