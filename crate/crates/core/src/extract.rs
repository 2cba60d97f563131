//! Energy-extraction feedback, its ε-regularized version for the singular
//! case, closed-loop simulation and extracted-energy accounting.

use crate::numkernel::{
    self as nk, cumulative_simpson, eigenvalues, integrate_ode, norm2, symmetrize, KernelError,
    Mat, Vector,
};
use crate::statespace::{observer_staircase, transfer_eval, StateSpaceSystem, SystemError};
use crate::storage::{
    self, feedback_gain, lmi_matrix, solve_min_are, QuadraticStorage, StorageError, SupplyRate,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("ε = {0} is outside (0, 1)")]
    EpsilonRange(f64),
    #[error("closed loop is not strictly stable on the observable part (eigenvalue {0}); use epsilon_feedback")]
    MarginalClosedLoop(Complex64),
    #[error("Riccati solve failed at ε = {eps}: {source}; try a smaller ε")]
    EpsilonSolve { eps: f64, source: StorageError },
    #[error("invalid simulation request: {0}")]
    Simulation(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, ExtractError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "epsilon", rename_all = "lowercase")]
pub enum LawKind {
    Exact,
    Epsilon(f64),
}

/// State feedback `u = Kx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLaw {
    pub k: Mat,
    pub kind: LawKind,
    pub supply: SupplyRate,
    pub closed_loop_spectrum: Vec<Complex64>,
}

impl FeedbackLaw {
    pub fn closed_loop(&self, sys: &StateSpaceSystem) -> Mat {
        &sys.a + &sys.b * &self.k
    }
}

/// Modes of `A + BK` visible in `(u, y)`. Modes hidden from both do not
/// contribute to the extracted energy, so only these must be stable.
fn visible_spectrum(sys: &StateSpaceSystem, k: &Mat) -> Result<Vec<Complex64>> {
    let acl = &sys.a + &sys.b * k;
    let out = nk::vstack(&[k, &(&sys.c + &sys.d * k)]);
    let cl = StateSpaceSystem::new(
        acl,
        Mat::zeros(sys.states(), 0),
        out,
        Mat::zeros(k.nrows() + sys.outputs(), 0),
    )?;
    let obs = observer_staircase(&cl);
    Ok(eigenvalues(&obs.retained_system().a)?)
}

/// `u = −(D+Dᵀ)⁻¹(C − BᵀX)x` (passive) or `u = (I−DᵀD)⁻¹(DᵀC + BᵀX)x` (gain).
pub fn exact_feedback(sys: &StateSpaceSystem, x: &Mat, supply: SupplyRate) -> Result<FeedbackLaw> {
    sys.validate()?;
    let k = -feedback_gain(sys, x, supply)?;
    let tol = 1e-9 * (1.0 + norm2(&sys.a) + norm2(&k));
    if let Some(z) = visible_spectrum(sys, &k)?
        .into_iter()
        .find(|z| z.re >= -tol)
    {
        return Err(ExtractError::MarginalClosedLoop(z));
    }
    let closed_loop_spectrum = eigenvalues(&(&sys.a + &sys.b * &k))?;
    Ok(FeedbackLaw {
        k,
        kind: LawKind::Exact,
        supply,
        closed_loop_spectrum,
    })
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(ExtractError::EpsilonRange(eps))
    }
}

/// Passive: the system with transfer function `(H + εI)(I + εH)⁻¹`, scaled so
/// that `∫u_εᵀy_ε` relates to `∫uᵀy` by a positive quadratic. Gain: output
/// scaled by `1 − ε`.
pub fn epsilon_transform(
    sys: &StateSpaceSystem,
    eps: f64,
    supply: SupplyRate,
) -> Result<StateSpaceSystem> {
    check_epsilon(eps)?;
    sys.validate()?;
    let out = match supply {
        SupplyRate::Gain => StateSpaceSystem::new(
            sys.a.clone(),
            sys.b.clone(),
            &sys.c * (1.0 - eps),
            &sys.d * (1.0 - eps),
        )?,
        SupplyRate::Passive => {
            let n = sys.inputs();
            let i = Mat::identity(n, n);
            let m = nk::inverse(&(&i + &sys.d * eps))?;
            let root = (1.0 + eps * eps).sqrt();
            StateSpaceSystem::new(
                &sys.a - &sys.b * &m * &sys.c * eps,
                &sys.b * &m * root,
                &m * &sys.c * ((1.0 - eps * eps) / root),
                (&sys.d + &i * eps) * &m,
            )?
        }
    };
    if supply == SupplyRate::Passive && sys.states() > 0 {
        let n = sys.inputs();
        for (re, im) in [(0.3, 0.9), (1.7, -0.2), (0.05, 3.1)] {
            let s = Complex64::new(re, im);
            let (Ok(h), Ok(he)) = (transfer_eval(sys, s), transfer_eval(&out, s)) else {
                continue;
            };
            let eye = nk::CMat::identity(n, n);
            let e = Complex64::new(eps, 0.0);
            // (H + εI) = H_ε(I + εH)
            let lhs = &h + &eye * e;
            let rhs = &he * (&eye + &h * e);
            if (&lhs - &rhs).norm() > 1e-8 * (1.0 + lhs.norm()) {
                return Err(ExtractError::Simulation(
                    "ε-transform does not reproduce (H+εI)(I+εH)⁻¹".into(),
                ));
            }
        }
    }
    Ok(out)
}

/// Stabilizing law for the ε-system, mapped back to the original inputs, and
/// `X₋^ε` embedded in the original state space.
pub fn epsilon_feedback(
    sys: &StateSpaceSystem,
    eps: f64,
    supply: SupplyRate,
) -> Result<(FeedbackLaw, Mat)> {
    check_epsilon(eps)?;
    sys.validate()?;
    let obs = observer_staircase(sys);
    let so = obs.retained_system();
    let se = epsilon_transform(&so, eps, supply)?;
    let sol =
        solve_min_are(&se, supply).map_err(|source| ExtractError::EpsilonSolve { eps, source })?;
    let k_eps = -feedback_gain(&se, &sol.x, supply)?;
    let k_hat = match supply {
        SupplyRate::Gain => k_eps,
        SupplyRate::Passive => {
            let n = so.inputs();
            let m = nk::inverse(&(Mat::identity(n, n) + &so.d * eps))?;
            m * (k_eps * (1.0 + eps * eps).sqrt() - &so.c * eps)
        }
    };
    let t1 = obs.t1();
    let k = k_hat * &t1;
    let x = symmetrize(&(t1.transpose() * &sol.x * &t1));
    let closed_loop_spectrum = eigenvalues(&(&sys.a + &sys.b * &k))?;
    Ok((
        FeedbackLaw {
            k,
            kind: LawKind::Epsilon(eps),
            supply,
            closed_loop_spectrum,
        },
        x,
    ))
}

/// `X₋^ε` for `ε = 0.2·2⁻ᵏ`, stopping once consecutive iterates agree to 1e-6
/// or after `k = 12`. The sweep also ends early if a small `ε` puts the
/// Hamiltonian's eigenvalues inside its imaginary-axis tolerance (which grows
/// with `‖H‖ ~ 1/ε`) after at least [`MIN_SWEEP`] points.
pub fn epsilon_sweep(sys: &StateSpaceSystem, supply: SupplyRate) -> Result<Vec<(f64, Mat)>> {
    let mut out: Vec<(f64, Mat)> = Vec::new();
    for k in 0..=12 {
        let eps = 0.2 * 0.5f64.powi(k);
        let x = match epsilon_feedback(sys, eps, supply) {
            Ok((_, x)) => x,
            Err(ExtractError::EpsilonSolve {
                source: StorageError::BoundaryAmbiguous(_),
                ..
            }) if out.len() >= MIN_SWEEP => {
                break;
            }
            Err(e) => return Err(e),
        };
        let done = out
            .last()
            .is_some_and(|(_, prev)| (prev - &x).norm() < 1e-6);
        out.push((eps, x));
        if done {
            break;
        }
    }
    Ok(out)
}

const MIN_SWEEP: usize = 6;

/// `X₋` as the limit ε → 0 of `X₋^ε`, by Neville extrapolation in `√ε` over
/// the last few sweep points. `X₋^ε` is analytic in `√ε` but generally not in
/// `ε` (a boundary eigenvalue splits like `√ε`).
pub fn extrapolated_storage(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
) -> Result<QuadraticStorage> {
    let sweep = epsilon_sweep(sys, supply)?;
    let tail = &sweep[sweep.len().saturating_sub(6)..];
    let ts: Vec<f64> = tail.iter().map(|(e, _)| e.sqrt()).collect();
    let mut table: Vec<Mat> = tail.iter().map(|(_, x)| x.clone()).collect();
    for level in 1..table.len() {
        for i in (level..table.len()).rev() {
            let (ti, tj) = (ts[i], ts[i - level]);
            // Value at t = 0 of the interpolant through nodes i-level..=i.
            table[i] = (&table[i] * tj - &table[i - 1] * ti) / (tj - ti);
        }
    }
    let x = symmetrize(table.last().expect("sweep is nonempty"));
    Ok(QuadraticStorage { x, supply })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRun {
    pub supply: SupplyRate,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Running extracted energy at each sample.
    pub cumulative: Vec<f64>,
    /// `−∫uᵀy` (passive) or `∫(yᵀy − uᵀu)` (gain).
    pub extracted_energy: f64,
    /// Available storage at `x0`, when it could be computed.
    pub target: Option<f64>,
}

impl ExtractionRun {
    /// Whitespace-separated columns `t x… u… y… energy`, one row per sample.
    pub fn to_table(&self) -> String {
        let d = self.x0.len();
        let n = self.inputs.first().map_or(0, Vec::len);
        let m = self.outputs.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for (p, k) in [("x", d), ("u", n), ("y", m)] {
            for i in 1..=k {
                let _ = write!(s, " {p}{i}");
            }
        }
        s.push_str(" energy\n");
        for i in 0..self.times.len() {
            let _ = write!(s, "{:.6e}", self.times[i]);
            for v in self.states[i]
                .iter()
                .chain(&self.inputs[i])
                .chain(&self.outputs[i])
            {
                let _ = write!(s, " {v:.9e}");
            }
            let _ = writeln!(s, " {:.9e}", self.cumulative[i]);
        }
        s
    }

    fn h(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

fn extracted_rate(supply: SupplyRate, u: &Vector, y: &Vector) -> f64 {
    -supply.rate(u, y)
}

/// Slowest visible closed-loop decay, as a simulation horizon: `40/|Re λ|`
/// capped at 10⁴.
pub fn default_horizon(sys: &StateSpaceSystem, law: &FeedbackLaw) -> Result<f64> {
    let slowest = visible_spectrum(sys, &law.k)?
        .iter()
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(if slowest.is_finite() && slowest > 0.0 {
        (40.0 / slowest).min(1e4)
    } else {
        1e4
    })
}

fn run_from(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
    x0: &Vector,
    horizon: f64,
    step: f64,
    traj: nk::Trajectory,
    input: impl Fn(f64, &Vector) -> Vector,
) -> ExtractionRun {
    let mut inputs = Vec::with_capacity(traj.times.len());
    let mut outputs = Vec::with_capacity(traj.times.len());
    let mut rate = Vec::with_capacity(traj.times.len());
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let u = input(*t, x);
        let y = &sys.c * x + &sys.d * &u;
        rate.push(extracted_rate(supply, &u, &y));
        inputs.push(u.as_slice().to_vec());
        outputs.push(y.as_slice().to_vec());
    }
    let h = if traj.times.len() > 1 {
        traj.times[1] - traj.times[0]
    } else {
        0.0
    };
    let cumulative = cumulative_simpson(&rate, h);
    ExtractionRun {
        supply,
        x0: x0.as_slice().to_vec(),
        horizon,
        step,
        times: traj.times,
        states: traj.states.iter().map(|x| x.as_slice().to_vec()).collect(),
        inputs,
        outputs,
        extracted_energy: nk::simpson(&rate, h),
        cumulative,
        target: None,
    }
}

fn target_value(sys: &StateSpaceSystem, supply: SupplyRate, x0: &Vector) -> Option<f64> {
    storage::available_energy(sys, supply)
        .ok()
        .map(|(st, _)| st.value(x0))
}

/// Integrates the closed loop under `law` and accumulates the extracted energy.
pub fn simulate_extraction(
    sys: &StateSpaceSystem,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    step: f64,
) -> Result<ExtractionRun> {
    sys.validate()?;
    if x0.len() != sys.states() || law.k.shape() != (sys.inputs(), sys.states()) {
        return Err(ExtractError::Simulation(
            "initial state or gain has the wrong size".into(),
        ));
    }
    let acl = law.closed_loop(sys);
    let traj = nk::integrate_linear_ode(&acl, x0, horizon, step)?;
    let mut run = run_from(sys, law.supply, x0, horizon, step, traj, |_, x| &law.k * x);
    run.target = target_value(sys, law.supply, x0);
    Ok(run)
}

/// Open-loop run under an arbitrary input signal `u(t)`.
pub fn simulate_input(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
    input: impl Fn(f64) -> Vector,
    x0: &Vector,
    horizon: f64,
    step: f64,
) -> Result<ExtractionRun> {
    sys.validate()?;
    if x0.len() != sys.states() {
        return Err(ExtractError::Simulation(
            "initial state has the wrong size".into(),
        ));
    }
    let traj = integrate_ode(|t, x| &sys.a * x + &sys.b * input(t), x0, horizon, step)?;
    let mut run = run_from(sys, supply, x0, horizon, step, traj, |t, _| input(t));
    run.target = target_value(sys, supply, x0);
    Ok(run)
}

/// `|(2∫uᵀy − [xᵀXx]) − ∫[x; u]ᵀΩ(X)[x; u]|` on the recorded samples
/// (`∫(uᵀu − yᵀy)` and `Λ(X)` for the gain supply).
pub fn energy_identity_check(sys: &StateSpaceSystem, x: &Mat, run: &ExtractionRun) -> Result<f64> {
    let lmi = lmi_matrix(sys, x, run.supply)?;
    let weight = match run.supply {
        SupplyRate::Passive => 2.0,
        SupplyRate::Gain => 1.0,
    };
    let mut supplied = Vec::with_capacity(run.times.len());
    let mut dissipated = Vec::with_capacity(run.times.len());
    for i in 0..run.times.len() {
        let xs = Vector::from_column_slice(&run.states[i]);
        let u = Vector::from_column_slice(&run.inputs[i]);
        let y = Vector::from_column_slice(&run.outputs[i]);
        supplied.push(weight * run.supply.rate(&u, &y));
        let z = Vector::from_iterator(xs.len() + u.len(), xs.iter().chain(u.iter()).copied());
        dissipated.push(z.dot(&(&lmi * &z)));
    }
    let h = run.h();
    let quad = |v: &[f64]| Vector::from_column_slice(v);
    let (first, last) = (
        quad(&run.states[0]),
        quad(run.states.last().expect("nonempty run")),
    );
    let boundary = last.dot(&(x * &last)) - first.dot(&(x * &first));
    let lhs = nk::simpson(&supplied, h) - boundary;
    Ok((lhs - nk::simpson(&dissipated, h)).abs())
}
