//! Subcommand implementations. Each returns a filled [`Report`]; the exit code
//! follows from its verdict.

use crate::file::SystemFile;
use crate::report::{
    rows, Details, ExtractionDetails, FeedbackDetails, Report, ReportWitness, StorageFormula,
    Verdict,
};
use passivity::extract::{self, ExtractError, FeedbackLaw};
use passivity::numkernel::{self as nk, min_eigenvalue, sqrt_psd, Mat, Vector};
use passivity::polymat::{
    behavior_from_exact, is_bounded_real_pair, is_positive_real_pair, PairVerdict, PolyPair,
};
use passivity::reduction::{run_chain, verify_spectral_factor_for, SpectralFactor, TraceRecord};
use passivity::statespace::StateSpaceSystem;
use passivity::storage::{
    self, finish_report, LmiReport, QuadraticStorage, StorageError, SupplyRate,
};

/// Global options shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub tol: Option<f64>,
    pub trace: bool,
    pub seed: u64,
}

/// ε used by `feedback`/`extract` when the exact law does not exist.
pub const DEFAULT_EPSILON: f64 = 0.01;

type Failure = (Verdict, String);

fn error(e: impl std::fmt::Display) -> Failure {
    (Verdict::Error, e.to_string())
}

fn base(command: &str, file: &SystemFile) -> Report {
    Report::new(command, Some(file.name.clone()), Some(file.supply()))
}

fn require_system(file: &SystemFile) -> Result<StateSpaceSystem, Failure> {
    file.float_system()
        .ok_or_else(|| error("this command needs a state-space description (A, B, C, D)"))
}

fn weight(sys: &StateSpaceSystem, supply: SupplyRate) -> Mat {
    match supply {
        SupplyRate::Passive => &sys.d + sys.d.transpose(),
        SupplyRate::Gain => Mat::identity(sys.inputs(), sys.inputs()) - sys.d.transpose() * &sys.d,
    }
}

fn is_regular(sys: &StateSpaceSystem, supply: SupplyRate) -> bool {
    let r = weight(sys, supply);
    r.is_empty() || min_eigenvalue(&r) > 1e-10
}

struct StorageOutcome {
    storage: QuadraticStorage,
    report: LmiReport,
    factor: SpectralFactor,
    trace: Option<TraceRecord>,
}

/// Regular case through the Riccati route with `W = (R)^{1/2}`,
/// `L = W⁻ᵀ(Sᵀ − BᵀX)`; singular case through the reduction chain.
fn storage_outcome(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
) -> Result<StorageOutcome, StorageError> {
    if is_regular(sys, supply) {
        let (storage, report) = storage::available_energy(sys, supply)?;
        let w = sqrt_psd(&weight(sys, supply))?;
        let st = match supply {
            SupplyRate::Passive => sys.c.clone(),
            SupplyRate::Gain => -(sys.d.transpose() * &sys.c),
        };
        let l = if w.is_empty() {
            Mat::zeros(0, sys.states())
        } else {
            nk::inverse(&w.transpose())? * (st - sys.b.transpose() * &storage.x)
        };
        return Ok(StorageOutcome {
            storage,
            report,
            factor: SpectralFactor { l, w },
            trace: None,
        });
    }
    let (storage, factor, trace) = run_chain(sys, supply).map_err(|e| match e {
        passivity::reduction::ReductionError::Storage(e) => e,
        e @ (passivity::reduction::ReductionError::NotPassive(_)
        | passivity::reduction::ReductionError::NotNonExpansive(_)) => {
            StorageError::NotDissipative {
                supply,
                reason: e.to_string(),
            }
        }
        e => StorageError::Chain(e.to_string()),
    })?;
    let residual = passivity::reduction::factor_residual(sys, &storage.x, &factor, supply)
        .map_err(|e| StorageError::Chain(e.to_string()))?;
    let (storage, report) = finish_report(sys, storage.x, supply, residual, Vec::new(), false)?;
    Ok(StorageOutcome {
        storage,
        report,
        factor,
        trace: Some(trace.record()),
    })
}

fn pair_of(file: &SystemFile) -> Result<PolyPair, Failure> {
    match (&file.pair, &file.system) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(s)) => behavior_from_exact(s).map(|(p, _)| p).map_err(error),
        (None, None) => Err(error("no system or pair")),
    }
}

fn pair_verdict(pair: &PolyPair, supply: SupplyRate) -> PairVerdict {
    match supply {
        SupplyRate::Passive => is_positive_real_pair(pair),
        SupplyRate::Gain => is_bounded_real_pair(pair),
    }
}

fn fill_storage(r: &mut Report, out: &StorageOutcome, supply: SupplyRate) {
    r.x_minus = Some(rows(&out.storage.x));
    r.s_a = Some(StorageFormula::from_x(&out.storage.x, supply));
    r.bounded_above = Some(out.report.bounded_above);
    r.witness = out
        .report
        .unbounded_witness
        .clone()
        .map(ReportWitness::Unbounded);
}

fn storage_command(
    command: &str,
    file: &SystemFile,
    opts: &Options,
    with_factor: bool,
) -> Result<Report, Failure> {
    let mut r = base(command, file);
    let supply = file.supply();
    let Some(sys) = file.float_system() else {
        if with_factor {
            return Err(error(
                "this command needs a state-space description (A, B, C, D)",
            ));
        }
        return pair_command(file);
    };
    match storage_outcome(&sys, supply) {
        Ok(out) => {
            fill_storage(&mut r, &out, supply);
            let tol = opts.tol.unwrap_or(1e-9);
            let lmi_ok = out.report.diagnostics.min_eig_lmi >= -tol
                && out.report.diagnostics.min_eig_x >= -tol;
            r.verdict = if lmi_ok { Verdict::Pass } else { Verdict::Fail };
            if !lmi_ok {
                r.message = Some(format!(
                    "LMI check below −{tol:e}: min eig X {:.3e}, min eig LMI {:.3e}",
                    out.report.diagnostics.min_eig_x, out.report.diagnostics.min_eig_lmi
                ));
            }
            if with_factor {
                r.l = Some(rows(&out.factor.l));
                r.w = Some(rows(&out.factor.w));
            }
            if opts.trace {
                r.trace = out.trace;
            }
        }
        Err(StorageError::NotDissipative { reason, .. }) => {
            r.verdict = Verdict::Fail;
            r.message = Some(reason);
            if let Ok(pair) = pair_of(file) {
                let v = pair_verdict(&pair, supply);
                r.witness = v.witness.clone().map(ReportWitness::Pair);
                r.details = Some(Details::Pair(v));
            }
        }
        Err(e) => return Err(error(e)),
    }
    Ok(r)
}

pub fn check(file: &SystemFile, opts: &Options) -> Result<Report, Failure> {
    storage_command("check", file, opts, false)
}

pub fn energy(file: &SystemFile, opts: &Options) -> Result<Report, Failure> {
    require_system(file)?;
    storage_command("energy", file, opts, true)
}

pub fn pair_command(file: &SystemFile) -> Result<Report, Failure> {
    let mut r = base("pair", file);
    let pair = pair_of(file)?;
    let v = pair_verdict(&pair, file.supply());
    r.verdict = Verdict::from_pair(v.verdict);
    r.witness = v.witness.clone().map(ReportWitness::Pair);
    r.details = Some(Details::Pair(v));
    Ok(r)
}

pub fn factor(file: &SystemFile, opts: &Options) -> Result<Report, Failure> {
    let sys = require_system(file)?;
    let supply = file.supply();
    let mut r = base("factor", file);
    let out = match storage_outcome(&sys, supply) {
        Ok(out) => out,
        Err(StorageError::NotDissipative { reason, .. }) => {
            r.verdict = Verdict::Fail;
            r.message = Some(reason);
            return Ok(r);
        }
        Err(e) => return Err(error(e)),
    };
    fill_storage(&mut r, &out, supply);
    r.l = Some(rows(&out.factor.l));
    r.w = Some(rows(&out.factor.w));
    let rep = verify_spectral_factor_for(&sys, &out.factor, supply).map_err(error)?;
    let tol = opts.tol.unwrap_or(1e-8);
    r.verdict = if rep.max_identity_error <= tol && rep.failing_lambda.is_none() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    if !rep.hypotheses_met {
        r.message = Some("spec(A) is not in the closed left half-plane; the rank test does not certify a spectral factor".into());
    }
    r.details = Some(Details::Factor(rep));
    if opts.trace {
        r.trace = out.trace;
    }
    Ok(r)
}

fn feedback_details(law: &FeedbackLaw) -> FeedbackDetails {
    FeedbackDetails {
        kind: law.kind,
        gain: rows(&law.k),
        closed_loop_spectrum: law.closed_loop_spectrum.clone(),
    }
}

/// Exact law when it exists, else the ε-law. Returns the law, the storage
/// matrix it realizes (`X₋` or `X₋^ε`) and a note on any fallback.
fn choose_law(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
    epsilon: Option<f64>,
) -> Result<(FeedbackLaw, Mat, Option<String>), Failure> {
    if let Some(eps) = epsilon {
        let (law, x) = extract::epsilon_feedback(sys, eps, supply).map_err(error)?;
        return Ok((law, x, None));
    }
    let fallback = |why: String| -> Result<(FeedbackLaw, Mat, Option<String>), Failure> {
        let (law, x) = extract::epsilon_feedback(sys, DEFAULT_EPSILON, supply).map_err(error)?;
        Ok((
            law,
            x,
            Some(format!(
                "{why}; using the ε-regularized law with ε = {DEFAULT_EPSILON}"
            )),
        ))
    };
    if !is_regular(sys, supply) {
        return fallback("singular weight, no optimal feedback exists".into());
    }
    let (st, _) = storage::available_energy(sys, supply).map_err(error)?;
    match extract::exact_feedback(sys, &st.x, supply) {
        Ok(law) => Ok((law, st.x, None)),
        Err(e @ ExtractError::MarginalClosedLoop(_)) => fallback(e.to_string()),
        Err(e) => Err(error(e)),
    }
}

pub fn feedback(file: &SystemFile, epsilon: Option<f64>) -> Result<Report, Failure> {
    let sys = require_system(file)?;
    let supply = file.supply();
    let mut r = base("feedback", file);
    let (law, x, note) = choose_law(&sys, supply, epsilon)?;
    r.x_minus = Some(rows(&x));
    r.s_a = Some(StorageFormula::from_x(&x, supply));
    r.message = note;
    r.details = Some(Details::Feedback(feedback_details(&law)));
    r.verdict = Verdict::Pass;
    Ok(r)
}

pub struct ExtractArgs {
    pub x0: Vec<f64>,
    pub horizon: Option<f64>,
    pub step: f64,
    pub epsilon: Option<f64>,
}

/// Returns the report and the columnar trajectory table.
pub fn extract_command(file: &SystemFile, args: &ExtractArgs) -> Result<(Report, String), Failure> {
    let sys = require_system(file)?;
    if args.x0.len() != sys.states() {
        return Err(error(format!(
            "--x0 has {} entries, the system has {} states",
            args.x0.len(),
            sys.states()
        )));
    }
    let supply = file.supply();
    let mut r = base("extract", file);
    let (law, x, note) = choose_law(&sys, supply, args.epsilon)?;
    let horizon = match args.horizon {
        Some(h) => h,
        None => extract::default_horizon(&sys, &law).map_err(error)?,
    };
    let x0 = Vector::from_column_slice(&args.x0);
    let run = extract::simulate_extraction(&sys, &law, &x0, horizon, args.step).map_err(error)?;
    let within = run.target.is_none_or(|t| run.extracted_energy <= t + 1e-6);
    r.verdict = if within { Verdict::Pass } else { Verdict::Fail };
    r.message = match (note, within) {
        (n, true) => n,
        (_, false) => Some("extracted energy exceeds the available storage".into()),
    };
    r.x_minus = Some(rows(&x));
    r.s_a = Some(StorageFormula::from_x(&x, supply));
    let details = ExtractionDetails {
        x0: args.x0.clone(),
        horizon,
        step: args.step,
        samples: run.times.len(),
        extracted_energy: run.extracted_energy,
        target: run.target,
    };
    r.details = Some(Details::Extraction {
        feedback: feedback_details(&law),
        run: details,
    });
    Ok((r, run.to_table()))
}
