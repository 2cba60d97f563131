//! Machine-readable report emitted by every subcommand.

use num_complex::Complex64;
use passivity::extract::LawKind;
use passivity::numkernel::{symmetric_eig, Mat};
use passivity::polymat::{PairVerdict, Verdict as PairOutcome, Witness};
use passivity::reduction::{FactorReport, TraceRecord};
use passivity::storage::{SupplyRate, UnboundedWitness};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    Error,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail | Verdict::Inconclusive => 1,
            Verdict::Error => 2,
        }
    }

    pub fn from_pair(v: PairOutcome) -> Self {
        match v {
            PairOutcome::Pass => Verdict::Pass,
            PairOutcome::Fail => Verdict::Fail,
            PairOutcome::BoundaryInconclusive => Verdict::Inconclusive,
        }
    }
}

/// `S_a(x) = Σ coefficient·(directionᵀx)²`, with each direction scaled so
/// that its largest entry has magnitude 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageFormula {
    pub terms: Vec<StorageTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageTerm {
    pub coefficient: f64,
    pub direction: Vec<f64>,
}

impl StorageFormula {
    pub fn from_x(x: &Mat, supply: SupplyRate) -> Self {
        let mut terms = Vec::new();
        if let Ok((vals, vecs)) = symmetric_eig(x) {
            let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (k, &lambda) in vals.iter().enumerate() {
                if lambda.abs() <= 1e-12 * top.max(1e-300) || lambda == 0.0 {
                    continue;
                }
                let v = vecs.column(k);
                let (imax, _) = v.iamax_full();
                let peak = v[imax];
                terms.push(StorageTerm {
                    coefficient: supply.value_scale() * lambda * peak * peak,
                    direction: v.iter().map(|c| c / peak).collect(),
                });
            }
        }
        StorageFormula { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p: f64 = t.direction.iter().zip(x).map(|(a, b)| a * b).sum();
                t.coefficient * p * p
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportWitness {
    /// Uncontrollable mode in the closed left half-plane: storage not bounded above.
    Unbounded(UnboundedWitness),
    /// Pair-test counterexample.
    Pair(Witness),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDetails {
    pub kind: LawKind,
    pub gain: Vec<Vec<f64>>,
    pub closed_loop_spectrum: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDetails {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub samples: usize,
    pub extracted_energy: f64,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResult {
    pub name: String,
    pub pass: bool,
    pub error: f64,
    pub tolerance: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Details {
    Pair(PairVerdict),
    Feedback(FeedbackDetails),
    Extraction {
        feedback: FeedbackDetails,
        run: ExtractionDetails,
    },
    Factor(FactorReport),
    Fixtures(Vec<FixtureResult>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub system: Option<String>,
    pub supply: Option<SupplyRate>,
    pub verdict: Verdict,
    pub message: Option<String>,
    #[serde(rename = "X_minus")]
    pub x_minus: Option<Vec<Vec<f64>>>,
    #[serde(rename = "S_a")]
    pub s_a: Option<StorageFormula>,
    #[serde(rename = "L")]
    pub l: Option<Vec<Vec<f64>>>,
    #[serde(rename = "W")]
    pub w: Option<Vec<Vec<f64>>>,
    pub bounded_above: Option<bool>,
    pub witness: Option<ReportWitness>,
    pub trace: Option<TraceRecord>,
    pub details: Option<Details>,
    pub elapsed_ms: f64,
}

impl Report {
    pub fn new(command: &str, system: Option<String>, supply: Option<SupplyRate>) -> Self {
        Report {
            command: command.to_string(),
            system,
            supply,
            verdict: Verdict::Error,
            message: None,
            x_minus: None,
            s_a: None,
            l: None,
            w: None,
            bounded_above: None,
            witness: None,
            trace: None,
            details: None,
            elapsed_ms: 0.0,
        }
    }

    pub fn error(command: &str, message: String) -> Self {
        Report {
            message: Some(message),
            ..Report::new(command, None, None)
        }
    }
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Mat {
    Mat::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Plain-text rendering for terminals.
pub fn render_text(r: &Report) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "{}: {:?}", r.command, r.verdict);
    if let Some(name) = &r.system {
        let _ = writeln!(s, "system: {name}");
    }
    if let Some(msg) = &r.message {
        let _ = writeln!(s, "note: {msg}");
    }
    let mat = |s: &mut String, label: &str, m: &Option<Vec<Vec<f64>>>| {
        if let Some(m) = m {
            let _ = writeln!(s, "{label} =");
            for row in m {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
                let _ = writeln!(s, "  [{}]", cells.join(" "));
            }
        }
    };
    mat(&mut s, "X_minus", &r.x_minus);
    if let Some(f) = &r.s_a {
        let terms: Vec<String> = f
            .terms
            .iter()
            .map(|t| {
                let dir: Vec<String> = t.direction.iter().map(|v| format!("{v:.6}")).collect();
                format!("{:.6}·(({})·x)²", t.coefficient, dir.join(", "))
            })
            .collect();
        let _ = writeln!(
            s,
            "S_a(x) = {}",
            if terms.is_empty() {
                "0".into()
            } else {
                terms.join(" + ")
            }
        );
    }
    mat(&mut s, "L", &r.l);
    mat(&mut s, "W", &r.w);
    if let Some(b) = r.bounded_above {
        let _ = writeln!(s, "bounded above: {b}");
    }
    if let Some(w) = &r.witness {
        let _ = writeln!(
            s,
            "witness: {}",
            serde_json::to_string(w).unwrap_or_default()
        );
    }
    match &r.details {
        Some(Details::Pair(v)) => {
            let _ = writeln!(
                s,
                "pair verdict: {:?}, failed condition: {:?}",
                v.verdict, v.failed_condition
            );
        }
        Some(Details::Feedback(f)) | Some(Details::Extraction { feedback: f, .. }) => {
            let _ = writeln!(s, "feedback ({:?}): K = {:?}", f.kind, f.gain);
            if let Some(Details::Extraction { run, .. }) = &r.details {
                let _ = writeln!(
                    s,
                    "extracted energy {:.9} (target {}), horizon {}, step {}",
                    run.extracted_energy,
                    run.target.map_or("n/a".into(), |t| format!("{t:.9}")),
                    run.horizon,
                    run.step
                );
            }
        }
        Some(Details::Factor(f)) => {
            let _ = writeln!(
                s,
                "identity error {:.3e}, rank margin {}, hypotheses met: {}",
                f.max_identity_error,
                f.min_rank_margin
                    .map_or("n/a".into(), |m| format!("{m:.3e}")),
                f.hypotheses_met
            );
        }
        Some(Details::Fixtures(list)) => {
            for f in list {
                let _ = writeln!(
                    s,
                    "  [{}] {} (error {:.2e}, tolerance {:.0e}){}",
                    if f.pass { "pass" } else { "FAIL" },
                    f.name,
                    f.error,
                    f.tolerance,
                    f.note.as_ref().map_or(String::new(), |n| format!(": {n}"))
                );
            }
        }
        None => {}
    }
    if let Some(t) = &r.trace {
        let _ = writeln!(
            s,
            "trace: {} step(s), bottom states {}",
            t.steps.len(),
            t.bottom_states
        );
        for st in &t.steps {
            let _ = writeln!(
                s,
                "  {:?}: {} → {} inputs, matrix {:?}",
                st.kind, st.inputs_before, st.inputs_after, st.matrix
            );
        }
    }
    let _ = writeln!(s, "elapsed: {:.1} ms", r.elapsed_ms);
    s
}
