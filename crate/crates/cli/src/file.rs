//! System files: JSON with matrices `A`, `B`, `C`, `D` (row-major) and/or a
//! polynomial pair `{P, Q}`, plus an optional supply tag. Matrix entries may be
//! integers, decimals or `"num/den"` strings and are read exactly.

use passivity::polymat::{parse_rational, ExactSystem, PolyMatrix, PolyPair, RMat, Rat};
use passivity::statespace::StateSpaceSystem;
use passivity::storage::SupplyRate;
use serde::Deserialize;
use serde_json::Value;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {location}: {message}")]
    Content {
        path: String,
        location: String,
        message: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    name: Option<String>,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<Value>>>,
    #[serde(rename = "B")]
    b: Option<Vec<Vec<Value>>>,
    #[serde(rename = "C")]
    c: Option<Vec<Vec<Value>>>,
    #[serde(rename = "D")]
    d: Option<Vec<Vec<Value>>>,
    pair: Option<RawPair>,
    supply: Option<SupplyRate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<Value>>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<Vec<Value>>>,
}

#[derive(Debug, Clone)]
pub struct SystemFile {
    pub name: String,
    pub system: Option<ExactSystem>,
    pub pair: Option<PolyPair>,
    pub supply: Option<SupplyRate>,
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::parse(&text, &shown)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, FileError> {
        let raw: RawFile = serde_json::from_str(text).map_err(|e| FileError::Syntax {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let content = |location: &str, message: String| FileError::Content {
            path: path.to_string(),
            location: location.to_string(),
            message,
        };
        let system = match (&raw.a, &raw.b, &raw.c, &raw.d) {
            (None, None, None, None) => None,
            (Some(a), Some(b), Some(c), Some(d)) => {
                let (a, b, c, d) = (
                    rational_matrix(a, "A").map_err(|(l, m)| content(&l, m))?,
                    rational_matrix(b, "B").map_err(|(l, m)| content(&l, m))?,
                    rational_matrix(c, "C").map_err(|(l, m)| content(&l, m))?,
                    rational_matrix(d, "D").map_err(|(l, m)| content(&l, m))?,
                );
                Some(assemble(a, b, c, d).map_err(|m| content("A, B, C, D", m))?)
            }
            _ => {
                return Err(content(
                    "A, B, C, D",
                    "give all four matrices or none".into(),
                ))
            }
        };
        let pair = match &raw.pair {
            None => None,
            Some(rp) => {
                let p = poly_matrix(&rp.p, "pair.P").map_err(|(l, m)| content(&l, m))?;
                let q = poly_matrix(&rp.q, "pair.Q").map_err(|(l, m)| content(&l, m))?;
                Some(PolyPair::new(p, q).map_err(|e| content("pair", e.to_string()))?)
            }
        };
        if system.is_none() && pair.is_none() {
            return Err(content("file", "needs A, B, C, D or a pair".into()));
        }
        Ok(SystemFile {
            name: raw.name.unwrap_or_else(|| path.to_string()),
            system,
            pair,
            supply: raw.supply,
        })
    }

    pub fn float_system(&self) -> Option<StateSpaceSystem> {
        self.system
            .as_ref()
            .map(|s| s.to_float().with_label(self.name.clone()))
    }

    /// `(outputs, inputs)` of whichever description is present.
    pub fn io(&self) -> (usize, usize) {
        match (&self.system, &self.pair) {
            (Some(s), _) => (s.c.nrows(), s.b.ncols()),
            (None, Some(p)) => (p.outputs(), p.inputs()),
            (None, None) => (0, 0),
        }
    }

    /// Explicit tag, else passive when square and gain otherwise.
    pub fn supply(&self) -> SupplyRate {
        self.supply.unwrap_or_else(|| {
            let (m, n) = self.io();
            if m == n {
                SupplyRate::Passive
            } else {
                SupplyRate::Gain
            }
        })
    }
}

fn entry_text(v: &Value) -> Option<String> {
    match v {
        // With arbitrary precision the number keeps its source text.
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn parse_entry(v: &Value, location: String) -> Result<Rat, (String, String)> {
    entry_text(v)
        .and_then(|t| parse_rational(&t))
        .ok_or_else(|| (location, format!("not a number or rational string: {v}")))
}

type Located<T> = Result<T, (String, String)>;

/// Rows as parsed; the column count of an empty matrix is left to `assemble`.
fn rational_matrix(rows: &[Vec<Value>], name: &str) -> Located<(Vec<Vec<Rat>>, usize)> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err((
                format!("{name}[{i}]"),
                format!("has {} entries, expected {cols}", row.len()),
            ));
        }
        let parsed = row
            .iter()
            .enumerate()
            .map(|(j, v)| parse_entry(v, format!("{name}[{i}][{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(parsed);
    }
    Ok((out, cols))
}

fn to_rmat(rows: &[Vec<Rat>], r: usize, c: usize) -> RMat {
    RMat::from_fn(r, c, |i, j| rows[i][j].clone())
}

fn assemble(
    a: (Vec<Vec<Rat>>, usize),
    b: (Vec<Vec<Rat>>, usize),
    c: (Vec<Vec<Rat>>, usize),
    d: (Vec<Vec<Rat>>, usize),
) -> Result<ExactSystem, String> {
    let states = a.0.len();
    let outputs = d.0.len().max(c.0.len());
    let inputs = if d.0.is_empty() { b.1 } else { d.1 };
    let shape =
        |m: &(Vec<Vec<Rat>>, usize), r: usize, c: usize| m.0.len() == r && (r == 0 || m.1 == c);
    if !shape(&a, states, states)
        || !shape(&b, states, inputs)
        || !shape(&c, outputs, states)
        || !shape(&d, outputs, inputs)
    {
        return Err(format!(
            "inconsistent shapes: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
            a.0.len(),
            a.1,
            b.0.len(),
            b.1,
            c.0.len(),
            c.1,
            d.0.len(),
            d.1
        ));
    }
    ExactSystem::new(
        to_rmat(&a.0, states, states),
        to_rmat(&b.0, states, inputs),
        to_rmat(&c.0, outputs, states),
        to_rmat(&d.0, outputs, inputs),
    )
    .map_err(|e| e.to_string())
}

fn poly_matrix(rows: &[Vec<Vec<Value>>], name: &str) -> Result<PolyMatrix, (String, String)> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut text = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (j, entry) in row.iter().enumerate() {
            let coeffs = entry
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    entry_text(v).ok_or_else(|| {
                        (
                            format!("{name}[{i}][{j}][{k}]"),
                            format!("not a number or rational string: {v}"),
                        )
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(coeffs);
        }
        text.push(out);
    }
    PolyMatrix::from_strings(&text, cols).map_err(|m| (name.to_string(), m))
}
