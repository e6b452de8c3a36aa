//! On-disk formats: JSON fixtures for games, classes and payoff matrices,
//! and the CSV logs written by the learners.

use std::fmt::Write as _;
use std::path::Path;

use mg_golf_core::golf::RunLog;
use mg_golf_core::olive::PhaseLog;
use mg_golf_core::{Dims, FunctionClass, Payoff, TabularMG};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MG_FORMAT: &str = "mg-v1";
pub const CLASS_FORMAT: &str = "fc-v1";

/// First line of every GOLF log.
pub const GOLF_SCHEMA: &str = "#schema=golf-log-v1";
pub const GOLF_HEADER: &str = "k,f_index,V_upper,V_lower,regret_inc,regret_cum,conf_size,gated";
/// First line of every OLIVE log.
pub const OLIVE_SCHEMA: &str = "#schema=olive-log-v1";
pub const OLIVE_HEADER: &str = "phase,f_index,act_sum,activated_h,eliminated,survivors,terminated";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> FormatError {
    FormatError::Invalid { path: path.to_string(), message: message.into() }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: p.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json { path: p, source })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, text).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_text(path, &to_json_string(value))
}

/// A tabular game. `transition` is `[h][cell][s']` and `reward` is
/// `[h][cell]`, both flattened, with `cell = (s·A + a)·B + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgFile {
    pub format: String,
    pub horizon: usize,
    pub states: usize,
    pub a: usize,
    pub b: usize,
    pub initial_state: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
}

impl MgFile {
    pub fn from_mg(mg: &TabularMG) -> Self {
        let d = mg.dims();
        Self {
            format: MG_FORMAT.into(),
            horizon: d.horizon,
            states: d.states,
            a: d.a,
            b: d.b,
            initial_state: mg.initial_state(),
            transition: mg.transition_raw().to_vec(),
            reward: mg.reward_raw().to_vec(),
        }
    }

    pub fn to_mg(&self, path: &str) -> Result<TabularMG, FormatError> {
        if self.format != MG_FORMAT {
            return Err(invalid(path, format!("expected format {MG_FORMAT}, found {}", self.format)));
        }
        let dims = Dims::new(self.horizon, self.states, self.a, self.b).map_err(|e| invalid(path, e.to_string()))?;
        TabularMG::new(dims, self.transition.clone(), self.reward.clone(), self.initial_state)
            .map_err(|e| invalid(path, e.to_string()))
    }
}

/// A finite class as per-step pools plus member table ids (`[member][h]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassFile {
    pub format: String,
    pub horizon: usize,
    pub states: usize,
    pub a: usize,
    pub b: usize,
    pub pools: Vec<Vec<Vec<f64>>>,
    pub members: Vec<Vec<u32>>,
}

impl ClassFile {
    pub fn from_class(class: &FunctionClass) -> Self {
        let d = class.dims();
        Self {
            format: CLASS_FORMAT.into(),
            horizon: d.horizon,
            states: d.states,
            a: d.a,
            b: d.b,
            pools: (0..d.horizon)
                .map(|h| (0..class.pool_len(h)).map(|i| class.pool_table(h, i).to_vec()).collect())
                .collect(),
            members: (0..class.len()).map(|i| class.member_ids(i).to_vec()).collect(),
        }
    }

    pub fn to_class(&self, path: &str) -> Result<FunctionClass, FormatError> {
        if self.format != CLASS_FORMAT {
            return Err(invalid(path, format!("expected format {CLASS_FORMAT}, found {}", self.format)));
        }
        let dims = Dims::new(self.horizon, self.states, self.a, self.b).map_err(|e| invalid(path, e.to_string()))?;
        FunctionClass::from_pools(dims, self.pools.clone(), self.members.clone()).map_err(|e| invalid(path, e.to_string()))
    }
}

/// One payoff matrix, rows for the max player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffFile {
    pub rows: Vec<Vec<f64>>,
}

/// A set of payoff matrices for the counterexample verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSetFile {
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl MatrixSetFile {
    pub fn to_payoffs(&self, path: &str) -> Result<Vec<Payoff>, FormatError> {
        self.matrices.iter().map(|m| Payoff::from_rows(m).map_err(|e| invalid(path, e.to_string()))).collect()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// Per-episode GOLF log.
pub fn golf_csv(log: &RunLog) -> String {
    let mut s = format!("{GOLF_SCHEMA}\n{GOLF_HEADER}\n");
    for e in &log.episodes {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.k,
            e.f_index,
            e.v_upper,
            opt(e.v_lower),
            e.regret_inc,
            e.regret_cum,
            e.conf_size,
            e.gated
        )
        .expect("string write");
    }
    s
}

/// Per-phase OLIVE log.
pub fn olive_csv(log: &PhaseLog) -> String {
    let mut s = format!("{OLIVE_SCHEMA}\n{OLIVE_HEADER}\n");
    for p in &log.phases {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.phase,
            p.f_index,
            p.act_sum,
            p.activated_h.map_or(String::new(), |h| h.to_string()),
            p.eliminated,
            p.survivors,
            p.terminated
        )
        .expect("string write");
    }
    s
}

/// One parsed row of a GOLF log.
#[derive(Debug, Clone, PartialEq)]
pub struct GolfRow {
    pub k: usize,
    pub f_index: usize,
    pub v_upper: f64,
    pub v_lower: Option<f64>,
    pub regret_inc: f64,
    pub regret_cum: f64,
    pub conf_size: usize,
    pub gated: bool,
}

/// Reads back a log written by [`golf_csv`].
pub fn parse_golf_csv(text: &str) -> Result<Vec<GolfRow>, FormatError> {
    let mut lines = text.lines();
    if lines.next() != Some(GOLF_SCHEMA) || lines.next() != Some(GOLF_HEADER) {
        return Err(invalid("golf log", "missing schema or header line"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| invalid("golf log", format!("line {}: bad {what}", i + 3));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("field count"));
            }
            let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
            let int = |j: usize, what: &str| f[j].parse::<usize>().map_err(|_| bad(what));
            Ok(GolfRow {
                k: int(0, "k")?,
                f_index: int(1, "f_index")?,
                v_upper: num(2, "V_upper")?,
                v_lower: if f[3].is_empty() { None } else { Some(num(3, "V_lower")?) },
                regret_inc: num(4, "regret_inc")?,
                regret_cum: num(5, "regret_cum")?,
                conf_size: int(6, "conf_size")?,
                gated: f[7].parse().map_err(|_| bad("gated"))?,
            })
        })
        .collect()
}
