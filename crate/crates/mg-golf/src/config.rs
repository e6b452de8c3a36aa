//! Experiment configuration files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mg_golf_core::golf::DataOption;
use mg_golf_core::olive::{Estimator, NashTarget, OliveParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted field path, or the file name for syntax errors.
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Golf,
    GolfAdversarial,
    Olive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    RandomTabular {
        states: usize,
        a: usize,
        b: usize,
        horizon: usize,
        #[serde(default)]
        sparsity: f64,
        seed: u64,
    },
    /// Block game with `m` latent states and `per_block` observations each.
    Block { m: usize, per_block: usize, a: usize, b: usize, horizon: usize, seed: u64 },
    Linear { d: usize, states: usize, a: usize, b: usize, horizon: usize, seed: u64 },
    Rps,
    File { path: PathBuf },
}

fn default_grid_levels() -> usize {
    12
}

fn default_random_per_step() -> usize {
    4
}

fn default_passes() -> usize {
    3
}

fn default_cap() -> usize {
    mg_golf_core::function_class::DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSpec {
    /// Product class of grid tables; `G` is its rounded Bellman closure.
    Grid {
        #[serde(default = "default_grid_levels")]
        grid_levels: usize,
        #[serde(default = "default_random_per_step")]
        random_per_step: usize,
        #[serde(default = "default_passes")]
        closure_passes: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    /// ε-cover of the linear class of a `linear` environment; `G = F`.
    LinearCover {
        eps: f64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    /// Classes read from disk; `G = F` when `g` is absent.
    Files { f: PathBuf, g: Option<PathBuf> },
    /// `F = G = {Q⋆}`.
    StarSingleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptionSpec {
    I,
    II,
}

impl From<OptionSpec> for DataOption {
    fn from(o: OptionSpec) -> Self {
        match o {
            OptionSpec::I => DataOption::I,
            OptionSpec::II => DataOption::II,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarySpec {
    /// Exact best response to `μ^k`.
    #[default]
    BestResponse,
    Uniform,
}

fn default_c_beta() -> f64 {
    0.5
}

fn default_c_delta() -> f64 {
    1.0
}

fn default_tenth() -> f64 {
    0.1
}

fn default_option() -> OptionSpec {
    OptionSpec::I
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GolfSettings {
    pub episodes: usize,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_c_delta")]
    pub c_delta: f64,
    /// `ε` in the gate formula.
    #[serde(default = "default_tenth")]
    pub delta_eps: f64,
    /// Failure probability inside `β`.
    #[serde(default = "default_tenth")]
    pub delta_conf: f64,
    #[serde(default = "default_option")]
    pub option: OptionSpec,
    /// Complexity `d` in the gate formula; defaults to `|S||A||B|`.
    #[serde(default)]
    pub d: Option<f64>,
    /// Overrides the `β` formula.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Overrides the gate formula; `0` disables the gate.
    #[serde(default)]
    pub delta_gate: Option<f64>,
    #[serde(default)]
    pub adversary: AdversarySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    #[default]
    PureMaxMin,
    MixedSaddle,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OliveSettings {
    pub zeta_act: f64,
    pub zeta_elim: f64,
    pub phases: usize,
    /// Phase budget of each best-response call; defaults to `phases`.
    #[serde(default)]
    pub inner_phases: Option<usize>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default = "one")]
    pub n_act: usize,
    #[serde(default = "one")]
    pub n_elim: usize,
    #[serde(default)]
    pub target: TargetSpec,
}

impl OliveSettings {
    /// Outer and inner parameters for one seed.
    pub fn params(&self, seed: u64) -> (OliveParams, OliveParams) {
        let estimator = match self.estimator {
            EstimatorSpec::Exact => Estimator::Exact,
            EstimatorSpec::Sampled => Estimator::Sampled,
        };
        let target = match self.target {
            TargetSpec::PureMaxMin => NashTarget::PureMaxMin,
            TargetSpec::MixedSaddle => NashTarget::MixedSaddle,
        };
        let outer = OliveParams {
            zeta_act: self.zeta_act,
            zeta_elim: self.zeta_elim,
            n_act: self.n_act,
            n_elim: self.n_elim,
            phases: self.phases,
            estimator,
            seed,
            target,
        };
        let inner = OliveParams { phases: self.inner_phases.unwrap_or(self.phases), ..outer.clone() };
        (outer, inner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvSpec,
    pub class: ClassSpec,
    #[serde(default)]
    pub golf: Option<GolfSettings>,
    #[serde(default)]
    pub olive: Option<OliveSettings>,
    pub seeds: Vec<u64>,
    /// Where logs and the report go; `None` keeps everything in memory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(err(path, format!("must be positive and finite, got {x}")))
    }
}

fn at_least_one(path: &str, n: usize) -> Result<(), ConfigError> {
    if n == 0 {
        Err(err(path, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn file_exists(path: &str, p: &Path) -> Result<(), ConfigError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(err(path, format!("file {} does not exist", p.display())))
    }
}

impl ExperimentConfig {
    /// Parses JSON text. Relative paths inside are resolved against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let p = e.path().to_string();
            err(if p == "." { "config".to_string() } else { p }, e.into_inner().to_string())
        })?;
        if let Some(base) = base {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text, path.parent())
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvSpec::File { path } = &mut self.env {
            fix(path);
        }
        if let ClassSpec::Files { f, g } = &mut self.class {
            fix(f);
            if let Some(g) = g {
                fix(g);
            }
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(err("seeds", "at least one seed is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.seeds.iter().enumerate() {
            if !seen.insert(s) {
                return Err(err(format!("seeds[{i}]"), format!("seed {s} appears twice")));
            }
        }
        match &self.env {
            EnvSpec::RandomTabular { states, a, b, horizon, sparsity, .. } => {
                for (k, v) in [("states", states), ("a", a), ("b", b), ("horizon", horizon)] {
                    at_least_one(&format!("env.{k}"), *v)?;
                }
                if !(0.0..1.0).contains(sparsity) {
                    return Err(err("env.sparsity", "must lie in [0, 1)"));
                }
            }
            EnvSpec::Block { m, per_block, a, b, horizon, .. } => {
                for (k, v) in [("m", m), ("per_block", per_block), ("a", a), ("b", b), ("horizon", horizon)] {
                    at_least_one(&format!("env.{k}"), *v)?;
                }
            }
            EnvSpec::Linear { d, states, a, b, horizon, .. } => {
                for (k, v) in [("d", d), ("states", states), ("a", a), ("b", b), ("horizon", horizon)] {
                    at_least_one(&format!("env.{k}"), *v)?;
                }
            }
            EnvSpec::Rps => {}
            EnvSpec::File { path } => file_exists("env.path", path)?,
        }
        match &self.class {
            ClassSpec::Grid { grid_levels, closure_passes, .. } => {
                at_least_one("class.grid_levels", *grid_levels)?;
                if *closure_passes > 3 {
                    return Err(err("class.closure_passes", "at most 3 passes are allowed"));
                }
            }
            ClassSpec::LinearCover { eps, .. } => {
                positive("class.eps", *eps)?;
                if !matches!(self.env, EnvSpec::Linear { .. }) {
                    return Err(err("class.kind", "linear_cover needs a linear environment"));
                }
            }
            ClassSpec::Files { f, g } => {
                file_exists("class.f", f)?;
                if let Some(g) = g {
                    file_exists("class.g", g)?;
                }
            }
            ClassSpec::StarSingleton => {}
        }
        match self.algorithm {
            Algorithm::Golf | Algorithm::GolfAdversarial => {
                let g = self.golf.as_ref().ok_or_else(|| err("golf", "required for this algorithm"))?;
                at_least_one("golf.episodes", g.episodes)?;
                positive("golf.c_beta", g.c_beta)?;
                positive("golf.c_delta", g.c_delta)?;
                positive("golf.delta_conf", g.delta_conf)?;
                if !(g.delta_eps >= 0.0) {
                    return Err(err("golf.delta_eps", "must be nonnegative"));
                }
                if let Some(d) = g.d {
                    positive("golf.d", d)?;
                }
                if g.beta.is_some_and(|b| !(b >= 0.0)) {
                    return Err(err("golf.beta", "must be nonnegative"));
                }
                if g.delta_gate.is_some_and(|b| !(b >= 0.0)) {
                    return Err(err("golf.delta_gate", "must be nonnegative"));
                }
            }
            Algorithm::Olive => {
                let o = self.olive.as_ref().ok_or_else(|| err("olive", "required for this algorithm"))?;
                positive("olive.zeta_act", o.zeta_act)?;
                positive("olive.zeta_elim", o.zeta_elim)?;
                at_least_one("olive.phases", o.phases)?;
                if let Some(p) = o.inner_phases {
                    at_least_one("olive.inner_phases", p)?;
                }
                at_least_one("olive.n_act", o.n_act)?;
                at_least_one("olive.n_elim", o.n_elim)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "algorithm": "golf",
        "env": {"kind": "rps"},
        "class": {"kind": "star_singleton"},
        "golf": {"episodes": 5},
        "seeds": [0, 1]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(BASE, None).unwrap();
        let g = c.golf.unwrap();
        assert_eq!((g.c_beta, g.c_delta, g.delta_eps, g.option), (0.5, 1.0, 0.1, OptionSpec::I));
    }

    #[test]
    fn errors_carry_field_paths() {
        let dup = BASE.replace("[0, 1]", "[0, 0]");
        assert_eq!(ExperimentConfig::from_json(&dup, None).unwrap_err().path, "seeds[1]");
        let bad = BASE.replace(r#""episodes": 5"#, r#""episodes": 5, "betta": 1"#);
        assert_eq!(ExperimentConfig::from_json(&bad, None).unwrap_err().path, "golf.betta");
        let zero = BASE.replace(r#""episodes": 5"#, r#""episodes": 0"#);
        assert_eq!(ExperimentConfig::from_json(&zero, None).unwrap_err().path, "golf.episodes");
        let missing = BASE.replace(r#"{"kind": "star_singleton"}"#, r#"{"kind": "files", "f": "/nonexistent/f.json"}"#);
        assert_eq!(ExperimentConfig::from_json(&missing, None).unwrap_err().path, "class.f");
    }
}
