//! Multi-seed experiment runs, aggregation and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mg_golf_core::envs::{
    bellman_closure_class, make_block_mg, make_linear_mg, make_random_tabular, make_rps, tabular_function_class, BlockSpec,
    TabularClassSpec,
};
use mg_golf_core::function_class::{audit_completeness, audit_realizability, epsilon_cover};
use mg_golf_core::golf::{beta_formula, delta_formula, run_golf, run_golf_adversarial, GolfConfig, RunLog};
use mg_golf_core::model::{best_response_to_max, nash_solve};
use mg_golf_core::olive::{run_olive_mg, OliveOutcome};
use mg_golf_core::{FunctionClass, MarkovPolicy, Side, TabularMG, ValueFunction};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{AdversarySpec, Algorithm, ClassSpec, ConfigError, EnvSpec, ExperimentConfig};
use crate::formats::{self, ClassFile, FormatError, MgFile};

/// Caps the worker pool when set.
pub const THREADS_VAR: &str = "MG_GOLF_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{stage}: {source}")]
    Algorithm { stage: &'static str, source: mg_golf_core::Error },
}

fn alg(stage: &'static str) -> impl FnOnce(mg_golf_core::Error) -> HarnessError {
    move |source| HarnessError::Algorithm { stage, source }
}

/// Game, classes and derived constants shared by every seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mg: TabularMG,
    pub f: FunctionClass,
    pub g: FunctionClass,
    pub audit: ClassAudit,
    pub v_star: f64,
    /// `(β, Δ)` for the confidence-set learner.
    pub golf: Option<(f64, f64)>,
}

/// Audited slack of the classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAudit {
    pub f_size: usize,
    pub g_size: usize,
    pub ln_f: f64,
    pub ln_g: f64,
    pub eps_real: f64,
    pub eps_comp: f64,
}

pub fn build_env(env: &EnvSpec) -> Result<TabularMG, HarnessError> {
    Ok(match env {
        EnvSpec::RandomTabular { states, a, b, horizon, sparsity, seed } => {
            make_random_tabular(*states, *a, *b, *horizon, *sparsity, *seed).map_err(alg("environment"))?
        }
        EnvSpec::Block { m, per_block, a, b, horizon, seed } => {
            let spec = BlockSpec::uniform(*m, *per_block).map_err(alg("environment"))?;
            make_block_mg(&spec, *a, *b, *horizon, *seed).map_err(alg("environment"))?.observed
        }
        EnvSpec::Linear { d, states, a, b, horizon, seed } => {
            make_linear_mg(*d, *states, *a, *b, *horizon, *seed).map_err(alg("environment"))?.0
        }
        EnvSpec::Rps => make_rps().0,
        EnvSpec::File { path } => {
            let file: MgFile = formats::read_json(path)?;
            file.to_mg(&path.display().to_string())?
        }
    })
}

fn read_class(path: &Path) -> Result<FunctionClass, HarnessError> {
    let file: ClassFile = formats::read_json(path)?;
    Ok(file.to_class(&path.display().to_string())?)
}

/// Builds `(F, G, ε_real, ε_comp)`.
fn build_classes(cfg: &ExperimentConfig, mg: &TabularMG) -> Result<(FunctionClass, FunctionClass, f64, f64), HarnessError> {
    let audit = |f: FunctionClass, g: FunctionClass| -> Result<_, HarnessError> {
        let real = audit_realizability(mg, &f).map_err(alg("class audit"))?;
        let comp = audit_completeness(mg, &f, &g).map_err(alg("class audit"))?;
        Ok((f, g, real, comp))
    };
    match &cfg.class {
        ClassSpec::Grid { grid_levels, random_per_step, closure_passes, seed, cap } => {
            let spec = TabularClassSpec {
                grid_levels: *grid_levels,
                random_per_step: *random_per_step,
                closure_passes: *closure_passes,
                seed: *seed,
                cap: *cap,
            };
            let fc = tabular_function_class(mg, &spec).map_err(alg("class"))?;
            let (g, comp) = bellman_closure_class(mg, &fc.class, *grid_levels).map_err(alg("class"))?;
            Ok((fc.class, g, fc.eps, comp))
        }
        ClassSpec::LinearCover { eps, cap } => {
            let EnvSpec::Linear { d, states, a, b, horizon, seed } = &cfg.env else {
                unreachable!("validated config");
            };
            let spec = make_linear_mg(*d, *states, *a, *b, *horizon, *seed).map_err(alg("class"))?.1;
            let f = epsilon_cover(&spec, *eps, *cap).map_err(alg("class"))?;
            audit(f.clone(), f)
        }
        ClassSpec::Files { f, g } => {
            let fc = read_class(f)?;
            let gc = match g {
                Some(g) => read_class(g)?,
                None => fc.clone(),
            };
            audit(fc, gc)
        }
        ClassSpec::StarSingleton => {
            let star = nash_solve(mg).map_err(alg("class"))?;
            let q = star.values.q.iter().map(|t| t.iter().map(|x| x.clamp(0.0, 1.0)).collect()).collect();
            let member = ValueFunction::new(mg.dims(), q).map_err(alg("class"))?;
            let f = FunctionClass::from_members(mg.dims(), vec![member]).map_err(alg("class"))?;
            audit(f.clone(), f)
        }
    }
}

/// Builds the game and classes, audits them and fixes `β` and `Δ`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let mg = build_env(&cfg.env)?;
    let (f, g, eps_real, eps_comp) = build_classes(cfg, &mg)?;
    if f.dims() != mg.dims() || g.dims() != mg.dims() {
        return Err(ConfigError { path: "class".into(), message: "class dimensions do not match the environment".into() }.into());
    }
    let audit = ClassAudit {
        f_size: f.len(),
        g_size: g.len(),
        ln_f: f.log_product_size(),
        ln_g: g.log_product_size(),
        eps_real,
        eps_comp,
    };
    let v_star = nash_solve(&mg).map_err(alg("nash"))?.value_at(mg.initial_state());
    let golf = cfg.golf.as_ref().filter(|_| cfg.algorithm != Algorithm::Olive).map(|s| {
        let d = mg.dims();
        let beta = s.beta.unwrap_or_else(|| {
            beta_formula(s.c_beta, s.episodes, d.horizon, audit.ln_f, audit.ln_g, s.delta_conf, eps_comp, eps_real)
        });
        let delta = s.delta_gate.unwrap_or_else(|| {
            let dim = s.d.unwrap_or(d.sab() as f64);
            delta_formula(s.c_delta, d, dim, beta, s.episodes, s.delta_eps, s.option.into())
        });
        (beta, delta)
    });
    Ok(Prepared { mg, f, g, audit, v_star, golf })
}

/// What one seed produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedLog {
    Golf(RunLog),
    Olive {
        outcome: OliveOutcome,
        /// `V⋆ − V^{μ,†}` of the output policy.
        gap: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub result: Result<SeedLog, String>,
    pub seconds: f64,
}

fn run_seed(cfg: &ExperimentConfig, p: &Prepared, seed: u64) -> Result<SeedLog, mg_golf_core::Error> {
    let mg = &p.mg;
    match cfg.algorithm {
        Algorithm::Golf | Algorithm::GolfAdversarial => {
            let s = cfg.golf.as_ref().expect("validated config");
            let (beta, delta_gate) = p.golf.expect("prepared with golf settings");
            let gc = GolfConfig { episodes: s.episodes, beta, delta_gate, option: s.option.into(), seed };
            let log = if cfg.algorithm == Algorithm::Golf {
                run_golf(mg, &p.f, &p.g, &gc)?
            } else {
                let uniform = MarkovPolicy::uniform(Side::Min, mg.dims());
                let mut adversary = |_k: usize, mu: &MarkovPolicy| match s.adversary {
                    AdversarySpec::BestResponse => best_response_to_max(mg, mu).expect("valid max policy").0,
                    AdversarySpec::Uniform => uniform.clone(),
                };
                run_golf_adversarial(mg, &p.f, &p.g, &gc, &mut adversary)?
            };
            Ok(SeedLog::Golf(log))
        }
        Algorithm::Olive => {
            let (outer, inner) = cfg.olive.as_ref().expect("validated config").params(seed);
            let outcome = run_olive_mg(mg, &p.f, &p.g, &outer, &inner)?;
            let worst = best_response_to_max(mg, &outcome.mu)?.1.v(0, mg.initial_state());
            Ok(SeedLog::Olive { outcome, gap: p.v_star - worst })
        }
    }
}

fn worker_count() -> usize {
    std::env::var(THREADS_VAR).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}

/// Runs every seed on an isolated worker; results come back in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, p: &Prepared) -> Vec<SeedRun> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().expect("thread pool");
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let t = Instant::now();
                let result = run_seed(cfg, p, seed).map_err(|e| e.to_string());
                SeedRun { seed, result, seconds: t.elapsed().as_secs_f64() }
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuartileRow {
    pub k: usize,
    /// Seeds whose log reaches episode `k`.
    pub runs: usize,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateStats {
    pub runs: usize,
    pub fired: usize,
    /// `Δ + ε_real`.
    pub bound: f64,
    /// Fired runs whose output gap is within `bound`.
    pub within_bound: usize,
    pub fired_episode: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OliveStats {
    pub phases: Vec<usize>,
    pub gaps: Vec<f64>,
    /// `H·ζ_act + ε_real`.
    pub bound: f64,
    pub within_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

/// Everything here is recomputable from the per-seed logs and the class audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub failed: Vec<FailedSeed>,
    pub audit: ClassAudit,
    pub v_star: f64,
    pub beta: Option<f64>,
    pub delta_gate: Option<f64>,
    /// Cumulative regret quartiles per episode.
    pub regret: Vec<QuartileRow>,
    pub gate: Option<GateStats>,
    pub olive: Option<OliveStats>,
}

impl AggregateReport {
    pub fn all_failed(&self) -> bool {
        self.failed.len() == self.seeds.len()
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-episode quartiles of cumulative regret curves of unequal length.
pub fn regret_quartiles(curves: &[Vec<f64>]) -> Vec<QuartileRow> {
    let longest = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let mut xs: Vec<f64> = curves.iter().filter_map(|c| c.get(i).copied()).collect();
            xs.sort_by(f64::total_cmp);
            QuartileRow { k: i + 1, runs: xs.len(), q25: quantile(&xs, 0.25), q50: quantile(&xs, 0.5), q75: quantile(&xs, 0.75) }
        })
        .collect()
}

/// Pure function of the seed logs and prepared constants.
pub fn aggregate(cfg: &ExperimentConfig, p: &Prepared, runs: &[SeedRun]) -> AggregateReport {
    let failed = runs
        .iter()
        .filter_map(|r| r.result.as_ref().err().map(|e| FailedSeed { seed: r.seed, error: e.clone() }))
        .collect();
    let golf_logs: Vec<&RunLog> = runs
        .iter()
        .filter_map(|r| match &r.result {
            Ok(SeedLog::Golf(l)) => Some(l),
            _ => None,
        })
        .collect();
    let curves: Vec<Vec<f64>> = golf_logs.iter().map(|l| l.episodes.iter().map(|e| e.regret_cum).collect()).collect();
    let gate = match (cfg.algorithm, p.golf) {
        (Algorithm::Golf, Some((_, delta))) => {
            let bound = delta + p.audit.eps_real;
            Some(GateStats {
                runs: golf_logs.len(),
                fired: golf_logs.iter().filter(|l| l.gated()).count(),
                bound,
                within_bound: golf_logs.iter().filter(|l| l.output_gap.is_some_and(|g| g <= bound)).count(),
                fired_episode: golf_logs.iter().map(|l| l.output.and(l.episodes.last().map(|e| e.k))).collect(),
            })
        }
        _ => None,
    };
    let olive = cfg.olive.as_ref().filter(|_| cfg.algorithm == Algorithm::Olive).map(|o| {
        let done: Vec<(usize, f64)> = runs
            .iter()
            .filter_map(|r| match &r.result {
                Ok(SeedLog::Olive { outcome, gap }) => Some((outcome.log.phases.len(), *gap)),
                _ => None,
            })
            .collect();
        let bound = p.mg.horizon() as f64 * o.zeta_act + p.audit.eps_real;
        OliveStats {
            phases: done.iter().map(|d| d.0).collect(),
            gaps: done.iter().map(|d| d.1).collect(),
            bound,
            within_bound: done.iter().filter(|d| d.1 <= bound).count(),
        }
    });
    AggregateReport {
        algorithm: cfg.algorithm,
        seeds: cfg.seeds.clone(),
        failed,
        audit: p.audit.clone(),
        v_star: p.v_star,
        beta: p.golf.map(|g| g.0),
        delta_gate: p.golf.map(|g| g.1),
        regret: regret_quartiles(&curves),
        gate,
        olive,
    }
}

/// Per-seed summary written next to the seed's log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub error: Option<String>,
    pub episodes: Option<usize>,
    pub regret: Option<f64>,
    pub output: Option<usize>,
    pub output_gap: Option<f64>,
    pub olive_phases: Option<usize>,
    pub olive_inner_phases: Option<Vec<usize>>,
}

pub fn summarize(run: &SeedRun) -> SeedSummary {
    let mut s = SeedSummary {
        seed: run.seed,
        error: None,
        episodes: None,
        regret: None,
        output: None,
        output_gap: None,
        olive_phases: None,
        olive_inner_phases: None,
    };
    match &run.result {
        Err(e) => s.error = Some(e.clone()),
        Ok(SeedLog::Golf(l)) => {
            s.episodes = Some(l.episodes.len());
            s.regret = Some(l.regret());
            s.output = l.output;
            s.output_gap = l.output_gap;
        }
        Ok(SeedLog::Olive { outcome, gap }) => {
            s.output = Some(outcome.f_index);
            s.output_gap = Some(*gap);
            s.olive_phases = Some(outcome.log.phases.len());
            s.olive_inner_phases = Some(outcome.inner.iter().map(|l| l.phases.len()).collect());
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub prepared: Prepared,
    pub runs: Vec<SeedRun>,
    pub report: AggregateReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Timing {
    total_seconds: f64,
    seed_seconds: Vec<(u64, f64)>,
}

pub fn seed_log_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.csv"))
}

/// Writes `report.json`, one CSV and one summary per seed, and a separate
/// `timing.json` so the other files stay byte-identical across reruns.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), FormatError> {
    formats::write_json(&dir.join("report.json"), &result.report)?;
    for run in &result.runs {
        if let Ok(log) = &run.result {
            let csv = match log {
                SeedLog::Golf(l) => formats::golf_csv(l),
                SeedLog::Olive { outcome, .. } => formats::olive_csv(&outcome.log),
            };
            formats::write_text(&seed_log_path(dir, run.seed), &csv)?;
        }
        formats::write_json(&dir.join(format!("seed-{}.json", run.seed)), &summarize(run))?;
    }
    let timing = Timing { total_seconds: result.seconds, seed_seconds: result.runs.iter().map(|r| (r.seed, r.seconds)).collect() };
    formats::write_json(&dir.join("timing.json"), &timing)
}

/// Prepares, runs every seed, aggregates and writes outputs when the
/// config names a directory. Seed failures are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let t = Instant::now();
    let prepared = prepare(cfg)?;
    let runs = run_seeds(cfg, &prepared);
    let report = aggregate(cfg, &prepared, &runs);
    let result = ExperimentResult { prepared, runs, report, seconds: t.elapsed().as_secs_f64() };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

/// Sets `knob` (dot separated, numeric parts index arrays) in a config value.
pub fn set_knob(cfg: &mut Value, knob: &str, value: Value) -> Result<(), ConfigError> {
    let bad = |m: &str| ConfigError { path: knob.to_string(), message: m.to_string() };
    let parts: Vec<&str> = knob.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty path segment"));
    }
    let mut cur = cfg;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad("array segment must be an index"))?;
                let slot = items.get_mut(idx).ok_or_else(|| bad("index out of range"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path runs through a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: Value,
    pub report: AggregateReport,
}

/// One experiment per knob value. Outputs, when enabled, go to a
/// subdirectory per value.
pub fn sweep(base: &Value, base_dir: Option<&Path>, knob: &str, values: &[Value]) -> Result<Vec<SweepRow>, HarnessError> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut json = base.clone();
            set_knob(&mut json, knob, v.clone())?;
            let mut cfg = ExperimentConfig::from_json(&json.to_string(), base_dir)?;
            if let Some(dir) = &cfg.output_dir {
                cfg.output_dir = Some(dir.join(format!("{knob}-{i}")));
            }
            Ok(SweepRow { value: v.clone(), report: run_experiment(&cfg)?.report })
        })
        .collect()
}
