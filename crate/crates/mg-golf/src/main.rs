use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mg_golf::config::{Algorithm, ConfigError, EnvSpec, ExperimentConfig};
use mg_golf::formats::{self, ClassFile, MatrixSetFile, MgFile, PayoffFile};
use mg_golf::harness::{self, HarnessError};
use mg_golf_core::complexity::{be_dimension, ResidualKind, SearchMode};
use mg_golf_core::envs::{
    bellman_closure_class, make_perturbed_set, tabular_function_class, verify_counterexample, Certificate,
    TabularClassSpec,
};
use mg_golf_core::matrix_game::{duality_gap, solve_zero_sum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "mg-golf", version, about = "Self-play learners for zero-sum Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Q,
    Online,
    V,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Run the confidence-set learner over every seed of a config.
    RunGolf {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the elimination-based learner over every seed of a config.
    RunOlive {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one payoff matrix (`{"rows": [[...], ...]}`).
    SolveMatrix {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Bellman-eluder dimension of a class on a game.
    Dim {
        #[arg(long)]
        mg: PathBuf,
        #[arg(long)]
        class: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "q")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
    },
    /// Decide whether the max/min sub-problem over a matrix set is solvable.
    VerifyCounterexample {
        /// Matrix set file (`{"matrices": [...]}`); defaults to the built-in set.
        #[arg(long)]
        custom: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
    },
    /// Write a game fixture. `--env` takes an environment spec as JSON.
    GenMg {
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a grid class fixture for a game, and optionally its closure.
    GenClass {
        #[arg(long)]
        mg: PathBuf,
        #[arg(long, default_value_t = 12)]
        grid_levels: usize,
        #[arg(long, default_value_t = 4)]
        random_per_step: usize,
        #[arg(long, default_value_t = 3)]
        closure_passes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        closure_out: Option<PathBuf>,
    },
    /// Run one experiment per value of a config knob.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config path, e.g. `golf.episodes`.
        #[arg(long)]
        knob: String,
        /// JSON array of values.
        #[arg(long)]
        values: String,
        /// Where the sweep table goes; printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Algorithm(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Algorithm { .. } => Failure::Algorithm(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<formats::FormatError> for Failure {
    fn from(e: formats::FormatError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn algorithm_error(e: mg_golf_core::Error) -> Failure {
    Failure::Algorithm(e.to_string())
}

fn print_json(v: &impl serde::Serialize) {
    print!("{}", formats::to_json_string(v));
}

fn run_config(path: &Path, out: Option<PathBuf>, olive: bool) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if olive != (cfg.algorithm == Algorithm::Olive) {
        let want = if olive { "olive" } else { "golf or golf-adversarial" };
        return Err(Failure::Input(format!("algorithm: this subcommand runs {want}")));
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    let result = harness::run_experiment(&cfg)?;
    print_json(&result.report);
    if result.report.all_failed() {
        return Err(Failure::Algorithm("every seed failed".into()));
    }
    Ok(())
}

fn counterexample_json(r: &mg_golf_core::envs::CounterexampleReport) -> Value {
    let certificate = match &r.certificate {
        Certificate::Solution { upper, lower, mu, nu, max_slack, min_slack } => json!({
            "kind": "solution", "upper": upper, "lower": lower, "mu": mu, "nu": nu,
            "max_slack": max_slack, "min_slack": min_slack,
        }),
        Certificate::Refutation(f) => json!({
            "kind": "refutation",
            "grid": f.grid,
            "n": f.n,
            "lipschitz": f.lipschitz,
            "radius_nu": f.radius_nu,
            "radius_mu": f.radius_mu,
            "grid_points": f.grid_points,
            "margin_nu": f.margin_nu,
            "worst_nu": f.worst_nu,
            "margin_mu": f.margin_mu,
            "worst_mu": f.worst_mu,
            "undominated_upper": f.undominated_upper,
            "undominated_lower": f.undominated_lower,
            "deterministic": f.deterministic.iter().map(|d| json!({
                "a": d.a, "b": d.b, "upper": d.upper, "lower": d.lower, "max_ok": d.max_ok, "min_ok": d.min_ok,
            })).collect::<Vec<_>>(),
        }),
    };
    json!({ "solvable": r.solvable, "certificate": certificate })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::RunGolf { config, out } => run_config(&config, out, false),
        Command::RunOlive { config, out } => run_config(&config, out, true),
        Command::SolveMatrix { input, tol } => {
            let file: PayoffFile = formats::read_json(&input)?;
            let m = mg_golf_core::Payoff::from_rows(&file.rows).map_err(|e| Failure::Input(e.to_string()))?;
            let pair = solve_zero_sum(&m, tol).map_err(algorithm_error)?;
            let gap = duality_gap(&m, &pair.mu, &pair.nu).map_err(algorithm_error)?;
            print_json(&json!({ "value": pair.value, "mu": pair.mu, "nu": pair.nu, "duality_gap": gap }));
            Ok(())
        }
        Command::Dim { mg, class, eps, kind, mode } => {
            let game = formats::read_json::<MgFile>(&mg)?.to_mg(&mg.display().to_string())?;
            let f = formats::read_json::<ClassFile>(&class)?.to_class(&class.display().to_string())?;
            let kind = match kind {
                KindArg::Q => ResidualKind::Q,
                KindArg::Online => ResidualKind::Online,
                KindArg::V => ResidualKind::V,
            };
            let mode = match mode {
                ModeArg::Exact => SearchMode::Exact,
                ModeArg::Greedy => SearchMode::Greedy,
            };
            let r = be_dimension(&game, &f, eps, kind, mode).map_err(algorithm_error)?;
            let steps: Vec<Value> = r
                .steps
                .iter()
                .map(|s| {
                    json!({
                        "h": s.h,
                        "value": s.value(),
                        "point_mass": s.point_mass.dimension,
                        "roll_in": s.roll_in.as_ref().map(|d| d.dimension),
                    })
                })
                .collect();
            print_json(&json!({ "dimension": r.dimension, "eps": eps, "steps": steps }));
            Ok(())
        }
        Command::VerifyCounterexample { custom, grid } => {
            let set = match custom {
                Some(p) => formats::read_json::<MatrixSetFile>(&p)?.to_payoffs(&p.display().to_string())?,
                None => make_perturbed_set(),
            };
            let report = verify_counterexample(&set, grid).map_err(algorithm_error)?;
            print_json(&counterexample_json(&report));
            Ok(())
        }
        Command::GenMg { env, out } => {
            let spec: EnvSpec = serde_json::from_str(&env).map_err(|e| Failure::Input(format!("env: {e}")))?;
            let mg = harness::build_env(&spec)?;
            formats::write_json(&out, &MgFile::from_mg(&mg))?;
            Ok(())
        }
        Command::GenClass { mg, grid_levels, random_per_step, closure_passes, seed, out, closure_out } => {
            let game = formats::read_json::<MgFile>(&mg)?.to_mg(&mg.display().to_string())?;
            let spec = TabularClassSpec {
                grid_levels,
                random_per_step,
                closure_passes,
                seed,
                cap: mg_golf_core::function_class::DEFAULT_CAP,
            };
            let fc = tabular_function_class(&game, &spec).map_err(algorithm_error)?;
            formats::write_json(&out, &ClassFile::from_class(&fc.class))?;
            let mut summary = json!({ "members": fc.class.len(), "eps_real": fc.eps, "closure_passes": fc.passes });
            if let Some(path) = closure_out {
                let (g, comp) = bellman_closure_class(&game, &fc.class, grid_levels).map_err(algorithm_error)?;
                formats::write_json(&path, &ClassFile::from_class(&g))?;
                summary["closure_members"] = json!(g.len());
                summary["eps_comp"] = json!(comp);
            }
            print_json(&summary);
            Ok(())
        }
        Command::Sweep { config, knob, values, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Failure::Input(format!("{}: {e}", config.display())))?;
            let base: Value = serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", config.display())))?;
            let values: Vec<Value> = serde_json::from_str(&values).map_err(|e| Failure::Input(format!("values: {e}")))?;
            let rows = harness::sweep(&base, config.parent(), &knob, &values)?;
            match out {
                Some(path) => formats::write_json(&path, &rows)?,
                None => print_json(&rows),
            }
            if !rows.is_empty() && rows.iter().all(|r| r.report.all_failed()) {
                return Err(Failure::Algorithm("every seed failed".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Algorithm(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
