//! The optimistic confidence-set learner with an exploiter.
//!
//! Each episode the max player plays the induced policy of the most
//! optimistic function still consistent with the data, the min player
//! plays the greedy policy of the most pessimistic function consistent
//! with the data *for that max-player policy*, and the run stops with a
//! certified output once the optimistic and pessimistic values are within
//! the gate width `Δ`.
//!
//! Squared losses are cached per (regressor table, target) and updated one
//! tuple at a time in arrival order, so every cached loss is bit-identical
//! to the straight fold computed by [`squared_loss`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::function_class::{project, table_min_value, table_nash, FunctionClass, ValueFunction};
use crate::matrix_game::Side;
use crate::model::{
    best_response_to_max, evaluate_pair, nash_solve, sample_episode, sample_option2, Dims, MarkovPolicy,
    StepDataset, TabularMG, Transition,
};
use crate::rng;

/// Values within this distance count as tied when picking `f^k` and `f̃`.
pub const VALUE_TIE: f64 = 1e-12;

/// How each episode collects data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataOption {
    /// One trajectory under `(μ^k, ν^k)`, every step kept.
    I,
    /// For each `h`, roll in with `(μ^k, ν^k)`, play uniformly at `h`,
    /// keep only the step-`h` tuple.
    II,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GolfConfig {
    /// Episode budget `K`.
    pub episodes: usize,
    /// Confidence width `β`.
    pub beta: f64,
    /// Gate width `Δ`; the run stops when `V̄ − V̲ < Δ`.
    pub delta_gate: f64,
    pub option: DataOption,
    pub seed: u64,
}

impl GolfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidArgument("episode budget must be at least 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.delta_gate >= 0.0) {
            return Err(Error::InvalidArgument(format!("gate width must be nonnegative, got {}", self.delta_gate)));
        }
        Ok(())
    }
}

/// `β = c·(ln(K·H·|F|·|G|/δ) + K·ε_comp² + K·ε_real²)`, with the class
/// sizes given as natural logs.
#[allow(clippy::too_many_arguments)]
pub fn beta_formula(
    c_beta: f64,
    episodes: usize,
    horizon: usize,
    ln_f: f64,
    ln_g: f64,
    delta_conf: f64,
    eps_comp: f64,
    eps_real: f64,
) -> f64 {
    let k = episodes as f64;
    let log_term = libm::log(k * horizon as f64) + ln_f + ln_g - libm::log(delta_conf);
    c_beta * (log_term + k * eps_comp * eps_comp + k * eps_real * eps_real)
}

/// `Δ = c′·(H·√(d·m·β/K) + ε)` where `m = 1` for Option I and `m = |A||B|`
/// for Option II.
pub fn delta_formula(c_delta: f64, dims: Dims, d: f64, beta: f64, episodes: usize, eps: f64, option: DataOption) -> f64 {
    let m = match option {
        DataOption::I => 1.0,
        DataOption::II => (dims.a * dims.b) as f64,
    };
    c_delta * (dims.horizon as f64 * libm::sqrt(d * m * beta / episodes as f64) + eps)
}

/// `Σ_{D_h} [ξ(s,a,b) − r − V_{ζ,h+1}(s')]²`.
pub fn squared_loss(data: &StepDataset, xi: &[f64], zeta: &ValueFunction) -> Result<f64> {
    let d = zeta.dims();
    check_loss_args(data, xi, d)?;
    let v_next = if data.h + 1 < d.horizon { table_nash(d, zeta.table(data.h + 1))?.values } else { vec![0.0; d.states] };
    Ok(fold_loss(&data.tuples, xi, &v_next, d))
}

/// `Σ_{D_h} [ξ(s,a,b) − r − V^μ_{ζ,h+1}(s')]²`.
pub fn mu_squared_loss(data: &StepDataset, xi: &[f64], zeta: &ValueFunction, mu: &MarkovPolicy) -> Result<f64> {
    let d = zeta.dims();
    check_loss_args(data, xi, d)?;
    mu.check(Side::Max, d)?;
    let v_next = if data.h + 1 < d.horizon {
        table_min_value(d, zeta.table(data.h + 1), &step_rows(mu, d, data.h + 1))
    } else {
        vec![0.0; d.states]
    };
    Ok(fold_loss(&data.tuples, xi, &v_next, d))
}

fn check_loss_args(data: &StepDataset, xi: &[f64], d: Dims) -> Result<()> {
    data.check(d)?;
    if xi.len() != d.sab() {
        return Err(Error::DimensionMismatch(format!("regressor table has {} entries, need {}", xi.len(), d.sab())));
    }
    Ok(())
}

#[inline]
fn fold_loss(tuples: &[Transition], xi: &[f64], v_next: &[f64], d: Dims) -> f64 {
    let mut acc = 0.0;
    for t in tuples {
        acc = add_loss(acc, xi, v_next, t, d);
    }
    acc
}

#[inline]
fn add_loss(acc: f64, xi: &[f64], v_next: &[f64], t: &Transition, d: Dims) -> f64 {
    let e = xi[d.cell(t.s, t.a, t.b)] - t.r - v_next[t.next];
    acc + e * e
}

fn step_rows(mu: &MarkovPolicy, d: Dims, h: usize) -> Vec<f64> {
    (0..d.states).flat_map(|s| mu.row(h, s).iter().copied()).collect()
}

fn check_data(data: &[StepDataset], d: Dims) -> Result<()> {
    if data.len() != d.horizon {
        return Err(Error::DimensionMismatch(format!("need {} step datasets, got {}", d.horizon, data.len())));
    }
    for (h, ds) in data.iter().enumerate() {
        if ds.h != h {
            return Err(Error::InvalidArgument(format!("dataset {h} is labelled step {}", ds.h)));
        }
        ds.check(d)?;
    }
    Ok(())
}

/// Per-step target value vectors for a confidence set: `targets[h][j]`
/// is the `V_{h+1}` vector of pool entry `j` of `F` at step `h+1`
/// (a single zero vector at the last step).
fn targets_with<Fv: Fn(usize, usize) -> Vec<f64>>(f: &FunctionClass, value: Fv) -> Vec<Vec<Vec<f64>>> {
    let d = f.dims();
    (0..d.horizon)
        .map(|h| {
            if h + 1 == d.horizon {
                vec![vec![0.0; d.states]]
            } else {
                (0..f.pool_len(h + 1)).map(|j| value(h + 1, j)).collect()
            }
        })
        .collect()
}

fn target_id(f: &FunctionClass, i: usize, h: usize) -> usize {
    if h + 1 == f.dims().horizon {
        0
    } else {
        f.table_id(i, h + 1)
    }
}

/// Straight (uncached) membership test shared by the two public builders.
fn members_within(f: &FunctionClass, g: &FunctionClass, data: &[StepDataset], beta: f64, targets: &[Vec<Vec<f64>>]) -> Vec<usize> {
    let d = f.dims();
    let mut loss_f: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); d.horizon];
    let mut min_g: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); d.horizon];
    let mut out = Vec::new();
    for i in 0..f.len() {
        let ok = (0..d.horizon).all(|h| {
            let j = target_id(f, i, h);
            let v = &targets[h][j];
            let tuples = &data[h].tuples;
            let lf = *loss_f[h]
                .entry((f.table_id(i, h), j))
                .or_insert_with(|| fold_loss(tuples, f.pool_table(h, f.table_id(i, h)), v, d));
            let lg = *min_g[h].entry(j).or_insert_with(|| {
                (0..g.pool_len(h)).map(|gi| fold_loss(tuples, g.pool_table(h, gi), v, d)).fold(f64::INFINITY, f64::min)
            });
            lf <= lg + beta
        });
        if ok {
            out.push(i);
        }
    }
    out
}

/// `C = {f ∈ F : L_{D_h}(f_h, f_{h+1}) ≤ min_{g ∈ G_h} L_{D_h}(g, f_{h+1}) + β ∀h}`.
pub fn build_confidence_set(f: &FunctionClass, g: &FunctionClass, data: &[StepDataset], beta: f64) -> Result<Vec<usize>> {
    let d = f.dims();
    if f.is_empty() || g.is_empty() {
        return Err(Error::EmptyClass);
    }
    check_pair(f, g)?;
    check_data(data, d)?;
    let targets = targets_with(f, |h, j| f.pool_nash(h, j).values.clone());
    Ok(members_within(f, g, data, beta, &targets))
}

/// The same set with `V^μ` targets.
pub fn build_mu_confidence_set(
    f: &FunctionClass,
    g: &FunctionClass,
    data: &[StepDataset],
    beta: f64,
    mu: &MarkovPolicy,
) -> Result<Vec<usize>> {
    let d = f.dims();
    if f.is_empty() || g.is_empty() {
        return Err(Error::EmptyClass);
    }
    check_pair(f, g)?;
    check_data(data, d)?;
    mu.check(Side::Max, d)?;
    let targets = targets_with(f, |h, j| table_min_value(d, f.pool_table(h, j), &step_rows(mu, d, h)));
    Ok(members_within(f, g, data, beta, &targets))
}

fn check_pair(f: &FunctionClass, g: &FunctionClass) -> Result<()> {
    if f.dims() != g.dims() {
        return Err(Error::DimensionMismatch(format!("F is {:?}, G is {:?}", f.dims(), g.dims())));
    }
    Ok(())
}

/// `V^μ_{w,0}(s_1)` for member `i`.
fn mu_start_value(f: &FunctionClass, i: usize, mu0: &[f64], s1: usize) -> f64 {
    let d = f.dims();
    let table = f.pool_table(0, f.table_id(i, 0));
    let row = &mu0[s1 * d.a..(s1 + 1) * d.a];
    let mut best = f64::INFINITY;
    for b in 0..d.b {
        let v: f64 = row.iter().enumerate().map(|(a, p)| p * table[d.cell(s1, a, b)]).sum();
        best = best.min(v);
    }
    best
}

/// Lowest index whose value is within [`VALUE_TIE`] of the extreme.
fn pick(values: &[(usize, f64)], side: Side) -> (usize, f64) {
    let extreme = match side {
        Side::Max => values.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max),
        Side::Min => values.iter().map(|x| x.1).fold(f64::INFINITY, f64::min),
    };
    *values
        .iter()
        .find(|(_, v)| match side {
            Side::Max => *v >= extreme - VALUE_TIE,
            Side::Min => *v <= extreme + VALUE_TIE,
        })
        .expect("nonempty candidate list")
}

/// Output of the exploiter.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploiter {
    pub nu: MarkovPolicy,
    pub v_lower: f64,
    pub f_tilde: usize,
    pub set_size: usize,
}

/// `f̃ = argmin_{w ∈ C^μ} V^μ_{w,0}(s_1)` and its greedy min-side policy.
pub fn compute_exploiter(
    mg: &TabularMG,
    f: &FunctionClass,
    g: &FunctionClass,
    beta: f64,
    data: &[StepDataset],
    mu: &MarkovPolicy,
) -> Result<Exploiter> {
    let set = build_mu_confidence_set(f, g, data, beta, mu)?;
    exploiter_from_set(mg, f, &set, mu, 0)
}

fn exploiter_from_set(mg: &TabularMG, f: &FunctionClass, set: &[usize], mu: &MarkovPolicy, episode: usize) -> Result<Exploiter> {
    if set.is_empty() {
        return Err(Error::EmptyConfidenceSet { episode });
    }
    let d = f.dims();
    let s1 = mg.initial_state();
    let mu0 = step_rows(mu, d, 0);
    let values: Vec<(usize, f64)> = set.iter().map(|&i| (i, mu_start_value(f, i, &mu0, s1))).collect();
    let (f_tilde, v_lower) = pick(&values, Side::Min);
    let nu = crate::function_class::greedy_min_policy(mu, &f.member(f_tilde))?;
    Ok(Exploiter { nu, v_lower, f_tilde, set_size: set.len() })
}

/// One episode of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    /// 1-based episode number.
    pub k: usize,
    pub f_index: usize,
    pub v_upper: f64,
    /// Exploiter value (absent in adversarial runs).
    pub v_lower: Option<f64>,
    pub f_tilde: Option<usize>,
    /// `V⋆ − V^{μ^k,†}`, or `V⋆ − V^{μ^k,ν^k}` against an adversary.
    pub regret_inc: f64,
    pub regret_cum: f64,
    pub conf_size: usize,
    pub mu_conf_size: Option<usize>,
    pub gated: bool,
    /// Whether the projection of `Q⋆` onto `F` was in `C^k`.
    pub proj_star_in_conf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub v_star: f64,
    /// Index of `P_F(Q⋆)` and its distance.
    pub proj_star: (usize, f64),
    pub episodes: Vec<EpisodeLog>,
    /// `f^k` of the gated episode, if the gate fired.
    pub output: Option<usize>,
    /// `V⋆ − V^{μ^out,†}` for the certified output.
    pub output_gap: Option<f64>,
}

impl RunLog {
    pub fn gated(&self) -> bool {
        self.output.is_some()
    }

    pub fn regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.regret_cum)
    }
}

/// A loss matrix `acc[regressor][target]` kept current tuple by tuple.
#[derive(Debug, Clone)]
struct LossTable {
    regressors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    acc: Vec<f64>,
}

impl LossTable {
    fn new(regressors: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, history: &[Transition], d: Dims) -> Self {
        let mut table = Self { acc: vec![0.0; regressors.len() * targets.len()], regressors, targets };
        for t in history {
            table.absorb(t, d);
        }
        table
    }

    fn absorb(&mut self, t: &Transition, d: Dims) {
        let nt = self.targets.len();
        for (r, xi) in self.regressors.iter().enumerate() {
            for (j, v) in self.targets.iter().enumerate() {
                let slot = &mut self.acc[r * nt + j];
                *slot = add_loss(*slot, xi, v, t, d);
            }
        }
    }

    #[inline]
    fn get(&self, r: usize, j: usize) -> f64 {
        self.acc[r * self.targets.len() + j]
    }
}

/// Incremental state of one run.
struct Engine<'a> {
    f: &'a FunctionClass,
    g: &'a FunctionClass,
    beta: f64,
    data: Vec<StepDataset>,
    nash: Vec<LossTable>,
    /// μ-loss tables keyed by the interned policy id at step `h+1`.
    mu: Vec<BTreeMap<usize, LossTable>>,
}

impl<'a> Engine<'a> {
    fn new(f: &'a FunctionClass, g: &'a FunctionClass, beta: f64) -> Self {
        let d = f.dims();
        let data: Vec<StepDataset> = (0..d.horizon).map(StepDataset::new).collect();
        let targets = targets_with(f, |h, j| f.pool_nash(h, j).values.clone());
        let nash = (0..d.horizon)
            .zip(targets)
            .map(|(h, t)| LossTable::new(Self::regressors(f, g, h), t, &[], d))
            .collect();
        Self { f, g, beta, data, nash, mu: vec![BTreeMap::new(); d.horizon] }
    }

    fn regressors(f: &FunctionClass, g: &FunctionClass, h: usize) -> Vec<Vec<f64>> {
        (0..f.pool_len(h))
            .map(|i| f.pool_table(h, i).to_vec())
            .chain((0..g.pool_len(h)).map(|i| g.pool_table(h, i).to_vec()))
            .collect()
    }

    fn push(&mut self, h: usize, t: Transition) {
        let d = self.f.dims();
        self.nash[h].absorb(&t, d);
        for table in self.mu[h].values_mut() {
            table.absorb(&t, d);
        }
        self.data[h].tuples.push(t);
    }

    /// Members passing every step test against the given per-step tables.
    fn within(&self, tables: &[&LossTable]) -> Vec<usize> {
        let f = self.f;
        let d = f.dims();
        let nf: Vec<usize> = (0..d.horizon).map(|h| f.pool_len(h)).collect();
        let min_g: Vec<Vec<f64>> = tables
            .iter()
            .enumerate()
            .map(|(h, t)| {
                (0..t.targets.len())
                    .map(|j| (0..self.g.pool_len(h)).map(|gi| t.get(nf[h] + gi, j)).fold(f64::INFINITY, f64::min))
                    .collect()
            })
            .collect();
        (0..f.len())
            .filter(|&i| {
                (0..d.horizon).all(|h| {
                    let j = target_id(f, i, h);
                    tables[h].get(f.table_id(i, h), j) <= min_g[h][j] + self.beta
                })
            })
            .collect()
    }

    fn confidence_set(&self) -> Vec<usize> {
        let tables: Vec<&LossTable> = self.nash.iter().collect();
        self.within(&tables)
    }

    /// `C^μ` for `μ = μ_{f_i}`.
    fn mu_confidence_set(&mut self, i: usize) -> Vec<usize> {
        let f = self.f;
        let d = f.dims();
        for h in 0..d.horizon.saturating_sub(1) {
            let pid = f.pool_policy_id(h + 1, f.table_id(i, h + 1));
            if !self.mu[h].contains_key(&pid) {
                let rows = f.policy_rows(h + 1, pid).to_vec();
                let targets = (0..f.pool_len(h + 1)).map(|j| table_min_value(d, f.pool_table(h + 1, j), &rows)).collect();
                let table = LossTable::new(Self::regressors(f, self.g, h), targets, &self.data[h].tuples, d);
                self.mu[h].insert(pid, table);
            }
        }
        let tables: Vec<&LossTable> = (0..d.horizon)
            .map(|h| {
                if h + 1 == d.horizon {
                    &self.nash[h]
                } else {
                    &self.mu[h][&f.pool_policy_id(h + 1, f.table_id(i, h + 1))]
                }
            })
            .collect();
        self.within(&tables)
    }
}

type Adversary<'a> = &'a mut dyn FnMut(usize, &MarkovPolicy) -> MarkovPolicy;

/// Runs the learner with the exploiter as the min player.
pub fn run_golf(mg: &TabularMG, f: &FunctionClass, g: &FunctionClass, cfg: &GolfConfig) -> Result<RunLog> {
    run(mg, f, g, cfg, None)
}

/// Runs the learner against an arbitrary min player: `adversary(k, μ^k)`
/// returns `ν^k`. There is no exploiter and no gate; the logged increment
/// is `V⋆ − V^{μ^k,ν^k}`.
pub fn run_golf_adversarial(
    mg: &TabularMG,
    f: &FunctionClass,
    g: &FunctionClass,
    cfg: &GolfConfig,
    adversary: &mut dyn FnMut(usize, &MarkovPolicy) -> MarkovPolicy,
) -> Result<RunLog> {
    run(mg, f, g, cfg, Some(adversary))
}

fn run(mg: &TabularMG, f: &FunctionClass, g: &FunctionClass, cfg: &GolfConfig, mut adversary: Option<Adversary<'_>>) -> Result<RunLog> {
    cfg.validate()?;
    let d = mg.dims();
    if f.dims() != d {
        return Err(Error::DimensionMismatch(format!("class is {:?}, game is {d:?}", f.dims())));
    }
    check_pair(f, g)?;
    let s1 = mg.initial_state();
    let star = nash_solve(mg)?;
    let v_star = star.value_at(s1);
    let proj_star = f.project_tables(&star.values.q);

    let mut engine = Engine::new(f, g, cfg.beta);
    let mut br_memo: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut regret_cum = 0.0;
    let mut output = None;
    let mut output_gap = None;

    for k in 1..=cfg.episodes {
        let conf = engine.confidence_set();
        if conf.is_empty() {
            return Err(Error::EmptyConfidenceSet { episode: k });
        }
        let values: Vec<(usize, f64)> = conf.iter().map(|&i| (i, f.start_value(i, s1))).collect();
        let (fk, v_upper) = pick(&values, Side::Max);
        let mu = f.induced_policy(fk);

        let (nu, v_lower, f_tilde, mu_conf_size, regret_inc) = match adversary.as_mut() {
            Some(adv) => {
                let nu = adv(k, &mu);
                nu.check(Side::Min, d)?;
                let v = evaluate_pair(mg, &mu, &nu)?.v(0, s1);
                (nu, None, None, None, v_star - v)
            }
            None => {
                let set = engine.mu_confidence_set(fk);
                let ex = exploiter_from_set(mg, f, &set, &mu, k)?;
                let key = f.policy_key(fk);
                let v_br = match br_memo.get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = best_response_to_max(mg, &mu)?.1.v(0, s1);
                        br_memo.insert(key, v);
                        v
                    }
                };
                (ex.nu, Some(ex.v_lower), Some(ex.f_tilde), Some(ex.set_size), v_star - v_br)
            }
        };
        regret_cum += regret_inc;
        let gated = v_lower.is_some_and(|lo| v_upper - lo < cfg.delta_gate);
        episodes.push(EpisodeLog {
            k,
            f_index: fk,
            v_upper,
            v_lower,
            f_tilde,
            regret_inc,
            regret_cum,
            conf_size: conf.len(),
            mu_conf_size,
            gated,
            proj_star_in_conf: conf.binary_search(&proj_star.0).is_ok(),
        });
        if gated {
            output = Some(fk);
            output_gap = Some(regret_inc);
            break;
        }

        match cfg.option {
            DataOption::I => {
                let traj = sample_episode(mg, &mu, &nu, &mut rng::stream(cfg.seed, k as u64, rng::tag::EPISODE))?;
                for (h, t) in traj.steps.into_iter().enumerate() {
                    engine.push(h, t);
                }
            }
            DataOption::II => {
                let mut r = rng::stream(cfg.seed, k as u64, rng::tag::OPTION_II);
                for h in 0..d.horizon {
                    let t = sample_option2(mg, &mu, &nu, h, &mut r)?;
                    engine.push(h, t);
                }
            }
        }
    }
    Ok(RunLog { v_star, proj_star, episodes, output, output_gap })
}

/// Index of `P_F(Q⋆)`; convenience for callers checking membership.
pub fn projected_nash(mg: &TabularMG, f: &FunctionClass) -> Result<(usize, f64)> {
    let star = nash_solve(mg)?;
    project(f, &ValueFunction::new(mg.dims(), clamp_tables(&star.values.q))?)
}

fn clamp_tables(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    q.iter().map(|t| t.iter().map(|x| x.clamp(0.0, 1.0)).collect()).collect()
}
