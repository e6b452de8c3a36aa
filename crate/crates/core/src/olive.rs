//! The elimination-based learner and its nested best-response routine.
//!
//! Both loops pick a candidate (optimistic for the max player, pessimistic
//! for the min player), roll in with the induced policy pair, and either
//! stop or use the roll-in to eliminate every function whose average
//! Bellman residual at the activated step is too large.
//!
//! Expectations come either from fresh samples (the original semantics:
//! datasets are discarded and resampled every phase) or from exact
//! distribution propagation, which makes phase counts deterministic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::function_class::{greedy_min_policy, table_min_value, table_nash, FunctionClass, ValueFunction};
use crate::golf::VALUE_TIE;
use crate::matrix_game::Side;
use crate::model::{joint_occupancy, sample_episode, Dims, MarkovPolicy, StepDataset, TabularMG};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Exact,
    Sampled,
}

/// Continuation value used in the max-player residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NashTarget {
    /// `max_{a'} min_{b'} f_{h+1}(s', a', b')` over pure actions.
    #[default]
    PureMaxMin,
    /// The mixed saddle value `V_{f,h+1}(s')`.
    MixedSaddle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OliveParams {
    pub zeta_act: f64,
    pub zeta_elim: f64,
    pub n_act: usize,
    pub n_elim: usize,
    /// Phase budget.
    pub phases: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub target: NashTarget,
}

impl OliveParams {
    pub fn exact(zeta_act: f64, zeta_elim: f64, phases: usize) -> Self {
        Self { zeta_act, zeta_elim, n_act: 1, n_elim: 1, phases, estimator: Estimator::Exact, seed: 0, target: NashTarget::PureMaxMin }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_act > 0.0) || !(self.zeta_elim > 0.0) {
            return Err(Error::InvalidArgument("thresholds must be positive".into()));
        }
        if self.estimator == Estimator::Sampled && (self.n_act == 0 || self.n_elim == 0) {
            return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
        }
        if self.phases == 0 {
            return Err(Error::InvalidArgument("phase budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where expectations under a roll-in policy pair come from.
#[derive(Debug, Clone, Copy)]
pub enum Rollin<'a> {
    /// Exact law of `(s_h, a_h, b_h)` under `(μ, ν)` in the model.
    Exact { mg: &'a TabularMG, mu: &'a MarkovPolicy, nu: &'a MarkovPolicy },
    /// Empirical average over `D_h`.
    Sampled { mg: &'a TabularMG, data: &'a [StepDataset] },
}

fn pure_max_min(d: Dims, table: &[f64]) -> Vec<f64> {
    (0..d.states)
        .map(|s| {
            (0..d.a)
                .map(|a| (0..d.b).map(|b| table[d.cell(s, a, b)]).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn average_residual(roll: &Rollin<'_>, h: usize, table: &[f64], v_next: &[f64]) -> Result<f64> {
    match roll {
        Rollin::Exact { mg, mu, nu } => {
            let occ = joint_occupancy(mg, mu, nu)?;
            let expected_next = mg.backup(h, v_next);
            let mut acc = 0.0;
            for (cell, w) in occ[h].iter().enumerate() {
                if *w != 0.0 {
                    // backup = r + P v, so the residual is table − backup.
                    acc += w * (table[cell] - expected_next[cell]);
                }
            }
            Ok(acc)
        }
        Rollin::Sampled { mg, data } => {
            let d = mg.dims();
            let ds = data.get(h).ok_or(Error::EmptyDataset { step: h })?;
            if ds.tuples.is_empty() {
                return Err(Error::EmptyDataset { step: h });
            }
            let total: f64 = ds.tuples.iter().map(|t| table[d.cell(t.s, t.a, t.b)] - t.r - v_next[t.next]).sum();
            Ok(total / ds.tuples.len() as f64)
        }
    }
}

fn rollin_dims(roll: &Rollin<'_>) -> Dims {
    match roll {
        Rollin::Exact { mg, .. } | Rollin::Sampled { mg, .. } => mg.dims(),
    }
}

/// `Ê(f, π, h)`: average of `f_h(s,a,b) − r − target(f_{h+1})(s')`.
pub fn avg_bellman_error_nash(roll: &Rollin<'_>, f: &ValueFunction, h: usize, target: NashTarget) -> Result<f64> {
    let d = rollin_dims(roll);
    if f.dims() != d {
        return Err(Error::DimensionMismatch(format!("function is {:?}, game is {d:?}", f.dims())));
    }
    d.check_step(h)?;
    let v_next = if h + 1 == d.horizon {
        vec![0.0; d.states]
    } else {
        match target {
            NashTarget::PureMaxMin => pure_max_min(d, f.table(h + 1)),
            NashTarget::MixedSaddle => table_nash(d, f.table(h + 1))?.values,
        }
    };
    average_residual(roll, h, f.table(h), &v_next)
}

/// `Ê(g, π, h)` with the best-response target `min_{b'} μ_{h+1}(s')ᵀ g_{h+1}(s',·,b')`.
pub fn avg_bellman_error_br(roll: &Rollin<'_>, g: &ValueFunction, mu: &MarkovPolicy, h: usize) -> Result<f64> {
    let d = rollin_dims(roll);
    if g.dims() != d {
        return Err(Error::DimensionMismatch(format!("function is {:?}, game is {d:?}", g.dims())));
    }
    d.check_step(h)?;
    mu.check(Side::Max, d)?;
    let v_next = if h + 1 == d.horizon {
        vec![0.0; d.states]
    } else {
        let rows: Vec<f64> = (0..d.states).flat_map(|s| mu.row(h + 1, s).iter().copied()).collect();
        table_min_value(d, g.table(h + 1), &rows)
    };
    average_residual(roll, h, g.table(h), &v_next)
}

/// One phase of either loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    /// 1-based phase number.
    pub phase: usize,
    pub f_index: usize,
    /// `Σ_h Ê(f^k, π^k, h)`.
    pub act_sum: f64,
    pub activated_h: Option<usize>,
    pub eliminated: usize,
    /// Survivors after this phase.
    pub survivors: usize,
    pub terminated: bool,
    /// Phases used by the nested routine (outer loop only).
    pub inner_phases: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseLog {
    pub phases: Vec<PhaseRecord>,
}

fn collect(mg: &TabularMG, mu: &MarkovPolicy, nu: &MarkovPolicy, n: usize, seed: u64, counter: u64, purpose: u8) -> Result<Vec<StepDataset>> {
    let d = mg.dims();
    let mut data: Vec<StepDataset> = (0..d.horizon).map(StepDataset::new).collect();
    let mut r = rng::stream(seed, counter, purpose);
    for _ in 0..n {
        let traj = sample_episode(mg, mu, nu, &mut r)?;
        for (h, t) in traj.steps.into_iter().enumerate() {
            data[h].tuples.push(t);
        }
    }
    Ok(data)
}

/// Which of the two loops is running; fixes signs, targets and streams.
#[derive(Clone, Copy)]
enum Loop<'a> {
    Outer { target: NashTarget },
    Inner { mu: &'a MarkovPolicy, outer_phase: usize },
}

impl Loop<'_> {
    fn residual(&self, roll: &Rollin<'_>, w: &ValueFunction, h: usize) -> Result<f64> {
        match self {
            Loop::Outer { target } => avg_bellman_error_nash(roll, w, h, *target),
            Loop::Inner { mu, .. } => avg_bellman_error_br(roll, w, mu, h),
        }
    }

    fn streams(&self, phase: usize) -> (u64, u8, u8) {
        match self {
            Loop::Outer { .. } => (phase as u64, rng::tag::OLIVE_OUTER_ACT, rng::tag::OLIVE_OUTER_ELIM),
            Loop::Inner { outer_phase, .. } => (
                rng::nested(*outer_phase as u64, phase as u64),
                rng::tag::OLIVE_INNER_ACT,
                rng::tag::OLIVE_INNER_ELIM,
            ),
        }
    }
}

/// Shared elimination step: returns `Some(h_k)` and prunes `survivors`,
/// or `None` when the phase terminates.
#[allow(clippy::too_many_arguments)]
fn phase_step(
    mg: &TabularMG,
    class: &FunctionClass,
    survivors: &mut Vec<usize>,
    chosen: usize,
    mu: &MarkovPolicy,
    nu: &MarkovPolicy,
    params: &OliveParams,
    which: Loop<'_>,
    phase: usize,
) -> Result<(f64, Option<usize>, usize)> {
    let d = mg.dims();
    let horizon = d.horizon as f64;
    let (counter, act_tag, elim_tag) = which.streams(phase);
    let w = class.member(chosen);

    let act_data;
    let act_roll = match params.estimator {
        Estimator::Exact => Rollin::Exact { mg, mu, nu },
        Estimator::Sampled => {
            act_data = collect(mg, mu, nu, params.n_act, params.seed, counter, act_tag)?;
            Rollin::Sampled { mg, data: &act_data }
        }
    };
    let errs: Vec<f64> = (0..d.horizon).map(|h| which.residual(&act_roll, &w, h)).collect::<Result<_>>()?;
    let sum: f64 = errs.iter().sum();

    // The max player stops when its optimistic value is not far above the
    // realized one; the min player mirrors this with the signs flipped.
    let (stop, activated) = match which {
        Loop::Outer { .. } => (sum <= horizon * params.zeta_act, errs.iter().position(|e| *e > params.zeta_act)),
        Loop::Inner { .. } => (sum >= -horizon * params.zeta_act, errs.iter().position(|e| *e < -params.zeta_act)),
    };
    if stop {
        return Ok((sum, None, 0));
    }
    let hk = activated.expect("a large sum forces one large term");

    let elim_data;
    let elim_roll = match params.estimator {
        Estimator::Exact => Rollin::Exact { mg, mu, nu },
        Estimator::Sampled => {
            elim_data = collect(mg, mu, nu, params.n_elim, params.seed, counter, elim_tag)?;
            Rollin::Sampled { mg, data: &elim_data }
        }
    };
    let before = survivors.len();
    let mut kept = Vec::with_capacity(before);
    for &i in survivors.iter() {
        let e = which.residual(&elim_roll, &class.member(i), hk)?;
        if libm::fabs(e) <= params.zeta_elim {
            kept.push(i);
        }
    }
    *survivors = kept;
    Ok((sum, Some(hk), before - survivors.len()))
}

fn start_min_value(class: &FunctionClass, i: usize, mu: &MarkovPolicy, s1: usize) -> f64 {
    let d = class.dims();
    let table = class.pool_table(0, class.table_id(i, 0));
    let row = mu.row(0, s1);
    (0..d.b)
        .map(|b| row.iter().enumerate().map(|(a, p)| p * table[d.cell(s1, a, b)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn pick_extreme(cands: &[(usize, f64)], side: Side) -> usize {
    let extreme = match side {
        Side::Max => cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        Side::Min => cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
    };
    cands
        .iter()
        .find(|c| match side {
            Side::Max => c.1 >= extreme - VALUE_TIE,
            Side::Min => c.1 <= extreme + VALUE_TIE,
        })
        .expect("nonempty")
        .0
}

/// Result of the nested routine.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseOutcome {
    pub nu: MarkovPolicy,
    pub g_index: usize,
    pub log: PhaseLog,
}

/// Approximate best response of the min player to `mu` using class `g`.
pub fn olive_best_response(mg: &TabularMG, g: &FunctionClass, mu: &MarkovPolicy, params: &OliveParams) -> Result<BestResponseOutcome> {
    olive_best_response_in(mg, g, mu, params, 0)
}

fn olive_best_response_in(
    mg: &TabularMG,
    g: &FunctionClass,
    mu: &MarkovPolicy,
    params: &OliveParams,
    outer_phase: usize,
) -> Result<BestResponseOutcome> {
    params.validate()?;
    let d = mg.dims();
    if g.dims() != d {
        return Err(Error::DimensionMismatch(format!("class is {:?}, game is {d:?}", g.dims())));
    }
    mu.check(Side::Max, d)?;
    let s1 = mg.initial_state();
    let mut survivors: Vec<usize> = (0..g.len()).collect();
    let mut log = PhaseLog::default();
    for k in 1..=params.phases {
        let cands: Vec<(usize, f64)> = survivors.iter().map(|&i| (i, start_min_value(g, i, mu, s1))).collect();
        let gk = pick_extreme(&cands, Side::Min);
        let nu = greedy_min_policy(mu, &g.member(gk))?;
        let (sum, hk, eliminated) =
            phase_step(mg, g, &mut survivors, gk, mu, &nu, params, Loop::Inner { mu, outer_phase }, k)?;
        log.phases.push(PhaseRecord {
            phase: k,
            f_index: gk,
            act_sum: sum,
            activated_h: hk,
            eliminated,
            survivors: survivors.len(),
            terminated: hk.is_none(),
            inner_phases: None,
        });
        if hk.is_none() {
            return Ok(BestResponseOutcome { nu, g_index: gk, log });
        }
        if survivors.is_empty() {
            return Err(Error::EmptySurvivorSet { phase: k });
        }
    }
    Err(Error::Exhausted { phases: params.phases })
}

/// Result of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OliveOutcome {
    pub mu: MarkovPolicy,
    pub f_index: usize,
    pub log: PhaseLog,
    /// Nested-routine log for every outer phase.
    pub inner: Vec<PhaseLog>,
    /// Members still alive at termination, ascending.
    pub survivors: Vec<usize>,
}

/// The elimination-based self-play learner.
pub fn run_olive_mg(mg: &TabularMG, f: &FunctionClass, g: &FunctionClass, outer: &OliveParams, inner: &OliveParams) -> Result<OliveOutcome> {
    outer.validate()?;
    inner.validate()?;
    let d = mg.dims();
    if f.dims() != d || g.dims() != d {
        return Err(Error::DimensionMismatch(format!("classes must match the game {d:?}")));
    }
    let s1 = mg.initial_state();
    let mut survivors: Vec<usize> = (0..f.len()).collect();
    let mut log = PhaseLog::default();
    let mut inner_logs = Vec::new();
    for k in 1..=outer.phases {
        let cands: Vec<(usize, f64)> = survivors.iter().map(|&i| (i, f.start_value(i, s1))).collect();
        let fk = pick_extreme(&cands, Side::Max);
        let mu = f.induced_policy(fk);
        let br = olive_best_response_in(mg, g, &mu, inner, k)?;
        let inner_phases = br.log.phases.len();
        inner_logs.push(br.log);
        let (sum, hk, eliminated) =
            phase_step(mg, f, &mut survivors, fk, &mu, &br.nu, outer, Loop::Outer { target: outer.target }, k)?;
        log.phases.push(PhaseRecord {
            phase: k,
            f_index: fk,
            act_sum: sum,
            activated_h: hk,
            eliminated,
            survivors: survivors.len(),
            terminated: hk.is_none(),
            inner_phases: Some(inner_phases),
        });
        if hk.is_none() {
            return Ok(OliveOutcome { mu, f_index: fk, log, inner: inner_logs, survivors });
        }
        if survivors.is_empty() {
            return Err(Error::EmptySurvivorSet { phase: k });
        }
    }
    Err(Error::Exhausted { phases: outer.phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{best_response_to_max, evaluate_pair, nash_solve, Dims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Separable rewards `u(s,a) + w(s,b)` and action-independent
    /// transitions: every `Q` table has a pure saddle.
    pub(crate) fn pure_saddle_mg(seed: u64, dims: Dims) -> TabularMG {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.horizon as f64;
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for _ in 0..dims.horizon {
            for _ in 0..dims.states {
                let w: Vec<f64> = (0..dims.states).map(|_| rng.gen_range(0.05..1.0)).collect();
                let t: f64 = w.iter().sum();
                let mut row: Vec<f64> = w.iter().map(|x| x / t).collect();
                let fix = 1.0 - row.iter().sum::<f64>();
                row[0] += fix;
                let u: Vec<f64> = (0..dims.a).map(|_| rng.gen_range(0.0..0.5)).collect();
                let v: Vec<f64> = (0..dims.b).map(|_| rng.gen_range(0.0..0.5)).collect();
                for a in 0..dims.a {
                    for b in 0..dims.b {
                        transition.extend_from_slice(&row);
                        reward.push((u[a] + v[b]) / h);
                    }
                }
            }
        }
        TabularMG::new(dims, transition, reward, 0).unwrap()
    }

    fn scaled(f: &[Vec<f64>], step: usize, c: f64) -> Vec<Vec<f64>> {
        let mut t = f.to_vec();
        t[step] = t[step].iter().map(|x| (x * c).clamp(0.0, 1.0)).collect();
        t
    }

    #[test]
    fn nash_residual_of_star_vanishes_on_pure_saddles() {
        let dims = Dims::new(3, 2, 2, 2).unwrap();
        let mg = pure_saddle_mg(1, dims);
        let star = nash_solve(&mg).unwrap();
        let qs = ValueFunction::new(dims, star.values.q.clone()).unwrap();
        let roll = Rollin::Exact { mg: &mg, mu: &star.mu, nu: &star.nu };
        for h in 0..3 {
            assert_eq!(avg_bellman_error_nash(&roll, &qs, h, NashTarget::PureMaxMin).unwrap(), 0.0);
            assert_eq!(avg_bellman_error_nash(&roll, &qs, h, NashTarget::MixedSaddle).unwrap(), 0.0);
        }
    }

    #[test]
    fn last_step_reward_table_has_zero_residual() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(2, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let first: Vec<f64> = (0..dims.sab()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = ValueFunction::new(dims, vec![first, mg.reward_raw()[dims.sab()..].to_vec()]).unwrap();
        let mu = MarkovPolicy::uniform(Side::Max, dims);
        let nu = MarkovPolicy::uniform(Side::Min, dims);
        let roll = Rollin::Exact { mg: &mg, mu: &mu, nu: &nu };
        assert_eq!(avg_bellman_error_nash(&roll, &f, 1, NashTarget::PureMaxMin).unwrap(), 0.0);
        assert_eq!(avg_bellman_error_br(&roll, &f, &mu, 1).unwrap(), 0.0);
    }

    #[test]
    fn sampled_estimates_agree_with_exact() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(4, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tables = (0..2).map(|_| (0..dims.sab()).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let f = ValueFunction::new(dims, tables).unwrap();
        let mu = MarkovPolicy::uniform(Side::Max, dims);
        let nu = MarkovPolicy::uniform(Side::Min, dims);
        let data = collect(&mg, &mu, &nu, 100_000, 9, 0, rng::tag::OLIVE_OUTER_ACT).unwrap();
        let exact = Rollin::Exact { mg: &mg, mu: &mu, nu: &nu };
        let sampled = Rollin::Sampled { mg: &mg, data: &data };
        for h in 0..2 {
            // Residuals lie in [−2, 1], so σ ≤ 1.5 and 3σ/√n ≤ 0.0143.
            let bound = 3.0 * 1.5 / libm::sqrt(100_000.0);
            let a = avg_bellman_error_nash(&exact, &f, h, NashTarget::PureMaxMin).unwrap();
            let b = avg_bellman_error_nash(&sampled, &f, h, NashTarget::PureMaxMin).unwrap();
            assert!((a - b).abs() <= bound, "{a} {b}");
            let a = avg_bellman_error_br(&exact, &f, &mu, h).unwrap();
            let b = avg_bellman_error_br(&sampled, &f, &mu, h).unwrap();
            assert!((a - b).abs() <= bound, "{a} {b}");
        }
        let empty: Vec<StepDataset> = (0..2).map(StepDataset::new).collect();
        let roll = Rollin::Sampled { mg: &mg, data: &empty };
        assert_eq!(avg_bellman_error_nash(&roll, &f, 0, NashTarget::PureMaxMin), Err(Error::EmptyDataset { step: 0 }));
    }

    #[test]
    fn br_residual_of_exact_best_response_vanishes() {
        let dims = Dims::new(3, 2, 2, 3).unwrap();
        let mg = crate::model::tests::random_mg(6, dims);
        let mu = MarkovPolicy::uniform(Side::Max, dims);
        let (nu, br) = best_response_to_max(&mg, &mu).unwrap();
        let g = ValueFunction::new(dims, br.q.clone()).unwrap();
        let roll = Rollin::Exact { mg: &mg, mu: &mu, nu: &nu };
        for h in 0..3 {
            assert!(avg_bellman_error_br(&roll, &g, &mu, h).unwrap().abs() < 1e-15);
        }
    }

    fn br_fixture(seed: u64) -> (TabularMG, MarkovPolicy, FunctionClass, f64) {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(seed, dims);
        let mu = MarkovPolicy::uniform(Side::Max, dims);
        let (_, br) = best_response_to_max(&mg, &mu).unwrap();
        // Halving step 0 keeps the greedy columns but makes the function a
        // strict underestimator, so it is tried first and then eliminated.
        let bad = ValueFunction::new(dims, scaled(&br.q, 0, 0.5)).unwrap();
        let good = ValueFunction::new(dims, br.q.clone()).unwrap();
        let class = FunctionClass::from_members(dims, vec![bad, good]).unwrap();
        (mg, mu, class, br.v(0, 0))
    }

    #[test]
    fn best_response_routine_on_singleton() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(7, dims);
        let mu = MarkovPolicy::uniform(Side::Max, dims);
        let (_, br) = best_response_to_max(&mg, &mu).unwrap();
        let g = FunctionClass::from_members(dims, vec![ValueFunction::new(dims, br.q.clone()).unwrap()]).unwrap();
        let out = olive_best_response(&mg, &g, &mu, &OliveParams::exact(0.01, 0.005, 5)).unwrap();
        assert_eq!(out.log.phases.len(), 1);
        let v = evaluate_pair(&mg, &mu, &out.nu).unwrap().v(0, 0);
        assert!((v - br.v(0, 0)).abs() < 1e-9);
    }

    #[test]
    fn best_response_routine_eliminates_underestimator() {
        let (mg, mu, class, v_br) = br_fixture(8);
        let out = olive_best_response(&mg, &class, &mu, &OliveParams::exact(0.01, 0.005, 5)).unwrap();
        let p = &out.log.phases;
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].f_index, 0);
        assert!(p[0].act_sum < -2.0 * 0.01);
        assert_eq!(p[0].activated_h, Some(0));
        assert_eq!(p[0].eliminated, 1);
        assert!(p[1].terminated);
        assert_eq!(out.g_index, 1);
        assert!((evaluate_pair(&mg, &mu, &out.nu).unwrap().v(0, 0) - v_br).abs() < 1e-9);
    }

    #[test]
    fn best_response_routine_sampled_mostly_matches() {
        let (mg, mu, class, _) = br_fixture(8);
        let mut ok = 0;
        for seed in 0..20 {
            let params = OliveParams {
                zeta_act: 0.01,
                zeta_elim: 0.02,
                n_act: 4000,
                n_elim: 4000,
                phases: 5,
                estimator: Estimator::Sampled,
                seed,
                target: NashTarget::PureMaxMin,
            };
            if let Ok(out) = olive_best_response(&mg, &class, &mu, &params) {
                if out.log.phases.len() == 2 && out.g_index == 1 {
                    ok += 1;
                }
            }
        }
        assert!(ok >= 18, "{ok}/20");
    }

    fn outer_fixture() -> (TabularMG, FunctionClass, FunctionClass) {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = pure_saddle_mg(11, dims);
        let star = nash_solve(&mg).unwrap();
        let bad = ValueFunction::new(dims, scaled(&star.values.q, 0, 1.5)).unwrap();
        let good = ValueFunction::new(dims, star.values.q.clone()).unwrap();
        let f = FunctionClass::from_members(dims, vec![bad, good.clone()]).unwrap();
        let g = FunctionClass::from_members(dims, vec![good]).unwrap();
        (mg, f, g)
    }

    #[test]
    fn outer_loop_terminates_on_star_singleton() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = pure_saddle_mg(11, dims);
        let star = nash_solve(&mg).unwrap();
        let good = FunctionClass::from_members(dims, vec![ValueFunction::new(dims, star.values.q.clone()).unwrap()]).unwrap();
        let p = OliveParams::exact(0.01, 0.005, 5);
        let out = run_olive_mg(&mg, &good, &good, &p, &p).unwrap();
        assert_eq!(out.log.phases.len(), 1);
        let gap = star.value_at(0) - best_response_to_max(&mg, &out.mu).unwrap().1.v(0, 0);
        assert!(gap <= 2.0 * 0.01 + 1e-9);
    }

    #[test]
    fn outer_loop_eliminates_overestimator_and_replays() {
        let (mg, f, g) = outer_fixture();
        let p = OliveParams::exact(0.01, 0.005, 5);
        let out = run_olive_mg(&mg, &f, &g, &p, &p).unwrap();
        assert_eq!(out.log.phases.len(), 2);
        assert_eq!(out.log.phases[0].f_index, 0);
        assert_eq!(out.log.phases[0].eliminated, 1);
        assert_eq!(out.f_index, 1);
        assert_eq!(run_olive_mg(&mg, &f, &g, &p, &p).unwrap(), out);

        let sampled = OliveParams { n_act: 500, n_elim: 500, estimator: Estimator::Sampled, seed: 3, ..p.clone() };
        let a = run_olive_mg(&mg, &f, &g, &sampled, &sampled);
        let b = run_olive_mg(&mg, &f, &g, &sampled, &sampled);
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustion_and_validation() {
        let (mg, f, g) = outer_fixture();
        let p = OliveParams::exact(0.01, 0.005, 1);
        assert_eq!(run_olive_mg(&mg, &f, &g, &p, &p), Err(Error::Exhausted { phases: 1 }));
        let bad = OliveParams::exact(0.0, 0.005, 1);
        assert!(matches!(run_olive_mg(&mg, &f, &g, &bad, &p), Err(Error::InvalidArgument(_))));
    }
}
