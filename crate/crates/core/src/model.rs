//! Tabular zero-sum Markov games and their exact dynamic-programming oracles.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix_game::{argmax, argmin, solve_zero_sum, Payoff, Side, DEFAULT_TOL};
use crate::rng::categorical;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Shape of a game (and of every table defined over it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub horizon: usize,
    pub states: usize,
    pub a: usize,
    pub b: usize,
}

impl Dims {
    pub fn new(horizon: usize, states: usize, a: usize, b: usize) -> Result<Self> {
        if horizon == 0 || states == 0 || a == 0 || b == 0 {
            return Err(Error::InvalidModel(format!(
                "all of H, S, A, B must be positive, got ({horizon}, {states}, {a}, {b})"
            )));
        }
        Ok(Self { horizon, states, a, b })
    }

    /// Entries in one step table `S × A × B`.
    #[inline]
    pub fn sab(&self) -> usize {
        self.states * self.a * self.b
    }

    #[inline]
    pub fn cell(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.a + a) * self.b + b
    }

    /// Inverse of [`Dims::cell`].
    #[inline]
    pub fn uncell(&self, cell: usize) -> (usize, usize, usize) {
        (cell / (self.a * self.b), (cell / self.b) % self.a, cell % self.b)
    }

    pub fn check_step(&self, h: usize) -> Result<()> {
        if h < self.horizon {
            Ok(())
        } else {
            Err(Error::BadStep { step: h, horizon: self.horizon })
        }
    }
}

/// An explicit finite-horizon zero-sum Markov game.
///
/// Rewards are stored already normalized so that every trajectory's total
/// reward lies in `[0, 1]`; this is checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMG {
    dims: Dims,
    /// `P_h(s'|s,a,b)` at `[h][cell][s']`.
    transition: Vec<f64>,
    /// `r_h(s,a,b)` at `[h][cell]`.
    reward: Vec<f64>,
    initial_state: usize,
}

impl TabularMG {
    pub fn new(dims: Dims, transition: Vec<f64>, reward: Vec<f64>, initial_state: usize) -> Result<Self> {
        let sab = dims.sab();
        if transition.len() != dims.horizon * sab * dims.states {
            return Err(Error::DimensionMismatch(format!(
                "transition needs {} entries, got {}",
                dims.horizon * sab * dims.states,
                transition.len()
            )));
        }
        if reward.len() != dims.horizon * sab {
            return Err(Error::DimensionMismatch(format!(
                "reward needs {} entries, got {}",
                dims.horizon * sab,
                reward.len()
            )));
        }
        if initial_state >= dims.states {
            return Err(Error::InvalidModel(format!(
                "initial state {initial_state} out of range for {} states",
                dims.states
            )));
        }
        if transition.iter().chain(&reward).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        for (row_id, row) in transition.chunks(dims.states).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > STOCHASTIC_TOL {
                let (h, cell) = (row_id / sab, row_id % sab);
                let (s, a, b) = dims.uncell(cell);
                return Err(Error::InvalidModel(format!(
                    "transition row (h={h}, s={s}, a={a}, b={b}) is not a distribution (sum {total})"
                )));
            }
        }
        if reward.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidModel("rewards must lie in [0, 1]".into()));
        }
        let mg = Self { dims, transition, reward, initial_state };
        let worst = mg.max_return();
        if worst > 1.0 + STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!(
                "some trajectory collects total reward {worst} > 1"
            )));
        }
        Ok(mg)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn transition_raw(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward_raw(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.reward[h * self.dims.sab() + self.dims.cell(s, a, b)]
    }

    /// `P_h(·|s,a,b)`.
    #[inline]
    pub fn next_dist(&self, h: usize, s: usize, a: usize, b: usize) -> &[f64] {
        let n = self.dims.states;
        let row = h * self.dims.sab() + self.dims.cell(s, a, b);
        &self.transition[row * n..(row + 1) * n]
    }

    /// `r_h(s,a,b) + Σ_{s'} P_h(s'|s,a,b) v(s')` for every cell of step `h`.
    pub fn backup(&self, h: usize, v_next: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let n = d.states;
        let base = h * d.sab();
        (0..d.sab())
            .map(|cell| {
                let row = &self.transition[(base + cell) * n..(base + cell + 1) * n];
                self.reward[base + cell] + row.iter().zip(v_next).map(|(p, v)| p * v).sum::<f64>()
            })
            .collect()
    }

    /// Largest total reward any path can collect (ignores probabilities).
    fn max_return(&self) -> f64 {
        let d = self.dims;
        let mut v = vec![0.0; d.states];
        for h in (0..d.horizon).rev() {
            let mut next = vec![f64::NEG_INFINITY; d.states];
            for s in 0..d.states {
                for a in 0..d.a {
                    for b in 0..d.b {
                        let tail = self
                            .next_dist(h, s, a, b)
                            .iter()
                            .zip(&v)
                            .filter(|(p, _)| **p > 0.0)
                            .map(|(_, v)| *v)
                            .fold(f64::NEG_INFINITY, f64::max);
                        next[s] = next[s].max(self.reward(h, s, a, b) + tail);
                    }
                }
            }
            v = next;
        }
        v.into_iter().fold(0.0, f64::max)
    }
}

/// A Markov policy for one player.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    side: Side,
    horizon: usize,
    states: usize,
    actions: usize,
    /// `[h][s][action]`.
    probs: Vec<f64>,
}

impl MarkovPolicy {
    pub fn new(side: Side, horizon: usize, states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * states * actions || actions == 0 {
            return Err(Error::DimensionMismatch(format!(
                "policy table needs {} entries, got {}",
                horizon * states * actions,
                probs.len()
            )));
        }
        for (i, row) in probs.chunks(actions).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row (h={}, s={}) is not on the simplex (sum {total})",
                    i / states,
                    i % states
                )));
            }
        }
        Ok(Self { side, horizon, states, actions, probs })
    }

    pub fn uniform(side: Side, dims: Dims) -> Self {
        let n = Self::side_actions(side, dims);
        let probs = vec![1.0 / n as f64; dims.horizon * dims.states * n];
        Self { side, horizon: dims.horizon, states: dims.states, actions: n, probs }
    }

    /// One action per `(h, s)`, given in `[h][s]` order.
    pub fn deterministic(side: Side, dims: Dims, choices: &[usize]) -> Result<Self> {
        let n = Self::side_actions(side, dims);
        if choices.len() != dims.horizon * dims.states {
            return Err(Error::DimensionMismatch(format!(
                "need {} choices, got {}",
                dims.horizon * dims.states,
                choices.len()
            )));
        }
        let mut probs = vec![0.0; choices.len() * n];
        for (i, &c) in choices.iter().enumerate() {
            if c >= n {
                return Err(Error::InvalidPolicy(format!("action {c} out of range {n}")));
            }
            probs[i * n + c] = 1.0;
        }
        Ok(Self { side, horizon: dims.horizon, states: dims.states, actions: n, probs })
    }

    /// Assembles a policy from per-`(h, s)` rows that are already on the simplex.
    pub(crate) fn from_rows_unchecked(side: Side, dims: Dims, probs: Vec<f64>) -> Self {
        let n = Self::side_actions(side, dims);
        debug_assert_eq!(probs.len(), dims.horizon * dims.states * n);
        Self { side, horizon: dims.horizon, states: dims.states, actions: n, probs }
    }

    fn side_actions(side: Side, dims: Dims) -> usize {
        match side {
            Side::Max => dims.a,
            Side::Min => dims.b,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.states + s) * self.actions;
        &self.probs[start..start + self.actions]
    }

    /// The action at `(h, s)` if the row is a vertex.
    pub fn pure_action(&self, h: usize, s: usize) -> Option<usize> {
        let row = self.row(h, s);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn check(&self, side: Side, dims: Dims) -> Result<()> {
        if self.side != side
            || self.horizon != dims.horizon
            || self.states != dims.states
            || self.actions != Self::side_actions(side, dims)
        {
            return Err(Error::DimensionMismatch(format!(
                "{:?}-side policy of shape ({}, {}, {}) does not fit {:?}-side of {:?}",
                self.side, self.horizon, self.states, self.actions, side, dims
            )));
        }
        Ok(())
    }
}

/// Value tables `V_h(s)` for `h ∈ 0..=H` (with `V_H ≡ 0`) and `Q_h(s,a,b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl ValueTables {
    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h][s]
    }
}

/// One step of experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub b: usize,
    pub r: f64,
    pub next: usize,
}

/// A full episode; `steps[h]` is the step-`h` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

/// The buffer `D_h` for one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDataset {
    pub h: usize,
    pub tuples: Vec<Transition>,
}

impl StepDataset {
    pub fn new(h: usize) -> Self {
        Self { h, tuples: Vec::new() }
    }

    pub fn check(&self, dims: Dims) -> Result<()> {
        dims.check_step(self.h)?;
        for t in &self.tuples {
            if t.s >= dims.states || t.a >= dims.a || t.b >= dims.b || t.next >= dims.states {
                return Err(Error::DimensionMismatch(format!("tuple {t:?} outside {dims:?}")));
            }
            if !(0.0..=1.0).contains(&t.r) {
                return Err(Error::InvalidArgument(format!("reward {} outside [0, 1]", t.r)));
            }
        }
        Ok(())
    }
}

/// Exact evaluation of a policy pair.
pub fn evaluate_pair(mg: &TabularMG, mu: &MarkovPolicy, nu: &MarkovPolicy) -> Result<ValueTables> {
    let d = mg.dims();
    mu.check(Side::Max, d)?;
    nu.check(Side::Min, d)?;
    let mut v = vec![vec![0.0; d.states]; d.horizon + 1];
    let mut q = vec![Vec::new(); d.horizon];
    for h in (0..d.horizon).rev() {
        let qh = mg.backup(h, &v[h + 1]);
        for s in 0..d.states {
            v[h][s] = expect_pair(&qh, d, s, mu.row(h, s), nu.row(h, s));
        }
        q[h] = qh;
    }
    Ok(ValueTables { v, q })
}

/// `μ(s)ᵀ table(s,·,·) ν(s)`.
pub(crate) fn expect_pair(table: &[f64], d: Dims, s: usize, mu: &[f64], nu: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, pa) in mu.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (b, pb) in nu.iter().enumerate() {
            inner += pb * table[d.cell(s, a, b)];
        }
        acc += pa * inner;
    }
    acc
}

/// `(μ(s)ᵀ table(s,·,b))_b`.
pub(crate) fn column_values(table: &[f64], d: Dims, s: usize, mu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.b];
    for (a, pa) in mu.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for (b, o) in out.iter_mut().enumerate() {
            *o += pa * table[d.cell(s, a, b)];
        }
    }
    out
}

/// `(table(s,a,·) ν(s))_a`.
pub(crate) fn row_values(table: &[f64], d: Dims, s: usize, nu: &[f64]) -> Vec<f64> {
    (0..d.a)
        .map(|a| nu.iter().enumerate().map(|(b, pb)| pb * table[d.cell(s, a, b)]).sum())
        .collect()
}

/// The min player's exact best response to `mu` and the tables of `V^{μ,†}`.
pub fn best_response_to_max(mg: &TabularMG, mu: &MarkovPolicy) -> Result<(MarkovPolicy, ValueTables)> {
    let d = mg.dims();
    mu.check(Side::Max, d)?;
    let mut v = vec![vec![0.0; d.states]; d.horizon + 1];
    let mut q = vec![Vec::new(); d.horizon];
    let mut choices = vec![0; d.horizon * d.states];
    for h in (0..d.horizon).rev() {
        let qh = mg.backup(h, &v[h + 1]);
        for s in 0..d.states {
            let (b, val) = argmin(&column_values(&qh, d, s, mu.row(h, s)));
            choices[h * d.states + s] = b;
            v[h][s] = val;
        }
        q[h] = qh;
    }
    let nu = MarkovPolicy::deterministic(Side::Min, d, &choices)?;
    Ok((nu, ValueTables { v, q }))
}

/// The max player's exact best response to `nu` and the tables of `V^{†,ν}`.
pub fn best_response_to_min(mg: &TabularMG, nu: &MarkovPolicy) -> Result<(MarkovPolicy, ValueTables)> {
    let d = mg.dims();
    nu.check(Side::Min, d)?;
    let mut v = vec![vec![0.0; d.states]; d.horizon + 1];
    let mut q = vec![Vec::new(); d.horizon];
    let mut choices = vec![0; d.horizon * d.states];
    for h in (0..d.horizon).rev() {
        let qh = mg.backup(h, &v[h + 1]);
        for s in 0..d.states {
            let (a, val) = argmax(&row_values(&qh, d, s, nu.row(h, s)));
            choices[h * d.states + s] = a;
            v[h][s] = val;
        }
        q[h] = qh;
    }
    let mu = MarkovPolicy::deterministic(Side::Max, d, &choices)?;
    Ok((mu, ValueTables { v, q }))
}

/// Nash equilibrium by backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    pub values: ValueTables,
    pub mu: MarkovPolicy,
    pub nu: MarkovPolicy,
}

impl NashSolution {
    /// `V⋆_0(s_1)`.
    pub fn value_at(&self, s: usize) -> f64 {
        self.values.v[0][s]
    }
}

pub fn nash_solve(mg: &TabularMG) -> Result<NashSolution> {
    let d = mg.dims();
    let mut v = vec![vec![0.0; d.states]; d.horizon + 1];
    let mut q = vec![Vec::new(); d.horizon];
    let mut mu = vec![0.0; d.horizon * d.states * d.a];
    let mut nu = vec![0.0; d.horizon * d.states * d.b];
    for h in (0..d.horizon).rev() {
        let qh = mg.backup(h, &v[h + 1]);
        for s in 0..d.states {
            let start = d.cell(s, 0, 0);
            let m = Payoff::new(d.a, d.b, qh[start..start + d.a * d.b].to_vec())?;
            let sol = solve_zero_sum(&m, DEFAULT_TOL)?;
            let row = h * d.states + s;
            mu[row * d.a..(row + 1) * d.a].copy_from_slice(&sol.mu);
            nu[row * d.b..(row + 1) * d.b].copy_from_slice(&sol.nu);
            v[h][s] = sol.value;
        }
        q[h] = qh;
    }
    Ok(NashSolution {
        values: ValueTables { v, q },
        mu: MarkovPolicy::from_rows_unchecked(Side::Max, d, mu),
        nu: MarkovPolicy::from_rows_unchecked(Side::Min, d, nu),
    })
}

/// Law of `s_h` for `h ∈ 0..=H` under the pair, started at the initial state.
pub fn state_occupancy(mg: &TabularMG, mu: &MarkovPolicy, nu: &MarkovPolicy) -> Result<Vec<Vec<f64>>> {
    let d = mg.dims();
    mu.check(Side::Max, d)?;
    nu.check(Side::Min, d)?;
    let mut out = Vec::with_capacity(d.horizon + 1);
    let mut cur = vec![0.0; d.states];
    cur[mg.initial_state()] = 1.0;
    for h in 0..d.horizon {
        let joint = joint_from_states(d, h, &cur, mu, nu);
        let next = push_forward(mg, h, &joint);
        out.push(cur);
        cur = next;
    }
    out.push(cur);
    Ok(out)
}

/// Law of `(s_h, a_h, b_h)` for `h ∈ 0..H`, as tables over cells.
pub fn joint_occupancy(mg: &TabularMG, mu: &MarkovPolicy, nu: &MarkovPolicy) -> Result<Vec<Vec<f64>>> {
    let states = state_occupancy(mg, mu, nu)?;
    let d = mg.dims();
    Ok((0..d.horizon).map(|h| joint_from_states(d, h, &states[h], mu, nu)).collect())
}

pub(crate) fn joint_from_states(d: Dims, h: usize, states: &[f64], mu: &MarkovPolicy, nu: &MarkovPolicy) -> Vec<f64> {
    let mut joint = vec![0.0; d.sab()];
    for (s, ps) in states.iter().enumerate() {
        if *ps == 0.0 {
            continue;
        }
        for (a, pa) in mu.row(h, s).iter().enumerate() {
            for (b, pb) in nu.row(h, s).iter().enumerate() {
                joint[d.cell(s, a, b)] = ps * pa * pb;
            }
        }
    }
    joint
}

pub(crate) fn push_forward(mg: &TabularMG, h: usize, joint: &[f64]) -> Vec<f64> {
    let d = mg.dims();
    let mut next = vec![0.0; d.states];
    for (cell, w) in joint.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let (s, a, b) = d.uncell(cell);
        for (n, p) in next.iter_mut().zip(mg.next_dist(h, s, a, b)) {
            *n += w * p;
        }
    }
    next
}

/// Samples one episode under the pair.
pub fn sample_episode<R: Rng + ?Sized>(
    mg: &TabularMG,
    mu: &MarkovPolicy,
    nu: &MarkovPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = mg.dims();
    mu.check(Side::Max, d)?;
    nu.check(Side::Min, d)?;
    let mut s = mg.initial_state();
    let mut steps = Vec::with_capacity(d.horizon);
    for h in 0..d.horizon {
        let t = step(mg, h, s, categorical(rng, mu.row(h, s)), categorical(rng, nu.row(h, s)), rng);
        s = t.next;
        steps.push(t);
    }
    Ok(Trajectory { steps })
}

/// Rolls in with the pair up to step `h`, then plays a uniform joint action
/// at `h` and returns only that tuple.
pub fn sample_option2<R: Rng + ?Sized>(
    mg: &TabularMG,
    mu: &MarkovPolicy,
    nu: &MarkovPolicy,
    h: usize,
    rng: &mut R,
) -> Result<Transition> {
    let d = mg.dims();
    d.check_step(h)?;
    mu.check(Side::Max, d)?;
    nu.check(Side::Min, d)?;
    let mut s = mg.initial_state();
    for t in 0..h {
        s = step(mg, t, s, categorical(rng, mu.row(t, s)), categorical(rng, nu.row(t, s)), rng).next;
    }
    let a = rng.gen_range(0..d.a);
    let b = rng.gen_range(0..d.b);
    Ok(step(mg, h, s, a, b, rng))
}

fn step<R: Rng + ?Sized>(mg: &TabularMG, h: usize, s: usize, a: usize, b: usize, rng: &mut R) -> Transition {
    let next = categorical(rng, mg.next_dist(h, s, a, b));
    Transition { s, a, b, r: mg.reward(h, s, a, b), next }
}
