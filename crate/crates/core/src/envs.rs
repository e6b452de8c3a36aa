//! Benchmark generators, the grid-class builder and the verifier for the
//! rock-paper-scissors counterexample to optimistic closure.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::function_class::{audit_completeness, audit_realizability, table_min_value, table_nash, FunctionClass, LinearClassSpec};
use crate::matrix_game::{solve_zero_sum, Payoff, DEFAULT_TOL};
use crate::model::{nash_solve, Dims, TabularMG};
use crate::rng;

/// Affine map between stored rewards and the units a game was written in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMap {
    pub scale: f64,
    pub offset: f64,
}

impl ScaleMap {
    pub fn to_original(&self, reward: f64) -> f64 {
        self.scale * reward + self.offset
    }

    pub fn to_reward(&self, original: f64) -> f64 {
        (original - self.offset) / self.scale
    }
}

/// Rock-paper-scissors with the max player on rows.
pub fn rps_payoff() -> Payoff {
    Payoff::from_rows(&[vec![0.0, 1.0, -1.0], vec![-1.0, 0.0, 1.0], vec![1.0, -1.0, 0.0]]).expect("static matrix")
}

/// One-step, one-state RPS with rewards `(M + 1)/2`.
pub fn make_rps() -> (TabularMG, ScaleMap) {
    let map = ScaleMap { scale: 2.0, offset: -1.0 };
    let dims = Dims::new(1, 1, 3, 3).expect("static dims");
    let reward = rps_payoff().entries().iter().map(|&m| map.to_reward(m)).collect();
    let mg = TabularMG::new(dims, vec![1.0; 9], reward, 0).expect("static game");
    (mg, map)
}

/// `M⋆` followed by its six single-entry perturbations.
pub fn make_perturbed_set() -> Vec<Payoff> {
    let base = rps_payoff().to_rows();
    let edits = [(0, 1, 1.1), (0, 2, -1.1), (1, 0, -1.1), (1, 2, 1.1), (2, 0, 1.1), (2, 1, -1.1)];
    let mut out = vec![rps_payoff()];
    for (a, b, x) in edits {
        let mut rows = base.clone();
        rows[a][b] = x;
        out.push(Payoff::from_rows(&rows).expect("static matrix"));
    }
    out
}

/// `(max_M max_a (Mν)_a, min_M min_b (μᵀM)_b)` helpers.
fn top_value(set: &[Payoff], nu: &[f64]) -> f64 {
    set.iter().flat_map(|m| m.row_values(nu)).fold(f64::NEG_INFINITY, f64::max)
}

fn bottom_value(set: &[Payoff], mu: &[f64]) -> f64 {
    set.iter().flat_map(|m| m.col_values(mu)).fold(f64::INFINITY, f64::min)
}

/// Slacks of a candidate: `μᵀM̄ν − max_{M,μ'} μ'ᵀMν` and
/// `min_{M,ν'} μᵀMν' − μᵀM̲ν`. Both nonnegative means it solves the
/// one-step optimistic/pessimistic sub-problem.
pub fn solution_slack(set: &[Payoff], upper: usize, lower: usize, mu: &[f64], nu: &[f64]) -> (f64, f64) {
    let max_slack = set[upper].bilinear(mu, nu) - top_value(set, nu);
    let min_slack = bottom_value(set, mu) - set[lower].bilinear(mu, nu);
    (max_slack, min_slack)
}

/// Tolerance used when accepting a candidate solution.
pub const SOLUTION_TOL: f64 = 1e-9;

/// One row of the deterministic-pair table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicCheck {
    pub a: usize,
    pub b: usize,
    pub upper: usize,
    pub lower: usize,
    /// `M̄[a][b] ≥ max_M max_{a'} M[a'][b]`.
    pub max_ok: bool,
    /// `M̲[a][b] ≤ min_M min_{b'} M[a][b']`.
    pub min_ok: bool,
}

/// Proof that no policy pair solves the sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Refutation {
    pub grid: f64,
    /// Grid denominator: points are `k/n` compositions.
    pub n: usize,
    pub lipschitz: f64,
    /// L1 covering radii of the two simplex grids.
    pub radius_nu: f64,
    pub radius_mu: f64,
    pub grid_points: usize,
    /// Smallest tie margin over the ν grid and where it occurs.
    pub margin_nu: f64,
    pub worst_nu: Vec<f64>,
    pub margin_mu: f64,
    pub worst_mu: Vec<f64>,
    /// Matrices not entrywise dominated from above (resp. below) by another.
    pub undominated_upper: Vec<usize>,
    pub undominated_lower: Vec<usize>,
    pub deterministic: Vec<DeterministicCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    Solution { upper: usize, lower: usize, mu: Vec<f64>, nu: Vec<f64>, max_slack: f64, min_slack: f64 },
    Refutation(Refutation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub solvable: bool,
    pub certificate: Certificate,
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn best_pair_for(set: &[Payoff], mu: &[f64], nu: &[f64]) -> (usize, usize) {
    let vals: Vec<f64> = set.iter().map(|m| m.bilinear(mu, nu)).collect();
    let upper = crate::matrix_game::argmax(&vals).0;
    let lower = crate::matrix_game::argmin(&vals).0;
    (upper, lower)
}

/// Calls `visit` on every vector of `c` nonnegative integers summing to `n`.
fn for_each_composition(n: usize, c: usize, visit: &mut dyn FnMut(&[usize])) {
    fn go(rest: usize, slot: usize, buf: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if slot + 1 == buf.len() {
            buf[slot] = rest;
            visit(buf);
            return;
        }
        for k in 0..=rest {
            buf[slot] = k;
            go(rest - k, slot + 1, buf, visit);
        }
    }
    let mut buf = vec![0; c];
    go(n, 0, &mut buf, visit);
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Largest and second-largest entries of `xs`.
fn top_two(xs: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &x in xs {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    (first, second)
}

/// Minimum over the grid of `min_M (top(ν) − second_M(ν))`, where rows are
/// read from `values(M, ν)` and `top` is the best row over the whole set.
fn grid_margin(set: &[Payoff], dim: usize, n: usize, values: &dyn Fn(&Payoff, &[f64]) -> Vec<f64>) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, vec![0.0; dim]);
    let mut point = vec![0.0; dim];
    for_each_composition(n, dim, &mut |ks| {
        for (p, &k) in point.iter_mut().zip(ks) {
            *p = k as f64 / n as f64;
        }
        let pairs: Vec<(f64, f64)> = set.iter().map(|m| top_two(&values(m, &point))).collect();
        let top = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let margin = pairs.iter().map(|p| top - p.1).fold(f64::INFINITY, f64::min);
        if margin < best.0 {
            best = (margin, point.clone());
        }
    });
    best
}

/// Grid size above which the refutation refuses to run.
pub const MAX_GRID_POINTS: usize = 20_000_000;

/// Decides whether some matrices `(M̄, M̲)` from `set` and a policy pair
/// `(μ, ν)` satisfy `μᵀM̄ν ≥ max_{M,μ'} μ'ᵀMν` and
/// `μᵀM̲ν ≤ min_{M,ν'} μᵀMν'`.
///
/// A solution is searched among the Nash pairs of every member and all
/// deterministic pairs. Failing that, the refutation shows
/// (i) for every ν no matrix has two rows tied at the top value, so μ must
/// be deterministic; (ii) the mirror statement for ν; (iii) no
/// deterministic pair works for any `(M̄, M̲)`. Step (i) evaluates the tie
/// margin on the grid `{k/n}` and extends it to the whole simplex: the
/// margin is `2L`-Lipschitz in L1, `L` the largest absolute entry, and the
/// grid's L1 covering radius is below `dim/n` (largest-remainder rounding
/// moves each coordinate by less than `1/n`).
pub fn verify_counterexample(set: &[Payoff], grid: f64) -> Result<CounterexampleReport> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("matrix set is empty".into()));
    }
    if !(grid > 0.0 && grid <= 1e-2) {
        return Err(Error::InvalidArgument(format!("grid resolution must lie in (0, 0.01], got {grid}")));
    }
    let (rows, cols) = (set[0].rows(), set[0].cols());
    if set.iter().any(|m| m.rows() != rows || m.cols() != cols) {
        return Err(Error::DimensionMismatch("all matrices must share a shape".into()));
    }

    let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for m in set {
        let p = solve_zero_sum(m, DEFAULT_TOL)?;
        candidates.push((p.mu, p.nu));
    }
    for a in 0..rows {
        for b in 0..cols {
            candidates.push((one_hot(rows, a), one_hot(cols, b)));
        }
    }
    for (mu, nu) in candidates {
        let (upper, lower) = best_pair_for(set, &mu, &nu);
        let (max_slack, min_slack) = solution_slack(set, upper, lower, &mu, &nu);
        if max_slack >= -SOLUTION_TOL && min_slack >= -SOLUTION_TOL {
            return Ok(CounterexampleReport {
                solvable: true,
                certificate: Certificate::Solution { upper, lower, mu, nu, max_slack, min_slack },
            });
        }
    }

    let n = libm::ceil(1.0 / grid) as usize;
    let points = binomial(n + cols - 1, cols - 1) + binomial(n + rows - 1, rows - 1);
    if points > MAX_GRID_POINTS as f64 {
        return Err(Error::TooLarge { what: "simplex grid", size: points as usize, cap: MAX_GRID_POINTS });
    }
    let lipschitz = set.iter().flat_map(|m| m.entries().iter().map(|x| x.abs())).fold(0.0, f64::max);
    let radius_nu = cols as f64 / n as f64;
    let radius_mu = rows as f64 / n as f64;

    let (margin_nu, worst_nu) = grid_margin(set, cols, n, &|m, nu| m.row_values(nu));
    // For the min player the roles flip: negate columns so "top" is the lowest.
    let (margin_mu, worst_mu) =
        grid_margin(set, rows, n, &|m, mu| m.col_values(mu).into_iter().map(|x| -x).collect());
    if !(margin_nu > 2.0 * lipschitz * radius_nu) || !(margin_mu > 2.0 * lipschitz * radius_mu) {
        return Err(Error::Inconclusive(format!(
            "tie margins {margin_nu:.3e} / {margin_mu:.3e} do not exceed the Lipschitz slack {:.3e} / {:.3e}; refine the grid",
            2.0 * lipschitz * radius_nu,
            2.0 * lipschitz * radius_mu
        )));
    }

    let mut deterministic = Vec::with_capacity(rows * cols * set.len() * set.len());
    for a in 0..rows {
        for b in 0..cols {
            let top = top_value(set, &one_hot(cols, b));
            let bottom = bottom_value(set, &one_hot(rows, a));
            for upper in 0..set.len() {
                for lower in 0..set.len() {
                    deterministic.push(DeterministicCheck {
                        a,
                        b,
                        upper,
                        lower,
                        max_ok: set[upper].get(a, b) >= top,
                        min_ok: set[lower].get(a, b) <= bottom,
                    });
                }
            }
        }
    }
    if deterministic.iter().any(|c| c.max_ok && c.min_ok) {
        return Err(Error::Inconclusive("a deterministic pair passes the exact test but not the candidate scan".into()));
    }

    let dominated = |i: usize, above: bool| {
        set.iter().enumerate().any(|(j, other)| {
            j != i
                && other != &set[i]
                && set[i].entries().iter().zip(other.entries()).all(|(x, y)| if above { x <= y } else { x >= y })
        })
    };
    Ok(CounterexampleReport {
        solvable: false,
        certificate: Certificate::Refutation(Refutation {
            grid,
            n,
            lipschitz,
            radius_nu,
            radius_mu,
            grid_points: points as usize,
            margin_nu,
            worst_nu,
            margin_mu,
            worst_mu,
            undominated_upper: (0..set.len()).filter(|&i| !dominated(i, true)).collect(),
            undominated_lower: (0..set.len()).filter(|&i| !dominated(i, false)).collect(),
            deterministic,
        }),
    })
}

/// A Dirichlet(1) draw, optionally thinned so each entry survives with
/// probability `1 − sparsity` (at least one entry always survives).
fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -libm::log(1.0 - rng.gen::<f64>())).collect();
    if sparsity > 0.0 {
        let keep = crate::matrix_game::argmax(&w).0;
        for (i, x) in w.iter_mut().enumerate() {
            if i != keep && rng.gen::<f64>() < sparsity {
                *x = 0.0;
            }
        }
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return one_hot(n, 0);
    }
    w.iter().map(|x| x / total).collect()
}

/// Random tabular game: Dirichlet transition rows and rewards uniform on
/// `[0, 1/H)`, started from state 0.
pub fn make_random_tabular(states: usize, a: usize, b: usize, horizon: usize, sparsity: f64, seed: u64) -> Result<TabularMG> {
    let dims = Dims::new(horizon, states, a, b)?;
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidArgument(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    let mut r = rng::stream(seed, 0, rng::tag::ENV);
    let rows = horizon * dims.sab();
    let mut transition = Vec::with_capacity(rows * states);
    let mut reward = Vec::with_capacity(rows);
    for _ in 0..rows {
        transition.extend(dirichlet_row(&mut r, states, sparsity));
        reward.push(r.gen::<f64>() / horizon as f64);
    }
    TabularMG::new(dims, transition, reward, 0)
}

/// Builds a game whose transitions are `Σ_i φ_i(s,a,b) ψ_h(i, ·)` and whose
/// rewards are `φᵀθ^r_h`.
///
/// `phi` is `[h][cell][i]` with rows on the probability simplex, `psi` is
/// `[h][i][s']` with distribution rows, `theta_r` is `[h][i]`.
pub fn linear_mg_from_parts(dims: Dims, d: usize, phi: &[f64], psi: &[f64], theta_r: &[f64]) -> Result<(TabularMG, LinearClassSpec)> {
    let (h_n, sab, s_n) = (dims.horizon, dims.sab(), dims.states);
    if phi.len() != h_n * sab * d || psi.len() != h_n * d * s_n || theta_r.len() != h_n * d {
        return Err(Error::DimensionMismatch("feature, latent or reward parameter shapes".into()));
    }
    let mut transition = Vec::with_capacity(h_n * sab * s_n);
    let mut reward = Vec::with_capacity(h_n * sab);
    for h in 0..h_n {
        for cell in 0..sab {
            let f = &phi[(h * sab + cell) * d..(h * sab + cell + 1) * d];
            for s2 in 0..s_n {
                transition.push((0..d).map(|i| f[i] * psi[(h * d + i) * s_n + s2]).sum());
            }
            reward.push(f.iter().zip(&theta_r[h * d..(h + 1) * d]).map(|(x, t)| x * t).sum());
        }
    }
    let mg = TabularMG::new(dims, transition, reward, 0)?;
    // Every Bellman image has parameter θ^r + ψV with entries in
    // [0, 1 + 1/H], so this radius keeps all of them in the ball.
    let radius = libm::sqrt(d as f64) * (1.0 + 1.0 / h_n as f64);
    let spec = LinearClassSpec::new(dims, d, phi.to_vec(), radius)?;
    Ok((mg, spec))
}

/// Latent-mixture linear game with Dirichlet features and latent rows and
/// `θ^r_h` uniform on `[0, 1/H]^d`.
pub fn make_linear_mg(d: usize, states: usize, a: usize, b: usize, horizon: usize, seed: u64) -> Result<(TabularMG, LinearClassSpec)> {
    let dims = Dims::new(horizon, states, a, b)?;
    if d == 0 {
        return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
    }
    let mut r = rng::stream(seed, 0, rng::tag::ENV);
    let phi: Vec<f64> = (0..horizon * dims.sab()).flat_map(|_| dirichlet_row(&mut r, d, 0.0)).collect();
    let psi: Vec<f64> = (0..horizon * d).flat_map(|_| dirichlet_row(&mut r, states, 0.0)).collect();
    let theta: Vec<f64> = (0..horizon * d).map(|_| r.gen::<f64>() / horizon as f64).collect();
    linear_mg_from_parts(dims, d, &phi, &psi, &theta)
}

/// Observations grouped into `m` latent blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub m: usize,
    /// Latent block of each observation.
    pub decoder: Vec<usize>,
    /// Unnormalized emission weight of each observation within its block.
    pub emission: Vec<f64>,
}

impl BlockSpec {
    pub fn new(m: usize, decoder: Vec<usize>, emission: Vec<f64>) -> Result<Self> {
        if m == 0 || decoder.len() != emission.len() {
            return Err(Error::DimensionMismatch("decoder and emission must cover the same observations".into()));
        }
        if decoder.iter().any(|&z| z >= m) {
            return Err(Error::InvalidArgument(format!("decoder maps outside 0..{m}")));
        }
        if emission.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("emission weights must be finite and nonnegative".into()));
        }
        for z in 0..m {
            let mass: f64 = decoder.iter().zip(&emission).filter(|(q, _)| **q == z).map(|(_, w)| w).sum();
            if !(mass > 0.0) {
                return Err(Error::InvalidArgument(format!("latent state {z} has no emission mass")));
            }
        }
        Ok(Self { m, decoder, emission })
    }

    /// `per_block` consecutive observations per latent state, uniform emission.
    pub fn uniform(m: usize, per_block: usize) -> Result<Self> {
        let n = m * per_block;
        Self::new(m, (0..n).map(|o| o / per_block.max(1)).collect(), vec![1.0; n])
    }

    pub fn observations(&self) -> usize {
        self.decoder.len()
    }
}

/// An observed game together with the latent game it collapses to.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMG {
    pub observed: TabularMG,
    pub latent: TabularMG,
}

/// Rich-observation game: a random latent game on `m` states, with each
/// next observation drawn from the emission inside the next latent block.
pub fn make_block_mg(spec: &BlockSpec, a: usize, b: usize, horizon: usize, seed: u64) -> Result<BlockMG> {
    let latent = make_random_tabular(spec.m, a, b, horizon, 0.0, seed)?;
    let n = spec.observations();
    let dims = Dims::new(horizon, n, a, b)?;
    let mass: Vec<f64> = (0..spec.m)
        .map(|z| spec.decoder.iter().zip(&spec.emission).filter(|(q, _)| **q == z).map(|(_, w)| w).sum())
        .collect();
    let emit: Vec<f64> = spec.emission.iter().zip(&spec.decoder).map(|(w, &z)| w / mass[z]).collect();
    let mut transition = Vec::with_capacity(horizon * dims.sab() * n);
    let mut reward = Vec::with_capacity(horizon * dims.sab());
    for h in 0..horizon {
        for o in 0..n {
            let z = spec.decoder[o];
            for x in 0..a {
                for y in 0..b {
                    let next = latent.next_dist(h, z, x, y);
                    transition.extend((0..n).map(|o2| next[spec.decoder[o2]] * emit[o2]));
                    reward.push(latent.reward(h, z, x, y));
                }
            }
        }
    }
    let start = spec
        .decoder
        .iter()
        .position(|&z| z == latent.initial_state())
        .ok_or_else(|| Error::InvalidArgument("initial latent state has no observation".into()))?;
    let observed = TabularMG::new(dims, transition, reward, start)?;
    Ok(BlockMG { observed, latent })
}

/// Knobs of the grid class builder.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularClassSpec {
    /// Value grid `{0, 1/g, …, 1}`.
    pub grid_levels: usize,
    /// Random grid tables per step before the mandatory members.
    pub random_per_step: usize,
    /// Closure passes (at most 3).
    pub closure_passes: usize,
    pub seed: u64,
    /// Cap on members and on closure target sets.
    pub cap: usize,
}

impl Default for TabularClassSpec {
    fn default() -> Self {
        Self { grid_levels: 12, random_per_step: 4, closure_passes: 3, seed: 0, cap: crate::function_class::DEFAULT_CAP }
    }
}

/// A generated class with its audited slack.
#[derive(Debug, Clone, PartialEq)]
pub struct GridClass {
    pub class: FunctionClass,
    /// Audited realizability distance.
    pub eps: f64,
    /// Closure passes actually run.
    pub passes: usize,
}

fn round_table(t: &[f64], g: usize) -> Vec<f64> {
    let g = g as f64;
    t.iter().map(|x| (libm::round(x * g) / g).clamp(0.0, 1.0)).collect()
}

fn bits(t: &[f64]) -> Vec<u64> {
    t.iter().map(|x| x.to_bits()).collect()
}

/// Adds `t` to `pool` unless an identical table is present.
fn intern(pool: &mut Vec<Vec<f64>>, seen: &mut BTreeSet<Vec<u64>>, t: Vec<f64>) -> bool {
    if seen.insert(bits(&t)) {
        pool.push(t);
        true
    } else {
        false
    }
}

/// Distinct Nash max-player rows (`S×A`, flattened) of a pool.
fn pool_policies(d: Dims, pool: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in pool {
        let rows = table_nash(d, t)?.mu;
        if seen.insert(bits(&rows)) {
            out.push(rows);
        }
    }
    Ok(out)
}

/// Product class of per-step grid tables.
///
/// Each step starts from `random_per_step` random tables with entries on
/// the grid and capped at `(H−h)/H`, plus the rounded `Q⋆_h`. A backward
/// pass then adds the rounded `Q^{μ,†}_h` for every combination of later
/// step policies the pools induce, so every member's best-response value
/// function has a grid neighbour. A pass that adds nothing stops the loop.
pub fn tabular_function_class(mg: &TabularMG, spec: &TabularClassSpec) -> Result<GridClass> {
    let d = mg.dims();
    let g = spec.grid_levels;
    if g == 0 || spec.closure_passes > 3 {
        return Err(Error::InvalidArgument("grid needs at least one level and at most 3 closure passes".into()));
    }
    let mut r = rng::stream(spec.seed, 0, rng::tag::CLASS);
    let mut pools: Vec<Vec<Vec<f64>>> = vec![Vec::new(); d.horizon];
    let mut seen: Vec<BTreeSet<Vec<u64>>> = vec![BTreeSet::new(); d.horizon];
    for h in 0..d.horizon {
        let top = (g * (d.horizon - h)) / d.horizon;
        for _ in 0..spec.random_per_step {
            let t = (0..d.sab()).map(|_| r.gen_range(0..=top) as f64 / g as f64).collect();
            intern(&mut pools[h], &mut seen[h], t);
        }
    }
    let star = nash_solve(mg)?;
    for h in 0..d.horizon {
        intern(&mut pools[h], &mut seen[h], round_table(&star.values.q[h], g));
    }

    let mut passes = 0;
    while passes < spec.closure_passes {
        passes += 1;
        let mut added = false;
        let mut later: Vec<Vec<f64>> = Vec::new();
        for h in (0..d.horizon).rev() {
            let targets: Vec<Vec<f64>> = if h + 1 == d.horizon {
                vec![mg.backup(h, &vec![0.0; d.states])]
            } else {
                let policies = pool_policies(d, &pools[h + 1])?;
                if policies.len() * later.len() > spec.cap {
                    return Err(Error::TooLarge { what: "closure target set", size: policies.len() * later.len(), cap: spec.cap });
                }
                let mut seen_t = BTreeSet::new();
                let mut out = Vec::new();
                for p in &policies {
                    for q in &later {
                        let t = mg.backup(h, &table_min_value(d, q, p));
                        if seen_t.insert(bits(&t)) {
                            out.push(t);
                        }
                    }
                }
                out
            };
            for t in &targets {
                added |= intern(&mut pools[h], &mut seen[h], round_table(t, g));
            }
            later = targets;
        }
        if !added {
            break;
        }
    }
    let class = FunctionClass::product(d, pools, spec.cap)?;
    let eps = audit_realizability(mg, &class)?;
    Ok(GridClass { class, eps, passes })
}

/// Regression class for a grid class: per step, the pool of `F` plus the
/// rounded images `T_h f_{h+1}` and `T^{μ}_h f'_{h+1}` for every pool
/// table and every induced policy at `h+1`. The pools are zipped, so the
/// member count stays the largest pool size. Returns the audited
/// completeness distance alongside.
pub fn bellman_closure_class(mg: &TabularMG, f: &FunctionClass, grid_levels: usize) -> Result<(FunctionClass, f64)> {
    let d = mg.dims();
    if f.dims() != d {
        return Err(Error::DimensionMismatch(format!("class is {:?}, game is {d:?}", f.dims())));
    }
    if grid_levels == 0 {
        return Err(Error::InvalidArgument("grid needs at least one level".into()));
    }
    let mut pools = Vec::with_capacity(d.horizon);
    for h in 0..d.horizon {
        let mut pool = Vec::new();
        let mut seen = BTreeSet::new();
        for id in 0..f.pool_len(h) {
            intern(&mut pool, &mut seen, f.pool_table(h, id).to_vec());
        }
        if h + 1 == d.horizon {
            intern(&mut pool, &mut seen, round_table(&mg.backup(h, &vec![0.0; d.states]), grid_levels));
        } else {
            for id in 0..f.pool_len(h + 1) {
                let t = mg.backup(h, &f.pool_nash(h + 1, id).values);
                intern(&mut pool, &mut seen, round_table(&t, grid_levels));
            }
            for pid in 0..f.policy_count(h + 1) {
                let rows = f.policy_rows(h + 1, pid);
                for id in 0..f.pool_len(h + 1) {
                    let t = mg.backup(h, &table_min_value(d, f.pool_table(h + 1, id), rows));
                    intern(&mut pool, &mut seen, round_table(&t, grid_levels));
                }
            }
        }
        pools.push(pool);
    }
    let g = FunctionClass::zipped(d, pools)?;
    let eps = audit_completeness(mg, f, &g)?;
    Ok((g, eps))
}

/// Short description used in error messages and reports.
pub fn describe(mg: &TabularMG) -> String {
    let d = mg.dims();
    format!("H={} S={} A={} B={}", d.horizon, d.states, d.a, d.b)
}
