//! Finite value-function classes and the operators defined on them.
//!
//! A [`FunctionClass`] is an ordered list of complete functions
//! `f = (f_0, …, f_{H-1})`. Internally every step keeps a pool of distinct
//! step tables (interned by bit pattern) and each member is a tuple of
//! table ids. Anything that depends on `f` only through one step table
//! (induced Nash values and policies, squared losses) is computed once per
//! pool entry instead of once per member.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix_game::{argmin, solve_zero_sum, Payoff, Side, DEFAULT_TOL};
use crate::model::{
    best_response_to_max, column_values, nash_solve, Dims, MarkovPolicy, TabularMG, ValueTables,
};

/// Default cap on materialized class sizes.
pub const DEFAULT_CAP: usize = 1_000_000;

/// A complete value function `f_h(s,a,b) ∈ [0,1]`, `f_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    dims: Dims,
    tables: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn new(dims: Dims, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != dims.horizon {
            return Err(Error::DimensionMismatch(format!(
                "need {} step tables, got {}",
                dims.horizon,
                tables.len()
            )));
        }
        for (h, t) in tables.iter().enumerate() {
            check_table(dims, t).map_err(|e| match e {
                Error::InvalidFunction(m) => Error::InvalidFunction(format!("step {h}: {m}")),
                other => other,
            })?;
        }
        Ok(Self { dims, tables })
    }

    pub fn constant(dims: Dims, c: f64) -> Result<Self> {
        Self::new(dims, vec![vec![c; dims.sab()]; dims.horizon])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn table(&self, h: usize) -> &[f64] {
        &self.tables[h]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.tables[h][self.dims.cell(s, a, b)]
    }
}

fn check_table(dims: Dims, t: &[f64]) -> Result<()> {
    if t.len() != dims.sab() {
        return Err(Error::DimensionMismatch(format!(
            "step table needs {} entries, got {}",
            dims.sab(),
            t.len()
        )));
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if t.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidFunction("values must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Per-state saddle data of one step table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableNash {
    /// `V(s)`, one entry per state.
    pub values: Vec<f64>,
    /// Max-side saddle rows, `S × A`.
    pub mu: Vec<f64>,
    /// Min-side saddle rows, `S × B`.
    pub nu: Vec<f64>,
}

/// Solves the matrix game `table(s,·,·)` at every state.
pub fn table_nash(d: Dims, table: &[f64]) -> Result<TableNash> {
    let mut values = Vec::with_capacity(d.states);
    let mut mu = Vec::with_capacity(d.states * d.a);
    let mut nu = Vec::with_capacity(d.states * d.b);
    for s in 0..d.states {
        let start = d.cell(s, 0, 0);
        let m = Payoff::new(d.a, d.b, table[start..start + d.a * d.b].to_vec())?;
        let sol = solve_zero_sum(&m, DEFAULT_TOL)?;
        values.push(sol.value);
        mu.extend(sol.mu);
        nu.extend(sol.nu);
    }
    Ok(TableNash { values, mu, nu })
}

/// `min_b μ(s)ᵀ table(s,·,b)` per state, for `S × A` rows `mu`.
pub fn table_min_value(d: Dims, table: &[f64], mu: &[f64]) -> Vec<f64> {
    (0..d.states)
        .map(|s| argmin(&column_values(table, d, s, &mu[s * d.a..(s + 1) * d.a])).1)
        .collect()
}

/// Greedy min-side column per state (lowest index on ties).
pub fn table_greedy(d: Dims, table: &[f64], mu: &[f64]) -> Vec<usize> {
    (0..d.states)
        .map(|s| argmin(&column_values(table, d, s, &mu[s * d.a..(s + 1) * d.a])).0)
        .collect()
}

/// `max_{cells} |x − y|`.
pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max)
}

fn policy_step_rows(mu: &MarkovPolicy, d: Dims, h: usize) -> Vec<f64> {
    (0..d.states).flat_map(|s| mu.row(h, s).iter().copied()).collect()
}

/// The max-side policy induced by `f`: the saddle row of `f_h(s,·,·)`.
pub fn induced_nash_policy(f: &ValueFunction) -> Result<MarkovPolicy> {
    let d = f.dims;
    let mut probs = Vec::with_capacity(d.horizon * d.states * d.a);
    for t in &f.tables {
        probs.extend(table_nash(d, t)?.mu);
    }
    Ok(MarkovPolicy::from_rows_unchecked(Side::Max, d, probs))
}

/// `V_{f,h}(s)`; the `q` field holds `f` itself.
pub fn induced_nash_value(f: &ValueFunction) -> Result<ValueTables> {
    let d = f.dims;
    let mut v = Vec::with_capacity(d.horizon + 1);
    for t in &f.tables {
        v.push(table_nash(d, t)?.values);
    }
    v.push(vec![0.0; d.states]);
    Ok(ValueTables { v, q: f.tables.clone() })
}

/// `V^μ_{f,h}(s) = min_ν μ_h(s)ᵀ f_h(s,·,·) ν`.
pub fn induced_min_value(f: &ValueFunction, mu: &MarkovPolicy) -> Result<ValueTables> {
    let d = f.dims;
    mu.check(Side::Max, d)?;
    let mut v: Vec<Vec<f64>> = (0..d.horizon)
        .map(|h| table_min_value(d, &f.tables[h], &policy_step_rows(mu, d, h)))
        .collect();
    v.push(vec![0.0; d.states]);
    Ok(ValueTables { v, q: f.tables.clone() })
}

/// `ν_{h}(s) = argmin_ν μ_h(s)ᵀ g_h(s,·,·) ν` as a deterministic policy.
pub fn greedy_min_policy(mu: &MarkovPolicy, g: &ValueFunction) -> Result<MarkovPolicy> {
    let d = g.dims;
    mu.check(Side::Max, d)?;
    let mut choices = Vec::with_capacity(d.horizon * d.states);
    for h in 0..d.horizon {
        choices.extend(table_greedy(d, &g.tables[h], &policy_step_rows(mu, d, h)));
    }
    MarkovPolicy::deterministic(Side::Min, d, &choices)
}

/// `(T_h f)(s,a,b) = r_h + E_{s'} V_{f,h+1}(s')`.
pub fn nash_bellman(mg: &TabularMG, f: &ValueFunction, h: usize) -> Result<Vec<f64>> {
    let d = mg.dims();
    check_same(d, f.dims)?;
    d.check_step(h)?;
    let v_next = if h + 1 < d.horizon { table_nash(d, &f.tables[h + 1])?.values } else { vec![0.0; d.states] };
    Ok(mg.backup(h, &v_next))
}

/// `(T^μ_h f)(s,a,b) = r_h + E_{s'} V^μ_{f,h+1}(s')`.
pub fn mu_bellman(mg: &TabularMG, f: &ValueFunction, mu: &MarkovPolicy, h: usize) -> Result<Vec<f64>> {
    let d = mg.dims();
    check_same(d, f.dims)?;
    d.check_step(h)?;
    mu.check(Side::Max, d)?;
    let v_next = if h + 1 < d.horizon {
        table_min_value(d, &f.tables[h + 1], &policy_step_rows(mu, d, h + 1))
    } else {
        vec![0.0; d.states]
    };
    Ok(mg.backup(h, &v_next))
}

fn check_same(a: Dims, b: Dims) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{a:?} vs {b:?}")))
    }
}

/// Pool of distinct tables at one step, with their saddle data.
#[derive(Debug, Clone, PartialEq)]
struct StepPool {
    tables: Vec<Vec<f64>>,
    nash: Vec<TableNash>,
    /// Interned max-side policy id per table.
    policy: Vec<u32>,
    policies: Vec<Vec<f64>>,
}

/// An ordered finite class of value functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionClass {
    dims: Dims,
    pools: Vec<StepPool>,
    /// `[member][h]` table ids.
    members: Vec<u32>,
}

fn intern(map: &mut BTreeMap<Vec<u64>, u32>, store: &mut Vec<Vec<f64>>, t: &[f64]) -> u32 {
    let key: Vec<u64> = t.iter().map(|x| x.to_bits()).collect();
    *map.entry(key).or_insert_with(|| {
        store.push(t.to_vec());
        (store.len() - 1) as u32
    })
}

impl FunctionClass {
    /// A class listing `members` in order.
    pub fn from_members(dims: Dims, members: Vec<ValueFunction>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyClass);
        }
        let mut maps = vec![BTreeMap::new(); dims.horizon];
        let mut stores = vec![Vec::new(); dims.horizon];
        let mut ids = Vec::with_capacity(members.len() * dims.horizon);
        for f in &members {
            check_same(dims, f.dims)?;
            for h in 0..dims.horizon {
                ids.push(intern(&mut maps[h], &mut stores[h], &f.tables[h]));
            }
        }
        Self::assemble(dims, stores, ids)
    }

    /// Per-step pools plus explicit member id tuples (`[member][h]`).
    pub fn from_pools(dims: Dims, pools: Vec<Vec<Vec<f64>>>, members: Vec<Vec<u32>>) -> Result<Self> {
        if pools.len() != dims.horizon {
            return Err(Error::DimensionMismatch(format!("need {} pools, got {}", dims.horizon, pools.len())));
        }
        if members.is_empty() {
            return Err(Error::EmptyClass);
        }
        for pool in &pools {
            for t in pool {
                check_table(dims, t)?;
            }
        }
        // Re-intern so duplicate pool entries collapse.
        let mut maps = vec![BTreeMap::new(); dims.horizon];
        let mut stores = vec![Vec::new(); dims.horizon];
        let remap: Vec<Vec<u32>> = pools
            .iter()
            .enumerate()
            .map(|(h, pool)| pool.iter().map(|t| intern(&mut maps[h], &mut stores[h], t)).collect())
            .collect();
        let mut ids = Vec::with_capacity(members.len() * dims.horizon);
        for m in &members {
            if m.len() != dims.horizon {
                return Err(Error::DimensionMismatch("member id tuple has wrong length".into()));
            }
            for (h, &id) in m.iter().enumerate() {
                let Some(&new) = remap[h].get(id as usize) else {
                    return Err(Error::InvalidArgument(format!("table id {id} out of range at step {h}")));
                };
                ids.push(new);
            }
        }
        Self::assemble(dims, stores, ids)
    }

    /// The product `F_0 × ⋯ × F_{H-1}`, members in lexicographic id order.
    pub fn product(dims: Dims, pools: Vec<Vec<Vec<f64>>>, cap: usize) -> Result<Self> {
        if pools.len() != dims.horizon {
            return Err(Error::DimensionMismatch(format!("need {} pools, got {}", dims.horizon, pools.len())));
        }
        let mut size: usize = 1;
        for p in &pools {
            if p.is_empty() {
                return Err(Error::EmptyClass);
            }
            size = size.saturating_mul(p.len());
        }
        if size > cap {
            return Err(Error::TooLarge { what: "product class", size, cap });
        }
        let members = lexicographic(&pools.iter().map(Vec::len).collect::<Vec<_>>());
        Self::from_pools(dims, pools, members)
    }

    /// Member `i` takes table `i mod |pool_h|` at step `h`; every pool entry
    /// appears in some member. Only per-step pools matter for the auxiliary
    /// class of the confidence sets, so this is the compact way to list them.
    pub fn zipped(dims: Dims, pools: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if pools.iter().any(Vec::is_empty) {
            return Err(Error::EmptyClass);
        }
        let n = pools.iter().map(Vec::len).max().unwrap_or(0);
        let members = (0..n)
            .map(|i| pools.iter().map(|p| (i % p.len()) as u32).collect())
            .collect();
        Self::from_pools(dims, pools, members)
    }

    fn assemble(dims: Dims, stores: Vec<Vec<Vec<f64>>>, members: Vec<u32>) -> Result<Self> {
        let mut pools = Vec::with_capacity(dims.horizon);
        for tables in stores {
            let mut nash = Vec::with_capacity(tables.len());
            let mut pmap = BTreeMap::new();
            let mut policies = Vec::new();
            let mut policy = Vec::with_capacity(tables.len());
            for t in &tables {
                let n = table_nash(dims, t)?;
                policy.push(intern(&mut pmap, &mut policies, &n.mu));
                nash.push(n);
            }
            pools.push(StepPool { tables, nash, policy, policies });
        }
        Ok(Self { dims, pools, members })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.members.len() / self.dims.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Table id of member `i` at step `h`.
    #[inline]
    pub fn table_id(&self, i: usize, h: usize) -> usize {
        self.members[i * self.dims.horizon + h] as usize
    }

    pub fn member_ids(&self, i: usize) -> &[u32] {
        &self.members[i * self.dims.horizon..(i + 1) * self.dims.horizon]
    }

    /// Distinct tables at step `h`.
    pub fn pool_len(&self, h: usize) -> usize {
        self.pools[h].tables.len()
    }

    pub fn pool_table(&self, h: usize, id: usize) -> &[f64] {
        &self.pools[h].tables[id]
    }

    pub fn pool_nash(&self, h: usize, id: usize) -> &TableNash {
        &self.pools[h].nash[id]
    }

    /// Interned induced-policy id of table `id` at step `h`.
    pub fn pool_policy_id(&self, h: usize, id: usize) -> usize {
        self.pools[h].policy[id] as usize
    }

    /// Number of distinct induced step policies at `h`.
    pub fn policy_count(&self, h: usize) -> usize {
        self.pools[h].policies.len()
    }

    /// Max-side rows (`S × A`) of interned policy `pid` at step `h`.
    pub fn policy_rows(&self, h: usize, pid: usize) -> &[f64] {
        &self.pools[h].policies[pid]
    }

    /// `ln Π_h |pool_h|`: the log-cardinality of the product of the pools.
    pub fn log_product_size(&self) -> f64 {
        self.pools.iter().map(|p| libm::log(p.tables.len() as f64)).sum()
    }

    pub fn member(&self, i: usize) -> ValueFunction {
        let tables = (0..self.dims.horizon).map(|h| self.pool_table(h, self.table_id(i, h)).to_vec()).collect();
        ValueFunction { dims: self.dims, tables }
    }

    /// `V_{f_i,0}(s)`.
    pub fn start_value(&self, i: usize, s: usize) -> f64 {
        self.pool_nash(0, self.table_id(i, 0)).values[s]
    }

    pub fn induced_policy(&self, i: usize) -> MarkovPolicy {
        let d = self.dims;
        let mut probs = Vec::with_capacity(d.horizon * d.states * d.a);
        for h in 0..d.horizon {
            probs.extend_from_slice(&self.pool_nash(h, self.table_id(i, h)).mu);
        }
        MarkovPolicy::from_rows_unchecked(Side::Max, d, probs)
    }

    /// Interned policy ids of `μ_{f_i}` per step.
    pub fn policy_key(&self, i: usize) -> Vec<u32> {
        (0..self.dims.horizon).map(|h| self.pools[h].policy[self.table_id(i, h)]).collect()
    }

    /// Closest pool entry at step `h` in sup norm (lowest id on ties).
    pub fn project_step(&self, h: usize, target: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (id, t) in self.pools[h].tables.iter().enumerate() {
            let dist = sup_dist(t, target);
            if dist < best.1 {
                best = (id, dist);
            }
        }
        best
    }

    /// `argmin_{f ∈ F} max_h ‖f_h − targets_h‖_∞`, lowest index on ties.
    pub fn project_tables(&self, targets: &[Vec<f64>]) -> (usize, f64) {
        let d = self.dims;
        let step_dist: Vec<Vec<f64>> = (0..d.horizon)
            .map(|h| self.pools[h].tables.iter().map(|t| sup_dist(t, &targets[h])).collect())
            .collect();
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let dist = (0..d.horizon).map(|h| step_dist[h][self.table_id(i, h)]).fold(0.0, f64::max);
            if dist < best.1 {
                best = (i, dist);
            }
        }
        best
    }
}

fn lexicographic(sizes: &[usize]) -> Vec<Vec<u32>> {
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0u32; sizes.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for k in (0..sizes.len()).rev() {
            cur[k] += 1;
            if (cur[k] as usize) < sizes[k] {
                break;
            }
            cur[k] = 0;
        }
    }
    out
}

/// `P_F(g)`: index of the sup-norm closest member and the distance.
pub fn project(class: &FunctionClass, g: &ValueFunction) -> Result<(usize, f64)> {
    check_same(class.dims, g.dims)?;
    Ok(class.project_tables(&g.tables))
}

/// Linear features `φ_h(s,a,b) ∈ ℝ^d` and a parameter ball `B_d(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassSpec {
    pub dims: Dims,
    pub d: usize,
    /// `[h][cell][i]`.
    pub features: Vec<f64>,
    pub radius: f64,
}

impl LinearClassSpec {
    pub fn new(dims: Dims, d: usize, features: Vec<f64>, radius: f64) -> Result<Self> {
        if d == 0 || features.len() != dims.horizon * dims.sab() * d {
            return Err(Error::DimensionMismatch(format!(
                "features need {} entries, got {}",
                dims.horizon * dims.sab() * d,
                features.len()
            )));
        }
        if !(radius > 0.0) || features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("radius must be positive and features finite".into()));
        }
        for phi in features.chunks(d) {
            let n2: f64 = phi.iter().map(|x| x * x).sum();
            if n2 > 1.0 + 1e-12 {
                return Err(Error::InvalidArgument(format!("feature norm {} exceeds 1", libm::sqrt(n2))));
            }
        }
        Ok(Self { dims, d, features, radius })
    }

    pub fn feature(&self, h: usize, cell: usize) -> &[f64] {
        let start = (h * self.dims.sab() + cell) * self.d;
        &self.features[start..start + self.d]
    }

    /// `clamp(φ_h(·)ᵀθ, 0, 1)` over all cells of step `h`.
    pub fn table(&self, h: usize, theta: &[f64]) -> Vec<f64> {
        (0..self.dims.sab())
            .map(|c| {
                let x: f64 = self.feature(h, c).iter().zip(theta).map(|(p, t)| p * t).sum();
                x.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Lattice of step `eps/√d` over `[−R, R]^d`, last point per axis
    /// clamped to `R`, lattice points outside the ball projected onto it.
    pub fn theta_grid(&self, eps: f64) -> Vec<Vec<f64>> {
        let r = self.radius;
        let delta = eps / libm::sqrt(self.d as f64);
        let per_axis = libm::ceil(2.0 * r / delta) as usize + 1;
        let axis: Vec<f64> = (0..per_axis).map(|i| (-r + i as f64 * delta).min(r)).collect();
        lexicographic(&vec![per_axis; self.d])
            .into_iter()
            .map(|ix| {
                let mut theta: Vec<f64> = ix.iter().map(|&i| axis[i as usize]).collect();
                let norm = libm::sqrt(theta.iter().map(|x| x * x).sum::<f64>());
                if norm > r {
                    theta.iter_mut().for_each(|x| *x *= r / norm);
                }
                theta
            })
            .collect()
    }
}

/// A finite `eps`-cover of the clamped linear class, as the product of
/// per-step lattices.
pub fn epsilon_cover(spec: &LinearClassSpec, eps: f64, cap: usize) -> Result<FunctionClass> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let delta = eps / libm::sqrt(spec.d as f64);
    let per_axis = libm::ceil(2.0 * spec.radius / delta) + 1.0;
    let per_step = libm::pow(per_axis, spec.d as f64);
    let total = libm::pow(per_step, spec.dims.horizon as f64);
    if !(total <= cap as f64) {
        return Err(Error::TooLarge {
            what: "epsilon cover",
            size: if total.is_finite() && total < usize::MAX as f64 { total as usize } else { usize::MAX },
            cap,
        });
    }
    let grid = spec.theta_grid(eps);
    let pools: Vec<Vec<Vec<f64>>> =
        (0..spec.dims.horizon).map(|h| grid.iter().map(|t| spec.table(h, t)).collect()).collect();
    FunctionClass::product(spec.dims, pools, cap)
}

/// Largest projection distance of `Q⋆` and of every `Q^{μ_f,†}` onto `F`.
pub fn audit_realizability(mg: &TabularMG, class: &FunctionClass) -> Result<f64> {
    check_same(mg.dims(), class.dims)?;
    let star = nash_solve(mg)?;
    let mut worst = class.project_tables(&star.values.q).1;
    let mut seen = BTreeMap::new();
    for i in 0..class.len() {
        let key = class.policy_key(i);
        if seen.contains_key(&key) {
            continue;
        }
        let (_, br) = best_response_to_max(mg, &class.induced_policy(i))?;
        let dist = class.project_tables(&br.q).1;
        worst = worst.max(dist);
        seen.insert(key, dist);
    }
    Ok(worst)
}

/// Largest projection distance onto `G_h` of `T_h f_{h+1}` and
/// `T^{μ_f}_h f'_{h+1}` over `f, f' ∈ F` and all steps.
pub fn audit_completeness(mg: &TabularMG, f: &FunctionClass, g: &FunctionClass) -> Result<f64> {
    let d = mg.dims();
    check_same(d, f.dims)?;
    check_same(d, g.dims)?;
    let mut worst: f64 = 0.0;
    for h in 0..d.horizon {
        if h + 1 == d.horizon {
            worst = worst.max(g.project_step(h, &mg.backup(h, &vec![0.0; d.states])).1);
            continue;
        }
        for id in 0..f.pool_len(h + 1) {
            let target = mg.backup(h, &f.pool_nash(h + 1, id).values);
            worst = worst.max(g.project_step(h, &target).1);
        }
        for pid in 0..f.policy_count(h + 1) {
            let rows = f.policy_rows(h + 1, pid);
            for id in 0..f.pool_len(h + 1) {
                let v = table_min_value(d, f.pool_table(h + 1, id), rows);
                worst = worst.max(g.project_step(h, &mg.backup(h, &v)).1);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_game::duality_gap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_function(rng: &mut ChaCha8Rng, dims: Dims) -> ValueFunction {
        let tables = (0..dims.horizon).map(|_| (0..dims.sab()).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        ValueFunction::new(dims, tables).unwrap()
    }

    fn rps_table() -> Vec<f64> {
        [0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0].iter().map(|x| (x + 1.0) / 2.0).collect()
    }

    #[test]
    fn zero_function_gives_lexicographic_vertex() {
        let dims = Dims::new(2, 2, 3, 2).unwrap();
        let f = ValueFunction::constant(dims, 0.0).unwrap();
        let mu = induced_nash_policy(&f).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                assert_eq!(mu.row(h, s), &[1.0, 0.0, 0.0]);
            }
        }
        let v = induced_nash_value(&f).unwrap();
        assert!(v.v.iter().flatten().all(|x| *x == 0.0));
        let g = greedy_min_policy(&mu, &f).unwrap();
        assert_eq!(g.pure_action(1, 1), Some(0));
    }

    #[test]
    fn rps_state_induces_uniform_policy() {
        let dims = Dims::new(1, 1, 3, 3).unwrap();
        let f = ValueFunction::new(dims, vec![rps_table()]).unwrap();
        let mu = induced_nash_policy(&f).unwrap();
        for p in mu.row(0, 0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!((induced_nash_value(&f).unwrap().v(0, 0) - 0.5).abs() < 1e-9);
        assert_eq!(greedy_min_policy(&MarkovPolicy::uniform(Side::Max, dims), &f).unwrap().pure_action(0, 0), Some(0));
    }

    #[test]
    fn saddle_identities_on_random_functions() {
        let dims = Dims::new(2, 3, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let f = random_function(&mut rng, dims);
            let mu = induced_nash_policy(&f).unwrap();
            let vf = induced_nash_value(&f).unwrap();
            let vmu = induced_min_value(&f, &mu).unwrap();
            for h in 0..2 {
                let nash = table_nash(dims, f.table(h)).unwrap();
                for s in 0..3 {
                    assert!((vf.v(h, s) - vmu.v(h, s)).abs() <= 2e-9);
                    let start = dims.cell(s, 0, 0);
                    let m = Payoff::new(3, 3, f.table(h)[start..start + 9].to_vec()).unwrap();
                    let gap = duality_gap(&m, mu.row(h, s), &nash.nu[s * 3..s * 3 + 3]).unwrap();
                    assert!(gap <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn grid_oracle_agrees_with_induced_value() {
        let dims = Dims::new(1, 1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let f = random_function(&mut rng, dims);
            let t = f.table(0);
            let mut best = f64::NEG_INFINITY;
            for k in 0..=1_000_000 {
                let p = k as f64 / 1_000_000.0;
                let c0 = p * t[0] + (1.0 - p) * t[2];
                let c1 = p * t[1] + (1.0 - p) * t[3];
                best = best.max(c0.min(c1));
            }
            assert!((induced_nash_value(&f).unwrap().v(0, 0) - best).abs() < 1e-6);
        }
    }

    #[test]
    fn induced_min_value_scans_columns() {
        let dims = Dims::new(1, 2, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_function(&mut rng, dims);
        let mu = MarkovPolicy::new(Side::Max, 1, 2, 3, vec![0.2, 0.5, 0.3, 1.0, 0.0, 0.0]).unwrap();
        let v = induced_min_value(&f, &mu).unwrap();
        for s in 0..2 {
            let mut best = f64::INFINITY;
            for b in 0..4 {
                let x: f64 = (0..3).map(|a| mu.row(0, s)[a] * f.get(0, s, a, b)).sum();
                best = best.min(x);
            }
            assert_eq!(v.v(0, s), best);
        }
    }

    #[test]
    fn bellman_operators() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(4, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_function(&mut rng, dims);
        // Last step backs up the terminal zero.
        assert_eq!(nash_bellman(&mg, &f, 1).unwrap(), mg.reward_raw()[dims.sab()..].to_vec());
        let mu = induced_nash_policy(&f).unwrap();
        let t = nash_bellman(&mg, &f, 0).unwrap();
        let tm = mu_bellman(&mg, &f, &mu, 0).unwrap();
        assert!(sup_dist(&t, &tm) <= 2e-9);
        assert_eq!(nash_bellman(&mg, &f, 2), Err(Error::BadStep { step: 2, horizon: 2 }));
    }

    #[test]
    fn nash_bellman_matches_monte_carlo() {
        let dims = Dims::new(2, 3, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(12, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_function(&mut rng, dims);
        let exact = nash_bellman(&mg, &f, 0).unwrap();
        let v1 = induced_nash_value(&f).unwrap();
        let cell = dims.cell(1, 1, 0);
        let (s, a, b) = dims.uncell(cell);
        let mut r = crate::rng::stream(1, 0, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let next = crate::rng::categorical(&mut r, mg.next_dist(0, s, a, b));
                mg.reward(0, s, a, b) + v1.v(1, next)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!((mean - exact[cell]).abs() <= 3.0 * libm::sqrt(var / n as f64) + 1e-12);
    }

    #[test]
    fn projection_exhaustive_and_idempotent() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let members: Vec<ValueFunction> = (0..20).map(|_| random_function(&mut rng, dims)).collect();
        let class = FunctionClass::from_members(dims, members.clone()).unwrap();
        for (i, m) in members.iter().enumerate() {
            assert_eq!(project(&class, m).unwrap(), (i, 0.0));
        }
        let g = random_function(&mut rng, dims);
        let mut scan = (0, f64::INFINITY);
        for (i, m) in members.iter().enumerate() {
            let dist = (0..2).map(|h| sup_dist(m.table(h), g.table(h))).fold(0.0, f64::max);
            if dist < scan.1 {
                scan = (i, dist);
            }
        }
        assert_eq!(project(&class, &g).unwrap(), scan);
        let single = FunctionClass::from_members(dims, vec![members[3].clone()]).unwrap();
        assert_eq!(project(&single, &g).unwrap().0, 0);
    }

    #[test]
    fn interning_shares_tables() {
        let dims = Dims::new(2, 1, 1, 1).unwrap();
        let a = ValueFunction::new(dims, vec![vec![0.5], vec![0.1]]).unwrap();
        let b = ValueFunction::new(dims, vec![vec![0.5], vec![0.2]]).unwrap();
        let class = FunctionClass::from_members(dims, vec![a.clone(), b, a.clone()]).unwrap();
        assert_eq!(class.len(), 3);
        assert_eq!(class.pool_len(0), 1);
        assert_eq!(class.pool_len(1), 2);
        assert_eq!(class.member(2), a);
        assert!(matches!(FunctionClass::from_members(dims, vec![]), Err(Error::EmptyClass)));
    }

    #[test]
    fn product_and_zipped_layouts() {
        let dims = Dims::new(2, 1, 1, 1).unwrap();
        let pools = vec![vec![vec![0.0], vec![0.5]], vec![vec![0.1], vec![0.2], vec![0.3]]];
        let p = FunctionClass::product(dims, pools.clone(), 100).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.member_ids(1), &[0, 1]);
        assert_eq!(p.member_ids(3), &[1, 0]);
        assert!(matches!(FunctionClass::product(dims, pools.clone(), 5), Err(Error::TooLarge { .. })));
        let z = FunctionClass::zipped(dims, pools).unwrap();
        assert_eq!(z.len(), 3);
        assert_eq!(z.member_ids(2), &[0, 2]);
        assert!((z.log_product_size() - libm::log(6.0)).abs() < 1e-15);
    }

    fn one_dim_spec(dims: Dims) -> LinearClassSpec {
        let features = (0..dims.horizon * dims.sab()).map(|c| if c % 2 == 0 { 1.0 } else { 0.5 }).collect();
        LinearClassSpec::new(dims, 1, features, 1.0).unwrap()
    }

    #[test]
    fn cover_grid_arithmetic() {
        let dims = Dims::new(1, 1, 1, 2).unwrap();
        let spec = one_dim_spec(dims);
        let grid = spec.theta_grid(0.5);
        assert_eq!(grid, vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]);
        let cover = epsilon_cover(&spec, 0.5, DEFAULT_CAP).unwrap();
        assert_eq!(cover.len(), 5);
        // Step 0.3 over [−1, 1]: ⌈2/0.3⌉ + 1 = 8 points, the last clamped.
        let g = spec.theta_grid(0.3);
        assert_eq!(g.len(), 8);
        assert_eq!(g[7], vec![1.0]);
        assert!(matches!(epsilon_cover(&spec, 1e-7, 1000), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn cover_certifies_radius_on_random_probes() {
        let dims = Dims::new(1, 2, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let d = 2;
        let mut features = Vec::new();
        for _ in 0..dims.sab() {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            let n = libm::sqrt(x * x + y * y).max(1.0);
            features.extend([x / n, y / n]);
        }
        let spec = LinearClassSpec::new(dims, d, features, 1.0).unwrap();
        let eps = 0.2;
        let cover = epsilon_cover(&spec, eps, DEFAULT_CAP).unwrap();
        for _ in 0..1000 {
            let r: f64 = libm::sqrt(rng.gen_range(0.0..1.0));
            let ang: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
            let theta = [r * libm::cos(ang), r * libm::sin(ang)];
            let (_, dist) = cover.project_tables(&[spec.table(0, &theta)]);
            assert!(dist <= eps + 1e-12, "{dist}");
        }
    }

    #[test]
    fn audits_on_exact_fixtures() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(40, dims);
        let star = nash_solve(&mg).unwrap();
        let qstar = ValueFunction::new(dims, star.values.q.clone()).unwrap();
        // {Q⋆} alone is realizable iff Q^{μ⋆,†} = Q⋆, which holds here.
        let only = FunctionClass::from_members(dims, vec![qstar.clone()]).unwrap();
        let (_, br) = best_response_to_max(&mg, &only.induced_policy(0)).unwrap();
        let expected = (0..2).map(|h| sup_dist(&br.q[h], &star.values.q[h])).fold(0.0, f64::max);
        assert!((audit_realizability(&mg, &only).unwrap() - expected).abs() < 1e-15);
        assert!(expected < 1e-8);

        // A member with a different induced policy forces its best-response
        // function into the audit.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Halved so that Bellman images stay inside [0, 1].
        let other = random_function(&mut rng, dims);
        let other = ValueFunction::new(dims, other.tables().iter().map(|t| t.iter().map(|x| x / 2.0).collect()).collect())
            .unwrap();
        let two = FunctionClass::from_members(dims, vec![qstar.clone(), other.clone()]).unwrap();
        let (_, br_other) = best_response_to_max(&mg, &induced_nash_policy(&other).unwrap()).unwrap();
        let fixture = FunctionClass::from_members(
            dims,
            vec![qstar.clone(), other.clone(), ValueFunction::new(dims, br_other.q.clone()).unwrap()],
        )
        .unwrap();
        assert!(audit_realizability(&mg, &two).unwrap() > 0.0);
        assert!(audit_realizability(&mg, &fixture).unwrap() < 1e-8);

        // Completeness against the exact images is zero; against {0} it is
        // the largest image.
        let f = FunctionClass::from_members(dims, vec![other.clone()]).unwrap();
        let mut images = Vec::new();
        let mu = induced_nash_policy(&other).unwrap();
        for h in 0..2 {
            images.push(vec![nash_bellman(&mg, &other, h).unwrap(), mu_bellman(&mg, &other, &mu, h).unwrap()]);
        }
        let pools: Vec<Vec<Vec<f64>>> = images.clone();
        let g = FunctionClass::zipped(dims, pools).unwrap();
        assert!(audit_completeness(&mg, &f, &g).unwrap() < 1e-15);
        let zero = FunctionClass::from_members(dims, vec![ValueFunction::constant(dims, 0.0).unwrap()]).unwrap();
        let largest = images.iter().flatten().flatten().copied().fold(0.0, f64::max);
        assert!((audit_completeness(&mg, &f, &zero).unwrap() - largest).abs() < 1e-15);
    }

    #[test]
    fn single_action_realizability_is_zero() {
        let dims = Dims::new(2, 2, 1, 1).unwrap();
        let mg = crate::model::tests::random_mg(6, dims);
        let star = nash_solve(&mg).unwrap();
        let class = FunctionClass::from_members(dims, vec![ValueFunction::new(dims, star.values.q).unwrap()]).unwrap();
        assert_eq!(audit_realizability(&mg, &class).unwrap(), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn projection_is_idempotent(seed in 0u64..1000) {
            let dims = Dims::new(2, 1, 2, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let members: Vec<ValueFunction> = (0..5).map(|_| random_function(&mut rng, dims)).collect();
            let class = FunctionClass::from_members(dims, members).unwrap();
            let g = random_function(&mut rng, dims);
            let (i, _) = project(&class, &g).unwrap();
            let (j, dist) = project(&class, &class.member(i)).unwrap();
            proptest::prop_assert_eq!(i, j);
            proptest::prop_assert_eq!(dist, 0.0);
        }
    }
}
