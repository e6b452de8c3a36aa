//! Complexity measures: ε-independence, distributional Eluder dimension,
//! Bellman-Eluder dimension (Q-type, online and V-type) and the
//! log-determinant effective dimension.
//!
//! Every expectation here is exact. Distributions are plain weight vectors
//! over `S×A×B` cells (Q-type) or over states (V-type); residuals are
//! tables over the same support.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::function_class::{greedy_min_policy, mu_bellman, nash_bellman, FunctionClass};
use crate::linalg::SymMatrix;
use crate::model::{joint_occupancy, Dims, TabularMG};

/// Largest distribution family the exact search accepts.
pub const EXACT_FAMILY_CAP: usize = 8;
/// Longest sequence the exact search explores.
pub const EXACT_LENGTH_CAP: usize = 8;
/// Largest class for V-type residuals (which range over triples).
pub const V_TYPE_CLASS_CAP: usize = 6;
/// Largest number of ordered pairs used to build roll-in families.
pub const PAIR_CAP: usize = 10_000;
/// Residual magnitude bound: differences of `[0,1]` tables and targets.
pub const RESIDUAL_BOUND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMode {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResidualKind {
    /// `f_h − T^{μ_g}_h f_{h+1}` over pairs.
    Q,
    /// `f_h − T_h f_{h+1}`, point-mass family only.
    Online,
    /// State-level expectation of the Q residual under `μ_g × ν_{g,w}`.
    V,
}

/// `E_ρ[g]`.
pub fn expectation(rho: &[f64], g: &[f64]) -> f64 {
    rho.iter().zip(g).map(|(p, x)| p * x).sum()
}

fn prior_norm(prior: &[Vec<f64>], g: &[f64]) -> f64 {
    let ss = prior.iter().fold(0.0, |acc, rho| {
        let e = expectation(rho, g);
        acc + e * e
    });
    libm::sqrt(ss)
}

/// Lowest-index `g` with `√(Σ_i E_{ρ_i}[g]²) ≤ eps < |E_ν[g]|`, if any.
pub fn is_eps_independent(residuals: &[Vec<f64>], nu: &[f64], prior: &[Vec<f64>], eps: f64) -> Option<usize> {
    residuals
        .iter()
        .position(|g| prior_norm(prior, g) <= eps && eps < libm::fabs(expectation(nu, g)))
}

/// A checkable ε′-independent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DeCertificate {
    /// Indices into the family, in order.
    pub sequence: Vec<usize>,
    pub eps_prime: f64,
    /// Per position, the index of the residual proving independence.
    pub witnesses: Vec<usize>,
}

impl DeCertificate {
    /// Re-checks every position with [`is_eps_independent`].
    pub fn verify(&self, residuals: &[Vec<f64>], family: &[Vec<f64>], eps: f64) -> bool {
        if self.eps_prime < eps || self.witnesses.len() != self.sequence.len() {
            return false;
        }
        let mut prior: Vec<Vec<f64>> = Vec::new();
        for (&k, &w) in self.sequence.iter().zip(&self.witnesses) {
            let Some(g) = residuals.get(w) else { return false };
            if is_eps_independent(core::slice::from_ref(g), &family[k], &prior, self.eps_prime).is_none() {
                return false;
            }
            prior.push(family[k].clone());
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub dimension: usize,
    pub mode: SearchMode,
    pub certificate: DeCertificate,
}

/// Sorted, disjoint half-open intervals `[l, r)`.
type Intervals = Vec<(f64, f64)>;

fn union(mut parts: Vec<(f64, f64)>) -> Intervals {
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Intervals = Vec::new();
    for (l, r) in parts {
        match out.last_mut() {
            Some(last) if l <= last.1 => last.1 = last.1.max(r),
            _ => out.push((l, r)),
        }
    }
    out
}

fn intersect(a: &Intervals, b: &Intervals) -> Intervals {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let l = a[i].0.max(b[j].0);
        let r = a[i].1.min(b[j].1);
        if l < r {
            out.push((l, r));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Expectation table `e[k][g]` with residuals deduplicated by their
/// expectation vectors; `keep[g']` maps back to the original index.
struct Table {
    e: Vec<Vec<f64>>,
    keep: Vec<usize>,
}

impl Table {
    fn new(residuals: &[Vec<f64>], family: &[Vec<f64>]) -> Self {
        let mut seen = BTreeSet::new();
        let mut keep = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (gi, g) in residuals.iter().enumerate() {
            let col: Vec<f64> = family.iter().map(|rho| expectation(rho, g)).collect();
            let key: Vec<u64> = col.iter().map(|x| x.to_bits()).collect();
            if seen.insert(key) {
                keep.push(gi);
                cols.push(col);
            }
        }
        let e = (0..family.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
        Self { e, keep }
    }

    /// Valid ε′ for appending family member `k` given prefix sums `ss`.
    fn valid(&self, k: usize, ss: &[f64]) -> Intervals {
        union(
            self.e[k]
                .iter()
                .zip(ss)
                .filter_map(|(e, s)| {
                    let (l, r) = (libm::sqrt(*s), libm::fabs(*e));
                    (l < r).then_some((l, r))
                })
                .collect(),
        )
    }
}

struct Search<'a> {
    table: &'a Table,
    best: Vec<usize>,
    best_set: Intervals,
    used: Vec<bool>,
    path: Vec<usize>,
    max_len: usize,
}

impl Search<'_> {
    fn dfs(&mut self, set: &Intervals, ss: &[f64]) {
        if self.path.len() > self.best.len() {
            self.best = self.path.clone();
            self.best_set = set.clone();
        }
        let remaining = self.used.iter().filter(|u| !**u).count();
        if self.best.len() >= self.max_len || self.path.len() + remaining <= self.best.len() {
            return;
        }
        for k in 0..self.used.len() {
            if self.used[k] {
                continue;
            }
            let next = intersect(set, &self.table.valid(k, ss));
            if next.is_empty() {
                continue;
            }
            let ss2: Vec<f64> = ss.iter().zip(&self.table.e[k]).map(|(s, e)| s + e * e).collect();
            self.used[k] = true;
            self.path.push(k);
            self.dfs(&next, &ss2);
            self.path.pop();
            self.used[k] = false;
        }
    }
}

fn certificate(table: &Table, residuals: &[Vec<f64>], family: &[Vec<f64>], sequence: Vec<usize>, set: &Intervals, eps: f64) -> DeCertificate {
    // Smallest admissible ε′: the left end of the first surviving interval.
    let eps_prime = set.first().map_or(eps, |iv| iv.0);
    let mut prior: Vec<Vec<f64>> = Vec::new();
    let mut witnesses = Vec::with_capacity(sequence.len());
    for &k in &sequence {
        let cand: Vec<Vec<f64>> = table.keep.iter().map(|&g| residuals[g].clone()).collect();
        let w = is_eps_independent(&cand, &family[k], &prior, eps_prime).expect("search keeps a witness");
        witnesses.push(table.keep[w]);
        prior.push(family[k].clone());
    }
    DeCertificate { sequence, eps_prime, witnesses }
}

/// Length of the longest sequence from `family` that is ε′-independent
/// for one shared `ε′ ≥ eps`.
///
/// A distribution can never follow itself (its own prior term already
/// bounds `|E g|` by ε′), so sequences never repeat. The exact search is a
/// depth-first scan over orderings carrying the set of admissible ε′ as a
/// union of intervals `[√(prefix sum), |E g|)`; greedy mode appends the
/// lowest-index member that keeps the set nonempty.
pub fn de_dimension(residuals: &[Vec<f64>], family: &[Vec<f64>], eps: f64, mode: SearchMode) -> Result<DeResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if let Some(n) = residuals.first().map(Vec::len) {
        if residuals.iter().chain(family).any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("residuals and distributions must share a support".into()));
        }
    }
    if mode == SearchMode::Exact && family.len() > EXACT_FAMILY_CAP {
        return Err(Error::TooLarge { what: "distribution family", size: family.len(), cap: EXACT_FAMILY_CAP });
    }
    let table = Table::new(residuals, family);
    let start: Intervals = vec![(eps, f64::INFINITY)];
    let zero = vec![0.0; table.keep.len()];
    let (sequence, set) = match mode {
        SearchMode::Exact => {
            let mut s = Search {
                table: &table,
                best: Vec::new(),
                best_set: start.clone(),
                used: vec![false; family.len()],
                path: Vec::new(),
                max_len: EXACT_LENGTH_CAP,
            };
            s.dfs(&start, &zero);
            (s.best, s.best_set)
        }
        SearchMode::Greedy => {
            let mut set = start;
            let mut ss = zero;
            let mut used = vec![false; family.len()];
            let mut seq = Vec::new();
            loop {
                let step = (0..family.len()).filter(|&k| !used[k]).find_map(|k| {
                    let next = intersect(&set, &table.valid(k, &ss));
                    (!next.is_empty()).then_some((k, next))
                });
                let Some((k, next)) = step else { break };
                used[k] = true;
                seq.push(k);
                ss = ss.iter().zip(&table.e[k]).map(|(s, e)| s + e * e).collect();
                set = next;
            }
            (seq, set)
        }
    };
    let certificate = certificate(&table, residuals, family, sequence, &set, eps);
    Ok(DeResult { dimension: certificate.sequence.len(), mode, certificate })
}

/// Point masses on `n` support points.
pub fn point_masses(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect()
}

fn dedup(dists: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = BTreeSet::new();
    dists.into_iter().filter(|d| seen.insert(d.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())).collect()
}

fn check_class(mg: &TabularMG, f: &FunctionClass) -> Result<Dims> {
    let d = mg.dims();
    if f.dims() != d {
        return Err(Error::DimensionMismatch(format!("class is {:?}, game is {d:?}", f.dims())));
    }
    if f.is_empty() {
        return Err(Error::EmptyClass);
    }
    Ok(d)
}

/// Per-step distribution families.
#[derive(Debug, Clone, PartialEq)]
pub struct Families {
    /// Point masses on cells (the same at every step).
    pub delta: Vec<Vec<f64>>,
    /// Point masses on states.
    pub delta_states: Vec<Vec<f64>>,
    /// `[h]`: distinct step-`h` occupancies of `(μ_f, ν_{f,g})`, `f, g ∈ F`.
    pub roll: Vec<Vec<Vec<f64>>>,
    /// `[h]`: their state marginals, deduplicated.
    pub roll_states: Vec<Vec<Vec<f64>>>,
}

/// Point-mass and roll-in families. `ν_{f,g}` is the greedy min player of
/// `g` against `μ_f`.
pub fn build_dist_families(mg: &TabularMG, f: &FunctionClass) -> Result<Families> {
    let d = check_class(mg, f)?;
    let n = f.len();
    if n * n > PAIR_CAP {
        return Err(Error::TooLarge { what: "ordered class pairs", size: n * n, cap: PAIR_CAP });
    }
    let mut roll: Vec<Vec<Vec<f64>>> = vec![Vec::new(); d.horizon];
    for i in 0..n {
        let mu = f.induced_policy(i);
        for j in 0..n {
            let nu = greedy_min_policy(&mu, &f.member(j))?;
            let occ = joint_occupancy(mg, &mu, &nu)?;
            for (h, o) in occ.into_iter().enumerate().take(d.horizon) {
                roll[h].push(o);
            }
        }
    }
    let roll: Vec<Vec<Vec<f64>>> = roll.into_iter().map(dedup).collect();
    let roll_states = roll.iter().map(|fam| dedup(fam.iter().map(|o| marginal(d, o)).collect())).collect();
    Ok(Families { delta: point_masses(d.sab()), delta_states: point_masses(d.states), roll, roll_states })
}

fn marginal(d: Dims, joint: &[f64]) -> Vec<f64> {
    (0..d.states).map(|s| joint[s * d.a * d.b..(s + 1) * d.a * d.b].iter().sum()).collect()
}

/// A residual table with the class indices it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub h: usize,
    pub values: Vec<f64>,
    pub tag: Vec<usize>,
}

fn checked(h: usize, values: Vec<f64>, tag: Vec<usize>) -> Result<Residual> {
    if values.iter().any(|x| !x.is_finite() || libm::fabs(*x) > RESIDUAL_BOUND) {
        return Err(Error::InvalidFunction(format!("residual {tag:?} at step {h} leaves [-2, 2]")));
    }
    Ok(Residual { h, values, tag })
}

/// Residual classes per step.
pub fn build_residuals(mg: &TabularMG, f: &FunctionClass, kind: ResidualKind) -> Result<Vec<Vec<Residual>>> {
    let d = check_class(mg, f)?;
    let n = f.len();
    let members: Vec<_> = (0..n).map(|i| f.member(i)).collect();
    let policies: Vec<_> = (0..n).map(|i| f.induced_policy(i)).collect();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut out = vec![Vec::new(); d.horizon];
    match kind {
        ResidualKind::Online => {
            for (i, fi) in members.iter().enumerate() {
                for (h, slot) in out.iter_mut().enumerate() {
                    slot.push(checked(h, diff(fi.table(h), &nash_bellman(mg, fi, h)?), vec![i])?);
                }
            }
        }
        ResidualKind::Q => {
            if n * n > PAIR_CAP {
                return Err(Error::TooLarge { what: "ordered class pairs", size: n * n, cap: PAIR_CAP });
            }
            for (i, fi) in members.iter().enumerate() {
                for (j, mu) in policies.iter().enumerate() {
                    for (h, slot) in out.iter_mut().enumerate() {
                        slot.push(checked(h, diff(fi.table(h), &mu_bellman(mg, fi, mu, h)?), vec![i, j])?);
                    }
                }
            }
        }
        ResidualKind::V => {
            if n > V_TYPE_CLASS_CAP {
                return Err(Error::TooLarge { what: "class for V-type residuals", size: n, cap: V_TYPE_CLASS_CAP });
            }
            for (i, fi) in members.iter().enumerate() {
                for (j, mu) in policies.iter().enumerate() {
                    let q: Vec<Vec<f64>> =
                        (0..d.horizon).map(|h| Ok(diff(fi.table(h), &mu_bellman(mg, fi, mu, h)?))).collect::<Result<_>>()?;
                    for (w, fw) in members.iter().enumerate() {
                        let nu = greedy_min_policy(mu, fw)?;
                        for (h, slot) in out.iter_mut().enumerate() {
                            let v = (0..d.states)
                                .map(|s| {
                                    let (pa, pb) = (mu.row(h, s), nu.row(h, s));
                                    let mut acc = 0.0;
                                    for (a, x) in pa.iter().enumerate() {
                                        for (b, y) in pb.iter().enumerate() {
                                            acc += x * y * q[h][d.cell(s, a, b)];
                                        }
                                    }
                                    acc
                                })
                                .collect();
                            slot.push(checked(h, v, vec![i, j, w])?);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Which family attained the minimum at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDimension {
    pub h: usize,
    pub point_mass: DeResult,
    /// Absent for the online variant.
    pub roll_in: Option<DeResult>,
}

impl StepDimension {
    pub fn value(&self) -> usize {
        match &self.roll_in {
            Some(r) => r.dimension.min(self.point_mass.dimension),
            None => self.point_mass.dimension,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeReport {
    pub dimension: usize,
    pub kind: ResidualKind,
    pub mode: SearchMode,
    pub steps: Vec<StepDimension>,
}

/// `max_h min_{D ∈ {D_Δ, D_F}} dim_DE(residuals_h, D_h, eps)`; the online
/// variant uses point masses only.
pub fn be_dimension(mg: &TabularMG, f: &FunctionClass, eps: f64, kind: ResidualKind, mode: SearchMode) -> Result<BeReport> {
    let d = check_class(mg, f)?;
    let residuals = build_residuals(mg, f, kind)?;
    let families = if kind == ResidualKind::Online { None } else { Some(build_dist_families(mg, f)?) };
    let mut steps = Vec::with_capacity(d.horizon);
    for (h, res) in residuals.iter().enumerate() {
        let tables: Vec<Vec<f64>> = res.iter().map(|r| r.values.clone()).collect();
        let (delta, roll) = match (&families, kind) {
            (None, _) => (point_masses(d.sab()), None),
            (Some(fam), ResidualKind::V) => (fam.delta_states.clone(), Some(&fam.roll_states[h])),
            (Some(fam), _) => (fam.delta.clone(), Some(&fam.roll[h])),
        };
        let point_mass = de_dimension(&tables, &delta, eps, mode)?;
        let roll_in = roll.map(|r| de_dimension(&tables, r, eps, mode)).transpose()?;
        steps.push(StepDimension { h, point_mass, roll_in });
    }
    let dimension = steps.iter().map(StepDimension::value).max().unwrap_or(0);
    Ok(BeReport { dimension, kind, mode, steps })
}

/// Threshold on the normalized log-determinant.
pub const EFF_DIM_THRESHOLD: f64 = 0.367_879_441_171_442_33;

/// Multisets the exact effective-dimension search may enumerate in total.
pub const EFF_DIM_CAP: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveDimension {
    pub value: usize,
    pub mode: SearchMode,
}

fn log_det_counts(z: &[Vec<f64>], counts: &[usize], inv_eps2: f64) -> f64 {
    let mut m = SymMatrix::identity(z[0].len());
    for (v, &c) in z.iter().zip(counts) {
        if c > 0 {
            m.add_outer(v, c as f64 * inv_eps2);
        }
    }
    m.log_det().expect("identity plus a PSD sum is positive definite")
}

/// Visits every count vector of length `m` summing to `n`.
fn for_each_multiset(n: usize, m: usize, visit: &mut dyn FnMut(&[usize])) {
    fn go(rest: usize, slot: usize, buf: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
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
    let mut buf = vec![0; m];
    go(n, 0, &mut buf, visit);
}

fn multiset_count(n: usize, m: usize) -> f64 {
    (0..m - 1).fold(1.0, |acc, i| acc * (n + 1 + i) as f64 / (i + 1) as f64)
}

/// Smallest `n` with `sup (1/n)·log det(I + ε⁻² Σ_{i≤n} z_i z_iᵀ) ≤ e⁻¹`,
/// the sup over length-`n` sequences from `z` with repetition.
///
/// The log-determinant ignores order, so the exact mode enumerates
/// multisets. Greedy mode builds one sequence by repeatedly adding the
/// vector with the largest `zᵀA⁻¹z`; its value under-estimates the sup and
/// so the returned count is a lower bound.
pub fn effective_dimension(z: &[Vec<f64>], eps: f64, mode: SearchMode) -> Result<EffectiveDimension> {
    if z.is_empty() {
        return Err(Error::EmptyClass);
    }
    let dim = z[0].len();
    if dim == 0 || z.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("vectors must share a positive length".into()));
    }
    if !(eps > 0.0) || z.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("eps must be positive and vectors finite".into()));
    }
    let inv_eps2 = 1.0 / (eps * eps);
    match mode {
        SearchMode::Exact => {
            let mut spent = 0.0;
            for n in 1.. {
                spent += multiset_count(n, z.len());
                if spent > EFF_DIM_CAP as f64 {
                    return Err(Error::TooLarge { what: "multiset enumeration", size: spent as usize, cap: EFF_DIM_CAP });
                }
                let mut best = f64::NEG_INFINITY;
                for_each_multiset(n, z.len(), &mut |c| best = best.max(log_det_counts(z, c, inv_eps2)));
                if best / n as f64 <= EFF_DIM_THRESHOLD {
                    return Ok(EffectiveDimension { value: n, mode });
                }
            }
            unreachable!()
        }
        SearchMode::Greedy => {
            let mut m = SymMatrix::identity(dim);
            let mut log_det = 0.0;
            for n in 1.. {
                let gains: Vec<f64> = z.iter().map(|v| m.inv_quad(v).expect("positive definite")).collect();
                let k = crate::matrix_game::argmax(&gains).0;
                m.add_outer(&z[k], inv_eps2);
                log_det += libm::log1p(inv_eps2 * gains[k]);
                if log_det / n as f64 <= EFF_DIM_THRESHOLD {
                    return Ok(EffectiveDimension { value: n, mode });
                }
                if n > 10_000_000 {
                    break;
                }
            }
            Err(Error::Inconclusive("greedy effective dimension did not settle".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_class::ValueFunction;
    use crate::model::nash_solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vectors(rng: &mut ChaCha8Rng, count: usize, len: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..count).map(|_| (0..len).map(|_| rng.gen_range(-scale..scale)).collect()).collect()
    }

    fn random_dists(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect()
    }

    #[test]
    fn independence_edge_cases() {
        let nu = vec![0.5, 0.5];
        assert_eq!(is_eps_independent(&[vec![0.0, 0.0]], &nu, &[vec![1.0, 0.0]], 0.1), None);
        assert_eq!(is_eps_independent(&[vec![0.0, 0.0], vec![1.0, 0.0]], &nu, &[], 0.3), Some(1));
        // Straight-line oracle on a seeded instance.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let res = random_vectors(&mut rng, 10, 4, 1.0);
        let prior = random_dists(&mut rng, 3, 4);
        let nu = random_dists(&mut rng, 1, 4).remove(0);
        for eps in [0.05, 0.1, 0.2, 0.4] {
            let mut expected = None;
            for (i, g) in res.iter().enumerate() {
                let mut ss = 0.0;
                for p in &prior {
                    let e: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    ss += e * e;
                }
                let en: f64 = nu.iter().zip(g).map(|(a, b)| a * b).sum();
                if ss.sqrt() <= eps && eps < en.abs() {
                    expected = Some(i);
                    break;
                }
            }
            assert_eq!(is_eps_independent(&res, &nu, &prior, eps), expected);
        }
    }

    #[test]
    fn trivial_dimensions() {
        let fam = point_masses(3);
        assert_eq!(de_dimension(&[vec![0.0; 3]], &fam, 0.1, SearchMode::Exact).unwrap().dimension, 0);
        let single = vec![vec![1.0, 0.0, 0.0]];
        let r = de_dimension(&[vec![0.5, 0.0, 0.0]], &single, 0.1, SearchMode::Exact).unwrap();
        assert_eq!(r.dimension, 1);
        assert!(r.certificate.verify(&[vec![0.5, 0.0, 0.0]], &single, 0.1));
        assert!(de_dimension(&[vec![0.0; 9]], &point_masses(9), 0.1, SearchMode::Exact).is_err());
    }

    #[test]
    fn greedy_never_beats_exact_and_certificates_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let res = random_vectors(&mut rng, 6, 4, 1.0);
            let fam = random_dists(&mut rng, 5, 4);
            for eps in [0.05, 0.2] {
                let ex = de_dimension(&res, &fam, eps, SearchMode::Exact).unwrap();
                let gr = de_dimension(&res, &fam, eps, SearchMode::Greedy).unwrap();
                assert!(gr.dimension <= ex.dimension);
                assert!(ex.certificate.verify(&res, &fam, eps));
                assert!(gr.certificate.verify(&res, &fam, eps));
            }
        }
    }

    #[test]
    fn de_dimension_is_monotone_in_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let res = random_vectors(&mut rng, 8, 3, 1.0);
        let fam = random_dists(&mut rng, 6, 3);
        let dims: Vec<usize> =
            [0.01, 0.05, 0.1, 0.3, 1.0].iter().map(|&e| de_dimension(&res, &fam, e, SearchMode::Exact).unwrap().dimension).collect();
        assert!(dims.windows(2).all(|w| w[0] >= w[1]), "{dims:?}");
    }

    fn small_class(seed: u64, n: usize, dims: Dims) -> FunctionClass {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = (0..n)
            .map(|_| {
                let t = (0..dims.horizon).map(|_| (0..dims.sab()).map(|_| rng.gen_range(0.0..0.5)).collect()).collect();
                ValueFunction::new(dims, t).unwrap()
            })
            .collect();
        FunctionClass::from_members(dims, members).unwrap()
    }

    #[test]
    fn residual_class_sizes_and_entries() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(4, dims);
        let f = small_class(5, 3, dims);
        let q = build_residuals(&mg, &f, ResidualKind::Q).unwrap();
        let o = build_residuals(&mg, &f, ResidualKind::Online).unwrap();
        let v = build_residuals(&mg, &f, ResidualKind::V).unwrap();
        assert_eq!((q[0].len(), o[0].len(), v[0].len()), (9, 3, 27));
        let f1 = f.member(1);
        let mu2 = f.induced_policy(2);
        let direct: Vec<f64> =
            f1.table(0).iter().zip(mu_bellman(&mg, &f1, &mu2, 0).unwrap()).map(|(a, b)| a - b).collect();
        assert_eq!(q[0][3 + 2].values, direct);
        assert_eq!(q[0][5].tag, vec![1, 2]);
    }

    #[test]
    fn families_on_a_singleton() {
        let dims = Dims::new(2, 3, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(6, dims);
        let f = small_class(7, 1, dims);
        let fam = build_dist_families(&mg, &f).unwrap();
        assert_eq!(fam.roll[0].len(), 1);
        assert_eq!(fam.roll[1].len(), 1);
        assert_eq!(fam.roll_states[0][0], vec![1.0, 0.0, 0.0]);
        assert_eq!(build_residuals(&mg, &f, ResidualKind::Q).unwrap()[0].len(), 1);
    }

    #[test]
    fn bellman_consistent_function_has_dimension_zero() {
        let dims = Dims::new(2, 2, 2, 2).unwrap();
        let mg = crate::model::tests::random_mg(8, dims);
        let star = nash_solve(&mg).unwrap();
        let f = FunctionClass::from_members(dims, vec![ValueFunction::new(dims, star.values.q).unwrap()]).unwrap();
        for kind in [ResidualKind::Q, ResidualKind::Online, ResidualKind::V] {
            assert_eq!(be_dimension(&mg, &f, 0.01, kind, SearchMode::Exact).unwrap().dimension, 0);
        }
        let g = small_class(9, 3, dims);
        assert_eq!(be_dimension(&mg, &g, 2.0, ResidualKind::Q, SearchMode::Exact).unwrap().dimension, 0);
    }

    #[test]
    fn effective_dimension_cases() {
        assert_eq!(effective_dimension(&[vec![0.0, 0.0]], 0.1, SearchMode::Exact).unwrap().value, 1);
        assert_eq!(effective_dimension(&[vec![0.0, 0.0]], 0.1, SearchMode::Greedy).unwrap().value, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = random_vectors(&mut rng, 3, 2, 1.0);
        let scaled: Vec<Vec<f64>> = z.iter().map(|v| v.iter().map(|x| x * 4.0).collect()).collect();
        for mode in [SearchMode::Exact, SearchMode::Greedy] {
            let a = effective_dimension(&z, 0.3, mode).unwrap();
            let b = effective_dimension(&scaled, 1.2, mode).unwrap();
            assert_eq!(a, b);
        }
        let ex = effective_dimension(&z, 0.3, SearchMode::Exact).unwrap().value;
        assert!(effective_dimension(&z, 0.3, SearchMode::Greedy).unwrap().value <= ex);
    }
}
