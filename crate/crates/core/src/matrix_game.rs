//! One-shot zero-sum matrix games.
//!
//! The row player maximizes and the column player minimizes `μᵀ M ν`.
//! [`solve_zero_sum`] solves the game as a linear program with a dense
//! simplex tableau under Bland's rule, so the pivot sequence (and hence
//! the returned vertex on degenerate games) is a pure function of the
//! input matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default pivot cap for the simplex solver.
pub const DEFAULT_MAX_PIVOTS: usize = 10_000;

const PIVOT_EPS: f64 = 1e-12;

/// Payoff matrix `M[a][b]` paid by the min player to the max player.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Payoff {
    /// Builds a payoff from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "payoff must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} payoff needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged payoff rows".into()));
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.cols + b]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `(M ν)_a` for every row.
    pub fn row_values(&self, nu: &[f64]) -> Vec<f64> {
        self.entries
            .chunks(self.cols)
            .map(|row| row.iter().zip(nu).map(|(m, p)| m * p).sum())
            .collect()
    }

    /// `(μᵀ M)_b` for every column.
    pub fn col_values(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &p) in self.entries.chunks(self.cols).zip(mu) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += p * m;
            }
        }
        out
    }

    /// `μᵀ M ν`.
    pub fn bilinear(&self, mu: &[f64], nu: &[f64]) -> f64 {
        self.row_values(nu).iter().zip(mu).map(|(v, p)| v * p).sum()
    }

    /// `-Mᵀ`: the same game seen from the other side.
    pub fn negated_transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for b in 0..self.cols {
            for a in 0..self.rows {
                entries.push(-self.get(a, b));
            }
        }
        Self { rows: self.cols, cols: self.rows, entries }
    }

    /// `α M + β` elementwise.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|x| alpha * x + beta).collect(),
        }
    }
}

/// A saddle-point candidate together with its value.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPair {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub value: f64,
}

/// Which player a best response is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Max,
    Min,
}

/// Solves `max_μ min_ν μᵀ M ν` exactly (up to floating point).
///
/// The game is shifted to strictly positive payoffs and the column
/// player's LP `max Σy s.t. M'y ≤ 1, y ≥ 0` is solved by the simplex
/// method; the row strategy is read off the dual (slack reduced costs).
pub fn solve_zero_sum(m: &Payoff, tol: f64) -> Result<MixedPair> {
    solve_zero_sum_capped(m, tol, DEFAULT_MAX_PIVOTS)
}

/// [`solve_zero_sum`] with an explicit pivot cap.
pub fn solve_zero_sum_capped(m: &Payoff, tol: f64, max_pivots: usize) -> Result<MixedPair> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if m.entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = (m.rows, m.cols);
    let min_entry = m.entries.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;

    // Tableau: `rows` constraint rows over `cols` structural + `rows`
    // slack columns, last column is the right-hand side.
    let width = cols + rows + 1;
    let rhs = width - 1;
    let mut tab = vec![0.0; rows * width];
    for a in 0..rows {
        for b in 0..cols {
            tab[a * width + b] = m.get(a, b) + shift;
        }
        tab[a * width + cols + a] = 1.0;
        tab[a * width + rhs] = 1.0;
    }
    // Reduced costs of the maximization objective Σ y.
    let mut reduced = vec![0.0; width];
    reduced[..cols].fill(1.0);
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    let mut pivots = 0;
    loop {
        let Some(enter) = (0..width - 1).find(|&j| reduced[j] > PIVOT_EPS) else {
            break;
        };
        if pivots == max_pivots {
            let (mu, nu) = extract(&tab, &reduced, &basis, rows, cols, width);
            let gap = duality_gap_unchecked(m, &mu, &nu);
            return Err(Error::ToleranceNotMet { iterations: pivots, gap, tol });
        }
        // Ratio test with Bland tie-breaking on the leaving basic index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let coef = tab[i * width + enter];
            if coef > PIVOT_EPS {
                let ratio = tab[i * width + rhs] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_EPS
                            || (ratio <= lr + PIVOT_EPS && basis[i] < basis[li])
                        {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        // The feasible region is bounded (all coefficients positive), so a
        // leaving row always exists.
        let (pr, _) = leave.expect("bounded LP always has a leaving row");
        let piv = tab[pr * width + enter];
        for j in 0..width {
            tab[pr * width + j] /= piv;
        }
        for i in 0..rows {
            if i == pr {
                continue;
            }
            let factor = tab[i * width + enter];
            if factor != 0.0 {
                for j in 0..width {
                    tab[i * width + j] -= factor * tab[pr * width + j];
                }
            }
        }
        let factor = reduced[enter];
        for j in 0..width {
            reduced[j] -= factor * tab[pr * width + j];
        }
        basis[pr] = enter;
        pivots += 1;
    }

    let (mu, nu) = extract(&tab, &reduced, &basis, rows, cols, width);
    let gap = duality_gap_unchecked(m, &mu, &nu);
    if !(gap <= tol) {
        return Err(Error::ToleranceNotMet { iterations: pivots, gap, tol });
    }
    let value = m.bilinear(&mu, &nu);
    Ok(MixedPair { mu, nu, value })
}

fn extract(
    tab: &[f64],
    reduced: &[f64],
    basis: &[usize],
    rows: usize,
    cols: usize,
    width: usize,
) -> (Vec<f64>, Vec<f64>) {
    let rhs = width - 1;
    let mut y = vec![0.0; cols];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < cols {
            y[bv] = tab[i * width + rhs].max(0.0);
        }
    }
    let x: Vec<f64> = (0..rows).map(|a| (-reduced[cols + a]).max(0.0)).collect();
    (normalize(x), normalize(y))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        // Degenerate fallback: lowest-index vertex.
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    }
    v
}

/// Best pure response to a fixed opponent strategy; ties go to the lowest index.
///
/// For `Side::Max` the opponent is the column strategy `ν` and the result
/// is `argmax_a (M ν)_a`; for `Side::Min` the opponent is `μ` and the
/// result is `argmin_b (μᵀ M)_b`.
pub fn best_response(m: &Payoff, opponent: &[f64], side: Side) -> Result<(usize, f64)> {
    let expected = match side {
        Side::Max => m.cols,
        Side::Min => m.rows,
    };
    if opponent.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "opponent strategy has {} entries, expected {expected}",
            opponent.len()
        )));
    }
    Ok(match side {
        Side::Max => argmax(&m.row_values(opponent)),
        Side::Min => argmin(&m.col_values(opponent)),
    })
}

/// `max_a (M ν)_a − min_b (μᵀ M)_b`.
pub fn duality_gap(m: &Payoff, mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != m.rows || nu.len() != m.cols {
        return Err(Error::DimensionMismatch(format!(
            "strategies of length {}/{} for a {}x{} payoff",
            mu.len(),
            nu.len(),
            m.rows,
            m.cols
        )));
    }
    Ok(duality_gap_unchecked(m, mu, nu))
}

fn duality_gap_unchecked(m: &Payoff, mu: &[f64], nu: &[f64]) -> f64 {
    argmax(&m.row_values(nu)).1 - argmin(&m.col_values(mu)).1
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// First index of the minimum.
pub(crate) fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rps() -> Payoff {
        Payoff::from_rows(&[
            vec![0.0, 1.0, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
        ])
        .unwrap()
    }

    fn random_payoff(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Payoff {
        let entries = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Payoff::new(rows, cols, entries).unwrap()
    }

    #[test]
    fn rps_has_uniform_value_zero_saddle() {
        let sol = solve_zero_sum(&rps(), DEFAULT_TOL).unwrap();
        assert!(sol.value.abs() <= 1e-9);
        for p in sol.mu.iter().chain(&sol.nu) {
            assert!((p - 1.0 / 3.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn one_by_one() {
        let m = Payoff::new(1, 1, vec![0.37]).unwrap();
        let sol = solve_zero_sum(&m, DEFAULT_TOL).unwrap();
        assert_eq!(sol.mu, vec![1.0]);
        assert_eq!(sol.nu, vec![1.0]);
        assert!((sol.value - 0.37).abs() < 1e-15);
        assert_eq!(duality_gap(&m, &[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_game_returns_lexicographic_vertex() {
        let m = Payoff::new(2, 3, vec![0.0; 6]).unwrap();
        let sol = solve_zero_sum(&m, DEFAULT_TOL).unwrap();
        assert_eq!(sol.mu, vec![1.0, 0.0]);
        assert_eq!(sol.nu, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_nonfinite() {
        assert_eq!(Payoff::new(1, 2, vec![0.0, f64::NAN]), Err(Error::NonFinite));
    }

    #[test]
    fn pivot_cap_reports_tolerance_not_met() {
        let err = solve_zero_sum_capped(&rps(), DEFAULT_TOL, 0).unwrap_err();
        assert!(matches!(err, Error::ToleranceNotMet { iterations: 0, .. }));
    }

    #[test]
    fn best_response_to_uniform_on_perturbed_rps() {
        // Entry (1,2) of rock-paper-scissors raised to 1.1.
        let m = Payoff::from_rows(&[
            vec![0.0, 1.1, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
        ])
        .unwrap();
        let u = [1.0 / 3.0; 3];
        let (a, v) = best_response(&m, &u, Side::Max).unwrap();
        assert_eq!(a, 0);
        assert!((v - 0.1 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn best_response_scan_and_errors() {
        let zero = Payoff::new(1, 1, vec![0.0]).unwrap();
        assert_eq!(best_response(&zero, &[1.0], Side::Max).unwrap(), (0, 0.0));
        assert!(matches!(
            best_response(&zero, &[0.5, 0.5], Side::Min),
            Err(Error::DimensionMismatch(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_payoff(&mut rng, 4, 5);
        let (a, v) = best_response(&m, &[0.0, 0.0, 1.0, 0.0, 0.0], Side::Max).unwrap();
        let mut scan = (0, f64::NEG_INFINITY);
        for r in 0..4 {
            if m.get(r, 2) > scan.1 {
                scan = (r, m.get(r, 2));
            }
        }
        assert_eq!((a, v), scan);
    }

    #[test]
    fn duality_gap_of_pure_rock_against_uniform() {
        // max_a (M u)_a = 0, min_b (e_0ᵀ M)_b = -1.
        let g = duality_gap(&rps(), &[1.0, 0.0, 0.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
        assert!(duality_gap(&rps(), &[1.0 / 3.0; 3], &[1.0 / 3.0; 3]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn random_games_meet_gap_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for i in 0..300 {
            let rows = 1 + i % 6;
            let cols = 1 + (i / 6) % 6;
            let m = random_payoff(&mut rng, rows, cols);
            let sol = solve_zero_sum(&m, 1e-8).unwrap();
            assert!(duality_gap(&m, &sol.mu, &sol.nu).unwrap() <= 1e-8);
            assert!((sol.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((sol.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_oracle_agrees_on_2x2_games() {
        // Independent oracle: the row player's maximin over a fine grid of
        // the 1-simplex, min taken over pure columns.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_payoff(&mut rng, 2, 2);
            let mut best = f64::NEG_INFINITY;
            for k in 0..=20_000 {
                let p = k as f64 / 20_000.0;
                let v0 = p * m.get(0, 0) + (1.0 - p) * m.get(1, 0);
                let v1 = p * m.get(0, 1) + (1.0 - p) * m.get(1, 1);
                best = best.max(v0.min(v1));
            }
            let sol = solve_zero_sum(&m, DEFAULT_TOL).unwrap();
            assert!((sol.value - best).abs() < 2e-4, "{} vs {}", sol.value, best);
        }
    }

    proptest::proptest! {
        #[test]
        fn antisymmetry_and_affine_invariance(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in 0u64..10_000,
            alpha in 0.1f64..5.0,
            beta in -3.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_payoff(&mut rng, rows, cols);
            let tol = DEFAULT_TOL;
            let sol = solve_zero_sum(&m, tol).unwrap();
            let neg = solve_zero_sum(&m.negated_transpose(), tol).unwrap();
            proptest::prop_assert!((sol.value + neg.value).abs() <= 2.0 * tol);

            let shifted = solve_zero_sum(&m.affine(alpha, beta), tol).unwrap();
            let gap = duality_gap(&m, &shifted.mu, &shifted.nu).unwrap();
            proptest::prop_assert!(gap <= tol / alpha + 1e-12);

            let (_, vmax) = best_response(&m, &sol.nu, Side::Max).unwrap();
            let (_, vmin) = best_response(&m, &sol.mu, Side::Min).unwrap();
            proptest::prop_assert!(vmax >= sol.value - tol);
            proptest::prop_assert!(vmin <= sol.value + tol);
        }
    }
}
