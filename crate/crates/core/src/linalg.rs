//! Small dense symmetric helpers for the log-determinant calculator.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `n × n` symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `self += scale · z zᵀ`.
    pub fn add_outer(&mut self, z: &[f64], scale: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += scale * z[i] * z[j];
            }
        }
    }

    /// `log det` via Cholesky; `None` if the matrix is not positive definite.
    pub fn log_det(&self) -> Option<f64> {
        let l = self.cholesky()?;
        let n = self.n;
        Some((0..n).map(|i| 2.0 * libm::log(l[i * n + i])).sum())
    }

    /// `zᵀ self⁻¹ z`; `None` if not positive definite.
    pub fn inv_quad(&self, z: &[f64]) -> Option<f64> {
        let l = self.cholesky()?;
        let n = self.n;
        // Forward solve L y = z; then zᵀA⁻¹z = ‖y‖².
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = z[i];
            for k in 0..i {
                acc -= l[i * n + k] * y[k];
            }
            y[i] = acc / l[i * n + i];
        }
        Some(y.iter().map(|v| v * v).sum())
    }

    fn cholesky(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = self.data[i * n + j];
                for k in 0..j {
                    acc -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(acc > 0.0) {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(acc);
                } else {
                    l[i * n + j] = acc / l[j * n + j];
                }
            }
        }
        Some(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_of_diagonal() {
        let mut m = SymMatrix::identity(3);
        m.add_outer(&[1.0, 0.0, 0.0], 3.0);
        m.add_outer(&[0.0, 2.0, 0.0], 1.0);
        let expected = libm::log(4.0) + libm::log(5.0);
        assert!((m.log_det().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn inverse_quadratic_matches_rank_one_formula() {
        // (I + c zzᵀ)⁻¹ has zᵀ(·)z = |z|²/(1 + c|z|²).
        let z = [0.3, -0.4, 1.2];
        let mut m = SymMatrix::identity(3);
        m.add_outer(&z, 2.0);
        let n2: f64 = z.iter().map(|v| v * v).sum();
        let expected = n2 / (1.0 + 2.0 * n2);
        assert!((m.inv_quad(&z).unwrap() - expected).abs() < 1e-12);
        let det_expected = libm::log(1.0 + 2.0 * n2);
        assert!((m.log_det().unwrap() - det_expected).abs() < 1e-12);
    }
}
