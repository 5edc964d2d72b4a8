//! Banded storage and the Thomas algorithm for tridiagonal systems.

/// Tridiagonal matrix stored by diagonals. `lower[i]` is entry `(i+1, i)`,
/// `upper[i]` is entry `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let m = diag.len();
        assert!(m >= 1, "empty tridiagonal matrix");
        assert_eq!(lower.len(), m - 1, "sub-diagonal length");
        assert_eq!(upper.len(), m - 1, "super-diagonal length");
        Self { lower, diag, upper }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `I - tau * self`.
    pub fn shifted_identity(&self, tau: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower.iter().map(|l| -tau * l).collect(),
            diag: self.diag.iter().map(|d| 1.0 - tau * d).collect(),
            upper: self.upper.iter().map(|u| -tau * u).collect(),
        }
    }

    /// `out = self * v`.
    pub fn mul_into(&self, v: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for i in 0..m {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.lower[i - 1] * v[i - 1];
            }
            if i + 1 < m {
                acc += self.upper[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }
}

/// Thomas forward sweep, factored once and reused for every right-hand side.
#[derive(Debug, Clone)]
pub struct ThomasFactor {
    lower: Vec<f64>,
    // modified super-diagonal c'_i and reciprocal pivots
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThomasFactor {
    /// Returns `None` when a pivot vanishes or is not finite.
    pub fn new(a: &Tridiagonal) -> Option<Self> {
        let m = a.dim();
        let mut c_prime = vec![0.0; m.saturating_sub(1)];
        let mut inv_pivot = vec![0.0; m];
        let mut pivot = a.diag[0];
        for i in 0..m {
            if i > 0 {
                pivot = a.diag[i] - a.lower[i - 1] * c_prime[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < m {
                c_prime[i] = a.upper[i] * inv_pivot[i];
            }
        }
        Some(Self {
            lower: a.lower.clone(),
            c_prime,
            inv_pivot,
        })
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let m = self.inv_pivot.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}
