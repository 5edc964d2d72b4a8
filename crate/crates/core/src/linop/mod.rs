//! Finite-dimensional surrogates of the generator `A` of an analytic
//! semigroup: resolvent solves, the semigroup `S(t) = e^{tA}`, and fractional
//! powers `(-A)^s`.
//!
//! Symmetric operators, and tridiagonal operators whose off-diagonal products
//! are positive (these are diagonally similar to symmetric ones), carry an exact
//! real eigendecomposition. Everything else falls back to the Padé
//! scaling-and-squaring exponential.

mod expm;
mod tridiag;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{invalid, Error, Result};

pub use expm::expm;
pub use tridiag::{ThomasFactor, Tridiagonal};

/// Upper bound on the operator dimension handled by the dense paths.
pub const MAX_DIM: usize = 1024;

const DECOMPOSITION_TOL: f64 = 1e-8;
const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Dense,
    Tridiagonal,
}

/// Diagonalisation `A = V diag(lambda) V^{-1}` with real eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// `|V diag(lambda) V^{-1} - A|_F / |A|_F`.
    pub residual: f64,
}

impl SpectralData {
    fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.eigenvalues[k];
        }
        scaled * &self.inverse
    }

    /// `V diag(f(lambda)) V^{-1}`.
    pub fn function_matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[k]);
        }
        scaled * &self.inverse
    }

    /// `V diag(f(lambda)) V^{-1} v` in O(m^2).
    pub fn function_apply(&self, f: impl Fn(f64) -> f64, v: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = &self.inverse * v;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= f(self.eigenvalues[k]);
        }
        &self.vectors * coeffs
    }
}

#[derive(Debug, Clone)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
    bands: Option<Tridiagonal>,
    symmetric: bool,
    spectral: OnceLock<Option<SpectralData>>,
}

impl LinearOperator {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || m != matrix.ncols() {
            return Err(invalid(format!(
                "operator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if m > MAX_DIM {
            return Err(invalid(format!("dimension {m} exceeds cap {MAX_DIM}")));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(invalid("operator has non-finite entries"));
        }
        let symmetric = matrix == matrix.transpose();
        Ok(Self {
            matrix,
            bands: None,
            symmetric,
            spectral: OnceLock::new(),
        })
    }

    pub fn tridiagonal(bands: Tridiagonal) -> Result<Self> {
        let m = bands.dim();
        let mut matrix = DMatrix::zeros(m, m);
        for i in 0..m {
            matrix[(i, i)] = bands.diag[i];
            if i + 1 < m {
                matrix[(i + 1, i)] = bands.lower[i];
                matrix[(i, i + 1)] = bands.upper[i];
            }
        }
        let mut op = Self::dense(matrix)?;
        op.bands = Some(bands);
        Ok(op)
    }

    /// The second-difference matrix `h^{-2} tridiag(1, -2, 1)` on `m` interior
    /// nodes of `(0,1)` with homogeneous Dirichlet conditions, `h = 1/(m+1)`.
    pub fn dirichlet_laplacian(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let h = 1.0 / (m as f64 + 1.0);
        let inv = 1.0 / (h * h);
        Self::tridiagonal(Tridiagonal::new(
            vec![inv; m - 1],
            vec![-2.0 * inv; m],
            vec![inv; m - 1],
        ))
    }

    /// Dense symmetric negative definite operator `Q diag(-lambda_k) Q^T`
    /// with `lambda_k` log-spaced over `[1, 1e4]` and a fixed pseudo-random
    /// orthogonal `Q`. Its spectrum spans the time scales `1e-4..1` that the
    /// functional-calculus checks sweep over.
    pub fn symmetric_test(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let mut state = 0x853c_49e6_748f_ea9bu64;
        let raw = DMatrix::from_fn(m, m, |_, _| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        let q = raw.qr().q();
        let lambdas = DVector::from_fn(m, |k, _| {
            if m == 1 {
                -1.0
            } else {
                -(10f64.powf(4.0 * k as f64 / (m - 1) as f64))
            }
        });
        let a = &q * DMatrix::from_diagonal(&lambdas) * q.transpose();
        // Symmetrise exactly so the symmetric eigensolver applies.
        let a = (&a + a.transpose()) * 0.5;
        Self::dense(a)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn bands(&self) -> Option<&Tridiagonal> {
        self.bands.as_ref()
    }

    pub fn structure(&self) -> Structure {
        if self.bands.is_some() {
            Structure::Tridiagonal
        } else {
            Structure::Dense
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `A v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.bands {
            Some(b) => {
                let mut out = DVector::zeros(v.len());
                b.mul_into(v.as_slice(), out.as_mut_slice());
                out
            }
            None => &self.matrix * v,
        }
    }

    /// Exact real eigendecomposition when one is available and passes the
    /// reconstruction check.
    pub fn spectral(&self) -> Option<&SpectralData> {
        self.spectral.get_or_init(|| self.decompose()).as_ref()
    }

    fn decompose(&self) -> Option<SpectralData> {
        let m = self.dim();
        let data = if self.symmetric {
            let eig = self.matrix.clone().symmetric_eigen();
            let inverse = eig.eigenvectors.transpose();
            SpectralData {
                eigenvalues: eig.eigenvalues,
                vectors: eig.eigenvectors,
                inverse,
                residual: 0.0,
            }
        } else {
            // D^{-1} A D is symmetric for D_{i+1}/D_i = sqrt(l_i / u_i).
            let bands = self.bands.as_ref()?;
            if bands.lower.iter().zip(&bands.upper).any(|(l, u)| !(l * u > 0.0)) {
                return None;
            }
            let mut scale = vec![1.0f64; m];
            for i in 0..m - 1 {
                scale[i + 1] = scale[i] * (bands.lower[i] / bands.upper[i]).sqrt();
            }
            if scale.iter().any(|d| !d.is_finite() || *d == 0.0) {
                return None;
            }
            let mut sym = DMatrix::zeros(m, m);
            for i in 0..m {
                sym[(i, i)] = bands.diag[i];
                if i + 1 < m {
                    let off = (bands.lower[i] * bands.upper[i]).sqrt();
                    sym[(i + 1, i)] = off;
                    sym[(i, i + 1)] = off;
                }
            }
            let eig = sym.symmetric_eigen();
            let q = eig.eigenvectors;
            let vectors = DMatrix::from_fn(m, m, |i, k| scale[i] * q[(i, k)]);
            let inverse = DMatrix::from_fn(m, m, |k, i| q[(i, k)] / scale[i]);
            SpectralData {
                eigenvalues: eig.eigenvalues,
                vectors,
                inverse,
                residual: 0.0,
            }
        };
        let norm = self.matrix.norm();
        let err = (data.reconstruct() - &self.matrix).norm();
        let residual = if norm > 0.0 { err / norm } else { err };
        (residual <= DECOMPOSITION_TOL).then_some(SpectralData { residual, ..data })
    }

    /// Largest real part of the spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        match self.spectral() {
            Some(s) => s.eigenvalues.max(),
            None => self
                .matrix
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Prepares solves with `I - tau A`.
    pub fn resolvent(&self, tau: f64) -> Result<Resolvent> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("resolvent step must be positive, got {tau}")));
        }
        let singular = || Error::NumericalFailure {
            context: format!("factorising I - {tau} A"),
            residual: f64::INFINITY,
        };
        let solver = match &self.bands {
            Some(b) => {
                let shifted = b.shifted_identity(tau);
                let factor = ThomasFactor::new(&shifted).ok_or_else(singular)?;
                ResolventKind::Banded { shifted, factor }
            }
            None => {
                let m = self.dim();
                let shifted = DMatrix::identity(m, m) - &self.matrix * tau;
                let lu = shifted.clone().lu();
                if !lu.is_invertible() {
                    return Err(singular());
                }
                ResolventKind::Dense { shifted, lu }
            }
        };
        Ok(Resolvent { tau, solver })
    }

    /// `(I - tau A)^{-1} v`.
    pub fn resolvent_apply(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut w = v.clone();
        self.resolvent(tau)?.solve_in_place(w.as_mut_slice())?;
        Ok(w)
    }

    /// `S(t) = e^{tA}` as a matrix.
    pub fn semigroup_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("semigroup time must be nonnegative, got {t}")));
        }
        let m = self.dim();
        if t == 0.0 {
            return Ok(DMatrix::identity(m, m));
        }
        match self.spectral() {
            Some(s) => Ok(s.function_matrix(|l| (l * t).exp())),
            None => self.semigroup_matrix_pade(t),
        }
    }

    /// `S(t)` through scaling and squaring, bypassing the eigendecomposition.
    pub fn semigroup_matrix_pade(&self, t: f64) -> Result<DMatrix<f64>> {
        expm(&(&self.matrix * t)).ok_or_else(|| Error::NumericalFailure {
            context: "Padé denominator in matrix exponential".into(),
            residual: f64::INFINITY,
        })
    }

    /// `S(t) v`.
    pub fn semigroup_apply(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("semigroup time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        match self.spectral() {
            Some(s) => Ok(s.function_apply(|l| (l * t).exp(), v)),
            None => Ok(self.semigroup_matrix_pade(t)? * v),
        }
    }

    fn negative_definite_spectrum(&self) -> Result<&SpectralData> {
        if !self.symmetric {
            return Err(Error::UnsupportedOperator(
                "fractional powers need a symmetric operator".into(),
            ));
        }
        let s = self.spectral().ok_or_else(|| {
            Error::UnsupportedOperator("eigendecomposition failed its residual check".into())
        })?;
        if s.eigenvalues.iter().any(|l| !(*l < 0.0)) {
            return Err(Error::UnsupportedOperator(
                "fractional powers need a negative definite operator".into(),
            ));
        }
        Ok(s)
    }

    /// `(-A)^s` as a matrix.
    pub fn fractional_power_matrix(&self, s: f64) -> Result<DMatrix<f64>> {
        let spec = self.negative_definite_spectrum()?;
        Ok(spec.function_matrix(|l| (-l).powf(s)))
    }

    /// `(-A)^s v`.
    pub fn fractional_power_apply(&self, s: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let spec = self.negative_definite_spectrum()?;
        Ok(spec.function_apply(|l| (-l).powf(s), v))
    }
}

#[derive(Debug, Clone)]
enum ResolventKind {
    Banded {
        shifted: Tridiagonal,
        factor: ThomasFactor,
    },
    Dense {
        shifted: DMatrix<f64>,
        lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

/// A factorised `I - tau A`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    tau: f64,
    solver: ResolventKind,
}

impl Resolvent {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Overwrites `v` with `(I - tau A)^{-1} v`, checking the residual.
    pub fn solve_in_place(&self, v: &mut [f64]) -> Result<()> {
        let rhs_norm = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let residual = match &self.solver {
            ResolventKind::Banded { shifted, factor } => {
                let rhs = v.to_vec();
                factor.solve(v);
                let mut back = vec![0.0; v.len()];
                shifted.mul_into(v, &mut back);
                back.iter()
                    .zip(&rhs)
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            }
            ResolventKind::Dense { shifted, lu } => {
                let rhs = DVector::from_column_slice(v);
                let w = lu.solve(&rhs).ok_or_else(|| Error::NumericalFailure {
                    context: "dense resolvent solve".into(),
                    residual: f64::INFINITY,
                })?;
                v.copy_from_slice(w.as_slice());
                (shifted * &w - rhs).amax()
            }
        };
        let relative = if rhs_norm > 0.0 { residual / rhs_norm } else { residual };
        if !(relative <= SOLVE_TOL) {
            return Err(Error::NumericalFailure {
                context: format!("resolvent solve with tau = {}", self.tau),
                residual: relative,
            });
        }
        Ok(())
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut w = v.clone();
        self.solve_in_place(w.as_mut_slice())?;
        Ok(w)
    }

    /// `(I - tau A)^{-1}` as a dense matrix.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let m = match &self.solver {
            ResolventKind::Banded { shifted, .. } => shifted.dim(),
            ResolventKind::Dense { shifted, .. } => shifted.nrows(),
        };
        let mut out = DMatrix::identity(m, m);
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice())?;
        }
        Ok(out)
    }
}

/// Spectral norm `|M|_2` (largest singular value).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}
