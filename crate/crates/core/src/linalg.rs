//! Small dense weighted least squares via normal equations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which the Gram matrix is ridge-regularized.
pub const CONDITION_GATE: f64 = 1e12;
/// Ridge multiplier, applied as `RIDGE_FACTOR * trace(G) / P`.
pub const RIDGE_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GramSolution {
    pub coef: Vec<f64>,
    /// Condition number of the unregularized Gram matrix.
    pub condition: f64,
    pub ridged: bool,
    /// Inverse of the (possibly regularized) Gram matrix.
    pub inverse: DMatrix<f64>,
}

/// Accumulates `sum w x x'` and `sum w x y`.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn new(p: usize) -> Self {
        Self { gram: DMatrix::zeros(p, p), rhs: DVector::zeros(p) }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn add(&mut self, x: &[f64], y: f64, w: f64) {
        let p = self.dim();
        debug_assert_eq!(x.len(), p);
        for a in 0..p {
            let wxa = w * x[a];
            self.rhs[a] += wxa * y;
            for b in 0..=a {
                self.gram[(a, b)] += wxa * x[b];
            }
        }
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = self.gram.clone();
        g.fill_upper_triangle_with_lower_triangle();
        g
    }

    pub fn solve(&self, context: &str) -> Result<GramSolution> {
        solve_gram(&self.gram(), &self.rhs, context)
    }
}

pub fn condition_number(gram: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves `G b = r` for symmetric positive semi-definite `G`, applying the
/// ridge term when the condition gate fails.
pub fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<GramSolution> {
    let p = rhs.len();
    let singular = || Error::SingularGram { context: context.to_string() };
    if p == 0 || gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let condition = condition_number(gram);
    let (matrix, ridged) = if condition <= CONDITION_GATE {
        (gram.clone(), false)
    } else {
        let trace = gram.trace();
        if !(trace > 0.0) {
            return Err(singular());
        }
        let ridge = RIDGE_FACTOR * trace / p as f64;
        (gram + DMatrix::identity(p, p) * ridge, true)
    };
    let chol = matrix.cholesky().ok_or_else(singular)?;
    let coef = chol.solve(rhs);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(GramSolution { coef: coef.iter().copied().collect(), condition, ridged, inverse: chol.inverse() })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
