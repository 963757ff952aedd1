//! The fair-PCA program: maximize captured variance subject to the projected
//! protected groups having zero MMD².
//!
//! ```text
//! f(V) = −tr(VᵀΣV)            (negated explained variance)
//! h(V) = MMD²(X₀V, X₁V)       (fairness constraint, h = 0 wanted)
//! Q(V, ρ) = f(V) + ρ h(V)     (exact penalty)
//! ```

use nalgebra::{DMatrix, SymmetricEigen};

use crate::kernel::{self, KernelConfig};
use crate::stiefel::{self, StiefelPoint, TangentVector};
use crate::{Error, Result};

/// A symmetric positive semidefinite `p×p` covariance matrix.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    trace: f64,
}

impl Covariance {
    /// Validates symmetry (to 1e-12, relative to the largest entry) and
    /// numerical positive semidefiniteness (eigenvalues ≥ −1e-10).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariance entry".into()));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "covariance is not symmetric (max |Σ − Σᵀ| = {asym:e})"
            )));
        }
        let min_eig = SymmetricEigen::new(matrix.clone()).eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidArgument(format!(
                "covariance is not positive semidefinite (λ_min = {min_eig:e})"
            )));
        }
        let trace = matrix.trace();
        Ok(Covariance { matrix, trace })
    }

    /// Sample covariance of the rows of `x` with the `1/(n−1)` divisor.
    pub fn from_samples(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "covariance needs at least two samples, got {n}"
            )));
        }
        let mean = x.row_mean();
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let mut s = centered.tr_mul(&centered) / (n as f64 - 1.0);
        // Exact symmetry; the product is symmetric only up to round-off.
        s = (&s + s.transpose()) * 0.5;
        Covariance::new(s)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Everything needed to evaluate `f`, `h` and `Q`.
#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    covariance: Covariance,
    data0: DMatrix<f64>,
    data1: DMatrix<f64>,
    kernel: KernelConfig,
}

/// `f`, `h`, `Q` and the Euclidean gradient of `Q` at one point.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub f: f64,
    pub h: f64,
    pub q: f64,
    pub euclidean_grad: DMatrix<f64>,
}

impl PenaltyProblem {
    pub fn new(
        covariance: Covariance,
        data0: DMatrix<f64>,
        data1: DMatrix<f64>,
        kernel: KernelConfig,
    ) -> Result<Self> {
        let p = covariance.dim();
        if data0.ncols() != p || data1.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {p}×{p} but group data have {} and {} columns",
                data0.ncols(),
                data1.ncols()
            )));
        }
        if data0.nrows() == 0 || data1.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "both protected groups must be non-empty".into(),
            ));
        }
        Ok(PenaltyProblem {
            covariance,
            data0,
            data1,
            kernel,
        })
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn data0(&self) -> &DMatrix<f64> {
        &self.data0
    }

    pub fn data1(&self) -> &DMatrix<f64> {
        &self.data1
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn p(&self) -> usize {
        self.covariance.dim()
    }

    fn check(&self, v: &StiefelPoint) -> Result<()> {
        if v.p() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "loading matrix has {} rows, problem has p = {}",
                v.p(),
                self.p()
            )));
        }
        Ok(())
    }

    /// `(f(V), h(V))` without gradients.
    pub(crate) fn values(&self, v: &StiefelPoint) -> (f64, f64) {
        let f = neg_trace_form(self.covariance.matrix(), v.matrix());
        let h = kernel::projected_mmd(v.matrix(), &self.data0, &self.data1, &self.kernel);
        (f, h)
    }

    /// `f`, `h`, `Q(V, ρ)` and `∇Q = −2ΣV + ρ∇h`.
    pub fn evaluate(&self, v: &StiefelPoint, rho: f64) -> Result<PenaltyEval> {
        self.check(v)?;
        check_rho(rho)?;
        let f = neg_trace_form(self.covariance.matrix(), v.matrix());
        let (h, grad_h) =
            kernel::mmd_value_and_gradient(v.matrix(), &self.data0, &self.data1, &self.kernel);
        let euclidean_grad = self.covariance.matrix() * v.matrix() * -2.0 + grad_h * rho;
        Ok(PenaltyEval {
            f,
            h,
            q: f + rho * h,
            euclidean_grad,
        })
    }

    /// Riemannian gradient of `Q(·, ρ)` at `V`.
    pub fn penalty_riemannian_gradient(&self, v: &StiefelPoint, rho: f64) -> Result<TangentVector> {
        let eval = self.evaluate(v, rho)?;
        stiefel::riemannian_gradient(v, &eval.euclidean_grad)
    }
}

/// `f(V) = −tr(VᵀΣV)`.
pub fn objective_f(prob: &PenaltyProblem, v: &StiefelPoint) -> Result<f64> {
    prob.check(v)?;
    Ok(neg_trace_form(prob.covariance.matrix(), v.matrix()))
}

/// `∇f(V) = −2ΣV`.
pub fn objective_f_gradient(prob: &PenaltyProblem, v: &StiefelPoint) -> Result<DMatrix<f64>> {
    prob.check(v)?;
    Ok(prob.covariance.matrix() * v.matrix() * -2.0)
}

/// `h(V) = MMD²(X₀V, X₁V)`.
pub fn constraint_h(prob: &PenaltyProblem, v: &StiefelPoint) -> Result<f64> {
    prob.check(v)?;
    Ok(kernel::projected_mmd(
        v.matrix(),
        &prob.data0,
        &prob.data1,
        &prob.kernel,
    ))
}

/// `Q(V, ρ) = f(V) + ρ h(V)`, `ρ > 0`.
pub fn penalty_q(prob: &PenaltyProblem, v: &StiefelPoint, rho: f64) -> Result<f64> {
    prob.check(v)?;
    check_rho(rho)?;
    let (f, h) = prob.values(v);
    Ok(f + rho * h)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty weight must be positive and finite, got {rho}"
        )));
    }
    Ok(())
}

pub(crate) fn neg_trace_form(sigma: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    -(sigma * v).dot(v)
}
