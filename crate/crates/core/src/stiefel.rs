//! Geometry of the Stiefel manifold `St(p, d) = {V ∈ ℝ^{p×d} : VᵀV = I_d}`
//! with the metric inherited from the Frobenius inner product.
//!
//! The tangent space at `V` is `{ξ : Vᵀξ + ξᵀV = 0}` and the orthogonal
//! projection onto it is `P_V(G) = G − V sym(VᵀG)`. Riemannian gradients are
//! projected Euclidean gradients. Steps are taken with the QR retraction
//! `qf(V + tξ)`, the `Q` factor normalized to a positive-diagonal `R`.

use nalgebra::DMatrix;

use crate::rng::SeededRng;
use crate::{Error, Result};

/// Orthonormality tolerance enforced at construction.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Tangency tolerance, relative to `max(1, ‖ξ‖_F)`.
pub const TANGENCY_TOL: f64 = 1e-8;

/// A `p×d` matrix with orthonormal columns, `p > d ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    matrix: DMatrix<f64>,
}

impl StiefelPoint {
    /// Validates shape and `‖VᵀV − I‖_F ≤ 1e-10`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_shape(matrix.nrows(), matrix.ncols())?;
        let residual = orthonormality_residual(&matrix);
        if !(residual <= ORTHONORMALITY_TOL) {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(StiefelPoint { matrix })
    }

    /// Q factor of a thin QR decomposition of `matrix`, with the sign of
    /// every column chosen so that `R` has a positive diagonal.
    pub fn orthonormalize(matrix: DMatrix<f64>) -> Result<Self> {
        check_shape(matrix.nrows(), matrix.ncols())?;
        Ok(StiefelPoint {
            matrix: positive_qr(matrix)?,
        })
    }

    /// A point drawn from the uniform (Haar) distribution on `St(p, d)`.
    pub fn random(p: usize, d: usize, rng: &mut SeededRng) -> Self {
        let g = DMatrix::from_fn(p, d, |_, _| rng.standard_normal());
        Self::orthonormalize(g).expect("Gaussian matrix has full column rank")
    }

    /// The first `d` standard basis vectors of `ℝ^p`.
    pub fn canonical(p: usize, d: usize) -> Result<Self> {
        check_shape(p, d)?;
        Ok(StiefelPoint {
            matrix: DMatrix::identity(p, d),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.matrix.ncols()
    }

    /// `‖VᵀV − I‖_F`.
    pub fn residual(&self) -> f64 {
        orthonormality_residual(&self.matrix)
    }

    /// Re-orthonormalizes when accumulated drift exceeds the construction
    /// tolerance; returns the point unchanged otherwise.
    pub fn healed(self) -> Self {
        if self.residual() <= ORTHONORMALITY_TOL {
            self
        } else {
            StiefelPoint {
                matrix: positive_qr(self.matrix).expect("drifted point keeps full rank"),
            }
        }
    }
}

/// A tangent vector `ξ` at some point `V`, i.e. `sym(Vᵀξ) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    matrix: DMatrix<f64>,
}

impl TangentVector {
    /// Validates the tangency condition at `base`.
    pub fn new(base: &StiefelPoint, matrix: DMatrix<f64>) -> Result<Self> {
        check_dims(base, &matrix)?;
        let res = tangency_residual(base, &matrix);
        if res > TANGENCY_TOL * matrix.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not tangent: ‖sym(Vᵀξ)‖_F = {res:e}"
            )));
        }
        Ok(TangentVector { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            matrix: &self.matrix * s,
        }
    }
}

/// `G − V sym(VᵀG)`.
pub fn tangent_project(v: &StiefelPoint, g: &DMatrix<f64>) -> Result<TangentVector> {
    check_dims(v, g)?;
    let vtg = v.matrix.tr_mul(g);
    let sym = (&vtg + vtg.transpose()) * 0.5;
    Ok(TangentVector {
        matrix: g - &v.matrix * sym,
    })
}

/// Projection of a Euclidean gradient onto the tangent space at `v`.
pub fn riemannian_gradient(v: &StiefelPoint, euclidean_grad: &DMatrix<f64>) -> Result<TangentVector> {
    tangent_project(v, euclidean_grad)
}

/// `qf(V + tξ)`; `t = 0` returns `V` unchanged.
pub fn retract(v: &StiefelPoint, xi: &TangentVector, t: f64) -> Result<StiefelPoint> {
    check_dims(v, &xi.matrix)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite step {t}")));
    }
    if t == 0.0 {
        return Ok(v.clone());
    }
    let y = &v.matrix + &xi.matrix * t;
    Ok(StiefelPoint {
        matrix: positive_qr(y)?,
    })
}

/// `‖sym(Vᵀξ)‖_F`.
pub fn tangency_residual(v: &StiefelPoint, xi: &DMatrix<f64>) -> f64 {
    let a = v.matrix.tr_mul(xi);
    ((&a + a.transpose()) * 0.5).norm()
}

pub fn orthonormality_residual(m: &DMatrix<f64>) -> f64 {
    let mut g = m.tr_mul(m);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

fn positive_qr(y: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    let d = y.ncols();
    let qr = y.qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = (0..d).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let min_diag = (0..d).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_diag > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::RetractionFailure { min_diag });
    }
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

fn check_shape(p: usize, d: usize) -> Result<()> {
    if d == 0 || p <= d {
        return Err(Error::InvalidArgument(format!(
            "Stiefel manifold needs p > d ≥ 1, got p = {p}, d = {d}"
        )));
    }
    Ok(())
}

fn check_dims(v: &StiefelPoint, g: &DMatrix<f64>) -> Result<()> {
    if g.shape() != v.matrix.shape() {
        return Err(Error::DimensionMismatch(format!(
            "expected a {}×{} matrix, got {}×{}",
            v.p(),
            v.d(),
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(())
}
