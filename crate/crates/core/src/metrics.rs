//! Evaluation of a loading matrix: explained variance, MMD² between the
//! projected protected groups, a downstream classifier for accuracy and the
//! demographic-parity gap, and per-feature communalities.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::data::DataSet;
use crate::kernel::{self, GroupedSamples, KernelConfig};
use crate::objective::{neg_trace_form, Covariance};
use crate::solver::Status;
use crate::stiefel::StiefelPoint;
use crate::{Error, Result};

/// `100 · tr(VᵀΣV) / tr(Σ)`.
pub fn explained_variance(cov: &Covariance, v: &StiefelPoint) -> Result<f64> {
    if cov.dim() != v.p() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {0}×{0}, loadings have {1} rows",
            cov.dim(),
            v.p()
        )));
    }
    if cov.trace() <= 0.0 {
        return Err(Error::Degenerate("covariance has zero trace".into()));
    }
    Ok(100.0 * -neg_trace_form(cov.matrix(), v.matrix()) / cov.trace())
}

/// MMD² between the two protected groups of `ds` after projection onto `V`,
/// with a bandwidth fixed beforehand (normally the training-time one).
pub fn fairness_mmd2(ds: &DataSet, v: &StiefelPoint, cfg: &KernelConfig) -> Result<f64> {
    if ds.p() != v.p() {
        return Err(Error::DimensionMismatch(format!(
            "data have {} features, loadings have {} rows",
            ds.p(),
            v.p()
        )));
    }
    let s = GroupedSamples::new(ds.group(0) * v.matrix(), ds.group(1) * v.matrix())?;
    Ok(kernel::mmd_squared(&s, cfg))
}

/// Entry `j` is `Σ_l V[j,l]²`; entries sum to `d`.
pub fn communalities(v: &StiefelPoint) -> Vec<f64> {
    v.matrix().row_iter().map(|r| r.norm_squared()).collect()
}

/// A binary classifier on projected samples.
pub trait Classifier {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierOptions {
    /// Ridge penalty on the RKHS norm of the decision function.
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            lambda: 1e-2,
            tol: 1e-6,
            max_iters: 10_000,
        }
    }
}

/// RBF-kernel logistic regression, `P(y=1 | x) = s(Σᵢ αᵢ k(x, xᵢ) + b)`,
/// minimizing mean log-loss plus `λ/2 ‖g‖²_H`.
#[derive(Debug, Clone)]
pub struct KernelLogistic {
    support: DMatrix<f64>,
    alpha: DVector<f64>,
    bias: f64,
    kernel: KernelConfig,
    pub iterations: usize,
    pub converged: bool,
}

impl KernelLogistic {
    fn scores(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let k = gram(x, &self.support, &self.kernel);
        (k * &self.alpha).add_scalar(self.bias)
    }

    pub fn probabilities(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.scores(x).iter().map(|&s| sigmoid(s)).collect()
    }
}

impl Classifier for KernelLogistic {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<u8> {
        self.probabilities(x).into_iter().map(|p| u8::from(p >= 0.5)).collect()
    }
}

/// Fits [`KernelLogistic`] by gradient descent in the RKHS geometry: the
/// coefficient update is `α ← α − η((p − y)/n + λα)`, which is the kernel
/// gradient premultiplied by `K⁻¹`, with `η = 1/(¼ + λ)`. Iterates until the
/// per-sample stationarity residual `max(n‖(p − y)/n + λα‖_∞, |mean(p − y)|)`
/// drops below `tol`.
pub fn train_downstream_classifier(
    train_projected: &DMatrix<f64>,
    labels: &[u8],
    cfg: &KernelConfig,
    opts: &ClassifierOptions,
) -> Result<KernelLogistic> {
    let n = train_projected.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} training rows but {} labels",
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::Degenerate(
            "classifier training labels contain a single class".into(),
        ));
    }
    let k = gram(train_projected, train_projected, cfg);
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(l)));
    let nf = n as f64;
    let eta = 1.0 / (0.25 + opts.lambda);
    let mut alpha = DVector::zeros(n);
    let mut bias = (y.mean() / (1.0 - y.mean())).ln();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let s = (&k * &alpha).add_scalar(bias);
        let resid = DVector::from_fn(n, |i, _| sigmoid(s[i]) - y[i]);
        let r = &resid / nf + &alpha * opts.lambda;
        let r_bias = resid.mean();
        if (r.amax() * nf).max(r_bias.abs()) <= opts.tol {
            converged = true;
            break;
        }
        alpha -= r * eta;
        bias -= 4.0 * r_bias;
        iterations += 1;
    }
    Ok(KernelLogistic {
        support: train_projected.clone(),
        alpha,
        bias,
        kernel: *cfg,
        iterations,
        converged,
    })
}

/// Percentage of correct predictions.
pub fn classifier_accuracy(clf: &dyn Classifier, x: &DMatrix<f64>, labels: &[u8]) -> Result<f64> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch("labels and rows differ in length".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no rows to score".into()));
    }
    let correct = clf
        .predict(x)
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

/// `|mean prediction on group 0 − mean prediction on group 1|`.
pub fn demographic_parity_gap(predictions: &[u8], protected: &[u8]) -> Result<f64> {
    if predictions.len() != protected.len() {
        return Err(Error::DimensionMismatch("predictions and groups differ in length".into()));
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (&yhat, &a) in predictions.iter().zip(protected) {
        sums[a as usize] += f64::from(yhat);
        counts[a as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Degenerate("a protected group has no rows".into()));
    }
    Ok((sums[0] / counts[0] as f64 - sums[1] / counts[1] as f64).abs())
}

/// Demographic-parity gap of `clf` on the projected test rows.
pub fn delta_dp(clf: &dyn Classifier, test_projected: &DMatrix<f64>, protected: &[u8]) -> Result<f64> {
    demographic_parity_gap(&clf.predict(test_projected), protected)
}

fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>, cfg: &KernelConfig) -> DMatrix<f64> {
    let d = a.ncols();
    let ra = kernel::row_major(a);
    let rb = kernel::row_major(b);
    let g = -1.0 / (2.0 * cfg.sigma() * cfg.sigma());
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let x = &ra[i * d..(i + 1) * d];
        let y = &rb[j * d..(j + 1) * d];
        let sq: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
        (sq * g).exp()
    })
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Everything reported for one fitted loading matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub method: String,
    pub explained_variance_pct: f64,
    pub mmd2_train: f64,
    pub mmd2_test: f64,
    pub accuracy_pct: Option<f64>,
    pub delta_dp: Option<f64>,
    pub communalities: Vec<f64>,
    pub feature_names: Vec<String>,
    pub status: Status,
    pub outer_iterations: usize,
    /// Hyperparameters and conventions in effect, in a stable order.
    pub config_echo: Vec<(String, String)>,
}

/// Column order of [`FitReport::csv_row`].
pub const REPORT_CSV_HEADER: &str = "split,method,status,outer_iterations,explained_variance_pct,mmd2_train,mmd2_test,accuracy_pct,delta_dp";

impl FitReport {
    /// `key=value` lines; communalities as `communality.<feature>`.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method={}", self.method);
        let _ = writeln!(out, "status={}", self.status.as_str());
        let _ = writeln!(out, "outer_iterations={}", self.outer_iterations);
        let _ = writeln!(out, "explained_variance_pct={}", self.explained_variance_pct);
        let _ = writeln!(out, "mmd2_train={}", self.mmd2_train);
        let _ = writeln!(out, "mmd2_test={}", self.mmd2_test);
        let _ = writeln!(out, "accuracy_pct={}", opt(self.accuracy_pct));
        let _ = writeln!(out, "delta_dp={}", opt(self.delta_dp));
        for (name, c) in self.feature_names.iter().zip(&self.communalities) {
            let _ = writeln!(out, "communality.{name}={c}");
        }
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out
    }

    /// One row matching [`REPORT_CSV_HEADER`].
    pub fn csv_row(&self, split: usize) -> String {
        format!(
            "{split},{},{},{},{},{},{},{},{}",
            self.method,
            self.status.as_str(),
            self.outer_iterations,
            self.explained_variance_pct,
            self.mmd2_train,
            self.mmd2_test,
            opt(self.accuracy_pct),
            opt(self.delta_dp),
        )
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}
