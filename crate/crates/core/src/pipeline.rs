//! End-to-end fitting on a train/test pair: z-score with training
//! statistics, vanilla PCA (warm start and bandwidth reference), penalty
//! method, and evaluation of the resulting loadings.

use crate::data::{apply_standardization, standardize, DataSet};
use crate::kernel::KernelConfig;
use crate::metrics::{
    self, classifier_accuracy, communalities, delta_dp, explained_variance, ClassifierOptions,
    FitReport,
};
use crate::objective::{Covariance, PenaltyProblem};
use crate::pca::vanilla_pca;
use crate::solver::{repms_fit, FitOutcome, RepmsConfig, Status};
use crate::stiefel::StiefelPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dim: usize,
    pub repms: RepmsConfig,
    /// Fixed bandwidth; `None` selects it by the median heuristic.
    pub sigma: Option<f64>,
    pub classifier: ClassifierOptions,
}

impl PipelineConfig {
    pub fn new(dim: usize) -> Self {
        PipelineConfig {
            dim,
            repms: RepmsConfig::default(),
            sigma: None,
            classifier: ClassifierOptions::default(),
        }
    }
}

/// Standardized data and everything derived from the training part before
/// any constrained fit.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: DataSet,
    pub test: DataSet,
    pub covariance: Covariance,
    pub pca: StiefelPoint,
    pub kernel: KernelConfig,
}

/// Standardizes both parts with training statistics, computes the training
/// covariance and the top-`dim` PCA loadings, and freezes σ (median of the
/// pairwise distances of the PCA-projected training rows unless given).
pub fn prepare(train: &DataSet, test: &DataSet, dim: usize, sigma: Option<f64>) -> Result<Prepared> {
    if train.p() != test.p() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} features, test has {}",
            train.p(),
            test.p()
        )));
    }
    let train = standardize(train)?;
    let test = apply_standardization(test, train.standardization.as_ref().expect("set by standardize"))?;
    let covariance = Covariance::from_samples(&train.features)?;
    let pca = vanilla_pca(&covariance, dim)?;
    let kernel = match sigma {
        Some(s) => KernelConfig::new(s)?,
        None => KernelConfig::from_median_heuristic(&(&train.features * pca.matrix()))?,
    };
    Ok(Prepared {
        train,
        test,
        covariance,
        pca,
        kernel,
    })
}

impl Prepared {
    pub fn problem(&self) -> Result<PenaltyProblem> {
        PenaltyProblem::new(
            self.covariance.clone(),
            self.train.group(0),
            self.train.group(1),
            self.kernel,
        )
    }

    /// Runs the penalty method from the PCA warm start.
    pub fn fit(&self, cfg: &RepmsConfig) -> Result<FitOutcome> {
        repms_fit(&self.problem()?, &self.pca, cfg)
    }

    /// Scores `v`: explained variance on the training covariance, MMD² on
    /// both parts with the frozen σ, and, when outcomes are present, the
    /// downstream classifier's test accuracy and parity gap.
    pub fn evaluate(
        &self,
        method: &str,
        v: &StiefelPoint,
        status: Status,
        outer_iterations: usize,
        cfg: &PipelineConfig,
    ) -> Result<FitReport> {
        let (accuracy_pct, delta) = match (&self.train.outcome, &self.test.outcome) {
            (Some(y_train), Some(y_test)) => {
                let z_train = &self.train.features * v.matrix();
                let z_test = &self.test.features * v.matrix();
                let clf_kernel = KernelConfig::from_median_heuristic(&z_train)?;
                let clf = metrics::train_downstream_classifier(&z_train, y_train, &clf_kernel, &cfg.classifier)?;
                (
                    Some(classifier_accuracy(&clf, &z_test, y_test)?),
                    Some(delta_dp(&clf, &z_test, &self.test.protected)?),
                )
            }
            _ => (None, None),
        };
        Ok(FitReport {
            method: method.to_string(),
            explained_variance_pct: explained_variance(&self.covariance, v)?,
            mmd2_train: metrics::fairness_mmd2(&self.train, v, &self.kernel)?,
            mmd2_test: metrics::fairness_mmd2(&self.test, v, &self.kernel)?,
            accuracy_pct,
            delta_dp: delta,
            communalities: communalities(v),
            feature_names: self.train.feature_names.clone(),
            status,
            outer_iterations,
            config_echo: self.config_echo(cfg),
        })
    }

    fn config_echo(&self, cfg: &PipelineConfig) -> Vec<(String, String)> {
        let r = &cfg.repms;
        let mut echo: Vec<(String, String)> = vec![
            ("dim", cfg.dim.to_string()),
            ("sigma", self.kernel.sigma().to_string()),
            ("bandwidth_selection", self.kernel.selection().as_str().to_string()),
            ("standardization_divisor", "n-1".to_string()),
            ("covariance_divisor", "n-1".to_string()),
            ("mmd_estimator", "biased_v_statistic".to_string()),
            ("init", "vanilla_pca".to_string()),
            ("tau", r.tau.to_string()),
            ("max_outer_iters", r.max_outer_iters.to_string()),
            ("eps0", r.eps0.to_string()),
            ("eps_min", r.eps_min.to_string()),
            ("theta_eps", r.theta_eps.to_string()),
            ("rho0", r.rho0.to_string()),
            ("theta_rho", r.theta_rho.to_string()),
            ("rho_max", r.rho_max.to_string()),
            ("d_min", r.d_min.to_string()),
            ("inner_max_iters", r.inner_max_iters.to_string()),
            ("inner_solver", "riemannian_gradient_descent_armijo_bb".to_string()),
            ("seed", r.seed.to_string()),
            ("classifier", "rbf_kernel_logistic_regression".to_string()),
            ("classifier_lambda", cfg.classifier.lambda.to_string()),
            ("classifier_tol", cfg.classifier.tol.to_string()),
            ("classifier_bandwidth", "median_heuristic_on_projected_train".to_string()),
            ("train_rows", self.train.n().to_string()),
            ("test_rows", self.test.n().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        echo.extend(self.train.metadata.iter().map(|(k, v)| (format!("data.{k}"), v.clone())));
        echo
    }
}

/// Results of one train/test pass: the PCA baseline and the fair fit.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub prepared: Prepared,
    pub pca_report: FitReport,
    pub outcome: FitOutcome,
    pub report: FitReport,
}

pub fn run(train: &DataSet, test: &DataSet, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.repms.validate()?;
    let prepared = prepare(train, test, cfg.dim, cfg.sigma)?;
    let pca_report = prepared.evaluate("pca", &prepared.pca, Status::ProperTermination, 0, cfg)?;
    let outcome = prepared.fit(&cfg.repms)?;
    let report = prepared.evaluate(
        &format!("mbfpca(tau={})", cfg.repms.tau),
        &outcome.v,
        outcome.status,
        outcome.history.len(),
        cfg,
    )?;
    Ok(PipelineRun {
        prepared,
        pca_report,
        outcome,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth1, SplitSpec};
    use nalgebra::DMatrix;

    #[test]
    fn test_rows_use_training_statistics() {
        let ds = synth1(4);
        let (train, test) = split(&ds, &SplitSpec { train_fraction: 0.7, seed: 4 }).unwrap();
        let prep = prepare(&train, &test, 2, None).unwrap();
        let params = prep.train.standardization.clone().unwrap();
        assert_eq!(prep.test.standardization.as_ref(), Some(&params));
        let raw = test.features[(0, 1)];
        assert!((prep.test.features[(0, 1)] - (raw - params.means[1]) / params.stds[1]).abs() < 1e-15);
        assert!((prep.covariance.trace() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn sigma_override_is_respected() {
        let ds = synth1(5);
        let (train, test) = split(&ds, &SplitSpec { train_fraction: 0.7, seed: 5 }).unwrap();
        let prep = prepare(&train, &test, 2, Some(0.75)).unwrap();
        assert_eq!(prep.kernel.sigma(), 0.75);
    }

    #[test]
    fn identical_groups_recover_pca() {
        let base = DMatrix::from_fn(40, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 + (j as f64) * (i as f64).sin());
        let features = DMatrix::from_fn(80, 4, |i, j| base[(i % 40, j)]);
        let protected = (0..80).map(|i| u8::from(i >= 40)).collect();
        let names = (0..4).map(|j| format!("x{j}")).collect();
        let ds = DataSet::new(features, protected, None, names).unwrap();
        let run = run(&ds, &ds, &PipelineConfig::new(2)).unwrap();
        assert_eq!(run.outcome.status, Status::ProperTermination);
        assert!(run.report.mmd2_train < 1e-12);
        assert!((run.report.explained_variance_pct - run.pca_report.explained_variance_pct).abs() < 1e-6);
        assert!(run.report.delta_dp.is_none());
    }
}
