//! Riemannian exact penalty method for the fair-PCA program.
//!
//! The outer loop solves a sequence of smooth sub-problems
//! `min_{V ∈ St(p,d)} Q(V, ρ_k)` to tolerance `ε_k`, each warm-started at the
//! previous solution. After every sub-problem
//!
//! ```text
//! stop     if ‖V_{k+1} − V_k‖_F ≤ d_min and ε_k ≤ ε_min and h(V_{k+1}) ≤ τ
//! ε_{k+1} = max(ε_min, θ_ε ε_k)
//! ρ_{k+1} = min(θ_ρ ρ_k, ρ_max)   if h(V_{k+1}) > τ, else ρ_k
//! ```
//!
//! The fairness gate on the stopping rule keeps the loop running until the
//! iterate is τ-approximate fair or the iteration budget is spent. No
//! smoothing is applied: `h` is smooth and never negative.
//!
//! Sub-problems are solved by Riemannian gradient descent with a monotone
//! Armijo backtracking line search whose trial step comes from the
//! Barzilai–Borwein formula.

use nalgebra::DMatrix;

use crate::objective::PenaltyProblem;
use crate::stiefel::{self, StiefelPoint};
use crate::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const ROUNDOFF_FLOOR: f64 = 1e-13;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e12;

/// Hyperparameters of the penalty method.
#[derive(Debug, Clone, PartialEq)]
pub struct RepmsConfig {
    /// Outer iterations run for `k = 0..=max_outer_iters`.
    pub max_outer_iters: usize,
    pub eps0: f64,
    pub eps_min: f64,
    pub theta_eps: f64,
    pub rho0: f64,
    pub theta_rho: f64,
    pub rho_max: f64,
    pub tau: f64,
    pub d_min: f64,
    pub inner_max_iters: usize,
    pub seed: u64,
}

impl Default for RepmsConfig {
    fn default() -> Self {
        default_config()
    }
}

/// `K = 100`, `ε_min = 1e-6`, `ε₀ = 0.1`, `θ_ε = (ε_min/ε₀)^{1/5}`,
/// `ρ_max = 1e10`, `θ_ρ = 2`, `d_min = 1e-6`, `ρ₀ = 1`, `τ = 1e-5`.
pub fn default_config() -> RepmsConfig {
    let eps_min = 1e-6;
    let eps0 = 1e-1;
    RepmsConfig {
        max_outer_iters: 100,
        eps0,
        eps_min,
        theta_eps: (eps_min / eps0).powf(1.0 / 5.0),
        rho0: 1.0,
        theta_rho: 2.0,
        rho_max: 1e10,
        tau: 1e-5,
        d_min: 1e-6,
        inner_max_iters: 2000,
        seed: 0,
    }
}

impl RepmsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.eps_min) || !pos(self.eps0) {
            return bad("eps_min and eps0 must be positive");
        }
        if self.eps_min > self.eps0 {
            return bad("eps_min must not exceed eps0");
        }
        if !(self.theta_eps > 0.0 && self.theta_eps < 1.0) {
            return bad("theta_eps must lie in (0, 1)");
        }
        if !pos(self.rho0) {
            return bad("rho0 must be positive");
        }
        if !(self.theta_rho > 1.0 && self.theta_rho.is_finite()) {
            return bad("theta_rho must exceed 1");
        }
        if !(self.rho_max >= self.rho0) || self.rho_max.is_nan() {
            return bad("rho_max must be at least rho0");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad("tau must be non-negative");
        }
        if !pos(self.d_min) {
            return bad("d_min must be positive");
        }
        if self.inner_max_iters == 0 {
            return bad("inner_max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    ProperTermination,
    MaxIterationsReached,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::ProperTermination => "ProperTermination",
            Status::MaxIterationsReached => "MaxIterationsReached",
        }
    }
}

/// One outer iteration `k`: the sub-problem solved at `(ρ_k, ε_k)` and its
/// result `V_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    /// `f(V_{k+1})`.
    pub f: f64,
    /// `h(V_{k+1})`.
    pub h: f64,
    /// `‖grad Q(V_{k+1}, ρ_k)‖_F` reached by the inner solver.
    pub grad_norm: f64,
    /// `‖V_{k+1} − V_k‖_F`.
    pub step: f64,
    pub inner_iters: usize,
    /// Orthonormality residual of `V_{k+1}`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub v: StiefelPoint,
    pub status: Status,
    pub history: Vec<OuterRecord>,
}

impl FitOutcome {
    /// `h` of the returned iterate.
    pub fn final_h(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.h)
    }

    pub fn final_f(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.f)
    }
}

/// Result of one sub-problem solve.
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub v: StiefelPoint,
    pub grad_norm: f64,
    pub q: f64,
    pub iterations: usize,
    /// `true` when `grad_norm ≤ ε` was reached.
    pub converged: bool,
}

/// Approximately minimizes `Q(·, ρ)` from `v_warm` until the Riemannian
/// gradient norm is at most `eps`, or `cfg.inner_max_iters` steps were taken,
/// in which case the last (and best, since every accepted step decreases
/// `Q`) iterate is returned.
///
/// Backtracking stops once the predicted decrease `t‖grad Q‖²` falls below
/// the floating-point resolution of `Q`; the iterate is then numerically
/// stationary and returned as is. Exhausting the backtracks above that
/// resolution is reported as [`Error::SolverStall`].
pub fn inner_solve(
    prob: &PenaltyProblem,
    v_warm: &StiefelPoint,
    rho: f64,
    eps: f64,
    cfg: &RepmsConfig,
) -> Result<InnerResult> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("inner tolerance must be positive, got {eps}")));
    }
    let mut v = v_warm.clone();
    let eval = prob.evaluate(&v, rho)?;
    let mut q = eval.q;
    let mut grad = stiefel::riemannian_gradient(&v, &eval.euclidean_grad)?;
    let mut gnorm = grad.norm();
    // First trial step moves the iterate by about one unit.
    let mut trial = (1.0 / gnorm).clamp(MIN_STEP, MAX_STEP);
    let mut iterations = 0;

    while gnorm > eps && iterations < cfg.inner_max_iters {
        let direction = grad.scaled(-1.0);
        let g2 = gnorm * gnorm;
        // Decreases below this are indistinguishable from round-off in `Q`.
        let floor = ROUNDOFF_FLOOR * (1.0 + q.abs());
        let mut t = trial;
        let mut accepted = None;
        let mut resolved = true;
        for _ in 0..MAX_BACKTRACKS {
            if t * g2 <= floor {
                resolved = false;
                break;
            }
            if let Ok(cand) = stiefel::retract(&v, &direction, t) {
                let qc = {
                    let (f, h) = prob.values(&cand);
                    f + rho * h
                };
                if qc <= q - ARMIJO_C * t * g2 {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= BACKTRACK;
        }
        let Some(cand) = accepted else {
            if !resolved {
                // Numerically stationary: no step can show a decrease.
                break;
            }
            return Err(Error::SolverStall {
                iterations,
                grad_norm: gnorm,
                objective: q,
                last_step: t,
            });
        };

        let cand = cand.healed();
        let eval = prob.evaluate(&cand, rho)?;
        let new_grad = stiefel::riemannian_gradient(&cand, &eval.euclidean_grad)?;
        let s: DMatrix<f64> = cand.matrix() - v.matrix();
        let y: DMatrix<f64> = new_grad.matrix() - grad.matrix();
        let sy = s.dot(&y);
        trial = if sy > 0.0 {
            // Alternate the two Barzilai–Borwein step lengths.
            if iterations % 2 == 0 {
                s.norm_squared() / sy
            } else {
                sy / y.norm_squared()
            }
        } else {
            2.0 * t
        }
        .clamp(MIN_STEP, MAX_STEP);

        v = cand;
        q = eval.q;
        grad = new_grad;
        gnorm = grad.norm();
        iterations += 1;
    }

    Ok(InnerResult {
        converged: gnorm <= eps,
        v,
        grad_norm: gnorm,
        q,
        iterations,
    })
}

/// Runs the penalty method from `v0`.
pub fn repms_fit(prob: &PenaltyProblem, v0: &StiefelPoint, cfg: &RepmsConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if v0.p() != prob.p() {
        return Err(Error::DimensionMismatch(format!(
            "initial point has p = {}, problem has p = {}",
            v0.p(),
            prob.p()
        )));
    }
    if v0.residual() > stiefel::ORTHONORMALITY_TOL {
        return Err(Error::NotOrthonormal {
            residual: v0.residual(),
        });
    }

    let mut v = v0.clone();
    let mut rho = cfg.rho0;
    let mut eps = cfg.eps0;
    let mut history = Vec::new();

    for k in 0..=cfg.max_outer_iters {
        let inner = inner_solve(prob, &v, rho, eps, cfg)?;
        let next = inner.v;
        let step = (next.matrix() - v.matrix()).norm();
        let (f, h) = prob.values(&next);
        history.push(OuterRecord {
            k,
            rho,
            eps,
            f,
            h,
            grad_norm: inner.grad_norm,
            step,
            inner_iters: inner.iterations,
            residual: next.residual(),
        });

        if step <= cfg.d_min && eps <= cfg.eps_min && h <= cfg.tau {
            return Ok(FitOutcome {
                v: next,
                status: Status::ProperTermination,
                history,
            });
        }

        eps = cfg.eps_min.max(cfg.theta_eps * eps);
        if h > cfg.tau {
            rho = (cfg.theta_rho * rho).min(cfg.rho_max);
        }
        v = next;
    }

    Ok(FitOutcome {
        v,
        status: Status::MaxIterationsReached,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;
    use crate::objective::{objective_f, penalty_q, Covariance};
    use crate::pca::vanilla_pca;
    use crate::rng::SeededRng;

    fn identical_groups_problem() -> PenaltyProblem {
        let mut rng = SeededRng::new(4);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.standard_normal());
        PenaltyProblem::new(
            Covariance::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]))).unwrap(),
            x.clone(),
            x,
            KernelConfig::new(1.0).unwrap(),
        )
        .unwrap()
    }

    fn shifted_groups_problem(seed: u64) -> PenaltyProblem {
        let mut rng = SeededRng::new(seed);
        let x0 = DMatrix::from_fn(30, 4, |_, _| rng.standard_normal());
        let x1 = DMatrix::from_fn(30, 4, |_, j| rng.standard_normal() * (1.0 + j as f64 * 0.3) + 0.8);
        let mut pooled = DMatrix::zeros(60, 4);
        pooled.rows_mut(0, 30).copy_from(&x0);
        pooled.rows_mut(30, 30).copy_from(&x1);
        PenaltyProblem::new(
            Covariance::from_samples(&pooled).unwrap(),
            x0,
            x1,
            KernelConfig::new(2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn default_config_values() {
        let cfg = default_config();
        assert!((cfg.theta_eps - 0.1).abs() < 1e-15);
        assert_eq!(cfg.max_outer_iters, 100);
        assert_eq!(cfg.eps_min, 1e-6);
        assert_eq!(cfg.eps0, 1e-1);
        assert_eq!(cfg.rho_max, 1e10);
        assert_eq!(cfg.theta_rho, 2.0);
        assert_eq!(cfg.d_min, 1e-6);
        assert_eq!(cfg.rho0, 1.0);
        assert_eq!(cfg.tau, 1e-5);
        assert_eq!(cfg.inner_max_iters, 2000);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let base = default_config();
        let cases: Vec<Box<dyn Fn(&mut RepmsConfig)>> = vec![
            Box::new(|c| c.eps_min = 1.0),
            Box::new(|c| c.theta_eps = 1.0),
            Box::new(|c| c.theta_rho = 1.0),
            Box::new(|c| c.rho0 = 0.0),
            Box::new(|c| c.tau = -1.0),
            Box::new(|c| c.d_min = 0.0),
            Box::new(|c| c.inner_max_iters = 0),
        ];
        for mutate in cases {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn inner_solve_finds_leading_eigenvector() {
        let prob = identical_groups_problem();
        let v0 = StiefelPoint::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])).unwrap();
        // e₃ is a stationary point; nudge off it so descent can leave.
        let v0 = StiefelPoint::orthonormalize(v0.matrix() + DMatrix::from_column_slice(3, 1, &[1e-3, 1e-3, 0.0])).unwrap();
        let r = inner_solve(&prob, &v0, 1.0, 1e-8, &default_config()).unwrap();
        assert!(r.converged);
        let f = objective_f(&prob, &r.v).unwrap();
        assert!((f + 3.0).abs() < 1e-8, "f = {f}");
        assert!((r.v.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inner_solve_returns_immediately_when_stationary() {
        let prob = identical_groups_problem();
        let v0 = StiefelPoint::canonical(3, 2).unwrap();
        let r = inner_solve(&prob, &v0, 1.0, 1e-6, &default_config()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.v, v0);
    }

    #[test]
    fn inner_solve_decreases_penalty() {
        let prob = shifted_groups_problem(2);
        let v0 = vanilla_pca(prob.covariance(), 2).unwrap();
        let q0 = penalty_q(&prob, &v0, 1.0).unwrap();
        let r = inner_solve(&prob, &v0, 1.0, 1e-3, &default_config()).unwrap();
        assert!(r.converged);
        assert!(r.grad_norm <= 1e-3);
        assert!(penalty_q(&prob, &r.v, 1.0).unwrap() <= q0);
    }

    #[test]
    fn inner_solve_rejects_bad_tolerance() {
        let prob = identical_groups_problem();
        let v0 = StiefelPoint::canonical(3, 2).unwrap();
        assert!(inner_solve(&prob, &v0, 1.0, 0.0, &default_config()).is_err());
    }

    #[test]
    fn inactive_constraint_terminates_at_pca() {
        let prob = identical_groups_problem();
        let v0 = vanilla_pca(prob.covariance(), 2).unwrap();
        let out = repms_fit(&prob, &v0, &default_config()).unwrap();
        assert_eq!(out.status, Status::ProperTermination);
        assert!(out.history.iter().all(|r| r.rho == 1.0));
        assert!((out.final_f() + 5.0).abs() < 1e-10);
    }

    /// Group 1 is group 0 shifted along feature 0, so any `V` orthogonal to
    /// `e₀` is exactly fair.
    fn feasible_shift_problem(seed: u64) -> PenaltyProblem {
        let mut rng = SeededRng::new(seed);
        let x0 = DMatrix::from_fn(30, 4, |_, _| rng.standard_normal());
        let mut x1 = x0.clone();
        x1.column_mut(0).add_scalar_mut(3.0);
        let mut pooled = DMatrix::zeros(60, 4);
        pooled.rows_mut(0, 30).copy_from(&x0);
        pooled.rows_mut(30, 30).copy_from(&x1);
        PenaltyProblem::new(
            Covariance::from_samples(&pooled).unwrap(),
            x0,
            x1,
            KernelConfig::new(2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn fit_reaches_tolerance_and_follows_schedule() {
        let prob = feasible_shift_problem(3);
        let v0 = vanilla_pca(prob.covariance(), 2).unwrap();
        let mut cfg = default_config();
        cfg.tau = 1e-3;
        let out = repms_fit(&prob, &v0, &cfg).unwrap();
        assert_eq!(out.status, Status::ProperTermination);
        assert!(out.final_h() <= cfg.tau);
        for w in out.history.windows(2) {
            assert_eq!(w[1].eps, cfg.eps_min.max(cfg.theta_eps * w[0].eps));
            let expected = if w[0].h > cfg.tau {
                (cfg.theta_rho * w[0].rho).min(cfg.rho_max)
            } else {
                w[0].rho
            };
            assert_eq!(w[1].rho, expected);
        }
        assert!(out.history.iter().all(|r| r.residual <= 1e-10));
        // The fair subspace avoids the shifted feature.
        assert!(out.v.matrix().row(0).norm() < 0.1);
    }

    #[test]
    fn infeasible_tolerance_ends_without_error() {
        // Scales differ in every feature, so h is bounded away from zero.
        let prob = shifted_groups_problem(3);
        let v0 = vanilla_pca(prob.covariance(), 2).unwrap();
        let mut cfg = default_config();
        cfg.tau = 1e-3;
        let out = repms_fit(&prob, &v0, &cfg).unwrap();
        assert_eq!(out.status, Status::MaxIterationsReached);
        assert!(out.final_h() > cfg.tau);
        assert_eq!(out.history.last().unwrap().rho, cfg.rho_max);
    }

    #[test]
    fn unreachable_tolerance_runs_out_of_iterations() {
        let prob = shifted_groups_problem(5);
        let v0 = vanilla_pca(prob.covariance(), 2).unwrap();
        let mut cfg = default_config();
        cfg.tau = 0.0;
        cfg.max_outer_iters = 6;
        let out = repms_fit(&prob, &v0, &cfg).unwrap();
        assert_eq!(out.status, Status::MaxIterationsReached);
        assert_eq!(out.history.len(), 7);
        let h0 = crate::objective::constraint_h(&prob, &v0).unwrap();
        let mut best = h0;
        for r in &out.history {
            best = best.min(r.h);
        }
        assert!(best < h0);
        assert!(out.history.windows(2).all(|w| w[1].rho > w[0].rho));
    }

    #[test]
    fn fit_rejects_invalid_config() {
        let prob = identical_groups_problem();
        let v0 = StiefelPoint::canonical(3, 2).unwrap();
        let mut cfg = default_config();
        cfg.theta_rho = 0.5;
        assert!(matches!(repms_fit(&prob, &v0, &cfg), Err(Error::Config(_))));
    }
}
