//! RBF kernel, the biased (V-statistic) MMD² estimator between two sample
//! sets, its closed-form gradient with respect to a loading matrix, and the
//! median-heuristic bandwidth.
//!
//! With `k(x, y) = exp(−‖x − y‖² / 2σ²)` and samples `X₁..X_m`, `Y₁..Y_n`:
//!
//! ```text
//! MMD² = 1/m² Σᵢⱼ k(Xᵢ, Xⱼ) + 1/n² Σᵢⱼ k(Yᵢ, Yⱼ) − 2/(mn) Σᵢⱼ k(Xᵢ, Yⱼ)
//! ```
//!
//! The diagonal terms are kept, so the estimate is a squared RKHS norm of the
//! difference of the two empirical mean embeddings and is never negative.

use nalgebra::DMatrix;

use crate::stiefel::StiefelPoint;
use crate::{Error, Result};

/// How the bandwidth was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthSelection {
    Manual,
    MedianHeuristic,
}

impl BandwidthSelection {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandwidthSelection::Manual => "manual",
            BandwidthSelection::MedianHeuristic => "median_heuristic",
        }
    }
}

/// RBF bandwidth `σ` together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    sigma: f64,
    selection: BandwidthSelection,
}

impl KernelConfig {
    /// A manually chosen bandwidth. `sigma` must be positive and finite.
    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_selection(sigma, BandwidthSelection::Manual)
    }

    fn with_selection(sigma: f64, selection: BandwidthSelection) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "RBF bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(KernelConfig { sigma, selection })
    }

    /// Bandwidth set to the median pairwise distance of `samples` (rows).
    pub fn from_median_heuristic(samples: &DMatrix<f64>) -> Result<Self> {
        Self::with_selection(median_heuristic(samples)?, BandwidthSelection::MedianHeuristic)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn selection(&self) -> BandwidthSelection {
        self.selection
    }

    #[inline]
    fn neg_inv_two_sigma2(&self) -> f64 {
        -1.0 / (2.0 * self.sigma * self.sigma)
    }
}

/// Two groups of samples sharing the same column count. Rows are samples.
#[derive(Debug, Clone)]
pub struct GroupedSamples {
    group0: DMatrix<f64>,
    group1: DMatrix<f64>,
}

impl GroupedSamples {
    pub fn new(group0: DMatrix<f64>, group1: DMatrix<f64>) -> Result<Self> {
        if group0.nrows() == 0 || group1.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "both sample groups must be non-empty".into(),
            ));
        }
        if group0.ncols() != group1.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "group0 has {} columns, group1 has {}",
                group0.ncols(),
                group1.ncols()
            )));
        }
        Ok(GroupedSamples { group0, group1 })
    }

    pub fn group0(&self) -> &DMatrix<f64> {
        &self.group0
    }

    pub fn group1(&self) -> &DMatrix<f64> {
        &self.group1
    }
}

/// `exp(−‖x − y‖² / 2σ²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite kernel argument".into()));
    }
    Ok((sq_dist(x, y) * cfg.neg_inv_two_sigma2()).exp())
}

/// Median of the `n(n−1)/2` unsquared pairwise Euclidean distances between
/// the rows of `samples`. For an even number of pairs the lower of the two
/// middle order statistics is returned.
pub fn median_heuristic(samples: &DMatrix<f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "median heuristic needs at least two samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let d = samples.ncols();
    let rows = row_major(samples);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            dists.push(sq_dist(xi, &rows[j * d..(j + 1) * d]).sqrt());
        }
    }
    let mid = (dists.len() - 1) / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median <= 0.0 {
        return Err(Error::Degenerate(
            "median pairwise distance is zero; the RBF bandwidth would vanish".into(),
        ));
    }
    Ok(median)
}

/// Biased MMD² estimate between the two groups.
pub fn mmd_squared(s: &GroupedSamples, cfg: &KernelConfig) -> f64 {
    let d = s.group0.ncols();
    let a = row_major(&s.group0);
    let b = row_major(&s.group1);
    mmd_from_rows(&a, s.group0.nrows(), &b, s.group1.nrows(), d, cfg)
}

/// Euclidean gradient of `V ↦ MMD²(data0·V, data1·V)`.
pub fn mmd_squared_gradient(
    v: &StiefelPoint,
    data0: &DMatrix<f64>,
    data1: &DMatrix<f64>,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    check_data(v.matrix(), data0, data1)?;
    Ok(mmd_value_and_gradient(v.matrix(), data0, data1, cfg).1)
}

pub(crate) fn check_data(
    v: &DMatrix<f64>,
    data0: &DMatrix<f64>,
    data1: &DMatrix<f64>,
) -> Result<()> {
    let p = v.nrows();
    if data0.ncols() != p || data1.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "loading matrix has {p} rows but data have {} and {} columns",
            data0.ncols(),
            data1.ncols()
        )));
    }
    if data0.nrows() == 0 || data1.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "both sample groups must be non-empty".into(),
        ));
    }
    Ok(())
}

/// MMD² of the projected groups without the gradient.
pub(crate) fn projected_mmd(
    v: &DMatrix<f64>,
    data0: &DMatrix<f64>,
    data1: &DMatrix<f64>,
    cfg: &KernelConfig,
) -> f64 {
    let d = v.ncols();
    let a = row_major(&(data0 * v));
    let b = row_major(&(data1 * v));
    mmd_from_rows(&a, data0.nrows(), &b, data1.nrows(), d, cfg)
}

/// MMD² of the projected groups and its Euclidean gradient in `V`.
///
/// Writing `P = XV`, `R = YV` and `K_X`, `K_Y`, `K_XY` for the kernel
/// matrices of the projected samples, with `H_X`, `H_Y`, `H_XY` the diagonal
/// matrices of row sums and `H̃_XY` the diagonal of column sums of `K_XY`,
///
/// ```text
/// ∇h₁ = −2/(m²σ²) Xᵀ(H_X − K_X) P
/// ∇h₂ = −2/(n²σ²) Yᵀ(H_Y − K_Y) R
/// ∇h₃ = −1/(mnσ²) [Xᵀ(H_XY P − K_XY R) + Yᵀ(H̃_XY R − K_XYᵀ P)]
/// ∇h  = ∇h₁ + ∇h₂ − 2∇h₃
/// ```
///
/// The two `Xᵀ(·)` and `Yᵀ(·)` factors are collected into `m×d` and `n×d`
/// weight matrices so the data are only touched once each.
pub(crate) fn mmd_value_and_gradient(
    v: &DMatrix<f64>,
    data0: &DMatrix<f64>,
    data1: &DMatrix<f64>,
    cfg: &KernelConfig,
) -> (f64, DMatrix<f64>) {
    let (m, n, d) = (data0.nrows(), data1.nrows(), v.ncols());
    let a = row_major(&(data0 * v));
    let b = row_major(&(data1 * v));
    let g = cfg.neg_inv_two_sigma2();
    let s2 = cfg.sigma * cfg.sigma;
    let (mf, nf) = (m as f64, n as f64);

    // Row-major weight matrices; W0 multiplies Xᵀ, W1 multiplies Yᵀ.
    let mut w0 = vec![0.0; m * d];
    let mut w1 = vec![0.0; n * d];

    let c_xx = -2.0 / (mf * mf * s2);
    let c_yy = -2.0 / (nf * nf * s2);
    let c_xy = 2.0 / (mf * nf * s2);

    let sum_xx = within_group(&a, m, d, g, c_xx, &mut w0);
    let sum_yy = within_group(&b, n, d, g, c_yy, &mut w1);

    let mut sum_xy = 0.0;
    for i in 0..m {
        let xi = &a[i * d..(i + 1) * d];
        for j in 0..n {
            let yj = &b[j * d..(j + 1) * d];
            let k = (sq_dist(xi, yj) * g).exp();
            sum_xy += k;
            // K_ij (P_i − R_j) enters W0 row i; K_ij (R_j − P_i) enters W1 row j.
            for l in 0..d {
                let diff = xi[l] - yj[l];
                w0[i * d + l] += c_xy * k * diff;
                w1[j * d + l] -= c_xy * k * diff;
            }
        }
    }

    let value = sum_xx / (mf * mf) + sum_yy / (nf * nf) - 2.0 * sum_xy / (mf * nf);
    let w0 = DMatrix::from_row_slice(m, d, &w0);
    let w1 = DMatrix::from_row_slice(n, d, &w1);
    let grad = data0.tr_mul(&w0) + data1.tr_mul(&w1);
    (value.max(0.0), grad)
}

/// Sum of the full within-group kernel matrix; accumulates
/// `coef · Σⱼ K_ij (P_i − P_j)` into row `i` of `w`.
fn within_group(rows: &[f64], m: usize, d: usize, g: f64, coef: f64, w: &mut [f64]) -> f64 {
    let mut off = 0.0;
    for i in 0..m {
        let xi = &rows[i * d..(i + 1) * d];
        for j in (i + 1)..m {
            let xj = &rows[j * d..(j + 1) * d];
            let k = (sq_dist(xi, xj) * g).exp();
            off += k;
            for l in 0..d {
                let diff = xi[l] - xj[l];
                w[i * d + l] += coef * k * diff;
                w[j * d + l] -= coef * k * diff;
            }
        }
    }
    m as f64 + 2.0 * off
}

fn mmd_from_rows(a: &[f64], m: usize, b: &[f64], n: usize, d: usize, cfg: &KernelConfig) -> f64 {
    let g = cfg.neg_inv_two_sigma2();
    let (mf, nf) = (m as f64, n as f64);
    let sum_xx = within_sum(a, m, d, g);
    let sum_yy = within_sum(b, n, d, g);
    let mut sum_xy = 0.0;
    for i in 0..m {
        let xi = &a[i * d..(i + 1) * d];
        for j in 0..n {
            sum_xy += (sq_dist(xi, &b[j * d..(j + 1) * d]) * g).exp();
        }
    }
    let value = sum_xx / (mf * mf) + sum_yy / (nf * nf) - 2.0 * sum_xy / (mf * nf);
    // Round-off can push an exact zero a few ulps negative.
    value.max(0.0)
}

fn within_sum(rows: &[f64], m: usize, d: usize, g: f64) -> f64 {
    let mut off = 0.0;
    for i in 0..m {
        let xi = &rows[i * d..(i + 1) * d];
        for j in (i + 1)..m {
            off += (sq_dist(xi, &rows[j * d..(j + 1) * d]) * g).exp();
        }
    }
    m as f64 + 2.0 * off
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_matrix(rng: &mut SeededRng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.standard_normal())
    }

    /// Naive double loops straight from the estimator's definition.
    fn mmd_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> f64 {
        let k = |a: nalgebra::RowDVector<f64>, b: nalgebra::RowDVector<f64>| {
            (-(a - b).norm_squared() / (2.0 * sigma * sigma)).exp()
        };
        let (m, n) = (x.nrows() as f64, y.nrows() as f64);
        let mut kxx = 0.0;
        for i in 0..x.nrows() {
            for j in 0..x.nrows() {
                kxx += k(x.row(i).into(), x.row(j).into());
            }
        }
        let mut kyy = 0.0;
        for i in 0..y.nrows() {
            for j in 0..y.nrows() {
                kyy += k(y.row(i).into(), y.row(j).into());
            }
        }
        let mut kxy = 0.0;
        for i in 0..x.nrows() {
            for j in 0..y.nrows() {
                kxy += k(x.row(i).into(), y.row(j).into());
            }
        }
        kxx / (m * m) + kyy / (n * n) - 2.0 * kxy / (m * n)
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        let cfg = KernelConfig::new(0.7).unwrap();
        assert_eq!(rbf_kernel(&[1.5, -2.0], &[1.5, -2.0], &cfg).unwrap(), 1.0);
    }

    #[test]
    fn kernel_exponent_minus_one() {
        let sigma = 1.3;
        let cfg = KernelConfig::new(sigma).unwrap();
        let k = rbf_kernel(&[0.0], &[sigma * 2f64.sqrt()], &cfg).unwrap();
        assert!((k - (-1f64).exp()).abs() < 1e-15);
        assert!((k - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn kernel_hand_computed() {
        // ‖(1,2) − (3,1)‖² = 4 + 1 = 5, exponent −5 / (2·4).
        let cfg = KernelConfig::new(2.0).unwrap();
        let k = rbf_kernel(&[1.0, 2.0], &[3.0, 1.0], &cfg).unwrap();
        assert_eq!(k, (-5.0f64 / 8.0).exp());
    }

    #[test]
    fn kernel_rejects_non_finite() {
        let cfg = KernelConfig::new(1.0).unwrap();
        assert!(matches!(
            rbf_kernel(&[f64::NAN], &[0.0], &cfg),
            Err(Error::InvalidArgument(_))
        ));
        assert!(rbf_kernel(&[0.0, f64::INFINITY], &[0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelConfig::new(0.0).is_err());
        assert!(KernelConfig::new(-1.0).is_err());
        assert!(KernelConfig::new(f64::NAN).is_err());
        assert!(KernelConfig::new(f64::INFINITY).is_err());
    }

    #[test]
    fn median_of_single_pair() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 0.0]);
        assert_eq!(median_heuristic(&s).unwrap(), 3.0);
    }

    #[test]
    fn median_of_three_collinear_points() {
        let s = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_heuristic(&s).unwrap(), 2.0);
    }

    #[test]
    fn median_even_count_takes_lower_middle() {
        // Points 0, 1, 3, 7 give distances {1,3,7,2,6,4}; sorted 1,2,3,4,6,7.
        let s = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        assert_eq!(median_heuristic(&s).unwrap(), 3.0);
    }

    #[test]
    fn median_matches_sort_all_pairs() {
        let mut rng = SeededRng::new(11);
        let s = random_matrix(&mut rng, 10, 4);
        let mut all = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                let mut acc = 0.0;
                for l in 0..4 {
                    acc += (s[(i, l)] - s[(j, l)]).powi(2);
                }
                all.push(acc.sqrt());
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // 45 pairs, odd count: the 23rd smallest.
        assert_eq!(median_heuristic(&s).unwrap(), all[22]);
    }

    #[test]
    fn median_degenerate_data() {
        let s = DMatrix::from_element(5, 3, 2.0);
        assert!(matches!(median_heuristic(&s), Err(Error::Degenerate(_))));
        assert!(median_heuristic(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn mmd_of_identical_sets_is_zero() {
        let mut rng = SeededRng::new(3);
        let x = random_matrix(&mut rng, 9, 3);
        let s = GroupedSamples::new(x.clone(), x).unwrap();
        let cfg = KernelConfig::new(1.1).unwrap();
        assert!(mmd_squared(&s, &cfg).abs() <= 1e-12);
    }

    #[test]
    fn mmd_of_singletons() {
        let x = DMatrix::from_row_slice(1, 2, &[0.3, -1.0]);
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let cfg = KernelConfig::new(0.9).unwrap();
        let k = rbf_kernel(&[0.3, -1.0], &[1.0, 0.5], &cfg).unwrap();
        let s = GroupedSamples::new(x, y).unwrap();
        assert!((mmd_squared(&s, &cfg) - (2.0 - 2.0 * k)).abs() < 1e-15);
    }

    #[test]
    fn mmd_matches_double_loop_oracle() {
        let mut rng = SeededRng::new(5);
        let x = random_matrix(&mut rng, 5, 3);
        let y = random_matrix(&mut rng, 7, 3) * 1.5;
        let cfg = KernelConfig::new(1.7).unwrap();
        let expected = mmd_oracle(&x, &y, 1.7);
        let s = GroupedSamples::new(x, y).unwrap();
        assert!((mmd_squared(&s, &cfg) - expected).abs() <= 1e-12);
    }

    #[test]
    fn grouped_samples_validation() {
        assert!(GroupedSamples::new(DMatrix::zeros(0, 2), DMatrix::zeros(3, 2)).is_err());
        assert!(matches!(
            GroupedSamples::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gradient_vanishes_for_identical_data() {
        let mut rng = SeededRng::new(8);
        let x = random_matrix(&mut rng, 8, 5);
        let v = StiefelPoint::random(5, 2, &mut rng);
        let cfg = KernelConfig::new(1.0).unwrap();
        let g = mmd_squared_gradient(&v, &x, &x, &cfg).unwrap();
        assert!(g.norm() <= 1e-14, "‖∇h‖ = {}", g.norm());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SeededRng::new(21);
        let (p, d, m, n) = (6, 2, 8, 8);
        let x = random_matrix(&mut rng, m, p);
        let y = random_matrix(&mut rng, n, p).add_scalar(0.4);
        let v = StiefelPoint::random(p, d, &mut rng);
        let cfg = KernelConfig::new(1.3).unwrap();
        let g = mmd_squared_gradient(&v, &x, &y, &cfg).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(p, d);
        for i in 0..p {
            for j in 0..d {
                let mut plus = v.matrix().clone();
                plus[(i, j)] += h;
                let mut minus = v.matrix().clone();
                minus[(i, j)] -= h;
                fd[(i, j)] = (mmd_oracle(&(&x * &plus), &(&y * &plus), 1.3)
                    - mmd_oracle(&(&x * &minus), &(&y * &minus), 1.3))
                    / (2.0 * h);
            }
        }
        let rel = (&g - &fd).norm() / fd.norm();
        assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn gradient_is_rotation_equivariant() {
        let mut rng = SeededRng::new(34);
        let (p, d) = (5, 2);
        let x = random_matrix(&mut rng, 6, p);
        let y = random_matrix(&mut rng, 7, p);
        let v = StiefelPoint::random(p, d, &mut rng);
        let r = random_matrix(&mut rng, p, p).qr().q();
        let cfg = KernelConfig::new(0.8).unwrap();
        let g = mmd_squared_gradient(&v, &x, &y, &cfg).unwrap();
        // Rows of the data rotate as x ↦ R x, i.e. X ↦ X Rᵀ.
        let rv = StiefelPoint::new(&r * v.matrix()).unwrap();
        let g_rot =
            mmd_squared_gradient(&rv, &(&x * r.transpose()), &(&y * r.transpose()), &cfg).unwrap();
        assert!((&g_rot - &r * &g).norm() <= 1e-12 * (1.0 + g.norm()));
    }

    #[test]
    fn gradient_dimension_mismatch() {
        let mut rng = SeededRng::new(1);
        let v = StiefelPoint::random(4, 2, &mut rng);
        let cfg = KernelConfig::new(1.0).unwrap();
        let r = mmd_squared_gradient(&v, &DMatrix::zeros(3, 5), &DMatrix::zeros(3, 4), &cfg);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn samples(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
            proptest::collection::vec(-3.0f64..3.0, rows * cols)
                .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
        }

        proptest! {
            #[test]
            fn mmd_nonnegative_and_symmetric(
                x in samples(4, 2),
                y in samples(6, 2),
                sigma in 0.1f64..5.0,
            ) {
                let cfg = KernelConfig::new(sigma).unwrap();
                let a = mmd_squared(&GroupedSamples::new(x.clone(), y.clone()).unwrap(), &cfg);
                let b = mmd_squared(&GroupedSamples::new(y, x).unwrap(), &cfg);
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-12);
            }

            #[test]
            fn mmd_invariant_under_row_permutation(x in samples(5, 3), y in samples(4, 3)) {
                let cfg = KernelConfig::new(1.0).unwrap();
                let a = mmd_squared(&GroupedSamples::new(x.clone(), y.clone()).unwrap(), &cfg);
                let mut xp = x.clone();
                xp.swap_rows(0, 4);
                xp.swap_rows(1, 2);
                let mut yp = y.clone();
                yp.swap_rows(0, 3);
                let b = mmd_squared(&GroupedSamples::new(xp, yp).unwrap(), &cfg);
                prop_assert!((a - b).abs() <= 1e-12);
            }

            #[test]
            fn kernel_symmetric_and_bounded(
                x in proptest::collection::vec(-3.0f64..3.0, 3),
                y in proptest::collection::vec(-3.0f64..3.0, 3),
                sigma in 0.5f64..5.0,
            ) {
                let cfg = KernelConfig::new(sigma).unwrap();
                let kxy = rbf_kernel(&x, &y, &cfg).unwrap();
                prop_assert_eq!(kxy, rbf_kernel(&y, &x, &cfg).unwrap());
                prop_assert!(kxy > 0.0 && kxy <= 1.0);
                prop_assert_eq!(rbf_kernel(&x, &x, &cfg).unwrap(), 1.0);
            }
        }
    }
}
