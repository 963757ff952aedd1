//! Datasets with a binary protected attribute: CSV ingestion, z-scoring,
//! stratified train/test splits and the two synthetic generators.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::rng::SeededRng;
use crate::{Error, Result};

/// Per-feature `(mean, std)` used to z-score a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub features: DMatrix<f64>,
    pub protected: Vec<u8>,
    pub outcome: Option<Vec<u8>>,
    pub feature_names: Vec<String>,
    pub standardization: Option<Standardization>,
    /// Free-form provenance (generator parameters, conventions).
    pub metadata: Vec<(String, String)>,
}

impl DataSet {
    pub fn new(
        features: DMatrix<f64>,
        protected: Vec<u8>,
        outcome: Option<Vec<u8>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if protected.len() != n || outcome.as_ref().is_some_and(|o| o.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows but {} protected labels",
                protected.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature columns but {} names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if protected.iter().chain(outcome.iter().flatten()).any(|&a| a > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let ds = DataSet {
            features,
            protected,
            outcome,
            feature_names,
            standardization: None,
            metadata: Vec::new(),
        };
        let (n0, n1) = ds.group_sizes();
        if n0 == 0 || n1 == 0 {
            return Err(Error::Degenerate(format!(
                "both protected groups must be non-empty (sizes {n0} and {n1})"
            )));
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let n1 = self.protected.iter().filter(|&&a| a == 1).count();
        (self.protected.len() - n1, n1)
    }

    /// Feature rows whose protected attribute equals `group`.
    pub fn group(&self, group: u8) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.protected[i] == group).collect();
        self.features.select_rows(&idx)
    }

    fn subset(&self, idx: &[usize]) -> DataSet {
        DataSet {
            features: self.features.select_rows(idx),
            protected: idx.iter().map(|&i| self.protected[i]).collect(),
            outcome: self.outcome.as_ref().map(|o| idx.iter().map(|&i| o[i]).collect()),
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
            metadata: self.metadata.clone(),
        }
    }
}

/// Reads a header-bearing, comma-separated file. The protected column (and
/// the outcome column, when named) must hold literal `0`/`1` and are removed
/// from the features; every other column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, protected_column: &str, outcome_column: Option<&str>) -> Result<DataSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message,
    };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "", "missing header row".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| parse_err(1, name, "column not found in header".into()))
    };
    let prot_idx = find(protected_column)?;
    let out_idx = outcome_column.map(find).transpose()?;
    let feat_idx: Vec<usize> = (0..names.len())
        .filter(|&j| j != prot_idx && Some(j) != out_idx)
        .collect();

    let mut values = Vec::new();
    let mut protected = Vec::new();
    let mut outcome = Vec::new();
    for (lineno, line) in lines {
        let line_no = lineno + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(parse_err(
                line_no,
                "",
                format!("expected {} cells, found {}", names.len(), cells.len()),
            ));
        }
        let binary = |j: usize| match cells[j] {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(parse_err(line_no, &names[j], format!("expected 0 or 1, found `{other}`"))),
        };
        protected.push(binary(prot_idx)?);
        if let Some(j) = out_idx {
            outcome.push(binary(j)?);
        }
        for &j in &feat_idx {
            let v: f64 = cells[j]
                .parse()
                .map_err(|_| parse_err(line_no, &names[j], format!("non-numeric value `{}`", cells[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, &names[j], "non-finite value".into()));
            }
            values.push(v);
        }
    }
    let n = protected.len();
    let features = DMatrix::from_row_slice(n, feat_idx.len(), &values);
    let feature_names = feat_idx.iter().map(|&j| names[j].clone()).collect();
    DataSet::new(
        features,
        protected,
        out_idx.map(|_| outcome),
        feature_names,
    )
}

/// Name of the protected column written by [`write_csv`].
pub const PROTECTED_COLUMN: &str = "protected";
/// Name of the outcome column written by [`write_csv`].
pub const OUTCOME_COLUMN: &str = "outcome";

/// Writes features at full (round-trip) precision followed by the
/// `protected` and, when present, `outcome` columns.
pub fn write_csv(ds: &DataSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(ds: &DataSet) -> String {
    let mut out = ds.feature_names.join(",");
    out.push(',');
    out.push_str(PROTECTED_COLUMN);
    if ds.outcome.is_some() {
        out.push(',');
        out.push_str(OUTCOME_COLUMN);
    }
    out.push('\n');
    for i in 0..ds.n() {
        for j in 0..ds.p() {
            let _ = write!(out, "{},", ds.features[(i, j)]);
        }
        let _ = write!(out, "{}", ds.protected[i]);
        if let Some(o) = &ds.outcome {
            let _ = write!(out, ",{}", o[i]);
        }
        out.push('\n');
    }
    out
}

/// Z-scores every feature with its own mean and sample (`n−1`) standard
/// deviation, recording the parameters.
pub fn standardize(ds: &DataSet) -> Result<DataSet> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::Degenerate("standardization needs at least two rows".into()));
    }
    let mut means = Vec::with_capacity(ds.p());
    let mut stds = Vec::with_capacity(ds.p());
    for (j, col) in ds.features.column_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::DegenerateFeature(ds.feature_names[j].clone()));
        }
        means.push(mean);
        stds.push(std);
    }
    apply_standardization(ds, &Standardization { means, stds })
}

/// Applies previously fitted parameters, e.g. training-set parameters to a
/// test set.
pub fn apply_standardization(ds: &DataSet, params: &Standardization) -> Result<DataSet> {
    if params.means.len() != ds.p() || params.stds.len() != ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "standardization has {} features, data has {}",
            params.means.len(),
            ds.p()
        )));
    }
    let mut out = ds.clone();
    for (j, mut col) in out.features.column_iter_mut().enumerate() {
        let (m, s) = (params.means[j], params.stds[j]);
        col.apply(|x| *x = (*x - m) / s);
    }
    out.standardization = Some(params.clone());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Stratified split: `round(fraction · n)` training rows allocated to the
/// two protected groups in proportion (largest remainder), rows chosen by a
/// seeded shuffle within each group. Both parts keep the original row order.
pub fn split(ds: &DataSet, spec: &SplitSpec) -> Result<(DataSet, DataSet)> {
    let frac = spec.train_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {frac}"
        )));
    }
    let (n0, n1) = ds.group_sizes();
    let n_train = (frac * ds.n() as f64).round() as usize;
    let exact = [frac * n0 as f64, frac * n1 as f64];
    let mut alloc = [exact[0].floor() as usize, exact[1].floor() as usize];
    let mut remaining = n_train.saturating_sub(alloc[0] + alloc[1]);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &g in order.iter().cycle().take(2) {
        if remaining > 0 {
            alloc[g] += 1;
            remaining -= 1;
        }
    }
    let sizes = [n0, n1];
    for g in 0..2 {
        if alloc[g] == 0 || alloc[g] >= sizes[g] {
            return Err(Error::Stratification(format!(
                "protected group {g} ({} rows) would be missing from the {} set",
                sizes[g],
                if alloc[g] == 0 { "training" } else { "test" }
            )));
        }
    }

    let mut rng = SeededRng::new(spec.seed);
    let mut in_train = vec![false; ds.n()];
    for g in 0..2u8 {
        let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.protected[i] == g).collect();
        rng.shuffle(&mut idx);
        for &i in &idx[..alloc[g as usize]] {
            in_train[i] = true;
        }
    }
    let train: Vec<usize> = (0..ds.n()).filter(|&i| in_train[i]).collect();
    let test: Vec<usize> = (0..ds.n()).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Rows of a multivariate normal `N(mean, LLᵀ)` given the Cholesky factor.
fn sample_gaussian_rows(
    rng: &mut SeededRng,
    n: usize,
    mean: &DVector<f64>,
    chol: &DMatrix<f64>,
) -> DMatrix<f64> {
    let p = mean.len();
    let z = DMatrix::from_fn(p, n, |_, _| rng.standard_normal());
    let mut x = chol * z;
    for mut col in x.column_iter_mut() {
        col += mean;
    }
    x.transpose()
}

fn names(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("{prefix}{j}")).collect()
}

/// Group size of the first synthetic dataset.
pub const SYNTH1_GROUP_SIZE: usize = 150;

/// Two groups of 150 points in `ℝ³` with equal first and second moments:
/// group 0 from `N(0, 0.1 I + 11ᵀ)`, group 1 from the balanced mixture
/// `½ N(1, 0.1 I) + ½ N(−1, 0.1 I)` (75 rows from each component,
/// alternating).
pub fn synth1(seed: u64) -> DataSet {
    let mut rng = SeededRng::new(seed);
    let p = 3;
    let n = SYNTH1_GROUP_SIZE;
    let cov0 = DMatrix::identity(p, p) * 0.1 + DMatrix::from_element(p, p, 1.0);
    let chol0 = Cholesky::new(cov0).expect("positive definite").unpack();
    let chol1 = DMatrix::identity(p, p) * 0.1f64.sqrt();
    let g0 = sample_gaussian_rows(&mut rng, n, &DVector::zeros(p), &chol0);
    let mut g1 = DMatrix::zeros(n, p);
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let row = sample_gaussian_rows(&mut rng, 1, &DVector::from_element(p, sign), &chol1);
        g1.set_row(i, &row.row(0));
    }
    let mut features = DMatrix::zeros(2 * n, p);
    features.rows_mut(0, n).copy_from(&g0);
    features.rows_mut(n, n).copy_from(&g1);
    let protected = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    let mut ds = DataSet::new(features, protected, None, names("x", p)).expect("valid shape");
    ds.metadata = vec![
        ("generator".into(), "synth1".into()),
        ("seed".into(), seed.to_string()),
        ("group_size".into(), n.to_string()),
    ];
    ds
}

/// Ambient dimension in which the second synthetic family is constructed.
pub const SYNTH2_AMBIENT_DIM: usize = 1000;
/// Default group size of the second synthetic family.
pub const SYNTH2_GROUP_SIZE: usize = 250;
/// AR(1) correlation parameters of the five diagonal blocks per group.
pub const SYNTH2_AR_PARAMS: [[f64; 5]; 2] = [
    [0.99, 0.98, 0.97, 0.98, 0.95],
    [0.99, 0.98, 0.97, 0.98, 0.99],
];

/// `(AR_k(r))_{ij} = r^{|i−j|} / (1 − r²)`, the covariance of a stationary
/// Gaussian AR(1) process of length `k`.
pub fn ar1_covariance(k: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| r.powi((i as i32 - j as i32).abs()) / (1.0 - r * r))
}

/// Population parameters of the second synthetic family in the ambient
/// dimension `p₀`.
#[derive(Debug, Clone)]
pub struct Synth2Population {
    /// `μ₁ − μ₀ = 2·1/‖1‖` (and `μ₀ = 0`).
    pub mean_diff: DVector<f64>,
    /// Diagonal blocks of `Σ⁽⁰⁾` and `Σ⁽¹⁾`, already divided by `‖Q_raw‖₂`.
    pub blocks: [Vec<DMatrix<f64>>; 2],
    /// `‖A⁽¹⁾ − A⁽⁰⁾‖₂` before scaling.
    pub raw_diff_norm: f64,
}

impl Synth2Population {
    pub fn new(p0: usize) -> Result<Self> {
        if p0 == 0 || !p0.is_multiple_of(5) {
            return Err(Error::InvalidArgument(format!(
                "ambient dimension must be a positive multiple of 5, got {p0}"
            )));
        }
        let k = p0 / 5;
        let raw: [Vec<DMatrix<f64>>; 2] =
            SYNTH2_AR_PARAMS.map(|params| params.iter().map(|&r| ar1_covariance(k, r)).collect());
        // A⁽¹⁾ − A⁽⁰⁾ is block diagonal; its spectral norm is the largest
        // block spectral norm.
        let raw_diff_norm = (0..5)
            .map(|b| {
                SymmetricEigen::new(&raw[1][b] - &raw[0][b])
                    .eigenvalues
                    .amax()
            })
            .fold(0.0, f64::max);
        let blocks = raw.map(|bs| bs.into_iter().map(|b| b / raw_diff_norm).collect());
        let mean_diff = DVector::from_element(p0, 2.0 / (p0 as f64).sqrt());
        Ok(Synth2Population {
            mean_diff,
            blocks,
            raw_diff_norm,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.mean_diff.len()
    }

    /// Dense `Σ⁽ˢ⁾`.
    pub fn covariance(&self, group: usize) -> DMatrix<f64> {
        let p0 = self.ambient_dim();
        let mut out = DMatrix::zeros(p0, p0);
        let mut off = 0;
        for b in &self.blocks[group] {
            let k = b.nrows();
            out.view_mut((off, off), (k, k)).copy_from(b);
            off += k;
        }
        out
    }

    fn sample(&self, group: usize, n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
        let p0 = self.ambient_dim();
        let mut x = DMatrix::zeros(n, p0);
        let mut off = 0;
        for b in &self.blocks[group] {
            let k = b.nrows();
            let chol = Cholesky::new(b.clone()).expect("AR(1) blocks are positive definite").unpack();
            let mean = if group == 1 {
                self.mean_diff.rows(off, k).clone_owned()
            } else {
                DVector::zeros(k)
            };
            let rows = sample_gaussian_rows(rng, n, &mean, &chol);
            x.view_mut((0, off), (n, k)).copy_from(&rows);
            off += k;
        }
        x
    }
}

/// Target dimensions supported by [`synth2`].
pub const SYNTH2_DIMS: [usize; 9] = [20, 30, 40, 50, 60, 70, 80, 90, 100];

/// Second synthetic family with the default group size of 250.
pub fn synth2(p: usize, seed: u64) -> Result<DataSet> {
    synth2_sized(p, SYNTH2_GROUP_SIZE, seed)
}

/// Two Gaussian groups built in dimension `p₀ = 1000` (block-diagonal AR(1)
/// covariances differing in the last block, means differing by a vector of
/// norm 2), sampled, then projected to dimension `p` by a `p₀×p` matrix of
/// i.i.d. `N(0, 1/p₀)` entries. The projected groups are non-Gaussian
/// mixtures in general. Samples are drawn before the projection, so one seed
/// yields the same ambient samples for every `p`.
pub fn synth2_sized(p: usize, n_per_group: usize, seed: u64) -> Result<DataSet> {
    if !SYNTH2_DIMS.contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "synth2 dimension must be one of {SYNTH2_DIMS:?}, got {p}"
        )));
    }
    if n_per_group < 2 {
        return Err(Error::InvalidArgument("synth2 needs at least two rows per group".into()));
    }
    let pop = Synth2Population::new(SYNTH2_AMBIENT_DIM)?;
    let p0 = pop.ambient_dim();
    let mut rng = SeededRng::new(seed);
    let x0 = pop.sample(0, n_per_group, &mut rng);
    let x1 = pop.sample(1, n_per_group, &mut rng);
    let scale = 1.0 / (p0 as f64).sqrt();
    let proj = DMatrix::from_fn(p0, p, |_, _| rng.standard_normal() * scale);

    let n = n_per_group;
    let mut features = DMatrix::zeros(2 * n, p);
    features.rows_mut(0, n).copy_from(&(x0 * &proj));
    features.rows_mut(n, n).copy_from(&(x1 * &proj));
    let protected = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    let mut ds = DataSet::new(features, protected, None, names("z", p))?;
    ds.metadata = vec![
        ("generator".into(), "synth2".into()),
        ("seed".into(), seed.to_string()),
        ("group_size".into(), n.to_string()),
        ("ambient_dim".into(), p0.to_string()),
        ("projection_scale".into(), "1/sqrt(ambient_dim)".into()),
        (
            "covariance_scaling".into(),
            format!("block AR(1) matrices divided by ||A1 - A0||_2 = {}", pop.raw_diff_norm),
        ),
    ];
    Ok(ds)
}
