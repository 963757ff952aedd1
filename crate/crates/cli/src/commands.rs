use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mbfpca::data::{self, load_csv, split, DataSet, SplitSpec};
use mbfpca::metrics::{FitReport, REPORT_CSV_HEADER};
use mbfpca::pipeline::{self, prepare};
use mbfpca::solver::OuterRecord;
use mbfpca::{StiefelPoint, Status};
use rayon::prelude::*;

use crate::config::Settings;
use crate::output::{create_dir, mean_std, opt6, sig6, write_file, RunManifest};

/// What a command wrote, plus the text it prints.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

pub fn manifest_path_for(data_path: &Path) -> PathBuf {
    data_path.with_extension("manifest.txt")
}

pub fn cmd_synth(kind: u8, p: Option<usize>, n_per_group: Option<usize>, seed: u64, out: &Path) -> Result<CommandOutput> {
    let start = Instant::now();
    let ds = match kind {
        1 => {
            if p.is_some_and(|p| p != 3) || n_per_group.is_some() {
                bail!("synthetic family 1 has fixed size (p = 3, 150 rows per group)");
            }
            data::synth1(seed)
        }
        2 => {
            let p = p.context("synthetic family 2 needs --p")?;
            data::synth2_sized(p, n_per_group.unwrap_or(data::SYNTH2_GROUP_SIZE), seed)?
        }
        other => bail!("unknown synthetic family {other} (expected 1 or 2)"),
    };
    data::write_csv(&ds, out)?;
    let manifest_path = manifest_path_for(out);
    let mut config = vec![("kind".to_string(), kind.to_string())];
    config.extend(ds.metadata.iter().cloned());
    RunManifest {
        command: "synth".into(),
        config,
        inputs: Vec::new(),
        seeds: vec![seed],
        outputs: vec![out.to_path_buf()],
        runtime: start.elapsed(),
    }
    .write(&manifest_path)?;
    let (n0, n1) = ds.group_sizes();
    Ok(CommandOutput {
        stdout: format!(
            "wrote {} ({} rows: {n0} + {n1}, {} features)\n",
            out.display(),
            ds.n(),
            ds.p()
        ),
        files: vec![out.to_path_buf(), manifest_path],
    })
}

fn load(settings: &Settings, data_path: &Path) -> Result<DataSet> {
    Ok(load_csv(data_path, &settings.protected, settings.outcome_column())?)
}

/// Train/test pair for one seed; a training fraction of 1 fits and scores on
/// every row.
fn train_test(ds: &DataSet, train_frac: f64, seed: u64) -> Result<(DataSet, DataSet)> {
    if train_frac == 1.0 {
        return Ok((ds.clone(), ds.clone()));
    }
    Ok(split(ds, &SplitSpec { train_fraction: train_frac, seed })?)
}

pub fn loadings_csv(v: &StiefelPoint) -> String {
    let m = v.matrix();
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("pc{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn history_csv(history: &[OuterRecord]) -> String {
    let mut out = String::from("k,rho,eps,f,h,grad_norm,step,inner_iters,residual\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.k, r.rho, r.eps, r.f, r.h, r.grad_norm, r.step, r.inner_iters, r.residual
        );
    }
    out
}

fn communalities_csv(features: &[String], reports: &[&FitReport]) -> String {
    let mut out = String::from("feature");
    for r in reports {
        let _ = write!(out, ",{}", r.method);
    }
    out.push('\n');
    for (j, name) in features.iter().enumerate() {
        out.push_str(name);
        for r in reports {
            let _ = write!(out, ",{}", r.communalities[j]);
        }
        out.push('\n');
    }
    out
}

fn single_tau(settings: &Settings) -> Result<f64> {
    match settings.taus.as_slice() {
        [tau] => Ok(*tau),
        taus => bail!("fit takes exactly one tau, got {}", taus.len()),
    }
}

pub fn cmd_fit(settings: &Settings, data_path: &Path, out_dir: &Path) -> Result<CommandOutput> {
    let start = Instant::now();
    let tau = single_tau(settings)?;
    let cfg = settings.pipeline(tau, settings.seed)?;
    let ds = load(settings, data_path)?;
    let (train, test) = train_test(&ds, settings.train_frac, settings.seed)?;
    let fit = pipeline::run(&train, &test, &cfg)?;

    create_dir(out_dir)?;
    let files = [
        ("loadings.csv", loadings_csv(&fit.outcome.v)),
        ("report.txt", fit.report.to_key_value()),
        ("pca_report.txt", fit.pca_report.to_key_value()),
        (
            "report.csv",
            format!(
                "{REPORT_CSV_HEADER}\n{}\n{}\n",
                fit.pca_report.csv_row(0),
                fit.report.csv_row(0)
            ),
        ),
        ("history.csv", history_csv(&fit.outcome.history)),
        (
            "communalities.csv",
            communalities_csv(&ds.feature_names, &[&fit.pca_report, &fit.report]),
        ),
    ];
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    let manifest = out_dir.join("manifest.txt");
    RunManifest {
        command: "fit".into(),
        config: settings_with_tau(settings, tau),
        inputs: vec![data_path.to_path_buf()],
        seeds: vec![settings.seed],
        outputs: written.clone(),
        runtime: start.elapsed(),
    }
    .write(&manifest)?;
    written.push(manifest);

    let r = &fit.report;
    let mut stdout = String::new();
    let _ = writeln!(stdout, "status: {}", r.status.as_str());
    let _ = writeln!(stdout, "outer iterations: {}", r.outer_iterations);
    let _ = writeln!(stdout, "sigma: {}", sig6(fit.prepared.kernel.sigma()));
    let _ = writeln!(stdout, "{:<22}{:>14}{:>14}", "", "pca", "mbfpca");
    for (label, a, b) in [
        ("explained variance %", Some(fit.pca_report.explained_variance_pct), Some(r.explained_variance_pct)),
        ("train MMD²", Some(fit.pca_report.mmd2_train), Some(r.mmd2_train)),
        ("test MMD²", Some(fit.pca_report.mmd2_test), Some(r.mmd2_test)),
        ("accuracy %", fit.pca_report.accuracy_pct, r.accuracy_pct),
        ("Δ_DP", fit.pca_report.delta_dp, r.delta_dp),
    ] {
        let _ = writeln!(stdout, "{label:<22}{:>14}{:>14}", opt6(a), opt6(b));
    }
    let _ = writeln!(stdout, "wrote {}", out_dir.display());
    Ok(CommandOutput { stdout, files: written })
}

fn settings_with_tau(settings: &Settings, tau: f64) -> Vec<(String, String)> {
    let mut snap = settings.snapshot();
    for (k, v) in &mut snap {
        if k == "tau" {
            *v = tau.to_string();
        }
    }
    snap
}

/// Fits of every method on one split, in method order.
struct SplitResult {
    seed: u64,
    reports: Vec<FitReport>,
}

fn run_split(settings: &Settings, ds: &DataSet, index: usize) -> Result<SplitResult> {
    let seed = settings.seed + index as u64;
    let (train, test) = train_test(ds, settings.train_frac, seed)?;
    let dim = settings.dim()?;
    let prepared = prepare(&train, &test, dim, settings.sigma)?;
    let base_cfg = settings.pipeline(settings.taus[0], seed)?;
    let mut reports = vec![prepared.evaluate("pca", &prepared.pca, Status::ProperTermination, 0, &base_cfg)?];
    for &tau in &settings.taus {
        let cfg = settings.pipeline(tau, seed)?;
        let outcome = prepared.fit(&cfg.repms)?;
        reports.push(prepared.evaluate(
            &format!("mbfpca(tau={tau})"),
            &outcome.v,
            outcome.status,
            outcome.history.len(),
            &cfg,
        )?);
    }
    Ok(SplitResult { seed, reports })
}

/// Mean and standard deviation of a metric over splits, `None` when the
/// metric is unavailable.
fn aggregate(values: Vec<Option<f64>>) -> Option<(f64, f64)> {
    let values: Option<Vec<f64>> = values.into_iter().collect();
    values.filter(|v| !v.is_empty()).map(|v| mean_std(&v))
}

pub fn cmd_compare(settings: &Settings, data_path: &Path, out_dir: &Path) -> Result<CommandOutput> {
    let start = Instant::now();
    if settings.splits == 0 {
        bail!("--splits must be at least 1");
    }
    if settings.taus.is_empty() {
        bail!("compare needs at least one tau");
    }
    // Validate before spending time on fits.
    for &tau in &settings.taus {
        settings.pipeline(tau, settings.seed)?;
    }
    let ds = load(settings, data_path)?;
    let results: Vec<SplitResult> = (0..settings.splits)
        .into_par_iter()
        .map(|i| run_split(settings, &ds, i).with_context(|| format!("split {i}")))
        .collect::<Result<_>>()?;

    create_dir(out_dir)?;
    let mut written = Vec::new();

    let mut rows = format!("{REPORT_CSV_HEADER}\n");
    for (i, res) in results.iter().enumerate() {
        for r in &res.reports {
            rows.push_str(&r.csv_row(i));
            rows.push('\n');
        }
    }
    let splits_path = out_dir.join("splits.csv");
    write_file(&splits_path, &rows)?;
    written.push(splits_path);

    let comm_dir = out_dir.join("communalities");
    create_dir(&comm_dir)?;
    for (i, res) in results.iter().enumerate() {
        let path = comm_dir.join(format!("split_{i:02}.csv"));
        let reports: Vec<&FitReport> = res.reports.iter().collect();
        write_file(&path, &communalities_csv(&ds.feature_names, &reports))?;
        written.push(path);
    }

    let methods: Vec<String> = results[0].reports.iter().map(|r| r.method.clone()).collect();
    let metrics: [(&str, fn(&FitReport) -> Option<f64>); 5] = [
        ("explained_variance_pct", |r| Some(r.explained_variance_pct)),
        ("accuracy_pct", |r| r.accuracy_pct),
        ("mmd2_test", |r| Some(r.mmd2_test)),
        ("delta_dp", |r| r.delta_dp),
        ("mmd2_train", |r| Some(r.mmd2_train)),
    ];
    let mut summary = String::from("method,splits,proper_terminations");
    for (name, _) in &metrics {
        let _ = write!(summary, ",{name}_mean,{name}_std");
    }
    summary.push('\n');
    let mut table = format!(
        "{:<22}{:>24}{:>24}{:>24}{:>24}{:>12}\n",
        "method", "%Var", "%Acc", "MMD²", "Δ_DP", "terminated"
    );
    for (m, method) in methods.iter().enumerate() {
        let proper = results
            .iter()
            .filter(|res| res.reports[m].status == Status::ProperTermination)
            .count();
        let _ = write!(summary, "{method},{},{proper}", results.len());
        let _ = write!(table, "{method:<22}");
        for (k, (_, get)) in metrics.iter().enumerate() {
            let cell = aggregate(results.iter().map(|res| get(&res.reports[m])).collect());
            match cell {
                Some((mean, std)) => {
                    let _ = write!(summary, ",{mean},{std}");
                    if k < 4 {
                        let _ = write!(table, "{:>24}", format!("{}_{{{}}}", sig6(mean), sig6(std)));
                    }
                }
                None => {
                    summary.push_str(",NA,NA");
                    if k < 4 {
                        let _ = write!(table, "{:>24}", "NA");
                    }
                }
            }
        }
        let _ = writeln!(table, "{:>12}", format!("{proper}/{}", results.len()));
        summary.push('\n');
    }
    let summary_path = out_dir.join("summary.csv");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    let manifest = out_dir.join("manifest.txt");
    RunManifest {
        command: "compare".into(),
        config: settings.snapshot(),
        inputs: vec![data_path.to_path_buf()],
        seeds: results.iter().map(|r| r.seed).collect(),
        outputs: written.clone(),
        runtime: start.elapsed(),
    }
    .write(&manifest)?;
    written.push(manifest);

    let _ = writeln!(table, "wrote {}", out_dir.display());
    Ok(CommandOutput {
        stdout: table,
        files: written,
    })
}
