//! Number formatting, run manifests and small file helpers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};

/// Formats like C's `%.{digits}g`: fixed notation for exponents in
/// `[-4, digits)`, scientific otherwise, trailing zeros removed.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    // Round first so that e.g. 999999.7 lands in the right notation.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Six significant digits, the precision of everything printed to stdout.
pub fn sig6(x: f64) -> String {
    sig(x, 6)
}

pub fn opt6(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), sig6)
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Provenance written next to every result file.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub runtime: Duration,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        for (i, p) in self.inputs.iter().enumerate() {
            let _ = writeln!(out, "input.{i}={}", p.display());
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds={}", seeds.join(","));
        for (i, p) in self.outputs.iter().enumerate() {
            let _ = writeln!(out, "output.{i}={}", p.display());
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        let _ = writeln!(out, "runtime_seconds={}", self.runtime.as_secs_f64());
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating directory {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(83.33333333), "83.3333");
        assert_eq!(sig6(0.1), "0.1");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1.5e-5), "1.5e-5");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn sig_matches_rounding_oracle() {
        // Round-trip through the printed value must stay within half a unit
        // in the sixth significant place.
        for &x in &[3.14159265, 2.718281828e-7, 6.02214076e23, 1.0 / 3.0, 123.4565] {
            let printed: f64 = sig6(x).parse().unwrap();
            let ulp6 = 10f64.powi(x.abs().log10().floor() as i32 - 5);
            assert!((printed - x).abs() <= 0.5 * ulp6 * (1.0 + 1e-9), "{x} -> {printed}");
        }
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn manifest_lists_every_field() {
        let m = RunManifest {
            command: "fit".into(),
            config: vec![("dim".into(), "2".into())],
            inputs: vec!["a.csv".into()],
            seeds: vec![3, 4],
            outputs: vec!["out/report.txt".into()],
            runtime: Duration::from_millis(1500),
        };
        let text = m.render();
        for needle in ["command=fit", "input.0=a.csv", "seeds=3,4", "output.0=out/report.txt", "config.dim=2", "runtime_seconds=1.5", "version="] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
    }
}
