//! Training and comparison reports: CSV logs, the comparison summary JSON,
//! and Freedman-Diaconis histograms for the distribution checkpoints.

use std::path::Path;

use serde::Serialize;
use slowflow_core::stats::ComparisonReport;
use slowflow_core::train::TrainReport;

use super::{fmt_f64, write_text};
use crate::Result;

pub fn train_report_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut out = String::from("iteration,nll_train,nll_val,lr,seconds\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            fmt_f64(r.nll_train),
            fmt_f64(r.nll_val),
            fmt_f64(r.lr),
            fmt_f64(r.seconds)
        ));
    }
    write_text(path, &out)
}

/// Per-coordinate curve export: `t,mean_true,mean_model,std_true,std_model`.
pub fn curves_csv(path: &Path, report: &ComparisonReport, coord: usize) -> Result<()> {
    let dim = report.dim;
    let mut out = String::from("t,mean_true,mean_model,std_true,std_model\n");
    for (k, &t) in report.times.iter().enumerate() {
        let idx = k * dim + coord;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(report.truth.mean[idx]),
            fmt_f64(report.model.mean[idx]),
            fmt_f64(report.truth.std[idx]),
            fmt_f64(report.model.std[idx])
        ));
    }
    write_text(path, &out)
}

#[derive(Debug, Serialize)]
struct CoordinateSummary {
    coordinate: usize,
    max_mean_deviation: f64,
    truth_mean_range: f64,
    max_std_deviation: f64,
    truth_std_range: f64,
}

#[derive(Debug, Serialize)]
struct KsRow {
    time: f64,
    coordinate: usize,
    ks: f64,
}

#[derive(Debug, Serialize)]
struct ComparisonJson<'a> {
    config: &'a serde_json::Value,
    ensemble_size: usize,
    horizon: f64,
    summaries: Vec<CoordinateSummary>,
    ks: Vec<KsRow>,
}

/// Summary JSON: configuration echo, per-coordinate discrepancy summaries,
/// and the KS table.
pub fn comparison_json(
    path: &Path,
    report: &ComparisonReport,
    config_echo: &serde_json::Value,
) -> Result<()> {
    let doc = ComparisonJson {
        config: config_echo,
        ensemble_size: report.truth.n,
        horizon: *report.times.last().unwrap_or(&0.0),
        summaries: (0..report.dim)
            .map(|c| CoordinateSummary {
                coordinate: c,
                max_mean_deviation: report.max_mean_dev[c],
                truth_mean_range: report.truth_mean_range[c],
                max_std_deviation: report.max_std_dev[c],
                truth_std_range: report.truth_std_range[c],
            })
            .collect(),
        ks: report
            .ks
            .iter()
            .map(|e| KsRow {
                time: e.time,
                coordinate: e.coordinate,
                ks: e.ks,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| crate::AppError::format(path.display().to_string(), e.to_string()))?;
    write_text(path, &json)
}

/// KS table as a path-free numerical payload: `time,coordinate,ks`.
pub fn ks_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut out = String::from("time,coordinate,ks\n");
    for e in &report.ks {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(e.time),
            e.coordinate + 1,
            fmt_f64(e.ks)
        ));
    }
    write_text(path, &out)
}

/// Shared-bin histogram of two sample sets.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density_a: Vec<f64>,
    pub density_b: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Freedman-Diaconis bins over the pooled samples.
pub fn fd_histogram(a: &[f64], b: &[f64]) -> Histogram {
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_unstable_by(f64::total_cmp);
    let n = pooled.len();
    let (mut lo, mut hi) = (pooled[0], pooled[n - 1]);
    if !(hi > lo) {
        let pad = lo.abs().max(1.0) * 1e-3;
        lo -= pad;
        hi += pad;
    }
    let iqr = quantile(&pooled, 0.75) - quantile(&pooled, 0.25);
    let range = hi - lo;
    let width = if iqr > 0.0 {
        2.0 * iqr / (n as f64).cbrt()
    } else {
        range / 50.0
    };
    let n_bins = ((range / width).ceil() as usize).clamp(1, 400);
    let width = range / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let fill = |xs: &[f64]| {
        let mut counts = vec![0usize; n_bins];
        for &x in xs {
            let mut bin = ((x - lo) / width) as usize;
            if bin >= n_bins {
                bin = n_bins - 1;
            }
            counts[bin] += 1;
        }
        counts
            .iter()
            .map(|&c| c as f64 / (xs.len() as f64 * width))
            .collect::<Vec<f64>>()
    };
    Histogram {
        density_a: fill(a),
        density_b: fill(b),
        edges,
    }
}

/// `bin_lo,bin_hi,density_true,density_model` per row.
pub fn histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut out = String::from("bin_lo,bin_hi,density_true,density_model\n");
    for i in 0..h.density_a.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(h.edges[i]),
            fmt_f64(h.edges[i + 1]),
            fmt_f64(h.density_a[i]),
            fmt_f64(h.density_b[i])
        ));
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_histogram_is_normalized() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.731).sin()).collect();
        let b: Vec<f64> = (0..300).map(|i| (i as f64 * 0.911).cos() * 0.8).collect();
        let h = fd_histogram(&a, &b);
        let width = h.edges[1] - h.edges[0];
        let mass_a: f64 = h.density_a.iter().map(|d| d * width).sum();
        let mass_b: f64 = h.density_b.iter().map(|d| d * width).sum();
        assert!((mass_a - 1.0).abs() < 1e-12);
        assert!((mass_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_fall_back_to_one_bin_scale() {
        let h = fd_histogram(&[1.0, 1.0, 1.0], &[1.0, 1.0]);
        assert!(!h.edges.is_empty());
        assert!(h.density_a.iter().all(|d| d.is_finite()));
    }
}
