use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{read_dataset, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::regimes::{PerRegime, Regime, WindowedSample};
use crate::spd::{Mat, SpdMatrix};

/// One histogram bin over `[lo, hi)`; the last bin is closed.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (total · width)`.
    pub density: f64,
}

/// Histogram on `[−1, 1]` of every upper-triangle coefficient of `corrs`.
pub fn density_histogram<'a>(corrs: impl IntoIterator<Item = &'a SpdMatrix>, bins: usize) -> Vec<DensityBin> {
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for c in corrs {
        let n = c.dim();
        for i in 0..n {
            for j in i + 1..n {
                let k = ((c.get(i, j) + 1.0) / width).floor();
                counts[(k.max(0.0) as usize).min(bins - 1)] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| DensityBin {
            lo: -1.0 + k as f64 * width,
            hi: -1.0 + (k + 1) as f64 * width,
            count,
            density: if total == 0 { 0.0 } else { count as f64 / (total as f64 * width) },
        })
        .collect()
}

/// Elementwise mean correlation per labelled regime.
pub fn mean_corr_by_regime(windows: &[WindowedSample]) -> PerRegime<Option<Mat>> {
    let mean = |r: Regime| {
        let members: Vec<&WindowedSample> = windows.iter().filter(|w| w.label.regime == r).collect();
        let first = members.first()?;
        let mut acc = Mat::zeros(first.corr.dim(), first.corr.dim());
        for w in &members {
            acc += w.corr.as_mat();
        }
        Some(acc / members.len() as f64)
    };
    PerRegime {
        stressed: mean(Regime::Stressed),
        normal: mean(Regime::Normal),
        rally: mean(Regime::Rally),
    }
}

/// Artifacts found under a run directory, each with an output prefix.
#[derive(Debug, Default)]
pub struct ExportPlan {
    datasets: Vec<(String, PathBuf)>,
    training: Vec<(String, PathBuf)>,
    equity: Vec<(String, PathBuf)>,
}

/// Scans `run_dir` and subdirectories up to two levels down, skipping
/// `exclude`.
pub fn plan_exports(run_dir: &Path, exclude: Option<&Path>) -> Result<ExportPlan> {
    let mut plan = ExportPlan::default();
    let exclude = exclude.and_then(|p| p.canonicalize().ok());
    scan(run_dir, "", 0, exclude.as_deref(), &mut plan)?;
    if plan.datasets.is_empty() && plan.training.is_empty() && plan.equity.is_empty() {
        return Err(Error::Data(format!("no plottable artifacts under {}", run_dir.display())));
    }
    Ok(plan)
}

fn scan(dir: &Path, prefix: &str, depth: usize, exclude: Option<&Path>, plan: &mut ExportPlan) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let path = e.path();
        if path.is_dir() && (exclude.is_none() || path.canonicalize().ok().as_deref() != exclude) {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    if dir.join(MANIFEST_FILE).is_file() {
        plan.datasets.push((prefix.to_string(), dir.to_path_buf()));
    }
    if dir.join("training.csv").is_file() {
        plan.training.push((prefix.to_string(), dir.join("training.csv")));
    }
    if dir.join("equity.csv").is_file() {
        plan.equity.push((prefix.to_string(), dir.join("equity.csv")));
    }
    if depth < 2 {
        for sub in subdirs {
            let name = sub.file_name().unwrap().to_string_lossy().into_owned();
            if name == "samples" {
                continue;
            }
            scan(&sub, &format!("{prefix}{name}_"), depth + 1, exclude, plan)?;
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `density.csv`, `heatmap_<regime>.csv`, `accuracy.csv` and
/// `equity.csv` (each prefixed by its source subdirectory) into `out`.
pub fn export_plots(plan: &ExportPlan, out: &Path, bins: usize) -> Result<()> {
    for (prefix, dir) in &plan.datasets {
        let windows = read_dataset(dir)?.windows();
        let mut csv = String::from("regime,bin_lo,bin_hi,count,density\n");
        for r in Regime::ALL {
            let corrs = windows.iter().filter(|w| w.label.regime == r).map(|w| &w.corr);
            for b in density_histogram(corrs, bins) {
                let _ = writeln!(csv, "{},{},{},{},{}", r.as_str(), b.lo, b.hi, b.count, b.density);
            }
        }
        write(&out.join(format!("{prefix}density.csv")), &csv)?;
        let means = mean_corr_by_regime(&windows);
        for r in Regime::ALL {
            if let Some(m) = means.get(r) {
                let mut grid = String::new();
                for i in 0..m.nrows() {
                    let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
                    grid.push_str(&row.join(","));
                    grid.push('\n');
                }
                write(&out.join(format!("{prefix}heatmap_{}.csv", r.as_str())), &grid)?;
            }
        }
    }
    for (prefix, path) in &plan.training {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut text = String::from("epoch,train_acc,val_acc\n");
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let _ = writeln!(text, "{},{},{}", field(0), field(2), field(3));
        }
        write(&out.join(format!("{prefix}accuracy.csv")), &text)?;
    }
    for (prefix, path) in &plan.equity {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        write(&out.join(format!("{prefix}equity.csv")), &text)?;
    }
    Ok(())
}
