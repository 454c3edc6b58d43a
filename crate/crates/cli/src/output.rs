//! JSON reports and CSV tables. Plot data is written as plain CSV with a
//! fixed header, so an empty report still produces a header line.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use torus_kam::kam::{NodeStatus, SchemeReport};

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> io::Result<Self> {
        fs::create_dir_all(path)?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.path(name), text)
    }

    pub fn csv<R: Serialize>(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()
    }
}

pub const ITERATION_HEADER: [&str; 6] = ["iteration", "N", "kept_measure", "eps0", "eps_r0", "max_h_norm"];
pub const ERROR_HEADER: [&str; 6] =
    ["iteration", "eps0", "eps_r0", "max_h_norm", "max_commutation_out", "max_elliptic_average"];
pub const MEASURE_HEADER: [&str; 5] = ["iteration", "N", "kept_measure", "measure_bound", "nodes"];
pub const NODE_HEADER: [&str; 6] = ["t", "status", "steps", "eps", "conjugation_error_f", "conjugation_error_g"];

fn status_name(s: &NodeStatus) -> String {
    match s {
        NodeStatus::Converged => "converged".into(),
        NodeStatus::NotConverged => "not-converged".into(),
        NodeStatus::Excluded { iteration, .. } => format!("excluded@{iteration}"),
    }
}

/// `iterations.csv`, `nodes.csv` and the two plot-data tables of a run.
pub fn emit_plotdata(out: &OutDir, report: &SchemeReport) -> io::Result<()> {
    out.csv("iterations.csv", &ITERATION_HEADER, report.csv_rows())?;
    out.csv(
        "error_vs_iteration.csv",
        &ERROR_HEADER,
        report
            .iterations
            .iter()
            .map(|r| (r.iteration, r.eps0, r.eps_r0, r.max_h_norm, r.max_commutation_out, r.max_elliptic_average)),
    )?;
    out.csv(
        "kept_measure_vs_iteration.csv",
        &MEASURE_HEADER,
        report.iterations.iter().map(|r| (r.iteration, r.n, r.kept_measure, r.measure_bound, r.nodes)),
    )?;
    out.csv(
        "nodes.csv",
        &NODE_HEADER,
        report
            .nodes
            .iter()
            .map(|n| (n.t, status_name(&n.status), n.steps, n.eps, n.conjugation_error_f, n.conjugation_error_g)),
    )
}

/// Counts of `log10(gap)` in unit-width bins.
pub fn gap_histogram(gaps: &[f64]) -> Vec<(i32, i32, usize)> {
    let logs: Vec<i32> = gaps.iter().filter(|g| **g > 0.0 && g.is_finite()).map(|g| g.log10().floor() as i32).collect();
    let (Some(&lo), Some(&hi)) = (logs.iter().min(), logs.iter().max()) else { return vec![] };
    (lo..=hi).map(|b| (b, b + 1, logs.iter().filter(|&&x| x == b).count())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use torus_kam::kam::IterationRecord;

    fn tmp(name: &str) -> OutDir {
        let dir = std::env::temp_dir().join(format!("torus-kam-out-{name}-{}", std::process::id()));
        OutDir::create(&dir).unwrap()
    }

    #[test]
    fn empty_report_gives_headers_only() {
        let out = tmp("empty");
        emit_plotdata(&out, &SchemeReport::default()).unwrap();
        for f in ["iterations.csv", "error_vs_iteration.csv", "kept_measure_vs_iteration.csv", "nodes.csv"] {
            let text = fs::read_to_string(out.path(f)).unwrap();
            assert_eq!(text.lines().count(), 1, "{f}");
        }
    }

    #[test]
    fn one_row_per_iteration() {
        let out = tmp("rows");
        let rep = SchemeReport {
            iterations: (0..6).map(|i| IterationRecord { iteration: i, ..Default::default() }).collect(),
            ..Default::default()
        };
        emit_plotdata(&out, &rep).unwrap();
        let first = fs::read(out.path("error_vs_iteration.csv")).unwrap();
        assert_eq!(String::from_utf8_lossy(&first).lines().count(), 7);
        emit_plotdata(&out, &rep).unwrap();
        assert_eq!(fs::read(out.path("error_vs_iteration.csv")).unwrap(), first);
    }

    #[test]
    fn histogram_bins() {
        let h = gap_histogram(&[0.5, 0.05, 0.02, 1e-4]);
        assert_eq!(h, vec![(-4, -3, 1), (-3, -2, 0), (-2, -1, 2), (-1, 0, 1)]);
        assert!(gap_histogram(&[]).is_empty());
    }
}
