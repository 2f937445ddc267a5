//! Report persistence. Data files (CSV, summary) are pure functions of their
//! inputs — floats through the shortest round-trip formatter, no clocks — so
//! reruns are byte-identical. Wall-clock time lives only in the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use crate::causal::{BaselineRow, SweepReport};
use crate::error::{Error, Result};

/// One sweep's rows with the seed that produced them.
pub struct SeededSweep {
    pub seed: u64,
    pub report: SweepReport,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Pinned schema: `direction,sparsity,tcte,accuracy,n_queries,seed`.
pub fn write_sweep_csv(sweeps: &[SeededSweep], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["direction", "sparsity", "tcte", "accuracy", "n_queries", "seed"])
        .map_err(csv_err)?;
    for sw in sweeps {
        let tag = sw.report.direction.csv_tag();
        for row in &sw.report.rows {
            w.write_record([
                tag.to_string(),
                fmt(row.topology_sparsity),
                fmt(row.tcte),
                fmt(row.accuracy),
                row.n_queries.to_string(),
                sw.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Named-topology table: `kind,error_tcte,insight_tcte,accuracy,seed`.
pub fn write_baselines_csv(rows: &[BaselineRow], seed: u64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "error_tcte", "insight_tcte", "accuracy", "seed"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.kind.clone(),
            fmt(row.error_tcte),
            fmt(row.insight_tcte),
            fmt(row.accuracy),
            seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

/// Plain-text table of sweep rows plus endpoint deltas, averaged over seeds.
pub fn sweep_summary(sweeps: &[SeededSweep]) -> String {
    let mut out = String::new();
    if sweeps.is_empty() {
        out.push_str("no sweep rows\n");
        return out;
    }
    let tag = sweeps[0].report.direction.csv_tag();
    out.push_str(&format!("{tag}-propagation sweep over {} seed(s)\n\n", sweeps.len()));
    out.push_str(&format!("{:>6}  {:>10}  {:>10}  {:>10}\n", "seed", "sparsity", "tcte", "accuracy"));
    for sw in sweeps {
        for row in &sw.report.rows {
            out.push_str(&format!(
                "{:>6}  {:>10.4}  {:>10.6}  {:>10.4}\n",
                sw.seed, row.topology_sparsity, row.tcte, row.accuracy
            ));
        }
    }
    // endpoint comparison: densest (sparsity 0) vs sparsest row per seed
    let mut full_mean = 0.0;
    let mut chain_mean = 0.0;
    for sw in sweeps {
        let mut rows = sw.report.rows.clone();
        rows.sort_by(|a, b| a.topology_sparsity.total_cmp(&b.topology_sparsity));
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            full_mean += first.tcte;
            chain_mean += last.tcte;
        }
    }
    full_mean /= sweeps.len() as f64;
    chain_mean /= sweeps.len() as f64;
    out.push_str(&format!(
        "\nmean endpoint tcte: full={full_mean:.6} chain={chain_mean:.6} (full/chain ratio {:.4})\n",
        if chain_mean != 0.0 { full_mean / chain_mean } else { f64::NAN }
    ));
    out
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Ensure `dir` exists and return the joined file path.
pub fn prepare_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{PropagationMode, TcteRecord};
    use tempfile::tempdir;

    fn sample() -> Vec<SeededSweep> {
        vec![SeededSweep {
            seed: 7,
            report: SweepReport {
                direction: PropagationMode::ErrorPropagation,
                rows: vec![
                    TcteRecord { topology_sparsity: 0.0, tcte: 0.25, accuracy: 0.9, n_queries: 10 },
                    TcteRecord {
                        topology_sparsity: 2.0 / 3.0,
                        tcte: 0.125,
                        accuracy: 0.8,
                        n_queries: 10,
                    },
                ],
            },
        }]
    }

    #[test]
    fn sweep_csv_matches_pinned_schema_and_is_stable() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_sweep_csv(&sample(), &p1).unwrap();
        write_sweep_csv(&sample(), &p2).unwrap();
        let a = fs::read(&p1).unwrap();
        assert_eq!(a, fs::read(&p2).unwrap());
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "direction,sparsity,tcte,accuracy,n_queries,seed");
        assert_eq!(lines.next().unwrap(), "error,0,0.25,0.9,10,7");
        assert_eq!(lines.next().unwrap(), "error,0.6666666666666666,0.125,0.8,10,7");
    }

    #[test]
    fn empty_rows_yield_header_only() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        write_sweep_csv(&[], &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.trim_end(), "direction,sparsity,tcte,accuracy,n_queries,seed");
    }

    #[test]
    fn baseline_csv_shape() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("base.csv");
        let rows = vec![BaselineRow {
            kind: "chain".into(),
            error_tcte: 0.1,
            insight_tcte: 0.4,
            accuracy: 0.75,
        }];
        write_baselines_csv(&rows, 3, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("kind,error_tcte,insight_tcte,accuracy,seed\n"));
        assert!(text.contains("chain,0.1,0.4,0.75,3"));
    }

    #[test]
    fn summary_reports_endpoint_ratio() {
        let s = sweep_summary(&sample());
        assert!(s.contains("full=0.25"), "{s}");
        assert!(s.contains("chain=0.125"), "{s}");
        assert!(s.contains("ratio 2.0000"), "{s}");
    }
}
