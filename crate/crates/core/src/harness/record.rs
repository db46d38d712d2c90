use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Method, RunMode, SolverKind};
use crate::eqp::EqpReport;
use crate::error::{Error, Result};
use crate::rom::ErrorReport;

/// Measurements of one online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub method: Method,
    pub mode: RunMode,
    pub solver: SolverKind,
    pub mu: f64,
    pub train_mu: Vec<f64>,
    pub er: f64,
    pub nwin: usize,
    /// State basis size per window.
    pub r_y: Vec<usize>,
    /// Force basis size per window (interpolation only).
    pub r_f: Vec<usize>,
    /// `n_f` (interpolation), `K*` (EQP) or `K` (none), summed over windows.
    pub n_points: usize,
    pub sample_mesh_elements: usize,
    pub error: ErrorReport,
    /// Median ROM loop time over FOM loop time.
    pub relative_online_time: f64,
    pub rom_wall_time: f64,
    pub rom_wall_samples: Vec<f64>,
    pub fom_wall_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eqp: Vec<EqpReport>,
    pub newton_iters_total: usize,
    pub config_hash: String,
}

impl RunRecord {
    pub fn combined_error(&self) -> f64 {
        self.error.combined
    }

    /// Objective pair `(relative online time, combined error)`.
    pub fn objectives(&self) -> (f64, f64) {
        (self.relative_online_time, self.error.combined)
    }
}

/// Records with the indices of their non-dominated members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub records: Vec<RunRecord>,
    pub front: Vec<usize>,
}

impl ParetoSet {
    pub fn new(records: Vec<RunRecord>) -> Self {
        let points: Vec<(f64, f64)> = records.iter().map(RunRecord::objectives).collect();
        let front = pareto_front(&points);
        ParetoSet { records, front }
    }

    pub fn front_records(&self) -> impl Iterator<Item = &RunRecord> {
        self.front.iter().map(|&i| &self.records[i])
    }
}

pub fn pareto_extract(records: Vec<RunRecord>) -> ParetoSet {
    ParetoSet::new(records)
}

/// Indices of the points not dominated by any other point, both objectives
/// minimized. `q` dominates `p` when it is no worse in both objectives and
/// strictly better in one, so exact duplicates are both kept. Points with a
/// non-finite objective are never on the front and dominate nothing.
/// Returned indices are sorted by the first objective, then the index.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| points[i].0.is_finite() && points[i].1.is_finite()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)).then(a.cmp(&b)));
    let mut front = Vec::new();
    // smallest second objective among points with a strictly smaller first one
    let mut best_before = f64::INFINITY;
    let mut g = 0;
    while g < order.len() {
        let x = points[order[g]].0;
        let mut end = g;
        while end < order.len() && points[order[end]].0 == x {
            end += 1;
        }
        let group_min = points[order[g]].1;
        if group_min < best_before {
            front.extend(order[g..end].iter().cloned().filter(|&i| points[i].1 == group_min));
        }
        best_before = best_before.min(group_min);
        g = end;
    }
    front
}

/// One row of the tidy report CSV.
#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    problem: &'a str,
    method: &'a str,
    mode: String,
    solver: String,
    mu: f64,
    er: f64,
    nwin: usize,
    r_y: usize,
    r_f: usize,
    n_points: usize,
    sample_mesh_elements: usize,
    combined_error: f64,
    relative_online_time: f64,
    rom_wall_time: f64,
    fom_wall_time: f64,
    on_front: bool,
    config_hash: &'a str,
}

#[derive(Debug, Serialize)]
struct FrontRow {
    relative_online_time: f64,
    combined_error: f64,
    n_points: usize,
    er: f64,
}

/// Files written by [`write_report`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportSummary {
    pub rows: usize,
    pub front_files: Vec<String>,
    /// Methods with no records, whose front file was omitted.
    pub omitted: Vec<String>,
}

/// Writes `records.csv` (one row per record, flagged if on the overall
/// front), `front_all.csv`, and `front_<method>.csv` for every method that
/// has records.
pub fn write_report(records: &[RunRecord], dir: &Path) -> Result<ReportSummary> {
    if records.is_empty() {
        return Err(Error::invalid("no run records to report"));
    }
    super::io::create_dir(dir)?;
    let overall = ParetoSet::new(records.to_vec());
    let csv_err = |p: &Path, e: csv::Error| Error::Format { path: p.display().to_string(), message: e.to_string() };

    let path = dir.join("records.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for (i, r) in records.iter().enumerate() {
        w.serialize(ReportRow {
            problem: &r.problem,
            method: r.method.as_str(),
            mode: r.mode.to_string(),
            solver: r.solver.to_string(),
            mu: r.mu,
            er: r.er,
            nwin: r.nwin,
            r_y: r.r_y.iter().sum(),
            r_f: r.r_f.iter().sum(),
            n_points: r.n_points,
            sample_mesh_elements: r.sample_mesh_elements,
            combined_error: r.error.combined,
            relative_online_time: r.relative_online_time,
            rom_wall_time: r.rom_wall_time,
            fom_wall_time: r.fom_wall_time,
            on_front: overall.front.contains(&i),
            config_hash: &r.config_hash,
        })
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;

    let mut summary = ReportSummary { rows: records.len(), ..Default::default() };
    let mut write_front = |name: &str, set: &ParetoSet| -> Result<()> {
        let path = dir.join(format!("front_{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for r in set.front_records() {
            w.serialize(FrontRow { relative_online_time: r.relative_online_time, combined_error: r.error.combined, n_points: r.n_points, er: r.er })
                .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        summary.front_files.push(path.file_name().expect("file name").to_string_lossy().into_owned());
        Ok(())
    };
    write_front("all", &overall)?;
    for m in Method::ALL {
        let subset: Vec<RunRecord> = records.iter().filter(|r| r.method == m).cloned().collect();
        if subset.is_empty() {
            log::info!("no records for method {m}; front file omitted");
            summary.omitted.push(m.to_string());
            continue;
        }
        write_front(m.as_str(), &ParetoSet::new(subset))?;
    }
    Ok(summary)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rom::ErrorNorm;
    use proptest::prelude::*;

    pub(crate) fn record(method: Method, time: f64, err: f64) -> RunRecord {
        RunRecord {
            problem: "p".into(),
            method,
            mode: RunMode::Reproductive,
            solver: SolverKind::Rk4,
            mu: 1.0,
            train_mu: vec![1.0],
            er: 4.0,
            nwin: 1,
            r_y: vec![3],
            r_f: vec![],
            n_points: 10,
            sample_mesh_elements: 4,
            error: ErrorReport { norm: ErrorNorm::Euclidean, per_field: vec![], combined: err },
            relative_online_time: time,
            rom_wall_time: time,
            rom_wall_samples: vec![time],
            fom_wall_time: 1.0,
            eqp: vec![],
            newton_iters_total: 0,
            config_hash: String::new(),
        }
    }

    /// Direct O(n²) reading of the definition.
    pub(crate) fn brute_force_front(points: &[(f64, f64)]) -> Vec<usize> {
        let finite = |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite();
        let mut front: Vec<usize> = (0..points.len())
            .filter(|&i| finite(&points[i]))
            .filter(|&i| {
                let p = points[i];
                !points.iter().any(|q| finite(q) && q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1))
            })
            .collect();
        front.sort();
        front
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort();
        v
    }

    #[test]
    fn spec_examples() {
        assert_eq!(sorted(pareto_front(&[(1.0, 2.0), (2.0, 1.0), (3.0, 3.0)])), vec![0, 1]);
        assert_eq!(pareto_front(&[(5.0, 5.0)]), vec![0]);
        assert_eq!(sorted(pareto_front(&[(1.0, 1.0), (1.0, 1.0), (2.0, 2.0)])), vec![0, 1]);
        assert!(pareto_front(&[]).is_empty());
    }

    #[test]
    fn equal_first_objective_keeps_only_the_best() {
        assert_eq!(pareto_front(&[(1.0, 3.0), (1.0, 2.0), (0.5, 2.0)]), vec![2]);
        assert_eq!(sorted(pareto_front(&[(1.0, 3.0), (1.0, 2.0), (0.5, 4.0)])), vec![1, 2]);
    }

    #[test]
    fn non_finite_points_are_ignored() {
        assert_eq!(pareto_front(&[(f64::NAN, 0.0), (1.0, 1.0), (0.5, f64::INFINITY)]), vec![1]);
    }

    #[test]
    fn report_writes_rows_and_fronts() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(Method::Deim, 0.1, 1e-2), record(Method::Eqp, 0.2, 1e-3), record(Method::Eqp, 0.3, 1e-2)];
        let summary = write_report(&records, dir.path()).unwrap();
        assert_eq!(summary.rows, 3);
        let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(summary.front_files.contains(&"front_all.csv".to_string()));
        assert!(summary.front_files.contains(&"front_eqp.csv".to_string()));
        assert!(summary.omitted.contains(&"sopt".to_string()));
        assert!(!dir.path().join("front_sopt.csv").exists());
        let eqp_front = std::fs::read_to_string(dir.path().join("front_eqp.csv")).unwrap();
        assert_eq!(eqp_front.lines().count(), 2);
        assert!(write_report(&[], dir.path()).is_err());
    }

    #[test]
    fn record_json_round_trip() {
        let r = record(Method::QdeimE, 0.25, 3e-4);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"method\":\"qdeim_e\""));
        assert_eq!(serde_json::from_str::<RunRecord>(&text).unwrap(), r);
    }

    fn points_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        // coarse grid values so ties and duplicates are common
        prop::collection::vec((0u8..12, 0u8..12), 1..200).prop_map(|v| v.into_iter().map(|(a, b)| (a as f64 * 0.5, b as f64 * 0.25)).collect())
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle(points in points_strategy()) {
            prop_assert_eq!(sorted(pareto_front(&points)), brute_force_front(&points));
        }

        #[test]
        fn front_is_mutually_non_dominated(points in points_strategy()) {
            let front = pareto_front(&points);
            for &i in &front {
                for &j in &front {
                    let (p, q) = (points[i], points[j]);
                    prop_assert!(!(q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1)));
                }
            }
        }
    }
}
