//! CSV and JSON artifacts: trajectories, schedules, coefficient dumps,
//! cluster sets and run summaries, plus trajectory comparison.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so identical runs
//! give byte-identical files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModeClusters, SpectralState};
use crate::steppers::Trajectory;
use crate::vshmm::VshmmSchedule;

/// Tolerance for matching sample times between two trajectories.
pub const TIME_MATCH_TOL: f64 = 1e-9;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// A trajectory as it appears on disk: named columns after `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn from_trajectory(traj: &Trajectory, columns: Vec<String>) -> Result<Self> {
        if let Some(s) = traj.states.first() {
            if s.len() != columns.len() {
                return Err(Error::Config(format!("{} column names for {} components", columns.len(), s.len())));
            }
        }
        Ok(Self {
            columns,
            times: traj.times.clone(),
            rows: traj.states.clone(),
        })
    }

    /// Default column names `x0, x1, ...`.
    pub fn default_columns(dim: usize) -> Vec<String> {
        (0..dim).map(|i| format!("x{i}")).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header).map_err(csv_err)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![fmt_f64(*t)];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Parse("first column must be `t`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
            times.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        Ok(Self { columns, times, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}

/// Writes `trajectory.csv` style output with default column names.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, columns: Option<Vec<String>>) -> Result<()> {
    let dim = traj.states.first().map_or(0, |s| s.len());
    let columns = columns.unwrap_or_else(|| TrajectoryTable::default_columns(dim));
    TrajectoryTable::from_trajectory(traj, columns)?.save(path)
}

/// Schedule rows `cycle, level, step, cumulative_time` for one macro interval.
pub fn write_schedule_csv<W: Write>(sched: &VshmmSchedule, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cycle", "level", "step", "cumulative_time"]).map_err(csv_err)?;
    let mut acc = 0.0;
    for s in &sched.steps {
        acc += s.step;
        out.write_record([s.cycle.to_string(), s.level.to_string(), fmt_f64(s.step), fmt_f64(acc)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Coefficient dump `k, abs, arg, threshold` for `k >= 0`. Modes with
/// `|u_k| <= floor` are skipped; `threshold` repeats the shrinkage value so
/// a plot can draw it.
pub fn write_coefficients_csv<W: Write>(state: &SpectralState, threshold: f64, floor: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "abs", "arg", "threshold"]).map_err(csv_err)?;
    for (k, c) in state.half().iter().enumerate() {
        let a = c.norm();
        if a > floor {
            out.write_record([k.to_string(), fmt_f64(a), fmt_f64(c.arg()), fmt_f64(threshold)])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Grid snapshot `x, u`.
pub fn write_field_csv<W: Write>(x: &[f64], u: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "u"]).map_err(csv_err)?;
    for (a, b) in x.iter().zip(u) {
        out.write_record([fmt_f64(*a), fmt_f64(*b)]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Torus sample points `index, fast, slow`.
pub fn write_points_csv<W: Write>(points: &[[f64; 2]], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "fast", "slow"]).map_err(csv_err)?;
    for (i, p) in points.iter().enumerate() {
        out.write_record([i.to_string(), fmt_f64(p[0]), fmt_f64(p[1])]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClustersRecord {
    pub buffer: u64,
    /// Nonnegative wavenumbers of each cluster; `-k` is implied.
    pub clusters: Vec<Vec<u64>>,
}

impl From<&ModeClusters> for ClustersRecord {
    fn from(c: &ModeClusters) -> Self {
        Self {
            buffer: c.buffer,
            clusters: c.clusters.iter().map(|k| k.iter().copied().collect()).collect(),
        }
    }
}

impl ClustersRecord {
    pub fn to_clusters(&self) -> Result<ModeClusters> {
        ModeClusters::new(self.clusters.iter().map(|k| k.iter().copied().collect()).collect(), self.buffer)
    }
}

pub fn write_clusters_json<W: Write>(clusters: &ModeClusters, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &ClustersRecord::from(clusters)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_clusters_json<R: Read>(r: R) -> Result<ModeClusters> {
    let rec: ClustersRecord = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
    rec.to_clusters()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cycle: Option<usize>,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        let (t, level, cycle) = match e {
            Error::BlowUp(b) => (Some(b.t), b.level, b.cycle),
            _ => (None, None, None),
        };
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            t,
            level,
            cycle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    pub sup_error: f64,
    pub l2_error: f64,
    /// `l2_error` over the RMS of the reference on the same samples.
    pub relative_l2_error: f64,
    /// Reference evaluations over run evaluations, when both are known.
    pub cost_ratio: Option<f64>,
    pub samples: usize,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub problem: String,
    pub method: String,
    pub parameters: serde_json::Value,
    pub rhs_evals: Vec<u64>,
    pub total_rhs_evals: u64,
    pub wall_time_s: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<CompareMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<ErrorRecord>,
}

impl RunSummary {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::Parse(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_reader(File::open(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Sup and RMS differences of `run` against `reference` on the selected
/// columns (all shared ones if `None`). The reference may be sampled more
/// finely; every run time must appear in it.
pub fn compare_tables(run: &TrajectoryTable, reference: &TrajectoryTable, columns: Option<&[String]>) -> Result<CompareMetrics> {
    let names: Vec<String> = match columns {
        Some(c) => c.to_vec(),
        None => run.columns.iter().filter(|c| reference.column_index(c).is_some()).cloned().collect(),
    };
    if names.is_empty() {
        return Err(Error::Config("no common columns to compare".into()));
    }
    let mut idx = Vec::with_capacity(names.len());
    for n in &names {
        match (run.column_index(n), reference.column_index(n)) {
            (Some(a), Some(b)) => idx.push((a, b)),
            _ => return Err(Error::Config(format!("column `{n}` missing from one of the files"))),
        }
    }
    let (mut sup, mut sq, mut ref_sq) = (0.0f64, 0.0, 0.0);
    let mut j = 0;
    for (i, t) in run.times.iter().enumerate() {
        while j < reference.times.len() && reference.times[j] < t - TIME_MATCH_TOL {
            j += 1;
        }
        if j == reference.times.len() || (reference.times[j] - t).abs() > TIME_MATCH_TOL {
            return Err(Error::TimeGridMismatch(format!("t = {t} has no reference sample")));
        }
        let mut row = 0.0;
        for &(a, b) in &idx {
            let d = (run.rows[i][a] - reference.rows[j][b]).abs();
            sup = sup.max(d);
            row += d * d;
            ref_sq += reference.rows[j][b] * reference.rows[j][b];
        }
        sq += row;
    }
    let n = run.times.len();
    if n == 0 {
        return Err(Error::TimeGridMismatch("run has no samples".into()));
    }
    Ok(CompareMetrics {
        sup_error: sup,
        l2_error: (sq / n as f64).sqrt(),
        relative_l2_error: if ref_sq > 0.0 { (sq / ref_sq).sqrt() } else { 0.0 },
        cost_ratio: None,
        samples: n,
    })
}

/// Cost ratio `reference / run` from two summaries.
pub fn cost_ratio(run: &RunSummary, reference: &RunSummary) -> Option<f64> {
    (run.total_rhs_evals > 0).then(|| reference.total_rhs_evals as f64 / run.total_rhs_evals as f64)
}
