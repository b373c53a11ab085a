//! Run directories: JSON metadata, CSV tables and raw slice arrays.
//!
//! Every CSV starts with one `# <json>` line holding the resolved config,
//! followed by a header row. Numbers use the shortest round-trip form, so
//! identical runs give byte-identical files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::extension_solver::{ExtSettings, ExtTrajectory};
use crate::lab::{BlowupReport, SweepReport, ValidationReport};
use crate::mild_solver::{ProblemSpec, Status, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn status_name(s: Status) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV writer that emits the config comment line first.
pub struct CsvTable {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    pub fn create(path: impl AsRef<Path>, config: &Value, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# {config}").map_err(|e| Error::io(&path, e))?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(CsvTable { path, inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn create_dir(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Little-endian `f64` array.
pub fn write_slice(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_slice(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::io(path, std::io::Error::other("length is not a multiple of 8 bytes")));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_times(dir: &Path, config: &Value, times: &[f64]) -> Result<()> {
    let mut t = CsvTable::create(dir.join("times.csv"), config, &["index", "t"])?;
    for (i, v) in times.iter().enumerate() {
        t.row([i.to_string(), v.to_string()])?;
    }
    t.finish()
}

fn write_supnorm(dir: &Path, config: &Value, times: &[f64], sups: &[f64], dts: &[f64], iters: &[usize]) -> Result<()> {
    let mut t = CsvTable::create(dir.join("supnorm.csv"), config, &["t", "sup_norm", "dt", "picard_iters"])?;
    for i in 0..times.len() {
        t.row([times[i].to_string(), sups[i].to_string(), dts[i].to_string(), iters[i].to_string()])?;
    }
    t.finish()
}

/// `meta.json`, `times.csv`, `supnorm.csv` and `slices/NNNNNN.bin`.
pub fn write_trajectory(dir: impl AsRef<Path>, config: &Value, spec: &ProblemSpec, traj: &Trajectory) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let meta = json!({
        "version": VERSION,
        "config": config,
        "spec": spec,
        "grid": traj.grid,
        "status": traj.status,
        "message": traj.message,
        "forcing_error": traj.forcing_error,
        "history_nodes": traj.history_nodes,
        "slices": traj.slices.len(),
    });
    write_json(dir.join("meta.json"), &meta)?;
    write_times(dir, config, &traj.times)?;
    write_supnorm(dir, config, &traj.times, &traj.sup_norms, &traj.dts, &traj.picard_iters)?;
    if !traj.slices.is_empty() {
        let sd = dir.join("slices");
        create_dir(&sd)?;
        for (i, s) in traj.slices.iter().enumerate() {
            write_slice(sd.join(format!("{i:06}.bin")), s)?;
        }
    }
    Ok(())
}

/// Extension run: the mild-run layout plus `energy.csv`; slice files hold
/// traces, and `ext_slices/` the stored `(x, y)` fields.
pub fn write_ext_trajectory(
    dir: impl AsRef<Path>,
    config: &Value,
    spec: &ProblemSpec,
    settings: &ExtSettings,
    traj: &ExtTrajectory,
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let stored: Vec<usize> = traj.slices.iter().map(|s| s.0).collect();
    let meta = json!({
        "version": VERSION,
        "config": config,
        "spec": spec,
        "ext": settings,
        "grid": spec.grid,
        "status": traj.status,
        "message": traj.message,
        "top_fraction": traj.top_fraction,
        "side_fraction": traj.side_fraction,
        "ext_slice_indices": stored,
    });
    write_json(dir.join("meta.json"), &meta)?;
    write_times(dir, config, &traj.times)?;
    // one linear solve per step
    let iters: Vec<usize> = (0..traj.times.len()).map(|i| usize::from(i > 0)).collect();
    write_supnorm(dir, config, &traj.times, &traj.sup_norms, &traj.dts, &iters)?;
    let mut header = vec!["t".to_string(), "I_U".to_string()];
    header.extend(traj.kaplan_k.iter().map(|k| format!("J_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut e = CsvTable::create(dir.join("energy.csv"), config, &header)?;
    for i in 0..traj.times.len() {
        let mut row = vec![traj.times[i].to_string(), traj.energies[i].to_string()];
        row.extend(traj.kaplan[i].iter().map(|v| v.to_string()));
        e.row(row)?;
    }
    e.finish()?;
    if !traj.traces.is_empty() {
        let sd = dir.join("slices");
        create_dir(&sd)?;
        for (i, s) in traj.traces.iter().enumerate() {
            write_slice(sd.join(format!("{i:06}.bin")), s)?;
        }
    }
    if !traj.slices.is_empty() {
        let sd = dir.join("ext_slices");
        create_dir(&sd)?;
        for (i, s) in &traj.slices {
            write_slice(sd.join(format!("{i:06}.bin")), s)?;
        }
    }
    Ok(())
}

pub fn write_validation(dir: impl AsRef<Path>, config: &Value, report: &ValidationReport) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let doc = json!({
        "version": VERSION,
        "config": config,
        "all_pass": report.all_pass,
        "entries": report.entries,
    });
    write_json(dir.join("validation.json"), &doc)
}

/// `phase.csv` (one row per run) and `phase_cells.csv` (one row per cell).
pub fn write_sweep(dir: impl AsRef<Path>, config: &Value, report: &SweepReport) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut t = CsvTable::create(
        dir.join("phase.csv"),
        config,
        &["sigma", "N", "p", "data_scale", "status", "T_est", "rate_exp", "rate_ci"],
    )?;
    for r in &report.runs {
        // T_est falls back to the detection time when the fit is unavailable
        let t_est = r.t_est.or(if r.escaped() { Some(r.final_time) } else { None });
        t.row([
            r.sigma.to_string(),
            r.dim.to_string(),
            r.p.to_string(),
            r.data_scale.to_string(),
            status_name(r.status),
            opt(t_est),
            opt(r.rate_exp),
            opt(r.rate_ci),
        ])?;
    }
    t.finish()?;
    let mut c = CsvTable::create(
        dir.join("phase_cells.csv"),
        config,
        &["sigma", "N", "p", "p_star", "regime", "label", "consistent"],
    )?;
    for cell in &report.cells {
        let name = |v: Value| v.as_str().unwrap_or_default().to_string();
        c.row([
            cell.sigma.to_string(),
            cell.dim.to_string(),
            cell.p.to_string(),
            cell.p_star.to_string(),
            name(json!(cell.regime)),
            name(json!(cell.label)),
            cell.consistent.to_string(),
        ])?;
    }
    c.finish()
}

pub fn write_rate(dir: impl AsRef<Path>, config: &Value, report: &BlowupReport, oracle: Option<f64>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let doc = json!({
        "version": VERSION,
        "config": config,
        "fit": report,
        "oracle_rate": oracle,
        "relative_error": oracle.map(|o| (report.rate_exp - o).abs() / o),
    });
    write_json(dir.join("rate.json"), &doc)
}

/// Parsed CSV with its config comment.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub config: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InsufficientData(format!("missing column `{name}`")))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|_| Error::InsufficientData(format!("column `{name}`: `{}` is not a number", r[c])))
            })
            .collect()
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let config = first
        .strip_prefix("# ")
        .and_then(|s| serde_json::from_str(s.trim_end()).ok())
        .ok_or_else(|| Error::io(path, std::io::Error::other("missing `# <config>` line")))?;
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect());
    }
    Ok(CsvData { config, header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_config_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = json!({"a": 1, "b": [0.5]});
        let mut t = CsvTable::create(dir.path().join("x.csv"), &cfg, &["t", "v"]).unwrap();
        t.row(["0.1", "3"]).unwrap();
        t.row([(1.0f64 / 3.0).to_string(), "1e300".to_string()]).unwrap();
        t.finish().unwrap();
        let d = read_csv(dir.path().join("x.csv")).unwrap();
        assert_eq!(d.config, cfg);
        assert_eq!(d.floats("t").unwrap(), vec![0.1, 1.0 / 3.0]);
        assert!(d.column("w").is_err());
    }

    #[test]
    fn slices_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![0.0, -1.5, f64::MIN_POSITIVE, 1e300];
        write_slice(dir.path().join("s.bin"), &v).unwrap();
        assert_eq!(read_slice(dir.path().join("s.bin")).unwrap(), v);
    }
}
