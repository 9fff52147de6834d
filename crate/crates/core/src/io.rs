//! On-disk artifact formats: the event CSV, parameter/metrics JSON files,
//! and the per-run manifest with content hashes.
//!
//! Floats in CSV artifacts are written with 17 significant digits so a
//! write/read round trip is exact; rerunning a command with identical
//! config and seed reproduces every artifact byte for byte.

use crate::error::{Error, Result};
use crate::events::{EventSequence, MarkedEvent};
use crate::kernel::KernelParams;
use crate::mark::MarkModel;
use crate::metrics::MetricsReport;
use crate::model::ModelParams;
use crate::solver::FitMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// 17 significant digits: exact f64 round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Provenance stamped into every artifact of a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

pub fn write_events_csv(path: &Path, seq: &EventSequence, prov: &Provenance) -> Result<()> {
    let mut out = String::new();
    out.push_str("# unhap-events-v1\n");
    let _ = writeln!(out, "# config_hash = {}", prov.config_hash);
    let _ = writeln!(out, "# seed = {}", prov.seed);
    let _ = writeln!(out, "# t_horizon = {}", fmt_f64(seq.t_horizon));
    let _ = writeln!(out, "# n_types = {}", seq.n_types());
    out.push_str("type_id,time,mark,label\n");
    for (type_id, list) in seq.events.iter().enumerate() {
        for ev in list {
            let label = ev.label.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{type_id},{},{},{label}", fmt_f64(ev.t), fmt_f64(ev.mark));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read an event CSV. Rows need not be sorted. When `mark_model` is given,
/// marks outside its support are rejected. `t_override` wins over the file
/// header; one of the two must provide the horizon.
pub fn read_events_csv(
    path: &Path,
    mark_model: Option<&MarkModel>,
    t_override: Option<f64>,
) -> Result<EventSequence> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut t_header: Option<f64> = None;
    let mut n_types: usize = 1;
    let mut rows: Vec<(usize, MarkedEvent)> = Vec::new();
    let mut saw_header_row = false;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                match k.trim() {
                    "t_horizon" => {
                        t_header = Some(v.trim().parse().map_err(|e| {
                            Error::Data(format!("row {row}: bad t_horizon: {e}"))
                        })?)
                    }
                    "n_types" => {
                        n_types = v.trim().parse().map_err(|e| {
                            Error::Data(format!("row {row}: bad n_types: {e}"))
                        })?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header_row {
            if line != "type_id,time,mark,label" {
                return Err(Error::Data(format!(
                    "row {row}: expected header 'type_id,time,mark,label', got '{line}'"
                )));
            }
            saw_header_row = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!("row {row}: expected 4 fields, got {}", fields.len())));
        }
        let type_id: usize = fields[0]
            .parse()
            .map_err(|e| Error::Data(format!("row {row}: bad type_id: {e}")))?;
        let t: f64 =
            fields[1].parse().map_err(|e| Error::Data(format!("row {row}: bad time: {e}")))?;
        let mark: f64 =
            fields[2].parse().map_err(|e| Error::Data(format!("row {row}: bad mark: {e}")))?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Data(format!("row {row}: time {t} must be >= 0")));
        }
        if let Some(m) = mark_model {
            if !m.contains(mark) {
                return Err(Error::Data(format!(
                    "row {row}: mark {mark} outside the declared mark support [{}, {}]",
                    m.support.0, m.support.1
                )));
            }
        }
        let label = match fields[3].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(Error::Data(format!("row {row}: bad label '{other}'"))),
        };
        rows.push((type_id, MarkedEvent { t, mark, label, gen: None }));
    }
    let max_type = rows.iter().map(|(t, _)| *t).max().map_or(0, |m| m + 1);
    let d = n_types.max(max_type).max(1);
    let mut events = vec![Vec::new(); d];
    for (type_id, ev) in rows {
        events[type_id].push(ev);
    }
    let t_horizon = t_override.or(t_header).ok_or_else(|| {
        Error::Data("no horizon: file lacks '# t_horizon = ...' and none was configured".into())
    })?;
    EventSequence::from_raw(events, t_horizon)
}

/// Serialized parameter set (fitted or ground truth).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub config_hash: String,
    pub seed: u64,
    pub mode: Option<FitMode>,
    pub mu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub kernels: Vec<KernelParams>,
    pub mark_model: MarkModel,
}

impl ParamsFile {
    pub fn from_params(params: &ModelParams, mode: Option<FitMode>, prov: &Provenance) -> Self {
        Self {
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            mode,
            mu: params.mu.clone(),
            mu_tilde: params.mu_tilde.clone(),
            kernels: params.kernels.clone(),
            mark_model: (*params.mark).clone(),
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.mu.clone(),
            self.mu_tilde.clone(),
            self.kernels.clone(),
            Arc::new(self.mark_model.clone()),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("params serialization: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("bad params file {}: {e}", path.display())))
    }
}

/// Per-event fit output: `type_id,time,mark,rho,label_hat`.
pub fn write_rho_csv(
    path: &Path,
    seq: &EventSequence,
    rho_per_event: &[Vec<f64>],
    labels_per_event: &[Vec<u8>],
    prov: &Provenance,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# unhap-rho-v1\n");
    let _ = writeln!(out, "# config_hash = {}", prov.config_hash);
    let _ = writeln!(out, "# seed = {}", prov.seed);
    out.push_str("type_id,time,mark,rho,label_hat\n");
    for (type_id, list) in seq.events.iter().enumerate() {
        for (n, ev) in list.iter().enumerate() {
            let _ = writeln!(
                out,
                "{type_id},{},{},{},{}",
                fmt_f64(ev.t),
                fmt_f64(ev.mark),
                fmt_f64(rho_per_event[type_id][n]),
                labels_per_event[type_id][n]
            );
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Predicted labels back from a rho CSV, per type.
pub fn read_rho_csv(path: &Path) -> Result<Vec<Vec<u8>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut labels: Vec<Vec<u8>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("type_id") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!("row {}: expected 5 fields", lineno + 1)));
        }
        let type_id: usize = fields[0]
            .parse()
            .map_err(|e| Error::Data(format!("row {}: bad type_id: {e}", lineno + 1)))?;
        let label: u8 = fields[4]
            .parse()
            .map_err(|e| Error::Data(format!("row {}: bad label: {e}", lineno + 1)))?;
        if labels.len() <= type_id {
            labels.resize(type_id + 1, Vec::new());
        }
        labels[type_id].push(label);
    }
    Ok(labels)
}

pub fn write_loss_trace(path: &Path, trace: &[f64], prov: &Provenance) -> Result<()> {
    let mut out = String::new();
    out.push_str("# unhap-loss-trace-v1\n");
    let _ = writeln!(out, "# config_hash = {}", prov.config_hash);
    let _ = writeln!(out, "# seed = {}", prov.seed);
    out.push_str("iteration,loss\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_f64(*v));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub seed: u64,
    pub metrics: MetricsReport,
}

pub fn write_metrics(dir: &Path, report: &MetricsReport, prov: &Provenance) -> Result<Vec<PathBuf>> {
    let txt_path = dir.join("metrics.txt");
    let mut txt = format!("# config_hash = {}\n# seed = {}\n", prov.config_hash, prov.seed);
    txt.push_str(&report.to_flat_text());
    std::fs::write(&txt_path, txt)?;
    let json_path = dir.join("metrics.json");
    let file = MetricsFile {
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        metrics: report.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Internal(format!("metrics serialization: {e}")))?;
    std::fs::write(&json_path, json + "\n")?;
    Ok(vec![txt_path, json_path])
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Write `manifest.json` listing every artifact (sorted by name) with its
/// content hash.
pub fn write_manifest(dir: &Path, files: &[PathBuf], prov: &Provenance) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Entry {
        name: String,
        sha256: String,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        config_hash: &'a str,
        seed: u64,
        artifacts: Vec<Entry>,
    }
    let mut entries = Vec::new();
    for f in files {
        let name = f
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Internal("artifact path has no file name".into()))?
            .to_string();
        entries.push(Entry { name, sha256: sha256_file(f)? });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest =
        Manifest { config_hash: &prov.config_hash, seed: prov.seed, artifacts: entries };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mark::MarkModel;

    #[test]
    fn event_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let evs = vec![
            MarkedEvent { t: 0.1 + 0.2, mark: 1.0 / 3.0, label: Some(1), gen: None },
            MarkedEvent { t: std::f64::consts::PI, mark: 0.9999999999999999, label: None, gen: None },
        ];
        let seq = EventSequence::from_raw(vec![evs], 10.0).unwrap();
        let prov = Provenance { config_hash: "deadbeef".into(), seed: 42 };
        write_events_csv(&path, &seq, &prov).unwrap();
        let back = read_events_csv(&path, None, None).unwrap();
        assert_eq!(back, seq);
        // writing again is byte-identical
        let first = std::fs::read(&path).unwrap();
        write_events_csv(&path, &seq, &prov).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "# t_horizon = 10.0\ntype_id,time,mark,label\n0,1.0,0.5,1\n0,oops,0.5,0\n",
        )
        .unwrap();
        let err = read_events_csv(&path, None, None).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
    }

    #[test]
    fn marks_outside_support_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_mark.csv");
        std::fs::write(
            &path,
            "# t_horizon = 10.0\ntype_id,time,mark,label\n0,1.0,1.5,\n",
        )
        .unwrap();
        let m = MarkModel::builtin("identity-linear").unwrap();
        assert!(read_events_csv(&path, Some(&m), None).is_err());
        assert!(read_events_csv(&path, None, None).is_ok());
    }

    #[test]
    fn missing_horizon_is_an_error_unless_overridden() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nohdr.csv");
        std::fs::write(&path, "type_id,time,mark,label\n0,1.0,0.5,\n").unwrap();
        assert!(read_events_csv(&path, None, None).is_err());
        let seq = read_events_csv(&path, None, Some(5.0)).unwrap();
        assert_eq!(seq.t_horizon, 5.0);
    }

    #[test]
    fn params_file_round_trip() {
        use crate::kernel::TruncGaussKernel;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let mark = Arc::new(MarkModel::builtin("identity-linear").unwrap());
        let k = KernelParams::TruncatedGaussian(TruncGaussKernel::new(1.45, 0.5, 0.1, 1.0).unwrap());
        let p = ModelParams::new(vec![0.8], vec![0.5], vec![k], mark).unwrap();
        let prov = Provenance { config_hash: "cafe".into(), seed: 1 };
        let pf = ParamsFile::from_params(&p, Some(FitMode::Unhap), &prov);
        pf.write(&path).unwrap();
        let back = ParamsFile::read(&path).unwrap().to_params().unwrap();
        assert_eq!(back.mu, p.mu);
        assert_eq!(back.kernels[0].param_values(), p.kernels[0].param_values());
        assert_eq!(back.mark.h1, p.mark.h1);
    }

    #[test]
    fn manifest_lists_sorted_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("b_second.txt");
        let b = dir.path().join("a_first.txt");
        std::fs::write(&a, "one").unwrap();
        std::fs::write(&b, "two").unwrap();
        let prov = Provenance::default();
        let m = write_manifest(dir.path(), &[a, b], &prov).unwrap();
        let text = std::fs::read_to_string(m).unwrap();
        let ia = text.find("a_first").unwrap();
        let ib = text.find("b_second").unwrap();
        assert!(ia < ib);
    }
}
