//! CSV result tables and TOML design records.

use std::fs::File;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{UniaxialLayer, WaimStack};
use crate::objective::{CostReport, NodeResponse, SweepVariant};
use crate::swarm::{RunTrace, Timing, TraceRecord};

pub const MAP_HEADER: &str = "theta_deg,phi_deg,freq_hz,atc,arl_db,re_z,im_z";
pub const TRACE_HEADER: &str = "iteration,best_cost,best_cost_normalized,evals,elapsed_s";

/// Planes closer than this (deg) count as the same cut.
const PHI_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub freq_hz: f64,
    pub atc: f64,
    pub arl_db: f64,
    pub re_z: f64,
    pub im_z: f64,
}

impl From<&NodeResponse> for MapRow {
    fn from(n: &NodeResponse) -> Self {
        Self {
            theta_deg: n.theta_deg,
            phi_deg: n.phi_deg,
            freq_hz: n.freq,
            atc: n.response.atc,
            arl_db: n.response.arl_db(),
            re_z: n.response.z.re,
            im_z: n.response.z.im,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRow {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub freq_hz: f64,
    pub atc: f64,
    pub arl_db: f64,
    pub re_z: f64,
    pub im_z: f64,
    pub variant: String,
}

impl CutRow {
    fn new(n: &NodeResponse, variant: &str) -> Self {
        let m = MapRow::from(n);
        Self {
            theta_deg: m.theta_deg,
            phi_deg: m.phi_deg,
            freq_hz: m.freq_hz,
            atc: m.atc,
            arl_db: m.arl_db,
            re_z: m.re_z,
            im_z: m.im_z,
            variant: variant.to_string(),
        }
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let found = r.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("header `{found}`, expected `{header}`"),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// One row per node, in the given order.
pub fn write_atc_map(results: &[NodeResponse], path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), results.iter().map(MapRow::from))
}

pub fn read_atc_map(path: impl AsRef<Path>) -> Result<Vec<MapRow>> {
    read_rows(path.as_ref(), MAP_HEADER)
}

/// Rows of every labelled result set that lie on one of `phis`.
pub fn write_cuts(variants: &[(&str, &[NodeResponse])], phis: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let on_plane = |n: &&NodeResponse| phis.iter().any(|p| (n.phi_deg - p).abs() <= PHI_TOL);
    let rows = variants
        .iter()
        .flat_map(|(label, results)| results.iter().filter(on_plane).map(move |n| CutRow::new(n, label)));
    write_rows(path.as_ref(), rows)
}

pub fn read_cuts(path: impl AsRef<Path>) -> Result<Vec<CutRow>> {
    read_rows(path.as_ref(), &format!("{MAP_HEADER},variant"))
}

pub fn write_trace(trace: &RunTrace, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), &trace.records)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    read_rows(path.as_ref(), TRACE_HEADER)
}

/// Summary of one tolerance-sweep member; thicknesses are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub feasible: bool,
    pub thicknesses: String,
    pub psi: Option<f64>,
    pub psi_norm: Option<f64>,
    pub delta_psi: Option<f64>,
    pub violations: String,
}

impl From<&SweepVariant> for SweepRow {
    fn from(v: &SweepVariant) -> Self {
        let t: Vec<String> = v.stack.layers.iter().map(|l| l.thickness.to_string()).collect();
        Self {
            variant: v.label.clone(),
            feasible: v.feasible,
            thicknesses: t.join(";"),
            psi: v.report.as_ref().map(|r| r.psi),
            psi_norm: v.report.as_ref().map(|r| r.psi_norm),
            delta_psi: v.report.as_ref().map(|r| r.delta_psi),
            violations: v.violations.join("; "),
        }
    }
}

pub const SWEEP_HEADER: &str = "variant,feasible,thicknesses,psi,psi_norm,delta_psi,violations";

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), rows)
}

pub fn read_sweep(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    read_rows(path.as_ref(), SWEEP_HEADER)
}

/// Synthesized coating with its figures of merit and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRecord {
    /// SHA-256 of the canonical producing config.
    pub fingerprint: String,
    pub seed: u64,
    pub psi: f64,
    pub psi_norm: f64,
    pub delta_psi: f64,
    pub psi_no_waim: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stagnated: bool,
    pub isotropic: bool,
    /// Seconds.
    pub timing: Timing,
    pub layer: Vec<UniaxialLayer>,
}

impl DesignRecord {
    pub fn stack(&self) -> WaimStack {
        WaimStack {
            layers: self.layer.clone(),
            isotropic: self.isotropic,
        }
    }

    pub fn from_report(fingerprint: String, seed: u64, stack: &WaimStack, report: &CostReport, psi_no_waim: f64) -> Self {
        Self {
            fingerprint,
            seed,
            psi: report.psi,
            psi_norm: report.psi_norm,
            delta_psi: report.delta_psi,
            psi_no_waim,
            iterations: 0,
            evaluations: 0,
            stagnated: false,
            isotropic: stack.isotropic,
            timing: Timing::default(),
            layer: stack.layers.clone(),
        }
    }
}

pub fn write_toml<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub fn write_design(record: &DesignRecord, path: impl AsRef<Path>) -> Result<()> {
    write_toml(record, path)
}

pub fn read_design(path: impl AsRef<Path>) -> Result<DesignRecord> {
    read_toml(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::ActiveResponse;
    use num_complex::Complex64 as C64;

    fn node(theta_deg: f64, phi_deg: f64) -> NodeResponse {
        let z = C64::new(40.0 + theta_deg / 3.0, -36.0 + phi_deg / 7.0);
        NodeResponse {
            theta_deg,
            phi_deg,
            freq: 10e9,
            response: ActiveResponse::from_impedances(z, C64::new(40.0, -36.0), 1e6).unwrap(),
        }
    }

    #[test]
    fn map_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        let nodes: Vec<_> = (0..6).map(|i| node(0.1 + 7.3 * i as f64, 1.0 / 3.0 + i as f64)).collect();
        write_atc_map(&nodes, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), MAP_HEADER);
        let rows = read_atc_map(&path).unwrap();
        assert_eq!(rows.len(), nodes.len());
        for (r, n) in rows.iter().zip(&nodes) {
            assert_eq!(*r, MapRow::from(n));
        }
        assert_eq!(rows[0].theta_deg, 0.1);
    }

    #[test]
    fn broadside_row_is_capped() {
        let r = MapRow::from(&node(0.0, 0.0));
        assert_eq!(r.atc, 1.0);
        assert_eq!(r.arl_db, 60.0);
    }

    #[test]
    fn cuts_keep_requested_planes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cuts.csv");
        let coated: Vec<_> = [0.0, 30.0, 45.0, 90.0].iter().map(|&p| node(20.0, p)).collect();
        let bare: Vec<_> = [0.0, 45.0].iter().map(|&p| node(20.0, p)).collect();
        write_cuts(&[("coated", &coated), ("uncoated", &bare)], &[0.0, 45.0], &path).unwrap();
        let rows = read_cuts(&path).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.phi_deg == 0.0 || r.phi_deg == 45.0));
        assert_eq!(rows.iter().filter(|r| r.variant == "uncoated").count(), 2);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_atc_map(&path), Err(Error::Parse { .. })));
        assert!(matches!(read_atc_map(dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn design_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.txt");
        let record = DesignRecord {
            fingerprint: "ab".repeat(32),
            seed: 7,
            psi: 1.234_567_890_123e-5,
            psi_norm: 0.6393,
            delta_psi: -0.3607,
            psi_no_waim: 1.931e-5,
            iterations: 200,
            evaluations: 2010,
            stagnated: false,
            isotropic: false,
            timing: Timing {
                total_s: 12.5,
                exploration_s: 0.01,
                linkage_s: 0.02,
                em_s: 12.4,
            },
            layer: vec![
                UniaxialLayer {
                    thickness: 5.7e-3,
                    eps_xx: 1.02,
                    eps_yy: 1.07,
                    eps_zz: 17.38,
                },
                UniaxialLayer {
                    thickness: 0.012,
                    eps_xx: 2.89,
                    eps_yy: 29.44,
                    eps_zz: 1.74,
                },
            ],
        };
        write_design(&record, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["fingerprint", "seed", "delta_psi", "thickness", "eps_zz"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(read_design(&path).unwrap(), record);
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = RunTrace {
            records: (0..4)
                .map(|i| TraceRecord {
                    iteration: i,
                    best_cost: 1.0 / (i + 1) as f64,
                    best_cost_normalized: 0.9 / (i + 1) as f64,
                    evals: 10 * (i + 1),
                    elapsed_s: 0.1 * i as f64,
                })
                .collect(),
            best_position: vec![],
        };
        write_trace(&trace, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().next().unwrap(), TRACE_HEADER);
        assert_eq!(read_trace(&path).unwrap(), trace.records);
    }
}
