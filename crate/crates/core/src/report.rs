//! Transfer metrics, trajectory export and the suite table.
//!
//! Trajectory files carry `t` followed by the frame's six element columns,
//! the mass and the four controls `throttle, u_r, u_t, u_n`. Time, mass and
//! the `mee`/`cartesian` columns are in canonical units. The `coe` frame
//! gives `a` in metres and angles in degrees.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bbsoc::{ArcKind, ControlStructure};
use crate::collocation::{CollocationSolution, Trajectory};
use crate::elements::{mee_to_cartesian, mee_to_coe, ElementsError, EquinoctialElements, ScaleSet};
use crate::problem::{Study, TransferProblem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("final mass {mf} must lie in (0, {m0}]")]
    Mass { m0: f64, mf: f64 },
    #[error(transparent)]
    Elements(#[from] ElementsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("trajectory file: {0}")]
    Format(String),
}

/// Effective impulse of the propellant burnt between `m0` and `mf`.
pub fn tsiolkovsky_dv(m0: f64, mf: f64, g0: f64, isp: f64) -> Result<f64, ReportError> {
    if !(mf > 0.0 && mf <= m0) {
        return Err(ReportError::Mass { m0, mf });
    }
    Ok(g0 * isp * (m0 / mf).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMetrics {
    /// kg
    pub final_mass: f64,
    /// h
    pub thrust_time: f64,
    pub revolutions: f64,
    pub thrust_arcs: usize,
    /// m/s
    pub delta_v: f64,
    /// Prior-work ΔV in m/s, where tabulated.
    pub reference_delta_v: Option<f64>,
}

pub fn compute_metrics(
    sol: &CollocationSolution,
    structure: &ControlStructure,
    prob: &TransferProblem,
) -> Result<TransferMetrics, ReportError> {
    let c = &prob.config.constants;
    let first = &sol.states[0];
    let last = sol.states.last().expect("solutions have nodes");
    let final_mass = last[6] * prob.scales.mu_unit;
    let burn: f64 =
        structure.arcs.iter().filter(|a| a.kind == ArcKind::Max).map(|a| a.duration()).sum();
    Ok(TransferMetrics {
        final_mass,
        thrust_time: burn * prob.scales.tu / 3600.0,
        revolutions: (last[5] - first[5]) / std::f64::consts::TAU,
        thrust_arcs: structure.thrust_arcs(),
        delta_v: tsiolkovsky_dv(c.m0, final_mass, c.g0, c.isp)?,
        reference_delta_v: None,
    })
}

/// Propellant implied by the thrust time at constant mass flow, in kg.
pub fn burnt_mass(metrics: &TransferMetrics, prob: &TransferProblem) -> f64 {
    let c = &prob.config.constants;
    metrics.thrust_time * 3600.0 * prob.config.thrust.t_max_n / (c.g0 * c.isp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Mee,
    Coe,
    Cartesian,
}

impl Frame {
    pub fn columns(self) -> [&'static str; 12] {
        let el = match self {
            Self::Mee => ["p", "f", "g", "h", "k", "L"],
            Self::Coe => ["a_m", "e", "i_deg", "raan_deg", "argp_deg", "ta_deg"],
            Self::Cartesian => ["x", "y", "z", "vx", "vy", "vz"],
        };
        ["t", el[0], el[1], el[2], el[3], el[4], el[5], "m", "throttle", "u_r", "u_t", "u_n"]
    }
}

impl FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mee" => Ok(Self::Mee),
            "coe" => Ok(Self::Coe),
            "cartesian" => Ok(Self::Cartesian),
            other => Err(format!("unknown frame {other:?}")),
        }
    }
}

fn row(frame: Frame, scales: &ScaleSet, t: f64, x: &[f64], u: &[f64]) -> Result<[f64; 12], ReportError> {
    let mee = EquinoctialElements::from_slice(&x[..6]);
    let el = match frame {
        Frame::Mee => mee.to_array(),
        Frame::Coe => {
            let c = mee_to_coe(&mee)?;
            let d = f64::to_degrees;
            [c.a * scales.du, c.e, d(c.i), d(c.raan), d(c.argp), d(c.ta)]
        }
        Frame::Cartesian => {
            let (r, v) = mee_to_cartesian(&mee, 1.0)?;
            [r[0], r[1], r[2], v[0], v[1], v[2]]
        }
    };
    Ok([t, el[0], el[1], el[2], el[3], el[4], el[5], x[6], u[0], u[1], u[2], u[3]])
}

fn rows(traj: &Trajectory, scales: &ScaleSet, frame: Frame) -> Result<Vec<[f64; 12]>, ReportError> {
    (0..traj.t.len()).map(|j| row(frame, scales, traj.t[j], &traj.x[j], &traj.u[j])).collect()
}

#[derive(Serialize, Deserialize)]
struct JsonTrajectory {
    schema: u32,
    frame: Frame,
    samples: Vec<Map<String, Value>>,
}

/// Writes `traj` to `out`. Equal inputs give identical bytes.
pub fn write_trajectory<W: Write>(
    traj: &Trajectory,
    scales: &ScaleSet,
    format: ExportFormat,
    frame: Frame,
    out: W,
) -> Result<(), ReportError> {
    let cols = frame.columns();
    let data = rows(traj, scales, frame)?;
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(cols)?;
            for r in &data {
                w.write_record(r.iter().map(|v| format!("{v:.16e}")))?;
            }
            w.flush()?;
        }
        ExportFormat::Json => {
            let samples = data
                .iter()
                .map(|r| cols.iter().zip(r).map(|(c, v)| (c.to_string(), Value::from(*v))).collect())
                .collect();
            let doc = JsonTrajectory { schema: SCHEMA_VERSION, frame, samples };
            serde_json::to_writer_pretty(out, &doc)?;
        }
    }
    Ok(())
}

pub fn export_trajectory(
    traj: &Trajectory,
    scales: &ScaleSet,
    format: ExportFormat,
    frame: Frame,
    path: &Path,
) -> Result<(), ReportError> {
    let mut file = BufWriter::new(File::create(path)?);
    write_trajectory(traj, scales, format, frame, &mut file)?;
    file.flush()?;
    Ok(())
}

fn from_rows(rows: Vec<Vec<f64>>) -> Result<Trajectory, ReportError> {
    let mut traj = Trajectory::default();
    for r in rows {
        if r.len() != 12 {
            return Err(ReportError::Format(format!("expected 12 columns, found {}", r.len())));
        }
        traj.t.push(r[0]);
        traj.x.push(r[1..8].to_vec());
        traj.u.push(r[8..12].to_vec());
    }
    if traj.t.is_empty() {
        return Err(ReportError::Format("no samples".into()));
    }
    if traj.t.windows(2).any(|w| w[1] < w[0]) {
        return Err(ReportError::Format("times are not monotone".into()));
    }
    Ok(traj)
}

/// Reads a trajectory written in the `mee` frame, e.g. as a warm start.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, ReportError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        let doc: JsonTrajectory = serde_json::from_str(&text)?;
        if doc.frame != Frame::Mee {
            return Err(ReportError::Format(format!("frame {:?} cannot seed a solve", doc.frame)));
        }
        let cols = Frame::Mee.columns();
        let rows = doc
            .samples
            .iter()
            .map(|s| {
                cols.iter()
                    .map(|c| s.get(*c).and_then(Value::as_f64).ok_or_else(|| ReportError::Format(format!("missing {c}"))))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        return from_rows(rows);
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != Frame::Mee.columns() {
        return Err(ReportError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let r = rec.iter().map(|v| v.trim().parse::<f64>().map_err(|e| ReportError::Format(e.to_string())));
        rows.push(r.collect::<Result<Vec<_>, _>>()?);
    }
    from_rows(rows)
}

/// One cell of a suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRow {
    pub study: Study,
    pub case: usize,
    pub metrics: Option<TransferMetrics>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Summary table in the layout of the published performance tables.
pub fn suite_table(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<5} {:>4} {:>12} {:>10} {:>9} {:>4} {:>10} {:>10}  status",
        "study", "case", "mf (kg)", "tT (h)", "N", "A_T", "ΔV (m/s)", "Ref ΔV"
    );
    for r in rows {
        let reference = r
            .metrics
            .as_ref()
            .and_then(|m| m.reference_delta_v)
            .or_else(|| crate::reference::published(r.study, r.case).and_then(|p| p.prior_delta_v))
            .map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        let status = match (&r.error, r.converged) {
            (Some(e), _) => format!("failed: {e}"),
            (None, true) => "converged".to_string(),
            (None, false) => "not converged".to_string(),
        };
        match &r.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{:<5} {:>4} {:>12.4} {:>10.4} {:>9.4} {:>4} {:>10.1} {:>10}  {status}",
                    r.study.to_string(),
                    r.case,
                    m.final_mass,
                    m.thrust_time,
                    m.revolutions,
                    m.thrust_arcs,
                    m.delta_v,
                    reference
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<5} {:>4} {:>12} {:>10} {:>9} {:>4} {:>10} {:>10}  {status}",
                    r.study.to_string(),
                    r.case,
                    "-",
                    "-",
                    "-",
                    "-",
                    "-",
                    reference
                );
            }
        }
    }
    out
}

/// Summary rows as CSV, one line per cell.
pub fn write_summary<W: Write>(rows: &[SuiteRow], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "study",
        "case",
        "final_mass_kg",
        "thrust_time_h",
        "revolutions",
        "thrust_arcs",
        "delta_v_mps",
        "reference_delta_v_mps",
        "converged",
        "error",
    ])?;
    let num = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.16e}"));
    for r in rows {
        let m = r.metrics.as_ref();
        w.write_record([
            r.study.to_string(),
            r.case.to_string(),
            num(m.map(|m| m.final_mass)),
            num(m.map(|m| m.thrust_time)),
            num(m.map(|m| m.revolutions)),
            m.map_or_else(String::new, |m| m.thrust_arcs.to_string()),
            num(m.map(|m| m.delta_v)),
            num(m.and_then(|m| m.reference_delta_v)),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
