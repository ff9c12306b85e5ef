//! CSV and JSON emission.
//!
//! Trajectory CSV: header `t,mode,x_1,...,x_n,event`, one row per accepted
//! integrator node plus one row per event carrying the pre-event state.
//! Floats use `{:.16e}`; `mode` is the mode index; `event` is empty on
//! plain samples. Every JSON document carries `schema_version`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{Event, QuotientPoint, Trajectory, TrajectoryMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

pub fn csv_header(dim: usize) -> String {
    let mut cols = vec!["t".to_string(), "mode".to_string()];
    cols.extend((1..=dim).map(|i| format!("x_{i}")));
    cols.push("event".into());
    cols.join(",")
}

fn csv_row(out: &mut impl Write, t: f64, p: Option<&QuotientPoint>, dim: usize, event: &str) -> Result<()> {
    write!(out, "{t:.16e},")?;
    match p {
        Some(p) => {
            write!(out, "{}", p.mode)?;
            for x in &p.coords {
                write!(out, ",{x:.16e}")?;
            }
        }
        None => {
            for _ in 0..dim {
                write!(out, ",")?;
            }
        }
    }
    writeln!(out, ",{event}")?;
    Ok(())
}

/// Writes the trajectory as CSV; events are placed before samples of equal time.
pub fn write_trajectory_csv(out: &mut impl Write, traj: &Trajectory, dim: usize) -> Result<()> {
    writeln!(out, "{}", csv_header(dim))?;
    let mut events = traj.events.iter().peekable();
    for (t, p) in traj.times.iter().zip(&traj.points) {
        while let Some(e) = events.next_if(|e| e.time <= *t) {
            csv_row(out, e.time, e.point.as_ref(), dim, e.kind.as_str())?;
        }
        csv_row(out, *t, Some(p), dim, "")?;
    }
    for e in events {
        csv_row(out, e.time, e.point.as_ref(), dim, e.kind.as_str())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    schema_version: u32,
    meta: &'a TrajectoryMeta,
    times: &'a [f64],
    points: &'a [QuotientPoint],
    events: &'a [Event],
}

pub fn trajectory_json(traj: &Trajectory) -> Result<String> {
    let doc = TrajectoryDoc {
        schema_version: crate::SCHEMA_VERSION,
        meta: &traj.meta,
        times: &traj.times,
        points: &traj.points,
        events: &traj.events,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Pretty JSON of any serializable report.
pub fn report_json(report: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes a trajectory to `path` in `format`.
pub fn emit_trajectory(traj: &Trajectory, dim: usize, format: Format, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    match format {
        Format::Csv => write_trajectory_csv(&mut w, traj, dim)?,
        Format::Json => writeln!(w, "{}", trajectory_json(traj)?)?,
    }
    w.flush()?;
    Ok(())
}

/// Writes a report to `path` as JSON.
pub fn emit_report(report: &impl Serialize, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", report_json(report)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::bouncing_ball;
    use crate::sim::{simulate_execution, EventKind, SimConfig};

    #[test]
    fn empty_trajectory_is_header_only() {
        let traj = Trajectory::new("execution", 1.0, None);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 2).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,mode,x_1,x_2,event\n");
    }

    #[test]
    fn bouncing_ball_rows_mark_resets() {
        let s = bouncing_ball(0.5, 9.81, 1.0).unwrap();
        let traj = simulate_execution(&s.system, &s.default_x0, &s.default_u, s.default_t, &SimConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let resets = text.lines().filter(|l| l.ends_with(",reset_jump")).count();
        assert_eq!(resets, traj.count(EventKind::ResetJump));
        let times: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn json_carries_schema_version() {
        let traj = Trajectory::new("filippov", 1.0, None);
        let v: serde_json::Value = serde_json::from_str(&trajectory_json(&traj).unwrap()).unwrap();
        assert_eq!(v["schema_version"], crate::SCHEMA_VERSION);
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let traj = Trajectory::new("filippov", 1.0, None);
        let err = emit_trajectory(&traj, 2, Format::Csv, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
