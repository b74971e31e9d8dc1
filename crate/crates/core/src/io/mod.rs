//! File formats: trajectory and control CSV, JSON system descriptions.

mod system_file;

use std::io::{Read, Write};

use thiserror::Error;

use crate::error::ModelError;
use crate::model::{ControlSignal, EdgeId, ModeId};
use crate::relaxation::RelaxedPoint;
use crate::trajectory::{Trajectory, TrajectoryError, TrajectoryMeta};

pub use system_file::{
    ActivationRef, ConstraintRef, EdgeDesc, FieldRef, ModeDesc, ResetRef, SystemFile,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn point_tag(p: &RelaxedPoint) -> String {
    match p {
        RelaxedPoint::Interior { mode, .. } => format!("m{}", mode.0),
        RelaxedPoint::Strip { edge, .. } => format!("e{}", edge.0),
    }
}

/// Writes `time, tag, x0..x{n-1}, tau`; `tag` is `m<j>` for interior
/// samples and `e<k>` for strip samples. Rows of lower-dimensional modes
/// leave trailing coordinates empty; `tau` is empty for interior samples.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<(), IoError> {
    let width = traj
        .samples()
        .iter()
        .map(|s| s.point.coords().len())
        .max()
        .unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string(), "tag".to_string()];
    header.extend((0..width).map(|i| format!("x{i}")));
    header.push("tau".into());
    out.write_record(&header)?;
    for s in traj.samples() {
        let coords = s.point.coords();
        let mut row = vec![s.t.to_string(), point_tag(&s.point)];
        row.extend((0..width).map(|i| coords.get(i).map_or(String::new(), |v| v.to_string())));
        row.push(s.point.tau().map_or(String::new(), |t| t.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64, IoError> {
    s.trim().parse().map_err(|_| IoError::Format {
        line,
        msg: format!("not a number: '{s}'"),
    })
}

/// Reads the samples of a trajectory CSV. Transition records are not part
/// of the format and come back empty.
pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Trajectory, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut traj = Trajectory::new(TrajectoryMeta {
        source: "csv".into(),
        ..TrajectoryMeta::default()
    });
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() < 3 {
            return Err(IoError::Format {
                line,
                msg: "expected time, tag and tau columns".into(),
            });
        }
        let t = parse_f64(&rec[0], line)?;
        let tag = &rec[1];
        let coords = (2..rec.len() - 1)
            .filter(|&i| !rec[i].trim().is_empty())
            .map(|i| parse_f64(&rec[i], line))
            .collect::<Result<Vec<_>, _>>()?;
        let index = |s: &str| -> Result<usize, IoError> {
            s.parse().map_err(|_| IoError::Format {
                line,
                msg: format!("bad tag '{tag}'"),
            })
        };
        let point = if let Some(j) = tag.strip_prefix('m') {
            RelaxedPoint::interior(ModeId(index(j)?), coords)
        } else if let Some(e) = tag.strip_prefix('e') {
            RelaxedPoint::Strip {
                edge: EdgeId(index(e)?),
                zeta: coords,
                tau: parse_f64(&rec[rec.len() - 1], line)?,
            }
        } else {
            return Err(IoError::Format {
                line,
                msg: format!("bad tag '{tag}'"),
            });
        };
        traj.push(t, point)?;
    }
    Ok(traj)
}

/// Reads a control signal: a time column followed by one column per input.
pub fn read_control_csv<R: Read>(r: R, range: Vec<(f64, f64)>) -> Result<ControlSignal, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let mut row = rec.iter().map(|s| parse_f64(s, line));
        let t = row.next().ok_or(IoError::Format {
            line,
            msg: "empty row".into(),
        })??;
        times.push(t);
        values.push(row.collect::<Result<Vec<_>, _>>()?);
    }
    Ok(ControlSignal::new(times, values, range)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_roundtrip() {
        let mut traj = Trajectory::new(TrajectoryMeta::default());
        traj.push(0.0, RelaxedPoint::interior(ModeId(0), vec![0.1, 1.0 / 3.0])).unwrap();
        traj.push(
            0.25,
            RelaxedPoint::Strip {
                edge: EdgeId(2),
                zeta: vec![1e-300, -2.5],
                tau: 0.1 + 0.2,
            },
        )
        .unwrap();
        traj.push(0.5, RelaxedPoint::interior(ModeId(1), vec![7.0])).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,tag,x0,x1,tau\n0,m0,0.1,0.3333333333333333,\n"));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples(), traj.samples());
    }

    #[test]
    fn control_csv() {
        let text = "t,u\n0,1.5\n1,-2\n";
        let u = read_control_csv(text.as_bytes(), vec![(-5.0, 5.0)]).unwrap();
        assert_eq!(u.eval(0.5), &[1.5]);
        assert_eq!(u.eval(3.0), &[-2.0]);
        assert!(read_control_csv("t,u\n0,9\n".as_bytes(), vec![(-5.0, 5.0)]).is_err());
        assert!(read_control_csv("t,u\n0,x\n".as_bytes(), vec![(-5.0, 5.0)]).is_err());
    }

    #[test]
    fn malformed_trajectory_rows() {
        assert!(read_trajectory_csv("time,tag,x0,tau\n0,q1,1,\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("time,tag,x0,tau\n1,m0,1,\n0,m0,1,\n".as_bytes()).is_err());
    }
}
