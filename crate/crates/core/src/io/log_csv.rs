//! Experiment logs as CSV (one row per sample, units in the header) plus a
//! JSON sidecar carrying command, sensor and seed provenance.
//!
//! Values are written with 9 significant digits; reading a file and writing
//! it again reproduces it byte for byte.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testbed::{ExperimentLog, GroundTruth, LogMeta, TorqueChannel};

const AXES: [&str; 3] = ["fx", "fy", "fz"];

pub fn fmt_value(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSidecar {
    pub csv: String,
    pub joint_names: Vec<String>,
    pub tendon_names: Vec<String>,
    pub samples: usize,
    pub meta: Option<LogMeta>,
}

/// Column kinds; the same set appears again under the `gt_` prefix.
#[derive(Debug, Clone, PartialEq)]
enum Channel {
    Time,
    Q(String),
    Qdot(String),
    Force(String),
    Excursion(String),
    TauExt(String),
    Tip(usize),
}

impl Channel {
    fn header(&self) -> String {
        match self {
            Channel::Time => "time[s]".into(),
            Channel::Q(j) => format!("q_{j}[rad]"),
            Channel::Qdot(j) => format!("qdot_{j}[rad/s]"),
            Channel::Force(t) => format!("ft_{t}[N]"),
            Channel::Excursion(t) => format!("l_{t}[m]"),
            Channel::TauExt(j) => format!("tau_ext_{j}[N*m]"),
            Channel::Tip(a) => format!("{}[N]", AXES[*a]),
        }
    }

    fn parse(name: &str, unit: &str) -> Option<Channel> {
        let (ch, expected) = if name == "time" {
            (Channel::Time, "s")
        } else if let Some(j) = name.strip_prefix("qdot_") {
            (Channel::Qdot(j.into()), "rad/s")
        } else if let Some(j) = name.strip_prefix("q_") {
            (Channel::Q(j.into()), "rad")
        } else if let Some(t) = name.strip_prefix("ft_") {
            (Channel::Force(t.into()), "N")
        } else if let Some(t) = name.strip_prefix("l_") {
            (Channel::Excursion(t.into()), "m")
        } else if let Some(j) = name.strip_prefix("tau_ext_") {
            (Channel::TauExt(j.into()), "N*m")
        } else if let Some(a) = AXES.iter().position(|a| *a == name) {
            (Channel::Tip(a), "N")
        } else {
            return None;
        };
        (unit == expected).then_some(ch)
    }
}

fn layout(log: &ExperimentLog) -> Vec<(bool, Channel, &[f64])> {
    let mut cols: Vec<(bool, Channel, &[f64])> = vec![(false, Channel::Time, &log.time)];
    let jn = &log.joint_names;
    let tn = &log.tendon_names;
    for (j, c) in log.q_meas.iter().enumerate() {
        cols.push((false, Channel::Q(jn[j].clone()), c));
    }
    for (j, c) in log.qdot_est.iter().enumerate() {
        cols.push((false, Channel::Qdot(jn[j].clone()), c));
    }
    for (k, c) in log.tendon_force_meas.iter().enumerate() {
        cols.push((false, Channel::Force(tn[k].clone()), c));
    }
    for (k, c) in log.tendon_excursion_meas.iter().enumerate() {
        cols.push((false, Channel::Excursion(tn[k].clone()), c));
    }
    if let Some(tc) = &log.external_torque_meas {
        cols.push((false, Channel::TauExt(jn[tc.joint].clone()), &tc.values));
    }
    if let Some(f) = &log.fingertip_force_meas {
        for (a, c) in f.iter().enumerate() {
            cols.push((false, Channel::Tip(a), c));
        }
    }
    if let Some(gt) = &log.ground_truth {
        for (j, c) in gt.q.iter().enumerate() {
            cols.push((true, Channel::Q(jn[j].clone()), c));
        }
        for (j, c) in gt.qdot.iter().enumerate() {
            cols.push((true, Channel::Qdot(jn[j].clone()), c));
        }
        for (k, c) in gt.tendon_force.iter().enumerate() {
            cols.push((true, Channel::Force(tn[k].clone()), c));
        }
        for (k, c) in gt.tendon_excursion.iter().enumerate() {
            cols.push((true, Channel::Excursion(tn[k].clone()), c));
        }
        if let (Some(v), Some(tc)) = (&gt.external_torque, &log.external_torque_meas) {
            cols.push((true, Channel::TauExt(jn[tc.joint].clone()), v));
        }
        if let Some(f) = &gt.fingertip_force {
            for (a, c) in f.iter().enumerate() {
                cols.push((true, Channel::Tip(a), c));
            }
        }
    }
    cols
}

pub fn write_log_csv<W: Write>(log: &ExperimentLog, out: W) -> Result<()> {
    log.validate()?;
    let cols = layout(log);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cols.iter().map(|(gt, ch, _)| {
        if *gt {
            format!("gt_{}", ch.header())
        } else {
            ch.header()
        }
    }))?;
    for i in 0..log.len() {
        w.write_record(cols.iter().map(|(_, _, c)| fmt_value(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV log. `source` names the file in error messages.
pub fn read_log_csv<R: Read>(input: R, source: &str) -> Result<ExperimentLog> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers()?.clone();
    let mut cols: Vec<(bool, Channel)> = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        let parse_err = |message: String| Error::Parse {
            location: format!("{source}: header column {} `{h}`", c + 1),
            message,
        };
        let (name, unit) = h
            .strip_suffix(']')
            .and_then(|s| s.split_once('['))
            .ok_or_else(|| parse_err("expected `name[unit]`".into()))?;
        let (gt, name) = match name.strip_prefix("gt_") {
            Some(n) => (true, n),
            None => (false, name),
        };
        let ch = Channel::parse(name, unit).ok_or_else(|| parse_err("unknown channel or unit".into()))?;
        if cols.contains(&(gt, ch.clone())) {
            return Err(parse_err("duplicate column".into()));
        }
        cols.push((gt, ch));
    }
    if cols.first() != Some(&(false, Channel::Time)) {
        return Err(Error::Parse {
            location: format!("{source}: header"),
            message: "first column must be `time[s]`".into(),
        });
    }

    let mut data: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols.len() {
            return Err(Error::Parse {
                location: format!("{source}: row {}", row + 2),
                message: format!("{} fields, expected {}", rec.len(), cols.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v = cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                location: format!("{source}: row {}, column `{}`", row + 2, &headers[c]),
                message: e.to_string(),
            })?;
            data[c].push(v);
        }
    }

    let take = |gt: bool, want: &dyn Fn(&Channel) -> bool| -> Vec<(Channel, Vec<f64>)> {
        cols.iter()
            .zip(&data)
            .filter(|((g, ch), _)| *g == gt && want(ch))
            .map(|((_, ch), d)| (ch.clone(), d.clone()))
            .collect()
    };
    let named = |v: Vec<(Channel, Vec<f64>)>| -> (Vec<String>, Vec<Vec<f64>>) {
        v.into_iter()
            .map(|(ch, d)| match ch {
                Channel::Q(n) | Channel::Qdot(n) | Channel::Force(n) | Channel::Excursion(n) | Channel::TauExt(n) => {
                    (n, d)
                }
                _ => (String::new(), d),
            })
            .unzip()
    };
    let missing = |what: String| Error::Parse {
        location: format!("{source}: header"),
        message: format!("missing column {what}"),
    };
    let aligned = |gt: bool, names: &[String], want: &dyn Fn(&Channel) -> bool, label: &dyn Fn(&str) -> String| {
        let (n, d) = named(take(gt, want));
        if n != names {
            let absent = names.iter().find(|x| !n.contains(x)).cloned().unwrap_or_default();
            return Err(missing(format!("`{}{}`", if gt { "gt_" } else { "" }, label(&absent))));
        }
        Ok(d)
    };

    let (joint_names, q_meas) = named(take(false, &|c| matches!(c, Channel::Q(_))));
    let (tendon_names, tendon_force_meas) = named(take(false, &|c| matches!(c, Channel::Force(_))));
    let qdot_est = aligned(false, &joint_names, &|c| matches!(c, Channel::Qdot(_)), &|n| {
        Channel::Qdot(n.into()).header()
    })?;
    let tendon_excursion_meas = aligned(false, &tendon_names, &|c| matches!(c, Channel::Excursion(_)), &|n| {
        Channel::Excursion(n.into()).header()
    })?;

    let torque = |gt: bool| -> Result<Option<(usize, Vec<f64>)>> {
        let mut t = named(take(gt, &|c| matches!(c, Channel::TauExt(_))));
        match t.0.len() {
            0 => Ok(None),
            1 => {
                let joint = joint_names
                    .iter()
                    .position(|n| *n == t.0[0])
                    .ok_or_else(|| missing(format!("`q_{}[rad]` for the torque channel", t.0[0])))?;
                Ok(Some((joint, t.1.remove(0))))
            }
            _ => Err(Error::Parse {
                location: format!("{source}: header"),
                message: "more than one external-torque column".into(),
            }),
        }
    };
    let tip = |gt: bool| -> Result<Option<[Vec<f64>; 3]>> {
        let t = take(gt, &|c| matches!(c, Channel::Tip(_)));
        match t.len() {
            0 => Ok(None),
            3 => {
                let mut out: [Vec<f64>; 3] = Default::default();
                for (ch, d) in t {
                    if let Channel::Tip(a) = ch {
                        out[a] = d;
                    }
                }
                Ok(Some(out))
            }
            _ => Err(missing("fx[N], fy[N] and fz[N] together".into())),
        }
    };

    let external_torque_meas = torque(false)?.map(|(joint, values)| TorqueChannel { joint, values });
    let any_gt = cols.iter().any(|(g, _)| *g);
    let ground_truth = if any_gt {
        let is = |f: fn(&Channel) -> bool| move |c: &Channel| f(c);
        let q = aligned(true, &joint_names, &is(|c| matches!(c, Channel::Q(_))), &|n| Channel::Q(n.into()).header())?;
        let qdot = aligned(true, &joint_names, &is(|c| matches!(c, Channel::Qdot(_))), &|n| {
            Channel::Qdot(n.into()).header()
        })?;
        let tendon_force = aligned(true, &tendon_names, &is(|c| matches!(c, Channel::Force(_))), &|n| {
            Channel::Force(n.into()).header()
        })?;
        let tendon_excursion = aligned(true, &tendon_names, &is(|c| matches!(c, Channel::Excursion(_))), &|n| {
            Channel::Excursion(n.into()).header()
        })?;
        Some(GroundTruth {
            q,
            qdot,
            tendon_force,
            tendon_excursion,
            external_torque: torque(true)?.map(|(_, v)| v),
            fingertip_force: tip(true)?,
        })
    } else {
        None
    };

    let log = ExperimentLog {
        joint_names,
        tendon_names,
        time: data[0].clone(),
        q_meas,
        qdot_est,
        tendon_force_meas,
        tendon_excursion_meas,
        external_torque_meas,
        fingertip_force_meas: tip(false)?,
        ground_truth,
        meta: None,
    };
    log.validate().map_err(|e| Error::Input(format!("{source}: {e}")))?;
    Ok(log)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `{dir}/{stem}.csv` and its `{stem}.json` sidecar.
pub fn save_log(dir: &Path, stem: &str, log: &ExperimentLog) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut out = BufWriter::new(File::create(&csv_path)?);
    write_log_csv(log, &mut out)?;
    out.flush()?;
    let side = LogSidecar {
        csv: format!("{stem}.csv"),
        joint_names: log.joint_names.clone(),
        tendon_names: log.tendon_names.clone(),
        samples: log.len(),
        meta: log.meta.clone(),
    };
    super::write_json(&sidecar_path(&csv_path), &side)?;
    Ok(csv_path)
}

/// Reads a CSV log, attaching the sidecar provenance when one sits next to it.
pub fn load_log(path: &Path) -> Result<ExperimentLog> {
    let source = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open log `{source}`: {e}")))?;
    let mut log = read_log_csv(std::io::BufReader::new(file), &source)?;
    let side = sidecar_path(path);
    if side.is_file() {
        let s: LogSidecar = super::read_json(&side)?;
        if s.joint_names != log.joint_names || s.tendon_names != log.tendon_names || s.samples != log.len() {
            return Err(Error::Input(format!("sidecar `{}` does not describe `{source}`", side.display())));
        }
        log.meta = s.meta;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FingerModel;
    use crate::testbed::{drive_joint, SensorSpec, Trajectory};

    fn sample_log() -> ExperimentLog {
        let m = FingerModel::dexmart_default();
        let traj = Trajectory::Hold { q: 0.5 };
        drive_joint(&m, 0, &traj, &[0.5, 0.2, 0.1], &SensorSpec::default().with_ground_truth(), 0.05).unwrap()
    }

    fn to_text(log: &ExperimentLog) -> String {
        let mut buf = Vec::new();
        write_log_csv(log, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_carries_units() {
        let text = to_text(&sample_log());
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("time[s],q_mcp[rad],q_pip[rad],q_dip[rad],qdot_mcp[rad/s]"));
        assert!(header.contains("tau_ext_mcp[N*m]") && header.contains("gt_tau_ext_mcp[N*m]"));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let log = sample_log();
        let text = to_text(&log);
        let back = read_log_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(to_text(&back), text);
        assert_eq!(back.joint_names, log.joint_names);
        assert_eq!(back.external_torque_meas.as_ref().unwrap().joint, 0);
        assert!(back.ground_truth.is_some());
    }

    #[test]
    fn bad_unit_names_the_column() {
        let text = to_text(&sample_log()).replacen("q_pip[rad]", "q_pip[deg]", 1);
        let err = read_log_csv(text.as_bytes(), "mem").unwrap_err().to_string();
        assert!(err.contains("q_pip[deg]"), "{err}");
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let text = to_text(&sample_log());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<&str> = lines[3].split(',').collect();
        cells[2] = "abc";
        lines[3] = cells.join(",");
        let err = read_log_csv(lines.join("\n").as_bytes(), "mem").unwrap_err().to_string();
        assert!(err.contains("row 4") && err.contains("q_pip[rad]"), "{err}");
    }
}
