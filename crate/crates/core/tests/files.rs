use fingerid::identification::ProtocolConfig;
use fingerid::io::{load_log, load_protocol, load_spec, save_log, spec_to_json, write_json};
use fingerid::testbed::{drive_joint, ExperimentLog, SensorSpec, TrajectoryBuilder};
use fingerid::{Error, FingerModel};

fn sample_log() -> ExperimentLog {
    let m = FingerModel::dexmart_default();
    let traj = TrajectoryBuilder::start(0.3).move_to(0.6, 0.5, 0.05).build();
    let sensors = SensorSpec::default().with_seed(3).with_ground_truth();
    drive_joint(&m, 0, &traj, &[0.3, 0.2, 0.1], &sensors, traj.end_time()).unwrap()
}

/// Each value as it survives the 9-significant-digit encoding.
fn rounded(log: &ExperimentLog) -> ExperimentLog {
    let r = |x: &f64| format!("{x:.8e}").parse::<f64>().unwrap();
    let rv = |v: &Vec<f64>| v.iter().map(r).collect::<Vec<_>>();
    let rvv = |v: &Vec<Vec<f64>>| v.iter().map(rv).collect::<Vec<_>>();
    let mut out = log.clone();
    out.time = rv(&log.time);
    out.q_meas = rvv(&log.q_meas);
    out.qdot_est = rvv(&log.qdot_est);
    out.tendon_force_meas = rvv(&log.tendon_force_meas);
    out.tendon_excursion_meas = rvv(&log.tendon_excursion_meas);
    if let Some(t) = &mut out.external_torque_meas {
        t.values = rv(&t.values);
    }
    if let Some(gt) = &mut out.ground_truth {
        gt.q = rvv(&gt.q);
        gt.qdot = rvv(&gt.qdot);
        gt.tendon_force = rvv(&gt.tendon_force);
        gt.tendon_excursion = rvv(&gt.tendon_excursion);
        gt.external_torque = gt.external_torque.as_ref().map(rv);
    }
    out
}

#[test]
fn log_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let log = sample_log();
    let path = save_log(dir.path(), "drive", &log).unwrap();
    assert!(dir.path().join("drive.json").is_file());
    let back = load_log(&path).unwrap();
    assert_eq!(back, rounded(&log));

    let again = save_log(dir.path(), "drive2", &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(again).unwrap());
}

#[test]
fn spec_and_protocol_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = FingerModel::dexmart_default();
    let spec_path = dir.path().join("finger.json");
    std::fs::write(&spec_path, spec_to_json(&model).unwrap()).unwrap();
    assert_eq!(load_spec(spec_path.to_str().unwrap()).unwrap(), model);

    let mut p = ProtocolConfig::default();
    p.seed = 1234;
    p.id3.sweep_speeds_rad_s = vec![0.4, 0.8, 1.6];
    let proto_path = dir.path().join("protocol.json");
    write_json(&proto_path, &p).unwrap();
    assert_eq!(load_protocol(Some(proto_path.to_str().unwrap()), &model).unwrap(), p);
}

#[test]
fn bad_files_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let err = load_log(&missing).unwrap_err();
    assert!(err.is_input_error() && err.to_string().contains("missing.csv"), "{err}");

    let spec_path = dir.path().join("finger.json");
    let text = spec_to_json(&FingerModel::dexmart_default()).unwrap().replacen("\"mass_kg\"", "\"mas_kg\"", 1);
    std::fs::write(&spec_path, text).unwrap();
    let err = load_spec(spec_path.to_str().unwrap()).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
    assert!(err.to_string().contains("mas_kg"), "{err}");
}
