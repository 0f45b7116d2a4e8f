//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! `cargo test -p fingerid --test acceptance`

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use common::{dv, oracle_bias, oracle_mass, poses, rod_chain};
use fingerid::dynamics::JointState;
use fingerid::identification::{
    id1_load_parameters, identify_stage, run_many, run_pipeline, run_pipeline_with, stage_experiments, FitReport,
    IdentifiedModel, PipelineRun, ProtocolConfig, Stage,
};
use fingerid::io::{to_json, write_log_csv};
use fingerid::testbed::{simulate, ActuationCommand, ExperimentLog, JointCommand, SensorSpec, TendonCommand};
use fingerid::FingerModel;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn report(run: &PipelineRun, stage: Stage) -> &FitReport {
    run.report(stage).expect("stage ran")
}

fn param(r: &FitReport, key: &str) -> f64 {
    r.parameters[key]
}

fn logs(stage: Stage, spec: &FingerModel, p: &ProtocolConfig) -> Vec<ExperimentLog> {
    stage_experiments(stage, spec, p)
        .expect("experiments")
        .into_iter()
        .map(|(_, l)| l)
        .collect()
}

fn protocol(stages: &[Stage], sensors: SensorSpec, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        seed,
        sensors,
        stages: stages.to_vec(),
        ..ProtocolConfig::default()
    }
}

/// Max |fitted − true| moment arm (m) on a 200-point grid over each fitted
/// curve's domain, the truth taken by central differences of the plant's
/// excursion functions.
fn arm_error(model: &IdentifiedModel, spec: &FingerModel) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &model.moment_arms {
        let route = &spec.coupling.routes[c.tendon];
        let truth = |q: f64| {
            route
                .crossings
                .iter()
                .find(|x| x.joint == c.joint)
                .map_or(0.0, |x| (x.excursion.excursion(q + 1e-6) - x.excursion.excursion(q - 1e-6)) / 2e-6)
        };
        for i in 0..200 {
            let q = c.domain[0] + (c.domain[1] - c.domain[0]) * i as f64 / 199.0;
            worst = worst.max((c.poly_coeffs.eval(q) - truth(q)).abs());
        }
    }
    worst
}

fn ac1(spec: &FingerModel) -> Outcome {
    let stages = [Stage::Id1, Stage::Id2];
    let fit = |p: &ProtocolConfig| {
        let mut m = id1_load_parameters(spec).unwrap();
        let (rep, _) = identify_stage(Stage::Id2, &logs(Stage::Id2, spec, p), &mut m, p, None).unwrap();
        (m, rep)
    };
    let (clean, _) = fit(&protocol(&stages, SensorSpec::noise_free(), 42));
    let t0 = Instant::now();
    let (noisy, rep) = fit(&protocol(&stages, SensorSpec::default(), 42));
    let secs = t0.elapsed().as_secs_f64();
    let (e0, e1) = (arm_error(&clean, spec) * 1e3, arm_error(&noisy, spec) * 1e3);

    let t3 = spec.tendon_index("t3").unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let [a, b] = spec.kinematics.joint_limits[0];
    for i in 0..=1000 {
        let q = a + (b - a) * i as f64 / 1000.0;
        let r = spec.coupling.routes[t3].crossings[0].excursion.moment_arm(q) * 1e3;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let (flo, fhi) = (param(&rep, "arm_t3_mcp_min_mm"), param(&rep, "arm_t3_mcp_max_mm"));
    let anchored = (lo - 5.8).abs() < 1e-6 && (hi - 10.3).abs() < 1e-6;
    let pass = e0 < 0.1 && e1 < 0.3 && anchored && flo >= 5.5 && fhi <= 10.6 && secs < 10.0;
    outcome(
        pass,
        format!(
            "moment arms: max err {e0:.4} mm noise-free, {e1:.4} mm default noise; T3@MCP truth [{lo:.2}, {hi:.2}] fitted [{flo:.2}, {fhi:.2}] mm; {secs:.2} s"
        ),
    )
}

fn ac2(spec: &FingerModel) -> Outcome {
    let p = protocol(&[Stage::Id1, Stage::Id2, Stage::Vd1], SensorSpec::default(), 42);
    let mut m = id1_load_parameters(spec).unwrap();
    identify_stage(Stage::Id2, &logs(Stage::Id2, spec, &p), &mut m, &p, None).unwrap();
    let t0 = Instant::now();
    let vd1 = logs(Stage::Vd1, spec, &p);
    let (rep, _) = identify_stage(Stage::Vd1, &vd1, &mut m, &p, None).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let errs: Vec<f64> = rep
        .parameters
        .iter()
        .filter(|(k, _)| k.starts_with("mean_abs_error_"))
        .map(|(_, v)| *v)
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let t0_err = rep.checks.iter().find(|c| c.name == "error_at_t0_m").unwrap().value;
    let duration = vd1[0].time.last().unwrap() - vd1[0].time[0];
    let pass = errs.len() == 4 && worst < 0.5 && t0_err == 0.0 && duration >= 30.0 && secs < 30.0;
    outcome(
        pass,
        format!(
            "excursion tracking over {duration:.0} s: worst per-tendon mean abs err {worst:.3} mm, error at t=0 {t0_err:e} m; {secs:.2} s"
        ),
    )
}

fn ac3(spec: &FingerModel) -> Outcome {
    let p = protocol(&[Stage::Id1, Stage::Id3Static, Stage::Id3Dynamic], SensorSpec::default(), 42);
    let t0 = Instant::now();
    let run = run_pipeline(spec, &p).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let mcp = &run.model.viscoelastic.joints[0];
    let [a, b] = run.model.viscoelastic_domain[0];
    let (mut peak, mut at) = (0.0f64, 0.0);
    let n = ((b - a).to_degrees() * 100.0) as usize;
    for i in 0..=n {
        let q = a + (b - a) * i as f64 / n as f64;
        let t = -mcp.elastic(q);
        if t > peak {
            peak = t;
            at = q;
        }
    }
    let (peak, at) = (peak * 1e3, at.to_degrees());
    let tf70 = mcp.friction_magnitude(70f64.to_radians()) * 1e3;
    let dynamic = report(&run, Stage::Id3Dynamic);
    let mut worst_ratio: f64 = 0.0;
    for j in ["mcp", "pip", "dip"] {
        let c = param(dynamic, &format!("rate_coeff_{j}"));
        let se = param(dynamic, &format!("rate_coeff_{j}_se"));
        worst_ratio = worst_ratio.max(c.abs() / se);
    }
    let pass =
        (peak - 30.0).abs() <= 1.5 && (at - 45.0).abs() <= 3.0 && (tf70 - 9.0).abs() <= 1.0 && worst_ratio < 2.0 && secs < 20.0;
    outcome(
        pass,
        format!(
            "MCP elastic peak {peak:.2} N·mm at {at:.2}°, friction at 70° {tf70:.2} N·mm, max |rate coeff|/SE {worst_ratio:.2}; {secs:.2} s"
        ),
    )
}

fn id4_errors(run: &PipelineRun, spec: &FingerModel, t: &str) -> (f64, f64, f64) {
    let rep = report(run, Stage::Id4);
    let truth = spec.tendon_friction.tendons[spec.tendon_index(t).unwrap()];
    let slope = param(rep, &format!("slope_{t}"));
    let intercept = param(rep, &format!("intercept_{t}_n"));
    (
        (slope - truth.slope).abs() / truth.slope,
        (intercept - truth.intercept).abs(),
        intercept + 10.0 * slope,
    )
}

fn ac4(spec: &FingerModel, batch: &[PipelineRun]) -> Outcome {
    let p = protocol(&[Stage::Id1, Stage::Id2, Stage::Id3Static, Stage::Id4], SensorSpec::default(), 42);
    let mut m = id1_load_parameters(spec).unwrap();
    for st in [Stage::Id2, Stage::Id3Static] {
        identify_stage(st, &logs(st, spec, &p), &mut m, &p, None).unwrap();
    }
    let t0 = Instant::now();
    identify_stage(Stage::Id4, &logs(Stage::Id4, spec, &p), &mut m, &p, None).unwrap();
    let secs = t0.elapsed().as_secs_f64();

    let mut worst_slope: f64 = 0.0;
    let mut worst_icpt: f64 = 0.0;
    for t in ["t1", "t2", "t3", "t4"] {
        let errs: Vec<(f64, f64, f64)> = batch.iter().map(|r| id4_errors(r, spec, t)).collect();
        worst_slope = worst_slope.max(median(errs.iter().map(|e| e.0).collect()));
        worst_icpt = worst_icpt.max(median(errs.iter().map(|e| e.1).collect()));
    }
    let ff10 = median(batch.iter().map(|r| id4_errors(r, spec, "t3").2).collect());
    let pass = batch.len() == 20 && (ff10 - 4.0).abs() <= 0.3 && worst_slope <= 0.05 && worst_icpt <= 0.2 && secs < 10.0;
    outcome(
        pass,
        format!(
            "T3 friction at 10 N {ff10:.3} N (median of {}); worst median slope err {:.2}%, intercept err {worst_icpt:.4} N; {secs:.2} s",
            batch.len(),
            worst_slope * 100.0
        ),
    )
}

fn ac5(spec: &FingerModel, full: &PipelineRun) -> Outcome {
    let p = ProtocolConfig::default();
    let mut m = full.model.clone();
    let t0 = Instant::now();
    let (rep, _) = identify_stage(Stage::Vd2, &logs(Stage::Vd2, spec, &p), &mut m, &p, None).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let rel = param(&rep, "relative_slope_error");
    let ymax = rep.checks.iter().find(|c| c.name == "estimated_y_force_max_abs_n").unwrap().value;
    let axis = param(&rep, "dominant_axis") as usize;
    let axes = ["x", "y", "z"];
    let (sm, se) = (
        param(&rep, &format!("slope_measured_{}", axes[axis])),
        param(&rep, &format!("slope_estimated_{}", axes[axis])),
    );
    let pass = rel < 0.05 && ymax == 0.0 && secs < 5.0;
    outcome(
        pass,
        format!(
            "fingertip force slopes on {}: measured {sm:.4}, estimated {se:.4} ({:.2}%), max |estimated y| {ymax} N; {secs:.2} s",
            axes[axis],
            rel * 100.0
        ),
    )
}

fn ac6() -> Outcome {
    let model = FingerModel::dexmart_default();
    let k = &model.kinematics;
    let ps = poses(&model, 1000, 2024);
    let min_eig = ps
        .iter()
        .map(|q| k.mass_matrix(q).unwrap().symmetric_eigen().eigenvalues.min())
        .fold(f64::INFINITY, f64::min);

    let mut bias_err: f64 = 0.0;
    let mut rt_err: f64 = 0.0;
    let mut m_err: f64 = 0.0;
    for (n, q) in ps.iter().take(200).enumerate() {
        let s = n as f64 / 200.0;
        let qd = dv(&[2.0 - 4.0 * s, 1.5 * s - 0.5, 3.0 * (1.0 - s)]);
        let mm = k.mass_matrix(q).unwrap();
        let om = oracle_mass(k, q);
        m_err = m_err.max((&mm - &om).amax() / om.amax());
        let b = k.bias_forces(&JointState::new(q.clone(), qd.clone())).unwrap();
        let ob = oracle_bias(k, q, &qd);
        bias_err = bias_err.max((&b - &ob).amax() / ob.amax());
        let tau = dv(&[0.02 * (1.0 - s), 0.01 * s - 0.005, 0.003]);
        let qdd = k.forward_dynamics(q, &qd, &tau).unwrap();
        let back = k.inverse_dynamics(&JointState::new(q.clone(), qd).with_qddot(qdd), &dv(&[0.0; 3])).unwrap();
        rt_err = rt_err.max((&back - &tau).amax() / tau.amax());
    }

    let c = &model.coupling;
    let mut c_err: f64 = 0.0;
    let h = 1e-5;
    for q in ps.iter().take(200) {
        let q = q.map(|x| x.clamp(1e-4, 1.5));
        let cm = c.coupling_matrix(&q).unwrap();
        for j in 0..3 {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (c.excursion(&a).unwrap() - c.excursion(&b).unwrap()) / (2.0 * h);
            c_err = c_err.max((cm.column(j) - fd).amax());
        }
    }

    let chain = rod_chain(&[(0.045, 0.014), (0.03, 0.009), (0.025, 0.006)], &[[-2.0 * PI, 2.0 * PI]; 3], [0.0, -9.81]);
    let cmd = ActuationCommand {
        joints: [-FRAC_PI_2 + 0.4, 0.3, -0.25]
            .iter()
            .map(|&q| JointCommand::Free { q0: q, qdot0: 0.0 })
            .collect(),
        tendons: vec![TendonCommand::Slack; 3],
        contact: false,
    };
    let log = simulate(&chain, &cmd, &SensorSpec::noise_free().with_ground_truth(), 10.0).unwrap();
    let gt = log.ground_truth.as_ref().unwrap();
    let ck = &chain.kinematics;
    let energy = |i: usize| {
        let q = dv(&[gt.q[0][i], gt.q[1][i], gt.q[2][i]]);
        let qd = dv(&[gt.qdot[0][i], gt.qdot[1][i], gt.qdot[2][i]]);
        ck.kinetic_energy(&q, &qd).unwrap() + ck.potential_energy(&q).unwrap()
    };
    let e0 = energy(0);
    let floor = ck.potential_energy(&dv(&[-FRAC_PI_2, 0.0, 0.0])).unwrap();
    let drift = (0..log.len()).map(|i| (energy(i) - e0).abs()).fold(0.0, f64::max) / (e0 - floor);

    let pass = min_eig > 0.0 && m_err < 1e-12 && bias_err < 1e-6 && drift < 1e-6 && c_err < 1e-7 && rt_err < 1e-9;
    outcome(
        pass,
        format!(
            "min eig of M over 1000 poses {min_eig:.3e}; M oracle {m_err:.1e}, bias oracle {bias_err:.1e}, energy drift {drift:.1e} over 10 s, C vs differences {c_err:.1e} m/rad, round trip {rt_err:.1e}"
        ),
    )
}

fn snapshot(spec: &FingerModel, p: &ProtocolConfig) -> (Vec<u8>, f64) {
    let mut bytes = Vec::new();
    let t0 = Instant::now();
    let run = run_pipeline_with(spec, p, &mut |art| {
        bytes.extend(to_json(&art.report)?.into_bytes());
        for (_, log) in &art.logs {
            write_log_csv(log, &mut bytes)?;
        }
        Ok(())
    })
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    bytes.extend(to_json(&run.model).unwrap().into_bytes());
    (bytes, secs)
}

/// Median error per stage metric for one noise level.
fn stage_errors(runs: &[PipelineRun]) -> Vec<(&'static str, f64)> {
    let gt_max = |r: &PipelineRun, st: Stage, prefix: &str| {
        report(r, st)
            .ground_truth_error
            .as_ref()
            .unwrap()
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let param_max = |r: &PipelineRun, st: Stage, prefix: &str| {
        report(r, st)
            .parameters
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let metrics: [(&'static str, &dyn Fn(&PipelineRun) -> f64); 8] = [
        ("id2 arm", &|r| gt_max(r, Stage::Id2, "arm_")),
        ("vd1 excursion", &|r| param_max(r, Stage::Vd1, "mean_abs_error_")),
        ("id3 tau_k", &|r| gt_max(r, Stage::Id3Static, "tau_k_")),
        ("id3 tau_f", &|r| gt_max(r, Stage::Id3Static, "tau_f_")),
        ("id3 rate", &|r| gt_max(r, Stage::Id3Dynamic, "rate_coeff_")),
        ("id4 slope", &|r| gt_max(r, Stage::Id4, "slope_")),
        ("id4 intercept", &|r| gt_max(r, Stage::Id4, "intercept_")),
        ("vd2 slope", &|r| param(report(r, Stage::Vd2), "relative_slope_error")),
    ];
    metrics.iter().map(|(name, f)| (*name, median(runs.iter().map(|r| f(r)).collect()))).collect()
}

const NOISE_LEVELS: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];

fn ac7(spec: &FingerModel, sweep: &[Vec<PipelineRun>]) -> (Outcome, Vec<String>) {
    let p = ProtocolConfig::default();
    let (a, secs) = snapshot(spec, &p);
    let (b, _) = snapshot(spec, &p);
    let identical = a == b;

    let table: Vec<Vec<(&str, f64)>> = sweep.iter().map(|runs| stage_errors(runs)).collect();
    let mut detail = Vec::new();
    let mut bad = Vec::new();
    for m in 0..table[0].len() {
        let row: Vec<f64> = table.iter().map(|t| t[m].1).collect();
        let mono = row.windows(2).all(|w| w[1] >= w[0]);
        if !mono {
            bad.push(table[0][m].0);
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4e}")).collect();
        detail.push(format!("    {:<14} {}", table[0][m].0, cells.join("  ")));
    }
    let seeds = sweep.iter().map(Vec::len).min().unwrap_or(0);
    let pass = identical && bad.is_empty() && seeds == 20 && secs < 180.0;
    let summary = format!(
        "determinism: {} bytes {}; noise sweep {NOISE_LEVELS:?} x {seeds} seeds {}; full pipeline {secs:.2} s",
        a.len(),
        if identical { "identical" } else { "DIFFER" },
        if bad.is_empty() { "monotone".to_string() } else { format!("not monotone in {bad:?}") },
    );
    (outcome(pass, summary), detail)
}

fn main() -> ExitCode {
    let spec = FingerModel::dexmart_default();
    let seeds: Vec<u64> = (1..=20).collect();
    let sweep: Vec<Vec<PipelineRun>> = NOISE_LEVELS
        .iter()
        .map(|&k| {
            let p = protocol(&Stage::ALL, SensorSpec::default().with_noise_scale(k), 0);
            run_many(&spec, &p, &seeds).into_iter().map(|r| r.expect("pipeline runs")).collect()
        })
        .collect();
    let full = run_pipeline(&spec, &ProtocolConfig::default()).expect("pipeline runs");

    let (ac7_outcome, ac7_detail) = ac7(&spec, &sweep);
    let results = [
        ("AC1", ac1(&spec)),
        ("AC2", ac2(&spec)),
        ("AC3", ac3(&spec)),
        ("AC4", ac4(&spec, &sweep[1])),
        ("AC5", ac5(&spec, &full)),
        ("AC6", ac6()),
        ("AC7", ac7_outcome),
    ];
    let mut all = true;
    for (name, o) in &results {
        println!("{name} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
        all &= o.pass;
    }
    println!("    median errors at noise scale {NOISE_LEVELS:?}:");
    for line in ac7_detail {
        println!("{line}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
