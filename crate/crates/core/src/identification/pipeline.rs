use rayon::prelude::*;

use super::protocol::{
    id2_experiment, id3_dynamic_experiment, id3_static_experiment, id4_experiment, vd1_experiment,
    vd2_experiment,
};
use super::*;
use crate::testbed::ExperimentLog;

/// Tidy plot table; cells are preformatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

/// Everything a stage produced, handed to the sink as soon as it finishes.
#[derive(Debug, Clone)]
pub struct StageArtifacts {
    pub stage: Stage,
    pub report: FitReport,
    /// `(file stem, log)`.
    pub logs: Vec<(String, ExperimentLog)>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub seed: u64,
    pub model: IdentifiedModel,
    pub reports: Vec<FitReport>,
    pub pass: bool,
}

impl PipelineRun {
    pub fn report(&self, stage: Stage) -> Option<&FitReport> {
        self.reports.iter().find(|r| r.stage == stage)
    }
}

const NOTE_SIGN: &str =
    "h is the passive torque acting on the joint: h = M qdd + N + G - tau_ext (G - tau_ext at rest)";
const NOTE_DRIVE: &str =
    "external motor is modelled as a kinematic drive; its torque is the inverse-dynamics torque of the plant";

fn truth_arm(truth: &FingerModel, tendon: usize, joint: usize, q: f64) -> f64 {
    truth.coupling.routes[tendon]
        .crossings
        .iter()
        .find(|c| c.joint == joint)
        .map_or(0.0, |c| c.excursion.moment_arm(q))
}

/// Runs the estimator of `stage` on `logs`, updating `model`, and scores it
/// against `truth` when the generating plant is known.
pub fn identify_stage(
    stage: Stage,
    logs: &[ExperimentLog],
    model: &mut IdentifiedModel,
    protocol: &ProtocolConfig,
    truth: Option<&FingerModel>,
) -> Result<(FitReport, Vec<Table>)> {
    model.require(stage)?;
    let mut rep = FitReport::new(stage);
    let mut tables = Vec::new();
    let names = model.joint_names.clone();
    let tnames = model.tendon_names.clone();
    match stage {
        Stage::Id1 => {
            return Err(Error::Input("ID.1 reads the finger spec, not experiment logs".into()));
        }
        Stage::Id2 => {
            let res = id2_fit_moment_arms(logs, model, protocol.id2.fit_degree)?;
            rep.residual_rms = res.residual_rms;
            let mut tab = Table::new("moment_arms", &["joint", "tendon", "q[rad]", "fitted[m]", "truth[m]"]);
            let mut worst: f64 = 0.0;
            for c in &res.curves {
                let key = format!("{}_{}", tnames[c.tendon], names[c.joint]);
                let (_, lo, _, hi) = c.poly_coeffs.extrema(c.domain[0], c.domain[1]);
                rep.param(format!("arm_{key}_min_mm"), lo * 1e3);
                rep.param(format!("arm_{key}_max_mm"), hi * 1e3);
                let mut err: f64 = 0.0;
                for i in 0..200 {
                    let q = c.domain[0] + (c.domain[1] - c.domain[0]) * i as f64 / 199.0;
                    let fitted = c.poly_coeffs.eval(q);
                    let gt = truth.map(|t| truth_arm(t, c.tendon, c.joint, q));
                    if let Some(g) = gt {
                        err = err.max((fitted - g).abs());
                    }
                    tab.rows.push(vec![
                        names[c.joint].clone(),
                        tnames[c.tendon].clone(),
                        num(q),
                        num(fitted),
                        gt.map(num).unwrap_or_default(),
                    ]);
                }
                if truth.is_some() {
                    rep.gt_error(format!("arm_{key}_max_err_mm"), err * 1e3);
                    worst = worst.max(err);
                }
            }
            rep.param("curves", res.curves.len() as f64);
            rep.param("not_routed", res.not_routed.len() as f64);
            if let Some(t) = truth {
                let mismatches = res
                    .not_routed
                    .iter()
                    .filter(|&&(k, j)| t.coupling.routes[k].crossings.iter().any(|c| c.joint == j))
                    .count()
                    + res
                        .curves
                        .iter()
                        .filter(|c| !t.coupling.routes[c.tendon].crossings.iter().any(|x| x.joint == c.joint))
                        .count();
                rep.check(Check::new("max_moment_arm_error_mm", worst * 1e3, "<", 0.3));
                rep.check(Check::new("routing_mismatches", mismatches as f64, "==", 0.0));
            } else {
                rep.check(Check::new("curves_fitted", res.curves.len() as f64, ">=", 1.0));
            }
            tables.push(tab);
        }
        Stage::Vd1 => {
            let log = single(logs, stage)?;
            let res = vd1_tendon_excursion(log, model)?;
            let mut tab = Table::new("vd1_excursion", &["time[s]", "tendon", "estimated[m]", "measured[m]", "error[m]"]);
            for (a, name) in res.tendon_names.iter().enumerate() {
                rep.param(format!("mean_abs_error_{name}_mm"), res.mean_abs_error[a] * 1e3);
                rep.check(Check::new(
                    format!("mean_abs_error_{name}_mm"),
                    res.mean_abs_error[a] * 1e3,
                    "<",
                    0.5,
                ));
                for i in (0..log.len()).step_by(10) {
                    tab.rows.push(vec![
                        num(log.time[i]),
                        name.clone(),
                        num(res.estimate[a][i]),
                        num(log.tendon_excursion_meas[a][i]),
                        num(res.error[a][i]),
                    ]);
                }
            }
            let e0 = res.error.iter().map(|e| e[0].abs()).fold(0.0, f64::max);
            rep.check(Check::new("error_at_t0_m", e0, "==", 0.0));
            rep.param("clamped_samples", res.clamped_samples as f64);
            rep.residual_rms = (res.mean_abs_error.iter().map(|x| x * x).sum::<f64>()
                / res.mean_abs_error.len().max(1) as f64)
                .sqrt();
            rep.notes.extend(res.warnings);
            tables.push(tab);
        }
        Stage::Id3Static => {
            let res = id3_static(logs, model, protocol.id3.velocity_gate_rad_s)?;
            let mut holds = Table::new("branches", &["joint", "q[rad]", "direction", "h[N*m]"]);
            let mut curves = Table::new(
                "fit",
                &["joint", "q[rad]", "tau_k[N*m]", "tau_f[N*m]", "tau_k_truth[N*m]", "tau_f_truth[N*m]"],
            );
            for f in &res.fits {
                let jn = &names[f.joint];
                for h in &f.holds {
                    holds.rows.push(vec![
                        jn.clone(),
                        num(h.q),
                        if h.direction > 0 { "flexion" } else { "extension" }.into(),
                        num(h.h),
                    ]);
                }
                for (i, c) in f.elastic.coeffs().iter().enumerate() {
                    rep.param(format!("tau_k_{jn}_c{i}"), *c);
                }
                for (i, c) in f.friction.coeffs().iter().enumerate() {
                    rep.param(format!("tau_f_{jn}_c{i}"), *c);
                }
                let (qmin, tmin, _, _) = f.elastic.extrema(f.domain[0], f.domain[1]);
                rep.param(format!("tau_k_{jn}_min_nmm"), tmin * 1e3);
                rep.param(format!("tau_k_{jn}_argmin_deg"), qmin.to_degrees());
                let q70 = 70f64.to_radians();
                if q70 >= f.domain[0] - 1e-9 && q70 <= f.domain[1] + 1e-9 {
                    rep.param(format!("tau_f_{jn}_70deg_nmm"), f.friction.eval(q70) * 1e3);
                }
                let (mut ek, mut ef): (f64, f64) = (0.0, 0.0);
                for i in 0..200 {
                    let q = f.domain[0] + (f.domain[1] - f.domain[0]) * i as f64 / 199.0;
                    let (tk, tf) = (f.elastic.eval(q), f.friction.eval(q));
                    let gt = truth.map(|t| {
                        let j = &t.viscoelastic.joints[f.joint];
                        (j.elastic(q), j.friction_magnitude(q))
                    });
                    if let Some((gk, gf)) = gt {
                        ek = ek.max((tk - gk).abs());
                        ef = ef.max((tf - gf).abs());
                    }
                    curves.rows.push(vec![
                        jn.clone(),
                        num(q),
                        num(tk),
                        num(tf),
                        gt.map(|g| num(g.0)).unwrap_or_default(),
                        gt.map(|g| num(g.1)).unwrap_or_default(),
                    ]);
                }
                if truth.is_some() {
                    rep.gt_error(format!("tau_k_{jn}_max_err_nmm"), ek * 1e3);
                    rep.gt_error(format!("tau_f_{jn}_max_err_nmm"), ef * 1e3);
                    rep.check(Check::new(format!("tau_k_{jn}_error_nmm"), ek * 1e3, "<", 1.5));
                    rep.check(Check::new(format!("tau_f_{jn}_error_nmm"), ef * 1e3, "<", 1.0));
                }
                let per_dir = |d: i8| f.holds.iter().filter(|h| h.direction == d).count() as f64;
                rep.check(Check::new(format!("holds_flexion_{jn}"), per_dir(1), ">=", 5.0));
                rep.check(Check::new(format!("holds_extension_{jn}"), per_dir(-1), ">=", 5.0));
            }
            rep.residual_rms = (res.fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>()
                / res.fits.len().max(1) as f64)
                .sqrt();
            rep.notes.push(NOTE_SIGN.into());
            rep.notes.push(NOTE_DRIVE.into());
            tables.push(holds);
            tables.push(curves);
        }
        Stage::Id3Dynamic => {
            let fits = id3_dynamic(logs, model, protocol.id3.inertia_correction)?;
            for f in &fits {
                let jn = &names[f.joint];
                rep.param(format!("rate_coeff_{jn}"), f.rate_coeff);
                rep.param(format!("rate_coeff_{jn}_se"), f.rate_coeff_se);
                rep.param(format!("offset_flexion_{jn}"), f.offsets[0]);
                rep.param(format!("offset_extension_{jn}"), f.offsets[1]);
                if let Some(t) = truth {
                    let gt = t.viscoelastic.joints[f.joint].rate_coeff();
                    let err = (f.rate_coeff - gt).abs();
                    rep.gt_error(format!("rate_coeff_{jn}_abs_err"), err);
                    rep.check(Check::new(
                        format!("rate_coeff_{jn}_error"),
                        err,
                        "<=",
                        (2.0 * f.rate_coeff_se).max(0.1 * gt.abs()),
                    ));
                }
            }
            rep.residual_rms =
                (fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>() / fits.len().max(1) as f64).sqrt();
            rep.notes.push(NOTE_SIGN.into());
            rep.notes.push(
                "damping and viscous joint friction are not separable from torque data; their sum is reported".into(),
            );
        }
        Stage::Id4 => {
            let fits = id4_tendon_friction(logs, model)?;
            let mut tab = Table::new(
                "friction_lines",
                &["tendon", "f_t[N]", "f_f[N]", "f_f_fit[N]", "f_f_truth[N]"],
            );
            for f in &fits {
                let tn = &tnames[f.tendon];
                rep.param(format!("slope_{tn}"), f.slope);
                rep.param(format!("slope_{tn}_se"), f.slope_se);
                rep.param(format!("intercept_{tn}_n"), f.intercept);
                rep.param(format!("intercept_{tn}_se"), f.intercept_se);
                rep.param(format!("f_f_{tn}_at_10n"), f.intercept + 10.0 * f.slope);
                rep.param(format!("moment_arm_{tn}_mm"), f.moment_arm * 1e3);
                let gt = truth.map(|t| t.tendon_friction.tendons[f.tendon]);
                for l in &f.levels {
                    tab.rows.push(vec![
                        tn.clone(),
                        num(l[0]),
                        num(l[2]),
                        num(f.intercept + f.slope * l[0]),
                        gt.map(|g| num(g.magnitude(l[0]))).unwrap_or_default(),
                    ]);
                }
                if let Some(g) = gt {
                    let se = (f.slope - g.slope).abs() / g.slope.abs().max(1e-12);
                    let ie = (f.intercept - g.intercept).abs();
                    rep.gt_error(format!("slope_{tn}_rel_err"), se);
                    rep.gt_error(format!("intercept_{tn}_abs_err_n"), ie);
                    rep.check(Check::new(format!("slope_{tn}_rel_error"), se, "<=", 0.05));
                    rep.check(Check::new(format!("intercept_{tn}_error_n"), ie, "<=", 0.2));
                }
            }
            rep.residual_rms =
                (fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>() / fits.len().max(1) as f64).sqrt();
            tables.push(tab);
        }
        Stage::Vd2 => {
            let res = vd2_fingertip_force(single(logs, stage)?, model)?;
            let axes = ["x", "y", "z"];
            let mut tab = Table::new("force_staircase", &["tension[N]", "axis", "measured[N]", "estimated[N]"]);
            for l in &res.levels {
                for a in 0..3 {
                    tab.rows.push(vec![num(l.tension), axes[a].into(), num(l.measured[a]), num(l.estimated[a])]);
                }
            }
            for a in 0..3 {
                rep.param(format!("slope_measured_{}", axes[a]), res.measured_slope[a]);
                rep.param(format!("slope_estimated_{}", axes[a]), res.estimated_slope[a]);
            }
            rep.param("dominant_axis", res.dominant_axis as f64);
            rep.param("relative_slope_error", res.relative_slope_error);
            let ymax = res.levels.iter().map(|l| l.estimated[1].abs()).fold(0.0, f64::max);
            rep.check(Check::new("relative_slope_error", res.relative_slope_error, "<", 0.05));
            rep.check(Check::new("estimated_y_force_max_abs_n", ymax, "==", 0.0));
            let resid: f64 = res
                .levels
                .iter()
                .map(|l| (l.estimated[res.dominant_axis] - l.measured[res.dominant_axis]).powi(2))
                .sum();
            rep.residual_rms = (resid / res.levels.len().max(1) as f64).sqrt();
            rep.notes.push(format!("tendon {} stepped; dominant axis {}", res.tendon, axes[res.dominant_axis]));
            tables.push(tab);
        }
    }
    if matches!(stage, Stage::Vd1 | Stage::Vd2) {
        model.complete(stage, Vec::new(), rep.residual_rms);
    }
    Ok((rep, tables))
}

fn single(logs: &[ExperimentLog], stage: Stage) -> Result<&ExperimentLog> {
    match logs {
        [log] => Ok(log),
        _ => Err(Error::Input(format!("{stage} takes exactly one log, got {}", logs.len()))),
    }
}

pub fn id1_report(model: &IdentifiedModel) -> FitReport {
    let mut rep = FitReport::new(Stage::Id1);
    for (l, name) in model.kinematics.links.iter().zip(&model.joint_names) {
        rep.param(format!("length_{name}_m"), l.length);
        rep.param(format!("mass_{name}_kg"), l.mass);
        rep.param(format!("inertia_{name}_kgm2"), l.inertia_zz);
    }
    let min_mass = model.kinematics.links.iter().map(|l| l.mass).fold(f64::INFINITY, f64::min);
    rep.check(Check::new("min_link_mass_kg", min_mass, ">", 0.0));
    rep.notes.push("kinematic and inertial parameters are taken as known".into());
    rep
}

/// Generates the experiments of `stage` on the ground-truth plant.
pub fn stage_experiments(
    stage: Stage,
    spec: &FingerModel,
    p: &ProtocolConfig,
) -> Result<Vec<(String, ExperimentLog)>> {
    let seed = p.seed;
    let jn = &spec.joint_names;
    let mut out = Vec::new();
    match stage {
        Stage::Id1 => {}
        Stage::Id2 => {
            for j in 0..spec.dof() {
                out.push((format!("id2_{}_{seed}", jn[j]), id2_experiment(spec, p, j)?));
            }
        }
        Stage::Vd1 => out.push((format!("vd1_{seed}"), vd1_experiment(spec, p)?)),
        Stage::Id3Static => {
            for j in 0..spec.dof() {
                out.push((format!("id3_static_{}_{seed}", jn[j]), id3_static_experiment(spec, p, j)?));
            }
        }
        Stage::Id3Dynamic => {
            for j in 0..spec.dof() {
                for (s, v) in p.id3.sweep_speeds_rad_s.iter().enumerate() {
                    out.push((
                        format!("id3_dynamic_{}_v{v}_{seed}", jn[j]),
                        id3_dynamic_experiment(spec, p, j, s)?,
                    ));
                }
            }
        }
        Stage::Id4 => {
            for (t, test) in p.id4.tests.iter().enumerate() {
                out.push((format!("id4_{}_{seed}", test.tendon), id4_experiment(spec, p, t)?));
            }
        }
        Stage::Vd2 => out.push((format!("vd2_{seed}"), vd2_experiment(spec, p)?)),
    }
    Ok(out)
}

pub fn run_pipeline(spec: &FingerModel, protocol: &ProtocolConfig) -> Result<PipelineRun> {
    run_pipeline_with(spec, protocol, &mut |_| Ok(()))
}

/// Runs the scheduled stages in order on the ground-truth plant `spec`.
/// `sink` receives each stage's artifacts as soon as it completes, so earlier
/// stages are persisted even when a later one fails.
pub fn run_pipeline_with(
    spec: &FingerModel,
    protocol: &ProtocolConfig,
    sink: &mut dyn FnMut(&StageArtifacts) -> Result<()>,
) -> Result<PipelineRun> {
    spec.validate()?;
    protocol.validate(spec)?;
    let wrap = |stage: Stage| {
        move |e: Error| Error::Stage {
            stage: stage.name().into(),
            source: Box::new(e),
        }
    };
    let mut model: Option<IdentifiedModel> = None;
    let mut reports = Vec::new();
    for &stage in &protocol.stages {
        let (report, logs, tables) = if stage == Stage::Id1 {
            let m = id1_load_parameters(spec).map_err(wrap(stage))?;
            let rep = id1_report(&m);
            model = Some(m);
            (rep, Vec::new(), Vec::new())
        } else {
            let m = model
                .as_mut()
                .ok_or_else(|| Error::StageOrder(format!("{stage} scheduled before id1")))?;
            let logs = stage_experiments(stage, spec, protocol).map_err(wrap(stage))?;
            let plain: Vec<ExperimentLog> = logs.iter().map(|(_, l)| l.clone()).collect();
            let (rep, tables) = identify_stage(stage, &plain, m, protocol, Some(spec)).map_err(wrap(stage))?;
            if let Some(rec) = m.provenance.iter_mut().find(|r| r.stage == stage) {
                rec.logs = logs.iter().map(|(n, _)| n.clone()).collect();
            }
            (rep, logs, tables)
        };
        let art = StageArtifacts {
            stage,
            report,
            logs,
            tables,
        };
        sink(&art)?;
        reports.push(art.report);
    }
    let model = model.ok_or_else(|| Error::StageOrder("no stage produced a model".into()))?;
    let pass = reports.iter().all(|r| r.pass);
    Ok(PipelineRun {
        seed: protocol.seed,
        model,
        reports,
        pass,
    })
}

/// Independent pipeline repetitions, one per seed, run in parallel.
pub fn run_many(spec: &FingerModel, protocol: &ProtocolConfig, seeds: &[u64]) -> Vec<Result<PipelineRun>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut p = protocol.clone();
            p.seed = seed;
            run_pipeline(spec, &p)
        })
        .collect()
}
