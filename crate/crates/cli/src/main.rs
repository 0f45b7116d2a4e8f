use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fingerid::identification::{
    id1_load_parameters, id1_report, identify_stage, run_pipeline_with, stage_experiments, FitReport, IdentifiedModel,
    ProtocolConfig, Stage,
};
use fingerid::io::{
    load_log, load_protocol, load_spec, read_json, render_csv, render_text, save_log, OutputDir,
    Provenance, StageReportFile,
};
use fingerid::testbed::{simulate, ActuationCommand, SensorSpec};
use fingerid::{Error, FingerModel, Result};

#[derive(Parser)]
#[command(name = "fingerid", version, about = "Tendon-driven finger simulation and step-wise identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Finger spec JSON, or `default` for the built-in finger.
    #[arg(long, default_value = "default")]
    spec: String,
    /// Protocol JSON; built-in defaults when omitted.
    #[arg(long)]
    protocol: Option<String>,
    /// Overrides the protocol seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $FINGERID_OUT or ./fingerid-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment on the simulated testbed and write its log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Generate the protocol experiments of this stage instead of a single command.
        #[arg(long, conflicts_with_all = ["command", "duration"])]
        stage: Option<Stage>,
        /// Actuation command JSON; every joint locked at zero and tendons slack when omitted.
        #[arg(long)]
        command: Option<PathBuf>,
        /// Sensor spec JSON; protocol sensors when omitted.
        #[arg(long)]
        sensors: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        duration: Option<f64>,
        #[arg(long, default_value = "sim")]
        name: String,
        /// Record noise-free shadow channels.
        #[arg(long)]
        ground_truth: bool,
    },
    /// Run an identification stage on logs.
    Identify {
        stage: Stage,
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        /// Model identified so far; a fresh ID.1 model from the finger spec when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Score the fit against the finger spec as ground truth.
        #[arg(long)]
        truth: bool,
    },
    /// Run a validation stage on logs.
    Validate {
        stage: Stage,
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Simulate, identify and validate every scheduled stage.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Skip writing experiment logs.
        #[arg(long)]
        no_logs: bool,
    },
    /// Render stage report files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl Common {
    fn load(&self) -> Result<(FingerModel, ProtocolConfig)> {
        let spec = load_spec(&self.spec)?;
        let mut protocol = load_protocol(self.protocol.as_deref(), &spec)?;
        if let Some(s) = self.seed {
            protocol.seed = s;
        }
        Ok((spec, protocol))
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("FINGERID_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("fingerid-out"))
    }
}

/// `true` when every stage passed.
type Outcome = Result<bool>;

fn cmd_simulate(
    common: &Common,
    stage: Option<Stage>,
    command: Option<&Path>,
    sensors: Option<&Path>,
    duration: Option<f64>,
    name: &str,
    ground_truth: bool,
) -> Outcome {
    let (spec, mut protocol) = common.load()?;
    if let Some(path) = sensors {
        protocol.sensors = read_json(path)?;
    }
    if ground_truth {
        protocol.sensors.record_ground_truth = true;
    }
    let dir = common.out_dir();
    std::fs::create_dir_all(&dir)?;
    let logs = match stage {
        Some(st) => stage_experiments(st, &spec, &protocol)?,
        None => {
            let duration = duration.ok_or_else(|| Error::Input("--duration is required".into()))?;
            if !(duration > 0.0 && duration.is_finite()) {
                return Err(Error::Validation {
                    field: "--duration".into(),
                    message: format!("{duration} s is not a positive duration"),
                });
            }
            let cmd: ActuationCommand = match command {
                Some(p) => read_json(p)?,
                None => ActuationCommand::locked(&spec, &vec![0.0; spec.dof()]),
            };
            let sensors: SensorSpec = protocol.sensors.clone().with_seed(protocol.seed);
            vec![(name.to_string(), simulate(&spec, &cmd, &sensors, duration)?)]
        }
    };
    for (stem, log) in &logs {
        let path = save_log(&dir, stem, log)?;
        println!("{}", path.display());
    }
    Ok(true)
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<fingerid::testbed::ExperimentLog>> {
    paths.iter().map(|p| load_log(p)).collect()
}

fn log_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn run_stage(
    stage: Stage,
    common: &Common,
    logs: &[PathBuf],
    model: Option<&Path>,
    truth: bool,
) -> Outcome {
    let (spec, protocol) = common.load()?;
    let prov = Provenance::new(&spec, &protocol);
    let out = OutputDir::create(common.out_dir(), prov.clone(), false)?;
    let mut identified: IdentifiedModel = match model {
        Some(p) => read_json(p)?,
        None => id1_load_parameters(&spec)?,
    };
    let report: FitReport = if stage == Stage::Id1 {
        id1_report(&identified)
    } else {
        let data = load_logs(logs)?;
        let (report, tables) = identify_stage(stage, &data, &mut identified, &protocol, truth.then_some(&spec))?;
        if let Some(rec) = identified.provenance.iter_mut().find(|r| r.stage == stage) {
            rec.logs = log_names(logs);
        }
        out.write_tables(stage.name(), &tables)?;
        report
    };
    out.write_report(&report)?;
    out.write_model(&identified)?;
    print!("{}", render_text(&prov, std::slice::from_ref(&report)));
    Ok(report.pass)
}

fn cmd_pipeline(common: &Common, no_logs: bool) -> Outcome {
    let (spec, protocol) = common.load()?;
    let out = OutputDir::create(common.out_dir(), Provenance::new(&spec, &protocol), !no_logs)?;
    let mut done: Vec<FitReport> = Vec::new();
    let result = run_pipeline_with(&spec, &protocol, &mut |art| {
        out.write_stage(art)?;
        done.push(art.report.clone());
        eprintln!("{} {}", art.stage, if art.report.pass { "pass" } else { "FAIL" });
        Ok(())
    });
    out.write_summary(&done)?;
    let run = result?;
    out.write_model(&run.model)?;
    print!("{}", render_text(&out.provenance, &run.reports));
    Ok(run.pass)
}

fn cmd_report(paths: &[PathBuf], format: Format) -> Outcome {
    let files: Vec<StageReportFile> = paths.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    let prov = &files[0].provenance;
    if let Some(f) = files.iter().find(|f| f.provenance != *prov) {
        return Err(Error::Input(format!(
            "reports come from different runs (seed {} vs {})",
            prov.seed, f.provenance.seed
        )));
    }
    let reports: Vec<FitReport> = files.iter().map(|f| f.report.clone()).collect();
    match format {
        Format::Text => print!("{}", render_text(prov, &reports)),
        Format::Csv => print!("{}", render_csv(&reports)?),
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate {
            common,
            stage,
            command,
            sensors,
            duration,
            name,
            ground_truth,
        } => cmd_simulate(
            &common,
            stage,
            command.as_deref(),
            sensors.as_deref(),
            duration,
            &name,
            ground_truth,
        ),
        Command::Identify {
            stage,
            common,
            logs,
            model,
            truth,
        } => {
            if matches!(stage, Stage::Vd1 | Stage::Vd2) {
                return Err(Error::Input(format!("{stage} is a validation stage; use `validate`")));
            }
            if stage != Stage::Id1 && logs.is_empty() {
                return Err(Error::Input("--logs is required".into()));
            }
            run_stage(stage, &common, &logs, model.as_deref(), truth)
        }
        Command::Validate {
            stage,
            common,
            logs,
            model,
        } => {
            if !matches!(stage, Stage::Vd1 | Stage::Vd2) {
                return Err(Error::Input(format!("{stage} is an identification stage; use `identify`")));
            }
            run_stage(stage, &common, &logs, Some(&model), false)
        }
        Command::Pipeline { common, no_logs } => cmd_pipeline(&common, no_logs),
        Command::Report { reports, format } => cmd_report(&reports, format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
