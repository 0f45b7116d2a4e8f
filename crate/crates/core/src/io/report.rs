//! Fit reports as JSON and plain text, plus the tidy plot tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{json_sha256, save_log, write_json};
use crate::error::Result;
use crate::identification::{FitReport, IdentifiedModel, ProtocolConfig, StageArtifacts, Table};
use crate::model::FingerModel;
use crate::testbed::model_hash;

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub spec_sha256: String,
    pub protocol_sha256: String,
    pub version: String,
}

impl Provenance {
    pub fn new(spec: &FingerModel, protocol: &ProtocolConfig) -> Self {
        Provenance {
            seed: protocol.seed,
            spec_sha256: model_hash(spec),
            protocol_sha256: json_sha256(protocol),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReportFile {
    pub provenance: Provenance,
    pub report: FitReport,
}

fn g(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn render_text(prov: &Provenance, reports: &[FitReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "fingerid {}", prov.version);
    let _ = writeln!(s, "seed             {}", prov.seed);
    let _ = writeln!(s, "spec sha256      {}", prov.spec_sha256);
    let _ = writeln!(s, "protocol sha256  {}", prov.protocol_sha256);
    for r in reports {
        let _ = writeln!(
            s,
            "\n[{}] {}  residual_rms {}",
            r.stage,
            if r.pass { "PASS" } else { "FAIL" },
            g(r.residual_rms)
        );
        for c in &r.checks {
            let _ = writeln!(
                s,
                "  check  {:<36} {} {} {}  {}",
                c.name,
                g(c.value),
                c.comparator,
                g(c.threshold),
                if c.pass { "ok" } else { "FAILED" }
            );
        }
        for (k, v) in &r.parameters {
            let _ = writeln!(s, "  param  {k:<36} {}", g(*v));
        }
        for (k, v) in r.ground_truth_error.iter().flatten() {
            let _ = writeln!(s, "  gterr  {k:<36} {}", g(*v));
        }
        for n in &r.notes {
            let _ = writeln!(s, "  note   {n}");
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    let _ = writeln!(s, "\noverall {}", if pass { "PASS" } else { "FAIL" });
    s
}

/// One row per check, parameter and ground-truth error.
pub fn render_csv(reports: &[FitReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "kind", "name", "value", "comparator", "threshold", "pass"])?;
    for r in reports {
        let st = r.stage.name();
        for c in &r.checks {
            w.write_record([
                st,
                "check",
                &c.name,
                &g(c.value),
                &c.comparator,
                &g(c.threshold),
                if c.pass { "true" } else { "false" },
            ])?;
        }
        for (k, v) in &r.parameters {
            w.write_record([st, "param", k, &g(*v), "", "", ""])?;
        }
        for (k, v) in r.ground_truth_error.iter().flatten() {
            w.write_record([st, "gt_error", k, &g(*v), "", "", ""])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Output directory of a pipeline run. Names depend only on stage, table and
/// seed, so reruns overwrite the same files.
pub struct OutputDir {
    pub dir: PathBuf,
    pub provenance: Provenance,
    pub write_logs: bool,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>, provenance: Provenance, write_logs: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        if write_logs {
            fs::create_dir_all(dir.join("logs"))?;
        }
        Ok(OutputDir {
            dir,
            provenance,
            write_logs,
        })
    }

    fn seed(&self) -> u64 {
        self.provenance.seed
    }

    pub fn report_path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}_{}.json", self.seed()))
    }

    pub fn write_report(&self, report: &FitReport) -> Result<PathBuf> {
        let path = self.report_path(report.stage.name());
        write_json(
            &path,
            &StageReportFile {
                provenance: self.provenance.clone(),
                report: report.clone(),
            },
        )?;
        Ok(path)
    }

    /// The first table of a stage is `{stage}_{seed}.csv`; further ones get
    /// their table name inserted.
    pub fn write_tables(&self, stage: &str, tables: &[Table]) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for (i, t) in tables.iter().enumerate() {
            let path = if i == 0 {
                self.dir.join(format!("{stage}_{}.csv", self.seed()))
            } else {
                self.dir.join(format!("{stage}_{}_{}.csv", t.name, self.seed()))
            };
            write_table(&path, t)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn write_stage(&self, art: &StageArtifacts) -> Result<()> {
        if self.write_logs {
            for (stem, log) in &art.logs {
                save_log(&self.dir.join("logs"), stem, log)?;
            }
        }
        self.write_tables(art.stage.name(), &art.tables)?;
        self.write_report(&art.report)?;
        Ok(())
    }

    pub fn write_model(&self, model: &IdentifiedModel) -> Result<PathBuf> {
        let path = self.dir.join(format!("model_{}.json", self.seed()));
        write_json(&path, model)?;
        Ok(path)
    }

    pub fn write_summary(&self, reports: &[FitReport]) -> Result<PathBuf> {
        let path = self.dir.join(format!("summary_{}.txt", self.seed()));
        fs::write(&path, render_text(&self.provenance, reports))?;
        fs::write(self.dir.join(format!("summary_{}.csv", self.seed())), render_csv(reports)?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::{Check, Stage};

    fn sample() -> (Provenance, Vec<FitReport>) {
        let prov = Provenance::new(&FingerModel::dexmart_default(), &ProtocolConfig::default());
        let mut r = FitReport::new(Stage::Id4);
        r.param("slope_t3", 0.41);
        r.check(Check::new("slope_t3_rel_error", 0.01, "<=", 0.05));
        (prov, vec![r])
    }

    #[test]
    fn text_names_provenance_and_thresholds() {
        let (prov, reports) = sample();
        let text = render_text(&prov, &reports);
        assert!(text.contains(&prov.spec_sha256) && text.contains(&prov.protocol_sha256));
        assert!(text.contains("seed             42"));
        assert!(text.contains("slope_t3_rel_error") && text.contains("<= 5.000000e-2"));
        assert!(text.ends_with("overall PASS\n"));
    }

    #[test]
    fn protocol_hash_tracks_content() {
        let spec = FingerModel::dexmart_default();
        let mut p = ProtocolConfig::default();
        let a = Provenance::new(&spec, &p);
        p.id2.fit_degree = 5;
        assert_ne!(a.protocol_sha256, Provenance::new(&spec, &p).protocol_sha256);
    }

    #[test]
    fn csv_has_one_row_per_item() {
        let (_, reports) = sample();
        let csv = render_csv(&reports).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
