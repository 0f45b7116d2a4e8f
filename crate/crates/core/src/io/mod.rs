//! Configuration files, experiment-log persistence and report output.

mod log_csv;
mod report;
mod spec_file;

pub use log_csv::{fmt_value, load_log, read_log_csv, save_log, write_log_csv, LogSidecar};
pub use report::{
    render_csv, render_text, write_table, OutputDir, Provenance, StageReportFile,
};
pub use spec_file::{
    FingerSpecFile, FrictionSpec, JointSpec, LinkSpec, RoutingSpec, TendonKindSpec, TendonSpec, ViscoelasticSpec,
};

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::identification::ProtocolConfig;
use crate::model::FingerModel;

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            location: if path == "." {
                format!("{source} line {}", inner.line())
            } else {
                format!("{source} field `{path}` (line {})", inner.line())
            },
            message: inner.to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read `{}`: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// SHA-256 of the compact JSON encoding.
pub fn json_sha256<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn parse_spec(text: &str, source: &str) -> Result<FingerModel> {
    parse_json::<FingerSpecFile>(text, source)?.to_model()
}

/// Loads a finger spec; `default` selects the built-in finger.
pub fn load_spec(path: &str) -> Result<FingerModel> {
    if path == "default" {
        return Ok(FingerModel::dexmart_default());
    }
    read_json::<FingerSpecFile>(Path::new(path))?.to_model()
}

pub fn spec_to_json(model: &FingerModel) -> Result<String> {
    to_json(&FingerSpecFile::from_model(model))
}

/// Loads a protocol file (`default` for the built-in protocol) and checks it
/// against the finger.
pub fn load_protocol(path: Option<&str>, model: &FingerModel) -> Result<ProtocolConfig> {
    let p = match path {
        None | Some("default") => ProtocolConfig::default(),
        Some(p) => read_json(Path::new(p))?,
    };
    p.validate(model)?;
    Ok(p)
}
