use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use dwell::continuation::RunConfig;
use dwell::presets::{find_preset, ScenarioPreset};

use crate::Common;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            error: "usage".into(),
            message: message.into(),
            path: None,
            violations: Vec::new(),
        }
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.to_path_buf());
        self
    }
}

impl From<dwell::Error> for CliError {
    fn from(e: dwell::Error) -> Self {
        let violations = match &e {
            dwell::Error::Config(v) => v.clone(),
            _ => Vec::new(),
        };
        Self {
            error: e.kind().into(),
            message: e.to_string(),
            path: None,
            violations,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        dwell::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        dwell::Error::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn report_error(e: &CliError) -> ExitCode {
    let text = serde_json::to_string(e).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.error));
    eprintln!("{text}");
    ExitCode::from(1)
}

/// Configuration and optional preset selected by the common flags.
pub fn load_config(common: &Common) -> CliResult<(RunConfig, Option<ScenarioPreset>)> {
    if let Some(name) = &common.preset {
        let preset = find_preset(name).ok_or_else(|| CliError {
            error: "unknown_preset".into(),
            message: format!("no preset named `{name}`"),
            path: None,
            violations: Vec::new(),
        })?;
        return Ok((preset.config.clone(), Some(preset)));
    }
    let Some(path) = &common.config else {
        return Ok((RunConfig::default(), None));
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::from(e).at(path))?;
    let violations = config.validate();
    if !violations.is_empty() {
        return Err(CliError::from(dwell::Error::Config(violations)).at(path));
    }
    Ok((config, None))
}

pub fn config_hash(config: &RunConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Output directory that records every artifact it writes.
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::from(e).at(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::from(e).at(&path))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> CliResult<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    text.push(',');
                }
                match cell {
                    Cell::Num(v) => write!(text, "{}", v + 0.0).expect("string write"),
                    Cell::Int(v) => write!(text, "{v}").expect("string write"),
                    Cell::Text(s) => text.push_str(s),
                    Cell::Empty => {}
                }
            }
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` naming the artifacts and the configuration hash.
    pub fn finish(mut self, subcommand: &str, config: &RunConfig, common: &Common) -> CliResult<()> {
        let manifest = json!({
            "subcommand": subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": config_hash(config),
            "config": config,
            "seed": common.seed,
            "preset": common.preset,
            "artifacts": self.artifacts,
        });
        self.json("manifest.json", &manifest)
    }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}
