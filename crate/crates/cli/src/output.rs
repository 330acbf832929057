use std::fs;
use std::path::{Path, PathBuf};

use pwavg::averaging::AveragingError;
use pwavg::exprlang::ExprError;
use pwavg::flow::FlowError;
use pwavg::model::{ModelError, PiecewiseModel};
use pwavg::shooting::ShootingError;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// A failed command: exit status plus one diagnostic record.
#[derive(Debug)]
pub struct Failure {
    pub exit: u8,
    pub code: String,
    pub message: String,
    pub extra: Map<String, Value>,
}

impl Failure {
    pub fn new(exit: u8, code: &str, message: impl Into<String>) -> Failure {
        Failure {
            exit,
            code: code.to_string(),
            message: message.into(),
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Failure {
        self.extra.insert(key.to_string(), json!(value));
        self
    }

    pub fn usage(message: impl Into<String>) -> Failure {
        Failure::new(EXIT_USAGE, "usage", message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Failure {
        Failure::new(EXIT_RUNTIME, "io", format!("{}: {err}", path.display()))
    }

    pub fn emit(&self) {
        diagnostic("error", &self.code, &self.message, self.extra.clone());
    }
}

/// Writes one JSON-lines diagnostic to stderr.
pub fn diagnostic(level: &str, code: &str, message: &str, extra: Map<String, Value>) {
    let mut record = Map::new();
    record.insert("level".into(), json!(level));
    record.insert("code".into(), json!(code));
    record.insert("message".into(), json!(message));
    record.extend(extra);
    eprintln!("{}", Value::Object(record));
}

pub fn warn(code: &str, message: &str) {
    diagnostic("warning", code, message, Map::new());
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Failure {
        let mut f = Failure::new(EXIT_VALIDATION, e.code(), e.to_string());
        if let Some(p) = e.path() {
            f = f.with("path", p);
        }
        if let ModelError::Expr {
            source: ExprError::Syntax { offset, .. } | ExprError::UnknownFunction { offset, .. },
            ..
        } = &e
        {
            f = f.with("offset", offset);
        }
        f
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Failure {
        if let FlowError::Model(m) = e {
            return m.into();
        }
        let exit = match e {
            FlowError::InvalidInput(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        let mut f = Failure::new(exit, e.code(), e.to_string());
        if let Some(ev) = e.event() {
            f = f.with("event", ev);
        }
        f
    }
}

impl From<AveragingError> for Failure {
    fn from(e: AveragingError) -> Failure {
        match e {
            AveragingError::Flow(f) => f.into(),
            AveragingError::Model(m) => m.into(),
            AveragingError::NoManifold | AveragingError::Dimension { .. } => {
                Failure::new(EXIT_VALIDATION, e.code(), e.to_string())
            }
            _ => Failure::new(EXIT_RUNTIME, e.code(), e.to_string()),
        }
    }
}

impl From<ShootingError> for Failure {
    fn from(e: ShootingError) -> Failure {
        match e {
            ShootingError::Flow(f) => f.into(),
            ShootingError::InvalidInput(_) => Failure::new(EXIT_USAGE, e.code(), e.to_string()),
            _ => Failure::new(EXIT_RUNTIME, e.code(), e.to_string()),
        }
    }
}

/// Model file contents, parsed model and content hash.
pub struct LoadedModel {
    pub path: PathBuf,
    pub sha256: String,
    pub model: PiecewiseModel,
}

pub fn load_model(path: &Path) -> Result<LoadedModel, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::new(EXIT_VALIDATION, "model.io", format!("{}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::new(EXIT_VALIDATION, "model.schema", "model file is not valid UTF-8"))?;
    let model = PiecewiseModel::from_json(&text)?;
    Ok(LoadedModel {
        path: path.to_path_buf(),
        sha256,
        model,
    })
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(EXIT_RUNTIME, "io", e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn write_csv(path: &Path, write: impl FnOnce(fs::File) -> Result<(), String>) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| Failure::io(path, e))?;
    write(file).map_err(|e| Failure::new(EXIT_RUNTIME, "io", format!("{}: {e}", path.display())))
}
