use std::fs;
use std::path::{Path, PathBuf};

use mfgc::MfgError;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotCertified,
    Error,
    IterationLimit,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::NotCertified => 2,
            Status::IterationLimit => 3,
        }
    }

    pub fn of_error(e: &MfgError) -> Self {
        match e {
            MfgError::NotStable(_) | MfgError::EmptyInterval(_) => Status::NotCertified,
            MfgError::IterationLimit { .. } => Status::IterationLimit,
            _ => Status::Error,
        }
    }
}

/// Collects the result of one command and writes it under `dir`.
pub struct Sink {
    dir: PathBuf,
    pub command: &'static str,
    pub config: Value,
    pub result: serde_json::Map<String, Value>,
    pub files: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path, command: &'static str, config: Value) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), command, config, result: Default::default(), files: vec![] })
    }

    pub fn put(&mut self, key: &str, v: impl Serialize) {
        self.result.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), String> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(&r).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
        self.files.push(name.into());
        Ok(())
    }

    /// Writes `report.json` and returns the exit code.
    pub fn finish(self, status: Status, message: Option<String>) -> i32 {
        let report = json!({
            "schema": mfgc::REPORT_SCHEMA,
            "command": self.command,
            "status": status,
            "exit_code": status.code(),
            "message": message,
            "config": self.config,
            "files": self.files,
            "result": Value::Object(self.result),
        });
        let path = self.dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = fs::write(&path, text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 1;
        }
        if let Some(m) = &message {
            let label = match status {
                Status::Ok => "note",
                Status::NotCertified => "not certified",
                Status::Error => "error",
                Status::IterationLimit => "iteration limit",
            };
            eprintln!("{label}: {m}");
        }
        status.code()
    }
}

pub fn f(x: f64) -> String {
    format!("{x}")
}
