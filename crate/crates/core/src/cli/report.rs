use serde::Serialize;
use serde_json::Value;

use crate::bench::TimingReport;
use crate::error::{Error, ErrorKind};
use crate::eval::MetricsReport;
use crate::solver::OperatorMeta;

/// Bumped whenever a field is renamed or removed.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

/// The single JSON object a command prints with `--json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Every effective setting, defaults included.
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator_meta: Option<OperatorMeta>,
    /// Command-specific payload (paths written, tables, listings).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    pub tool_version: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Data => "data",
        ErrorKind::Numeric => "numeric",
        ErrorKind::Io => "io",
    }
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_string(),
            mode: None,
            config: Value::Object(Default::default()),
            metrics: None,
            timing: None,
            operator_meta: None,
            result: None,
            tool_version: env!("CARGO_PKG_VERSION"),
            exit_code: 0,
            error: None,
        }
    }

    /// A report for a failure that happened before any command ran.
    pub fn failure(command: &str, exit_code: i32, message: String) -> Self {
        let mut report = Self::new(command);
        report.exit_code = exit_code;
        report.error = Some(ErrorInfo {
            kind: "usage",
            message,
        });
        report
    }

    pub(crate) fn set_error(&mut self, err: &Error, exit_code: i32) {
        self.exit_code = exit_code;
        self.error = Some(ErrorInfo {
            kind: kind_name(err.kind()),
            message: err.to_string(),
        });
    }

    pub fn print_json(&self) {
        // Serialization of these plain data types cannot fail; fall back to a minimal object anyway.
        let text = serde_json::to_string(self).unwrap_or_else(|e| {
            serde_json::json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "command": self.command,
                "exit_code": self.exit_code,
                "error": { "kind": "io", "message": e.to_string() },
            })
            .to_string()
        });
        println!("{text}");
    }
}
