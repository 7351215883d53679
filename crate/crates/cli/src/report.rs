//! Output plumbing: reproducibility header, error reports and exit codes.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use zrp_core::{Mode, ZrpError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CAP: u8 = 3;

/// Failure of a command, with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn regime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "regime",
            message: message.into(),
        }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_CHECK_FAILED,
            kind: "io",
            message: message.to_string(),
        }
    }
}

impl From<ZrpError> for CliError {
    fn from(e: ZrpError) -> Self {
        let (code, kind) = match &e {
            ZrpError::DimensionCap { .. } => (EXIT_CAP, "resource_cap"),
            ZrpError::Parse { .. }
            | ZrpError::InvalidParams(_)
            | ZrpError::LengthMismatch { .. }
            | ZrpError::ModeMismatch { .. }
            | ZrpError::DivergentTrace(_)
            | ZrpError::EmptyWindow { .. }
            | ZrpError::Absorbing => (EXIT_USAGE, "invalid_input"),
            _ => (EXIT_CHECK_FAILED, "computation"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Exact => "exact",
        Mode::Float => "float",
    }
}

/// Parameters, mode, seed and versions of a run.
pub fn header(command: &str, mode: Mode, params: Value, seed: Option<u64>) -> Value {
    json!({
        "tool": "zrp",
        "version": env!("CARGO_PKG_VERSION"),
        "library_version": zrp_core::VERSION,
        "command": command,
        "mode": mode_name(mode),
        "seed": seed,
        "params": params,
    })
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(CliError::io)?;
            out.flush().map_err(CliError::io)
        }
    }
}

pub fn write_json(path: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json");
    text.push('\n');
    write_text(path, &text)
}
