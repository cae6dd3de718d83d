use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sigspace::suite::Check;

/// A machine-readable failure; `kind` is stable, `message` is for humans.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "message": self.message } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<sigspace::Error> for CliError {
    fn from(e: sigspace::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new("Io", e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("Json", format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("Json", e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))
}

fn to_value(value: impl Serialize) -> Value {
    serde_json::to_value(value).expect("report values serialize")
}

/// The JSON report of one task.
///
/// Result fields sit at the top level next to `task`, `inputs`, `checks`
/// and `pass`. Everything that depends on the clock lives under `timing`,
/// which is the only part that differs between identical runs.
#[derive(Debug, Default)]
pub struct Report {
    task: &'static str,
    inputs: Map<String, Value>,
    fields: Map<String, Value>,
    timing: Map<String, Value>,
    checks: Vec<Check>,
}

impl Report {
    pub fn new(task: &'static str) -> Self {
        Report {
            task,
            ..Default::default()
        }
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.inputs.insert(key.to_string(), to_value(value));
        self
    }

    pub fn field(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.fields.insert(key.to_string(), to_value(value));
        self
    }

    pub fn timing(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.timing.insert(key.to_string(), to_value(value));
        self
    }

    pub fn check(&mut self, check: Check) -> &mut Self {
        self.checks.push(check);
        self
    }

    /// A report fails when any check fails or a `"pass": false` field was
    /// recorded.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.fields.get("pass") != Some(&Value::Bool(false))
    }

    pub fn finish(mut self, wall_time_s: f64) -> Value {
        let pass = self.pass();
        self.timing.insert("wall_time_s".into(), to_value(wall_time_s));
        let mut out = std::mem::take(&mut self.fields);
        out.insert("task".into(), Value::String(self.task.into()));
        out.insert("inputs".into(), Value::Object(self.inputs));
        out.insert("checks".into(), to_value(&self.checks));
        out.insert("pass".into(), Value::Bool(pass));
        out.insert("timing".into(), Value::Object(self.timing));
        Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_layout() {
        let mut r = Report::new("density");
        r.input("in", "a.json").field("density", 0.5);
        r.check(Check::below("agreement", 0.0, 1e-8));
        assert!(r.pass());
        let v = r.finish(0.25);
        assert_eq!(v["task"], "density");
        assert_eq!(v["density"], 0.5);
        assert_eq!(v["inputs"]["in"], "a.json");
        assert_eq!(v["checks"][0]["tolerance"], 1e-8);
        assert_eq!(v["pass"], true);
        assert_eq!(v["timing"]["wall_time_s"], 0.25);
    }

    #[test]
    fn failed_check_fails_report() {
        let mut r = Report::new("x");
        r.check(Check::below("residual", 1.0, 1e-8));
        assert!(!r.pass());
        assert_eq!(r.finish(0.0)["pass"], false);
    }

    #[test]
    fn error_object() {
        let e = CliError::from(sigspace::Error::NonFinite);
        assert_eq!(e.to_json()["error"]["kind"], "NonFinite");
    }
}
