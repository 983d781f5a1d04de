use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Whether a measured value is an error to keep small or a rate to keep large.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, bound: Bound::AtMost, pass: value <= tolerance }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, bound: Bound::AtLeast, pass: value >= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(gpx_core::GpxError::from)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Collects check results into a report; NaN values never pass.
pub fn emit_report(scenario: &str, checks: Vec<Check>) -> Report {
    Report { scenario: scenario.to_string(), pass: checks.iter().all(|c| c.pass), checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass_report() {
        let r = emit_report("s", vec![Check::at_most("a", 1e-9, 1e-8), Check::at_least("slope", 2.0, 1.9)]);
        assert!(r.pass);
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(json["pass"], true);
        assert_eq!(json["checks"].as_array().unwrap().len(), 2);
        assert_eq!(json["checks"][0]["name"], "a");
    }

    #[test]
    fn failing_check_is_named() {
        let r = emit_report("s", vec![Check::at_most("ok", 0.0, 1.0), Check::at_most("too-big", 2.0, 1.0)]);
        assert!(!r.pass);
        let names: Vec<&str> = r.failing().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["too-big"]);
    }

    #[test]
    fn empty_report_is_valid() {
        let r = emit_report("s", Vec::new());
        assert!(r.pass);
        assert!(r.checks.is_empty());
        let back: Report = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn nan_never_passes() {
        assert!(!Check::at_most("n", f64::NAN, 1.0).pass);
        assert!(!Check::at_least("n", f64::NAN, 1.0).pass);
    }
}
