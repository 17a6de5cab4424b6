//! Structured results of a verification sweep.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Info,
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub value: f64,
    /// Monte Carlo standard error, when the value is an estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    /// Reference value the entry is compared against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
}

impl Entry {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            se: None,
            oracle: None,
            tolerance: None,
            verdict: Verdict::Info,
        }
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    /// Pass iff |value − oracle| ≤ tolerance.
    pub fn against(mut self, oracle: f64, tolerance: f64) -> Self {
        self.oracle = Some(oracle);
        self.tolerance = Some(tolerance);
        self.verdict = verdict((self.value - oracle).abs() <= tolerance);
        self
    }

    pub fn check(mut self, ok: bool) -> Self {
        self.verdict = verdict(ok);
        self
    }

    /// |value − oracle|, if there is an oracle.
    pub fn gap(&self) -> Option<f64> {
        self.oracle.map(|o| (self.value - o).abs())
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub entries: Vec<Entry>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
    #[serde(default)]
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Structured output of the underlying operation, when it has one.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl DiagnosticReport {
    pub fn new() -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("fgf-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            versions,
            ..Self::default()
        }
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: DiagnosticReport) {
        self.entries.extend(other.entries);
        self.warnings.extend(other.warnings);
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        log::warn!("{w}");
        self.warnings.push(w);
    }

    pub fn worst(&self) -> Verdict {
        self.entries.iter().map(|e| e.verdict).max().unwrap_or(Verdict::Info)
    }

    pub fn passed(&self) -> bool {
        self.worst() != Verdict::Fail
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut r = DiagnosticReport::new();
        r.push(Entry::info("mass", 0.8).with_se(0.01));
        r.push(Entry::info("kappa", 1.037).against(1.0370, 1e-3));
        r.config = serde_json::json!({"gamma": 1.0});
        r.warn("empty grid");
        let s = serde_json::to_string(&r).unwrap();
        let back: DiagnosticReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(s.contains("\"verdict\":\"pass\""));
    }

    #[test]
    fn worst_verdict() {
        let mut r = DiagnosticReport::new();
        assert!(r.passed());
        r.push(Entry::info("a", 1.0));
        assert_eq!(r.worst(), Verdict::Info);
        r.push(Entry::info("b", 1.0).against(2.0, 0.5));
        assert_eq!(r.worst(), Verdict::Fail);
        assert!(!r.passed());
        assert_eq!(r.get("b").unwrap().gap(), Some(1.0));
    }
}
