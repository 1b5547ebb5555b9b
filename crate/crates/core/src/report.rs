//! Machine-readable run reports.
//!
//! Every CLI run that produces analysis output serializes a [`RunReport`]:
//! the configuration it ran with, named scalar summaries, any check
//! verdicts, and wall-clock timing. Timing is the only field that varies
//! between identical runs, so reproducibility comparisons should redact it
//! with [`RunReport::without_timing`].

use crate::verification::Verdict;
use serde::{Deserialize, Serialize};

/// A named scalar produced by a run, such as an estimate or a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub value: f64,
}

impl Summary {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Summary { name: name.into(), value }
    }
}

/// The full output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Echo of the effective configuration, as free-form JSON.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub summaries: Vec<Summary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<Verdict>,
    /// Wall-clock seconds; varies between runs.
    pub elapsed_seconds: f64,
}

impl RunReport {
    pub fn new(config: serde_json::Value) -> Self {
        RunReport { config, summaries: Vec::new(), verdicts: Vec::new(), elapsed_seconds: 0.0 }
    }

    pub fn push_summary(&mut self, name: impl Into<String>, value: f64) {
        self.summaries.push(Summary::new(name, value));
    }

    pub fn summary(&self, name: &str) -> Option<f64> {
        self.summaries.iter().find(|s| s.name == name).map(|s| s.value)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Copy with the timing field zeroed, for bit-identity comparisons of
    /// otherwise deterministic runs.
    pub fn without_timing(&self) -> Self {
        let mut copy = self.clone();
        copy.elapsed_seconds = 0.0;
        copy
    }

    pub fn to_json_pretty(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn report_round_trips_through_json() {
        let mut report = RunReport::new(json!({"scheme": "iid", "n": 8, "seed": 7}));
        report.push_summary("estimate_mean", 0.215);
        report.push_summary("estimate_variance", 1.25e-2);
        report
            .verdicts
            .push(Verdict::new("spectral_bound", 0.93, 1.05, "within slack".to_string()));
        report.elapsed_seconds = 1.75;
        let text = report.to_json_pretty().expect("serializable");
        let back: RunReport = serde_json::from_str(&text).expect("parses");
        assert_eq!(back, report);
        assert!(back.all_passed());
        assert_eq!(back.summary("estimate_mean"), Some(0.215));
        assert_eq!(back.summary("missing"), None);
    }

    #[test]
    fn timing_redaction_makes_identical_runs_compare_equal() {
        let mut first = RunReport::new(json!({"seed": 3}));
        first.push_summary("tau", 0.5);
        first.elapsed_seconds = 0.31;
        let mut second = first.clone();
        second.elapsed_seconds = 0.48;
        assert_ne!(first, second);
        assert_eq!(first.without_timing(), second.without_timing());
    }

    #[test]
    fn empty_sections_are_omitted_from_json() {
        let report = RunReport::new(json!({}));
        let text = serde_json::to_string(&report).expect("serializable");
        assert!(!text.contains("summaries"));
        assert!(!text.contains("verdicts"));
    }
}
