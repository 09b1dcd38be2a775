use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

/// What the expected value of a check rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Closed-form expression evaluated exactly.
    ClosedForm,
    /// Computed by an independent numerical route.
    Oracle,
    /// A stated property checked numerically.
    PublishedClaim,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub claim: String,
    pub basis: Basis,
    pub measured: Value,
    pub expected: Value,
    pub passed: bool,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
    pub runtime_ms: f64,
}

impl RunReport {
    pub fn new(experiment: &str, config_hash: String, seed: u64, records: Vec<CheckRecord>, runtime_ms: f64) -> Self {
        let passed = records.iter().filter(|r| r.passed).count();
        let summary = Summary { total: records.len(), passed, failed: records.len() - passed };
        RunReport { experiment: experiment.into(), config_hash, seed, records, summary, runtime_ms }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    /// The report with every runtime zeroed; equal across thread counts.
    pub fn canonical(&self) -> RunReport {
        let mut r = self.clone();
        r.runtime_ms = 0.0;
        for rec in &mut r.records {
            rec.runtime_ms = 0.0;
        }
        r
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical()).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "basis", "passed", "measured", "expected", "runtime_ms", "claim"])?;
        for r in &self.records {
            let basis = serde_json::to_value(r.basis).expect("basis serializes");
            w.write_record([
                r.name.as_str(),
                basis.as_str().unwrap_or(""),
                if r.passed { "true" } else { "false" },
                &r.measured.to_string(),
                &r.expected.to_string(),
                &format!("{:.3}", r.runtime_ms),
                r.claim.as_str(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: {}/{} checks passed in {:.1} s",
            self.experiment,
            self.summary.passed,
            self.summary.total,
            self.runtime_ms / 1000.0
        )
    }
}

/// Collects records for one experiment, timing each check.
pub struct Recorder {
    pub records: Vec<CheckRecord>,
    last: Instant,
}

impl Default for Recorder {
    fn default() -> Self {
        Recorder { records: Vec::new(), last: Instant::now() }
    }
}

impl Recorder {
    /// Restart the clock for the next record.
    pub fn start(&mut self) {
        self.last = Instant::now();
    }

    pub fn push(&mut self, name: impl Into<String>, claim: &str, basis: Basis, measured: impl Serialize, expected: impl Serialize, passed: bool) {
        let runtime_ms = self.last.elapsed().as_secs_f64() * 1e3;
        self.records.push(CheckRecord {
            name: name.into(),
            claim: claim.into(),
            basis,
            measured: serde_json::to_value(measured).unwrap_or(Value::Null),
            expected: serde_json::to_value(expected).unwrap_or(Value::Null),
            passed,
            runtime_ms,
        });
        self.last = Instant::now();
    }

    /// A failed record carrying the error message.
    pub fn error(&mut self, name: impl Into<String>, claim: &str, basis: Basis, err: impl std::fmt::Display) {
        self.push(name, claim, basis, format!("error: {}", err), Value::Null, false);
    }
}
