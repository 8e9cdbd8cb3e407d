use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirms,
    Refutes,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Confirms => "confirms",
            Verdict::Refutes => "refutes",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub params: BTreeMap<String, String>,
    /// The ladder: `n` values, or `ε` values for the singular perturbation.
    pub n_values: Vec<f64>,
    /// `pairing_errors[i][j] = |⟨u_{n_i} − u_∞, φ_j⟩_ν|`.
    pub pairing_errors: Vec<Vec<f64>>,
    /// Per ladder entry, distance of the measured quantity from its oracle.
    pub oracle_gaps: Vec<f64>,
    pub oracle_gap_meaning: String,
    pub fitted_rate: f64,
    pub limit_description: String,
    pub oracle_values: BTreeMap<String, f64>,
    pub measured: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, Vec<f64>>,
    pub checks: BTreeMap<String, bool>,
    pub thresholds: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub expected: Verdict,
    pub elapsed_seconds: f64,
}

impl ConvergenceReport {
    pub fn new(experiment: &str, expected: Verdict) -> Self {
        Self {
            experiment: experiment.to_string(),
            params: BTreeMap::new(),
            n_values: Vec::new(),
            pairing_errors: Vec::new(),
            oracle_gaps: Vec::new(),
            oracle_gap_meaning: String::new(),
            fitted_rate: f64::NAN,
            limit_description: String::new(),
            oracle_values: BTreeMap::new(),
            measured: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            checks: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            expected,
            elapsed_seconds: 0.0,
        }
    }

    /// `max_j` pairing error for every ladder entry.
    pub fn max_errors(&self) -> Vec<f64> {
        self.pairing_errors
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    pub fn verdict_matches(&self) -> bool {
        self.verdict == self.expected
    }

    /// Whether every recorded check passed.
    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|b| *b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per `(n, j)`; no timing fields, so identical runs give
    /// identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,n,test_fn_index,pairing_error,oracle_gap\n");
        for (i, n) in self.n_values.iter().enumerate() {
            let gap = self.oracle_gaps.get(i).copied().unwrap_or(f64::NAN);
            for (j, e) in self.pairing_errors[i].iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{:e},{:e}", self.experiment, n, j, e, gap);
            }
        }
        out
    }

    /// Human-readable summary table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(s, "limit:      {}", self.limit_description);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>10}  {:>14}  {:>14}", "n", "max pairing", "oracle gap");
        for ((n, e), g) in self.n_values.iter().zip(self.max_errors()).zip(&self.oracle_gaps) {
            let _ = writeln!(s, "{:>10}  {:>14.6e}  {:>14.6e}", n, e, g);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "fitted rate: {:.4}", self.fitted_rate);
        for (k, v) in &self.oracle_values {
            let _ = writeln!(s, "oracle   {k}: {v:.8}");
        }
        for (k, v) in &self.measured {
            let _ = writeln!(s, "measured {k}: {v:.8}");
        }
        for (k, v) in &self.checks {
            let _ = writeln!(s, "check    {k}: {}", if *v { "ok" } else { "FAILED" });
        }
        let _ = writeln!(s, "verdict: {} (expected {})", self.verdict, self.expected);
        s
    }
}

/// Least-squares slope `r` of `log e ≈ c − r·log n` (so errors `∝ n^{−r}`
/// give `r`). Entries with `e = 0` are skipped; fewer than two usable
/// points give `NaN`.
pub fn fit_rate(n: &[f64], e: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = n
        .iter()
        .zip(e)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return f64::NAN;
    }
    -sxy / sxx
}
