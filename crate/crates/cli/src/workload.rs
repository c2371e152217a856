//! JSON form of workload specifications and simulation reports.

use provsketch_core::reuse::Binding;
use provsketch_core::tuning::{CostLedger, Dist, ParamSpec, Policy, Strategy, TemplateSpec, WorkloadSpec};
use provsketch_core::{Kind, Value};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistJson {
    pub mean: f64,
    #[serde(default)]
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamJson {
    Normal {
        mean: f64,
        #[serde(default)]
        stddev: f64,
        #[serde(default = "int")]
        kind: String,
    },
    Interval {
        start: DistJson,
        width: DistJson,
        #[serde(default = "int")]
        kind: String,
    },
    /// A literal such as `7`, `2.5` or `'CA'`.
    Fixed(String),
}

fn int() -> String {
    "int".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateJson {
    pub text: String,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub params: Vec<ParamJson>,
}

fn one() -> f64 {
    1.0
}

/// Policy fields a workload file may override.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyJson {
    pub selectivity_threshold: Option<f64>,
    pub evidence_threshold: Option<u32>,
    pub query_cost: Option<f64>,
    pub capture_factor: Option<f64>,
    pub fragments: Option<usize>,
    pub window: Option<usize>,
    pub verify: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadJson {
    pub templates: Vec<TemplateJson>,
    pub queries: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub policy: PolicyJson,
}

fn kind(text: &str) -> Result<Kind> {
    match Kind::parse(text) {
        Some(k) if k.is_numeric() => Ok(k),
        _ => Err(usage(format!("parameter kind `{text}` must be int or rat"))),
    }
}

fn literal(text: &str) -> Result<Value> {
    let b = Binding::parse(text)?;
    match b.0.as_slice() {
        [v] => Ok(v.clone()),
        _ => Err(usage(format!("`{text}` is not a single literal"))),
    }
}

impl WorkloadJson {
    pub fn spec(&self, seed: u64) -> Result<WorkloadSpec> {
        let mut templates = Vec::new();
        for t in &self.templates {
            let mut params = Vec::new();
            for p in &t.params {
                params.push(match p {
                    ParamJson::Normal { mean, stddev, kind: k } => {
                        ParamSpec::Normal { dist: Dist { mean: *mean, stddev: *stddev }, kind: kind(k)? }
                    }
                    ParamJson::Interval { start, width, kind: k } => ParamSpec::Interval {
                        start: Dist { mean: start.mean, stddev: start.stddev },
                        width: Dist { mean: width.mean, stddev: width.stddev },
                        kind: kind(k)?,
                    },
                    ParamJson::Fixed(text) => ParamSpec::Fixed(literal(text)?),
                });
            }
            templates.push(TemplateSpec { text: t.text.clone(), weight: t.weight, params });
        }
        Ok(WorkloadSpec { templates, queries: self.queries, seed })
    }

    pub fn policy(&self, strategy: Strategy) -> Policy {
        let d = Policy::default();
        let o = &self.policy;
        Policy {
            selectivity_threshold: o.selectivity_threshold.unwrap_or(d.selectivity_threshold),
            evidence_threshold: o.evidence_threshold.unwrap_or(d.evidence_threshold),
            strategy,
            query_cost: o.query_cost.unwrap_or(d.query_cost),
            capture_factor: o.capture_factor.unwrap_or(d.capture_factor),
            fragments: o.fragments.unwrap_or(d.fragments),
            window: o.window.unwrap_or(d.window),
            verify: o.verify.unwrap_or(d.verify),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Point {
    pub query: usize,
    pub cost: f64,
    pub plain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryJson {
    pub query: usize,
    pub template_id: String,
    pub binding: String,
    pub mode: &'static str,
    pub estimate: Option<f64>,
    pub rows_scanned: usize,
    pub cost: f64,
    pub plain_cost: f64,
    pub entry: Option<usize>,
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub strategy: &'static str,
    pub seed: u64,
    pub queries: usize,
    pub total_cost: f64,
    /// Cost of running every query without sketches.
    pub plain_cost: f64,
    pub ratio: f64,
    pub rows_scanned: usize,
    pub plain: usize,
    pub reuse: usize,
    pub capture: usize,
    pub mismatches: usize,
    /// Running totals per query: chosen strategy against plain execution.
    pub cumulative: Vec<Point>,
    pub entries: Vec<EntryJson>,
    pub log: Vec<String>,
}

impl Report {
    pub fn new(strategy: Strategy, seed: u64, ledger: &CostLedger, log: Vec<String>) -> Report {
        use provsketch_core::tuning::Mode;
        let ratio = if ledger.c_nops > 0.0 { ledger.total() / ledger.c_nops } else { 1.0 };
        Report {
            strategy: strategy.name(),
            seed,
            queries: ledger.entries.len(),
            total_cost: ledger.total(),
            plain_cost: ledger.c_nops,
            ratio,
            rows_scanned: ledger.rows_scanned(),
            plain: ledger.count(Mode::Plain),
            reuse: ledger.count(Mode::Reuse),
            capture: ledger.count(Mode::Capture),
            mismatches: ledger.mismatches(),
            cumulative: ledger
                .cumulative()
                .into_iter()
                .enumerate()
                .map(|(i, (cost, plain))| Point { query: i + 1, cost, plain })
                .collect(),
            entries: ledger
                .entries
                .iter()
                .map(|e| EntryJson {
                    query: e.query,
                    template_id: e.template_id.clone(),
                    binding: e.binding.to_string(),
                    mode: e.mode.name(),
                    estimate: e.estimate,
                    rows_scanned: e.rows_scanned,
                    cost: e.cost,
                    plain_cost: e.plain_cost,
                    entry: e.entry,
                    verified: e.verified,
                })
                .collect(),
            log,
        }
    }
}
