//! Verdicts, aggregates, and the run report.

use serde::{Deserialize, Serialize};

use crate::parsing::Extraction;

use super::{EvalError, Metric};

/// One scored sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group_id: Option<String>,
    pub raw_response: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parsed: Option<Extraction>,
    pub score: f64,
    pub refusal: bool,
    pub latency_ms: u64,
    pub cached: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<serde_json::Value>,
}

/// Percentages carried by a report, all on the 0..=100 scale at one
/// decimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub aggregate: f64,
    pub not_found_rate: f64,
    pub success_rate: f64,
    pub groups: Option<usize>,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Folds verdicts into the metric aggregate: mean score for per-sample
/// metrics, all-four-correct over groups for the group score. Also counts
/// the Not Found Rate (refusals) and Success Rate (exactly correct).
pub fn aggregate(verdicts: &[Verdict], metric: Metric) -> Result<Aggregates, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let n = verdicts.len() as f64;
    let aggregate_score = match metric {
        Metric::GroupScore => {
            let mut groups: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
            for v in verdicts {
                let gid = v.group_id.as_deref().ok_or(EvalError::IncompleteGroup {
                    group_id: v.sample_id.clone(),
                    count: 0,
                })?;
                groups.entry(gid).or_default().push(v.score);
            }
            let mut sum = 0.0;
            for (gid, scores) in &groups {
                if scores.len() != 4 {
                    return Err(EvalError::IncompleteGroup {
                        group_id: gid.to_string(),
                        count: scores.len(),
                    });
                }
                sum += super::score::score_group(scores)?;
            }
            return Ok(Aggregates {
                aggregate: round1(100.0 * sum / groups.len() as f64),
                not_found_rate: round1(
                    100.0 * verdicts.iter().filter(|v| v.refusal).count() as f64 / n,
                ),
                success_rate: round1(
                    100.0 * verdicts.iter().filter(|v| v.score == 1.0).count() as f64 / n,
                ),
                groups: Some(groups.len()),
            });
        }
        _ => verdicts.iter().map(|v| v.score).sum::<f64>() / n,
    };
    Ok(Aggregates {
        aggregate: round1(100.0 * aggregate_score),
        not_found_rate: round1(100.0 * verdicts.iter().filter(|v| v.refusal).count() as f64 / n),
        success_rate: round1(
            100.0 * verdicts.iter().filter(|v| v.score == 1.0).count() as f64 / n,
        ),
        groups: None,
    })
}

/// Full outcome of one benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub metric: String,
    pub manifest: String,
    pub samples: usize,
    pub aggregate: f64,
    pub not_found_rate: f64,
    pub success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub groups: Option<usize>,
    pub config: serde_json::Value,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Table-style summary for stdout.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>6} {:<14} {:<14} {:>7}\n",
            "Dataset", "Size", "Metric", "Method", "Score"
        ));
        out.push_str(&format!(
            "{:<28} {:>6} {:<14} {:<14} {:>7.1}\n",
            self.manifest, self.samples, self.metric, self.method, self.aggregate
        ));
        out.push_str(&format!(
            "Not Found Rate: {:.1}   Success Rate: {:.1}\n",
            self.not_found_rate, self.success_rate
        ));
        if let Some(groups) = self.groups {
            out.push_str(&format!("Groups: {groups}\n"));
        }
        out
    }
}
