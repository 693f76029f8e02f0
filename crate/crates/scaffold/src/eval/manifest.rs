//! JSONL benchmark manifests: one sample per line, schema version 1.
//!
//! Image paths are resolved relative to the manifest file, so fixture
//! trees can be moved around freely.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::overlay::Setting;

use super::EvalError;

/// Scoring rule for a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    GroupScore,
    Judge,
    SpotAccuracy,
    KeywordF1,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::GroupScore => "group_score",
            Metric::Judge => "judge",
            Metric::SpotAccuracy => "spot_accuracy",
            Metric::KeywordF1 => "keyword_f1",
        })
    }
}

/// Expected answer. Keyword-F1 samples carry the two ground-truth keyword
/// lists; everything else is a string or a list of acceptable strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Text(String),
    List(Vec<String>),
    ObjectsBehaviors {
        objects: Vec<String>,
        behaviors: Vec<String>,
    },
}

impl GroundTruth {
    /// Primary text form, used for prompts (judge reference, echo mocks).
    pub fn text(&self) -> String {
        match self {
            GroundTruth::Text(t) => t.clone(),
            GroundTruth::List(l) => l.first().cloned().unwrap_or_default(),
            GroundTruth::ObjectsBehaviors { objects, behaviors } => {
                format!("objects: {}; behaviors: {}", objects.join(", "), behaviors.join(", "))
            }
        }
    }
}

fn schema_default() -> u32 {
    1
}

/// One benchmark item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    #[serde(default = "schema_default")]
    pub schema: u32,
    pub id: String,
    pub images: Vec<PathBuf>,
    pub question: String,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    pub ground_truth: GroundTruth,
    pub setting: Setting,
    pub metric: Metric,
    #[serde(default)]
    pub group_id: Option<String>,
    #[serde(default)]
    pub answer_image: Option<PathBuf>,
}

impl Sample {
    /// Question plus the options line, as delivered to the model.
    pub fn task_text(&self) -> String {
        match &self.options {
            Some(options) if !options.is_empty() => {
                format!("{}\nOptions: {}", self.question, options.join(" "))
            }
            _ => self.question.clone(),
        }
    }
}

/// Parses a JSONL manifest and resolves image paths against its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut sample: Sample =
            serde_json::from_str(line).map_err(|e| EvalError::Manifest {
                path: path.display().to_string(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if sample.schema != 1 {
            return Err(EvalError::Manifest {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("unsupported schema version {}", sample.schema),
            });
        }
        sample.images = sample.images.iter().map(|p| resolve(base, p)).collect();
        sample.answer_image = sample.answer_image.as_ref().map(|p| resolve(base, p));
        samples.push(sample);
    }
    Ok(samples)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Checks the whole run's preconditions before any model call: metric
/// homogeneity, setting arity, file existence, group partition, and
/// keyword ground-truth shape.
pub fn validate_samples(samples: &[Sample]) -> Result<Metric, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let metric = samples[0].metric;
    if samples.iter().any(|s| s.metric != metric) {
        return Err(EvalError::MixedMetrics);
    }
    for s in samples {
        let arity_ok = match s.setting {
            Setting::Single => s.images.len() == 1,
            Setting::Double => s.images.len() == 2,
            Setting::Sequence => s.images.len() >= 2,
        };
        if !arity_ok {
            return Err(EvalError::InvalidSample {
                id: s.id.clone(),
                message: format!(
                    "{} setting with {} image(s)",
                    s.setting,
                    s.images.len()
                ),
            });
        }
        for img in &s.images {
            if !img.exists() {
                return Err(EvalError::MissingFile(img.clone()));
            }
        }
        if metric == Metric::SpotAccuracy {
            match &s.answer_image {
                Some(p) if p.exists() => {}
                Some(p) => return Err(EvalError::MissingFile(p.clone())),
                None => {
                    return Err(EvalError::InvalidSample {
                        id: s.id.clone(),
                        message: "spot_accuracy sample without answer_image".into(),
                    })
                }
            }
        }
        if metric == Metric::KeywordF1
            && !matches!(s.ground_truth, GroundTruth::ObjectsBehaviors { .. })
        {
            return Err(EvalError::InvalidSample {
                id: s.id.clone(),
                message: "keyword_f1 sample needs ground_truth {objects, behaviors}".into(),
            });
        }
    }
    if metric == Metric::GroupScore {
        let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
        for s in samples {
            match &s.group_id {
                Some(g) => *counts.entry(g.as_str()).or_default() += 1,
                None => {
                    return Err(EvalError::InvalidSample {
                        id: s.id.clone(),
                        message: "group_score sample without group_id".into(),
                    })
                }
            }
        }
        for (group, count) in counts {
            if count != 4 {
                return Err(EvalError::IncompleteGroup {
                    group_id: group.to_string(),
                    count,
                });
            }
        }
    }
    Ok(metric)
}
