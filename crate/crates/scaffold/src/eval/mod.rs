//! Benchmark runner: load a manifest, prompt the model per sample, parse,
//! score, and aggregate into a report.
//!
//! Per-sample failures (unreadable image, provider error, parse failure)
//! never abort a run; they score zero and carry a note on the verdict. The
//! run-level preconditions (metric homogeneity, group partition, file
//! existence) are validated before the first model call.

mod manifest;
mod report;
pub mod score;

pub use manifest::{load_manifest, validate_samples, GroundTruth, Metric, Sample};
pub use report::{aggregate, Aggregates, Report, Verdict};
pub use score::{judge_score, mementos_f1, multiset_f1, score_accuracy, score_group};

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::client::{Client, ClientError, Part};
use crate::cvmetrics::{spotting_report_json, score_spotting_path, HoughParams};
use crate::overlay::{overlay_for_setting, GridSpec, OverlayError, OverlayResult, Setting};
use crate::parsing::{
    detect_refusal_with, extract_final_answer, extract_spots, Extraction, DEFAULT_REFUSAL_PATTERNS,
};
use crate::prompting::{MethodTag, PromptError, Prompter};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },
    #[error("manifest contains no samples")]
    EmptyRun,
    #[error("manifest mixes metrics; one metric per run")]
    MixedMetrics,
    #[error("missing file: {0}")]
    MissingFile(std::path::PathBuf),
    #[error("sample {id}: {message}")]
    InvalidSample { id: String, message: String },
    #[error("group {group_id} has {count} samples, expected 4")]
    IncompleteGroup { group_id: String, count: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Per-run knobs beyond method and grid.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads evaluating samples; the client's gate still bounds
    /// in-flight network calls.
    pub concurrency: usize,
    /// Seed for sample shuffling (grid perturbation seeds live in the
    /// GridSpec).
    pub seed: u64,
    pub shuffle: bool,
    /// Override for guideline 4; `None` uses the metric-kind default.
    pub answer_format: Option<String>,
    /// Partitions the response cache, e.g. for repeated-run presets.
    pub cache_salt: Option<String>,
    pub refusal_patterns: Vec<String>,
    pub hough: HoughParams,
    /// Ground-truth differences per spotting level.
    pub expected_spots: usize,
    /// Snapshot embedded in the report.
    pub config_snapshot: serde_json::Value,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            concurrency: 1,
            seed: 0,
            shuffle: false,
            answer_format: None,
            cache_salt: None,
            refusal_patterns: DEFAULT_REFUSAL_PATTERNS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            hough: HoughParams::default(),
            expected_spots: 10,
            config_snapshot: serde_json::json!({}),
        }
    }
}

/// Everything a run needs besides the samples.
pub struct RunContext<'a> {
    pub client: &'a Client,
    /// Judge model for judge/keyword metrics; falls back to `client`.
    pub judge: Option<&'a Client>,
    pub prompter: &'a Prompter,
    pub options: RunOptions,
}

impl<'a> RunContext<'a> {
    pub fn new(client: &'a Client, prompter: &'a Prompter) -> Self {
        RunContext {
            client,
            judge: None,
            prompter,
            options: RunOptions::default(),
        }
    }

    fn judge_client(&self) -> &Client {
        self.judge.unwrap_or(self.client)
    }
}

/// Default guideline-4 line for a metric kind. Samples with options use
/// the per-setting stock line; binary questions ask for yes/no markers.
pub fn answer_format_default(metric: Metric, setting: Setting, has_options: bool) -> String {
    use crate::prompting::default_answer_format;
    match metric {
        Metric::Accuracy | Metric::GroupScore if has_options => {
            default_answer_format(setting).to_string()
        }
        Metric::Accuracy | Metric::GroupScore => {
            "Finally, conclude your answer in format [[ANSWER]], such as [[yes]] or [[no]].".into()
        }
        Metric::Judge => "Finally, conclude your answer in format [[ANSWER]].".into(),
        Metric::KeywordF1 => default_answer_format(Setting::Sequence).to_string(),
        Metric::SpotAccuracy => {
            "Finally, answer the dot position closest to every difference in the format: [spot index, x, y].".into()
        }
    }
}

/// Runs a whole manifest and aggregates the report.
pub fn run_benchmark(
    manifest_path: &Path,
    method: MethodTag,
    grid: &GridSpec,
    ctx: &RunContext,
) -> Result<Report, EvalError> {
    let samples = load_manifest(manifest_path)?;
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest_path.display().to_string());
    run_samples(&samples, &name, method, grid, ctx)
}

/// Runs pre-loaded samples (used directly by ablation sweeps).
pub fn run_samples(
    samples: &[Sample],
    manifest_name: &str,
    method: MethodTag,
    grid: &GridSpec,
    ctx: &RunContext,
) -> Result<Report, EvalError> {
    let metric = validate_samples(samples)?;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    if ctx.options.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed);
        order.shuffle(&mut rng);
    }

    let slots: Vec<Mutex<Option<Verdict>>> = samples.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = ctx.options.concurrency.max(1).min(samples.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= order.len() {
                    break;
                }
                let idx = order[k];
                let verdict = evaluate_sample(&samples[idx], method, grid, ctx);
                *slots[idx].lock().expect("slot lock") = Some(verdict);
            });
        }
    });
    let verdicts: Vec<Verdict> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("worker filled slot"))
        .collect();

    let aggregates = aggregate(&verdicts, metric)?;
    Ok(Report {
        method: method.to_string(),
        metric: metric.to_string(),
        manifest: manifest_name.to_string(),
        samples: verdicts.len(),
        aggregate: aggregates.aggregate,
        not_found_rate: aggregates.not_found_rate,
        success_rate: aggregates.success_rate,
        groups: aggregates.groups,
        config: ctx.options.config_snapshot.clone(),
        verdicts,
    })
}

fn error_verdict(sample: &Sample, message: String, started: Instant) -> Verdict {
    Verdict {
        sample_id: sample.id.clone(),
        group_id: sample.group_id.clone(),
        raw_response: String::new(),
        parsed: None,
        score: 0.0,
        refusal: false,
        latency_ms: started.elapsed().as_millis() as u64,
        cached: false,
        notes: vec![format!("error: {message}")],
        detail: None,
    }
}

/// Evaluates one sample end to end. Never panics out: any failure becomes
/// a zero-score verdict with a note.
pub fn evaluate_sample(
    sample: &Sample,
    method: MethodTag,
    grid: &GridSpec,
    ctx: &RunContext,
) -> Verdict {
    let started = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        evaluate_sample_inner(sample, method, grid, ctx)
    }));
    match outcome {
        Ok(Ok(verdict)) => verdict,
        Ok(Err(message)) => error_verdict(sample, message, started),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            error_verdict(sample, format!("panic: {message}"), started)
        }
    }
}

fn evaluate_sample_inner(
    sample: &Sample,
    method: MethodTag,
    grid: &GridSpec,
    ctx: &RunContext,
) -> Result<Verdict, String> {
    let images: Vec<image::RgbImage> = sample
        .images
        .iter()
        .map(|p| image::open(p).map(|i| i.to_rgb8()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;

    let task_text = sample.task_text();
    let answer_format = ctx.options.answer_format.clone().unwrap_or_else(|| {
        answer_format_default(sample.metric, sample.setting, sample.options.is_some())
    });

    let mut overlays: Option<Vec<OverlayResult>> = None;
    let bundle = if method.is_scaffolded() {
        let o = overlay_for_setting(&images, grid, sample.setting).map_err(|e| e.to_string())?;
        let b = ctx
            .prompter
            .build_bundle(&task_text, Some(&answer_format), grid, &o, sample.setting, method)
            .map_err(|e| e.to_string())?;
        overlays = Some(o);
        b
    } else {
        ctx.prompter
            .naive_bundle(&task_text, &images, sample.setting, method)
            .map_err(|e| e.to_string())?
    };

    let mut parts: Vec<Part> = bundle.images.into_iter().map(Part::Image).collect();
    parts.push(Part::Text(bundle.text));
    let mut request = ctx.client.user_request(parts);
    request.cache_salt = ctx.options.cache_salt.clone();
    let response = ctx.client.send(&request).map_err(|e| e.to_string())?;

    let refusal = detect_refusal_with(&response.text, &ctx.options.refusal_patterns);
    let mut notes = Vec::new();
    let mut detail = None;
    let mut parsed = None;

    let score = match sample.metric {
        Metric::Accuracy | Metric::GroupScore => match extract_final_answer(&response.text) {
            Ok(extraction) => {
                let token = match &extraction {
                    Extraction::FinalAnswer { value, .. } => value.clone(),
                    _ => unreachable!("extract_final_answer yields FinalAnswer"),
                };
                parsed = Some(extraction);
                match &sample.ground_truth {
                    GroundTruth::List(items) => items
                        .iter()
                        .map(|gt| score_accuracy(&token, gt))
                        .fold(0.0, f64::max),
                    other => score_accuracy(&token, &other.text()),
                }
            }
            Err(e) => {
                notes.push(e.to_string());
                0.0
            }
        },
        Metric::Judge => {
            let answer = match extract_final_answer(&response.text) {
                Ok(Extraction::FinalAnswer { value, .. }) => value,
                _ => response.text.clone(),
            };
            let (rating, mut flags) = judge_score(
                &sample.question,
                &sample.ground_truth.text(),
                &answer,
                ctx.judge_client(),
                ctx.prompter,
            )
            .map_err(|e| e.to_string())?;
            notes.append(&mut flags);
            parsed = Some(Extraction::Rating {
                value: rating,
                span: (0, 0),
            });
            rating
        }
        Metric::KeywordF1 => {
            let GroundTruth::ObjectsBehaviors { objects, behaviors } = &sample.ground_truth
            else {
                return Err("keyword_f1 sample without objects/behaviors ground truth".into());
            };
            let (pred_objects, pred_behaviors) =
                score::extract_keywords(&response.text, ctx.judge_client(), ctx.prompter)
                    .map_err(|e| e.to_string())?;
            mementos_f1(&pred_objects, objects, &pred_behaviors, behaviors)
        }
        Metric::SpotAccuracy => {
            let (spots, warnings) = extract_spots(&response.text);
            if warnings > 0 {
                notes.push(format!("{warnings} malformed spot triple(s) skipped"));
            }
            parsed = Some(Extraction::Spots {
                value: spots.clone(),
                warnings,
            });
            let answer_image = sample
                .answer_image
                .as_ref()
                .ok_or("spot_accuracy sample without answer_image")?;
            let predictions = spot_predictions_to_pixels(&spots, grid, overlays.as_deref());
            let spotting = score_spotting_path(
                &predictions,
                answer_image,
                ctx.options.expected_spots,
                &ctx.options.hough,
            )
            .map_err(|e| e.to_string())?;
            detail = Some(spotting_report_json(&sample.id, &spotting));
            spotting.score
        }
    };

    Ok(Verdict {
        sample_id: sample.id.clone(),
        group_id: sample.group_id.clone(),
        raw_response: response.text,
        parsed,
        score,
        refusal,
        latency_ms: response.latency_ms,
        cached: response.from_cache,
        notes,
        detail,
    })
}

/// Spot answers may be dot-grid coordinates or pixels. When the run was
/// scaffolded and every pair fits inside the grid, they are mapped to
/// pixel centers through the overlay placements; otherwise they are taken
/// as pixels.
fn spot_predictions_to_pixels(
    spots: &[crate::parsing::SpotMark],
    grid: &GridSpec,
    overlays: Option<&[OverlayResult]>,
) -> Vec<(f64, f64)> {
    if let Some(overlays) = overlays {
        if let Some(first) = overlays.first() {
            let all_in_grid = !spots.is_empty()
                && spots.iter().all(|s| {
                    s.x >= 1 && s.x <= grid.h as i64 && s.y >= 1 && s.y <= grid.w as i64
                });
            if all_in_grid {
                return spots
                    .iter()
                    .filter_map(|s| {
                        first
                            .placements
                            .iter()
                            .find(|p| p.logical.x == s.x as u32 && p.logical.y == s.y as u32)
                            .map(|p| (p.pixel_u as f64, p.pixel_v as f64))
                    })
                    .collect();
            }
        }
    }
    spots.iter().map(|s| (s.x as f64, s.y as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::{MockProvider, ScriptEntry};
    use crate::client::Client;
    use std::io::Write;
    use std::path::PathBuf;
    use std::sync::Arc;

    fn write_images(dir: &Path, count: usize) -> Vec<String> {
        (0..count)
            .map(|i| {
                let name = format!("img{i}.png");
                image::RgbImage::from_pixel(160, 120, image::Rgb([180, 180, 180]))
                    .save(dir.join(&name))
                    .unwrap();
                name
            })
            .collect()
    }

    fn write_manifest(dir: &Path, lines: &[serde_json::Value]) -> PathBuf {
        let path = dir.join("manifest.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        path
    }

    fn script_client(responses: &[(&str, &str)]) -> Client {
        let entries = responses
            .iter()
            .map(|(needle, response)| ScriptEntry {
                response: response.to_string(),
                match_substring: if needle.is_empty() {
                    None
                } else {
                    Some(needle.to_string())
                },
            })
            .collect();
        Client::builder(Arc::new(MockProvider::with_script(entries))).build()
    }

    #[test]
    fn oracle_mock_scores_perfect_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let manifest = write_manifest(
            dir.path(),
            &[
                serde_json::json!({"id": "1", "images": [images[0]], "question": "Is it q1?",
                    "ground_truth": "yes", "setting": "single", "metric": "accuracy"}),
                serde_json::json!({"id": "2", "images": [images[0]], "question": "Is it q2?",
                    "ground_truth": "no", "setting": "single", "metric": "accuracy"}),
            ],
        );
        let client = script_client(&[("q1", "Certainly. [[yes]]"), ("q2", "Hmm. [[no]]")]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Scaffold, &GridSpec::default(), &ctx).unwrap();
        assert_eq!(report.aggregate, 100.0);
        assert_eq!(report.samples, 2);
        assert_eq!(report.not_found_rate, 0.0);
    }

    #[test]
    fn constant_answer_on_balanced_manifest_scores_half() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let lines: Vec<serde_json::Value> = (0..10)
            .map(|i| {
                serde_json::json!({"id": i.to_string(), "images": [images[0]],
                    "question": format!("Q{i}?"),
                    "options": ["(A) first.", "(B) second."],
                    "ground_truth": if i % 2 == 0 { "A" } else { "B" },
                    "setting": "single", "metric": "accuracy"})
            })
            .collect();
        let manifest = write_manifest(dir.path(), &lines);
        let entries = vec![
            ScriptEntry {
                response: "[[A]]".into(),
                match_substring: None,
            };
            10
        ];
        let client = Client::builder(Arc::new(MockProvider::with_script(entries))).build();
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Naive, &GridSpec::default(), &ctx).unwrap();
        assert_eq!(report.aggregate, 50.0);
    }

    #[test]
    fn naive_and_scaffold_share_the_scoring_path() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let manifest = write_manifest(
            dir.path(),
            &[serde_json::json!({"id": "1", "images": [images[0]], "question": "Q?",
                "ground_truth": "yes", "setting": "single", "metric": "accuracy"})],
        );
        for method in [MethodTag::Naive, MethodTag::Scaffold] {
            let client = script_client(&[("", "of course [[yes]]")]);
            let prompter = Prompter::default();
            let ctx = RunContext::new(&client, &prompter);
            let report = run_benchmark(&manifest, method, &GridSpec::default(), &ctx).unwrap();
            assert_eq!(report.aggregate, 100.0, "method {method}");
        }
    }

    #[test]
    fn provider_failure_scores_zero_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let manifest = write_manifest(
            dir.path(),
            &[
                serde_json::json!({"id": "1", "images": [images[0]], "question": "first q",
                    "ground_truth": "yes", "setting": "single", "metric": "accuracy"}),
                serde_json::json!({"id": "2", "images": [images[0]], "question": "second q",
                    "ground_truth": "yes", "setting": "single", "metric": "accuracy"}),
            ],
        );
        // Only the second question has a scripted response.
        let client = script_client(&[("second q", "[[yes]]")]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Naive, &GridSpec::default(), &ctx).unwrap();
        assert_eq!(report.aggregate, 50.0);
        assert!(report.verdicts[0].notes[0].starts_with("error:"));
    }

    #[test]
    fn judge_metric_extracts_rating_with_retry() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let manifest = write_manifest(
            dir.path(),
            &[serde_json::json!({"id": "1", "images": [images[0]], "question": "How many?",
                "ground_truth": "three", "setting": "single", "metric": "judge"})],
        );
        // Answer turn, then an unparseable judge turn, then the retry.
        let client = script_client(&[
            ("How many?", "There are three. [[three]]"),
            ("impartial judge", "It looks correct to me."),
            ("Remember", "Rating: [[1]]"),
        ]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Scaffold, &GridSpec::default(), &ctx).unwrap();
        assert_eq!(report.aggregate, 100.0);
        assert!(report.verdicts[0]
            .notes
            .contains(&"judge_retried".to_string()));
    }

    #[test]
    fn keyword_metric_scores_mean_f1() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 2);
        let manifest = write_manifest(
            dir.path(),
            &[serde_json::json!({"id": "1", "images": images, "question": "Describe.",
                "ground_truth": {"objects": ["b", "c"], "behaviors": ["walk"]},
                "setting": "sequence", "metric": "keyword_f1"})],
        );
        let client = script_client(&[
            ("Describe.", "A b and an a, walking."),
            ("Extract the distinct objects", "Objects: [[a, b]]\nBehaviors: [[walk]]"),
        ]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Scaffold, &GridSpec::default(), &ctx).unwrap();
        // objects F1 = 0.5, behaviors F1 = 1.0 -> 0.75 -> 75.0.
        assert_eq!(report.aggregate, 75.0);
    }

    #[test]
    fn resumable_run_only_calls_network_for_uncached_samples() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache");
        let images = write_images(dir.path(), 1);
        let lines: Vec<serde_json::Value> = (0..4)
            .map(|i| {
                serde_json::json!({"id": i.to_string(), "images": [images[0]],
                    "question": format!("distinct question {i}"),
                    "ground_truth": "yes", "setting": "single", "metric": "accuracy"})
            })
            .collect();
        let manifest = write_manifest(dir.path(), &lines);
        let prompter = Prompter::default();

        let entries = vec![
            ScriptEntry {
                response: "[[yes]]".into(),
                match_substring: None,
            };
            4
        ];
        let mock = Arc::new(MockProvider::with_script(entries));
        let client = Client::builder(mock.clone()).cache_dir(&cache).build();
        let ctx = RunContext::new(&client, &prompter);
        run_benchmark(&manifest, MethodTag::Naive, &GridSpec::default(), &ctx).unwrap();
        assert_eq!(mock.calls(), 4);

        // Second run over the same manifest: all cached, zero new calls.
        let mock2 = Arc::new(MockProvider::new());
        let client2 = Client::builder(mock2.clone()).cache_dir(&cache).build();
        let ctx2 = RunContext::new(&client2, &prompter);
        let report =
            run_benchmark(&manifest, MethodTag::Naive, &GridSpec::default(), &ctx2).unwrap();
        assert_eq!(mock2.calls(), 0);
        assert!(report.verdicts.iter().all(|v| v.cached));
        assert_eq!(report.aggregate, 100.0);
    }

    #[test]
    fn shuffle_only_reorders_processing_not_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1);
        let lines: Vec<serde_json::Value> = (0..6)
            .map(|i| {
                serde_json::json!({"id": format!("s{i}"), "images": [images[0]],
                    "question": format!("unique {i}"),
                    "ground_truth": "yes", "setting": "single", "metric": "accuracy"})
            })
            .collect();
        let manifest = write_manifest(dir.path(), &lines);
        let prompter = Prompter::default();
        let responses: Vec<(&str, &str)> = (0..6).map(|_| ("", "[[yes]]")).collect();
        let client = script_client(&responses);
        let mut ctx = RunContext::new(&client, &prompter);
        ctx.options.shuffle = true;
        ctx.options.seed = 9;
        let report =
            run_benchmark(&manifest, MethodTag::Naive, &GridSpec::default(), &ctx).unwrap();
        let ids: Vec<&str> = report.verdicts.iter().map(|v| v.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["s0", "s1", "s2", "s3", "s4", "s5"]);
    }
}
