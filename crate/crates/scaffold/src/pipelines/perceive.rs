//! Two-phase active perception: locate targets by coordinate, crop around
//! them, then answer from the crops in a second conversation turn.

use std::time::Instant;

use crate::client::{Message, Part};
use crate::eval::{
    aggregate, answer_format_default, validate_samples, GroundTruth, Metric, Report, RunContext,
    Sample, Verdict,
};
use crate::overlay::{encode_png, overlay_for_setting, GridSpec, Setting};
use crate::parsing::{detect_refusal_with, extract_coordinates, extract_final_answer, Extraction};
use crate::prompting::MethodTag;

use super::crop::{crop_regions, CropWindow};
use super::PipelineError;

/// Verdict plus the located coordinates and crop windows, for reporting
/// and containment checks.
#[derive(Debug)]
pub struct ApOutcome {
    pub verdict: Verdict,
    pub coords: Vec<(i64, i64)>,
    pub windows: Vec<CropWindow>,
}

fn score_answer(token: &str, ground_truth: &GroundTruth) -> f64 {
    match ground_truth {
        GroundTruth::List(items) => items
            .iter()
            .map(|gt| crate::eval::score_accuracy(token, gt))
            .fold(0.0, f64::max),
        other => crate::eval::score_accuracy(token, &other.text()),
    }
}

/// Runs the locate-crop-answer loop for one single-image sample.
///
/// Phase 1 sends the scaffold overlay with the locate prompt and parses
/// `[[(x,y)]]` coordinates. With no usable coordinates the sample falls
/// back to plain scaffold answering, flagged `no_coords`. Otherwise the
/// crops (plus the full overlaid image) are appended as a second
/// conversation turn with the follow-up prompt.
pub fn active_perception_run(
    sample: &Sample,
    grid: &GridSpec,
    ctx: &RunContext,
    cells: u32,
) -> Result<ApOutcome, PipelineError> {
    if sample.setting != Setting::Single {
        return Err(PipelineError::InvalidSetting(format!(
            "active perception needs single-image samples, got {}",
            sample.setting
        )));
    }
    let started = Instant::now();
    let image = image::open(&sample.images[0])
        .map_err(|e| PipelineError::InvalidSetting(format!("image load: {e}")))?
        .to_rgb8();
    let overlays = overlay_for_setting(&[image.clone()], grid, Setting::Single)?;

    // Phase 1: locate. The question goes in without options; the model is
    // told not to answer yet.
    let phase1 = ctx.prompter.build_bundle(
        &sample.question,
        None,
        grid,
        &overlays,
        Setting::Single,
        MethodTag::ScaffoldApPhase1,
    )?;
    let mut turn1_parts: Vec<Part> = phase1.images.into_iter().map(Part::Image).collect();
    turn1_parts.push(Part::Text(phase1.text));
    let resp1 = ctx.client.send_conversation(&[Message::user(turn1_parts.clone())])?;

    let located = extract_coordinates(&resp1.text);
    let in_grid: Vec<(u32, u32)> = located
        .iter()
        .filter(|(x, y)| {
            *x >= 1 && *x <= grid.h as i64 && *y >= 1 && *y <= grid.w as i64
        })
        .map(|&(x, y)| (x as u32, y as u32))
        .collect();

    let mut notes = Vec::new();
    if located.len() != in_grid.len() {
        notes.push(format!(
            "dropped {} out-of-grid coordinate(s)",
            located.len() - in_grid.len()
        ));
    }

    if in_grid.is_empty() {
        // Fallback: plain scaffold answering on the same overlay.
        notes.push("no_coords".into());
        let answer_format =
            answer_format_default(sample.metric, Setting::Single, sample.options.is_some());
        let bundle = ctx.prompter.build_bundle(
            &sample.task_text(),
            Some(&answer_format),
            grid,
            &overlays,
            Setting::Single,
            MethodTag::Scaffold,
        )?;
        let mut parts: Vec<Part> = bundle.images.into_iter().map(Part::Image).collect();
        parts.push(Part::Text(bundle.text));
        let resp = ctx.client.send(&ctx.client.user_request(parts))?;
        let refusal = detect_refusal_with(&resp.text, &ctx.options.refusal_patterns);
        let (parsed, score) = match extract_final_answer(&resp.text) {
            Ok(extraction) => {
                let Extraction::FinalAnswer { value, .. } = &extraction else {
                    unreachable!()
                };
                let score = score_answer(value, &sample.ground_truth);
                (Some(extraction), score)
            }
            Err(e) => {
                notes.push(e.to_string());
                (None, 0.0)
            }
        };
        return Ok(ApOutcome {
            verdict: Verdict {
                sample_id: sample.id.clone(),
                group_id: sample.group_id.clone(),
                raw_response: resp.text,
                parsed,
                score,
                refusal,
                latency_ms: started.elapsed().as_millis() as u64,
                cached: resp1.from_cache && resp.from_cache,
                notes,
                detail: Some(serde_json::json!({
                    "phase1_response": resp1.text,
                    "coords": located,
                })),
            },
            coords: located,
            windows: Vec::new(),
        });
    }

    // Phase 2: crop around the located dots and ask again with the crops
    // plus the full overlaid image.
    let crops = crop_regions(&image, &in_grid, &overlays[0].placements, cells)?;
    let options_text = sample
        .options
        .as_ref()
        .map(|o| o.join(" "))
        .unwrap_or_default();
    let followup = ctx
        .prompter
        .build_followup_prompt(&sample.question, &options_text)?;
    let mut turn2_parts: Vec<Part> = crops
        .iter()
        .map(|(_, crop)| Part::Image(crate::client::ImageData::png(encode_png(crop))))
        .collect();
    turn2_parts.push(Part::Image(crate::client::ImageData::png(encode_png(
        &overlays[0].overlaid,
    ))));
    turn2_parts.push(Part::Text(followup));

    let conversation = vec![
        Message::user(turn1_parts),
        Message::assistant_text(resp1.text.clone()),
        Message::user(turn2_parts),
    ];
    let resp2 = ctx.client.send_conversation(&conversation)?;
    let refusal = detect_refusal_with(&resp2.text, &ctx.options.refusal_patterns);
    let (parsed, score) = match extract_final_answer(&resp2.text) {
        Ok(extraction) => {
            let Extraction::FinalAnswer { value, .. } = &extraction else {
                unreachable!()
            };
            let score = score_answer(value, &sample.ground_truth);
            (Some(extraction), score)
        }
        Err(e) => {
            notes.push(e.to_string());
            (None, 0.0)
        }
    };
    let windows: Vec<CropWindow> = crops.into_iter().map(|(w, _)| w).collect();
    Ok(ApOutcome {
        verdict: Verdict {
            sample_id: sample.id.clone(),
            group_id: sample.group_id.clone(),
            raw_response: resp2.text,
            parsed,
            score,
            refusal,
            latency_ms: started.elapsed().as_millis() as u64,
            cached: resp1.from_cache && resp2.from_cache,
            notes,
            detail: Some(serde_json::json!({
                "phase1_response": resp1.text,
                "coords": located,
                "windows": windows,
            })),
        },
        coords: located,
        windows,
    })
}

/// Runs the loop over a whole manifest and reports Not Found / Success
/// rates alongside accuracy.
pub fn run_perceive(
    samples: &[Sample],
    manifest_name: &str,
    grid: &GridSpec,
    ctx: &RunContext,
    cells: u32,
) -> Result<Report, PipelineError> {
    let metric = validate_samples(samples)?;
    if metric != Metric::Accuracy {
        return Err(PipelineError::InvalidSetting(format!(
            "active perception scores accuracy manifests, got {metric}"
        )));
    }
    let mut verdicts = Vec::with_capacity(samples.len());
    for sample in samples {
        match active_perception_run(sample, grid, ctx, cells) {
            Ok(outcome) => verdicts.push(outcome.verdict),
            Err(e) => verdicts.push(Verdict {
                sample_id: sample.id.clone(),
                group_id: sample.group_id.clone(),
                raw_response: String::new(),
                parsed: None,
                score: 0.0,
                refusal: false,
                latency_ms: 0,
                cached: false,
                notes: vec![format!("error: {e}")],
                detail: None,
            }),
        }
    }
    let aggregates = aggregate(&verdicts, metric)?;
    Ok(Report {
        method: "scaffold_ap".into(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::{MockProvider, ScriptEntry};
    use crate::client::Client;
    use crate::prompting::Prompter;
    use std::sync::Arc;

    fn sample(dir: &std::path::Path) -> Sample {
        let path = dir.join("scene.png");
        image::RgbImage::from_pixel(600, 600, image::Rgb([150, 160, 170]))
            .save(&path)
            .unwrap();
        Sample {
            schema: 1,
            id: "ap1".into(),
            images: vec![path],
            question: "What color is the little girl's shirt?".into(),
            options: Some(vec![
                "(A) pink.".into(),
                "(B) white.".into(),
                "(C) yellow.".into(),
                "(D) black.".into(),
            ]),
            ground_truth: GroundTruth::Text("A".into()),
            setting: Setting::Single,
            metric: Metric::Accuracy,
            group_id: None,
            answer_image: None,
        }
    }

    fn ctx_client(responses: Vec<ScriptEntry>) -> Client {
        Client::builder(Arc::new(MockProvider::with_script(responses))).build()
    }

    #[test]
    fn two_phase_flow_scores_and_crops() {
        let dir = tempfile::tempdir().unwrap();
        let sample = sample(dir.path());
        let client = ctx_client(vec![
            ScriptEntry {
                response: "The girl is near [[(3,4)]] and [[(3,5)]].".into(),
                match_substring: Some("you don't need to answer".into()),
            },
            ScriptEntry {
                response: "Close up it is pink. [[A]]".into(),
                match_substring: Some("take a closer look".into()),
            },
        ]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let outcome =
            active_perception_run(&sample, &GridSpec::default(), &ctx, 1).unwrap();
        assert_eq!(outcome.verdict.score, 1.0);
        assert!(!outcome.verdict.refusal);
        assert_eq!(outcome.coords, vec![(3, 4), (3, 5)]);
        // Adjacent coordinates merged into one crop containing both dots.
        assert_eq!(outcome.windows.len(), 1);
        let dot_u = 350; // (3,4) on 6x6/600: u = 4*100-50
        let dot_v = 250;
        assert!(outcome.windows[0].contains(dot_u, dot_v));
    }

    #[test]
    fn no_coordinates_falls_back_with_flag() {
        let dir = tempfile::tempdir().unwrap();
        let sample = sample(dir.path());
        let client = ctx_client(vec![
            ScriptEntry {
                response: "I could not pinpoint anything specific.".into(),
                match_substring: Some("you don't need to answer".into()),
            },
            ScriptEntry {
                response: "Looking again, the answer is [[A]]".into(),
                match_substring: None,
            },
        ]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let outcome =
            active_perception_run(&sample, &GridSpec::default(), &ctx, 1).unwrap();
        assert_eq!(outcome.verdict.score, 1.0);
        assert!(outcome.verdict.notes.contains(&"no_coords".to_string()));
        assert!(outcome.windows.is_empty());
    }

    #[test]
    fn phase_two_refusal_counts_toward_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let sample = sample(dir.path());
        let client = ctx_client(vec![
            ScriptEntry {
                response: "[[(2,2)]]".into(),
                match_substring: Some("you don't need to answer".into()),
            },
            ScriptEntry {
                response: "I'm sorry, but I cannot assist with this request.".into(),
                match_substring: Some("take a closer look".into()),
            },
        ]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        let outcome =
            active_perception_run(&sample, &GridSpec::default(), &ctx, 1).unwrap();
        assert_eq!(outcome.verdict.score, 0.0);
        assert!(outcome.verdict.refusal);
    }

    #[test]
    fn double_setting_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample(dir.path());
        s.setting = Setting::Double;
        let client = ctx_client(vec![]);
        let prompter = Prompter::default();
        let ctx = RunContext::new(&client, &prompter);
        assert!(matches!(
            active_perception_run(&s, &GridSpec::default(), &ctx, 1),
            Err(PipelineError::InvalidSetting(_))
        ));
    }
}
