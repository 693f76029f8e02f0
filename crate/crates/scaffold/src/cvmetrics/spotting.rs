//! Scoring for spotting-differences answers: detect the ground-truth
//! marker circles in the answer image and match predicted positions
//! one-to-one within a strict 50-pixel gate.

use std::path::Path;

use image::RgbImage;
use serde::Serialize;

use super::hough::{hough_circles, Circle, HoughParams};
use super::{to_grayscale, CvError};

/// A prediction is matched only when strictly closer than this.
pub const MATCH_RADIUS_PX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub prediction: (f64, f64),
    pub circle_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpottingScore {
    pub matched: usize,
    pub expected: usize,
    pub score: f64,
    pub circles: Vec<Circle>,
    pub pairs: Vec<MatchPair>,
}

/// Greedy globally-closest one-to-one matching under the strict gate:
/// repeatedly pair the closest unused (prediction, circle) with
/// distance < 50 px.
pub fn match_predictions(predicted: &[(f64, f64)], circles: &[Circle]) -> Vec<MatchPair> {
    let mut candidates = Vec::new();
    for (pi, p) in predicted.iter().enumerate() {
        for (ci, c) in circles.iter().enumerate() {
            let d = ((p.0 - c.center_u as f64).powi(2) + (p.1 - c.center_v as f64).powi(2)).sqrt();
            if d < MATCH_RADIUS_PX {
                candidates.push((d, pi, ci));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_pred = vec![false; predicted.len()];
    let mut used_circle = vec![false; circles.len()];
    let mut pairs = Vec::new();
    for (d, pi, ci) in candidates {
        if used_pred[pi] || used_circle[ci] {
            continue;
        }
        used_pred[pi] = true;
        used_circle[ci] = true;
        pairs.push(MatchPair {
            prediction: predicted[pi],
            circle_index: ci,
            distance: d,
        });
    }
    pairs
}

/// Detects up to `expected_count` marker circles in the answer image and
/// scores the predictions against them: `score = matched / expected_count`.
pub fn score_spotting(
    predicted: &[(f64, f64)],
    answer_image: &RgbImage,
    expected_count: usize,
    params: &HoughParams,
) -> SpottingScore {
    let gray = to_grayscale(answer_image);
    let mut circles = hough_circles(&gray, params);
    circles.truncate(expected_count);
    let pairs = match_predictions(predicted, &circles);
    let matched = pairs.len();
    SpottingScore {
        matched,
        expected: expected_count,
        score: if expected_count == 0 {
            0.0
        } else {
            matched as f64 / expected_count as f64
        },
        circles,
        pairs,
    }
}

/// [`score_spotting`] on a file path.
pub fn score_spotting_path(
    predicted: &[(f64, f64)],
    answer_image: &Path,
    expected_count: usize,
    params: &HoughParams,
) -> Result<SpottingScore, CvError> {
    let img = image::open(answer_image)
        .map_err(|source| CvError::AnswerImageUnreadable {
            path: answer_image.display().to_string(),
            source,
        })?
        .to_rgb8();
    Ok(score_spotting(predicted, &img, expected_count, params))
}

/// Per-level JSON record emitted alongside reports.
pub fn spotting_report_json(level: &str, score: &SpottingScore) -> serde_json::Value {
    serde_json::json!({
        "level": level,
        "matched": score.matched,
        "score": score.score,
        "circles": score.circles,
        "pairs": score.pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(u: f32, v: f32) -> Circle {
        Circle {
            center_u: u,
            center_v: v,
            radius: 20.0,
            votes: 100,
        }
    }

    #[test]
    fn exact_center_matches() {
        let pairs = match_predictions(&[(100.0, 100.0)], &[circle(100.0, 100.0)]);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].distance, 0.0);
    }

    #[test]
    fn distance_exactly_fifty_is_rejected() {
        let pairs = match_predictions(&[(150.0, 100.0)], &[circle(100.0, 100.0)]);
        assert!(pairs.is_empty());
        let pairs = match_predictions(&[(149.999, 100.0)], &[circle(100.0, 100.0)]);
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn matching_is_one_to_one() {
        let circles = [circle(100.0, 100.0), circle(140.0, 100.0)];
        let preds = [(110.0, 100.0), (112.0, 100.0), (130.0, 100.0)];
        let pairs = match_predictions(&preds, &circles);
        assert_eq!(pairs.len(), 2);
        let mut used: Vec<usize> = pairs.iter().map(|p| p.circle_index).collect();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 2);
    }

    #[test]
    fn greedy_takes_globally_closest_first() {
        // One circle, two predictions: the closer one wins.
        let pairs = match_predictions(&[(120.0, 100.0), (101.0, 100.0)], &[circle(100.0, 100.0)]);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].prediction, (101.0, 100.0));
    }

    #[test]
    fn match_count_is_permutation_invariant() {
        let circles = [circle(50.0, 50.0), circle(200.0, 60.0), circle(120.0, 180.0)];
        let preds = [(52.0, 55.0), (198.0, 58.0), (121.0, 179.0)];
        let mut rev = preds;
        rev.reverse();
        assert_eq!(
            match_predictions(&preds, &circles).len(),
            match_predictions(&rev, &circles).len()
        );
    }

    #[test]
    fn unreadable_answer_image_is_an_error() {
        let err = score_spotting_path(
            &[],
            Path::new("/nonexistent/answer.png"),
            10,
            &HoughParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CvError::AnswerImageUnreadable { .. }));
    }
}
