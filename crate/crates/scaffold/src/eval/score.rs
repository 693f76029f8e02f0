//! Metric primitives: exact-match accuracy, all-four-correct group score,
//! judge ratings, and object/behavior keyword F1.

use crate::client::{Client, ClientError, Part};
use crate::parsing::{extract_rating, normalize_token, Extraction};
use crate::prompting::Prompter;

use super::EvalError;

/// Exact match after normalization (letters, yes/no, true/false).
pub fn score_accuracy(parsed_token: &str, ground_truth: &str) -> f64 {
    if normalize_token(parsed_token) == normalize_token(ground_truth) {
        1.0
    } else {
        0.0
    }
}

/// 1 iff all four individual scores in a group are 1.
pub fn score_group(scores: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != 4 {
        return Err(EvalError::IncompleteGroup {
            group_id: "<scores>".into(),
            count: scores.len(),
        });
    }
    Ok(if scores.iter().all(|&s| s == 1.0) {
        1.0
    } else {
        0.0
    })
}

/// Sends the judge prompt and extracts the `{0, 0.5, 1}` rating. One retry
/// with a format reminder; after that the answer scores 0 and the verdict
/// is flagged.
pub fn judge_score(
    question: &str,
    reference: &str,
    answer: &str,
    judge_client: &Client,
    prompter: &Prompter,
) -> Result<(f64, Vec<String>), ClientError> {
    let prompt = prompter
        .build_judge_prompt(question, reference, answer)
        .map_err(|e| ClientError::Provider(e.to_string()))?;
    let first = judge_client.send(&judge_client.user_request(vec![Part::Text(prompt.clone())]))?;
    if let Ok(Extraction::Rating { value, .. }) = extract_rating(&first.text) {
        return Ok((value, Vec::new()));
    }
    let reminder = format!(
        "{prompt}\n\nRemember: you must end with \"Rating: [[0]]\", \"Rating: [[0.5]]\", or \"Rating: [[1]]\"."
    );
    let second = judge_client.send(&judge_client.user_request(vec![Part::Text(reminder)]))?;
    match extract_rating(&second.text) {
        Ok(Extraction::Rating { value, .. }) => Ok((value, vec!["judge_retried".into()])),
        _ => Ok((0.0, vec!["judge_unparseable".into()])),
    }
}

fn lower_counts(items: &[String]) -> std::collections::HashMap<String, usize> {
    let mut counts = std::collections::HashMap::new();
    for item in items {
        let key = item.trim().to_ascii_lowercase();
        if !key.is_empty() {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Multiset F1 between keyword lists after lowercasing. Empty vs empty is
/// defined as 1; empty vs non-empty is 0.
pub fn multiset_f1(pred: &[String], truth: &[String]) -> f64 {
    let p = lower_counts(pred);
    let t = lower_counts(truth);
    let np: usize = p.values().sum();
    let nt: usize = t.values().sum();
    if np == 0 && nt == 0 {
        return 1.0;
    }
    if np == 0 || nt == 0 {
        return 0.0;
    }
    let inter: usize = p
        .iter()
        .map(|(k, c)| c.min(t.get(k).unwrap_or(&0)))
        .sum();
    if inter == 0 {
        return 0.0;
    }
    let precision = inter as f64 / np as f64;
    let recall = inter as f64 / nt as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Mean of the object F1 and the behavior F1.
pub fn mementos_f1(
    pred_objects: &[String],
    gt_objects: &[String],
    pred_behaviors: &[String],
    gt_behaviors: &[String],
) -> f64 {
    (multiset_f1(pred_objects, gt_objects) + multiset_f1(pred_behaviors, gt_behaviors)) / 2.0
}

/// Parses the keyword-extraction reply: `Objects: [[a, b]]` and
/// `Behaviors: [[c]]` lines; a missing line or `[[]]` is an empty list.
pub fn parse_keyword_lists(text: &str) -> (Vec<String>, Vec<String>) {
    let mut objects = Vec::new();
    let mut behaviors = Vec::new();
    for line in text.lines() {
        let lower = line.trim_start().to_ascii_lowercase();
        let target = if lower.starts_with("objects:") {
            &mut objects
        } else if lower.starts_with("behaviors:") {
            &mut behaviors
        } else {
            continue;
        };
        if let (Some(start), Some(end)) = (line.find("[["), line.rfind("]]")) {
            if start + 2 <= end {
                *target = line[start + 2..end]
                    .split(',')
                    .map(|s| s.trim().to_ascii_lowercase())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
        }
    }
    (objects, behaviors)
}

/// Runs the keyword-extraction prompt over a description and parses the
/// two lists back out.
pub fn extract_keywords(
    description: &str,
    judge_client: &Client,
    prompter: &Prompter,
) -> Result<(Vec<String>, Vec<String>), ClientError> {
    let prompt = prompter
        .build_extract_prompt(description)
        .map_err(|e| ClientError::Provider(e.to_string()))?;
    let resp = judge_client.send(&judge_client.user_request(vec![Part::Text(prompt)]))?;
    Ok(parse_keyword_lists(&resp.text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_normalizes_before_matching() {
        assert_eq!(score_accuracy("A", "A"), 1.0);
        assert_eq!(score_accuracy("yes", "Yes"), 1.0);
        assert_eq!(score_accuracy("true", "TRUE"), 1.0);
        assert_eq!(score_accuracy("a", "A"), 1.0);
        assert_eq!(score_accuracy("B", "A"), 0.0);
        assert_eq!(score_accuracy("", "B"), 0.0);
    }

    #[test]
    fn group_requires_all_four() {
        assert_eq!(score_group(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(score_group(&[1.0, 1.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(score_group(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn f1_matches_hand_computation() {
        // {a,b} vs {b,c}: precision 1/2, recall 1/2, F1 1/2.
        assert!((multiset_f1(&v(&["a", "b"]), &v(&["b", "c"])) - 0.5).abs() < 1e-12);
        // identical lists.
        assert_eq!(multiset_f1(&v(&["x", "y"]), &v(&["y", "x"])), 1.0);
        // multiset counts matter: pred has one "a", truth has two.
        let f1 = multiset_f1(&v(&["a"]), &v(&["a", "a"]));
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        // disjoint.
        assert_eq!(multiset_f1(&v(&["a"]), &v(&["b"])), 0.0);
        // empty cases.
        assert_eq!(multiset_f1(&[], &[]), 1.0);
        assert_eq!(multiset_f1(&[], &v(&["a"])), 0.0);
        assert_eq!(multiset_f1(&v(&["a"]), &[]), 0.0);
    }

    #[test]
    fn mementos_averages_the_two_lists() {
        let score = mementos_f1(&v(&["a", "b"]), &v(&["b", "c"]), &v(&["walk"]), &v(&["walk"]));
        assert!((score - 0.75).abs() < 1e-12);
        assert_eq!(mementos_f1(&v(&["a"]), &v(&["a"]), &v(&["b"]), &v(&["b"])), 1.0);
        assert_eq!(mementos_f1(&[], &v(&["a"]), &v(&["b"]), &v(&["b"])), 0.5);
    }

    #[test]
    fn keyword_lines_parse() {
        let (obj, beh) = parse_keyword_lists("Objects: [[Cat, dog ]]\nBehaviors: [[running]]");
        assert_eq!(obj, v(&["cat", "dog"]));
        assert_eq!(beh, v(&["running"]));
        let (obj, beh) = parse_keyword_lists("Objects: [[]]\nBehaviors: [[]]");
        assert!(obj.is_empty() && beh.is_empty());
        let (obj, beh) = parse_keyword_lists("no lists at all");
        assert!(obj.is_empty() && beh.is_empty());
    }
}
