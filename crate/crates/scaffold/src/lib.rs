//! Coordinate-overlay visual prompting toolkit for multimodal chat models.
//!
//! The crate renders labeled dot matrices onto images so a vision-language
//! model can reference visual positions by coordinate, assembles the matching
//! textual guidance, talks to a chat endpoint (or an offline mock), parses
//! structured answers out of free-form responses, and scores benchmark runs.
//!
//! Module map:
//! - [`overlay`]: dot-grid geometry, coloring, labeling, perturbation, rendering.
//! - [`prompting`]: guidance templates and prompt bundles per method.
//! - [`parsing`]: answer/rating/coordinate/spot extraction and refusal detection.
//! - [`client`]: provider-agnostic chat client with disk cache, rate limit,
//!   concurrency gate, and a fixture-driven mock provider.
//! - [`eval`]: JSONL manifests, benchmark runner, metrics, reports.
//! - [`cvmetrics`]: from-scratch image filters and Hough circle detection for
//!   spotting-differences scoring.
//! - [`pipelines`]: the locate-crop-answer loop and ablation sweeps.
//! - [`cli`]: the `scaffold` command-line driver.

pub mod cli;
pub mod client;
pub mod cvmetrics;
pub mod eval;
pub mod overlay;
pub mod parsing;
pub mod pipelines;
pub mod prompting;

pub use overlay::{
    ColorStrategy, CoordinateFormat, DotColor, DotPlacement, GridSpec, OverlayResult,
    PerturbationSpec, Setting,
};
pub use prompting::{MethodTag, PromptBundle, Prompter, TemplateSet};
