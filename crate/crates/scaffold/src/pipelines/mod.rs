//! Orchestration on top of the evaluation runner: the active-perception
//! locate-crop-answer loop and the ablation sweep harness.

mod ablate;
mod crop;
mod perceive;

pub use ablate::{ablation_sweep, size_grid_csv, AblationAxis, SweepCell, SweepResult};
pub use crop::{crop_regions, CropWindow};
pub use perceive::{active_perception_run, run_perceive, ApOutcome};

use thiserror::Error;

use crate::client::ClientError;
use crate::eval::EvalError;
use crate::overlay::OverlayError;
use crate::prompting::PromptError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no dot at grid coordinate ({x},{y})")]
    UnknownCoordinate { x: i64, y: i64 },
    #[error("{0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
