//! Textual guidance assembly and prompt bundles.
//!
//! Each setting (single / double / sequence) has a guidance template whose
//! first three guidelines are fixed; guideline 4 is the swappable answer
//! format line. Guidance always precedes the chain-of-thought line, which
//! precedes the task text.

mod template;

pub use template::{Template, TemplateError};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ImageData;
use crate::overlay::{encode_png, GridSpec, OverlayResult, Setting};

/// The zero-shot chain-of-thought trigger line.
pub const COT_LINE: &str = "Let's think step by step.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown setting: {0}")]
    UnknownSetting(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{setting} setting expects {expected} overlay result(s), got {got}")]
    ArityMismatch {
        setting: Setting,
        expected: String,
        got: usize,
    },
    #[error("method {0} bundles are assembled by the active-perception pipeline")]
    UnsupportedMethod(MethodTag),
}

/// Prompting method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum MethodTag {
    Naive,
    Cot,
    Scaffold,
    ScaffoldCot,
    ScaffoldApPhase1,
    ScaffoldApPhase2,
}

impl MethodTag {
    pub fn is_scaffolded(&self) -> bool {
        !matches!(self, MethodTag::Naive | MethodTag::Cot)
    }

    pub fn uses_cot(&self) -> bool {
        matches!(self, MethodTag::Cot | MethodTag::ScaffoldCot)
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodTag::Naive => "naive",
            MethodTag::Cot => "cot",
            MethodTag::Scaffold => "scaffold",
            MethodTag::ScaffoldCot => "scaffold_cot",
            MethodTag::ScaffoldApPhase1 => "scaffold_ap_phase1",
            MethodTag::ScaffoldApPhase2 => "scaffold_ap_phase2",
        })
    }
}

/// One model call's worth of text plus ordered image attachments.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub text: String,
    pub images: Vec<ImageData>,
    pub setting: Setting,
    pub method_tag: MethodTag,
}

/// The loaded template files: three guidance settings plus the locate,
/// follow-up, judge, and keyword-extraction prompts.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub single: Template,
    pub double: Template,
    pub sequence: Template,
    pub locate: Template,
    pub followup: Template,
    pub judge: Template,
    pub extract: Template,
}

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            single: Template::new("single", include_str!("../../templates/single.txt")),
            double: Template::new("double", include_str!("../../templates/double.txt")),
            sequence: Template::new("sequence", include_str!("../../templates/sequence.txt")),
            locate: Template::new("locate", include_str!("../../templates/locate.txt")),
            followup: Template::new("followup", include_str!("../../templates/followup.txt")),
            judge: Template::new("judge", include_str!("../../templates/judge.txt")),
            extract: Template::new("extract", include_str!("../../templates/extract.txt")),
        }
    }

    /// Loads `{single,double,sequence,locate,followup,judge,extract}.txt`
    /// from a directory, falling back to the builtin for missing optional
    /// files is NOT done: all seven must exist.
    pub fn load(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let read = |name: &str| -> Result<Template, TemplateError> {
            let path = dir.join(format!("{name}.txt"));
            let body = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(Template::new(name, body))
        };
        Ok(TemplateSet {
            single: read("single")?,
            double: read("double")?,
            sequence: read("sequence")?,
            locate: read("locate")?,
            followup: read("followup")?,
            judge: read("judge")?,
            extract: read("extract")?,
        })
    }

    fn guidance(&self, setting: Setting) -> &Template {
        match setting {
            Setting::Single => &self.single,
            Setting::Double => &self.double,
            Setting::Sequence => &self.sequence,
        }
    }
}

/// Guideline 4 as it appears in each setting's stock template.
pub fn default_answer_format(setting: Setting) -> &'static str {
    match setting {
        Setting::Single => {
            "Finally, conclude your answer in format [[ANSWER]], such as [[A]], [[B]], [[C]] or [[D]]."
        }
        Setting::Double => {
            "Finally, you must conclude your answer in format [[ANSWER]], such as [[A]] or [[B]]."
        }
        Setting::Sequence => "you need to keep your descriptions concise and clear.",
    }
}

/// Answer format line used in phase 1 of the active-perception loop, where
/// the model is asked for coordinates instead of an answer.
pub const LOCATE_ANSWER_FORMAT: &str =
    "Finally, conclude the coordinates in format [[(x,y)]] in the end.";

/// Prepends the zero-shot CoT trigger. Not idempotent by design; callers
/// decide when to apply it.
pub fn compose_with_cot(task_text: &str) -> String {
    format!("{COT_LINE}\n{task_text}")
}

/// Stateless prompt builder over a template set.
#[derive(Debug, Clone)]
pub struct Prompter {
    templates: TemplateSet,
}

impl Default for Prompter {
    fn default() -> Self {
        Prompter::new(TemplateSet::builtin())
    }
}

impl Prompter {
    pub fn new(templates: TemplateSet) -> Self {
        Prompter { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Renders the guidance for a setting with the grid shape and the
    /// answer format line substituted. Guidelines 1-3 are never altered.
    pub fn build_guidance(
        &self,
        setting: Setting,
        h: u32,
        w: u32,
        answer_format_line: &str,
    ) -> Result<String, PromptError> {
        let rendered = self.templates.guidance(setting).render(&[
            ("HEIGHT", &h.to_string()),
            ("WIDTH", &w.to_string()),
            ("ANSWER_FORMAT", answer_format_line),
        ])?;
        Ok(rendered.trim_end().to_string())
    }

    /// Phase-1 active-perception prompt: locate, don't answer.
    pub fn build_locate_prompt(&self, question: &str) -> Result<String, PromptError> {
        Ok(self
            .templates
            .locate
            .render(&[("QUESTION", question)])?
            .trim_end()
            .to_string())
    }

    /// Phase-2 active-perception prompt around the cropped images.
    pub fn build_followup_prompt(
        &self,
        question: &str,
        options_text: &str,
    ) -> Result<String, PromptError> {
        Ok(self
            .templates
            .followup
            .render(&[("QUESTION", question), ("OPTIONS", options_text)])?
            .trim_end()
            .to_string())
    }

    /// Judge prompt comparing an answer against the reference.
    pub fn build_judge_prompt(
        &self,
        question: &str,
        reference: &str,
        answer: &str,
    ) -> Result<String, PromptError> {
        Ok(self
            .templates
            .judge
            .render(&[
                ("QUESTION", question),
                ("REFERENCE", reference),
                ("ANSWER", answer),
            ])?
            .trim_end()
            .to_string())
    }

    /// Keyword-extraction prompt for sequence descriptions.
    pub fn build_extract_prompt(&self, description: &str) -> Result<String, PromptError> {
        Ok(self
            .templates
            .extract
            .render(&[("DESCRIPTION", description)])?
            .trim_end()
            .to_string())
    }

    /// Bundles without any overlay: original images and the task text,
    /// optionally with the CoT line.
    pub fn naive_bundle(
        &self,
        task_text: &str,
        images: &[image::RgbImage],
        setting: Setting,
        method_tag: MethodTag,
    ) -> Result<PromptBundle, PromptError> {
        check_arity(setting, images.len())?;
        let text = if method_tag.uses_cot() {
            compose_with_cot(task_text)
        } else {
            task_text.to_string()
        };
        Ok(PromptBundle {
            text,
            images: images.iter().map(attach).collect(),
            setting,
            method_tag,
        })
    }

    /// Assembles text and ordered attachments for one model call.
    ///
    /// Composition order is fixed: guidance, then the CoT line when the
    /// method uses it, then the task text. Single-image scaffold bundles
    /// carry `[original, overlaid]`; pairs and sequences carry only the
    /// overlaid images.
    pub fn build_bundle(
        &self,
        task_text: &str,
        answer_format_line: Option<&str>,
        grid: &GridSpec,
        overlays: &[OverlayResult],
        setting: Setting,
        method_tag: MethodTag,
    ) -> Result<PromptBundle, PromptError> {
        check_arity(setting, overlays.len())?;
        if method_tag == MethodTag::ScaffoldApPhase2 {
            return Err(PromptError::UnsupportedMethod(method_tag));
        }
        if !method_tag.is_scaffolded() {
            let text = if method_tag.uses_cot() {
                compose_with_cot(task_text)
            } else {
                task_text.to_string()
            };
            return Ok(PromptBundle {
                text,
                images: overlays.iter().map(|o| attach(&o.original)).collect(),
                setting,
                method_tag,
            });
        }

        let answer_line = match method_tag {
            MethodTag::ScaffoldApPhase1 => LOCATE_ANSWER_FORMAT.to_string(),
            _ => answer_format_line
                .unwrap_or(default_answer_format(setting))
                .to_string(),
        };
        let guidance = self.build_guidance(setting, grid.h, grid.w, &answer_line)?;
        let tail = match method_tag {
            MethodTag::ScaffoldApPhase1 => self.build_locate_prompt(task_text)?,
            m if m.uses_cot() => compose_with_cot(task_text),
            _ => task_text.to_string(),
        };
        let text = format!("{guidance}\n\n{tail}");

        let mut images = Vec::new();
        match setting {
            Setting::Single => {
                if overlays[0].original_retained {
                    images.push(attach(&overlays[0].original));
                }
                images.push(attach(&overlays[0].overlaid));
            }
            Setting::Double | Setting::Sequence => {
                images.extend(overlays.iter().map(|o| attach(&o.overlaid)));
            }
        }
        Ok(PromptBundle {
            text,
            images,
            setting,
            method_tag,
        })
    }
}

fn check_arity(setting: Setting, got: usize) -> Result<(), PromptError> {
    let ok = match setting {
        Setting::Single => got == 1,
        Setting::Double => got == 2,
        Setting::Sequence => got >= 2,
    };
    if ok {
        Ok(())
    } else {
        Err(PromptError::ArityMismatch {
            setting,
            expected: match setting {
                Setting::Single => "1".into(),
                Setting::Double => "2".into(),
                Setting::Sequence => ">= 2".into(),
            },
            got,
        })
    }
}

fn attach(img: &image::RgbImage) -> ImageData {
    ImageData::png(encode_png(img))
}
