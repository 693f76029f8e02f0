//! Layered run configuration: built-in defaults, then the TOML config
//! file, then command-line flags, highest last.

use std::path::PathBuf;

use serde::Deserialize;

use crate::overlay::{ColorStrategy, CoordinateFormat, GridSpec, PerturbationSpec};

/// `[provider]`, `[grid]`, and `[run]` tables of the config file. Every
/// field is optional; missing values fall through to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: Option<u32>,
    pub w: Option<u32>,
    pub format: Option<CoordinateFormat>,
    pub color: Option<ColorStrategy>,
    pub dot_radius: Option<u32>,
    pub label_px: Option<u32>,
    pub perturb: Option<bool>,
    pub sigma_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub concurrency: Option<usize>,
    pub rate_limit_per_sec: Option<f64>,
    pub budget: Option<u64>,
    pub max_tokens: Option<u32>,
    pub retries: Option<u32>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub answer_format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

/// Flag-level values the CLI may or may not have provided.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub h: Option<u32>,
    pub w: Option<u32>,
    pub format: Option<CoordinateFormat>,
    pub color: Option<ColorStrategy>,
    pub dot_radius: Option<u32>,
    pub label_px: Option<u32>,
    pub perturb: bool,
    pub sigma_fraction: Option<f64>,
    pub concurrency: Option<usize>,
    pub rate_limit: Option<f64>,
    pub budget: Option<u64>,
    pub max_tokens: Option<u32>,
    pub retries: Option<u32>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub answer_format: Option<String>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub endpoint: String,
    pub model: String,
    pub grid: GridSpec,
    pub concurrency: usize,
    pub rate_limit_per_sec: f64,
    pub budget: Option<u64>,
    pub max_tokens: u32,
    pub retries: u32,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub answer_format: Option<String>,
}

/// Precedence: CLI flag, then config file, then built-in default.
pub fn resolve(cli: &CliOverrides, file: &FileConfig) -> Settings {
    let seed = cli.seed.or(file.run.seed).unwrap_or(0);
    let perturb = cli.perturb || file.grid.perturb.unwrap_or(false);
    let grid = GridSpec {
        h: cli.h.or(file.grid.h).unwrap_or(6),
        w: cli.w.or(file.grid.w).unwrap_or(6),
        coordinate_format: cli
            .format
            .or(file.grid.format)
            .unwrap_or(CoordinateFormat::Cartesian2d),
        color_strategy: cli
            .color
            .or(file.grid.color)
            .unwrap_or(ColorStrategy::Binary),
        perturbation: perturb.then(|| PerturbationSpec {
            seed,
            sigma_fraction: cli
                .sigma_fraction
                .or(file.grid.sigma_fraction)
                .unwrap_or(0.25),
        }),
        dot_radius_px: cli.dot_radius.or(file.grid.dot_radius),
        label_px: cli.label_px.or(file.grid.label_px),
    };
    let cache_dir = cli
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os("SCAFFOLD_CACHE_DIR").map(PathBuf::from))
        .or_else(|| file.run.cache_dir.clone());
    Settings {
        endpoint: cli
            .endpoint
            .clone()
            .or_else(|| file.provider.endpoint.clone())
            .unwrap_or_else(|| "https://api.openai.com/v1".into()),
        model: cli
            .model
            .clone()
            .or_else(|| file.provider.model.clone())
            .unwrap_or_else(|| "gpt-4-vision-preview".into()),
        grid,
        concurrency: cli.concurrency.or(file.run.concurrency).unwrap_or(1),
        rate_limit_per_sec: cli
            .rate_limit
            .or(file.run.rate_limit_per_sec)
            .unwrap_or(1.0),
        budget: cli.budget.or(file.run.budget),
        max_tokens: cli.max_tokens.or(file.run.max_tokens).unwrap_or(1024),
        retries: cli.retries.or(file.run.retries).unwrap_or(3),
        seed,
        cache_dir,
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| file.run.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        answer_format: cli
            .answer_format
            .clone()
            .or_else(|| file.run.answer_format.clone()),
    }
}
