//! The `scaffold` command line: overlay rendering, prompt preview,
//! benchmark runs, ablation sweeps, and the active-perception loop.
//!
//! Exit codes: 0 success (including runs with per-sample failures),
//! 1 runtime failure, 2 usage or configuration error. All outputs land
//! under the `--out` directory.

mod config;

pub use config::{resolve, CliOverrides, FileConfig, Settings};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::client::{Client, EchoProvider, MockProvider, OpenAiProvider, Provider};
use crate::eval::{
    load_manifest, run_samples, EvalError, Metric, Report, RunContext, Sample,
};
use crate::overlay::{
    overlay_for_setting, sidecar_json, ColorStrategy, CoordinateFormat, Setting,
};
use crate::pipelines::{ablation_sweep, run_perceive, size_grid_csv, AblationAxis, SweepResult};
use crate::prompting::{compose_with_cot, default_answer_format, MethodTag, Prompter, TemplateSet};

#[derive(Debug, Parser)]
#[command(name = "scaffold", version, about = "Dot-matrix visual prompting toolkit")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for perturbation and sample shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Template directory overriding the built-in prompts.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Response cache directory (also: SCAFFOLD_CACHE_DIR).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Offline mode: answer from a fixture directory instead of the network.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
    /// Offline mode: echo each sample's ground truth back.
    #[arg(long, global = true)]
    mock_echo: bool,
    /// Provider API base URL.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Model identifier sent to the provider.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Worker threads / max in-flight requests.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Ceiling on provider call attempts.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Requests per second against the provider.
    #[arg(long, global = true)]
    rate_limit: Option<f64>,
    #[arg(long, global = true)]
    max_tokens: Option<u32>,
    #[arg(long, global = true)]
    retries: Option<u32>,
    /// Replacement for guideline 4 (the answer format line).
    #[arg(long, global = true)]
    answer_format: Option<String>,
    /// Shuffle sample processing order (seeded).
    #[arg(long, global = true)]
    shuffle: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct GridArgs {
    /// Grid rows.
    #[arg(long)]
    h: Option<u32>,
    /// Grid columns.
    #[arg(long)]
    w: Option<u32>,
    /// Coordinate label format.
    #[arg(long, value_enum)]
    format: Option<CoordinateFormat>,
    /// Dot coloring strategy.
    #[arg(long, value_enum)]
    color: Option<ColorStrategy>,
    #[arg(long)]
    dot_radius: Option<u32>,
    #[arg(long)]
    label_px: Option<u32>,
    /// Apply seeded Gaussian dot perturbation.
    #[arg(long)]
    perturb: bool,
    /// Perturbation sigma as a fraction of the dot spacing.
    #[arg(long)]
    sigma_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render dot-matrix overlays and sidecar JSON maps.
    Overlay {
        images: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "single")]
        setting: Setting,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print the assembled guidance and task text.
    Prompt {
        #[arg(long, value_enum)]
        setting: Setting,
        #[arg(long)]
        cot: bool,
        task: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run a benchmark manifest and write a report.
    Run {
        manifest: PathBuf,
        #[arg(long, value_enum)]
        method: MethodTag,
        /// Override the metric recorded in the manifest.
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Sweep a grid attribute and write per-cell reports.
    Ablate {
        manifest: PathBuf,
        /// One of: matrix-size, color, format, perturbation.
        #[arg(long)]
        axis: String,
        /// Smallest matrix size (matrix-size axis).
        #[arg(long)]
        min: Option<u32>,
        /// Largest matrix size (matrix-size axis).
        #[arg(long)]
        max: Option<u32>,
        #[arg(long, value_enum, default_value = "scaffold")]
        method: MethodTag,
        /// Repetitions per cell, averaged.
        #[arg(long)]
        runs: Option<u32>,
        /// Named harness preset (ablation-150x2: two runs, averaged).
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Two-phase locate-crop-answer runs with Not Found / Success rates.
    Perceive {
        manifest: PathBuf,
        /// Crop half-extent in grid cells.
        #[arg(long)]
        cells: Option<u32>,
        #[command(flatten)]
        grid: GridArgs,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Io { .. } | EvalError::Client(_) => runtime(e.to_string()),
        _ => usage(e.to_string()),
    }
}

/// Parses and executes one invocation, writing human output to `out`.
/// Returns the process exit code.
pub fn run_cli(args: &[String], out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("scaffold: {}", e.message());
            e.code()
        }
    }
}

/// Entry point for the binary.
pub fn main_entry() -> std::process::ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let mut stdout = std::io::stdout();
    std::process::ExitCode::from(run_cli(&args, &mut stdout).min(255) as u8)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file_config = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(usage)?,
        None => FileConfig::default(),
    };
    let grid_args = match &cli.command {
        Command::Overlay { grid, .. }
        | Command::Prompt { grid, .. }
        | Command::Run { grid, .. }
        | Command::Ablate { grid, .. }
        | Command::Perceive { grid, .. } => grid.clone(),
    };
    let overrides = CliOverrides {
        endpoint: cli.endpoint.clone(),
        model: cli.model.clone(),
        h: grid_args.h,
        w: grid_args.w,
        format: grid_args.format,
        color: grid_args.color,
        dot_radius: grid_args.dot_radius,
        label_px: grid_args.label_px,
        perturb: grid_args.perturb,
        sigma_fraction: grid_args.sigma_fraction,
        concurrency: cli.concurrency,
        rate_limit: cli.rate_limit,
        budget: cli.budget,
        max_tokens: cli.max_tokens,
        retries: cli.retries,
        seed: cli.seed,
        cache_dir: cli.cache_dir.clone(),
        out_dir: cli.out.clone(),
        answer_format: cli.answer_format.clone(),
    };
    let settings = resolve(&overrides, &file_config);
    let prompter = match &cli.templates {
        Some(dir) => Prompter::new(TemplateSet::load(dir).map_err(|e| usage(e.to_string()))?),
        None => Prompter::default(),
    };

    match cli.command {
        Command::Overlay {
            ref images,
            setting,
            ..
        } => cmd_overlay(images, setting, &settings, out),
        Command::Prompt {
            setting,
            cot,
            ref task,
            ..
        } => cmd_prompt(setting, cot, task.as_deref(), &settings, &prompter, out),
        Command::Run {
            ref manifest,
            method,
            metric,
            ..
        } => cmd_run(manifest, method, metric, &cli, &settings, &prompter, out),
        Command::Ablate {
            ref manifest,
            ref axis,
            min,
            max,
            method,
            runs,
            ref preset,
            ..
        } => cmd_ablate(
            manifest,
            axis,
            min,
            max,
            method,
            runs,
            preset.as_deref(),
            &cli,
            &settings,
            &prompter,
            out,
        ),
        Command::Perceive {
            ref manifest,
            cells,
            ..
        } => cmd_perceive(manifest, cells.unwrap_or(1), &cli, &settings, &prompter, out),
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_overlay(
    images: &[PathBuf],
    setting: Setting,
    settings: &Settings,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if images.is_empty() {
        return Err(usage("overlay needs at least one image"));
    }
    let mut rasters = Vec::new();
    for path in images {
        let img = image::open(path)
            .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?
            .to_rgb8();
        rasters.push(img);
    }
    let results = overlay_for_setting(&rasters, &settings.grid, setting)
        .map_err(|e| usage(e.to_string()))?;
    ensure_dir(&settings.out_dir)?;
    for (path, result) in images.iter().zip(&results) {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let png_path = settings.out_dir.join(format!("{stem}.scaffold.png"));
        let json_path = settings.out_dir.join(format!("{stem}.scaffold.json"));
        let mut png_bytes = Vec::new();
        result
            .overlaid
            .write_to(
                &mut std::io::Cursor::new(&mut png_bytes),
                image::ImageFormat::Png,
            )
            .map_err(|e| runtime(e.to_string()))?;
        write_file(&png_path, &png_bytes)?;
        write_file(&json_path, sidecar_json(result, &settings.grid).as_bytes())?;
        let _ = writeln!(
            out,
            "wrote {} ({} dots, h={} w={})",
            png_path.display(),
            result.placements.len(),
            settings.grid.h,
            settings.grid.w
        );
    }
    Ok(())
}

fn cmd_prompt(
    setting: Setting,
    cot: bool,
    task: Option<&str>,
    settings: &Settings,
    prompter: &Prompter,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let answer_line = settings
        .answer_format
        .clone()
        .unwrap_or_else(|| default_answer_format(setting).to_string());
    let guidance = prompter
        .build_guidance(setting, settings.grid.h, settings.grid.w, &answer_line)
        .map_err(|e| usage(e.to_string()))?;
    let text = match (cot, task) {
        (true, task) => format!("{guidance}\n\n{}", compose_with_cot(task.unwrap_or(""))),
        (false, Some(task)) => format!("{guidance}\n\n{task}"),
        (false, None) => guidance,
    };
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn build_client(
    cli: &Cli,
    settings: &Settings,
    samples: &[Sample],
) -> Result<Client, CliError> {
    let provider: Arc<dyn Provider> = if let Some(fixtures) = &cli.mock {
        Arc::new(
            MockProvider::from_fixture_dir(fixtures)
                .map_err(|e| usage(format!("mock fixtures: {e}")))?,
        )
    } else if cli.mock_echo {
        Arc::new(EchoProvider::new(
            samples
                .iter()
                .map(|s| (s.question.clone(), s.ground_truth.text()))
                .collect(),
        ))
    } else {
        let key = std::env::var("SCAFFOLD_API_KEY")
            .map_err(|_| usage("SCAFFOLD_API_KEY is not set; use --mock or --mock-echo for offline runs"))?;
        Arc::new(OpenAiProvider::new(settings.endpoint.clone(), key))
    };
    let offline = cli.mock.is_some() || cli.mock_echo;
    let mut builder = Client::builder(provider)
        .settings(crate::client::ClientSettings {
            model_id: settings.model.clone(),
            temperature: 0.0,
            max_tokens: settings.max_tokens,
        })
        .concurrency(settings.concurrency)
        .budget(settings.budget)
        .retries(settings.retries);
    // Offline providers skip the token bucket unless one was asked for.
    let rate = if offline && cli.rate_limit.is_none() {
        None
    } else {
        Some(settings.rate_limit_per_sec)
    };
    builder = builder.rate_limit(rate);
    if let Some(dir) = &settings.cache_dir {
        builder = builder.cache_dir(dir.clone());
    }
    Ok(builder.build())
}

fn snapshot(settings: &Settings, method: &str, manifest: &Path, offline: bool) -> serde_json::Value {
    serde_json::json!({
        "method": method,
        "manifest": manifest.display().to_string(),
        "grid": settings.grid,
        "model": settings.model,
        "seed": settings.seed,
        "concurrency": settings.concurrency,
        "max_tokens": settings.max_tokens,
        "offline": offline,
    })
}

fn make_context<'a>(
    cli: &Cli,
    settings: &Settings,
    client: &'a Client,
    prompter: &'a Prompter,
    config_snapshot: serde_json::Value,
) -> RunContext<'a> {
    let mut ctx = RunContext::new(client, prompter);
    ctx.options.concurrency = settings.concurrency;
    ctx.options.seed = settings.seed;
    ctx.options.shuffle = cli.shuffle;
    ctx.options.answer_format = settings.answer_format.clone();
    ctx.options.config_snapshot = config_snapshot;
    ctx
}

fn load_manifest_checked(manifest: &Path) -> Result<Vec<Sample>, CliError> {
    if !manifest.exists() {
        return Err(usage(format!("manifest not found: {}", manifest.display())));
    }
    load_manifest(manifest).map_err(eval_error)
}

fn manifest_name(manifest: &Path) -> String {
    manifest
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest.display().to_string())
}

fn write_report(report: &Report, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    write_file(path, report.to_json().as_bytes())?;
    let _ = writeln!(out, "{}", report.table());
    let _ = writeln!(out, "report: {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    manifest: &Path,
    method: MethodTag,
    metric: Option<Metric>,
    cli: &Cli,
    settings: &Settings,
    prompter: &Prompter,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut samples = load_manifest_checked(manifest)?;
    if let Some(metric) = metric {
        for s in &mut samples {
            s.metric = metric;
        }
    }
    let client = build_client(cli, settings, &samples)?;
    let offline = cli.mock.is_some() || cli.mock_echo;
    let ctx = make_context(
        cli,
        settings,
        &client,
        prompter,
        snapshot(settings, &method.to_string(), manifest, offline),
    );
    let report = run_samples(
        &samples,
        &manifest_name(manifest),
        method,
        &settings.grid,
        &ctx,
    )
    .map_err(eval_error)?;
    ensure_dir(&settings.out_dir)?;
    for verdict in &report.verdicts {
        if report.metric == "spot_accuracy" {
            if let Some(detail) = &verdict.detail {
                write_file(
                    &settings
                        .out_dir
                        .join("spotting")
                        .join(format!("{}.json", verdict.sample_id)),
                    serde_json::to_string_pretty(detail)
                        .expect("detail serializes")
                        .as_bytes(),
                )?;
            }
        }
    }
    write_report(&report, &settings.out_dir.join("report.json"), out)
}

fn parse_axis(
    axis: &str,
    min: Option<u32>,
    max: Option<u32>,
    seed: u64,
) -> Result<AblationAxis, CliError> {
    match axis {
        "matrix-size" | "matrix_size" => {
            let lo = min.unwrap_or(3);
            let hi = max.unwrap_or(7);
            if lo < 1 || hi < lo {
                return Err(usage(format!("invalid matrix size range {lo}..{hi}")));
            }
            Ok(AblationAxis::MatrixSize {
                h_min: lo,
                h_max: hi,
                w_min: lo,
                w_max: hi,
            })
        }
        "color" => Ok(AblationAxis::ColorStrategy(vec![
            ColorStrategy::Binary,
            ColorStrategy::UniformBlack,
            ColorStrategy::UniformWhite,
            ColorStrategy::Complementary,
        ])),
        "format" | "coordinate-format" => Ok(AblationAxis::CoordinateFormat(vec![
            CoordinateFormat::Cartesian2d,
            CoordinateFormat::Alphabetic,
            CoordinateFormat::OneDimensional,
            CoordinateFormat::PixelAbsolute,
        ])),
        "perturbation" => Ok(AblationAxis::Perturbation(vec![None, Some(seed)])),
        other => Err(usage(format!(
            "unknown axis {other}; expected matrix-size, color, format, or perturbation"
        ))),
    }
}

fn write_sweep(
    sweep: &SweepResult,
    axis: &AblationAxis,
    settings: &Settings,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let results_dir = settings.out_dir.join("results").join(&sweep.axis);
    for cell in &sweep.cells {
        let cell_dir = results_dir.join(&cell.label);
        if cell.reports.len() == 1 {
            write_file(
                &cell_dir.join("report.json"),
                cell.reports[0].to_json().as_bytes(),
            )?;
        } else {
            for (i, report) in cell.reports.iter().enumerate() {
                write_file(
                    &cell_dir.join(format!("run{}", i + 1)).join("report.json"),
                    report.to_json().as_bytes(),
                )?;
            }
        }
        let _ = writeln!(out, "{:<24} {:>7.1}", cell.label, cell.mean_aggregate);
    }
    let summary = serde_json::json!({
        "axis": sweep.axis,
        "cells": sweep
            .cells
            .iter()
            .map(|c| serde_json::json!({"value": c.label, "aggregate": c.mean_aggregate}))
            .collect::<Vec<_>>(),
    });
    write_file(
        &results_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)
            .expect("summary serializes")
            .as_bytes(),
    )?;
    if let Some(csv) = size_grid_csv(sweep, axis) {
        let csv_path = settings.out_dir.join("matrix_size_grid.csv");
        write_file(&csv_path, csv.as_bytes())?;
        let _ = writeln!(out, "{csv}");
        let _ = writeln!(out, "grid csv: {}", csv_path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    manifest: &Path,
    axis: &str,
    min: Option<u32>,
    max: Option<u32>,
    method: MethodTag,
    runs: Option<u32>,
    preset: Option<&str>,
    cli: &Cli,
    settings: &Settings,
    prompter: &Prompter,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let runs = match preset {
        Some("ablation-150x2") => 2,
        Some(other) => return Err(usage(format!("unknown preset {other}"))),
        None => runs.unwrap_or(1),
    };
    let axis = parse_axis(axis, min, max, settings.seed)?;
    let samples = load_manifest_checked(manifest)?;
    let client = build_client(cli, settings, &samples)?;
    let offline = cli.mock.is_some() || cli.mock_echo;
    let ctx = make_context(
        cli,
        settings,
        &client,
        prompter,
        snapshot(settings, &method.to_string(), manifest, offline),
    );
    let sweep = ablation_sweep(
        &samples,
        &manifest_name(manifest),
        &axis,
        method,
        &settings.grid,
        &ctx,
        runs,
    )
    .map_err(|e| runtime(e.to_string()))?;
    write_sweep(&sweep, &axis, settings, out)
}

fn cmd_perceive(
    manifest: &Path,
    cells: u32,
    cli: &Cli,
    settings: &Settings,
    prompter: &Prompter,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let samples = load_manifest_checked(manifest)?;
    let client = build_client(cli, settings, &samples)?;
    let offline = cli.mock.is_some() || cli.mock_echo;
    let mut snapshot = snapshot(settings, "scaffold_ap", manifest, offline);
    snapshot["cells"] = serde_json::json!(cells);
    let ctx = make_context(cli, settings, &client, prompter, snapshot);
    let report = run_perceive(
        &samples,
        &manifest_name(manifest),
        &settings.grid,
        &ctx,
        cells,
    )
    .map_err(|e| match e {
        crate::pipelines::PipelineError::Eval(e) => eval_error(e),
        other => runtime(other.to_string()),
    })?;
    ensure_dir(&settings.out_dir)?;
    write_report(&report, &settings.out_dir.join("report.json"), out)
}
