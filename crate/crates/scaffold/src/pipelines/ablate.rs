//! Ablation sweeps over grid attributes: matrix size, coloring strategy,
//! coordinate format, and dot perturbation.
//!
//! Every cell runs the same samples in the same order with the same seed;
//! only the axis value differs between cells. The repeated-run preset
//! (`runs > 1`) salts the response cache per run and averages aggregates.

use serde_json::json;

use crate::eval::{run_samples, Report, RunContext, Sample};
use crate::overlay::{ColorStrategy, CoordinateFormat, GridSpec, PerturbationSpec};
use crate::prompting::MethodTag;

use super::PipelineError;

/// One swept attribute and the values it takes.
#[derive(Debug, Clone)]
pub enum AblationAxis {
    MatrixSize {
        h_min: u32,
        h_max: u32,
        w_min: u32,
        w_max: u32,
    },
    ColorStrategy(Vec<ColorStrategy>),
    CoordinateFormat(Vec<CoordinateFormat>),
    /// `None` = perturbation off; `Some(seed)` = Gaussian perturbation on.
    Perturbation(Vec<Option<u64>>),
}

impl AblationAxis {
    pub fn kind(&self) -> &'static str {
        match self {
            AblationAxis::MatrixSize { .. } => "matrix_size",
            AblationAxis::ColorStrategy(_) => "color_strategy",
            AblationAxis::CoordinateFormat(_) => "coordinate_format",
            AblationAxis::Perturbation(_) => "perturbation",
        }
    }

    /// Expands into `(label, grid)` cells by mutating the base spec.
    pub fn cells(&self, base: &GridSpec) -> Vec<(String, GridSpec)> {
        match self {
            AblationAxis::MatrixSize {
                h_min,
                h_max,
                w_min,
                w_max,
            } => {
                let mut out = Vec::new();
                for h in *h_min..=*h_max {
                    for w in *w_min..=*w_max {
                        let mut grid = base.clone();
                        grid.h = h;
                        grid.w = w;
                        out.push((format!("h{h}_w{w}"), grid));
                    }
                }
                out
            }
            AblationAxis::ColorStrategy(strategies) => strategies
                .iter()
                .map(|&strategy| {
                    let mut grid = base.clone();
                    grid.color_strategy = strategy;
                    (
                        serde_json::to_value(strategy)
                            .expect("serializes")
                            .as_str()
                            .expect("string")
                            .to_string(),
                        grid,
                    )
                })
                .collect(),
            AblationAxis::CoordinateFormat(formats) => formats
                .iter()
                .map(|&format| {
                    let mut grid = base.clone();
                    grid.coordinate_format = format;
                    (
                        serde_json::to_value(format)
                            .expect("serializes")
                            .as_str()
                            .expect("string")
                            .to_string(),
                        grid,
                    )
                })
                .collect(),
            AblationAxis::Perturbation(values) => values
                .iter()
                .map(|value| {
                    let mut grid = base.clone();
                    match value {
                        None => {
                            grid.perturbation = None;
                            ("off".to_string(), grid)
                        }
                        Some(seed) => {
                            grid.perturbation = Some(PerturbationSpec {
                                seed: *seed,
                                ..PerturbationSpec::default()
                            });
                            (format!("seed{seed}"), grid)
                        }
                    }
                })
                .collect(),
        }
    }
}

/// One sweep cell with its per-run reports.
#[derive(Debug)]
pub struct SweepCell {
    pub label: String,
    pub grid: GridSpec,
    pub reports: Vec<Report>,
    /// Mean of the per-run aggregates, one decimal.
    pub mean_aggregate: f64,
}

#[derive(Debug)]
pub struct SweepResult {
    pub axis: String,
    pub cells: Vec<SweepCell>,
}

/// Runs one report per axis value (times `runs` repetitions). Cells run
/// sequentially for stable quota use; sample order and seeds are identical
/// across cells.
pub fn ablation_sweep(
    samples: &[Sample],
    manifest_name: &str,
    axis: &AblationAxis,
    method: MethodTag,
    base: &GridSpec,
    ctx: &RunContext,
    runs: u32,
) -> Result<SweepResult, PipelineError> {
    let runs = runs.max(1);
    let mut cells = Vec::new();
    for (label, grid) in axis.cells(base) {
        let mut reports = Vec::new();
        for run_index in 1..=runs {
            let mut options = ctx.options.clone();
            if runs > 1 {
                let base_salt = options.cache_salt.clone().unwrap_or_default();
                options.cache_salt = Some(format!("{base_salt}|run{run_index}"));
            }
            options.config_snapshot = json!({
                "axis": axis.kind(),
                "value": label,
                "run": run_index,
                "grid": grid,
                "base": ctx.options.config_snapshot,
            });
            let run_ctx = RunContext {
                client: ctx.client,
                judge: ctx.judge,
                prompter: ctx.prompter,
                options,
            };
            reports.push(run_samples(samples, manifest_name, method, &grid, &run_ctx)?);
        }
        let mean = reports.iter().map(|r| r.aggregate).sum::<f64>() / reports.len() as f64;
        cells.push(SweepCell {
            label,
            grid,
            reports,
            mean_aggregate: (mean * 10.0).round() / 10.0,
        });
    }
    Ok(SweepResult {
        axis: axis.kind().to_string(),
        cells,
    })
}

/// CSV grid for a matrix-size sweep: rows = h, columns = w.
pub fn size_grid_csv(result: &SweepResult, axis: &AblationAxis) -> Option<String> {
    let AblationAxis::MatrixSize {
        h_min,
        h_max,
        w_min,
        w_max,
    } = axis
    else {
        return None;
    };
    let lookup: std::collections::HashMap<&str, f64> = result
        .cells
        .iter()
        .map(|c| (c.label.as_str(), c.mean_aggregate))
        .collect();
    let mut csv = String::from("h\\w");
    for w in *w_min..=*w_max {
        csv.push_str(&format!(",{w}"));
    }
    csv.push('\n');
    for h in *h_min..=*h_max {
        csv.push_str(&h.to_string());
        for w in *w_min..=*w_max {
            let label = format!("h{h}_w{w}");
            match lookup.get(label.as_str()) {
                Some(v) => csv.push_str(&format!(",{v:.1}")),
                None => csv.push_str(","),
            }
        }
        csv.push('\n');
    }
    Some(csv)
}
