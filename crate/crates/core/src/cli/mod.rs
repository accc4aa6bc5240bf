//! Batch front end. Every command reads one JSON run configuration and writes
//! its artifacts into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::contour::{
    boundary, build_table, c_of_u, validate_exceedance, ContourKind, DirectionGrid,
    ExceedanceReport, UnitVector,
};
use crate::design::{
    admissible_directions, choose_u_signs, compare_concepts, risk_of_cost, CatalogFunction,
    ConceptReport, CostCase, CostModel, Monotonicity,
};
use crate::envdata::{read_samples, sample, split_holdout, write_samples, EnvModelConfig, SampleMatrix};
use crate::error::{Error, Result};
use crate::lindesign::{optimize_design, LinearDesignProblem, SearchControls};
use crate::risk::RiskLevel;

#[derive(Debug, Parser)]
#[command(name = "envcontour", version, about = "Environmental contours and risk-based design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Random seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw samples from the environmental model.
    Sample,
    /// Build contour tables, boundaries and a holdout validation report.
    Contour,
    /// Evaluate VaR and CVaR of total cost for one design.
    Risk,
    /// Optimise a linear design over one or more contour directions.
    #[command(name = "design-opt")]
    DesignOpt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Var,
    Cvar,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    #[serde(rename = "K")]
    pub failure_cost: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
}

/// Like [`CatalogFunction`], except a halfspace without a threshold sits on
/// the classical contour in its (normalised) direction.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PerformanceBlock {
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
    Halfspace {
        u: Vec<f64>,
        #[serde(default)]
        threshold: Option<f64>,
    },
    Constant {
        value: f64,
    },
}

fn default_directions() -> usize {
    360
}

fn default_holdout() -> f64 {
    0.5
}

fn default_sweep() -> usize {
    32
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub alpha: Option<RiskLevel>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub direction_list: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub samples: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<EnvModelConfig>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub cost: Option<CostBlock>,
    #[serde(default)]
    pub performance: Option<PerformanceBlock>,
    #[serde(default)]
    pub design: Option<Vec<f64>>,
    #[serde(default)]
    pub linear_design: Option<LinearDesignProblem>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub monotonicity: Option<Vec<Monotonicity>>,
    #[serde(default = "default_sweep")]
    pub sweep: usize,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub search: SearchControls,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if let Some(p) = config.samples.take() {
            config.samples = Some(base.join(p));
        }
        if let Some(p) = config.out.take() {
            config.out = Some(base.join(p));
        }
        Ok(config)
    }

    fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = Some(s);
            if let Some(model) = self.model.as_mut() {
                model.seed = s;
            }
        }
    }

    fn check_source(&self) -> Result<()> {
        match (&self.samples, &self.model) {
            (Some(_), Some(_)) => Err(Error::config(
                "samples/model",
                "conflict: give either a sample file or a model, not both",
            )),
            (None, None) => Err(Error::config(
                "samples/model",
                "one of a sample file or a model is required",
            )),
            _ => Ok(()),
        }
    }

    fn level(&self) -> Result<RiskLevel> {
        self.alpha.ok_or_else(|| Error::config("alpha", "required"))
    }

    fn holdout_seed(&self) -> u64 {
        self.seed
            .or(self.model.as_ref().map(|m| m.seed))
            .unwrap_or(0)
    }

    fn draw(&self) -> Result<SampleMatrix> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("model", "required"))?;
        let count = self
            .count
            .ok_or_else(|| Error::config("count", "required when sampling from a model"))?;
        sample(model, count)
    }

    fn load_samples(&self) -> Result<SampleMatrix> {
        self.check_source()?;
        match &self.samples {
            Some(path) => read_samples(path),
            None => self.draw(),
        }
    }

    fn grid(&self) -> Result<DirectionGrid> {
        match &self.direction_list {
            Some(list) => DirectionGrid::from_directions(
                list.iter()
                    .map(|d| UnitVector::normalized(d))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => DirectionGrid::uniform_planar(self.directions),
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(error: &Error) -> i32 {
    match error.root() {
        Error::Config { .. }
        | Error::Factorization
        | Error::Parse { .. }
        | Error::ModelViolation { .. }
        | Error::Classification { .. }
        | Error::EmptyInput(_) => 2,
        Error::Io { .. } => 3,
        Error::Dimension { .. }
        | Error::EmptyTail { .. }
        | Error::Geometry(_)
        | Error::Numeric(_)
        | Error::AtDirection { .. } => 4,
        Error::NoFeasibleDesign { .. } => 5,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config", "a configuration file is required"))?;
    let mut config = RunConfig::from_file(path)?;
    config.apply_seed(cli.seed);
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Sample => cmd_sample(&config, &out),
        Command::Contour => cmd_contour(&config, &out),
        Command::Risk => cmd_risk(&config, &out),
        Command::DesignOpt => cmd_design_opt(&config, &out),
    }
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_sample(config: &RunConfig, out: &Path) -> Result<()> {
    config.check_source()?;
    if config.samples.is_some() {
        return Err(Error::config("model", "the sample command draws from a model, not a file"));
    }
    let samples = config.draw()?;
    prepare(out)?;
    let path = out.join("samples.csv");
    write_samples(&samples, &path)?;
    println!(
        "{} rows x {} columns -> {}",
        samples.len(),
        samples.dim(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    alpha: f64,
    estimation_count: usize,
    in_sample_max_exceedance: f64,
    holdout: Option<ExceedanceReport>,
    invalid_classical: usize,
    invalid_buffered: usize,
}

pub fn cmd_contour(config: &RunConfig, out: &Path) -> Result<()> {
    let level = config.level()?;
    let samples = config.load_samples()?;
    let grid = config.grid()?;
    let (estimation, holdout) =
        split_holdout(&samples, config.holdout_fraction, config.holdout_seed())?;
    let table = build_table(&estimation, &grid, level)?;
    let classical = boundary(&table, ContourKind::Classical)?;
    let buffered = boundary(&table, ContourKind::Buffered)?;
    let in_sample = validate_exceedance(&table, &estimation)?;
    let holdout = holdout
        .map(|h| validate_exceedance(&table, &h))
        .transpose()?;
    let report = ValidationReport {
        alpha: level.alpha(),
        estimation_count: estimation.len(),
        in_sample_max_exceedance: in_sample.exceedance.iter().copied().fold(0.0, f64::max),
        holdout,
        invalid_classical: classical.invalid_count(),
        invalid_buffered: buffered.invalid_count(),
    };

    prepare(out)?;
    table.write_csv(out.join("contour_table.csv"))?;
    classical.write_csv(out.join("boundary_classical.csv"))?;
    buffered.write_csv(out.join("boundary_buffered.csv"))?;
    write_json(&report, &out.join("validation.json"))?;
    println!(
        "{} directions, {} invalid classical and {} invalid buffered boundary points",
        grid.len(),
        report.invalid_classical,
        report.invalid_buffered
    );
    Ok(())
}

pub fn cmd_risk(config: &RunConfig, out: &Path) -> Result<()> {
    let level = config.level()?;
    let samples = config.load_samples()?;
    let cost = config
        .cost
        .as_ref()
        .ok_or_else(|| Error::config("cost", "required"))?;
    let model = match (cost.kappa, &cost.c) {
        (Some(kappa), None) => CostModel::constant(cost.failure_cost, kappa, level)?,
        (None, Some(c)) => CostModel::linear(cost.failure_cost, c.clone(), level)?,
        _ => return Err(Error::config("cost", "give exactly one of kappa or c")),
    };
    let g = match config
        .performance
        .as_ref()
        .ok_or_else(|| Error::config("performance", "required"))?
    {
        PerformanceBlock::Linear { a } => CatalogFunction::Linear { a: a.clone() },
        PerformanceBlock::Constant { value } => CatalogFunction::Constant { value: *value },
        PerformanceBlock::Halfspace { u, threshold: Some(t) } => CatalogFunction::Halfspace {
            u: u.clone(),
            threshold: *t,
        },
        PerformanceBlock::Halfspace { u, threshold: None } => {
            let u = UnitVector::normalized(u)?;
            let threshold = c_of_u(&samples, &u, level)?;
            CatalogFunction::Halfspace {
                u: u.components().to_vec(),
                threshold,
            }
        }
    };
    let x = config.design.clone().unwrap_or_default();
    let report = risk_of_cost(&g, &x, &samples, &model)?;
    prepare(out)?;
    write_json(&report, &out.join("risk.json"))?;
    println!(
        "p_f = {}, VaR = {}, CVaR = {}",
        report.p_f, report.var_cost, report.cvar_cost
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct DirectionOutcome {
    direction: Vec<f64>,
    c_u: f64,
    x: Vec<f64>,
    cost: f64,
    lp_value: Option<f64>,
    p_f: f64,
    var_cost: f64,
    cvar_cost: f64,
    case: CostCase,
}

#[derive(Debug, Serialize)]
struct DesignReport {
    alpha: f64,
    objective: Objective,
    winner: usize,
    results: Vec<DirectionOutcome>,
    infeasible_directions: Vec<Vec<f64>>,
}

pub fn cmd_design_opt(config: &RunConfig, out: &Path) -> Result<()> {
    let problem = config
        .linear_design
        .as_ref()
        .ok_or_else(|| Error::config("linear_design", "required"))?;
    problem.validate()?;
    let level = problem.alpha;
    if config.alpha.is_some_and(|a| a != level) {
        return Err(Error::config("alpha", "differs from linear_design.alpha"));
    }
    let samples = config.load_samples()?;

    let directions = match &config.direction {
        Some(d) => vec![UnitVector::normalized(d)?],
        None => {
            let monotonicity = config
                .monotonicity
                .clone()
                .unwrap_or_else(|| vec![Monotonicity::Nondecreasing; problem.env_dim()]);
            admissible_directions(&choose_u_signs(&monotonicity), config.sweep)?
        }
    };
    if directions.is_empty() {
        return Err(Error::config("monotonicity", "admits no direction"));
    }

    let g = problem.performance_function();
    let model = problem.cost_model()?;
    let mut results = Vec::new();
    let mut concepts = Vec::new();
    let mut infeasible = Vec::new();
    for (j, u) in directions.iter().enumerate() {
        let c_u = c_of_u(&samples, u, level).map_err(|e| Error::at_direction(j, e))?;
        let design = match optimize_design(problem, u, c_u, config.epsilon, &config.search) {
            Ok(d) => d,
            Err(Error::NoFeasibleDesign { .. }) => {
                infeasible.push(u.components().to_vec());
                continue;
            }
            Err(e) => return Err(Error::at_direction(j, e)),
        };
        let risk = risk_of_cost(&g, &design.x, &samples, &model)?;
        concepts.push(ConceptReport {
            direction: u.clone(),
            design: design.x.clone(),
            value: match config.objective {
                Objective::Var => risk.var_cost,
                Objective::Cvar => risk.cvar_cost,
            },
        });
        results.push(DirectionOutcome {
            direction: design.direction,
            c_u,
            x: design.x,
            cost: design.cost,
            lp_value: design.lp_value,
            p_f: risk.p_f,
            var_cost: risk.var_cost,
            cvar_cost: risk.cvar_cost,
            case: risk.case_label,
        });
    }
    if results.is_empty() {
        return Err(Error::NoFeasibleDesign {
            t_max: config.search.t_max,
        });
    }
    let winner = compare_concepts(&concepts)?;
    let report = DesignReport {
        alpha: level.alpha(),
        objective: config.objective,
        winner,
        results,
        infeasible_directions: infeasible,
    };
    prepare(out)?;
    write_json(&report, &out.join("design.json"))?;
    let best = &report.results[winner];
    println!(
        "{} feasible of {} directions; best cost {} at x = {:?}",
        report.results.len(),
        directions.len(),
        best.cost,
        best.x
    );
    Ok(())
}
