//! Convergence-study harness: uniform and adaptive refinement runs, CSV and
//! VTK emission, cross-variant comparison, and check manifests for
//! regression gating.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::adaptivity::{
    adapt_loop_observed, solve_once, AdaptError, AdaptOptions, ConvergenceRecord,
    IndicatorField, StepObserver, StopReason,
};
use crate::fem::{FluxField, ScalarField};
use crate::geom::Vec2;
use crate::mesh::{self, Mesh};
use crate::postprocess::{fitted_order, outflow_trace, pairwise_orders};
use crate::problems::{builtin, Formulation, MeshRecipe, Problem, ProblemParams, Recovery};
use crate::solver::SolverKind;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("{formulation} is not well-posed for `{problem}`: {reason}")]
    Unsupported {
        problem: String,
        formulation: String,
        reason: String,
    },
    #[error("recovery `{recovery}` is undefined for `{problem}`: {reason}")]
    UnsupportedRecovery {
        problem: String,
        recovery: String,
        reason: String,
    },
    #[error("problem `{0}` defines no outflow trace")]
    NoTrace(String),
    #[error("an output directory is required when emitting files")]
    MissingOutDir,
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("check line {line}: {message}")]
    Check { line: usize, message: String },
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Refinement driver for a study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMode {
    Uniform,
    Adaptive,
}

impl fmt::Display for StudyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyMode::Uniform => "uniform",
            StudyMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for StudyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(StudyMode::Uniform),
            "adaptive" => Ok(StudyMode::Adaptive),
            other => Err(format!(
                "unknown mode `{other}` (expected `uniform` or `adaptive`)"
            )),
        }
    }
}

/// Which artifacts a run writes to its output directory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmitSet {
    pub csv: bool,
    pub vtk: bool,
    pub mesh: bool,
    pub trace: bool,
}

impl Default for EmitSet {
    fn default() -> Self {
        Self {
            csv: true,
            vtk: false,
            mesh: false,
            trace: false,
        }
    }
}

impl EmitSet {
    pub fn any(&self) -> bool {
        self.csv || self.vtk || self.mesh || self.trace
    }
}

impl fmt::Display for EmitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.csv {
            parts.push("csv");
        }
        if self.vtk {
            parts.push("vtk");
        }
        if self.mesh {
            parts.push("mesh");
        }
        if self.trace {
            parts.push("trace");
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

impl FromStr for EmitSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = EmitSet {
            csv: false,
            vtk: false,
            mesh: false,
            trace: false,
        };
        if s == "none" {
            return Ok(set);
        }
        for part in s.split(',') {
            match part.trim() {
                "csv" => set.csv = true,
                "vtk" => set.vtk = true,
                "mesh" => set.mesh = true,
                "trace" => set.trace = true,
                other => {
                    return Err(format!(
                        "unknown emit target `{other}` (expected csv, vtk, mesh, trace, or none)"
                    ))
                }
            }
        }
        Ok(set)
    }
}

/// Full description of one study run.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub problem: String,
    pub formulation: Formulation,
    pub recovery: Recovery,
    pub mode: StudyMode,
    /// Dörfler fraction (adaptive mode only).
    pub theta: f64,
    /// Degree-of-freedom budget; a run stops after the first solve at or
    /// above it.
    pub budget: usize,
    /// Hard cap on the number of solves.
    pub max_steps: usize,
    pub quad_degree: usize,
    pub solver: SolverKind,
    pub tol: f64,
    pub out_dir: Option<PathBuf>,
    pub emit: EmitSet,
    pub params: ProblemParams,
    pub check: Option<PathBuf>,
}

impl StudyConfig {
    pub fn new(problem: &str) -> Self {
        Self {
            problem: problem.to_string(),
            formulation: Formulation::Ls1,
            recovery: Recovery::First,
            mode: StudyMode::Adaptive,
            theta: 0.5,
            budget: 100_000,
            max_steps: 200,
            quad_degree: 4,
            solver: SolverKind::Auto,
            tol: 1e-10,
            out_dir: None,
            emit: EmitSet::default(),
            params: ProblemParams::default(),
            check: None,
        }
    }

    fn adapt_options(&self) -> AdaptOptions {
        AdaptOptions {
            theta: self.theta,
            dof_budget: self.budget,
            max_steps: self.max_steps,
            quad_degree: self.quad_degree,
            solver: self.solver,
            tol: self.tol,
        }
    }
}

/// Everything a finished run exposes: the history, the final discrete state,
/// and the outflow trace when the problem defines one.
pub struct StudyResult {
    pub problem: Problem,
    pub mode: StudyMode,
    pub formulation: Formulation,
    pub recovery: Recovery,
    pub records: Vec<ConvergenceRecord>,
    pub mesh: Mesh,
    pub flux: FluxField,
    pub scalar: ScalarField,
    pub indicators: IndicatorField,
    pub trace: Option<Vec<(f64, f64)>>,
    pub stop: StopReason,
    /// Artifacts written during the run, in creation order.
    pub written: Vec<PathBuf>,
}

fn load_problem(name: &str, params: &ProblemParams) -> Result<Problem, StudyError> {
    builtin(name, params).map_err(|_| StudyError::UnknownProblem(name.to_string()))
}

fn require_supported(
    problem: &Problem,
    formulation: Formulation,
    recovery: Recovery,
) -> Result<(), StudyError> {
    if !problem.supports(formulation) {
        let reason = match formulation {
            Formulation::Ls1 => "the advection field may vanish, so the streamline-weighted \
                                 residual is not defined"
                .to_string(),
            Formulation::Ls2 => "the reaction coefficient vanishes, so the reaction-weighted \
                                 functional loses coercivity"
                .to_string(),
        };
        return Err(StudyError::Unsupported {
            problem: problem.name.to_string(),
            formulation: formulation.to_string(),
            reason,
        });
    }
    if !problem.supports_recovery(recovery) {
        let reason = match recovery {
            Recovery::First => "the advection field may vanish under the division by |β|²",
            Recovery::Second => "the reaction coefficient vanishes under the division by γ",
        };
        return Err(StudyError::UnsupportedRecovery {
            problem: problem.name.to_string(),
            recovery: recovery.to_string(),
            reason: reason.to_string(),
        });
    }
    Ok(())
}

fn uniform_study(
    problem: &Problem,
    config: &StudyConfig,
    observer: StepObserver,
) -> Result<
    (
        Vec<ConvergenceRecord>,
        Mesh,
        FluxField,
        ScalarField,
        IndicatorField,
        StopReason,
    ),
    StudyError,
> {
    let options = config.adapt_options();
    let mut records = Vec::new();
    let mut mesh = problem.initial_mesh()?;
    for step in 0..config.max_steps.max(1) {
        let (record, flux, scalar, field) =
            solve_once(&mesh, problem, config.formulation, config.recovery, step, &options)?;
        observer(&mesh, &record, &scalar, &field);
        let dofs = record.dofs;
        records.push(record);
        let stop = if dofs >= config.budget {
            Some(StopReason::Budget)
        } else if step + 1 >= config.max_steps {
            Some(StopReason::MaxSteps)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok((records, mesh, flux, scalar, field, stop));
        }
        mesh = match problem.recipe {
            // The structured meshes from this family are not reproduced by
            // bisection, so each level is generated afresh at half the mesh
            // size.
            MeshRecipe::Peterson { h } => {
                let finer = MeshRecipe::Peterson {
                    h: h / 2f64.powi(step as i32 + 1),
                };
                let mut fresh = finer.build()?;
                let beta = |p: Vec2| (problem.beta)(p);
                fresh.classify_boundary(&beta, 1e-12);
                fresh
            }
            _ => {
                let mut refined = mesh.uniform_refine()?;
                refined.snap_boundary()?;
                refined
            }
        };
    }
    unreachable!("the loop always returns at the step cap");
}

/// Runs the configured study. When an output directory is configured, the
/// selected artifacts are written as the run progresses (one VTK snapshot
/// per step) and on completion (tables, trace, final mesh); the created
/// paths are listed in the result.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult, StudyError> {
    let problem = load_problem(&config.problem, &config.params)?;
    require_supported(&problem, config.formulation, config.recovery)?;

    let emit_dir = match (&config.out_dir, config.emit.any()) {
        (Some(dir), true) => {
            fs::create_dir_all(dir)?;
            Some(dir.clone())
        }
        _ => None,
    };

    let mut written: Vec<PathBuf> = Vec::new();
    let mut vtk_error: Option<std::io::Error> = None;
    let (records, mesh, flux, scalar, indicators, stop) = {
        let vtk_dir = emit_dir.as_ref().filter(|_| config.emit.vtk);
        let mut observer = |mesh: &Mesh,
                            record: &ConvergenceRecord,
                            scalar: &ScalarField,
                            indicators: &IndicatorField| {
            let Some(dir) = vtk_dir else { return };
            if vtk_error.is_some() {
                return;
            }
            let path = dir.join(format!("step_{:03}.vtk", record.step));
            let outcome = fs::File::create(&path).and_then(|file| {
                let mut out = std::io::BufWriter::new(file);
                crate::vtk::write_vtk(
                    &mut out,
                    mesh,
                    &[("u_h", &scalar.values), ("eta", &indicators.eta)],
                )?;
                out.flush()
            });
            match outcome {
                Ok(()) => written.push(path),
                Err(err) => vtk_error = Some(err),
            }
        };

        match config.mode {
            StudyMode::Adaptive => {
                let outcome = adapt_loop_observed(
                    &problem,
                    config.formulation,
                    config.recovery,
                    &config.adapt_options(),
                    &mut observer,
                )?;
                (
                    outcome.records,
                    outcome.mesh,
                    outcome.flux,
                    outcome.scalar,
                    outcome.indicators,
                    outcome.stop,
                )
            }
            StudyMode::Uniform => uniform_study(&problem, config, &mut observer)?,
        }
    };
    if let Some(err) = vtk_error {
        return Err(err.into());
    }

    let trace = match &problem.overshoot {
        Some(window) => Some(
            outflow_trace(&mesh, &scalar, &window.selector).map_err(AdaptError::Postprocess)?,
        ),
        None => None,
    };

    let mut result = StudyResult {
        problem,
        mode: config.mode,
        formulation: config.formulation,
        recovery: config.recovery,
        records,
        mesh,
        flux,
        scalar,
        indicators,
        trace,
        stop,
        written,
    };

    if let Some(dir) = &emit_dir {
        if config.emit.csv {
            let path = dir.join("study.csv");
            fs::write(&path, study_csv(&result.records))?;
            result.written.push(path);
            let path = dir.join("orders.csv");
            fs::write(&path, orders_csv(&result.records))?;
            result.written.push(path);
        }
        if config.emit.trace {
            let trace = result
                .trace
                .as_ref()
                .ok_or_else(|| StudyError::NoTrace(result.problem.name.to_string()))?;
            let path = dir.join("trace.csv");
            fs::write(&path, trace_csv(trace))?;
            result.written.push(path);
        }
        if config.emit.mesh {
            let path = dir.join("final.tmesh");
            mesh::save(&result.mesh, &path)?;
            result.written.push(path);
        }
    }
    Ok(result)
}

fn format_cell(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

/// Serializes the convergence history; unavailable quantities are empty
/// cells.
pub fn study_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from("step,dofs,h_max,eta,err_ls,err_l2_u,err_hdiv,overshoot\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step,
            r.dofs,
            r.h_max,
            r.eta,
            format_cell(r.err_ls),
            format_cell(r.err_l2_u),
            format_cell(r.err_hdiv),
            format_cell(r.overshoot),
        ));
    }
    out
}

fn metric_series(records: &[ConvergenceRecord]) -> Vec<(&'static str, Vec<Option<f64>>)> {
    vec![
        ("eta", records.iter().map(|r| Some(r.eta)).collect()),
        ("err_ls", records.iter().map(|r| r.err_ls).collect()),
        ("err_l2_u", records.iter().map(|r| r.err_l2_u).collect()),
        ("err_hdiv", records.iter().map(|r| r.err_hdiv).collect()),
    ]
}

/// Serializes pairwise and fitted convergence orders for every recorded
/// error metric with respect to √dofs.
pub fn orders_csv(records: &[ConvergenceRecord]) -> String {
    let dofs: Vec<usize> = records.iter().map(|r| r.dofs).collect();
    let mut out = String::from("metric,steps,order\n");
    for (name, series) in metric_series(records) {
        let values: Option<Vec<f64>> = series.into_iter().collect();
        let Some(values) = values else { continue };
        for (i, order) in pairwise_orders(&dofs, &values).iter().enumerate() {
            if order.is_finite() {
                out.push_str(&format!(
                    "{name},{}-{},{order}\n",
                    records[i].step,
                    records[i + 1].step
                ));
            }
        }
        let fitted = fitted_order(&dofs, &values);
        if fitted.is_finite() {
            out.push_str(&format!("{name},fitted,{fitted}\n"));
        }
    }
    out
}

/// Serializes an outflow trace.
pub fn trace_csv(trace: &[(f64, f64)]) -> String {
    let mut out = String::from("x,u_h\n");
    for (x, u) in trace {
        out.push_str(&format!("{x},{u}\n"));
    }
    out
}

impl StudyResult {
    /// Scalar summary metrics for check manifests, keyed by stable names.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        let last = self
            .records
            .last()
            .expect("a study records at least one step");
        map.insert("final_step".to_string(), last.step as f64);
        map.insert("final_dofs".to_string(), last.dofs as f64);
        map.insert("final_h_max".to_string(), last.h_max);
        map.insert("final_eta".to_string(), last.eta);
        if let Some(v) = last.err_ls {
            map.insert("final_err_ls".to_string(), v);
        }
        if let Some(v) = last.err_l2_u {
            map.insert("final_err_l2_u".to_string(), v);
        }
        if let Some(v) = last.err_hdiv {
            map.insert("final_err_hdiv".to_string(), v);
        }
        if let Some(v) = last.overshoot {
            map.insert("final_overshoot".to_string(), v);
        }
        let max_overshoot = self
            .records
            .iter()
            .filter_map(|r| r.overshoot)
            .fold(f64::NAN, f64::max);
        if max_overshoot.is_finite() {
            map.insert("max_overshoot".to_string(), max_overshoot);
        }

        let dofs: Vec<usize> = self.records.iter().map(|r| r.dofs).collect();
        for (name, series) in metric_series(&self.records) {
            let values: Option<Vec<f64>> = series.into_iter().collect();
            let Some(values) = values else { continue };
            let fitted = fitted_order(&dofs, &values);
            if fitted.is_finite() {
                map.insert(format!("order_{name}"), fitted);
            }
        }

        if let Some(trace) = &self.trace {
            let max = trace.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let min = trace.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            map.insert("trace_max".to_string(), max);
            map.insert("trace_min".to_string(), min);
        }
        map
    }

}

/// One variant's error history inside a comparison run.
#[derive(Clone, Debug)]
pub struct VariantHistory {
    pub formulation: Formulation,
    pub recovery: Recovery,
    pub records: Vec<ConvergenceRecord>,
}

/// Step-aligned comparison of the scalar error across all four
/// formulation × recovery variants.
pub struct Comparison {
    pub variants: Vec<VariantHistory>,
    /// Per step: (step, dofs, per-variant err_l2_u, relative spread).
    pub rows: Vec<(usize, usize, Vec<f64>, f64)>,
}

/// Runs all four variants of a problem under the same study settings and
/// tabulates the relative spread of the scalar error at each step.
pub fn compare_variants(config: &StudyConfig) -> Result<Comparison, StudyError> {
    let mut variants = Vec::new();
    for formulation in [Formulation::Ls1, Formulation::Ls2] {
        for recovery in [Recovery::First, Recovery::Second] {
            let mut variant_config = config.clone();
            variant_config.formulation = formulation;
            variant_config.recovery = recovery;
            let result = run_study(&variant_config)?;
            variants.push(VariantHistory {
                formulation,
                recovery,
                records: result.records,
            });
        }
    }

    let steps = variants
        .iter()
        .map(|v| v.records.len())
        .min()
        .unwrap_or(0);
    let mut rows = Vec::new();
    for i in 0..steps {
        let errors: Option<Vec<f64>> = variants
            .iter()
            .map(|v| v.records[i].err_l2_u)
            .collect();
        let Some(errors) = errors else { continue };
        let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = if min > 0.0 { (max - min) / min } else { f64::NAN };
        rows.push((
            variants[0].records[i].step,
            variants[0].records[i].dofs,
            errors,
            spread,
        ));
    }
    Ok(Comparison { variants, rows })
}

/// Serializes a comparison table.
pub fn compare_csv(comparison: &Comparison) -> String {
    let mut out = String::from("step,dofs");
    for v in &comparison.variants {
        out.push_str(&format!(",err_l2_u_{}_{}", v.formulation, v.recovery));
    }
    out.push_str(",rel_spread\n");
    for (step, dofs, errors, spread) in &comparison.rows {
        out.push_str(&format!("{step},{dofs}"));
        for e in errors {
            out.push_str(&format!(",{e}"));
        }
        out.push_str(&format!(",{spread}\n"));
    }
    out
}

/// One `<metric> <min> <max>` bound from a check manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub metric: String,
    pub min: f64,
    pub max: f64,
}

/// Parses a check manifest: whitespace-separated `metric min max` lines,
/// with `#` comments and blank lines ignored.
pub fn parse_check_manifest(text: &str) -> Result<Vec<CheckLine>, StudyError> {
    let mut checks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(StudyError::Check {
                line: idx + 1,
                message: format!(
                    "expected `<metric> <min> <max>`, got {} fields",
                    fields.len()
                ),
            });
        }
        let parse = |s: &str| -> Result<f64, StudyError> {
            s.parse().map_err(|_| StudyError::Check {
                line: idx + 1,
                message: format!("`{s}` is not a number"),
            })
        };
        let (min, max) = (parse(fields[1])?, parse(fields[2])?);
        if min > max {
            return Err(StudyError::Check {
                line: idx + 1,
                message: format!("empty interval: {min} > {max}"),
            });
        }
        checks.push(CheckLine {
            metric: fields[0].to_string(),
            min,
            max,
        });
    }
    Ok(checks)
}

/// Outcome of one check line against the run's metrics.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub check: CheckLine,
    /// The measured value; `None` when the metric was not produced.
    pub value: Option<f64>,
    pub pass: bool,
}

/// Evaluates every check; a missing metric fails its line.
pub fn evaluate_checks(
    metrics: &BTreeMap<String, f64>,
    checks: &[CheckLine],
) -> Vec<CheckOutcome> {
    checks
        .iter()
        .map(|check| {
            let value = metrics.get(&check.metric).copied();
            let pass = value.is_some_and(|v| v >= check.min && v <= check.max);
            CheckOutcome {
                check: check.clone(),
                value,
                pass,
            }
        })
        .collect()
}

/// Applies one `key=value` assignment to the config. Used both by config
/// files and by command-line overrides.
pub fn apply_setting(config: &mut StudyConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "problem" => config.problem = value.to_string(),
        "formulation" => config.formulation = value.parse()?,
        "recovery" => config.recovery = value.parse()?,
        "mode" => config.mode = value.parse()?,
        "theta" => {
            config.theta = value
                .parse()
                .map_err(|_| format!("`{value}` is not a number"))?
        }
        "budget" => {
            config.budget = value
                .parse()
                .map_err(|_| format!("`{value}` is not an integer"))?
        }
        "max_steps" => {
            config.max_steps = value
                .parse()
                .map_err(|_| format!("`{value}` is not an integer"))?
        }
        "quad_degree" => {
            config.quad_degree = value
                .parse()
                .map_err(|_| format!("`{value}` is not an integer"))?
        }
        "solver" => config.solver = value.parse()?,
        "tol" => {
            config.tol = value
                .parse()
                .map_err(|_| format!("`{value}` is not a number"))?
        }
        "out_dir" => config.out_dir = Some(PathBuf::from(value)),
        "emit" => config.emit = value.parse()?,
        "epsilon" => {
            config.params.epsilon = value
                .parse()
                .map_err(|_| format!("`{value}` is not a number"))?
        }
        "peterson_h" => {
            config.params.peterson_h = value
                .parse()
                .map_err(|_| format!("`{value}` is not a number"))?
        }
        "square_n" => {
            config.params.square_n = value
                .parse()
                .map_err(|_| format!("`{value}` is not an integer"))?
        }
        "check" => config.check = Some(PathBuf::from(value)),
        other => return Err(format!("unknown setting `{other}`")),
    }
    Ok(())
}

/// Parses a `key = value` config file into the config, line by line; `#`
/// starts a comment.
pub fn apply_config_file(config: &mut StudyConfig, text: &str) -> Result<(), StudyError> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(StudyError::Config {
                line: idx + 1,
                message: "expected `key = value`".to_string(),
            });
        };
        apply_setting(config, key.trim(), value.trim()).map_err(|message| {
            StudyError::Config {
                line: idx + 1,
                message,
            }
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn uniform_studies_shrink_the_mesh_and_the_error() {
        let mut config = StudyConfig::new("ex52");
        config.mode = StudyMode::Uniform;
        config.max_steps = 3;
        let result = run_study(&config).unwrap();
        assert_eq!(result.records.len(), 3);
        assert_eq!(result.stop, StopReason::MaxSteps);
        for pair in result.records.windows(2) {
            assert!((pair[0].h_max / pair[1].h_max - 2.0).abs() <= 1e-12);
            assert!(pair[1].dofs > pair[0].dofs);
            assert!(pair[1].err_ls.unwrap() < pair[0].err_ls.unwrap());
        }
        assert!(result.trace.is_none());
    }

    #[test]
    fn peterson_studies_regenerate_the_family() {
        let mut config = StudyConfig::new("ex53_peterson");
        config.mode = StudyMode::Uniform;
        config.max_steps = 3;
        let result = run_study(&config).unwrap();
        // n(2n + 1) triangles for 1/h = 6, 12, 24 ⇒ the family is rebuilt,
        // not bisected.
        assert!(result.records[0].dofs > 0);
        assert_eq!(result.mesh.elements.len(), 24 * 49);
        // Every mesh is freshly generated, so its generation counter is 0.
        assert_eq!(result.mesh.generation, 0);
        for pair in result.records.windows(2) {
            assert!((pair[0].h_max / pair[1].h_max - 2.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn unsupported_combinations_are_refused_with_context() {
        let mut config = StudyConfig::new("ex53_peterson");
        config.formulation = Formulation::Ls2;
        let err = run_study(&config).err().unwrap();
        let message = err.to_string();
        assert!(message.contains("ex53_peterson"), "{message}");
        assert!(message.contains("ls2"), "{message}");

        let mut config = StudyConfig::new("ex57_curved");
        config.recovery = Recovery::Second;
        let err = run_study(&config).err().unwrap();
        assert!(matches!(err, StudyError::UnsupportedRecovery { .. }));

        let err = run_study(&StudyConfig::new("nonexistent")).err().unwrap();
        assert!(matches!(err, StudyError::UnknownProblem(_)));
    }

    #[test]
    fn csv_serialization_is_deterministic_and_sparse() {
        let mut config = StudyConfig::new("ex55");
        config.budget = 600;
        let first = run_study(&config).unwrap();
        let second = run_study(&config).unwrap();
        let csv1 = study_csv(&first.records);
        let csv2 = study_csv(&second.records);
        assert_eq!(csv1, csv2);
        assert!(csv1.starts_with("step,dofs,h_max,eta,err_ls,err_l2_u,err_hdiv,overshoot\n"));
        // Every data row has all eight cells populated for this problem.
        for line in csv1.lines().skip(1) {
            assert_eq!(line.split(',').count(), 8);
            assert!(!line.split(',').any(|cell| cell.is_empty()), "{line}");
        }
        assert_eq!(orders_csv(&first.records), orders_csv(&second.records));

        let trace = first.trace.as_ref().unwrap();
        assert!(trace_csv(trace).starts_with("x,u_h\n"));
    }

    #[test]
    fn emitted_artifacts_land_in_the_output_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = StudyConfig::new("ex55");
        config.budget = 300;
        config.out_dir = Some(dir.path().to_path_buf());
        config.emit = EmitSet {
            csv: true,
            vtk: true,
            mesh: true,
            trace: true,
        };
        let result = run_study(&config).unwrap();
        // One VTK snapshot per recorded step, plus the four summary files.
        assert_eq!(result.written.len(), result.records.len() + 4);
        for path in &result.written {
            assert!(path.exists(), "{path:?} missing");
            assert!(fs::metadata(path).unwrap().len() > 0);
        }
        assert!(dir.path().join("step_000.vtk").exists());
        assert!(dir
            .path()
            .join(format!("step_{:03}.vtk", result.records.len() - 1))
            .exists());
        let reloaded = mesh::load(&dir.path().join("final.tmesh")).unwrap();
        assert_eq!(reloaded.elements.len(), result.mesh.elements.len());

        let mut no_trace = StudyConfig::new("ex52");
        no_trace.out_dir = Some(dir.path().to_path_buf());
        no_trace.emit = EmitSet {
            trace: true,
            ..EmitSet::default()
        };
        let err = run_study(&no_trace).err().unwrap();
        assert!(matches!(err, StudyError::NoTrace(_)));
    }

    #[test]
    fn metrics_expose_final_values_and_orders() {
        let mut config = StudyConfig::new("ex52");
        config.mode = StudyMode::Uniform;
        config.max_steps = 4;
        let result = run_study(&config).unwrap();
        let metrics = result.metrics();
        assert_eq!(
            metrics["final_dofs"],
            *result.records.last().map(|r| &r.dofs).unwrap() as f64
        );
        assert!(metrics.contains_key("order_err_ls"));
        assert!(metrics.contains_key("order_err_l2_u"));
        assert!(metrics.contains_key("order_err_hdiv"));
        assert!(!metrics.contains_key("trace_max"));
        let order = metrics["order_err_ls"];
        assert!(order > 0.5 && order < 1.5, "order {order}");
    }

    #[test]
    fn check_manifests_gate_on_bounds() {
        let text = "\
# sanity bounds
final_eta 0 10
order_err_ls 0.9 1.1   # trailing comment
missing_metric 0 1
";
        let checks = parse_check_manifest(text).unwrap();
        assert_eq!(checks.len(), 3);

        let mut metrics = BTreeMap::new();
        metrics.insert("final_eta".to_string(), 3.0);
        metrics.insert("order_err_ls".to_string(), 1.3);
        let outcomes = evaluate_checks(&metrics, &checks);
        assert!(outcomes[0].pass);
        assert!(!outcomes[1].pass);
        assert!(!outcomes[2].pass && outcomes[2].value.is_none());

        assert!(parse_check_manifest("only_two_fields 1\n").is_err());
        assert!(parse_check_manifest("inverted 2 1\n").is_err());
    }

    #[test]
    fn config_files_round_trip_every_setting() {
        let mut config = StudyConfig::new("ex52");
        let text = "\
# a full config
problem = ex58_layer
formulation = ls2
recovery = second
mode = uniform
theta = 0.7
budget = 12345
max_steps = 7
quad_degree = 6
solver = cg
tol = 1e-8
out_dir = /tmp/somewhere
emit = csv,vtk,trace
epsilon = 1e-10
peterson_h = 0.125
square_n = 8
check = bounds.txt
";
        apply_config_file(&mut config, text).unwrap();
        assert_eq!(config.problem, "ex58_layer");
        assert_eq!(config.formulation, Formulation::Ls2);
        assert_eq!(config.recovery, Recovery::Second);
        assert_eq!(config.mode, StudyMode::Uniform);
        assert_eq!(config.theta, 0.7);
        assert_eq!(config.budget, 12345);
        assert_eq!(config.max_steps, 7);
        assert_eq!(config.quad_degree, 6);
        assert_eq!(config.solver, SolverKind::Cg);
        assert_eq!(config.tol, 1e-8);
        assert_eq!(config.out_dir.as_deref(), Some(Path::new("/tmp/somewhere")));
        assert_eq!(
            config.emit,
            EmitSet {
                csv: true,
                vtk: true,
                mesh: false,
                trace: true
            }
        );
        assert_eq!(config.params.epsilon, 1e-10);
        assert_eq!(config.params.peterson_h, 0.125);
        assert_eq!(config.params.square_n, 8);
        assert_eq!(config.check.as_deref(), Some(Path::new("bounds.txt")));

        let err = apply_config_file(&mut config, "nonsense\n").unwrap_err();
        assert!(matches!(err, StudyError::Config { line: 1, .. }));
        let err = apply_config_file(&mut config, "foo = bar\n").unwrap_err();
        assert!(err.to_string().contains("unknown setting"));
    }

    #[test]
    fn variant_comparison_tabulates_the_spread() {
        let mut config = StudyConfig::new("ex52");
        config.mode = StudyMode::Uniform;
        config.max_steps = 2;
        let comparison = compare_variants(&config).unwrap();
        assert_eq!(comparison.variants.len(), 4);
        assert_eq!(comparison.rows.len(), 2);
        for (_, _, errors, spread) in &comparison.rows {
            assert_eq!(errors.len(), 4);
            assert!(spread.is_finite() && *spread >= 0.0);
        }
        let csv = compare_csv(&comparison);
        assert!(csv.starts_with(
            "step,dofs,err_l2_u_ls1_first,err_l2_u_ls1_second,\
             err_l2_u_ls2_first,err_l2_u_ls2_second,rel_spread\n"
        ));
        assert_eq!(csv.lines().count(), 3);
    }
}
