//! Command-line harness around the transport least-squares solver: runs
//! single convergence studies, cross-variant comparisons, and check-manifest
//! gates.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use transport_lsfem::problems::{builtin, ProblemParams};
use transport_lsfem::study::{
    apply_config_file, apply_setting, compare_csv, compare_variants, evaluate_checks,
    parse_check_manifest, run_study, study_csv, StudyConfig, StudyError, StudyResult,
};

#[derive(Parser)]
#[command(
    name = "transport-study",
    version,
    about = "Convergence studies for the least-squares flux transport solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one study and report its history, metrics, and checks.
    Run(RunArgs),
    /// Run all four formulation × recovery variants and compare the scalar
    /// error.
    Compare(CompareArgs),
    /// List the built-in problems.
    Problems,
}

/// Flags shared by `run` and `compare`. Every flag overrides the config
/// file.
#[derive(Args)]
struct CommonArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem name (see `problems`).
    #[arg(long)]
    problem: Option<String>,
    /// Refinement driver: uniform | adaptive.
    #[arg(long)]
    mode: Option<String>,
    /// Dörfler marking fraction in [0, 1].
    #[arg(long)]
    theta: Option<String>,
    /// Stop after the first solve with at least this many unknowns.
    #[arg(long)]
    budget: Option<String>,
    /// Hard cap on the number of solves.
    #[arg(long)]
    max_steps: Option<String>,
    /// Quadrature degree for assembly and indicators (1-10).
    #[arg(long)]
    quad_degree: Option<String>,
    /// Linear solver: auto | direct | cg.
    #[arg(long)]
    solver: Option<String>,
    /// Iterative-solver relative residual tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Directory for emitted artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated artifacts: csv,vtk,mesh,trace (or none).
    #[arg(long)]
    emit: Option<String>,
    /// Interior-layer width parameter (ex58_layer).
    #[arg(long)]
    epsilon: Option<String>,
    /// Initial mesh size for the Peterson family (ex53_peterson).
    #[arg(long)]
    peterson_h: Option<String>,
    /// Cells per side of the initial structured square meshes.
    #[arg(long)]
    square_n: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Least-squares formulation: ls1 | ls2.
    #[arg(long)]
    formulation: Option<String>,
    /// Scalar recovery: first | second.
    #[arg(long)]
    recovery: Option<String>,
    /// Check manifest with `<metric> <min> <max>` lines; out-of-bound
    /// metrics fail the run.
    #[arg(long)]
    check: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn build_config(
    common: &CommonArgs,
    formulation: Option<&str>,
    recovery: Option<&str>,
    check: Option<&PathBuf>,
) -> Result<StudyConfig, String> {
    let mut config = StudyConfig::new("");
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        apply_config_file(&mut config, &text).map_err(|e| e.to_string())?;
    }
    let overrides: [(&str, Option<String>); 13] = [
        ("problem", common.problem.clone()),
        ("formulation", formulation.map(str::to_string)),
        ("recovery", recovery.map(str::to_string)),
        ("mode", common.mode.clone()),
        ("theta", common.theta.clone()),
        ("budget", common.budget.clone()),
        ("max_steps", common.max_steps.clone()),
        ("quad_degree", common.quad_degree.clone()),
        ("solver", common.solver.clone()),
        ("tol", common.tol.clone()),
        ("emit", common.emit.clone()),
        ("epsilon", common.epsilon.clone()),
        ("peterson_h", common.peterson_h.clone()),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            apply_setting(&mut config, key, &value).map_err(|e| format!("--{key}: {e}"))?;
        }
    }
    if let Some(value) = &common.square_n {
        apply_setting(&mut config, "square_n", value).map_err(|e| format!("--square_n: {e}"))?;
    }
    if let Some(dir) = &common.out_dir {
        config.out_dir = Some(dir.clone());
    }
    if let Some(path) = check {
        config.check = Some(path.clone());
    }
    if config.problem.is_empty() {
        return Err("no problem selected; pass --problem or set it in the config".to_string());
    }
    Ok(config)
}

fn print_summary(result: &StudyResult) {
    println!(
        "# {} — {}",
        result.problem.name, result.problem.title
    );
    println!(
        "# formulation {}, recovery {}, mode {}, stop {:?}",
        result.formulation, result.recovery, result.mode, result.stop
    );
    print!("{}", study_csv(&result.records));
}

fn run(args: &RunArgs) -> Result<bool, String> {
    let config = build_config(
        &args.common,
        args.formulation.as_deref(),
        args.recovery.as_deref(),
        args.check.as_ref(),
    )?;
    if config.out_dir.is_none() && args.common.emit.is_some() && config.emit.any() {
        return Err(StudyError::MissingOutDir.to_string());
    }
    let result = run_study(&config).map_err(|e| e.to_string())?;
    print_summary(&result);

    let metrics = result.metrics();
    println!("# metrics");
    for (name, value) in &metrics {
        println!("{name} = {value}");
    }

    for path in &result.written {
        eprintln!("wrote {}", path.display());
    }

    let mut all_pass = true;
    if let Some(path) = &config.check {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read check manifest {}: {e}", path.display()))?;
        let checks = parse_check_manifest(&text).map_err(|e| e.to_string())?;
        println!("# checks");
        for outcome in evaluate_checks(&metrics, &checks) {
            let status = if outcome.pass { "PASS" } else { "FAIL" };
            let value = outcome
                .value
                .map(|v| v.to_string())
                .unwrap_or_else(|| "missing".to_string());
            println!(
                "{status} {} = {value} (expected [{}, {}])",
                outcome.check.metric, outcome.check.min, outcome.check.max
            );
            all_pass &= outcome.pass;
        }
    }
    Ok(all_pass)
}

fn compare(args: &CompareArgs) -> Result<(), String> {
    let config = build_config(&args.common, None, None, None)?;
    let comparison = compare_variants(&config).map_err(|e| e.to_string())?;
    let csv = compare_csv(&comparison);
    print!("{csv}");
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        let path = dir.join("compare.csv");
        fs::write(&path, csv).map_err(|e| e.to_string())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn list_problems() {
    let params = ProblemParams::default();
    for name in transport_lsfem::problems::names() {
        let problem = builtin(name, &params).expect("every listed problem builds");
        println!("{name:<14} {}", problem.title);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args).map(|()| true),
        Command::Problems => {
            list_problems();
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
