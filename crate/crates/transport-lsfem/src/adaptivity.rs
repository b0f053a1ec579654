//! A posteriori error indicators, Dörfler marking, and the adaptive
//! solve–estimate–mark–refine loop.

use thiserror::Error;

use crate::assembly::{assemble, AssemblyError};
use crate::fem::{FluxField, ScalarField};
use crate::mesh::{ElementId, Mesh, MeshError};
use crate::postprocess::{
    element_indicator_sq, error_norms, integrate_element, overshoot_value, recover_u_first,
    recover_u_second, PostprocessError,
};
use crate::problems::{Formulation, Problem, Recovery};
use crate::quadrature::triangle_rule;
use crate::solver::{solve, SolverError, SolverKind};
use crate::NeumaierSum;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

/// Per-element error indicators η_K for one formulation on one mesh.
#[derive(Clone, Debug)]
pub struct IndicatorField {
    pub mesh_generation: u32,
    pub eta: Vec<f64>,
    pub formulation: Formulation,
}

impl IndicatorField {
    /// Global estimator value η = (Σ_K η²_K)^½.
    pub fn total(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for eta in &self.eta {
            sum.add(eta * eta);
        }
        sum.value().max(0.0).sqrt()
    }
}

/// Evaluates η_K = (local least-squares residual)^½ on every element, using
/// the same quadrature degree as the assembly so that Σ η²_K reproduces the
/// functional exactly.
pub fn indicators(
    mesh: &Mesh,
    problem: &Problem,
    formulation: Formulation,
    flux: &FluxField,
    quad_degree: usize,
) -> Result<IndicatorField, AssemblyError> {
    let rule = triangle_rule(quad_degree);
    let mut eta = Vec::with_capacity(mesh.elements.len());
    for k in 0..mesh.elements.len() {
        let sq = element_indicator_sq(mesh, k, problem, formulation, flux, &rule)?;
        eta.push(sq.max(0.0).sqrt());
    }
    Ok(IndicatorField {
        mesh_generation: mesh.generation,
        eta,
        formulation,
    })
}

/// Dörfler (bulk) marking: the smallest set of elements, chosen greedily by
/// descending indicator, whose squared indicators sum to at least
/// `theta` times the squared total. Returns ascending element ids.
pub fn dorfler_mark(field: &IndicatorField, theta: f64) -> Vec<ElementId> {
    assert!(
        (0.0..=1.0).contains(&theta),
        "marking fraction must lie in [0, 1], got {theta}"
    );
    let eta = &field.eta;
    let mut order: Vec<ElementId> = (0..eta.len()).collect();
    order.sort_unstable_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    // Accumulate the total in the same (sorted) order as the prefix sums so
    // that theta = 1 selects exactly the elements with positive indicators.
    let total: f64 = order.iter().map(|&k| eta[k] * eta[k]).sum();
    if theta == 0.0 || total <= 0.0 {
        return Vec::new();
    }
    let target = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &k in &order {
        if eta[k] <= 0.0 {
            break;
        }
        acc += eta[k] * eta[k];
        marked.push(k);
        if acc >= target {
            break;
        }
    }
    marked.sort_unstable();
    marked
}

/// One row of a convergence history.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRecord {
    pub step: usize,
    /// Free (non-inflow) flux unknowns.
    pub dofs: usize,
    pub h_max: f64,
    /// Global estimator value; identical to the energy error.
    pub eta: f64,
    pub err_ls: Option<f64>,
    pub err_l2_u: Option<f64>,
    pub err_hdiv: Option<f64>,
    pub overshoot: Option<f64>,
}

/// Why an adaptive run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The estimator fell to the resolution floor (exactly representable
    /// solution).
    EstimatorFloor,
    /// The degree-of-freedom budget was reached.
    Budget,
    /// The step cap was reached.
    MaxSteps,
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptOptions {
    /// Dörfler marking fraction.
    pub theta: f64,
    /// Stop once a solve uses at least this many free unknowns.
    pub dof_budget: usize,
    /// Hard cap on the number of solves.
    pub max_steps: usize,
    /// Quadrature degree for assembly and indicators.
    pub quad_degree: usize,
    pub solver: SolverKind,
    /// Iterative-solver relative residual tolerance.
    pub tol: f64,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            dof_budget: 100_000,
            max_steps: 200,
            quad_degree: 4,
            solver: SolverKind::Auto,
            tol: 1e-10,
        }
    }
}

/// Final state of an adaptive run.
pub struct AdaptOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub mesh: Mesh,
    pub flux: FluxField,
    pub scalar: ScalarField,
    pub indicators: IndicatorField,
    pub stop: StopReason,
}

fn recover(
    mesh: &Mesh,
    problem: &Problem,
    flux: &FluxField,
    recovery: Recovery,
) -> Result<ScalarField, PostprocessError> {
    match recovery {
        Recovery::First => recover_u_first(mesh, problem, flux),
        Recovery::Second => recover_u_second(mesh, problem, flux),
    }
}

/// L² norm of the source over the initial mesh; scales the absolute
/// estimator floor below which refinement is pointless.
fn source_scale(mesh: &Mesh, problem: &Problem) -> f64 {
    let curve = problem.curve.as_ref();
    let mut sum = NeumaierSum::new();
    for k in 0..mesh.elements.len() {
        sum.add(integrate_element(mesh, k, curve, &mut |x| {
            let f = (problem.source)(x);
            f * f
        }));
    }
    sum.value().max(0.0).sqrt()
}

/// Callback invoked once per recorded step with the step's mesh and
/// discrete state.
pub type StepObserver<'a> =
    &'a mut dyn FnMut(&Mesh, &ConvergenceRecord, &ScalarField, &IndicatorField);

/// Runs the adaptive loop: assemble, solve, recover, estimate, record, mark,
/// bisect — until the estimator hits its floor, the budget is met, or the
/// step cap is reached. The returned outcome holds the full history and the
/// final discrete state.
pub fn adapt_loop(
    problem: &Problem,
    formulation: Formulation,
    recovery: Recovery,
    options: &AdaptOptions,
) -> Result<AdaptOutcome, AdaptError> {
    adapt_loop_observed(problem, formulation, recovery, options, &mut |_, _, _, _| {})
}

/// [`adapt_loop`] with a per-step observer, for callers that stream
/// artifacts or audit the marking while the loop runs.
pub fn adapt_loop_observed(
    problem: &Problem,
    formulation: Formulation,
    recovery: Recovery,
    options: &AdaptOptions,
    observer: StepObserver,
) -> Result<AdaptOutcome, AdaptError> {
    let mut mesh = problem.initial_mesh()?;
    let floor = 1e-10 * source_scale(&mesh, problem);
    let mut records: Vec<ConvergenceRecord> = Vec::new();

    for step in 0..options.max_steps.max(1) {
        let system = assemble(&mesh, problem, formulation, options.quad_degree)?;
        let dofs = system.n_free();
        let (flux, _) = solve(&mesh, &system, options.solver, options.tol)?;
        let scalar = recover(&mesh, problem, &flux, recovery)?;
        let field = indicators(&mesh, problem, formulation, &flux, options.quad_degree)?;
        let eta = field.total();

        let norms = match error_norms(&mesh, problem, &flux) {
            Ok(report) => Some(report),
            Err(PostprocessError::NoExactSolution(_)) => None,
            Err(err) => return Err(err.into()),
        };
        let overshoot = match &problem.overshoot {
            Some(window) => Some(overshoot_value(&mesh, &scalar, window)?),
            None => None,
        };

        if let Some(last) = records.last() {
            debug_assert!(dofs > last.dofs, "refinement must add unknowns");
        }
        let record = ConvergenceRecord {
            step,
            dofs,
            h_max: mesh.h_max(),
            eta,
            err_ls: norms.and_then(|r| match formulation {
                Formulation::Ls1 => r.ls1,
                Formulation::Ls2 => r.ls2,
            }),
            err_l2_u: norms.and_then(|r| match recovery {
                Recovery::First => r.l2_u_first,
                Recovery::Second => r.l2_u_second,
            }),
            err_hdiv: norms.map(|r| r.hdiv_sigma),
            overshoot,
        };
        observer(&mesh, &record, &scalar, &field);
        records.push(record);

        let stop = if eta <= floor {
            Some(StopReason::EstimatorFloor)
        } else if dofs >= options.dof_budget {
            Some(StopReason::Budget)
        } else if step + 1 >= options.max_steps {
            Some(StopReason::MaxSteps)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(AdaptOutcome {
                records,
                mesh,
                flux,
                scalar,
                indicators: field,
                stop,
            });
        }

        let marked = dorfler_mark(&field, options.theta);
        if marked.is_empty() {
            return Ok(AdaptOutcome {
                records,
                mesh,
                flux,
                scalar,
                indicators: field,
                stop: StopReason::EstimatorFloor,
            });
        }
        let mut refined = mesh.bisect(&marked)?;
        refined.snap_boundary()?;
        mesh = refined;
    }
    unreachable!("the loop always returns at the step cap");
}

/// Convenience wrapper: solves once on a given mesh and reports the record
/// plus the discrete state, without refining. Used by uniform studies.
pub fn solve_once(
    mesh: &Mesh,
    problem: &Problem,
    formulation: Formulation,
    recovery: Recovery,
    step: usize,
    options: &AdaptOptions,
) -> Result<(ConvergenceRecord, FluxField, ScalarField, IndicatorField), AdaptError> {
    let system = assemble(mesh, problem, formulation, options.quad_degree)?;
    let dofs = system.n_free();
    let (flux, _) = solve(mesh, &system, options.solver, options.tol)?;
    let scalar = recover(mesh, problem, &flux, recovery)?;
    let field = indicators(mesh, problem, formulation, &flux, options.quad_degree)?;
    let eta = field.total();
    let norms = match error_norms(mesh, problem, &flux) {
        Ok(report) => Some(report),
        Err(PostprocessError::NoExactSolution(_)) => None,
        Err(err) => return Err(err.into()),
    };
    let overshoot = match &problem.overshoot {
        Some(window) => Some(overshoot_value(mesh, &scalar, window)?),
        None => None,
    };
    let record = ConvergenceRecord {
        step,
        dofs,
        h_max: mesh.h_max(),
        eta,
        err_ls: norms.and_then(|r| match formulation {
            Formulation::Ls1 => r.ls1,
            Formulation::Ls2 => r.ls2,
        }),
        err_l2_u: norms.and_then(|r| match recovery {
            Recovery::First => r.l2_u_first,
            Recovery::Second => r.l2_u_second,
        }),
        err_hdiv: norms.map(|r| r.hdiv_sigma),
        overshoot,
    };
    Ok((record, flux, scalar, field))
}
