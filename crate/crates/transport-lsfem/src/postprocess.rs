//! Scalar recovery, least-squares functional evaluation, exact error norms,
//! outflow traces, and convergence-order estimation.

use std::sync::OnceLock;

use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::fem::{FluxField, ScalarField};
use crate::geom::{signed_area, triangle_diameter, Curve, Vec2};
use crate::mesh::{ElementId, Mesh};
use crate::problems::{beta_perp, Formulation, OvershootWindow, Problem, TraceSelector};
use crate::quadrature::{triangle_rule, TriangleRule, MAX_TRIANGLE_DEGREE};
use crate::NeumaierSum;

/// Recursion depth for splitting integration cells along a discontinuity
/// curve. Straight cuts resolve exactly after one level; circular cuts leave
/// a lens whose area shrinks cubically with each level.
const MAX_CUT_DEPTH: usize = 6;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("problem `{0}` has no reference solution to measure errors against")]
    NoExactSolution(String),
    #[error(
        "advection field is numerically zero at the centroid of element {element}; \
         the advective recovery u = σ·β/|β|² is undefined there"
    )]
    RecoveryBetaZero { element: ElementId },
    #[error(
        "reaction coefficient is numerically zero at the centroid of element {element}; \
         the divergence recovery u = (f − ∇·σ)/γ is undefined there"
    )]
    RecoveryGammaZero { element: ElementId },
    #[error("no boundary edges match the trace selector")]
    EmptyTrace,
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Piecewise-constant scalar recovery u = σ·β/|β|², one centroid value per
/// element.
pub fn recover_u_first(
    mesh: &Mesh,
    problem: &Problem,
    flux: &FluxField,
) -> Result<ScalarField, PostprocessError> {
    let mut values = Vec::with_capacity(mesh.elements.len());
    for k in 0..mesh.elements.len() {
        let c = mesh.element_centroid(k);
        let beta = (problem.beta)(c);
        let beta_sq = beta.norm_sq();
        if beta_sq < 1e-28 {
            return Err(PostprocessError::RecoveryBetaZero { element: k });
        }
        values.push(flux.eval(mesh, k, c).dot(beta) / beta_sq);
    }
    Ok(ScalarField {
        values,
        generation: mesh.generation,
    })
}

/// Piecewise-constant scalar recovery u = (f − ∇·σ)/γ, one centroid value
/// per element.
pub fn recover_u_second(
    mesh: &Mesh,
    problem: &Problem,
    flux: &FluxField,
) -> Result<ScalarField, PostprocessError> {
    let mut values = Vec::with_capacity(mesh.elements.len());
    for k in 0..mesh.elements.len() {
        let c = mesh.element_centroid(k);
        let gamma = (problem.gamma)(c);
        if gamma.abs() < 1e-14 {
            return Err(PostprocessError::RecoveryGammaZero { element: k });
        }
        values.push(((problem.source)(c) - flux.div(mesh, k)) / gamma);
    }
    Ok(ScalarField {
        values,
        generation: mesh.generation,
    })
}

/// Element contribution η²_K to the least-squares functional of `flux`.
pub fn element_indicator_sq(
    mesh: &Mesh,
    k: ElementId,
    problem: &Problem,
    formulation: Formulation,
    flux: &FluxField,
    rule: &TriangleRule,
) -> Result<f64, AssemblyError> {
    let coords = mesh.element_coords(k);
    let area = mesh.elements[k].area;
    let div_h = flux.div(mesh, k);
    let mut acc = 0.0;
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        let x = coords[0] * bary[0] + coords[1] * bary[1] + coords[2] * bary[2];
        let sigma = flux.eval(mesh, k, x);
        let beta = (problem.beta)(x);
        let gamma = (problem.gamma)(x);
        let f = (problem.source)(x);
        match formulation {
            Formulation::Ls1 => {
                let beta_sq = beta.norm_sq();
                if beta_sq < 1e-28 {
                    return Err(AssemblyError::ZeroAdvection {
                        element: k,
                        x: x.x,
                        y: x.y,
                    });
                }
                let residual = div_h + gamma / beta_sq * beta.dot(sigma) - f;
                let cross = sigma.dot(beta_perp(beta));
                acc += w * area * (residual * residual + cross * cross);
            }
            Formulation::Ls2 => {
                let weighted = sigma * gamma + beta * (div_h - f);
                acc += w * area * weighted.norm_sq();
            }
        }
    }
    Ok(acc)
}

/// Value of the least-squares functional J(flux) = Σ_K η²_K. Because the
/// functional coincides with the squared energy error |||σ − σ_h|||², its
/// square root is the energy error without reference to the exact flux.
pub fn functional_value(
    mesh: &Mesh,
    problem: &Problem,
    formulation: Formulation,
    flux: &FluxField,
    quad_degree: usize,
) -> Result<f64, AssemblyError> {
    let rule = triangle_rule(quad_degree);
    let mut sum = NeumaierSum::new();
    for k in 0..mesh.elements.len() {
        sum.add(element_indicator_sq(
            mesh,
            k,
            problem,
            formulation,
            flux,
            &rule,
        )?);
    }
    Ok(sum.value())
}

fn top_rule() -> &'static TriangleRule {
    static RULE: OnceLock<TriangleRule> = OnceLock::new();
    RULE.get_or_init(|| triangle_rule(MAX_TRIANGLE_DEGREE))
}

fn plain_integral(coords: [Vec2; 3], f: &mut dyn FnMut(Vec2) -> f64) -> f64 {
    let area = signed_area(coords[0], coords[1], coords[2]).abs();
    let rule = top_rule();
    let mut acc = 0.0;
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        let x = coords[0] * bary[0] + coords[1] * bary[1] + coords[2] * bary[2];
        acc += w * f(x);
    }
    acc * area
}

fn cut_integral(
    coords: [Vec2; 3],
    curve: &Curve,
    f: &mut dyn FnMut(Vec2) -> f64,
    depth: usize,
) -> f64 {
    let [a, b, c] = coords;
    let crossings = [
        curve.segment_crossings(a, b),
        curve.segment_crossings(b, c),
        curve.segment_crossings(c, a),
    ];
    let total: usize = crossings.iter().map(Vec::len).sum();
    if total == 0 || depth == 0 {
        return plain_integral(coords, f);
    }

    let point_on = |edge: usize, t: f64| -> Vec2 {
        let (p, q) = match edge {
            0 => (a, b),
            1 => (b, c),
            _ => (c, a),
        };
        p + (q - p) * t
    };
    let recurse = |tris: &[[Vec2; 3]], f: &mut dyn FnMut(Vec2) -> f64| -> f64 {
        tris.iter()
            .map(|t| cut_integral(*t, curve, f, depth - 1))
            .sum()
    };

    let cut_edges: Vec<usize> = (0..3).filter(|&e| !crossings[e].is_empty()).collect();
    if total == 2 && cut_edges.len() == 2 {
        // Generic cut: one vertex is isolated by the chord through the two
        // crossing points; split into three triangles along that chord.
        let (e0, e1) = (cut_edges[0], cut_edges[1]);
        let p0 = point_on(e0, crossings[e0][0]);
        let p1 = point_on(e1, crossings[e1][0]);
        // Edge i runs from vertex i to vertex i+1, so edges i and i+1 share
        // vertex i+1.
        let (iso, w1, w2, q1, q2) = match (e0, e1) {
            (0, 1) => (b, c, a, p1, p0),
            (1, 2) => (c, a, b, p1, p0),
            (0, 2) => (a, b, c, p0, p1),
            _ => unreachable!(),
        };
        return recurse(&[[iso, q1, q2], [q1, w1, w2], [q1, w2, q2]], f);
    }
    if total == 1 {
        // The curve enters through a vertex: split along the vertex–crossing
        // chord when the opposite vertex sits on the curve.
        let e = cut_edges[0];
        let q = point_on(e, crossings[e][0]);
        let (u, v, w) = match e {
            0 => (a, b, c),
            1 => (b, c, a),
            _ => (c, a, b),
        };
        let tol = 1e-12 * triangle_diameter(a, b, c).max(1.0);
        if curve.side(w).abs() <= tol {
            return recurse(&[[w, u, q], [w, q, v]], f);
        }
    }
    // Irregular cases (double crossings of one edge, near-tangency):
    // quadrisect and retry.
    let (mab, mbc, mca) = (a.midpoint(b), b.midpoint(c), c.midpoint(a));
    recurse(
        &[
            [a, mab, mca],
            [mab, b, mbc],
            [mca, mbc, c],
            [mab, mbc, mca],
        ],
        f,
    )
}

/// Integrates `f` over element `k` with the highest-degree rule, splitting
/// the element along `curve` where it is cut so that discontinuous
/// integrands are resolved accurately.
pub fn integrate_element(
    mesh: &Mesh,
    k: ElementId,
    curve: Option<&Curve>,
    f: &mut dyn FnMut(Vec2) -> f64,
) -> f64 {
    let coords = mesh.element_coords(k);
    match curve {
        None => plain_integral(coords, f),
        Some(c) => cut_integral(coords, c, f, MAX_CUT_DEPTH),
    }
}

/// Error norms of a computed flux against the problem's reference solution.
#[derive(Clone, Copy, Debug)]
pub struct NormReport {
    /// Energy error |||σ − σ_h|||₁ = √J₁(σ_h); `None` when β may vanish.
    pub ls1: Option<f64>,
    /// Energy error |||σ − σ_h|||₂ = √J₂(σ_h); `None` when γ may vanish.
    pub ls2: Option<f64>,
    /// ‖σ − σ_h‖₀.
    pub l2_sigma: f64,
    /// ‖σ − σ_h‖_{H(div)}.
    pub hdiv_sigma: f64,
    /// ‖u − u_h‖₀ for the advective recovery; `None` when β may vanish.
    pub l2_u_first: Option<f64>,
    /// ‖u − u_h‖₀ for the divergence recovery; `None` when γ may vanish.
    pub l2_u_second: Option<f64>,
}

/// Computes every applicable error norm of `flux`. Every norm — including
/// the energy errors, which are residual integrals — uses the
/// highest-degree quadrature rule with curve splitting on cut elements.
pub fn error_norms(
    mesh: &Mesh,
    problem: &Problem,
    flux: &FluxField,
) -> Result<NormReport, PostprocessError> {
    let exact_u = problem
        .exact_u
        .as_ref()
        .ok_or_else(|| PostprocessError::NoExactSolution(problem.name.to_string()))?;
    let curve = problem.curve.as_ref();

    let first = if problem.beta_min > 0.0 {
        Some(recover_u_first(mesh, problem, flux)?)
    } else {
        None
    };
    let second = if problem.gamma_min > 0.0 {
        Some(recover_u_second(mesh, problem, flux)?)
    } else {
        None
    };

    let mut l2_sigma_sq = NeumaierSum::new();
    let mut div_err_sq = NeumaierSum::new();
    let mut ls1_sq = NeumaierSum::new();
    let mut ls2_sq = NeumaierSum::new();
    let mut first_err_sq = NeumaierSum::new();
    let mut second_err_sq = NeumaierSum::new();
    for k in 0..mesh.elements.len() {
        let div_h = flux.div(mesh, k);
        l2_sigma_sq.add(integrate_element(mesh, k, curve, &mut |x| {
            let sigma = (problem.beta)(x) * exact_u(x);
            (sigma - flux.eval(mesh, k, x)).norm_sq()
        }));
        // The energy errors equal the square roots of the least-squares
        // functionals, so they are integrals of the computed residual alone.
        // The residual integrand jumps wherever the source data jumps, so it
        // is integrated on the same curve-split rule as the exact-error
        // norms; the plain-rule functional would otherwise pollute measured
        // rates near a discontinuity that cuts through elements.
        if problem.beta_min > 0.0 {
            ls1_sq.add(integrate_element(mesh, k, curve, &mut |x| {
                let beta = (problem.beta)(x);
                let sigma = flux.eval(mesh, k, x);
                let residual =
                    div_h + (problem.gamma)(x) / beta.norm_sq() * beta.dot(sigma)
                        - (problem.source)(x);
                let cross = sigma.dot(beta_perp(beta));
                residual * residual + cross * cross
            }));
        }
        if problem.gamma_min > 0.0 {
            ls2_sq.add(integrate_element(mesh, k, curve, &mut |x| {
                let beta = (problem.beta)(x);
                let sigma = flux.eval(mesh, k, x);
                (sigma * (problem.gamma)(x) + beta * (div_h - (problem.source)(x))).norm_sq()
            }));
        }
        div_err_sq.add(integrate_element(mesh, k, curve, &mut |x| {
            let div_exact = (problem.source)(x) - (problem.gamma)(x) * exact_u(x);
            let d = div_exact - div_h;
            d * d
        }));
        if let Some(u) = &first {
            let value = u.values[k];
            first_err_sq.add(integrate_element(mesh, k, curve, &mut |x| {
                let d = exact_u(x) - value;
                d * d
            }));
        }
        if let Some(u) = &second {
            let value = u.values[k];
            second_err_sq.add(integrate_element(mesh, k, curve, &mut |x| {
                let d = exact_u(x) - value;
                d * d
            }));
        }
    }

    let ls1 = (problem.beta_min > 0.0).then(|| ls1_sq.value().max(0.0).sqrt());
    let ls2 = (problem.gamma_min > 0.0).then(|| ls2_sq.value().max(0.0).sqrt());

    let l2_sigma = l2_sigma_sq.value().max(0.0).sqrt();
    let hdiv_sigma = (l2_sigma_sq.value().max(0.0) + div_err_sq.value().max(0.0)).sqrt();
    Ok(NormReport {
        ls1,
        ls2,
        l2_sigma,
        hdiv_sigma,
        l2_u_first: first.map(|_| first_err_sq.value().max(0.0).sqrt()),
        l2_u_second: second.map(|_| second_err_sq.value().max(0.0).sqrt()),
    })
}

/// Samples a piecewise-constant field along the boundary edges picked by
/// `selector`: one (edge x-midpoint, element value) pair per element owning a
/// selected edge, sorted by x. Errors when the selector matches nothing.
pub fn outflow_trace(
    mesh: &Mesh,
    u: &ScalarField,
    selector: &TraceSelector,
) -> Result<Vec<(f64, f64)>, PostprocessError> {
    let mut seen = vec![false; mesh.elements.len()];
    let mut samples = Vec::new();
    for e in 0..mesh.edges.len() {
        if !selector.matches(mesh, e) {
            continue;
        }
        let owner = mesh.edges[e].elements[0].expect("boundary edge with no element");
        if seen[owner] {
            continue;
        }
        seen[owner] = true;
        samples.push((mesh.edge_midpoint(e).x, u.value(mesh, owner)));
    }
    if samples.is_empty() {
        return Err(PostprocessError::EmptyTrace);
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(samples)
}

/// Largest excursion of the trace beyond the admissible window, floored at
/// zero.
pub fn overshoot_value(
    mesh: &Mesh,
    u: &ScalarField,
    window: &OvershootWindow,
) -> Result<f64, PostprocessError> {
    let trace = outflow_trace(mesh, u, &window.selector)?;
    let mut worst = 0.0f64;
    for (_, value) in trace {
        worst = worst.max(value - window.upper).max(window.lower - value);
    }
    Ok(worst)
}

/// Pairwise convergence orders log(e_i/e_{i+1}) / log(√(N_{i+1}/N_i));
/// entries are NaN where an error vanishes or grows.
pub fn pairwise_orders(dofs: &[usize], errors: &[f64]) -> Vec<f64> {
    assert_eq!(dofs.len(), errors.len());
    let mut orders = Vec::new();
    for i in 0..dofs.len().saturating_sub(1) {
        let (e0, e1) = (errors[i], errors[i + 1]);
        let ratio = (dofs[i + 1] as f64 / dofs[i] as f64).sqrt();
        if e0 > 0.0 && e1 > 0.0 && ratio > 1.0 {
            orders.push((e0 / e1).ln() / ratio.ln());
        } else {
            orders.push(f64::NAN);
        }
    }
    orders
}

/// Least-squares slope of log e against log(1/√N) over the last (up to)
/// four records; NaN when fewer than two usable records exist.
pub fn fitted_order(dofs: &[usize], errors: &[f64]) -> f64 {
    assert_eq!(dofs.len(), errors.len());
    let usable: Vec<(f64, f64)> = dofs
        .iter()
        .zip(errors)
        .filter(|&(&n, &e)| n > 0 && e > 0.0)
        .map(|(&n, &e)| (-0.5 * (n as f64).ln(), e.ln()))
        .collect();
    let window = &usable[usable.len().saturating_sub(4)..];
    if window.len() < 2 {
        return f64::NAN;
    }
    let n = window.len() as f64;
    let mean_x = window.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = window.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in window {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        return f64::NAN;
    }
    cov / var
}
