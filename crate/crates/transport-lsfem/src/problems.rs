//! Catalog of linear transport problems ∇·(βu) + γu = f with inflow data
//! u = g on the inflow boundary.
//!
//! Each entry bundles the coefficient and data closures, the reference
//! solution when one is known, the location of any solution discontinuity,
//! the initial mesh recipe, and static lower bounds on |β| and γ that decide
//! which formulations and scalar recoveries are applicable.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use thiserror::Error;

use crate::geom::{Curve, Vec2};
use crate::mesh::{self, BoundaryClass, EdgeId, Mesh, MeshError};

/// Which least-squares functional drives the discrete problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Streamline/crosswind splitting; requires |β| > 0 on the whole domain.
    Ls1,
    /// Reaction-weighted form; well posed only when γ > 0 somewhere.
    Ls2,
}

/// How the scalar solution is recovered from the computed flux.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Recovery {
    /// u = σ·β / |β|²; requires |β| > 0.
    First,
    /// u = (f − ∇·σ) / γ; requires γ > 0.
    Second,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Ls1 => "ls1",
            Formulation::Ls2 => "ls2",
        })
    }
}

impl std::fmt::Display for Recovery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Recovery::First => "first",
            Recovery::Second => "second",
        })
    }
}

impl std::str::FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ls1" => Ok(Formulation::Ls1),
            "ls2" => Ok(Formulation::Ls2),
            other => Err(format!("unknown formulation `{other}` (expected ls1 or ls2)")),
        }
    }
}

impl std::str::FromStr for Recovery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Recovery::First),
            "second" => Ok(Recovery::Second),
            other => Err(format!("unknown recovery `{other}` (expected first or second)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    Unknown(String),
    #[error("problem `{0}` has no reference solution")]
    NoExactSolution(String),
    #[error("point ({x}, {y}) lies within 1e-12 of the solution discontinuity")]
    OnDiscontinuity { x: f64, y: f64 },
}

/// Initial mesh construction recipe for a problem's domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshRecipe {
    /// Unit square split into n×n cells, each cut along its SW–NE diagonal.
    AlignedSquare { n: usize },
    /// The (0,2)×(0,1) rectangle split into four triangles around the
    /// interior nodes (π/3, 0) and (1, 1).
    SplitRectangle,
    /// Unit-square strip mesh with staggered columns of size h (1/h must be
    /// an even integer).
    Peterson { h: f64 },
    /// Upper half of the unit disk, with arc vertices hooked to the circle.
    HalfDisk,
}

impl MeshRecipe {
    pub fn build(&self) -> Result<Mesh, MeshError> {
        match *self {
            MeshRecipe::AlignedSquare { n } => Ok(mesh::aligned_square(n)),
            MeshRecipe::SplitRectangle => Ok(mesh::split_rectangle()),
            MeshRecipe::Peterson { h } => mesh::peterson(h),
            MeshRecipe::HalfDisk => Ok(mesh::half_disk()),
        }
    }
}

/// Selects the boundary edges whose element values form an outflow trace.
#[derive(Clone, Copy, Debug)]
pub enum TraceSelector {
    /// Outflow edges lying on the horizontal line y = y0.
    OutflowAtY(f64),
}

impl TraceSelector {
    pub fn matches(&self, mesh: &Mesh, edge: EdgeId) -> bool {
        let e = &mesh.edges[edge];
        match *self {
            TraceSelector::OutflowAtY(y0) => {
                e.class == BoundaryClass::Outflow
                    && e.vertices
                        .iter()
                        .all(|&v| (mesh.vertices[v].pos.y - y0).abs() <= 1e-9)
            }
        }
    }
}

/// Admissible band for the recovered solution along an outflow trace;
/// excursions beyond it count as over/undershoot.
#[derive(Clone, Copy, Debug)]
pub struct OvershootWindow {
    pub lower: f64,
    pub upper: f64,
    pub selector: TraceSelector,
}

pub type ScalarFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;

/// A transport problem instance: coefficients, data, reference solution, and
/// discretization hints.
pub struct Problem {
    pub name: &'static str,
    pub title: &'static str,
    /// Advection field β.
    pub beta: VectorFn,
    /// Reaction coefficient γ.
    pub gamma: ScalarFn,
    /// Right-hand side f.
    pub source: ScalarFn,
    /// Inflow boundary data g.
    pub inflow: ScalarFn,
    /// Reference solution u, when known in closed form.
    pub exact_u: Option<ScalarFn>,
    /// Location of the solution discontinuity or sharp layer, when any.
    pub curve: Option<Curve>,
    pub recipe: MeshRecipe,
    /// Trace window for over/undershoot measurement, when the experiment
    /// calls for one.
    pub overshoot: Option<OvershootWindow>,
    /// Greatest lower bound of |β| over the closed domain (0 when β may
    /// vanish or is only bounded away from zero on part of it).
    pub beta_min: f64,
    /// Greatest lower bound of γ over the closed domain.
    pub gamma_min: f64,
}

impl Problem {
    pub fn supports(&self, formulation: Formulation) -> bool {
        match formulation {
            Formulation::Ls1 => self.beta_min > 0.0,
            Formulation::Ls2 => self.gamma_min > 0.0,
        }
    }

    pub fn supports_recovery(&self, recovery: Recovery) -> bool {
        match recovery {
            Recovery::First => self.beta_min > 0.0,
            Recovery::Second => self.gamma_min > 0.0,
        }
    }

    /// Builds the initial mesh and classifies its boundary against β.
    pub fn initial_mesh(&self) -> Result<Mesh, MeshError> {
        let mut mesh = self.recipe.build()?;
        let beta = |p: Vec2| (self.beta)(p);
        mesh.classify_boundary(&beta, 1e-12);
        Ok(mesh)
    }

    /// Reference flux pair (σ, ∇·σ) = (βu, f − γu) at `p`.
    ///
    /// Errors when the problem has no reference solution or when `p` lies
    /// within 1e-12 of the discontinuity, where the flux is ambiguous.
    pub fn exact_sigma(&self, p: Vec2) -> Result<(Vec2, f64), ProblemError> {
        let u = self
            .exact_u
            .as_ref()
            .ok_or_else(|| ProblemError::NoExactSolution(self.name.to_string()))?;
        if let Some(curve) = &self.curve {
            if curve.side(p).abs() <= 1e-12 {
                return Err(ProblemError::OnDiscontinuity { x: p.x, y: p.y });
            }
        }
        let value = u(p);
        Ok((
            (self.beta)(p) * value,
            (self.source)(p) - (self.gamma)(p) * value,
        ))
    }
}

/// Unit crosswind direction: β rotated counterclockwise by 90° and
/// normalized. Panics on a (numerically) zero advection vector, where no
/// crosswind direction exists.
pub fn beta_perp(beta: Vec2) -> Vec2 {
    let norm = beta.norm();
    assert!(
        norm >= 1e-14,
        "beta_perp: advection vector ({}, {}) is numerically zero",
        beta.x,
        beta.y
    );
    beta.perp() / norm
}

/// Tunable knobs for the built-in problems; fields are ignored by problems
/// they do not apply to.
#[derive(Clone, Copy, Debug)]
pub struct ProblemParams {
    /// Layer width for `ex58_layer`.
    pub epsilon: f64,
    /// Initial mesh size for `ex53_peterson`; 1/h must be an even integer.
    pub peterson_h: f64,
    /// Cells per side of the initial mesh on unit-square domains.
    pub square_n: usize,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            peterson_h: 1.0 / 6.0,
            square_n: 4,
        }
    }
}

/// Names of the built-in problems, in catalog order.
pub fn names() -> &'static [&'static str] {
    &[
        "ex51",
        "ex52",
        "ex53_peterson",
        "ex54",
        "ex55",
        "ex56",
        "ex57_curved",
        "ex58_layer",
    ]
}

/// Looks up a built-in problem by name.
pub fn builtin(name: &str, params: &ProblemParams) -> Result<Problem, ProblemError> {
    match name {
        "ex51" => Ok(ex51(params)),
        "ex52" => Ok(ex52(params)),
        "ex53_peterson" => Ok(ex53_peterson(params)),
        "ex54" => Ok(ex54(params)),
        "ex55" => Ok(ex55()),
        "ex56" => Ok(ex56(params)),
        "ex57_curved" => Ok(ex57_curved()),
        "ex58_layer" => Ok(ex58_layer(params)),
        other => Err(ProblemError::Unknown(other.to_string())),
    }
}

/// Constant advection along the diagonal carrying a unit step whose jump
/// line y = x is a union of mesh edges, so the discrete flux space contains
/// the exact flux.
fn ex51(params: &ProblemParams) -> Problem {
    let b = FRAC_1_SQRT_2;
    let curve = Curve::Line {
        point: Vec2::new(0.0, 0.0),
        normal: Vec2::new(-b, b),
    };
    let step: ScalarFn = Arc::new(move |p| if curve.side(p) > 0.0 { 1.0 } else { 0.0 });
    Problem {
        name: "ex51",
        title: "advected step aligned with the mesh",
        beta: Arc::new(move |_| Vec2::new(b, b)),
        gamma: Arc::new(|_| 1.0),
        source: step.clone(),
        inflow: step.clone(),
        exact_u: Some(step),
        curve: Some(curve),
        recipe: MeshRecipe::AlignedSquare { n: params.square_n },
        overshoot: None,
        beta_min: 1.0,
        gamma_min: 1.0,
    }
}

/// Globally smooth solution sin(x + y); the baseline first-order convergence
/// case for every formulation/recovery combination.
fn ex52(params: &ProblemParams) -> Problem {
    let u: ScalarFn = Arc::new(|p| (p.x + p.y).sin());
    Problem {
        name: "ex52",
        title: "globally smooth solution",
        beta: Arc::new(|_| Vec2::new(1.0, 1.0)),
        gamma: Arc::new(|_| 1.0),
        source: Arc::new(|p| 2.0 * (p.x + p.y).cos() + (p.x + p.y).sin()),
        inflow: u.clone(),
        exact_u: Some(u),
        curve: None,
        recipe: MeshRecipe::AlignedSquare { n: params.square_n },
        overshoot: None,
        beta_min: SQRT_2,
        gamma_min: 1.0,
    }
}

/// Pure vertical advection of u = x on the staggered Peterson mesh family,
/// the classical worst case for the L² convergence rate of the scalar.
fn ex53_peterson(params: &ProblemParams) -> Problem {
    let u: ScalarFn = Arc::new(|p| p.x);
    Problem {
        name: "ex53_peterson",
        title: "linear profile on the Peterson mesh family",
        beta: Arc::new(|_| Vec2::new(0.0, 1.0)),
        gamma: Arc::new(|_| 0.0),
        source: Arc::new(|_| 0.0),
        inflow: u.clone(),
        exact_u: Some(u),
        curve: None,
        recipe: MeshRecipe::Peterson {
            h: params.peterson_h,
        },
        overshoot: None,
        beta_min: 1.0,
        gamma_min: 0.0,
    }
}

/// Piecewise smooth solution (sin above, cos below the diagonal) whose jump
/// line is carried by the mesh; both pieces are transported along the same
/// characteristic direction as ex51.
fn ex54(params: &ProblemParams) -> Problem {
    let b = FRAC_1_SQRT_2;
    let curve = Curve::Line {
        point: Vec2::new(0.0, 0.0),
        normal: Vec2::new(-b, b),
    };
    let u: ScalarFn = Arc::new(move |p| {
        if curve.side(p) > 0.0 {
            (p.x + p.y).sin()
        } else {
            (p.x + p.y).cos()
        }
    });
    Problem {
        name: "ex54",
        title: "piecewise smooth solution on a matching grid",
        beta: Arc::new(move |_| Vec2::new(b, b)),
        gamma: Arc::new(|_| 1.0),
        source: Arc::new(move |p| {
            let s = p.x + p.y;
            if curve.side(p) > 0.0 {
                SQRT_2 * s.cos() + s.sin()
            } else {
                -SQRT_2 * s.sin() + s.cos()
            }
        }),
        inflow: u.clone(),
        exact_u: Some(u),
        curve: Some(curve),
        recipe: MeshRecipe::AlignedSquare { n: params.square_n },
        overshoot: None,
        beta_min: 1.0,
        gamma_min: 1.0,
    }
}

/// Vertical advection on (0,2)×(0,1) of a boundary step at x = π/3: the jump
/// line starts at a mesh vertex but no refinement ever aligns with it, so the
/// outflow trace at y = 1 over/undershoots the exact band [1 − 1/e, 1].
fn ex55() -> Problem {
    let curve = Curve::Line {
        point: Vec2::new(PI / 3.0, 0.0),
        normal: Vec2::new(1.0, 0.0),
    };
    let u: ScalarFn = Arc::new(move |p| {
        if curve.side(p) > 0.0 {
            1.0
        } else {
            1.0 - (-p.y).exp()
        }
    });
    Problem {
        name: "ex55",
        title: "piecewise continuous solution on a non-matching grid",
        beta: Arc::new(|_| Vec2::new(0.0, 1.0)),
        gamma: Arc::new(|_| 1.0),
        source: Arc::new(|_| 1.0),
        inflow: Arc::new(|p| if p.x > PI / 3.0 { 1.0 } else { 0.0 }),
        exact_u: Some(u),
        curve: Some(curve),
        recipe: MeshRecipe::SplitRectangle,
        overshoot: Some(OvershootWindow {
            lower: 1.0 - (-1.0f64).exp(),
            upper: 1.0,
            selector: TraceSelector::OutflowAtY(1.0),
        }),
        beta_min: 1.0,
        gamma_min: 1.0,
    }
}

/// Slightly rotated advection (angle 1/8 from vertical) with a sin/cos jump
/// carried along the characteristic through the origin; no refinement of the
/// square mesh ever matches the jump line.
fn ex56(params: &ProblemParams) -> Problem {
    let (sn, cs) = (0.125f64.sin(), 0.125f64.cos());
    let curve = Curve::Line {
        point: Vec2::new(0.0, 0.0),
        normal: Vec2::new(-cs, sn),
    };
    let u: ScalarFn = Arc::new(move |p| {
        if curve.side(p) > 0.0 {
            (p.x + p.y).sin()
        } else {
            (p.x + p.y).cos()
        }
    });
    Problem {
        name: "ex56",
        title: "piecewise smooth solution on a non-matching grid",
        beta: Arc::new(move |_| Vec2::new(sn, cs)),
        gamma: Arc::new(|_| 1.0),
        source: Arc::new(move |p| {
            let s = p.x + p.y;
            if curve.side(p) > 0.0 {
                (sn + cs) * s.cos() + s.sin()
            } else {
                -(sn + cs) * s.sin() + s.cos()
            }
        }),
        inflow: u.clone(),
        exact_u: Some(u),
        curve: Some(curve),
        recipe: MeshRecipe::AlignedSquare { n: params.square_n },
        overshoot: None,
        beta_min: 1.0,
        gamma_min: 1.0,
    }
}

/// Rigid rotation about the origin on the upper half disk: a step entering
/// on the left half of the diameter is transported along circular arcs to
/// the right half, crossing element edges everywhere.
fn ex57_curved() -> Problem {
    let curve = Curve::Circle {
        center: Vec2::new(0.0, 0.0),
        radius: 0.5,
    };
    let u: ScalarFn = Arc::new(move |p| if curve.side(p) > 0.0 { 1.0 } else { 0.0 });
    Problem {
        name: "ex57_curved",
        title: "circular transport of a boundary step on a half disk",
        beta: Arc::new(|p: Vec2| {
            let r = p.norm();
            if r == 0.0 {
                Vec2::new(0.0, 0.0)
            } else {
                Vec2::new(p.y, -p.x) / r
            }
        }),
        gamma: Arc::new(|_| 0.0),
        source: Arc::new(|_| 0.0),
        inflow: Arc::new(|p| if p.x < -0.5 { 1.0 } else { 0.0 }),
        exact_u: Some(u),
        curve: Some(curve),
        recipe: MeshRecipe::HalfDisk,
        overshoot: Some(OvershootWindow {
            lower: 0.0,
            upper: 1.0,
            selector: TraceSelector::OutflowAtY(0.0),
        }),
        beta_min: 1.0,
        gamma_min: 0.0,
    }
}

/// Rotation about (0, −1) with an arctan profile across the circle r = 1.5:
/// a resolvable layer for moderate ε, effectively a discontinuity as ε → 0.
fn ex58_layer(params: &ProblemParams) -> Problem {
    let eps = params.epsilon;
    let gamma = 0.1;
    let radius = |p: Vec2| (p.x * p.x + (p.y + 1.0) * (p.y + 1.0)).sqrt();
    let u: ScalarFn = Arc::new(move |p| {
        let r = radius(p);
        let angle = ((p.y + 1.0) / r).clamp(-1.0, 1.0).asin();
        0.25 * (gamma * r * angle).exp() * ((r - 1.5) / eps).atan()
    });
    Problem {
        name: "ex58_layer",
        title: "smooth solution with a sharp circular interior layer",
        beta: Arc::new(move |p| Vec2::new(p.y + 1.0, -p.x) / radius(p)),
        gamma: Arc::new(move |_| gamma),
        source: Arc::new(|_| 0.0),
        inflow: u.clone(),
        exact_u: Some(u),
        curve: Some(Curve::Circle {
            center: Vec2::new(0.0, -1.0),
            radius: 1.5,
        }),
        recipe: MeshRecipe::AlignedSquare { n: params.square_n },
        overshoot: None,
        beta_min: 1.0,
        gamma_min: gamma,
    }
}
