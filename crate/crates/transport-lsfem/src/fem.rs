//! Lowest-order Raviart–Thomas flux fields and piecewise-constant scalars.
//!
//! A flux field carries one degree of freedom per mesh edge: the integral
//! of the normal component across that edge, taken with respect to the
//! edge's stored global normal. The local basis function attached to local
//! edge `i` (opposite local vertex `i`) of an element with area `A` and
//! orientation sign `sᵢ` is
//!
//! ```text
//! φᵢ(x) = sᵢ (x − pᵢ) / (2A),     div φᵢ = sᵢ / A,
//! ```
//!
//! which satisfies the duality relation ∫_{eⱼ} φᵢ·nⱼ ds = δᵢⱼ. Fields
//! remember the mesh generation they were built on and refuse evaluation
//! elsewhere.

use crate::geom::{Curve, Vec2};
use crate::mesh::{ElementId, Mesh};
use crate::quadrature::edge_rule;

/// Flux (vector) field in the lowest-order Raviart–Thomas space, stored as
/// one normal-flux value per edge.
#[derive(Clone, Debug)]
pub struct FluxField {
    pub dofs: Vec<f64>,
    pub generation: u32,
}

impl FluxField {
    pub fn zeros(mesh: &Mesh) -> Self {
        FluxField {
            dofs: vec![0.0; mesh.edges.len()],
            generation: mesh.generation,
        }
    }

    fn check_generation(&self, mesh: &Mesh) {
        assert_eq!(
            self.generation, mesh.generation,
            "flux field was built on mesh generation {}, not {}",
            self.generation, mesh.generation
        );
    }

    /// Value of the field at point `x` inside element `k`.
    pub fn eval(&self, mesh: &Mesh, k: ElementId, x: Vec2) -> Vec2 {
        self.check_generation(mesh);
        let basis = rt0_basis(mesh, k, x);
        let e = mesh.elements[k].edges;
        basis[0] * self.dofs[e[0]] + basis[1] * self.dofs[e[1]] + basis[2] * self.dofs[e[2]]
    }

    /// Divergence of the field on element `k` (constant per element).
    pub fn div(&self, mesh: &Mesh, k: ElementId) -> f64 {
        self.check_generation(mesh);
        let div = rt0_div(mesh, k);
        let e = mesh.elements[k].edges;
        div[0] * self.dofs[e[0]] + div[1] * self.dofs[e[1]] + div[2] * self.dofs[e[2]]
    }
}

/// Piecewise-constant scalar field, one value per element.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub generation: u32,
}

impl ScalarField {
    pub fn value(&self, mesh: &Mesh, k: ElementId) -> f64 {
        assert_eq!(
            self.generation, mesh.generation,
            "scalar field was built on mesh generation {}, not {}",
            self.generation, mesh.generation
        );
        self.values[k]
    }
}

/// Values of the three local basis functions of element `k` at `x`.
pub fn rt0_basis(mesh: &Mesh, k: ElementId, x: Vec2) -> [Vec2; 3] {
    let el = &mesh.elements[k];
    let coords = mesh.element_coords(k);
    let scale = 1.0 / (2.0 * el.area);
    std::array::from_fn(|i| (x - coords[i]) * (el.signs[i] * scale))
}

/// Divergences of the three local basis functions of element `k`.
pub fn rt0_div(mesh: &Mesh, k: ElementId) -> [f64; 3] {
    let el = &mesh.elements[k];
    std::array::from_fn(|i| el.signs[i] / el.area)
}

/// Canonical interpolation of an exact flux onto the Raviart–Thomas space:
/// each edge dof is the 5-point Gauss approximation of ∫_e σ·n ds.
///
/// `curve` marks a discontinuity interface of σ. Edge integrals are split
/// at transversal crossings so each sub-segment is evaluated on one side
/// only, and quadrature points of edges lying *on* the curve are nudged to
/// the positive side before evaluating (the normal component of an H(div)
/// flux is single-valued there, so either side would do).
pub fn interpolate_rt0(
    mesh: &Mesh,
    sigma: &dyn Fn(Vec2) -> Vec2,
    curve: Option<&Curve>,
) -> FluxField {
    let (nodes, weights) = edge_rule();
    let mut dofs = vec![0.0; mesh.edges.len()];
    for (e, edge) in mesh.edges.iter().enumerate() {
        let a = mesh.vertices[edge.vertices[0]].pos;
        let b = mesh.vertices[edge.vertices[1]].pos;
        let n = edge.normal;
        let len = edge.length;

        let mut pieces: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        let mut on_curve = false;
        if let Some(c) = curve {
            let atol = 1e-12 * len;
            if c.side(a).abs() <= atol && c.side(b).abs() <= atol {
                on_curve = true;
            } else {
                let crossings = c.segment_crossings(a, b);
                if !crossings.is_empty() {
                    pieces.clear();
                    let mut t0 = 0.0;
                    for t in crossings {
                        pieces.push((t0, t));
                        t0 = t;
                    }
                    pieces.push((t0, 1.0));
                }
            }
        }

        let mut integral = 0.0;
        for (t0, t1) in pieces {
            for (t, w) in nodes.iter().zip(&weights) {
                let mut p = a + (b - a) * (t0 + (t1 - t0) * t);
                if on_curve {
                    // Push the evaluation point just off the interface.
                    let c = curve.expect("on_curve implies a curve");
                    p = p + c.gradient_dir(p) * (1e-7 * len);
                }
                integral += w * (t1 - t0) * sigma(p).dot(n);
            }
        }
        dofs[e] = len * integral;
    }
    FluxField {
        dofs,
        generation: mesh.generation,
    }
}
