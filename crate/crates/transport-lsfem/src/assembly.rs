//! Global assembly of the least-squares systems over the lowest-order
//! Raviart–Thomas space.
//!
//! Inflow fluxes are imposed strongly: each inflow edge's degree of freedom
//! is fixed to ∫_e (β·n) g ds and eliminated symmetrically (its columns are
//! folded into the right-hand side), so the assembled system stays symmetric
//! positive definite over the free edges.

use thiserror::Error;

use crate::fem::{rt0_basis, rt0_div};
use crate::geom::Vec2;
use crate::mesh::{BoundaryClass, EdgeId, ElementId, Mesh};
use crate::problems::{beta_perp, Formulation, Problem};
use crate::quadrature::{edge_rule, triangle_rule, TriangleRule};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(
        "advection field vanishes at ({x}, {y}) in element {element}; \
         the streamline formulation requires |β| > 0 everywhere"
    )]
    ZeroAdvection { element: ElementId, x: f64, y: f64 },
}

/// Two-way map between mesh edges and free degrees of freedom. Inflow edges
/// carry prescribed fluxes and have no free index.
#[derive(Clone, Debug)]
pub struct DofMap {
    /// Edge id → free-dof index; `None` for constrained (inflow) edges.
    pub index: Vec<Option<usize>>,
    /// Free-dof index → edge id.
    pub edges: Vec<EdgeId>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut index = vec![None; mesh.edges.len()];
        let mut edges = Vec::new();
        for (e, edge) in mesh.edges.iter().enumerate() {
            if edge.class != BoundaryClass::Inflow {
                index[e] = Some(edges.len());
                edges.push(e);
            }
        }
        Self { index, edges }
    }

    pub fn n_free(&self) -> usize {
        self.edges.len()
    }
}

/// Assembled symmetric positive definite system over the free edge fluxes.
#[derive(Debug)]
pub struct LinearSystem {
    /// Matrix entries as (row, col, value) over free-dof indices; duplicate
    /// positions are summed.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub dof_map: DofMap,
    /// Prescribed flux per inflow edge, ascending edge id.
    pub constrained: Vec<(EdgeId, f64)>,
}

impl LinearSystem {
    pub fn n_free(&self) -> usize {
        self.dof_map.n_free()
    }

    /// Dense copy of the matrix; intended for small systems and tests.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_free();
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, v) in &self.triplets {
            a[i][j] += v;
        }
        a
    }

    /// Matrix-vector product from the raw triplets.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_free()];
        for &(i, j, v) in &self.triplets {
            y[i] += v * x[j];
        }
        y
    }
}

/// Prescribed flux ∫_e (β·n) g ds for every inflow edge, ascending edge id.
pub fn inflow_values(mesh: &Mesh, problem: &Problem) -> Vec<(EdgeId, f64)> {
    let (nodes, weights) = edge_rule();
    mesh.boundary_edges(BoundaryClass::Inflow)
        .map(|e| {
            let edge = &mesh.edges[e];
            let [a, b] = edge.vertices;
            let (pa, pb) = (mesh.vertices[a].pos, mesh.vertices[b].pos);
            let mut value = 0.0;
            for (&t, &w) in nodes.iter().zip(&weights) {
                let p = pa + (pb - pa) * t;
                value += w * (problem.beta)(p).dot(edge.normal) * (problem.inflow)(p);
            }
            (e, value * edge.length)
        })
        .collect()
}

/// Local 3×3 least-squares matrix and load vector on element `k`.
///
/// The basis functions already carry the edge-orientation signs, so the
/// returned entries couple global edge fluxes directly.
pub fn element_matrix(
    mesh: &Mesh,
    k: ElementId,
    problem: &Problem,
    formulation: Formulation,
    rule: &TriangleRule,
) -> Result<([[f64; 3]; 3], [f64; 3]), AssemblyError> {
    let coords = mesh.element_coords(k);
    let area = mesh.elements[k].area;
    let div = rt0_div(mesh, k);
    let mut a = [[0.0; 3]; 3];
    let mut load = [0.0; 3];
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        let x = coords[0] * bary[0] + coords[1] * bary[1] + coords[2] * bary[2];
        let phi = rt0_basis(mesh, k, x);
        let beta = (problem.beta)(x);
        let gamma = (problem.gamma)(x);
        let f = (problem.source)(x);
        let wa = w * area;
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
                let gamma_tilde = gamma / beta_sq;
                let crosswind = beta_perp(beta);
                let mut streamline = [0.0; 3];
                let mut cross = [0.0; 3];
                for i in 0..3 {
                    streamline[i] = div[i] + gamma_tilde * beta.dot(phi[i]);
                    cross[i] = phi[i].dot(crosswind);
                }
                for i in 0..3 {
                    load[i] += wa * f * streamline[i];
                    for j in 0..3 {
                        a[i][j] += wa * (streamline[i] * streamline[j] + cross[i] * cross[j]);
                    }
                }
            }
            Formulation::Ls2 => {
                let mut weighted = [Vec2::default(); 3];
                for i in 0..3 {
                    weighted[i] = phi[i] * gamma + beta * div[i];
                }
                for i in 0..3 {
                    load[i] += wa * f * (beta.norm_sq() * div[i] + gamma * beta.dot(phi[i]));
                    for j in 0..3 {
                        a[i][j] += wa * weighted[i].dot(weighted[j]);
                    }
                }
            }
        }
    }
    Ok((a, load))
}

/// Assembles the least-squares system for `problem` on `mesh` with the given
/// quadrature degree.
pub fn assemble(
    mesh: &Mesh,
    problem: &Problem,
    formulation: Formulation,
    quad_degree: usize,
) -> Result<LinearSystem, AssemblyError> {
    let rule = triangle_rule(quad_degree);

    if formulation == Formulation::Ls2 {
        let mut max_gamma: f64 = 0.0;
        for k in 0..mesh.elements.len() {
            let coords = mesh.element_coords(k);
            for bary in &rule.points {
                let x = coords[0] * bary[0] + coords[1] * bary[1] + coords[2] * bary[2];
                max_gamma = max_gamma.max((problem.gamma)(x).abs());
            }
        }
        if max_gamma < 1e-14 {
            eprintln!(
                "warning: reaction coefficient is numerically zero on the whole mesh; \
                 the reaction-weighted formulation is singular there and its results \
                 are unreliable"
            );
        }
    }

    let dof_map = DofMap::new(mesh);
    let constrained = inflow_values(mesh, problem);
    let mut constrained_value = vec![None; mesh.edges.len()];
    for &(e, v) in &constrained {
        constrained_value[e] = Some(v);
    }

    let mut triplets = Vec::with_capacity(9 * mesh.elements.len());
    let mut rhs = vec![0.0; dof_map.n_free()];
    for k in 0..mesh.elements.len() {
        let (a, load) = element_matrix(mesh, k, problem, formulation, &rule)?;
        let edges = mesh.elements[k].edges;
        for i in 0..3 {
            let Some(gi) = dof_map.index[edges[i]] else {
                continue;
            };
            rhs[gi] += load[i];
            for j in 0..3 {
                match dof_map.index[edges[j]] {
                    Some(gj) => triplets.push((gi, gj, a[i][j])),
                    None => rhs[gi] -= a[i][j] * constrained_value[edges[j]].unwrap(),
                }
            }
        }
    }

    Ok(LinearSystem {
        triplets,
        rhs,
        dof_map,
        constrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vertex;
    use crate::problems::{builtin, names, MeshRecipe, ProblemParams, ScalarFn, VectorFn};
    use std::sync::Arc;

    fn custom_problem(beta: VectorFn, gamma: ScalarFn, source: ScalarFn, g: ScalarFn) -> Problem {
        Problem {
            name: "custom",
            title: "hand-built test problem",
            beta,
            gamma,
            source,
            inflow: g,
            exact_u: None,
            curve: None,
            recipe: MeshRecipe::AlignedSquare { n: 2 },
            overshoot: None,
            beta_min: 0.0,
            gamma_min: 0.0,
        }
    }

    fn unit_triangle() -> Mesh {
        Mesh::build(
            vec![
                Vertex::new(Vec2::new(0.0, 0.0)),
                Vertex::new(Vec2::new(1.0, 0.0)),
                Vertex::new(Vec2::new(0.0, 1.0)),
            ],
            &[[0, 1, 2]],
            vec![],
        )
        .unwrap()
    }

    /// On the unit reference triangle with β = (1,0) and γ = 0, the
    /// streamline form reduces to (∇·φi)(∇·φj) + (φi·e₂)(φj·e₂), whose
    /// closed-form integrals are rationals with denominator 12.
    #[test]
    fn reference_triangle_matrix_matches_the_closed_form() {
        let mesh = unit_triangle();
        let problem = custom_problem(
            Arc::new(|_| Vec2::new(1.0, 0.0)),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        );
        let rule = triangle_rule(2);
        let (a, load) = element_matrix(&mesh, 0, &problem, Formulation::Ls1, &rule).unwrap();
        let expected = [
            [25.0 / 12.0, 25.0 / 12.0, 23.0 / 12.0],
            [25.0 / 12.0, 25.0 / 12.0, 23.0 / 12.0],
            [23.0 / 12.0, 23.0 / 12.0, 27.0 / 12.0],
        ];
        for i in 0..3 {
            assert!(load[i].abs() <= 1e-15);
            for j in 0..3 {
                assert!(
                    (a[i][j] - expected[i][j]).abs() <= 1e-14,
                    "a[{i}][{j}] = {} vs {}",
                    a[i][j],
                    expected[i][j]
                );
            }
        }
    }

    /// Midpoint-rule integration over a fine barycentric subdivision,
    /// independent of the quadrature module.
    fn brute_force_matrix(
        mesh: &Mesh,
        k: ElementId,
        problem: &Problem,
        formulation: Formulation,
        subdivisions: usize,
    ) -> [[f64; 3]; 3] {
        let coords = mesh.element_coords(k);
        let area = mesh.elements[k].area;
        let div = rt0_div(mesh, k);
        let cell_area = area / (subdivisions * subdivisions) as f64;
        let n = subdivisions as f64;
        let mut a = [[0.0; 3]; 3];
        let mut accumulate = |bary0: f64, bary1: f64| {
            let bary2 = 1.0 - bary0 - bary1;
            let x = coords[0] * bary0 + coords[1] * bary1 + coords[2] * bary2;
            let phi = rt0_basis(mesh, k, x);
            let beta = (problem.beta)(x);
            let gamma = (problem.gamma)(x);
            match formulation {
                Formulation::Ls1 => {
                    let gamma_tilde = gamma / beta.norm_sq();
                    let crosswind = beta_perp(beta);
                    for i in 0..3 {
                        for j in 0..3 {
                            let li = div[i] + gamma_tilde * beta.dot(phi[i]);
                            let lj = div[j] + gamma_tilde * beta.dot(phi[j]);
                            let ci = phi[i].dot(crosswind);
                            let cj = phi[j].dot(crosswind);
                            a[i][j] += cell_area * (li * lj + ci * cj);
                        }
                    }
                }
                Formulation::Ls2 => {
                    for i in 0..3 {
                        for j in 0..3 {
                            let vi = phi[i] * gamma + beta * div[i];
                            let vj = phi[j] * gamma + beta * div[j];
                            a[i][j] += cell_area * vi.dot(vj);
                        }
                    }
                }
            }
        };
        for i in 0..subdivisions {
            for j in 0..subdivisions - i {
                // Upward cell centroid.
                accumulate((i as f64 + 1.0 / 3.0) / n, (j as f64 + 1.0 / 3.0) / n);
                // Downward cell centroid, present except on the hypotenuse row.
                if j + 1 < subdivisions - i {
                    accumulate((i as f64 + 2.0 / 3.0) / n, (j as f64 + 2.0 / 3.0) / n);
                }
            }
        }
        a
    }

    #[test]
    fn generic_element_matrix_matches_brute_force_quadrature() {
        let mesh = Mesh::build(
            vec![
                Vertex::new(Vec2::new(0.1, 0.2)),
                Vertex::new(Vec2::new(0.9, 0.3)),
                Vertex::new(Vec2::new(0.4, 0.8)),
            ],
            &[[0, 1, 2]],
            vec![],
        )
        .unwrap();
        let problem = custom_problem(
            Arc::new(|p: Vec2| Vec2::new(1.0 + p.x, 2.0 - p.x * p.y)),
            Arc::new(|p: Vec2| 0.5 + p.x),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        );
        // Degree 10 so the non-polynomial coefficient dependence is resolved
        // to well below the brute-force tolerance.
        let rule = triangle_rule(10);
        for formulation in [Formulation::Ls1, Formulation::Ls2] {
            let (a, _) = element_matrix(&mesh, 0, &problem, formulation, &rule).unwrap();
            let oracle = brute_force_matrix(&mesh, 0, &problem, formulation, 256);
            let scale = oracle
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (a[i][j] - oracle[i][j]).abs() <= 2e-4 * scale,
                        "{formulation}: a[{i}][{j}] = {} vs oracle {}",
                        a[i][j],
                        oracle[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn inflow_values_match_closed_forms() {
        // β = (0,1): the south boundary is inflow with β·n = −1, so the
        // prescribed flux on an edge (a,0)–(b,0) is −∫ g dx.
        let beta: VectorFn = Arc::new(|_| Vec2::new(0.0, 1.0));

        let zero = custom_problem(
            beta.clone(),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        );
        let mesh = zero.initial_mesh().unwrap();
        for (_, v) in inflow_values(&mesh, &zero) {
            assert_eq!(v, 0.0);
        }

        let constant = custom_problem(
            beta.clone(),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
        );
        for (e, v) in inflow_values(&mesh, &constant) {
            assert!((v + mesh.edges[e].length).abs() <= 1e-14);
        }

        let linear = custom_problem(
            beta,
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|p: Vec2| p.x),
        );
        for (e, v) in inflow_values(&mesh, &linear) {
            let [a, b] = mesh.edges[e].vertices;
            let (xa, xb) = (mesh.vertices[a].pos.x, mesh.vertices[b].pos.x);
            let expected = -(xb * xb - xa * xa).abs() / 2.0;
            assert!((v - expected).abs() <= 1e-14, "edge {e}: {v} vs {expected}");
        }
    }

    #[test]
    fn exactly_the_inflow_edges_are_constrained() {
        for name in names() {
            let problem = builtin(name, &ProblemParams::default()).unwrap();
            let mesh = problem.initial_mesh().unwrap();
            let system = assemble(&mesh, &problem, Formulation::Ls1, 4).unwrap();
            let constrained: Vec<EdgeId> = system.constrained.iter().map(|&(e, _)| e).collect();
            let inflow: Vec<EdgeId> = mesh.boundary_edges(BoundaryClass::Inflow).collect();
            assert_eq!(constrained, inflow, "{name}");
            for (e, edge) in mesh.edges.iter().enumerate() {
                match edge.class {
                    BoundaryClass::Inflow => assert!(system.dof_map.index[e].is_none()),
                    _ => assert!(system.dof_map.index[e].is_some()),
                }
            }
            assert_eq!(system.n_free() + constrained.len(), mesh.edges.len());
            assert_eq!(system.rhs.len(), system.n_free());
        }
    }

    #[test]
    fn assembled_matrices_are_symmetric() {
        for name in names() {
            let problem = builtin(name, &ProblemParams::default()).unwrap();
            let mesh = problem.initial_mesh().unwrap();
            for formulation in [Formulation::Ls1, Formulation::Ls2] {
                if !problem.supports(formulation) {
                    continue;
                }
                let system = assemble(&mesh, &problem, formulation, 4).unwrap();
                let a = system.dense();
                let n = system.n_free();
                let scale = a
                    .iter()
                    .flatten()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..n {
                    for j in 0..n {
                        assert!(
                            (a[i][j] - a[j][i]).abs() <= 1e-12 * scale,
                            "{name}/{formulation}: asymmetry at ({i}, {j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn vanishing_advection_aborts_the_streamline_form() {
        let problem = custom_problem(
            Arc::new(|_| Vec2::new(0.0, 0.0)),
            Arc::new(|_| 1.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
        );
        let mesh = problem.initial_mesh().unwrap();
        let err = assemble(&mesh, &problem, Formulation::Ls1, 4).unwrap_err();
        assert!(matches!(err, AssemblyError::ZeroAdvection { element: 0, .. }));
        // The reaction-weighted form has no such restriction.
        assert!(assemble(&mesh, &problem, Formulation::Ls2, 4).is_ok());
    }

    #[test]
    fn zero_reaction_warns_but_assembles() {
        let problem = custom_problem(
            Arc::new(|_| Vec2::new(0.0, 1.0)),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
        );
        let mesh = problem.initial_mesh().unwrap();
        let system = assemble(&mesh, &problem, Formulation::Ls2, 4).unwrap();
        assert_eq!(system.rhs.len(), system.n_free());
    }
}
