//! Linear solvers for the assembled SPD systems: a sparse Cholesky
//! factorization for small and medium problems and a Jacobi-preconditioned
//! conjugate gradient for large ones.

use std::sync::Once;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use thiserror::Error;

use crate::assembly::LinearSystem;
use crate::fem::FluxField;
use crate::mesh::Mesh;

/// Free-dof count above which `Auto` switches from the direct factorization
/// to conjugate gradient.
pub const DIRECT_DOF_LIMIT: usize = 200_000;

const CG_ITERATION_FACTOR: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Direct up to [`DIRECT_DOF_LIMIT`] free DOFs, conjugate gradient above.
    Auto,
    Direct,
    Cg,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Auto => "auto",
            SolverKind::Direct => "direct",
            SolverKind::Cg => "cg",
        })
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SolverKind::Auto),
            "direct" => Ok(SolverKind::Direct),
            "cg" => Ok(SolverKind::Cg),
            other => Err(format!(
                "unknown solver `{other}` (expected auto, direct, or cg)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "conjugate gradient stalled at relative residual {relative_residual:.3e} \
         (target {tol:.3e}) after {iterations} iterations"
    )]
    NotConverged {
        tol: f64,
        iterations: usize,
        relative_residual: f64,
    },
    #[error("sparse Cholesky factorization failed: {0}")]
    Factorization(String),
}

/// What actually ran and how well it did.
#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    /// `Direct` or `Cg`, never `Auto`.
    pub method: SolverKind,
    /// Conjugate gradient iterations; 0 for the direct path.
    pub iterations: usize,
    pub relative_residual: f64,
}

fn force_sequential() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Compressed sparse rows with duplicate triplets summed.
struct Csr {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            row_ptr,
            col: merged.iter().map(|&(_, j, _)| j).collect(),
            val: merged.iter().map(|&(_, _, v)| v).collect(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..y.len() {
            let mut sum = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                sum += self.val[idx] * x[self.col[idx]];
            }
            y[i] = sum;
        }
    }

    fn diagonal(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for i in 0..n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[idx] == i {
                    d[i] = self.val[idx];
                }
            }
        }
        d
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve_direct(system: &LinearSystem) -> Result<(Vec<f64>, SolveReport), SolverError> {
    force_sequential();
    let n = system.n_free();
    let triplets: Vec<Triplet<usize, usize, f64>> = system
        .triplets
        .iter()
        .map(|&(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let llt = Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let b = faer::Mat::from_fn(n, 1, |i, _| system.rhs[i]);
    let x = llt.solve(&b);
    let solution: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();

    let residual: Vec<f64> = system
        .apply(&solution)
        .iter()
        .zip(&system.rhs)
        .map(|(a, b)| a - b)
        .collect();
    let rhs_norm = norm(&system.rhs);
    let relative_residual = if rhs_norm > 0.0 {
        norm(&residual) / rhs_norm
    } else {
        norm(&residual)
    };
    Ok((
        solution,
        SolveReport {
            method: SolverKind::Direct,
            iterations: 0,
            relative_residual,
        },
    ))
}

fn solve_cg(system: &LinearSystem, tol: f64) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let n = system.n_free();
    let csr = Csr::from_triplets(n, &system.triplets);
    let diag = csr.diagonal(n);
    let b = &system.rhs;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                method: SolverKind::Cg,
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let precondition = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if diag[i] != 0.0 { r[i] / diag[i] } else { r[i] };
        }
    };

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iterations = CG_ITERATION_FACTOR * n;
    let mut relative_residual = norm(&r) / b_norm;

    for iteration in 1..=max_iterations {
        csr.apply(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        relative_residual = norm(&r) / b_norm;
        if relative_residual <= tol {
            return Ok((
                x,
                SolveReport {
                    method: SolverKind::Cg,
                    iterations: iteration,
                    relative_residual,
                },
            ));
        }
        precondition(&r, &mut z);
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(SolverError::NotConverged {
        tol,
        iterations: max_iterations,
        relative_residual,
    })
}

/// Solves the assembled system for the free edge fluxes.
pub fn solve_spd(
    system: &LinearSystem,
    method: SolverKind,
    tol: f64,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let resolved = match method {
        SolverKind::Auto => {
            if system.n_free() <= DIRECT_DOF_LIMIT {
                SolverKind::Direct
            } else {
                SolverKind::Cg
            }
        }
        other => other,
    };
    match resolved {
        SolverKind::Direct => solve_direct(system),
        SolverKind::Cg => solve_cg(system, tol),
        SolverKind::Auto => unreachable!(),
    }
}

/// Solves the system and re-attaches the prescribed inflow fluxes, producing
/// a flux field over every edge of the mesh.
pub fn solve(
    mesh: &Mesh,
    system: &LinearSystem,
    method: SolverKind,
    tol: f64,
) -> Result<(FluxField, SolveReport), SolverError> {
    let (free, report) = solve_spd(system, method, tol)?;
    let mut flux = FluxField::zeros(mesh);
    for (idx, &e) in system.dof_map.edges.iter().enumerate() {
        flux.dofs[e] = free[idx];
    }
    for &(e, v) in &system.constrained {
        flux.dofs[e] = v;
    }
    Ok((flux, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, DofMap};
    use crate::problems::{builtin, Formulation, ProblemParams};

    fn toy_system(triplets: Vec<(usize, usize, f64)>, rhs: Vec<f64>) -> LinearSystem {
        let n = rhs.len();
        LinearSystem {
            triplets,
            rhs,
            dof_map: DofMap {
                index: (0..n).map(Some).collect(),
                edges: (0..n).collect(),
            },
            constrained: vec![],
        }
    }

    #[test]
    fn identity_system_round_trips() {
        let system = toy_system(vec![(0, 0, 1.0), (1, 1, 1.0)], vec![3.0, 4.0]);
        for method in [SolverKind::Direct, SolverKind::Cg, SolverKind::Auto] {
            let (x, report) = solve_spd(&system, method, 1e-12).unwrap();
            assert!((x[0] - 3.0).abs() <= 1e-14);
            assert!((x[1] - 4.0).abs() <= 1e-14);
            assert_ne!(report.method, SolverKind::Auto);
        }
    }

    #[test]
    fn two_by_two_oracle() {
        // [[4, 1], [1, 3]] x = (1, 2) has the exact solution (1/11, 7/11).
        let system = toy_system(
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
            vec![1.0, 2.0],
        );
        for method in [SolverKind::Direct, SolverKind::Cg] {
            let (x, report) = solve_spd(&system, method, 1e-14).unwrap();
            assert!((x[0] - 1.0 / 11.0).abs() <= 1e-12, "{method}: {x:?}");
            assert!((x[1] - 7.0 / 11.0).abs() <= 1e-12, "{method}: {x:?}");
            assert!(report.relative_residual <= 1e-12);
        }
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let system = toy_system(
            vec![(0, 0, 2.0), (0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
            vec![1.0, 2.0],
        );
        let (direct, _) = solve_spd(&system, SolverKind::Direct, 1e-12).unwrap();
        let (cg, _) = solve_spd(&system, SolverKind::Cg, 1e-14).unwrap();
        assert!((direct[0] - 1.0 / 11.0).abs() <= 1e-12);
        assert!((direct[0] - cg[0]).abs() <= 1e-12);
        assert!((direct[1] - cg[1]).abs() <= 1e-12);
    }

    #[test]
    fn indefinite_systems_are_reported_by_cg() {
        let system = toy_system(vec![(0, 0, 1.0), (1, 1, -1.0)], vec![1.0, 1.0]);
        assert!(matches!(
            solve_cg(&system, 1e-12),
            Err(SolverError::NotConverged { .. })
        ));
    }

    #[test]
    fn direct_and_cg_agree_on_assembled_systems() {
        let problem = builtin("ex52", &ProblemParams::default()).unwrap();
        let mut mesh = problem.initial_mesh().unwrap();
        for level in 0..3 {
            let system = assemble(&mesh, &problem, Formulation::Ls1, 4).unwrap();
            let (direct, _) = solve_spd(&system, SolverKind::Direct, 1e-12).unwrap();
            let (cg, report) = solve_spd(&system, SolverKind::Cg, 1e-13).unwrap();
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in direct.iter().zip(&cg) {
                assert!(
                    (a - b).abs() <= 1e-9 * scale,
                    "level {level}: direct {a} vs cg {b}"
                );
            }
            assert!(report.iterations > 0);
            assert!(report.relative_residual <= 1e-13);
            if level < 2 {
                mesh = mesh.uniform_refine().unwrap();
            }
        }
    }

    #[test]
    fn prescribed_fluxes_are_reattached() {
        let problem = builtin("ex51", &ProblemParams::default()).unwrap();
        let mesh = problem.initial_mesh().unwrap();
        let system = assemble(&mesh, &problem, Formulation::Ls1, 4).unwrap();
        let (flux, _) = solve(&mesh, &system, SolverKind::Auto, 1e-12).unwrap();
        assert_eq!(flux.dofs.len(), mesh.edges.len());
        assert_eq!(flux.generation, mesh.generation);
        for &(e, v) in &system.constrained {
            assert_eq!(flux.dofs[e], v);
        }
    }
}
