//! Structured initial meshes for the built-in problem catalog.

use super::{GeometryHook, Mesh, MeshError, Vertex};
use crate::geom::Vec2;

/// Uniform triangulation of the unit square into `n × n` cells, each split
/// by its southwest–northeast diagonal. Cells on the main diagonal have an
/// edge exactly on the line y = x.
pub fn aligned_square(n: usize) -> Mesh {
    assert!(n >= 1, "aligned_square needs at least one cell per side");
    let step = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vertex::new(Vec2::new(i as f64 * step, j as f64 * step)));
        }
    }
    let id = |i: usize, j: usize| i + j * (n + 1);
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (sw, se) = (id(i, j), id(i + 1, j));
            let (nw, ne) = (id(i, j + 1), id(i + 1, j + 1));
            triangles.push([sw, se, ne]);
            triangles.push([sw, ne, nw]);
        }
    }
    Mesh::build(vertices, &triangles, Vec::new()).expect("structured square mesh is valid")
}

/// Four-triangle mesh of the rectangle (0, 2) × (0, 1) with a boundary
/// vertex at x = π/3 on the south side.
pub fn split_rectangle() -> Mesh {
    let x = std::f64::consts::FRAC_PI_3;
    let vertices = vec![
        Vertex::new(Vec2::new(0.0, 0.0)),
        Vertex::new(Vec2::new(x, 0.0)),
        Vertex::new(Vec2::new(2.0, 0.0)),
        Vertex::new(Vec2::new(2.0, 1.0)),
        Vertex::new(Vec2::new(1.0, 1.0)),
        Vertex::new(Vec2::new(0.0, 1.0)),
    ];
    let triangles = [[0, 1, 5], [1, 4, 5], [1, 2, 4], [2, 3, 4]];
    Mesh::build(vertices, &triangles, Vec::new()).expect("rectangle mesh is valid")
}

/// Peterson-style triangulation of the unit square with mesh size `h`:
/// vertical lines x = i·h, where odd lines carry nodes offset by h/2. The
/// alternating misalignment with vertical characteristics is what degrades
/// the L² convergence rate for transport in the +y direction.
pub fn peterson(h: f64) -> Result<Mesh, MeshError> {
    let nf = 1.0 / h;
    let n = nf.round() as usize;
    if !(h > 0.0) || (nf - n as f64).abs() > 1e-9 * nf || n < 2 || n % 2 != 0 {
        return Err(MeshError::InvalidParameter(format!(
            "mesh size must satisfy 1/h = even integer >= 2, got h = {h}"
        )));
    }

    // Row j holds the vertices on the line y = j*h, ordered by ascending x.
    // Odd rows are staggered half a cell to the side, so no interior node
    // lines up with the nodes of the rows above or below it. This staggering
    // is the point of the family: every slanted edge couples neighbouring
    // cells and no piecewise-constant vertical field can follow the data.
    let mut vertices = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let y = j as f64 * h;
        let xs: Vec<f64> = if j % 2 == 0 {
            (0..=n).map(|i| i as f64 * h).collect()
        } else {
            std::iter::once(0.0)
                .chain((0..n).map(|i| (i as f64 + 0.5) * h))
                .chain(std::iter::once(1.0))
                .collect()
        };
        let mut ids = Vec::with_capacity(xs.len());
        for x in xs {
            ids.push(vertices.len());
            vertices.push(Vertex::new(Vec2::new(x, y)));
        }
        rows.push(ids);
    }

    // Triangulate each strip by merging the two row chains left to right;
    // on a tie the bottom chain advances first.
    let mut triangles = Vec::with_capacity(n * (2 * n + 1));
    for s in 0..n {
        let bottom = &rows[s];
        let top = &rows[s + 1];
        let x_of = |id: usize| vertices[id].pos.x;
        let (mut i, mut j) = (0, 0);
        while i + 1 < bottom.len() || j + 1 < top.len() {
            let can_bottom = i + 1 < bottom.len();
            let can_top = j + 1 < top.len();
            let advance_bottom =
                can_bottom && (!can_top || x_of(bottom[i + 1]) <= x_of(top[j + 1]));
            if advance_bottom {
                triangles.push([bottom[i], bottom[i + 1], top[j]]);
                i += 1;
            } else {
                triangles.push([bottom[i], top[j + 1], top[j]]);
                j += 1;
            }
        }
    }

    Mesh::build(vertices, &triangles, Vec::new())
}

/// Six-triangle mesh of the upper half of the unit disk. Vertices on the
/// circular arc carry a geometry tag so refinement keeps them on the circle.
pub fn half_disk() -> Mesh {
    let hooks = vec![GeometryHook::Circle {
        center: Vec2::new(0.0, 0.0),
        radius: 1.0,
    }];
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let vertices = vec![
        Vertex::tagged(Vec2::new(-1.0, 0.0), 0), // 0: b0
        Vertex::new(Vec2::new(-0.5, 0.0)),       // 1: b1
        Vertex::new(Vec2::new(0.0, 0.0)),        // 2: b2
        Vertex::new(Vec2::new(0.5, 0.0)),        // 3: b3
        Vertex::tagged(Vec2::new(1.0, 0.0), 0),  // 4: b4
        Vertex::tagged(Vec2::new(-c, c), 0),     // 5: a1 (135°)
        Vertex::tagged(Vec2::new(0.0, 1.0), 0),  // 6: a2 (90°)
        Vertex::tagged(Vec2::new(c, c), 0),      // 7: a3 (45°)
    ];
    let triangles = [
        [0, 1, 5],
        [1, 2, 5],
        [5, 2, 6],
        [2, 3, 6],
        [6, 3, 7],
        [3, 4, 7],
    ];
    Mesh::build(vertices, &triangles, hooks).expect("half-disk mesh is valid")
}
