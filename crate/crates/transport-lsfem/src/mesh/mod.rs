//! Conforming triangle meshes: topology, boundary classification, adaptive
//! longest-edge bisection, structured generators, and a plain-text format.
//!
//! Conventions baked into every `Mesh`:
//! - element vertices are stored counterclockwise;
//! - local edge `i` of an element is the edge opposite local vertex `i`;
//! - every edge stores a unit normal: outward for boundary edges, and
//!   pointing from the lower-id adjacent element into the higher-id one for
//!   interior edges;
//! - each element's refinement edge is its longest edge, ties broken by the
//!   lexicographically smallest sorted endpoint-id pair.

mod generate;
mod io;
mod refine;

pub use generate::{aligned_square, half_disk, peterson, split_rectangle};
pub use io::{load, parse_text, save, write_text};

use crate::geom::{signed_area, triangle_diameter, triangle_min_angle, Vec2};
use crate::NeumaierSum;
use std::collections::HashMap;

pub type VertexId = usize;
pub type EdgeId = usize;
pub type ElementId = usize;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index}, but only {count} vertices exist")]
    InvalidVertexIndex {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("triangle {triangle} is degenerate (zero or near-zero area)")]
    DegenerateTriangle { triangle: usize },
    #[error("triangle {triangle} duplicates an earlier triangle")]
    DuplicateTriangle { triangle: usize },
    #[error("edge ({0}, {1}) is shared by more than two triangles", .edge.0, .edge.1)]
    NonConforming { edge: (VertexId, VertexId) },
    #[error("vertex {vertex} carries geometry tag {tag}, but only {count} hooks exist")]
    UnknownGeometryTag {
        vertex: VertexId,
        tag: usize,
        count: usize,
    },
    #[error("boundary snapping inverted element {element}")]
    InvertedAfterSnap { element: ElementId },
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("mesh file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary disposition of an edge with respect to a velocity field β:
/// inflow where β·n < 0, outflow where β·n > 0, characteristic where β is
/// tangential. Interior edges keep their own variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryClass {
    Interior,
    Inflow,
    Outflow,
    Characteristic,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub pos: Vec2,
    pub on_boundary: bool,
    /// Index into `Mesh::hooks` for vertices that must stay on a curved
    /// boundary piece under refinement.
    pub geometry_tag: Option<usize>,
}

impl Vertex {
    pub fn new(pos: Vec2) -> Self {
        Self {
            pos,
            on_boundary: false,
            geometry_tag: None,
        }
    }

    pub fn tagged(pos: Vec2, tag: usize) -> Self {
        Self {
            pos,
            on_boundary: false,
            geometry_tag: Some(tag),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex ids, sorted ascending.
    pub vertices: [VertexId; 2],
    /// Adjacent elements; boundary edges have exactly one, interior edges
    /// two with the lower element id first.
    pub elements: [Option<ElementId>; 2],
    /// Unit normal: outward on the boundary, lower-id → higher-id element
    /// in the interior.
    pub normal: Vec2,
    pub length: f64,
    pub class: BoundaryClass,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements[1].is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Element {
    /// Vertex ids in counterclockwise order.
    pub vertices: [VertexId; 3],
    /// `edges[i]` is the edge opposite `vertices[i]`.
    pub edges: [EdgeId; 3],
    /// +1 where the shared edge's stored normal is outward for this
    /// element, −1 where it points inward.
    pub signs: [f64; 3],
    pub area: f64,
    /// Local index (0..3) of the longest edge, ties broken by smallest
    /// sorted endpoint-id pair.
    pub refinement_edge: usize,
}

/// Projection target for curved boundary pieces.
#[derive(Clone, Copy, Debug)]
pub enum GeometryHook {
    Circle { center: Vec2, radius: f64 },
}

impl GeometryHook {
    pub fn project(&self, p: Vec2) -> Vec2 {
        match *self {
            GeometryHook::Circle { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n == 0.0 {
                    // Degenerate query; leave the point alone rather than
                    // inventing a direction.
                    p
                } else {
                    center + d * (radius / n)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub elements: Vec<Element>,
    /// Refinement counter; fields built on one generation refuse evaluation
    /// on another.
    pub generation: u32,
    pub hooks: Vec<GeometryHook>,
}

impl Mesh {
    /// Builds a conforming mesh from raw vertices and triangles. Triangles
    /// may be given in either orientation; they are stored counterclockwise.
    pub fn build(
        vertices: Vec<Vertex>,
        triangles: &[[VertexId; 3]],
        hooks: Vec<GeometryHook>,
    ) -> Result<Mesh, MeshError> {
        assemble_topology(vertices, triangles, hooks, 0, |_, is_boundary| {
            if is_boundary {
                BoundaryClass::Characteristic
            } else {
                BoundaryClass::Interior
            }
        })
    }

    pub fn element_coords(&self, k: ElementId) -> [Vec2; 3] {
        let v = self.elements[k].vertices;
        [
            self.vertices[v[0]].pos,
            self.vertices[v[1]].pos,
            self.vertices[v[2]].pos,
        ]
    }

    pub fn element_centroid(&self, k: ElementId) -> Vec2 {
        let [a, b, c] = self.element_coords(k);
        (a + b + c) / 3.0
    }

    pub fn element_diameter(&self, k: ElementId) -> f64 {
        let [a, b, c] = self.element_coords(k);
        triangle_diameter(a, b, c)
    }

    pub fn edge_midpoint(&self, e: EdgeId) -> Vec2 {
        let [a, b] = self.edges[e].vertices;
        self.vertices[a].pos.midpoint(self.vertices[b].pos)
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        (0..self.elements.len())
            .map(|k| self.element_diameter(k))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.elements.len())
            .map(|k| {
                let [a, b, c] = self.element_coords(k);
                triangle_min_angle(a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Sum of element areas (compensated).
    pub fn total_area(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for e in &self.elements {
            sum.add(e.area);
        }
        sum.value()
    }

    pub fn boundary_edges(&self, class: BoundaryClass) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.class == class)
            .map(|(i, _)| i)
    }

    /// Classifies every boundary edge by the sign of β·n at its midpoint.
    /// An edge is characteristic when |β·n| ≤ tol·|β| there.
    pub fn classify_boundary(&mut self, beta: &dyn Fn(Vec2) -> Vec2, tol: f64) {
        for e in 0..self.edges.len() {
            if !self.edges[e].is_boundary() {
                continue;
            }
            let m = self.edge_midpoint(e);
            let b = beta(m);
            let bn = b.dot(self.edges[e].normal);
            let scale = tol * b.norm();
            self.edges[e].class = if bn < -scale {
                BoundaryClass::Inflow
            } else if bn > scale {
                BoundaryClass::Outflow
            } else {
                BoundaryClass::Characteristic
            };
        }
    }

    /// Re-projects every geometry-tagged vertex onto its hook and refreshes
    /// the derived geometry. Fails if the projection inverts an element.
    pub fn snap_boundary(&mut self) -> Result<(), MeshError> {
        for v in &mut self.vertices {
            if let Some(tag) = v.geometry_tag {
                v.pos = self.hooks[tag].project(v.pos);
            }
        }
        self.refresh_geometry()
    }

    /// Recomputes areas, edge lengths/normals and refinement edges after
    /// vertex positions changed. Topology is untouched.
    fn refresh_geometry(&mut self) -> Result<(), MeshError> {
        for k in 0..self.elements.len() {
            let [a, b, c] = self.element_coords(k);
            let area = signed_area(a, b, c);
            let diam = triangle_diameter(a, b, c);
            if area <= DEGENERACY_FACTOR * diam * diam {
                return Err(MeshError::InvertedAfterSnap { element: k });
            }
            self.elements[k].area = area;
            let v = self.elements[k].vertices;
            self.elements[k].refinement_edge =
                refinement_edge_local(&[a, b, c], &[v[0], v[1], v[2]]);
        }
        for e in 0..self.edges.len() {
            let [a, b] = self.edges[e].vertices;
            let pa = self.vertices[a].pos;
            let pb = self.vertices[b].pos;
            self.edges[e].length = pa.dist(pb);
            // Rebuild the normal from the owning element's orientation so it
            // stays outward / lower-to-higher.
            let owner = self.edges[e].elements[0].expect("edge with no adjacent element");
            self.edges[e].normal = outward_normal_of(self, owner, a, b);
        }
        Ok(())
    }
}

/// Relative area threshold below which a triangle counts as degenerate.
const DEGENERACY_FACTOR: f64 = 1e-14;

/// Outward unit normal of element `k` across its edge with endpoints
/// {a, b} (in any order).
fn outward_normal_of(mesh: &Mesh, k: ElementId, a: VertexId, b: VertexId) -> Vec2 {
    let v = mesh.elements[k].vertices;
    // Find the directed occurrence of {a, b} in the CCW cycle.
    for i in 0..3 {
        let (p, q) = (v[i], v[(i + 1) % 3]);
        if (p == a && q == b) || (p == b && q == a) {
            let d = mesh.vertices[q].pos - mesh.vertices[p].pos;
            // Interior lies left of a CCW-directed edge; outward is right.
            return Vec2::new(d.y, -d.x).normalized();
        }
    }
    panic!("edge ({a}, {b}) is not part of element {k}");
}

/// Local index of the refinement edge for a triangle with the given vertex
/// coordinates and global ids: the longest edge, ties broken by the
/// lexicographically smallest sorted endpoint-id pair.
fn refinement_edge_local(coords: &[Vec2; 3], ids: &[VertexId; 3]) -> usize {
    let mut best = 0;
    let mut best_len = 0.0;
    let mut best_pair = (usize::MAX, usize::MAX);
    for i in 0..3 {
        let (p, q) = ((i + 1) % 3, (i + 2) % 3);
        let len = (coords[p] - coords[q]).norm_sq();
        let pair = (ids[p].min(ids[q]), ids[p].max(ids[q]));
        if len > best_len || (len == best_len && pair < best_pair) {
            best = i;
            best_len = len;
            best_pair = pair;
        }
    }
    best
}

/// Shared topology builder: orients, validates, and derives edges,
/// adjacency, normals, signs and refinement edges. `class_of` supplies the
/// boundary class for each (sorted) edge endpoint pair.
fn assemble_topology(
    vertices: Vec<Vertex>,
    triangles: &[[VertexId; 3]],
    hooks: Vec<GeometryHook>,
    generation: u32,
    class_of: impl Fn((VertexId, VertexId), bool) -> BoundaryClass,
) -> Result<Mesh, MeshError> {
    let mut mesh = Mesh {
        vertices,
        edges: Vec::new(),
        elements: Vec::with_capacity(triangles.len()),
        generation,
        hooks,
    };

    for (i, v) in mesh.vertices.iter().enumerate() {
        if let Some(tag) = v.geometry_tag {
            if tag >= mesh.hooks.len() {
                return Err(MeshError::UnknownGeometryTag {
                    vertex: i,
                    tag,
                    count: mesh.hooks.len(),
                });
            }
        }
    }

    let mut seen = std::collections::HashSet::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for &i in tri {
            if i >= mesh.vertices.len() {
                return Err(MeshError::InvalidVertexIndex {
                    triangle: t,
                    index: i,
                    count: mesh.vertices.len(),
                });
            }
        }
        let mut v = *tri;
        let coords = |v: &[usize; 3]| {
            [
                mesh.vertices[v[0]].pos,
                mesh.vertices[v[1]].pos,
                mesh.vertices[v[2]].pos,
            ]
        };
        let [a, b, c] = coords(&v);
        let mut area = signed_area(a, b, c);
        if area < 0.0 {
            v.swap(1, 2);
            area = -area;
        }
        let diam = triangle_diameter(a, b, c);
        if area <= DEGENERACY_FACTOR * diam * diam || !area.is_finite() {
            return Err(MeshError::DegenerateTriangle { triangle: t });
        }
        let mut key = v;
        key.sort_unstable();
        if !seen.insert(key) {
            return Err(MeshError::DuplicateTriangle { triangle: t });
        }
        let [ca, cb, cc] = coords(&v);
        mesh.elements.push(Element {
            vertices: v,
            edges: [0; 3],
            signs: [0.0; 3],
            area,
            refinement_edge: refinement_edge_local(&[ca, cb, cc], &v),
        });
    }

    // Edge ids are assigned in element order (first encounter), never from
    // hash iteration, so rebuilding a mesh is deterministic.
    let mut edge_of: HashMap<(VertexId, VertexId), EdgeId> = HashMap::new();
    for k in 0..mesh.elements.len() {
        let v = mesh.elements[k].vertices;
        for i in 0..3 {
            let (p, q) = (v[(i + 1) % 3], v[(i + 2) % 3]);
            let key = (p.min(q), p.max(q));
            let e = *edge_of.entry(key).or_insert_with(|| {
                mesh.edges.push(Edge {
                    vertices: [key.0, key.1],
                    elements: [None, None],
                    normal: Vec2::default(),
                    length: 0.0,
                    class: BoundaryClass::Interior,
                });
                mesh.edges.len() - 1
            });
            mesh.elements[k].edges[i] = e;
            let slots = &mut mesh.edges[e].elements;
            if slots[0].is_none() {
                slots[0] = Some(k);
            } else if slots[1].is_none() {
                slots[1] = Some(k);
            } else {
                return Err(MeshError::NonConforming { edge: key });
            }
        }
    }

    for e in 0..mesh.edges.len() {
        // Element ids are filled in ascending scan order, so slot 0 already
        // holds the lower id; the normal is outward for that element.
        let [a, b] = mesh.edges[e].vertices;
        let owner = mesh.edges[e].elements[0].expect("edge without adjacent element");
        mesh.edges[e].normal = outward_normal_of(&mesh, owner, a, b);
        mesh.edges[e].length = mesh.vertices[a].pos.dist(mesh.vertices[b].pos);
        let is_boundary = mesh.edges[e].elements[1].is_none();
        mesh.edges[e].class = class_of((a, b), is_boundary);
        if is_boundary {
            mesh.vertices[a].on_boundary = true;
            mesh.vertices[b].on_boundary = true;
        }
    }

    for k in 0..mesh.elements.len() {
        for i in 0..3 {
            let e = mesh.elements[k].edges[i];
            mesh.elements[k].signs[i] = if mesh.edges[e].elements[0] == Some(k) {
                1.0
            } else {
                -1.0
            };
        }
    }

    Ok(mesh)
}
