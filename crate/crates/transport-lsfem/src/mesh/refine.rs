//! Adaptive refinement by recursive longest-edge bisection.
//!
//! Marked elements are bisected at their refinement edge. An element whose
//! neighbor across that edge does not share it as its own refinement edge
//! first forces the neighbor to refine (recursively), so the mesh stays
//! conforming at every step: an edge is only ever split together on both
//! sides. Boundary edges inherit their class when split; midpoints of
//! boundary edges whose endpoints share a geometry tag are projected onto
//! the tagged hook immediately.

use super::{
    assemble_topology, refinement_edge_local, BoundaryClass, ElementId, GeometryHook, Mesh,
    MeshError, Vertex, VertexId,
};
use std::collections::HashMap;

impl Mesh {
    /// Returns a new, conforming mesh in which every marked element (and
    /// whatever the conformity closure drags in) has been bisected at its
    /// refinement edge. Generation increases by one.
    pub fn bisect(&self, marked: &[ElementId]) -> Result<Mesh, MeshError> {
        let mut order: Vec<ElementId> = marked.to_vec();
        order.sort_unstable();
        order.dedup();
        if let Some(&last) = order.last() {
            assert!(
                last < self.elements.len(),
                "marked element {last} out of range ({} elements)",
                self.elements.len()
            );
        }
        let mut splitter = Splitter::new(self, order.len());
        for k in order {
            splitter.ensure_bisected(k);
        }
        splitter.finish(self)
    }

    /// Two rounds of bisecting every element: each triangle is split into
    /// four, so element count quadruples and h halves.
    pub fn uniform_refine(&self) -> Result<Mesh, MeshError> {
        let all: Vec<ElementId> = (0..self.elements.len()).collect();
        let once = self.bisect(&all)?;
        let all: Vec<ElementId> = (0..once.elements.len()).collect();
        once.bisect(&all)
    }
}

type PairKey = (VertexId, VertexId);

fn pair(a: VertexId, b: VertexId) -> PairKey {
    (a.min(b), a.max(b))
}

#[derive(Clone, Copy)]
struct EdgeInfo {
    elements: [Option<usize>; 2],
    class: BoundaryClass,
}

/// Mutable refinement workspace: triangles are consumed (set to `None`)
/// when split and children are appended, so ids stay stable throughout.
struct Splitter<'m> {
    verts: Vec<Vertex>,
    tris: Vec<Option<[VertexId; 3]>>,
    adj: HashMap<PairKey, EdgeInfo>,
    hooks: &'m [GeometryHook],
    /// Iteration guard against a (theoretically impossible) closure cycle.
    budget: usize,
}

impl<'m> Splitter<'m> {
    fn new(mesh: &'m Mesh, marked: usize) -> Self {
        let mut adj = HashMap::with_capacity(mesh.edges.len() * 2);
        for e in &mesh.edges {
            adj.insert(
                (e.vertices[0], e.vertices[1]),
                EdgeInfo {
                    elements: e.elements,
                    class: e.class,
                },
            );
        }
        Splitter {
            verts: mesh.vertices.clone(),
            tris: mesh.elements.iter().map(|e| Some(e.vertices)).collect(),
            adj,
            hooks: &mesh.hooks,
            budget: 10_000 + 1_000 * (mesh.elements.len() + marked),
        }
    }

    /// Sorted endpoint pair of element `k`'s refinement edge.
    fn refinement_pair(&self, k: usize) -> PairKey {
        let tri = self.tris[k].expect("refinement edge of consumed element");
        let coords = [
            self.verts[tri[0]].pos,
            self.verts[tri[1]].pos,
            self.verts[tri[2]].pos,
        ];
        let li = refinement_edge_local(&coords, &tri);
        pair(tri[(li + 1) % 3], tri[(li + 2) % 3])
    }

    /// The element adjacent to `k` across the edge `key`, if any.
    fn neighbor(&self, key: PairKey, k: usize) -> Option<usize> {
        let info = self.adj[&key];
        info.elements
            .iter()
            .flatten()
            .copied()
            .find(|&other| other != k)
    }

    /// Splits element `k0` at its refinement edge, first forcing neighbors
    /// until the split is compatible (shared edge is the refinement edge on
    /// both sides) or the edge is on the boundary.
    fn ensure_bisected(&mut self, k0: usize) {
        let mut stack = vec![k0];
        while let Some(&k) = stack.last() {
            assert!(
                self.budget > 0,
                "recursive bisection exceeded its iteration budget"
            );
            self.budget -= 1;
            if self.tris[k].is_none() {
                // Consumed by an earlier closure; its children satisfy the
                // marking.
                stack.pop();
                continue;
            }
            let key = self.refinement_pair(k);
            match self.neighbor(key, k) {
                None => {
                    self.split(k, None, key);
                    stack.pop();
                }
                Some(n) => {
                    if self.refinement_pair(n) == key {
                        self.split(k, Some(n), key);
                        stack.pop();
                    } else {
                        stack.push(n);
                    }
                }
            }
        }
    }

    /// Splits `k` (and its compatible partner, if the edge is interior) at
    /// the shared edge `key`.
    fn split(&mut self, k: usize, partner: Option<usize>, key: PairKey) {
        let class = self.adj[&key].class;
        let m = self.make_midpoint(key, partner.is_none());
        self.split_one(k, key, m, class);
        if let Some(n) = partner {
            self.split_one(n, key, m, class);
        }
    }

    /// Creates the midpoint vertex of edge `key`. A boundary midpoint whose
    /// endpoints share a geometry tag inherits the tag and is projected
    /// onto the hook right away.
    fn make_midpoint(&mut self, key: PairKey, is_boundary: bool) -> VertexId {
        let a = &self.verts[key.0];
        let b = &self.verts[key.1];
        let mut pos = a.pos.midpoint(b.pos);
        let tag = if is_boundary {
            match (a.geometry_tag, b.geometry_tag) {
                (Some(t), Some(u)) if t == u => Some(t),
                _ => None,
            }
        } else {
            None
        };
        if let Some(t) = tag {
            pos = self.hooks[t].project(pos);
        }
        let id = self.verts.len();
        self.verts.push(Vertex {
            pos,
            on_boundary: false, // recomputed when the mesh is reassembled
            geometry_tag: tag,
        });
        id
    }

    /// Replaces element `k` by its two children across edge `key` with
    /// midpoint `m`, updating the adjacency soup. The two kept edges swap
    /// the parent for a child in place, so their class (and any neighbor)
    /// is preserved; only the split edge itself is detached away.
    fn split_one(&mut self, k: usize, key: PairKey, m: VertexId, half_class: BoundaryClass) {
        let tri = self.tris[k].take().expect("split of consumed element");
        let ci = (0..3)
            .find(|&i| pair(tri[(i + 1) % 3], tri[(i + 2) % 3]) == key)
            .expect("split edge does not belong to element");
        let c = tri[ci];
        let p = tri[(ci + 1) % 3];
        let q = tri[(ci + 2) % 3];
        // Parent (c, p, q) is counterclockwise, so both children are too.
        let k1 = self.push_tri([c, p, m]);
        let k2 = self.push_tri([c, m, q]);
        self.replace(pair(c, p), k, k1);
        self.replace(pair(q, c), k, k2);
        self.detach(key, k);
        self.attach(pair(p, m), k1, half_class);
        self.attach(pair(m, c), k1, BoundaryClass::Interior);
        self.attach(pair(c, m), k2, BoundaryClass::Interior);
        self.attach(pair(m, q), k2, half_class);
    }

    /// Swaps element `old` for `new` on edge `key`, keeping class and the
    /// other neighbor intact.
    fn replace(&mut self, key: PairKey, old: usize, new: usize) {
        let info = self
            .adj
            .get_mut(&key)
            .expect("replace on nonexistent edge");
        let slot = info
            .elements
            .iter_mut()
            .find(|s| **s == Some(old))
            .expect("replace of unattached element");
        *slot = Some(new);
    }

    fn push_tri(&mut self, tri: [VertexId; 3]) -> usize {
        self.tris.push(Some(tri));
        self.tris.len() - 1
    }

    /// Registers element `k` on edge `key`, creating the entry with
    /// `class_if_new` if the edge did not exist yet.
    fn attach(&mut self, key: PairKey, k: usize, class_if_new: BoundaryClass) {
        let info = self.adj.entry(key).or_insert(EdgeInfo {
            elements: [None, None],
            class: class_if_new,
        });
        if info.elements[0].is_none() {
            info.elements[0] = Some(k);
        } else if info.elements[1].is_none() {
            info.elements[1] = Some(k);
        } else {
            panic!("edge ({}, {}) attached to three elements", key.0, key.1);
        }
    }

    /// Removes element `k` from edge `key`; the entry disappears once no
    /// element references it (the edge itself has been split away).
    fn detach(&mut self, key: PairKey, k: usize) {
        let info = self
            .adj
            .get_mut(&key)
            .expect("detach from nonexistent edge");
        let slot = info
            .elements
            .iter_mut()
            .find(|s| **s == Some(k))
            .expect("detach of unattached element");
        *slot = None;
        if info.elements.iter().all(Option::is_none) {
            self.adj.remove(&key);
        }
    }

    /// Rebuilds a proper `Mesh` from the surviving triangles. Children are
    /// appended in creation order and parents keep their slots until
    /// consumed, so the rebuild is deterministic.
    fn finish(mut self, parent: &Mesh) -> Result<Mesh, MeshError> {
        let tris: Vec<[VertexId; 3]> = self.tris.iter().flatten().copied().collect();
        let verts = std::mem::take(&mut self.verts);
        let adj = &self.adj;
        assemble_topology(
            verts,
            &tris,
            parent.hooks.clone(),
            parent.generation + 1,
            |key, _| {
                adj.get(&key)
                    .expect("refined edge missing from adjacency")
                    .class
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::mesh::{aligned_square, half_disk, peterson};

    /// Structural invariants every refined mesh must satisfy: conforming
    /// adjacency and Euler's formula for a simply connected triangulation.
    fn check_conforming(mesh: &Mesh) {
        for (i, e) in mesh.edges.iter().enumerate() {
            assert!(e.elements[0].is_some(), "edge {i} has no element");
            for k in e.elements.iter().flatten() {
                assert!(
                    mesh.elements[*k].edges.contains(&i),
                    "edge {i} lists element {k}, which does not list it back"
                );
            }
        }
        let v = mesh.vertices.len() as i64;
        let e = mesh.edges.len() as i64;
        let t = mesh.elements.len() as i64;
        assert_eq!(v - e + t, 1, "Euler characteristic violated");
    }

    #[test]
    fn single_triangle_bisects_at_hypotenuse() {
        let vertices = vec![
            Vertex::new(Vec2::new(0.0, 0.0)),
            Vertex::new(Vec2::new(1.0, 0.0)),
            Vertex::new(Vec2::new(0.0, 1.0)),
        ];
        let mesh = Mesh::build(vertices, &[[0, 1, 2]], Vec::new()).unwrap();
        let fine = mesh.bisect(&[0]).unwrap();
        assert_eq!(fine.elements.len(), 2);
        assert_eq!(fine.vertices.len(), 4);
        assert_eq!(fine.edges.len(), 5);
        assert_eq!(fine.generation, 1);
        assert_eq!(fine.vertices[3].pos, Vec2::new(0.5, 0.5));
        for e in &fine.elements {
            assert!((e.area - 0.25).abs() < 1e-15);
        }
        check_conforming(&fine);
    }

    #[test]
    fn marking_one_of_a_compatible_pair_splits_both() {
        let vertices = vec![
            Vertex::new(Vec2::new(0.0, 0.0)),
            Vertex::new(Vec2::new(1.0, 0.0)),
            Vertex::new(Vec2::new(1.0, 1.0)),
            Vertex::new(Vec2::new(0.0, 1.0)),
        ];
        let mesh = Mesh::build(vertices, &[[0, 1, 2], [0, 2, 3]], Vec::new()).unwrap();
        let fine = mesh.bisect(&[0]).unwrap();
        assert_eq!(fine.elements.len(), 4);
        assert_eq!(fine.vertices.len(), 5);
        assert_eq!(fine.edges.len(), 8);
        assert_eq!(fine.vertices[4].pos, Vec2::new(0.5, 0.5));
        check_conforming(&fine);
    }

    #[test]
    fn incompatible_neighbor_is_forced_first() {
        // Left triangle's refinement edge is the shared vertical edge, but
        // the right triangle's is its own hypotenuse, so marking the left
        // one must drag the right one along.
        let vertices = vec![
            Vertex::new(Vec2::new(-0.4, 0.5)),
            Vertex::new(Vec2::new(0.0, 0.0)),
            Vertex::new(Vec2::new(0.0, 1.0)),
            Vertex::new(Vec2::new(1.0, 0.0)),
        ];
        let mesh = Mesh::build(vertices, &[[0, 1, 2], [1, 3, 2]], Vec::new()).unwrap();
        // Sanity: shared edge (1, 2) is the refinement edge of element 0
        // but not of element 1, whose hypotenuse (2, 3) is longer.
        let e0 = mesh.elements[0].edges[mesh.elements[0].refinement_edge];
        assert_eq!(mesh.edges[e0].vertices, [1, 2]);
        let e1 = mesh.elements[1].edges[mesh.elements[1].refinement_edge];
        assert_eq!(mesh.edges[e1].vertices, [2, 3]);

        let fine = mesh.bisect(&[0]).unwrap();
        // Element 1 splits at its hypotenuse (boundary); its child along
        // (1, 2) is then compatible with element 0 and both split there:
        // three single splits, each replacing one element by two.
        assert_eq!(fine.elements.len(), 5);
        assert_eq!(fine.vertices.len(), 6);
        check_conforming(&fine);
        assert!((fine.total_area() - mesh.total_area()).abs() < 1e-14);
    }

    #[test]
    fn uniform_refine_quadruples_elements_and_halves_h() {
        let mesh = aligned_square(2);
        let fine = mesh.uniform_refine().unwrap();
        assert_eq!(fine.elements.len(), 4 * mesh.elements.len());
        assert_eq!(fine.generation, 2);
        assert!((fine.h_max() - 0.5 * mesh.h_max()).abs() < 1e-15);
        assert!((fine.total_area() - 1.0).abs() < 1e-13);
        check_conforming(&fine);

        let finer = fine.uniform_refine().unwrap();
        assert_eq!(finer.elements.len(), 16 * mesh.elements.len());
        assert!((finer.h_max() - 0.25 * mesh.h_max()).abs() < 1e-15);
        check_conforming(&finer);
    }

    #[test]
    fn boundary_classes_survive_refinement() {
        let mut mesh = aligned_square(2);
        let beta = |_: Vec2| Vec2::new(1.0, 1.0);
        mesh.classify_boundary(&beta, 1e-12);
        assert_eq!(mesh.boundary_edges(BoundaryClass::Inflow).count(), 4);
        let fine = mesh.uniform_refine().unwrap();
        // No re-classification: halves inherit the parent class.
        assert_eq!(fine.boundary_edges(BoundaryClass::Inflow).count(), 8);
        assert_eq!(fine.boundary_edges(BoundaryClass::Outflow).count(), 8);
        check_conforming(&fine);
    }

    #[test]
    fn min_angle_stays_bounded_over_many_generations() {
        // Longest-edge bisection keeps descendant angles above half the
        // initial minimum angle.
        let mut mesh = peterson(0.5).unwrap();
        let floor = 0.5 * mesh.min_angle();
        let target = Vec2::new(0.3, 0.55);
        for gen in 0..25 {
            // Mark the elements containing one fixed point, driving a deep
            // local lineage without exponential growth.
            let marked: Vec<ElementId> = (0..mesh.elements.len())
                .filter(|&k| {
                    let [a, b, c] = mesh.element_coords(k);
                    let s0 = crate::geom::signed_area(a, b, target);
                    let s1 = crate::geom::signed_area(b, c, target);
                    let s2 = crate::geom::signed_area(c, a, target);
                    s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0
                })
                .collect();
            assert!(!marked.is_empty());
            mesh = mesh.bisect(&marked).unwrap();
            assert!(
                mesh.min_angle() >= floor,
                "generation {gen}: min angle {} fell below {floor}",
                mesh.min_angle()
            );
        }
        assert_eq!(mesh.generation, 25);
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        check_conforming(&mesh);
    }

    #[test]
    fn refinement_is_deterministic() {
        let mesh = aligned_square(3);
        let marked = [0, 5, 7, 11];
        let a = mesh.bisect(&marked).unwrap();
        let b = mesh.bisect(&marked).unwrap();
        assert_eq!(a.elements.len(), b.elements.len());
        assert_eq!(a.edges.len(), b.edges.len());
        for (ea, eb) in a.elements.iter().zip(&b.elements) {
            assert_eq!(ea.vertices, eb.vertices);
            assert_eq!(ea.edges, eb.edges);
        }
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            assert_eq!(va.pos, vb.pos);
        }
    }

    #[test]
    fn snapped_midpoints_land_on_the_circle() {
        let mesh = half_disk();
        let fine = mesh.uniform_refine().unwrap().uniform_refine().unwrap();
        let mut arc_vertices = 0;
        for v in &fine.vertices {
            if v.geometry_tag.is_some() {
                assert!(
                    (v.pos.norm() - 1.0).abs() < 1e-15,
                    "tagged vertex off the unit circle: {:?}",
                    v.pos
                );
                arc_vertices += 1;
            }
        }
        assert!(arc_vertices > 5, "refinement should add arc vertices");
        // Snapping pushes area outward toward the half-disk area π/2.
        assert!(fine.total_area() > mesh.total_area());
        assert!(fine.total_area() < std::f64::consts::PI / 2.0);
        check_conforming(&fine);
    }

    #[test]
    fn marked_duplicates_and_consumed_elements_are_tolerated() {
        let mesh = aligned_square(2);
        let fine = mesh.bisect(&[0, 0, 1, 0]).unwrap();
        check_conforming(&fine);
        assert!((fine.total_area() - 1.0).abs() < 1e-14);
    }
}
