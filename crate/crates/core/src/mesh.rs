//! Conforming triangulations of `[-1,1]²` refined by newest-vertex bisection.
//!
//! All snapshots that descend from one initial mesh share an append-only
//! refinement forest. A snapshot is immutable: `refine` and `coarsen` build a
//! new snapshot and leave the old one usable, which is what the adaptive
//! driver needs to roll back to a checkpointed mesh.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

pub const NONE: usize = usize::MAX;

/// Default cap on the bisection depth of a single element.
pub const DEFAULT_MAX_GENERATION: u32 = 30;

/// A node of the refinement forest.
///
/// `verts[0]` is the newest vertex; the refinement edge is `(verts[1], verts[2])`.
/// Vertices are stored counterclockwise.
#[derive(Clone, Debug)]
pub struct Node {
    pub verts: [usize; 3],
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub generation: u32,
}

#[derive(Debug, Default)]
pub struct Forest {
    pub vertices: Vec<[f64; 2]>,
    pub nodes: Vec<Node>,
    midpoints: HashMap<(usize, usize), usize>,
    initial_min_angle: f64,
}

impl Forest {
    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let m = self.vertices.len();
        self.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        self.midpoints.insert(key, m);
        m
    }

    /// Children of `t`, creating them on first bisection.
    fn bisect(&mut self, t: usize) -> [usize; 2] {
        if let Some(c) = self.nodes[t].children {
            return c;
        }
        let [p, a, b] = self.nodes[t].verts;
        let m = self.midpoint(a, b);
        let generation = self.nodes[t].generation + 1;
        let c0 = self.nodes.len();
        self.nodes.push(Node {
            verts: [m, p, a],
            parent: Some(t),
            children: None,
            generation,
        });
        self.nodes.push(Node {
            verts: [m, b, p],
            parent: Some(t),
            children: None,
            generation,
        });
        self.nodes[t].children = Some([c0, c0 + 1]);
        [c0, c0 + 1]
    }
}

/// An active element of a snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Element {
    /// Forest id, stable across snapshots of one lineage.
    pub id: usize,
    /// Counterclockwise vertex ids; `vertices[0]` is the newest vertex.
    pub vertices: [usize; 3],
    pub parent: Option<usize>,
    pub generation: u32,
}

impl Element {
    /// Local index of the refinement edge (the edge opposite the newest vertex).
    pub fn refinement_edge(&self) -> usize {
        0
    }
}

/// Edge of the active mesh. `elements[1]` is `None` on the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub elements: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements[1].is_none()
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Local edge `i` of a triangle is opposite local vertex `i`.
pub fn local_edge(verts: &[usize; 3], i: usize) -> (usize, usize) {
    (verts[(i + 1) % 3], verts[(i + 2) % 3])
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn triangle_angles(p: [[f64; 2]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
        out[i] = cos.clamp(-1.0, 1.0).acos();
    }
    out
}

/// An immutable conforming snapshot of the active leaves of a refinement forest.
#[derive(Clone)]
pub struct Triangulation {
    id: u64,
    lineage: u64,
    forest: Arc<RwLock<Forest>>,
    vertices: Vec<[f64; 2]>,
    elements: Vec<Element>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 3]>,
    active_index: HashMap<usize, usize>,
    initial_min_angle: f64,
}

impl std::fmt::Debug for Triangulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Triangulation")
            .field("id", &self.id)
            .field("lineage", &self.lineage)
            .field("elements", &self.elements.len())
            .field("edges", &self.edges.len())
            .finish()
    }
}

impl Triangulation {
    /// Uniform mesh of `[-1,1]²` with `n×n` squares, each split into two right
    /// triangles along a diagonal. Diagonals alternate in a union-jack pattern so
    /// the mesh is symmetric under `x ↦ −x` and `y ↦ −y` for even `n`.
    pub fn uniform(n: usize) -> Triangulation {
        assert!(n >= 1, "need at least one subdivision per side");
        let h = 2.0 / n as f64;
        let mut forest = Forest::default();
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { 1.0 } else { -1.0 + i as f64 * h };
                let y = if j == n { 1.0 } else { -1.0 + j as f64 * h };
                forest.vertices.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                let cx = -1.0 + (i as f64 + 0.5) * h;
                let cy = -1.0 + (j as f64 + 0.5) * h;
                // Newest vertex at the right angle, refinement edge on the diagonal.
                let tris = if cx * cy >= 0.0 {
                    // diagonal v00–v11
                    [[v10, v11, v00], [v01, v00, v11]]
                } else {
                    // diagonal v10–v01
                    [[v00, v10, v01], [v11, v01, v10]]
                };
                for verts in tris {
                    forest.nodes.push(Node {
                        verts,
                        parent: None,
                        children: None,
                        generation: 0,
                    });
                }
            }
        }
        Self::from_forest_roots(forest)
    }

    /// A mesh built from explicit vertices and triangles. Orientation is fixed
    /// to counterclockwise and the longest edge becomes the refinement edge.
    pub fn from_elements(vertices: Vec<[f64; 2]>, triangles: &[([usize; 3], u32)]) -> Result<Triangulation> {
        Self::build(vertices, triangles, false)
    }

    /// Like [`Triangulation::from_elements`] but keeps each triangle's vertex
    /// order, which must already be counterclockwise with the newest vertex
    /// first. Reading back a written snapshot this way reproduces the element,
    /// edge and degree-of-freedom numbering.
    pub fn from_ordered_elements(vertices: Vec<[f64; 2]>, triangles: &[([usize; 3], u32)]) -> Result<Triangulation> {
        Self::build(vertices, triangles, true)
    }

    fn build(vertices: Vec<[f64; 2]>, triangles: &[([usize; 3], u32)], keep_order: bool) -> Result<Triangulation> {
        let mut forest = Forest {
            vertices,
            ..Default::default()
        };
        for (k, &(t, generation)) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= forest.vertices.len()) {
                return Err(Error::Precondition(format!("element {k} references a missing vertex")));
            }
            let p = t.map(|v| forest.vertices[v]);
            let area = signed_area(p);
            if area.abs() <= 0.0 {
                return Err(Error::Precondition(format!("element {k} is degenerate")));
            }
            if keep_order {
                if area < 0.0 {
                    return Err(Error::Precondition(format!("element {k} is clockwise")));
                }
                forest.nodes.push(Node {
                    verts: t,
                    parent: None,
                    children: None,
                    generation,
                });
                continue;
            }
            let mut verts = if area > 0.0 { t } else { [t[0], t[2], t[1]] };
            let q = verts.map(|v| forest.vertices[v]);
            let len = |i: usize| {
                let a = q[(i + 1) % 3];
                let b = q[(i + 2) % 3];
                (a[0] - b[0]).hypot(a[1] - b[1])
            };
            let longest = (0..3).fold(0, |best, i| if len(i) > len(best) + 1e-14 { i } else { best });
            verts.rotate_left(longest);
            forest.nodes.push(Node {
                verts,
                parent: None,
                children: None,
                generation,
            });
        }
        Ok(Self::from_forest_roots(forest))
    }

    fn from_forest_roots(mut forest: Forest) -> Triangulation {
        let active: Vec<usize> = (0..forest.nodes.len()).collect();
        let min_angle = forest
            .nodes
            .iter()
            .map(|n| {
                let p = n.verts.map(|v| forest.vertices[v]);
                triangle_angles(p).into_iter().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        forest.initial_min_angle = min_angle;
        let forest = Arc::new(RwLock::new(forest));
        Self::snapshot(forest, fresh_id(), active)
    }

    fn snapshot(forest: Arc<RwLock<Forest>>, lineage: u64, mut active: Vec<usize>) -> Triangulation {
        active.sort_unstable();
        let (vertices, elements, initial_min_angle) = {
            let f = forest.read().expect("forest lock poisoned");
            let elements: Vec<Element> = active
                .iter()
                .map(|&id| {
                    let n = &f.nodes[id];
                    Element {
                        id,
                        vertices: n.verts,
                        parent: n.parent,
                        generation: n.generation,
                    }
                })
                .collect();
            (f.vertices.clone(), elements, f.initial_min_angle)
        };
        let active_index = elements.iter().enumerate().map(|(k, e)| (e.id, k)).collect();
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(elements.len() * 2);
        let mut element_edges = vec![[NONE; 3]; elements.len()];
        for (k, e) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = local_edge(&e.vertices, i);
                let key = edge_key(a, b);
                let idx = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        elements: [None, None],
                    });
                    edges.len() - 1
                });
                let slot = &mut edges[idx].elements;
                if slot[0].is_none() {
                    slot[0] = Some(k);
                } else {
                    debug_assert!(slot[1].is_none(), "edge shared by more than two elements");
                    slot[1] = Some(k);
                }
                element_edges[k][i] = idx;
            }
        }
        Triangulation {
            id: fresh_id(),
            lineage,
            forest,
            vertices,
            elements,
            edges,
            element_edges,
            active_index,
            initial_min_angle,
        }
    }

    /// `mesh <nv> <ne>`, then `v <id> <x> <y>` and `e <id> <v0> <v1> <v2> <generation>`
    /// lines. Element ids are active indices and vertex order is kept, newest first.
    pub fn write_text(&self, w: &mut impl std::fmt::Write) -> std::fmt::Result {
        writeln!(w, "mesh {} {}", self.vertices.len(), self.elements.len())?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "v {i} {:.16e} {:.16e}", v[0], v[1])?;
        }
        for (k, e) in self.elements.iter().enumerate() {
            let [a, b, c] = e.vertices;
            writeln!(w, "e {k} {a} {b} {c} {}", e.generation)?;
        }
        Ok(())
    }

    /// Parse the mesh block at the start of `lines`, returning the mesh and the
    /// number of lines consumed.
    pub fn parse_text(lines: &[&str], source_name: &str, first_line: usize) -> Result<(Triangulation, usize)> {
        let err = |i: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: first_line + i,
            message,
        };
        let fields = |i: usize| -> Result<Vec<&str>> {
            lines
                .get(i)
                .map(|l| l.split_whitespace().collect())
                .ok_or_else(|| err(i, "unexpected end of file".into()))
        };
        let head = fields(0)?;
        if head.len() != 3 || head[0] != "mesh" {
            return Err(err(0, "expected `mesh <nv> <ne>`".into()));
        }
        let nv: usize = head[1].parse().map_err(|_| err(0, format!("bad vertex count {:?}", head[1])))?;
        let ne: usize = head[2].parse().map_err(|_| err(0, format!("bad element count {:?}", head[2])))?;
        let mut vertices = Vec::with_capacity(nv);
        for i in 1..=nv {
            let f = fields(i)?;
            let ok = f.len() == 4 && f[0] == "v" && f[1].parse::<usize>().ok() == Some(i - 1);
            let x = f.get(2).and_then(|s| s.parse::<f64>().ok());
            let y = f.get(3).and_then(|s| s.parse::<f64>().ok());
            match (ok, x, y) {
                (true, Some(x), Some(y)) => vertices.push([x, y]),
                _ => return Err(err(i, format!("expected `v {} <x> <y>`", i - 1))),
            }
        }
        let mut triangles = Vec::with_capacity(ne);
        for i in nv + 1..=nv + ne {
            let f = fields(i)?;
            let k = i - nv - 1;
            let nums: Option<Vec<usize>> = f.iter().skip(1).map(|s| s.parse().ok()).collect();
            match nums {
                Some(n) if f.len() == 6 && f[0] == "e" && n[0] == k => {
                    let generation = u32::try_from(n[4]).map_err(|_| err(i, "generation out of range".into()))?;
                    triangles.push(([n[1], n[2], n[3]], generation));
                }
                _ => return Err(err(i, format!("expected `e {k} <v0> <v1> <v2> <generation>`"))),
            }
        }
        let mesh = Triangulation::from_ordered_elements(vertices, &triangles).map_err(|e| err(nv + 1, e.to_string()))?;
        Ok((mesh, 1 + nv + ne))
    }

    /// Unique stamp of this snapshot.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Stamp shared by every snapshot descending from the same initial mesh.
    pub fn lineage(&self) -> u64 {
        self.lineage
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Size of the vertex table. Vertices released by coarsening stay in the
    /// table, so not every vertex is referenced by an active element.
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> &Element {
        &self.elements[k]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn element_edges(&self, k: usize) -> [usize; 3] {
        self.element_edges[k]
    }

    /// Active index of a forest id, if that element is active in this snapshot.
    pub fn active_index(&self, forest_id: usize) -> Option<usize> {
        self.active_index.get(&forest_id).copied()
    }

    pub fn coords(&self, k: usize) -> [[f64; 2]; 3] {
        self.elements[k].vertices.map(|v| self.vertices[v])
    }

    pub fn area(&self, k: usize) -> f64 {
        signed_area(self.coords(k))
    }

    /// Diameter `h_K` (longest edge).
    pub fn diameter(&self, k: usize) -> f64 {
        let p = self.coords(k);
        (0..3)
            .map(|i| {
                let a = p[i];
                let b = p[(i + 1) % 3];
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let p = self.coords(k);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Length `h_τ` of an edge.
    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pa[0] - pb[0]).hypot(pa[1] - pb[1])
    }

    /// Unit normal of edge `e` pointing out of element `k`.
    pub fn outward_normal(&self, e: usize, k: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let t = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = t[0].hypot(t[1]);
        let mut n = [t[1] / len, -t[0] / len];
        let c = self.centroid(k);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if (mid[0] - c[0]) * n[0] + (mid[1] - c[1]) * n[1] < 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Smallest interior angle over the active elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_elements())
            .map(|k| triangle_angles(self.coords(k)).into_iter().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest angle of the initial mesh of this lineage, in radians.
    pub fn initial_min_angle(&self) -> f64 {
        self.initial_min_angle
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|k| self.area(k)).sum()
    }

    pub fn max_generation(&self) -> u32 {
        self.elements.iter().map(|e| e.generation).max().unwrap_or(0)
    }

    pub(crate) fn forest(&self) -> RwLockReadGuard<'_, Forest> {
        self.forest.read().expect("forest lock poisoned")
    }

    /// Bisect every marked element at least once, adding closure bisections
    /// until the mesh is conforming again. Marked elements at
    /// [`DEFAULT_MAX_GENERATION`] are left alone.
    pub fn refine(&self, marked: &[usize]) -> Triangulation {
        self.refine_capped(marked, DEFAULT_MAX_GENERATION)
    }

    pub fn refine_capped(&self, marked: &[usize], max_generation: u32) -> Triangulation {
        let mut ids: Vec<usize> = marked
            .iter()
            .map(|&k| &self.elements[k])
            .filter(|e| e.generation < max_generation)
            .map(|e| e.id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Self::snapshot(self.forest.clone(), self.lineage, self.active_ids());
        }
        let mut forest = self.forest.write().expect("forest lock poisoned");
        let mut work = Closure::new(&mut forest, &self.elements);
        for id in ids {
            work.refine(id);
        }
        let active = work.active_ids();
        drop(forest);
        Self::snapshot(self.forest.clone(), self.lineage, active)
    }

    /// Refine every element twice, which halves every diameter.
    pub fn refine_uniform(&self) -> Triangulation {
        let all: Vec<usize> = (0..self.num_elements()).collect();
        let once = self.refine_capped(&all, u32::MAX);
        let all: Vec<usize> = (0..once.num_elements()).collect();
        once.refine_capped(&all, u32::MAX)
    }

    /// Undo recorded bisections. A newest vertex is removed only when every
    /// active element around it is marked and was created by bisecting that
    /// vertex's edge, so the result stays conforming. Returns the new snapshot
    /// and the number of marked elements that could not be coarsened.
    pub fn coarsen(&self, marked: &[usize]) -> (Triangulation, usize) {
        let marked_ids: HashSet<usize> = marked.iter().map(|&k| self.elements[k].id).collect();
        if marked_ids.is_empty() {
            return (Self::snapshot(self.forest.clone(), self.lineage, self.active_ids()), 0);
        }
        let forest = self.forest.read().expect("forest lock poisoned");
        let mut active: HashSet<usize> = self.elements.iter().map(|e| e.id).collect();
        let mut around: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in &self.elements {
            for v in e.vertices {
                around.entry(v).or_default().push(e.id);
            }
        }
        let mut order: Vec<usize> = marked_ids.iter().copied().collect();
        order.sort_unstable();
        let mut visited = HashSet::new();
        for id in order {
            if !active.contains(&id) {
                continue;
            }
            let node = &forest.nodes[id];
            if node.parent.is_none() {
                continue;
            }
            let m = node.verts[0];
            if !visited.insert(m) {
                continue;
            }
            let patch: Vec<usize> = around.get(&m).cloned().unwrap_or_default();
            if !(patch.len() == 2 || patch.len() == 4) {
                continue;
            }
            let ok = patch.iter().all(|&t| {
                let n = &forest.nodes[t];
                marked_ids.contains(&t)
                    && n.verts[0] == m
                    && n.parent.is_some_and(|p| {
                        forest.nodes[p]
                            .children
                            .is_some_and(|c| c.iter().all(|x| patch.contains(x)))
                    })
            });
            if !ok {
                continue;
            }
            let mut parents: Vec<usize> = patch.iter().filter_map(|&t| forest.nodes[t].parent).collect();
            parents.sort_unstable();
            parents.dedup();
            for p in parents {
                let children = forest.nodes[p].children.expect("parent without children");
                for c in children {
                    active.remove(&c);
                    for v in forest.nodes[c].verts {
                        if let Some(list) = around.get_mut(&v) {
                            list.retain(|&x| x != c);
                        }
                    }
                }
                active.insert(p);
                for v in forest.nodes[p].verts {
                    around.entry(v).or_default().push(p);
                }
            }
        }
        drop(forest);
        let skipped = marked_ids.iter().filter(|id| active.contains(id)).count();
        let snap = Self::snapshot(self.forest.clone(), self.lineage, active.into_iter().collect());
        (snap, skipped)
    }

    fn active_ids(&self) -> Vec<usize> {
        self.elements.iter().map(|e| e.id).collect()
    }

    /// Locate the element of this snapshot containing forest node `id`, by
    /// walking up the forest. `None` if no ancestor-or-self is active.
    pub fn active_ancestor(&self, id: usize) -> Option<usize> {
        let forest = self.forest();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if let Some(k) = self.active_index(c) {
                return Some(k);
            }
            cur = forest.nodes.get(c).and_then(|n| n.parent);
        }
        None
    }

    /// Active elements of this snapshot that tile forest node `id`.
    /// `None` if the subtree under `id` is not covered by active leaves.
    pub fn active_descendants(&self, id: usize) -> Option<Vec<usize>> {
        let forest = self.forest();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if let Some(k) = self.active_index(c) {
                out.push(k);
                continue;
            }
            match forest.nodes.get(c).and_then(|n| n.children) {
                Some(ch) => stack.extend(ch),
                None => return None,
            }
        }
        Some(out)
    }
}

/// Working state of one refinement pass.
struct Closure<'a> {
    forest: &'a mut Forest,
    active: HashSet<usize>,
    edge_map: HashMap<(usize, usize), [usize; 2]>,
}

impl<'a> Closure<'a> {
    fn new(forest: &'a mut Forest, elements: &[Element]) -> Self {
        let mut c = Closure {
            forest,
            active: HashSet::with_capacity(elements.len() * 2),
            edge_map: HashMap::with_capacity(elements.len() * 3),
        };
        for e in elements {
            c.activate(e.id);
        }
        c
    }

    fn activate(&mut self, t: usize) {
        self.active.insert(t);
        let verts = self.forest.nodes[t].verts;
        for i in 0..3 {
            let (a, b) = local_edge(&verts, i);
            let slot = self.edge_map.entry(edge_key(a, b)).or_insert([NONE, NONE]);
            if slot[0] == NONE {
                slot[0] = t;
            } else {
                slot[1] = t;
            }
        }
    }

    fn deactivate(&mut self, t: usize) {
        self.active.remove(&t);
        let verts = self.forest.nodes[t].verts;
        for i in 0..3 {
            let (a, b) = local_edge(&verts, i);
            let key = edge_key(a, b);
            if let Some(slot) = self.edge_map.get_mut(&key) {
                if slot[0] == t {
                    slot[0] = slot[1];
                    slot[1] = NONE;
                } else if slot[1] == t {
                    slot[1] = NONE;
                }
                if slot[0] == NONE {
                    self.edge_map.remove(&key);
                }
            }
        }
    }

    fn neighbor(&self, t: usize, a: usize, b: usize) -> Option<usize> {
        let slot = self.edge_map.get(&edge_key(a, b))?;
        if slot[0] == t {
            (slot[1] != NONE).then_some(slot[1])
        } else {
            Some(slot[0])
        }
    }

    fn bisect(&mut self, t: usize) {
        let children = self.forest.bisect(t);
        self.deactivate(t);
        for c in children {
            self.activate(c);
        }
    }

    fn refine(&mut self, t: usize) {
        while self.active.contains(&t) {
            let [_, a, b] = self.forest.nodes[t].verts;
            match self.neighbor(t, a, b) {
                None => self.bisect(t),
                Some(n) => {
                    let nv = self.forest.nodes[n].verts;
                    if edge_key(nv[1], nv[2]) == edge_key(a, b) {
                        self.bisect(t);
                        self.bisect(n);
                    } else {
                        self.refine(n);
                    }
                }
            }
        }
    }

    fn active_ids(&self) -> Vec<usize> {
        self.active.iter().copied().collect()
    }
}
