//! Zero level sets of finite element fields and sharp-interface diagnostics.
//!
//! Fields are contoured element by element on the linear interpolant over the
//! uniform `m × m` sub-triangulation whose nodes are the Lagrange nodes, so a
//! P2 element is split into four linear pieces.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::chsolver::DoubleWell;
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, LineRule};

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    /// The last point connects back to the first.
    pub closed: bool,
}

impl Polyline {
    /// Segments including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let count = if self.closed && n > 2 { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    /// Length-weighted centroid and mean distance to it.
    pub fn centroid_and_radius(&self) -> ([f64; 2], f64) {
        let mut c = [0.0; 2];
        let mut total = 0.0;
        for (a, b) in self.segments() {
            let l = dist(a, b);
            c[0] += l * 0.5 * (a[0] + b[0]);
            c[1] += l * 0.5 * (a[1] + b[1]);
            total += l;
        }
        if total == 0.0 {
            return (self.points.first().copied().unwrap_or([0.0; 2]), 0.0);
        }
        c = [c[0] / total, c[1] / total];
        let r: f64 = self
            .segments()
            .map(|(a, b)| dist(a, b) * 0.5 * (dist(a, c) + dist(b, c)))
            .sum();
        (c, r / total)
    }
}

/// The zero level set of a field at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub polylines: Vec<Polyline>,
    pub t: f64,
    /// Finest element generation of the mesh it was extracted from.
    pub generation: u32,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.points.is_empty())
    }

    pub fn num_points(&self) -> usize {
        self.polylines.iter().map(|p| p.points.len()).sum()
    }

    pub fn length(&self) -> f64 {
        self.polylines.iter().map(Polyline::length).sum()
    }

    pub fn closed_loops(&self) -> impl Iterator<Item = &Polyline> {
        self.polylines.iter().filter(|p| p.closed)
    }

    pub fn at_time(mut self, t: f64) -> LevelSet {
        self.t = t;
        self
    }

    pub fn translated(&self, d: [f64; 2]) -> LevelSet {
        let mut out = self.clone();
        for p in out.polylines.iter_mut().flat_map(|l| l.points.iter_mut()) {
            p[0] += d[0];
            p[1] += d[1];
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "levelset {:.17e} {}", self.t, self.polylines.len()).unwrap();
        for p in &self.polylines {
            writeln!(s, "poly {} {}", p.points.len(), u8::from(p.closed)).unwrap();
            for q in &p.points {
                writeln!(s, "p {:.17e} {:.17e}", q[0], q[1]).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str, source_name: &str) -> Result<LevelSet> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines.next().ok_or_else(|| err(0, format!("unexpected end of file, wanted {what}")))
        };
        let num = |line: usize, s: &str| -> Result<f64> { s.parse().map_err(|_| err(line, format!("bad number {s:?}"))) };
        let count = |line: usize, s: &str| -> Result<usize> { s.parse().map_err(|_| err(line, format!("bad count {s:?}"))) };

        let (ln, head) = next("header")?;
        if head.len() != 3 || head[0] != "levelset" {
            return Err(err(ln, "expected `levelset <t> <n>`".into()));
        }
        let t = num(ln, head[1])?;
        let n = count(ln, head[2])?;
        let mut polylines = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, h) = next("poly")?;
            if h.len() != 3 || h[0] != "poly" || !matches!(h[2], "0" | "1") {
                return Err(err(ln, "expected `poly <n> <0|1>`".into()));
            }
            let m = count(ln, h[1])?;
            let mut points = Vec::with_capacity(m);
            for _ in 0..m {
                let (ln, p) = next("point")?;
                if p.len() != 3 || p[0] != "p" {
                    return Err(err(ln, "expected `p <x> <y>`".into()));
                }
                points.push([num(ln, p[1])?, num(ln, p[2])?]);
            }
            polylines.push(Polyline {
                points,
                closed: h[2] == "1",
            });
        }
        Ok(LevelSet {
            polylines,
            t,
            generation: 0,
        })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let s = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2;
    if s <= 0.0 {
        dist(p, a)
    } else if s >= 1.0 {
        dist(p, b)
    } else {
        dist(p, [a[0] + s * d[0], a[1] + s * d[1]])
    }
}

/// A lattice node of the sub-triangulation, identified by its barycentric
/// weights on global vertex ids so that elements sharing it agree on the key.
type NodeKey = [(usize, u16); 3];

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum PointKey {
    Node(NodeKey),
    Edge(NodeKey, NodeKey),
}

fn node_key(verts: [usize; 3], w: [u16; 3]) -> NodeKey {
    let mut k = [(usize::MAX, 0u16); 3];
    for i in 0..3 {
        k[i] = if w[i] == 0 { (usize::MAX, 0) } else { (verts[i], w[i]) };
    }
    k.sort_unstable();
    k
}

struct Node {
    key: NodeKey,
    x: [f64; 2],
    value: f64,
}

/// Contour `f = 0`. Nodal values `≥ 0` count as positive, so crossings at a
/// node with value exactly zero land on that node.
pub fn extract_zero_level_set(f: &FEFunction) -> LevelSet {
    let space = f.space();
    let mesh = space.mesh();
    let m = space.degree().max(1);
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut index: HashMap<PointKey, usize> = HashMap::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();
    let mut values: HashMap<NodeKey, f64> = HashMap::new();

    // Sub-triangles of the lattice `{(i, j, m−i−j)/m}`.
    let mut subs: Vec<[[u16; 3]; 3]> = Vec::new();
    let mm = m as u16;
    for i in 0..mm {
        for j in 0..mm - i {
            let a = [i, j, mm - i - j];
            let b = [i + 1, j, mm - i - j - 1];
            let c = [i, j + 1, mm - i - j - 1];
            subs.push([a, b, c]);
            if i + j + 1 < mm {
                let d = [i + 1, j + 1, mm - i - j - 2];
                subs.push([b, d, c]);
            }
        }
    }

    for k in 0..mesh.num_elements() {
        let verts = mesh.element(k).vertices;
        let mut node = |w: [u16; 3]| -> Node {
            let key = node_key(verts, w);
            let lam = w.map(|v| v as f64 / m as f64);
            let value = *values.entry(key).or_insert_with(|| f.eval_local(k, lam));
            // Position from the canonical key so shared nodes get identical bits.
            let mut x = [0.0; 2];
            for &(v, wt) in key.iter().filter(|e| e.1 > 0) {
                let p = mesh.vertex(v);
                x[0] += wt as f64 / m as f64 * p[0];
                x[1] += wt as f64 / m as f64 * p[1];
            }
            Node { key, x, value }
        };
        for sub in &subs {
            let nodes = sub.map(&mut node);
            let mut ends: Vec<usize> = Vec::with_capacity(2);
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let (na, nb) = (&nodes[a], &nodes[b]);
                if (na.value >= 0.0) == (nb.value >= 0.0) {
                    continue;
                }
                // Orient from the positive node so the zero-valued case is a node hit.
                let (pos, neg) = if na.value >= 0.0 { (na, nb) } else { (nb, na) };
                let key = if pos.value == 0.0 {
                    PointKey::Node(pos.key)
                } else if pos.key < neg.key {
                    PointKey::Edge(pos.key, neg.key)
                } else {
                    PointKey::Edge(neg.key, pos.key)
                };
                let id = *index.entry(key).or_insert_with(|| {
                    let (p, q) = match key {
                        PointKey::Edge(ka, _) if ka == pos.key => (pos, neg),
                        _ => (neg, pos),
                    };
                    let s = p.value / (p.value - q.value);
                    points.push([p.x[0] + s * (q.x[0] - p.x[0]), p.x[1] + s * (q.x[1] - p.x[1])]);
                    points.len() - 1
                });
                ends.push(id);
            }
            if ends.len() == 2 && ends[0] != ends[1] {
                segments.push([ends[0], ends[1]]);
            }
        }
    }

    LevelSet {
        polylines: chain(&points, &segments),
        t: 0.0,
        generation: mesh.max_generation(),
    }
}

/// Join segments sharing endpoints into polylines. Odd-degree points (curve
/// ends on the boundary) start open polylines; what remains forms loops.
fn chain(points: &[[f64; 2]], segments: &[[usize; 2]]) -> Vec<Polyline> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (s, seg) in segments.iter().enumerate() {
        adj[seg[0]].push(s);
        adj[seg[1]].push(s);
    }
    let mut used = vec![false; segments.len()];
    let walk = |start: usize, used: &mut [bool]| -> Vec<usize> {
        let mut path = vec![start];
        let mut at = start;
        while let Some(&s) = adj[at].iter().find(|&&s| !used[s]) {
            used[s] = true;
            at = if segments[s][0] == at { segments[s][1] } else { segments[s][0] };
            path.push(at);
        }
        path
    };
    let mut out = Vec::new();
    for p in 0..points.len() {
        if adj[p].len() % 2 == 1 && adj[p].iter().any(|&s| !used[s]) {
            let path = walk(p, &mut used);
            out.push(Polyline {
                points: path.iter().map(|&i| points[i]).collect(),
                closed: false,
            });
        }
    }
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let mut path = walk(segments[s][0], &mut used);
        let closed = path.len() > 2 && path.first() == path.last();
        if closed {
            path.pop();
        }
        out.push(Polyline {
            points: path.iter().map(|&i| points[i]).collect(),
            closed,
        });
    }
    out
}

/// `sup_{x ∈ A} dist(x, B)`, sampled at the vertices and segment midpoints of `A`.
pub fn one_sided_distance(a: &LevelSet, b: &LevelSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedDistance(format!(
            "level set with {} and {} points",
            a.num_points(),
            b.num_points()
        )));
    }
    let target: Vec<([f64; 2], [f64; 2])> = b
        .polylines
        .iter()
        .flat_map(|p| {
            let segs: Vec<_> = p.segments().collect();
            if segs.is_empty() {
                p.points.iter().map(|&q| (q, q)).collect()
            } else {
                segs
            }
        })
        .collect();
    // Segments of `A` that are also segments of `B` contribute nothing; this
    // keeps `d(A, A) = 0` exact instead of leaving midpoint round-off.
    let bits = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let shared: HashSet<_> = target.iter().flat_map(|&(p, q)| [(bits(p), bits(q)), (bits(q), bits(p))]).collect();
    let to_b = |x: [f64; 2]| {
        target
            .iter()
            .map(|&(p, q)| point_segment_distance(x, p, q))
            .fold(f64::INFINITY, f64::min)
    };
    let mut worst = 0.0f64;
    for p in &a.polylines {
        for &x in &p.points {
            worst = worst.max(to_b(x));
        }
        for (s, e) in p.segments() {
            if shared.contains(&(bits(s), bits(e))) {
                continue;
            }
            worst = worst.max(to_b([0.5 * (s[0] + e[0]), 0.5 * (s[1] + e[1])]));
        }
    }
    Ok(worst)
}

/// Symmetric (Hausdorff) distance between two level sets.
pub fn hausdorff_distance(a: &LevelSet, b: &LevelSet) -> Result<f64> {
    Ok(one_sided_distance(a, b)?.max(one_sided_distance(b, a)?))
}

/// One run entering a rate study.
#[derive(Clone, Debug)]
pub struct RateSample {
    pub tol: f64,
    pub epsilon: f64,
    pub dofs: usize,
    pub level_set: LevelSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateStudy {
    /// `d_k` between runs `k` and `k+1`.
    pub distances: Vec<f64>,
    /// `d_{k+1} / d_k`.
    pub distance_ratios: Vec<f64>,
    /// `(1/N²_{k+1} − 1/N²_{k+2}) / (1/N²_k − 1/N²_{k+1})`, the ratio expected under an `O(1/N²)` law.
    pub dof_predictors: Vec<f64>,
}

/// `(1/N²_{k+1} − 1/N²_{k+2}) / (1/N²_k − 1/N²_{k+1})`.
pub fn dof_predictor(n: [usize; 3]) -> f64 {
    let q = n.map(|v| 1.0 / (v as f64 * v as f64));
    (q[1] - q[2]) / (q[0] - q[1])
}

/// Distances between successive level sets of runs ordered by decreasing TOL,
/// next to the DOF law predictor.
pub fn rate_study(runs: &[RateSample]) -> Result<RateStudy> {
    if runs.len() < 3 {
        return Err(Error::Comparability(format!("need at least 3 runs, got {}", runs.len())));
    }
    let first = &runs[0];
    for r in &runs[1..] {
        if (r.level_set.t - first.level_set.t).abs() > 1e-12 * (1.0 + first.level_set.t.abs()) {
            return Err(Error::Comparability(format!(
                "level sets at t = {} and t = {}",
                first.level_set.t, r.level_set.t
            )));
        }
        if r.epsilon != first.epsilon {
            return Err(Error::Comparability(format!("ε = {} and ε = {}", first.epsilon, r.epsilon)));
        }
    }
    if runs.windows(2).any(|w| !(w[1].tol < w[0].tol)) {
        return Err(Error::Comparability("TOL must decrease from run to run".into()));
    }
    let distances = runs
        .windows(2)
        .map(|w| hausdorff_distance(&w[0].level_set, &w[1].level_set))
        .collect::<Result<Vec<_>>>()?;
    let distance_ratios = distances.windows(2).map(|d| d[1] / d[0]).collect();
    let dof_predictors = runs.windows(3).map(|w| dof_predictor([w[0].dofs, w[1].dofs, w[2].dofs])).collect();
    Ok(RateStudy {
        distances,
        distance_ratios,
        dof_predictors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Drift {
    /// Mean radius per snapshot and the largest deviation from the first.
    Radius { radii: Vec<f64>, max_drift: f64 },
    /// Snapshot `index` no longer has exactly one closed loop.
    TopologyChange { index: usize, loops: usize, open: usize },
}

/// Radius drift of a single closed loop over a trajectory of level sets.
pub fn circle_drift(trajectory: &[LevelSet]) -> Result<Drift> {
    let Some(first) = trajectory.first() else {
        return Err(Error::Precondition("empty trajectory".into()));
    };
    if first.closed_loops().count() != 1 || first.polylines.len() != 1 {
        return Err(Error::Precondition(format!(
            "initial level set has {} polylines, {} closed",
            first.polylines.len(),
            first.closed_loops().count()
        )));
    }
    let mut radii = Vec::with_capacity(trajectory.len());
    for (index, ls) in trajectory.iter().enumerate() {
        let loops = ls.closed_loops().count();
        let open = ls.polylines.len() - loops;
        if loops != 1 || open != 0 {
            return Ok(Drift::TopologyChange { index, loops, open });
        }
        radii.push(ls.polylines[0].centroid_and_radius().1);
    }
    let max_drift = radii.iter().map(|r| (r - radii[0]).abs()).fold(0.0, f64::max);
    Ok(Drift::Radius { radii, max_drift })
}

/// Constants of the sharp-interface limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeleShawConstants {
    /// Surface tension `σ = ∫_{−1}^{1} √(F(s)/2) ds`.
    pub sigma: f64,
}

impl HeleShawConstants {
    pub fn quartic() -> HeleShawConstants {
        let rule = LineRule::gauss(8);
        let sigma = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&p, &w)| {
                let s = 2.0 * p - 1.0;
                2.0 * w * (DoubleWell::energy_density(s) / 2.0).sqrt()
            })
            .sum();
        HeleShawConstants { sigma }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::FunctionSpace;
    use crate::mesh::Triangulation;
    use std::sync::Arc;

    fn field(n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> FEFunction {
        FEFunction::interpolate(FunctionSpace::new(Arc::new(Triangulation::uniform(n)), 2), f)
    }

    fn circle(r: f64, n: usize) -> LevelSet {
        let points = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        LevelSet {
            polylines: vec![Polyline { points, closed: true }],
            t: 0.0,
            generation: 0,
        }
    }

    #[test]
    fn vertical_line() {
        let ls = extract_zero_level_set(&field(4, |x, _| x));
        assert_eq!(ls.polylines.len(), 1);
        let p = &ls.polylines[0];
        assert!(!p.closed);
        let ends = [p.points[0], *p.points.last().unwrap()];
        assert!(ends.contains(&[0.0, -1.0]) && ends.contains(&[0.0, 1.0]), "{ends:?}");
        assert!((ls.length() - 2.0).abs() < 1e-10);
        assert!(p.points.iter().all(|q| q[0].abs() < 1e-12));
    }

    #[test]
    fn circle_is_one_closed_loop_with_quadratic_error() {
        let mut errs = Vec::new();
        for n in [4, 8, 16] {
            let f = field(n, |x, y| x * x + y * y - 0.25);
            let ls = extract_zero_level_set(&f);
            assert_eq!(ls.polylines.len(), 1);
            assert!(ls.polylines[0].closed);
            let worst = ls.polylines[0]
                .points
                .iter()
                .map(|p| (p[0].hypot(p[1]) - 0.5).abs())
                .fold(0.0, f64::max);
            let h = 2.0 / n as f64;
            assert!(worst <= 0.15 * h * h, "n = {n}: {worst}");
            errs.push(worst);
        }
        assert!(errs[2] < errs[0]);
    }

    #[test]
    fn constant_has_empty_level_set() {
        assert!(extract_zero_level_set(&field(3, |_, _| 1.0)).is_empty());
        assert!(extract_zero_level_set(&field(3, |_, _| -1.0)).is_empty());
    }

    #[test]
    fn extracted_points_are_zeros_of_the_linearization() {
        let f = field(6, |x, y| (3.0 * x).sin() + y * y - 0.3);
        let ls = extract_zero_level_set(&f);
        assert!(!ls.is_empty());
        let max = f.coeffs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in ls.polylines.iter().flat_map(|l| &l.points) {
            // The P2 value can differ from the sub-triangle linearization by O(h²);
            // the bound here only checks the points sit on the contour.
            let v = f.eval(*p).unwrap();
            assert!(v.abs() < 0.05 * max, "{p:?} -> {v}");
        }
    }

    #[test]
    fn extraction_is_invariant_under_refinement() {
        // Fields whose contour the linearization already reproduces exactly:
        // a linear field in P2, and any P1 field.
        let cases: Vec<FEFunction> = vec![
            field(4, |x, y| x + 0.3 * y - 0.1),
            FEFunction::interpolate(FunctionSpace::new(Arc::new(Triangulation::uniform(6)), 1), |x, y| {
                x * x + y * y - 0.25
            }),
        ];
        for f in cases {
            let a = extract_zero_level_set(&f);
            let mesh = f.space().mesh();
            let marked: Vec<usize> = (0..mesh.num_elements()).step_by(3).collect();
            let fine = FunctionSpace::new(Arc::new(mesh.refine(&marked)), f.space().degree());
            let b = extract_zero_level_set(&crate::fespace::transfer(&f, &fine).unwrap());
            assert!(hausdorff_distance(&a, &b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn distances() {
        let a = circle(0.5, 2000);
        assert_eq!(one_sided_distance(&a, &a).unwrap(), 0.0);
        let b = circle(0.6, 2000);
        assert!((one_sided_distance(&a, &b).unwrap() - 0.1).abs() < 1e-5);
        let d = 0.013;
        let moved = a.translated([d, 0.0]);
        assert!((hausdorff_distance(&a, &moved).unwrap() - d).abs() < 1e-5);
        let empty = LevelSet {
            polylines: vec![],
            t: 0.0,
            generation: 0,
        };
        assert!(matches!(one_sided_distance(&a, &empty), Err(Error::UndefinedDistance(_))));
    }

    #[test]
    fn rate_study_examples() {
        assert!((dof_predictor([5995, 9766, 12565]) - 0.2394).abs() < 1e-4);
        let base = circle(0.3, 500);
        let delta = 1e-3;
        let runs: Vec<RateSample> = [(0.04, 4.0), (0.02, 2.0), (0.01, 1.0)]
            .iter()
            .enumerate()
            .map(|(i, &(tol, k))| RateSample {
                tol,
                epsilon: 0.01,
                dofs: 1000 * (i + 1),
                level_set: base.translated([k * delta, 0.0]),
            })
            .collect();
        let study = rate_study(&runs).unwrap();
        assert!((study.distance_ratios[0] - 0.5).abs() < 1e-9, "{study:?}");

        let same: Vec<RateSample> = runs.iter().map(|r| RateSample { level_set: base.clone(), ..r.clone() }).collect();
        assert!(rate_study(&same).unwrap().distances.iter().all(|&d| d == 0.0));

        let mut bad = runs.clone();
        bad[2].epsilon = 0.02;
        assert!(matches!(rate_study(&bad), Err(Error::Comparability(_))));
        let mut late = runs;
        late[1].level_set.t = 0.5;
        assert!(matches!(rate_study(&late), Err(Error::Comparability(_))));
    }

    #[test]
    fn drift_of_frozen_and_split_fields() {
        let c = circle(0.4, 300);
        match circle_drift(&[c.clone(), c.clone()]).unwrap() {
            Drift::Radius { max_drift, radii } => {
                assert_eq!(max_drift, 0.0);
                assert!((radii[0] - 0.4).abs() < 1e-4);
            }
            other => panic!("{other:?}"),
        }
        let mut two = c.clone();
        two.polylines.push(circle(0.1, 50).polylines.remove(0));
        assert!(matches!(circle_drift(&[c, two]).unwrap(), Drift::TopologyChange { index: 1, loops: 2, .. }));
    }

    #[test]
    fn sigma() {
        assert!((HeleShawConstants::quartic().sigma - 2f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let ls = extract_zero_level_set(&field(5, |x, y| x * x + y * y - 0.3)).at_time(0.25);
        let back = LevelSet::parse(&ls.to_text(), "mem").unwrap();
        assert_eq!(back.polylines, ls.polylines);
        assert_eq!(back.t, 0.25);
        assert!(matches!(LevelSet::parse("levelset 0 1\npoly 2 0\np 0 0\n", "x"), Err(Error::Parse { .. })));
    }
}
