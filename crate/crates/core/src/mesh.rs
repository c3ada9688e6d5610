//! Planar triangulations with tagged boundary edges, the two benchmark
//! geometries, and a plain-text mesh format.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    GammaD,
    GammaN,
    Gamma1,
    Gamma2,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [BoundaryTag::GammaD, BoundaryTag::GammaN, BoundaryTag::Gamma1, BoundaryTag::Gamma2];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::GammaD => "GammaD",
            BoundaryTag::GammaN => "GammaN",
            BoundaryTag::Gamma1 => "Gamma1",
            BoundaryTag::Gamma2 => "Gamma2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        BoundaryTag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
}

#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    pub min_angle_deg: f64,
    pub max_edge: f64,
    pub min_area: f64,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Validates indices, orientation, and that the tagged edges are exactly
    /// the topological boundary of the triangulation.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, boundary: Vec<BoundaryEdge>) -> Result<Self> {
        let n = nodes.len();
        if triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {k} references a missing node")));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!("triangle {k} has non-positive signed area {area:e}")));
            }
            for e in 0..3 {
                *counts.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, _)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Mesh(format!("edge {e:?} is shared by more than two triangles")));
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for b in &boundary {
            if b.nodes.iter().any(|&i| i >= n) {
                return Err(Error::Mesh("boundary edge references a missing node".into()));
            }
            let key = edge_key(b.nodes[0], b.nodes[1]);
            if counts.get(&key) != Some(&1) {
                return Err(Error::Mesh(format!("tagged edge {key:?} is not a boundary edge")));
            }
            if tagged.insert(key, b.tag).is_some() {
                return Err(Error::Mesh(format!("boundary edge {key:?} tagged twice")));
            }
        }
        let untagged = counts.iter().filter(|(k, &c)| c == 1 && !tagged.contains_key(k)).count();
        if untagged > 0 {
            return Err(Error::Mesh(format!("{untagged} boundary edges carry no tag")));
        }
        let mesh = Self { nodes, triangles, boundary };
        mesh.check_loops()?;
        Ok(mesh)
    }

    /// Every boundary vertex has exactly two incident boundary edges, so the
    /// boundary decomposes into closed loops.
    fn check_loops(&self) -> Result<()> {
        let mut degree: BTreeMap<usize, u32> = BTreeMap::new();
        for b in &self.boundary {
            *degree.entry(b.nodes[0]).or_default() += 1;
            *degree.entry(b.nodes[1]).or_default() += 1;
        }
        if let Some((v, d)) = degree.iter().find(|(_, &d)| d != 2) {
            return Err(Error::Mesh(format!("boundary vertex {v} has {d} incident edges")));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangles[k];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangle_area(k)).sum()
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[k];
        let p = &self.nodes;
        [(p[a][0] + p[b][0] + p[c][0]) / 3.0, (p[a][1] + p[b][1] + p[c][1]) / 3.0]
    }

    /// Barycentric coordinates of `p` in triangle `k`.
    pub fn barycentric(&self, k: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[k].map(|i| self.nodes[i]);
        let area = signed_area(a, b, c);
        [signed_area(p, b, c) / area, signed_area(a, p, c) / area, signed_area(a, b, p) / area]
    }

    /// Evaluates the P1 field `values` at `p`. Points outside the mesh (for
    /// instance on a differently resolved curved boundary) use the triangle
    /// whose barycentric coordinates are least negative, clamped onto it.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0, [0.0; 3]);
        for k in 0..self.triangles.len() {
            let l = self.barycentric(k, p);
            let worst = l[0].min(l[1]).min(l[2]);
            if worst > best.0 {
                best = (worst, k, l);
                if worst >= 0.0 {
                    break;
                }
            }
        }
        let (_, k, mut l) = best;
        if l.iter().any(|&v| v < 0.0) {
            l = l.map(|v| v.max(0.0));
            let s: f64 = l.iter().sum();
            l = l.map(|v| v / s);
        }
        self.triangles[k].iter().zip(l).map(|(&i, w)| w * values[i]).sum()
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary.iter().any(|b| b.tag == tag)
    }

    /// Sorted, deduplicated nodes lying on edges with the given tag.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().filter(|b| b.tag == tag).flat_map(|b| b.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn quality(&self) -> QualityReport {
        let mut min_angle = f64::INFINITY;
        let mut max_edge: f64 = 0.0;
        let mut min_area = f64::INFINITY;
        for (k, tri) in self.triangles.iter().enumerate() {
            min_area = min_area.min(self.triangle_area(k));
            for e in 0..3 {
                let p = self.nodes[tri[e]];
                let q = self.nodes[tri[(e + 1) % 3]];
                let r = self.nodes[tri[(e + 2) % 3]];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let lu = u[0].hypot(u[1]);
                let lv = v[0].hypot(v[1]);
                max_edge = max_edge.max(lu);
                let cos = ((u[0] * v[0] + u[1] * v[1]) / (lu * lv)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cos.acos().to_degrees());
            }
        }
        QualityReport {
            min_angle_deg: min_angle,
            max_edge,
            min_area,
        }
    }

    /// Errors when the minimum interior angle falls below `floor_deg`.
    pub fn check_shape_regular(&self, floor_deg: f64) -> Result<QualityReport> {
        let q = self.quality();
        if q.min_angle_deg <= floor_deg {
            return Err(Error::Mesh(format!(
                "minimum angle {:.2}° is below the floor {floor_deg}°",
                q.min_angle_deg
            )));
        }
        Ok(q)
    }

    /// Renumbers nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Mesh> {
        let n = self.nodes.len();
        if perm.len() != n {
            return Err(Error::Dimension {
                context: "mesh permutation",
                expected: n,
                got: perm.len(),
            });
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            inv[old] = new;
        }
        let nodes = perm.iter().map(|&old| self.nodes[old]).collect();
        let triangles = self.triangles.iter().map(|t| t.map(|i| inv[i])).collect();
        let boundary = self
            .boundary
            .iter()
            .map(|b| BoundaryEdge {
                nodes: b.nodes.map(|i| inv[i]),
                tag: b.tag,
            })
            .collect();
        Mesh::new(nodes, triangles, boundary)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for b in &self.boundary {
            let _ = writeln!(s, "{} {} {}", b.nodes[0], b.nodes[1], b.tag.as_str());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut cur = Cursor {
            lines: text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect(),
            pos: 0,
        };
        let n = cur.header("nodes")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, t) = cur.row(2)?;
            let x: f64 = t[0].parse().map_err(|_| parse_err(line, "bad coordinate"))?;
            let y: f64 = t[1].parse().map_err(|_| parse_err(line, "bad coordinate"))?;
            nodes.push([x, y]);
        }
        let m = cur.header("triangles")?;
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, t) = cur.row(3)?;
            let mut idx = [0usize; 3];
            for (slot, tok) in idx.iter_mut().zip(&t) {
                *slot = tok.parse().map_err(|_| parse_err(line, "bad index"))?;
            }
            triangles.push(idx);
        }
        let b = cur.header("boundary")?;
        let mut boundary = Vec::with_capacity(b);
        for _ in 0..b {
            let (line, t) = cur.row(3)?;
            let a: usize = t[0].parse().map_err(|_| parse_err(line, "bad index"))?;
            let c: usize = t[1].parse().map_err(|_| parse_err(line, "bad index"))?;
            let tag = BoundaryTag::parse(t[2]).ok_or_else(|| parse_err(line, &format!("unknown tag `{}`", t[2])))?;
            boundary.push(BoundaryEdge { nodes: [a, c], tag });
        }
        if let Some(&(line, _)) = cur.lines.get(cur.pos) {
            return Err(parse_err(line, "trailing content"));
        }
        Mesh::new(nodes, triangles, boundary)
    }

    pub fn read(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        context: format!("mesh line {}", line + 1),
        message: msg.to_string(),
    }
}

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn row(&mut self, width: usize) -> Result<(usize, Vec<&'a str>)> {
        let last = self.lines.last().map_or(0, |l| l.0);
        let &(line, text) = self.lines.get(self.pos).ok_or_else(|| parse_err(last, "unexpected end of file"))?;
        self.pos += 1;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(line, &format!("expected {width} fields")));
        }
        Ok((line, toks))
    }

    fn header(&mut self, name: &str) -> Result<usize> {
        let (line, t) = self.row(2)?;
        if t[0] != name {
            return Err(parse_err(line, &format!("expected `{name} <count>`")));
        }
        t[1].parse().map_err(|_| parse_err(line, "bad count"))
    }
}

/// Splits a structured `(nu+1) × (nv+1)` node lattice into triangles with
/// alternating diagonals. `node(i, j)` must map lattice indices to node ids,
/// with `i` running along the first parameter direction.
fn split_lattice(nu: usize, nv: usize, node: impl Fn(usize, usize) -> usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let a = node(i, j);
            let b = node(i + 1, j);
            let c = node(i + 1, j + 1);
            let d = node(i, j + 1);
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    tris
}

/// Rectangle `[0,100]×[0,40]` with the crack face `{0}×[0,16]`.
///
/// The lattice spacing is at most `h/√2` in both directions so that every
/// edge, including diagonals, is at most `h` long; `y = 16` is a lattice line.
pub fn generate_mesh_example1(h: f64) -> Result<Mesh> {
    const A: f64 = 100.0;
    const B: f64 = 40.0;
    const C: f64 = 16.0;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
    }
    if h > C {
        return Err(Error::Mesh(format!("h = {h} does not resolve the 16 mm crack ligament")));
    }
    // dy = 8/m keeps y = 16 (and y = 40) on the lattice
    let m = ((8.0 * SQRT_2) / h).ceil().max(1.0) as usize;
    let ny = 5 * m;
    let nx = ((A * SQRT_2) / h).ceil().max(1.0) as usize;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { A } else { A * i as f64 / nx as f64 };
            let y = if j == ny { B } else { B * j as f64 / ny as f64 };
            nodes.push([x, y]);
        }
    }
    let triangles = split_lattice(nx, ny, idx);
    let crack_rows = 2 * m;
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(BoundaryEdge {
            nodes: [idx(i, 0), idx(i + 1, 0)],
            tag: BoundaryTag::GammaN,
        });
        boundary.push(BoundaryEdge {
            nodes: [idx(i + 1, ny), idx(i, ny)],
            tag: BoundaryTag::Gamma2,
        });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge {
            nodes: [idx(nx, j), idx(nx, j + 1)],
            tag: BoundaryTag::GammaD,
        });
        boundary.push(BoundaryEdge {
            nodes: [idx(0, j + 1), idx(0, j)],
            tag: if j < crack_rows { BoundaryTag::GammaN } else { BoundaryTag::Gamma1 },
        });
    }
    Mesh::new(nodes, triangles, boundary)
}

/// Square `[0,100]²` minus the quarter disc of radius 50 at the origin.
///
/// Mapped mesh between the inner arc and the outer polyline
/// `(100,0) → (100,100) → (0,100)`, both parametrized over `p ∈ [0,1]`
/// (arc by angle, polyline by arc length) and joined by straight rays.
pub fn generate_mesh_example2(h: f64) -> Result<Mesh> {
    const A: f64 = 100.0;
    const R: f64 = 50.0;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
    }
    if h >= R / 2.0 {
        return Err(Error::Mesh(format!("h = {h} must be below r/2 = {}", R / 2.0)));
    }
    let mut na = ((2.0 * A * SQRT_2) / h).ceil() as usize;
    na += na % 2;
    let ray_max = A * SQRT_2 - R;
    let nr = ((ray_max * SQRT_2) / h).ceil() as usize;
    let inner = |i: usize| -> [f64; 2] {
        match i {
            0 => [R, 0.0],
            _ if i == na => [0.0, R],
            _ => {
                let th = FRAC_PI_2 * i as f64 / na as f64;
                [R * th.cos(), R * th.sin()]
            }
        }
    };
    let outer = |i: usize| -> [f64; 2] {
        let half = na / 2;
        if i <= half {
            [A, if i == half { A } else { A * i as f64 / half as f64 }]
        } else {
            let k = i - half;
            [if k == half { 0.0 } else { A - A * k as f64 / half as f64 }, A]
        }
    };
    let idx = |i: usize, j: usize| j * (na + 1) + i;
    let mut nodes = Vec::with_capacity((na + 1) * (nr + 1));
    for j in 0..=nr {
        let w = j as f64 / nr as f64;
        for i in 0..=na {
            let p = inner(i);
            let q = outer(i);
            let node = match j {
                0 => p,
                _ if j == nr => q,
                _ => [p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])],
            };
            nodes.push(node);
        }
    }
    // radial direction first keeps the lattice right-handed
    let triangles = split_lattice(nr, na, |j, i| idx(i, j));
    let mut boundary = Vec::new();
    for i in 0..na {
        boundary.push(BoundaryEdge {
            nodes: [idx(i + 1, 0), idx(i, 0)],
            tag: BoundaryTag::GammaN,
        });
        boundary.push(BoundaryEdge {
            nodes: [idx(i, nr), idx(i + 1, nr)],
            tag: if i < na / 2 { BoundaryTag::GammaN } else { BoundaryTag::GammaD },
        });
    }
    for j in 0..nr {
        boundary.push(BoundaryEdge {
            nodes: [idx(0, j), idx(0, j + 1)],
            tag: BoundaryTag::Gamma2,
        });
        boundary.push(BoundaryEdge {
            nodes: [idx(na, j + 1), idx(na, j)],
            tag: BoundaryTag::Gamma1,
        });
    }
    Mesh::new(nodes, triangles, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_affine_fields() {
        let coarse = generate_mesh_example2(20.0).unwrap();
        let fine = generate_mesh_example2(10.0).unwrap();
        let f = |p: [f64; 2]| 0.3 * p[0] - 0.7 * p[1] + 2.0;
        let vals: Vec<f64> = fine.nodes().iter().map(|&p| f(p)).collect();
        for &p in coarse.nodes() {
            // arc nodes of the coarse mesh may fall outside the fine polygon
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let tol = if (r - 50.0).abs() < 1e-9 { 0.7 } else { 1e-10 };
            assert!((fine.interpolate(&vals, p) - f(p)).abs() < tol, "at {p:?}");
        }
    }

    fn unit_square() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![
                BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::GammaN },
                BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::GammaD },
                BoundaryEdge { nodes: [2, 3], tag: BoundaryTag::GammaN },
                BoundaryEdge { nodes: [3, 0], tag: BoundaryTag::Gamma1 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_meshes() {
        let cw = Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]], vec![]);
        assert!(cw.is_err());
        let untagged = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![]);
        assert!(matches!(untagged, Err(Error::Mesh(_))));
    }

    #[test]
    fn example1_guards_and_area() {
        assert!(generate_mesh_example1(40.0).is_err());
        assert!(generate_mesh_example1(0.0).is_err());
        let m = generate_mesh_example1(8.0).unwrap();
        assert!((m.total_area() - 4000.0).abs() < 1e-9);
        for tag in BoundaryTag::ALL {
            assert!(m.has_tag(tag), "{tag:?} missing");
        }
        assert!(m.quality().max_edge <= 8.0 + 1e-12);
    }

    #[test]
    fn example1_crack_tip_split() {
        let m = generate_mesh_example1(10.0).unwrap();
        let g1 = m.tagged_nodes(BoundaryTag::Gamma1);
        let ys: Vec<f64> = g1.iter().map(|&i| m.nodes()[i][1]).collect();
        assert!(ys.iter().all(|&y| y >= 16.0 && m.nodes()[g1[0]][0] == 0.0));
        assert!(ys.contains(&16.0) && ys.contains(&40.0));
        assert!(m.nodes().iter().any(|p| p == &[0.0, 16.0]));
    }

    #[test]
    fn example2_geometry() {
        assert!(generate_mesh_example2(25.0).is_err());
        let m = generate_mesh_example2(10.0).unwrap();
        let exact = 10000.0 - std::f64::consts::PI * 2500.0 / 4.0;
        assert!((m.total_area() - exact).abs() < 0.01 * exact);
        for i in m.tagged_nodes(BoundaryTag::GammaN) {
            let p = m.nodes()[i];
            if p[0] < 99.0 {
                assert!((p[0].hypot(p[1]) - 50.0).abs() < 1e-9, "{p:?}");
            }
        }
        for tag in BoundaryTag::ALL {
            assert!(m.has_tag(tag));
        }
        assert!(m.tagged_nodes(BoundaryTag::GammaD).iter().all(|&i| m.nodes()[i][1] == 100.0));
        assert!(m.tagged_nodes(BoundaryTag::Gamma2).iter().all(|&i| m.nodes()[i][1] == 0.0));
        assert!(m.tagged_nodes(BoundaryTag::Gamma1).iter().all(|&i| m.nodes()[i][0] == 0.0));
    }

    #[test]
    fn example2_area_converges() {
        let exact = 10000.0 - std::f64::consts::PI * 2500.0 / 4.0;
        let e1 = (generate_mesh_example2(10.0).unwrap().total_area() - exact).abs();
        let e2 = (generate_mesh_example2(5.0).unwrap().total_area() - exact).abs();
        assert!(e2 < 0.35 * e1, "{e1} {e2}");
    }

    #[test]
    fn shape_regularity() {
        let m = generate_mesh_example1(10.0).unwrap();
        assert!(m.check_shape_regular(20.0).is_ok());
        assert!(generate_mesh_example2(10.0).unwrap().check_shape_regular(20.0).is_ok());
        assert!(m.check_shape_regular(80.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = generate_mesh_example2(12.0).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn text_parse_errors() {
        assert!(matches!(Mesh::from_text("nodes x\n"), Err(Error::Parse { .. })));
        let mut t = unit_square().to_text();
        t = t.replace("GammaD", "Bogus");
        assert!(matches!(Mesh::from_text(&t), Err(Error::Parse { .. })));
        let t = unit_square().to_text() + "extra\n";
        assert!(Mesh::from_text(&t).is_err());
    }

    #[test]
    fn permutation_preserves_area() {
        let m = unit_square();
        let p = m.permuted(&[2, 0, 3, 1]).unwrap();
        assert_eq!(p.total_area(), m.total_area());
        assert!(m.permuted(&[0, 0, 1, 2]).is_err());
    }
}
