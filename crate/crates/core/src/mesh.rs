//! Two-dimensional conforming triangulations.
//!
//! Triangles are stored counter-clockwise. The maximum principle of the
//! lumped scheme needs every interior angle to be at most 90 degrees, which
//! [`audit_angles`] reports on.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

/// Cosines within this distance of zero count as right angles.
pub const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    h: f64,
}

/// Area and constant barycentric gradients of one P1 element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_basis: [[f64; 2]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReport {
    /// Largest value of `-cos(angle)` over all interior angles; positive means obtuse.
    pub max_neg_cos: f64,
    pub worst_element: usize,
    pub strictly_acute: bool,
    pub non_obtuse: bool,
}

impl Triangulation {
    /// Validates and orients a triangulation. Clockwise triangles are flipped.
    pub fn new(nodes: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::Mesh("mesh has no nodes or no triangles".into()));
        }
        let nv = nodes.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::Mesh(format!("triangle {t} references a node index >= {nv}")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
            if !nodes[tri[0]].iter().chain(&nodes[tri[1]]).chain(&nodes[tri[2]]).all(|c| c.is_finite()) {
                return Err(Error::Mesh(format!("triangle {t} has a non-finite coordinate")));
            }
            let a2 = signed_area2(&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]);
            if a2 == 0.0 {
                return Err(Error::DegenerateElement { element: t, area: 0.0 });
            }
            if a2 < 0.0 {
                tri.swap(1, 2);
            }
        }
        check_conforming(&nodes, &triangles)?;
        let h = triangles.iter().map(|tri| longest_edge(&nodes, tri)).fold(0.0, f64::max);
        Ok(Triangulation { nodes, triangles, h })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Maximum element diameter (longest edge).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| 0.5 * signed_area2_of(self, t)).sum()
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        let tri = self.triangles.get(t).ok_or_else(|| {
            Error::InvalidArgument(format!("triangle index {t} out of range ({})", self.num_triangles()))
        })?;
        let [p0, p1, p2] = tri.map(|i| self.nodes[i]);
        let a2 = signed_area2(&p0, &p1, &p2);
        if a2 <= 0.0 {
            return Err(Error::DegenerateElement { element: t, area: 0.5 * a2 });
        }
        // grad(lambda_i) = rot(p_k - p_j) / (2A), with (i, j, k) cyclic
        let g = |pj: [f64; 2], pk: [f64; 2]| [(pj[1] - pk[1]) / a2, (pk[0] - pj[0]) / a2];
        Ok(ElementGeometry { area: 0.5 * a2, grad_basis: [g(p1, p2), g(p2, p0), g(p0, p1)] })
    }

    /// Writes the ASCII node/element format: `nv nt`, then `x y` lines, then `i j k` lines.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{} {}", self.nodes.len(), self.triangles.len()).unwrap();
        for p in &self.nodes {
            writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r)
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(e.into()),
                None => Err(Error::Mesh(format!("unexpected end of file, expected {what}"))),
            }
        };
        let (ln, header) = next("header `nv nt`")?;
        let counts = parse_fields::<usize>(&header, 2, ln)?;
        let (nv, nt) = (counts[0], counts[1]);
        let mut nodes = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("node line `x y`")?;
            let xy = parse_fields::<f64>(&l, 2, ln)?;
            nodes.push([xy[0], xy[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = next("triangle line `i j k`")?;
            let ijk = parse_fields::<usize>(&l, 3, ln)?;
            triangles.push([ijk[0], ijk[1], ijk[2]]);
        }
        if let Ok((ln, _)) = next("") {
            return Err(Error::Mesh(format!("line {ln}: trailing content after {nt} triangles")));
        }
        Triangulation::new(nodes, triangles)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize, ln: usize) -> Result<Vec<T>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != n {
        return Err(Error::Mesh(format!("line {ln}: expected {n} fields, found {}", fields.len())));
    }
    fields.iter().map(|f| f.parse::<T>().map_err(|_| Error::Mesh(format!("line {ln}: cannot parse `{f}`")))).collect()
}

fn signed_area2(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn signed_area2_of(mesh: &Triangulation, t: usize) -> f64 {
    let [a, b, c] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    signed_area2(&a, &b, &c)
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn longest_edge(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| nodes[i]);
    dist(&a, &b).max(dist(&b, &c)).max(dist(&c, &a))
}

/// Edge multiplicity, duplicate elements and hanging nodes.
fn check_conforming(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> Result<()> {
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        let mut key = *tri;
        key.sort_unstable();
        if let Some(other) = seen.insert(key, t) {
            return Err(Error::Mesh(format!("triangles {other} and {t} are identical")));
        }
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let count = edges.entry((a.min(b), a.max(b))).or_insert(0);
            *count += 1;
            if *count > 2 {
                return Err(Error::Mesh(format!("edge ({a}, {b}) is shared by more than two triangles")));
            }
        }
    }

    // Hanging nodes: a vertex strictly inside an edge it does not belong to.
    // Bucket nodes on a uniform grid so the scan stays close to linear.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let side = (nodes.len() as f64).sqrt().ceil().max(1.0) as usize;
    let cell = [
        ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
        ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
    ];
    let idx = |x: f64, d: usize| (((x - lo[d]) / cell[d]) as usize).min(side - 1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); side * side];
    for (i, p) in nodes.iter().enumerate() {
        buckets[idx(p[1], 1) * side + idx(p[0], 0)].push(i);
    }
    for &(a, b) in edges.keys() {
        let (pa, pb) = (nodes[a], nodes[b]);
        let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
        let (i0, i1) = (idx(pa[0].min(pb[0]), 0), idx(pa[0].max(pb[0]), 0));
        let (j0, j1) = (idx(pa[1].min(pb[1]), 1), idx(pa[1].max(pb[1]), 1));
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &v in &buckets[j * side + i] {
                    if v == a || v == b {
                        continue;
                    }
                    let p = nodes[v];
                    let cross = signed_area2(&pa, &pb, &p);
                    let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / len2;
                    if cross.abs() <= 1e-12 * len2 && s > 1e-12 && s < 1.0 - 1e-12 {
                        return Err(Error::Mesh(format!("node {v} hangs on edge ({a}, {b})")));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Uniform right-triangle mesh of `[0, lx] x [0, ly]`; every cell is split
/// along its lower-left to upper-right diagonal.
pub fn build_structured_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Triangulation> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("cell counts must be at least 1".into()));
    }
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::InvalidArgument("domain lengths must be positive and finite".into()));
    }
    let xs: Vec<f64> = (0..=nx).map(|i| lx * i as f64 / nx as f64).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| ly * j as f64 / ny as f64).collect();
    build_tensor_mesh(&xs, &ys)
}

/// Right-triangle mesh on the tensor grid `xs x ys` (both strictly increasing).
pub fn build_tensor_mesh(xs: &[f64], ys: &[f64]) -> Result<Triangulation> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::InvalidArgument("need at least two grid lines per direction".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid lines must be strictly increasing".into()));
    }
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let mut nodes = Vec::with_capacity(xs.len() * ys.len());
    for &y in ys {
        for &x in xs {
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Triangulation::new(nodes, triangles)
}

pub fn audit_angles(mesh: &Triangulation) -> AngleReport {
    let mut worst = (f64::NEG_INFINITY, 0);
    let mut min_cos = f64::INFINITY;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|i| mesh.nodes()[i]);
        for c in 0..3 {
            let (a, b, o) = (p[(c + 1) % 3], p[(c + 2) % 3], p[c]);
            let e1 = [a[0] - o[0], a[1] - o[1]];
            let e2 = [b[0] - o[0], b[1] - o[1]];
            let cos = (e1[0] * e2[0] + e1[1] * e2[1]) / (e1[0].hypot(e1[1]) * e2[0].hypot(e2[1]));
            if -cos > worst.0 {
                worst = (-cos, t);
            }
            min_cos = min_cos.min(cos);
        }
    }
    AngleReport {
        max_neg_cos: worst.0,
        worst_element: worst.1,
        strictly_acute: min_cos > ANGLE_TOL,
        non_obtuse: min_cos >= -ANGLE_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: [[f64; 2]; 3]) -> Triangulation {
        Triangulation::new(p.to_vec(), vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn single_cell() {
        let m = build_structured_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.h(), 2f64.sqrt());
    }

    #[test]
    fn two_by_one_cells() {
        let m = build_structured_mesh(2, 1, 2.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 6);
        assert_eq!(m.num_triangles(), 4);
        for t in 0..4 {
            assert_eq!(m.element_geometry(t).unwrap().area, 0.5);
        }
    }

    #[test]
    fn preset_mesh_sizes() {
        let m = build_structured_mesh(40, 40, 1.0, 1.0).unwrap();
        let cell = m.nodes()[1][0] - m.nodes()[0][0];
        assert!((cell - 0.025).abs() < 1e-15);
        assert_eq!(m.num_nodes(), 41 * 41);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert!(audit_angles(&m).non_obtuse);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_structured_mesh(0, 1, 1.0, 1.0).is_err());
        assert!(build_structured_mesh(1, 1, -1.0, 1.0).is_err());
        assert!(build_structured_mesh(1, 1, 1.0, 0.0).is_err());
        assert!(Triangulation::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![[0, 1, 2]]).is_err());
        assert!(Triangulation::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
        assert!(Triangulation::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn rejects_hanging_node() {
        // Node 4 sits on the midpoint of edge (1, 2) of the first triangle.
        let nodes = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0], [1.0, 1.0]];
        let tris = vec![[0, 1, 2], [1, 3, 4], [4, 3, 2]];
        assert!(matches!(Triangulation::new(nodes, tris), Err(Error::Mesh(_))));
    }

    #[test]
    fn clockwise_triangles_are_flipped() {
        let m = Triangulation::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        assert_eq!(m.element_geometry(0).unwrap().area, 0.5);
    }

    #[test]
    fn reference_element_geometry() {
        let g = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).element_geometry(0).unwrap();
        assert_eq!(g.area, 0.5);
        assert_eq!(g.grad_basis, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);

        let g = single([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).element_geometry(0).unwrap();
        assert_eq!(g.area, 2.0);
        assert_eq!(g.grad_basis, [[-0.5, -0.5], [0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn gradients_are_barycentric() {
        let p = [[0.3, -0.2], [1.7, 0.4], [0.1, 1.9]];
        let g = single(p).element_geometry(0).unwrap();
        for d in 0..2 {
            assert!((g.grad_basis[0][d] + g.grad_basis[1][d] + g.grad_basis[2][d]).abs() < 1e-15);
        }
        // grad(lambda_i) . (p_j - p_i) = -1 for j != i
        for i in 0..3 {
            for j in 0..3 {
                let e = [p[j][0] - p[i][0], p[j][1] - p[i][1]];
                let v = g.grad_basis[i][0] * e[0] + g.grad_basis[i][1] * e[1];
                let want = if i == j { 0.0 } else { -1.0 };
                assert!((v - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn out_of_range_element() {
        let m = build_structured_mesh(1, 1, 1.0, 1.0).unwrap();
        assert!(m.element_geometry(2).is_err());
    }

    #[test]
    fn angle_audit_examples() {
        let eq = single([[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]);
        let r = audit_angles(&eq);
        assert!(r.strictly_acute && r.non_obtuse);

        let right = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let r = audit_angles(&right);
        assert!(r.non_obtuse && !r.strictly_acute);

        // angle at the origin between (1,0) and (-1,1) has cosine -1/sqrt(2)
        let obtuse = single([[0.0, 0.0], [1.0, 0.0], [-1.0, 1.0]]);
        let r = audit_angles(&obtuse);
        assert!(!r.non_obtuse);
        assert!((r.max_neg_cos - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.worst_element, 0);
    }

    #[test]
    fn file_round_trip() {
        let nodes = vec![[0.1, 1e-300], [0.30000000000000004, 2.5], [-7.123456789012345e10, 3.0]];
        let m = Triangulation::new(nodes, vec![[0, 1, 2]]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Triangulation::read_from(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn malformed_files() {
        assert!(Triangulation::read_from("".as_bytes()).is_err());
        assert!(Triangulation::read_from("3 1\n0 0\n1 0\n".as_bytes()).is_err());
        assert!(Triangulation::read_from("3 1\n0 0\n1 0\n0 x\n0 1 2\n".as_bytes()).is_err());
        assert!(Triangulation::read_from("3 1\n0 0\n1 0\n0 1\n0 1 2\n9 9 9\n".as_bytes()).is_err());
        let err = Triangulation::read_from("3 1\n0 0\n1 0 5\n0 1\n0 1 2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
