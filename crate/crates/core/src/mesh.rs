//! Conforming triangulations of planar polygonal domains.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{HdgError, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Interior,
    Dirichlet,
    Neumann,
}

/// A cell-local view of a facet: `sign * facet.normal` is the outward normal of the cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellFacet {
    pub facet: usize,
    pub sign: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    /// Adjacent cells with the local facet index inside each cell.
    pub cells: Vec<(usize, usize)>,
    pub normal: Point,
    pub length: f64,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.cells.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples. Local facet `i` is opposite local vertex `i`.
    pub cells: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    pub cell_facets: Vec<[CellFacet; 3]>,
    pub facet_tags: Vec<FacetTag>,
    pub h_cell: Vec<f64>,
    pub h_facet: Vec<f64>,
    pub domain_area: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds the facet topology from vertices and cells.
    ///
    /// Clockwise cells are reoriented. Boundary facets default to Dirichlet unless listed in `boundary`.
    pub fn from_parts(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        boundary: &[([usize; 2], FacetTag)],
    ) -> Result<Mesh> {
        if vertices.is_empty() {
            return Err(HdgError::Topology("mesh has no vertices".into()));
        }
        if cells.is_empty() {
            return Err(HdgError::Topology("mesh has no cells".into()));
        }
        let mut oriented = Vec::with_capacity(cells.len());
        let mut seen = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= vertices.len() {
                    return Err(HdgError::Topology(format!(
                        "cell {c} references missing vertex {v}"
                    )));
                }
            }
            let mut sorted = *cell;
            sorted.sort_unstable();
            if sorted[0] == sorted[1] || sorted[1] == sorted[2] {
                return Err(HdgError::Topology(format!("cell {c} repeats a vertex")));
            }
            if let Some(prev) = seen.insert(sorted, c) {
                return Err(HdgError::Topology(format!("cell {c} duplicates cell {prev}")));
            }
            let [a, b, d] = *cell;
            let area = signed_area(vertices[a], vertices[b], vertices[d]);
            let scale = dist(vertices[a], vertices[b]).max(dist(vertices[a], vertices[d]));
            if area.abs() <= 1e-14 * scale * scale {
                return Err(HdgError::Topology(format!("cell {c} is degenerate (zero area)")));
            }
            oriented.push(if area > 0.0 { [a, b, d] } else { [a, d, b] });
        }

        let mut facet_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut cell_facets = Vec::with_capacity(oriented.len());
        for (c, cell) in oriented.iter().enumerate() {
            let mut local = [CellFacet { facet: 0, sign: 1.0 }; 3];
            for i in 0..3 {
                let a = cell[(i + 1) % 3];
                let b = cell[(i + 2) % 3];
                let key = edge_key(a, b);
                let f = match facet_index.get(&key) {
                    Some(&f) => {
                        if facets[f].cells.len() >= 2 {
                            return Err(HdgError::Topology(format!(
                                "facet ({}, {}) is shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        facets[f].cells.push((c, i));
                        f
                    }
                    None => {
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let length = dist(pa, pb);
                        let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
                        facets.push(Facet { vertices: [a, b], cells: vec![(c, i)], normal, length });
                        facet_index.insert(key, facets.len() - 1);
                        facets.len() - 1
                    }
                };
                let sign = if facets[f].vertices == [a, b] { 1.0 } else { -1.0 };
                local[i] = CellFacet { facet: f, sign };
            }
            cell_facets.push(local);
        }

        let mut facet_tags: Vec<FacetTag> = facets
            .iter()
            .map(|f| if f.is_boundary() { FacetTag::Dirichlet } else { FacetTag::Interior })
            .collect();
        for &([a, b], tag) in boundary {
            let f = *facet_index.get(&edge_key(a, b)).ok_or_else(|| {
                HdgError::Topology(format!("boundary entry ({a}, {b}) is not a mesh edge"))
            })?;
            if !facets[f].is_boundary() {
                return Err(HdgError::Topology(format!(
                    "boundary entry ({a}, {b}) is an interior facet"
                )));
            }
            if tag == FacetTag::Interior {
                return Err(HdgError::Topology(format!(
                    "boundary entry ({a}, {b}) cannot be tagged interior"
                )));
            }
            facet_tags[f] = tag;
        }

        let h_cell: Vec<f64> = oriented
            .iter()
            .map(|c| {
                let [a, b, d] = c.map(|v| vertices[v]);
                dist(a, b).max(dist(b, d)).max(dist(d, a))
            })
            .collect();
        let h_facet = facets.iter().map(|f| f.length).collect();
        let domain_area = oriented
            .iter()
            .map(|c| signed_area(vertices[c[0]], vertices[c[1]], vertices[c[2]]))
            .sum();
        Ok(Mesh {
            vertices,
            cells: oriented,
            facets,
            cell_facets,
            facet_tags,
            h_cell,
            h_facet,
            domain_area,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        self.cells[c].map(|v| self.vertices[v])
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cell_points(c);
        signed_area(a, b, d)
    }

    pub fn facet_points(&self, f: usize) -> [Point; 2] {
        self.facets[f].vertices.map(|v| self.vertices[v])
    }

    pub fn facet_midpoint(&self, f: usize) -> Point {
        let [a, b] = self.facet_points(f);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Outward unit normal of cell `c` on its local facet `i`.
    pub fn outward_normal(&self, c: usize, i: usize) -> Point {
        let cf = self.cell_facets[c][i];
        let n = self.facets[cf.facet].normal;
        [cf.sign * n[0], cf.sign * n[1]]
    }

    pub fn max_h(&self) -> f64 {
        self.h_cell.iter().cloned().fold(0.0, f64::max)
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.facets.len()).filter(|&f| self.facets[f].is_boundary())
    }

    /// Reassigns boundary tags; `pred` receives the facet midpoint and returns the new tag or `None` to keep it.
    pub fn retag_boundary(&mut self, pred: impl Fn(Point) -> Option<FacetTag>) {
        for f in 0..self.facets.len() {
            if !self.facets[f].is_boundary() {
                continue;
            }
            if let Some(tag) = pred(self.facet_midpoint(f)) {
                if tag != FacetTag::Interior {
                    self.facet_tags[f] = tag;
                }
            }
        }
    }

    pub fn count_tag(&self, tag: FacetTag) -> usize {
        self.facet_tags.iter().filter(|&&t| t == tag).count()
    }

    /// Checks the structural and geometric invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(HdgError::Topology(m));
        let area: f64 = (0..self.num_cells()).map(|c| self.cell_area(c)).sum();
        if (area - self.domain_area).abs() > 1e-12 * self.domain_area.abs() {
            return fail(format!("cell areas sum to {area}, domain area {}", self.domain_area));
        }
        for (f, facet) in self.facets.iter().enumerate() {
            match facet.cells.len() {
                1 if self.facet_tags[f] == FacetTag::Interior => {
                    return fail(format!("boundary facet {f} tagged interior"))
                }
                2 if self.facet_tags[f] != FacetTag::Interior => {
                    return fail(format!("interior facet {f} carries a boundary tag"))
                }
                1 | 2 => {}
                n => return fail(format!("facet {f} has {n} adjacent cells")),
            }
            let n = facet.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-14 {
                return fail(format!("facet {f} normal is not unit"));
            }
            if facet.cells.len() == 2 {
                let (c0, i0) = facet.cells[0];
                let (c1, i1) = facet.cells[1];
                let n0 = self.outward_normal(c0, i0);
                let n1 = self.outward_normal(c1, i1);
                if (n0[0] + n1[0]).abs() > 1e-14 || (n0[1] + n1[1]).abs() > 1e-14 {
                    return fail(format!("facet {f} cell normals do not cancel"));
                }
            }
        }
        for c in 0..self.num_cells() {
            if self.cell_area(c) <= 0.0 {
                return fail(format!("cell {c} is not counterclockwise"));
            }
            let [a, b, d] = self.cell_points(c);
            let centroid = [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0];
            for i in 0..3 {
                let cf = self.cell_facets[c][i];
                let hf = self.h_facet[cf.facet];
                let hk = self.h_cell[c];
                if hk > 2.0 * hf * (1.0 + 1e-14) || hf > hk * (1.0 + 1e-14) {
                    return fail(format!("cell {c} facet {i}: h_K = {hk}, h_F = {hf}"));
                }
                let n = self.outward_normal(c, i);
                let m = self.facet_midpoint(cf.facet);
                if (m[0] - centroid[0]) * n[0] + (m[1] - centroid[1]) * n[1] <= 0.0 {
                    return fail(format!("cell {c} facet {i} normal points inward"));
                }
            }
        }
        Ok(())
    }
}

/// Unit square split into `n x n` squares, each cut along its lower-left to upper-right diagonal.
pub fn generate_structured(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(HdgError::Config("structured mesh needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    Mesh::from_parts(vertices, cells, &[])
}

/// L-shaped domain `(-1,1)^2 \ [0,1) x (-1,0]` on a grid of spacing `2/n`.
pub fn generate_lshape(n: usize) -> Result<Mesh> {
    if n == 0 || n % 2 != 0 {
        return Err(HdgError::Config(format!("L-shape mesh needs a positive even n, got {n}")));
    }
    let h = 2.0 / n as f64;
    let half = n / 2;
    let keep = |i: usize, j: usize| !(i >= half && j < half);
    let mut index = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let used = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(a, b)| a < n && b < n && keep(a, b));
            if used {
                index[j * (n + 1) + i] = vertices.len();
                vertices.push([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
            }
        }
    }
    let id = |i: usize, j: usize| index[j * (n + 1) + i];
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if !keep(i, j) {
                continue;
            }
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    Mesh::from_parts(vertices, cells, &[])
}

/// Red refinement: every triangle splits into four similar children. Boundary tags are inherited.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut mid = Vec::with_capacity(mesh.num_facets());
    for f in 0..mesh.num_facets() {
        mid.push(vertices.len());
        vertices.push(mesh.facet_midpoint(f));
    }
    let mut cells = Vec::with_capacity(4 * mesh.num_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let m = [0, 1, 2].map(|i| mid[mesh.cell_facets[c][i].facet]);
        cells.push([cell[0], m[2], m[1]]);
        cells.push([m[2], cell[1], m[0]]);
        cells.push([m[1], m[0], cell[2]]);
        cells.push([m[0], m[1], m[2]]);
    }
    let mut boundary = Vec::new();
    for f in mesh.boundary_facets() {
        let tag = mesh.facet_tags[f];
        let [a, b] = mesh.facets[f].vertices;
        boundary.push(([a, mid[f]], tag));
        boundary.push(([mid[f], b], tag));
    }
    Mesh::from_parts(vertices, cells, &boundary).expect("refinement preserves a valid mesh")
}

pub fn save_mesh(mesh: &Mesh) -> String {
    let mut out = String::from("hdgmesh 1\n");
    let _ = writeln!(out, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:e} {:e}", v[0], v[1]);
    }
    let _ = writeln!(out, "cells {}", mesh.cells.len());
    for c in &mesh.cells {
        let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
    }
    let boundary: Vec<usize> = mesh.boundary_facets().collect();
    let _ = writeln!(out, "boundary {}", boundary.len());
    for f in boundary {
        let [a, b] = mesh.facets[f].vertices;
        let tag = if mesh.facet_tags[f] == FacetTag::Neumann { "N" } else { "D" };
        let _ = writeln!(out, "{a} {b} {tag}");
    }
    out
}

pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let perr = |line: usize, message: &str| HdgError::MeshParse { line, message: message.to_string() };
    let last_line = text.lines().count();

    let (line, header) = lines.next().ok_or_else(|| perr(last_line, "missing header"))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["hdgmesh", "1"] {
        return Err(perr(line, "expected header `hdgmesh 1`"));
    }
    let mut section = |name: &str| -> Result<(usize, Vec<(usize, Vec<String>)>)> {
        let (line, head) = lines.next().ok_or_else(|| perr(last_line, &format!("missing `{name}` section")))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != name {
            return Err(perr(line, &format!("expected `{name} <count>`")));
        }
        let count: usize = parts[1].parse().map_err(|_| perr(line, "invalid count"))?;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let (l, row) = lines.next().ok_or_else(|| perr(last_line, &format!("`{name}` section is truncated")))?;
            rows.push((l, row.split_whitespace().map(str::to_string).collect()));
        }
        Ok((line, rows))
    };

    let (vline, vrows) = section("vertices")?;
    if vrows.is_empty() {
        return Err(perr(vline, "vertex section is empty"));
    }
    let mut vertices = Vec::with_capacity(vrows.len());
    for (l, row) in &vrows {
        if row.len() != 2 {
            return Err(perr(*l, "vertex line needs two coordinates"));
        }
        let x: f64 = row[0].parse().map_err(|_| perr(*l, "invalid coordinate"))?;
        let y: f64 = row[1].parse().map_err(|_| perr(*l, "invalid coordinate"))?;
        vertices.push([x, y]);
    }
    let (cline, crows) = section("cells")?;
    if crows.is_empty() {
        return Err(perr(cline, "cell section is empty"));
    }
    let mut cells = Vec::with_capacity(crows.len());
    for (l, row) in &crows {
        if row.len() != 3 {
            return Err(perr(*l, "cell line needs three vertex indices"));
        }
        let mut c = [0usize; 3];
        for (slot, tok) in c.iter_mut().zip(row) {
            *slot = tok.parse().map_err(|_| perr(*l, "invalid vertex index"))?;
        }
        cells.push(c);
    }
    let (_, brows) = section("boundary")?;
    let mut boundary = Vec::with_capacity(brows.len());
    for (l, row) in &brows {
        if row.len() != 3 {
            return Err(perr(*l, "boundary line needs `i j TAG`"));
        }
        let a: usize = row[0].parse().map_err(|_| perr(*l, "invalid vertex index"))?;
        let b: usize = row[1].parse().map_err(|_| perr(*l, "invalid vertex index"))?;
        let tag = match row[2].as_str() {
            "D" => FacetTag::Dirichlet,
            "N" => FacetTag::Neumann,
            _ => return Err(perr(*l, "boundary tag must be D or N")),
        };
        boundary.push(([a, b], tag));
    }
    if let Some((l, _)) = lines.next() {
        return Err(perr(l, "unexpected trailing content"));
    }
    Mesh::from_parts(vertices, cells, &boundary)
}
