//! Structured P1/P2 triangulations of the unit-square room.
//!
//! Nodes live on an `n x n` uniform grid (the P2 layout); P1 vertices are the
//! grid points with even indices in both directions. Every grid cell of the
//! vertex lattice is cut along the same diagonal, from its lower-left to its
//! upper-right corner.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric tolerance used for all on-boundary / inside-segment tests.
const GEOM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// Coordinate along the side when `p` lies on it.
    fn param(self, p: [f64; 2]) -> Option<f64> {
        let (fixed, free, target) = match self {
            Side::Left => (p[0], p[1], 0.0),
            Side::Right => (p[0], p[1], 1.0),
            Side::Bottom => (p[1], p[0], 0.0),
            Side::Top => (p[1], p[0], 1.0),
        };
        ((fixed - target).abs() <= GEOM_TOL).then_some(free)
    }
}

/// A straight piece of the room boundary, `lo <= s <= hi` along one side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub side: Side,
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn new(side: Side, lo: f64, hi: f64) -> Self {
        Segment { side, lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Point lies on the segment, endpoints included.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.side
            .param(p)
            .is_some_and(|s| s >= self.lo - GEOM_TOL && s <= self.hi + GEOM_TOL)
    }

    /// Point lies in the relative interior of the segment.
    pub fn contains_strictly(&self, p: [f64; 2]) -> bool {
        self.side
            .param(p)
            .is_some_and(|s| s > self.lo + GEOM_TOL && s < self.hi - GEOM_TOL)
    }

    fn overlaps(&self, other: &Segment) -> bool {
        self.side == other.side && self.lo < other.hi && other.lo < self.hi
    }
}

/// The room `[0,1] x [0,1]` with its inlet and outlet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub inlet: Segment,
    pub outlet: Segment,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::room()
    }
}

impl Geometry {
    /// Inlet on the left wall at `0.1 <= y <= 0.4`, outlet on the right wall
    /// at `0.5 <= y <= 0.9`.
    pub fn room() -> Self {
        Geometry {
            inlet: Segment::new(Side::Left, 0.1, 0.4),
            outlet: Segment::new(Side::Right, 0.5, 0.9),
        }
    }

    /// Straight channel: the whole left side is inflow, the whole right side
    /// outflow, top and bottom are walls.
    pub fn channel() -> Self {
        Geometry {
            inlet: Segment::new(Side::Left, 0.0, 1.0),
            outlet: Segment::new(Side::Right, 0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, seg) in [("inlet", &self.inlet), ("outlet", &self.outlet)] {
            if !(seg.length() > 0.0) {
                return Err(Error::invalid(format!("{name} segment has non-positive length")));
            }
            if seg.lo < -GEOM_TOL || seg.hi > 1.0 + GEOM_TOL {
                return Err(Error::invalid(format!("{name} segment leaves the room boundary")));
            }
        }
        if self.inlet.overlaps(&self.outlet) {
            return Err(Error::invalid("inlet and outlet intersect"));
        }
        Ok(())
    }

    pub fn tag_of_point(&self, p: [f64; 2]) -> BoundaryTag {
        if self.inlet.contains_strictly(p) {
            BoundaryTag::Inlet
        } else if self.outlet.contains_strictly(p) {
            BoundaryTag::Outlet
        } else {
            BoundaryTag::Wall
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Inlet => "inlet",
            BoundaryTag::Outlet => "outlet",
            BoundaryTag::Wall => "wall",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inlet" => Ok(BoundaryTag::Inlet),
            "outlet" => Ok(BoundaryTag::Outlet),
            "wall" => Ok(BoundaryTag::Wall),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// Boundary edge of a P2 triangle: two end vertices and the midpoint node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    geometry: Geometry,
    n: usize,
    nodes: Vec<[f64; 2]>,
    vertices: Vec<usize>,
    p1_index: Vec<Option<usize>>,
    triangles: Vec<[usize; 6]>,
    boundary_edges: Vec<BoundaryEdge>,
    node_tags: Vec<Option<BoundaryTag>>,
}

/// Builds the structured mesh with `n` P2 nodes per direction and classifies
/// its boundary.
pub fn build_structured_mesh(geometry: &Geometry, n: usize) -> Result<Mesh> {
    geometry.validate()?;
    if n < 5 || n % 2 == 0 {
        return Err(Error::invalid(format!(
            "P2 nodes per direction must be odd and at least 5, got {n}"
        )));
    }
    let m = (n + 1) / 2;
    let denom = (n - 1) as f64;
    let grid = |i: usize, j: usize| j * n + i;

    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.push([i as f64 / denom, j as f64 / denom]);
        }
    }

    let mut vertices = Vec::with_capacity(m * m);
    let mut p1_index = vec![None; n * n];
    for jv in 0..m {
        for iv in 0..m {
            let idx = grid(2 * iv, 2 * jv);
            p1_index[idx] = Some(vertices.len());
            vertices.push(idx);
        }
    }

    let mut triangles = Vec::with_capacity(2 * (m - 1) * (m - 1));
    for jv in 0..m - 1 {
        for iv in 0..m - 1 {
            let (i, j) = (2 * iv, 2 * jv);
            // lower-right triangle: (i,j), (i+2,j), (i+2,j+2)
            triangles.push([
                grid(i, j),
                grid(i + 2, j),
                grid(i + 2, j + 2),
                grid(i + 2, j + 1),
                grid(i + 1, j + 1),
                grid(i + 1, j),
            ]);
            // upper-left triangle: (i,j), (i+2,j+2), (i,j+2)
            triangles.push([
                grid(i, j),
                grid(i + 2, j + 2),
                grid(i, j + 2),
                grid(i + 1, j + 2),
                grid(i, j + 1),
                grid(i + 1, j + 1),
            ]);
        }
    }

    // counter-clockwise walk around the boundary
    let mut boundary_edges = Vec::with_capacity(4 * (m - 1));
    let last = n - 1;
    let mut push = |a: usize, b: usize, mid: usize| {
        boundary_edges.push(BoundaryEdge {
            nodes: [a, b, mid],
            tag: BoundaryTag::Wall,
        })
    };
    for k in (0..last).step_by(2) {
        push(grid(k, 0), grid(k + 2, 0), grid(k + 1, 0));
    }
    for k in (0..last).step_by(2) {
        push(grid(last, k), grid(last, k + 2), grid(last, k + 1));
    }
    for k in (0..last).step_by(2).rev() {
        push(grid(k + 2, last), grid(k, last), grid(k + 1, last));
    }
    for k in (0..last).step_by(2).rev() {
        push(grid(0, k + 2), grid(0, k), grid(0, k + 1));
    }

    let mesh = Mesh {
        geometry: *geometry,
        n,
        nodes,
        vertices,
        p1_index,
        triangles,
        boundary_edges,
        node_tags: vec![None; n * n],
    };
    classify_boundary(mesh, geometry)
}

/// Tags boundary nodes and edges. Nodes strictly inside the inlet (outlet)
/// segment are inlet (outlet); everything else on the boundary, including
/// segment endpoints, is wall. An edge takes the tag of its midpoint.
pub fn classify_boundary(mut mesh: Mesh, geometry: &Geometry) -> Result<Mesh> {
    geometry.validate()?;
    let mut tags = vec![None; mesh.nodes.len()];
    for edge in mesh.boundary_edges.iter_mut() {
        for &node in &edge.nodes {
            let p = mesh.nodes[node];
            if !on_unit_square_boundary(p) {
                return Err(Error::Consistency(format!(
                    "boundary edge node {node} at ({}, {}) is not on the boundary",
                    p[0], p[1]
                )));
            }
            tags[node] = Some(geometry.tag_of_point(p));
        }
        edge.tag = geometry.tag_of_point(mesh.nodes[edge.nodes[2]]);
    }
    mesh.node_tags = tags;
    mesh.geometry = *geometry;
    Ok(mesh)
}

fn on_unit_square_boundary(p: [f64; 2]) -> bool {
    p.iter()
        .any(|&c| c.abs() <= GEOM_TOL || (c - 1.0).abs() <= GEOM_TOL)
}

impl Mesh {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// P2 nodes per direction.
    pub fn n(&self) -> usize {
        self.n
    }

    /// P2 grid spacing.
    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// P2 indices of the P1 vertices, in P1 order.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// P1 index of a P2 node, if it is a vertex.
    pub fn p1_index(&self, node: usize) -> Option<usize> {
        self.p1_index[node]
    }

    pub fn triangles(&self) -> &[[usize; 6]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// `None` for interior nodes.
    pub fn node_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.node_tags[node]
    }

    pub fn node_tags(&self) -> &[Option<BoundaryTag>] {
        &self.node_tags
    }

    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.node_tags[i] == Some(tag))
            .collect()
    }

    pub fn vertex_coords(&self, tri: usize) -> [[f64; 2]; 3] {
        let t = &self.triangles[tri];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.vertex_coords(tri);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Finds the triangle containing `p` and its barycentric coordinates with
    /// respect to the triangle's three vertices.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        if p.iter().any(|&c| c < -GEOM_TOL || c > 1.0 + GEOM_TOL) {
            return None;
        }
        let cells = (self.n - 1) / 2;
        let cell = 1.0 / cells as f64;
        let locate_axis = |c: f64| {
            let k = ((c / cell).floor() as isize).clamp(0, cells as isize - 1) as usize;
            (k, (c - k as f64 * cell) / cell)
        };
        let (iv, s) = locate_axis(p[0]);
        let (jv, t) = locate_axis(p[1]);
        let base = 2 * (jv * cells + iv);
        if s >= t {
            Some((base, [1.0 - s, s - t, t]))
        } else {
            Some((base + 1, [1.0 - t, s, t - s]))
        }
    }

    /// Writes `index,x,y,tag` for every P2 node.
    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,x,y,tag")?;
        for (i, p) in self.nodes.iter().enumerate() {
            let tag = self.node_tags[i].map_or("interior", BoundaryTag::as_str);
            writeln!(w, "{i},{:.17e},{:.17e},{tag}", p[0], p[1])?;
        }
        Ok(())
    }

    /// Writes `t0,...,t5` (vertices, then the midpoints opposite each vertex).
    pub fn write_triangles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t0,t1,t2,t3,t4,t5")?;
        for t in &self.triangles {
            writeln!(w, "{},{},{},{},{},{}", t[0], t[1], t[2], t[3], t[4], t[5])?;
        }
        Ok(())
    }
}
