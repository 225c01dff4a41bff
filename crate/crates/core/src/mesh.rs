//! Structured triangulations of axis-aligned rectangles.
//!
//! Every grid cell is split along the diagonal running from its lower-left to its
//! upper-right corner, so a mesh is fully determined by `(rect, nx, ny)`.

use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT_SQUARE: Rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, MeshError> {
        let r = Rect { x0, x1, y0, y1 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let finite = self.x0.is_finite() && self.x1.is_finite() && self.y0.is_finite() && self.y1.is_finite();
        if !finite || self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(MeshError::DegenerateRect(*self));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }
}

/// Side of the rectangle a boundary edge lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    /// Index of the vector component tangential to this side.
    pub fn tangential_component(self) -> usize {
        match self {
            Side::Left | Side::Right => 1,
            Side::Bottom | Side::Top => 0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeshError {
    ZeroCells { nx: usize, ny: usize },
    DegenerateRect(Rect),
    UnclassifiedEdge { a: usize, b: usize },
    PointOutside { x: f64, y: f64 },
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::ZeroCells { nx, ny } => write!(f, "mesh needs at least one cell per direction (nx={nx}, ny={ny})"),
            MeshError::DegenerateRect(r) => write!(
                f,
                "degenerate rectangle [{}, {}] x [{}, {}]",
                r.x0, r.x1, r.y0, r.y1
            ),
            MeshError::UnclassifiedEdge { a, b } => {
                write!(f, "boundary edge ({a}, {b}) does not lie on any side of the rectangle")
            }
            MeshError::PointOutside { x, y } => write!(f, "point ({x}, {y}) lies outside the mesh"),
        }
    }
}

impl core::error::Error for MeshError {}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_nodes: Vec<usize>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Maximum edge length.
    pub h: f64,
}

pub fn build_mesh(rect: Rect, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells { nx, ny });
    }
    rect.validate()?;
    let hx = rect.width() / nx as f64;
    let hy = rect.height() / ny as f64;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Pin the last row/column to the exact rectangle edges.
        let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * hx };
            nodes.push([x, y]);
        }
    }

    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut mesh = Mesh {
        rect,
        nx,
        ny,
        nodes,
        triangles,
        boundary_nodes: Vec::new(),
        boundary_edges: Vec::new(),
        h: 0.0,
    };
    mesh.h = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| mesh.edge_length(a, b))
        .fold(0.0, f64::max);
    mesh.boundary_edges = classify_boundary(&mesh)?;

    let mut on_boundary = alloc::vec![false; mesh.nodes.len()];
    for e in &mesh.boundary_edges {
        on_boundary[e.a] = true;
        on_boundary[e.b] = true;
    }
    mesh.boundary_nodes = (0..mesh.nodes.len()).filter(|&n| on_boundary[n]).collect();
    Ok(mesh)
}

/// Finds the edges owned by a single triangle and tags each with the rectangle side it
/// lies on.
pub fn classify_boundary(mesh: &Mesh) -> Result<Vec<BoundaryEdge>, MeshError> {
    let mut edges = mesh.edge_incidence();
    edges.retain(|&(_, _, count)| count == 1);
    let tol = 1e-12 * mesh.h.max(f64::MIN_POSITIVE);
    let r = mesh.rect;
    let mut out = Vec::with_capacity(edges.len());
    for (a, b, _) in edges {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let on = |coord: usize, value: f64| (pa[coord] - value).abs() <= tol && (pb[coord] - value).abs() <= tol;
        let side = if on(1, r.y0) {
            Side::Bottom
        } else if on(1, r.y1) {
            Side::Top
        } else if on(0, r.x0) {
            Side::Left
        } else if on(0, r.x1) {
            Side::Right
        } else {
            return Err(MeshError::UnclassifiedEdge { a, b });
        };
        out.push(BoundaryEdge { a, b, side });
    }
    Ok(out)
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Grid spacing in x and y (the "h" of a refinement study).
    pub fn cell_size(&self) -> (f64, f64) {
        (self.rect.width() / self.nx as f64, self.rect.height() / self.ny as f64)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.nodes[a], self.nodes[b]);
        math::hypot(q[0] - p[0], q[1] - p[1])
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Unique undirected edges `(lo, hi, number_of_incident_triangles)`, sorted.
    pub fn edge_incidence(&self) -> Vec<(usize, usize, usize)> {
        let mut all: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        all.sort_unstable();
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (a, b) in all {
            match out.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += 1,
                _ => out.push((a, b, 1)),
            }
        }
        out
    }

    /// Sides that node `n` lies on (zero, one, or two entries at corners).
    pub fn node_sides(&self, n: usize) -> impl Iterator<Item = Side> + '_ {
        let tol = 1e-12 * self.h;
        let p = self.nodes[n];
        let r = self.rect;
        Side::ALL.into_iter().filter(move |s| match s {
            Side::Left => (p[0] - r.x0).abs() <= tol,
            Side::Right => (p[0] - r.x1).abs() <= tol,
            Side::Bottom => (p[1] - r.y0).abs() <= tol,
            Side::Top => (p[1] - r.y1).abs() <= tol,
        })
    }

    /// Triangle containing `(x, y)` and the barycentric coordinates of the point in it.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, [f64; 3]), MeshError> {
        let r = self.rect;
        let tol = 1e-12 * self.h;
        if !(x >= r.x0 - tol && x <= r.x1 + tol && y >= r.y0 - tol && y <= r.y1 + tol) {
            return Err(MeshError::PointOutside { x, y });
        }
        let (hx, hy) = self.cell_size();
        let fx = ((x - r.x0) / hx).max(0.0);
        let fy = ((y - r.y0) / hy).max(0.0);
        let i = (fx as usize).min(self.nx - 1);
        let j = (fy as usize).min(self.ny - 1);
        let sx = fx - i as f64;
        let sy = fy - j as f64;
        let base = 2 * (j * self.nx + i);
        // Lower-right triangle (a, b, c) holds sx >= sy.
        let t = if sx >= sy { base } else { base + 1 };
        Ok((t, self.barycentric(t, [x, y])))
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.vertices(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }
}
