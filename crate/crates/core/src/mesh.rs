//! Structured primal mesh of squares on the unit square and its
//! vertex-centred dual mesh of control volumes.
//!
//! All coordinates are integer multiples of `h / 2` with `h = 2^-level`, so
//! they are exact in binary floating point and containment tests below use
//! exact comparisons.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const MAX_LEVEL: u32 = 12;

/// Boundary condition applied to the whole of the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    AllDirichlet,
    AllNeumann,
}

/// Uniform grid of `2^level x 2^level` squares covering `[0, 1]^2`.
///
/// Element `(i, j)` has lower-left corner `(i h, j h)` and global index
/// `j * n_side + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    level: u32,
    n_side: usize,
    h: f64,
    bc: BoundaryKind,
}

impl StructuredMesh {
    pub fn new(level: u32, bc: BoundaryKind) -> Result<Self> {
        if !(1..=MAX_LEVEL).contains(&level) {
            return Err(Error::Parameter(format!(
                "mesh level {level} outside 1..={MAX_LEVEL}"
            )));
        }
        let n_side = 1usize << level;
        Ok(Self {
            level,
            n_side,
            h: 1.0 / n_side as f64,
            bc,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn n_elements(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_side && j < self.n_side);
        j * self.n_side + i
    }

    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.n_side, e / self.n_side)
    }

    pub fn element_origin(&self, e: usize) -> Point {
        let (i, j) = self.element_coords(e);
        Point::new(i as f64 * self.h, j as f64 * self.h)
    }

    pub fn element_center(&self, e: usize) -> Point {
        let (i, j) = self.element_coords(e);
        Point::new((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Reference coordinates of `p` with respect to element `e`.
    pub fn to_reference(&self, e: usize, p: Point) -> Point {
        let o = self.element_origin(e);
        Point::new((p.x - o.x) / self.h, (p.y - o.y) / self.h)
    }

    /// Lowest-index element whose closure contains `p`.
    pub fn element_containing(&self, p: Point) -> Result<usize> {
        if !in_unit_square(p) {
            return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
        }
        let i = lowest_cell(p.x / self.h, self.n_side);
        let j = lowest_cell(p.y / self.h, self.n_side);
        Ok(self.element_index(i, j))
    }

    pub fn vertex(&self, i: usize, j: usize) -> Point {
        Point::new(i as f64 * self.h, j as f64 * self.h)
    }
}

pub(crate) fn in_unit_square(p: Point) -> bool {
    (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)
}

/// Smallest cell index `c` in `0..n` with `c <= s <= c + 1`.
fn lowest_cell(s: f64, n: usize) -> usize {
    let f = s.floor();
    let c = if f == s && s > 0.0 { f - 1.0 } else { f };
    (c.max(0.0) as usize).min(n - 1)
}

/// Piece of a control-volume boundary lying in the closure of a single
/// primal element.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub owner_element: usize,
    /// Unit normal pointing out of the control volume.
    pub outward_normal: Point,
    pub on_domain_boundary: bool,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Point {
        self.a.lerp(self.b, 0.5)
    }
}

/// Intersection of a control volume with one primal element.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumePiece {
    pub element: usize,
    pub lo: Point,
    pub hi: Point,
}

impl VolumePiece {
    pub fn area(&self) -> f64 {
        (self.hi.x - self.lo.x) * (self.hi.y - self.lo.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlVolume {
    /// Primal vertex `(I, J)` owning the volume.
    pub vertex: (usize, usize),
    pub center: Point,
    pub lo: Point,
    pub hi: Point,
    pub segments: Vec<Segment>,
    pub pieces: Vec<VolumePiece>,
}

impl ControlVolume {
    pub fn area(&self) -> f64 {
        (self.hi.x - self.lo.x) * (self.hi.y - self.lo.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.lo.x <= p.x && p.x <= self.hi.x && self.lo.y <= p.y && p.y <= self.hi.y
    }

    /// Primal elements intersecting the volume (the set `E(k)`).
    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.pieces.iter().map(|p| p.element)
    }
}

/// Vertex-centred control volumes obtained by joining the centres of the
/// primal elements.
///
/// Dirichlet meshes carry one volume per interior vertex; Neumann meshes one
/// per vertex, with boundary volumes clipped to the domain. Volumes are
/// numbered lexicographically by `(J, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMesh {
    mesh: StructuredMesh,
    volumes: Vec<ControlVolume>,
    /// Volume index per primal vertex, `usize::MAX` when the vertex has none.
    vertex_to_volume: Vec<usize>,
}

impl DualMesh {
    pub fn new(mesh: &StructuredMesh) -> Self {
        let n = mesh.n_side();
        let (first, last) = match mesh.bc() {
            BoundaryKind::AllDirichlet => (1, n - 1),
            BoundaryKind::AllNeumann => (0, n),
        };
        let mut vertex_to_volume = vec![usize::MAX; (n + 1) * (n + 1)];
        let mut volumes = Vec::new();
        for jv in first..=last {
            for iv in first..=last {
                vertex_to_volume[jv * (n + 1) + iv] = volumes.len();
                volumes.push(build_volume(mesh, iv, jv));
            }
        }
        Self {
            mesh: mesh.clone(),
            volumes,
            vertex_to_volume,
        }
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn volumes(&self) -> &[ControlVolume] {
        &self.volumes
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    pub fn volume_at_vertex(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.mesh.n_side();
        if i > n || j > n {
            return None;
        }
        match self.vertex_to_volume[j * (n + 1) + i] {
            usize::MAX => None,
            k => Some(k),
        }
    }

    /// Lowest-index volume whose closure contains `p`, if any.
    pub fn volume_containing(&self, p: Point) -> Option<usize> {
        if !in_unit_square(p) {
            return None;
        }
        let n = self.mesh.n_side();
        let candidates = |s: f64| -> Vec<usize> {
            // vertices I with |s - I| <= 1/2
            let lo = (s - 0.5).ceil().max(0.0) as usize;
            let hi = ((s + 0.5).floor() as usize).min(n);
            (lo..=hi).collect()
        };
        let h = self.mesh.h();
        let is = candidates(p.x / h);
        let js = candidates(p.y / h);
        for &j in &js {
            for &i in &is {
                if let Some(k) = self.volume_at_vertex(i, j) {
                    if self.volumes[k].contains(p) {
                        return Some(k);
                    }
                }
            }
        }
        None
    }

    pub fn total_area(&self) -> f64 {
        self.volumes.iter().map(ControlVolume::area).sum()
    }

    /// Plain-text dump, one line per volume: `k x_lo y_lo x_hi y_hi`.
    pub fn write_volumes<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in self.volumes.iter().enumerate() {
            writeln!(out, "{k} {} {} {} {}", v.lo.x, v.lo.y, v.hi.x, v.hi.y)?;
        }
        Ok(())
    }
}

fn build_volume(mesh: &StructuredMesh, iv: usize, jv: usize) -> ControlVolume {
    let n = mesh.n_side();
    let half = mesh.h() / 2.0;
    // everything in units of h/2
    let x_lo = (2 * iv).saturating_sub(1);
    let x_hi = (2 * iv + 1).min(2 * n);
    let y_lo = (2 * jv).saturating_sub(1);
    let y_hi = (2 * jv + 1).min(2 * n);
    let at = |u: usize| u as f64 * half;

    // Split points along each axis, and the element column/row covering each
    // sub-interval.
    let split = |lo: usize, hi: usize, vertex: usize| -> Vec<(usize, usize, usize)> {
        let mid = 2 * vertex;
        let mut parts = Vec::with_capacity(2);
        if lo < mid {
            parts.push((lo, mid, vertex - 1));
        }
        if mid < hi {
            parts.push((mid, hi, vertex));
        }
        parts
    };
    let xs = split(x_lo, x_hi, iv);
    let ys = split(y_lo, y_hi, jv);

    // Element row/column whose closure holds a line at `u` (units of h/2).
    let cell_of_line = |u: usize| -> usize { (u / 2).min(n - 1) };

    let mut segments = Vec::with_capacity(8);
    let seg = |a: Point, b: Point, ei: usize, ej: usize, normal: Point, boundary: bool| Segment {
        a,
        b,
        owner_element: mesh.element_index(ei, ej),
        outward_normal: normal,
        on_domain_boundary: boundary,
    };
    // bottom, left to right
    let ej = cell_of_line(y_lo);
    for &(a, b, ei) in &xs {
        segments.push(seg(
            Point::new(at(a), at(y_lo)),
            Point::new(at(b), at(y_lo)),
            ei,
            ej,
            Point::new(0.0, -1.0),
            y_lo == 0,
        ));
    }
    // right, bottom to top
    let ei = cell_of_line(x_hi);
    for &(a, b, ej) in &ys {
        segments.push(seg(
            Point::new(at(x_hi), at(a)),
            Point::new(at(x_hi), at(b)),
            ei,
            ej,
            Point::new(1.0, 0.0),
            x_hi == 2 * n,
        ));
    }
    // top, right to left
    let ej = cell_of_line(y_hi);
    for &(a, b, ei) in xs.iter().rev() {
        segments.push(seg(
            Point::new(at(b), at(y_hi)),
            Point::new(at(a), at(y_hi)),
            ei,
            ej,
            Point::new(0.0, 1.0),
            y_hi == 2 * n,
        ));
    }
    // left, top to bottom
    let ei = cell_of_line(x_lo);
    for &(a, b, ej) in ys.iter().rev() {
        segments.push(seg(
            Point::new(at(x_lo), at(b)),
            Point::new(at(x_lo), at(a)),
            ei,
            ej,
            Point::new(-1.0, 0.0),
            x_lo == 0,
        ));
    }

    let mut pieces = Vec::with_capacity(4);
    for &(ya, yb, ej) in &ys {
        for &(xa, xb, ei) in &xs {
            pieces.push(VolumePiece {
                element: mesh.element_index(ei, ej),
                lo: Point::new(at(xa), at(ya)),
                hi: Point::new(at(xb), at(yb)),
            });
        }
    }

    ControlVolume {
        vertex: (iv, jv),
        center: mesh.vertex(iv, jv),
        lo: Point::new(at(x_lo), at(y_lo)),
        hi: Point::new(at(x_hi), at(y_hi)),
        segments,
        pieces,
    }
}

/// Edge of the dual mesh.
///
/// Interior interfaces separate two volumes. An interface with no second
/// volume either lies on the domain boundary (Neumann meshes) or separates a
/// volume from the uncovered strip along a Dirichlet boundary, where the
/// multiplier is taken to be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DualInterface {
    pub a: Point,
    pub b: Point,
    pub volumes: (usize, Option<usize>),
    pub on_domain_boundary: bool,
}

impl DualInterface {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn is_interior(&self) -> bool {
        self.volumes.1.is_some()
    }
}

/// Enumerates every edge of the dual mesh exactly once.
pub fn dual_interfaces(dual: &DualMesh) -> Vec<DualInterface> {
    let mut out = Vec::new();
    for (k, v) in dual.volumes().iter().enumerate() {
        let (iv, jv) = v.vertex;
        let sides = [
            // (neighbor vertex, endpoints, on the domain boundary)
            (
                Some((iv + 1, jv)),
                Point::new(v.hi.x, v.lo.y),
                Point::new(v.hi.x, v.hi.y),
                v.hi.x == 1.0,
            ),
            (
                Some((iv, jv + 1)),
                Point::new(v.lo.x, v.hi.y),
                Point::new(v.hi.x, v.hi.y),
                v.hi.y == 1.0,
            ),
            (
                iv.checked_sub(1).map(|i| (i, jv)),
                Point::new(v.lo.x, v.lo.y),
                Point::new(v.lo.x, v.hi.y),
                v.lo.x == 0.0,
            ),
            (
                jv.checked_sub(1).map(|j| (iv, j)),
                Point::new(v.lo.x, v.lo.y),
                Point::new(v.hi.x, v.lo.y),
                v.lo.y == 0.0,
            ),
        ];
        for (idx, (nb, a, b, on_boundary)) in sides.into_iter().enumerate() {
            let neighbor = if on_boundary {
                None
            } else {
                nb.and_then(|(i, j)| dual.volume_at_vertex(i, j))
            };
            match neighbor {
                // right/top neighbors own the shared interface
                Some(k2) if idx < 2 => out.push(DualInterface {
                    a,
                    b,
                    volumes: (k, Some(k2)),
                    on_domain_boundary: false,
                }),
                Some(_) => {}
                None => out.push(DualInterface {
                    a,
                    b,
                    volumes: (k, None),
                    on_domain_boundary: on_boundary,
                }),
            }
        }
    }
    out
}
