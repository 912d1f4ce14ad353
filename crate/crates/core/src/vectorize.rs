//! Label raster to polygon conversion and ring simplification.
//!
//! Polygons follow pixel edges exactly: every ring vertex is a pixel corner,
//! so polygon areas equal pixel counts times pixel area and the rings can be
//! rasterized back onto the source grid without loss. Regions are formed
//! under 4-connectivity; pixels of one region that touch only at a corner are
//! joined at that corner, which keeps each ring simple.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{label_pieces, Connectivity};
use crate::error::{Error, Result};
use crate::raster::{Grid, LabelRaster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Closed ring: first point equals last point.
pub type Ring = Vec<Point>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldProperties {
    /// Index of this island among polygons sharing the same id.
    pub part: u32,
    pub wheat_fraction: Option<f64>,
    pub is_wheat: Option<bool>,
    pub year: Option<i32>,
    /// Set when a ring would have collapsed under simplification and was kept as-is.
    pub rdp_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPolygon {
    /// Source label.
    pub id: u32,
    /// Counter-clockwise in map coordinates.
    pub exterior: Ring,
    /// Clockwise in map coordinates.
    pub interiors: Vec<Ring>,
    /// Exterior area minus hole areas, map units².
    pub area: f64,
    pub properties: FieldProperties,
}

impl FieldPolygon {
    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.interiors.iter())
    }

    pub fn vertex_count(&self) -> usize {
        self.rings().map(Vec::len).sum()
    }
}

/// Shoelace area with the sign of the traversal: positive when
/// counter-clockwise in a y-up frame.
fn signed_area(ring: &[Point]) -> f64 {
    let Some(o) = ring.first() else { return 0.0 };
    // relative to the first vertex to keep large map coordinates from eating precision
    let mut twice = 0.0;
    for w in ring.windows(2) {
        let (ax, ay) = (w[0].x - o.x, w[0].y - o.y);
        let (bx, by) = (w[1].x - o.x, w[1].y - o.y);
        twice += ax * by - bx * ay;
    }
    twice / 2.0
}

/// Absolute shoelace area of a closed ring.
pub fn area_of(ring: &[Point]) -> Result<f64> {
    match (ring.first(), ring.last()) {
        (Some(a), Some(b)) if a == b => Ok(signed_area(ring).abs()),
        _ => Err(Error::OpenRing),
    }
}

fn polygon_area(exterior: &[Point], interiors: &[Ring]) -> f64 {
    signed_area(exterior).abs() - interiors.iter().map(|r| signed_area(r).abs()).sum::<f64>()
}

// Directed edges on the pixel-corner lattice (x = column, y = row, y down).
// The region being traced lies on the clockwise side of travel.
const EAST: u8 = 0;
const SOUTH: u8 = 1;
const WEST: u8 = 2;
const NORTH: u8 = 3;

#[inline]
fn step(x: usize, y: usize, d: u8) -> (usize, usize) {
    match d {
        EAST => (x + 1, y),
        SOUTH => (x, y + 1),
        WEST => (x - 1, y),
        _ => (x, y - 1),
    }
}

struct Tracer<'a> {
    width: usize,
    height: usize,
    pieces: &'a [u32],
    visited: Vec<bool>,
}

impl Tracer<'_> {
    #[inline]
    fn piece_at(&self, row: isize, col: isize) -> u32 {
        if row < 0 || col < 0 || row >= self.height as isize || col >= self.width as isize {
            0
        } else {
            self.pieces[row as usize * self.width + col as usize]
        }
    }

    /// Whether the edge leaving corner `(x, y)` in direction `d` separates `piece` from anything else.
    #[inline]
    fn is_boundary(&self, x: usize, y: usize, d: u8, piece: u32) -> bool {
        let (x, y) = (x as isize, y as isize);
        let (inside, outside) = match d {
            EAST => ((y, x), (y - 1, x)),
            SOUTH => ((y, x - 1), (y, x)),
            WEST => ((y - 1, x - 1), (y, x - 1)),
            _ => ((y - 1, x), (y - 1, x - 1)),
        };
        self.piece_at(inside.0, inside.1) == piece && self.piece_at(outside.0, outside.1) != piece
    }

    #[inline]
    fn edge_id(&self, x: usize, y: usize, d: u8) -> usize {
        (y * (self.width + 1) + x) * 4 + d as usize
    }

    /// Follows boundary edges from a start edge back to itself, returning the corner vertices.
    fn trace(&mut self, x0: usize, y0: usize, d0: u8, piece: u32) -> Vec<(usize, usize)> {
        let mut corners = Vec::new();
        let (mut x, mut y, mut d) = (x0, y0, d0);
        loop {
            let id = self.edge_id(x, y, d);
            self.visited[id] = true;
            let (nx, ny) = step(x, y, d);
            // Counter-clockwise turn first: joins same-region pixels meeting at a corner.
            let nd = [(d + 3) % 4, d, (d + 1) % 4]
                .into_iter()
                .find(|&c| self.is_boundary(nx, ny, c, piece))
                .expect("boundary edges always continue");
            if nd != d {
                corners.push((nx, ny));
            }
            (x, y, d) = (nx, ny, nd);
            if (x, y, d) == (x0, y0, d0) {
                break;
            }
        }
        corners
    }
}

fn lattice_signed_area(corners: &[(usize, usize)]) -> i64 {
    let n = corners.len();
    let mut twice = 0i64;
    for i in 0..n {
        let (ax, ay) = (corners[i].0 as i64, corners[i].1 as i64);
        let (bx, by) = (corners[(i + 1) % n].0 as i64, corners[(i + 1) % n].1 as i64);
        twice += ax * by - bx * ay;
    }
    twice
}

/// Traces every `(label, 4-connected region)` of `labels` into a polygon.
///
/// Output is ordered by `(id, part)`; parts of one label are numbered in
/// raster-scan order of their first pixel.
pub fn polygonize(labels: &LabelRaster) -> Result<Vec<FieldPolygon>> {
    let grid = labels.grid();
    if grid.geotransform.is_rotated() {
        return Err(Error::RotatedGridUnsupported);
    }
    let (w, h) = (grid.width, grid.height);
    let (pieces, piece_count) = label_pieces(labels, Connectivity::Four);

    let mut tracer = Tracer {
        width: w,
        height: h,
        pieces: &pieces,
        visited: vec![false; (w + 1) * (h + 1) * 4],
    };
    let mut rings: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); piece_count as usize + 1];
    let mut piece_label = vec![0u32; piece_count as usize + 1];

    for r in 0..h {
        for c in 0..w {
            let piece = pieces[r * w + c];
            if piece == 0 {
                continue;
            }
            piece_label[piece as usize] = labels.labels()[r * w + c];
            // top, right, bottom, left sides of the pixel
            for (x, y, d) in [
                (c, r, EAST),
                (c + 1, r, SOUTH),
                (c + 1, r + 1, WEST),
                (c, r + 1, NORTH),
            ] {
                if !tracer.visited[tracer.edge_id(x, y, d)] && tracer.is_boundary(x, y, d, piece) {
                    let ring = tracer.trace(x, y, d, piece);
                    rings[piece as usize].push(ring);
                }
            }
        }
    }

    let mut part_counter = std::collections::HashMap::new();
    let mut parts = vec![0u32; piece_count as usize + 1];
    for p in 1..=piece_count as usize {
        let counter = part_counter.entry(piece_label[p]).or_insert(0u32);
        parts[p] = *counter;
        *counter += 1;
    }

    let gt = grid.geotransform;
    let to_map = |corners: &[(usize, usize)], want_ccw: bool| -> Ring {
        let mut ring: Ring = corners
            .iter()
            .map(|&(x, y)| {
                let (mx, my) = gt.apply(x as f64, y as f64);
                Point::new(mx, my)
            })
            .collect();
        ring.push(ring[0]);
        if (signed_area(&ring) > 0.0) != want_ccw {
            ring.reverse();
        }
        ring
    };

    let mut polygons: Vec<FieldPolygon> = (1..=piece_count as usize)
        .into_par_iter()
        .map(|p| {
            let mut exterior = None;
            let mut interiors = Vec::new();
            for corners in &rings[p] {
                // Lattice frame has y down: the region-enclosing ring is positive there.
                if lattice_signed_area(corners) > 0 {
                    debug_assert!(exterior.is_none(), "one exterior per 4-connected region");
                    exterior = Some(to_map(corners, true));
                } else {
                    interiors.push(to_map(corners, false));
                }
            }
            let exterior = exterior.expect("every region has an exterior ring");
            let area = polygon_area(&exterior, &interiors);
            FieldPolygon {
                id: piece_label[p],
                exterior,
                interiors,
                area,
                properties: FieldProperties {
                    part: parts[p],
                    ..FieldProperties::default()
                },
            }
        })
        .collect();
    polygons.sort_by_key(|p| (p.id, p.properties.part));
    Ok(polygons)
}

fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

/// Smallest distance from `p` to any segment of `ring`.
pub fn distance_to_ring(p: Point, ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| distance_to_segment(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// RDP on a closed ring anchored at its two mutually farthest vertices.
/// Returns `None` when fewer than three distinct vertices would survive.
fn simplify_ring(ring: &[Point], epsilon: f64) -> Option<Ring> {
    let pts = &ring[..ring.len().saturating_sub(1)];
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let (mut a, mut b, mut best) = (0usize, 1usize, -1.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let d = (pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2);
            if d > best {
                (a, b, best) = (i, j, d);
            }
        }
    }

    let mut keep = vec![false; n];
    keep[a] = true;
    keep[b] = true;
    // spans over unrolled indices; index k maps to pts[k % n]
    let mut stack = vec![(a, b), (b, a + n)];
    while let Some((s, e)) = stack.pop() {
        if e <= s + 1 {
            continue;
        }
        let (ps, pe) = (pts[s % n], pts[e % n]);
        let mut far = s;
        let mut far_d = -1.0f64;
        for k in s + 1..e {
            let d = distance_to_segment(pts[k % n], ps, pe);
            if d > far_d {
                far = k;
                far_d = d;
            }
        }
        if far_d > epsilon {
            keep[far % n] = true;
            stack.push((s, far));
            stack.push((far, e));
        }
    }

    let mut out: Ring = pts
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .collect();
    if out.len() < 3 {
        return None;
    }
    out.push(out[0]);
    Some(out)
}

/// Simplifies every ring independently with tolerance `epsilon`.
///
/// Surviving vertices keep their original cyclic order and starting point,
/// so re-simplifying with the same tolerance is a no-op. Rings that would
/// collapse are kept unsimplified and the polygon is flagged
/// `rdp_degenerate`.
pub fn simplify_rdp(poly: &FieldPolygon, epsilon: f64) -> FieldPolygon {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return poly.clone();
    }
    let mut degenerate = false;
    let mut simplify = |ring: &Ring| match simplify_ring(ring, epsilon) {
        Some(r) => r,
        None => {
            degenerate = true;
            ring.clone()
        }
    };
    let exterior = simplify(&poly.exterior);
    let interiors: Vec<Ring> = poly.interiors.iter().map(&mut simplify).collect();
    let area = polygon_area(&exterior, &interiors);
    let mut properties = poly.properties.clone();
    properties.rdp_degenerate |= degenerate;
    FieldPolygon {
        id: poly.id,
        exterior,
        interiors,
        area,
        properties,
    }
}

/// Even-odd test of a point against all rings of a polygon.
pub fn contains(poly: &FieldPolygon, p: Point) -> bool {
    let mut inside = false;
    for ring in poly.rings() {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Burns polygons onto `grid` by pixel-centre inclusion; later polygons win.
pub fn rasterize(polygons: &[FieldPolygon], grid: &Grid) -> Result<LabelRaster> {
    let gt = grid.geotransform;
    if gt.is_rotated() {
        return Err(Error::RotatedGridUnsupported);
    }
    let (w, h) = (grid.width, grid.height);
    let mut out = vec![0u32; w * h];
    for poly in polygons {
        let (mut c0, mut c1, mut r0, mut r1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in &poly.exterior {
            let c = (p.x - gt.origin_x) / gt.pixel_width;
            let r = (p.y - gt.origin_y) / gt.pixel_height;
            c0 = c0.min(c);
            c1 = c1.max(c);
            r0 = r0.min(r);
            r1 = r1.max(r);
        }
        let cols = (c0.floor().max(0.0) as usize)..(c1.ceil().clamp(0.0, w as f64) as usize);
        let rows = (r0.floor().max(0.0) as usize)..(r1.ceil().clamp(0.0, h as f64) as usize);
        for r in rows {
            for c in cols.clone() {
                let (x, y) = gt.apply(c as f64 + 0.5, r as f64 + 0.5);
                if contains(poly, Point::new(x, y)) {
                    out[r * w + c] = poly.id;
                }
            }
        }
    }
    LabelRaster::new(grid.clone(), out)
}
