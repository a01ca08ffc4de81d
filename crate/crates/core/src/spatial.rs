//! Planar geometry kernels: local projection, point-to-polyline distance,
//! buffer membership, and event-to-line assignment.
//!
//! All geometry is planar. Geographic inputs pass through a local
//! equirectangular projection anchored near the dataset centroid; every
//! buffer radius used by the pipeline (10 m to 20 km) is far below the
//! distortion scale of that projection for a single utility territory.
//!
//! Everything here is a pure function over immutable inputs, so callers may
//! evaluate concurrently over points or lines; results never depend on
//! evaluation order.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters, used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A point in the local planar frame, meters east/north of the projection
/// origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A feeder or transmission line segment chain in the planar frame.
///
/// Invariants, enforced by [`Polyline::new`]: at least two vertices, no two
/// consecutive vertices coincident, and the stored length equals the sum of
/// segment lengths to 1e-6 relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub circuit_id: String,
    pub vertices: Vec<PlanarPoint>,
    pub length_m: f64,
}

impl Polyline {
    pub fn new(circuit_id: impl Into<String>, vertices: Vec<PlanarPoint>) -> Result<Self> {
        let circuit_id = circuit_id.into();
        if vertices.len() < 2 {
            return Err(Error::Validation(format!(
                "polyline `{circuit_id}` needs at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        for (i, pair) in vertices.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Err(Error::Validation(format!(
                    "polyline `{circuit_id}` has coincident vertices at {i} and {}",
                    i + 1
                )));
            }
        }
        let length_m = vertices.windows(2).map(|p| p[0].distance(&p[1])).sum();
        Ok(Polyline {
            circuit_id,
            vertices,
            length_m,
        })
    }

    pub fn segments(&self) -> impl Iterator<Item = (&PlanarPoint, &PlanarPoint)> {
        self.vertices.windows(2).map(|p| (&p[0], &p[1]))
    }

    /// The point at arc-length fraction `t` (clamped to [0,1]) along the chain.
    pub fn point_at_fraction(&self, t: f64) -> PlanarPoint {
        let target = self.length_m * t.clamp(0.0, 1.0);
        let mut walked = 0.0;
        for (a, b) in self.segments() {
            let seg = a.distance(b);
            if walked + seg >= target {
                let local = if seg > 0.0 { (target - walked) / seg } else { 0.0 };
                return PlanarPoint::new(a.x + (b.x - a.x) * local, a.y + (b.y - a.y) * local);
            }
            walked += seg;
        }
        *self.vertices.last().unwrap()
    }
}

/// A point found inside a line's buffer, with the distance that put it there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferAssignment {
    pub point_index: usize,
    pub circuit_id: String,
    pub distance_m: f64,
}

/// Project lon/lat degrees into the local planar frame anchored at `origin`
/// (lon, lat in degrees).
///
/// `x = R·(lon−lon₀)·cos(lat₀)·π/180`, `y = R·(lat−lat₀)·π/180`. Valid for
/// points within a few hundred kilometers of the origin, which covers one
/// utility territory.
pub fn project_lonlat(points: &[(f64, f64)], origin: (f64, f64)) -> Result<Vec<PlanarPoint>> {
    let (lon0, lat0) = origin;
    if !(-90.0..=90.0).contains(&lat0) {
        return Err(Error::Input(format!("origin latitude {lat0} out of [-90, 90]")));
    }
    let rad = std::f64::consts::PI / 180.0;
    let cos_lat0 = (lat0 * rad).cos();
    points
        .iter()
        .map(|&(lon, lat)| {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(Error::Input(format!("latitude {lat} out of [-90, 90]")));
            }
            Ok(PlanarPoint::new(
                EARTH_RADIUS_M * (lon - lon0) * cos_lat0 * rad,
                EARTH_RADIUS_M * (lat - lat0) * rad,
            ))
        })
        .collect()
}

/// Inverse of [`project_lonlat`]: planar meters back to lon/lat degrees.
pub fn invert_to_lonlat(points: &[PlanarPoint], origin: (f64, f64)) -> Vec<(f64, f64)> {
    let (lon0, lat0) = origin;
    let rad = std::f64::consts::PI / 180.0;
    let cos_lat0 = (lat0 * rad).cos();
    points
        .iter()
        .map(|p| {
            (
                lon0 + p.x / (EARTH_RADIUS_M * cos_lat0 * rad),
                lat0 + p.y / (EARTH_RADIUS_M * rad),
            )
        })
        .collect()
}

/// Euclidean distance from `p` to the closest point of segment `[a, b]`.
///
/// Uses the clamped-projection formula. A degenerate segment (`a == b`)
/// falls back to the point distance rather than erroring.
pub fn point_segment_distance(p: &PlanarPoint, a: &PlanarPoint, b: &PlanarPoint) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    let foot = PlanarPoint::new(a.x + t * dx, a.y + t * dy);
    p.distance(&foot)
}

/// Minimum over all segments of [`point_segment_distance`].
pub fn point_polyline_distance(p: &PlanarPoint, line: &Polyline) -> f64 {
    line.segments()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum distance from `p` to any of a circuit's polyline parts.
///
/// Circuits loaded from MultiLineString geometry carry more than one part;
/// buffer rules treat the circuit as the union of its parts.
pub fn point_parts_distance(p: &PlanarPoint, parts: &[Polyline]) -> f64 {
    parts
        .iter()
        .map(|part| point_polyline_distance(p, part))
        .fold(f64::INFINITY, f64::min)
}

/// Exactly the points whose distance to `line` is at most `radius_m`, each
/// with its distance recorded. An empty result is not an error.
pub fn points_in_buffer(
    points: &[PlanarPoint],
    line: &Polyline,
    radius_m: f64,
) -> Vec<BufferAssignment> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let d = point_polyline_distance(p, line);
            (d <= radius_m).then(|| BufferAssignment {
                point_index: i,
                circuit_id: line.circuit_id.clone(),
                distance_m: d,
            })
        })
        .collect()
}

/// Assign an event to the closest line within `radius_m`, or `None` when no
/// line is that close.
///
/// Exact distance ties break toward the lexicographically smallest
/// `circuit_id` so that assignment is deterministic.
pub fn assign_event_to_line<'a>(
    event: &PlanarPoint,
    lines: &'a [Polyline],
    radius_m: f64,
) -> Option<&'a str> {
    let mut best: Option<(f64, &str)> = None;
    for line in lines {
        let d = point_polyline_distance(event, line);
        if d > radius_m {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && line.circuit_id.as_str() < bid),
        };
        if better {
            best = Some((d, line.circuit_id.as_str()));
        }
    }
    best.map(|(_, id)| id)
}
