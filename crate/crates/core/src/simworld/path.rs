//! Waypoint paths for the path-following task.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::dist;

/// Ordered waypoint list; consecutive points are distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct Waypoints {
    points: Vec<(f64, f64)>,
}

impl Waypoints {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "waypoints need at least two points".into(),
            ));
        }
        for pair in points.windows(2) {
            if dist(pair[0], pair[1]) <= 1e-9 {
                return Err(Error::InvalidArgument(
                    "consecutive waypoints must be distinct".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Endpoints of segment `i`.
    pub fn segment(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        (self.points[i], self.points[i + 1])
    }

    /// Arc length from the path start to the start of segment `i`.
    pub fn prefix_len(&self, i: usize) -> f64 {
        self.points
            .windows(2)
            .take(i)
            .map(|w| dist(w[0], w[1]))
            .sum()
    }

    pub fn total_len(&self) -> f64 {
        self.prefix_len(self.segment_count())
    }
}

/// The four benchmark path shapes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum PathKind {
    Straight,
    Left,
    Right,
    Zigzag,
}

impl PathKind {
    pub const ALL: [PathKind; 4] = [
        PathKind::Straight,
        PathKind::Left,
        PathKind::Right,
        PathKind::Zigzag,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PathKind::Straight => "straight",
            PathKind::Left => "left",
            PathKind::Right => "right",
            PathKind::Zigzag => "zigzag",
        }
    }
}

impl FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(PathKind::Straight),
            "left" => Ok(PathKind::Left),
            "right" => Ok(PathKind::Right),
            "zigzag" => Ok(PathKind::Zigzag),
            other => Err(Error::InvalidArgument(format!(
                "unknown path kind '{other}' (expected straight|left|right|zigzag)"
            ))),
        }
    }
}

/// Build a benchmark path starting at the origin and heading +x.
///
/// `straight` is a single segment of length `scale`; `left`/`right` turn
/// 90 degrees after `scale` meters; `zigzag` alternates four 45-degree
/// segments advancing `2 * scale` in x overall.
pub fn make_path(kind: PathKind, scale: f64) -> Result<Waypoints> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "path scale must be positive, got {scale}"
        )));
    }
    let s = scale;
    let pts = match kind {
        PathKind::Straight => vec![(0.0, 0.0), (s, 0.0)],
        PathKind::Left => vec![(0.0, 0.0), (s, 0.0), (s, s)],
        PathKind::Right => vec![(0.0, 0.0), (s, 0.0), (s, -s)],
        PathKind::Zigzag => vec![
            (0.0, 0.0),
            (0.5 * s, 0.5 * s),
            (s, 0.0),
            (1.5 * s, 0.5 * s),
            (2.0 * s, 0.0),
        ],
    };
    Waypoints::new(pts)
}
