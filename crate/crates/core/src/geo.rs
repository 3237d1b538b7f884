//! Planar relevance areas.
//!
//! Areas are axis-aligned rectangles in dimensionless simulation units. Two
//! areas intersect only when they share a region of positive area, so
//! rectangles that touch along an edge or a corner do not intersect, and a
//! degenerate (zero width or height) area intersects nothing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("area bounds must be finite or the full plane, got {0:?}")]
    NotANumber([f64; 4]),
    #[error("area has x_min > x_max or y_min > y_max: {0:?}")]
    Inverted([f64; 4]),
}

/// A point on the simulation plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle `(x_min, y_min, x_max, y_max)`.
///
/// Serialized as a four-element array in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct GeoArea {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl GeoArea {
    /// The whole plane. Global services carry this area.
    pub const FULL: GeoArea = GeoArea {
        x_min: f64::MIN,
        y_min: f64::MIN,
        x_max: f64::MAX,
        y_max: f64::MAX,
    };

    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeoError> {
        let raw = [x_min, y_min, x_max, y_max];
        if raw.iter().any(|v| v.is_nan()) {
            return Err(GeoError::NotANumber(raw));
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeoError::Inverted(raw));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Shorthand for tests and fixtures; panics on invalid bounds.
    pub fn rect(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self::new(x_min, y_min, x_max, y_max).expect("valid rectangle")
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn is_full(&self) -> bool {
        *self == Self::FULL
    }

    /// True when the area has zero width or zero height.
    pub fn is_empty(&self) -> bool {
        self.x_min >= self.x_max || self.y_min >= self.y_max
    }

    /// Positive-area overlap test. Symmetric; edge or corner contact is not
    /// an intersection.
    pub fn intersects(&self, other: &GeoArea) -> bool {
        let width = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let height = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        width > 0.0 && height > 0.0
    }

    /// Closed containment: points on the boundary are inside.
    pub fn contains_point(&self, p: Point) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }

    pub fn contains_area(&self, other: &GeoArea) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }
}

/// Free-function form of [`GeoArea::intersects`].
pub fn area_intersects(a: &GeoArea, b: &GeoArea) -> bool {
    a.intersects(b)
}

impl TryFrom<[f64; 4]> for GeoArea {
    type Error = GeoError;

    fn try_from([x_min, y_min, x_max, y_max]: [f64; 4]) -> Result<Self, Self::Error> {
        GeoArea::new(x_min, y_min, x_max, y_max)
    }
}

impl From<GeoArea> for [f64; 4] {
    fn from(a: GeoArea) -> Self {
        [a.x_min, a.y_min, a.x_max, a.y_max]
    }
}

impl fmt::Display for GeoArea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_full() {
            return f.write_str("<full plane>");
        }
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}
