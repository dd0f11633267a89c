//! Planar projective geometry, generic over the scalar type.
//!
//! Orientation-only algorithms (hull, quadrilateral area) need nothing beyond ring
//! arithmetic and ordering, so they run on integers and exact rationals as well as on
//! floats. Anything that divides or takes roots asks for [`Real`].

mod homography;
mod hull;
mod lattice;
mod segments;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use homography::{weighted_mean_homography, Homography};
pub use hull::{convex_hull, max_area_quadrilateral, max_area_quadrilateral_indices, polygon_area2};
pub use lattice::{rectify, rectify_with, warp, GridModel, LatticePoint, RectLayout, BOARD_SIZES};
pub use segments::{outer_line_regression, rotation_from_segments, FitStatus, LineFit, PolarLine};

/// Ring scalar: enough for orientation tests and doubled areas.
pub trait Scalar: Num + Copy + PartialOrd + Debug {}
impl<T: Num + Copy + PartialOrd + Debug> Scalar for T {}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits the scalar type")
    }
}
impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("point maps to infinity")]
    AtInfinity,
    #[error("need at least {needed} vertices, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("no lattice-adjacent pair among the centres")]
    NoAdjacentPairs,
    #[error("only {0} pixels in the regression band")]
    InsufficientPixels(usize),
    #[error("singular system")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T> Point2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }
}

impl<T: Real> Point2<T> {
    pub fn distance(self, o: Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    /// Rotation by `degrees` about `pivot` (x toward y).
    pub fn rotated_about(self, pivot: Self, degrees: T) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let d = self.sub(pivot);
        Self::new(pivot.x + c * d.x - s * d.y, pivot.y + s * d.x + c * d.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle `oab` (positive when counterclockwise in a y-up frame).
#[inline]
pub fn orient2<T: Scalar>(o: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    a.sub(o).cross(b.sub(o))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>, GeometryError> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::min_positive_value());
    let tiny = scale * T::epsilon() * T::lit(16.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() <= tiny {
            return Err(GeometryError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - f * v;
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}
