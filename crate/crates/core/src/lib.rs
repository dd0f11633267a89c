//! Transcribes Go games from a video frame stream: locates and tracks the board grid,
//! detects stones, replays them under the rules and exports SGF.

pub mod detect;
pub mod engine;
pub mod frame;
pub mod game;
pub mod geometry;
pub mod grid_init;
pub mod grid_track;
pub mod hough;
pub mod source;
pub mod synth;

/// Scalar used by the vision pipeline.
pub type Real = f64;
/// Image-plane point in pixels.
pub type Point = geometry::Point2<Real>;
pub type Homography = geometry::Homography<Real>;
pub type PolarLine = geometry::PolarLine<Real>;
pub type LineFit = geometry::LineFit<Real>;
