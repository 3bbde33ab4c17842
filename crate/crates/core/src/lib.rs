//! Structure-aware SLAM back-end.
//!
//! Camera poses, 3D points, infinite planes and dual-quadric ellipsoids are
//! jointly estimated in a factor graph with reprojection, odometry, conic,
//! plane, point-plane, Manhattan and supporting (tangency) factors. A synthetic
//! scene simulator and trajectory-error metrics are included for evaluation.

pub mod geometry;
pub mod factors;
pub mod graph;
pub mod simulator;
pub mod eval;
