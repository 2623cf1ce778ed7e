//! Frenet-frame sampling motion planner for urban driving.
//!
//! The math modules (`polynomial`, `frenet`, `collision`) are generic over
//! the float type; everything above them runs on `f64`. The aliases below
//! name the `f64` instances.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod collision;
pub mod frenet;
pub mod localization;
pub mod map;
pub mod planner;
pub mod polynomial;
pub mod prediction;
pub mod scalar;

pub use scalar::Scalar;

pub type MotionPoly = polynomial::MotionPolynomial<f64>;
pub type Boundary = polynomial::BoundaryState<f64>;
pub type Kinematics = polynomial::Kinematics<f64>;
pub type ReferenceLine = frenet::ReferenceLine<f64>;
pub type FrenetState = frenet::FrenetState<f64>;
pub type CartesianState = frenet::CartesianState<f64>;
pub type Trajectory = frenet::Trajectory<f64>;
pub type TrajectoryPoint = frenet::TrajectoryPoint<f64>;
pub type Pose = collision::Pose<f64>;
pub type BodyShape = collision::BodyShape<f64>;
pub type DiskSet = collision::DiskSet<f64>;
pub type CollisionChecker = collision::CollisionChecker<f64>;
