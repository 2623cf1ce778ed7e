//! Three-disk footprints and spatio-temporal collision filtering.
//!
//! A `w x l` rectangle is covered by three equal disks centered at
//! `-l/3, 0, +l/3` along the body axis with radius `sqrt(w^2/4 + l^2/36)`:
//! each disk circumscribes one third of the rectangle. Two footprints collide
//! when any disk pair overlaps strictly.

use crate::frenet::Trajectory;
use crate::scalar::{lit, Scalar};
use arrayvec::ArrayVec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CollisionError {
    #[error("footprint dimensions must be positive, got {width} x {length}")]
    Dimensions { width: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk<T> {
    pub cx: T,
    pub cy: T,
    pub radius: T,
}

/// Body shape used for conservative checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyShape<T> {
    /// Rectangle of `width` x `length`, covered by three disks.
    Rectangle { width: T, length: T },
    /// Single disk (pedestrians).
    Disk { radius: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskSet<T> {
    disks: ArrayVec<Disk<T>, 3>,
    pub shape: BodyShape<T>,
    pub pose: Pose<T>,
}

/// Covering radius of the three-disk model.
pub fn covering_radius<T: Scalar>(width: T, length: T) -> T {
    (width * width / lit(4.0) + length * length / lit(36.0)).sqrt()
}

impl<T: Scalar> DiskSet<T> {
    pub fn disks(&self) -> &[Disk<T>] {
        &self.disks
    }

    pub fn new(shape: BodyShape<T>, pose: Pose<T>) -> Result<Self, CollisionError> {
        match shape {
            BodyShape::Rectangle { width, length } => disk_model(pose, width, length),
            BodyShape::Disk { radius } => {
                if !(radius > T::zero()) {
                    return Err(CollisionError::Dimensions {
                        width: radius.to_f64().unwrap_or(f64::NAN),
                        length: radius.to_f64().unwrap_or(f64::NAN),
                    });
                }
                let mut disks = ArrayVec::new();
                disks.push(Disk {
                    cx: pose.x,
                    cy: pose.y,
                    radius,
                });
                Ok(Self { disks, shape, pose })
            }
        }
    }
}

/// Three-disk model of a `width x length` rectangle at `pose`.
pub fn disk_model<T: Scalar>(pose: Pose<T>, width: T, length: T) -> Result<DiskSet<T>, CollisionError> {
    if !(width > T::zero() && length > T::zero()) {
        return Err(CollisionError::Dimensions {
            width: width.to_f64().unwrap_or(f64::NAN),
            length: length.to_f64().unwrap_or(f64::NAN),
        });
    }
    let radius = covering_radius(width, length);
    let (sin, cos) = pose.theta.sin_cos();
    let offset = length / lit(3.0);
    let mut disks = ArrayVec::new();
    for along in [T::zero(), offset, -offset] {
        disks.push(Disk {
            cx: pose.x + along * cos,
            cy: pose.y + along * sin,
            radius,
        });
    }
    Ok(DiskSet {
        disks,
        shape: BodyShape::Rectangle { width, length },
        pose,
    })
}

/// True iff some disk pair satisfies `|p_a - p_b| < R_a + R_b`.
pub fn pairwise_collides<T: Scalar>(a: &DiskSet<T>, b: &DiskSet<T>) -> bool {
    let mut tests = 0;
    collides_counted(a, b, &mut tests)
}

fn collides_counted<T: Scalar>(a: &DiskSet<T>, b: &DiskSet<T>, tests: &mut u64) -> bool {
    for da in &a.disks {
        for db in &b.disks {
            *tests += 1;
            let (dx, dy) = (da.cx - db.cx, da.cy - db.cy);
            let reach = da.radius + db.radius;
            if dx * dx + dy * dy < reach * reach {
                return true;
            }
        }
    }
    false
}

/// Smallest `|p_a - p_b| - (R_a + R_b)` over all disk pairs; negative when colliding.
pub fn clearance<T: Scalar>(a: &DiskSet<T>, b: &DiskSet<T>) -> T {
    let mut best = T::infinity();
    for da in &a.disks {
        for db in &b.disks {
            let gap = (da.cx - db.cx).hypot(da.cy - db.cy) - (da.radius + db.radius);
            best = best.min(gap);
        }
    }
    best
}

/// A predicted obstacle that can be posed at any time on the planning clock.
pub trait TimedObstacle<T: Scalar> {
    fn shape(&self) -> BodyShape<T>;
    /// Pose at `t`; past the end of the prediction the last pose is held.
    fn pose_at(&self, t: T) -> Pose<T>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckStats {
    pub pair_tests: u64,
}

/// Obstacle footprints pre-posed on a fixed time grid, shared by every
/// candidate of one planning tick.
#[derive(Debug, Clone)]
pub struct CollisionChecker<T> {
    ego_shape: BodyShape<T>,
    dt: T,
    /// `frames[k]` holds every obstacle's disks at `t = k * dt`.
    frames: Vec<Vec<DiskSet<T>>>,
}

impl<T: Scalar> CollisionChecker<T> {
    pub fn new<O: TimedObstacle<T>>(
        ego_shape: BodyShape<T>,
        obstacles: &[O],
        dt: T,
        horizon: T,
    ) -> Result<Self, CollisionError> {
        let steps = (horizon / dt + lit(1e-6)).floor().to_usize().unwrap_or(0);
        let mut frames = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = dt * lit(k as f64);
            let frame = obstacles
                .iter()
                .map(|o| DiskSet::new(o.shape(), o.pose_at(t)))
                .collect::<Result<Vec<_>, _>>()?;
            frames.push(frame);
        }
        Ok(Self {
            ego_shape,
            dt,
            frames,
        })
    }

    /// Obstacle frame `k`; past the prepared horizon the last frame is held.
    fn frame(&self, k: usize) -> Option<&[DiskSet<T>]> {
        self.frames.get(k).or_else(|| self.frames.last()).map(|f| f.as_slice())
    }

    /// Checks every trajectory sample against every obstacle at the same time.
    /// Samples off the checker's grid use the nearest prepared frame.
    pub fn is_free(&self, traj: &Trajectory<T>) -> bool {
        self.is_free_counted(traj).0
    }

    pub fn is_free_counted(&self, traj: &Trajectory<T>) -> (bool, CheckStats) {
        let mut stats = CheckStats::default();
        let aligned = (traj.dt - self.dt).abs() <= lit::<T>(1e-9) * self.dt;
        for (k, p) in traj.points.iter().enumerate() {
            let ego = match DiskSet::new(
                self.ego_shape,
                Pose {
                    x: p.x,
                    y: p.y,
                    theta: p.theta,
                },
            ) {
                Ok(e) => e,
                Err(_) => return (false, stats),
            };
            let idx = if aligned {
                k
            } else {
                (p.t / self.dt).round().to_usize().unwrap_or(0)
            };
            let Some(frame) = self.frame(idx) else {
                continue;
            };
            for obstacle in frame {
                if collides_counted(&ego, obstacle, &mut stats.pair_tests) {
                    return (false, stats);
                }
            }
        }
        (true, stats)
    }

    /// Keeps the collision-free members of `candidates`, preserving order.
    pub fn filter(&self, candidates: Vec<Trajectory<T>>) -> Vec<Trajectory<T>> {
        candidates.into_iter().filter(|c| self.is_free(c)).collect()
    }
}

/// Single-trajectory check; predictions are resampled on the trajectory's own grid.
pub fn trajectory_collision_free<T: Scalar, O: TimedObstacle<T>>(
    traj: &Trajectory<T>,
    obstacles: &[O],
    ego_shape: BodyShape<T>,
) -> Result<bool, CollisionError> {
    let horizon = traj.points.last().map(|p| p.t).unwrap_or(T::zero());
    let checker = CollisionChecker::new(ego_shape, obstacles, traj.dt, horizon)?;
    Ok(checker.is_free(traj))
}

/// Collision-free subset of `candidates`, original order preserved.
pub fn filter_collision_free<T: Scalar, O: TimedObstacle<T>>(
    candidates: Vec<Trajectory<T>>,
    obstacles: &[O],
    ego_shape: BodyShape<T>,
) -> Result<Vec<Trajectory<T>>, CollisionError> {
    if obstacles.is_empty() || candidates.is_empty() {
        return Ok(candidates);
    }
    let dt = candidates[0].dt;
    let horizon = candidates
        .iter()
        .filter_map(|c| c.points.last().map(|p| p.t))
        .fold(T::zero(), T::max);
    let checker = CollisionChecker::new(ego_shape, obstacles, dt, horizon)?;
    Ok(checker.filter(candidates))
}
