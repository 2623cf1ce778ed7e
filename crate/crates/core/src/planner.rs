//! Candidate generation per driving mode, feasibility filtering and
//! minimum-cost selection.
//!
//! Lateral candidates are quintics to offsets `d_j` with zero terminal
//! velocity and acceleration. Longitudinal candidates depend on the mode:
//! stopping, following and merging use position-constrained quintics,
//! velocity keeping uses quartics with a free terminal position.

use crate::collision::{BodyShape, CollisionChecker, CollisionError, TimedObstacle};
use crate::frenet::{FrenetState, ReferenceLine, Trajectory};
use crate::polynomial::{BoundaryState, MotionPolynomial, PolyError};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

type Poly = MotionPolynomial<f64>;
type State = BoundaryState<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("stop target {target} m lies behind the vehicle at {current} m")]
    TargetBehind { target: f64, current: f64 },
    #[error("desired speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stopping,
    Following,
    Merging,
    VelocityKeeping,
    Lateral,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stopping => "stopping",
            Mode::Following => "following",
            Mode::Merging => "merging",
            Mode::VelocityKeeping => "velocity_keeping",
            Mode::Lateral => "lateral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Terminal position, velocity and acceleration.
    Position { pos: f64, vel: f64, acc: f64 },
    /// Terminal velocity and acceleration; position free.
    Velocity { vel: f64, acc: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalCondition {
    pub target: Target,
    pub horizon: f64,
    pub mode: Mode,
}

/// One sampled 1-D profile with its per-axis cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub terminal: TerminalCondition,
    pub poly: Poly,
    pub cost: f64,
    /// False when the mode rejects the whole family (merging gap too small).
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub k_jerk: f64,
    pub k_time: f64,
    pub k_deviation: f64,
    pub k_lat: f64,
    pub k_lon: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            k_jerk: 0.1,
            k_time: 0.1,
            k_deviation: 1.0,
            k_lat: 1.0,
            k_lon: 1.0,
        }
    }
}

impl CostWeights {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            k_jerk: self.k_jerk * c,
            k_time: self.k_time * c,
            k_deviation: self.k_deviation * c,
            k_lat: self.k_lat * c,
            k_lon: self.k_lon * c,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let all = [self.k_jerk, self.k_time, self.k_deviation, self.k_lat, self.k_lon];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PlanError::Config("cost weights must be finite and >= 0".into()));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(PlanError::Config("cost weights are all zero".into()));
        }
        Ok(())
    }

    /// `k_j J + k_t T + k_s deviation^2`
    pub fn axis_cost(&self, jerk_integral: f64, horizon: f64, deviation: f64) -> f64 {
        self.k_jerk * jerk_integral + self.k_time * horizon + self.k_deviation * deviation * deviation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingGrid {
    /// Lateral offset step and count per side.
    pub delta_d: f64,
    pub n_d: u32,
    /// Horizon step and range.
    pub delta_t: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Terminal speed step and count per side.
    pub delta_v: f64,
    pub n_v: u32,
    /// Stop-position step and count.
    pub delta_s: f64,
    pub n_s: u32,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self {
            delta_d: 1.0,
            n_d: 3,
            delta_t: 0.2,
            t_min: 2.0,
            t_max: 5.0,
            delta_v: 1.38,
            n_v: 2,
            delta_s: 2.0,
            n_s: 3,
        }
    }
}

impl SamplingGrid {
    pub fn validate(&self) -> Result<(), PlanError> {
        let deltas = [self.delta_d, self.delta_t, self.delta_v, self.delta_s];
        if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(PlanError::Config("grid steps must be positive".into()));
        }
        if !(self.t_min >= 0.5 && self.t_max <= 10.0 && self.t_min <= self.t_max) {
            return Err(PlanError::Config(format!(
                "horizon range [{}, {}] must lie within [0.5, 10]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// `T_min, T_min + dT, ...` up to `T_max`.
    pub fn horizons(&self) -> Vec<f64> {
        let count = ((self.t_max - self.t_min) / self.delta_t + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| self.t_min + i as f64 * self.delta_t)
            .collect()
    }

    /// Lateral targets `k * delta_d` for `k = -n_d ..= n_d`.
    pub fn lateral_offsets(&self) -> Vec<f64> {
        let n = self.n_d as i64;
        (-n..=n).map(|k| k as f64 * self.delta_d).collect()
    }

    fn speed_offsets(&self) -> Vec<f64> {
        let n = self.n_v as i64;
        (-n..=n).map(|k| k as f64 * self.delta_v).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortLimits {
    pub jerk_max: f64,
    pub accel_max: f64,
    pub speed_max: f64,
    pub curvature_max: f64,
}

impl Default for ComfortLimits {
    fn default() -> Self {
        Self {
            jerk_max: 10.0,
            accel_max: 5.0,
            speed_max: 13.89,
            curvature_max: 0.3,
        }
    }
}

/// Standstill gap `D0` and time gap `tau` of the following law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowingParams {
    pub standstill_gap: f64,
    pub time_gap: f64,
}

impl Default for FollowingParams {
    fn default() -> Self {
        Self {
            standstill_gap: 5.0,
            time_gap: 1.0,
        }
    }
}

/// How lateral and longitudinal candidates are paired into trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Only profiles sharing the same horizon are combined.
    #[default]
    SameHorizon,
    /// Every lateral profile with every longitudinal profile.
    FullProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub weights: CostWeights,
    pub grid: SamplingGrid,
    pub limits: ComfortLimits,
    pub following: FollowingParams,
    /// Trajectory sampling step.
    pub dt: f64,
    pub pairing: Pairing,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            grid: SamplingGrid::default(),
            limits: ComfortLimits::default(),
            following: FollowingParams::default(),
            dt: 0.1,
            pairing: Pairing::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.weights.validate()?;
        self.grid.validate()?;
        let l = &self.limits;
        if [l.jerk_max, l.accel_max, l.speed_max, l.curvature_max]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(PlanError::Config("comfort limits must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(PlanError::Config("trajectory dt must be positive".into()));
        }
        Ok(())
    }
}

/// Predicted longitudinal state of another vehicle along the ego reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LonPrediction {
    times: Vec<f64>,
    states: Vec<State>,
}

impl LonPrediction {
    /// From samples `(t, s, v, a)` with increasing `t`.
    pub fn from_samples(samples: Vec<(f64, State)>) -> Self {
        let (times, states) = samples.into_iter().unzip();
        Self { times, states }
    }

    /// Constant acceleration from `now`, never reversing.
    pub fn constant_acceleration(now: State) -> Self {
        Self {
            times: vec![0.0],
            states: vec![now],
        }
    }

    /// Predicted `(s, v, a)` at `t`; past the last sample the vehicle keeps
    /// accelerating at its last rate until it stops.
    pub fn at(&self, t: f64) -> State {
        let n = self.times.len();
        if n == 0 {
            return State::new(0.0, 0.0, 0.0);
        }
        let last_t = self.times[n - 1];
        if t >= last_t {
            return extrapolate(self.states[n - 1], t - last_t);
        }
        if t <= self.times[0] {
            return self.states[0];
        }
        let i = self.times.partition_point(|x| *x <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let (p, q) = (self.states[i], self.states[i + 1]);
        State::new(
            p.pos + (q.pos - p.pos) * w,
            p.vel + (q.vel - p.vel) * w,
            p.acc + (q.acc - p.acc) * w,
        )
    }
}

fn extrapolate(s: State, dt: f64) -> State {
    if s.acc < 0.0 && s.vel + s.acc * dt < 0.0 {
        let stop = -s.vel / s.acc;
        return State::new(s.pos + s.vel * stop / 2.0, 0.0, 0.0);
    }
    State::new(
        s.pos + s.vel * dt + 0.5 * s.acc * dt * dt,
        s.vel + s.acc * dt,
        s.acc,
    )
}

pub fn gen_lateral(start: State, grid: &SamplingGrid, weights: &CostWeights) -> Result<Vec<Candidate>, PlanError> {
    let mut offsets = grid.lateral_offsets();
    // At lateral rest off the grid, also offer holding the current offset;
    // otherwise a vehicle at standstill has no candidate it can drive.
    let at_rest = start.vel.abs() <= 1e-9 && start.acc.abs() <= 1e-9;
    if at_rest && offsets.iter().all(|d| (d - start.pos).abs() > 1e-9) {
        offsets.push(start.pos);
    }
    let mut out = Vec::new();
    for horizon in grid.horizons() {
        for &d in &offsets {
            let poly = Poly::quintic(start, State::new(d, 0.0, 0.0), horizon)?;
            out.push(Candidate {
                terminal: TerminalCondition {
                    target: Target::Position { pos: d, vel: 0.0, acc: 0.0 },
                    horizon,
                    mode: Mode::Lateral,
                },
                cost: weights.axis_cost(poly.jerk_integral(), horizon, d),
                poly,
                feasible: true,
            });
        }
    }
    Ok(out)
}

/// Stop targets `s_d - k * delta_s` for `k = 0 .. n_s`.
pub fn gen_stopping(
    start: State,
    stop_at: f64,
    grid: &SamplingGrid,
    weights: &CostWeights,
) -> Result<Vec<Candidate>, PlanError> {
    if stop_at < start.pos {
        return Err(PlanError::TargetBehind {
            target: stop_at,
            current: start.pos,
        });
    }
    let mut out = Vec::new();
    for horizon in grid.horizons() {
        for k in 0..grid.n_s {
            let target = stop_at - k as f64 * grid.delta_s;
            let poly = Poly::quintic(start, State::new(target, 0.0, 0.0), horizon)?;
            out.push(Candidate {
                terminal: TerminalCondition {
                    target: Target::Position { pos: target, vel: 0.0, acc: 0.0 },
                    horizon,
                    mode: Mode::Stopping,
                },
                cost: weights.axis_cost(poly.jerk_integral(), horizon, stop_at - target),
                poly,
                feasible: true,
            });
        }
    }
    Ok(out)
}

/// Terminal state that keeps `D0 + tau * v` behind the predicted lead state,
/// with the terminal speed offset by `speed_offset`.
pub fn following_target(lead: State, params: &FollowingParams, speed_offset: f64) -> State {
    State::new(
        lead.pos - (params.standstill_gap + params.time_gap * lead.vel),
        lead.vel + speed_offset - params.time_gap * lead.acc,
        lead.acc,
    )
}

/// `lead(T)` is the lead vehicle's predicted longitudinal state at each horizon.
pub fn gen_following<F>(
    start: State,
    lead: F,
    params: &FollowingParams,
    grid: &SamplingGrid,
    weights: &CostWeights,
) -> Result<Vec<Candidate>, PlanError>
where
    F: Fn(f64) -> State,
{
    let mut out = Vec::new();
    for horizon in grid.horizons() {
        let predicted = lead(horizon);
        let anchor = following_target(predicted, params, 0.0);
        if anchor.pos < start.pos {
            continue;
        }
        for offset in grid.speed_offsets() {
            let target = following_target(predicted, params, offset);
            if target.vel < 0.0 {
                continue;
            }
            let poly = Poly::quintic(start, target, horizon)?;
            out.push(Candidate {
                terminal: TerminalCondition {
                    target: Target::Position {
                        pos: target.pos,
                        vel: target.vel,
                        acc: target.acc,
                    },
                    horizon,
                    mode: Mode::Following,
                },
                cost: weights.axis_cost(poly.jerk_integral(), horizon, anchor.pos - target.pos),
                poly,
                feasible: true,
            });
        }
    }
    Ok(out)
}

/// Midpoint between the predicted preceding and following vehicles, at
/// their mean speed and acceleration.
pub fn merging_target(preceding: State, following: State) -> State {
    State::new(
        0.5 * (preceding.pos + following.pos),
        0.5 * (preceding.vel + following.vel),
        0.5 * (preceding.acc + following.acc),
    )
}

pub fn gen_merging<P, F>(
    start: State,
    preceding: P,
    following: F,
    vehicle_length: f64,
    standstill_gap: f64,
    grid: &SamplingGrid,
    weights: &CostWeights,
) -> Result<Vec<Candidate>, PlanError>
where
    P: Fn(f64) -> State,
    F: Fn(f64) -> State,
{
    let mut out = Vec::new();
    for horizon in grid.horizons() {
        let (pv, fv) = (preceding(horizon), following(horizon));
        let feasible = pv.pos - fv.pos >= vehicle_length + 2.0 * standstill_gap;
        let target = merging_target(pv, fv);
        let poly = Poly::quintic(start, target, horizon)?;
        out.push(Candidate {
            terminal: TerminalCondition {
                target: Target::Position {
                    pos: target.pos,
                    vel: target.vel,
                    acc: target.acc,
                },
                horizon,
                mode: Mode::Merging,
            },
            cost: weights.axis_cost(poly.jerk_integral(), horizon, 0.0),
            poly,
            feasible,
        });
    }
    Ok(out)
}

/// Quartic profiles to `v_des + k * delta_v`; negative targets are skipped.
pub fn gen_velocity_keeping(
    start: State,
    target_speed: f64,
    grid: &SamplingGrid,
    weights: &CostWeights,
) -> Result<Vec<Candidate>, PlanError> {
    if !(target_speed >= 0.0) {
        return Err(PlanError::NegativeSpeed(target_speed));
    }
    let mut out = Vec::new();
    for horizon in grid.horizons() {
        for offset in grid.speed_offsets() {
            let vel = target_speed + offset;
            if vel < 0.0 {
                continue;
            }
            let poly = Poly::quartic(start, vel, 0.0, horizon)?;
            out.push(Candidate {
                terminal: TerminalCondition {
                    target: Target::Velocity { vel, acc: 0.0 },
                    horizon,
                    mode: Mode::VelocityKeeping,
                },
                cost: weights.axis_cost(poly.jerk_integral(), horizon, target_speed - vel),
                poly,
                feasible: true,
            });
        }
    }
    Ok(out)
}

/// A realized lateral x longitudinal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub trajectory: Trajectory<f64>,
    pub lateral: TerminalCondition,
    pub longitudinal: TerminalCondition,
    /// Generation index; the final tie-break.
    pub order: usize,
}

impl CandidateTrajectory {
    pub fn cost(&self) -> f64 {
        self.trajectory.cost
    }

    pub fn lateral_target(&self) -> f64 {
        match self.lateral.target {
            Target::Position { pos, .. } => pos,
            Target::Velocity { .. } => 0.0,
        }
    }
}

fn within_limits(traj: &Trajectory<f64>, limits: &ComfortLimits) -> bool {
    const EPS: f64 = 1e-9;
    traj.points.iter().all(|p| {
        p.v <= limits.speed_max + EPS
            && p.a.abs() <= limits.accel_max + EPS
            && p.kappa.abs() <= limits.curvature_max + EPS
    })
}

fn realize_pair(
    lat: &Candidate,
    lon: &Candidate,
    reference: &ReferenceLine<f64>,
    limits: &ComfortLimits,
    weights: &CostWeights,
    dt: f64,
    order: usize,
) -> Option<CandidateTrajectory> {
    if !lat.feasible || !lon.feasible {
        return None;
    }
    if lat.poly.max_abs_jerk() > limits.jerk_max || lon.poly.max_abs_jerk() > limits.jerk_max {
        return None;
    }
    let mut trajectory = reference.realize(&lat.poly, &lon.poly, dt).ok()?;
    if !trajectory.is_feasible() || !within_limits(&trajectory, limits) {
        return None;
    }
    trajectory.cost = weights.k_lat * lat.cost + weights.k_lon * lon.cost;
    Some(CandidateTrajectory {
        trajectory,
        lateral: lat.terminal,
        longitudinal: lon.terminal,
        order,
    })
}

/// Cartesian product of lateral and longitudinal sets, realized and
/// filtered by the comfort and kinematic limits. An empty result is valid.
pub fn assemble_candidates(
    lateral: &[Candidate],
    longitudinal: &[Candidate],
    reference: &ReferenceLine<f64>,
    limits: &ComfortLimits,
    weights: &CostWeights,
    dt: f64,
) -> Vec<CandidateTrajectory> {
    let mut out = Vec::new();
    let mut order = 0;
    for lat in lateral {
        for lon in longitudinal {
            if let Some(c) = realize_pair(lat, lon, reference, limits, weights, dt, order) {
                out.push(c);
            }
            order += 1;
        }
    }
    out
}

/// Like [`assemble_candidates`] but only pairs profiles with equal horizons.
pub fn assemble_same_horizon(
    lateral: &[Candidate],
    longitudinal: &[Candidate],
    reference: &ReferenceLine<f64>,
    limits: &ComfortLimits,
    weights: &CostWeights,
    dt: f64,
) -> Vec<CandidateTrajectory> {
    let mut out = Vec::new();
    let mut order = 0;
    for lat in lateral {
        for lon in longitudinal {
            if (lat.terminal.horizon - lon.terminal.horizon).abs() > 1e-9 {
                continue;
            }
            if let Some(c) = realize_pair(lat, lon, reference, limits, weights, dt, order) {
                out.push(c);
            }
            order += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no feasible collision-free trajectory")]
pub struct NoFeasibleTrajectory;

fn rank(a: &CandidateTrajectory, b: &CandidateTrajectory) -> Ordering {
    a.cost()
        .total_cmp(&b.cost())
        .then_with(|| b.trajectory.horizon().total_cmp(&a.trajectory.horizon()))
        .then_with(|| a.lateral_target().abs().total_cmp(&b.lateral_target().abs()))
        .then_with(|| a.order.cmp(&b.order))
}

/// Minimum total cost; ties go to the longer horizon, then the smaller
/// `|d_j|`, then the earlier generated candidate.
pub fn select_optimal(candidates: &[CandidateTrajectory]) -> Result<&CandidateTrajectory, NoFeasibleTrajectory> {
    candidates.iter().min_by(|a, b| rank(a, b)).ok_or(NoFeasibleTrajectory)
}

/// Mode-specific inputs of one planning tick.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeInputs {
    Stopping { stop_at: f64 },
    Following { lead: LonPrediction },
    Merging { preceding: LonPrediction, following: LonPrediction },
    VelocityKeeping { target_speed: f64 },
}

impl ModeInputs {
    pub fn mode(&self) -> Mode {
        match self {
            ModeInputs::Stopping { .. } => Mode::Stopping,
            ModeInputs::Following { .. } => Mode::Following,
            ModeInputs::Merging { .. } => Mode::Merging,
            ModeInputs::VelocityKeeping { .. } => Mode::VelocityKeeping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlanStats {
    /// Longitudinal x lateral profiles generated.
    pub generated: usize,
    /// Feasible set size (after comfort and kinematic filtering).
    pub candidates: usize,
    /// Collision-free subset size.
    pub collision_free: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub selected: CandidateTrajectory,
    pub mode: Mode,
    pub stats: PlanStats,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TickError {
    #[error("{0}")]
    NoFeasible(NoFeasibleTrajectory, PlanStats),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Default)]
pub struct Planner {
    pub config: PlannerConfig,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Result<Self, PlanError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn longitudinal_candidates(
        &self,
        ego: &FrenetState<f64>,
        inputs: &ModeInputs,
        ego_length: f64,
    ) -> Result<Vec<Candidate>, PlanError> {
        let start = State::new(ego.s, ego.s_dot, ego.s_ddot);
        let cfg = &self.config;
        match inputs {
            ModeInputs::Stopping { stop_at } => gen_stopping(start, *stop_at, &cfg.grid, &cfg.weights),
            ModeInputs::Following { lead } => {
                gen_following(start, |t| lead.at(t), &cfg.following, &cfg.grid, &cfg.weights)
            }
            ModeInputs::Merging { preceding, following } => gen_merging(
                start,
                |t| preceding.at(t),
                |t| following.at(t),
                ego_length,
                cfg.following.standstill_gap,
                &cfg.grid,
                &cfg.weights,
            ),
            ModeInputs::VelocityKeeping { target_speed } => {
                gen_velocity_keeping(start, *target_speed, &cfg.grid, &cfg.weights)
            }
        }
    }

    /// Generates, filters and selects one trajectory. Deterministic for
    /// identical inputs.
    pub fn plan_tick<O: TimedObstacle<f64>>(
        &self,
        ego: &FrenetState<f64>,
        inputs: &ModeInputs,
        reference: &ReferenceLine<f64>,
        predictions: &[O],
        ego_shape: BodyShape<f64>,
    ) -> Result<Plan, TickError> {
        let cfg = &self.config;
        let ego_length = match ego_shape {
            BodyShape::Rectangle { length, .. } => length,
            BodyShape::Disk { radius } => 2.0 * radius,
        };
        let lateral = gen_lateral(State::new(ego.d, ego.d_dot, ego.d_ddot), &cfg.grid, &cfg.weights)?;
        let longitudinal = self.longitudinal_candidates(ego, inputs, ego_length)?;
        let generated = match cfg.pairing {
            Pairing::FullProduct => lateral.len() * longitudinal.len(),
            Pairing::SameHorizon => lateral
                .iter()
                .map(|l| {
                    longitudinal
                        .iter()
                        .filter(|c| (c.terminal.horizon - l.terminal.horizon).abs() <= 1e-9)
                        .count()
                })
                .sum(),
        };
        let feasible = match cfg.pairing {
            Pairing::FullProduct => {
                assemble_candidates(&lateral, &longitudinal, reference, &cfg.limits, &cfg.weights, cfg.dt)
            }
            Pairing::SameHorizon => {
                assemble_same_horizon(&lateral, &longitudinal, reference, &cfg.limits, &cfg.weights, cfg.dt)
            }
        };
        let candidates = feasible.len();
        let free: Vec<CandidateTrajectory> = if predictions.is_empty() {
            feasible
        } else {
            let horizon = feasible
                .iter()
                .filter_map(|c| c.trajectory.points.last().map(|p| p.t))
                .fold(0.0, f64::max);
            let checker = CollisionChecker::new(ego_shape, predictions, cfg.dt, horizon).map_err(PlanError::from)?;
            feasible
                .into_iter()
                .filter(|c| checker.is_free(&c.trajectory))
                .collect()
        };
        let stats = PlanStats {
            generated,
            candidates,
            collision_free: free.len(),
        };
        match select_optimal(&free) {
            Ok(best) => Ok(Plan {
                selected: best.clone(),
                mode: inputs.mode(),
                stats,
            }),
            Err(e) => Err(TickError::NoFeasible(e, stats)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_horizon(t: f64) -> SamplingGrid {
        SamplingGrid {
            t_min: t,
            t_max: t,
            ..SamplingGrid::default()
        }
    }

    #[test]
    fn default_grid_horizons() {
        let h = SamplingGrid::default().horizons();
        assert_eq!(h.len(), 16);
        assert_abs_diff_eq!(h[0], 2.0);
        assert_abs_diff_eq!(*h.last().unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(SamplingGrid::default().validate().is_ok());
        let bad = SamplingGrid {
            t_min: 0.2,
            ..SamplingGrid::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingGrid {
            delta_v: 0.0,
            ..SamplingGrid::default()
        };
        assert!(bad.validate().is_err());
        assert!(CostWeights {
            k_jerk: 0.0,
            k_time: 0.0,
            k_deviation: 0.0,
            k_lat: 0.0,
            k_lon: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lateral_single_zero_candidate() {
        let grid = SamplingGrid {
            n_d: 0,
            ..single_horizon(2.0)
        };
        let w = CostWeights::default();
        let c = gen_lateral(State::new(0.0, 0.0, 0.0), &grid, &w).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].poly.coefficients().iter().all(|x| *x == 0.0));
        assert_abs_diff_eq!(c[0].cost, w.k_time * 2.0);
    }

    #[test]
    fn lateral_hold_only_at_rest_off_grid() {
        let grid = single_horizon(2.0);
        let w = CostWeights::default();
        let n = grid.lateral_offsets().len();
        let held = gen_lateral(State::new(0.3, 0.0, 0.0), &grid, &w).unwrap();
        assert_eq!(held.len(), n + 1);
        let hold = held.last().unwrap();
        assert!(hold.poly.coefficients()[1..].iter().all(|x| *x == 0.0));
        assert_eq!(gen_lateral(State::new(0.3, 0.1, 0.0), &grid, &w).unwrap().len(), n);
        assert_eq!(gen_lateral(State::new(1.0, 0.0, 0.0), &grid, &w).unwrap().len(), n);
    }

    #[test]
    fn lateral_unit_shift_costs_min_jerk() {
        let grid = SamplingGrid {
            delta_d: 1.0,
            n_d: 2,
            ..single_horizon(1.0)
        };
        let w = CostWeights {
            k_jerk: 1.0,
            k_time: 0.0,
            k_deviation: 0.0,
            ..CostWeights::default()
        };
        let c = gen_lateral(State::new(0.0, 0.0, 0.0), &grid, &w).unwrap();
        assert_eq!(c.len(), 5);
        let unit = c
            .iter()
            .find(|c| matches!(c.terminal.target, Target::Position { pos, .. } if pos == 1.0))
            .unwrap();
        assert_abs_diff_eq!(unit.cost, 720.0, epsilon = 1e-9);
        // Symmetric start: +d and -d cost the same.
        for k in 1..=2 {
            let find = |d: f64| {
                c.iter()
                    .find(|c| matches!(c.terminal.target, Target::Position { pos, .. } if pos == d))
                    .unwrap()
                    .cost
            };
            assert_abs_diff_eq!(find(k as f64), find(-(k as f64)), epsilon = 1e-9);
        }
    }

    #[test]
    fn stopping_targets() {
        let grid = SamplingGrid {
            delta_s: 2.0,
            n_s: 2,
            ..single_horizon(5.0)
        };
        let w = CostWeights {
            k_jerk: 0.0,
            k_time: 0.0,
            k_deviation: 1.0,
            ..CostWeights::default()
        };
        let c = gen_stopping(State::new(0.0, 10.0, 0.0), 100.0, &grid, &w).unwrap();
        let targets: Vec<f64> = c
            .iter()
            .map(|c| match c.terminal.target {
                Target::Position { pos, vel, acc } => {
                    assert_eq!((vel, acc), (0.0, 0.0));
                    pos
                }
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(targets, vec![100.0, 98.0]);
        assert_abs_diff_eq!(c[0].cost, 0.0);
        assert_abs_diff_eq!(c[1].cost, 4.0);
    }

    #[test]
    fn stopping_polynomial_hits_target() {
        let grid = SamplingGrid {
            n_s: 1,
            ..single_horizon(5.0)
        };
        let c = gen_stopping(State::new(0.0, 10.0, 0.0), 50.0, &grid, &CostWeights::default()).unwrap();
        let end = c[0].poly.eval(5.0).unwrap();
        assert_abs_diff_eq!(end.pos, 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(end.vel, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(end.acc, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn stopping_behind_is_an_error() {
        let err = gen_stopping(
            State::new(10.0, 1.0, 0.0),
            5.0,
            &SamplingGrid::default(),
            &CostWeights::default(),
        );
        assert!(matches!(err, Err(PlanError::TargetBehind { .. })));
    }

    #[test]
    fn following_substitution() {
        let p = FollowingParams {
            standstill_gap: 5.0,
            time_gap: 1.0,
        };
        let t = following_target(State::new(50.0, 10.0, 0.0), &p, 0.0);
        assert_eq!((t.pos, t.vel, t.acc), (35.0, 10.0, 0.0));
        let t = following_target(State::new(50.0, 10.0, 2.0), &p, 0.0);
        assert_eq!((t.pos, t.vel, t.acc), (35.0, 8.0, 2.0));
    }

    #[test]
    fn steady_following_has_no_jerk() {
        let p = FollowingParams {
            standstill_gap: 5.0,
            time_gap: 1.0,
        };
        // Lead at 10 m/s starting 15 m ahead: the ego already sits at D0 + tau v.
        let lead = LonPrediction::constant_acceleration(State::new(15.0, 10.0, 0.0));
        let c = gen_following(
            State::new(0.0, 10.0, 0.0),
            |t| lead.at(t),
            &p,
            &SamplingGrid::default(),
            &CostWeights::default(),
        )
        .unwrap();
        let zero: Vec<_> = c
            .iter()
            .filter(|c| matches!(c.terminal.target, Target::Position { vel, .. } if vel == 10.0))
            .collect();
        assert_eq!(zero.len(), 16);
        for c in zero {
            assert!(c.poly.jerk_integral() < 1e-6);
        }
    }

    #[test]
    fn following_skips_when_lead_too_close() {
        let lead = LonPrediction::constant_acceleration(State::new(3.0, 0.0, 0.0));
        let c = gen_following(
            State::new(0.0, 0.0, 0.0),
            |t| lead.at(t),
            &FollowingParams::default(),
            &SamplingGrid::default(),
            &CostWeights::default(),
        )
        .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn merging_midpoint_and_gap() {
        let t = merging_target(State::new(60.0, 8.0, 0.0), State::new(40.0, 8.0, 0.0));
        assert_eq!((t.pos, t.vel), (50.0, 8.0));
        let grid = single_horizon(3.0);
        let c = gen_merging(
            State::new(0.0, 8.0, 0.0),
            |_| State::new(46.0, 8.0, 0.0),
            |_| State::new(40.0, 8.0, 0.0),
            4.5,
            5.0,
            &grid,
            &CostWeights::default(),
        )
        .unwrap();
        assert!(c.iter().all(|c| !c.feasible));
        let c = gen_merging(
            State::new(0.0, 8.0, 0.0),
            |_| State::new(60.0, 8.0, 0.0),
            |_| State::new(40.0, 8.0, 0.0),
            4.5,
            5.0,
            &grid,
            &CostWeights::default(),
        )
        .unwrap();
        assert!(c.iter().all(|c| c.feasible));
    }

    #[test]
    fn velocity_keeping_targets() {
        let grid = SamplingGrid {
            n_v: 1,
            delta_v: 1.38,
            ..single_horizon(3.0)
        };
        let w = CostWeights::default();
        let c = gen_velocity_keeping(State::new(0.0, 10.0, 0.0), 10.0, &grid, &w).unwrap();
        let vels: Vec<f64> = c
            .iter()
            .map(|c| match c.terminal.target {
                Target::Velocity { vel, .. } => vel,
                _ => unreachable!(),
            })
            .collect();
        assert_abs_diff_eq!(vels[0], 8.62, epsilon = 1e-12);
        assert_abs_diff_eq!(vels[1], 10.0);
        assert_abs_diff_eq!(vels[2], 11.38, epsilon = 1e-12);
        let dev = w.k_deviation * 1.9044;
        // Zero offset from a matched start is a straight line: J = 0.
        assert_abs_diff_eq!(c[1].cost, w.k_time * 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0].cost - c[0].poly.jerk_integral() * w.k_jerk - w.k_time * 3.0, dev, epsilon = 1e-9);
        assert_abs_diff_eq!(c[2].cost - c[2].poly.jerk_integral() * w.k_jerk - w.k_time * 3.0, dev, epsilon = 1e-9);

        let c = gen_velocity_keeping(State::new(0.0, 1.0, 0.0), 1.0, &grid, &w).unwrap();
        assert_eq!(c.len(), 2, "negative target skipped");
        assert!(gen_velocity_keeping(State::new(0.0, 1.0, 0.0), -1.0, &grid, &w).is_err());
    }

    fn cand(cost: f64, horizon: f64, d: f64, order: usize) -> CandidateTrajectory {
        let lat = MotionPolynomial::quintic(State::new(0.0, 0.0, 0.0), State::new(d, 0.0, 0.0), horizon).unwrap();
        let lon = MotionPolynomial::quartic(State::new(0.0, 1.0, 0.0), 1.0, 0.0, horizon).unwrap();
        let tc = |mode| TerminalCondition {
            target: Target::Position { pos: d, vel: 0.0, acc: 0.0 },
            horizon,
            mode,
        };
        CandidateTrajectory {
            trajectory: Trajectory {
                points: vec![],
                dt: 0.1,
                lateral: lat,
                longitudinal: lon,
                cost,
                infeasibility: None,
            },
            lateral: tc(Mode::Lateral),
            longitudinal: tc(Mode::VelocityKeeping),
            order,
        }
    }

    #[test]
    fn select_by_cost_then_ties() {
        let c = vec![cand(3.0, 2.0, 0.0, 0), cand(1.0, 2.0, 0.0, 1), cand(2.0, 2.0, 0.0, 2)];
        assert_eq!(select_optimal(&c).unwrap().order, 1);
        let c = vec![cand(1.0, 1.0, 0.0, 0), cand(1.0, 3.0, 0.0, 1), cand(1.0, 2.0, 0.0, 2)];
        assert_eq!(select_optimal(&c).unwrap().order, 1);
        let c = vec![cand(1.0, 2.0, -2.0, 0), cand(1.0, 2.0, 1.0, 1), cand(1.0, 2.0, 1.0, 2)];
        assert_eq!(select_optimal(&c).unwrap().order, 1);
        assert_eq!(select_optimal(&[]), Err(NoFeasibleTrajectory));
    }

    #[test]
    fn lon_prediction_stops_without_reversing() {
        let p = LonPrediction::constant_acceleration(State::new(0.0, 5.0, -2.0));
        let s = p.at(4.0);
        assert_abs_diff_eq!(s.pos, 6.25);
        assert_eq!(s.vel, 0.0);
        let p = LonPrediction::from_samples(vec![
            (0.0, State::new(0.0, 1.0, 0.0)),
            (1.0, State::new(1.0, 1.0, 0.0)),
        ]);
        assert_abs_diff_eq!(p.at(0.5).pos, 0.5);
        assert_abs_diff_eq!(p.at(3.0).pos, 3.0);
    }

    struct Parked(f64, f64);

    impl TimedObstacle<f64> for Parked {
        fn shape(&self) -> BodyShape<f64> {
            BodyShape::Rectangle { width: 2.0, length: 4.5 }
        }
        fn pose_at(&self, _t: f64) -> crate::collision::Pose<f64> {
            crate::collision::Pose { x: self.0, y: self.1, theta: 0.0 }
        }
    }

    fn straight() -> ReferenceLine<f64> {
        ReferenceLine::build(&[(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)], 1.0).unwrap()
    }

    #[test]
    fn plan_tick_open_road_keeps_lane() {
        let planner = Planner::default();
        let ego = FrenetState { s: 0.0, s_dot: 10.0, ..Default::default() };
        let plan = planner
            .plan_tick(
                &ego,
                &ModeInputs::VelocityKeeping { target_speed: 10.0 },
                &straight(),
                &[] as &[Parked],
                BodyShape::Rectangle { width: 2.0, length: 4.5 },
            )
            .unwrap();
        assert_eq!(plan.stats.generated, 7 * 5 * 16);
        assert_eq!(plan.stats.candidates, plan.stats.collision_free);
        assert_eq!(plan.selected.lateral_target(), 0.0);
        assert!(matches!(plan.selected.longitudinal.target, Target::Velocity { vel, .. } if vel == 10.0));
        assert_eq!(plan.mode, Mode::VelocityKeeping);
    }

    #[test]
    fn plan_tick_swerves_around_parked_car() {
        let planner = Planner::default();
        let ego = FrenetState { s: 0.0, s_dot: 10.0, ..Default::default() };
        let plan = planner
            .plan_tick(
                &ego,
                &ModeInputs::VelocityKeeping { target_speed: 10.0 },
                &straight(),
                &[Parked(30.0, 0.0)],
                BodyShape::Rectangle { width: 2.0, length: 4.5 },
            )
            .unwrap();
        assert!(plan.stats.collision_free < plan.stats.candidates);
        let checker = CollisionChecker::new(
            BodyShape::Rectangle { width: 2.0, length: 4.5 },
            &[Parked(30.0, 0.0)],
            0.1,
            5.0,
        )
        .unwrap();
        assert!(checker.is_free(&plan.selected.trajectory));
    }

    #[test]
    fn plan_tick_boxed_in_reports_stats() {
        let planner = Planner::default();
        let ego = FrenetState { s: 0.0, s_dot: 10.0, ..Default::default() };
        let wall: Vec<Parked> = (-4..=4).map(|k| Parked(6.0, k as f64 * 1.5)).collect();
        let err = planner
            .plan_tick(
                &ego,
                &ModeInputs::VelocityKeeping { target_speed: 10.0 },
                &straight(),
                &wall,
                BodyShape::Rectangle { width: 2.0, length: 4.5 },
            )
            .unwrap_err();
        match err {
            TickError::NoFeasible(_, stats) => {
                assert!(stats.candidates > 0);
                assert_eq!(stats.collision_free, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
