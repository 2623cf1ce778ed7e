//! Arc-length parameterized reference lines and Frenet <-> Cartesian conversion.
//!
//! Waypoints are interpolated with a natural cubic spline (chord-length
//! parameter) and resampled at uniform arc-length spacing. Between samples
//! the line is a cubic Hermite curve with heading and curvature interpolated
//! linearly, so both conversion directions see the same geometry.
//!
//! Lateral offsets `d` are positive to the left of the direction of travel.

use crate::polynomial::MotionPolynomial;
use crate::scalar::{lit, wrap_angle, Scalar};
use thiserror::Error;

/// Maximum lateral distance at which a Cartesian pose is projected.
pub const PROJECTION_CORRIDOR: f64 = 50.0;

/// Reverse motion below this longitudinal speed marks a candidate infeasible.
pub const REVERSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("reference line needs at least two waypoints")]
    TooFewWaypoints,
    #[error("consecutive waypoints {0} and {1} coincide")]
    DuplicateWaypoint(usize, usize),
    #[error("sample spacing must be positive and finite")]
    Spacing,
    #[error("arc length {s} is outside the reference line [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("lateral offset {d} folds over the center of curvature (kappa = {kappa})")]
    FoldOver { d: f64, kappa: f64 },
    #[error("pose is {distance} m from the reference line (corridor {PROJECTION_CORRIDOR} m)")]
    OutOfCorridor { distance: f64 },
    #[error("input is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample<T> {
    pub s: T,
    pub x: T,
    pub y: T,
    pub heading: T,
    pub curvature: T,
}

/// Interpolated reference geometry at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
    pub curvature: T,
    /// d(curvature)/ds
    pub curvature_rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine<T> {
    samples: Vec<RefSample<T>>,
    spacing: T,
    total_length: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetState<T> {
    pub s: T,
    pub s_dot: T,
    pub s_ddot: T,
    pub d: T,
    pub d_dot: T,
    pub d_ddot: T,
}

/// Planar pose with speed, tangential acceleration and path curvature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartesianState<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
    pub v: T,
    pub a: T,
    pub kappa: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    Reverse,
    FoldOver,
    LeavesReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub theta: T,
    pub v: T,
    pub a: T,
    pub kappa: T,
    pub s: T,
    pub d: T,
}

/// Time-sampled Cartesian trajectory together with the Frenet profiles it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub points: Vec<TrajectoryPoint<T>>,
    pub dt: T,
    pub lateral: MotionPolynomial<T>,
    pub longitudinal: MotionPolynomial<T>,
    pub cost: T,
    /// Set when realization hit a hard kinematic problem; such candidates
    /// are dropped by the planner. `points` may be truncated in that case.
    pub infeasibility: Option<Infeasibility>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn is_feasible(&self) -> bool {
        self.infeasibility.is_none()
    }

    /// Common horizon of the lateral and longitudinal profiles.
    pub fn horizon(&self) -> T {
        self.lateral.horizon().max(self.longitudinal.horizon())
    }

    /// Linearly interpolated point at time `t`, clamped to the sampled range.
    pub fn sample(&self, t: T) -> Option<TrajectoryPoint<T>> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if t <= first.t {
            return Some(*first);
        }
        if t >= last.t {
            return Some(*last);
        }
        let idx = ((t - first.t) / self.dt).floor().to_usize().unwrap_or(0);
        let idx = idx.min(self.points.len() - 2);
        let (p, q) = (&self.points[idx], &self.points[idx + 1]);
        let w = ((t - p.t) / (q.t - p.t)).max(T::zero()).min(T::one());
        let mix = |a: T, b: T| a + (b - a) * w;
        Some(TrajectoryPoint {
            t,
            x: mix(p.x, q.x),
            y: mix(p.y, q.y),
            theta: p.theta + wrap_angle(q.theta - p.theta) * w,
            v: mix(p.v, q.v),
            a: mix(p.a, q.a),
            kappa: mix(p.kappa, q.kappa),
            s: mix(p.s, q.s),
            d: mix(p.d, q.d),
        })
    }
}

/// Natural cubic spline `f(u)` over knots `u`, stored per segment as
/// `a + b du + c du^2 + e du^3`.
struct Spline1d<T> {
    knots: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
    e: Vec<T>,
}

impl<T: Scalar> Spline1d<T> {
    fn natural(knots: &[T], values: &[T]) -> Self {
        let n = knots.len();
        let h: Vec<T> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // Second derivatives m_i with m_0 = m_{n-1} = 0 (Thomas algorithm).
        let mut m = vec![T::zero(); n];
        if n > 2 {
            let inner = n - 2;
            let mut diag = vec![T::zero(); inner];
            let mut rhs = vec![T::zero(); inner];
            let six = lit::<T>(6.0);
            for i in 0..inner {
                diag[i] = lit::<T>(2.0) * (h[i] + h[i + 1]);
                let slope1 = (values[i + 2] - values[i + 1]) / h[i + 1];
                let slope0 = (values[i + 1] - values[i]) / h[i];
                rhs[i] = six * (slope1 - slope0);
            }
            for i in 1..inner {
                let w = h[i] / diag[i - 1];
                diag[i] = diag[i] - w * h[i];
                rhs[i] = rhs[i] - w * rhs[i - 1];
            }
            let mut sol = vec![T::zero(); inner];
            sol[inner - 1] = rhs[inner - 1] / diag[inner - 1];
            for i in (0..inner - 1).rev() {
                sol[i] = (rhs[i] - h[i + 1] * sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        let six = lit::<T>(6.0);
        let two = lit::<T>(2.0);
        let mut a = Vec::with_capacity(n - 1);
        let mut b = Vec::with_capacity(n - 1);
        let mut c = Vec::with_capacity(n - 1);
        let mut e = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            a.push(values[i]);
            b.push((values[i + 1] - values[i]) / h[i] - h[i] * (two * m[i] + m[i + 1]) / six);
            c.push(m[i] / two);
            e.push((m[i + 1] - m[i]) / (six * h[i]));
        }
        Self {
            knots: knots.to_vec(),
            a,
            b,
            c,
            e,
        }
    }

    fn segment(&self, u: T) -> usize {
        let last = self.knots.len() - 2;
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Value, first and second derivative.
    fn eval(&self, u: T) -> (T, T, T) {
        let i = self.segment(u);
        let du = u - self.knots[i];
        let (a, b, c, e) = (self.a[i], self.b[i], self.c[i], self.e[i]);
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        (
            a + du * (b + du * (c + du * e)),
            b + du * (two * c + du * three * e),
            two * c + lit::<T>(6.0) * e * du,
        )
    }
}

struct PlanarSpline<T> {
    x: Spline1d<T>,
    y: Spline1d<T>,
}

impl<T: Scalar> PlanarSpline<T> {
    fn speed(&self, u: T) -> T {
        let (_, dx, _) = self.x.eval(u);
        let (_, dy, _) = self.y.eval(u);
        dx.hypot(dy)
    }

    /// Arc length between `u0` and `u1` inside one segment (5-point Gauss-Legendre).
    fn arc_length(&self, u0: T, u1: T) -> T {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let half = (u1 - u0) / lit(2.0);
        let mid = (u1 + u0) / lit(2.0);
        NODES
            .iter()
            .zip(WEIGHTS.iter())
            .fold(T::zero(), |acc, (&n, &w)| {
                acc + lit::<T>(w) * self.speed(mid + half * lit(n))
            })
            * half
    }

    fn sample_at(&self, u: T, s: T) -> RefSample<T> {
        let (x, dx, ddx) = self.x.eval(u);
        let (y, dy, ddy) = self.y.eval(u);
        let speed2 = dx * dx + dy * dy;
        RefSample {
            s,
            x,
            y,
            heading: dy.atan2(dx),
            curvature: (dx * ddy - dy * ddx) / (speed2 * speed2.sqrt()),
        }
    }
}

impl<T: Scalar> ReferenceLine<T> {
    /// Interpolates `waypoints` and resamples them at uniform arc-length spacing.
    ///
    /// The spacing actually used is `L / ceil(L / ds)` so that both endpoints
    /// land exactly on the first and last waypoint.
    pub fn build(waypoints: &[(T, T)], ds: T) -> Result<Self, GeometryError> {
        if !(ds > T::zero() && ds.is_finite()) {
            return Err(GeometryError::Spacing);
        }
        if waypoints.len() < 2 {
            return Err(GeometryError::TooFewWaypoints);
        }
        if waypoints.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut knots = Vec::with_capacity(waypoints.len());
        knots.push(T::zero());
        for (i, w) in waypoints.windows(2).enumerate() {
            let chord = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            if chord <= lit(1e-9) {
                return Err(GeometryError::DuplicateWaypoint(i, i + 1));
            }
            let last = *knots.last().unwrap();
            knots.push(last + chord);
        }
        let xs: Vec<T> = waypoints.iter().map(|p| p.0).collect();
        let ys: Vec<T> = waypoints.iter().map(|p| p.1).collect();
        let spline = PlanarSpline {
            x: Spline1d::natural(&knots, &xs),
            y: Spline1d::natural(&knots, &ys),
        };

        // Cumulative arc length at each knot, subdividing each segment so the
        // quadrature stays accurate on long chords.
        const SUBDIV: usize = 8;
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(T::zero());
        for w in knots.windows(2) {
            let step = (w[1] - w[0]) / lit(SUBDIV as f64);
            let mut len = T::zero();
            for k in 0..SUBDIV {
                let a = w[0] + step * lit(k as f64);
                len = len + spline.arc_length(a, a + step);
            }
            let last = *cumulative.last().unwrap();
            cumulative.push(last + len);
        }
        let total_length = *cumulative.last().unwrap();
        let count = (total_length / ds - lit(1e-9)).ceil().max(T::one());
        let spacing = total_length / count;
        let count = count.to_usize().unwrap_or(1);

        let mut samples = Vec::with_capacity(count + 1);
        let mut seg = 0;
        for k in 0..=count {
            let s = if k == count {
                total_length
            } else {
                spacing * lit(k as f64)
            };
            while seg + 1 < knots.len() - 1 && cumulative[seg + 1] < s {
                seg += 1;
            }
            let u = invert_arc_length(&spline, knots[seg], knots[seg + 1], s - cumulative[seg]);
            let mut sample = spline.sample_at(u, s);
            if k == count {
                let (x, y) = *waypoints.last().unwrap();
                sample.x = x;
                sample.y = y;
            }
            if k == 0 {
                sample.x = waypoints[0].0;
                sample.y = waypoints[0].1;
            }
            samples.push(sample);
        }
        Ok(Self {
            samples,
            spacing,
            total_length,
        })
    }

    pub fn samples(&self) -> &[RefSample<T>] {
        &self.samples
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn total_length(&self) -> T {
        self.total_length
    }

    fn locate(&self, s: T) -> (usize, T) {
        let last = self.samples.len() - 2;
        let idx = (s / self.spacing).floor().to_usize().unwrap_or(0).min(last);
        let tau = (s - self.samples[idx].s) / self.spacing;
        (idx, tau)
    }

    /// Interpolated geometry at arc length `s`, clamped to the line.
    pub fn point_at(&self, s: T) -> RefPoint<T> {
        let s = s.max(T::zero()).min(self.total_length);
        let (i, tau) = self.locate(s);
        let (p, q) = (&self.samples[i], &self.samples[i + 1]);
        let one = T::one();
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let tau2 = tau * tau;
        let tau3 = tau2 * tau;
        let h00 = two * tau3 - three * tau2 + one;
        let h10 = tau3 - two * tau2 + tau;
        let h01 = -two * tau3 + three * tau2;
        let h11 = tau3 - tau2;
        let len = q.s - p.s;
        let (sp, cp) = p.heading.sin_cos();
        let (sq, cq) = q.heading.sin_cos();
        RefPoint {
            x: h00 * p.x + h10 * len * cp + h01 * q.x + h11 * len * cq,
            y: h00 * p.y + h10 * len * sp + h01 * q.y + h11 * len * sq,
            heading: p.heading + wrap_angle(q.heading - p.heading) * tau,
            curvature: p.curvature + (q.curvature - p.curvature) * tau,
            curvature_rate: (q.curvature - p.curvature) / len,
        }
    }

    /// Cartesian state of a Frenet state (time-parameterized lateral offset).
    pub fn frenet_to_cartesian(&self, f: &FrenetState<T>) -> Result<CartesianState<T>, GeometryError> {
        let tol = lit::<T>(1e-9);
        if !(f.s >= -tol && f.s <= self.total_length + tol) {
            return Err(GeometryError::OutOfRange {
                s: f.s.to_f64().unwrap_or(f64::NAN),
                length: self.total_length.to_f64().unwrap_or(f64::NAN),
            });
        }
        let r = self.point_at(f.s);
        let kd = r.curvature * f.d;
        if kd.abs() >= T::one() {
            return Err(GeometryError::FoldOver {
                d: f.d.to_f64().unwrap_or(f64::NAN),
                kappa: r.curvature.to_f64().unwrap_or(f64::NAN),
            });
        }
        let one_minus = T::one() - kd;
        let (sin_h, cos_h) = r.heading.sin_cos();
        let x = r.x - f.d * sin_h;
        let y = r.y + f.d * cos_h;

        // Velocity and acceleration in the (tangent, normal) basis at s.
        let vt = f.s_dot * one_minus;
        let vn = f.d_dot;
        let two = lit::<T>(2.0);
        let at = f.s_ddot * one_minus
            - f.s_dot * (r.curvature_rate * f.s_dot * f.d + two * r.curvature * f.d_dot);
        let an = r.curvature * f.s_dot * f.s_dot * one_minus + f.d_ddot;

        let v = vt.hypot(vn);
        let (theta, a, kappa) = if v > lit(1e-9) {
            (
                wrap_angle(r.heading + vn.atan2(vt)),
                (vt * at + vn * an) / v,
                (vt * an - vn * at) / (v * v * v),
            )
        } else {
            (r.heading, at, r.curvature / one_minus)
        };
        Ok(CartesianState {
            x,
            y,
            theta,
            v,
            a,
            kappa,
        })
    }

    /// Projects a Cartesian pose onto the line.
    ///
    /// `s` is found by nearest-segment search followed by a safeguarded
    /// Newton refinement on the interpolated curve; equidistant segments
    /// resolve to the smallest `s`. Velocity and tangential acceleration are
    /// decomposed along the reference tangent and normal (centripetal terms
    /// of the pose are not observable from `(v, a)` and are ignored).
    pub fn cartesian_to_frenet(
        &self,
        x: T,
        y: T,
        theta: T,
        v: T,
        a: T,
    ) -> Result<FrenetState<T>, GeometryError> {
        if ![x, y, theta, v, a].iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let s = self.project(x, y);
        let r = self.point_at(s);
        let (sin_h, cos_h) = r.heading.sin_cos();
        let d = -(x - r.x) * sin_h + (y - r.y) * cos_h;
        let dist = (x - r.x).hypot(y - r.y);
        if dist > lit(PROJECTION_CORRIDOR) {
            return Err(GeometryError::OutOfCorridor {
                distance: dist.to_f64().unwrap_or(f64::NAN),
            });
        }
        let one_minus = T::one() - r.curvature * d;
        if one_minus <= T::zero() {
            return Err(GeometryError::FoldOver {
                d: d.to_f64().unwrap_or(f64::NAN),
                kappa: r.curvature.to_f64().unwrap_or(f64::NAN),
            });
        }
        let (sin_dt, cos_dt) = wrap_angle(theta - r.heading).sin_cos();
        Ok(FrenetState {
            s,
            s_dot: v * cos_dt / one_minus,
            s_ddot: a * cos_dt / one_minus,
            d,
            d_dot: v * sin_dt,
            d_ddot: a * sin_dt,
        })
    }

    /// Arc length of the foot point of `(x, y)`.
    pub fn project(&self, x: T, y: T) -> T {
        let seg = self.nearest_segment(x, y);
        let residual = |s: T| {
            let r = self.point_at(s);
            let (sin_h, cos_h) = r.heading.sin_cos();
            (x - r.x) * cos_h + (y - r.y) * sin_h
        };
        let lo_idx = seg.saturating_sub(1);
        let hi_idx = (seg + 2).min(self.samples.len() - 1);
        let mut lo = self.samples[lo_idx].s;
        let mut hi = self.samples[hi_idx].s;
        let f_lo = residual(lo);
        let f_hi = residual(hi);
        if f_lo <= T::zero() {
            // Foot point before the bracket: only possible at the line start.
            if lo_idx == 0 {
                return T::zero();
            }
            return self.polyline_foot(seg, x, y);
        }
        if f_hi >= T::zero() {
            if hi_idx == self.samples.len() - 1 {
                return self.total_length;
            }
            return self.polyline_foot(seg, x, y);
        }
        // Safeguarded Newton (falls back to bisection when it leaves the bracket).
        let mut s = self.polyline_foot(seg, x, y).max(lo).min(hi);
        let h = self.spacing * lit(1e-4);
        for _ in 0..50 {
            let f = residual(s);
            if f.abs() < lit(1e-12) {
                return s;
            }
            if f > T::zero() {
                lo = s;
            } else {
                hi = s;
            }
            let deriv = (residual(s + h) - residual(s - h)) / (h + h);
            let mut next = if deriv < T::zero() { s - f / deriv } else { lo - T::one() };
            if !(next > lo && next < hi) {
                next = (lo + hi) / lit(2.0);
            }
            if (next - s).abs() < lit::<T>(1e-13) * (T::one() + s.abs()) {
                return next;
            }
            s = next;
        }
        s
    }

    fn nearest_segment(&self, x: T, y: T) -> usize {
        let mut best = 0;
        let mut best_dist = T::infinity();
        for (i, w) in self.samples.windows(2).enumerate() {
            let dist = point_segment_distance(x, y, &w[0], &w[1]);
            // Strict improvement beyond the tie tolerance keeps the smallest s.
            if dist < best_dist - lit(1e-6) {
                best = i;
                best_dist = dist;
            }
        }
        best
    }

    fn polyline_foot(&self, seg: usize, x: T, y: T) -> T {
        let (p, q) = (&self.samples[seg], &self.samples[seg + 1]);
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        let len2 = dx * dx + dy * dy;
        let w = (((x - p.x) * dx + (y - p.y) * dy) / len2)
            .max(T::zero())
            .min(T::one());
        p.s + (q.s - p.s) * w
    }

    /// Samples `lat` and `lon` every `dt` over their common horizon and
    /// converts each point to Cartesian. The shorter profile is extended by
    /// holding its terminal velocity.
    pub fn realize(
        &self,
        lat: &MotionPolynomial<T>,
        lon: &MotionPolynomial<T>,
        dt: T,
    ) -> Result<Trajectory<T>, GeometryError> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(GeometryError::Spacing);
        }
        let horizon = lat.horizon().max(lon.horizon());
        let steps = (horizon / dt + lit(1e-6)).floor().to_usize().unwrap_or(0);
        let mut points = Vec::with_capacity(steps + 1);
        let mut infeasibility = None;
        for k in 0..=steps {
            let t = dt * lit(k as f64);
            let lo = lon.eval_held(t);
            let la = lat.eval_held(t);
            if lo.vel < lit(-REVERSE_TOLERANCE) {
                infeasibility = Some(Infeasibility::Reverse);
                break;
            }
            let state = FrenetState {
                s: lo.pos,
                s_dot: lo.vel,
                s_ddot: lo.acc,
                d: la.pos,
                d_dot: la.vel,
                d_ddot: la.acc,
            };
            match self.frenet_to_cartesian(&state) {
                Ok(c) => points.push(TrajectoryPoint {
                    t,
                    x: c.x,
                    y: c.y,
                    theta: c.theta,
                    v: c.v,
                    a: c.a,
                    kappa: c.kappa,
                    s: lo.pos,
                    d: la.pos,
                }),
                Err(GeometryError::FoldOver { .. }) => {
                    infeasibility = Some(Infeasibility::FoldOver);
                    break;
                }
                Err(_) => {
                    infeasibility = Some(Infeasibility::LeavesReference);
                    break;
                }
            }
        }
        Ok(Trajectory {
            points,
            dt,
            lateral: *lat,
            longitudinal: *lon,
            cost: T::zero(),
            infeasibility,
        })
    }
}

fn point_segment_distance<T: Scalar>(x: T, y: T, p: &RefSample<T>, q: &RefSample<T>) -> T {
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    let len2 = dx * dx + dy * dy;
    let w = if len2 > T::zero() {
        (((x - p.x) * dx + (y - p.y) * dy) / len2)
            .max(T::zero())
            .min(T::one())
    } else {
        T::zero()
    };
    (x - (p.x + w * dx)).hypot(y - (p.y + w * dy))
}

/// Parameter `u` in `[u0, u1]` whose arc length from `u0` equals `target`.
fn invert_arc_length<T: Scalar>(spline: &PlanarSpline<T>, u0: T, u1: T, target: T) -> T {
    if target <= T::zero() {
        return u0;
    }
    let mut lo = u0;
    let mut hi = u1;
    let mut u = u0 + (u1 - u0) * (target / spline.arc_length(u0, u1)).min(T::one());
    for _ in 0..60 {
        let f = spline.arc_length(u0, u) - target;
        if f.abs() < lit(1e-12) {
            break;
        }
        if f > T::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - f / spline.speed(u);
        if !(next > lo && next < hi) {
            next = (lo + hi) / lit(2.0);
        }
        u = next;
    }
    u
}
