//! Quintic and quartic 1-D motion polynomials.
//!
//! Every trajectory candidate is a pair of these: a lateral offset profile
//! `d(t)` and a longitudinal profile `s(t)`. Coefficients are stored lowest
//! degree first and solved in closed form from the boundary conditions.

use crate::scalar::{lit, Scalar};
use thiserror::Error;

/// Horizons shorter than this are rejected: the boundary system degrades as `T^-5`.
pub const MIN_HORIZON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PolyError {
    #[error("horizon must be finite and at least {MIN_HORIZON} s, got {0}")]
    Horizon(f64),
    #[error("boundary condition is not finite")]
    NonFinite,
    #[error("t = {t} is outside the polynomial domain [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
}

/// Position, velocity and acceleration of a 1-D boundary condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryState<T> {
    pub pos: T,
    pub vel: T,
    pub acc: T,
}

impl<T: Scalar> BoundaryState<T> {
    pub fn new(pos: T, vel: T, acc: T) -> Self {
        Self { pos, vel, acc }
    }

    fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite() && self.acc.is_finite()
    }
}

/// Value and first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics<T> {
    pub pos: T,
    pub vel: T,
    pub acc: T,
    pub jerk: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    Quartic,
    Quintic,
}

impl Degree {
    pub fn len(self) -> usize {
        match self {
            Degree::Quartic => 5,
            Degree::Quintic => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionPolynomial<T> {
    coeffs: [T; 6],
    degree: Degree,
    horizon: T,
}

fn check_horizon<T: Scalar>(horizon: T) -> Result<(), PolyError> {
    if !horizon.is_finite() || horizon < lit(MIN_HORIZON) {
        return Err(PolyError::Horizon(horizon.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

impl<T: Scalar> MotionPolynomial<T> {
    /// Builds a polynomial from raw coefficients (5 for quartic, 6 for quintic).
    pub fn from_coefficients(coeffs: &[T], horizon: T) -> Result<Self, PolyError> {
        check_horizon(horizon)?;
        let degree = match coeffs.len() {
            5 => Degree::Quartic,
            6 => Degree::Quintic,
            _ => return Err(PolyError::NonFinite),
        };
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PolyError::NonFinite);
        }
        let mut stored = [T::zero(); 6];
        stored[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self {
            coeffs: stored,
            degree,
            horizon,
        })
    }

    /// Quintic meeting position, velocity and acceleration at both ends.
    pub fn quintic(
        start: BoundaryState<T>,
        end: BoundaryState<T>,
        horizon: T,
    ) -> Result<Self, PolyError> {
        check_horizon(horizon)?;
        if !start.is_finite() || !end.is_finite() {
            return Err(PolyError::NonFinite);
        }
        let h = horizon;
        let h2 = h * h;
        let h3 = h2 * h;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        let delta = end.pos - start.pos;
        // Eliminating a0..a2 from the 6x6 boundary system leaves a 3x3 block
        // with this closed-form inverse.
        let a3 = (lit::<T>(20.0) * delta
            - (lit::<T>(8.0) * end.vel + lit::<T>(12.0) * start.vel) * h
            - (three * start.acc - end.acc) * h2)
            / (two * h3);
        let a4 = (lit::<T>(-30.0) * delta
            + (lit::<T>(14.0) * end.vel + lit::<T>(16.0) * start.vel) * h
            + (three * start.acc - two * end.acc) * h2)
            / (two * h3 * h);
        let a5 = (lit::<T>(12.0) * delta
            - lit::<T>(6.0) * (end.vel + start.vel) * h
            + (end.acc - start.acc) * h2)
            / (two * h3 * h2);
        Ok(Self {
            coeffs: [start.pos, start.vel, start.acc / two, a3, a4, a5],
            degree: Degree::Quintic,
            horizon,
        })
    }

    /// Quartic meeting the start triple and the terminal velocity and acceleration.
    /// Terminal position is left free.
    pub fn quartic(
        start: BoundaryState<T>,
        end_vel: T,
        end_acc: T,
        horizon: T,
    ) -> Result<Self, PolyError> {
        check_horizon(horizon)?;
        if !start.is_finite() || !end_vel.is_finite() || !end_acc.is_finite() {
            return Err(PolyError::NonFinite);
        }
        let h = horizon;
        let h2 = h * h;
        let three = lit::<T>(3.0);
        let dv = end_vel - start.vel - start.acc * h;
        let da = end_acc - start.acc;
        let a3 = (three * dv - h * da) / (three * h2);
        let a4 = (h * da - lit::<T>(2.0) * dv) / (lit::<T>(4.0) * h2 * h);
        Ok(Self {
            coeffs: [start.pos, start.vel, start.acc / lit(2.0), a3, a4, T::zero()],
            degree: Degree::Quartic,
            horizon,
        })
    }

    /// Coefficients, lowest degree first; length 5 or 6.
    pub fn coefficients(&self) -> &[T] {
        &self.coeffs[..self.degree.len()]
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Evaluates without the domain check.
    pub fn eval_unchecked(&self, t: T) -> Kinematics<T> {
        let [c0, c1, c2, c3, c4, c5] = self.coeffs;
        let (two, three, four, five) = (lit::<T>(2.0), lit::<T>(3.0), lit::<T>(4.0), lit::<T>(5.0));
        let pos = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
        let vel = c1 + t * (two * c2 + t * (three * c3 + t * (four * c4 + t * five * c5)));
        let acc = two * c2 + t * (lit::<T>(6.0) * c3 + t * (lit::<T>(12.0) * c4 + t * lit::<T>(20.0) * c5));
        let [j0, j1, j2] = self.jerk_coefficients();
        let jerk = j0 + t * (j1 + t * j2);
        Kinematics { pos, vel, acc, jerk }
    }

    pub fn eval(&self, t: T) -> Result<Kinematics<T>, PolyError> {
        if !(t >= T::zero() && t <= self.horizon) {
            return Err(PolyError::Domain {
                t: t.to_f64().unwrap_or(f64::NAN),
                horizon: self.horizon.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(self.eval_unchecked(t))
    }

    /// Evaluates on `[0, inf)`. Past the horizon the terminal velocity is held
    /// with zero acceleration, so a profile ending at rest stays put.
    pub fn eval_held(&self, t: T) -> Kinematics<T> {
        if t <= self.horizon {
            return self.eval_unchecked(t.max(T::zero()));
        }
        let end = self.eval_unchecked(self.horizon);
        Kinematics {
            pos: end.pos + end.vel * (t - self.horizon),
            vel: end.vel,
            acc: T::zero(),
            jerk: T::zero(),
        }
    }

    /// Jerk as `j0 + j1 t + j2 t^2`.
    fn jerk_coefficients(&self) -> [T; 3] {
        let c = &self.coeffs;
        [lit::<T>(6.0) * c[3], lit::<T>(24.0) * c[4], lit::<T>(60.0) * c[5]]
    }

    /// Squared-jerk integral over `[0, T]`, in closed form.
    pub fn jerk_integral(&self) -> T {
        let [p0, p1, p2] = self.jerk_coefficients();
        let h = self.horizon;
        let h2 = h * h;
        let h3 = h2 * h;
        let h4 = h3 * h;
        let two = lit::<T>(2.0);
        p0 * p0 * h
            + p0 * p1 * h2
            + (p1 * p1 + two * p0 * p2) * h3 / lit(3.0)
            + p1 * p2 * h4 / two
            + p2 * p2 * h4 * h / lit(5.0)
    }

    /// Maximum of `|jerk|` over `[0, T]`: endpoints plus the interior vertex.
    pub fn max_abs_jerk(&self) -> T {
        let [p0, p1, p2] = self.jerk_coefficients();
        let jerk = |t: T| p0 + t * (p1 + t * p2);
        let mut best = jerk(T::zero()).abs().max(jerk(self.horizon).abs());
        if p2 != T::zero() {
            let vertex = -p1 / (lit::<T>(2.0) * p2);
            if vertex > T::zero() && vertex < self.horizon {
                best = best.max(jerk(vertex).abs());
            }
        }
        best
    }

    /// Extremes of velocity over `[0, T]`, from the roots of the acceleration.
    pub fn velocity_range(&self) -> (T, T) {
        self.extremes_of(|k| k.vel, |s, t| s.acc_roots(t))
    }

    /// Extremes of acceleration over `[0, T]`, from the roots of the jerk.
    pub fn acceleration_range(&self) -> (T, T) {
        self.extremes_of(|k| k.acc, |s, _| s.jerk_roots())
    }

    fn extremes_of<F, R>(&self, pick: F, roots: R) -> (T, T)
    where
        F: Fn(&Kinematics<T>) -> T,
        R: Fn(&Self, T) -> Vec<T>,
    {
        let mut lo = pick(&self.eval_unchecked(T::zero()));
        let mut hi = lo;
        let mut probe = |t: T| {
            let v = pick(&self.eval_unchecked(t));
            lo = lo.min(v);
            hi = hi.max(v);
        };
        probe(self.horizon);
        for r in roots(self, self.horizon) {
            if r > T::zero() && r < self.horizon {
                probe(r);
            }
        }
        (lo, hi)
    }

    fn jerk_roots(&self) -> Vec<T> {
        let [p0, p1, p2] = self.jerk_coefficients();
        quadratic_roots(p2, p1, p0)
    }

    /// Roots of the acceleration, a cubic. Found by bracketing between the
    /// stationary points (roots of the jerk) and bisecting.
    fn acc_roots(&self, horizon: T) -> Vec<T> {
        let acc = |t: T| self.eval_unchecked(t).acc;
        let mut knots = vec![T::zero()];
        let mut stationary: Vec<T> = self
            .jerk_roots()
            .into_iter()
            .filter(|r| *r > T::zero() && *r < horizon)
            .collect();
        stationary.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        knots.extend(stationary);
        knots.push(horizon);
        let mut roots = Vec::new();
        for w in knots.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (fa, fb) = (acc(a), acc(b));
            if fa == T::zero() {
                roots.push(a);
                continue;
            }
            if fa * fb > T::zero() {
                continue;
            }
            let mut fa = fa;
            for _ in 0..80 {
                let m = (a + b) / lit(2.0);
                let fm = acc(m);
                if fm * fa > T::zero() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push((a + b) / lit(2.0));
        }
        roots
    }
}

/// Real roots of `a t^2 + b t + c`; degenerates to the linear case.
fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        if b == T::zero() {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - lit::<T>(4.0) * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Numerically stable form.
    let q = -(b + b.signum() * sq) / lit(2.0);
    let mut out = Vec::with_capacity(2);
    if q != T::zero() {
        out.push(q / a);
        out.push(c / q);
    } else {
        out.push(T::zero());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type P = MotionPolynomial<f64>;

    fn bs(p: f64, v: f64, a: f64) -> BoundaryState<f64> {
        BoundaryState::new(p, v, a)
    }

    /// Gaussian elimination with partial pivoting on the full boundary
    /// system; independent of the closed-form solver.
    fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
            x[row] = (rhs[row] - s) / m[row][row];
        }
        x
    }

    fn rows(t: f64, n: usize) -> [Vec<f64>; 3] {
        let pos = (0..n).map(|k| t.powi(k as i32)).collect();
        let vel = (0..n)
            .map(|k| if k == 0 { 0.0 } else { k as f64 * t.powi(k as i32 - 1) })
            .collect();
        let acc = (0..n)
            .map(|k| {
                if k < 2 {
                    0.0
                } else {
                    (k * (k - 1)) as f64 * t.powi(k as i32 - 2)
                }
            })
            .collect();
        [pos, vel, acc]
    }

    #[test]
    fn gaussian_oracle_agrees_on_unit_quintic() {
        let [p0, v0, a0] = rows(0.0, 6);
        let [p1, v1, a1] = rows(1.0, 6);
        let oracle = solve_dense(vec![p0, v0, a0, p1, v1, a1], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let poly = P::quintic(bs(0.0, 0.0, 0.0), bs(1.0, 0.0, 0.0), 1.0).unwrap();
        for (a, b) in poly.coefficients().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let expected = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        for (a, b) in poly.coefficients().iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_oracle_agrees_on_unit_quartic() {
        let [p0, v0, a0] = rows(0.0, 5);
        let [_, v1, a1] = rows(1.0, 5);
        let oracle = solve_dense(vec![p0, v0, a0, v1, a1], vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        let poly = P::quartic(bs(0.0, 0.0, 0.0), 1.0, 0.0, 1.0).unwrap();
        assert_eq!(poly.coefficients().len(), 5);
        for (a, b) in poly.coefficients().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in poly.coefficients().iter().zip(&[0.0, 0.0, 0.0, 1.0, -0.5]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_cases_are_zero() {
        let q = P::quintic(bs(0.0, 0.0, 0.0), bs(0.0, 0.0, 0.0), 1.0).unwrap();
        assert!(q.coefficients().iter().all(|c| *c == 0.0));
        let q = P::quartic(bs(0.0, 0.0, 0.0), 0.0, 0.0, 1.0).unwrap();
        assert!(q.coefficients().iter().all(|c| *c == 0.0));
        let k = q.eval(0.7).unwrap();
        assert_eq!((k.pos, k.vel, k.acc, k.jerk), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(q.jerk_integral(), 0.0);
        assert_eq!(q.max_abs_jerk(), 0.0);
    }

    #[test]
    fn general_quintic_meets_boundaries() {
        let start = bs(2.0, 1.0, -0.5);
        let end = bs(10.0, 0.0, 0.0);
        let q = P::quintic(start, end, 3.0).unwrap();
        let k0 = q.eval(0.0).unwrap();
        let k1 = q.eval(3.0).unwrap();
        for (got, want) in [
            (k0.pos, 2.0),
            (k0.vel, 1.0),
            (k0.acc, -0.5),
            (k1.pos, 10.0),
            (k1.vel, 0.0),
            (k1.acc, 0.0),
        ] {
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn constant_velocity_quartic_is_a_line() {
        let q = P::quartic(bs(0.0, 5.0, 0.0), 5.0, 0.0, 2.0).unwrap();
        let c = q.coefficients();
        assert_eq!(c, &[0.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn eval_derivatives() {
        let q = P::quartic(bs(0.0, 0.0, 0.0), 1.0, 0.0, 1.0).unwrap();
        let k = q.eval(1.0).unwrap();
        assert_abs_diff_eq!(k.pos, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(k.vel, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.acc, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.jerk, -6.0, epsilon = 1e-12);
        let q = P::from_coefficients(&[0.0, 0.0, 0.0, 10.0, -15.0, 6.0], 1.0).unwrap();
        let k = q.eval(0.0).unwrap();
        assert_eq!((k.pos, k.vel, k.acc, k.jerk), (0.0, 0.0, 0.0, 60.0));
    }

    #[test]
    fn eval_outside_domain_fails() {
        let q = P::quartic(bs(0.0, 1.0, 0.0), 1.0, 0.0, 2.0).unwrap();
        assert!(matches!(q.eval(-0.01), Err(PolyError::Domain { .. })));
        assert!(matches!(q.eval(2.01), Err(PolyError::Domain { .. })));
        assert!(q.eval(f64::NAN).is_err());
    }

    #[test]
    fn horizon_and_input_errors() {
        let z = bs(0.0, 0.0, 0.0);
        assert!(matches!(P::quintic(z, z, 0.0), Err(PolyError::Horizon(_))));
        assert!(matches!(P::quintic(z, z, -1.0), Err(PolyError::Horizon(_))));
        assert!(matches!(P::quintic(z, z, 5e-4), Err(PolyError::Horizon(_))));
        assert!(matches!(P::quintic(z, z, f64::INFINITY), Err(PolyError::Horizon(_))));
        assert!(matches!(
            P::quintic(bs(f64::NAN, 0.0, 0.0), z, 1.0),
            Err(PolyError::NonFinite)
        ));
        assert!(matches!(P::quartic(z, f64::INFINITY, 0.0, 1.0), Err(PolyError::NonFinite)));
        assert!(P::from_coefficients(&[0.0; 4], 1.0).is_err());
    }

    #[test]
    fn jerk_integral_known_values() {
        let q = P::quintic(bs(0.0, 0.0, 0.0), bs(1.0, 0.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(q.jerk_integral(), 720.0, epsilon = 1e-9);
        let q = P::quartic(bs(0.0, 0.0, 0.0), 1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(q.jerk_integral(), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn max_abs_jerk_known_values() {
        let q = P::quintic(bs(0.0, 0.0, 0.0), bs(1.0, 0.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(q.max_abs_jerk(), 60.0, epsilon = 1e-9);
        let q = P::quartic(bs(0.0, 0.0, 0.0), 1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(q.max_abs_jerk(), 6.0, epsilon = 1e-12);
        // vertex dominates: jerk = -30 + 360 (t - 0.5)^2 shifted so the vertex is largest
        let q = P::from_coefficients(&[0.0, 0.0, 0.0, 5.0, -15.0, 6.0], 1.0).unwrap();
        // jerk = 30 - 360 t + 360 t^2, vertex -60 at t = 0.5
        assert_abs_diff_eq!(q.max_abs_jerk(), 60.0, epsilon = 1e-9);
    }

    #[test]
    fn velocity_and_acceleration_ranges() {
        let q = P::quintic(bs(0.0, 0.0, 0.0), bs(1.0, 0.0, 0.0), 1.0).unwrap();
        let (lo, hi) = q.velocity_range();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.875, epsilon = 1e-9);
        let (alo, ahi) = q.acceleration_range();
        // acc = 60t - 180t^2 + 120t^3, extremes at t = (3 ± sqrt 3)/6
        let t = (3.0 - 3f64.sqrt()) / 6.0;
        let peak = 60.0 * t - 180.0 * t * t + 120.0 * t.powi(3);
        assert_abs_diff_eq!(ahi, peak, epsilon = 1e-9);
        assert_abs_diff_eq!(alo, -peak, epsilon = 1e-9);
    }

    #[test]
    fn held_extension_keeps_terminal_velocity() {
        let q = P::quartic(bs(0.0, 0.0, 0.0), 2.0, 0.0, 2.0).unwrap();
        let end = q.eval(2.0).unwrap();
        let k = q.eval_held(3.0);
        assert_abs_diff_eq!(k.pos, end.pos + 2.0, epsilon = 1e-12);
        assert_eq!(k.vel, 2.0);
        assert_eq!(k.acc, 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let q = MotionPolynomial::<f32>::quintic(
            BoundaryState::new(0.0, 0.0, 0.0),
            BoundaryState::new(1.0, 0.0, 0.0),
            1.0,
        )
        .unwrap();
        assert!((q.jerk_integral() - 720.0).abs() < 1e-2);
        assert!((q.eval(1.0).unwrap().pos - 1.0).abs() < 1e-5);
    }
}
