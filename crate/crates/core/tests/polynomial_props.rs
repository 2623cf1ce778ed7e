use proptest::prelude::*;
use urbandrive_core::polynomial::{BoundaryState, MotionPolynomial};

/// Composite Simpson on `n` panels, refined until two passes agree.
fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let simpson = |n: usize| {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let mut n = 8;
    let mut prev = simpson(n);
    loop {
        n *= 2;
        let next = simpson(n);
        if (next - prev).abs() <= rel * next.abs().max(1e-12) || n > 1 << 20 {
            return next;
        }
        prev = next;
    }
}

fn bc() -> impl Strategy<Value = (f64, f64, f64)> {
    (-50.0..50.0f64, -15.0..15.0f64, -5.0..5.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quintic_meets_both_ends((p0, v0, a0) in bc(), (p1, v1, a1) in bc(), t in 0.5..10.0f64) {
        let poly = MotionPolynomial::quintic(
            BoundaryState::new(p0, v0, a0), BoundaryState::new(p1, v1, a1), t).unwrap();
        let s = poly.eval(0.0).unwrap();
        let e = poly.eval(t).unwrap();
        let scale = 1.0 + p0.abs().max(p1.abs());
        prop_assert!((s.pos - p0).abs() <= 1e-6 * scale);
        prop_assert!((s.vel - v0).abs() <= 1e-6 * scale);
        prop_assert!((s.acc - a0).abs() <= 1e-6 * scale);
        prop_assert!((e.pos - p1).abs() <= 1e-6 * scale);
        prop_assert!((e.vel - v1).abs() <= 1e-6 * scale);
        prop_assert!((e.acc - a1).abs() <= 1e-6 * scale);
    }

    #[test]
    fn quartic_meets_both_ends((p0, v0, a0) in bc(), (_, v1, a1) in bc(), t in 0.5..10.0f64) {
        let poly = MotionPolynomial::quartic(BoundaryState::new(p0, v0, a0), v1, a1, t).unwrap();
        let s = poly.eval(0.0).unwrap();
        let e = poly.eval(t).unwrap();
        prop_assert!((s.pos - p0).abs() <= 1e-9 * (1.0 + p0.abs()));
        prop_assert!((s.vel - v0).abs() <= 1e-9);
        prop_assert!((s.acc - a0).abs() <= 1e-9);
        prop_assert!((e.vel - v1).abs() <= 1e-6);
        prop_assert!((e.acc - a1).abs() <= 1e-6);
    }

    #[test]
    fn jerk_integral_matches_quadrature((p0, v0, a0) in bc(), (p1, v1, a1) in bc(), t in 0.5..10.0f64) {
        let poly = MotionPolynomial::quintic(
            BoundaryState::new(p0, v0, a0), BoundaryState::new(p1, v1, a1), t).unwrap();
        let closed = poly.jerk_integral();
        let numeric = adaptive_simpson(|x| poly.eval_unchecked(x).jerk.powi(2), 0.0, t, 1e-12);
        prop_assert!((closed - numeric).abs() <= 1e-8 * closed.abs().max(1e-6),
            "closed {closed} numeric {numeric}");
        prop_assert!(closed >= 0.0);
    }

    #[test]
    fn max_jerk_bounds_samples((p0, v0, a0) in bc(), (p1, v1, a1) in bc(), t in 0.5..10.0f64) {
        let poly = MotionPolynomial::quintic(
            BoundaryState::new(p0, v0, a0), BoundaryState::new(p1, v1, a1), t).unwrap();
        let m = poly.max_abs_jerk();
        let sampled = (0..=400).map(|i| poly.eval_unchecked(t * i as f64 / 400.0).jerk.abs()).fold(0.0, f64::max);
        prop_assert!(m + 1e-9 * (1.0 + m) >= sampled);
        prop_assert!(sampled >= m * (1.0 - 1e-3) - 1e-9);
    }

    /// Adding `eps * t^3 (T - t)^3` keeps the boundary conditions and can
    /// only increase the jerk integral.
    #[test]
    fn quintic_is_minimum_jerk((p0, v0, a0) in bc(), (p1, v1, a1) in bc(), t in 0.5..6.0f64, eps in -1.0..1.0f64) {
        prop_assume!(eps.abs() > 1e-3);
        let poly = MotionPolynomial::quintic(
            BoundaryState::new(p0, v0, a0), BoundaryState::new(p1, v1, a1), t).unwrap();
        // Third derivative of T^3 t^3 - 3 T^2 t^4 + 3 T t^5 - t^6, normalized by T^6.
        let scale = eps / t.powi(6);
        let bump_jerk = |x: f64| scale * (6.0 * t.powi(3) - 72.0 * t * t * x + 180.0 * t * x * x - 120.0 * x.powi(3));
        let perturbed = adaptive_simpson(|x| (poly.eval_unchecked(x).jerk + bump_jerk(x)).powi(2), 0.0, t, 1e-12);
        prop_assert!(perturbed >= poly.jerk_integral() * (1.0 - 1e-9) - 1e-12);
    }
}

#[test]
fn unit_quintic_jerk_integral() {
    let poly = MotionPolynomial::<f64>::quintic(BoundaryState::new(0.0, 0.0, 0.0), BoundaryState::new(1.0, 0.0, 0.0), 1.0).unwrap();
    assert!((poly.jerk_integral() - 720.0).abs() <= 1e-9);
    let numeric = adaptive_simpson(|x| poly.eval_unchecked(x).jerk.powi(2), 0.0, 1.0, 1e-14);
    assert!((numeric - 720.0).abs() <= 1e-6);
}
