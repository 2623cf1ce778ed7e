//! Planar ego-state Kalman filter fed by GNSS position, compass yaw and
//! IMU yaw rate / forward acceleration.

use crate::frenet::{FrenetState, GeometryError, ReferenceLine};
use crate::scalar::wrap_angle;
use nalgebra::{Matrix3, Matrix3x5, Matrix5, Matrix5x3, Vector3, Vector5};
use serde::{Deserialize, Serialize};

const EARTH_RADIUS: f64 = 6_378_137.0;
/// Smallest measurement variance used, so a noise-free sensor still gives
/// an invertible innovation covariance.
const MIN_VARIANCE: f64 = 1e-10;

/// Raw navigation sensor vector. Latitude and longitude are in degrees,
/// altitude in meters, rates in rad/s, accelerations in m/s^2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NavSignals {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub angular_velocity: [f64; 3],
    pub linear_acceleration: [f64; 3],
    pub compass: f64,
}

/// Equirectangular projection about a fixed geodetic origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lat: f64,
    pub lon: f64,
}

impl GeoOrigin {
    pub fn to_local(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS * (lon - self.lon).to_radians() * self.lat.to_radians().cos();
        let y = EARTH_RADIUS * (lat - self.lat).to_radians();
        (x, y)
    }

    pub fn to_geodetic(&self, x: f64, y: f64) -> (f64, f64) {
        let lat = self.lat + (y / EARTH_RADIUS).to_degrees();
        let lon = self.lon + (x / (EARTH_RADIUS * self.lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoEstimate {
    /// `[x, y, theta, v, a]`
    pub state: Vector5<f64>,
    pub covariance: Matrix5<f64>,
}

impl EgoEstimate {
    pub fn new(x: f64, y: f64, theta: f64, v: f64, a: f64, covariance: Matrix5<f64>) -> Self {
        Self {
            state: Vector5::new(x, y, wrap_angle(theta), v, a),
            covariance,
        }
    }

    pub fn x(&self) -> f64 {
        self.state[0]
    }
    pub fn y(&self) -> f64 {
        self.state[1]
    }
    pub fn theta(&self) -> f64 {
        self.state[2]
    }
    pub fn v(&self) -> f64 {
        self.state[3]
    }
    pub fn a(&self) -> f64 {
        self.state[4]
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.covariance.symmetric_eigenvalues().min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Process noise diagonal for `[x, y, theta, v, a]`, per second.
    pub process_noise: [f64; 5],
    /// Measurement standard deviations.
    pub gnss_sigma: f64,
    pub compass_sigma: f64,
    /// Prior standard deviation of speed and acceleration at start-up.
    pub initial_speed_sigma: f64,
    pub initial_accel_sigma: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            process_noise: [0.01, 0.01, 0.001, 0.1, 0.5],
            gnss_sigma: 0.5,
            compass_sigma: 0.05,
            initial_speed_sigma: 10.0,
            initial_accel_sigma: 3.0,
        }
    }
}

impl FilterParams {
    pub fn measurement_noise(&self) -> Matrix3<f64> {
        let g = (self.gnss_sigma * self.gnss_sigma).max(MIN_VARIANCE);
        let c = (self.compass_sigma * self.compass_sigma).max(MIN_VARIANCE);
        Matrix3::from_diagonal(&Vector3::new(g, g, c))
    }

    pub fn process_noise(&self) -> Matrix5<f64> {
        Matrix5::from_diagonal(&Vector5::from(self.process_noise))
    }

    /// Estimate initialized from one position/yaw fix at rest.
    pub fn initial_estimate(&self, x: f64, y: f64, yaw: f64) -> EgoEstimate {
        let r = self.measurement_noise();
        let p = Matrix5::from_diagonal(&Vector5::new(
            r[(0, 0)],
            r[(1, 1)],
            r[(2, 2)],
            self.initial_speed_sigma.powi(2),
            self.initial_accel_sigma.powi(2),
        ));
        EgoEstimate::new(x, y, yaw, 0.0, 0.0, p)
    }
}

fn symmetrize(p: Matrix5<f64>) -> Matrix5<f64> {
    (p + p.transpose()) * 0.5
}

/// Propagates the estimate with the measured yaw rate and forward
/// acceleration. The acceleration state takes the measured value.
pub fn kf_predict(est: &EgoEstimate, yaw_rate: f64, accel: f64, dt: f64, q: &Matrix5<f64>) -> EgoEstimate {
    let (x, y, theta, v) = (est.x(), est.y(), est.theta(), est.v());
    let (c, s) = (theta.cos(), theta.sin());
    let state = Vector5::new(
        x + v * c * dt,
        y + v * s * dt,
        wrap_angle(theta + yaw_rate * dt),
        v + accel * dt,
        accel,
    );
    #[rustfmt::skip]
    let f = Matrix5::new(
        1.0, 0.0, -v * s * dt, c * dt, 0.0,
        0.0, 1.0,  v * c * dt, s * dt, 0.0,
        0.0, 0.0,  1.0,        0.0,    0.0,
        0.0, 0.0,  0.0,        1.0,    0.0,
        0.0, 0.0,  0.0,        0.0,    0.0,
    );
    EgoEstimate {
        state,
        covariance: symmetrize(f * est.covariance * f.transpose() + q * dt),
    }
}

/// Linear update on `(x, y, yaw)` with the yaw residual wrapped, using the
/// Joseph form so the covariance stays symmetric positive semidefinite.
pub fn kf_update(est: &EgoEstimate, meas: (f64, f64, f64), r: &Matrix3<f64>) -> EgoEstimate {
    let h = Matrix3x5::new(
        1.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, 0.0,
    );
    let residual = Vector3::new(
        meas.0 - est.x(),
        meas.1 - est.y(),
        wrap_angle(meas.2 - est.theta()),
    );
    let p = est.covariance;
    let innovation = h * p * h.transpose() + r;
    let Some(inv) = innovation.try_inverse() else {
        return *est;
    };
    let gain: Matrix5x3<f64> = p * h.transpose() * inv;
    let mut state = est.state + gain * residual;
    state[2] = wrap_angle(state[2]);
    let i_kh = Matrix5::identity() - gain * h;
    let covariance = symmetrize(i_kh * p * i_kh.transpose() + gain * r * gain.transpose());
    EgoEstimate { state, covariance }
}

pub fn estimate_to_frenet(est: &EgoEstimate, reference: &ReferenceLine<f64>) -> Result<FrenetState<f64>, GeometryError> {
    reference.cartesian_to_frenet(est.x(), est.y(), est.theta(), est.v(), est.a())
}

/// Stateful filter front end: converts sensor vectors and runs
/// predict/update each tick.
#[derive(Debug, Clone)]
pub struct Localizer {
    params: FilterParams,
    origin: GeoOrigin,
    estimate: Option<EgoEstimate>,
}

impl Localizer {
    pub fn new(params: FilterParams, origin: GeoOrigin) -> Self {
        Self {
            params,
            origin,
            estimate: None,
        }
    }

    pub fn estimate(&self) -> Option<&EgoEstimate> {
        self.estimate.as_ref()
    }

    /// Replaces the current estimate, e.g. with a known starting state.
    pub fn reset(&mut self, estimate: EgoEstimate) {
        self.estimate = Some(estimate);
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    /// Feeds one sensor vector taken `dt` after the previous one.
    pub fn step(&mut self, signals: &NavSignals, dt: f64) -> EgoEstimate {
        let (x, y) = self.origin.to_local(signals.lat, signals.lon);
        let yaw = wrap_angle(signals.compass);
        let next = match &self.estimate {
            None => self.params.initial_estimate(x, y, yaw),
            Some(prev) => {
                let predicted = kf_predict(
                    prev,
                    signals.angular_velocity[2],
                    signals.linear_acceleration[0],
                    dt,
                    &self.params.process_noise(),
                );
                kf_update(&predicted, (x, y, yaw), &self.params.measurement_noise())
            }
        };
        self.estimate = Some(next);
        next
    }
}
