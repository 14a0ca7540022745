//! Constant-velocity Kalman filter over `(cx, cy, aspect, h)` and their rates.
//!
//! Noise follows the DeepSORT convention: position and velocity standard
//! deviations are proportional to the box height, aspect noise is constant.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Observation = SMatrix<f64, 4, 8>;

/// Squared-Mahalanobis gate: 0.95 quantile of χ² with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Multiplies the measurement noise covariance `R`.
    pub measurement_noise_scale: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            measurement_noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

fn observation() -> Observation {
    let mut h = Observation::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn transition(dt: f64) -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = dt;
    }
    f
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

impl KalmanParams {
    /// Track initialisation from a first measurement, zero velocity.
    pub fn initiate(&self, z: &Vector4<f64>) -> Gaussian {
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        let h = z[3].abs();
        let (p, v) = (self.std_weight_position, self.std_weight_velocity);
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        Gaussian {
            mean,
            covariance: StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s))),
        }
    }

    /// Process noise `Q` for a step of `dt` frames.
    pub fn process_noise(&self, mean: &StateVector, dt: f64) -> StateCovariance {
        let h = mean[3].abs();
        let (p, v) = (self.std_weight_position, self.std_weight_velocity);
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s * dt)))
    }

    /// Measurement noise `R`.
    pub fn measurement_noise(&self, mean: &StateVector) -> Matrix4<f64> {
        let h = mean[3].abs();
        let p = self.std_weight_position;
        let std = [p * h, p * h, 1e-1, p * h];
        Matrix4::from_diagonal(&Vector4::from_iterator(std.iter().map(|s| s * s * self.measurement_noise_scale)))
    }

    /// `x ← F·x`, `P ← F·P·Fᵀ + Q`.
    pub fn predict(&self, g: &Gaussian, dt: f64) -> Gaussian {
        assert!(dt > 0.0, "predict requires dt > 0");
        let f = transition(dt);
        Gaussian {
            mean: f * g.mean,
            covariance: symmetrize(&(f * g.covariance * f.transpose() + self.process_noise(&g.mean, dt))),
        }
    }

    /// Projected measurement mean and innovation covariance `H·P·Hᵀ + R`.
    pub fn project(&self, g: &Gaussian) -> (Vector4<f64>, Matrix4<f64>) {
        let h = observation();
        let s = h * g.covariance * h.transpose() + self.measurement_noise(&g.mean);
        (h * g.mean, (s + s.transpose()) * 0.5)
    }

    /// Standard Kalman correction. The covariance is updated in Joseph form,
    /// which equals `(I − K·H)·P` for the optimal gain and stays PSD.
    pub fn update(&self, g: &Gaussian, z: &Vector4<f64>) -> Result<Gaussian, KalmanError> {
        let h = observation();
        let (projected, s) = self.project(g);
        let chol = s.cholesky().ok_or(KalmanError::SingularInnovation)?;
        // K = P·Hᵀ·S⁻¹, computed as (S⁻¹·H·P)ᵀ since P and S are symmetric
        let hp = h * g.covariance;
        let gain = chol.solve(&hp).transpose();
        if !gain.iter().all(|v| v.is_finite()) {
            return Err(KalmanError::SingularInnovation);
        }
        let innovation = z - projected;
        let mean = g.mean + gain * innovation;
        let ikh = StateCovariance::identity() - gain * h;
        let r = self.measurement_noise(&g.mean);
        let covariance = ikh * g.covariance * ikh.transpose() + gain * r * gain.transpose();
        Ok(Gaussian {
            mean,
            covariance: symmetrize(&covariance),
        })
    }

    /// Squared Mahalanobis distance of `z` from the projected measurement.
    pub fn gating_distance(&self, g: &Gaussian, z: &Vector4<f64>) -> Result<f64, KalmanError> {
        let (projected, s) = self.project(g);
        let chol = s.cholesky().ok_or(KalmanError::SingularInnovation)?;
        let d = z - projected;
        Ok(d.dot(&chol.solve(&d)))
    }
}
