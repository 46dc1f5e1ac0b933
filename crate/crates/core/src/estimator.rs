//! Kalman-filter scoring of sensor configurations.
//!
//! A configuration is scored by simulating the stochastic system
//! `x[k+1] = A x[k] + w[k]`, `y[k] = C_R x[k] + v[k]` and tracking it with a discrete-time
//! Kalman filter. The score is the time-averaged relative error `‖x̂ − x‖₂ / ‖x‖₂`,
//! averaged over seeded Monte Carlo trials.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sysmodel::{spectral_radius, symmetrize, LtiSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfConfig {
    /// Process noise covariance `Qn·I`.
    pub process_noise: f64,
    /// Measurement noise covariance `Rn·I`.
    pub measurement_noise: f64,
    /// Initial error covariance `P0·I`, also the covariance of the true initial state.
    pub initial_covariance: f64,
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            process_noise: 1e-4,
            measurement_noise: 1e-4,
            initial_covariance: 1e-1,
            trials: 50,
            horizon: 1000,
            seed: 0,
        }
    }
}

impl KfConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("process_noise", self.process_noise),
            ("measurement_noise", self.measurement_noise),
            ("initial_covariance", self.initial_covariance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        Ok(())
    }
}

/// Standard predict/update filter with a Joseph-form covariance update.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl KalmanFilter {
    pub fn new(a: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>, p0: DMatrix<f64>) -> Self {
        let n = a.nrows();
        Self {
            a,
            h,
            q,
            r,
            x: DVector::zeros(n),
            p: p0,
        }
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn predict(&mut self) {
        self.x = &self.a * &self.x;
        self.p = symmetrize(&self.a * &self.p * self.a.transpose() + &self.q);
    }

    pub fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        let n = self.x.len();
        let s = &self.h * &self.p * self.h.transpose() + &self.r;
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
        let gain = chol.solve(&(&self.h * &self.p)).transpose();
        let innovation = y - &self.h * &self.x;
        self.x += &gain * innovation;
        let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &self.h;
        self.p = symmetrize(&i_kh * &self.p * i_kh.transpose() + &gain * &self.r * gain.transpose());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfScore {
    pub sensors: Vec<usize>,
    /// Time-averaged relative error of each trial.
    pub per_trial: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// Scores the sensor set `sensors` (rows of `C`) by Monte Carlo Kalman filtering.
///
/// Trial `t` draws the true trajectory from one seed stream and the noise of every output
/// from another, so runs with nested sensor sets see identical states and shared noise.
pub fn kalman_score(sys: &LtiSystem, sensors: &[usize], cfg: &KfConfig) -> Result<KfScore> {
    cfg.validate()?;
    if sensors.is_empty() {
        return Err(Error::invalid("sensors", "at least one sensor is required"));
    }
    let mut sensors = sensors.to_vec();
    sensors.sort_unstable();
    sensors.dedup();
    if let Some(&bad) = sensors.iter().find(|&&v| v >= sys.n_y()) {
        return Err(Error::IndexOutOfRange {
            what: "outputs",
            index: bad,
            size: sys.n_y(),
        });
    }
    let rho = spectral_radius(sys.a());
    if rho > 1.0 + 1e-9 {
        return Err(Error::Unstable {
            spectral_radius: rho,
            limit: 1.0 + 1e-9,
        });
    }
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(sys, &sensors, cfg, seed::derive(cfg.seed, t as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let std_dev = if per_trial.len() > 1 {
        (per_trial.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(KfScore {
        sensors,
        per_trial,
        mean,
        std_dev,
    })
}

fn gaussian(rng: &mut impl rand::Rng, n: usize, variance: f64) -> DVector<f64> {
    let sd = variance.sqrt();
    DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

fn run_trial(sys: &LtiSystem, sensors: &[usize], cfg: &KfConfig, trial_seed: u64) -> Result<f64> {
    let n_x = sys.n_x();
    let n_y = sys.n_y();
    let mut state_rng = seed::rng(seed::derive(trial_seed, 0));
    let mut noise_rng = seed::rng(seed::derive(trial_seed, 1));

    let h = sys.c().select_rows(sensors);
    let mut kf = KalmanFilter::new(
        sys.a().clone(),
        h.clone(),
        DMatrix::identity(n_x, n_x) * cfg.process_noise,
        DMatrix::identity(sensors.len(), sensors.len()) * cfg.measurement_noise,
        DMatrix::identity(n_x, n_x) * cfg.initial_covariance,
    );
    let mut x = gaussian(&mut state_rng, n_x, cfg.initial_covariance);
    let mut total = 0.0;
    let mut counted = 0usize;
    for k in 0..cfg.horizon {
        let v_all = gaussian(&mut noise_rng, n_y, cfg.measurement_noise);
        let v = DVector::from_iterator(sensors.len(), sensors.iter().map(|&i| v_all[i]));
        let y = &h * &x + v;
        kf.update(&y)?;
        let norm = x.norm();
        if norm > 0.0 {
            total += (kf.state() - &x).norm() / norm;
            counted += 1;
        }
        if k + 1 < cfg.horizon {
            kf.predict();
            x = sys.a() * &x + gaussian(&mut state_rng, n_x, cfg.process_noise);
        }
    }
    Ok(if counted > 0 { total / counted as f64 } else { 0.0 })
}
