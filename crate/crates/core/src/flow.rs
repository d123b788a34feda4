//! Flow-matching Euler discrete scheduling.
//!
//! Forward noising is the straight interpolation `x = (1 - sigma) x0 + sigma eps`.
//! Latent initialization noises the encoded canvas to the first grid level at
//! or below `strength`, and denoising integrates the backend velocity with
//! explicit Euler steps down to `sigma = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Latent, TokenSet};
use crate::digest::{combine, tag};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Linear,
    Shifted,
}

impl std::str::FromStr for ScheduleShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleShape::Linear),
            "shifted" => Ok(ScheduleShape::Shifted),
            other => Err(Error::Config(format!("unknown schedule shape `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub n_steps: usize,
    pub shape: ScheduleShape,
    pub shift: f64,
    pub strength: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            n_steps: 28,
            shape: ScheduleShape::Shifted,
            shift: 3.0,
            strength: 0.7,
        }
    }
}

impl SchedulerConfig {
    pub fn schedule(&self) -> Result<SigmaSchedule> {
        make_schedule(self.n_steps, self.shape, self.shift)
    }
}

/// `N + 1` strictly decreasing noise levels from exactly 1 to exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSchedule {
    sigmas: Vec<f64>,
}

impl SigmaSchedule {
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if sigmas[0] != 1.0 || *sigmas.last().expect("non-empty") != 0.0 {
            return Err(Error::Config(
                "schedule must run from exactly 1 to exactly 0".into(),
            ));
        }
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("schedule must be strictly decreasing".into()));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn n_steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// Level used by the attention scoring pass.
    pub fn mid_sigma(&self) -> f64 {
        self.sigmas[self.n_steps() / 2]
    }

    /// Smallest `k` with `sigmas[k] <= strength`.
    pub fn start_index(&self, strength: f64) -> usize {
        self.sigmas
            .iter()
            .position(|&s| s <= strength)
            .expect("schedule ends at 0")
    }
}

pub fn make_schedule(n_steps: usize, shape: ScheduleShape, shift: f64) -> Result<SigmaSchedule> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    if !(shift > 0.0 && shift.is_finite()) {
        return Err(Error::Config(format!(
            "shift must be positive, got {shift}"
        )));
    }
    let n = n_steps as f64;
    let mut sigmas: Vec<f64> = (0..=n_steps)
        .map(|k| {
            let u = 1.0 - k as f64 / n;
            match shape {
                ScheduleShape::Linear => u,
                ScheduleShape::Shifted => shift * u / (1.0 + (shift - 1.0) * u),
            }
        })
        .collect();
    sigmas[0] = 1.0;
    sigmas[n_steps] = 0.0;
    SigmaSchedule::from_sigmas(sigmas)
}

/// `(1 - sigma) * x0 + sigma * eps`, tagged with `sigma`.
pub fn add_noise(x0: &Latent, eps: &[f64], sigma: f64) -> Result<Latent> {
    if eps.len() != x0.values.len() {
        return Err(Error::Contract(format!(
            "noise has {} entries, latent has {}",
            eps.len(),
            x0.values.len()
        )));
    }
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Contract(format!("sigma {sigma} outside [0, 1]")));
    }
    let values = x0
        .values
        .iter()
        .zip(eps)
        .map(|(x, e)| (1.0 - sigma) * x + sigma * e)
        .collect();
    Ok(x0.with_values(values, sigma))
}

/// Standard normal noise keyed only by `(seed, len)`.
pub fn gaussian_noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(combine(&[seed, tag("latent_noise"), len as u64]));
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Encode the canvas and noise it to the first grid level at or below
/// `strength`. Returns the noised latent and that grid index.
pub fn invert_canvas(
    canvas: &RasterImage,
    strength: f64,
    schedule: &SigmaSchedule,
    seed: u64,
    backend: &dyn Backend,
) -> Result<(Latent, usize)> {
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(Error::Config(format!("strength {strength} outside (0, 1]")));
    }
    let x0 = backend.encode_latent(canvas)?;
    let start = schedule.start_index(strength);
    let eps = gaussian_noise(seed, x0.values.len());
    let latent = add_noise(&x0, &eps, schedule.sigmas()[start])?;
    Ok((latent, start))
}

/// Euler integration from `sigmas[start_index]` down to 0.
pub fn denoise(
    latent: &Latent,
    start_index: usize,
    schedule: &SigmaSchedule,
    tokens: &TokenSet,
    backend: &dyn Backend,
) -> Result<Latent> {
    let sigmas = schedule.sigmas();
    if start_index > schedule.n_steps() || latent.sigma != sigmas[start_index] {
        return Err(Error::Contract(format!(
            "latent at sigma {} does not sit on grid index {start_index}",
            latent.sigma
        )));
    }
    let mut x = latent.clone();
    for k in start_index..schedule.n_steps() {
        let v = backend.predict_velocity(&x, sigmas[k], tokens)?;
        let dt = sigmas[k + 1] - sigmas[k];
        for (xi, vi) in x.values.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        x.sigma = sigmas[k + 1];
    }
    x.sigma = 0.0;
    if !x.is_finite() {
        return Err(Error::Contract(
            "denoising produced non-finite values".into(),
        ));
    }
    Ok(x)
}
