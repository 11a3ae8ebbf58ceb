use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const BETA_MIN: f64 = 1e-4;
const BETA_MAX: f64 = 0.999;

/// Discrete DDPM noise schedule over steps `0..steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Squared-cosine schedule with betas clipped to `[1e-4, 0.999]`.
    pub fn squared_cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!(
                "noise schedule needs at least 2 steps, got {steps}"
            )));
        }
        let f = |t: f64| ((t + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2).cos().powi(2);
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                let lo = i as f64 / steps as f64;
                let hi = (i + 1) as f64 / steps as f64;
                (1.0 - f(hi) / f(lo)).clamp(BETA_MIN, BETA_MAX)
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Schedule from explicit betas, each in `(0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::config(format!(
                "noise schedule needs at least 2 steps, got {}",
                betas.len()
            )));
        }
        if !betas.iter().all(|&b| b > 0.0 && b < 1.0) {
            return Err(Error::config("every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::config(format!(
                "diffusion step {t} outside 0..{}",
                self.steps()
            )));
        }
        Ok(())
    }
}

/// What the denoiser regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTarget {
    Epsilon,
    Sample,
    #[default]
    VObjective,
}

/// `sqrt(ᾱ_t)·a + sqrt(1 − ᾱ_t)·ε`.
pub fn noise_action(
    action: &[f64],
    eps: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_lengths(action, eps)?;
    schedule.check_step(t)?;
    let (s, n) = coefficients(schedule, t);
    Ok(action.iter().zip(eps).map(|(a, e)| s * a + n * e).collect())
}

/// Regression target for `kind`:
/// ε, `a`, or `v = sqrt(ᾱ_t)·ε − sqrt(1 − ᾱ_t)·a`.
pub fn prediction_target(
    kind: PredictionTarget,
    action: &[f64],
    eps: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_lengths(action, eps)?;
    schedule.check_step(t)?;
    Ok(match kind {
        PredictionTarget::Epsilon => eps.to_vec(),
        PredictionTarget::Sample => action.to_vec(),
        PredictionTarget::VObjective => {
            let (s, n) = coefficients(schedule, t);
            action
                .iter()
                .zip(eps)
                .map(|(&a, &e)| target_scalar(kind, a, e, s, n))
                .collect()
        }
    })
}

/// Target for one coordinate given `s = sqrt(ᾱ)` and `n = sqrt(1 − ᾱ)`.
#[inline]
pub(crate) fn target_scalar(kind: PredictionTarget, a: f64, e: f64, s: f64, n: f64) -> f64 {
    match kind {
        PredictionTarget::Epsilon => e,
        PredictionTarget::Sample => a,
        PredictionTarget::VObjective => s * e - n * a,
    }
}

/// Inverts the corruption: from the noisy sample and a prediction of `kind`,
/// recovers `(a, ε)`.
pub fn recover(
    kind: PredictionTarget,
    noisy: &[f64],
    prediction: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(noisy, prediction)?;
    schedule.check_step(t)?;
    let (s, n) = coefficients(schedule, t);
    let mut a = Vec::with_capacity(noisy.len());
    let mut e = Vec::with_capacity(noisy.len());
    for (&x, &p) in noisy.iter().zip(prediction) {
        let (ai, ei) = recover_scalar(kind, x, p, s, n);
        a.push(ai);
        e.push(ei);
    }
    Ok((a, e))
}

#[inline]
pub(crate) fn recover_scalar(kind: PredictionTarget, x: f64, p: f64, s: f64, n: f64) -> (f64, f64) {
    match kind {
        PredictionTarget::Epsilon => ((x - n * p) / s, p),
        PredictionTarget::Sample => (p, (x - s * p) / n),
        // (x, v) is a rotation of (a, ε) by the angle with cos = s, sin = n.
        PredictionTarget::VObjective => (s * x - n * p, n * x + s * p),
    }
}

#[inline]
pub(crate) fn coefficients(schedule: &NoiseSchedule, t: usize) -> (f64, f64) {
    let ab = schedule.alpha_bar(t);
    (ab.sqrt(), (1.0 - ab).sqrt())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
