//! Individualization noise.
//!
//! Each interacting agent receives a perturbation whose standard
//! deviation grows with how closely its spatial neighbors agree with it.
//! In skewed mode the perturbation leans against the direction in which
//! the agent's opinion cluster is currently moving, while keeping mean 0
//! and the same standard deviation as the symmetric draw.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Default radius of the opinion neighborhood used for the cluster direction.
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Off,
    Symmetric,
    Skewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    /// Individualization strength.
    pub s: f64,
    /// Skewness strength; only read in skewed mode.
    pub s_s: f64,
    /// Opinion-neighborhood radius for the cluster direction.
    pub delta: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::off()
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        NoiseSpec {
            mode: NoiseMode::Off,
            s: 0.0,
            s_s: 0.0,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn symmetric(s: f64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Symmetric,
            s,
            ..NoiseSpec::off()
        }
    }

    pub fn skewed(s: f64, s_s: f64, delta: f64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Skewed,
            s,
            s_s,
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, value: f64, reason: &str| {
            Err(SimError::InvalidParameter {
                name: name.into(),
                value,
                reason: reason.into(),
            })
        };
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return bad("s", self.s, "must be finite and non-negative");
        }
        if !(self.s_s >= 0.0 && self.s_s.is_finite()) {
            return bad("s_s", self.s_s, "must be finite and non-negative");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", self.delta, "must be positive");
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.mode != NoiseMode::Off
    }
}

/// Adaptive standard deviation of agent `i`:
/// `s/(e-1) * (-|N(i)| + sum_j exp(1 - |o_i - o_j|))` over spatial neighbors.
pub fn adaptive_sigma(i: usize, opinions: &[f64], neighbors: &[usize], s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let oi = opinions[i];
    let excess: f64 = neighbors
        .iter()
        .map(|&j| (1.0 - (oi - opinions[j]).abs()).exp() - 1.0)
        .sum();
    // each term is >= 0 for opinions in [0, 1]; the max() only absorbs rounding
    (s / (E - 1.0) * excess).max(0.0)
}

/// Majority movement direction of the agents whose current opinion lies
/// strictly within `delta` of agent `i` (agent `i` included).
pub fn cluster_direction(i: usize, now: &[f64], prev: &[f64], delta: f64) -> i32 {
    let oi = now[i];
    let tally: i64 = now
        .iter()
        .zip(prev)
        .filter(|(o, _)| (**o - oi).abs() < delta)
        .map(|(o, p)| sign(o - p) as i64)
        .sum();
    tally.signum() as i32
}

fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Skew-normal distribution re-centered to mean 0 and scaled to a given
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredSkewNormal {
    shape: f64,
    d: f64,
    omega: f64,
    location: f64,
}

impl CenteredSkewNormal {
    pub fn new(shape: f64, sigma: f64) -> Self {
        let d = shape / (1.0 + shape * shape).sqrt();
        let omega = sigma / (1.0 - 2.0 * d * d / PI).sqrt();
        let location = -omega * d * (2.0 / PI).sqrt();
        CenteredSkewNormal {
            shape,
            d,
            omega,
            location,
        }
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Theoretical third standardized moment.
    pub fn skewness(&self) -> f64 {
        let m = self.d * (2.0 / PI).sqrt();
        (4.0 - PI) / 2.0 * m.powi(3) / (1.0 - m * m).powf(1.5)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        self.location + self.omega * (self.d * z0.abs() + (1.0 - self.d * self.d).sqrt() * z1)
    }
}

/// One individualization draw. `c_m` is the cluster direction; it only
/// matters in skewed mode, where the shape parameter is `-c_m * s_s`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, sigma: f64, c_m: i32, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    match spec.mode {
        NoiseMode::Off => 0.0,
        NoiseMode::Symmetric => sigma * rng.sample::<f64, _>(StandardNormal),
        NoiseMode::Skewed => {
            let shape = -(c_m as f64) * spec.s_s;
            if shape == 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                CenteredSkewNormal::new(shape, sigma).sample(rng)
            }
        }
    }
}
