//! Interaction potentials and the signed step of the pairwise update.
//!
//! The tent potential attracts within radius `tau` and repels beyond it.
//! The bounded-confidence potential attracts within `tau` and is flat
//! outside, so distant agents ignore each other.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Tent,
    BoundedConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub tau: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, tau: f64) -> Result<Self> {
        let spec = PotentialSpec { kind, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tent(tau: f64) -> Result<Self> {
        Self::new(PotentialKind::Tent, tau)
    }

    pub fn bounded_confidence(tau: f64) -> Result<Self> {
        Self::new(PotentialKind::BoundedConfidence, tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(SimError::InvalidParameter {
                name: "tau".into(),
                value: self.tau,
                reason: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }

    /// Potential value at distance `x`.
    pub fn psi(&self, x: f64) -> Result<f64> {
        check_distance(x)?;
        Ok(if x <= self.tau {
            x / self.tau
        } else {
            match self.kind {
                PotentialKind::Tent => x / (self.tau - 1.0),
                PotentialKind::BoundedConfidence => 1.0,
            }
        })
    }

    /// Derivative of the potential. At the kink `x == tau` the left
    /// (attractive) branch is used.
    pub fn psi_prime(&self, x: f64) -> Result<f64> {
        check_distance(x)?;
        Ok(self.slope(x))
    }

    #[inline]
    fn slope(&self, x: f64) -> f64 {
        if x <= self.tau {
            1.0 / self.tau
        } else {
            match self.kind {
                PotentialKind::Tent => 1.0 / (self.tau - 1.0),
                PotentialKind::BoundedConfidence => 0.0,
            }
        }
    }

    /// Signed amount `(alpha/2) * psi'(|d|) * d` that is subtracted from
    /// `o_i` and added to `o_j`, where `d = o_i - o_j`.
    #[inline]
    pub fn interaction_step(&self, alpha: f64, d: f64) -> f64 {
        0.5 * alpha * self.slope(d.abs()) * d
    }
}

fn check_distance(x: f64) -> Result<()> {
    if x < 0.0 || x.is_nan() {
        return Err(SimError::Domain(format!(
            "potential argument must be a non-negative distance, got {x}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn tent() -> PotentialSpec {
        PotentialSpec::tent(0.63).unwrap()
    }

    #[test]
    fn tent_values() {
        let p = tent();
        assert_eq!(p.psi(0.0).unwrap(), 0.0);
        assert!((p.psi(0.63).unwrap() - 1.0).abs() < EPS);
        assert!((p.psi(0.8).unwrap() - (-2.162162162162162)).abs() < 1e-12);
    }

    #[test]
    fn tent_derivative() {
        let p = tent();
        assert!((p.psi_prime(0.3).unwrap() - 1.5873015873015872).abs() < EPS);
        assert!((p.psi_prime(0.8).unwrap() - (-2.7027027027027026)).abs() < EPS);
        // kink takes the attractive branch
        assert_eq!(p.psi_prime(0.63).unwrap(), 1.0 / 0.63);
    }

    #[test]
    fn bounded_confidence_is_flat_outside() {
        let p = PotentialSpec::bounded_confidence(0.2).unwrap();
        assert_eq!(p.psi_prime(0.5).unwrap(), 0.0);
        assert_eq!(p.psi(0.5).unwrap(), 1.0);
        assert_eq!(p.interaction_step(0.1, 0.5), 0.0);
        assert_eq!(p.interaction_step(0.1, -0.5), 0.0);
    }

    #[test]
    fn step_values() {
        let p = tent();
        assert!((p.interaction_step(0.1, 0.1) - 0.007936507936507936).abs() < EPS);
        assert!((p.interaction_step(0.1, 0.8) - (-0.10810810810810811)).abs() < EPS);
        assert_eq!(p.interaction_step(0.1, 0.0), 0.0);
        assert_eq!(
            PotentialSpec::bounded_confidence(0.3)
                .unwrap()
                .interaction_step(0.7, 0.0),
            0.0
        );
    }

    #[test]
    fn negative_distance_is_domain_error() {
        assert!(matches!(tent().psi(-0.1), Err(SimError::Domain(_))));
        assert!(matches!(tent().psi_prime(-1e-9), Err(SimError::Domain(_))));
    }

    #[test]
    fn tau_bounds() {
        assert!(PotentialSpec::tent(0.0).is_err());
        assert!(PotentialSpec::tent(1.0).is_err());
        assert!(PotentialSpec::bounded_confidence(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn step_is_odd(tau in 0.01f64..0.99, alpha in 0.001f64..1.0, d in -1.0f64..1.0, bc in any::<bool>()) {
            let kind = if bc { PotentialKind::BoundedConfidence } else { PotentialKind::Tent };
            let p = PotentialSpec::new(kind, tau).unwrap();
            prop_assert_eq!(p.interaction_step(alpha, -d), -p.interaction_step(alpha, d));
        }

        #[test]
        fn attraction_and_repulsion_regions(tau in 0.01f64..0.99, alpha in 0.001f64..1.0, d in -1.0f64..1.0) {
            prop_assume!(d != 0.0);
            let p = PotentialSpec::tent(tau).unwrap();
            let step = p.interaction_step(alpha, d);
            if d.abs() <= tau {
                prop_assert_eq!(step.signum(), d.signum());
            } else {
                prop_assert_eq!(step.signum(), -d.signum());
            }
        }

        #[test]
        fn bounded_confidence_zero_outside(tau in 0.01f64..0.99, alpha in 0.001f64..1.0, d in -1.0f64..1.0) {
            prop_assume!(d.abs() > tau);
            let p = PotentialSpec::bounded_confidence(tau).unwrap();
            prop_assert_eq!(p.interaction_step(alpha, d), 0.0);
        }

        #[test]
        fn derivative_is_piecewise_constant(tau in 0.05f64..0.95, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = PotentialSpec::tent(tau).unwrap();
            let same_side = (a <= tau) == (b <= tau);
            let equal = p.psi_prime(a).unwrap() == p.psi_prime(b).unwrap();
            prop_assert_eq!(same_side, equal);
        }
    }
}
