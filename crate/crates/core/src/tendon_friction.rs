//! Static affine tendon transmission friction.
//!
//! The friction magnitude is `clamp(slope · f_t + intercept, 0, f_t)`. While
//! the actuator pulls the tendon through (`sign(l̇) = +1`) it reduces the
//! tension delivered to the finger; when the finger back-drives the tendon
//! (`−1`) it adds to it. A held tendon (`0`) can carry any friction in
//! `[0, magnitude]`; the point value reported for it is zero.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TendonFriction {
    /// Friction per unit actuator tension (dimensionless).
    pub slope: f64,
    /// Offset (N). May be negative; the magnitude is floored at zero.
    pub intercept: f64,
}

impl TendonFriction {
    pub fn magnitude(&self, tension: f64) -> f64 {
        (self.slope * tension + self.intercept).clamp(0.0, tension.max(0.0))
    }

    /// Signed friction for a given direction of tendon excursion.
    pub fn signed(&self, tension: f64, direction: i8) -> f64 {
        match direction.signum() {
            1 => self.magnitude(tension),
            -1 => -self.magnitude(tension),
            _ => 0.0,
        }
    }

    /// Tension reaching the joints.
    pub fn delivered(&self, tension: f64, direction: i8) -> f64 {
        tension - self.signed(tension, direction)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TendonFrictionModel {
    pub tendons: Vec<TendonFriction>,
}

impl TendonFrictionModel {
    pub fn frictionless(n: usize) -> Self {
        TendonFrictionModel {
            tendons: vec![TendonFriction::default(); n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, t) in self.tendons.iter().enumerate() {
            if !(0.0..1.0).contains(&t.slope) {
                return Err(Error::validation(
                    format!("tendon_friction[{k}].slope"),
                    format!("{} is outside [0, 1)", t.slope),
                ));
            }
            if !t.intercept.is_finite() {
                return Err(Error::validation(
                    format!("tendon_friction[{k}].intercept"),
                    "must be finite",
                ));
            }
        }
        Ok(())
    }

    fn check_tension(&self, tension: &DVector<f64>) -> Result<()> {
        check_len("tendon tensions", self.tendons.len(), tension.len())?;
        if let Some(k) = tension.iter().position(|&f| f < 0.0 || f.is_nan()) {
            return Err(Error::Contract(format!(
                "tendon {k} tension {} N is negative",
                tension[k]
            )));
        }
        Ok(())
    }

    /// Signed friction `f_f` per tendon.
    pub fn friction_force(&self, tension: &DVector<f64>, ldot_sign: &[i8]) -> Result<DVector<f64>> {
        self.check_tension(tension)?;
        check_len("excursion directions", self.tendons.len(), ldot_sign.len())?;
        Ok(DVector::from_fn(self.tendons.len(), |k, _| {
            self.tendons[k].signed(tension[k], ldot_sign[k])
        }))
    }

    /// `[0, magnitude]` per tendon: friction admissible while the tendon is held.
    pub fn hold_bracket(&self, tension: &DVector<f64>) -> Result<Vec<[f64; 2]>> {
        self.check_tension(tension)?;
        Ok(self
            .tendons
            .iter()
            .zip(tension.iter())
            .map(|(t, &f)| [0.0, t.magnitude(f)])
            .collect())
    }

    pub fn delivered(&self, tension: &DVector<f64>, ldot_sign: &[i8]) -> Result<DVector<f64>> {
        Ok(tension - self.friction_force(tension, ldot_sign)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tension_carries_no_friction() {
        let t = TendonFriction {
            slope: 0.3,
            intercept: 0.5,
        };
        assert_eq!(t.magnitude(0.0), 0.0);
    }

    #[test]
    fn pathological_friction_clamps_delivery_at_zero() {
        let t = TendonFriction {
            slope: 0.9,
            intercept: 3.0,
        };
        assert_eq!(t.delivered(2.0, 1), 0.0);
    }

    #[test]
    fn held_tendon_bracket() {
        let m = TendonFrictionModel {
            tendons: vec![TendonFriction {
                slope: 0.25,
                intercept: 0.5,
            }],
        };
        let f = DVector::from_vec(vec![6.0]);
        assert_eq!(m.hold_bracket(&f).unwrap(), vec![[0.0, 2.0]]);
        assert_eq!(m.friction_force(&f, &[0]).unwrap()[0], 0.0);
        assert_eq!(m.friction_force(&f, &[-1]).unwrap()[0], -2.0);
    }

    #[test]
    fn negative_tension_is_a_contract_violation() {
        let m = TendonFrictionModel::frictionless(1);
        let err = m
            .friction_force(&DVector::from_vec(vec![-1.0]), &[1])
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn slope_must_be_below_one() {
        let m = TendonFrictionModel {
            tendons: vec![TendonFriction {
                slope: 1.0,
                intercept: 0.0,
            }],
        };
        assert!(m.validate().is_err());
    }
}
