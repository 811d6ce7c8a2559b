//! Smallness conditions on the obstacle Lipschitz constants and the constants
//! of the `L^p` a priori estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// Well-posedness of the mean-field equation: `g1^p + g2^p < 2^(2 - 3p/2)`.
    Existence,
    /// Chaos for `Y`: `2^(5p/2 - 2) (g1^p + g2^p) < 1`.
    ChaosY,
    /// Chaos for the whole solution with `2 <= kappa < p`.
    ChaosFull { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub threshold: f64,
    pub value: f64,
    /// `threshold - (g1^p + g2^p)`.
    pub margin: f64,
}

/// Threshold on `g1^p + g2^p` for the given regime.
pub fn threshold(p: f64, regime: Regime) -> Result<f64> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::param("p", format!("need p >= 2, got {p}")));
    }
    Ok(match regime {
        Regime::Existence => 2f64.powf(2.0 - 1.5 * p),
        Regime::ChaosY => 2f64.powf(2.0 - 2.5 * p),
        Regime::ChaosFull { kappa } => {
            if !(kappa >= 2.0 && kappa < p) {
                return Err(Error::param("kappa", format!("need 2 <= kappa < p, got kappa={kappa}, p={p}")));
            }
            ((p - kappa) / (2.0 * p)).powf(p / kappa) * 2f64.powf(2.0 - 2.5 * p)
        }
    })
}

pub fn check_smallness(p: f64, gamma1: f64, gamma2: f64, regime: Regime) -> Result<Verdict> {
    if !(gamma1 >= 0.0 && gamma2 >= 0.0) {
        return Err(Error::param("gamma", format!("constants must be >= 0, got ({gamma1}, {gamma2})")));
    }
    let threshold = threshold(p, regime)?;
    let value = gamma1.powf(p) + gamma2.powf(p);
    Ok(Verdict {
        pass: value < threshold,
        threshold,
        value,
        margin: threshold - value,
    })
}

/// `(eta, beta)` with `eta <= 1 / C^2` and `beta >= 2C + 3/eta`.
pub fn select_beta_eta(c_f: f64) -> (f64, f64) {
    let mut eta = if c_f > 0.0 { (1.0 / (c_f * c_f)).min(1.0) } else { 1.0 };
    while eta * c_f * c_f > 1.0 {
        eta = f64::from_bits(eta.to_bits() - 1);
    }
    let mut beta = 2.0 * c_f + 3.0 / eta;
    // both constraints must hold as evaluated in floating point
    while beta - 2.0 * c_f - 3.0 / eta < 0.0 {
        beta = f64::from_bits(beta.to_bits() + 1);
    }
    (eta, beta)
}

/// Interval length and contraction constant of the backward interval-by-interval
/// fixed-point construction for the measure-flow map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalContraction {
    pub eta: f64,
    pub beta: f64,
    /// Supremum of admissible interval lengths (infinite when `C_f = 0`).
    pub delta_max: f64,
    /// Chosen interval length, `min(T, fraction * delta_max)`.
    pub delta: f64,
    /// Contraction constant of the `p`-th power of the weighted norm.
    pub alpha: f64,
}

impl IntervalContraction {
    /// Contraction factor per Picard sweep for the norm itself, `alpha^(1/p)`.
    pub fn rate(&self, p: f64) -> f64 {
        self.alpha.powf(1.0 / p)
    }
}

/// `alpha(delta) = 2^(p/2-1) delta^(p/2) eta^p C^p + 2^(3p/2-2) (g1^p + g2^p)`
/// and the largest `delta` keeping `alpha < 1`.
pub fn interval_contraction(
    p: f64,
    c_f: f64,
    gamma1: f64,
    gamma2: f64,
    horizon: f64,
    fraction: f64,
) -> Result<IntervalContraction> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param("fraction", format!("must be in (0, 1), got {fraction}")));
    }
    let verdict = check_smallness(p, gamma1, gamma2, Regime::Existence)?;
    if !verdict.pass {
        return Err(Error::Refused(format!(
            "smallness condition fails: g1^p + g2^p = {} >= {}",
            verdict.value, verdict.threshold
        )));
    }
    let (eta, beta) = select_beta_eta(c_f);
    let obstacle_part = 2f64.powf(1.5 * p - 2.0) * verdict.value;
    let driver_coef = 2f64.powf(p / 2.0 - 1.0) * (eta * c_f).powf(p);
    let delta_max = if driver_coef > 0.0 {
        ((1.0 - obstacle_part) / driver_coef).powf(2.0 / p)
    } else {
        f64::INFINITY
    };
    let delta = (fraction * delta_max).min(horizon);
    let alpha = driver_coef * delta.powf(p / 2.0) + obstacle_part;
    Ok(IntervalContraction {
        eta,
        beta,
        delta_max,
        delta,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn existence_example() {
        let v = check_smallness(2.0, 0.5, 0.4, Regime::Existence).unwrap();
        assert!(v.pass);
        assert_eq!(v.threshold, 0.5);
        assert!((v.margin - 0.09).abs() < 1e-15);
        assert!(check_smallness(2.0, 0.0, 0.0, Regime::Existence).unwrap().pass);
    }

    #[test]
    fn chaos_examples() {
        let v = check_smallness(2.0, 0.2, 0.2, Regime::ChaosY).unwrap();
        assert!(v.pass);
        assert_eq!(v.threshold, 0.125);
        assert!((v.margin - 0.045).abs() < 1e-15);

        let v = check_smallness(4.0, 0.1, 0.1, Regime::ChaosFull { kappa: 2.0 }).unwrap();
        assert_eq!(v.threshold, 2.44140625e-4);
        assert!(v.pass);
        assert!((v.value - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn parameter_errors() {
        assert!(check_smallness(1.5, 0.1, 0.1, Regime::Existence).is_err());
        assert!(check_smallness(4.0, 0.1, 0.1, Regime::ChaosFull { kappa: 4.0 }).is_err());
        assert!(check_smallness(4.0, 0.1, 0.1, Regime::ChaosFull { kappa: 1.0 }).is_err());
        assert!(check_smallness(2.0, -0.1, 0.1, Regime::Existence).is_err());
    }

    #[test]
    fn beta_eta_examples() {
        assert_eq!(select_beta_eta(1.0), (1.0, 5.0));
        assert_eq!(select_beta_eta(0.0), (1.0, 3.0));
        assert_eq!(select_beta_eta(2.0), (0.25, 16.0));
    }

    #[test]
    fn interval_contraction_keeps_alpha_below_one() {
        let ic = interval_contraction(2.0, 0.5, 0.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(ic.delta_max, 4.0);
        assert_eq!(ic.delta, 1.0);
        assert!((ic.alpha - 0.25).abs() < 1e-15);

        let ic = interval_contraction(2.0, 0.0, 0.1, 0.1, 1.0, 0.5).unwrap();
        assert!(ic.delta_max.is_infinite());
        assert!((ic.alpha - 0.04).abs() < 1e-15);

        assert!(matches!(
            interval_contraction(2.0, 1.0, 0.6, 0.6, 1.0, 0.5),
            Err(Error::Refused(_))
        ));
    }

    proptest! {
        #[test]
        fn smallness_is_monotone(p in 2.0f64..6.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0, d in 0.0f64..0.5) {
            for regime in [Regime::Existence, Regime::ChaosY, Regime::ChaosFull { kappa: 2.0 }] {
                if let Regime::ChaosFull { kappa } = regime { if kappa >= p { continue; } }
                let a = check_smallness(p, g1, g2, regime).unwrap();
                let b = check_smallness(p, g1 + d, g2, regime).unwrap();
                let c = check_smallness(p, g1, g2 + d, regime).unwrap();
                prop_assert!(a.pass || !b.pass);
                prop_assert!(a.pass || !c.pass);
            }
        }

        #[test]
        fn beta_eta_constraints_hold(c in 0.0f64..50.0) {
            let (eta, beta) = select_beta_eta(c);
            prop_assert!(eta * c * c <= 1.0);
            prop_assert!(beta - 2.0 * c - 3.0 / eta >= 0.0);
        }

        #[test]
        fn interval_alpha_below_one(p in 2.0f64..5.0, c in 0.0f64..5.0, g in 0.0f64..1.0, frac in 0.05f64..0.95) {
            let limit = 2f64.powf(2.0 - 1.5 * p);
            let g1 = g * (limit / 2.0).powf(1.0 / p);
            let ic = interval_contraction(p, c, g1, g1 * 0.5, 1.0, frac).unwrap();
            prop_assert!(ic.alpha < 1.0);
            prop_assert!(ic.delta > 0.0 && ic.delta <= 1.0);
        }
    }
}
