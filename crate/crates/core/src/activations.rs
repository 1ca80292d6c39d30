//! Scalar nonlinearities used by the networks and their Gaussian statistics.
//!
//! Kept as a closed enum (rather than trait objects) on purpose: the
//! function-correlation integrals pick closed forms by exhaustively matching
//! on the tag, and an open-ended activation set would silently lose those
//! fast paths. `relu`, `hardtanh` and `identity` serve as hidden-layer
//! activations; `tanh` and `hardtanh` serve as feature functions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Act {
    Relu,
    HardTanh,
    Identity,
    Tanh,
}

impl Act {
    /// Parse a tag as it appears in configs.
    pub fn from_name(name: &str) -> Result<Act> {
        match name {
            "relu" => Ok(Act::Relu),
            "hardtanh" => Ok(Act::HardTanh),
            "identity" => Ok(Act::Identity),
            "tanh" => Ok(Act::Tanh),
            other => Err(Error::Parameter(format!("unknown activation tag `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Act::Relu => "relu",
            Act::HardTanh => "hardtanh",
            Act::Identity => "identity",
            Act::Tanh => "tanh",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Act::Relu => x.max(0.0),
            Act::HardTanh => x.clamp(-1.0, 1.0),
            Act::Identity => x,
            Act::Tanh => x.tanh(),
        }
    }

    /// Pointwise derivative; at the (measure-zero) kinks the left limit 0 is
    /// used for ReLU and hardtanh.
    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Act::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Act::HardTanh => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Act::Identity => 1.0,
            Act::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Locations where the function (or its derivative) is non-smooth, used to
    /// split quadrature panels.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Act::Relu => &[0.0],
            Act::HardTanh => &[-1.0, 1.0],
            Act::Identity | Act::Tanh => &[],
        }
    }

    /// Whether f(-x) = -f(x); odd feature functions have E[f] = 0 exactly.
    pub fn is_odd(self) -> bool {
        match self {
            Act::Relu => false,
            Act::HardTanh | Act::Identity | Act::Tanh => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_tags() {
        for tag in ["relu", "hardtanh", "identity", "tanh"] {
            assert_eq!(Act::from_name(tag).unwrap().name(), tag);
        }
        assert!(Act::from_name("gelu").is_err());
    }

    #[test]
    fn pointwise_values() {
        assert_eq!(Act::Relu.apply(-1.5), 0.0);
        assert_eq!(Act::Relu.apply(2.0), 2.0);
        assert_eq!(Act::HardTanh.apply(3.0), 1.0);
        assert_eq!(Act::HardTanh.apply(-0.25), -0.25);
        assert_eq!(Act::Identity.deriv(9.0), 1.0);
        assert!((Act::Tanh.apply(0.5) - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences_away_from_kinks() {
        let eps = 1e-6;
        for act in [Act::Relu, Act::HardTanh, Act::Identity, Act::Tanh] {
            for &x in &[-1.7, -0.4, 0.3, 0.9, 1.8] {
                let fd = (act.apply(x + eps) - act.apply(x - eps)) / (2.0 * eps);
                assert!(
                    (act.deriv(x) - fd).abs() < 1e-6,
                    "{:?} at {x}: {} vs {}",
                    act,
                    act.deriv(x),
                    fd
                );
            }
        }
    }
}
