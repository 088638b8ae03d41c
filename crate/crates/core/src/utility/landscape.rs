//! Standard test landscapes, negated so the optimum is a maximum of 0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Utility;
use crate::error::EvalError;
use crate::vector::ParamVector;

/// `-sum(x_k^2)`, maximum 0 at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

/// `-(10 d + sum(x_k^2 - 10 cos(2 pi x_k)))`, maximum 0 at the origin.
pub fn rastrigin(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    -(10.0 * d + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>())
}

/// `-sum(100 (x_{k+1} - x_k^2)^2 + (1 - x_k)^2)`, maximum 0 at all-ones.
pub fn rosenbrock(x: &[f64]) -> f64 {
    -x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Landscape {
    Sphere,
    Rastrigin,
    Rosenbrock,
}

impl Landscape {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Landscape::Sphere),
            "rastrigin" => Some(Landscape::Rastrigin),
            "rosenbrock" => Some(Landscape::Rosenbrock),
            _ => None,
        }
    }

    pub fn optimum(&self, dim: usize) -> ParamVector {
        match self {
            Landscape::Rosenbrock => ParamVector::new(vec![1.0; dim]).expect("finite"),
            _ => ParamVector::zeros(dim),
        }
    }

    fn min_dim(&self) -> usize {
        match self {
            Landscape::Rosenbrock => 2,
            _ => 1,
        }
    }
}

impl Utility for Landscape {
    fn name(&self) -> &str {
        match self {
            Landscape::Sphere => "sphere",
            Landscape::Rastrigin => "rastrigin",
            Landscape::Rosenbrock => "rosenbrock",
        }
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        if x.dim() < self.min_dim() {
            return Err(EvalError::new(format!(
                "{} needs dimension >= {}, got {}",
                self.name(),
                self.min_dim(),
                x.dim()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(EvalError::new(format!("non-finite input {v}")));
        }
        Ok(match self {
            Landscape::Sphere => sphere(x),
            Landscape::Rastrigin => rastrigin(x),
            Landscape::Rosenbrock => rosenbrock(x),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn optima_are_zero() {
        for (l, dim) in [(Landscape::Sphere, 3), (Landscape::Rastrigin, 4), (Landscape::Rosenbrock, 2)] {
            assert_eq!(l.evaluate(&l.optimum(dim)).unwrap(), 0.0, "{l:?}");
        }
        assert_eq!(rosenbrock(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn rosenbrock_needs_two_dims() {
        assert!(Landscape::Rosenbrock.evaluate(&ParamVector::zeros(1)).is_err());
    }

    #[test]
    fn known_values() {
        assert_eq!(sphere(&[1.0, 2.0]), -5.0);
        // cos(2 pi) = 1 so each unit coordinate contributes 1.
        assert!((rastrigin(&[1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(rosenbrock(&[0.0, 0.0]), -1.0);
    }

    proptest! {
        #[test]
        fn no_probe_exceeds_zero(x in prop::collection::vec(-10.0f64..10.0, 2..8)) {
            prop_assert!(sphere(&x) <= 0.0);
            prop_assert!(rastrigin(&x) <= 1e-12);
            prop_assert!(rosenbrock(&x) <= 0.0);
        }
    }
}
