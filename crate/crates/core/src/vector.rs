use std::ops::Deref;

use crate::error::{Result, SwarmError};

/// A point (or direction) in weight space. Every coordinate is finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SwarmError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Caller guarantees finiteness.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(SwarmError::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        other.ensure_dim(self.dim())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quantize every coordinate through `f32`, the precision used on disk.
    pub fn quantized(&self) -> ParamVector {
        Self(self.0.iter().map(|&v| v as f32 as f64).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = SwarmError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Check that every vector shares the dimension of the first; returns it.
pub fn common_dim<'a>(vectors: impl IntoIterator<Item = &'a ParamVector>) -> Result<Option<usize>> {
    let mut dim = None;
    for v in vectors {
        match dim {
            None => dim = Some(v.dim()),
            Some(d) => v.ensure_dim(d)?,
        }
    }
    Ok(dim)
}
