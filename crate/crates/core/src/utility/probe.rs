//! Validation accuracy of a linear classifier whose weights are the particle.
//!
//! Layout: `classes` rows of `features` weights (class-major), then `classes` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Utility;
use crate::error::{EvalError, Result, SwarmError};
use crate::vector::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: usize,
    pub classes: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: usize, classes: usize, points: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(SwarmError::invalid("dataset", "no samples"));
        }
        if features == 0 || classes < 2 {
            return Err(SwarmError::invalid("dataset", "need >= 1 feature and >= 2 classes"));
        }
        if points.len() != labels.len() {
            return Err(SwarmError::invalid("dataset", "points and labels differ in length"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != features) {
            return Err(SwarmError::DimensionMismatch {
                expected: features,
                found: p.len(),
            });
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            return Err(SwarmError::invalid("dataset", format!("label {l} >= {classes} classes")));
        }
        Ok(Self {
            features,
            classes,
            points,
            labels,
        })
    }

    pub fn particle_dim(&self) -> usize {
        self.features * self.classes + self.classes
    }

    /// Two balanced classes on either side of a random hyperplane through the
    /// origin, with no point closer than `margin` to it.
    pub fn separable_pair(features: usize, per_class: usize, margin: f64, seed: u64) -> (Self, ParamVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal: Vec<f64> = (0..features).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        normal.iter_mut().for_each(|v| *v /= norm);

        let mut points = Vec::with_capacity(2 * per_class);
        let mut labels = Vec::with_capacity(2 * per_class);
        let mut counts = [0usize; 2];
        while counts[0] < per_class || counts[1] < per_class {
            let p: Vec<f64> = (0..features).map(|_| rng.random_range(-3.0..3.0)).collect();
            let side = p.iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>();
            if side.abs() < margin {
                continue;
            }
            let label = usize::from(side > 0.0);
            if counts[label] < per_class {
                counts[label] += 1;
                points.push(p);
                labels.push(label);
            }
        }
        let mut separator = vec![0.0; 2 * features + 2];
        for k in 0..features {
            separator[k] = -normal[k];
            separator[features + k] = normal[k];
        }
        let dataset = Self::new(features, 2, points, labels).expect("generated dataset is valid");
        (dataset, ParamVector::new(separator).expect("finite"))
    }

    /// `classes` clusters with uniform jitter of half-width `spread` around random centres.
    pub fn blobs(classes: usize, features: usize, per_class: usize, spread: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..features).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..per_class {
            for (label, c) in centres.iter().enumerate() {
                points.push(c.iter().map(|m| m + rng.random_range(-spread..=spread)).collect());
                labels.push(label);
            }
        }
        Self::new(features, classes, points, labels).expect("generated dataset is valid")
    }
}

pub struct LinearProbe {
    name: String,
    data: LabeledDataset,
}

impl LinearProbe {
    pub fn new(data: LabeledDataset) -> Self {
        Self {
            name: format!("linear-probe({}x{})", data.features, data.classes),
            data,
        }
    }

    /// Construct for particles of dimension `dim`, rejecting a layout mismatch up front.
    pub fn for_dim(data: LabeledDataset, dim: usize) -> Result<Self> {
        if dim != data.particle_dim() {
            return Err(SwarmError::DimensionMismatch {
                expected: data.particle_dim(),
                found: dim,
            });
        }
        Ok(Self::new(data))
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.data
    }

    /// Argmax class of the linear scorer; ties go to the lowest class.
    pub fn predict(&self, weights: &[f64], point: &[f64]) -> usize {
        let (f, c) = (self.data.features, self.data.classes);
        let bias = &weights[f * c..];
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for class in 0..c {
            let row = &weights[class * f..(class + 1) * f];
            let score = row.iter().zip(point).map(|(w, x)| w * x).sum::<f64>() + bias[class];
            if score > best_score {
                best = class;
                best_score = score;
            }
        }
        best
    }

    pub fn accuracy(&self, weights: &ParamVector) -> Result<f64> {
        weights.ensure_dim(self.data.particle_dim())?;
        let correct = self
            .data
            .points
            .iter()
            .zip(&self.data.labels)
            .filter(|(p, &l)| self.predict(weights, p) == l)
            .count();
        Ok(correct as f64 / self.data.points.len() as f64)
    }
}

impl Utility for LinearProbe {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        self.accuracy(x).map_err(|e| EvalError::new(e.to_string()))
    }
}
