//! Scalar utility functions. Every utility is maximized.

pub mod external;
pub mod landscape;
pub mod probe;

use crate::error::{EvalError, Result, SwarmError};
use crate::vector::ParamVector;

pub use external::{ExternalUtility, ExternalUtilitySpec};
pub use landscape::Landscape;
pub use probe::{LabeledDataset, LinearProbe};

pub trait Utility: Send + Sync {
    fn name(&self) -> &str;

    /// Whether repeated evaluation of the same vector gives the same value.
    fn deterministic(&self) -> bool {
        true
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError>;
}

impl<U: Utility + ?Sized> Utility for Box<U> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn deterministic(&self) -> bool {
        (**self).deterministic()
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        (**self).evaluate(x)
    }
}

/// Adapts a closure into a [`Utility`].
pub struct FnUtility<F> {
    name: String,
    f: F,
}

impl<F> FnUtility<F>
where
    F: Fn(&ParamVector) -> Result<f64, EvalError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Utility for FnUtility<F>
where
    F: Fn(&ParamVector) -> Result<f64, EvalError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        (self.f)(x)
    }
}

/// Per-task scores, each nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores(Vec<f64>);

impl TaskScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(SwarmError::invalid("scores", "at least one task score is required"));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(SwarmError::invalid("scores", format!("score {s} is negative or non-finite")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `m / sum(1 / s_k)`; zero if any score is zero.
pub fn harmonic_mean_utility(parts: &TaskScores) -> f64 {
    let scores = parts.as_slice();
    if scores.contains(&0.0) {
        return 0.0;
    }
    scores.len() as f64 / scores.iter().map(|s| 1.0 / s).sum::<f64>()
}

/// Harmonic mean of several nonnegative task utilities.
pub struct MultiTaskUtility {
    name: String,
    tasks: Vec<Box<dyn Utility>>,
}

impl MultiTaskUtility {
    pub fn new(tasks: Vec<Box<dyn Utility>>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(SwarmError::invalid("tasks", "at least one task is required"));
        }
        let name = format!(
            "harmonic({})",
            tasks.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
        );
        Ok(Self { name, tasks })
    }
}

impl Utility for MultiTaskUtility {
    fn name(&self) -> &str {
        &self.name
    }

    fn deterministic(&self) -> bool {
        self.tasks.iter().all(|t| t.deterministic())
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        let scores = self
            .tasks
            .iter()
            .map(|t| t.evaluate(x))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = TaskScores::new(scores).map_err(|e| EvalError::new(e.to_string()))?;
        Ok(harmonic_mean_utility(&scores))
    }
}
