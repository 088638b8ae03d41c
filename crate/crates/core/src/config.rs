use serde::{Deserialize, Serialize};

use crate::error::{Result, SwarmError};

/// Every knob of the swarm search.
///
/// The force coefficients and step length default to the centre of
/// [`HyperGrid::default`](crate::grid::HyperGrid), the usual search range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    /// Particles after crossover population (N).
    pub swarm_size: usize,
    /// Initial step length (lambda).
    pub step_length: f64,
    /// Multiplicative step-length decay applied after each iteration.
    pub step_decay: f64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub repel: f64,
    /// Stop once the global best has not strictly improved for this many iterations.
    pub patience: usize,
    /// Reset a particle to its personal best after this many non-improving iterations.
    pub restart_patience: usize,
    pub max_iterations: usize,
    /// Probability of skipping every evaluation in an iteration (Drop-K).
    pub drop_iterations: f64,
    /// Fraction of particles whose evaluation is skipped each iteration (Drop-N).
    pub drop_particles: f64,
    pub seed: u64,
    /// Populate by duplicating sampled experts instead of interpolating.
    pub disable_crossover: bool,
    /// Start every particle with a zero velocity.
    pub zero_init_velocity: bool,
    /// Fix all velocity randomness factors at 1.
    pub deterministic_randoms: bool,
    /// Treat a failed evaluation as skipped instead of aborting the step.
    pub tolerate_eval_failure: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            swarm_size: 20,
            step_length: 0.7,
            step_decay: 0.95,
            inertia: 0.2,
            cognitive: 0.3,
            social: 0.4,
            repel: 0.05,
            patience: 10,
            restart_patience: 5,
            max_iterations: 50,
            drop_iterations: 0.0,
            drop_particles: 0.0,
            seed: 0,
            disable_crossover: false,
            zero_init_velocity: false,
            deterministic_randoms: false,
            tolerate_eval_failure: false,
        }
    }
}

fn unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SwarmError::invalid(name, format!("{value} outside [0, 1]")))
    }
}

impl SwarmConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Disable all three randomness sites (crossover, starting velocity, walk factors).
    pub fn without_randomness(mut self) -> Self {
        self.disable_crossover = true;
        self.zero_init_velocity = true;
        self.deterministic_randoms = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return Err(SwarmError::invalid("swarm_size", "must be at least 1"));
        }
        unit_interval("inertia", self.inertia)?;
        unit_interval("cognitive", self.cognitive)?;
        unit_interval("social", self.social)?;
        unit_interval("repel", self.repel)?;
        unit_interval("drop_iterations", self.drop_iterations)?;
        unit_interval("drop_particles", self.drop_particles)?;
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(SwarmError::invalid(
                "step_decay",
                format!("{} outside (0, 1]", self.step_decay),
            ));
        }
        if !(self.step_length > 0.0 && self.step_length.is_finite()) {
            return Err(SwarmError::invalid("step_length", "must be positive and finite"));
        }
        if self.patience == 0 {
            return Err(SwarmError::invalid("patience", "must be at least 1"));
        }
        if self.restart_patience == 0 {
            return Err(SwarmError::invalid("restart_patience", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(SwarmError::invalid("max_iterations", "must be at least 1"));
        }
        if self.drop_iterations > 0.0 && self.drop_particles > 0.0 {
            return Err(SwarmError::invalid(
                "drop_particles",
                "drop_iterations and drop_particles cannot both be nonzero",
            ));
        }
        Ok(())
    }
}
