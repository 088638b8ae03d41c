//! Random search over a hyperparameter grid, running one swarm per sampled
//! configuration and keeping the best.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SwarmConfig;
use crate::engine::search;
use crate::error::{Result, SwarmError};
use crate::utility::Utility;
use crate::vector::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub inertia: Vec<f64>,
    pub cognitive: Vec<f64>,
    pub social: Vec<f64>,
    pub repel: Vec<f64>,
    pub step_length: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            inertia: vec![0.1, 0.2, 0.3],
            cognitive: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            social: vec![0.2, 0.3, 0.4, 0.5, 0.6],
            repel: vec![0.01, 0.05, 0.1],
            step_length: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        }
    }
}

impl HyperGrid {
    fn axes(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("inertia", &self.inertia),
            ("cognitive", &self.cognitive),
            ("social", &self.social),
            ("repel", &self.repel),
            ("step_length", &self.step_length),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in self.axes() {
            if axis.is_empty() {
                return Err(SwarmError::invalid(name, "grid axis is empty"));
            }
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.axes().iter().map(|(_, a)| a.len()).product()
    }

    /// One configuration drawn uniformly from the grid, other fields from `base`.
    pub fn sample<R: Rng + ?Sized>(&self, base: &SwarmConfig, rng: &mut R) -> SwarmConfig {
        let mut pick = |axis: &[f64]| axis[rng.random_range(0..axis.len())];
        SwarmConfig {
            inertia: pick(&self.inertia),
            cognitive: pick(&self.cognitive),
            social: pick(&self.social),
            repel: pick(&self.repel),
            step_length: pick(&self.step_length),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub index: usize,
    pub config: SwarmConfig,
    pub f_best: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best_config: SwarmConfig,
    pub best: ParamVector,
    pub f_best: f64,
    pub runs: Vec<GridRun>,
}

/// Sample `budget` configurations (with replacement) and run a swarm for each.
/// Each run gets its own seed derived from `seed`; ties go to the earliest run.
pub fn grid_search(
    experts: &[ParamVector],
    utility: &dyn Utility,
    base: &SwarmConfig,
    grid: &HyperGrid,
    budget: usize,
    seed: u64,
) -> Result<GridOutcome> {
    grid.validate()?;
    if budget == 0 {
        return Err(SwarmError::invalid("budget", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<SwarmConfig> = (0..budget)
        .map(|_| {
            let run_seed = rng.random();
            grid.sample(base, &mut rng).with_seed(run_seed)
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let results = configs
        .par_iter()
        .map(|c| search(experts, utility, c))
        .collect::<Result<Vec<_>>>()?;

    let mut best_index = 0;
    for (k, r) in results.iter().enumerate() {
        if r.f_best > results[best_index].f_best {
            best_index = k;
        }
    }
    let runs = results
        .iter()
        .zip(&configs)
        .enumerate()
        .map(|(index, (r, c))| GridRun {
            index,
            config: c.clone(),
            f_best: r.f_best,
            iterations: r.state.iteration,
        })
        .collect();
    let winner = &results[best_index];
    Ok(GridOutcome {
        best_index,
        best_config: configs[best_index].clone(),
        best: winner.best.clone(),
        f_best: winner.f_best,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::Landscape;

    fn experts() -> Vec<ParamVector> {
        vec![
            ParamVector::new(vec![2.0, -1.0]).unwrap(),
            ParamVector::new(vec![-1.5, 2.5]).unwrap(),
            ParamVector::new(vec![0.5, 3.0]).unwrap(),
        ]
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(HyperGrid::default().cardinality(), 1350);
    }

    #[test]
    fn empty_axis_rejected() {
        let grid = HyperGrid {
            repel: vec![],
            ..Default::default()
        };
        assert!(grid.validate().is_err());
        let base = SwarmConfig::default();
        assert!(grid_search(&experts(), &Landscape::Sphere, &base, &grid, 3, 0).is_err());
    }

    #[test]
    fn samples_stay_on_grid() {
        let grid = HyperGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = grid.sample(&SwarmConfig::default(), &mut rng);
            assert!(grid.inertia.contains(&c.inertia));
            assert!(grid.social.contains(&c.social));
            assert!(grid.step_length.contains(&c.step_length));
        }
    }

    #[test]
    fn single_point_grid_is_one_config() {
        let grid = HyperGrid {
            inertia: vec![0.2],
            cognitive: vec![0.3],
            social: vec![0.4],
            repel: vec![0.05],
            step_length: vec![0.7],
        };
        let base = SwarmConfig {
            swarm_size: 6,
            ..Default::default()
        };
        let out = grid_search(&experts(), &Landscape::Sphere, &base, &grid, 4, 1).unwrap();
        assert_eq!(out.runs.len(), 4);
        for r in &out.runs {
            assert_eq!((r.config.inertia, r.config.step_length), (0.2, 0.7));
        }
        assert!(out.runs.iter().all(|r| r.f_best <= out.f_best));
    }

    #[test]
    fn deterministic_and_never_worse_than_experts() {
        let base = SwarmConfig {
            swarm_size: 8,
            max_iterations: 20,
            ..Default::default()
        };
        let a = grid_search(&experts(), &Landscape::Rastrigin, &base, &HyperGrid::default(), 6, 9).unwrap();
        let b = grid_search(&experts(), &Landscape::Rastrigin, &base, &HyperGrid::default(), 6, 9).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.runs, b.runs);
        let best_expert = experts()
            .iter()
            .map(|e| Landscape::Rastrigin.evaluate(e).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(a.f_best >= best_expert);
    }
}
