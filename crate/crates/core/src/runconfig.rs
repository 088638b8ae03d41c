//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every [`SwarmConfig`]
//! field is a key of the same name; the remaining keys select the utility,
//! the experts, and where outputs go. Unknown or repeated keys are rejected;
//! missing keys take the defaults listed in [`KNOWN_KEYS`]. Relative paths
//! resolve against the directory holding the config file, except outputs,
//! which resolve against `$MODEL_SWARMS_LOG_DIR` when it is set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::config::SwarmConfig;
use crate::error::{Result, SwarmError};
use crate::grid::HyperGrid;
use crate::token::{parse_matrix, DistributionSet};
use crate::utility::{
    ExternalUtility, ExternalUtilitySpec, LabeledDataset, Landscape, LinearProbe, MultiTaskUtility, Utility,
};
use crate::vector::ParamVector;

/// Environment variable naming the directory run outputs are written to.
pub const LOG_DIR_ENV: &str = "MODEL_SWARMS_LOG_DIR";

/// Every accepted key with its default (empty = unset).
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("swarm_size", "20"),
    ("step_length", "0.7"),
    ("step_decay", "0.95"),
    ("inertia", "0.2"),
    ("cognitive", "0.3"),
    ("social", "0.4"),
    ("repel", "0.05"),
    ("patience", "10"),
    ("restart_patience", "5"),
    ("max_iterations", "50"),
    ("drop_iterations", "0"),
    ("drop_particles", "0"),
    ("seed", ""),
    ("disable_crossover", "false"),
    ("zero_init_velocity", "false"),
    ("deterministic_randoms", "false"),
    ("tolerate_eval_failure", "false"),
    ("utility", "sphere"),
    ("probe_features", "4"),
    ("probe_classes", "3"),
    ("probe_per_class", "20"),
    ("probe_spread", "1.0"),
    ("probe_seed", "0"),
    ("probe_tasks", "2"),
    ("external_command", ""),
    ("external_workdir", ""),
    ("external_timeout", "60"),
    ("experts", ""),
    ("random_experts", "10"),
    ("random_dim", ""),
    ("random_range", "5.0"),
    ("expert_seed", "0"),
    ("diversity_a", ""),
    ("diversity_b", ""),
    ("diversity_base", ""),
    ("token_contexts", ""),
    ("token_targets", ""),
    ("log_path", "swarm.jsonl"),
    ("best_path", "best.mswm"),
    ("label", ""),
    ("grid_inertia", "0.1,0.2,0.3"),
    ("grid_cognitive", "0.1,0.2,0.3,0.4,0.5"),
    ("grid_social", "0.2,0.3,0.4,0.5,0.6"),
    ("grid_repel", "0.01,0.05,0.1"),
    ("grid_step_length", "0.5,0.6,0.7,0.8,0.9,1.0"),
];

/// Everything needed to rebuild a utility, stored in run-log headers so a
/// later `inject` can evaluate against the same objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UtilitySpec {
    Sphere,
    Rastrigin,
    Rosenbrock,
    LinearProbe {
        features: usize,
        classes: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    MultitaskProbe {
        features: usize,
        classes: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
        tasks: usize,
    },
    External(ExternalUtilitySpec),
}

impl UtilitySpec {
    fn probe_data(features: usize, classes: usize, per_class: usize, spread: f64, seed: u64) -> LabeledDataset {
        LabeledDataset::blobs(classes, features, per_class, spread, seed)
    }

    /// The particle dimension this utility requires, if it fixes one.
    pub fn natural_dim(&self) -> Option<usize> {
        match self {
            UtilitySpec::LinearProbe { features, classes, .. }
            | UtilitySpec::MultitaskProbe { features, classes, .. } => Some(features * classes + classes),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Utility>> {
        Ok(match self {
            UtilitySpec::Sphere => Box::new(Landscape::Sphere),
            UtilitySpec::Rastrigin => Box::new(Landscape::Rastrigin),
            UtilitySpec::Rosenbrock => Box::new(Landscape::Rosenbrock),
            &UtilitySpec::LinearProbe {
                features,
                classes,
                per_class,
                spread,
                seed,
            } => Box::new(LinearProbe::new(Self::probe_data(features, classes, per_class, spread, seed))),
            &UtilitySpec::MultitaskProbe {
                features,
                classes,
                per_class,
                spread,
                seed,
                tasks,
            } => {
                let tasks = (0..tasks as u64)
                    .map(|k| {
                        let data = Self::probe_data(features, classes, per_class, spread, seed.wrapping_add(k));
                        Box::new(LinearProbe::new(data)) as Box<dyn Utility>
                    })
                    .collect();
                Box::new(MultiTaskUtility::new(tasks)?)
            }
            UtilitySpec::External(spec) => Box::new(ExternalUtility::new(spec.clone())?),
        })
    }
}

/// Where the initial experts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpertSource {
    Checkpoints(Vec<PathBuf>),
    Random {
        count: usize,
        dim: usize,
        range: f64,
        seed: u64,
    },
}

impl ExpertSource {
    pub fn load(&self) -> Result<Vec<ParamVector>> {
        match self {
            ExpertSource::Checkpoints(paths) => paths.iter().map(load_checkpoint).collect(),
            &ExpertSource::Random {
                count,
                dim,
                range,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..count)
                    .map(|_| {
                        let v = (0..dim).map(|_| rng.random_range(-range..=range)).collect();
                        ParamVector::from_finite(v)
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiversitySettings {
    pub distinct: usize,
    pub repeats: usize,
    pub base: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    pub swarm: SwarmConfig,
    /// Whether `seed` was absent and drawn from entropy.
    pub seed_from_entropy: bool,
    pub utility: UtilitySpec,
    pub experts: ExpertSource,
    pub diversity: Option<DiversitySettings>,
    pub token_contexts: Vec<PathBuf>,
    pub token_targets: Option<PathBuf>,
    pub log_path: PathBuf,
    pub best_path: PathBuf,
    pub label: Option<String>,
    pub grid: HyperGrid,
}

struct Entries {
    values: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &'static str) -> (usize, &str) {
        match self.values.get(key) {
            Some((line, v)) => (*line, v.as_str()),
            None => (0, KNOWN_KEYS.iter().find(|(k, _)| *k == key).expect("known key").1),
        }
    }

    fn opt<T: FromStr>(&self, key: &'static str) -> Result<Option<T>> {
        let (line, v) = self.raw(key);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| SwarmError::Config {
            line,
            message: format!("cannot parse `{key}` value {v:?}"),
        })
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<T> {
        self.opt(key)?.ok_or_else(|| SwarmError::Config {
            line: self.raw(key).0,
            message: format!("`{key}` must not be empty"),
        })
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Vec<T>> {
        let (line, v) = self.raw(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| SwarmError::Config {
                    line,
                    message: format!("cannot parse `{key}` entry {s:?}"),
                })
            })
            .collect()
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfigFile {
    /// Parse a config. `base_dir` anchors relative input paths; `out_dir`
    /// anchors relative output paths.
    pub fn parse(text: &str, base_dir: &Path, out_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| SwarmError::Config {
                line,
                message: format!("expected key = value, found {trimmed:?}"),
            })?;
            let key = key.trim();
            let known = KNOWN_KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(k, _)| *k)
                .ok_or_else(|| SwarmError::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                })?;
            if values.insert(known, (line, value.trim().to_string())).is_some() {
                return Err(SwarmError::Config {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        let e = Entries { values };

        let seed: Option<u64> = e.opt("seed")?;
        let swarm = SwarmConfig {
            swarm_size: e.get("swarm_size")?,
            step_length: e.get("step_length")?,
            step_decay: e.get("step_decay")?,
            inertia: e.get("inertia")?,
            cognitive: e.get("cognitive")?,
            social: e.get("social")?,
            repel: e.get("repel")?,
            patience: e.get("patience")?,
            restart_patience: e.get("restart_patience")?,
            max_iterations: e.get("max_iterations")?,
            drop_iterations: e.get("drop_iterations")?,
            drop_particles: e.get("drop_particles")?,
            seed: seed.unwrap_or_else(rand::random),
            disable_crossover: e.get("disable_crossover")?,
            zero_init_velocity: e.get("zero_init_velocity")?,
            deterministic_randoms: e.get("deterministic_randoms")?,
            tolerate_eval_failure: e.get("tolerate_eval_failure")?,
        };
        swarm.validate()?;

        let probe = (
            e.get("probe_features")?,
            e.get("probe_classes")?,
            e.get("probe_per_class")?,
            e.get("probe_spread")?,
            e.get("probe_seed")?,
        );
        let utility_name: String = e.get("utility")?;
        let utility = match utility_name.as_str() {
            "sphere" => UtilitySpec::Sphere,
            "rastrigin" => UtilitySpec::Rastrigin,
            "rosenbrock" => UtilitySpec::Rosenbrock,
            "linear-probe" => UtilitySpec::LinearProbe {
                features: probe.0,
                classes: probe.1,
                per_class: probe.2,
                spread: probe.3,
                seed: probe.4,
            },
            "multitask-probe" => UtilitySpec::MultitaskProbe {
                features: probe.0,
                classes: probe.1,
                per_class: probe.2,
                spread: probe.3,
                seed: probe.4,
                tasks: e.get("probe_tasks")?,
            },
            "external" => {
                let spec = ExternalUtilitySpec {
                    command: e.get("external_command")?,
                    workdir: e.opt::<String>("external_workdir")?.map(|w| resolve(base_dir, &w)),
                    timeout_secs: e.get("external_timeout")?,
                };
                spec.validate()?;
                UtilitySpec::External(spec)
            }
            other => {
                return Err(SwarmError::Config {
                    line: e.raw("utility").0,
                    message: format!("unknown utility {other:?}"),
                })
            }
        };
        if let UtilitySpec::LinearProbe { classes, features, .. } | UtilitySpec::MultitaskProbe { classes, features, .. } =
            utility
        {
            if classes < 2 || features == 0 {
                return Err(SwarmError::invalid("probe", "need >= 1 feature and >= 2 classes"));
            }
        }

        let paths: Vec<String> = e.list("experts")?;
        let experts = if paths.is_empty() {
            let dim = match e.opt("random_dim")? {
                Some(d) => d,
                None => utility.natural_dim().unwrap_or(10),
            };
            ExpertSource::Random {
                count: e.get("random_experts")?,
                dim,
                range: e.get("random_range")?,
                seed: e.get("expert_seed")?,
            }
        } else {
            ExpertSource::Checkpoints(paths.iter().map(|p| resolve(base_dir, p)).collect())
        };

        let diversity = match (e.opt("diversity_a")?, e.opt("diversity_b")?) {
            (None, None) => None,
            (Some(distinct), Some(repeats)) => Some(DiversitySettings {
                distinct,
                repeats,
                base: e.opt("diversity_base")?.unwrap_or(distinct * repeats),
            }),
            _ => {
                return Err(SwarmError::Config {
                    line: 0,
                    message: "diversity_a and diversity_b must be set together".into(),
                })
            }
        };

        let token_contexts = e
            .list::<String>("token_contexts")?
            .iter()
            .map(|p| resolve(base_dir, p))
            .collect();
        let token_targets = e.opt::<String>("token_targets")?.map(|p| resolve(base_dir, &p));

        Ok(Self {
            swarm,
            seed_from_entropy: seed.is_none(),
            utility,
            experts,
            diversity,
            token_contexts,
            token_targets,
            log_path: resolve(out_dir, &e.get::<String>("log_path")?),
            best_path: resolve(out_dir, &e.get::<String>("best_path")?),
            label: e.opt("label")?,
            grid: HyperGrid {
                inertia: e.list("grid_inertia")?,
                cognitive: e.list("grid_cognitive")?,
                social: e.list("grid_social")?,
                repel: e.list("grid_repel")?,
                step_length: e.list("grid_step_length")?,
            },
        })
    }

    /// Read a config file; outputs go to `$MODEL_SWARMS_LOG_DIR` if set,
    /// else next to the config.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SwarmError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = std::env::var_os(LOG_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| base.clone());
        Self::parse(&text, &base, &out)
    }

    /// Load the token-swarm inputs: one distribution file per context, and a
    /// target file with one distribution per context.
    pub fn token_inputs(&self) -> Result<(Vec<DistributionSet>, Vec<Vec<f64>>)> {
        if self.token_contexts.is_empty() {
            return Err(SwarmError::invalid("token_contexts", "at least one context file is required"));
        }
        let targets_path = self
            .token_targets
            .as_ref()
            .ok_or_else(|| SwarmError::invalid("token_targets", "required for token runs"))?;
        let contexts = self
            .token_contexts
            .iter()
            .map(DistributionSet::load)
            .collect::<Result<Vec<_>>>()?;
        let text = std::fs::read_to_string(targets_path).map_err(|e| SwarmError::io(targets_path, e))?;
        Ok((contexts, parse_matrix(&text)?))
    }
}
