//! Per-particle arithmetic: crossover population, starting velocity, and the
//! velocity/location updates. Everything here is a pure function of its
//! inputs; randomness enters only through explicit draws or a caller-supplied
//! RNG.

use log::warn;
use rand::Rng;

use crate::config::SwarmConfig;
use crate::error::{Result, SwarmError};
use crate::vector::{common_dim, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub id: usize,
    pub x: ParamVector,
    pub v: ParamVector,
    pub p: ParamVector,
    /// Utility of the current location; `None` when this iteration skipped evaluation.
    pub f_x: Option<f64>,
    pub f_p: f64,
    /// Iterations since `f_p` last strictly improved.
    pub stagnation: usize,
}

/// Walk randomness factors for one velocity update, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomDraw {
    pub r_v: f64,
    pub r_p: f64,
    pub r_g: f64,
    pub r_w: f64,
}

impl RandomDraw {
    pub const ONES: RandomDraw = RandomDraw {
        r_v: 1.0,
        r_p: 1.0,
        r_g: 1.0,
        r_w: 1.0,
    };

    pub fn new(r_v: f64, r_p: f64, r_g: f64, r_w: f64) -> Result<Self> {
        let draw = Self { r_v, r_p, r_g, r_w };
        for (name, r) in [("r_v", r_v), ("r_p", r_p), ("r_g", r_g), ("r_w", r_w)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SwarmError::invalid(name, format!("{r} outside [0, 1]")));
            }
        }
        Ok(draw)
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            r_v: rng.random(),
            r_p: rng.random(),
            r_g: rng.random(),
            r_w: rng.random(),
        }
    }
}

/// The four products `r * phi` that scale each force, after applying the
/// deterministic-randoms ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceWeights {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub repel: f64,
}

impl ForceWeights {
    pub fn new(cfg: &SwarmConfig, draw: &RandomDraw) -> Self {
        let d = if cfg.deterministic_randoms {
            RandomDraw::ONES
        } else {
            *draw
        };
        Self {
            inertia: d.r_v * cfg.inertia,
            cognitive: d.r_p * cfg.cognitive,
            social: d.r_g * cfg.social,
            repel: d.r_w * cfg.repel,
        }
    }

    /// Normalizer C. The repel product enters positively even though its force is subtracted.
    pub fn normalizer(&self) -> f64 {
        self.inertia + self.cognitive + self.social + self.repel
    }
}

/// `t * a + (1 - t) * b`, coordinatewise.
pub fn interpolate(a: &ParamVector, b: &ParamVector, t: f64) -> Result<ParamVector> {
    b.ensure_dim(a.dim())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(SwarmError::invalid("t", format!("{t} outside [0, 1]")));
    }
    Ok(ParamVector::from_finite(
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| t * x + (1.0 - t) * y)
            .collect(),
    ))
}

/// One crossover child: parents by index into the seed experts and the mixing weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverDraw {
    pub a: usize,
    pub b: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<ParamVector>,
    pub warnings: Vec<String>,
}

/// Draw the parents and weights for `swarm_size - experts` children.
///
/// Parents of one child are distinct whenever more than one expert exists.
/// With crossover disabled only `a` is meaningful and the child duplicates it.
pub fn crossover_draws<R: Rng + ?Sized>(
    n_experts: usize,
    swarm_size: usize,
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Vec<CrossoverDraw> {
    (n_experts..swarm_size)
        .map(|_| {
            let a = rng.random_range(0..n_experts);
            if cfg.disable_crossover {
                return CrossoverDraw { a, b: a, t: 1.0 };
            }
            let b = if n_experts > 1 {
                let b = rng.random_range(0..n_experts - 1);
                if b >= a {
                    b + 1
                } else {
                    b
                }
            } else {
                a
            };
            CrossoverDraw { a, b, t: rng.random() }
        })
        .collect()
}

/// Expand the seed experts with children built from explicit draws.
pub fn populate_from_draws(experts: &[ParamVector], draws: &[CrossoverDraw]) -> Result<Population> {
    if experts.is_empty() {
        return Err(SwarmError::EmptyExperts);
    }
    common_dim(experts)?;
    let mut warnings = Vec::new();
    let mut members = experts.to_vec();
    for draw in draws {
        for idx in [draw.a, draw.b] {
            if idx >= experts.len() {
                return Err(SwarmError::invalid(
                    "crossover parent",
                    format!("index {idx} out of range for {} experts", experts.len()),
                ));
            }
        }
        members.push(interpolate(&experts[draw.a], &experts[draw.b], draw.t)?);
    }
    if experts.len() == 1 && !draws.is_empty() {
        let msg = "only one seed expert: crossover degenerates to duplication".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Population { members, warnings })
}

/// Grow `experts` to `swarm_size` particles by pairwise interpolation.
pub fn populate<R: Rng + ?Sized>(
    experts: &[ParamVector],
    swarm_size: usize,
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Result<Population> {
    if experts.is_empty() {
        return Err(SwarmError::EmptyExperts);
    }
    if swarm_size < experts.len() {
        return Err(SwarmError::invalid(
            "swarm_size",
            format!("{swarm_size} is smaller than the {} seed experts", experts.len()),
        ));
    }
    let draws = crossover_draws(experts.len(), swarm_size, cfg, rng);
    populate_from_draws(experts, &draws)
}

/// `locations[target] - locations[i]`.
pub fn velocity_toward(i: usize, target: usize, locations: &[ParamVector]) -> Result<ParamVector> {
    let (Some(from), Some(to)) = (locations.get(i), locations.get(target)) else {
        return Err(SwarmError::invalid(
            "particle index",
            format!("{i} or {target} out of range for {} locations", locations.len()),
        ));
    };
    to.sub(from)
}

/// Starting velocity pointing at a uniformly chosen particle (possibly itself).
pub fn init_velocity<R: Rng + ?Sized>(
    i: usize,
    locations: &[ParamVector],
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Result<ParamVector> {
    if locations.is_empty() {
        return Err(SwarmError::EmptyExperts);
    }
    if cfg.zero_init_velocity {
        let dim = locations
            .get(i)
            .ok_or_else(|| SwarmError::invalid("particle index", format!("{i} out of range")))?
            .dim();
        return Ok(ParamVector::zeros(dim));
    }
    let j = rng.random_range(0..locations.len());
    velocity_toward(i, j, locations)
}

/// New velocity from inertia, personal best, global best and repulsion from the global worst.
pub fn update_velocity(
    particle: &Particle,
    g: &ParamVector,
    g_w: &ParamVector,
    cfg: &SwarmConfig,
    draw: &RandomDraw,
) -> Result<ParamVector> {
    let dim = particle.x.dim();
    for v in [&particle.v, &particle.p, g, g_w] {
        v.ensure_dim(dim)?;
    }
    let w = ForceWeights::new(cfg, draw);
    let c = w.normalizer();
    if c <= 0.0 {
        return Err(SwarmError::ZeroNormalizer);
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        let x = particle.x[k];
        let raw = w.inertia * particle.v[k] + w.cognitive * (particle.p[k] - x) + w.social * (g[k] - x)
            - w.repel * (g_w[k] - x);
        out.push(raw / c);
    }
    ParamVector::new(out)
}

/// `x + lambda * v`; rejects a step that leaves the finite range.
pub fn update_location(x: &ParamVector, v: &ParamVector, lambda: f64) -> Result<ParamVector> {
    v.ensure_dim(x.dim())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SwarmError::invalid("lambda", format!("{lambda} must be positive")));
    }
    ParamVector::new(x.iter().zip(v.iter()).map(|(a, b)| a + lambda * b).collect())
}
