//! Expert lifecycle beyond a single search: injecting a newcomer, removing an
//! expert's influence from logged trajectories, and weight-soup baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SwarmConfig;
use crate::engine::{RunRecord, SwarmState};
use crate::error::{Result, SwarmError};
use crate::particle::{init_velocity, ForceWeights, Particle};
use crate::runlog::f32_vec;
use crate::utility::Utility;
use crate::vector::{common_dim, ParamVector};

/// Scalar weights that express one location update as a combination of
/// `(v, p, x, g, g_w)` from the previous iteration:
///
/// `x_t = inertia*v + personal*p + own*x + global_best*g - global_worst*g_w`
///
/// The velocity normalizer is folded into the step, so with `eta = lambda / C`
/// the weights are `eta*r_v*phi_v`, `eta*r_p*phi_p`,
/// `1 - eta*(r_p*phi_p + r_g*phi_g - r_w*phi_w)`, `eta*r_g*phi_g`, `eta*r_w*phi_w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepContribution {
    pub inertia: f64,
    pub personal: f64,
    pub own: f64,
    pub global_best: f64,
    pub global_worst: f64,
    pub g_provider: usize,
    pub gw_provider: usize,
}

impl StepContribution {
    pub fn from_forces(w: &ForceWeights, lambda: f64, g_provider: usize, gw_provider: usize) -> Self {
        let eta = lambda / w.normalizer();
        Self {
            inertia: eta * w.inertia,
            personal: eta * w.cognitive,
            own: 1.0 - eta * (w.cognitive + w.social - w.repel),
            global_best: eta * w.social,
            global_worst: eta * w.repel,
            g_provider,
            gw_provider,
        }
    }

    pub fn total(&self) -> f64 {
        self.inertia + self.personal + self.own + self.global_best + self.global_worst
    }

    /// Recombine the previous-step vectors into `x_t`.
    pub fn apply(
        &self,
        v: &ParamVector,
        p: &ParamVector,
        x: &ParamVector,
        g: &ParamVector,
        g_w: &ParamVector,
    ) -> Result<ParamVector> {
        let dim = x.dim();
        for other in [v, p, g, g_w] {
            other.ensure_dim(dim)?;
        }
        ParamVector::new(
            (0..dim)
                .map(|k| {
                    self.inertia * v[k] + self.personal * p[k] + self.own * x[k] + self.global_best * g[k]
                        - self.global_worst * g_w[k]
                })
                .collect(),
        )
    }
}

/// Which extremum roles the removed expert held in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RemovedRoles {
    pub global_best: bool,
    pub global_worst: bool,
}

impl RemovedRoles {
    pub fn of(contribution: &StepContribution, removed: usize) -> Self {
        Self {
            global_best: contribution.g_provider == removed,
            global_worst: contribution.gw_provider == removed,
        }
    }

    pub fn any(&self) -> bool {
        self.global_best || self.global_worst
    }
}

/// Strip the removed expert's terms from `x_t` and renormalize the rest.
pub fn remove_expert_step(
    x_t: &ParamVector,
    contribution: &StepContribution,
    removed: RemovedRoles,
    g_prev: &ParamVector,
    gw_prev: &ParamVector,
) -> Result<ParamVector> {
    if !removed.any() {
        return Ok(x_t.clone());
    }
    g_prev.ensure_dim(x_t.dim())?;
    gw_prev.ensure_dim(x_t.dim())?;
    let mut retained = contribution.total();
    if removed.global_best {
        retained -= contribution.global_best;
    }
    if removed.global_worst {
        retained -= contribution.global_worst;
    }
    if retained <= 0.0 {
        return Err(SwarmError::DegenerateRenormalization { sum: retained });
    }
    let scale = contribution.total() / retained;
    ParamVector::new(
        (0..x_t.dim())
            .map(|k| {
                let mut y = x_t[k];
                if removed.global_best {
                    y -= contribution.global_best * g_prev[k];
                }
                if removed.global_worst {
                    y += contribution.global_worst * gw_prev[k];
                }
                scale * y
            })
            .collect(),
    )
}

/// Replay a logged search with expert `removed_id` excised, returning the
/// counterfactual final location of every other particle.
///
/// Particles never touched by the removed expert keep their logged
/// trajectory. Once a particle has been adjusted its location is recomputed
/// from the stored weights each step. Velocities and personal bests are taken
/// from the log; a restart puts the particle back at its logged personal best.
pub fn replay_removal(log: &[RunRecord], removed_id: usize) -> Result<BTreeMap<usize, ParamVector>> {
    if log.is_empty() {
        return Err(SwarmError::IncompleteLog { missing: vec![0] });
    }
    let present: BTreeSet<usize> = log.iter().map(|r| r.iteration).collect();
    let last = *present.iter().next_back().unwrap();
    let mut missing: Vec<usize> = (0..=last).filter(|k| !present.contains(k)).collect();
    for rec in log.iter().filter(|r| r.iteration > 0) {
        let incomplete =
            rec.g_prev.is_none() || rec.gw_prev.is_none() || rec.particles.iter().any(|p| p.step.is_none());
        if incomplete {
            missing.push(rec.iteration);
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(SwarmError::IncompleteLog { missing });
    }

    let mut records: Vec<&RunRecord> = log.iter().collect();
    records.sort_by_key(|r| r.iteration);

    let mut adjusted: BTreeMap<usize, ParamVector> = BTreeMap::new();
    let mut tainted: BTreeSet<usize> = BTreeSet::new();
    for trace in &records[0].particles {
        adjusted.insert(trace.id, trace.x.clone());
    }
    for rec in &records[1..] {
        let (Some(g_prev), Some(gw_prev)) = (&rec.g_prev, &rec.gw_prev) else {
            unreachable!("checked above");
        };
        for trace in &rec.particles {
            if trace.id == removed_id {
                continue;
            }
            let step = trace.step.as_ref().expect("checked above");
            let roles = RemovedRoles::of(&step.contribution, removed_id);
            if !roles.any() && !tainted.contains(&trace.id) {
                adjusted.insert(trace.id, trace.x.clone());
                continue;
            }
            let x_prev = adjusted.get(&trace.id).unwrap_or(&step.x_prev);
            let moved = step
                .contribution
                .apply(&step.v_prev, &step.p_prev, x_prev, g_prev, gw_prev)?;
            let next = if rec.restarts.contains(&trace.id) {
                trace.x.clone()
            } else {
                remove_expert_step(&moved, &step.contribution, roles, g_prev, gw_prev)?
            };
            if roles.any() {
                tainted.insert(trace.id);
            }
            adjusted.insert(trace.id, next);
        }
    }
    adjusted.remove(&removed_id);
    Ok(adjusted)
}

/// What happened when a newcomer joined the swarm. Carries the newcomer's
/// location and starting velocity so the join can be replayed from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionEvent {
    pub iteration: usize,
    pub particle: usize,
    pub utility: f64,
    pub became_global_best: bool,
    #[serde(with = "f32_vec")]
    pub x: ParamVector,
    #[serde(with = "f32_vec")]
    pub v: ParamVector,
}

/// The state after `event`'s newcomer joined `state`.
pub fn apply_injection(state: &SwarmState, event: &InjectionEvent) -> Result<SwarmState> {
    event.x.ensure_dim(state.dim())?;
    event.v.ensure_dim(state.dim())?;
    if state.particle(event.particle).is_some() {
        return Err(SwarmError::invalid("particle", format!("id {} already in the swarm", event.particle)));
    }
    let mut next = state.clone();
    if event.became_global_best {
        next.g = event.x.clone();
        next.f_g = event.utility;
        next.g_provider = event.particle;
        next.g_stagnation = 0;
    }
    next.particles.push(Particle {
        id: event.particle,
        p: event.x.clone(),
        x: event.x.clone(),
        v: event.v.clone(),
        f_x: Some(event.utility),
        f_p: event.utility,
        stagnation: 0,
    });
    Ok(next)
}

/// Random stream for the `k`-th injection into a run seeded with `seed`.
/// Kept apart from the search stream so injecting never shifts later draws.
pub fn injection_rng(seed: u64, k: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + k as u64);
    rng
}

/// Add a new expert to a running or finished swarm.
///
/// The newcomer gets a fresh personal best and a random starting velocity
/// drawn the same way as at initialization. It influences the others only by becoming the global best,
/// which requires strictly exceeding `f_g`; the global worst is left alone.
pub fn inject_expert<R: Rng + ?Sized>(
    state: &SwarmState,
    new: ParamVector,
    utility: &dyn Utility,
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Result<(SwarmState, InjectionEvent)> {
    new.ensure_dim(state.dim())?;
    let id = state.next_id();
    let f = utility
        .evaluate(&new)
        .map_err(|source| SwarmError::Evaluation { particle: id, source })?;
    if !f.is_finite() {
        return Err(SwarmError::Evaluation {
            particle: id,
            source: crate::EvalError::new(format!("utility returned non-finite value {f}")),
        });
    }
    let mut locations: Vec<ParamVector> = state.particles.iter().map(|p| p.x.clone()).collect();
    locations.push(new.clone());
    let v = init_velocity(locations.len() - 1, &locations, cfg, rng)?;
    let event = InjectionEvent {
        iteration: state.iteration,
        particle: id,
        utility: f,
        became_global_best: f > state.f_g,
        x: new,
        v,
    };
    Ok((apply_injection(state, &event)?, event))
}

/// Coordinatewise mean of the experts.
pub fn uniform_soup(experts: &[ParamVector]) -> Result<ParamVector> {
    let dim = common_dim(experts)?.ok_or(SwarmError::EmptyExperts)?;
    let n = experts.len() as f64;
    let mut sum = vec![0.0; dim];
    for e in experts {
        for (s, v) in sum.iter_mut().zip(e.iter()) {
            *s += v;
        }
    }
    ParamVector::new(sum.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoupOutcome {
    pub soup: ParamVector,
    pub utility: f64,
    /// Indices of the accepted experts, in acceptance order.
    pub members: Vec<usize>,
}

/// Greedy soup: start from the best expert and keep each next-best expert
/// whose addition to the uniform average does not lower the utility.
pub fn greedy_soup(experts: &[ParamVector], utility: &dyn Utility) -> Result<SoupOutcome> {
    common_dim(experts)?.ok_or(SwarmError::EmptyExperts)?;
    let eval = |k: usize, x: &ParamVector| {
        utility
            .evaluate(x)
            .map_err(|source| SwarmError::Evaluation { particle: k, source })
    };
    let scores = experts
        .iter()
        .enumerate()
        .map(|(k, e)| eval(k, e))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<usize> = (0..experts.len()).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut members = vec![ranked[0]];
    let mut soup = experts[ranked[0]].clone();
    let mut best = scores[ranked[0]];
    for &k in &ranked[1..] {
        let trial: Vec<ParamVector> = members.iter().chain([&k]).map(|&m| experts[m].clone()).collect();
        let candidate = uniform_soup(&trial)?;
        let f = eval(k, &candidate)?;
        if f >= best {
            members.push(k);
            soup = candidate;
            best = f;
        }
    }
    Ok(SoupOutcome {
        soup,
        utility: best,
        members,
    })
}
