//! The search loop: initialization, one synchronous iteration, and the
//! patience/iteration-budget driver.
//!
//! Each iteration moves every particle against a snapshot of the global
//! best/worst taken at the start of the iteration, evaluates the new
//! locations (concurrently), and only then commits personal and global bests
//! in ascending id order. The result is independent of processing order.

use std::collections::BTreeSet;

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SwarmConfig;
use crate::error::{Result, SwarmError};
use crate::modularity::StepContribution;
use crate::particle::{
    init_velocity, populate, update_location, update_velocity, ForceWeights, Particle, RandomDraw,
};
use crate::runlog::{f32_vec, opt_f32_vec};
use crate::utility::Utility;
use crate::vector::{common_dim, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub g: ParamVector,
    pub f_g: f64,
    pub g_provider: usize,
    pub g_w: ParamVector,
    pub f_gw: f64,
    pub gw_provider: usize,
    pub iteration: usize,
    /// Step length the next iteration will use.
    pub lambda: f64,
    /// Iterations since `f_g` last strictly increased.
    pub g_stagnation: usize,
}

impl SwarmState {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.particles.iter().map(|p| p.id).collect()
    }

    pub fn particle(&self, id: usize) -> Option<&Particle> {
        self.particles.iter().find(|p| p.id == id)
    }

    pub fn next_id(&self) -> usize {
        self.particles.iter().map(|p| p.id + 1).max().unwrap_or(0)
    }

    pub fn is_finished(&self, cfg: &SwarmConfig) -> bool {
        self.iteration >= cfg.max_iterations || self.g_stagnation >= cfg.patience
    }
}

/// Which evaluations an iteration skips.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalSchedule {
    pub skip_iteration: bool,
    pub skipped_particles: BTreeSet<usize>,
}

impl EvalSchedule {
    pub fn evaluate_all() -> Self {
        Self::default()
    }

    pub fn skips(&self, id: usize) -> bool {
        self.skip_iteration || self.skipped_particles.contains(&id)
    }
}

/// Drop-K / Drop-N plan for one iteration over the given particle ids.
pub fn drop_plan<R: Rng + ?Sized>(cfg: &SwarmConfig, ids: &[usize], rng: &mut R) -> EvalSchedule {
    if cfg.drop_iterations > 0.0 {
        if rng.random::<f64>() < cfg.drop_iterations {
            return EvalSchedule {
                skip_iteration: true,
                skipped_particles: ids.iter().copied().collect(),
            };
        }
        return EvalSchedule::evaluate_all();
    }
    if cfg.drop_particles > 0.0 {
        let count = ((cfg.drop_particles * ids.len() as f64).round() as usize).min(ids.len());
        let skipped_particles = sample(rng, ids.len(), count)
            .into_iter()
            .map(|k| ids[k])
            .collect();
        return EvalSchedule {
            skip_iteration: false,
            skipped_particles,
        };
    }
    EvalSchedule::evaluate_all()
}

/// The movement half of one iteration for one particle.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepTrace {
    pub contribution: StepContribution,
    #[serde(with = "f32_vec")]
    pub x_prev: ParamVector,
    #[serde(with = "f32_vec")]
    pub v_prev: ParamVector,
    #[serde(with = "f32_vec")]
    pub p_prev: ParamVector,
    /// Location after the step, before any restart.
    #[serde(with = "f32_vec")]
    pub moved: ParamVector,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParticleTrace {
    pub id: usize,
    /// Utility evaluated this iteration; `None` means skipped.
    pub f_x: Option<f64>,
    pub f_p: f64,
    pub stagnation: usize,
    #[serde(with = "f32_vec")]
    pub x: ParamVector,
    #[serde(with = "f32_vec")]
    pub v: ParamVector,
    #[serde(with = "f32_vec")]
    pub p: ParamVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepTrace>,
}

impl ParticleTrace {
    /// The location `f_x` was measured at.
    pub fn evaluated_location(&self) -> &ParamVector {
        self.step.as_ref().map(|s| &s.moved).unwrap_or(&self.x)
    }
}

/// Audit entry for one iteration. Iteration 0 is the initial evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub iteration: usize,
    /// Step length used by this iteration's moves.
    pub lambda: f64,
    pub skipped_iteration: bool,
    pub f_g: f64,
    pub f_gw: f64,
    pub g_provider: usize,
    pub gw_provider: usize,
    #[serde(with = "f32_vec")]
    pub g: ParamVector,
    #[serde(with = "f32_vec")]
    pub g_w: ParamVector,
    /// Global best/worst snapshot every move of this iteration was computed against.
    #[serde(default, with = "opt_f32_vec", skip_serializing_if = "Option::is_none")]
    pub g_prev: Option<ParamVector>,
    #[serde(default, with = "opt_f32_vec", skip_serializing_if = "Option::is_none")]
    pub gw_prev: Option<ParamVector>,
    /// Iterations since `f_g` last strictly increased, after this iteration.
    pub g_stagnation: usize,
    /// Step length the following iteration will use.
    pub next_lambda: f64,
    pub restarts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<usize>,
    pub particles: Vec<ParticleTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    /// Word position of the search RNG stream after this iteration.
    pub rng_position: Option<u64>,
}

impl RunRecord {
    fn capture(state: &SwarmState, lambda: f64) -> Self {
        Self {
            iteration: state.iteration,
            lambda,
            skipped_iteration: false,
            f_g: state.f_g,
            f_gw: state.f_gw,
            g_provider: state.g_provider,
            gw_provider: state.gw_provider,
            g: state.g.clone(),
            g_w: state.g_w.clone(),
            g_prev: None,
            gw_prev: None,
            g_stagnation: state.g_stagnation,
            next_lambda: state.lambda,
            restarts: Vec::new(),
            failed: Vec::new(),
            particles: state
                .particles
                .iter()
                .map(|p| ParticleTrace {
                    id: p.id,
                    f_x: p.f_x,
                    f_p: p.f_p,
                    stagnation: p.stagnation,
                    x: p.x.clone(),
                    v: p.v.clone(),
                    p: p.p.clone(),
                    step: None,
                })
                .collect(),
            rng_position: None,
        }
    }

    pub fn trace(&self, id: usize) -> Option<&ParticleTrace> {
        self.particles.iter().find(|p| p.id == id)
    }

    /// The swarm state right after this iteration, at the record's precision.
    pub fn to_state(&self) -> SwarmState {
        SwarmState {
            particles: self
                .particles
                .iter()
                .map(|t| Particle {
                    id: t.id,
                    x: t.x.clone(),
                    v: t.v.clone(),
                    p: t.p.clone(),
                    f_x: t.f_x,
                    f_p: t.f_p,
                    stagnation: t.stagnation,
                })
                .collect(),
            g: self.g.clone(),
            f_g: self.f_g,
            g_provider: self.g_provider,
            g_w: self.g_w.clone(),
            f_gw: self.f_gw,
            gw_provider: self.gw_provider,
            iteration: self.iteration,
            lambda: self.next_lambda,
            g_stagnation: self.g_stagnation,
        }
    }
}

/// Destination for run records as they are produced.
pub trait RecordSink {
    fn record(&mut self, record: &RunRecord) -> Result<()>;
}

impl RecordSink for Vec<RunRecord> {
    fn record(&mut self, record: &RunRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards records.
pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _record: &RunRecord) -> Result<()> {
        Ok(())
    }
}

fn evaluate_checked(utility: &dyn Utility, id: usize, x: &ParamVector) -> Result<f64> {
    match utility.evaluate(x) {
        Ok(f) if f.is_finite() => Ok(f),
        Ok(f) => Err(SwarmError::Evaluation {
            particle: id,
            source: crate::error::EvalError::new(format!("utility returned non-finite value {f}")),
        }),
        Err(source) => Err(SwarmError::Evaluation { particle: id, source }),
    }
}

/// Populate, assign starting velocities, and evaluate every particle once.
pub fn initialize<R: Rng + ?Sized>(
    experts: &[ParamVector],
    utility: &dyn Utility,
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Result<(SwarmState, RunRecord)> {
    cfg.validate()?;
    if experts.is_empty() {
        return Err(SwarmError::EmptyExperts);
    }
    let dim = common_dim(experts)?.unwrap_or(0);
    if dim == 0 {
        return Err(SwarmError::invalid("experts", "vectors must have dimension >= 1"));
    }
    let locations = populate(experts, cfg.swarm_size, cfg, rng)?.members;
    let velocities = (0..locations.len())
        .map(|i| init_velocity(i, &locations, cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    let utilities = locations
        .par_iter()
        .enumerate()
        .map(|(i, x)| evaluate_checked(utility, i, x))
        .collect::<Result<Vec<_>>>()?;

    let particles: Vec<Particle> = locations
        .into_iter()
        .zip(velocities)
        .zip(&utilities)
        .enumerate()
        .map(|(id, ((x, v), &f))| Particle {
            id,
            p: x.clone(),
            x,
            v,
            f_x: Some(f),
            f_p: f,
            stagnation: 0,
        })
        .collect();

    let mut best = 0;
    let mut worst = 0;
    for (i, &f) in utilities.iter().enumerate() {
        if f > utilities[best] {
            best = i;
        }
        if f < utilities[worst] {
            worst = i;
        }
    }
    let state = SwarmState {
        g: particles[best].x.clone(),
        f_g: utilities[best],
        g_provider: best,
        g_w: particles[worst].x.clone(),
        f_gw: utilities[worst],
        gw_provider: worst,
        particles,
        iteration: 0,
        lambda: cfg.step_length,
        g_stagnation: 0,
    };
    let record = RunRecord::capture(&state, cfg.step_length);
    Ok((state, record))
}

/// Walk randomness for every particle, in storage order.
pub fn sample_draws<R: Rng + ?Sized>(n: usize, cfg: &SwarmConfig, rng: &mut R) -> Vec<RandomDraw> {
    (0..n)
        .map(|_| {
            if cfg.deterministic_randoms {
                RandomDraw::ONES
            } else {
                RandomDraw::sample(rng)
            }
        })
        .collect()
}

/// One iteration with RNG-driven drop plan and draws.
pub fn step<R: Rng + ?Sized>(
    state: &SwarmState,
    utility: &dyn Utility,
    cfg: &SwarmConfig,
    rng: &mut R,
) -> Result<(SwarmState, RunRecord)> {
    let schedule = drop_plan(cfg, &state.ids(), rng);
    let draws = sample_draws(state.particles.len(), cfg, rng);
    step_with(state, utility, cfg, &schedule, &draws)
}

/// One iteration with explicit randomness. `draws[k]` belongs to `state.particles[k]`.
pub fn step_with(
    state: &SwarmState,
    utility: &dyn Utility,
    cfg: &SwarmConfig,
    schedule: &EvalSchedule,
    draws: &[RandomDraw],
) -> Result<(SwarmState, RunRecord)> {
    if draws.len() != state.particles.len() {
        return Err(SwarmError::invalid(
            "draws",
            format!("{} draws for {} particles", draws.len(), state.particles.len()),
        ));
    }
    let lambda = state.lambda;
    let g_prev = state.g.clone();
    let gw_prev = state.g_w.clone();

    // Moves depend only on the particle itself and the snapshot.
    let moves = state
        .particles
        .par_iter()
        .zip(draws.par_iter())
        .map(|(particle, draw)| {
            let v = update_velocity(particle, &g_prev, &gw_prev, cfg, draw)?;
            let x = update_location(&particle.x, &v, lambda)?;
            let contribution = StepContribution::from_forces(
                &ForceWeights::new(cfg, draw),
                lambda,
                state.g_provider,
                state.gw_provider,
            );
            Ok((v, x, contribution))
        })
        .collect::<Result<Vec<_>>>()?;

    let outcomes = state
        .particles
        .par_iter()
        .zip(moves.par_iter())
        .map(|(particle, (_, x, _))| {
            if schedule.skips(particle.id) {
                Ok(None)
            } else {
                evaluate_checked(utility, particle.id, x).map(Some)
            }
        })
        .collect::<Vec<Result<Option<f64>>>>();

    let mut order: Vec<usize> = (0..state.particles.len()).collect();
    order.sort_by_key(|&k| state.particles[k].id);

    let mut failed = Vec::new();
    let mut utilities = vec![None; state.particles.len()];
    for &k in &order {
        match &outcomes[k] {
            Ok(f) => utilities[k] = *f,
            Err(err) if cfg.tolerate_eval_failure => {
                warn!("{err}; treating as skipped");
                failed.push(state.particles[k].id);
            }
            Err(_) => {
                // Report the lowest-id failure.
                return Err(outcomes.into_iter().nth(k).unwrap().unwrap_err());
            }
        }
    }

    let mut next = state.clone();
    let f_g_before = state.f_g;
    let mut traces = Vec::with_capacity(order.len());
    for &k in &order {
        let (v, x, contribution) = &moves[k];
        let before = &state.particles[k];
        let particle = &mut next.particles[k];
        particle.v = v.clone();
        particle.x = x.clone();
        particle.f_x = utilities[k];
        match utilities[k] {
            Some(f) if f > particle.f_p => {
                particle.p = x.clone();
                particle.f_p = f;
                particle.stagnation = 0;
            }
            _ => particle.stagnation += 1,
        }
        if let Some(f) = utilities[k] {
            if f > next.f_g {
                next.f_g = f;
                next.g = x.clone();
                next.g_provider = particle.id;
            }
            if f < next.f_gw {
                next.f_gw = f;
                next.g_w = x.clone();
                next.gw_provider = particle.id;
            }
        }
        traces.push(StepTrace {
            contribution: contribution.clone(),
            x_prev: before.x.clone(),
            v_prev: before.v.clone(),
            p_prev: before.p.clone(),
            moved: x.clone(),
        });
    }
    next.g_stagnation = if next.f_g > f_g_before {
        0
    } else {
        state.g_stagnation + 1
    };

    let mut restarts = Vec::new();
    for &k in &order {
        let particle = &mut next.particles[k];
        if particle.stagnation >= cfg.restart_patience {
            particle.x = particle.p.clone();
            particle.v = ParamVector::zeros(particle.x.dim());
            particle.stagnation = 0;
            restarts.push(particle.id);
        }
    }

    next.lambda = lambda * cfg.step_decay;
    next.iteration += 1;

    let mut record = RunRecord::capture(&next, lambda);
    // `capture` walks storage order; re-key the traces by id.
    record.particles.sort_by_key(|p| p.id);
    // f_x reported in the log is the evaluation of the moved location.
    for ((trace, step_trace), &k) in record.particles.iter_mut().zip(traces).zip(&order) {
        trace.f_x = utilities[k];
        trace.step = Some(step_trace);
    }
    record.skipped_iteration = schedule.skip_iteration;
    record.g_prev = Some(g_prev);
    record.gw_prev = Some(gw_prev);
    record.restarts = restarts;
    record.failed = failed;
    Ok((next, record))
}

fn word_pos(rng: &ChaCha8Rng) -> u64 {
    // 2^64 words is far beyond any run; the narrowing keeps logs plain JSON integers.
    u64::try_from(rng.get_word_pos()).expect("RNG stream position exceeds 64 bits")
}

/// A search in progress: the state, its configuration, and the RNG stream.
#[derive(Debug, Clone)]
pub struct Swarm {
    cfg: SwarmConfig,
    state: SwarmState,
    rng: ChaCha8Rng,
}

impl Swarm {
    pub fn initialize(
        experts: &[ParamVector],
        utility: &dyn Utility,
        cfg: SwarmConfig,
        sink: &mut dyn RecordSink,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (state, mut record) = initialize(experts, utility, &cfg, &mut rng)?;
        record.rng_position = Some(word_pos(&rng));
        sink.record(&record)?;
        Ok(Self { cfg, state, rng })
    }

    /// Rebuild a swarm from a state and the RNG position recorded alongside it.
    pub fn resume(state: SwarmState, cfg: SwarmConfig, rng_position: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_word_pos(u128::from(rng_position));
        Ok(Self { cfg, state, rng })
    }

    pub fn state(&self) -> &SwarmState {
        &self.state
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.cfg
    }

    pub fn rng_position(&self) -> u64 {
        word_pos(&self.rng)
    }

    /// Replace the state, e.g. after an expert joined; the RNG stream is untouched.
    pub fn set_state(&mut self, state: SwarmState) {
        self.state = state;
    }

    pub fn is_finished(&self) -> bool {
        self.state.is_finished(&self.cfg)
    }

    pub fn step(&mut self, utility: &dyn Utility, sink: &mut dyn RecordSink) -> Result<()> {
        let (next, mut record) = step(&self.state, utility, &self.cfg, &mut self.rng)?;
        record.rng_position = Some(word_pos(&self.rng));
        sink.record(&record)?;
        self.state = next;
        Ok(())
    }

    /// Iterate until patience runs out or the iteration budget is spent.
    pub fn run(&mut self, utility: &dyn Utility, sink: &mut dyn RecordSink) -> Result<()> {
        while !self.is_finished() {
            self.step(utility, sink)?;
        }
        Ok(())
    }

    pub fn into_state(self) -> SwarmState {
        self.state
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ParamVector,
    pub f_best: f64,
    pub log: Vec<RunRecord>,
    pub state: SwarmState,
}

/// Full search from seed experts to the returned global best.
pub fn search(experts: &[ParamVector], utility: &dyn Utility, cfg: &SwarmConfig) -> Result<SearchOutcome> {
    let mut log = Vec::new();
    let state = search_with_sink(experts, utility, cfg, &mut log)?;
    Ok(SearchOutcome {
        best: state.g.clone(),
        f_best: state.f_g,
        log,
        state,
    })
}

/// Like [`search`], streaming records into `sink`; returns the final state.
pub fn search_with_sink(
    experts: &[ParamVector],
    utility: &dyn Utility,
    cfg: &SwarmConfig,
    sink: &mut dyn RecordSink,
) -> Result<SwarmState> {
    let mut swarm = Swarm::initialize(experts, utility, cfg.clone(), sink)?;
    swarm.run(utility, sink)?;
    Ok(swarm.into_state())
}
