//! Shared fixtures: an independent, loop-by-loop evaluation of one swarm
//! iteration, and helpers for building states by hand.
#![allow(dead_code)]

use model_swarms::particle::{Particle, RandomDraw};
use model_swarms::{ParamVector, SwarmConfig, SwarmState};
use rand::Rng;

pub fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec()).unwrap()
}

/// What one iteration should produce for one particle, worked out directly
/// from the velocity and location formulas.
#[derive(Debug, Clone)]
pub struct Expected {
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn expected_move(p: &Particle, g: &[f64], gw: &[f64], cfg: &SwarmConfig, d: &RandomDraw, lambda: f64) -> Expected {
    let (rv, rp, rg, rw) = if cfg.deterministic_randoms {
        (1.0, 1.0, 1.0, 1.0)
    } else {
        (d.r_v, d.r_p, d.r_g, d.r_w)
    };
    let a = rv * cfg.inertia;
    let b = rp * cfg.cognitive;
    let c = rg * cfg.social;
    let e = rw * cfg.repel;
    let norm = a + b + c + e;
    let mut v = Vec::new();
    let mut x = Vec::new();
    for k in 0..p.x.dim() {
        let xk = p.x[k];
        let vk = (a * p.v[k] + b * (p.p[k] - xk) + c * (g[k] - xk) - e * (gw[k] - xk)) / norm;
        v.push(vk);
        x.push(xk + lambda * vk);
    }
    Expected { v, x }
}

/// Random state with `n` particles in `dim` dimensions whose bookkeeping is
/// consistent: each `f_p` is the utility of `p`, and g / g_w are the best and
/// worst personal bests.
pub fn random_state<R: Rng>(rng: &mut R, n: usize, dim: usize, f: impl Fn(&[f64]) -> f64) -> SwarmState {
    let mut vec = |scale: f64| pv(&(0..dim).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>());
    let mut particles = Vec::new();
    for id in 0..n {
        let x = vec(4.0);
        let v = vec(1.0);
        let p = vec(4.0);
        let f_p = f(&p);
        particles.push(Particle {
            id,
            x,
            v,
            p,
            f_x: None,
            f_p,
            stagnation: 0,
        });
    }
    let best = (0..n).fold(0, |b, k| if particles[k].f_p > particles[b].f_p { k } else { b });
    let worst = (0..n).fold(0, |w, k| if particles[k].f_p < particles[w].f_p { k } else { w });
    SwarmState {
        g: particles[best].p.clone(),
        f_g: particles[best].f_p,
        g_provider: best,
        g_w: particles[worst].p.clone(),
        f_gw: particles[worst].f_p,
        gw_provider: worst,
        particles,
        iteration: 1,
        lambda: rng.random_range(0.3..1.0),
        g_stagnation: 0,
    }
}

pub fn random_draws<R: Rng>(rng: &mut R, n: usize) -> Vec<RandomDraw> {
    (0..n)
        .map(|_| RandomDraw::new(rng.random(), rng.random(), rng.random(), rng.random()).unwrap())
        .collect()
}

pub fn random_coefficients<R: Rng>(rng: &mut R) -> SwarmConfig {
    SwarmConfig {
        inertia: rng.random_range(0.05..1.0),
        cognitive: rng.random_range(0.05..1.0),
        social: rng.random_range(0.05..1.0),
        repel: rng.random_range(0.0..0.3),
        restart_patience: 1000,
        ..Default::default()
    }
}
