//! Particle swarm optimization with a fitness-adaptive inertia weight.
//!
//! Each iteration moves every particle by its previous velocity, clamps it
//! to the box, evaluates it, and then draws a new velocity
//!
//! ```text
//! V ← w·V + c1·r1·(p_best − x) + c2·r2·(g_best − x)
//! w = w_min + (w_max − w_min)·(f − f_min)/(f_avg − f_min)   if f ≤ f_avg
//! w = w_max                                                  otherwise
//! ```
//!
//! with `r1`, `r2` uniform per dimension. Particles doing better than the
//! swarm average slow down and refine; the rest keep exploring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsoConfig {
    pub n_particles: usize,
    pub c1: f64,
    pub c2: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
    /// Per-dimension velocity cap as a fraction of the box width.
    pub v_max_frac: f64,
}

impl ApsoConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            n_particles: 100,
            c1: 2.0,
            c2: 2.0,
            w_min: 0.4,
            w_max: 0.9,
            max_iters: 100,
            seed: 0,
            bounds,
            v_max_frac: 0.2,
        }
    }

    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.n_particles = n;
        self
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::invalid("APSO needs at least one dimension"));
        }
        if self.n_particles < 2 {
            return Err(Error::invalid("APSO needs at least two particles"));
        }
        if !(0.0 < self.w_min && self.w_min < self.w_max) {
            return Err(Error::invalid("inertia bounds must satisfy 0 < w_min < w_max"));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::invalid("learning factors must be non-negative"));
        }
        if !(self.v_max_frac > 0.0) {
            return Err(Error::invalid("v_max_frac must be positive"));
        }
        for (d, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("dimension {d}: bounds [{lo}, {hi}] are not a proper interval")));
            }
        }
        Ok(())
    }

    fn v_max(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| self.v_max_frac * (hi - lo)).collect()
    }
}

/// Adaptive per-particle inertia weight. Returns `w_max` when the swarm has collapsed
/// (`f_avg == f_min`).
pub fn inertia_weight(f: f64, f_min: f64, f_avg: f64, w_min: f64, w_max: f64) -> f64 {
    if f > f_avg || f_avg <= f_min {
        w_max
    } else {
        w_min + (w_max - w_min) * (f - f_min) / (f_avg - f_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    pub p_best: Vec<Vec<f64>>,
    pub p_best_fitness: Vec<f64>,
    pub group_best: Vec<f64>,
    pub group_best_fitness: f64,
    /// Inertia weight each particle used for its latest velocity update.
    pub weights: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsoResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness after initialization (index 0) and after every iteration.
    pub history: Vec<f64>,
}

fn evaluate<F>(objective: &F, positions: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let fitness: Vec<f64> = positions.par_iter().map(|x| objective(x)).collect();
    if let Some(particle) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(Error::ObjectiveFailure { particle });
    }
    Ok(fitness)
}

/// Uniform positions inside the box and velocities inside the cap.
pub fn init_swarm<F>(objective: &F, config: &ApsoConfig, rng: &mut ChaCha8Rng) -> Result<SwarmState>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let v_max = config.v_max();
    let mut positions = Vec::with_capacity(config.n_particles);
    let mut velocities = Vec::with_capacity(config.n_particles);
    for _ in 0..config.n_particles {
        positions.push(config.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect::<Vec<f64>>());
        velocities.push(v_max.iter().map(|&v| rng.random_range(-v..=v)).collect::<Vec<f64>>());
    }
    let fitness = evaluate(objective, &positions)?;
    let (best, &best_f) = fitness
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least two particles");
    Ok(SwarmState {
        group_best: positions[best].clone(),
        group_best_fitness: best_f,
        p_best: positions.clone(),
        p_best_fitness: fitness.clone(),
        weights: vec![config.w_max; config.n_particles],
        positions,
        velocities,
        fitness,
        iteration: 0,
    })
}

/// One iteration: move, clamp, evaluate, update bests in particle order,
/// then draw new velocities.
pub fn step_swarm<F>(swarm: &mut SwarmState, objective: &F, config: &ApsoConfig, rng: &mut ChaCha8Rng) -> Result<()>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let v_max = config.v_max();
    for (x, v) in swarm.positions.iter_mut().zip(swarm.velocities.iter_mut()) {
        for d in 0..x.len() {
            let (lo, hi) = config.bounds[d];
            let moved = x[d] + v[d];
            if moved < lo || moved > hi {
                x[d] = moved.clamp(lo, hi);
                v[d] = 0.0;
            } else {
                x[d] = moved;
            }
        }
    }

    swarm.fitness = evaluate(objective, &swarm.positions)?;
    for n in 0..swarm.positions.len() {
        if swarm.fitness[n] < swarm.p_best_fitness[n] {
            swarm.p_best_fitness[n] = swarm.fitness[n];
            swarm.p_best[n].clone_from(&swarm.positions[n]);
        }
        if swarm.fitness[n] < swarm.group_best_fitness {
            swarm.group_best_fitness = swarm.fitness[n];
            swarm.group_best.clone_from(&swarm.positions[n]);
        }
    }

    let f_min = swarm.fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let f_avg = swarm.fitness.iter().sum::<f64>() / swarm.fitness.len() as f64;
    for n in 0..swarm.positions.len() {
        let w = inertia_weight(swarm.fitness[n], f_min, f_avg, config.w_min, config.w_max);
        swarm.weights[n] = w;
        let x = &swarm.positions[n];
        let v = &mut swarm.velocities[n];
        for d in 0..x.len() {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let nv = w * v[d]
                + config.c1 * r1 * (swarm.p_best[n][d] - x[d])
                + config.c2 * r2 * (swarm.group_best[d] - x[d]);
            v[d] = nv.clamp(-v_max[d], v_max[d]);
        }
    }
    swarm.iteration += 1;
    Ok(())
}

/// Runs `config.max_iters` iterations from a seeded random swarm.
pub fn optimize<F>(objective: F, config: &ApsoConfig) -> Result<ApsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_with(objective, config, |_| {})
}

/// Like [`optimize`], calling `observe` after initialization and after every iteration.
pub fn optimize_with<F, O>(objective: F, config: &ApsoConfig, mut observe: O) -> Result<ApsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(&SwarmState),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut swarm = init_swarm(&objective, config, &mut rng)?;
    let mut history = Vec::with_capacity(config.max_iters + 1);
    history.push(swarm.group_best_fitness);
    observe(&swarm);
    for _ in 0..config.max_iters {
        step_swarm(&mut swarm, &objective, config, &mut rng)?;
        history.push(swarm.group_best_fitness);
        observe(&swarm);
    }
    Ok(ApsoResult {
        best_position: swarm.group_best,
        best_fitness: swarm.group_best_fitness,
        history,
    })
}

/// Standard test objectives, used by the benchmark command and the tests.
pub mod bench {
    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    pub fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    pub fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
    }
}
