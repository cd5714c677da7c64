//! Monte Carlo simulation of the two-player tug-of-war game with discount
//! and running cost, cross-validating the grid solver.
//!
//! Moves are restricted to the lattice stencil, so the game is the exact
//! stochastic interpretation of the discrete equation
//! `mu u + eps^{-2} c (u - M u) = f`. The payoff accumulator follows the
//! dynamic-programming form of that equation: with
//! `beta(x) = eps^{-2} c(x) / (mu + eps^{-2} c(x))`, each visited interior
//! state contributes `W (1 - beta) f / mu` and the exit state contributes
//! `W G`, where `W` is the running product of the `beta` factors. One step
//! of the expected payoff is then exactly the solver's update map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_m, Grid, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Argmax (Player I) / argmin (Player II) of the value field over the
    /// mover's stencil; ties break on the first offset in scan order.
    GreedyField,
    /// Uniform over the mover's stencil.
    UniformRandom,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    /// Discount `mu > 0`.
    pub mu: f64,
    pub strategy_one: Strategy,
    pub strategy_two: Strategy,
    /// Hard cap on episode length; reaching it marks the trace truncated.
    pub episode_cap: usize,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            mu: 1.0,
            strategy_one: Strategy::GreedyField,
            strategy_two: Strategy::GreedyField,
            episode_cap: 100_000,
            seed: 0,
        }
    }
}

/// One playthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    /// Visited nodes, starting at `x0`, ending at the first collar node
    /// (or the cap).
    pub states: Vec<(usize, usize)>,
    /// Coin flips: `true` = Player I (forward) moved.
    pub coins: Vec<bool>,
    /// Discounted running-cost accumulator.
    pub discounted_cost: f64,
    /// Terminal payout contribution (discount-weighted `G` at exit).
    pub terminal_payout: f64,
    pub payoff: f64,
    pub truncated: bool,
}

/// The game tied to a solved grid problem.
pub struct TugOfWar<'a> {
    pub grid: &'a Grid,
    pub stencil: &'a Stencil,
    pub c: &'a [f64],
    pub f: &'a [f64],
    pub g: &'a [f64],
    pub mu: f64,
}

impl<'a> TugOfWar<'a> {
    pub fn new(
        grid: &'a Grid,
        stencil: &'a Stencil,
        c: &'a [f64],
        f: &'a [f64],
        g: &'a [f64],
        mu: f64,
    ) -> Result<TugOfWar<'a>> {
        if !(mu > 0.0) {
            return Err(Error::Config("the game needs a positive discount mu".into()));
        }
        Ok(TugOfWar {
            grid,
            stencil,
            c,
            f,
            g,
            mu,
        })
    }

    #[inline]
    fn beta(&self, k: usize) -> f64 {
        let ck = self.c[k] / (self.stencil.eps * self.stencil.eps);
        ck / (self.mu + ck)
    }

    /// One-step expected payoff update at an interior node, using the same
    /// discount decomposition as the episode accumulator. Algebraically
    /// equal to the solver's update `(f + eps^{-2} c M u) / (mu + eps^{-2} c)`.
    pub fn one_step_expected(&self, value: &[f64], i: usize, j: usize) -> f64 {
        let k = self.grid.idx(i, j);
        let b = self.beta(k);
        (1.0 - b) * self.f[k] / self.mu + b * apply_m(self.grid, self.stencil, value, i, j)
    }

    fn greedy_move(
        &self,
        value: &[f64],
        i: usize,
        j: usize,
        forward: bool,
        maximize: bool,
    ) -> (i64, i64) {
        let rows = if forward {
            &self.stencil.forward_rows
        } else {
            &self.stencil.backward_rows
        };
        let nx = self.grid.nx as i64;
        let mut best = if maximize {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        let mut best_off = (0i64, 0i64);
        for &(dj, lo, hi) in rows {
            for di in lo..=hi {
                let k = ((j as i64 + dj) * nx + i as i64 + di) as usize;
                let v = value[k];
                let better = if maximize { v > best } else { v < best };
                if better {
                    best = v;
                    best_off = (di, dj);
                }
            }
        }
        best_off
    }

    fn random_move(&self, rng: &mut ChaCha8Rng, forward: bool) -> (i64, i64) {
        let rows = if forward {
            &self.stencil.forward_rows
        } else {
            &self.stencil.backward_rows
        };
        let pick = rng.gen_range(0..self.stencil.forward_len);
        let mut seen = 0usize;
        for &(dj, lo, hi) in rows {
            let n = (hi - lo + 1) as usize;
            if pick < seen + n {
                return (lo + (pick - seen) as i64, dj);
            }
            seen += n;
        }
        unreachable!("offset index within bounds");
    }

    /// Plays one episode from the interior node `(i0, j0)`.
    pub fn simulate_episode(
        &self,
        cfg: &GameConfig,
        value: &[f64],
        start: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeTrace> {
        let (mut i, mut j) = start;
        if !self.grid.is_interior(i, j) {
            return Err(Error::Domain(format!(
                "episode must start at an interior node, got ({i}, {j})"
            )));
        }
        let mut states = vec![(i, j)];
        let mut coins = Vec::new();
        let mut weight = 1.0_f64;
        let mut cost = 0.0_f64;
        let mut truncated = true;
        let mut terminal = 0.0_f64;
        for _ in 0..cfg.episode_cap {
            let k = self.grid.idx(i, j);
            let b = self.beta(k);
            cost += weight * (1.0 - b) * self.f[k] / self.mu;
            weight *= b;
            let heads = rng.gen_bool(0.5);
            coins.push(heads);
            let (strategy, maximize) = if heads {
                (cfg.strategy_one, true)
            } else {
                (cfg.strategy_two, false)
            };
            let (di, dj) = match strategy {
                Strategy::GreedyField => self.greedy_move(value, i, j, heads, maximize),
                Strategy::UniformRandom => self.random_move(rng, heads),
            };
            debug_assert!(self.move_is_legal(di, dj, heads), "illegal move");
            i = (i as i64 + di) as usize;
            j = (j as i64 + dj) as usize;
            states.push((i, j));
            if !self.grid.is_interior(i, j) {
                terminal = weight * self.g[self.grid.idx(i, j)];
                truncated = false;
                break;
            }
        }
        Ok(EpisodeTrace {
            states,
            coins,
            discounted_cost: cost,
            terminal_payout: terminal,
            payoff: cost + terminal,
            truncated,
        })
    }

    /// Whether an offset is a legal move for the given mover.
    pub fn move_is_legal(&self, di: i64, dj: i64, forward: bool) -> bool {
        let rows = if forward {
            &self.stencil.forward_rows
        } else {
            &self.stencil.backward_rows
        };
        rows.iter()
            .any(|&(r_dj, lo, hi)| r_dj == dj && di >= lo && di <= hi)
    }
}

#[derive(Debug, Clone)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub truncated: usize,
    /// Raised when more than 1% of episodes hit the cap.
    pub reliability_warning: bool,
}

/// Monte Carlo estimate of the game value at `start`, with per-episode RNG
/// streams derived from `(seed, episode index)` and an order-independent
/// (index-ordered) reduction.
pub fn estimate_value(
    game: &TugOfWar<'_>,
    cfg: &GameConfig,
    value: &[f64],
    start: (usize, usize),
    episodes: usize,
) -> Result<ValueEstimate> {
    if episodes < 100 {
        return Err(Error::Config("need at least 100 episodes".into()));
    }
    let payoffs: Vec<(f64, bool)> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(e as u64);
            let trace = game
                .simulate_episode(cfg, value, start, &mut rng)
                .expect("start node validated");
            (trace.payoff, trace.truncated)
        })
        .collect();
    let truncated = payoffs.iter().filter(|(_, t)| *t).count();
    let n = payoffs.len() as f64;
    let mean = payoffs.iter().map(|(p, _)| p).sum::<f64>() / n;
    let var = payoffs
        .iter()
        .map(|(p, _)| (p - mean) * (p - mean))
        .sum::<f64>()
        / (n - 1.0);
    Ok(ValueEstimate {
        mean,
        stderr: (var / n).sqrt(),
        episodes,
        truncated,
        reliability_warning: truncated * 100 > episodes,
    })
}
