//! Overlapping prior sets: the plan is deterministic, so the cost is the
//! same on every path and the utility estimate only carries the noise of the
//! density weights.

use serde::Serialize;

use super::{run_paths, summarize, MCConfig, MCEstimate, DISCRETIZATION_BUDGET, TAIL_FRACTION};
use crate::error::{Error, Result};
use crate::model::AbstentionCase;
use crate::ModelParams;
use crate::stationary::{abstention_solve, AbstentionSolution};
use crate::tracking::{girsanov_density, simulate_brownian, track, Decay, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AbstentionReport {
    pub case: AbstentionCase,
    pub common_kernel: f64,
    pub k: f64,
    pub m: f64,
    pub horizon: f64,
    pub w: f64,
    pub initial_gulp: f64,
    pub cost_closed: f64,
    /// Continuous-time cost by quadrature; equals `w` at the optimum.
    pub cost_quadrature: f64,
    /// Grid cost per seed; all equal.
    pub costs: Vec<f64>,
    pub cost_variance: f64,
    pub cost_tail: f64,
    pub utility: MCEstimate,
    pub utility_quadrature: f64,
}

impl AbstentionReport {
    pub fn cost_pass(&self) -> bool {
        let c = self.costs[0];
        self.cost_variance == 0.0
            && (c - self.cost_closed).abs() <= DISCRETIZATION_BUDGET * self.cost_closed + self.cost_tail
    }

    pub fn round_trip_pass(&self) -> bool {
        (self.cost_quadrature - self.w).abs() <= 1e-8 * self.w
    }

    pub fn gulp_pass(&self) -> bool {
        match self.case {
            AbstentionCase::Case2 => (self.initial_gulp - self.costs[0]).abs() <= 1e-12 * self.initial_gulp.max(1.0),
            AbstentionCase::Case1 => true,
        }
    }

    pub fn utility_pass(&self) -> bool {
        self.utility.agrees_with(self.utility_quadrature, DISCRETIZATION_BUDGET)
    }

    pub fn pass(&self) -> bool {
        self.cost_pass() && self.round_trip_pass() && self.gulp_pass() && self.utility_pass()
    }

    pub fn margin(&self) -> f64 {
        let c = self.costs[0];
        let cost = DISCRETIZATION_BUDGET * self.cost_closed + self.cost_tail - (c - self.cost_closed).abs();
        let u = 3.0 * self.utility.stderr + DISCRETIZATION_BUDGET * self.utility_quadrature
            - (self.utility.mean - self.utility_quadrature).abs();
        let trip = 1e-8 * self.w - (self.cost_quadrature - self.w).abs();
        cost.min(u).min(trip)
    }
}

/// `int_H^inf e^{-delta t} Y_t^alpha / alpha dt`, exact for the deterministic plan.
fn utility_tail(sol: &AbstentionSolution<f64>, horizon: f64) -> f64 {
    let p = &sol.params;
    let rho = p.delta + p.alpha * p.beta;
    let m = sol.running_max(horizon).powf(p.alpha);
    let rate = match sol.case {
        AbstentionCase::Case1 if sol.level0 * (sol.delta_hat * horizon).exp() >= sol.eta => rho - p.alpha * sol.delta_hat,
        _ => rho,
    };
    m * (-rho * horizon).exp() / (p.alpha * rate)
}

fn cost_tail(sol: &AbstentionSolution<f64>, horizon: f64) -> f64 {
    let p = &sol.params;
    match sol.case {
        AbstentionCase::Case2 => 0.0,
        AbstentionCase::Case1 => {
            let rate = p.r + p.beta - sol.delta_hat;
            sol.level0 * sol.delta_hat / p.beta * (-rate * horizon).exp() / rate
        }
    }
}

/// Grid cost for one seed: `L` goes through the density ratio of the common prior.
fn seed_cost(sol: &AbstentionSolution<f64>, xi: f64, grid: &TimeGrid<f64>, seed: u64) -> Result<(f64, f64)> {
    let p = &sol.params;
    let b = simulate_brownian(grid, seed, 0);
    let kernel = vec![xi; grid.n_steps];
    let eps = girsanov_density(&b, &kernel, grid.dt, xi, xi)?;
    let level: Vec<f64> = (0..grid.len())
        .map(|i| {
            let ratio = eps[i] / eps[i];
            (sol.k * ((p.delta - p.r) * grid.t(i)).exp() * ratio).powf(1.0 / (p.alpha - 1.0))
        })
        .collect();
    let (_, c) = track(&level, grid, p.eta, &Decay::Constant(p.beta));
    let mut prev = 0.0;
    let mut total = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        total += (-p.r * grid.t(i)).exp() * (ci - prev);
        prev = ci;
    }
    Ok((total, c[0]))
}

pub fn abstention_check(p: &ModelParams, n_seeds: usize, cfg: &MCConfig) -> Result<AbstentionReport> {
    cfg.validate()?;
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("need at least one seed".into()));
    }
    let sol = abstention_solve(p)?;
    let xi = p.a_prime.max(p.b);
    let total = sol.utility_quadrature();
    let horizon = match cfg.horizon {
        Some(h) => h,
        None => {
            let mut h = 4.0;
            while utility_tail(&sol, h) >= TAIL_FRACTION * total {
                if h >= 1024.0 {
                    return Err(Error::TailTooLarge {
                        bound: utility_tail(&sol, h),
                        target: TAIL_FRACTION * total,
                    });
                }
                h *= 2.0;
            }
            h
        }
    };
    let grid = TimeGrid::new(horizon, cfg.dt)?;

    let mut costs = Vec::with_capacity(n_seeds);
    let mut gulp = 0.0;
    for s in 0..n_seeds {
        let (c, c0) = seed_cost(&sol, xi, &grid, cfg.seed.wrapping_add(s as u64))?;
        costs.push(c);
        gulp = c0;
    }
    let mean = costs.iter().sum::<f64>() / n_seeds as f64;
    let cost_variance = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n_seeds as f64;

    // utility under the reference measure, weighted by the common-prior density
    let rho = p.delta + p.alpha * p.beta;
    let dt = grid.dt;
    let step_weight = -(-rho * dt).exp_m1() / rho;
    let running: Vec<f64> = (0..grid.n_steps).map(|i| sol.running_max(grid.t(i)).powf(p.alpha) / p.alpha).collect();
    let vals = run_paths(cfg, grid.n_steps, cfg.n_paths, |_, z, _| {
        let mut log_eps = 0.0f64;
        let mut w = step_weight;
        let q = (-rho * dt).exp();
        let mut sum = 0.0;
        for (i, zk) in z.iter().enumerate() {
            sum += w * log_eps.exp() * running[i];
            w *= q;
            log_eps += xi * dt.sqrt() * zk - 0.5 * xi * xi * dt;
        }
        sum
    });
    let (umean, use_) = summarize(&vals, cfg.antithetic);
    let utility = MCEstimate {
        mean: umean,
        stderr: use_,
        n_paths: vals.len(),
        dt,
        horizon,
        tail_bound: utility_tail(&sol, horizon),
    };

    Ok(AbstentionReport {
        case: sol.case,
        common_kernel: xi,
        k: sol.k,
        m: sol.m,
        horizon,
        w: p.w,
        initial_gulp: match sol.case {
            AbstentionCase::Case2 => gulp,
            AbstentionCase::Case1 => sol.initial_gulp(),
        },
        cost_closed: sol.discounted_cost_closed(),
        cost_quadrature: sol.discounted_cost_quadrature(),
        costs,
        cost_variance,
        cost_tail: cost_tail(&sol, horizon),
        utility,
        utility_quadrature: sol.utility_quadrature_to(horizon),
    })
}
