//! Monte Carlo and lattice checks tying the closed forms to the optimality
//! conditions. Everything here works in `f64`.
//!
//! Every sampled quantity comes with a standard error and the horizon
//! truncation bound; assertions use three standard errors plus an explicit
//! discretization budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean_se;
use crate::rng;

pub mod abstention;
pub mod backward;
pub mod e77;
pub mod fixedpoint;
pub mod foc;
pub mod kernel;
pub mod mc;
pub mod worstcase;

pub use kernel::KernelStrategy;

/// Share of the estimate the truncation tail may reach.
pub const TAIL_FRACTION: f64 = 0.005;
/// Relative discretization allowance used next to the 3 SE band.
pub const DISCRETIZATION_BUDGET: f64 = 0.01;
const MAX_HORIZON: f64 = 1024.0;
const PILOT_PATHS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NestedConfig {
    pub outer_times: usize,
    pub outer_paths: usize,
    pub inner_paths: usize,
    /// Step of the inner simulations.
    pub dt: f64,
    /// Length of every inner simulation.
    pub horizon: f64,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            outer_times: 10,
            outer_paths: 100,
            inner_paths: 1000,
            dt: 1.0 / 32.0,
            horizon: 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MCConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// `None` doubles from 4 until the tail bound is small enough.
    pub horizon: Option<f64>,
    pub seed: u64,
    pub antithetic: bool,
    pub nested: Option<NestedConfig>,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            dt: 1.0 / 256.0,
            horizon: None,
            seed: 20_240_601,
            antithetic: false,
            nested: None,
        }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidConfig(format!("nPaths = {} is below 100", self.n_paths)));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::InvalidConfig("antithetic sampling needs an even path count".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidConfig(format!("dt = {} outside (0, 1]", self.dt)));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("horizon = {h}")));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn with_paths(&self, n_paths: usize) -> Self {
        Self { n_paths, ..*self }
    }

    pub fn steps(&self, horizon: f64) -> usize {
        ((horizon / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub tail_bound: f64,
}

impl MCEstimate {
    /// `|mean - target| <= 3 SE + budget * |target|`.
    pub fn agrees_with(&self, target: f64, budget: f64) -> bool {
        (self.mean - target).abs() <= 3.0 * self.stderr + budget * target.abs()
    }
}

/// JSON report shared by every check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    /// Smallest slack over all assertions of the check (negative on failure).
    pub margin: f64,
    pub se: f64,
    pub details: serde_json::Value,
}

/// Runs `f` on the normals and unit exponentials of every path, in parallel,
/// keeping path order.
///
/// Path `i` reads stream `i`; with antithetic sampling paths `2p` and `2p+1`
/// share stream `p` with opposite normals and the same exponentials.
pub(crate) fn run_paths<R, G>(cfg: &MCConfig, n_steps: usize, n_paths: usize, f: G) -> Vec<R>
where
    R: Send,
    G: Fn(usize, &[f64], &[f64]) -> R + Sync,
{
    let seed = cfg.seed;
    let anti = cfg.antithetic;
    (0..n_paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n_steps], vec![0.0; n_steps]),
            |(z, e), i| {
                let stream = if anti { i / 2 } else { i };
                rng::fill_normals_exp(seed, stream as u64, z, e);
                if anti && i % 2 == 1 {
                    z.iter_mut().for_each(|x| *x = -*x);
                }
                f(i, z, e)
            },
        )
        .collect()
}

/// Maximum over a step of a Brownian bridge from `x0` to `x1` with variance
/// `var` over the step, given a unit exponential `e`. Sampling it removes the
/// bias of monitoring the running maximum only at grid points.
#[inline]
pub(crate) fn bridge_max(x0: f64, x1: f64, var: f64, e: f64) -> f64 {
    let d = x1 - x0;
    0.5 * (x0 + x1 + (d * d + 2.0 * var * e).sqrt())
}

#[inline]
pub(crate) fn bridge_min(x0: f64, x1: f64, var: f64, e: f64) -> f64 {
    let d = x1 - x0;
    0.5 * (x0 + x1 - (d * d + 2.0 * var * e).sqrt())
}

/// Mean and SE; antithetic pairs are averaged first.
pub(crate) fn summarize(values: &[f64], antithetic: bool) -> (f64, f64) {
    if antithetic {
        let pairs: Vec<f64> = values.chunks(2).map(|c| 0.5 * (c[0] + c[c.len() - 1])).collect();
        mean_se(&pairs)
    } else {
        mean_se(values)
    }
}

/// Fixed horizon, or doubling until `bound(T) < TAIL_FRACTION * pilot(T)`.
pub(crate) fn choose_horizon<B, P>(cfg: &MCConfig, bound: B, pilot: P) -> Result<f64>
where
    B: Fn(f64) -> f64,
    P: Fn(&MCConfig, f64) -> Result<f64>,
{
    if let Some(h) = cfg.horizon {
        return Ok(h);
    }
    let mut horizon = 4.0;
    let pilot_cfg = cfg.with_paths(cfg.n_paths.min(PILOT_PATHS));
    let scale = pilot(&pilot_cfg, horizon)?.abs();
    loop {
        let b = bound(horizon);
        if tail_negligible(b, scale) {
            return Ok(horizon);
        }
        if horizon >= MAX_HORIZON || !b.is_finite() {
            return Err(Error::TailTooLarge {
                bound: b,
                target: TAIL_FRACTION * scale,
            });
        }
        horizon *= 2.0;
    }
}

/// `bound` below the tail share of `scale`; an estimate of exactly zero only
/// needs a bound at rounding level.
fn tail_negligible(bound: f64, scale: f64) -> bool {
    bound < TAIL_FRACTION * scale || bound <= f64::EPSILON * (1.0 + scale)
}

pub(crate) fn check_tail(est: &MCEstimate) -> Result<()> {
    let target = TAIL_FRACTION * est.mean.abs();
    if tail_negligible(est.tail_bound, est.mean.abs()) {
        Ok(())
    } else {
        Err(Error::TailTooLarge {
            bound: est.tail_bound,
            target,
        })
    }
}
