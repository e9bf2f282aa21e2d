//! Pathwise integration-by-parts identity for the discounted cost:
//!
//! ```text
//! int e^{-rt} eps dC = (1/beta) e^{-rT} eps_T Y_T - eta/beta
//!                    + (1 + r/beta) int e^{-rt} eps Y dt - (1/beta) int e^{-rt} xi eps Y dB
//! ```
//!
//! On a grid both sides differ by a discretization residual. Paths are drawn
//! once on the finest grid and coarsened by striding, so the residual can be
//! compared across step sizes on the same randomness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::DerivedConstants;
use crate::numeric::median;
use crate::rng::fill_normals;
use crate::tracking::{track, Decay, TimeGrid};

/// Residual of the identity on one grid path. `c` is cumulative with `C_{0-} = 0`.
pub fn e77_residual(b: &[f64], y: &[f64], c: &[f64], dt: f64, eta: f64, beta: f64, r: f64, xi: f64) -> f64 {
    let n = b.len() - 1;
    let eps = |k: usize| {
        let t = k as f64 * dt;
        (xi * b[k] - 0.5 * xi * xi * t).exp()
    };
    let disc = |k: usize| (-r * k as f64 * dt).exp();
    let mut lhs = 0.0;
    let mut prev_c = 0.0;
    for k in 0..=n {
        lhs += disc(k) * eps(k) * (c[k] - prev_c);
        prev_c = c[k];
    }
    let mut drift = 0.0;
    let mut stoch = 0.0;
    for k in 0..n {
        let v = disc(k) * eps(k) * y[k];
        drift += v * dt;
        stoch += xi * v * (b[k + 1] - b[k]);
    }
    let rhs = disc(n) * eps(n) * y[n] / beta - eta / beta + (1.0 + r / beta) * drift - stoch / beta;
    lhs - rhs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct E77Level {
    pub dt: f64,
    pub median_abs_residual: f64,
    pub max_abs_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct E77Report {
    pub k: f64,
    pub xi: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Coarsest grid first.
    pub levels: Vec<E77Level>,
}

impl E77Report {
    /// Median residual strictly decreasing as the grid is refined.
    pub fn pass(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].median_abs_residual < w[0].median_abs_residual)
    }

    /// Smallest relative drop between consecutive levels (negative when it grows).
    pub fn margin(&self) -> f64 {
        self.levels
            .windows(2)
            .map(|w| 1.0 - w[1].median_abs_residual / w[0].median_abs_residual)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Residuals for grids `2^-coarsest_exp ..= 2^-finest_exp` on `n_paths` common paths.
pub fn e77_convergence(
    d: &DerivedConstants,
    k: f64,
    xi: f64,
    horizon: f64,
    n_paths: usize,
    coarsest_exp: u32,
    finest_exp: u32,
    seed: u64,
) -> Result<E77Report> {
    if coarsest_exp > finest_exp || finest_exp > 16 {
        return Err(Error::InvalidConfig(format!(
            "grid exponents {coarsest_exp}..{finest_exp}"
        )));
    }
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    if n_paths == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidConfig("need at least one path and a positive horizon".into()));
    }
    let p = &d.params;
    let coarse_dt = (-(coarsest_exp as f64)).exp2();
    let fine_dt = (-(finest_exp as f64)).exp2();
    let coarse_steps = (horizon / coarse_dt).round().max(1.0) as usize;
    let horizon = coarse_steps as f64 * coarse_dt;
    let fine_steps = coarse_steps << (finest_exp - coarsest_exp);
    let l0 = k.powf(1.0 / (p.alpha - 1.0));

    let paths: Vec<Vec<f64>> = (0..n_paths)
        .map(|i| {
            let mut z = vec![0.0; fine_steps];
            fill_normals(seed, i as u64, &mut z);
            let sd = fine_dt.sqrt();
            let mut b = Vec::with_capacity(fine_steps + 1);
            b.push(0.0);
            let mut acc = 0.0;
            for zk in z {
                acc += sd * zk;
                b.push(acc);
            }
            b
        })
        .collect();

    let mut levels = Vec::new();
    for e in coarsest_exp..=finest_exp {
        let stride = 1usize << (finest_exp - e);
        let dt = (-(e as f64)).exp2();
        let grid = TimeGrid::with_steps(dt, fine_steps / stride);
        let mut res: Vec<f64> = paths
            .iter()
            .map(|fine| {
                let b: Vec<f64> = fine.iter().step_by(stride).copied().collect();
                let level: Vec<f64> = b
                    .iter()
                    .enumerate()
                    .map(|(i, &bi)| l0 * (d.theta * bi - d.lambda * grid.t(i)).exp())
                    .collect();
                let (y, c) = track(&level, &grid, p.eta, &Decay::Constant(p.beta));
                e77_residual(&b, &y, &c, dt, p.eta, p.beta, p.r, xi).abs()
            })
            .collect();
        let max = res.iter().copied().fold(0.0, f64::max);
        levels.push(E77Level {
            dt,
            median_abs_residual: median(&mut res),
            max_abs_residual: max,
        });
    }
    Ok(E77Report {
        k,
        xi,
        horizon,
        n_paths,
        levels,
    })
}
