//! The constant linking `K` and the Lagrange multiplier `M`:
//!
//! ```text
//! M = K beta E^b[ int_0^inf e^{-(delta + alpha beta) t} exp(min_{v <= t} Z_v) dt ],
//! Z_v = (a - b) B_v + (delta + beta (alpha - 1) - r - (a^2 - b^2) / 2) v,
//! ```
//!
//! with `B` drifting at `b`. The exponent is at most zero, so the tail after
//! `T` is below `e^{-(delta + alpha beta) T} / (delta + alpha beta)`.

use serde::Serialize;

use super::{bridge_min, choose_horizon, check_tail, run_paths, summarize, MCConfig, MCEstimate};
use crate::error::{Error, Result};
use crate::model::validate;
use crate::ModelParams;
use crate::numeric::adaptive_simpson;
use crate::rng::split_seed;

fn rho(p: &ModelParams) -> f64 {
    p.delta + p.alpha * p.beta
}

/// Drift of `Z` in the time variable, excluding the Brownian part.
fn z_drift(p: &ModelParams) -> f64 {
    p.delta + p.beta * (p.alpha - 1.0) - p.r - 0.5 * (p.a * p.a - p.b * p.b)
}

pub fn expectation_tail_bound(p: &ModelParams, horizon: f64) -> f64 {
    (-rho(p) * horizon).exp() / rho(p)
}

/// One path of `int_0^T e^{-rho t} exp(min Z) dt` with exact exponential weights.
pub(crate) fn klm_path(p: &ModelParams, dt: f64, z: &[f64], e: &[f64]) -> f64 {
    let r = rho(p);
    let q = (-r * dt).exp();
    let mut w = -(-r * dt).exp_m1() / r;
    let spread = p.a - p.b;
    let step_drift = spread * p.b * dt + z_drift(p) * dt;
    let step_vol = spread * dt.sqrt();
    let var = step_vol * step_vol;
    let (mut zv, mut zmin, mut level) = (0.0, 0.0, 1.0);
    let mut sum = 0.0;
    for (zk, ek) in z.iter().zip(e) {
        sum += w * level;
        w *= q;
        let prev = zv;
        zv += step_drift + step_vol * zk;
        let bottom = bridge_min(prev, zv, var, *ek);
        if bottom < zmin {
            zmin = bottom;
            level = zmin.exp();
        }
    }
    sum
}

/// Estimate of the expectation `J` (without the `K beta` factor).
pub fn klm_expectation(p: &ModelParams, cfg: &MCConfig) -> Result<MCEstimate> {
    validate(p)?;
    cfg.validate()?;
    let run = |c: &MCConfig, h: f64| -> Vec<f64> {
        let n = c.steps(h);
        run_paths(c, n, c.n_paths, |_, z, e| klm_path(p, c.dt, z, e))
    };
    let horizon = choose_horizon(cfg, |h| expectation_tail_bound(p, h), |c, h| Ok(summarize(&run(c, h), c.antithetic).0))?;
    let values = run(cfg, horizon);
    let (mean, stderr) = summarize(&values, cfg.antithetic);
    let est = MCEstimate {
        mean,
        stderr,
        n_paths: values.len(),
        dt: cfg.dt,
        horizon,
        tail_bound: expectation_tail_bound(p, horizon),
    };
    check_tail(&est)?;
    Ok(est)
}

/// Lagrange multiplier `M` belonging to `K`, as a Monte Carlo estimate.
pub fn klm_relation(p: &ModelParams, k: f64, cfg: &MCConfig) -> Result<MCEstimate> {
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    let j = klm_expectation(p, cfg)?;
    let scale = k * p.beta;
    Ok(MCEstimate {
        mean: scale * j.mean,
        stderr: scale * j.stderr,
        tail_bound: scale * j.tail_bound,
        ..j
    })
}

/// `|estimate / M - 1|` for a given multiplier.
pub fn backward_eq_residual(p: &ModelParams, k: f64, m: f64, cfg: &MCConfig) -> Result<f64> {
    let est = klm_relation(p, k, cfg)?;
    Ok((est.mean / m - 1.0).abs())
}

/// `J` by quadrature when `a = b`: the minimum is deterministic.
pub fn klm_quadrature(p: &ModelParams) -> Option<f64> {
    if p.a != p.b {
        return None;
    }
    let r = rho(p);
    let c = z_drift(p);
    let f = |t: f64| (-r * t).exp() * (c * t).min(0.0).exp();
    Some(adaptive_simpson(&f, 0.0, 80.0 / r, 1e-13, 60))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BackwardReport {
    pub k: f64,
    pub m: MCEstimate,
    pub m_independent: MCEstimate,
    /// `|M - M'| / sqrt(se^2 + se'^2)`.
    pub reproducibility_z: f64,
    /// Relative residual of the second estimate against the first.
    pub residual: f64,
    /// Estimate at `2K` (independent seed).
    pub m_double_k: MCEstimate,
    /// `|M(2K) - 2 M(K)| / joint SE`.
    pub linearity_z: f64,
}

impl BackwardReport {
    pub fn pass(&self) -> bool {
        self.reproducibility_z <= 3.0 && self.linearity_z <= 3.0
    }

    pub fn margin(&self) -> f64 {
        3.0 - self.reproducibility_z.max(self.linearity_z)
    }
}

/// Two independent estimates of `M(K)` and one of `M(2K)`.
pub fn backward_check(p: &ModelParams, k: f64, cfg: &MCConfig) -> Result<BackwardReport> {
    let first = klm_relation(p, k, cfg)?;
    let fixed = MCConfig {
        horizon: Some(first.horizon),
        ..*cfg
    };
    let second = klm_relation(p, k, &fixed.with_seed(split_seed(cfg.seed, 1)))?;
    let doubled = klm_relation(p, 2.0 * k, &fixed.with_seed(split_seed(cfg.seed, 2)))?;
    let joint = first.stderr.hypot(second.stderr);
    let joint2 = doubled.stderr.hypot(2.0 * first.stderr);
    Ok(BackwardReport {
        k,
        m: first,
        m_independent: second,
        reproducibility_z: (first.mean - second.mean).abs() / joint,
        residual: (second.mean / first.mean - 1.0).abs(),
        m_double_k: doubled,
        linearity_z: (doubled.mean - 2.0 * first.mean).abs() / joint2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MCConfig {
        MCConfig {
            n_paths: 2000,
            dt: 1.0 / 64.0,
            ..MCConfig::default()
        }
    }

    #[test]
    fn reproducible_and_linear() {
        let p = ModelParams::reference();
        let r = backward_check(&p, 0.8342, &cfg()).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.m.mean > 0.0);
        assert!(r.m.mean < 0.8342 * 0.1 / (p.delta + p.alpha * p.beta) + 1e-12);
        let m = r.m.mean;
        assert!(backward_eq_residual(&p, 0.8342, m, &cfg()).unwrap() < 1e-14);
    }

    #[test]
    fn common_prior_matches_quadrature_and_multiplier() {
        // a = b, delta < r + (1 - alpha) beta: M = K beta / (r + beta)
        let p = ModelParams {
            a: 0.1,
            b: 0.1,
            delta: 0.05,
            ..ModelParams::reference()
        };
        let j = klm_quadrature(&p).unwrap();
        assert!((j - 1.0 / (p.r + p.beta)).abs() < 1e-9, "{j}");
        let est = klm_expectation(&p, &cfg()).unwrap();
        assert!(est.stderr < 1e-12, "{}", est.stderr);
        assert!((est.mean - j).abs() <= 3.0 * est.stderr + 1e-3 * j + est.tail_bound, "{est:?} {j}");
        // delta above the threshold: M = K beta / (delta + alpha beta)
        let p2 = ModelParams { delta: 0.3, ..p };
        let j2 = klm_quadrature(&p2).unwrap();
        assert!((j2 - 1.0 / (p2.delta + p2.alpha * p2.beta)).abs() < 1e-9);
        assert!(klm_quadrature(&ModelParams::reference()).is_none());
    }
}
