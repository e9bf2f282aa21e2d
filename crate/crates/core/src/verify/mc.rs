//! Monte Carlo estimators of expected utility and expected cost of the plan
//! tracking `L^K`, with the analytic truncation bounds that choose the horizon.
//!
//! All estimators work with the log level `X_t = theta B_t - (lambda - beta) t`
//! and its running maximum, so `M_t = max(eta, l0 e^{max X})` only needs an
//! exponential when the maximum moves.

use serde::Serialize;

use super::{bridge_max, check_tail, choose_horizon, run_paths, summarize, KernelStrategy, MCConfig, MCEstimate};
use crate::error::{Error, Result};
use crate::DerivedConstants;
use crate::rng::split_seed;
use crate::stationary::present_value;

fn level0(d: &DerivedConstants, k: f64) -> f64 {
    k.powf(1.0 / (d.params.alpha - 1.0))
}

/// Bound on `(1/alpha) int_T^inf e^{-(delta + alpha beta) t} E[M_t^alpha] dt` when the
/// kernel never exceeds `xi_max`.
pub fn utility_tail_bound(d: &DerivedConstants, k: f64, xi_max: f64, horizon: f64) -> f64 {
    let p = &d.params;
    let rho = p.delta + p.alpha * p.beta;
    let mu = d.lambda - p.beta - d.theta * xi_max;
    let gamma = 2.0 * mu / (d.theta * d.theta);
    if mu <= 0.0 || gamma <= p.alpha {
        return f64::INFINITY;
    }
    let top = p.eta.powf(p.alpha).max(level0(d, k).powf(p.alpha));
    (-rho * horizon).exp() / rho * top * gamma / (gamma - p.alpha) / p.alpha
}

/// Bound on the discounted consumption after `T` when the kernel never exceeds `xi_max`.
pub fn cost_tail_bound(d: &DerivedConstants, k: f64, xi_max: f64, horizon: f64) -> f64 {
    let p = &d.params;
    let mu = d.lambda - p.beta - d.theta * xi_max;
    let gamma = 2.0 * mu / (d.theta * d.theta);
    if mu <= 0.0 || gamma <= 1.0 {
        return f64::INFINITY;
    }
    let growth = 0.5 * d.theta * d.theta - mu;
    level0(d, k) / p.beta * (-(p.r + p.beta) * horizon + growth * horizon).exp() * gamma / (gamma - 1.0)
}

/// Per-path discounted utility `(1/alpha) sum_k w_k M_k^alpha` in drift form:
/// `B = W + int xi dt` with `W` the normals of the path.
pub(crate) fn utility_path(d: &DerivedConstants, k: f64, kernel: &KernelStrategy, dt: f64, z: &[f64], e: &[f64]) -> f64 {
    let p = &d.params;
    let (theta, drift, alpha, eta) = (d.theta, d.lambda - p.beta, p.alpha, p.eta);
    let l0 = level0(d, k);
    let rho = p.delta + p.alpha * p.beta;
    let q = (-rho * dt).exp();
    let mut w = -(-rho * dt).exp_m1() / rho;
    let sd = dt.sqrt();
    let (mut b, mut last_db, mut s_max, mut x_prev) = (0.0, 0.0, 0.0, 0.0);
    let var = theta * theta * dt;
    let mut m_alpha = eta.max(l0).powf(alpha);
    let mut sum = 0.0;
    for (i, zk) in z.iter().enumerate() {
        sum += w * m_alpha;
        w *= q;
        let t = i as f64 * dt;
        let xi = kernel.at(t, b, last_db);
        let db = xi * dt + sd * zk;
        b += db;
        last_db = db;
        let x = theta * b - drift * (t + dt);
        let top = bridge_max(x_prev, x, var, e[i]);
        x_prev = x;
        if top > s_max {
            s_max = top;
            m_alpha = eta.max(l0 * top.exp()).powf(alpha);
        }
    }
    sum / alpha
}

/// Per-path `(direct, identity)` cost estimators in drift form.
pub(crate) fn cost_path_drift(d: &DerivedConstants, k: f64, kernel: &KernelStrategy, dt: f64, z: &[f64], e: &[f64]) -> (f64, f64) {
    let p = &d.params;
    let (theta, drift, eta, beta) = (d.theta, d.lambda - p.beta, p.eta, p.beta);
    let l0 = level0(d, k);
    let kappa = p.r + beta;
    let q = (-kappa * dt).exp();
    let c1 = -(-kappa * dt).exp_m1() / kappa;
    let sd = dt.sqrt();
    let (mut b, mut last_db, mut s_max, mut x_prev) = (0.0, 0.0, 0.0, 0.0);
    let var = theta * theta * dt;
    let mut m = eta.max(l0);
    let mut disc = 1.0;
    let mut direct = (m - eta) / beta;
    let mut running = 0.0;
    for (i, zk) in z.iter().enumerate() {
        running += disc * m;
        let t = i as f64 * dt;
        let xi = kernel.at(t, b, last_db);
        let db = xi * dt + sd * zk;
        b += db;
        last_db = db;
        disc *= q;
        let x = theta * b - drift * (t + dt);
        let top = bridge_max(x_prev, x, var, e[i]);
        x_prev = x;
        if top > s_max {
            s_max = top;
            let next = eta.max(l0 * top.exp());
            direct += disc * (next - m) / beta;
            m = next;
        }
    }
    let identity = (1.0 + p.r / beta) * c1 * running - eta / beta + disc * m / beta;
    (direct, identity)
}

/// Per-path `(direct, identity)` estimators under the reference measure,
/// weighting with `eps^xi` (left-point stochastic integral).
pub(crate) fn cost_path_weighted(d: &DerivedConstants, k: f64, kernel: &KernelStrategy, dt: f64, z: &[f64], e: &[f64]) -> (f64, f64) {
    let p = &d.params;
    let (theta, drift, eta, beta) = (d.theta, d.lambda - p.beta, p.eta, p.beta);
    let l0 = level0(d, k);
    let kappa = p.r + beta;
    let c1 = -(-kappa * dt).exp_m1() / kappa;
    let sd = dt.sqrt();
    let (mut b, mut last_db, mut s_max, mut log_eps, mut x_prev) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let var = theta * theta * dt;
    let mut m = eta.max(l0);
    let mut direct = (m - eta) / beta;
    let mut running = 0.0;
    let mut weight = 1.0;
    for (i, zk) in z.iter().enumerate() {
        running += weight * m;
        let t = i as f64 * dt;
        let xi = kernel.at(t, b, last_db);
        let db = sd * zk;
        b += db;
        last_db = db;
        log_eps += xi * db - 0.5 * xi * xi * dt;
        // e^{-rt} eps_t e^{-beta t}
        weight = (log_eps - kappa * (t + dt)).exp();
        let x = theta * b - drift * (t + dt);
        let top = bridge_max(x_prev, x, var, e[i]);
        x_prev = x;
        if top > s_max {
            s_max = top;
            let next = eta.max(l0 * top.exp());
            direct += weight * (next - m) / beta;
            m = next;
        }
    }
    let identity = (1.0 + p.r / beta) * c1 * running - eta / beta + weight * m / beta;
    (direct, identity)
}

fn estimate(values: &[f64], cfg: &MCConfig, horizon: f64, tail: f64) -> MCEstimate {
    let (mean, stderr) = summarize(values, cfg.antithetic);
    MCEstimate {
        mean,
        stderr,
        n_paths: values.len(),
        dt: cfg.dt,
        horizon,
        tail_bound: tail,
    }
}

/// Expected utility `phi^{xi}(eta)` of the `L^K`-tracking plan under the prior with kernel `xi in [b, b']`.
pub fn mc_expected_utility(d: &DerivedConstants, k: f64, kernel: &KernelStrategy, cfg: &MCConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    kernel.check(d.params.b, d.params.b_prime)?;
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    let xi_max = kernel.max_value();
    let run = |c: &MCConfig, h: f64| -> Vec<f64> {
        let n = c.steps(h);
        run_paths(c, n, c.n_paths, |_, z, e| utility_path(d, k, kernel, c.dt, z, e))
    };
    let horizon = choose_horizon(
        cfg,
        |h| utility_tail_bound(d, k, xi_max, h),
        |c, h| Ok(summarize(&run(c, h), c.antithetic).0),
    )?;
    let values = run(cfg, horizon);
    let est = estimate(&values, cfg, horizon, utility_tail_bound(d, k, xi_max, horizon));
    check_tail(&est)?;
    Ok(est)
}

/// The two cost estimators and the SE of their paired difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CostEstimate {
    /// `sum e^{-rt} eps dC` on the grid.
    pub direct: MCEstimate,
    /// `(1 + r/beta) tilde_psi - eta/beta` plus the terminal term.
    pub identity: MCEstimate,
    pub difference_se: f64,
}

impl CostEstimate {
    pub fn estimators_agree(&self) -> bool {
        (self.direct.mean - self.identity.mean).abs() <= 3.0 * self.difference_se + 1e-10 * self.direct.mean.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum CostForm {
    /// Reference measure, reweighted by `eps^xi`.
    Weighted,
    /// Simulated directly under the prior (`B` has drift `xi`).
    Drift,
}

fn cost_estimate(pairs: &[(f64, f64)], cfg: &MCConfig, horizon: f64, tail: f64) -> CostEstimate {
    let direct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let identity: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    CostEstimate {
        direct: estimate(&direct, cfg, horizon, tail),
        identity: estimate(&identity, cfg, horizon, tail),
        difference_se: summarize(&diff, cfg.antithetic).1,
    }
}

/// Expected discounted cost `psi^{xi}(eta)` under the prior with kernel `xi in [a', a]`.
pub fn mc_expected_cost(
    d: &DerivedConstants,
    k: f64,
    kernel: &KernelStrategy,
    cfg: &MCConfig,
    form: CostForm,
) -> Result<CostEstimate> {
    cfg.validate()?;
    kernel.check(d.params.a_prime, d.params.a)?;
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    let xi_max = kernel.max_value();
    let run = |c: &MCConfig, h: f64| -> Vec<(f64, f64)> {
        let n = c.steps(h);
        run_paths(c, n, c.n_paths, |_, z, e| match form {
            CostForm::Weighted => cost_path_weighted(d, k, kernel, c.dt, z, e),
            CostForm::Drift => cost_path_drift(d, k, kernel, c.dt, z, e),
        })
    };
    let horizon = choose_horizon(
        cfg,
        |h| cost_tail_bound(d, k, xi_max, h),
        |c, h| {
            let v: Vec<f64> = run(c, h).iter().map(|p| p.0).collect();
            Ok(summarize(&v, c.antithetic).0)
        },
    )?;
    let pairs = run(cfg, horizon);
    let est = cost_estimate(&pairs, cfg, horizon, cost_tail_bound(d, k, xi_max, horizon));
    check_tail(&est.direct)?;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReferenceEstimates {
    /// `phi^b(eta)` reweighted by `eps^b`.
    pub utility: MCEstimate,
    /// `psi^a(eta)` reweighted by `eps^a`.
    pub cost: CostEstimate,
}

/// Utility under `b` and both cost estimators under `a` from one set of
/// reference-measure paths (constant kernels, so `eps` is exact at the nodes).
pub fn mc_reference(d: &DerivedConstants, k: f64, cfg: &MCConfig) -> Result<ReferenceEstimates> {
    cfg.validate()?;
    let p = &d.params;
    let horizon = match cfg.horizon {
        Some(h) => h,
        None => {
            let mut h = 4.0;
            while utility_tail_bound(d, k, p.b, h) >= super::TAIL_FRACTION * crate::stationary::expected_utility_closed(p.eta, k, d)
                || cost_tail_bound(d, k, p.a, h) >= super::TAIL_FRACTION * crate::stationary::expected_cost_closed(p.eta, k, d)
            {
                h *= 2.0;
                if h > 1024.0 {
                    return Err(Error::TailTooLarge {
                        bound: cost_tail_bound(d, k, p.a, h),
                        target: 0.0,
                    });
                }
            }
            h
        }
    };
    let n = cfg.steps(horizon);
    let dt = cfg.dt;
    let (theta, drift, eta, beta, alpha) = (d.theta, d.lambda - p.beta, p.eta, p.beta, p.alpha);
    let l0 = level0(d, k);
    let rho = p.delta + alpha * beta;
    let kappa = p.r + beta;
    let wu = -(-rho * dt).exp_m1() / rho;
    let c1 = -(-kappa * dt).exp_m1() / kappa;
    let (a, b) = (p.a, p.b);
    let (ua, ub) = (0.5 * a * a + kappa, 0.5 * b * b + rho);
    let sd = dt.sqrt();
    let var = theta * theta * dt;
    let rows = run_paths(cfg, n, cfg.n_paths, |_, z, e| {
        let (mut bm, mut s_max, mut x_prev) = (0.0, 0.0, 0.0);
        let mut m = eta.max(l0);
        let mut m_alpha = m.powf(alpha);
        let mut util = 0.0;
        let mut direct = (m - eta) / beta;
        let mut running = 0.0;
        let mut wa = 1.0;
        for (i, zk) in z.iter().enumerate() {
            let t = i as f64 * dt;
            util += (b * bm - ub * t).exp() * m_alpha;
            running += wa * m;
            bm += sd * zk;
            let t1 = t + dt;
            wa = (a * bm - ua * t1).exp();
            let x = theta * bm - drift * t1;
            let top = bridge_max(x_prev, x, var, e[i]);
            x_prev = x;
            if top > s_max {
                s_max = top;
                let next = eta.max(l0 * top.exp());
                direct += wa * (next - m) / beta;
                m = next;
                m_alpha = m.powf(alpha);
            }
        }
        let identity = (1.0 + p.r / beta) * c1 * running - eta / beta + wa * m / beta;
        (util * wu / alpha, direct, identity)
    });
    let util: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2)).collect();
    let utility = estimate(&util, cfg, horizon, utility_tail_bound(d, k, b, horizon));
    let cost = cost_estimate(&pairs, cfg, horizon, cost_tail_bound(d, k, a, horizon));
    check_tail(&utility)?;
    check_tail(&cost.direct)?;
    Ok(ReferenceEstimates { utility, cost })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentValuePoint {
    pub t: f64,
    pub b: f64,
    pub y: f64,
    pub closed_form: f64,
    pub estimate: MCEstimate,
}

/// Nested check of `V_t`: from the state `(B_t, M_t)` of an outer path, the
/// remaining cost discounted to `t` under the cost prior `a` is simulated and
/// compared with the closed form.
pub fn present_value_points(d: &DerivedConstants, t: f64, outer_paths: usize, cfg: &MCConfig) -> Result<Vec<PresentValuePoint>> {
    cfg.validate()?;
    let p = &d.params;
    let k = d.k;
    let l0 = level0(d, k);
    let (theta, drift, eta, beta) = (d.theta, d.lambda - p.beta, p.eta, p.beta);
    let horizon = cfg.horizon.unwrap_or(16.0);
    let n_outer = cfg.steps(t.max(cfg.dt));
    let n_inner = cfg.steps(horizon);
    let dt = cfg.dt;
    let sd = dt.sqrt();
    let outer_cfg = cfg.with_seed(split_seed(cfg.seed, 7));
    let var = theta * theta * dt;
    let states = run_paths(&outer_cfg, n_outer, outer_paths, |_, z, e| {
        let (mut bm, mut s_max, mut x_prev) = (0.0f64, 0.0f64, 0.0f64);
        for (i, zk) in z.iter().enumerate() {
            bm += sd * zk;
            let x = theta * bm - drift * (i + 1) as f64 * dt;
            s_max = s_max.max(bridge_max(x_prev, x, var, e[i]));
            x_prev = x;
        }
        (bm, s_max)
    });
    let t_end = n_outer as f64 * dt;
    let mut out = Vec::with_capacity(outer_paths);
    for (j, &(b_t, s_t)) in states.iter().enumerate() {
        let m_t = eta.max(l0 * s_t.exp());
        let y_t = (-beta * t_end).exp() * m_t;
        let closed = present_value(t_end, b_t, y_t, d);
        let x_t = theta * b_t - drift * t_end;
        let inner_cfg = cfg.with_seed(split_seed(cfg.seed, 1000 + j as u64));
        let kappa = p.r + beta;
        let q = (-kappa * dt).exp();
        let values = run_paths(&inner_cfg, n_inner, cfg.n_paths, |_, z, e| {
            // remaining cost in units discounted to t: sum e^{-(r+beta)(s-t)} e^{-beta t} dM / beta
            let (mut x, mut s, mut m, mut disc, mut acc) = (x_t, s_t, m_t, 1.0, 0.0);
            for (zk, ek) in z.iter().zip(e) {
                let x_prev = x;
                x += theta * (p.a * dt + sd * zk) - drift * dt;
                disc *= q;
                let top = bridge_max(x_prev, x, var, *ek);
                if top > s {
                    s = top;
                    let next = m.max(l0 * top.exp());
                    acc += disc * (next - m);
                    m = next;
                }
            }
            acc * (-beta * t_end).exp() / beta
        });
        let (mean, stderr) = summarize(&values, cfg.antithetic);
        out.push(PresentValuePoint {
            t: t_end,
            b: b_t,
            y: y_t,
            closed_form: closed,
            estimate: MCEstimate {
                mean,
                stderr,
                n_paths: values.len(),
                dt,
                horizon,
                tail_bound: (-beta * t_end).exp() * cost_tail_bound(d, (l0 * x_t.exp()).powf(p.alpha - 1.0), p.a, horizon),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, validate};
    use crate::ModelParams;
    use crate::stationary::{expected_cost_closed, expected_utility_closed};

    fn d0() -> DerivedConstants {
        derive(&validate(&ModelParams::reference()).unwrap()).unwrap()
    }

    fn cfg(n: usize) -> MCConfig {
        MCConfig {
            n_paths: n,
            dt: 1.0 / 64.0,
            horizon: None,
            seed: 5,
            antithetic: false,
            nested: None,
        }
    }

    #[test]
    fn tail_bounds_decay() {
        let d = d0();
        let u8 = utility_tail_bound(&d, d.k, d.params.b, 8.0);
        let u16 = utility_tail_bound(&d, d.k, d.params.b, 16.0);
        assert!(u16 < u8 && u16 > 0.0);
        assert!(cost_tail_bound(&d, d.k, d.params.a, 16.0) < cost_tail_bound(&d, d.k, d.params.a, 8.0));
        assert!(utility_tail_bound(&d, d.k, d.params.b, 16.0) < 0.005 * expected_utility_closed(1.0, d.k, &d));
    }

    #[test]
    fn utility_matches_closed_form_coarse() {
        let d = d0();
        let est = mc_expected_utility(&d, d.k, &KernelStrategy::constant(d.params.b), &cfg(4000)).unwrap();
        let cf = expected_utility_closed(d.params.eta, d.k, &d);
        assert!(est.agrees_with(cf, 0.02), "{est:?} vs {cf}");
    }

    #[test]
    fn huge_k_leaves_only_eta() {
        let d = d0();
        let k = 1e8;
        let est = mc_expected_utility(&d, k, &KernelStrategy::constant(d.params.b), &cfg(200)).unwrap();
        let p = &d.params;
        let target = p.eta.powf(p.alpha) / (p.alpha * (p.delta + p.alpha * p.beta));
        assert!((est.mean - target).abs() < 0.005 * target + 3.0 * est.stderr, "{est:?} vs {target}");
    }

    #[test]
    fn cost_forms_agree_with_closed_form_coarse() {
        let d = d0();
        for form in [CostForm::Weighted, CostForm::Drift] {
            let est = mc_expected_cost(&d, d.k, &KernelStrategy::constant(d.params.a), &cfg(4000), form).unwrap();
            assert!(est.direct.agrees_with(5.0, 0.02), "{form:?} {est:?}");
            assert!(est.identity.agrees_with(5.0, 0.02), "{form:?} {est:?}");
            assert!(est.estimators_agree(), "{form:?} {est:?}");
        }
    }

    #[test]
    fn out_of_interval_kernels_rejected() {
        let d = d0();
        assert!(matches!(
            mc_expected_utility(&d, d.k, &KernelStrategy::constant(0.05), &cfg(100)),
            Err(Error::KernelOutOfBounds { .. })
        ));
        assert!(matches!(
            mc_expected_cost(&d, d.k, &KernelStrategy::constant(0.2), &cfg(100), CostForm::Weighted),
            Err(Error::KernelOutOfBounds { .. })
        ));
        assert!(matches!(
            mc_expected_utility(&d, d.k, &KernelStrategy::constant(0.2), &cfg(50)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn deterministic_across_runs() {
        let d = d0();
        let c = MCConfig { horizon: Some(4.0), ..cfg(300) };
        let k1 = mc_expected_cost(&d, d.k, &KernelStrategy::constant(d.params.a), &c, CostForm::Weighted);
        let k2 = mc_expected_cost(&d, d.k, &KernelStrategy::constant(d.params.a), &c, CostForm::Weighted);
        assert_eq!(k1, k2);
    }

    #[test]
    fn antithetic_runs() {
        let d = d0();
        let c = MCConfig { antithetic: true, ..cfg(2000) };
        let est = mc_expected_utility(&d, d.k, &KernelStrategy::constant(d.params.b), &c).unwrap();
        let cf = expected_utility_closed(d.params.eta, d.k, &d);
        assert!(est.agrees_with(cf, 0.02));
    }

    #[test]
    fn present_value_nested() {
        let d = d0();
        let c = MCConfig { horizon: Some(16.0), ..cfg(1000) };
        let pts = present_value_points(&d, 1.0, 4, &c).unwrap();
        for pt in pts {
            assert!(pt.closed_form > 0.0);
            let e = &pt.estimate;
            assert!((e.mean - pt.closed_form).abs() <= 3.0 * e.stderr + 0.02 * pt.closed_form + e.tail_bound, "{pt:?}");
        }
        // t = 0 reduces to the budget
        let v0 = present_value(0.0, 0.0, d.params.eta, &d);
        assert!((v0 - expected_cost_closed(d.params.eta, d.k, &d)).abs() < 1e-12);
    }
}
