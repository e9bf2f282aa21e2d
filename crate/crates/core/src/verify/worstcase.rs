//! Search over adapted kernels for a prior that beats the closed-form worst
//! cases: lower utility than under `b` or higher cost than under `a`.
//!
//! Candidates and references are simulated in drift form on the same normals,
//! so each comparison is a paired difference.

use serde::Serialize;

use super::kernel::random_candidates;
use super::mc::{cost_path_drift, cost_tail_bound, utility_path, utility_tail_bound};
use super::{run_paths, summarize, KernelStrategy, MCConfig, TAIL_FRACTION};
use crate::error::{Error, Result};
use crate::DerivedConstants;
use crate::stationary::{expected_cost_for_kernel, expected_utility_closed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Side {
    Utility,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CandidateResult {
    pub side: Side,
    pub kernel: KernelStrategy,
    pub estimate: f64,
    /// Candidate minus reference for utility, reference minus candidate for cost.
    pub advantage: f64,
    pub advantage_se: f64,
    /// `advantage + 3 SE`; negative means a violation.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WorstCaseReport {
    pub horizon: f64,
    pub utility_reference: f64,
    pub cost_reference: f64,
    pub candidates: Vec<CandidateResult>,
    pub min_margin: f64,
    pub violations: usize,
}

impl WorstCaseReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }

    pub fn worst(&self) -> Option<&CandidateResult> {
        self.candidates.iter().min_by(|a, b| a.margin.total_cmp(&b.margin))
    }

    /// `ViolationFound` with the offending kernel serialized for replay.
    pub fn verdict(&self) -> Result<()> {
        match self.worst() {
            Some(c) if c.margin < 0.0 => Err(Error::ViolationFound {
                kernel: serde_json::to_string(&c.kernel).unwrap_or_default(),
                margin: c.margin,
            }),
            _ => Ok(()),
        }
    }

    pub fn side_min_margin(&self, side: Side) -> f64 {
        self.candidates
            .iter()
            .filter(|c| c.side == side)
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

fn horizon_for(d: &DerivedConstants, k: f64, cfg: &MCConfig) -> Result<f64> {
    if let Some(h) = cfg.horizon {
        return Ok(h);
    }
    let p = &d.params;
    let phi = expected_utility_closed(p.eta, k, d);
    let psi_low = expected_cost_for_kernel(p.eta, k, p.a_prime, d)?;
    let mut h = 4.0;
    while utility_tail_bound(d, k, p.b_prime, h) >= TAIL_FRACTION * phi || cost_tail_bound(d, k, p.a, h) >= TAIL_FRACTION * psi_low {
        h *= 2.0;
        if h > 1024.0 {
            return Err(Error::TailTooLarge {
                bound: utility_tail_bound(d, k, p.b_prime, h),
                target: TAIL_FRACTION * phi,
            });
        }
    }
    Ok(h)
}

/// Utility candidates: `b`, `b'`, then random ones; cost candidates: `a'`, then random ones.
pub fn default_candidates(d: &DerivedConstants, n: usize, horizon: f64, seed: u64) -> (Vec<KernelStrategy>, Vec<KernelStrategy>) {
    let p = &d.params;
    let mut util = vec![KernelStrategy::constant(p.b), KernelStrategy::constant(p.b_prime)];
    util.extend(random_candidates(p.b, p.b_prime, n.saturating_sub(2), horizon, seed));
    util.truncate(n);
    let mut cost = vec![KernelStrategy::constant(p.a_prime)];
    cost.extend(random_candidates(p.a_prime, p.a, n.saturating_sub(1), horizon, seed ^ 0x5eed));
    cost.truncate(n);
    (util, cost)
}

/// Compares every candidate with the reference kernel on common paths.
pub fn worstcase_compare(
    d: &DerivedConstants,
    k: f64,
    utility_candidates: &[KernelStrategy],
    cost_candidates: &[KernelStrategy],
    cfg: &MCConfig,
) -> Result<WorstCaseReport> {
    cfg.validate()?;
    let p = &d.params;
    for c in utility_candidates {
        c.check(p.b, p.b_prime)?;
    }
    for c in cost_candidates {
        c.check(p.a_prime, p.a)?;
    }
    let horizon = horizon_for(d, k, cfg)?;
    let n = cfg.steps(horizon);
    let dt = cfg.dt;
    let util_ref = KernelStrategy::constant(p.b);
    let cost_ref = KernelStrategy::constant(p.a);
    let rows = run_paths(cfg, n, cfg.n_paths, |_, z, e| {
        let u0 = utility_path(d, k, &util_ref, dt, z, e);
        let c0 = cost_path_drift(d, k, &cost_ref, dt, z, e).0;
        let us: Vec<f64> = utility_candidates.iter().map(|c| utility_path(d, k, c, dt, z, e)).collect();
        let cs: Vec<f64> = cost_candidates.iter().map(|c| cost_path_drift(d, k, c, dt, z, e).0).collect();
        (u0, c0, us, cs)
    });
    let u_ref: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let c_ref: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let utility_reference = summarize(&u_ref, cfg.antithetic).0;
    let cost_reference = summarize(&c_ref, cfg.antithetic).0;
    let mut candidates = Vec::new();
    for (i, kernel) in utility_candidates.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.2[i]).collect();
        let diff: Vec<f64> = rows.iter().map(|r| r.2[i] - r.0).collect();
        let (adv, se) = summarize(&diff, cfg.antithetic);
        candidates.push(CandidateResult {
            side: Side::Utility,
            kernel: kernel.clone(),
            estimate: summarize(&vals, cfg.antithetic).0,
            advantage: adv,
            advantage_se: se,
            margin: adv + 3.0 * se,
        });
    }
    for (i, kernel) in cost_candidates.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.3[i]).collect();
        let diff: Vec<f64> = rows.iter().map(|r| r.1 - r.3[i]).collect();
        let (adv, se) = summarize(&diff, cfg.antithetic);
        candidates.push(CandidateResult {
            side: Side::Cost,
            kernel: kernel.clone(),
            estimate: summarize(&vals, cfg.antithetic).0,
            advantage: adv,
            advantage_se: se,
            margin: adv + 3.0 * se,
        });
    }
    let min_margin = candidates.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let violations = candidates.iter().filter(|c| c.margin < 0.0).count();
    Ok(WorstCaseReport {
        horizon,
        utility_reference,
        cost_reference,
        candidates,
        min_margin,
        violations,
    })
}

/// `n_candidates` kernels per side drawn with `seed`, then compared.
pub fn worstcase_search(d: &DerivedConstants, k: f64, n_candidates: usize, seed: u64, cfg: &MCConfig) -> Result<WorstCaseReport> {
    let horizon = horizon_for(d, k, cfg)?;
    let (u, c) = default_candidates(d, n_candidates, horizon, seed);
    worstcase_compare(d, k, &u, &c, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, validate};
    use crate::ModelParams;

    fn d0() -> DerivedConstants {
        derive(&validate(&ModelParams::reference()).unwrap()).unwrap()
    }

    #[test]
    fn small_search_passes() {
        let d = d0();
        let cfg = MCConfig {
            n_paths: 300,
            dt: 1.0 / 32.0,
            ..MCConfig::default()
        };
        let r = worstcase_search(&d, d.k, 8, 1, &cfg).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.verdict().is_ok());
        // reference candidate b: identical paths, zero advantage
        assert_eq!(r.candidates[0].advantage, 0.0);
        // a' is strictly cheaper than a on every path
        let a_prime = r.candidates.iter().find(|c| c.side == Side::Cost).unwrap();
        assert!(a_prime.advantage > 0.0);
    }

    #[test]
    fn out_of_interval_candidate_rejected() {
        let d = d0();
        let cfg = MCConfig { n_paths: 100, ..MCConfig::default() };
        let bad = [KernelStrategy::constant(d.params.a)];
        assert!(matches!(
            worstcase_compare(&d, d.k, &bad, &[], &cfg),
            Err(Error::KernelOutOfBounds { .. })
        ));
    }

    #[test]
    fn verdict_reports_kernel() {
        let r = WorstCaseReport {
            horizon: 1.0,
            utility_reference: 1.0,
            cost_reference: 1.0,
            candidates: vec![CandidateResult {
                side: Side::Cost,
                kernel: KernelStrategy::constant(0.1),
                estimate: 2.0,
                advantage: -1.0,
                advantage_se: 0.1,
                margin: -0.7,
            }],
            min_margin: -0.7,
            violations: 1,
        };
        match r.verdict() {
            Err(Error::ViolationFound { kernel, margin }) => {
                assert!(kernel.contains("constant"));
                assert_eq!(margin, -0.7);
            }
            other => panic!("{other:?}"),
        }
    }
}
