//! Fixed point between the worst-case kernels and the optimal plan on a
//! binomial lattice.
//!
//! Starting from node kernels for the utility and cost priors, the level
//! `L = (K e^{(delta - r) t} eps_cost / eps_util)^{1/(alpha-1)}` is tracked
//! on every leaf path. Solving the utility with `Inf[b, b']` and the cost
//! with `Sup[a', a]` gives new kernels from `Z`; at a fixed point they agree
//! with the old ones wherever `Z != 0`.

use serde::Serialize;

use crate::error::Result;
use crate::gexp::{lattice_solve_values, Driver, Lattice};
use crate::DerivedConstants;
use crate::tracking::{girsanov_density, track, Decay, TimeGrid};

/// Node kernels, `kernels[k][j]` for `k < n_steps`.
pub type NodeKernels = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FixedPointIteration {
    pub utility_distance: f64,
    pub cost_distance: f64,
    pub utility_zero_z: usize,
    pub cost_zero_z: usize,
    pub utility_value: f64,
    pub cost_value: f64,
}

impl FixedPointIteration {
    pub fn distance(&self) -> f64 {
        self.utility_distance.max(self.cost_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FixedPointReport {
    pub n_steps: usize,
    pub horizon: f64,
    pub k: f64,
    pub iterations: Vec<FixedPointIteration>,
    pub tolerance: f64,
}

impl FixedPointReport {
    pub fn pass(&self) -> bool {
        self.iterations.iter().all(|it| it.distance() <= self.tolerance)
    }

    pub fn margin(&self) -> f64 {
        self.iterations
            .iter()
            .map(|it| self.tolerance - it.distance())
            .fold(f64::INFINITY, f64::min)
    }
}

fn constant_kernels(n: usize, value: f64) -> NodeKernels {
    (0..n).map(|k| vec![value; 1 << k]).collect()
}

/// Utility and cost payoffs at every leaf for the given priors.
fn leaf_payoffs(d: &DerivedConstants, k: f64, lat: &Lattice<f64>, util: &NodeKernels, cost: &NodeKernels) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = &d.params;
    let n = lat.n_steps;
    let dt = lat.dt;
    let grid = TimeGrid::with_steps(dt, n);
    let rho = p.delta + p.alpha * p.beta;
    let step_weight = -(-rho * dt).exp_m1() / rho;
    let lo = p.a_prime.min(p.b);
    let hi = p.a.max(p.b_prime);
    let mut u_leaf = Vec::with_capacity(lat.leaves());
    let mut g_leaf = Vec::with_capacity(lat.leaves());
    for leaf in 0..lat.leaves() {
        let b = lat.path(leaf);
        let ku: Vec<f64> = (0..n).map(|s| util[s][leaf >> (n - s)]).collect();
        let kc: Vec<f64> = (0..n).map(|s| cost[s][leaf >> (n - s)]).collect();
        let eu = girsanov_density(&b, &ku, dt, lo, hi)?;
        let ec = girsanov_density(&b, &kc, dt, lo, hi)?;
        let level: Vec<f64> = (0..=n)
            .map(|s| {
                let t = grid.t(s);
                (k * ((p.delta - p.r) * t).exp() * ec[s] / eu[s]).powf(1.0 / (p.alpha - 1.0))
            })
            .collect();
        let (y, c) = track(&level, &grid, p.eta, &Decay::Constant(p.beta));
        let u: f64 = (0..n)
            .map(|s| (-p.delta * grid.t(s)).exp() * y[s].powf(p.alpha) / p.alpha * step_weight)
            .sum();
        let mut prev = 0.0;
        let mut g = 0.0;
        for s in 0..=n {
            g += (-p.r * grid.t(s)).exp() * (c[s] - prev);
            prev = c[s];
        }
        u_leaf.push(u);
        g_leaf.push(g);
    }
    Ok((u_leaf, g_leaf))
}

fn compare(old: &NodeKernels, new: &NodeKernels, z: &[Vec<f64>]) -> (f64, usize) {
    let mut dist: f64 = 0.0;
    let mut zeros = 0;
    for k in 0..old.len() {
        for j in 0..old[k].len() {
            if z[k][j] == 0.0 {
                zeros += 1;
            } else {
                dist = dist.max((old[k][j] - new[k][j]).abs());
            }
        }
    }
    (dist, zeros)
}

/// New kernels where `Z != 0`; the kernel is undetermined elsewhere, so the old one stays.
fn merge(old: &NodeKernels, mut new: NodeKernels, z: &[Vec<f64>]) -> NodeKernels {
    for k in 0..new.len() {
        for j in 0..new[k].len() {
            if z[k][j] == 0.0 {
                new[k][j] = old[k][j];
            }
        }
    }
    new
}

/// Runs `iterations` rounds from constant kernels `b` (utility) and `a` (cost).
pub fn fixed_point_check(d: &DerivedConstants, k: f64, n_steps: usize, horizon: f64, iterations: usize) -> Result<FixedPointReport> {
    let p = &d.params;
    let lat = Lattice::new(n_steps, horizon / n_steps as f64)?;
    let util_driver = Driver::inf(p.b, p.b_prime)?;
    let cost_driver = Driver::sup(p.a_prime, p.a)?;
    let mut util = constant_kernels(n_steps, p.b);
    let mut cost = constant_kernels(n_steps, p.a);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(1) {
        let (u_leaf, g_leaf) = leaf_payoffs(d, k, &lat, &util, &cost)?;
        let us = lattice_solve_values(&util_driver, u_leaf, &lat)?;
        let gs = lattice_solve_values(&cost_driver, g_leaf, &lat)?;
        let (ud, uz) = compare(&util, &us.kernels, &us.z);
        let (cd, cz) = compare(&cost, &gs.kernels, &gs.z);
        out.push(FixedPointIteration {
            utility_distance: ud,
            cost_distance: cd,
            utility_zero_z: uz,
            cost_zero_z: cz,
            utility_value: us.root(),
            cost_value: gs.root(),
        });
        util = merge(&util, us.kernels, &us.z);
        cost = merge(&cost, gs.kernels, &gs.z);
    }
    Ok(FixedPointReport {
        n_steps,
        horizon,
        k,
        iterations: out,
        tolerance: 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, validate};
    use crate::ModelParams;

    #[test]
    fn reference_is_fixed_point() {
        let d = derive(&validate(&ModelParams::reference()).unwrap()).unwrap();
        let r = fixed_point_check(&d, d.k, 8, 1.0, 2).unwrap();
        assert!(r.pass(), "{:?}", r.iterations);
        assert!(r.iterations[0].cost_value > 0.0);
    }
}
