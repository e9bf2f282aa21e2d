//! Discrete g-expectations on a binomial tree.
//!
//! The tree is stored unrecombined (node `(k, j)` is the path whose up/down
//! moves are the bits of `j`, first step most significant), so terminal
//! payoffs may depend on the whole Brownian path. Each step solves
//!
//! ```text
//! Y = (Y_up + Y_down) / 2 + dt g(Z),    Z = (Y_up - Y_down) / (2 sqrt(dt)).
//! ```
//!
//! For `g(z) = min_{xi in [lo, hi]} xi z` this is exactly the minimum over
//! branch probabilities `(1 +- xi sqrt(dt)) / 2`, which `prior_enumerate`
//! checks by brute force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `g(z) = min xi z`, concave: worst case for a gain.
    Inf,
    /// `g(z) = max xi z`, convex: worst case for a cost.
    Sup,
}

/// Piecewise-linear driver generated by the kernel interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Driver<F> {
    pub lo: F,
    pub hi: F,
    pub orientation: Orientation,
}

impl<F: Scalar> Driver<F> {
    pub fn new(lo: F, hi: F, orientation: Orientation) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::OrderingViolation(format!("driver interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, orientation })
    }

    pub fn inf(lo: F, hi: F) -> Result<Self> {
        Self::new(lo, hi, Orientation::Inf)
    }

    pub fn sup(lo: F, hi: F) -> Result<Self> {
        Self::new(lo, hi, Orientation::Sup)
    }

    /// Driver identically zero.
    pub fn zero() -> Self {
        Self {
            lo: F::zero(),
            hi: F::zero(),
            orientation: Orientation::Inf,
        }
    }

    pub fn eval(&self, z: F) -> F {
        let pos = z.max(F::zero());
        let neg = (-z).max(F::zero());
        match self.orientation {
            Orientation::Inf => self.lo * pos - self.hi * neg,
            Orientation::Sup => self.hi * pos - self.lo * neg,
        }
    }

    /// Lipschitz constant.
    pub fn kappa(&self) -> F {
        self.lo.abs().max(self.hi.abs())
    }

    /// `sup_z (g(z) - xi z)` for `Inf`, `sup_z (xi z - g(z))` for `Sup`:
    /// zero on the interval, `+inf` off it.
    pub fn convex_dual(&self, xi: F) -> F {
        if xi >= self.lo && xi <= self.hi {
            F::zero()
        } else {
            F::infinity()
        }
    }

    /// Kernel attaining `g(z) = xi z`; `z = 0` resolves to `lo`.
    pub fn kernel_from_z(&self, z: F) -> F {
        let up = z > F::zero();
        let down = z < F::zero();
        match self.orientation {
            Orientation::Inf if down => self.hi,
            Orientation::Sup if up => self.hi,
            _ => self.lo,
        }
    }

    /// Branch probability of an up move under kernel `xi`.
    pub fn up_weight(xi: F, dt: F) -> F {
        F::lit(0.5) * (F::one() + xi * dt.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Lattice<F> {
    pub n_steps: usize,
    pub dt: F,
}

/// Largest tree the solver will allocate.
pub const MAX_STEPS: usize = 22;
/// Decision-node budget of the brute-force oracle (`n_steps <= 4`).
pub const ENUMERATION_LIMIT: usize = 15;

impl<F: Scalar> Lattice<F> {
    pub fn new(n_steps: usize, dt: F) -> Result<Self> {
        if n_steps == 0 || n_steps > MAX_STEPS {
            return Err(Error::OutOfRange {
                field: "nSteps",
                value: n_steps as f64,
                lo: 1.0,
                hi: MAX_STEPS as f64,
            });
        }
        if !(dt > F::zero()) {
            return Err(Error::NonPositive {
                field: "dt",
                value: dt.as_f64(),
            });
        }
        Ok(Self { n_steps, dt })
    }

    pub fn check_kappa(&self, kappa: F) -> Result<()> {
        let v = kappa * self.dt.sqrt();
        if v >= F::one() {
            Err(Error::LatticeTooCoarse(v.as_f64()))
        } else {
            Ok(())
        }
    }

    pub fn leaves(&self) -> usize {
        1 << self.n_steps
    }

    pub fn sqrt_dt(&self) -> F {
        self.dt.sqrt()
    }

    /// Brownian value at node `(k, j)`.
    pub fn b_at(&self, k: usize, j: usize) -> F {
        let ups = j.count_ones() as i64;
        F::from_i64(2 * ups - k as i64).unwrap() * self.sqrt_dt()
    }

    /// `B` along the path ending at leaf `j`, length `n_steps + 1`.
    pub fn path(&self, leaf: usize) -> Vec<F> {
        let n = self.n_steps;
        (0..=n).map(|k| self.b_at(k, leaf >> (n - k))).collect()
    }

    pub fn terminal_values<P: Fn(&[F]) -> F>(&self, payoff: P) -> Vec<F> {
        (0..self.leaves()).map(|j| payoff(&self.path(j))).collect()
    }
}

/// Terminal payoffs offered by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Payoff {
    TerminalB,
    /// `(B_T - strike)^+`.
    Ramp { strike: f64 },
    /// `1{B_T > level}`.
    Indicator { level: f64 },
}

impl Payoff {
    pub fn eval<F: Scalar>(&self, path: &[F]) -> F {
        let bt = *path.last().unwrap();
        match *self {
            Payoff::TerminalB => bt,
            Payoff::Ramp { strike } => (bt - F::lit(strike)).max(F::zero()),
            Payoff::Indicator { level } => {
                if bt > F::lit(level) {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }
}

/// Values, `Z` and kernels at every node. `values[k][j]` is the conditional
/// g-expectation at node `(k, j)`; `z` and `kernels` exist for `k < n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSolution<F> {
    pub values: Vec<Vec<F>>,
    pub z: Vec<Vec<F>>,
    pub kernels: Vec<Vec<F>>,
}

impl<F: Scalar> LatticeSolution<F> {
    pub fn root(&self) -> F {
        self.values[0][0]
    }

    /// Conditional value at time step `k` on every node of that level.
    pub fn at_level(&self, k: usize) -> &[F] {
        &self.values[k]
    }
}

/// Backward induction with an arbitrary Lipschitz driver callback.
pub fn lattice_solve_with<F: Scalar, G: Fn(F) -> F>(g: G, kappa: F, terminal: Vec<F>, lat: &Lattice<F>) -> Result<Vec<Vec<F>>> {
    lat.check_kappa(kappa)?;
    if terminal.len() != lat.leaves() {
        return Err(Error::InvalidConfig(format!(
            "{} terminal values for {} leaves",
            terminal.len(),
            lat.leaves()
        )));
    }
    let half = F::lit(0.5);
    let sd = lat.sqrt_dt();
    let mut values = vec![Vec::new(); lat.n_steps + 1];
    values[lat.n_steps] = terminal;
    for k in (0..lat.n_steps).rev() {
        let next = &values[k + 1];
        let level: Vec<F> = (0..1usize << k)
            .map(|j| {
                let (down, up) = (next[2 * j], next[2 * j + 1]);
                let z = (up - down) / (F::lit(2.0) * sd);
                half * (up + down) + lat.dt * g(z)
            })
            .collect();
        values[k] = level;
    }
    Ok(values)
}

/// Solves the g-expectation of the given terminal values.
pub fn lattice_solve_values<F: Scalar>(d: &Driver<F>, terminal: Vec<F>, lat: &Lattice<F>) -> Result<LatticeSolution<F>> {
    let values = lattice_solve_with(|z| d.eval(z), d.kappa(), terminal, lat)?;
    let two_sd = F::lit(2.0) * lat.sqrt_dt();
    let mut z = Vec::with_capacity(lat.n_steps);
    let mut kernels = Vec::with_capacity(lat.n_steps);
    for k in 0..lat.n_steps {
        let next = &values[k + 1];
        let zk: Vec<F> = (0..1usize << k).map(|j| (next[2 * j + 1] - next[2 * j]) / two_sd).collect();
        kernels.push(zk.iter().map(|&x| d.kernel_from_z(x)).collect());
        z.push(zk);
    }
    Ok(LatticeSolution { values, z, kernels })
}

pub fn lattice_solve<F: Scalar, P: Fn(&[F]) -> F>(d: &Driver<F>, payoff: P, lat: &Lattice<F>) -> Result<LatticeSolution<F>> {
    lattice_solve_values(d, lat.terminal_values(payoff), lat)
}

/// Root value only; same as `lattice_solve(..).root()`.
pub fn gexp_eval<F: Scalar, P: Fn(&[F]) -> F>(d: &Driver<F>, payoff: P, lat: &Lattice<F>) -> Result<F> {
    Ok(lattice_solve(d, payoff, lat)?.root())
}

/// Linear expectation of the terminal values when node `(k, j)` uses kernel `kernel(k, j)`.
pub fn reweighted_expectation<F: Scalar, K: Fn(usize, usize) -> F>(terminal: &[F], lat: &Lattice<F>, kernel: K) -> F {
    let n = lat.n_steps;
    let mut total = F::zero();
    for (leaf, &x) in terminal.iter().enumerate() {
        let mut prob = F::one();
        for k in 0..n {
            let j = leaf >> (n - k);
            let up = (leaf >> (n - k - 1)) & 1 == 1;
            let pu = Driver::up_weight(kernel(k, j), lat.dt);
            prob = prob * if up { pu } else { F::one() - pu };
        }
        total = total + prob * x;
    }
    total
}

/// Brute-force min (Inf) or max (Sup) over all endpoint kernel assignments.
pub fn prior_enumerate<F: Scalar, P: Fn(&[F]) -> F>(d: &Driver<F>, payoff: P, lat: &Lattice<F>) -> Result<F> {
    lat.check_kappa(d.kappa())?;
    let nodes = lat.leaves() - 1;
    if nodes > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            nodes,
            limit: ENUMERATION_LIMIT,
        });
    }
    let terminal = lat.terminal_values(payoff);
    let mut best: Option<F> = None;
    for mask in 0usize..(1 << nodes) {
        // node (k, j) has flat index 2^k - 1 + j
        let v = reweighted_expectation(&terminal, lat, |k, j| {
            if (mask >> ((1usize << k) - 1 + j)) & 1 == 1 {
                d.hi
            } else {
                d.lo
            }
        });
        best = Some(match (best, d.orientation) {
            (None, _) => v,
            (Some(b), Orientation::Inf) => b.min(v),
            (Some(b), Orientation::Sup) => b.max(v),
        });
    }
    Ok(best.unwrap())
}
