//! Brownian paths, Girsanov densities, the minimal level `L^K`, and the
//! consumption plan that tracks a level process.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::DerivedConstants;
use crate::rng;
use crate::scalar::Scalar;

/// Uniform grid `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<F> {
    pub dt: F,
    pub n_steps: usize,
}

impl<F: Scalar> TimeGrid<F> {
    pub fn new(horizon: F, dt: F) -> Result<Self> {
        if !(dt > F::zero()) || !(horizon >= F::zero()) {
            return Err(Error::InvalidConfig(format!("grid with horizon {horizon} and step {dt}")));
        }
        let n = (horizon / dt).round().to_usize().unwrap_or(0);
        Ok(Self { dt, n_steps: n })
    }

    pub fn with_steps(dt: F, n_steps: usize) -> Self {
        Self { dt, n_steps }
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> F {
        self.t(self.n_steps)
    }

    pub fn t(&self, k: usize) -> F {
        F::from_usize(k).unwrap() * self.dt
    }

    pub fn times(&self) -> Vec<F> {
        (0..self.len()).map(|k| self.t(k)).collect()
    }
}

/// Satisfaction decay: constant `beta`, or node values of a positive `beta_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Decay<F> {
    Constant(F),
    Nodewise(Vec<F>),
}

impl<F: Scalar> Decay<F> {
    pub fn at(&self, k: usize) -> F {
        match self {
            Decay::Constant(b) => *b,
            Decay::Nodewise(v) => v[k],
        }
    }

    /// `G_k = int_0^{t_k} beta_s ds` (trapezoidal for node values).
    pub fn integrated(&self, grid: &TimeGrid<F>) -> Vec<F> {
        let half = F::lit(0.5);
        let mut g = Vec::with_capacity(grid.len());
        let mut acc = F::zero();
        g.push(acc);
        for k in 1..grid.len() {
            acc = acc
                + match self {
                    Decay::Constant(b) => *b * grid.dt,
                    Decay::Nodewise(v) => half * (v[k - 1] + v[k]) * grid.dt,
                };
            g.push(acc);
        }
        // avoid rounding drift for constant decay
        if let Decay::Constant(b) = self {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = *b * grid.t(k);
            }
        }
        g
    }
}

/// One simulated trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath<F> {
    pub grid: TimeGrid<F>,
    pub b: Vec<F>,
    pub eps: Vec<F>,
    pub level: Vec<F>,
    pub y: Vec<F>,
    /// Cumulative consumption at each node, including the jump at 0 (`C_{0-} = 0`).
    pub c: Vec<F>,
}

/// `B_0 = 0` plus i.i.d. `N(0, dt)` increments from the stream of `path`.
pub fn simulate_brownian<F: Scalar>(grid: &TimeGrid<F>, seed: u64, path: u64) -> Vec<F> {
    let mut z = vec![0.0; grid.n_steps];
    rng::fill_normals(seed, path, &mut z);
    let sd = grid.dt.sqrt();
    let mut b = Vec::with_capacity(grid.len());
    let mut acc = F::zero();
    b.push(acc);
    for zk in z {
        acc = acc + sd * F::lit(zk);
        b.push(acc);
    }
    b
}

/// Left-point discretization of `exp(int xi dB - 1/2 int xi^2 dt)`.
///
/// `kernel[k]` is the value on `[t_k, t_{k+1})`; it must lie in `[lo, hi]`.
pub fn girsanov_density<F: Scalar>(b: &[F], kernel: &[F], dt: F, lo: F, hi: F) -> Result<Vec<F>> {
    let half = F::lit(0.5);
    let mut eps = Vec::with_capacity(b.len());
    let mut log = F::zero();
    eps.push(F::one());
    for k in 0..b.len().saturating_sub(1) {
        let xi = kernel[k];
        if xi < lo || xi > hi || !xi.is_finite() {
            return Err(Error::KernelOutOfBounds {
                value: xi.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        log = log + xi * (b[k + 1] - b[k]) - half * xi * xi * dt;
        eps.push(log.exp());
    }
    Ok(eps)
}

/// `L_t = K^{1/(alpha-1)} exp(theta B_t - lambda t)`.
pub fn level_path_lk<F: Scalar>(
    b: &[F],
    grid: &TimeGrid<F>,
    k: F,
    d: &DerivedConstants<F>,
) -> Result<Vec<F>> {
    if !(k > F::zero()) {
        return Err(Error::NonPositiveK(k.as_f64()));
    }
    let l0 = k.powf(F::one() / (d.params.alpha - F::one()));
    Ok(b
        .iter()
        .enumerate()
        .map(|(i, &bi)| l0 * (d.theta * bi - d.lambda * grid.t(i)).exp())
        .collect())
}

/// Prefix maximum of `values[i] * weights[i]`.
pub fn running_sup<F: Scalar>(values: &[F], weights: &[F]) -> Vec<F> {
    let mut out = Vec::with_capacity(values.len());
    let mut m = F::neg_infinity();
    for (v, w) in values.iter().zip(weights) {
        m = m.max(*v * *w);
        out.push(m);
    }
    out
}

/// Minimal plan keeping `Y >= L` on the grid. Returns `(Y, C)`.
///
/// With `M_k = max(eta, max_{j<=k} L_j e^{G_j})`, consumption jumps by
/// `e^{-G_k}(M_k - M_{k-1}) / beta_k` and `Y_k = e^{-G_k} M_k`.
pub fn track<F: Scalar>(level: &[F], grid: &TimeGrid<F>, eta: F, decay: &Decay<F>) -> (Vec<F>, Vec<F>) {
    let g = decay.integrated(grid);
    let growth: Vec<F> = g.iter().map(|x| x.exp()).collect();
    let sup = running_sup(level, &growth);
    let mut y = Vec::with_capacity(level.len());
    let mut c = Vec::with_capacity(level.len());
    let mut prev_m = eta;
    let mut cum = F::zero();
    for k in 0..level.len() {
        let m = eta.max(sup[k]);
        let shrink = (-g[k]).exp();
        cum = cum + shrink * (m - prev_m) / decay.at(k);
        prev_m = m;
        y.push(shrink * m);
        c.push(cum);
    }
    (y, c)
}

/// Running maximum `M_k` of the tracked plan, the quantity consumption is a function of.
pub fn tracking_max<F: Scalar>(level: &[F], grid: &TimeGrid<F>, eta: F, decay: &Decay<F>) -> Vec<F> {
    let g = decay.integrated(grid);
    let growth: Vec<F> = g.iter().map(|x| x.exp()).collect();
    running_sup(level, &growth).into_iter().map(|m| m.max(eta)).collect()
}

/// `Y_t = eta e^{-G_t} + int_0^t beta_s e^{-(G_t - G_s)} dC_s` on the grid.
pub fn satisfaction_from_consumption<F: Scalar>(
    c: &[F],
    grid: &TimeGrid<F>,
    eta: F,
    decay: &Decay<F>,
) -> Result<Vec<F>> {
    let g = decay.integrated(grid);
    let mut y = Vec::with_capacity(c.len());
    let mut prev_c = F::zero();
    let mut prev_y = eta;
    for k in 0..c.len() {
        let dc = c[k] - prev_c;
        if dc < F::zero() {
            return Err(Error::NotMonotone(k));
        }
        let carried = if k == 0 { eta } else { (g[k - 1] - g[k]).exp() * prev_y };
        let yk = carried + decay.at(k) * dc;
        y.push(yk);
        prev_y = yk;
        prev_c = c[k];
    }
    Ok(y)
}

/// `Y <= max(eta, beta_max) (1 + C)` row by row.
pub fn kbound_holds<F: Scalar>(y: &[F], c: &[F], eta: F, beta_max: F) -> bool {
    let kb = eta.max(beta_max);
    let tol = F::lit(1e-12);
    y.iter()
        .zip(c)
        .all(|(&yk, &ck)| yk <= kb * (F::one() + ck) * (F::one() + tol))
}

/// Optimal path of the stationary problem: `B`, `eps^xi` for a constant kernel, `L^K`, `Y`, `C`.
pub fn optimal_path<F: Scalar>(
    grid: &TimeGrid<F>,
    d: &DerivedConstants<F>,
    xi: F,
    seed: u64,
    path: u64,
) -> Result<GridPath<F>> {
    let b = simulate_brownian(grid, seed, path);
    let kernel = vec![xi; grid.n_steps];
    let eps = girsanov_density(&b, &kernel, grid.dt, xi, xi)?;
    let level = level_path_lk(&b, grid, d.k, d)?;
    let (y, c) = track(&level, grid, d.params.eta, &Decay::Constant(d.params.beta));
    Ok(GridPath {
        grid: *grid,
        b,
        eps,
        level,
        y,
        c,
    })
}

pub const CSV_COLUMNS: &str = "path,t,B,eps,L,Y,C";

/// Long-format CSV, one row per node, `path` column first.
pub fn write_paths_csv<F: Scalar, W: Write>(out: &mut W, paths: &[GridPath<F>]) -> std::io::Result<()> {
    writeln!(out, "{CSV_COLUMNS}")?;
    for (i, p) in paths.iter().enumerate() {
        for k in 0..p.grid.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i,
                p.grid.t(k),
                p.b[k],
                p.eps[k],
                p.level[k],
                p.y[k],
                p.c[k]
            )?;
        }
    }
    Ok(())
}
