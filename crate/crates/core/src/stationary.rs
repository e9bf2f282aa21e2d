//! Closed-form solution of the stationary (infinite horizon, constant
//! coefficient) problem: Lagrange constant, expected utility and cost of the
//! optimal plan, financing portfolio, present value, comparative statics and
//! the overlapping-priors regime.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive, validate, AbstentionCase, DerivedConstants, ModelParams, Regime};
use crate::numeric::adaptive_simpson;
use crate::scalar::Scalar;

/// `K` such that the expected cost of the tracking plan under the worst-case
/// cost prior equals `w`.
pub fn lagrange_k<F: Scalar>(w: F, eta: F, d: &DerivedConstants<F>) -> F {
    let p = &d.params;
    let one = F::one();
    let x = d.x_plus_a;
    let threshold = eta / (p.beta * (x - one));
    if w >= threshold {
        ((x - one) / x * (p.beta * w + eta)).powf(p.alpha - one)
    } else {
        lower_branch_k(w, eta, x, p.alpha, p.beta)
    }
}

// eta^{x-1} underflows for large x, so the lower branch is evaluated in logs.
fn lower_branch_k<F: Scalar>(w: F, eta: F, x: F, alpha: F, beta: F) -> F {
    let one = F::one();
    ((alpha - one) / x * ((beta * (x - one) * w).ln() + (x - one) * eta.ln())).exp()
}

/// Both branches of `K(w)`, for the continuity check at the threshold.
pub fn lagrange_k_branches<F: Scalar>(w: F, eta: F, d: &DerivedConstants<F>) -> (F, F) {
    let p = &d.params;
    let one = F::one();
    let x = d.x_plus_a;
    (
        ((x - one) / x * (p.beta * w + eta)).powf(p.alpha - one),
        lower_branch_k(w, eta, x, p.alpha, p.beta),
    )
}

fn level0<F: Scalar>(k: F, alpha: F) -> F {
    k.powf(F::one() / (alpha - F::one()))
}

/// Expected utility `phi^b(eta)` of the plan tracking `L^K`, under the
/// worst-case utility prior.
pub fn expected_utility_closed<F: Scalar>(eta: F, k: F, d: &DerivedConstants<F>) -> F {
    let (upper, lower) = expected_utility_branches(eta, k, d);
    if eta > level0(k, d.params.alpha) {
        upper
    } else {
        lower
    }
}

/// `(eta > K^{1/(alpha-1)} branch, eta <= K^{1/(alpha-1)} branch)`.
pub fn expected_utility_branches<F: Scalar>(eta: F, k: F, d: &DerivedConstants<F>) -> (F, F) {
    let p = &d.params;
    let one = F::one();
    let x = d.x_plus_alpha_b;
    let l0 = level0(k, p.alpha);
    let scale = one / (p.alpha * (p.delta + p.alpha * p.beta));
    // K^{alpha x/(alpha-1)} eta^{alpha(1-x)} = eta^alpha (l0/eta)^{alpha x}
    let upper = scale * (eta.powf(p.alpha) + eta.powf(p.alpha) * (l0 / eta).powf(p.alpha * x) / (x - one));
    let lower = scale * x / (x - one) * l0.powf(p.alpha);
    (upper, lower)
}

/// Expected discounted cost `psi^a(eta)` of the plan tracking `L^K` under the
/// worst-case cost prior.
pub fn expected_cost_closed<F: Scalar>(eta: F, k: F, d: &DerivedConstants<F>) -> F {
    let (upper, lower) = expected_cost_branches(eta, k, d);
    if eta > level0(k, d.params.alpha) {
        upper
    } else {
        lower
    }
}

pub fn expected_cost_branches<F: Scalar>(eta: F, k: F, d: &DerivedConstants<F>) -> (F, F) {
    let p = &d.params;
    let one = F::one();
    let x = d.x_plus_a;
    let l0 = level0(k, p.alpha);
    let upper = eta * (l0 / eta).powf(x) / ((x - one) * p.beta);
    let lower = (x / (x - one) * l0 - eta) / p.beta;
    (upper, lower)
}

/// `E[int e^{-rt} eps^xi Y^K dt]` for a constant cost kernel `xi`.
pub fn tilde_psi_closed<F: Scalar>(eta: F, k: F, xi: F, d: &DerivedConstants<F>) -> Result<F> {
    let (upper, lower) = tilde_psi_branches(eta, k, xi, d)?;
    Ok(if eta > level0(k, d.params.alpha) {
        upper
    } else {
        lower
    })
}

pub fn tilde_psi_branches<F: Scalar>(eta: F, k: F, xi: F, d: &DerivedConstants<F>) -> Result<(F, F)> {
    let p = &d.params;
    let one = F::one();
    let x = d.x_plus(xi)?;
    if !(x > one) {
        return Err(Error::DomainError(format!("x+({xi}) = {x} is not above 1")));
    }
    let l0 = level0(k, p.alpha);
    let scale = one / (p.beta + p.r);
    Ok((
        scale * (eta * (l0 / eta).powf(x) / (x - one) + eta),
        scale * x / (x - one) * l0,
    ))
}

/// Expected cost under a constant kernel `xi`, through `psi = (1 + r/beta) tilde_psi - eta/beta`.
pub fn expected_cost_for_kernel<F: Scalar>(eta: F, k: F, xi: F, d: &DerivedConstants<F>) -> Result<F> {
    let p = &d.params;
    Ok((F::one() + p.r / p.beta) * tilde_psi_closed(eta, k, xi, d)? - eta / p.beta)
}

/// Constant fraction of wealth held in the risky asset.
pub fn portfolio_pi<F: Scalar>(d: &DerivedConstants<F>) -> F {
    d.theta * d.x_plus_a / d.params.sigma
}

/// Present value of future consumption at time `t` given `B_t` and `Y^K_t`.
pub fn present_value<F: Scalar>(t: F, b_t: F, y_t: F, d: &DerivedConstants<F>) -> F {
    let e = d.theta * b_t - d.lambda * t;
    e.exp() * expected_cost_closed(y_t * (-e).exp(), d.k, d)
}

/// Closed-form solution bundle, as reported by the `solve` command.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClosedFormSolution<F> {
    pub k: F,
    pub m: Option<F>,
    pub phi: F,
    pub psi: F,
    pub pi: F,
    pub regime: Regime,
}

pub fn solve<F: Scalar>(d: &DerivedConstants<F>) -> ClosedFormSolution<F> {
    let eta = d.params.eta;
    ClosedFormSolution {
        k: d.k,
        m: None,
        phi: expected_utility_closed(eta, d.k, d),
        psi: expected_cost_closed(eta, d.k, d),
        pi: d.pi,
        regime: d.regime,
    }
}

// ---------------------------------------------------------------------------
// Comparative statics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum StaticsQuantity {
    Sigma,
    RiskAversion,
    Spread,
}

impl StaticsQuantity {
    pub fn column(&self) -> &'static str {
        match self {
            StaticsQuantity::Sigma => "sigma",
            StaticsQuantity::RiskAversion => "one_minus_alpha",
            StaticsQuantity::Spread => "b_minus_a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    /// Decreasing up to the grid point `argmin`, increasing afterwards.
    DecreasingThenIncreasing { argmin: f64 },
    Other,
}

/// Which of the three spread regimes the fixed parameters fall into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SpreadCase {
    /// `delta_hat >= 0`: increasing in `b - a`.
    Increasing,
    /// `delta_hat < 0` and `delta - 2 alpha delta + alpha^2 r + beta alpha (1-alpha) <= 0`.
    Decreasing,
    /// Otherwise: decreasing below `theta^2 = 2 delta_hat / (alpha - 1)`, increasing above.
    DecreasingThenIncreasing { theta_turn: f64 },
}

pub fn spread_case<F: Scalar>(p: &ModelParams<F>) -> SpreadCase {
    let dh = p.delta_hat().as_f64();
    let (delta, alpha, r, beta) = (p.delta.as_f64(), p.alpha.as_f64(), p.r.as_f64(), p.beta.as_f64());
    if dh >= 0.0 {
        SpreadCase::Increasing
    } else if delta - 2.0 * alpha * delta + alpha * alpha * r + beta * alpha * (1.0 - alpha) <= 0.0 {
        SpreadCase::Decreasing
    } else {
        SpreadCase::DecreasingThenIncreasing {
            theta_turn: (2.0 * dh / (alpha - 1.0)).sqrt(),
        }
    }
}

/// Largest admissible θ, from the well-posedness bound
/// `theta^2 < 2 (delta - alpha r) / (alpha (1 - alpha))`.
pub fn theta_max<F: Scalar>(p: &ModelParams<F>) -> Option<f64> {
    let (delta, alpha, r) = (p.delta.as_f64(), p.alpha.as_f64(), p.r.as_f64());
    let v = 2.0 * (delta - alpha * r) / (alpha * (1.0 - alpha));
    (v > 0.0).then(|| v.sqrt())
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticsReport {
    pub quantity: StaticsQuantity,
    /// `(parameter value, pi)` pairs in increasing parameter order.
    pub points: Vec<(f64, f64)>,
    pub observed: Monotonicity,
    pub expected: Monotonicity,
    pub spread_case: Option<SpreadCase>,
    /// θ grid when scanning the spread (the statics are monotone in θ exactly as in `b - a`).
    pub theta: Option<Vec<f64>>,
}

impl StaticsReport {
    /// True when the observed finite-difference pattern matches the predicted one.
    /// For the turning-point case the discrete minimum must lie within one grid
    /// cell of the predicted θ.
    pub fn pass(&self) -> bool {
        match (self.observed, self.expected) {
            (Monotonicity::Increasing, Monotonicity::Increasing)
            | (Monotonicity::Decreasing, Monotonicity::Decreasing) => true,
            (
                Monotonicity::DecreasingThenIncreasing { argmin },
                Monotonicity::DecreasingThenIncreasing { argmin: predicted },
            ) => {
                let cell = self.grid_cell();
                (argmin - predicted).abs() <= cell
            }
            _ => false,
        }
    }

    fn grid_cell(&self) -> f64 {
        let xs: Vec<f64> = match &self.theta {
            Some(t) => t.clone(),
            None => self.points.iter().map(|p| p.0).collect(),
        };
        xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

/// Sign pattern of forward differences over `(x, y)` points.
pub fn classify(xs: &[f64], ys: &[f64]) -> Monotonicity {
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.is_empty() {
        return Monotonicity::Other;
    }
    if diffs.iter().all(|&d| d > 0.0) {
        return Monotonicity::Increasing;
    }
    if diffs.iter().all(|&d| d < 0.0) {
        return Monotonicity::Decreasing;
    }
    // one sign change from - to +
    let first_pos = diffs.iter().position(|&d| d > 0.0);
    if let Some(j) = first_pos {
        if j > 0 && diffs[..j].iter().all(|&d| d < 0.0) && diffs[j..].iter().all(|&d| d > 0.0) {
            return Monotonicity::DecreasingThenIncreasing { argmin: xs[j] };
        }
    }
    Monotonicity::Other
}

fn pi_at<F: Scalar>(p: &ModelParams<F>) -> Option<f64> {
    let v = validate(p).ok()?;
    let d = derive(&v).ok()?;
    Some(d.pi.as_f64())
}

/// Scans π over `n` points of one parameter, dropping points that fail validation.
pub fn comparative_statics<F: Scalar>(
    p: &ModelParams<F>,
    quantity: StaticsQuantity,
    n: usize,
) -> Result<StaticsReport> {
    let v = validate(p)?;
    if v.regime() != Regime::Standard {
        return Err(Error::WrongRegime {
            expected: "Standard",
        });
    }
    if n < 3 {
        return Err(Error::InvalidConfig("statics need at least 3 grid points".into()));
    }
    let mut points = Vec::with_capacity(n);
    let mut theta_grid = None;
    let mut case = None;
    let expected;
    match quantity {
        StaticsQuantity::Sigma => {
            let s0 = p.sigma.as_f64();
            for i in 0..n {
                let s = s0 * 2f64.powf(2.0 * i as f64 / (n - 1) as f64 - 1.0);
                let q = ModelParams {
                    sigma: F::lit(s),
                    ..*p
                };
                if let Some(pi) = pi_at(&q) {
                    points.push((s, pi));
                }
            }
            expected = Monotonicity::Decreasing;
        }
        StaticsQuantity::RiskAversion => {
            // admissible alpha: delta > alpha r + alpha s^2 / (2 (1 - alpha)), decreasing in alpha
            let s = (p.b - p.a).as_f64();
            let (delta, r) = (p.delta.as_f64(), p.r.as_f64());
            let slack = |al: f64| delta - al * r - al * s * s / (2.0 * (1.0 - al));
            let (mut lo, mut hi) = (0.02, 0.98);
            if slack(lo) <= 0.0 {
                return Err(Error::RegionEmpty("risk aversion scan".into()));
            }
            if slack(hi) <= 0.0 {
                let (mut l, mut h) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (l + h);
                    if slack(m) > 0.0 {
                        l = m
                    } else {
                        h = m
                    }
                }
                hi = l - 1e-3 * (l - lo);
            }
            lo = lo.min(hi);
            let mut pts = Vec::new();
            for i in 0..n {
                let al = hi - (hi - lo) * i as f64 / (n - 1) as f64;
                let q = ModelParams {
                    alpha: F::lit(al),
                    ..*p
                };
                if let Some(pi) = pi_at(&q) {
                    pts.push((1.0 - al, pi));
                }
            }
            points = pts;
            expected = Monotonicity::Decreasing;
        }
        StaticsQuantity::Spread => {
            let tmax = theta_max(p).ok_or_else(|| Error::RegionEmpty("spread scan".into()))?;
            let alpha = p.alpha.as_f64();
            let sc = spread_case(p);
            case = Some(sc);
            let mut thetas = Vec::new();
            for i in 0..n {
                let th = tmax * (i + 1) as f64 / (n + 1) as f64;
                let spread = (1.0 - alpha) * th;
                let b = p.a + F::lit(spread);
                let q = ModelParams {
                    b,
                    b_prime: p.b_prime.max(b),
                    ..*p
                };
                if let Some(pi) = pi_at(&q) {
                    points.push((spread, pi));
                    thetas.push(th);
                }
            }
            expected = match sc {
                SpreadCase::Increasing => Monotonicity::Increasing,
                SpreadCase::Decreasing => Monotonicity::Decreasing,
                SpreadCase::DecreasingThenIncreasing { theta_turn } => {
                    if theta_turn >= tmax {
                        return Err(Error::RegionEmpty("spread case (iii) turning point".into()));
                    }
                    Monotonicity::DecreasingThenIncreasing { argmin: theta_turn }
                }
            };
            theta_grid = Some(thetas);
        }
    }
    if points.len() < 3 {
        return Err(Error::RegionEmpty(format!("{quantity:?} scan")));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let xs: Vec<f64> = match &theta_grid {
        Some(t) => t.clone(),
        None => points.iter().map(|p| p.0).collect(),
    };
    let observed = classify(&xs, &ys);
    Ok(StaticsReport {
        quantity,
        points,
        observed,
        expected,
        spread_case: case,
        theta: theta_grid,
    })
}

// ---------------------------------------------------------------------------
// Overlapping priors: deterministic plan

/// Deterministic optimal plan when the two prior sets share an element.
///
/// The running maximum `M_t = max(eta, sup_{s<=t} L_s e^{beta s})` equals
/// `max(eta, l0 e^{delta_hat t})` in case 1 and the constant `max(eta, l0)`
/// in case 2.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AbstentionSolution<F> {
    pub case: AbstentionCase,
    pub k: F,
    /// Lagrange multiplier of the common-prior problem.
    pub m: F,
    /// `K^{1/(alpha-1)}`.
    pub level0: F,
    pub delta_hat: F,
    /// First time consumption occurs (0 when there is an initial gulp).
    pub start_time: F,
    pub eta: F,
    pub w: F,
    pub params: ModelParams<F>,
}

pub fn abstention_solve<F: Scalar>(p: &ModelParams<F>) -> Result<AbstentionSolution<F>> {
    let v = validate(p)?;
    let case = match v.regime() {
        Regime::Abstention(c) => c,
        Regime::Standard => {
            return Err(Error::WrongRegime {
                expected: "Abstention",
            })
        }
    };
    let one = F::one();
    let (r, beta, delta, alpha, eta, w) = (p.r, p.beta, p.delta, p.alpha, p.eta, p.w);
    let dh = p.delta_hat();
    let (k, level0) = match case {
        AbstentionCase::Case1 => {
            let gap = delta - alpha * r;
            let dd = (one - alpha) * beta + r - delta;
            let threshold = (beta * eta * (one - alpha) + eta * (r - delta)) / (beta * gap);
            let k = if w >= threshold {
                ((eta + beta * w) * gap / ((one - alpha) * (beta + r))).powf(alpha - one)
            } else {
                (beta * w * gap / dd).powf(-dd / (r + beta)) * eta.powf(-gap / (r + beta))
            };
            (k, k.powf(one / (alpha - one)))
        }
        AbstentionCase::Case2 => {
            let l0 = eta + beta * w;
            (l0.powf(alpha - one), l0)
        }
    };
    let m = match case {
        AbstentionCase::Case1 => k * beta / (r + beta),
        AbstentionCase::Case2 => k * beta / (delta + alpha * beta),
    };
    let start_time = if level0 >= eta || case == AbstentionCase::Case2 {
        F::zero()
    } else {
        (eta / level0).ln() / dh
    };
    Ok(AbstentionSolution {
        case,
        k,
        m,
        level0,
        delta_hat: dh,
        start_time,
        eta,
        w,
        params: *p,
    })
}

impl<F: Scalar> AbstentionSolution<F> {
    /// Minimal level `L_t = (K e^{(delta - r) t})^{1/(alpha - 1)}`.
    pub fn level(&self, t: F) -> F {
        let p = &self.params;
        self.level0 * ((p.delta - p.r) * t / (p.alpha - F::one())).exp()
    }

    /// `max(eta, sup_{s<=t} L_s e^{beta s})`.
    pub fn running_max(&self, t: F) -> F {
        match self.case {
            AbstentionCase::Case1 => self.eta.max(self.level0 * (self.delta_hat * t).exp()),
            AbstentionCase::Case2 => self.eta.max(self.level0),
        }
    }

    pub fn satisfaction(&self, t: F) -> F {
        (-self.params.beta * t).exp() * self.running_max(t)
    }

    pub fn initial_gulp(&self) -> F {
        match self.case {
            AbstentionCase::Case2 => self.w,
            AbstentionCase::Case1 => (self.level0 - self.eta).max(F::zero()) / self.params.beta,
        }
    }

    /// Cumulative consumption `C_t`, including the gulp at zero.
    pub fn consumption(&self, t: F) -> F {
        let gulp = self.initial_gulp();
        match self.case {
            AbstentionCase::Case2 => gulp,
            AbstentionCase::Case1 => {
                let p = &self.params;
                let s0 = self.start_time;
                if t <= s0 {
                    return gulp;
                }
                let rate = self.delta_hat - p.beta;
                let integral = if rate == F::zero() {
                    t - s0
                } else {
                    ((rate * t).exp() - (rate * s0).exp()) / rate
                };
                gulp + self.level0 * self.delta_hat * integral / p.beta
            }
        }
    }

    /// Discounted cost from the displayed closed form.
    pub fn discounted_cost_closed(&self) -> F {
        let p = &self.params;
        let one = F::one();
        match self.case {
            AbstentionCase::Case2 => self.initial_gulp(),
            AbstentionCase::Case1 => {
                let gap = p.delta - p.alpha * p.r;
                let dd = (one - p.alpha) * p.beta + p.r - p.delta;
                if self.eta <= self.level0 {
                    self.level0 * (one - p.alpha) * (p.beta + p.r) / (p.beta * gap) - self.eta / p.beta
                } else {
                    dd / (p.beta * gap)
                        * self.eta.powf(-gap / dd)
                        * self.k.powf(-(p.r + p.beta) / dd)
                }
            }
        }
    }
}

impl AbstentionSolution<f64> {
    /// `int_0^inf e^{-rt} dC_t` by adaptive quadrature of `e^{-(r+beta)t} dM_t / beta`.
    pub fn discounted_cost_quadrature(&self) -> f64 {
        let p = &self.params;
        let gulp = self.initial_gulp();
        match self.case {
            AbstentionCase::Case2 => gulp,
            AbstentionCase::Case1 => {
                let decay = p.r + p.beta - self.delta_hat;
                let s0 = self.start_time;
                let (l0, dh) = (self.level0, self.delta_hat);
                let f = |t: f64| (-(p.r + p.beta) * t).exp() * l0 * dh * (dh * t).exp() / p.beta;
                let span = 60.0 / decay;
                gulp + adaptive_simpson(&f, s0, s0 + span, 1e-14 * gulp.max(1.0), 60)
            }
        }
    }

    /// `int_0^inf e^{-delta t} Y_t^alpha / alpha dt` by adaptive quadrature.
    pub fn utility_quadrature(&self) -> f64 {
        let p = &self.params;
        // integrand decays at least like e^{-(delta - alpha r) t / (1 - alpha)}
        let decay = ((p.delta - p.alpha * p.r) / (1.0 - p.alpha)).min(p.delta + p.alpha * p.beta);
        self.utility_quadrature_to(self.start_time + 60.0 / decay)
    }

    /// Same integral truncated at `horizon`.
    pub fn utility_quadrature_to(&self, horizon: f64) -> f64 {
        let p = &self.params;
        let f = |t: f64| (-p.delta * t).exp() * self.satisfaction(t).powf(p.alpha) / p.alpha;
        let s0 = self.start_time.min(horizon);
        let mut total = 0.0;
        if s0 > 0.0 {
            total += adaptive_simpson(&f, 0.0, s0, 1e-13, 60);
        }
        if horizon > s0 {
            total += adaptive_simpson(&f, s0, horizon, 1e-13, 60);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, validate};
    use proptest::prelude::*;

    fn p0() -> ModelParams<f64> {
        ModelParams::reference()
    }

    fn d0() -> DerivedConstants<f64> {
        derive(&validate(&p0()).unwrap()).unwrap()
    }

    #[test]
    fn lagrange_k_reference() {
        let d = d0();
        let x = d.x_plus_a;
        assert!(5.0 >= 1.0 / (0.1 * (x - 1.0)));
        let expected = ((x - 1.0) / x * 1.5f64).powf(-0.5);
        assert!((d.k - expected).abs() < 1e-14);
        assert!((d.k - 0.834).abs() < 1e-3, "{}", d.k);
        let psi = expected_cost_closed(1.0, d.k, &d);
        assert!((psi / 5.0 - 1.0).abs() < 1e-10);
        assert!((d.level0() - 1.437).abs() < 1e-3);
    }

    #[test]
    fn lagrange_k_threshold_continuity() {
        let d = d0();
        let w = d.params.eta / (d.params.beta * (d.x_plus_a - 1.0));
        let (k1, k2) = lagrange_k_branches(w, d.params.eta, &d);
        assert!((k1 - k2).abs() <= 1e-10 * k1.abs());
    }

    #[test]
    fn lagrange_k_vanishing_eta() {
        let d = d0();
        let x = d.x_plus_a;
        let lim = ((x - 1.0) / x * 0.1 * 5.0f64).powf(-0.5);
        let k = lagrange_k(5.0, 1e-12, &d);
        assert!((k - lim).abs() < 1e-9);
    }

    #[test]
    fn lower_branch_transcription() {
        let d = d0();
        let k = d.k;
        let x = d.x_plus_alpha_b;
        let phi = expected_utility_closed(1.0, k, &d);
        let expected = x / ((x - 1.0) * 0.5 * (0.30 + 0.5 * 0.1)) * k.powf(0.5 / -0.5);
        assert!((phi - expected).abs() < 1e-12);
        assert!(phi > 0.0);
        let xa = d.x_plus_a;
        let psi = expected_cost_closed(1.0, k, &d);
        let expected = (xa / (xa - 1.0) * k.powf(1.0 / -0.5) - 1.0) / 0.1;
        assert!((psi - expected).abs() < 1e-12);
    }

    #[test]
    fn kink_continuity() {
        let d = d0();
        let k = d.k;
        let l0 = d.level0();
        let (u, l) = expected_utility_branches(l0, k, &d);
        assert!((u - l).abs() <= 1e-10 * l);
        let (u, l) = expected_cost_branches(l0, k, &d);
        assert!((u - l).abs() <= 1e-10 * l);
        for xi in [d.params.a, d.params.a_prime] {
            let (u, l) = tilde_psi_branches(l0, k, xi, &d).unwrap();
            assert!((u - l).abs() <= 1e-10 * l);
        }
    }

    #[test]
    fn tilde_psi_identity() {
        let d = d0();
        for eta in [0.2, 1.0, 1.437, 3.0] {
            let lhs = expected_cost_closed(eta, d.k, &d);
            let rhs = expected_cost_for_kernel(eta, d.k, d.params.a, &d).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{eta}: {lhs} {rhs}");
        }
        let lo = expected_cost_for_kernel(1.0, d.k, d.params.a_prime, &d).unwrap();
        assert!(lo < expected_cost_closed(1.0, d.k, &d));
    }

    #[test]
    fn utility_nondecreasing_in_eta() {
        let d = d0();
        let mut prev = 0.0;
        for i in 0..60 {
            let eta = 0.05 * i as f64;
            let phi = expected_utility_closed(eta, d.k, &d);
            assert!(phi >= prev - 1e-12);
            prev = phi;
        }
    }

    #[test]
    fn portfolio_reference() {
        let d = d0();
        assert!((d.pi - 0.2 * d.x_plus_a / 0.2).abs() < 1e-12);
        assert!((d.pi - 23.75).abs() < 0.01);
        let p2 = ModelParams { sigma: 0.4, ..p0() };
        let d2 = derive(&validate(&p2).unwrap()).unwrap();
        assert!((d2.pi - d.pi / 2.0).abs() < 1e-12);
        for w in [0.1, 1.0, 3.0, 10.0, 100.0] {
            for eta in [0.0, 0.5, 2.0] {
                let p = ModelParams { w, eta, ..p0() };
                let dd = derive(&validate(&p).unwrap()).unwrap();
                assert_eq!(dd.pi, d.pi);
            }
        }
    }

    #[test]
    fn present_value_at_zero() {
        let d = d0();
        let v = present_value(0.0, 0.0, 1.0, &d);
        assert!((v - expected_cost_closed(1.0, d.k, &d)).abs() < 1e-14);
        assert!((v - 5.0).abs() < 1e-9);
        assert!(present_value(3.0, -1.0, 0.3, &d) > 0.0);
    }

    #[test]
    fn f32_closed_forms() {
        let p: ModelParams<f32> = ModelParams::reference();
        let d = derive(&validate(&p).unwrap()).unwrap();
        assert!((expected_cost_closed(1.0, d.k, &d) - 5.0).abs() < 1e-3);
        assert!((d.pi - 23.75).abs() < 0.05);
    }

    #[test]
    fn statics_sigma_and_risk_aversion() {
        let r = comparative_statics(&p0(), StaticsQuantity::Sigma, 20).unwrap();
        assert_eq!(r.points.len(), 20);
        assert!(r.pass(), "{r:?}");
        let r = comparative_statics(&p0(), StaticsQuantity::RiskAversion, 20).unwrap();
        assert_eq!(r.points.len(), 20);
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn statics_spread_cases() {
        // reference parameters sit in the turning-point case
        let sc = spread_case(&p0());
        let turn = match sc {
            SpreadCase::DecreasingThenIncreasing { theta_turn } => theta_turn,
            other => panic!("{other:?}"),
        };
        assert!((turn * turn - 1.84).abs() < 1e-12);
        let r = comparative_statics(&p0(), StaticsQuantity::Spread, 20).unwrap();
        assert!(r.pass(), "{r:?}");

        let inc = ModelParams { delta: 0.05, ..p0() };
        assert_eq!(spread_case(&inc), SpreadCase::Increasing);
        let r = comparative_statics(&inc, StaticsQuantity::Spread, 20).unwrap();
        assert!(r.pass(), "{r:?}");

        // alpha close to one with large delta: delta(1 - 2 alpha) dominates
        let dec = ModelParams {
            alpha: 0.9,
            delta: 1.0,
            r: 0.02,
            beta: 0.1,
            a: 0.0,
            b: 0.01,
            ..p0()
        };
        assert_eq!(spread_case(&dec), SpreadCase::Decreasing);
        let r = comparative_statics(&dec, StaticsQuantity::Spread, 20).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn classify_patterns() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(classify(&xs, &[1.0, 2.0, 3.0, 4.0]), Monotonicity::Increasing);
        assert_eq!(classify(&xs, &[4.0, 3.0, 2.0, 1.0]), Monotonicity::Decreasing);
        assert_eq!(
            classify(&xs, &[4.0, 3.0, 3.5, 4.0]),
            Monotonicity::DecreasingThenIncreasing { argmin: 1.0 }
        );
        assert_eq!(classify(&xs, &[1.0, 3.0, 2.0, 4.0]), Monotonicity::Other);
    }

    fn overlap(delta: f64, w: f64, eta: f64) -> ModelParams<f64> {
        ModelParams {
            a: 0.1,
            b: 0.1,
            delta,
            w,
            eta,
            ..p0()
        }
    }

    #[test]
    fn abstention_case2_consumes_everything() {
        let s = abstention_solve(&overlap(0.30, 5.0, 1.0)).unwrap();
        assert_eq!(s.case, AbstentionCase::Case2);
        assert_eq!(s.consumption(0.0), 5.0);
        assert_eq!(s.consumption(10.0), 5.0);
        assert_eq!(s.discounted_cost_quadrature(), 5.0);
        assert!((s.k - 1.5f64.powf(-0.5)).abs() < 1e-15);
        assert!((s.m - s.k * 0.1 / (0.30 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn abstention_case1_round_trip() {
        // delta < r + (1 - alpha) beta = 0.07
        for (w, eta) in [(5.0, 1.0), (0.01, 1.0), (0.2, 2.0), (3.0, 0.0)] {
            let s = abstention_solve(&overlap(0.05, w, eta)).unwrap();
            assert_eq!(s.case, AbstentionCase::Case1);
            let q = s.discounted_cost_quadrature();
            assert!((q - w).abs() <= 1e-8 * w, "w={w} eta={eta}: {q}");
            assert!((s.discounted_cost_closed() - w).abs() <= 1e-10 * w);
            assert!((s.m - s.k * 0.1 / 0.12).abs() < 1e-15);
        }
    }

    #[test]
    fn abstention_case1_threshold_continuity() {
        let (r, beta, delta, alpha, eta) = (0.02, 0.1, 0.05, 0.5, 1.0);
        let w = (beta * eta * (1.0 - alpha) + eta * (r - delta)) / (beta * (delta - alpha * r));
        let s_hi = abstention_solve(&overlap(delta, w, eta)).unwrap();
        let s_lo = abstention_solve(&overlap(delta, w * (1.0 - 1e-12), eta)).unwrap();
        assert!((s_hi.k - s_lo.k).abs() < 1e-9 * s_hi.k);
        assert!((s_hi.level0 - eta).abs() < 1e-12);
    }

    #[test]
    fn abstention_rejects_standard_and_ill_posed() {
        assert!(matches!(abstention_solve(&p0()), Err(Error::WrongRegime { .. })));
        assert!(matches!(
            abstention_solve(&overlap(0.01, 5.0, 1.0)),
            Err(Error::IllPosed { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn budget_round_trip(p in crate::model::tests::valid_standard()) {
            let d = derive(&validate(&p).unwrap()).unwrap();
            let psi = expected_cost_closed(p.eta, d.k, &d);
            prop_assert!((psi / p.w - 1.0).abs() <= 1e-10, "psi {} w {}", psi, p.w);
        }

        #[test]
        fn kinks_agree(p in crate::model::tests::valid_standard()) {
            let d = derive(&validate(&p).unwrap()).unwrap();
            let l0 = d.level0();
            let (u, l) = expected_utility_branches(l0, d.k, &d);
            prop_assert!((u - l).abs() <= 1e-10 * l.abs());
            let (u, l) = expected_cost_branches(l0, d.k, &d);
            prop_assert!((u - l).abs() <= 1e-10 * l.abs());
            let (u, l) = tilde_psi_branches(l0, d.k, p.a, &d).unwrap();
            prop_assert!((u - l).abs() <= 1e-10 * l.abs());
            let thr = p.eta / (p.beta * (d.x_plus_a - 1.0));
            if thr > 0.0 {
                let (k1, k2) = lagrange_k_branches(thr, p.eta, &d);
                prop_assert!((k1 - k2).abs() <= 1e-10 * k1.abs());
            }
            let lhs = expected_cost_closed(p.eta, d.k, &d);
            let rhs = expected_cost_for_kernel(p.eta, d.k, p.a, &d).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }
}
