//! Model parameters, regime detection and the constants every other module
//! derives from them.
//!
//! Two regimes exist. When the utility kernel interval `[b, b']` lies strictly
//! above the cost kernel interval `[a', a]` (`a < b`) the agent faces
//! different risk premia for long and short positions and the optimal plan is
//! random. When the intervals overlap a common prior exists and the optimal
//! plan is deterministic (abstention from the risky asset).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stationary;

/// Admissible felicity exponents are kept away from 0 and 1 by this margin.
pub const ALPHA_MARGIN: f64 = 1e-6;

/// All scalar inputs of the market and preference model.
///
/// Deserializes from a flat JSON object; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ModelParams<F> {
    pub r: F,
    pub sigma: F,
    pub a_prime: F,
    pub a: F,
    pub b: F,
    pub b_prime: F,
    pub delta: F,
    pub alpha: F,
    pub beta: F,
    pub eta: F,
    pub w: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Reference parameter set used throughout the tests and as the CLI default.
    pub fn reference() -> Self {
        Self {
            r: F::lit(0.02),
            sigma: F::lit(0.2),
            a_prime: F::lit(-0.10),
            a: F::lit(0.05),
            b: F::lit(0.15),
            b_prime: F::lit(0.30),
            delta: F::lit(0.30),
            alpha: F::lit(0.5),
            beta: F::lit(0.1),
            eta: F::lit(1.0),
            w: F::lit(5.0),
            mu: None,
        }
    }

    /// Risk premium `(mu - r) / sigma`, when a stock drift was supplied.
    pub fn risk_premium(&self) -> Option<F> {
        self.mu.map(|mu| (mu - self.r) / self.sigma)
    }

    /// Lipschitz bound shared by both drivers: the largest absolute kernel value.
    pub fn kappa(&self) -> F {
        self.a_prime
            .abs()
            .max(self.a.abs())
            .max(self.b.abs())
            .max(self.b_prime.abs())
    }

    /// `beta + (delta - r) / (alpha - 1)`.
    pub fn delta_hat(&self) -> F {
        self.beta + (self.delta - self.r) / (self.alpha - F::one())
    }

    /// `e^{-delta t} y^alpha / alpha`.
    pub fn felicity(&self, t: F, y: F) -> Result<F> {
        if y < F::zero() || y.is_nan() {
            return Err(Error::DomainError(format!("felicity at y = {y}")));
        }
        Ok((-self.delta * t).exp() * y.powf(self.alpha) / self.alpha)
    }

    /// `e^{-delta t} y^(alpha - 1)`; `+inf` at `y = 0`.
    pub fn felicity_deriv(&self, t: F, y: F) -> Result<F> {
        if y < F::zero() || y.is_nan() {
            return Err(Error::DomainError(format!("marginal felicity at y = {y}")));
        }
        if y == F::zero() {
            return Ok(F::infinity());
        }
        Ok((-self.delta * t).exp() * y.powf(self.alpha - F::one()))
    }

    pub fn from_json_str(s: &str) -> Result<Self>
    where
        F: for<'de> Deserialize<'de>,
    {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<ValidatedParams<F>> {
        validate(self)
    }
}

/// Deterministic-plan sub-cases of the overlap regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbstentionCase {
    /// `delta < r + (1 - alpha) beta`: consumption is spread over time.
    Case1,
    /// `delta >= r + (1 - alpha) beta`: all wealth is consumed at time zero.
    Case2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Standard,
    Abstention(AbstentionCase),
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Standard => "Standard",
            Regime::Abstention(AbstentionCase::Case1) => "Abstention-Case1",
            Regime::Abstention(AbstentionCase::Case2) => "Abstention-Case2",
        }
    }
}

/// Parameters that passed [`validate`], tagged with their regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedParams<F> {
    params: ModelParams<F>,
    regime: Regime,
}

impl<F: Scalar> ValidatedParams<F> {
    pub fn params(&self) -> &ModelParams<F> {
        &self.params
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }
}

fn require_positive<F: Scalar>(field: &'static str, v: F) -> Result<()> {
    if v > F::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive {
            field,
            value: v.as_f64(),
        })
    }
}

fn require_nonnegative<F: Scalar>(field: &'static str, v: F) -> Result<()> {
    if v >= F::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            field,
            value: v.as_f64(),
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

/// Checks ranges, kernel orderings and well-posedness, and detects the regime.
pub fn validate<F: Scalar>(p: &ModelParams<F>) -> Result<ValidatedParams<F>> {
    require_positive("sigma", p.sigma)?;
    require_positive("beta", p.beta)?;
    require_positive("delta", p.delta)?;
    require_positive("w", p.w)?;
    require_nonnegative("r", p.r)?;
    require_nonnegative("eta", p.eta)?;
    let (lo, hi) = (ALPHA_MARGIN, 1.0 - ALPHA_MARGIN);
    if !(p.alpha >= F::lit(lo) && p.alpha <= F::lit(hi)) {
        return Err(Error::OutOfRange {
            field: "alpha",
            value: p.alpha.as_f64(),
            lo,
            hi,
        });
    }
    for (name, v) in [
        ("aPrime", p.a_prime),
        ("a", p.a),
        ("b", p.b),
        ("bPrime", p.b_prime),
    ] {
        if !v.is_finite() {
            return Err(Error::DomainError(format!("{name} is not finite")));
        }
    }
    if let Some(mu) = p.mu {
        if !mu.is_finite() {
            return Err(Error::DomainError("mu is not finite".into()));
        }
    }
    if p.a_prime > p.a {
        return Err(Error::OrderingViolation(format!(
            "aPrime <= a required, got aPrime = {} > a = {}",
            p.a_prime, p.a
        )));
    }
    if p.b > p.b_prime {
        return Err(Error::OrderingViolation(format!(
            "b <= bPrime required, got b = {} > bPrime = {}",
            p.b, p.b_prime
        )));
    }

    let one = F::one();
    let regime = if p.a < p.b {
        let spread = p.a - p.b;
        let rhs = p.alpha * p.r + p.alpha * spread * spread / (F::lit(2.0) * (one - p.alpha));
        if !(p.delta > rhs) {
            return Err(Error::IllPosed {
                inequality: "delta > alpha*r + alpha*(a-b)^2/(2(1-alpha))".into(),
                lhs: p.delta.as_f64(),
                rhs: rhs.as_f64(),
            });
        }
        Regime::Standard
    } else {
        if p.a_prime > p.b_prime {
            return Err(Error::OrderingViolation(format!(
                "a >= b but the kernel intervals [{}, {}] and [{}, {}] do not intersect",
                p.a_prime, p.a, p.b, p.b_prime
            )));
        }
        let rhs = p.alpha * p.r;
        if !(p.delta > rhs) {
            return Err(Error::IllPosed {
                inequality: "delta > alpha*r".into(),
                lhs: p.delta.as_f64(),
                rhs: rhs.as_f64(),
            });
        }
        if p.delta < p.r + (one - p.alpha) * p.beta {
            Regime::Abstention(AbstentionCase::Case1)
        } else {
            Regime::Abstention(AbstentionCase::Case2)
        }
    };
    Ok(ValidatedParams {
        params: *p,
        regime,
    })
}

/// Largest real root of `A x^2 + B x + C` for `A > 0`.
///
/// Uses `q = -(B + sign(B) sqrt(disc)) / 2`, roots `q / A` and `C / q`, so the
/// root is never formed by subtracting nearly equal numbers.
pub fn quad_root_plus<F: Scalar>(a: F, b: F, c: F) -> Result<F> {
    if !(a > F::zero()) {
        return Err(Error::DomainError(format!(
            "leading coefficient must be positive, got {a}"
        )));
    }
    let disc = b * b - F::lit(4.0) * a * c;
    if disc < F::zero() || disc.is_nan() {
        return Err(Error::NoRealRoot {
            discriminant: disc.as_f64(),
        });
    }
    let sign = if b >= F::zero() { F::one() } else { -F::one() };
    let q = -(b + sign * disc.sqrt()) / F::lit(2.0);
    if q == F::zero() {
        // b = 0 and disc = 0, i.e. c = 0: double root at zero.
        return Ok(F::zero());
    }
    Ok((q / a).max(c / q))
}

/// Constants of the closed-form solution in the standard regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedConstants<F> {
    pub params: ModelParams<F>,
    /// `(b - a) / (1 - alpha)`: volatility of the log level process.
    pub theta: F,
    /// `[(a^2 - b^2) - 2(delta - r)] / (2(alpha - 1))`: its drift (with sign flipped).
    pub lambda: F,
    pub x_plus_alpha_b: F,
    pub x_plus_a: F,
    pub x_plus_a_prime: F,
    pub delta_hat: F,
    /// Lagrange constant matching the budget `w`.
    pub k: F,
    pub pi: F,
    pub regime: Regime,
}

impl<F: Scalar> DerivedConstants<F> {
    /// Coefficients `(A, B, C)` of `h^{alpha, xi}`.
    pub fn h_alpha_coeffs(&self, xi: F) -> (F, F, F) {
        let p = &self.params;
        let half = F::lit(0.5);
        (
            half * p.alpha * p.alpha * self.theta * self.theta,
            -p.alpha * (self.lambda - p.beta - self.theta * xi),
            -(p.delta + p.alpha * p.beta),
        )
    }

    /// Coefficients `(A, B, C)` of `h^{xi}`.
    pub fn h_coeffs(&self, xi: F) -> (F, F, F) {
        let p = &self.params;
        (
            F::lit(0.5) * self.theta * self.theta,
            -(self.lambda - p.beta - self.theta * xi),
            -(p.r + p.beta),
        )
    }

    pub fn x_plus_alpha(&self, xi: F) -> Result<F> {
        let (a, b, c) = self.h_alpha_coeffs(xi);
        quad_root_plus(a, b, c)
    }

    pub fn x_plus(&self, xi: F) -> Result<F> {
        let (a, b, c) = self.h_coeffs(xi);
        quad_root_plus(a, b, c)
    }

    /// `K^{1/(alpha-1)}`, the initial value of the minimal level.
    pub fn level0(&self) -> F {
        self.k.powf(F::one() / (self.params.alpha - F::one()))
    }

    /// Copy with a different Lagrange constant (all other constants unchanged).
    pub fn with_k(&self, k: F) -> Self {
        Self { k, ..*self }
    }
}

/// Computes θ, λ, the quadratic roots, `K` and the portfolio fraction.
pub fn derive<F: Scalar>(v: &ValidatedParams<F>) -> Result<DerivedConstants<F>> {
    if v.regime() != Regime::Standard {
        return Err(Error::WrongRegime {
            expected: "Standard",
        });
    }
    let p = *v.params();
    let one = F::one();
    let two = F::lit(2.0);
    let theta = (p.b - p.a) / (one - p.alpha);
    let lambda = ((p.a * p.a - p.b * p.b) - two * (p.delta - p.r)) / (two * (p.alpha - one));
    let mut d = DerivedConstants {
        params: p,
        theta,
        lambda,
        x_plus_alpha_b: F::nan(),
        x_plus_a: F::nan(),
        x_plus_a_prime: F::nan(),
        delta_hat: p.delta_hat(),
        k: F::nan(),
        pi: F::nan(),
        regime: Regime::Standard,
    };
    d.x_plus_alpha_b = d.x_plus_alpha(p.b)?;
    d.x_plus_a = d.x_plus(p.a)?;
    d.x_plus_a_prime = d.x_plus(p.a_prime)?;
    for (name, x) in [
        ("x+^alpha(b)", d.x_plus_alpha_b),
        ("x+(a)", d.x_plus_a),
        ("x+(a')", d.x_plus_a_prime),
    ] {
        if !(x > one) {
            return Err(Error::DomainError(format!("{name} = {x} is not above 1")));
        }
    }
    d.k = stationary::lagrange_k(p.w, p.eta, &d);
    d.pi = stationary::portfolio_pi(&d);
    Ok(d)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p0() -> ModelParams<f64> {
        ModelParams::reference()
    }

    #[test]
    fn reference_is_standard() {
        let v = validate(&p0()).unwrap();
        assert_eq!(v.regime(), Regime::Standard);
        // 0.30 > 0.02*0.5 + 0.5*0.01/(2*0.5) = 0.015
        let rhs = 0.5 * 0.02 + 0.5 * 0.01 / (2.0 * 0.5);
        assert!((rhs - 0.015f64).abs() < 1e-15);
    }

    #[test]
    fn boundary_delta_is_ill_posed() {
        let p = ModelParams {
            a: 0.1,
            b: 0.1,
            delta: 0.5 * 0.02,
            ..p0()
        };
        assert!(matches!(validate(&p), Err(Error::IllPosed { .. })));
    }

    #[test]
    fn standard_delta_condition_fails() {
        let p = ModelParams { delta: 0.015, ..p0() };
        assert!(matches!(validate(&p), Err(Error::IllPosed { .. })));
    }

    #[test]
    fn kernel_ordering() {
        let p = ModelParams {
            a_prime: 0.2,
            a: 0.1,
            ..p0()
        };
        assert!(matches!(validate(&p), Err(Error::OrderingViolation(_))));
        let p = ModelParams {
            b: 0.4,
            ..p0()
        };
        assert!(matches!(validate(&p), Err(Error::OrderingViolation(_))));
    }

    #[test]
    fn disjoint_but_reversed_intervals_rejected() {
        let p = ModelParams {
            a_prime: 0.5,
            a: 0.6,
            b: 0.0,
            b_prime: 0.1,
            ..p0()
        };
        assert!(matches!(validate(&p), Err(Error::OrderingViolation(_))));
    }

    #[test]
    fn non_positive_inputs() {
        for p in [
            ModelParams { sigma: 0.0, ..p0() },
            ModelParams { beta: -1.0, ..p0() },
            ModelParams { delta: 0.0, ..p0() },
            ModelParams { w: 0.0, ..p0() },
        ] {
            assert!(matches!(validate(&p), Err(Error::NonPositive { .. })));
        }
        let p = ModelParams { alpha: 1.0, ..p0() };
        assert!(matches!(validate(&p), Err(Error::OutOfRange { .. })));
        let p = ModelParams { alpha: 1e-7, ..p0() };
        assert!(matches!(validate(&p), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn abstention_cases() {
        let p = ModelParams {
            a: 0.1,
            b: 0.1,
            delta: 0.05,
            ..p0()
        };
        assert_eq!(
            validate(&p).unwrap().regime(),
            Regime::Abstention(AbstentionCase::Case1)
        );
        let p = ModelParams {
            a: 0.1,
            b: 0.1,
            delta: 0.30,
            ..p0()
        };
        assert_eq!(
            validate(&p).unwrap().regime(),
            Regime::Abstention(AbstentionCase::Case2)
        );
    }

    #[test]
    fn quad_root_examples() {
        assert_eq!(quad_root_plus(1.0, 0.0, -1.0).unwrap(), 1.0);
        let x = quad_root_plus(0.02, -0.47, -0.12).unwrap();
        let direct = (0.47 + (0.47f64 * 0.47 + 4.0 * 0.02 * 0.12).sqrt()) / (2.0 * 0.02);
        assert!((x - direct).abs() < 1e-12);
        assert!((x - 23.75).abs() < 0.01, "{x}");
        assert!((0.02 * x * x - 0.47 * x - 0.12).abs() < 1e-10);
        let x = quad_root_plus::<f64>(0.005, -0.225, -0.35).unwrap();
        assert!((x - 46.51).abs() < 0.01, "{x}");
        assert!((0.005 * x * x - 0.225 * x - 0.35).abs() < 1e-10);
        assert!(matches!(
            quad_root_plus(1.0, 0.0, 1.0),
            Err(Error::NoRealRoot { .. })
        ));
    }

    #[test]
    fn quad_root_f32() {
        let x = quad_root_plus(0.02f32, -0.47, -0.12).unwrap();
        assert!((x - 23.75).abs() < 0.01);
    }

    #[test]
    fn derive_reference() {
        let d = derive(&validate(&p0()).unwrap()).unwrap();
        assert!((d.theta - 0.2).abs() < 1e-14);
        assert!((d.lambda - 0.58).abs() < 1e-14);
        assert!((d.delta_hat + 0.46).abs() < 1e-14);
        let (a, b, c) = d.h_coeffs(0.05);
        assert!((a - 0.02).abs() < 1e-15 && (b + 0.47).abs() < 1e-14 && (c + 0.12).abs() < 1e-15);
        let (a, b, c) = d.h_alpha_coeffs(0.15);
        assert!((a - 0.005).abs() < 1e-15 && (b + 0.225).abs() < 1e-14 && (c + 0.35).abs() < 1e-15);
        let p = ModelParams {
            a: 0.0,
            b: 0.1,
            ..p0()
        };
        let d = derive(&validate(&p).unwrap()).unwrap();
        assert!((d.theta - 0.2).abs() < 1e-14);
    }

    #[test]
    fn derive_rejects_abstention() {
        let p = ModelParams {
            a: 0.1,
            b: 0.1,
            ..p0()
        };
        assert!(matches!(
            derive(&validate(&p).unwrap()),
            Err(Error::WrongRegime { .. })
        ));
    }

    #[test]
    fn felicity_values() {
        let p = p0();
        assert_eq!(p.felicity(0.0, 1.0).unwrap(), 2.0);
        assert_eq!(p.felicity_deriv(0.0, 1.0).unwrap(), 1.0);
        let f = p.felicity(1.0, 4.0).unwrap();
        // independent route: exp(ln 4 * 0.5 - 0.3) / 0.5
        let g = ((4.0f64).ln() * 0.5 - 0.3).exp() / 0.5;
        assert!((f - (-0.3f64).exp() * 4.0).abs() < 1e-14);
        assert!((f - g).abs() < 1e-14);
        assert!(p.felicity(1e4, 3.0).unwrap() < 1e-300);
        assert_eq!(p.felicity_deriv(0.0, 0.0).unwrap(), f64::INFINITY);
        assert!(matches!(p.felicity(0.0, -1.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let s = r#"{"r":0.02,"sigma":0.2,"aPrime":-0.1,"a":0.05,"b":0.15,"bPrime":0.3,
                   "delta":0.3,"alpha":0.5,"beta":0.1,"eta":1,"w":5}"#;
        let p: ModelParams<f64> = ModelParams::from_json_str(s).unwrap();
        assert_eq!(p, p0());
        let bad = s.replace("\"w\":5", "\"w\":5,\"wealth\":3");
        assert!(ModelParams::<f64>::from_json_str(&bad).is_err());
        let with_mu = s.replace("\"w\":5", "\"w\":5,\"mu\":0.08");
        let p = ModelParams::<f64>::from_json_str(&with_mu).unwrap();
        assert!((p.risk_premium().unwrap() - 0.3).abs() < 1e-12);
    }

    pub(crate) fn valid_standard() -> impl Strategy<Value = ModelParams<f64>> {
        (
            0.0..0.08f64,
            0.05..0.9f64,
            -0.3..0.3f64,
            0.01..0.4f64,
            0.0..0.3f64,
            0.0..0.3f64,
            0.05..0.5f64,
            0.0..3.0f64,
            0.5..20.0f64,
            0.01..1.0f64,
        )
            .prop_map(|(r, alpha, a, spread, da, db, beta, eta, w, slack)| {
                let b = a + spread;
                let rhs = alpha * r + alpha * spread * spread / (2.0 * (1.0 - alpha));
                ModelParams {
                    r,
                    sigma: 0.25,
                    a_prime: a - da,
                    a,
                    b,
                    b_prime: b + db,
                    delta: rhs + slack,
                    alpha,
                    beta,
                    eta,
                    w,
                    mu: None,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn roots_above_one(p in valid_standard()) {
            let d = derive(&validate(&p).unwrap()).unwrap();
            prop_assert!(d.theta > 0.0);
            prop_assert!(d.x_plus_alpha_b > 1.0);
            prop_assert!(d.x_plus_a > 1.0);
            prop_assert!(d.x_plus_a_prime > 1.0);
        }

        #[test]
        fn quad_residual(a in 1e-3..1.0f64, b in -5.0..5.0f64, c in -5.0..-1e-3f64) {
            let x = quad_root_plus(a, b, c).unwrap();
            let res = a * x * x + b * x + c;
            prop_assert!(res.abs() <= 1e-10 * c.abs().max(1.0), "residual {}", res);
            prop_assert!(x > 0.0);
        }

        #[test]
        fn felicity_concave(y1 in 1e-3..100.0f64, y2 in 1e-3..100.0f64, l in 0.0..1.0f64, t in 0.0..20.0f64) {
            let p = p0();
            let lhs = p.felicity(t, l * y1 + (1.0 - l) * y2).unwrap();
            let rhs = l * p.felicity(t, y1).unwrap() + (1.0 - l) * p.felicity(t, y2).unwrap();
            prop_assert!(lhs >= rhs - 1e-12);
        }

        #[test]
        fn felicity_monotone(y in 1e-3..100.0f64, t in 0.0..20.0f64, dt in 1e-3..5.0f64) {
            let p = p0();
            prop_assert!(p.felicity(t + dt, y).unwrap() < p.felicity(t, y).unwrap());
            prop_assert!(p.felicity_deriv(t + dt, y).unwrap() < p.felicity_deriv(t, y).unwrap());
            prop_assert!(p.felicity(t, y * 1.5).unwrap() > p.felicity(t, y).unwrap());
        }
    }
}
