//! Adapted Girsanov kernels used as candidate priors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::path_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum KernelStrategy {
    Constant { value: f64 },
    /// `values[i]` on `[times[i], times[i+1])`; `times[0] = 0`.
    Schedule { times: Vec<f64>, values: Vec<f64> },
    /// `nonneg` while `B_t >= 0`, `neg` otherwise.
    SignOfB { nonneg: f64, neg: f64 },
    /// `up` after an up move of `B`, `down` after a down move (and at 0).
    LastMove { up: f64, down: f64 },
}

impl KernelStrategy {
    pub fn constant(value: f64) -> Self {
        KernelStrategy::Constant { value }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            KernelStrategy::Constant { value } => vec![*value],
            KernelStrategy::Schedule { values, .. } => values.clone(),
            KernelStrategy::SignOfB { nonneg, neg } => vec![*nonneg, *neg],
            KernelStrategy::LastMove { up, down } => vec![*up, *down],
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Every value the kernel can take lies in `[lo, hi]`.
    pub fn check(&self, lo: f64, hi: f64) -> Result<()> {
        if let KernelStrategy::Schedule { times, values } = self {
            if times.len() != values.len() || times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidConfig("kernel schedule needs increasing times from 0".into()));
            }
        }
        for v in self.values() {
            if !(v >= lo - 1e-15 && v <= hi + 1e-15) {
                return Err(Error::KernelOutOfBounds { value: v, lo, hi });
            }
        }
        Ok(())
    }

    /// Kernel on `[t, t + dt)` given `B_t` and the last increment.
    #[inline]
    pub fn at(&self, t: f64, b: f64, last_db: f64) -> f64 {
        match self {
            KernelStrategy::Constant { value } => *value,
            KernelStrategy::Schedule { times, values } => {
                let i = times.partition_point(|&s| s <= t).saturating_sub(1);
                values[i]
            }
            KernelStrategy::SignOfB { nonneg, neg } => {
                if b >= 0.0 {
                    *nonneg
                } else {
                    *neg
                }
            }
            KernelStrategy::LastMove { up, down } => {
                if last_db > 0.0 {
                    *up
                } else {
                    *down
                }
            }
        }
    }

    /// Step-wise values when the kernel does not depend on the path.
    pub fn deterministic(&self, dt: f64, n_steps: usize) -> Option<Vec<f64>> {
        match self {
            KernelStrategy::Constant { value } => Some(vec![*value; n_steps]),
            KernelStrategy::Schedule { .. } => Some((0..n_steps).map(|k| self.at(k as f64 * dt, 0.0, 0.0)).collect()),
            _ => None,
        }
    }
}

/// `n` random candidates in `[lo, hi]`: switching schedules among the
/// endpoints and the midpoint, and path-dependent rules.
pub fn random_candidates(lo: f64, hi: f64, n: usize, horizon: f64, seed: u64) -> Vec<KernelStrategy> {
    let mut rng = path_rng(seed, u64::MAX);
    let levels = [lo, 0.5 * (lo + hi), hi];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let pick = |r: &mut rand_chacha::ChaCha8Rng| levels[r.random_range(0..3)];
        let cand = match i % 4 {
            0 | 1 => {
                let switches = rng.random_range(1..8);
                let mut times = vec![0.0];
                for _ in 0..switches {
                    times.push(rng.random_range(0.0..horizon));
                }
                times.sort_by(f64::total_cmp);
                times.dedup();
                let values = times.iter().map(|_| pick(&mut rng)).collect();
                KernelStrategy::Schedule { times, values }
            }
            2 => KernelStrategy::SignOfB {
                nonneg: pick(&mut rng),
                neg: pick(&mut rng),
            },
            _ => KernelStrategy::LastMove {
                up: pick(&mut rng),
                down: pick(&mut rng),
            },
        };
        out.push(cand);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_lookup() {
        let k = KernelStrategy::Schedule {
            times: vec![0.0, 1.0, 2.5],
            values: vec![0.1, 0.2, 0.3],
        };
        assert_eq!(k.at(0.0, 0.0, 0.0), 0.1);
        assert_eq!(k.at(0.99, 0.0, 0.0), 0.1);
        assert_eq!(k.at(1.0, 0.0, 0.0), 0.2);
        assert_eq!(k.at(7.0, 0.0, 0.0), 0.3);
        assert!(k.check(0.1, 0.3).is_ok());
        assert!(matches!(k.check(0.15, 0.3), Err(Error::KernelOutOfBounds { .. })));
    }

    #[test]
    fn candidates_in_bounds_and_serializable() {
        let c = random_candidates(0.15, 0.30, 50, 16.0, 3);
        assert_eq!(c.len(), 50);
        for k in &c {
            k.check(0.15, 0.30).unwrap();
            let s = serde_json::to_string(k).unwrap();
            let back: KernelStrategy = serde_json::from_str(&s).unwrap();
            assert_eq!(&back, k);
        }
        assert_eq!(c, random_candidates(0.15, 0.30, 50, 16.0, 3));
    }
}
