//! Generalized reservoir counters.
//!
//! A reservoir of capacity `N` that has received `n > N` offers draws
//! `k ~ U[1, f(n)]` and accepts the newcomer when `k <= N`, so the acceptance
//! rate is `N / f(n)`. The classic algorithm uses `f(n) = n`. Every design
//! here satisfies `f(N) = N` and `0 <= f(n) - f(n-1) <= 1`, which keeps the
//! retention probabilities of stored data well defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `q` the exponential counter is replaced by its `q -> 0` limit `f(n) = n`.
const EXP_IDENTITY_Q: f64 = 1e-12;

/// Relative slack added before flooring so that values which are integers in
/// exact arithmetic (for instance `(1 - 0.9) * 10`) do not fall one short.
const FLOOR_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CounterKind {
    /// `N ln_q(1 + m/N)` growth; `q` in `[0, 2]`.
    QLog,
    /// `(1 - q) m` growth; `q` in `[0, 1)`.
    Linear,
    /// `N/q (1 - exp(-q m/N))` growth; `q` in `(0, 1]`.
    Exp,
}

impl std::str::FromStr for CounterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qlog" | "q-log" | "lnq" => Ok(Self::QLog),
            "lin" | "linear" => Ok(Self::Linear),
            "exp" | "exponential" => Ok(Self::Exp),
            other => Err(Error::Config(format!("unknown counter design `{other}`"))),
        }
    }
}

/// Counter design: the growth law of `f` beyond the capacity and its balance `q`.
///
/// Larger `q` means slower counter growth, hence higher plasticity, for all kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterDesign {
    pub kind: CounterKind,
    pub q: f64,
}

impl CounterDesign {
    /// Validated constructor.
    pub fn new(kind: CounterKind, q: f64) -> Result<Self> {
        let design = Self { kind, q };
        design.validate()?;
        Ok(design)
    }

    pub fn qlog(q: f64) -> Result<Self> {
        Self::new(CounterKind::QLog, q)
    }

    pub fn linear(q: f64) -> Result<Self> {
        Self::new(CounterKind::Linear, q)
    }

    pub fn exp(q: f64) -> Result<Self> {
        Self::new(CounterKind::Exp, q)
    }

    /// The classic reservoir counter `f(n) = n`.
    pub fn classic() -> Self {
        Self {
            kind: CounterKind::QLog,
            q: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q;
        let ok = q.is_finite()
            && match self.kind {
                CounterKind::QLog => (0.0..=2.0).contains(&q),
                CounterKind::Linear => (0.0..1.0).contains(&q),
                CounterKind::Exp => q > 0.0 && q <= 1.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "q = {q} outside the domain of the {:?} counter",
                self.kind
            )))
        }
    }

    /// `f(n)` for a reservoir of the given capacity. See [`counter_value`].
    pub fn value(&self, n: u64, capacity: usize) -> u64 {
        let cap = capacity as u64;
        if n <= cap {
            return n;
        }
        let excess = (n - cap) as f64;
        let scale = capacity as f64;
        let growth = match self.kind {
            CounterKind::QLog => {
                if self.q == 0.0 {
                    return n;
                }
                scale * ln_q(1.0 + excess / scale, self.q)
            }
            CounterKind::Linear => (1.0 - self.q) * excess,
            CounterKind::Exp => {
                if self.q < EXP_IDENTITY_Q {
                    return n;
                }
                -(scale / self.q) * (-self.q * excess / scale).exp_m1()
            }
        };
        cap + floor_with_slack(growth)
    }

    /// Asymptotic counter value, `None` when the counter grows without bound.
    pub fn limit(&self, capacity: usize) -> Option<f64> {
        let scale = capacity as f64;
        match self.kind {
            CounterKind::QLog if self.q > 1.0 => Some(scale + scale / (self.q - 1.0)),
            CounterKind::Exp if self.q >= EXP_IDENTITY_Q => Some(scale + scale / self.q),
            _ => None,
        }
    }
}

impl Default for CounterDesign {
    fn default() -> Self {
        Self::classic()
    }
}

/// Tsallis q-logarithm `ln_q(x) = (x^(1-q) - 1)/(1 - q)`, with `ln_1 = ln`.
pub fn ln_q(x: f64, q: f64) -> f64 {
    let one_minus_q = 1.0 - q;
    if one_minus_q == 0.0 {
        x.ln()
    } else {
        // expm1 keeps precision when x is close to 1 or q is close to 1.
        (one_minus_q * x.ln()).exp_m1() / one_minus_q
    }
}

fn floor_with_slack(v: f64) -> u64 {
    if v <= 0.0 {
        return 0;
    }
    (v * (1.0 + FLOOR_SLACK)).floor() as u64
}

/// Generalized counter value `f(n)` for a reservoir of capacity `capacity`.
///
/// Identity up to the capacity; beyond it, the design's growth law is floored
/// and added to the capacity.
pub fn counter_value(design: &CounterDesign, n: u64, capacity: usize) -> Result<u64> {
    if capacity == 0 {
        return Err(Error::Config("reservoir capacity must be positive".into()));
    }
    design.validate()?;
    Ok(design.value(n, capacity))
}
