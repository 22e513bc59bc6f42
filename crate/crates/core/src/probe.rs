//! Monte Carlo and closed-form checks of reservoir acceptance and retention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{CounterDesign, ReservoirBuffer};
use crate::error::{Error, Result};

/// Empirical frequency against its closed-form value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub empirical: f64,
    pub analytic: f64,
    pub trials: u64,
    /// Binomial z-score of `empirical - analytic`. Zero when both agree on a
    /// degenerate (0 or 1) probability, infinite when they disagree.
    pub z_score: f64,
}

impl ProbeResult {
    pub fn new(hits: u64, trials: u64, analytic: f64) -> Self {
        let empirical = hits as f64 / trials as f64;
        let var = analytic * (1.0 - analytic) / trials as f64;
        let diff = empirical - analytic;
        let z_score = if var > 0.0 {
            diff / var.sqrt()
        } else if diff.abs() < 1e-15 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            empirical,
            analytic,
            trials,
            z_score,
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }
}

/// Acceptance probability of the `n`-th offer, `min(1, N / f(n))`.
pub fn acceptance_probability(design: &CounterDesign, capacity: usize, n: u64) -> f64 {
    let f = design.value(n, capacity);
    if f == 0 {
        1.0
    } else {
        (capacity as f64 / f as f64).min(1.0)
    }
}

/// Probability that the item offered at position `n` is still resident after
/// `n_prime` further offers:
///
/// ```text
/// N / f(n + n') * prod_{m=1..n'} (f(n+m) - 1) / f(n+m-1)
/// ```
///
/// The formula holds once the buffer is full (`n > N`). Offers that still
/// land in a free slot are handled exactly: acceptance is certain and no
/// eviction happens before the buffer fills.
pub fn analytic_retention(design: &CounterDesign, capacity: usize, n: u64, n_prime: u64) -> f64 {
    let cap = capacity as u64;
    let mut p = acceptance_probability(design, capacity, n);
    let first_evicting = (n + 1).max(cap + 1);
    for j in first_evicting..=n + n_prime {
        let f = design.value(j, capacity) as f64;
        p *= 1.0 - 1.0 / f;
    }
    p
}

/// Retention in the literal product form above, for `n > N`.
pub fn analytic_retention_product_form(
    design: &CounterDesign,
    capacity: usize,
    n: u64,
    n_prime: u64,
) -> f64 {
    let f = |j: u64| design.value(j, capacity) as f64;
    let mut p = capacity as f64 / f(n + n_prime);
    for m in 1..=n_prime {
        p *= (f(n + m) - 1.0) / f(n + m - 1);
    }
    p
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Final residency counts of tokens `1..=offers` over `trials` independent runs.
///
/// Each trial uses its own stream of the root seed, so results do not depend
/// on how trials are scheduled.
pub fn membership_counts(
    design: &CounterDesign,
    capacity: usize,
    offers: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    design.validate()?;
    if capacity == 0 {
        return Err(Error::Config("capacity must be positive".into()));
    }
    let mut counts = vec![0u64; offers as usize];
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let mut buf: ReservoirBuffer<u32> = ReservoirBuffer::new(capacity, *design);
        for token in 0..offers {
            buf.offer(token, &mut rng);
        }
        for &token in buf.items() {
            counts[token as usize] += 1;
        }
    }
    Ok(counts)
}

/// Estimates the probability that token `mark` (1-based) is resident after
/// `offers` offers and compares it to [`analytic_retention`].
pub fn empirical_membership(
    design: &CounterDesign,
    capacity: usize,
    offers: u32,
    mark: u32,
    trials: u64,
    seed: u64,
) -> Result<ProbeResult> {
    if mark == 0 || mark > offers {
        return Err(Error::Config(format!(
            "mark must lie in 1..={offers}, got {mark}"
        )));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let counts = membership_counts(design, capacity, offers, trials, seed)?;
    let analytic = analytic_retention(design, capacity, mark as u64, (offers - mark) as u64);
    Ok(ProbeResult::new(counts[mark as usize - 1], trials, analytic))
}

/// Per-token probe results for every token of a run of `offers` offers.
pub fn membership_profile(
    design: &CounterDesign,
    capacity: usize,
    offers: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<ProbeResult>> {
    let counts = membership_counts(design, capacity, offers, trials, seed)?;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let n = i as u64 + 1;
            let analytic = analytic_retention(design, capacity, n, offers as u64 - n);
            ProbeResult::new(c, trials, analytic)
        })
        .collect())
}

/// One row of an acceptance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u64,
    pub counter: u64,
    pub acceptance: f64,
}

/// `(n, f(n), N / f(n))` for `n = stride, 2 stride, ..` up to `max_offers`.
pub fn acceptance_curve(
    design: &CounterDesign,
    capacity: usize,
    max_offers: u64,
    stride: u64,
) -> Vec<CurvePoint> {
    let stride = stride.max(1);
    (1..=max_offers / stride)
        .map(|i| {
            let n = i * stride;
            CurvePoint {
                n,
                counter: design.value(n, capacity),
                acceptance: acceptance_probability(design, capacity, n),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_retention_telescopes() {
        let d = CounterDesign::classic();
        let p = analytic_retention(&d, 100, 200, 300);
        assert!((p - 0.2).abs() < 1e-12);
        assert!((analytic_retention_product_form(&d, 100, 200, 300) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_further_offers_is_acceptance() {
        for d in [CounterDesign::qlog(1.5).unwrap(), CounterDesign::exp(0.5).unwrap()] {
            let p = analytic_retention(&d, 50, 400, 0);
            assert!((p - 50.0 / d.value(400, 50) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn both_forms_agree_after_fill() {
        for d in [
            CounterDesign::qlog(1.0).unwrap(),
            CounterDesign::qlog(2.0).unwrap(),
            CounterDesign::linear(0.5).unwrap(),
        ] {
            let a = analytic_retention(&d, 20, 37, 500);
            let b = analytic_retention_product_form(&d, 20, 37, 500);
            assert!((a - b).abs() < 1e-12, "{d:?}: {a} vs {b}");
        }
    }

    #[test]
    fn saturated_qlog_decays_geometrically() {
        let d = CounterDesign::qlog(2.0).unwrap();
        let n = 1_000_000;
        let f = d.value(n, 10) as f64;
        let r = analytic_retention(&d, 10, n, 10) / analytic_retention(&d, 10, n, 9);
        assert!((r - (f - 1.0) / f).abs() < 1e-12);
    }

    #[test]
    fn below_capacity_everything_stays() {
        let d = CounterDesign::qlog(1.0).unwrap();
        let res = empirical_membership(&d, 10, 10, 3, 50, 1).unwrap();
        assert_eq!(res.empirical, 1.0);
        assert_eq!(res.analytic, 1.0);
        assert_eq!(res.z_score, 0.0);
    }

    #[test]
    fn empirical_matches_classic() {
        let d = CounterDesign::classic();
        let res = empirical_membership(&d, 10, 100, 1, 4000, 7).unwrap();
        assert!((res.analytic - 0.1).abs() < 1e-12);
        assert!(res.within(4.0), "{res:?}");
    }

    #[test]
    fn probes_are_deterministic() {
        let d = CounterDesign::qlog(1.5).unwrap();
        let a = membership_counts(&d, 5, 40, 200, 3).unwrap();
        assert_eq!(a, membership_counts(&d, 5, 40, 200, 3).unwrap());
        assert_eq!(a.iter().sum::<u64>(), 5 * 200);
    }

    #[test]
    fn bad_marks_are_rejected() {
        let d = CounterDesign::classic();
        assert!(empirical_membership(&d, 5, 10, 0, 1, 0).is_err());
        assert!(empirical_membership(&d, 5, 10, 11, 1, 0).is_err());
    }

    #[test]
    fn curves() {
        let classic = acceptance_curve(&CounterDesign::classic(), 100, 1000, 100);
        assert_eq!(classic.len(), 10);
        assert!((classic[9].acceptance - 0.1).abs() < 1e-12);
        let q2 = acceptance_curve(&CounterDesign::qlog(2.0).unwrap(), 100, 1_000_000, 1_000_000);
        assert!((q2[0].acceptance - 0.5).abs() < 1e-2);
        let q1 = acceptance_curve(&CounterDesign::qlog(1.0).unwrap(), 100, 1_000_000, 1000);
        assert!(q1.windows(2).all(|w| w[1].counter >= w[0].counter));
        assert!(q1.last().unwrap().counter > 900);
    }
}
