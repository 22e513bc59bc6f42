use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CounterDesign, Record};

/// Outcome of offering one item to a reservoir.
#[derive(Debug, Clone, PartialEq)]
pub enum OfferResult<T> {
    AcceptedIntoFree,
    AcceptedReplacing(T),
    Rejected(T),
}

impl<T> OfferResult<T> {
    pub fn accepted(&self) -> bool {
        !matches!(self, Self::Rejected(_))
    }
}

/// Reservoir buffer driven by a generalized counter.
///
/// Generic over the stored item so the probability probes can run the exact
/// same acceptance logic over plain tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservoirBuffer<T = Record> {
    capacity: usize,
    slots: Vec<T>,
    /// Number of offers received so far.
    n: u64,
    design: CounterDesign,
    #[serde(default)]
    misses: u64,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize, design: CounterDesign) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            n: 0,
            design,
            misses: 0,
        }
    }

    /// Offers `item`; the counter advances by one regardless of the outcome.
    pub fn offer<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) -> OfferResult<T> {
        self.n += 1;
        if self.slots.len() < self.capacity {
            self.slots.push(item);
            return OfferResult::AcceptedIntoFree;
        }
        let bound = self.design.value(self.n, self.capacity);
        let k = rng.random_range(1..=bound) as usize;
        if k <= self.capacity {
            OfferResult::AcceptedReplacing(std::mem::replace(&mut self.slots[k - 1], item))
        } else {
            OfferResult::Rejected(item)
        }
    }

    /// `f(n)` at the current counter.
    pub fn counter_value(&self) -> u64 {
        self.design.value(self.n, self.capacity)
    }

    /// Probability that the next offer is accepted.
    pub fn acceptance_probability(&self) -> f64 {
        let next = self.design.value(self.n + 1, self.capacity);
        (self.capacity as f64 / next as f64).min(1.0)
    }

    pub fn items(&self) -> &[T] {
        &self.slots
    }

    pub fn items_mut(&mut self) -> &mut [T] {
        &mut self.slots
    }

    pub fn offers(&self) -> u64 {
        self.n
    }

    pub fn design(&self) -> &CounterDesign {
        &self.design
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Write-backs that found no matching record.
    pub fn misses(&self) -> u64 {
        self.misses
    }
}

impl ReservoirBuffer<Record> {
    /// Replaces the stored feature and priority of record `id`.
    ///
    /// Returns `false` (and counts a miss) when the record is no longer stored.
    pub fn update_feature(&mut self, id: u64, z: Vec<f64>, gamma_bar: f64) -> bool {
        match self.slots.iter_mut().find(|r| r.id == id) {
            Some(rec) => {
                rec.z = z;
                rec.gamma_bar = gamma_bar.clamp(0.0, 1.0);
                true
            }
            None => {
                self.misses += 1;
                false
            }
        }
    }

    pub fn get(&self, id: u64) -> Option<&Record> {
        self.slots.iter().find(|r| r.id == id)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.get(id).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::Target;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(id: u64) -> Record {
        let mut r = Record::new(id, vec![0.0], Target::Class(0));
        r.z = vec![0.0, 0.0];
        r
    }

    #[test]
    fn fills_free_slots_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReservoirBuffer::new(512, CounterDesign::classic());
        for i in 0..512u64 {
            assert_eq!(buf.offer(rec(i), &mut rng), OfferResult::AcceptedIntoFree);
        }
        assert_eq!(buf.len(), 512);
        assert_eq!(buf.offers(), 512);
    }

    #[test]
    fn occupancy_is_min_of_offers_and_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = ReservoirBuffer::new(7, CounterDesign::qlog(1.5).unwrap());
        for i in 0..100u64 {
            buf.offer(i, &mut rng);
            assert_eq!(buf.len() as u64, (i + 1).min(7));
            assert_eq!(buf.offers(), i + 1);
        }
    }

    #[test]
    fn replacement_returns_displaced_item() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut buf = ReservoirBuffer::new(2, CounterDesign::qlog(2.0).unwrap());
        buf.offer(10u64, &mut rng);
        buf.offer(11u64, &mut rng);
        let mut seen_replace = false;
        for i in 12..200u64 {
            match buf.offer(i, &mut rng) {
                OfferResult::AcceptedReplacing(old) => {
                    assert!(old < i);
                    assert!(buf.items().contains(&i));
                    seen_replace = true;
                }
                OfferResult::Rejected(back) => assert_eq!(back, i),
                OfferResult::AcceptedIntoFree => panic!("buffer is full"),
            }
        }
        assert!(seen_replace);
    }

    #[test]
    fn classic_acceptance_frequency_matches_capacity_over_n() {
        // Acceptance at offer n is N/n; average over offers 1001..=2000 for N = 100.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 400;
        let mut accepted = 0u64;
        let mut expected = 0.0;
        for _ in 0..trials {
            let mut buf = ReservoirBuffer::new(100, CounterDesign::classic());
            for i in 0..1000u64 {
                buf.offer(i, &mut rng);
            }
            for i in 1000..2000u64 {
                if buf.offer(i, &mut rng).accepted() {
                    accepted += 1;
                }
            }
        }
        for n in 1001..=2000u64 {
            expected += 100.0 / n as f64;
        }
        expected *= trials as f64;
        let rel = (accepted as f64 - expected).abs() / expected;
        assert!(rel < 0.03, "accepted {accepted}, expected {expected}");
    }

    #[test]
    fn q_two_acceptance_tends_to_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut buf = ReservoirBuffer::new(50, CounterDesign::qlog(2.0).unwrap());
        for i in 0..200_000u64 {
            buf.offer(i, &mut rng);
        }
        let mut accepted = 0;
        for i in 0..20_000u64 {
            if buf.offer(i, &mut rng).accepted() {
                accepted += 1;
            }
        }
        let freq = accepted as f64 / 20_000.0;
        assert!((freq - 50.0 / 99.0).abs() < 0.02, "freq = {freq}");
        assert!((buf.acceptance_probability() - 0.5).abs() < 0.02);
    }

    #[test]
    fn update_feature_read_your_write() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut buf = ReservoirBuffer::new(4, CounterDesign::classic());
        for i in 0..4 {
            buf.offer(rec(i), &mut rng);
        }
        let n_before = buf.offers();
        assert!(buf.update_feature(2, vec![1.5, -2.0], 0.25));
        let r = buf.get(2).unwrap();
        assert_eq!(r.z, vec![1.5, -2.0]);
        assert_eq!(r.gamma_bar, 0.25);
        assert_eq!(buf.offers(), n_before);
        assert_eq!(buf.misses(), 0);
    }

    #[test]
    fn update_absent_id_counts_miss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut buf = ReservoirBuffer::new(4, CounterDesign::classic());
        buf.offer(rec(0), &mut rng);
        let before = buf.items().to_vec();
        assert!(!buf.update_feature(99, vec![1.0, 1.0], 0.5));
        assert_eq!(buf.misses(), 1);
        assert_eq!(buf.items(), &before[..]);
    }
}
