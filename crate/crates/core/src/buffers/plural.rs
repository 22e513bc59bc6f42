//! Serial chain of reservoir buffers fed by FIFO evictions.
//!
//! Layer 1 receives what falls out of the FIFO buffer; a record displaced from
//! layer `l` is passed to layer `l + 1`, and a record rejected by layer `l`
//! goes no further. Before each hand-over the candidate may be omitted with a
//! probability derived from its replay priority relative to the priorities
//! stored in the two adjacent buffers. An omitted candidate never touches the
//! target layer, so that layer's counter does not advance.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CounterDesign, OfferResult, Record, ReservoirBuffer};
use crate::error::{Error, Result};

/// Priority spread below which the rejection probability is forced to zero.
pub const OMISSION_EPSILON: f64 = 1e-5;

/// Exponent of the omission rule for a rejection knob `zeta`.
///
/// `zeta` is the combined rejection probability of a candidate with
/// intermediate priority. `None` means omission is disabled (`zeta == 0`).
pub fn nu_from_zeta(zeta: f64) -> Option<f64> {
    if !(zeta > 0.0) {
        return None;
    }
    let zeta = zeta.min(1.0);
    let base = 1.0 - (1.0 - zeta).sqrt();
    Some((-base.ln() / std::f64::consts::LN_2).max(0.0))
}

/// Minimum and maximum replay priority over a set of records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaStats {
    pub min: f64,
    pub max: f64,
}

impl GammaStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, g| match acc {
            None => Some(Self { min: g, max: g }),
            Some(s) => Some(Self {
                min: s.min.min(g),
                max: s.max.max(g),
            }),
        })
    }
}

/// Probability of omitting a candidate with priority `gamma_bar` given the
/// priority range of a buffer.
pub fn rejection_probability(gamma_bar: f64, stats: GammaStats, nu: f64) -> f64 {
    let spread = stats.max - stats.min;
    if !(spread >= OMISSION_EPSILON) {
        return 0.0;
    }
    let base = (stats.max - gamma_bar.clamp(stats.min, stats.max)) / spread;
    if base <= 0.0 {
        // A candidate at the maximal priority is never omitted, even for nu = 0.
        return 0.0;
    }
    base.powf(nu).clamp(0.0, 1.0)
}

/// Configuration of one layer of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub capacity: usize,
    pub design: CounterDesign,
}

/// What happened to a candidate at one layer of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum PassOutcome {
    Offered(OfferResult<Record>),
    Omitted(Record),
}

/// Running counters over the life of a stack.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StackStats {
    /// Offers that reached each layer.
    pub offered: Vec<u64>,
    /// Candidates dropped by omission in front of each layer.
    pub omitted: Vec<u64>,
    /// Offers rejected by each layer.
    pub rejected: Vec<u64>,
    /// Replay draws that fell back to uniform sampling because a layer held
    /// only zero-priority records.
    pub uniform_fallbacks: u64,
}

/// Two disjoint replay halves sampled from a stack.
#[derive(Debug, Clone, Default)]
pub struct ReplayBatch {
    pub rehearsal: Vec<Record>,
    pub regularization: Vec<Record>,
    /// Set when any layer had to fall back to uniform sampling.
    pub uniform_fallback: bool,
}

/// Serialized form of a stack, used for checkpoints and golden tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackSnapshot {
    pub layers: Vec<ReservoirBuffer<Record>>,
    pub zeta: f64,
    pub stats: StackStats,
}

#[derive(Debug, Clone)]
pub struct PluralStack {
    layers: Vec<ReservoirBuffer<Record>>,
    zeta: f64,
    nu: Option<f64>,
    stats: StackStats,
}

impl PluralStack {
    /// Builds a stack from shallow (plastic) to deep (consolidating) layers.
    ///
    /// The balances `q` must be non-increasing with depth.
    pub fn new(layers: &[LayerSpec], zeta: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a reservoir stack needs at least one layer".into()));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::Config(format!("zeta = {zeta} outside [0, 1]")));
        }
        for spec in layers {
            if spec.capacity == 0 {
                return Err(Error::Config("layer capacity must be positive".into()));
            }
            spec.design.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].design.q < pair[1].design.q {
                return Err(Error::Config(format!(
                    "layer balances must not increase with depth ({} before {})",
                    pair[0].design.q, pair[1].design.q
                )));
            }
        }
        let count = layers.len();
        Ok(Self {
            layers: layers
                .iter()
                .map(|s| ReservoirBuffer::new(s.capacity, s.design))
                .collect(),
            zeta,
            nu: nu_from_zeta(zeta),
            stats: StackStats {
                offered: vec![0; count],
                omitted: vec![0; count],
                rejected: vec![0; count],
                uniform_fallbacks: 0,
            },
        })
    }

    /// Single classic reservoir without omission.
    pub fn single(capacity: usize, design: CounterDesign) -> Result<Self> {
        Self::new(&[LayerSpec { capacity, design }], 0.0)
    }

    /// Omission probability of moving `candidate` from layer `to - 1` into layer `to`
    /// (zero-based `to`; index 0 is the first reservoir, fed by the FIFO buffer).
    pub fn omission_probability(&self, candidate: &Record, to: usize) -> f64 {
        let Some(nu) = self.nu else {
            return 0.0;
        };
        let g = candidate.gamma_bar;
        let layer_p = |layer: &ReservoirBuffer<Record>| {
            let stats = GammaStats::of(
                layer
                    .items()
                    .iter()
                    .map(|r| r.gamma_bar)
                    .chain(std::iter::once(g)),
            )
            .expect("candidate is always included");
            rejection_probability(g, stats, nu)
        };
        // The FIFO side carries no priorities.
        let upstream = if to == 0 { 0.0 } else { layer_p(&self.layers[to - 1]) };
        let downstream = layer_p(&self.layers[to]);
        1.0 - (1.0 - upstream) * (1.0 - downstream)
    }

    /// Passes a FIFO eviction down the stack.
    pub fn offer<R: Rng + ?Sized>(&mut self, rec: Record, rng: &mut R) -> Vec<(usize, PassOutcome)> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut candidate = rec;
        for l in 0..self.layers.len() {
            let p = self.omission_probability(&candidate, l);
            if p > 0.0 && rng.random::<f64>() < p {
                self.stats.omitted[l] += 1;
                trace.push((l, PassOutcome::Omitted(candidate)));
                return trace;
            }
            self.stats.offered[l] += 1;
            match self.layers[l].offer(candidate, rng) {
                OfferResult::AcceptedReplacing(evicted) => {
                    trace.push((l, PassOutcome::Offered(OfferResult::AcceptedReplacing(evicted.clone()))));
                    candidate = evicted;
                }
                other => {
                    if matches!(other, OfferResult::Rejected(_)) {
                        self.stats.rejected[l] += 1;
                    }
                    trace.push((l, PassOutcome::Offered(other)));
                    return trace;
                }
            }
        }
        trace
    }

    /// Draws `2 * count / L` records per layer without replacement, with
    /// probability proportional to replay priority, and splits the pooled
    /// draw into two disjoint halves of equal size.
    pub fn sample_replay<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> ReplayBatch {
        let quota = 2 * count / self.layers.len();
        let mut pooled = Vec::with_capacity(2 * count);
        let mut fallback = false;
        for layer in &self.layers {
            let (picked, fell_back) = weighted_without_replacement(layer.items(), quota, rng);
            fallback |= fell_back;
            pooled.extend(picked.into_iter().map(|i| layer.items()[i].clone()));
        }
        if fallback {
            self.stats.uniform_fallbacks += 1;
        }
        pooled.shuffle(rng);
        let half = pooled.len() / 2;
        pooled.truncate(2 * half);
        let regularization = pooled.split_off(half);
        ReplayBatch {
            rehearsal: pooled,
            regularization,
            uniform_fallback: fallback,
        }
    }

    /// Writes back a corrected feature and priority to whichever layer holds `id`.
    pub fn update_feature(&mut self, id: u64, z: Vec<f64>, gamma_bar: f64) -> bool {
        if let Some(layer) = self.layers.iter_mut().find(|l| l.contains(id)) {
            layer.update_feature(id, z, gamma_bar)
        } else {
            // Attribute the miss to the first layer so it shows up in the totals.
            self.layers[0].update_feature(id, z, gamma_bar)
        }
    }

    pub fn get(&self, id: u64) -> Option<&Record> {
        self.layers.iter().find_map(|l| l.get(id))
    }

    pub fn layers(&self) -> &[ReservoirBuffer<Record>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_capacity(&self) -> usize {
        self.layers.iter().map(|l| l.capacity()).sum()
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn stats(&self) -> &StackStats {
        &self.stats
    }

    pub fn feature_misses(&self) -> u64 {
        self.layers.iter().map(|l| l.misses()).sum()
    }

    pub fn snapshot(&self) -> StackSnapshot {
        StackSnapshot {
            layers: self.layers.clone(),
            zeta: self.zeta,
            stats: self.stats.clone(),
        }
    }

    pub fn from_snapshot(snapshot: StackSnapshot) -> Result<Self> {
        let specs: Vec<LayerSpec> = snapshot
            .layers
            .iter()
            .map(|l| LayerSpec {
                capacity: l.capacity(),
                design: *l.design(),
            })
            .collect();
        let mut stack = Self::new(&specs, snapshot.zeta)?;
        for (layer, stored) in stack.layers.iter().zip(&snapshot.layers) {
            if stored.len() > layer.capacity() {
                return Err(Error::Config("snapshot layer exceeds its capacity".into()));
            }
        }
        stack.layers = snapshot.layers;
        if snapshot.stats.offered.len() == stack.layers.len() {
            stack.stats = snapshot.stats;
        }
        Ok(stack)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("stack snapshot serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let snapshot: StackSnapshot =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("bad snapshot: {e}")))?;
        Self::from_snapshot(snapshot)
    }
}

/// Sequential weighted draws with renormalization. Returns slot indices and
/// whether a uniform fallback was needed (only zero weights left).
fn weighted_without_replacement<R: Rng + ?Sized>(
    records: &[Record],
    quota: usize,
    rng: &mut R,
) -> (Vec<usize>, bool) {
    if quota >= records.len() {
        return ((0..records.len()).collect(), false);
    }
    let mut remaining: Vec<usize> = (0..records.len()).collect();
    let mut weights: Vec<f64> = records.iter().map(|r| r.gamma_bar.max(0.0)).collect();
    let mut picked = Vec::with_capacity(quota);
    let mut fell_back = false;
    for _ in 0..quota {
        let total: f64 = weights.iter().sum();
        let pos = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pos = weights.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    if u < w {
                        pos = i;
                        break;
                    }
                    u -= w;
                    pos = i;
                }
            }
            pos
        } else {
            fell_back = true;
            rng.random_range(0..weights.len())
        };
        picked.push(remaining.swap_remove(pos));
        weights.swap_remove(pos);
    }
    (picked, fell_back)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::Target;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(id: u64, gamma_bar: f64) -> Record {
        Record {
            id,
            x: vec![id as f64],
            y: Target::Real(0.0),
            z: vec![0.0, 0.0],
            gamma_bar,
        }
    }

    fn two_layers(zeta: f64) -> PluralStack {
        PluralStack::new(
            &[
                LayerSpec {
                    capacity: 4,
                    design: CounterDesign::qlog(1.5).unwrap(),
                },
                LayerSpec {
                    capacity: 4,
                    design: CounterDesign::qlog(1.0).unwrap(),
                },
            ],
            zeta,
        )
        .unwrap()
    }

    #[test]
    fn nu_closed_form() {
        assert!((nu_from_zeta(0.75).unwrap() - 1.0).abs() < 1e-12);
        let nu = nu_from_zeta(0.2).unwrap();
        let expected = -(1.0 - 0.8f64.sqrt()).ln() / 2f64.ln();
        assert!((nu - expected).abs() < 1e-12);
        assert!((nu - 3.24369).abs() < 1e-5, "nu = {nu}");
        assert_eq!(nu_from_zeta(1.0), Some(0.0));
        assert_eq!(nu_from_zeta(0.0), None);
    }

    #[test]
    fn rejection_probability_edges() {
        let stats = GammaStats { min: 0.2, max: 0.9 };
        assert_eq!(rejection_probability(0.9, stats, 3.0), 0.0);
        assert_eq!(rejection_probability(0.2, stats, 3.0), 1.0);
        assert_eq!(rejection_probability(0.9, stats, 0.0), 0.0);
        assert_eq!(rejection_probability(0.5, stats, 0.0), 1.0);
        let flat = GammaStats { min: 0.5, max: 0.5 + 1e-7 };
        assert_eq!(rejection_probability(0.5, flat, 3.0), 0.0);
        let mid = rejection_probability(0.55, stats, 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zeta_at_intermediate_priority() {
        // Both per-buffer probabilities at 0.5^nu combine to zeta.
        for zeta in [0.1, 0.2, 0.5, 0.9] {
            let nu = nu_from_zeta(zeta).unwrap();
            let p = 0.5f64.powf(nu);
            let combined = 1.0 - (1.0 - p) * (1.0 - p);
            assert!((combined - zeta).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_increasing_balance() {
        let err = PluralStack::new(
            &[
                LayerSpec {
                    capacity: 4,
                    design: CounterDesign::qlog(1.0).unwrap(),
                },
                LayerSpec {
                    capacity: 4,
                    design: CounterDesign::qlog(1.5).unwrap(),
                },
            ],
            0.2,
        );
        assert!(err.is_err());
        assert!(PluralStack::new(&[], 0.0).is_err());
        assert!(PluralStack::single(4, CounterDesign::classic()).is_ok());
    }

    #[test]
    fn rejected_offer_stops_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stack = two_layers(0.0);
        let mut id = 0;
        let mut saw_rejection = false;
        while !saw_rejection {
            let before = stack.layers()[1].offers();
            let trace = stack.offer(rec(id, 1.0), &mut rng);
            id += 1;
            if let Some((0, PassOutcome::Offered(OfferResult::Rejected(_)))) = trace.last() {
                assert_eq!(trace.len(), 1);
                assert_eq!(stack.layers()[1].offers(), before);
                saw_rejection = true;
            }
        }
    }

    #[test]
    fn zero_zeta_never_omits() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut stack = two_layers(0.0);
        for id in 0..500 {
            let g = (id % 7) as f64 / 7.0;
            let trace = stack.offer(rec(id, g), &mut rng);
            assert!(matches!(trace[0], (0, PassOutcome::Offered(_))));
        }
        assert_eq!(stack.stats().offered[0], 500);
        assert!(stack.stats().omitted.iter().all(|&c| c == 0));
    }

    #[test]
    fn minimal_priority_candidate_is_omitted_without_advancing_counter() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut stack = two_layers(0.2);
        for id in 0..8 {
            // Fill both layers directly with high-priority records.
            let l = (id / 4) as usize;
            stack.layers[l].offer(rec(id, 0.9), &mut rng);
        }
        let n0 = stack.layers()[0].offers();
        let n1 = stack.layers()[1].offers();
        let p = stack.omission_probability(&rec(100, 0.1), 1);
        assert_eq!(p, 1.0);
        // Layer 0 is fed by the FIFO side: only the downstream term applies.
        let p0 = stack.omission_probability(&rec(100, 0.1), 0);
        assert_eq!(p0, 1.0);
        let trace = stack.offer(rec(100, 0.1), &mut rng);
        assert!(matches!(trace[0], (0, PassOutcome::Omitted(_))));
        assert_eq!(stack.layers()[0].offers(), n0);
        assert_eq!(stack.layers()[1].offers(), n1);
        assert_eq!(stack.stats().omitted[0], 1);
    }

    #[test]
    fn fresh_records_pass_into_first_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut stack = two_layers(1.0);
        for id in 0..4 {
            stack.layers[0].offer(rec(id, 0.3), &mut rng);
        }
        // gamma_bar = 1 is the maximal priority; never omitted.
        assert_eq!(stack.omission_probability(&rec(9, 1.0), 0), 0.0);
    }

    #[test]
    fn record_resides_in_one_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut stack = two_layers(0.2);
        for id in 0..2000 {
            let g = 0.5 + 0.5 * ((id * 37 % 11) as f64 / 10.0);
            stack.offer(rec(id, g), &mut rng);
        }
        let mut ids: Vec<u64> = stack
            .layers()
            .iter()
            .flat_map(|l| l.items().iter().map(|r| r.id))
            .collect();
        let total = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), total);
        // Every offer to layer 1 originated from a layer-0 replacement that was not omitted.
        let s = stack.stats();
        let layer0_replacements = s.offered[0] - s.rejected[0] - 4;
        assert_eq!(s.offered[1] + s.omitted[1], layer0_replacements);
    }

    #[test]
    fn replay_halves_are_disjoint_and_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut stack = PluralStack::single(64, CounterDesign::classic()).unwrap();
        for id in 0..64 {
            stack.offer(rec(id, 1.0), &mut rng);
        }
        for _ in 0..50 {
            let batch = stack.sample_replay(8, &mut rng);
            assert_eq!(batch.rehearsal.len(), 8);
            assert_eq!(batch.regularization.len(), 8);
            for r in &batch.rehearsal {
                assert!(batch.regularization.iter().all(|s| s.id != r.id));
            }
        }
    }

    #[test]
    fn zero_priority_is_never_sampled_while_others_remain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut stack = PluralStack::single(20, CounterDesign::classic()).unwrap();
        for id in 0..20 {
            stack.offer(rec(id, if id == 5 { 0.0 } else { 1.0 }), &mut rng);
        }
        for _ in 0..500 {
            let batch = stack.sample_replay(5, &mut rng);
            assert!(batch
                .rehearsal
                .iter()
                .chain(&batch.regularization)
                .all(|r| r.id != 5));
            assert!(!batch.uniform_fallback);
        }
    }

    #[test]
    fn all_zero_priorities_fall_back_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut stack = PluralStack::single(20, CounterDesign::classic()).unwrap();
        for id in 0..20 {
            stack.offer(rec(id, 0.0), &mut rng);
        }
        let batch = stack.sample_replay(4, &mut rng);
        assert_eq!(batch.rehearsal.len() + batch.regularization.len(), 8);
        assert!(batch.uniform_fallback);
        assert_eq!(stack.stats().uniform_fallbacks, 1);
    }

    #[test]
    fn small_layer_contributes_everything_it_has() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut stack = PluralStack::single(16, CounterDesign::classic()).unwrap();
        for id in 0..3 {
            stack.offer(rec(id, 1.0), &mut rng);
        }
        let batch = stack.sample_replay(4, &mut rng);
        // Three records pooled; halves stay equal so one is left out.
        assert_eq!(batch.rehearsal.len(), 1);
        assert_eq!(batch.regularization.len(), 1);
    }

    #[test]
    fn weighted_draws_follow_priorities() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let records: Vec<Record> = (0..4).map(|i| rec(i, [0.1, 0.2, 0.3, 0.4][i as usize])).collect();
        let mut hits = [0u32; 4];
        let trials = 40_000;
        for _ in 0..trials {
            let (picked, _) = weighted_without_replacement(&records, 1, &mut rng);
            hits[picked[0]] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            let p = records[i].gamma_bar;
            let sd = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((h as f64 / trials as f64 - p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn json_snapshot_restores_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut stack = two_layers(0.2);
        for id in 0..40 {
            stack.offer(rec(id, 0.3 + (id % 5) as f64 * 0.1), &mut rng);
        }
        let json = stack.to_json();
        let restored = PluralStack::from_json(&json).unwrap();
        assert_eq!(restored.to_json(), json);
        assert_eq!(restored.layers()[1].offers(), stack.layers()[1].offers());
        assert_eq!(restored.nu(), stack.nu());
        assert!(PluralStack::from_json("{}").is_err());
    }
}
