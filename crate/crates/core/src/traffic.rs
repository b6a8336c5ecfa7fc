//! Poisson packet sources with a discrete packet-size distribution.
//!
//! Every (ONU, class) pair owns one source. Its generator is ChaCha8
//! seeded from the scenario seed, with the ChaCha stream number derived
//! from `(onu_id, class)`, so sources never share state and adding ONUs
//! leaves existing substreams untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, weighted::WeightedIndex};
use thiserror::Error;

use crate::packet::{OnuId, Packet, PacketId, ServiceClass};
use crate::time::{SimTime, NANOS_PER_SEC};

pub const MIN_PACKET_BYTES: u32 = 40;
pub const MAX_PACKET_BYTES: u32 = 1500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SizeDistributionError {
    #[error("no entries")]
    Empty,
    #[error("size {0} outside [40, 1500] bytes")]
    SizeOutOfRange(u32),
    #[error("weight {weight} for size {size} is not strictly positive")]
    NonPositiveWeight { size: u32, weight: f64 },
    #[error("weights sum to {0}, not 1")]
    WeightSum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeDistribution {
    entries: Vec<(u32, f64)>,
}

impl Default for SizeDistribution {
    fn default() -> Self {
        SizeDistribution { entries: vec![(40, 0.4), (552, 0.3), (1500, 0.3)] }
    }
}

impl SizeDistribution {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self, SizeDistributionError> {
        if entries.is_empty() {
            return Err(SizeDistributionError::Empty);
        }
        for &(size, weight) in &entries {
            if !(MIN_PACKET_BYTES..=MAX_PACKET_BYTES).contains(&size) {
                return Err(SizeDistributionError::SizeOutOfRange(size));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(SizeDistributionError::NonPositiveWeight { size, weight });
            }
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SizeDistributionError::WeightSum(sum));
        }
        Ok(SizeDistribution { entries })
    }

    /// Single-size distribution.
    pub fn fixed(size: u32) -> Result<Self, SizeDistributionError> {
        Self::new(vec![(size, 1.0)])
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn mean_bytes(&self) -> f64 {
        self.entries.iter().map(|&(s, w)| s as f64 * w).sum()
    }

    pub fn max_size(&self) -> u32 {
        self.entries.iter().map(|e| e.0).max().unwrap_or(0)
    }

    fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.entries.iter().map(|e| e.1)).expect("weights validated")
    }
}

/// Mean gap between packets for a source of `rate_bps`. `None` means the
/// source never fires.
pub fn mean_interarrival(rate_bps: f64, dist: &SizeDistribution) -> Option<SimTime> {
    if rate_bps.is_nan() || rate_bps <= 0.0 {
        return None;
    }
    let ns = dist.mean_bytes() * 8.0 * NANOS_PER_SEC as f64 / rate_bps;
    Some(SimTime::from_nanos(ns.round().max(1.0) as u64))
}

/// RNG stream for a (ONU, class) source.
pub fn source_stream(onu_id: OnuId, class: ServiceClass) -> u64 {
    ((onu_id as u64) << 2) | class.index() as u64
}

/// RNG stream reserved for ranging measurement error.
pub const RANGING_STREAM: u64 = u64::MAX;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Poisson packet source.
#[derive(Debug, Clone)]
pub struct SourceState {
    onu_id: OnuId,
    class: ServiceClass,
    rate_bps: f64,
    mean_gap_ns: Option<f64>,
    sizes: SizeDistribution,
    sampler: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    last_arrival: SimTime,
}

impl SourceState {
    /// A source whose first packet arrives one exponential gap after `start`.
    pub fn new(seed: u64, onu_id: OnuId, class: ServiceClass, rate_bps: f64, sizes: SizeDistribution, start: SimTime) -> Self {
        let mean_gap_ns = (rate_bps > 0.0).then(|| sizes.mean_bytes() * 8.0 * NANOS_PER_SEC as f64 / rate_bps);
        SourceState {
            onu_id,
            class,
            rate_bps,
            mean_gap_ns,
            sampler: sizes.sampler(),
            sizes,
            rng: substream(seed, source_stream(onu_id, class)),
            last_arrival: start,
        }
    }

    pub fn onu_id(&self) -> OnuId {
        self.onu_id
    }

    pub fn class(&self) -> ServiceClass {
        self.class
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    pub fn sizes(&self) -> &SizeDistribution {
        &self.sizes
    }

    /// Draw the next packet. Arrival times strictly increase.
    pub fn next_packet(&mut self, id: PacketId) -> Option<Packet> {
        let mean = self.mean_gap_ns?;
        let u: f64 = self.rng.random();
        let gap = (-mean * (1.0 - u).ln()).round().max(1.0);
        let gap = if gap >= u64::MAX as f64 { u64::MAX } else { gap as u64 };
        let arrival = self.last_arrival.checked_add(SimTime::from_nanos(gap)).ok()?;
        let size = self.sizes.entries()[self.sampler.sample(&mut self.rng)].0;
        self.last_arrival = arrival;
        Some(Packet::new(id, self.onu_id, self.class, size, arrival))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(src: &mut SourceState, n: usize) -> Vec<Packet> {
        (0..n).map(|i| src.next_packet(i as u64).unwrap()).collect()
    }

    #[test]
    fn interarrival_means() {
        let d = SizeDistribution::fixed(1500).unwrap();
        assert_eq!(mean_interarrival(1e6, &d), Some(SimTime::from_millis(12)));
        assert_eq!(mean_interarrival(0.0, &d), None);
        let d = SizeDistribution::new(vec![(40, 0.5), (1500, 0.5)]).unwrap();
        assert_eq!(d.mean_bytes(), 770.0);
        assert_eq!(mean_interarrival(6.16e6, &d), Some(SimTime::from_millis(1)));
    }

    #[test]
    fn zero_rate_source_is_silent() {
        let mut s = SourceState::new(7, 0, ServiceClass::Be, 0.0, SizeDistribution::default(), SimTime::ZERO);
        assert!(s.next_packet(0).is_none());
    }

    #[test]
    fn invalid_distributions() {
        assert_eq!(SizeDistribution::new(vec![]), Err(SizeDistributionError::Empty));
        assert!(matches!(SizeDistribution::new(vec![(39, 1.0)]), Err(SizeDistributionError::SizeOutOfRange(39))));
        assert!(matches!(SizeDistribution::new(vec![(1501, 1.0)]), Err(SizeDistributionError::SizeOutOfRange(1501))));
        assert!(matches!(
            SizeDistribution::new(vec![(40, 0.0), (552, 1.0)]),
            Err(SizeDistributionError::NonPositiveWeight { .. })
        ));
        assert!(matches!(SizeDistribution::new(vec![(40, 0.5)]), Err(SizeDistributionError::WeightSum(_))));
    }

    #[test]
    fn replay_is_identical() {
        let mut a = SourceState::new(42, 3, ServiceClass::Hp, 5e6, SizeDistribution::default(), SimTime::ZERO);
        let mut b = a.clone();
        assert_eq!(draw(&mut a, 1000), draw(&mut b, 1000));

        let mut c = SourceState::new(42, 3, ServiceClass::Hp, 5e6, SizeDistribution::default(), SimTime::ZERO);
        let mut d = SourceState::new(43, 3, ServiceClass::Hp, 5e6, SizeDistribution::default(), SimTime::ZERO);
        assert_ne!(draw(&mut c, 50), draw(&mut d, 50));
    }

    #[test]
    fn substreams_are_disjoint() {
        let mut hp = SourceState::new(42, 3, ServiceClass::Hp, 5e6, SizeDistribution::default(), SimTime::ZERO);
        let mut be = SourceState::new(42, 3, ServiceClass::Be, 5e6, SizeDistribution::default(), SimTime::ZERO);
        let mut other = SourceState::new(42, 4, ServiceClass::Hp, 5e6, SizeDistribution::default(), SimTime::ZERO);
        let a: Vec<_> = draw(&mut hp, 50).into_iter().map(|p| p.arrival_time).collect();
        let b: Vec<_> = draw(&mut be, 50).into_iter().map(|p| p.arrival_time).collect();
        let c: Vec<_> = draw(&mut other, 50).into_iter().map(|p| p.arrival_time).collect();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn arrivals_strictly_increase() {
        // Very high rate so most raw gaps would round to zero.
        let mut s = SourceState::new(1, 0, ServiceClass::Be, 1e13, SizeDistribution::default(), SimTime::ZERO);
        let pkts = draw(&mut s, 10_000);
        assert!(pkts.windows(2).all(|w| w[1].arrival_time > w[0].arrival_time));
    }

    #[test]
    fn interarrival_mean_converges() {
        let dist = SizeDistribution::default();
        let rate = 18.75e6;
        let expected = dist.mean_bytes() * 8.0 * 1e9 / rate;
        let mut s = SourceState::new(2024, 1, ServiceClass::Hp, rate, dist, SimTime::ZERO);
        let n = 100_000;
        let pkts = draw(&mut s, n);
        let mean = pkts.last().unwrap().arrival_time.as_nanos() as f64 / n as f64;
        assert!((mean / expected - 1.0).abs() < 0.03, "mean gap {mean} vs {expected}");

        // Offered bit-rate over the run.
        let bits: f64 = pkts.iter().map(|p| p.size_bytes as f64 * 8.0).sum();
        let secs = pkts.last().unwrap().arrival_time.as_secs_f64();
        assert!((bits / secs / rate - 1.0).abs() < 0.03);
    }

    #[test]
    fn size_frequencies_match_weights() {
        let dist = SizeDistribution::default();
        let mut s = SourceState::new(99, 0, ServiceClass::Be, 1e8, dist.clone(), SimTime::ZERO);
        let n = 100_000;
        let pkts = draw(&mut s, n);
        for &(size, w) in dist.entries() {
            let freq = pkts.iter().filter(|p| p.size_bytes == size).count() as f64 / n as f64;
            assert!((freq - w).abs() < 0.02, "size {size}: {freq} vs {w}");
        }
    }
}
