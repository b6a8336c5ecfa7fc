//! Delay and throughput statistics.
//!
//! Delay moments are streamed (count, mean, M2) so memory stays proportional
//! to the number of groups. Packets are grouped by the queue they were
//! served from: demoted and promoted packets both count as BE.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{SchedulerKind, ValidatedConfig};
use crate::olt::FrameSchedule;
use crate::onu::Admission;
use crate::packet::{OnuId, Packet, PacketId, ServiceClass};
use crate::time::SimTime;

/// Access delay bound reported alongside the HP statistics.
pub const HP_DELAY_BOUND: SimTime = SimTime::from_millis(5);

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("packet {0} recorded without a departure time")]
    MissingDeparture(PacketId),
    #[error("packet {id} departs at {departure} before its arrival at {arrival}")]
    NegativeDelay { id: PacketId, arrival: SimTime, departure: SimTime },
    #[error("no summaries to write")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelaySample {
    pub class: ServiceClass,
    pub effective_class: ServiceClass,
    pub onu_id: OnuId,
    pub delay: SimTime,
}

impl DelaySample {
    pub fn from_packet(p: &Packet) -> Result<Self, MetricsError> {
        let departure = p.departure_time.ok_or(MetricsError::MissingDeparture(p.id))?;
        let delay = departure.checked_sub(p.arrival_time).map_err(|_| MetricsError::NegativeDelay {
            id: p.id,
            arrival: p.arrival_time,
            departure,
        })?;
        Ok(DelaySample { class: p.class, effective_class: p.effective_class, onu_id: p.onu_id, delay })
    }
}

/// Welford running moments over nanosecond values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
    max: u64,
}

impl Moments {
    pub fn push(&mut self, x: u64) {
        self.count += 1;
        let xf = x as f64;
        let d = xf - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (xf - self.mean);
        self.max = self.max.max(x);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.m2 / self.count as f64).max(0.0).sqrt())
    }

    pub fn max(&self) -> Option<u64> {
        (self.count > 0).then_some(self.max)
    }
}

/// Delay statistics of one group, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: u64,
    pub mean_delay_us: Option<f64>,
    pub pdv_us: Option<f64>,
    pub max_delay_us: Option<f64>,
}

impl From<&Moments> for DelayStats {
    fn from(m: &Moments) -> Self {
        DelayStats {
            count: m.count(),
            mean_delay_us: m.mean().map(|ns| ns / 1e3),
            pdv_us: m.std_dev().map(|ns| ns / 1e3),
            max_delay_us: m.max().map(|ns| ns as f64 / 1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ServiceClass,
    #[serde(flatten)]
    pub delay: DelayStats,
    /// Counted by original class over the whole run.
    pub generated_bytes: u64,
    pub generated_packets: u64,
    pub delivered_bytes: u64,
    pub delivered_packets: u64,
    pub dropped_bytes: u64,
    pub dropped_packets: u64,
    /// Samples above the 5 ms access delay bound.
    pub over_bound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnuClassSummary {
    pub onu_id: OnuId,
    pub class: ServiceClass,
    #[serde(flatten)]
    pub delay: DelayStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scheduler: SchedulerKind,
    pub n_onus: u32,
    pub guard_time_ns: u64,
    pub frame_duration_ns: u64,
    pub sim_duration_ns: u64,
    pub offered_load: f64,
    pub hp_fraction: f64,
    /// Seed given by the user; equal to `point_seed` for single runs.
    pub seed: u64,
    /// Seed the run actually used.
    pub point_seed: u64,
    pub classes: Vec<ClassSummary>,
    pub per_onu: Vec<OnuClassSummary>,
    pub offered_be_bytes: u64,
    pub delivered_be_bytes: u64,
    pub be_throughput_ratio: Option<f64>,
    pub demoted_bytes: u64,
    pub demoted_packets: u64,
    pub promoted_bytes: u64,
    pub promoted_packets: u64,
    pub guard_overhead_fraction: f64,
    pub frames_simulated: u64,
    pub quiesced_frames: u64,
}

impl MetricsSummary {
    pub fn class(&self, class: ServiceClass) -> &ClassSummary {
        &self.classes[class.index()]
    }

    /// `1 - be_throughput_ratio`.
    pub fn be_penalty(&self) -> Option<f64> {
        self.be_throughput_ratio.map(|r| 1.0 - r)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Per-run accumulator, owned by the event loop.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    warmup_end: SimTime,
    classes: [Moments; 2],
    per_onu: BTreeMap<OnuId, [Moments; 2]>,
    generated: [(u64, u64); 2],
    delivered: [(u64, u64); 2],
    dropped: [(u64, u64); 2],
    over_bound: [u64; 2],
    offered_be_bytes: u64,
    delivered_be_bytes: u64,
    demoted: (u64, u64),
    promoted: (u64, u64),
    guard_time_total: u128,
    frames: u64,
    quiesced_frames: u64,
}

impl MetricsCollector {
    pub fn new(warmup_end: SimTime) -> Self {
        MetricsCollector {
            warmup_end,
            classes: Default::default(),
            per_onu: BTreeMap::new(),
            generated: Default::default(),
            delivered: Default::default(),
            dropped: Default::default(),
            over_bound: [0; 2],
            offered_be_bytes: 0,
            delivered_be_bytes: 0,
            demoted: (0, 0),
            promoted: (0, 0),
            guard_time_total: 0,
            frames: 0,
            quiesced_frames: 0,
        }
    }

    /// BE-queue traffic leaving inside the measurement window.
    fn counts_for_throughput(&self, p: &Packet) -> bool {
        p.departure_time.is_some_and(|d| d >= self.warmup_end) && (p.class == ServiceClass::Be || p.demoted())
    }

    /// Arrival bookkeeping, after admission decided the packet's fate.
    pub fn note_arrival(&mut self, p: &Packet, outcome: Admission) {
        let size = p.size_bytes as u64;
        let c = p.class.index();
        self.generated[c].0 += size;
        self.generated[c].1 += 1;
        match outcome {
            Admission::Dropped => {
                self.dropped[c].0 += size;
                self.dropped[c].1 += 1;
            }
            Admission::Demoted => {
                self.demoted.0 += size;
                self.demoted.1 += 1;
            }
            Admission::Admitted => {}
        }
        let offered = p.arrival_time >= self.warmup_end
            && (p.class == ServiceClass::Be || outcome == Admission::Demoted);
        if offered {
            self.offered_be_bytes += size;
        }
    }

    /// A packet whose transmission completed.
    pub fn record(&mut self, p: &Packet) -> Result<(), MetricsError> {
        let sample = DelaySample::from_packet(p)?;
        let size = p.size_bytes as u64;
        let c = p.class.index();
        self.delivered[c].0 += size;
        self.delivered[c].1 += 1;
        if p.promoted {
            self.promoted.0 += size;
            self.promoted.1 += 1;
        }
        if self.counts_for_throughput(p) {
            self.delivered_be_bytes += size;
        }
        if p.departure_time.expect("checked") < self.warmup_end {
            return Ok(());
        }
        let g = p.queue_class().index();
        let ns = sample.delay.as_nanos();
        self.classes[g].push(ns);
        self.per_onu.entry(p.onu_id).or_default()[g].push(ns);
        if sample.delay > HP_DELAY_BOUND {
            self.over_bound[g] += 1;
        }
        Ok(())
    }

    pub fn note_frame(&mut self, schedule: &FrameSchedule, guard: SimTime) {
        self.frames += 1;
        if schedule.quiesced {
            self.quiesced_frames += 1;
        }
        self.guard_time_total += schedule.total_guard_count as u128 * guard.as_nanos() as u128;
    }

    pub fn class_moments(&self, class: ServiceClass) -> &Moments {
        &self.classes[class.index()]
    }

    pub fn delivered_bytes(&self, class: ServiceClass) -> u64 {
        self.delivered[class.index()].0
    }

    pub fn finalize(&self, cfg: &ValidatedConfig) -> MetricsSummary {
        let s = cfg.scenario();
        let classes = ServiceClass::ALL
            .iter()
            .map(|&class| {
                let i = class.index();
                ClassSummary {
                    class,
                    delay: DelayStats::from(&self.classes[i]),
                    generated_bytes: self.generated[i].0,
                    generated_packets: self.generated[i].1,
                    delivered_bytes: self.delivered[i].0,
                    delivered_packets: self.delivered[i].1,
                    dropped_bytes: self.dropped[i].0,
                    dropped_packets: self.dropped[i].1,
                    over_bound: self.over_bound[i],
                }
            })
            .collect();
        let per_onu = self
            .per_onu
            .iter()
            .flat_map(|(&onu_id, m)| {
                ServiceClass::ALL.iter().map(move |&class| OnuClassSummary {
                    onu_id,
                    class,
                    delay: DelayStats::from(&m[class.index()]),
                })
            })
            .collect();
        let total_time = self.frames as u128 * cfg.frame_duration().as_nanos() as u128;
        MetricsSummary {
            scheduler: cfg.scheduler(),
            n_onus: cfg.n_onus(),
            guard_time_ns: cfg.guard_time().as_nanos(),
            frame_duration_ns: cfg.frame_duration().as_nanos(),
            sim_duration_ns: s.sim_duration.as_nanos(),
            offered_load: s.offered_load,
            hp_fraction: s.hp_fraction,
            seed: s.seed,
            point_seed: s.seed,
            classes,
            per_onu,
            offered_be_bytes: self.offered_be_bytes,
            delivered_be_bytes: self.delivered_be_bytes,
            be_throughput_ratio: (self.offered_be_bytes > 0)
                .then(|| (self.delivered_be_bytes as f64 / self.offered_be_bytes as f64).min(1.0)),
            demoted_bytes: self.demoted.0,
            demoted_packets: self.demoted.1,
            promoted_bytes: self.promoted.0,
            promoted_packets: self.promoted.1,
            guard_overhead_fraction: if total_time == 0 {
                0.0
            } else {
                self.guard_time_total as f64 / total_time as f64
            },
            frames_simulated: self.frames,
            quiesced_frames: self.quiesced_frames,
        }
    }
}

/// One CSV row: a (scenario, class) pair. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheduler: SchedulerKind,
    pub n_onus: u32,
    pub guard_time_ns: u64,
    pub offered_load: f64,
    pub seed: u64,
    pub point_seed: u64,
    pub class: ServiceClass,
    pub count: u64,
    pub mean_delay_us: Option<f64>,
    pub pdv_us: Option<f64>,
    pub max_delay_us: Option<f64>,
    pub be_throughput_ratio: Option<f64>,
    pub be_penalty: Option<f64>,
    pub hp_fraction: f64,
    pub frame_duration_ns: u64,
    pub sim_duration_ns: u64,
    pub generated_bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    pub dropped_packets: u64,
    pub over_5ms: u64,
    pub offered_be_bytes: u64,
    pub delivered_be_bytes: u64,
    pub demoted_bytes: u64,
    pub promoted_bytes: u64,
    pub guard_overhead_fraction: f64,
    pub frames: u64,
    pub quiesced_frames: u64,
}

pub const CSV_COLUMNS: &[&str] = &[
    "scheduler",
    "n_onus",
    "guard_time_ns",
    "offered_load",
    "seed",
    "point_seed",
    "class",
    "count",
    "mean_delay_us",
    "pdv_us",
    "max_delay_us",
    "be_throughput_ratio",
    "be_penalty",
    "hp_fraction",
    "frame_duration_ns",
    "sim_duration_ns",
    "generated_bytes",
    "delivered_bytes",
    "dropped_bytes",
    "dropped_packets",
    "over_5ms",
    "offered_be_bytes",
    "delivered_be_bytes",
    "demoted_bytes",
    "promoted_bytes",
    "guard_overhead_fraction",
    "frames",
    "quiesced_frames",
];

pub fn csv_rows(s: &MetricsSummary) -> Vec<CsvRow> {
    s.classes
        .iter()
        .map(|c| CsvRow {
            scheduler: s.scheduler,
            n_onus: s.n_onus,
            guard_time_ns: s.guard_time_ns,
            offered_load: s.offered_load,
            seed: s.seed,
            point_seed: s.point_seed,
            class: c.class,
            count: c.delay.count,
            mean_delay_us: c.delay.mean_delay_us,
            pdv_us: c.delay.pdv_us,
            max_delay_us: c.delay.max_delay_us,
            be_throughput_ratio: s.be_throughput_ratio,
            be_penalty: s.be_penalty(),
            hp_fraction: s.hp_fraction,
            frame_duration_ns: s.frame_duration_ns,
            sim_duration_ns: s.sim_duration_ns,
            generated_bytes: c.generated_bytes,
            delivered_bytes: c.delivered_bytes,
            dropped_bytes: c.dropped_bytes,
            dropped_packets: c.dropped_packets,
            over_5ms: c.over_bound,
            offered_be_bytes: s.offered_be_bytes,
            delivered_be_bytes: s.delivered_be_bytes,
            demoted_bytes: s.demoted_bytes,
            promoted_bytes: s.promoted_bytes,
            guard_overhead_fraction: s.guard_overhead_fraction,
            frames: s.frames_simulated,
            quiesced_frames: s.quiesced_frames,
        })
        .collect()
}

pub fn write_csv_to<W: std::io::Write>(summaries: &[MetricsSummary], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for s in summaries {
        for row in csv_rows(s) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(summaries: &[MetricsSummary], path: &Path) -> Result<(), MetricsError> {
    if summaries.is_empty() {
        return Err(MetricsError::Empty);
    }
    let file = std::fs::File::create(path).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })?;
    write_csv_to(summaries, std::io::BufWriter::new(file))
        .map_err(|source| MetricsError::Csv { path: path.display().to_string(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, MetricsError> {
    let mut r = csv::Reader::from_path(path).map_err(|source| MetricsError::Csv { path: path.display().to_string(), source })?;
    r.deserialize()
        .collect::<Result<Vec<CsvRow>, _>>()
        .map_err(|source| MetricsError::Csv { path: path.display().to_string(), source })
}

/// Human-readable run summary.
pub fn render_summary(s: &MetricsSummary) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{} onus={} load={} guard={}ns seed={} frames={}\n",
        s.scheduler, s.n_onus, s.offered_load, s.guard_time_ns, s.point_seed, s.frames_simulated
    );
    for c in &s.classes {
        out += &format!(
            "  {:<2} n={:<8} mean={}us pdv={}us max={}us dropped={}B\n",
            c.class.as_str(),
            c.delay.count,
            fmt(c.delay.mean_delay_us),
            fmt(c.delay.pdv_us),
            fmt(c.delay.max_delay_us),
            c.dropped_bytes
        );
    }
    out += &format!(
        "  BE throughput ratio={} demoted={}B promoted={}B guard overhead={:.4}\n",
        s.be_throughput_ratio.map(|r| format!("{r:.5}")).unwrap_or_else(|| "-".into()),
        s.demoted_bytes,
        s.promoted_bytes,
        s.guard_overhead_fraction
    );
    out
}
