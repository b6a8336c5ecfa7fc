//! Event loop binding sources, ONUs, the OLT and the upstream channel.
//!
//! Slot offsets are OLT receive times relative to the frame start; every
//! ranged ONU transmits early by its ranging offset, so in the equalized
//! timeline used here a burst scheduled at `t` is received at `t` plus the
//! ONU's residual ranging error. Packet departure times are taken on the
//! same timeline, which keeps the constant per-ONU propagation out of the
//! delay.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{SchedulerKind, ValidatedConfig};
use crate::metrics::{MetricsCollector, MetricsError, MetricsSummary};
use crate::olt::{FrameSchedule, GrantRequest, Olt, OltError, RangingError, RangingPhase, ReplyWindow, Slot};
use crate::onu::{IngressMeter, OnuError, OnuMac};
use crate::packet::{OnuId, Packet, PacketId, ServiceClass};
use crate::time::SimTime;
use crate::traffic::{substream, SourceState, RANGING_STREAM};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("collision at the OLT receiver: {first} and {second} {detail}")]
    Collision { first: String, second: String, detail: String },
    #[error("event at {event} is earlier than the clock {now}")]
    PastEvent { event: SimTime, now: SimTime },
    #[error("event queue exhausted at {0} before the end of the run")]
    Exhausted(SimTime),
    #[error("grant reply for frame {frame} delivered at {delivered}, after its first slot at {first_slot}")]
    Alignment { frame: u64, delivered: SimTime, first_slot: SimTime },
    #[error("conservation violated for ONU {onu}: generated {generated} != transmitted {transmitted} + queued {queued} + dropped {dropped}")]
    Conservation { onu: OnuId, generated: u64, transmitted: u64, queued: u64, dropped: u64 },
    #[error("simulation already finished")]
    Finished,
    #[error(transparent)]
    Olt(#[from] OltError),
    #[error(transparent)]
    Onu(#[from] OnuError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("trace output: {0}")]
    Trace(#[from] std::io::Error),
}

/// Event kinds in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    FrameStart,
    SlotStart,
    GrantTransmission,
    PacketArrival,
    ReportDelivery,
    RangingToken,
    RangingReply,
    SimEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FrameStart => "FrameStart",
            EventKind::SlotStart => "SlotStart",
            EventKind::GrantTransmission => "GrantTransmission",
            EventKind::PacketArrival => "PacketArrival",
            EventKind::ReportDelivery => "ReportDelivery",
            EventKind::RangingToken => "RangingToken",
            EventKind::RangingReply => "RangingReply",
            EventKind::SimEnd => "SimEnd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Steady,
    Dynamic,
    Mixed,
}

impl SlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotKind::Steady => "steady",
            SlotKind::Dynamic => "dynamic",
            SlotKind::Mixed => "ss",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Payload {
    Frame { index: u64 },
    Slot { frame: u64, frame_start: SimTime, slot: Slot, kind: SlotKind },
    Arrival { source: Option<usize>, packet: Packet },
    Report(GrantRequest),
    Token { frame: u64 },
    Reply { onu_id: OnuId },
    End,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    /// Secondary key inside a kind; the source index for arrivals so that
    /// simultaneous arrivals keep a fixed order whatever else is queued.
    pub rank: u64,
    pub sequence: u64,
    pub payload: Payload,
}

impl Event {
    fn key(&self) -> (SimTime, EventKind, u64, u64) {
        (self.time, self.kind, self.rank, self.sequence)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    sequence: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, kind: EventKind, rank: u64, payload: Payload) {
        self.sequence += 1;
        self.heap.push(Reverse(Event { time, kind, rank, sequence: self.sequence, payload }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Burst {
    end: i64,
    onu_id: OnuId,
    label: String,
}

/// Upstream receiver occupancy, for the exclusivity and guard checks.
#[derive(Debug, Clone)]
pub struct Channel {
    min_separation: i64,
    bursts: BTreeMap<i64, Burst>,
    horizon: i64,
}

impl Channel {
    pub fn new(min_separation: SimTime, horizon: SimTime) -> Self {
        Channel { min_separation: min_separation.as_nanos() as i64, bursts: BTreeMap::new(), horizon: horizon.as_nanos() as i64 }
    }

    /// Register a burst received over `[start, end)`.
    pub fn receive(&mut self, onu_id: OnuId, start: i64, end: i64, label: String) -> Result<(), SimError> {
        let conflict = |other: &Burst, other_start: i64| -> Option<String> {
            let (a0, a1, b0, b1) = if other_start <= start {
                (other_start, other.end, start, end)
            } else {
                (start, end, other_start, other.end)
            };
            let gap = b0 - a1;
            if gap < 0 && a0 < b1 {
                Some(format!("overlap by {} ns", -gap))
            } else if other.onu_id != onu_id && gap < self.min_separation {
                Some(format!("separated by {gap} ns < {} ns", self.min_separation))
            } else {
                None
            }
        };
        let before = self.bursts.range(..=start).next_back();
        let after = self.bursts.range(start + 1..).next();
        for (&s, b) in before.into_iter().chain(after) {
            if let Some(detail) = conflict(b, s) {
                return Err(SimError::Collision { first: b.label.clone(), second: label, detail });
            }
        }
        self.bursts.insert(start, Burst { end, onu_id, label });
        let cutoff = start - self.horizon;
        while let Some((&s, _)) = self.bursts.first_key_value() {
            if s >= cutoff {
                break;
            }
            self.bursts.pop_first();
        }
        Ok(())
    }
}

/// Schedule of one frame plus the fairness counters after allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleRecord {
    pub schedule: FrameSchedule,
    pub counters: Vec<(OnuId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangingRecord {
    pub frame: u64,
    pub onu_id: OnuId,
    pub token: SimTime,
    pub window: ReplyWindow,
    pub reply_arrival: SimTime,
    /// Measured offset, or the failure.
    pub result: Result<SimTime, RangingError>,
}

struct Joiner {
    onu_id: OnuId,
    time: SimTime,
    propagation: SimTime,
}

#[derive(Default)]
struct Trace {
    hasher: Option<Sha256>,
    sink: Option<Box<dyn Write + Send>>,
    lines: Option<Vec<String>>,
}

impl Trace {
    fn enabled(&self) -> bool {
        self.hasher.is_some()
    }

    fn emit(&mut self, time: SimTime, kind: &str, onu: Option<OnuId>, detail: &str) -> std::io::Result<()> {
        let Some(h) = self.hasher.as_mut() else { return Ok(()) };
        let onu = onu.map(|o| o.to_string()).unwrap_or_else(|| "-".into());
        let line = format!("{},{},{},{}", time.as_nanos(), kind, onu, detail);
        h.update(line.as_bytes());
        h.update(b"\n");
        if let Some(w) = self.sink.as_mut() {
            writeln!(w, "{line}")?;
        }
        if let Some(v) = self.lines.as_mut() {
            v.push(line);
        }
        Ok(())
    }
}

/// Outcome of processing one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Continue(SimTime),
    Done,
}

pub struct Simulation {
    cfg: ValidatedConfig,
    olt: Olt,
    onus: Vec<OnuMac>,
    /// Residual ranging error of each ONU as seen at the receiver.
    skew: Vec<i64>,
    sources: Vec<SourceState>,
    joiners: Vec<Joiner>,
    queue: EventQueue,
    channel: Channel,
    metrics: MetricsCollector,
    ranging_rng: ChaCha8Rng,
    now: SimTime,
    next_packet_id: PacketId,
    next_injected: u64,
    started: bool,
    finished: bool,
    schedule_log: Option<Vec<ScheduleRecord>>,
    ranging_log: Vec<RangingRecord>,
    trace: Trace,
    events_processed: u64,
}

impl Simulation {
    pub fn new(cfg: &ValidatedConfig) -> Self {
        let cfg = cfg.clone();
        let s = cfg.scenario();
        let reordering = cfg.scheduler() == SchedulerKind::Hssr;
        let mut onus = Vec::new();
        let mut joiners = Vec::new();
        let meter = || IngressMeter::new(cfg.subscribed_bytes_per_frame(), cfg.frame_duration(), SimTime::ZERO);
        let mac = |id: OnuId, km: f64| {
            OnuMac::new(
                id,
                km,
                meter(),
                cfg.network().queue_capacity_bytes,
                cfg.report_overhead_bytes(),
                cfg.lookahead(),
                reordering,
            )
        };
        for id in 0..cfg.n_onus() {
            let mut onu = mac(id, cfg.distances_km()[id as usize]);
            onu.set_ranging_offset(cfg.propagation(id) + cfg.propagation(id));
            onus.push(onu);
        }
        for (k, join) in s.joins.iter().enumerate() {
            let id = cfg.n_onus() + k as OnuId;
            onus.push(mac(id, join.distance_km));
            joiners.push(Joiner { onu_id: id, time: join.time, propagation: cfg.propagation_for_distance(join.distance_km) });
        }
        let mut sources = Vec::new();
        for onu in &onus {
            let start = joiners.iter().find(|j| j.onu_id == onu.onu_id()).map(|j| j.time).unwrap_or(SimTime::ZERO);
            for class in ServiceClass::ALL {
                let rate = match class {
                    ServiceClass::Hp => cfg.hp_rate_bps(),
                    ServiceClass::Be => cfg.be_rate_bps(),
                };
                sources.push(SourceState::new(s.seed, onu.onu_id(), class, rate, cfg.sizes().clone(), start));
            }
        }
        let channel = Channel::new(cfg.min_burst_separation(), cfg.frame_duration() + cfg.frame_duration());
        Simulation {
            olt: Olt::new(&cfg),
            skew: vec![0; onus.len()],
            onus,
            sources,
            joiners,
            queue: EventQueue::default(),
            channel,
            metrics: MetricsCollector::new(cfg.warmup_end()),
            ranging_rng: substream(s.seed, RANGING_STREAM),
            now: SimTime::ZERO,
            next_packet_id: 0,
            next_injected: 0,
            started: false,
            finished: false,
            schedule_log: None,
            ranging_log: Vec::new(),
            trace: Trace::default(),
            events_processed: 0,
            cfg,
        }
    }

    /// Keep every frame's schedule and counters.
    pub fn record_schedules(&mut self) {
        self.schedule_log.get_or_insert_with(Vec::new);
    }

    /// Write trace lines to `sink` (and hash them).
    pub fn trace_to(&mut self, sink: Box<dyn Write + Send>) {
        self.trace.hasher.get_or_insert_with(Sha256::new);
        self.trace.sink = Some(sink);
    }

    /// Keep trace lines in memory (and hash them).
    pub fn capture_trace(&mut self) {
        self.trace.hasher.get_or_insert_with(Sha256::new);
        self.trace.lines.get_or_insert_with(Vec::new);
    }

    /// Hash only.
    pub fn hash_trace(&mut self) {
        self.trace.hasher.get_or_insert_with(Sha256::new);
    }

    pub fn trace_lines(&self) -> Option<&[String]> {
        self.trace.lines.as_deref()
    }

    pub fn trace_hash(&self) -> Option<String> {
        self.trace.hasher.as_ref().map(|h| {
            h.clone().finalize().iter().map(|b| format!("{b:02x}")).collect()
        })
    }

    pub fn config(&self) -> &ValidatedConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn onus(&self) -> &[OnuMac] {
        &self.onus
    }

    pub fn olt(&self) -> &Olt {
        &self.olt
    }

    pub fn metrics(&self) -> &MetricsCollector {
        &self.metrics
    }

    pub fn schedule_log(&self) -> Option<&[ScheduleRecord]> {
        self.schedule_log.as_deref()
    }

    pub fn ranging_log(&self) -> &[RangingRecord] {
        &self.ranging_log
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    /// Queue packets at time zero, before the run starts.
    pub fn preload(&mut self, onu_id: OnuId, class: ServiceClass, sizes: &[u32]) {
        assert!(!self.started, "preload after start");
        for &size in sizes {
            let p = Packet::new(self.next_packet_id, onu_id, class, size, SimTime::ZERO);
            self.next_packet_id += 1;
            let outcome = self.onus[onu_id as usize].admit(p.clone(), SimTime::ZERO);
            self.metrics.note_arrival(&p, outcome);
        }
    }

    /// Schedule one extra packet arrival outside the sources.
    pub fn inject(&mut self, onu_id: OnuId, class: ServiceClass, size_bytes: u32, at: SimTime) -> PacketId {
        assert!(at >= self.now, "injection in the past");
        let id = u64::MAX - self.next_injected;
        self.next_injected += 1;
        let packet = Packet::new(id, onu_id, class, size_bytes, at);
        self.queue.push(at, EventKind::PacketArrival, u64::MAX, Payload::Arrival { source: None, packet });
        id
    }

    fn start(&mut self) {
        self.started = true;
        let end = self.cfg.sim_end();
        for index in 0..self.cfg.n_frames() {
            let t = SimTime::from_nanos(index * self.cfg.frame_duration().as_nanos());
            self.queue.push(t, EventKind::FrameStart, 0, Payload::Frame { index });
        }
        self.queue.push(end, EventKind::SimEnd, 0, Payload::End);
        for source in 0..self.sources.len() {
            self.push_next_arrival(source);
        }
    }

    fn push_next_arrival(&mut self, source: usize) {
        if let Some(packet) = self.sources[source].next_packet(self.next_packet_id) {
            if packet.arrival_time < self.cfg.sim_end() {
                self.next_packet_id += 1;
                self.queue.push(packet.arrival_time, EventKind::PacketArrival, source as u64, Payload::Arrival { source: Some(source), packet });
            }
        }
    }

    /// Process one event.
    pub fn step(&mut self) -> Result<Step, SimError> {
        if self.finished {
            return Err(SimError::Finished);
        }
        if !self.started {
            self.start();
        }
        let event = self.queue.pop().ok_or(SimError::Exhausted(self.now))?;
        if event.time < self.now {
            return Err(SimError::PastEvent { event: event.time, now: self.now });
        }
        self.now = event.time;
        self.events_processed += 1;
        match event.payload {
            Payload::Frame { index } => self.on_frame_start(index)?,
            Payload::Slot { frame, frame_start, slot, kind } => self.on_slot(frame, frame_start, slot, kind)?,
            Payload::Arrival { source, packet } => self.on_arrival(source, packet)?,
            Payload::Report(req) => {
                self.trace.emit(self.now, "ReportDelivery", Some(req.onu_id), &format!("hp={};be={}", req.hp_bytes, req.be_bytes))?;
                self.olt.register_report(req)?;
            }
            Payload::Token { frame } => self.on_token(frame)?,
            Payload::Reply { onu_id } => self.on_reply(onu_id)?,
            Payload::End => {
                self.trace.emit(self.now, "SimEnd", None, "")?;
                self.finished = true;
                self.check_conservation()?;
                if let Some(w) = self.trace.sink.as_mut() {
                    w.flush()?;
                }
                return Ok(Step::Done);
            }
        }
        Ok(Step::Continue(self.now))
    }

    pub fn run(mut self) -> Result<MetricsSummary, SimError> {
        self.run_in_place()
    }

    /// Run to the end, keeping the simulation for inspection.
    pub fn run_in_place(&mut self) -> Result<MetricsSummary, SimError> {
        while self.step()? != Step::Done {}
        Ok(self.summary())
    }

    pub fn summary(&self) -> MetricsSummary {
        self.metrics.finalize(&self.cfg)
    }

    fn on_frame_start(&mut self, index: u64) -> Result<(), SimError> {
        let now = self.now;
        self.olt.ranging_mut().expire(now);
        let ranging = self.cfg.network().ranging_enabled && self.olt.ranging().is_due(now);
        let (schedule, plan) = if ranging {
            let (schedule, plan) = self.olt.schedule_ranging(&self.cfg, index, now)?;
            (schedule, Some(plan))
        } else {
            (self.olt.allocate(&self.cfg, index)?, None)
        };
        self.trace.emit(now, "FrameStart", None, &format!("frame={index};quiesced={}", schedule.quiesced as u8))?;
        self.metrics.note_frame(&schedule, self.cfg.guard_time());

        if let Some(first) = schedule.all_slots().first() {
            let first_slot = now + first.offset;
            if first_slot <= now {
                return Err(SimError::Alignment { frame: index, delivered: now, first_slot });
            }
        }
        for slot in &schedule.steady_slots {
            let meter = self.onus[slot.onu_id as usize].meter_mut();
            if meter.phase() != slot.offset {
                meter.set_phase(slot.offset);
            }
            self.push_slot(index, now, *slot, SlotKind::Steady, EventKind::SlotStart);
        }
        for slot in &schedule.ss_slots {
            self.push_slot(index, now, *slot, SlotKind::Mixed, EventKind::SlotStart);
        }
        for slot in &schedule.dynamic_grants {
            self.push_slot(index, now, *slot, SlotKind::Dynamic, EventKind::GrantTransmission);
        }
        if let Some(plan) = plan {
            self.queue.push(plan.token_emit_time, EventKind::RangingToken, 0, Payload::Token { frame: index });
        }
        if let Some(log) = self.schedule_log.as_mut() {
            let counters = self.olt.table().ranged().map(|r| (r.onu_id, r.counter)).collect();
            log.push(ScheduleRecord { schedule, counters });
        }
        Ok(())
    }

    fn push_slot(&mut self, frame: u64, frame_start: SimTime, slot: Slot, kind: SlotKind, event: EventKind) {
        self.queue.push(frame_start + slot.offset, event, slot.onu_id as u64, Payload::Slot { frame, frame_start, slot, kind });
    }

    fn on_slot(&mut self, frame: u64, frame_start: SimTime, slot: Slot, kind: SlotKind) -> Result<(), SimError> {
        let start = self.now;
        let cfg = &self.cfg;
        let onu = &mut self.onus[slot.onu_id as usize];
        let (report, packets) = match kind {
            SlotKind::Steady => (Some(onu.build_report(frame)), onu.fill_steady_slot(slot.length_bytes)?),
            SlotKind::Mixed => {
                let report = onu.build_report(frame);
                let data = slot.length_bytes.saturating_sub(cfg.report_overhead_bytes());
                (Some(report), onu.fill_mixed_slot(data))
            }
            SlotKind::Dynamic => (None, onu.transmit_grant(&slot, frame)?),
        };
        debug_assert_eq!(start, frame_start + slot.offset);

        let mut cumulative = if report.is_some() { cfg.report_overhead_bytes() } else { 0 };
        let mut sent = Vec::with_capacity(packets.len());
        for mut p in packets {
            let tx_start = start + cfg.duration_of(cumulative);
            cumulative += p.size_bytes as u64;
            let end = start + cfg.duration_of(cumulative);
            p.departure_time = Some(end);
            sent.push((tx_start, p));
        }
        debug_assert!(cumulative <= slot.length_bytes);

        if cumulative > 0 {
            let skew = self.skew[slot.onu_id as usize];
            let rx_start = start.as_nanos() as i64 + skew;
            let rx_end = (start + cfg.duration_of(cumulative)).as_nanos() as i64 + skew;
            let label = format!("ONU {} {} burst of frame {} at {}ns", slot.onu_id, kind.as_str(), frame, rx_start);
            self.channel.receive(slot.onu_id, rx_start, rx_end, label)?;
        }
        if let Some(req) = report {
            self.queue.push(start + self.cfg.report_duration(), EventKind::ReportDelivery, slot.onu_id as u64, Payload::Report(req));
        }
        for (tx_start, p) in &sent {
            if self.trace.enabled() {
                let detail = format!(
                    "frame={frame};slot={};packet={};class={};eff={};promoted={};size={};arrival={};end={}",
                    kind.as_str(),
                    p.id,
                    p.class,
                    p.effective_class,
                    p.promoted as u8,
                    p.size_bytes,
                    p.arrival_time.as_nanos(),
                    p.departure_time.expect("stamped").as_nanos()
                );
                self.trace.emit(*tx_start, "Tx", Some(p.onu_id), &detail)?;
            }
            self.metrics.record(p)?;
        }
        Ok(())
    }

    fn on_arrival(&mut self, source: Option<usize>, packet: Packet) -> Result<(), SimError> {
        let onu = &mut self.onus[packet.onu_id as usize];
        let outcome = onu.admit(packet.clone(), self.now);
        self.metrics.note_arrival(&packet, outcome);
        if let Some(source) = source {
            self.push_next_arrival(source);
        }
        Ok(())
    }

    fn on_token(&mut self, frame: u64) -> Result<(), SimError> {
        let now = self.now;
        self.trace.emit(now, "RangingToken", None, &format!("frame={frame}"))?;
        let waiting = self
            .joiners
            .iter()
            .find(|j| j.time <= now && !self.onus[j.onu_id as usize].is_ranged());
        if let Some(j) = waiting {
            let reply = now + j.propagation + j.propagation + self.cfg.network().reply_turnaround;
            self.queue.push(reply, EventKind::RangingReply, j.onu_id as u64, Payload::Reply { onu_id: j.onu_id });
        }
        Ok(())
    }

    fn on_reply(&mut self, onu_id: OnuId) -> Result<(), SimError> {
        let now = self.now;
        let (token, window) = match self.olt.ranging().phase() {
            RangingPhase::TokenSent { sent_at, window } => (sent_at, window),
            _ => return Err(RangingError::NoToken.into()).map_err(|e: OltError| e.into()),
        };
        let rx_start = now.as_nanos() as i64;
        let rx_end = (now + self.cfg.reply_duration()).as_nanos() as i64;
        self.channel.receive(onu_id, rx_start, rx_end, format!("ranging reply of ONU {onu_id} at {rx_start}ns"))?;

        let frame = token.as_nanos() / self.cfg.frame_duration().as_nanos();
        let result = self.olt.ranging_mut().complete_ranging(&self.cfg, onu_id, now);
        let record_result = match result {
            Ok(rtt) => {
                let bound = self.cfg.ranging_error_bound().as_nanos() as i64;
                let error = if bound > 0 { self.ranging_rng.random_range(-bound..=bound) } else { 0 };
                let offset = SimTime::from_nanos((rtt.as_nanos() as i64 + error).max(0) as u64);
                self.olt.add_ranged_onu(&self.cfg, onu_id, offset)?;
                self.onus[onu_id as usize].set_ranging_offset(offset);
                self.skew[onu_id as usize] = rtt.as_nanos() as i64 - offset.as_nanos() as i64;
                Ok(offset)
            }
            Err(e) => Err(e),
        };
        let detail = match &record_result {
            Ok(offset) => format!("frame={frame};offset={}", offset.as_nanos()),
            Err(e) => format!("frame={frame};failed={e}"),
        };
        self.trace.emit(now, "RangingReply", Some(onu_id), &detail)?;
        self.ranging_log.push(RangingRecord { frame, onu_id, token, window, reply_arrival: now, result: record_result });
        Ok(())
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        for onu in &self.onus {
            let c = onu.counters();
            let generated = onu.generated_bytes();
            let queued = onu.queued_bytes();
            let dropped = onu.dropped_bytes();
            if generated != c.transmitted_bytes + queued + dropped {
                return Err(SimError::Conservation {
                    onu: onu.onu_id(),
                    generated,
                    transmitted: c.transmitted_bytes,
                    queued,
                    dropped,
                });
            }
        }
        Ok(())
    }
}

pub fn run(cfg: &ValidatedConfig) -> Result<MetricsSummary, SimError> {
    Simulation::new(cfg).run()
}
