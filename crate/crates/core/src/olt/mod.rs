//! OLT-side MAC: the per-ONU record table, DBA strategies and ranging.

mod hssr;
pub mod ranging;
mod ss;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::{SchedulerKind, ValidatedConfig};
use crate::packet::OnuId;
use crate::time::SimTime;

pub use hssr::{hssr_allocate, Hssr};
pub use ranging::{RangingController, RangingError, RangingPhase, RangingPlan, ReplyWindow};
pub use ss::{proportional_slots, ss_allocate, Ss};

/// Queue report sent by an ONU once per frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrantRequest {
    pub onu_id: OnuId,
    pub hp_bytes: u64,
    pub be_bytes: u64,
    pub frame_index: u64,
}

/// One upstream transmission opportunity, timed at the OLT receiver
/// relative to the frame start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub onu_id: OnuId,
    pub offset: SimTime,
    pub length_bytes: u64,
    pub duration: SimTime,
}

impl Slot {
    pub fn end(&self) -> SimTime {
        self.offset + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameSchedule {
    pub frame_index: u64,
    /// HSSR steady part; each slot starts with the ONU's report.
    pub steady_slots: Vec<Slot>,
    /// HSSR dynamic part, BE only.
    pub dynamic_grants: Vec<Slot>,
    /// Conventional per-ONU slots (report followed by data).
    pub ss_slots: Vec<Slot>,
    pub quiesced: bool,
    pub total_guard_count: u32,
}

impl FrameSchedule {
    /// Every transmission opportunity in offset order.
    pub fn all_slots(&self) -> Vec<Slot> {
        let mut all: Vec<Slot> = self
            .steady_slots
            .iter()
            .chain(&self.dynamic_grants)
            .chain(&self.ss_slots)
            .copied()
            .collect();
        all.sort_by_key(|s| (s.offset, s.onu_id));
        all
    }

    pub fn busy_time(&self) -> SimTime {
        self.all_slots().iter().fold(SimTime::ZERO, |acc, s| acc + s.duration)
    }

    /// End of the steady part (zero when there is none).
    pub fn steady_end(&self) -> SimTime {
        self.steady_slots.last().map(Slot::end).unwrap_or(SimTime::ZERO)
    }

    pub fn reply_for(&self, onu_id: OnuId) -> GrantReply {
        GrantReply {
            frame_index: self.frame_index,
            onu_id,
            steady_slot: self.steady_slots.iter().find(|s| s.onu_id == onu_id).copied(),
            dynamic_grants: self.dynamic_grants.iter().filter(|s| s.onu_id == onu_id).copied().collect(),
            ss_slot: self.ss_slots.iter().find(|s| s.onu_id == onu_id).copied(),
        }
    }

    /// Checks layout invariants: intervals inside the frame, no overlap,
    /// guard separation, and guard accounting.
    pub fn check(&self, frame: SimTime, guard: SimTime) -> Result<(), String> {
        let slots = self.all_slots();
        for s in &slots {
            if s.end() > frame {
                return Err(format!("slot of ONU {} ends at {} past frame end {}", s.onu_id, s.end(), frame));
            }
        }
        for w in slots.windows(2) {
            if w[1].offset < w[0].end() + guard {
                return Err(format!(
                    "slots of ONU {} and ONU {} are not separated by a guard ({} < {} + {})",
                    w[0].onu_id,
                    w[1].onu_id,
                    w[1].offset,
                    w[0].end(),
                    guard
                ));
            }
        }
        if let Some(first) = slots.first() {
            if first.offset < guard {
                return Err(format!("first slot at {} leaves no leading guard", first.offset));
            }
        }
        let used = self.busy_time().as_nanos() as u128 + self.total_guard_count as u128 * guard.as_nanos() as u128;
        if used > frame.as_nanos() as u128 {
            return Err(format!("slots and guards use {used} ns of a {frame} frame"));
        }
        Ok(())
    }
}

/// Per-ONU view of a frame schedule sent downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantReply {
    pub frame_index: u64,
    pub onu_id: OnuId,
    pub steady_slot: Option<Slot>,
    pub dynamic_grants: Vec<Slot>,
    pub ss_slot: Option<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnuRecord {
    pub onu_id: OnuId,
    pub last_report: GrantRequest,
    /// Consecutive frames with BE demand but no dynamic grant.
    pub counter: u64,
    pub subscribed_hp_bytes_per_frame: u64,
    pub ranged: bool,
    pub ranging_offset: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OltError {
    #[error("report from unknown ONU {0}")]
    UnknownOnu(OnuId),
    #[error("report from unranged ONU {0}")]
    Unranged(OnuId),
    #[error("ONU {0} already in table")]
    Duplicate(OnuId),
    #[error("invalid schedule for frame {frame}: {detail}")]
    BadSchedule { frame: u64, detail: String },
    #[error(transparent)]
    Ranging(#[from] RangingError),
}

/// The OLT's table of ONUs, ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OltTable {
    records: BTreeMap<OnuId, OnuRecord>,
}

impl OltTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: OnuRecord) -> Result<(), OltError> {
        if self.records.contains_key(&record.onu_id) {
            return Err(OltError::Duplicate(record.onu_id));
        }
        self.records.insert(record.onu_id, record);
        Ok(())
    }

    /// A pre-ranged ONU with an empty report.
    pub fn insert_ranged(&mut self, onu_id: OnuId, subscribed: u64, ranging_offset: SimTime) -> Result<(), OltError> {
        self.insert(OnuRecord {
            onu_id,
            last_report: GrantRequest { onu_id, ..Default::default() },
            counter: 0,
            subscribed_hp_bytes_per_frame: subscribed,
            ranged: true,
            ranging_offset,
        })
    }

    pub fn get(&self, onu_id: OnuId) -> Option<&OnuRecord> {
        self.records.get(&onu_id)
    }

    pub fn get_mut(&mut self, onu_id: OnuId) -> Option<&mut OnuRecord> {
        self.records.get_mut(&onu_id)
    }

    /// Ranged ONUs in ascending id order.
    pub fn ranged(&self) -> impl Iterator<Item = &OnuRecord> {
        self.records.values().filter(|r| r.ranged)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Store a report; counters are left alone.
    pub fn register_report(&mut self, req: GrantRequest) -> Result<&OnuRecord, OltError> {
        let rec = self.records.get_mut(&req.onu_id).ok_or(OltError::UnknownOnu(req.onu_id))?;
        if !rec.ranged {
            return Err(OltError::Unranged(req.onu_id));
        }
        rec.last_report = req;
        Ok(rec)
    }

    /// Fairness counter update after a frame's dynamic part is decided:
    /// BE requesters without a grant count up, granted ONUs reset, the rest
    /// keep their value.
    pub fn apply_counter_law(&mut self, schedule: &FrameSchedule) {
        for rec in self.records.values_mut().filter(|r| r.ranged) {
            let granted = schedule.dynamic_grants.iter().any(|g| g.onu_id == rec.onu_id);
            if granted {
                rec.counter = 0;
            } else if rec.last_report.be_bytes > 0 {
                rec.counter += 1;
            }
        }
    }
}

/// A DBA strategy: a pure function of the table snapshot.
pub trait Scheduler: Send + Sync {
    fn kind(&self) -> SchedulerKind;

    /// Schedule for `frame_index`. With `quiesce` the BE capacity of the
    /// frame is withheld for a ranging reply.
    fn allocate(&self, table: &OltTable, cfg: &ValidatedConfig, frame_index: u64, quiesce: bool) -> FrameSchedule;

    /// Where a quiesced frame becomes silent.
    fn quiet_from(&self, table: &OltTable, cfg: &ValidatedConfig) -> SimTime;

    fn uses_counters(&self) -> bool;
}

pub fn scheduler_for(kind: SchedulerKind) -> Box<dyn Scheduler> {
    match kind {
        SchedulerKind::Hssr => Box::new(Hssr),
        SchedulerKind::Ss => Box::new(Ss),
    }
}

/// OLT state machine: table, strategy and ranging controller.
pub struct Olt {
    table: OltTable,
    scheduler: Box<dyn Scheduler>,
    ranging: RangingController,
}

impl Olt {
    pub fn new(cfg: &ValidatedConfig) -> Self {
        let mut table = OltTable::new();
        for onu in 0..cfg.n_onus() {
            let rtt = cfg.propagation(onu) + cfg.propagation(onu);
            table
                .insert_ranged(onu, cfg.subscribed_bytes_per_frame(), rtt)
                .expect("distinct ids");
        }
        Olt {
            table,
            scheduler: scheduler_for(cfg.scheduler()),
            ranging: RangingController::new(cfg.network().ranging_interval),
        }
    }

    pub fn table(&self) -> &OltTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut OltTable {
        &mut self.table
    }

    pub fn scheduler(&self) -> &dyn Scheduler {
        self.scheduler.as_ref()
    }

    pub fn ranging(&self) -> &RangingController {
        &self.ranging
    }

    pub fn ranging_mut(&mut self) -> &mut RangingController {
        &mut self.ranging
    }

    pub fn register_report(&mut self, req: GrantRequest) -> Result<(), OltError> {
        self.table.register_report(req).map(|_| ())
    }

    /// Regular allocation for the next frame.
    pub fn allocate(&mut self, cfg: &ValidatedConfig, frame_index: u64) -> Result<FrameSchedule, OltError> {
        let schedule = self.scheduler.allocate(&self.table, cfg, frame_index, false);
        self.finish(cfg, schedule)
    }

    /// Quiesced allocation plus token placement for a ranging frame that
    /// starts at `frame_start`.
    pub fn schedule_ranging(
        &mut self,
        cfg: &ValidatedConfig,
        frame_index: u64,
        frame_start: SimTime,
    ) -> Result<(FrameSchedule, RangingPlan), OltError> {
        let quiet_from = self.scheduler.quiet_from(&self.table, cfg);
        let plan = self.ranging.schedule_ranging(cfg, frame_start, quiet_from)?;
        let schedule = self.scheduler.allocate(&self.table, cfg, frame_index, true);
        let schedule = self.finish(cfg, schedule)?;
        Ok((schedule, plan))
    }

    fn finish(&mut self, cfg: &ValidatedConfig, schedule: FrameSchedule) -> Result<FrameSchedule, OltError> {
        schedule
            .check(cfg.frame_duration(), cfg.guard_time())
            .map_err(|detail| OltError::BadSchedule { frame: schedule.frame_index, detail })?;
        if self.scheduler.uses_counters() {
            self.table.apply_counter_law(&schedule);
        }
        Ok(schedule)
    }

    /// Record a successful ranging of `onu_id`.
    pub fn add_ranged_onu(&mut self, cfg: &ValidatedConfig, onu_id: OnuId, offset: SimTime) -> Result<(), OltError> {
        match self.table.get_mut(onu_id) {
            Some(rec) => {
                rec.ranged = true;
                rec.ranging_offset = offset;
                rec.counter = 0;
                rec.last_report = GrantRequest { onu_id, ..Default::default() };
                Ok(())
            }
            None => self.table.insert_ranged(onu_id, cfg.subscribed_bytes_per_frame(), offset),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, ScenarioConfig};

    fn req(onu_id: OnuId, hp: u64, be: u64) -> GrantRequest {
        GrantRequest { onu_id, hp_bytes: hp, be_bytes: be, frame_index: 0 }
    }

    #[test]
    fn report_overwrites_and_keeps_counter() {
        let mut t = OltTable::new();
        t.insert_ranged(0, 100, SimTime::ZERO).unwrap();
        t.register_report(req(0, 10, 0)).unwrap();
        t.get_mut(0).unwrap().counter = 3;
        let rec = t.register_report(req(0, 0, 500)).unwrap();
        assert_eq!((rec.last_report.hp_bytes, rec.last_report.be_bytes), (0, 500));
        assert_eq!(rec.counter, 3);
    }

    #[test]
    fn report_errors() {
        let mut t = OltTable::new();
        assert_eq!(t.register_report(req(4, 0, 0)).unwrap_err(), OltError::UnknownOnu(4));
        t.insert(OnuRecord {
            onu_id: 4,
            last_report: req(4, 0, 0),
            counter: 0,
            subscribed_hp_bytes_per_frame: 0,
            ranged: false,
            ranging_offset: SimTime::ZERO,
        })
        .unwrap();
        assert_eq!(t.register_report(req(4, 0, 0)).unwrap_err(), OltError::Unranged(4));
        assert_eq!(t.insert_ranged(4, 0, SimTime::ZERO).unwrap_err(), OltError::Duplicate(4));
    }

    #[test]
    fn counter_law() {
        let mut t = OltTable::new();
        for id in 0..3 {
            t.insert_ranged(id, 0, SimTime::ZERO).unwrap();
        }
        t.register_report(req(0, 0, 100)).unwrap();
        t.register_report(req(1, 0, 100)).unwrap();
        t.get_mut(2).unwrap().counter = 5;
        let schedule = FrameSchedule {
            dynamic_grants: vec![Slot { onu_id: 0, offset: SimTime::ZERO, length_bytes: 100, duration: SimTime::ZERO }],
            ..Default::default()
        };
        t.apply_counter_law(&schedule);
        let counters: Vec<u64> = t.ranged().map(|r| r.counter).collect();
        // granted resets, denied requester counts up, idle ONU unchanged
        assert_eq!(counters, vec![0, 1, 5]);
    }

    #[test]
    fn olt_starts_with_ranged_population() {
        let cfg = validate(&ScenarioConfig::default()).unwrap();
        let olt = Olt::new(&cfg);
        assert_eq!(olt.table().ranged().count(), 16);
        // ONU 0 sits at 2 km: 20 us round trip.
        assert_eq!(olt.table().get(0).unwrap().ranging_offset, SimTime::from_micros(20));
    }

    #[test]
    fn schedule_check_rejects_overlap() {
        let slot = |offset: u64, dur: u64| Slot {
            onu_id: 0,
            offset: SimTime::from_nanos(offset),
            length_bytes: 0,
            duration: SimTime::from_nanos(dur),
        };
        let frame = SimTime::from_micros(10);
        let guard = SimTime::from_nanos(100);
        let good = FrameSchedule { ss_slots: vec![slot(100, 1000), slot(1200, 1000)], total_guard_count: 2, ..Default::default() };
        assert!(good.check(frame, guard).is_ok());
        let tight = FrameSchedule { ss_slots: vec![slot(100, 1000), slot(1150, 1000)], total_guard_count: 2, ..Default::default() };
        assert!(tight.check(frame, guard).is_err());
        let late = FrameSchedule { ss_slots: vec![slot(9_500, 1000)], total_guard_count: 1, ..Default::default() };
        assert!(late.check(frame, guard).is_err());
    }
}
