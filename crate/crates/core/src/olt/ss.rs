//! Conventional slot-size allocation: one slot per ONU per frame, sized in
//! proportion to the ONU's total reported queue and capped at that queue.
//! Slots are laid out back to back, so their start offsets move with the
//! demand of the ONUs in front of them.

use crate::config::{SchedulerKind, ValidatedConfig};
use crate::time::SimTime;

use super::{FrameSchedule, OltTable, Scheduler, Slot};

#[derive(Debug, Clone, Copy, Default)]
pub struct Ss;

impl Scheduler for Ss {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Ss
    }

    fn allocate(&self, table: &OltTable, cfg: &ValidatedConfig, frame_index: u64, quiesce: bool) -> FrameSchedule {
        ss_allocate(table, cfg, frame_index, quiesce)
    }

    /// Conventional ranging silences the whole frame.
    fn quiet_from(&self, _table: &OltTable, _cfg: &ValidatedConfig) -> SimTime {
        SimTime::ZERO
    }

    fn uses_counters(&self) -> bool {
        false
    }
}

/// `min(q_i, floor(payload * q_i / sum(q)))`, single pass.
pub fn proportional_slots(demands: &[u64], payload_bytes: u64) -> Vec<u64> {
    let total: u128 = demands.iter().map(|&q| q as u128).sum();
    if total == 0 {
        return vec![0; demands.len()];
    }
    demands
        .iter()
        .map(|&q| {
            let share = (payload_bytes as u128 * q as u128 / total) as u64;
            q.min(share)
        })
        .collect()
}

/// Data bytes available to all ONUs in one frame, after guards and reports.
pub fn ss_payload_bytes(cfg: &ValidatedConfig, n_slots: u64) -> u64 {
    let overhead = (cfg.guard_time() + cfg.report_duration()).as_nanos() as u128 * n_slots as u128
        // each slot's serialization time is rounded up to whole nanoseconds
        + n_slots as u128;
    let frame = cfg.frame_duration().as_nanos() as u128;
    if overhead >= frame {
        return 0;
    }
    cfg.bytes_in(SimTime::from_nanos((frame - overhead) as u64))
}

pub fn ss_allocate(table: &OltTable, cfg: &ValidatedConfig, frame_index: u64, quiesce: bool) -> FrameSchedule {
    let mut schedule = FrameSchedule { frame_index, quiesced: quiesce, ..Default::default() };
    if quiesce {
        return schedule;
    }
    let records: Vec<_> = table.ranged().collect();
    let demands: Vec<u64> = records.iter().map(|r| r.last_report.hp_bytes + r.last_report.be_bytes).collect();
    let payload = ss_payload_bytes(cfg, records.len() as u64);
    let data = proportional_slots(&demands, payload);

    let guard = cfg.guard_time();
    let mut cursor = SimTime::ZERO;
    for (rec, bytes) in records.iter().zip(data) {
        cursor = cursor + guard;
        let length_bytes = cfg.report_overhead_bytes() + bytes;
        let duration = cfg.duration_of(length_bytes);
        schedule.ss_slots.push(Slot { onu_id: rec.onu_id, offset: cursor, length_bytes, duration });
        cursor = cursor + duration;
    }
    schedule.total_guard_count = schedule.ss_slots.len() as u32;
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, ScenarioConfig};
    use crate::olt::GrantRequest;

    #[test]
    fn proportional_examples() {
        assert_eq!(proportional_slots(&[100, 300], 800), vec![100, 300]);
        assert_eq!(proportional_slots(&[100, 300], 200), vec![50, 150]);
        assert_eq!(proportional_slots(&[0, 0, 0], 200), vec![0, 0, 0]);
        // no redistribution of the floor remainder
        assert_eq!(proportional_slots(&[1, 1, 1], 10), vec![1, 1, 1]);
        assert_eq!(proportional_slots(&[5, 5, 5], 10), vec![3, 3, 3]);
    }

    #[test]
    fn slot_offsets_follow_demand() {
        let mut c = ScenarioConfig::default();
        c.scheduler = SchedulerKind::Ss;
        c.network.n_onus = 3;
        let c = validate(&c).unwrap();
        let mut t = OltTable::new();
        for id in 0..3 {
            t.insert_ranged(id, 0, SimTime::ZERO).unwrap();
        }
        let idle = ss_allocate(&t, &c, 0, false);
        assert_eq!(idle.ss_slots.iter().map(|s| s.length_bytes).collect::<Vec<_>>(), vec![64, 64, 64]);

        t.register_report(GrantRequest { onu_id: 0, hp_bytes: 500, be_bytes: 1000, frame_index: 0 }).unwrap();
        let busy = ss_allocate(&t, &c, 1, false);
        assert_eq!(busy.ss_slots[0].length_bytes, 64 + 1500);
        assert!(busy.ss_slots[1].offset > idle.ss_slots[1].offset);
        assert!(busy.check(c.frame_duration(), c.guard_time()).is_ok());
        assert!(ss_allocate(&t, &c, 2, true).ss_slots.is_empty());
    }

    #[test]
    fn saturated_frame_fits() {
        let mut c = ScenarioConfig::default();
        c.scheduler = SchedulerKind::Ss;
        c.network.n_onus = 32;
        let c = validate(&c).unwrap();
        let mut t = OltTable::new();
        for id in 0..32 {
            t.insert_ranged(id, 0, SimTime::ZERO).unwrap();
            t.register_report(GrantRequest { onu_id: id, hp_bytes: 1_000_000 + id as u64 * 7919, be_bytes: 3, frame_index: 0 })
                .unwrap();
        }
        let s = ss_allocate(&t, &c, 0, false);
        assert!(s.check(c.frame_duration(), c.guard_time()).is_ok());
        let data: u64 = s.ss_slots.iter().map(|s| s.length_bytes - 64).sum();
        assert!(data > ss_payload_bytes(&c, 32) - 32);
    }
}
