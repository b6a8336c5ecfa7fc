//! Hybrid slot-size/rate allocation.
//!
//! The frame starts with one fixed-size steady slot per ranged ONU (in id
//! order, one guard before each), followed by the dynamic part for BE.
//! When every BE request fits, each requester gets its full report back to
//! back. Otherwise the whole dynamic part goes to the single ONU with the
//! largest `be_bytes * (counter + 1)`, lowest id on ties.

use crate::config::{SchedulerKind, ValidatedConfig};
use crate::time::SimTime;

use super::{FrameSchedule, OltTable, Scheduler, Slot};

#[derive(Debug, Clone, Copy, Default)]
pub struct Hssr;

impl Scheduler for Hssr {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Hssr
    }

    fn allocate(&self, table: &OltTable, cfg: &ValidatedConfig, frame_index: u64, quiesce: bool) -> FrameSchedule {
        hssr_allocate(table, cfg, frame_index, quiesce)
    }

    fn quiet_from(&self, table: &OltTable, cfg: &ValidatedConfig) -> SimTime {
        steady_layout(table, cfg).1
    }

    fn uses_counters(&self) -> bool {
        true
    }
}

/// Steady slots and the end of the steady part.
fn steady_layout(table: &OltTable, cfg: &ValidatedConfig) -> (Vec<Slot>, SimTime) {
    let guard = cfg.guard_time();
    let duration = cfg.steady_slot_duration();
    let mut cursor = SimTime::ZERO;
    let slots = table
        .ranged()
        .map(|rec| {
            cursor = cursor + guard;
            let slot = Slot {
                onu_id: rec.onu_id,
                offset: cursor,
                length_bytes: rec.subscribed_hp_bytes_per_frame + cfg.report_overhead_bytes(),
                duration,
            };
            cursor = cursor + duration;
            slot
        })
        .collect();
    (slots, cursor)
}

pub fn hssr_allocate(table: &OltTable, cfg: &ValidatedConfig, frame_index: u64, quiesce: bool) -> FrameSchedule {
    let guard = cfg.guard_time();
    let frame = cfg.frame_duration();
    let (steady_slots, steady_end) = steady_layout(table, cfg);
    let mut schedule = FrameSchedule {
        frame_index,
        total_guard_count: steady_slots.len() as u32,
        steady_slots,
        dynamic_grants: Vec::new(),
        ss_slots: Vec::new(),
        quiesced: quiesce,
    };
    if quiesce {
        return schedule;
    }

    let dynamic = frame.saturating_sub(steady_end);
    let requesters: Vec<_> = table.ranged().filter(|r| r.last_report.be_bytes > 0).collect();
    if requesters.is_empty() || dynamic <= guard {
        return schedule;
    }

    let demand: u128 = requesters
        .iter()
        .map(|r| cfg.duration_of(r.last_report.be_bytes).as_nanos() as u128 + guard.as_nanos() as u128)
        .sum();
    let mut cursor = steady_end;
    if demand <= dynamic.as_nanos() as u128 {
        for rec in requesters {
            cursor = cursor + guard;
            let duration = cfg.duration_of(rec.last_report.be_bytes);
            schedule.dynamic_grants.push(Slot {
                onu_id: rec.onu_id,
                offset: cursor,
                length_bytes: rec.last_report.be_bytes,
                duration,
            });
            cursor = cursor + duration;
        }
    } else {
        let winner = requesters
            .iter()
            .max_by(|a, b| {
                let wa = a.last_report.be_bytes as u128 * (a.counter as u128 + 1);
                let wb = b.last_report.be_bytes as u128 * (b.counter as u128 + 1);
                // max_by keeps the last maximum; reversing the id order
                // makes the lowest id win ties.
                wa.cmp(&wb).then(b.onu_id.cmp(&a.onu_id))
            })
            .expect("non-empty");
        let length_bytes = cfg.bytes_in(dynamic - guard);
        let duration = cfg.duration_of(length_bytes);
        schedule.dynamic_grants.push(Slot { onu_id: winner.onu_id, offset: cursor + guard, length_bytes, duration });
    }
    schedule.total_guard_count += schedule.dynamic_grants.len() as u32;
    schedule
}
