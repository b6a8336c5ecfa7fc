//! Quasi-non-intrusive ranging.
//!
//! Only the BE part of one frame is silenced. The discovery token is timed
//! so that a reply from any distance in the configured reach lands between
//! the end of the steady part and the end of the frame.

use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::packet::OnuId;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RangingError {
    #[error("ranging not due until {due}")]
    NotDue { due: SimTime },
    #[error("a ranging round is already in progress")]
    InProgress,
    #[error("frame too small for non-intrusive ranging: window {earliest}..{latest} outside ({quiet_from}, {frame_end})")]
    WindowDoesNotFit { earliest: SimTime, latest: SimTime, quiet_from: SimTime, frame_end: SimTime },
    #[error("no ranging token outstanding")]
    NoToken,
    #[error("ranging reply at {arrival} outside window {earliest}..{latest}")]
    OutsideWindow { arrival: SimTime, earliest: SimTime, latest: SimTime },
}

/// Earliest reply start and latest reply end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplyWindow {
    pub earliest: SimTime,
    pub latest: SimTime,
}

impl ReplyWindow {
    pub fn len(&self) -> SimTime {
        self.latest - self.earliest
    }

    pub fn is_empty(&self) -> bool {
        self.latest == self.earliest
    }

    /// Whether a reply burst starting at `start` lies wholly inside.
    pub fn admits(&self, start: SimTime, reply_duration: SimTime) -> bool {
        start >= self.earliest && start + reply_duration <= self.latest
    }
}

/// Token and window timing relative to the frame start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOffsets {
    pub token: SimTime,
    pub earliest: SimTime,
    pub latest: SimTime,
}

/// Places the token so the earliest possible reply starts one guard after
/// `quiet_from` (or at the frame start if the nearest ONU is too far away
/// for that).
pub fn reply_window_offsets(
    quiet_from: SimTime,
    guard: SimTime,
    min_prop: SimTime,
    max_prop: SimTime,
    turnaround: SimTime,
    reply_duration: SimTime,
) -> WindowOffsets {
    let earliest_rtt = min_prop + min_prop + turnaround;
    let token = (quiet_from + guard).saturating_sub(earliest_rtt);
    WindowOffsets {
        token,
        earliest: token + earliest_rtt,
        latest: token + max_prop + max_prop + turnaround + reply_duration,
    }
}

/// Round-trip time measured from a reply; the reply must start inside the
/// window.
pub fn measure_rtt(
    reply_arrival: SimTime,
    token_emit_time: SimTime,
    turnaround: SimTime,
    window: ReplyWindow,
    reply_duration: SimTime,
) -> Result<SimTime, RangingError> {
    if !window.admits(reply_arrival, reply_duration) {
        return Err(RangingError::OutsideWindow {
            arrival: reply_arrival,
            earliest: window.earliest,
            latest: window.latest,
        });
    }
    Ok(reply_arrival - token_emit_time - turnaround)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangingPlan {
    pub token_emit_time: SimTime,
    pub window: ReplyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangingPhase {
    Idle,
    TokenSent { sent_at: SimTime, window: ReplyWindow },
    Completed,
}

#[derive(Debug, Clone)]
pub struct RangingController {
    phase: RangingPhase,
    new_onu_id: Option<OnuId>,
    measured_rtt: Option<SimTime>,
    last_ranging: SimTime,
    interval: SimTime,
    rounds: u64,
    completions: u64,
    failures: u64,
}

impl RangingController {
    /// Initial ONUs count as ranged at time zero.
    pub fn new(interval: SimTime) -> Self {
        RangingController {
            phase: RangingPhase::Idle,
            new_onu_id: None,
            measured_rtt: None,
            last_ranging: SimTime::ZERO,
            interval,
            rounds: 0,
            completions: 0,
            failures: 0,
        }
    }

    pub fn phase(&self) -> RangingPhase {
        self.phase
    }

    pub fn new_onu_id(&self) -> Option<OnuId> {
        self.new_onu_id
    }

    pub fn measured_rtt(&self) -> Option<SimTime> {
        self.measured_rtt
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn completions(&self) -> u64 {
        self.completions
    }

    pub fn failures(&self) -> u64 {
        self.failures
    }

    pub fn next_due(&self) -> SimTime {
        self.last_ranging + self.interval
    }

    pub fn is_due(&self, now: SimTime) -> bool {
        !matches!(self.phase, RangingPhase::TokenSent { .. }) && now >= self.next_due()
    }

    /// Plan a ranging round in the frame starting at `frame_start`, whose
    /// transmissions end at `quiet_from` after the frame start.
    pub fn schedule_ranging(
        &mut self,
        cfg: &ValidatedConfig,
        frame_start: SimTime,
        quiet_from: SimTime,
    ) -> Result<RangingPlan, RangingError> {
        if matches!(self.phase, RangingPhase::TokenSent { .. }) {
            return Err(RangingError::InProgress);
        }
        if frame_start < self.next_due() {
            return Err(RangingError::NotDue { due: self.next_due() });
        }
        let offsets = reply_window_offsets(
            quiet_from,
            cfg.guard_time(),
            cfg.min_propagation(),
            cfg.max_propagation(),
            cfg.network().reply_turnaround,
            cfg.reply_duration(),
        );
        if offsets.earliest <= quiet_from || offsets.latest > cfg.frame_duration() {
            return Err(RangingError::WindowDoesNotFit {
                earliest: offsets.earliest,
                latest: offsets.latest,
                quiet_from,
                frame_end: cfg.frame_duration(),
            });
        }
        let window = ReplyWindow { earliest: frame_start + offsets.earliest, latest: frame_start + offsets.latest };
        let token_emit_time = frame_start + offsets.token;
        self.phase = RangingPhase::TokenSent { sent_at: token_emit_time, window };
        self.last_ranging = frame_start;
        self.rounds += 1;
        self.new_onu_id = None;
        self.measured_rtt = None;
        Ok(RangingPlan { token_emit_time, window })
    }

    /// Accept a reply from `onu_id`; returns its measured round trip.
    pub fn complete_ranging(
        &mut self,
        cfg: &ValidatedConfig,
        onu_id: OnuId,
        reply_arrival: SimTime,
    ) -> Result<SimTime, RangingError> {
        let RangingPhase::TokenSent { sent_at, window } = self.phase else {
            return Err(RangingError::NoToken);
        };
        match measure_rtt(reply_arrival, sent_at, cfg.network().reply_turnaround, window, cfg.reply_duration()) {
            Ok(rtt) => {
                self.phase = RangingPhase::Completed;
                self.new_onu_id = Some(onu_id);
                self.measured_rtt = Some(rtt);
                self.completions += 1;
                Ok(rtt)
            }
            Err(e) => {
                self.phase = RangingPhase::Idle;
                self.failures += 1;
                Err(e)
            }
        }
    }

    /// Close a round whose window passed without a reply.
    pub fn expire(&mut self, now: SimTime) {
        if let RangingPhase::TokenSent { window, .. } = self.phase {
            if now > window.latest {
                self.phase = RangingPhase::Idle;
            }
        }
    }
}
