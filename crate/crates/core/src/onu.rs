//! ONU-side MAC: class-based queues, ingress policing, slot packing and
//! queue reports.

use std::collections::VecDeque;

use thiserror::Error;

use crate::olt::{GrantRequest, Slot};
use crate::packet::{OnuId, Packet, ServiceClass};
use crate::time::SimTime;
use crate::traffic::MIN_PACKET_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnuError {
    #[error("ONU {onu}: grant addressed to ONU {addressed}")]
    Misaddressed { onu: OnuId, addressed: OnuId },
    #[error("ONU {onu}: grant at offset {offset} overlaps previous grant ending at {prev_end} in frame {frame}")]
    OverlappingGrant { onu: OnuId, frame: u64, offset: SimTime, prev_end: SimTime },
    #[error("ONU {onu}: slot of {slot} B cannot carry the {report} B report")]
    SlotTooSmall { onu: OnuId, slot: u64, report: u64 },
}

/// Outcome of offering an arriving packet to the ONU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Demoted,
    Dropped,
}

/// Drop-tail FIFO for one service class.
#[derive(Debug, Clone)]
pub struct ClassQueue {
    class: ServiceClass,
    packets: VecDeque<Packet>,
    bytes: u64,
    capacity_bytes: u64,
    dropped_bytes: u64,
    dropped_packets: u64,
}

impl ClassQueue {
    pub fn new(class: ServiceClass, capacity_bytes: u64) -> Self {
        ClassQueue {
            class,
            packets: VecDeque::new(),
            bytes: 0,
            capacity_bytes,
            dropped_bytes: 0,
            dropped_packets: 0,
        }
    }

    pub fn class(&self) -> ServiceClass {
        self.class
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn dropped_bytes(&self) -> u64 {
        self.dropped_bytes
    }

    pub fn dropped_packets(&self) -> u64 {
        self.dropped_packets
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Packet> {
        self.packets.get(index)
    }

    /// Enqueue, or drop the packet if it would exceed capacity. Returns
    /// whether the packet was queued.
    pub fn push(&mut self, packet: Packet) -> bool {
        let size = packet.size_bytes as u64;
        if self.bytes + size > self.capacity_bytes {
            self.dropped_bytes += size;
            self.dropped_packets += 1;
            return false;
        }
        self.bytes += size;
        self.packets.push_back(packet);
        self.check();
        true
    }

    /// Remove the packets at `indices` (ascending) and return them in that
    /// order. Unselected packets keep their relative order.
    pub fn take(&mut self, indices: &[usize]) -> Vec<Packet> {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let mut out: Vec<Packet> = indices
            .iter()
            .rev()
            .map(|&i| self.packets.remove(i).expect("selected index in range"))
            .collect();
        out.reverse();
        self.bytes -= out.iter().map(|p| p.size_bytes as u64).sum::<u64>();
        self.check();
        out
    }

    fn check(&self) {
        debug_assert_eq!(
            self.bytes,
            self.packets.iter().map(|p| p.size_bytes as u64).sum::<u64>(),
            "cached byte count of {} queue diverged",
            self.class
        );
        debug_assert!(self.bytes <= self.capacity_bytes);
    }
}

/// Per-window HP byte budget.
///
/// Windows are one frame long. Their phase is configurable: the HSSR ONU
/// aligns them to its own steady-slot start so that what is admitted
/// between two consecutive slots always fits the next slot.
#[derive(Debug, Clone)]
pub struct IngressMeter {
    budget_bytes: u64,
    window: SimTime,
    phase: SimTime,
    window_index: u64,
    admitted: u64,
}

impl IngressMeter {
    pub fn new(budget_bytes: u64, window: SimTime, phase: SimTime) -> Self {
        IngressMeter { budget_bytes, window, phase, window_index: 0, admitted: 0 }
    }

    pub fn budget_bytes(&self) -> u64 {
        self.budget_bytes
    }

    pub fn phase(&self) -> SimTime {
        self.phase
    }

    /// Moves window boundaries. The current window restarts at the next
    /// boundary under the new phase.
    pub fn set_phase(&mut self, phase: SimTime) {
        self.phase = SimTime::from_nanos(phase.as_nanos() % self.window.as_nanos().max(1));
    }

    fn index_at(&self, now: SimTime) -> u64 {
        // Window 0 is everything before the first boundary at `phase`.
        match now.checked_sub(self.phase) {
            Ok(since) => since.as_nanos() / self.window.as_nanos().max(1) + 1,
            Err(_) => 0,
        }
    }

    fn roll(&mut self, now: SimTime) {
        let idx = self.index_at(now);
        if idx != self.window_index {
            self.window_index = idx;
            self.admitted = 0;
        }
    }

    /// Bytes admitted so far in the window containing `now`.
    pub fn admitted(&mut self, now: SimTime) -> u64 {
        self.roll(now);
        self.admitted
    }

    pub fn remaining(&mut self, now: SimTime) -> u64 {
        self.roll(now);
        self.budget_bytes - self.admitted
    }

    /// Charge `bytes` if they fit in what is left of the current window.
    pub fn try_charge(&mut self, now: SimTime, bytes: u64) -> bool {
        self.roll(now);
        if self.admitted + bytes <= self.budget_bytes {
            self.admitted += bytes;
            true
        } else {
            false
        }
    }
}

/// Greedy first-fit with bounded look-ahead.
///
/// Repeatedly takes the first packet among the first `lookahead` not yet
/// selected that fits the remaining budget; stops when none of them fits.
/// Returns the selected positions, which are always ascending. `sizes` is
/// consumed lazily, so it may be a view over a long queue.
pub fn pack_slot<I>(sizes: I, slot_bytes: u64, lookahead: usize) -> Vec<usize>
where
    I: IntoIterator<Item = u32>,
{
    let lookahead = lookahead.max(1);
    let mut source = sizes.into_iter().enumerate();
    let mut window: VecDeque<(usize, u32)> = VecDeque::with_capacity(lookahead);
    let mut remaining = slot_bytes;
    let mut selected = Vec::new();
    loop {
        while window.len() < lookahead {
            match source.next() {
                Some(item) => window.push_back(item),
                None => break,
            }
        }
        match window.iter().position(|&(_, size)| size as u64 <= remaining) {
            Some(k) => {
                let (pos, size) = window.remove(k).expect("position in window");
                remaining -= size as u64;
                selected.push(pos);
            }
            None => break,
        }
    }
    selected
}

/// Per-ONU byte accounting for conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OnuCounters {
    pub generated_bytes: [u64; 2],
    pub generated_packets: [u64; 2],
    pub transmitted_bytes: u64,
    pub transmitted_packets: u64,
    pub demoted_bytes: u64,
    pub demoted_packets: u64,
    pub promoted_bytes: u64,
    pub promoted_packets: u64,
    /// Largest HP byte total admitted in a single metering window.
    pub max_window_hp_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct OnuMac {
    onu_id: OnuId,
    hp_queue: ClassQueue,
    be_queue: ClassQueue,
    meter: IngressMeter,
    /// When false the ONU neither demotes nor promotes (conventional ONU).
    reordering: bool,
    distance_km: f64,
    ranging_offset: Option<SimTime>,
    report_overhead_bytes: u64,
    lookahead: usize,
    last_grant: Option<(u64, SimTime)>,
    counters: OnuCounters,
}

impl OnuMac {
    pub fn new(
        onu_id: OnuId,
        distance_km: f64,
        meter: IngressMeter,
        queue_capacity_bytes: u64,
        report_overhead_bytes: u64,
        lookahead: usize,
        reordering: bool,
    ) -> Self {
        OnuMac {
            onu_id,
            hp_queue: ClassQueue::new(ServiceClass::Hp, queue_capacity_bytes),
            be_queue: ClassQueue::new(ServiceClass::Be, queue_capacity_bytes),
            meter,
            reordering,
            distance_km,
            ranging_offset: None,
            report_overhead_bytes,
            lookahead: lookahead.max(1),
            last_grant: None,
            counters: OnuCounters::default(),
        }
    }

    pub fn onu_id(&self) -> OnuId {
        self.onu_id
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }

    pub fn hp_queue(&self) -> &ClassQueue {
        &self.hp_queue
    }

    pub fn be_queue(&self) -> &ClassQueue {
        &self.be_queue
    }

    pub fn meter_mut(&mut self) -> &mut IngressMeter {
        &mut self.meter
    }

    pub fn counters(&self) -> &OnuCounters {
        &self.counters
    }

    pub fn queued_bytes(&self) -> u64 {
        self.hp_queue.bytes() + self.be_queue.bytes()
    }

    pub fn dropped_bytes(&self) -> u64 {
        self.hp_queue.dropped_bytes() + self.be_queue.dropped_bytes()
    }

    pub fn generated_bytes(&self) -> u64 {
        self.counters.generated_bytes.iter().sum()
    }

    pub fn is_ranged(&self) -> bool {
        self.ranging_offset.is_some()
    }

    pub fn ranging_offset(&self) -> Option<SimTime> {
        self.ranging_offset
    }

    pub fn set_ranging_offset(&mut self, offset: SimTime) {
        self.ranging_offset = Some(offset);
    }

    /// Classify and enqueue an arriving packet.
    pub fn admit(&mut self, mut packet: Packet, now: SimTime) -> Admission {
        debug_assert_eq!(packet.arrival_time, now);
        let size = packet.size_bytes as u64;
        self.counters.generated_bytes[packet.class.index()] += size;
        self.counters.generated_packets[packet.class.index()] += 1;

        let mut demoted = false;
        let queued = match packet.class {
            ServiceClass::Be => self.be_queue.push(packet),
            ServiceClass::Hp if !self.reordering => self.hp_queue.push(packet),
            ServiceClass::Hp => {
                if self.meter.remaining(now) >= size {
                    if self.hp_queue.push(packet) {
                        self.meter.try_charge(now, size);
                        let admitted = self.meter.admitted(now);
                        self.counters.max_window_hp_bytes = self.counters.max_window_hp_bytes.max(admitted);
                        true
                    } else {
                        false
                    }
                } else {
                    packet.effective_class = ServiceClass::Be;
                    demoted = true;
                    self.be_queue.push(packet)
                }
            }
        };
        match (queued, demoted) {
            (false, _) => Admission::Dropped,
            (true, true) => {
                self.counters.demoted_bytes += size;
                self.counters.demoted_packets += 1;
                Admission::Demoted
            }
            (true, false) => Admission::Admitted,
        }
    }

    /// Queue report, taken before the current slot's transmissions.
    pub fn build_report(&self, frame_index: u64) -> GrantRequest {
        GrantRequest {
            onu_id: self.onu_id,
            hp_bytes: self.hp_queue.bytes(),
            be_bytes: self.be_queue.bytes(),
            frame_index,
        }
    }

    fn note_sent(&mut self, sent: &[Packet]) {
        self.counters.transmitted_bytes += sent.iter().map(|p| p.size_bytes as u64).sum::<u64>();
        self.counters.transmitted_packets += sent.len() as u64;
    }

    /// Packets for this ONU's steady slot of `slot_bytes` (report included).
    ///
    /// HP is packed first. Any residual that can still hold a minimum-size
    /// packet is offered to the BE queue; such packets are promoted.
    pub fn fill_steady_slot(&mut self, slot_bytes: u64) -> Result<Vec<Packet>, OnuError> {
        let budget = slot_bytes.checked_sub(self.report_overhead_bytes).ok_or(OnuError::SlotTooSmall {
            onu: self.onu_id,
            slot: slot_bytes,
            report: self.report_overhead_bytes,
        })?;
        let hp_sel = pack_slot(self.hp_queue.iter().map(|p| p.size_bytes), budget, self.lookahead);
        let mut out = self.hp_queue.take(&hp_sel);
        let residual = budget - out.iter().map(|p| p.size_bytes as u64).sum::<u64>();
        if self.reordering && residual >= MIN_PACKET_BYTES as u64 {
            let be_sel = pack_slot(self.be_queue.iter().map(|p| p.size_bytes), residual, self.lookahead);
            let mut promoted = self.be_queue.take(&be_sel);
            for p in &mut promoted {
                p.effective_class = ServiceClass::Hp;
                p.promoted = true;
                self.counters.promoted_bytes += p.size_bytes as u64;
                self.counters.promoted_packets += 1;
            }
            out.extend(promoted);
        }
        self.note_sent(&out);
        Ok(out)
    }

    /// BE packets for a dynamic-part grant.
    pub fn transmit_grant(&mut self, grant: &Slot, frame_index: u64) -> Result<Vec<Packet>, OnuError> {
        if grant.onu_id != self.onu_id {
            return Err(OnuError::Misaddressed { onu: self.onu_id, addressed: grant.onu_id });
        }
        if let Some((frame, prev_end)) = self.last_grant {
            if frame == frame_index && grant.offset < prev_end {
                return Err(OnuError::OverlappingGrant {
                    onu: self.onu_id,
                    frame: frame_index,
                    offset: grant.offset,
                    prev_end,
                });
            }
        }
        self.last_grant = Some((frame_index, grant.offset + grant.duration));
        let sel = pack_slot(self.be_queue.iter().map(|p| p.size_bytes), grant.length_bytes, self.lookahead);
        let out = self.be_queue.take(&sel);
        self.note_sent(&out);
        Ok(out)
    }

    /// Packets for a conventional slot of `data_bytes` (report excluded):
    /// both queues are served as a single FIFO in arrival order.
    pub fn fill_mixed_slot(&mut self, data_bytes: u64) -> Vec<Packet> {
        // pack_slot consumes at most one position per selected packet plus
        // the look-ahead window, and every packet is at least 40 B.
        let horizon = (data_bytes / MIN_PACKET_BYTES as u64) as usize + self.lookahead + 1;
        let mut order: Vec<(ServiceClass, usize, u32)> = Vec::new();
        let (mut i, mut j) = (0usize, 0usize);
        while order.len() < horizon {
            let next = match (self.hp_queue.get(i), self.be_queue.get(j)) {
                (Some(h), Some(b)) => {
                    if (h.arrival_time, h.id) <= (b.arrival_time, b.id) {
                        (ServiceClass::Hp, h.size_bytes)
                    } else {
                        (ServiceClass::Be, b.size_bytes)
                    }
                }
                (Some(h), None) => (ServiceClass::Hp, h.size_bytes),
                (None, Some(b)) => (ServiceClass::Be, b.size_bytes),
                (None, None) => break,
            };
            match next.0 {
                ServiceClass::Hp => {
                    order.push((ServiceClass::Hp, i, next.1));
                    i += 1;
                }
                ServiceClass::Be => {
                    order.push((ServiceClass::Be, j, next.1));
                    j += 1;
                }
            }
        }
        let sel = pack_slot(order.iter().map(|e| e.2), data_bytes, self.lookahead);
        let hp_idx: Vec<usize> = sel.iter().filter(|&&k| order[k].0 == ServiceClass::Hp).map(|&k| order[k].1).collect();
        let be_idx: Vec<usize> = sel.iter().filter(|&&k| order[k].0 == ServiceClass::Be).map(|&k| order[k].1).collect();
        let mut hp = self.hp_queue.take(&hp_idx).into_iter();
        let mut be = self.be_queue.take(&be_idx).into_iter();
        let out: Vec<Packet> = sel
            .iter()
            .map(|&k| match order[k].0 {
                ServiceClass::Hp => hp.next().expect("hp packet"),
                ServiceClass::Be => be.next().expect("be packet"),
            })
            .collect();
        self.note_sent(&out);
        out
    }
}
