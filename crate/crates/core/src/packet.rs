use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub type OnuId = u32;
pub type PacketId = u64;

/// Upstream service class. `Hp` ranks above `Be`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ServiceClass {
    Hp,
    Be,
}

impl ServiceClass {
    pub const ALL: [ServiceClass; 2] = [ServiceClass::Hp, ServiceClass::Be];

    /// Dense index for per-class arrays; HP first.
    pub const fn index(self) -> usize {
        match self {
            ServiceClass::Hp => 0,
            ServiceClass::Be => 1,
        }
    }

    const fn rank(self) -> u8 {
        match self {
            ServiceClass::Hp => 1,
            ServiceClass::Be => 0,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            ServiceClass::Hp => "HP",
            ServiceClass::Be => "BE",
        }
    }
}

impl PartialOrd for ServiceClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ServiceClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub onu_id: OnuId,
    /// Class the packet was generated with.
    pub class: ServiceClass,
    pub size_bytes: u32,
    pub arrival_time: SimTime,
    /// Completion of transmission, set once the packet has been sent.
    pub departure_time: Option<SimTime>,
    /// Class after reordering: `Be` for a demoted HP packet, `Hp` for a BE
    /// packet carried in a steady slot.
    pub effective_class: ServiceClass,
    pub promoted: bool,
}

impl Packet {
    pub fn new(id: PacketId, onu_id: OnuId, class: ServiceClass, size_bytes: u32, arrival_time: SimTime) -> Self {
        Packet {
            id,
            onu_id,
            class,
            size_bytes,
            arrival_time,
            departure_time: None,
            effective_class: class,
            promoted: false,
        }
    }

    /// HP packet that was policed into the BE queue, whether or not it
    /// later rode a steady slot again.
    pub fn demoted(&self) -> bool {
        self.class == ServiceClass::Hp && (self.effective_class == ServiceClass::Be || self.promoted)
    }

    /// The class-based queue the packet was admitted to. Delay statistics
    /// are grouped by this class.
    pub fn queue_class(&self) -> ServiceClass {
        if self.promoted {
            ServiceClass::Be
        } else {
            self.effective_class
        }
    }

    pub fn delay(&self) -> Option<SimTime> {
        self.departure_time.map(|d| d - self.arrival_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hp_outranks_be() {
        assert!(ServiceClass::Hp > ServiceClass::Be);
        assert_eq!(ServiceClass::Hp.max(ServiceClass::Be), ServiceClass::Hp);
    }

    #[test]
    fn queue_class_tracks_reordering() {
        let mut p = Packet::new(1, 0, ServiceClass::Hp, 552, SimTime::ZERO);
        assert_eq!(p.queue_class(), ServiceClass::Hp);
        p.effective_class = ServiceClass::Be;
        assert!(p.demoted());
        assert_eq!(p.queue_class(), ServiceClass::Be);

        let mut q = Packet::new(2, 0, ServiceClass::Be, 40, SimTime::ZERO);
        q.effective_class = ServiceClass::Hp;
        q.promoted = true;
        assert_eq!(q.queue_class(), ServiceClass::Be);
        assert!(!q.demoted());

        p.effective_class = ServiceClass::Hp;
        p.promoted = true;
        assert!(p.demoted());
        assert_eq!(p.queue_class(), ServiceClass::Be);
    }
}
