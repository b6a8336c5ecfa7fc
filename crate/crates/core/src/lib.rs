//! Discrete-event simulator of the upstream channel of an Ethernet passive
//! optical network.
//!
//! Two bandwidth allocation schemes are provided: hybrid slot-size/rate
//! (`hssr`), which reserves a fixed steady slot per ONU for high-priority
//! traffic and shares one dynamic region for best effort, and the
//! conventional slot-size scheme (`ss`) that sizes one mixed slot per ONU
//! from its queue report.

pub mod cli;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod olt;
pub mod onu;
pub mod packet;
pub mod sweep;
pub mod time;
pub mod traffic;

pub use config::{validate, ConfigError, NetworkConfig, ScenarioConfig, SchedulerKind, ValidatedConfig};
pub use engine::{run, SimError, Simulation};
pub use metrics::MetricsSummary;
pub use packet::{OnuId, Packet, ServiceClass};
pub use time::SimTime;
