//! Scenario configuration, its JSON form, and validation.
//!
//! `ScenarioConfig` is what users write. `validate` checks every invariant
//! at once and either returns a [`ValidatedConfig`] carrying the derived
//! quantities the simulator needs, or the full list of violations.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::OnuId;
use crate::time::{bytes_to_duration, duration_to_bytes, SimTime, NANOS_PER_SEC};
use crate::traffic::{SizeDistribution, SizeDistributionError};

pub const MIN_GUARD_TIME: SimTime = SimTime::from_nanos(20);
pub const MAX_GUARD_TIME: SimTime = SimTime::from_micros(1);
/// Share of the line rate reserved for HP subscriptions by default.
pub const DEFAULT_HP_SHARE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Hssr,
    Ss,
}

impl SchedulerKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Hssr => "hssr",
            SchedulerKind::Ss => "ss",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hssr" => Ok(SchedulerKind::Hssr),
            "ss" => Ok(SchedulerKind::Ss),
            other => Err(format!("unknown scheduler `{other}` (expected \"hssr\" or \"ss\")")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub n_onus: u32,
    pub line_rate_bps: u64,
    pub frame_duration: SimTime,
    pub guard_time: SimTime,
    /// One entry per ONU. When absent the ONUs are spread evenly over
    /// `[min_distance_km, max_distance_km]`.
    pub onu_distances_km: Option<Vec<f64>>,
    pub propagation_us_per_km: f64,
    /// Defaults to `0.3 * line_rate_bps / n_onus`.
    pub subscribed_hp_bps_per_onu: Option<u64>,
    pub ranging_interval: SimTime,
    pub report_overhead_bytes: u32,
    pub lookahead_depth: u32,
    /// Per class queue.
    pub queue_capacity_bytes: u64,
    pub min_distance_km: f64,
    pub max_distance_km: f64,
    pub ranging_enabled: bool,
    pub reply_turnaround: SimTime,
    pub ranging_reply_bytes: u32,
    /// Ranging error bound as a fraction of the guard time.
    pub ranging_error_fraction: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_onus: 16,
            line_rate_bps: 1_000_000_000,
            frame_duration: SimTime::from_millis(1),
            guard_time: SimTime::from_nanos(100),
            onu_distances_km: None,
            propagation_us_per_km: 5.0,
            subscribed_hp_bps_per_onu: None,
            ranging_interval: SimTime::from_secs(10),
            report_overhead_bytes: 64,
            lookahead_depth: 8,
            queue_capacity_bytes: 10_000_000,
            min_distance_km: 2.0,
            max_distance_km: 20.0,
            ranging_enabled: true,
            reply_turnaround: SimTime::ZERO,
            ranging_reply_bytes: 64,
            ranging_error_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeEntry {
    pub size: u32,
    pub weight: f64,
}

/// A new ONU that powers up at `time` and waits to be ranged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinSpec {
    pub time: SimTime,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub scheduler: SchedulerKind,
    pub offered_load: f64,
    pub hp_fraction: f64,
    pub sim_duration: SimTime,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub allow_hp_oversubscription: bool,
    pub size_distribution: Vec<SizeEntry>,
    pub joins: Vec<JoinSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            network: NetworkConfig::default(),
            scheduler: SchedulerKind::Hssr,
            offered_load: 0.5,
            hp_fraction: 0.3,
            sim_duration: SimTime::from_secs(5),
            warmup_fraction: 0.1,
            seed: 1,
            allow_hp_oversubscription: false,
            size_distribution: SizeDistribution::default()
                .entries()
                .iter()
                .map(|&(size, weight)| SizeEntry { size, weight })
                .collect(),
            joins: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("n_onus must be at least 1")]
    NoOnus,
    #[error("line_rate_bps must be positive")]
    ZeroLineRate,
    #[error("frame_duration must be positive")]
    ZeroFrame,
    #[error("guard_time below 20ns (got {0})")]
    GuardTimeTooSmall(SimTime),
    #[error("guard_time above 1us (got {0})")]
    GuardTimeTooLarge(SimTime),
    #[error("onu_distances_km has {got} entries but n_onus is {expected}")]
    DistanceCount { expected: u32, got: usize },
    #[error("distance of ONU {onu} is {km} km, outside [{min}, {max}] km")]
    DistanceOutOfRange { onu: OnuId, km: f64, min: f64, max: f64 },
    #[error("min_distance_km/max_distance_km must satisfy 0 <= min <= max (got {min}, {max})")]
    BadReach { min: f64, max: f64 },
    #[error("propagation_us_per_km must be positive and finite")]
    BadPropagation,
    #[error("frame/propagation alignment violated: frame_duration {frame} < 4 x max one-way propagation {max_prop}")]
    FrameAlignment { frame: SimTime, max_prop: SimTime },
    #[error("steady part leaves no dynamic part: {steady_end} of steady slots and guards in a {frame} frame")]
    NoDynamicPart { steady_end: SimTime, frame: SimTime },
    #[error("offered_load must lie in [0, 1] (got {0})")]
    OfferedLoad(f64),
    #[error("hp_fraction must lie in [0, 1] (got {0})")]
    HpFraction(f64),
    #[error("warmup_fraction must lie in [0, 1) (got {0})")]
    WarmupFraction(f64),
    #[error("sim_duration {sim} is shorter than one frame ({frame})")]
    SimTooShort { sim: SimTime, frame: SimTime },
    #[error("HP offer {offered_bps:.0} b/s exceeds total subscription {subscribed_bps} b/s (set allow_hp_oversubscription to permit)")]
    HpOversubscribed { offered_bps: f64, subscribed_bps: u64 },
    #[error("subscribed_hp_bps_per_onu rounds to zero bytes per frame")]
    ZeroSubscription,
    #[error("lookahead_depth must be at least 1")]
    ZeroLookahead,
    #[error("queue_capacity_bytes must be at least one maximum-size packet")]
    QueueTooSmall,
    #[error("size_distribution: {0}")]
    SizeDistribution(#[from] SizeDistributionError),
    #[error("ranging_interval must be at least one frame")]
    RangingInterval,
    #[error("ranging_error_fraction must lie in [0, 0.5) (got {0})")]
    RangingError(f64),
    #[error("frame too small for non-intrusive ranging: reply window ends at {window_end} after frame start, frame is {frame}")]
    RangingWindow { window_end: SimTime, frame: SimTime },
    #[error("join {index} at {time} is not before sim end")]
    JoinTime { index: usize, time: SimTime },
    #[error("join {index} distance {km} km outside [{min}, {max}] km")]
    JoinDistance { index: usize, km: f64, min: f64, max: f64 },
    #[error("joins require ranging_enabled")]
    JoinWithoutRanging,
    #[error("time arithmetic overflow while deriving {0}")]
    Overflow(&'static str),
}

/// A configuration that satisfied every invariant, plus derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    scenario: ScenarioConfig,
    sizes: SizeDistribution,
    distances_km: Vec<f64>,
    propagation: Vec<SimTime>,
    subscribed_hp_bps: u64,
    subscribed_bytes_per_frame: u64,
    steady_slot_duration: SimTime,
    report_duration: SimTime,
    reply_duration: SimTime,
    n_frames: u64,
}

pub fn propagation_delay(distance_km: f64, us_per_km: f64) -> SimTime {
    SimTime::from_nanos((distance_km * us_per_km * 1_000.0).round() as u64)
}

/// Check every invariant of `config`; all violations are reported.
pub fn validate(config: &ScenarioConfig) -> Result<ValidatedConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let net = &config.network;

    if net.n_onus == 0 {
        errors.push(ConfigError::NoOnus);
    }
    if net.line_rate_bps == 0 {
        errors.push(ConfigError::ZeroLineRate);
    }
    if net.frame_duration == SimTime::ZERO {
        errors.push(ConfigError::ZeroFrame);
    }
    if net.guard_time < MIN_GUARD_TIME {
        errors.push(ConfigError::GuardTimeTooSmall(net.guard_time));
    }
    if net.guard_time > MAX_GUARD_TIME {
        errors.push(ConfigError::GuardTimeTooLarge(net.guard_time));
    }
    let reach_ok = net.min_distance_km.is_finite()
        && net.max_distance_km.is_finite()
        && net.min_distance_km >= 0.0
        && net.min_distance_km <= net.max_distance_km;
    if !reach_ok {
        errors.push(ConfigError::BadReach { min: net.min_distance_km, max: net.max_distance_km });
    }
    let prop_ok = net.propagation_us_per_km.is_finite() && net.propagation_us_per_km > 0.0;
    if !prop_ok {
        errors.push(ConfigError::BadPropagation);
    }
    if !(0.0..=1.0).contains(&config.offered_load) {
        errors.push(ConfigError::OfferedLoad(config.offered_load));
    }
    if !(0.0..=1.0).contains(&config.hp_fraction) {
        errors.push(ConfigError::HpFraction(config.hp_fraction));
    }
    if !(0.0..1.0).contains(&config.warmup_fraction) {
        errors.push(ConfigError::WarmupFraction(config.warmup_fraction));
    }
    if config.sim_duration < net.frame_duration || config.sim_duration == SimTime::ZERO {
        errors.push(ConfigError::SimTooShort { sim: config.sim_duration, frame: net.frame_duration });
    }
    if net.lookahead_depth == 0 {
        errors.push(ConfigError::ZeroLookahead);
    }
    if !(0.0..0.5).contains(&net.ranging_error_fraction) {
        errors.push(ConfigError::RangingError(net.ranging_error_fraction));
    }
    if net.ranging_interval < net.frame_duration {
        errors.push(ConfigError::RangingInterval);
    }

    let sizes = match SizeDistribution::new(
        config.size_distribution.iter().map(|e| (e.size, e.weight)).collect(),
    ) {
        Ok(d) => Some(d),
        Err(e) => {
            errors.push(e.into());
            None
        }
    };
    if let Some(d) = &sizes {
        if net.queue_capacity_bytes < d.max_size() as u64 {
            errors.push(ConfigError::QueueTooSmall);
        }
    }

    let distances_km: Vec<f64> = match &net.onu_distances_km {
        Some(list) => {
            if list.len() != net.n_onus as usize {
                errors.push(ConfigError::DistanceCount { expected: net.n_onus, got: list.len() });
            }
            list.clone()
        }
        None => default_distances(net.n_onus, net.min_distance_km, net.max_distance_km),
    };
    if reach_ok {
        for (i, &km) in distances_km.iter().enumerate() {
            if !(km.is_finite() && km >= net.min_distance_km && km <= net.max_distance_km) {
                errors.push(ConfigError::DistanceOutOfRange {
                    onu: i as OnuId,
                    km,
                    min: net.min_distance_km,
                    max: net.max_distance_km,
                });
            }
        }
        for (index, join) in config.joins.iter().enumerate() {
            if !(join.distance_km.is_finite()
                && join.distance_km >= net.min_distance_km
                && join.distance_km <= net.max_distance_km)
            {
                errors.push(ConfigError::JoinDistance {
                    index,
                    km: join.distance_km,
                    min: net.min_distance_km,
                    max: net.max_distance_km,
                });
            }
        }
    }
    for (index, join) in config.joins.iter().enumerate() {
        if join.time >= config.sim_duration {
            errors.push(ConfigError::JoinTime { index, time: join.time });
        }
    }
    if !config.joins.is_empty() && !net.ranging_enabled {
        errors.push(ConfigError::JoinWithoutRanging);
    }

    // Everything below divides by or multiplies these; bail out early if
    // they are unusable.
    if net.n_onus == 0 || net.line_rate_bps == 0 || net.frame_duration == SimTime::ZERO || !prop_ok {
        return Err(errors);
    }

    let subscribed_hp_bps = net.subscribed_hp_bps_per_onu.unwrap_or_else(|| {
        (DEFAULT_HP_SHARE * net.line_rate_bps as f64 / net.n_onus as f64).floor() as u64
    });
    let subscribed_bytes_per_frame = ((subscribed_hp_bps as u128 * net.frame_duration.as_nanos() as u128)
        / (8 * NANOS_PER_SEC as u128)) as u64;
    if subscribed_bytes_per_frame == 0 && config.hp_fraction > 0.0 && config.offered_load > 0.0 {
        errors.push(ConfigError::ZeroSubscription);
    }

    let offered_hp_bps = config.offered_load * config.hp_fraction * net.line_rate_bps as f64;
    let total_subscribed = subscribed_hp_bps.saturating_mul(net.n_onus as u64);
    if !config.allow_hp_oversubscription && offered_hp_bps > total_subscribed as f64 * (1.0 + 1e-9) {
        errors.push(ConfigError::HpOversubscribed { offered_bps: offered_hp_bps, subscribed_bps: total_subscribed });
    }

    let propagation: Vec<SimTime> = distances_km
        .iter()
        .map(|&km| propagation_delay(km, net.propagation_us_per_km))
        .collect();
    let max_prop = propagation_delay(net.max_distance_km.max(0.0), net.propagation_us_per_km)
        .max(propagation.iter().copied().max().unwrap_or(SimTime::ZERO));
    if max_prop.checked_mul(4).map(|t| t > net.frame_duration).unwrap_or(true) {
        errors.push(ConfigError::FrameAlignment { frame: net.frame_duration, max_prop });
    }

    let steady_bytes = subscribed_bytes_per_frame + net.report_overhead_bytes as u64;
    let (steady_slot_duration, report_duration, reply_duration) = match (
        bytes_to_duration(steady_bytes, net.line_rate_bps),
        bytes_to_duration(net.report_overhead_bytes as u64, net.line_rate_bps),
        bytes_to_duration(net.ranging_reply_bytes as u64, net.line_rate_bps),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        _ => {
            errors.push(ConfigError::Overflow("slot durations"));
            return Err(errors);
        }
    };

    let max_population = net.n_onus as u64 + config.joins.len() as u64;
    let steady_end = (steady_slot_duration.as_nanos() as u128 + net.guard_time.as_nanos() as u128)
        * max_population as u128;
    let steady_end = SimTime::from_nanos(u64::try_from(steady_end).unwrap_or(u64::MAX));
    // The dynamic part needs room for at least one guard and one byte.
    let min_dynamic = net.guard_time.as_nanos() as u128
        + bytes_to_duration(1, net.line_rate_bps).map(|t| t.as_nanos()).unwrap_or(0) as u128;
    if steady_end.as_nanos() as u128 + min_dynamic > net.frame_duration.as_nanos() as u128 {
        errors.push(ConfigError::NoDynamicPart { steady_end, frame: net.frame_duration });
    } else if net.ranging_enabled
        && (net.ranging_interval <= config.sim_duration || !config.joins.is_empty())
        && reach_ok
    {
        let window = crate::olt::ranging::reply_window_offsets(
            steady_end,
            net.guard_time,
            propagation_delay(net.min_distance_km, net.propagation_us_per_km),
            propagation_delay(net.max_distance_km, net.propagation_us_per_km),
            net.reply_turnaround,
            reply_duration,
        );
        if window.latest > net.frame_duration {
            errors.push(ConfigError::RangingWindow { window_end: window.latest, frame: net.frame_duration });
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    let n_frames = config.sim_duration.as_nanos().div_ceil(net.frame_duration.as_nanos());
    Ok(ValidatedConfig {
        scenario: config.clone(),
        sizes: sizes.expect("checked above"),
        distances_km,
        propagation,
        subscribed_hp_bps,
        subscribed_bytes_per_frame,
        steady_slot_duration,
        report_duration,
        reply_duration,
        n_frames,
    })
}

fn default_distances(n: u32, min: f64, max: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl ValidatedConfig {
    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.scenario.network
    }

    pub fn scheduler(&self) -> SchedulerKind {
        self.scenario.scheduler
    }

    pub fn sizes(&self) -> &SizeDistribution {
        &self.sizes
    }

    pub fn n_onus(&self) -> u32 {
        self.scenario.network.n_onus
    }

    pub fn line_rate_bps(&self) -> u64 {
        self.scenario.network.line_rate_bps
    }

    pub fn frame_duration(&self) -> SimTime {
        self.scenario.network.frame_duration
    }

    pub fn guard_time(&self) -> SimTime {
        self.scenario.network.guard_time
    }

    pub fn report_overhead_bytes(&self) -> u64 {
        self.scenario.network.report_overhead_bytes as u64
    }

    pub fn report_duration(&self) -> SimTime {
        self.report_duration
    }

    pub fn reply_duration(&self) -> SimTime {
        self.reply_duration
    }

    pub fn lookahead(&self) -> usize {
        self.scenario.network.lookahead_depth as usize
    }

    pub fn distances_km(&self) -> &[f64] {
        &self.distances_km
    }

    /// One-way propagation of an initial ONU.
    pub fn propagation(&self, onu: OnuId) -> SimTime {
        self.propagation[onu as usize]
    }

    pub fn propagation_for_distance(&self, km: f64) -> SimTime {
        propagation_delay(km, self.scenario.network.propagation_us_per_km)
    }

    pub fn min_propagation(&self) -> SimTime {
        self.propagation_for_distance(self.scenario.network.min_distance_km)
    }

    pub fn max_propagation(&self) -> SimTime {
        self.propagation_for_distance(self.scenario.network.max_distance_km)
    }

    pub fn subscribed_hp_bps(&self) -> u64 {
        self.subscribed_hp_bps
    }

    /// HP bytes an ONU may send per frame; also the metering budget.
    pub fn subscribed_bytes_per_frame(&self) -> u64 {
        self.subscribed_bytes_per_frame
    }

    /// Steady slot size including the report.
    pub fn steady_slot_bytes(&self) -> u64 {
        self.subscribed_bytes_per_frame + self.report_overhead_bytes()
    }

    pub fn steady_slot_duration(&self) -> SimTime {
        self.steady_slot_duration
    }

    pub fn bytes_in(&self, window: SimTime) -> u64 {
        duration_to_bytes(window, self.line_rate_bps())
    }

    pub fn duration_of(&self, bytes: u64) -> SimTime {
        bytes_to_duration(bytes, self.line_rate_bps()).expect("validated rate")
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn sim_end(&self) -> SimTime {
        SimTime::from_nanos(self.n_frames * self.frame_duration().as_nanos())
    }

    pub fn warmup_end(&self) -> SimTime {
        SimTime::from_nanos(
            (self.scenario.sim_duration.as_nanos() as f64 * self.scenario.warmup_fraction).round() as u64,
        )
    }

    /// Upper bound on the ranging error magnitude.
    pub fn ranging_error_bound(&self) -> SimTime {
        SimTime::from_nanos(
            (self.guard_time().as_nanos() as f64 * self.scenario.network.ranging_error_fraction).floor() as u64,
        )
    }

    /// Smallest gap the receiver tolerates between bursts of different
    /// ONUs: the guard time less the worst-case misalignment of two
    /// independently ranged ONUs.
    pub fn min_burst_separation(&self) -> SimTime {
        self.guard_time() - self.ranging_error_bound() - self.ranging_error_bound()
    }

    pub fn hp_rate_bps(&self) -> f64 {
        let s = &self.scenario;
        s.offered_load * s.hp_fraction * s.network.line_rate_bps as f64 / s.network.n_onus as f64
    }

    pub fn be_rate_bps(&self) -> f64 {
        let s = &self.scenario;
        s.offered_load * (1.0 - s.hp_fraction) * s.network.line_rate_bps as f64 / s.network.n_onus as f64
    }
}
