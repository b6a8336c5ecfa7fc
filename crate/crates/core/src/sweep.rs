//! Parameter sweeps, per-point seeds, parallel execution and plot data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{validate, ConfigError, ScenarioConfig, SchedulerKind};
use crate::engine::{SimError, Simulation};
use crate::metrics::{CsvRow, MetricsSummary};
use crate::packet::ServiceClass;
use crate::time::SimTime;

pub const DEFAULT_MAX_POINTS: usize = 512;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown sweep parameter `{0}` (expected offered_load, n_onus, guard_time or scheduler)")]
    UnknownParameter(String),
    #[error("sweep `{0}` must look like NAME=SPEC")]
    Syntax(String),
    #[error("sweep `{name}`: bad value `{value}`: {reason}")]
    BadValue { name: String, value: String, reason: String },
    #[error("sweep `{0}` given twice")]
    Duplicate(String),
    #[error("sweep expands to {points} points, above the cap of {cap}")]
    TooManyPoints { points: usize, cap: usize },
    #[error("point {index} is invalid: {}", errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPoint { index: usize, errors: Vec<ConfigError> },
    #[error("point {index} aborted: {source}")]
    Run { index: usize, source: SimError },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepParam {
    OfferedLoad,
    NOnus,
    GuardTime,
    Scheduler,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::OfferedLoad => "offered_load",
            SweepParam::NOnus => "n_onus",
            SweepParam::GuardTime => "guard_time",
            SweepParam::Scheduler => "scheduler",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offered_load" | "load" => Ok(SweepParam::OfferedLoad),
            "n_onus" | "onus" => Ok(SweepParam::NOnus),
            "guard_time" => Ok(SweepParam::GuardTime),
            "scheduler" => Ok(SweepParam::Scheduler),
            other => Err(SweepError::UnknownParameter(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Load(f64),
    Onus(u32),
    Guard(SimTime),
    Scheduler(SchedulerKind),
}

impl SweepValue {
    fn apply(self, cfg: &mut ScenarioConfig) {
        match self {
            SweepValue::Load(x) => cfg.offered_load = x,
            SweepValue::Onus(n) => cfg.network.n_onus = n,
            SweepValue::Guard(t) => cfg.network.guard_time = t,
            SweepValue::Scheduler(s) => cfg.scheduler = s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
}

/// Loads are kept on a 1e-9 grid so that ranges such as 0.1:1.0:0.1 give
/// the same values as the equivalent explicit list.
pub fn round_load(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn range_f64(name: &str, spec: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, SweepError> {
    let bad = |reason: &str| SweepError::BadValue { name: name.into(), value: spec.into(), reason: reason.into() };
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
        return Err(bad("step must be positive and bounds finite"));
    }
    if stop < start {
        return Err(bad("stop is below start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(bad("range too long"));
    }
    Ok((0..=n).map(|i| round_load(start + i as f64 * step)).collect())
}

fn range_u64(name: &str, spec: &str, start: u64, stop: u64, step: u64) -> Result<Vec<u64>, SweepError> {
    let bad = |reason: &str| SweepError::BadValue { name: name.into(), value: spec.into(), reason: reason.into() };
    if step == 0 {
        return Err(bad("step must be positive"));
    }
    if stop < start {
        return Err(bad("stop is below start"));
    }
    if (stop - start) / step > 1_000_000 {
        return Err(bad("range too long"));
    }
    Ok((start..=stop).step_by(step as usize).collect())
}

impl std::str::FromStr for SweepSpec {
    type Err = SweepError;

    /// `NAME=a,b,c` or `NAME=start:stop:step` (inclusive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, spec) = s.split_once('=').ok_or_else(|| SweepError::Syntax(s.to_string()))?;
        let param: SweepParam = name.trim().parse()?;
        let name = param.name();
        let spec = spec.trim();
        let bad = |value: &str, reason: String| SweepError::BadValue { name: name.into(), value: value.into(), reason };
        let parts: Vec<&str> = spec.split(':').collect();
        let values = match (param, parts.as_slice()) {
            (SweepParam::Scheduler, [_, _, _]) => return Err(bad(spec, "schedulers take a list".into())),
            (SweepParam::OfferedLoad, [a, b, c]) => {
                let p = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(v, e.to_string()));
                range_f64(name, spec, p(a)?, p(b)?, p(c)?)?.into_iter().map(SweepValue::Load).collect()
            }
            (SweepParam::NOnus, [a, b, c]) => {
                let p = |v: &str| v.trim().parse::<u64>().map_err(|e| bad(v, e.to_string()));
                range_u64(name, spec, p(a)?, p(b)?, p(c)?)?
                    .into_iter()
                    .map(|n| u32::try_from(n).map(SweepValue::Onus).map_err(|e| bad(spec, e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            (SweepParam::GuardTime, [a, b, c]) => {
                let p = |v: &str| v.trim().parse::<SimTime>().map_err(|e| bad(v, e.to_string()));
                range_u64(name, spec, p(a)?.as_nanos(), p(b)?.as_nanos(), p(c)?.as_nanos())?
                    .into_iter()
                    .map(|ns| SweepValue::Guard(SimTime::from_nanos(ns)))
                    .collect()
            }
            (_, [_]) => spec
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    match param {
                        SweepParam::OfferedLoad => {
                            v.parse::<f64>().map(|x| SweepValue::Load(round_load(x))).map_err(|e| bad(v, e.to_string()))
                        }
                        SweepParam::NOnus => v.parse::<u32>().map(SweepValue::Onus).map_err(|e| bad(v, e.to_string())),
                        SweepParam::GuardTime => v.parse::<SimTime>().map(SweepValue::Guard).map_err(|e| bad(v, e.to_string())),
                        SweepParam::Scheduler => v.parse::<SchedulerKind>().map(SweepValue::Scheduler).map_err(|e| bad(v, e)),
                    }
                })
                .collect::<Result<_, _>>()?,
            _ => return Err(bad(spec, "expected a comma list or start:stop:step".into())),
        };
        Ok(SweepSpec { param, values })
    }
}

/// Seed of one point: a hash of the base seed and every parameter that
/// shapes the offered traffic. The scheduler is left out so that both
/// schemes see the same packets.
pub fn point_seed(base_seed: u64, cfg: &ScenarioConfig) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    let canonical = format!(
        "n_onus={};guard_time={};offered_load={:.9}",
        cfg.network.n_onus,
        cfg.network.guard_time.as_nanos(),
        round_load(cfg.offered_load)
    );
    h.update(canonical.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One expanded point: the scenario to run (with its point seed) and the
/// seed the user gave.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub scenario: ScenarioConfig,
    pub base_seed: u64,
}

/// Cross product of all sweeps over `base`, in a fixed order.
pub fn expand(base: &ScenarioConfig, specs: &[SweepSpec], cap: usize) -> Result<Vec<Point>, SweepError> {
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.param) {
            return Err(SweepError::Duplicate(s.param.name().into()));
        }
    }
    let total = specs.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.values.len())).unwrap_or(usize::MAX);
    if total > cap {
        return Err(SweepError::TooManyPoints { points: total, cap });
    }
    let mut scenarios = vec![base.clone()];
    for s in specs {
        scenarios = scenarios
            .into_iter()
            .flat_map(|sc| {
                s.values.iter().map(move |v| {
                    let mut next = sc.clone();
                    v.apply(&mut next);
                    next
                })
            })
            .collect();
    }
    Ok(scenarios
        .into_iter()
        .map(|mut scenario| {
            scenario.offered_load = round_load(scenario.offered_load);
            scenario.seed = point_seed(base.seed, &scenario);
            Point { scenario, base_seed: base.seed }
        })
        .collect())
}

fn sort_key(s: &MetricsSummary) -> (SchedulerKind, u32, u64, u64, u64) {
    (s.scheduler, s.n_onus, s.guard_time_ns, (s.offered_load * 1e9).round() as u64, s.point_seed)
}

/// Validate and run every point on `jobs` worker threads. The result is
/// sorted by (scheduler, n_onus, guard_time, offered_load), whatever the
/// completion order.
pub fn run_points(points: &[Point], jobs: usize) -> Result<Vec<MetricsSummary>, SweepError> {
    let validated = points
        .iter()
        .enumerate()
        .map(|(index, p)| validate(&p.scenario).map_err(|errors| SweepError::InvalidPoint { index, errors }))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let mut results = pool.install(|| {
        validated
            .par_iter()
            .zip(points.par_iter())
            .enumerate()
            .map(|(index, (cfg, p))| {
                let mut summary = Simulation::new(cfg).run().map_err(|source| SweepError::Run { index, source })?;
                summary.seed = p.base_seed;
                Ok(summary)
            })
            .collect::<Result<Vec<_>, SweepError>>()
    })?;
    results.sort_by(|a, b| {
        sort_key(a).partial_cmp(&sort_key(b)).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(results)
}

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("no rows in the results file")]
    Empty,
    #[error("results do not cover the `{0}` dimension")]
    MissingDimension(&'static str),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub const FIG5: &str = "fig5_delay_vs_load.dat";
pub const FIG6: &str = "fig6_pdv_vs_load.dat";
pub const FIG7: &str = "fig7_be_penalty.dat";

type CurveKey = (SchedulerKind, u32, u64);
type Column<'a> = (String, Box<dyn Fn(&CurveKey, u64) -> Option<f64> + 'a>);

fn load_key(x: f64) -> u64 {
    (round_load(x) * 1e9).round() as u64
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}"),
        None => "nan".into(),
    }
}

/// Curve label, qualified by ONU count and guard time only when the
/// results hold more than one of them.
fn label(key: &CurveKey, many_onus: bool, many_guards: bool) -> String {
    let mut s = key.0.to_string();
    if many_onus {
        let _ = write!(s, "_n{}", key.1);
    }
    if many_guards {
        let _ = write!(s, "_g{}ns", key.2);
    }
    s
}

struct Table {
    loads: Vec<u64>,
    curves: Vec<CurveKey>,
    many_onus: bool,
    many_guards: bool,
    rows: BTreeMap<(CurveKey, u64, ServiceClass), CsvRow>,
}

impl Table {
    fn new(rows: &[CsvRow]) -> Result<Self, FigureError> {
        if rows.is_empty() {
            return Err(FigureError::Empty);
        }
        let loads: BTreeSet<u64> = rows.iter().map(|r| load_key(r.offered_load)).collect();
        let schedulers: BTreeSet<SchedulerKind> = rows.iter().map(|r| r.scheduler).collect();
        if loads.len() < 2 {
            return Err(FigureError::MissingDimension("offered_load"));
        }
        if schedulers.len() < 2 {
            return Err(FigureError::MissingDimension("scheduler"));
        }
        let curves: BTreeSet<CurveKey> = rows.iter().map(|r| (r.scheduler, r.n_onus, r.guard_time_ns)).collect();
        let onus: BTreeSet<u32> = rows.iter().map(|r| r.n_onus).collect();
        let guards: BTreeSet<u64> = rows.iter().map(|r| r.guard_time_ns).collect();
        let mut curves: Vec<CurveKey> = curves.into_iter().collect();
        // group by ONU count and guard, schedulers side by side
        curves.sort_by_key(|k| (k.1, k.2, k.0));
        Ok(Table {
            loads: loads.into_iter().collect(),
            curves,
            many_onus: onus.len() > 1,
            many_guards: guards.len() > 1,
            rows: rows
                .iter()
                .map(|r| (((r.scheduler, r.n_onus, r.guard_time_ns), load_key(r.offered_load), r.class), r.clone()))
                .collect(),
        })
    }

    fn get(&self, curve: &CurveKey, load: u64, class: ServiceClass) -> Option<&CsvRow> {
        self.rows.get(&(*curve, load, class))
    }

    fn render(&self, columns: &[Column<'_>]) -> String {
        let mut out = String::from("# load");
        for (name, _) in columns {
            out.push(' ');
            out.push_str(name);
        }
        out.push('\n');
        for &load in &self.loads {
            out.push_str(&format!("{}", load as f64 / 1e9));
            for (_, f) in columns {
                out.push(' ');
                out.push_str(&fmt_value(f(&self.curves[0], load)));
            }
            out.push('\n');
        }
        out
    }

    fn per_curve<'a>(
        &'a self,
        suffix: &str,
        value: impl Fn(&CsvRow) -> Option<f64> + Copy + 'a,
        class: ServiceClass,
    ) -> Vec<Column<'a>> {
        self.curves
            .iter()
            .map(|c| {
                let c = *c;
                let name = format!("{}{}", label(&c, self.many_onus, self.many_guards), suffix);
                (name, Box::new(move |_: &CurveKey, load| self.get(&c, load, class).and_then(value)) as _)
            })
            .collect()
    }
}

/// Plot data for delay, delay variation and BE penalty against load.
pub fn figure_data(rows: &[CsvRow]) -> Result<[(&'static str, String); 3], FigureError> {
    let t = Table::new(rows)?;
    let mut fig5 = t.per_curve("_hp_delay", |r| r.mean_delay_us, ServiceClass::Hp);
    fig5.extend(t.per_curve("_be_delay", |r| r.mean_delay_us, ServiceClass::Be));
    let mut fig6 = t.per_curve("_hp_pdv", |r| r.pdv_us, ServiceClass::Hp);
    fig6.extend(t.per_curve("_be_pdv", |r| r.pdv_us, ServiceClass::Be));
    let t7 = Table { many_onus: true, ..Table::new(rows)? };
    let fig7 = t7.per_curve("_penalty_pct", |r| r.be_penalty.map(|p| p * 100.0), ServiceClass::Be);
    Ok([(FIG5, t.render(&fig5)), (FIG6, t.render(&fig6)), (FIG7, t7.render(&fig7))])
}

pub fn emit_figure_data(rows: &[CsvRow], dir: &Path) -> Result<Vec<PathBuf>, FigureError> {
    let figures = figure_data(rows)?;
    std::fs::create_dir_all(dir).map_err(|source| FigureError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    for (name, text) in figures {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| FigureError::Io { path: path.display().to_string(), source })?;
        written.push(path);
    }
    Ok(written)
}
