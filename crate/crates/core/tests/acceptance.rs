//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing every line so that `cargo test` reports the
//! outcome without hiding the remaining criteria. Set `ACCEPTANCE_STRICT=1`
//! to exit 1 when any criterion fails. `ACCEPTANCE_SECS` overrides the
//! simulated time of the stochastic runs (default 5).

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use epon_hssr::config::{validate, JoinSpec, ScenarioConfig, SchedulerKind};
use epon_hssr::engine::{ScheduleRecord, Simulation};
use epon_hssr::metrics::{MetricsSummary, Moments};
use epon_hssr::onu::pack_slot;
use epon_hssr::sweep::{expand, run_points, SweepSpec};
use epon_hssr::{ServiceClass, SimTime};

const HP_DELAY_LOW_US: f64 = 500.0;
const HP_DELAY_HIGH_US: f64 = 800.0;
const HP_DELAY_SPREAD_US: f64 = 120.0;
const HP_GAP_US: f64 = 200.0;
const HSSR_PDV_MAX_US: f64 = 300.0;
const PDV_GAP_US: f64 = 50.0;
const HSSR_PENALTY_MAX: f64 = 0.02;
const SS_PENALTY_MIN: f64 = 0.04;
const PENALTY_RATIO: f64 = 2.0;
const MODERATE_LOAD: f64 = 0.5;
const HIGH_LOADS: [f64; 4] = [0.7, 0.8, 0.9, 1.0];
const DEMOTION_TARGET: f64 = 1.0 / 6.0;
const DEMOTION_REL_TOL: f64 = 0.20;
const ORACLE_REL_TOL: f64 = 1e-9;
const JOIN_DISTANCES_KM: [f64; 5] = [2.0, 5.0, 11.0, 17.0, 20.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs() -> SimTime {
    let s: u64 = std::env::var("ACCEPTANCE_SECS").ok().and_then(|v| v.parse().ok()).unwrap_or(5);
    SimTime::from_secs(s)
}

fn base(n_onus: u32) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.network.n_onus = n_onus;
    cfg.sim_duration = secs();
    cfg
}

/// Results of the stochastic sweep, keyed by (scheduler, n_onus, load in 1e-3).
struct Sweep {
    runs: BTreeMap<(SchedulerKind, u32, u64), MetricsSummary>,
}

fn key(load: f64) -> u64 {
    (load * 1000.0).round() as u64
}

impl Sweep {
    fn run() -> Self {
        let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let groups: [(u32, &str, &str); 4] = [
            (16, "offered_load=0.1:0.9:0.1", "scheduler=hssr"),
            (16, "offered_load=0.5,0.7,0.8,0.9,1.0", "scheduler=ss"),
            (16, "offered_load=1.0", "scheduler=hssr"),
            (32, "offered_load=1.0", "scheduler=hssr,ss"),
        ];
        let mut points = Vec::new();
        for (n, loads, sched) in groups {
            let specs: Vec<SweepSpec> = vec![loads.parse().unwrap(), sched.parse().unwrap()];
            points.extend(expand(&base(n), &specs, 512).unwrap());
        }
        let runs = run_points(&points, jobs)
            .expect("sweep runs")
            .into_iter()
            .map(|s| ((s.scheduler, s.n_onus, key(s.offered_load)), s))
            .collect();
        Sweep { runs }
    }

    fn get(&self, s: SchedulerKind, n: u32, load: f64) -> &MetricsSummary {
        &self.runs[&(s, n, key(load))]
    }

    fn hp(&self, s: SchedulerKind, load: f64) -> (f64, f64) {
        let c = self.get(s, 16, load).class(ServiceClass::Hp);
        (c.delay.mean_delay_us.unwrap_or(f64::NAN), c.delay.pdv_us.unwrap_or(f64::NAN))
    }
}

fn sweep_loads() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn c1_flat_hp_delay(sw: &Sweep) -> Outcome {
    let means: Vec<f64> = sweep_loads().iter().map(|&l| sw.hp(SchedulerKind::Hssr, l).0).collect();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = lo >= HP_DELAY_LOW_US && hi <= HP_DELAY_HIGH_US && hi - lo < HP_DELAY_SPREAD_US;
    outcome(
        pass,
        format!(
            "HSSR HP mean over loads 0.1-0.9: min {lo:.1} us, max {hi:.1} us, spread {:.1} us (band [{HP_DELAY_LOW_US}, {HP_DELAY_HIGH_US}], spread < {HP_DELAY_SPREAD_US})",
            hi - lo
        ),
    )
}

fn c2_hp_gap(sw: &Sweep) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for l in HIGH_LOADS {
        let gap = sw.hp(SchedulerKind::Ss, l).0 - sw.hp(SchedulerKind::Hssr, l).0;
        pass &= gap >= HP_GAP_US;
        parts.push(format!("{l}: {gap:.1}"));
    }
    outcome(pass, format!("SS - HSSR HP mean (us) at {} (need >= {HP_GAP_US})", parts.join(", ")))
}

fn c3_pdv(sw: &Sweep) -> Outcome {
    let mut loads = sweep_loads();
    loads.push(1.0);
    let worst = loads.iter().map(|&l| sw.hp(SchedulerKind::Hssr, l).1).fold(f64::NEG_INFINITY, f64::max);
    let mut pass = worst < HSSR_PDV_MAX_US;
    let mut parts = Vec::new();
    for l in HIGH_LOADS {
        let gap = sw.hp(SchedulerKind::Ss, l).1 - sw.hp(SchedulerKind::Hssr, l).1;
        pass &= gap >= PDV_GAP_US;
        parts.push(format!("{l}: {gap:.1}"));
    }
    outcome(
        pass,
        format!(
            "max HSSR HP sigma {worst:.1} us (< {HSSR_PDV_MAX_US}); SS - HSSR sigma (us) at {} (need >= {PDV_GAP_US})",
            parts.join(", ")
        ),
    )
}

fn c4_be_penalty(sw: &Sweep) -> Outcome {
    let pen = |s, n| sw.get(s, n, 1.0).be_penalty().unwrap_or(f64::NAN);
    let h16 = pen(SchedulerKind::Hssr, 16);
    let h32 = pen(SchedulerKind::Hssr, 32);
    let s32 = pen(SchedulerKind::Ss, 32);
    let pass = h16 < HSSR_PENALTY_MAX && h32 < HSSR_PENALTY_MAX && s32 > SS_PENALTY_MIN && s32 > PENALTY_RATIO * h32;
    let demoted = sw.get(SchedulerKind::Hssr, 32, 1.0);
    let hp_gen = demoted.class(ServiceClass::Hp).generated_bytes.max(1);
    outcome(
        pass,
        format!(
            "load 1.0: HSSR penalty {:.2}% (16 ONUs), {:.2}% (32 ONUs), SS {:.2}% (32 ONUs); need HSSR < 2%, SS > 4% and > 2x HSSR; 32-ONU HSSR demoted {:.1}% of HP bytes",
            h16 * 100.0,
            h32 * 100.0,
            s32 * 100.0,
            demoted.demoted_bytes as f64 / hp_gen as f64 * 100.0
        ),
    )
}

fn c5_be_delay_order(sw: &Sweep) -> Outcome {
    let be = |s| sw.get(s, 16, MODERATE_LOAD).class(ServiceClass::Be).delay.mean_delay_us.unwrap_or(f64::NAN);
    let (h, s) = (be(SchedulerKind::Hssr), be(SchedulerKind::Ss));
    outcome(h >= s, format!("load {MODERATE_LOAD}: HSSR BE mean {h:.1} us, SS BE mean {s:.1} us"))
}

/// HP transmission in a steady slot, keyed by everything except the packet id.
type HpTx = (u64, u32, u64, u64, u64);

fn field<'a>(detail: &'a str, name: &str) -> Option<&'a str> {
    detail.split(';').find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
}

/// Frames flagged quiesced, and the HP steady-slot transmissions of ONUs below
/// `n_initial`. Demoted packets promoted back into a steady slot travel as BE
/// and are left out.
fn hp_transmissions(lines: &[String], n_initial: u32) -> (BTreeSet<u64>, BTreeMap<u64, BTreeSet<HpTx>>) {
    let mut quiesced = BTreeSet::new();
    let mut tx: BTreeMap<u64, BTreeSet<HpTx>> = BTreeMap::new();
    for line in lines {
        let mut it = line.splitn(4, ',');
        let (time, kind, onu, detail) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap_or(""));
        match kind {
            "FrameStart" => {
                if field(detail, "quiesced") == Some("1") {
                    quiesced.insert(field(detail, "frame").unwrap().parse().unwrap());
                }
            }
            "Tx" => {
                let onu: u32 = onu.parse().unwrap();
                if onu >= n_initial
                    || field(detail, "slot") != Some("steady")
                    || field(detail, "class") != Some("HP")
                    || field(detail, "promoted") != Some("0")
                {
                    continue;
                }
                let frame: u64 = field(detail, "frame").unwrap().parse().unwrap();
                tx.entry(frame).or_default().insert((
                    frame,
                    onu,
                    time.parse().unwrap(),
                    field(detail, "size").unwrap().parse().unwrap(),
                    field(detail, "arrival").unwrap().parse().unwrap(),
                ));
            }
            _ => {}
        }
    }
    (quiesced, tx)
}

fn ranging_scenario(join_km: Option<f64>) -> ScenarioConfig {
    let mut cfg = base(16);
    cfg.offered_load = 0.6;
    cfg.sim_duration = SimTime::from_millis(300);
    cfg.network.ranging_interval = SimTime::from_millis(20);
    match join_km {
        Some(km) => {
            cfg.network.ranging_enabled = true;
            cfg.joins = vec![JoinSpec { time: SimTime::from_millis(50), distance_km: km }];
        }
        None => cfg.network.ranging_enabled = false,
    }
    cfg
}

fn traced(cfg: &ScenarioConfig) -> Result<Simulation, String> {
    let v = validate(cfg).map_err(|e| format!("{e:?}"))?;
    let mut sim = Simulation::new(&v);
    sim.capture_trace();
    sim.record_schedules();
    sim.run_in_place().map_err(|e| e.to_string())?;
    Ok(sim)
}

fn c6_ranging() -> Outcome {
    let reference = match traced(&ranging_scenario(None)) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("reference run aborted: {e}")),
    };
    let (_, ref_tx) = hp_transmissions(reference.trace_lines().unwrap(), 16);
    let mut pass = true;
    let mut parts = Vec::new();
    for km in JOIN_DISTANCES_KM {
        let sim = match traced(&ranging_scenario(Some(km))) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                parts.push(format!("{km} km aborted: {e}"));
                continue;
            }
        };
        let (quiesced, tx) = hp_transmissions(sim.trace_lines().unwrap(), 16);
        let diffs = quiesced.iter().filter(|f| tx.get(f) != ref_tx.get(f)).count();
        let hp_events: usize = quiesced.iter().map(|f| tx.get(f).map_or(0, |s| s.len())).sum();
        let log = sim.ranging_log();
        let inside = log.iter().filter(|r| r.result.is_ok() && r.reply_arrival >= r.window.earliest && r.reply_arrival <= r.window.latest).count();
        let joined = sim.olt().table().get(16).is_some_and(|r| r.ranged);
        let ok = diffs == 0 && !quiesced.is_empty() && hp_events > 0 && !log.is_empty() && inside == log.len() && joined;
        pass &= ok;
        parts.push(format!(
            "{km} km: {} quiesced frames, {hp_events} HP tx, {diffs} differing, {inside}/{} replies in window",
            quiesced.len(),
            log.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn logged(cfg: &ScenarioConfig) -> Simulation {
    let v = validate(cfg).expect("valid scenario");
    let mut sim = Simulation::new(&v);
    sim.record_schedules();
    sim.run_in_place().expect("run completes");
    sim
}

fn steady_offsets_constant(log: &[ScheduleRecord]) -> Result<usize, String> {
    let mut seen: BTreeMap<u32, SimTime> = BTreeMap::new();
    for rec in log {
        for slot in &rec.schedule.steady_slots {
            match seen.insert(slot.onu_id, slot.offset) {
                Some(prev) if prev != slot.offset => {
                    return Err(format!(
                        "ONU {} moved from {prev} to {} in frame {}",
                        slot.onu_id, slot.offset, rec.schedule.frame_index
                    ))
                }
                _ => {}
            }
        }
    }
    Ok(seen.len())
}

fn c7_steady_constancy() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut plain = base(16);
    plain.offered_load = 0.9;
    plain.sim_duration = SimTime::from_secs(1);
    for (name, cfg) in [("load 0.9", plain), ("with join", ranging_scenario(Some(11.0)))] {
        let sim = logged(&cfg);
        let log = sim.schedule_log().unwrap();
        match steady_offsets_constant(log) {
            Ok(n) => parts.push(format!("{name}: {n} ONUs fixed over {} frames", log.len())),
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c8_frame_accounting() -> Outcome {
    let mut frames = 0;
    let mut worst = SimTime::ZERO;
    let mut bad = Vec::new();
    for (s, n, load) in [(SchedulerKind::Hssr, 16, 1.0), (SchedulerKind::Ss, 16, 1.0), (SchedulerKind::Hssr, 32, 0.9), (SchedulerKind::Ss, 32, 0.9)] {
        let mut cfg = base(n);
        cfg.scheduler = s;
        cfg.offered_load = load;
        cfg.sim_duration = SimTime::from_secs(1);
        let sim = logged(&cfg);
        let frame = sim.config().frame_duration();
        let guard = sim.config().guard_time();
        for rec in sim.schedule_log().unwrap() {
            let used = rec.schedule.all_slots().iter().fold(SimTime::ZERO, |a, sl| a + sl.duration)
                + SimTime::from_nanos(guard.as_nanos() * rec.schedule.total_guard_count as u64);
            frames += 1;
            worst = worst.max(used);
            if used > frame {
                bad.push(format!("{s} frame {} uses {used}", rec.schedule.frame_index));
            }
        }
    }
    outcome(bad.is_empty(), format!("{frames} frames checked, fullest uses {worst}; {} over", bad.len()))
}

fn c9_conservation() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for s in [SchedulerKind::Hssr, SchedulerKind::Ss] {
        let mut cfg = base(16);
        cfg.scheduler = s;
        cfg.offered_load = 1.0;
        cfg.sim_duration = SimTime::from_secs(1);
        cfg.network.queue_capacity_bytes = 200_000;
        let sim = logged(&cfg);
        let mut totals = [0u64; 4];
        let mut per_onu_ok = true;
        for onu in sim.onus() {
            let c = onu.counters();
            let (g, t, q, d) = (onu.generated_bytes(), c.transmitted_bytes, onu.queued_bytes(), onu.dropped_bytes());
            per_onu_ok &= g == t + q + d;
            for (tot, x) in totals.iter_mut().zip([g, t, q, d]) {
                *tot += x;
            }
        }
        let sum = sim.summary();
        let delivered: u64 = ServiceClass::ALL.iter().map(|&c| sum.class(c).delivered_bytes).sum();
        let ok = per_onu_ok && totals[0] == totals[1] + totals[2] + totals[3] && delivered == totals[1];
        pass &= ok;
        parts.push(format!(
            "{s}: generated {} = delivered {} + queued {} + dropped {}",
            totals[0], totals[1], totals[2], totals[3]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c10_counter_law() -> Outcome {
    let mut cfg = base(3);
    cfg.offered_load = 0.0;
    cfg.sim_duration = SimTime::from_millis(8);
    let v = validate(&cfg).expect("valid");
    let mut sim = Simulation::new(&v);
    for onu in 0..3 {
        sim.preload(onu, ServiceClass::Be, &vec![1500; 800]);
    }
    sim.record_schedules();
    sim.run_in_place().expect("run");
    let log = sim.schedule_log().unwrap();
    let trace: Vec<(Vec<u32>, Vec<u64>)> = log[1..7]
        .iter()
        .map(|r| {
            (
                r.schedule.dynamic_grants.iter().map(|g| g.onu_id).collect(),
                r.counters.iter().map(|&(_, c)| c).collect(),
            )
        })
        .collect();
    let expected: Vec<(Vec<u32>, Vec<u64>)> = vec![
        (vec![0], vec![0, 1, 1]),
        (vec![1], vec![1, 0, 2]),
        (vec![2], vec![2, 1, 0]),
        (vec![0], vec![0, 2, 1]),
        (vec![1], vec![1, 0, 2]),
        (vec![2], vec![2, 1, 0]),
    ];
    let hand = trace == expected;

    let mut loaded = base(16);
    loaded.offered_load = 1.0;
    loaded.sim_duration = SimTime::from_secs(1);
    let sim = logged(&loaded);
    let mut violations = 0;
    let log = sim.schedule_log().unwrap();
    for w in log.windows(2) {
        let prev: BTreeMap<u32, u64> = w[0].counters.iter().cloned().collect();
        let granted: BTreeSet<u32> = w[1].schedule.dynamic_grants.iter().map(|g| g.onu_id).collect();
        for &(onu, c) in &w[1].counters {
            let p = prev.get(&onu).copied().unwrap_or(0);
            let ok = if granted.contains(&onu) { c == 0 } else { c == p || c == p + 1 };
            violations += usize::from(!ok);
        }
    }
    outcome(
        hand && violations == 0,
        format!("3-ONU overload trace {:?}; counter law violations over {} frames at load 1.0: {violations}", trace, log.len()),
    )
}

fn c11_policing() -> Outcome {
    let mut parts = Vec::new();
    let mut sound = true;
    for load in [0.5, 1.0] {
        let mut cfg = base(16);
        cfg.offered_load = load;
        cfg.sim_duration = SimTime::from_secs(1);
        let sim = logged(&cfg);
        let budget = sim.onus().iter().map(|o| o.counters().max_window_hp_bytes).zip(sim.olt().table().ranged().map(|r| r.subscribed_hp_bytes_per_frame));
        let over = budget.filter(|(seen, cap)| seen > cap).count();
        sound &= over == 0;
        parts.push(format!("load {load}: {over} ONUs over budget"));
    }
    // One ONU offered 1.2x its subscription.
    let mut cfg = base(1);
    cfg.offered_load = 0.8;
    cfg.allow_hp_oversubscription = true;
    cfg.network.subscribed_hp_bps_per_onu = Some(200_000_000);
    let v = validate(&cfg).expect("valid");
    let mut sim = Simulation::new(&v);
    let s = sim.run_in_place().expect("run");
    let budget = sim.olt().table().get(0).unwrap().subscribed_hp_bytes_per_frame;
    sound &= sim.onus()[0].counters().max_window_hp_bytes <= budget;
    let c = sim.onus()[0].counters();
    let rate = c.demoted_bytes as f64 / c.generated_bytes[ServiceClass::Hp as usize] as f64;
    let near = (rate - DEMOTION_TARGET).abs() <= DEMOTION_REL_TOL * DEMOTION_TARGET;
    parts.push(format!(
        "1.2x offer: demoted {:.2}% of HP bytes (target {:.2}% +/- 20% rel), HP mean {:.1} us",
        rate * 100.0,
        DEMOTION_TARGET * 100.0,
        s.class(ServiceClass::Hp).delay.mean_delay_us.unwrap_or(f64::NAN)
    ));
    outcome(sound && near, parts.join("; "))
}

fn cli_csv(dir: &std::path::Path, jobs: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_epon-sim"))
        .args(["--defaults", "--duration", "300ms", "--jobs", jobs, "--out"])
        .arg(dir)
        .args(["--sweep", "offered_load=0.3,0.9", "--sweep", "scheduler=hssr,ss", "--sweep", "n_onus=8,16"])
        .output()
        .expect("spawn epon-sim");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(dir.join("results.csv")).expect("results.csv")
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let a = cli_csv(&tmp.path().join("a"), "1");
    let b = cli_csv(&tmp.path().join("b"), "1");
    let c = cli_csv(&tmp.path().join("c"), "4");
    let mut cfg = base(16);
    cfg.offered_load = 0.8;
    cfg.sim_duration = SimTime::from_millis(200);
    let v = validate(&cfg).unwrap();
    let hash = || {
        let mut sim = Simulation::new(&v);
        sim.hash_trace();
        sim.run_in_place().unwrap();
        sim.trace_hash().unwrap()
    };
    let (h1, h2) = (hash(), hash());
    outcome(
        a == b && a == c && h1 == h2 && !a.is_empty(),
        format!(
            "CSV {} bytes: repeat identical {}, jobs 4 vs 1 identical {}; trace hash repeat identical {}",
            a.len(),
            a == b,
            a == c,
            h1 == h2
        ),
    )
}

/// Spec of the greedy packer, written against a plain vector.
fn greedy_reference(queue: &[u32], slot: u64, lookahead: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..queue.len()).collect();
    let mut budget = slot;
    let mut out = Vec::new();
    loop {
        let pick = rest.iter().take(lookahead).position(|&i| queue[i] as u64 <= budget);
        match pick {
            Some(k) => {
                let i = rest.remove(k);
                budget -= queue[i] as u64;
                out.push(i);
            }
            None => return out,
        }
    }
}

fn c13_oracles() -> Outcome {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
    let samples: Vec<u64> = (0..10_000).map(|_| rng.random_range(40_000..3_000_000)).collect();
    let mut m = Moments::default();
    for &x in &samples {
        m.push(x);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = samples.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let mean_err = rel(m.mean().unwrap(), mean);
    let sd_err = rel(m.std_dev().unwrap(), var.sqrt());
    let stats_ok = mean_err <= ORACLE_REL_TOL && sd_err <= ORACLE_REL_TOL;

    let sizes = [40u32, 552, 600, 1500];
    let slots = [0u64, 600, 1500, 2200, 5000];
    let depths = [1usize, 2, 3, 8];
    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for len in 0..=8u32 {
        for code in 0..sizes.len().pow(len) {
            let mut c = code;
            let queue: Vec<u32> = (0..len)
                .map(|_| {
                    let s = sizes[c % sizes.len()];
                    c /= sizes.len();
                    s
                })
                .collect();
            for &slot in &slots {
                // every subsequence that fits is a candidate; the greedy pick must be one of them
                let feasible: BTreeSet<u32> = (0..1u32 << len)
                    .filter(|mask| (0..len).filter(|i| mask >> i & 1 == 1).map(|i| queue[i as usize] as u64).sum::<u64>() <= slot)
                    .collect();
                for &depth in &depths {
                    cases += 1;
                    let got = pack_slot(queue.iter().copied(), slot, depth);
                    let mask = got.iter().fold(0u32, |m, &i| m | 1 << i);
                    let mut ascending = got.clone();
                    ascending.sort_unstable();
                    if got != greedy_reference(&queue, slot, depth) || !feasible.contains(&mask) || ascending != got {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        stats_ok && mismatches == 0,
        format!(
            "streaming vs two-pass rel err mean {mean_err:.1e}, sigma {sd_err:.1e}; pack_slot {mismatches} mismatches in {cases} enumerated cases"
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let sweep = catch_unwind(Sweep::run);
    let stochastic: [(&str, fn(&Sweep) -> Outcome); 5] = [
        ("flat HSSR HP delay", c1_flat_hp_delay),
        ("SS vs HSSR HP delay gap", c2_hp_gap),
        ("HP delay variation", c3_pdv),
        ("BE throughput penalty", c4_be_penalty),
        ("BE delay ordering", c5_be_delay_order),
    ];
    let exact: [(&str, fn() -> Outcome); 8] = [
        ("ranging non-intrusiveness", c6_ranging),
        ("steady-slot constancy", c7_steady_constancy),
        ("frame accounting", c8_frame_accounting),
        ("conservation", c9_conservation),
        ("counter law and round robin", c10_counter_law),
        ("policing", c11_policing),
        ("determinism", c12_determinism),
        ("oracle checks", c13_oracles),
    ];
    let mut results = Vec::new();
    for (name, f) in stochastic {
        let o = match &sweep {
            Ok(sw) => guarded(|| f(sw)),
            Err(_) => outcome(false, "sweep panicked"),
        };
        results.push((name, o));
    }
    for (name, f) in exact {
        results.push((name, guarded(f)));
    }
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
