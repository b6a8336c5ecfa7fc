//! Command-line front end of the `epon-sim` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser};

use crate::config::{validate, ScenarioConfig, SchedulerKind};
use crate::engine::Simulation;
use crate::metrics::{read_csv, render_summary, write_csv};
use crate::sweep::{emit_figure_data, expand, run_points, FigureError, SweepError, SweepSpec, DEFAULT_MAX_POINTS};
use crate::time::SimTime;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Config file picked up from the working directory when `--config` is absent.
pub const DEFAULTS_FILE: &str = "epon-sim.json";

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Parser)]
#[command(name = "epon-sim", version, about = "E-PON upstream simulator for the HSSR and SS bandwidth allocation schemes")]
pub struct Args {
    /// Scenario JSON file. Falls back to ./epon-sim.json.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Start from the built-in scenario when no config file is found.
    #[arg(long)]
    pub defaults: bool,
    #[arg(long, value_name = "hssr|ss")]
    pub scheduler: Option<SchedulerKind>,
    #[arg(long, value_name = "N")]
    pub onus: Option<u32>,
    #[arg(long, value_name = "RHO")]
    pub load: Option<f64>,
    /// Guard time with unit, e.g. 100ns.
    #[arg(long, value_name = "TIME")]
    pub guard_time: Option<SimTime>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated time with unit, e.g. 5s.
    #[arg(long, value_name = "TIME")]
    pub duration: Option<SimTime>,
    /// Output directory for results.csv and plot data.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Write the event trace of a single run to this file.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// NAME=a,b,c or NAME=start:stop:step over offered_load, n_onus, guard_time, scheduler.
    #[arg(long, value_name = "NAME=SPEC")]
    pub sweep: Vec<SweepSpec>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_POINTS)]
    pub max_points: usize,
    /// Regenerate plot data from an existing results file and exit.
    #[arg(long, value_name = "CSV")]
    pub figures_from: Option<PathBuf>,
    /// Print the scenario that would run and exit.
    #[arg(long)]
    pub dump_config: bool,
}

fn base_scenario(args: &Args) -> Result<ScenarioConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_path(path).map_err(|e| e.to_string())?,
        None if Path::new(DEFAULTS_FILE).exists() => {
            ScenarioConfig::from_path(Path::new(DEFAULTS_FILE)).map_err(|e| e.to_string())?
        }
        None if args.defaults => ScenarioConfig::default(),
        None => {
            return Err(format!(
                "no --config given and no {DEFAULTS_FILE} in the working directory (pass --defaults for the built-in scenario)\n\n{}",
                Args::command().render_usage()
            ))
        }
    };
    if let Some(s) = args.scheduler {
        cfg.scheduler = s;
    }
    if let Some(n) = args.onus {
        cfg.network.n_onus = n;
    }
    if let Some(x) = args.load {
        cfg.offered_load = x;
    }
    if let Some(g) = args.guard_time {
        cfg.network.guard_time = g;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.duration {
        cfg.sim_duration = d;
    }
    Ok(cfg)
}

fn figures(rows_from: &Path, out: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let rows = match read_csv(rows_from) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    match emit_figure_data(&rows, out) {
        Ok(paths) => {
            for p in paths {
                let _ = writeln!(stdout, "wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e @ FigureError::Io { .. }) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_CONFIG
        }
    }
}

fn single_traced(cfg: &ScenarioConfig, base_seed: u64, trace: &Path, stderr: &mut dyn Write) -> Result<crate::MetricsSummary, i32> {
    let v = match validate(cfg) {
        Ok(v) => v,
        Err(errs) => {
            for e in errs {
                let _ = writeln!(stderr, "error: {e}");
            }
            return Err(EXIT_CONFIG);
        }
    };
    let file = match std::fs::File::create(trace) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", trace.display());
            return Err(EXIT_RUNTIME);
        }
    };
    let mut sim = Simulation::new(&v);
    sim.trace_to(Box::new(std::io::BufWriter::new(file)));
    match sim.run() {
        Ok(mut s) => {
            s.seed = base_seed;
            Ok(s)
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: run aborted: {e}");
            Err(EXIT_RUNTIME)
        }
    }
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };

    if let Some(csv) = &args.figures_from {
        return figures(csv, &args.out, stdout, stderr);
    }

    let base = match base_scenario(&args) {
        Ok(c) => c,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_CONFIG;
        }
    };
    if args.dump_config {
        let _ = writeln!(stdout, "{}", base.to_json_string());
        return EXIT_OK;
    }
    let points = match expand(&base, &args.sweep, args.max_points) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    if args.trace.is_some() && points.len() != 1 {
        let _ = writeln!(stderr, "error: --trace needs a single run, the sweep has {} points", points.len());
        return EXIT_CONFIG;
    }

    let summaries = match &args.trace {
        Some(trace) => match single_traced(&points[0].scenario, points[0].base_seed, trace, stderr) {
            Ok(s) => vec![s],
            Err(code) => return code,
        },
        None => match run_points(&points, args.jobs) {
            Ok(s) => s,
            Err(e @ SweepError::InvalidPoint { .. }) => {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_CONFIG;
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_RUNTIME;
            }
        },
    };

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        let _ = writeln!(stderr, "error: {}: {e}", args.out.display());
        return EXIT_RUNTIME;
    }
    let csv_path = args.out.join(RESULTS_FILE);
    if let Err(e) = write_csv(&summaries, &csv_path) {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_RUNTIME;
    }
    for s in &summaries {
        let _ = writeln!(stdout, "{}", render_summary(s));
    }
    let _ = writeln!(stdout, "wrote {}", csv_path.display());

    if summaries.len() > 1 {
        let rows: Vec<_> = summaries.iter().flat_map(crate::metrics::csv_rows).collect();
        match emit_figure_data(&rows, &args.out) {
            Ok(paths) => {
                for p in paths {
                    let _ = writeln!(stdout, "wrote {}", p.display());
                }
            }
            Err(FigureError::MissingDimension(dim)) => {
                let _ = writeln!(stdout, "no plot data: sweep does not cover {dim}");
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_RUNTIME;
            }
        }
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with(std::iter::once("epon-sim").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn low_guard_is_rejected() {
        let (code, _, err) = run(&["--defaults", "--guard-time", "5ns", "--duration", "10ms"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("guard_time below 20ns"), "{err}");
    }

    #[test]
    fn bad_flag_value() {
        let (code, _, err) = run(&["--defaults", "--scheduler", "fifo"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("scheduler"), "{err}");
    }

    #[test]
    fn dump_applies_overrides() {
        let (code, out, _) = run(&["--defaults", "--onus", "4", "--load", "0.25", "--dump-config"]);
        assert_eq!(code, EXIT_OK);
        let cfg = ScenarioConfig::from_json_str(&out).unwrap();
        assert_eq!(cfg.network.n_onus, 4);
        assert_eq!(cfg.offered_load, 0.25);
    }

    #[test]
    fn trace_needs_one_point() {
        let (code, _, err) =
            run(&["--defaults", "--trace", "/tmp/never-written", "--sweep", "offered_load=0.1,0.2"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("single run"), "{err}");
    }
}
