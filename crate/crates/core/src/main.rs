//! Command-line front end: run scenarios, replay the built-in benchmarks,
//! classify recorded traces, and validate scenario files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bfsim::analysis::PeReport;
use bfsim::scenario::{Scenario, BUILTIN_NAMES};
use bfsim::sim::{self, RunOutput, Trace};
use bfsim::Result;

/// Writes a line to stdout, ignoring write failures such as a closed pipe,
/// so that piping into `head` or a pager never turns into a panic.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(
    name = "bfsim",
    version,
    about = "Bearing-only formation simulator: cooperative localization, \
             velocity estimation, and tracking control of second-order \
             multi-agent systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario file and write trace.csv, metrics.json, and the
    /// resolved scenario.toml to the output directory.
    Run {
        /// Scenario description (TOML).
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a built-in benchmark scenario (paper-centralized,
    /// paper-decentralized, or paper-control).
    Paper {
        /// Benchmark name.
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Classify the excitation of a recorded trace and write pe_report.json
    /// next to it.
    Analyze {
        /// A trace.csv produced by `run` or `paper`.
        trace: PathBuf,
        /// Exit with status 1 unless the trajectory is bearing
        /// persistently excited.
        #[arg(long)]
        bpe: bool,
        /// Averaging window in seconds (default: the scenario's analysis
        /// window).
        #[arg(long)]
        window: Option<f64>,
        /// Scenario describing the formation graph (default: scenario.toml
        /// next to the trace).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate {
        /// Scenario description (TOML).
        scenario: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Output directory (default: out/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the integrator step, in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the simulated duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl Overrides {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if let Some(dt) = self.dt {
            sc.dt = dt;
        }
        if let Some(duration) = self.duration {
            sc.duration = duration;
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            scenario,
            overrides,
        } => run_scenario(Scenario::from_path(&scenario)?, &overrides),
        Command::Paper { name, overrides } => {
            let sc = Scenario::builtin(&name).inspect_err(|_| {
                eprintln!("built-in scenarios: {}", BUILTIN_NAMES.join(", "));
            })?;
            run_scenario(sc, &overrides)
        }
        Command::Analyze {
            trace,
            bpe,
            window,
            scenario,
        } => analyze(&trace, scenario.as_deref(), window, bpe),
        Command::Validate { scenario } => {
            let sc = Scenario::from_path(&scenario)?;
            for w in sc.validate()? {
                say!("warning: {w}");
            }
            say!("scenario {} is valid", sc.name);
            Ok(0)
        }
    }
}

fn run_scenario(mut sc: Scenario, overrides: &Overrides) -> Result<i32> {
    overrides.apply(&mut sc);
    let out_dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    let output = sim::run(&sc)?;

    std::fs::create_dir_all(&out_dir)?;
    let trace_path = out_dir.join("trace.csv");
    output.trace.write_csv(&trace_path)?;
    let metrics_path = out_dir.join("metrics.json");
    std::fs::write(&metrics_path, output.metrics.to_json())?;
    let scenario_path = out_dir.join("scenario.toml");
    std::fs::write(&scenario_path, output.scenario.to_toml_string()?)?;

    print_summary(&output);
    for path in [&trace_path, &metrics_path, &scenario_path] {
        say!("wrote {}", path.display());
    }
    if let Some(abort) = &output.metrics.abort {
        eprintln!("aborted at t = {:.6}: {}", abort.t, abort.message);
        return Ok(abort.exit_code);
    }
    Ok(0)
}

fn print_summary(output: &RunOutput) {
    let m = &output.metrics;
    say!(
        "scenario {}: {} steps, {:.3} s simulated",
        m.scenario,
        m.steps_completed,
        m.simulated
    );
    for w in &m.warnings {
        say!("warning: {w}");
    }
    if output.scenario.runs_observer() {
        say!(
            "final estimation error {:.3e} (position {:.3e}, velocity {:.3e})",
            m.final_delta,
            m.final_delta_p,
            m.final_delta_v
        );
        if let Some(rate) = m.decay_rate_delta {
            say!("estimation error decay rate {rate:.3} 1/s");
        }
    }
    if output.scenario.mode.is_control() {
        say!(
            "final tracking error {:.3e} (position {:.3e}, velocity {:.3e})",
            m.final_tracking,
            m.final_p_tilde,
            m.final_v_tilde
        );
        if let Some(rate) = m.decay_rate_tracking {
            say!("tracking error decay rate {rate:.3} 1/s");
        }
    }
    say!("minimum edge distance {:.3e}", m.min_edge_distance);
    if let Some(report) = &m.pe_report {
        print_pe_report(report);
    }
}

fn print_pe_report(report: &PeReport) {
    say!(
        "excitation over {} s windows, threshold {:.1e}:",
        report.window,
        report.threshold
    );
    for e in &report.per_edge {
        let mark = if report.pe_edges.contains(&e.edge) {
            "  PE"
        } else {
            ""
        };
        say!(
            "  edge ({}, {}): mu = {:.4e}{mark}",
            e.edge.0,
            e.edge.1,
            e.mu
        );
    }
    say!(
        "formation mu = {:.4e}; bearing persistently excited: {}",
        report.formation_mu,
        report.bpe
    );
    if let Some(reason) = &report.reason {
        say!("  ({reason})");
    }
}

fn analyze(
    trace_path: &Path,
    scenario: Option<&Path>,
    window: Option<f64>,
    require_bpe: bool,
) -> Result<i32> {
    let sibling = trace_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("scenario.toml");
    let scenario_path = scenario.unwrap_or(&sibling);
    let sc = Scenario::from_path(scenario_path)?;
    let g = sc.graph()?;
    let trace = Trace::read_csv(trace_path)?;
    let window = window.unwrap_or(sc.analysis.window);
    let report = sim::pe_report_from_trace(&trace, &g, window, sc.analysis.threshold)?;
    print_pe_report(&report);
    let report_path = trace_path.with_file_name("pe_report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serialize to JSON"),
    )?;
    say!("wrote {}", report_path.display());
    if require_bpe && !report.bpe {
        return Ok(1);
    }
    Ok(0)
}
