//! Command line front end: `aegis run` simulates one configuration, `aegis
//! sweep` repeats it across latency perturbation factors, `aegis report`
//! recomputes statistics from a previously written results file.

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use aegis_core::engine::{run, RunError};
use aegis_core::report::{
    histogram, read_csv, summarize, sweep, ReportError, RunSummary, SweepTable, DEFAULT_BIN_WIDTH,
    DEFAULT_HISTOGRAM_RANGE,
};
use aegis_core::RunConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aegis", version, about = "Agent security protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and print its summary
    Run(RunArgs),
    /// Simulate across perturbation factors and print the comparison table
    Sweep(SweepArgs),
    /// Recompute summary and histogram from a results file
    Report(ReportArgs),
}

/// Flags shared by `run` and `sweep`. Every value falls back to the config
/// file (when given), then to the built-in defaults.
#[derive(Args)]
struct CommonArgs {
    /// Read defaults from a key=value file; explicit flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for the deterministic generator
    #[arg(long)]
    seed: Option<u64>,
    /// Population size
    #[arg(long)]
    agents: Option<usize>,
    /// Log-normal location parameter for proof latency
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Log-normal shape parameter for proof latency
    #[arg(long)]
    sigma: Option<f64>,
    /// Fractional latency scale change (0.2 means +20%)
    #[arg(long, allow_negative_numbers = true)]
    perturb: Option<f64>,
    /// Number of legitimate interactions
    #[arg(long)]
    legit: Option<usize>,
    /// Number of identity spoofing attempts
    #[arg(long)]
    spoof_trials: Option<usize>,
    /// Number of policy violation attempts
    #[arg(long)]
    violation_trials: Option<usize>,
    /// Fraction of agents under adversary control
    #[arg(long)]
    compromise_fraction: Option<f64>,
    /// Disable signature and proof verification (control condition)
    #[arg(long)]
    baseline_insecure: bool,
    /// Also run tamper and replay trials against captured traffic
    #[arg(long)]
    extended_attacks: bool,
    /// Number of trials per extended attack kind
    #[arg(long)]
    extended_trials: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also write per-trial records to this CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print key=value lines instead of the aligned block
    #[arg(long)]
    machine: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma separated perturbation factors
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-0.2,0,0.2",
        allow_hyphen_values = true
    )]
    factors: Vec<f64>,
    /// Print key=value lines instead of the aligned table
    #[arg(long)]
    machine: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written by `aegis run --out`
    csv: PathBuf,
    /// Print key=value lines instead of the aligned block
    #[arg(long)]
    machine: bool,
}

enum CliError {
    /// Bad flag or config-file values: exit 2, same class as parse errors.
    Usage(String),
    /// Failures while doing the work (I/O, malformed input files): exit 1.
    Runtime(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration assembly
// ---------------------------------------------------------------------------

fn build_config(common: &CommonArgs, out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &common.config {
        apply_config_file(&mut config, path)?;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    if let Some(v) = common.agents {
        config.n_agents = v;
    }
    if let Some(v) = common.mu {
        config.mu = v;
    }
    if let Some(v) = common.sigma {
        config.sigma = v;
    }
    if let Some(v) = common.perturb {
        config.perturb = v;
    }
    if let Some(v) = common.legit {
        config.legit_interactions = v;
    }
    if let Some(v) = common.spoof_trials {
        config.spoof_trials = v;
    }
    if let Some(v) = common.violation_trials {
        config.violation_trials = v;
    }
    if let Some(v) = common.compromise_fraction {
        config.compromise_fraction = v;
    }
    if common.baseline_insecure {
        config.baseline_insecure = true;
    }
    if common.extended_attacks {
        config.extended_attacks = true;
    }
    if let Some(v) = common.extended_trials {
        config.extended_trials = v;
    }
    if out.is_some() {
        config.out = out;
    }
    Ok(config)
}

/// Key=value file with the same keys as the long flags (snake_case). Blank
/// lines and lines starting with `#` are skipped.
fn apply_config_file(config: &mut RunConfig, path: &PathBuf) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config file {} line {}: expected key=value",
                path.display(),
                index + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let fail = |what: &str| {
            CliError::Usage(format!(
                "config file {} line {}: {what} (got {value:?})",
                path.display(),
                index + 1
            ))
        };
        match key {
            "seed" => config.seed = value.parse().map_err(|_| fail("seed must be an integer"))?,
            "agents" => {
                config.n_agents = value
                    .parse()
                    .map_err(|_| fail("agents must be an integer"))?
            }
            "mu" => config.mu = value.parse().map_err(|_| fail("mu must be a number"))?,
            "sigma" => config.sigma = value.parse().map_err(|_| fail("sigma must be a number"))?,
            "perturb" => {
                config.perturb = value
                    .parse()
                    .map_err(|_| fail("perturb must be a number"))?
            }
            "legit" => {
                config.legit_interactions = value
                    .parse()
                    .map_err(|_| fail("legit must be an integer"))?
            }
            "spoof_trials" => {
                config.spoof_trials = value
                    .parse()
                    .map_err(|_| fail("spoof_trials must be an integer"))?
            }
            "violation_trials" => {
                config.violation_trials = value
                    .parse()
                    .map_err(|_| fail("violation_trials must be an integer"))?
            }
            "compromise_fraction" => {
                config.compromise_fraction = value
                    .parse()
                    .map_err(|_| fail("compromise_fraction must be a number"))?
            }
            "baseline_insecure" => {
                config.baseline_insecure = value
                    .parse()
                    .map_err(|_| fail("baseline_insecure must be true or false"))?
            }
            "extended_attacks" => {
                config.extended_attacks = value
                    .parse()
                    .map_err(|_| fail("extended_attacks must be true or false"))?
            }
            "extended_trials" => {
                config.extended_trials = value
                    .parse()
                    .map_err(|_| fail("extended_trials must be an integer"))?
            }
            "out" => config.out = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Usage(format!(
                    "config file {} line {}: unknown key {other:?}",
                    path.display(),
                    index + 1
                )))
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output rendering
// ---------------------------------------------------------------------------

/// Collects key/value pairs, then renders them either as an aligned block
/// (`key:` padded to a common width) or as `key=value` lines.
struct Emitter {
    machine: bool,
    pairs: Vec<(String, String)>,
}

impl Emitter {
    fn new(machine: bool) -> Self {
        Emitter {
            machine,
            pairs: Vec::new(),
        }
    }

    fn push(&mut self, key: &str, value: impl Display) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    fn render(self) -> String {
        let mut text = String::new();
        if self.machine {
            for (key, value) in &self.pairs {
                text.push_str(&format!("{key}={value}\n"));
            }
        } else {
            let width = self
                .pairs
                .iter()
                .map(|(k, _)| k.len() + 1)
                .max()
                .unwrap_or(0);
            for (key, value) in &self.pairs {
                text.push_str(&format!("{:<width$} {value}\n", format!("{key}:")));
            }
        }
        text
    }
}

/// A closed pipe on stdout (e.g. `aegis run | head`) ends the program
/// quietly instead of panicking mid-write.
fn write_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let outcome = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush());
    match outcome {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::Runtime(format!("could not write output: {e}"))),
    }
}

/// Seconds for people: 3 decimals, matching the file format's resolution.
fn seconds_human(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}"))
        .unwrap_or_else(|| "n/a".to_string())
}

/// Seconds for machines: shortest round-trip form, empty when absent, so
/// downstream tooling can compare values exactly.
fn seconds_machine(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rate(v: f64, machine: bool) -> String {
    if machine {
        v.to_string()
    } else {
        format!("{v:.4}")
    }
}

fn push_config(out: &mut Emitter, config: &RunConfig) {
    out.push("seed", config.seed);
    out.push("agents", config.n_agents);
    out.push("mu", config.mu);
    out.push("sigma", config.sigma);
    out.push("perturb", config.perturb);
    out.push(
        "posture",
        if config.baseline_insecure {
            "baseline-insecure"
        } else {
            "secure"
        },
    );
    out.push("legit", config.legit_interactions);
    out.push("spoof_trials", config.spoof_trials);
    out.push("violation_trials", config.violation_trials);
    out.push("compromise_fraction", config.compromise_fraction);
    out.push("extended_attacks", config.extended_attacks);
    if config.extended_attacks {
        out.push("extended_trials", config.extended_trials);
    }
}

fn push_summary(out: &mut Emitter, summary: &RunSummary, machine: bool) {
    out.push("n_proofs", summary.n_proofs);
    let fmt = if machine {
        seconds_machine
    } else {
        seconds_human
    };
    out.push("median_proof_time_s", fmt(summary.median_proof_time_s));
    out.push("stddev_proof_time_s", fmt(summary.stddev_proof_time_s));
    out.push(
        "spoof_success_rate",
        rate(summary.spoof_success_rate, machine),
    );
    out.push(
        "violation_success_rate",
        rate(summary.violation_success_rate, machine),
    );
    out.push("completed", summary.completed);
    out.push("policy_refusals", summary.refusals);
    for (label, count) in &summary.rejection_counts {
        out.push(&format!("rejection.{label}"), count);
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = build_config(&args.common, args.out)?;
    let output = run(&config)?;
    let mut out = Emitter::new(args.machine);
    push_config(&mut out, &config);
    out.push("records", output.records.len());
    if let Some(path) = &config.out {
        out.push("out", path.display());
    }
    push_summary(&mut out, &output.summary, args.machine);
    write_stdout(&out.render())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let config = build_config(&args.common, None)?;
    let table = sweep(&config, &args.factors)?;
    let text = if args.machine {
        render_sweep_machine(&table)
    } else {
        render_sweep_table(&table)
    };
    write_stdout(&text)
}

fn render_sweep_machine(table: &SweepTable) -> String {
    let mut text = format!("base_seed={}\nrows={}\n", table.base_seed, table.rows.len());
    for (index, row) in table.rows.iter().enumerate() {
        let prefix = format!("row{index}");
        text.push_str(&format!("{prefix}.factor={}\n", row.factor));
        text.push_str(&format!("{prefix}.label={}\n", row.label));
        text.push_str(&format!("{prefix}.seed={}\n", row.seed));
        text.push_str(&format!(
            "{prefix}.median_s={}\n",
            seconds_machine(row.observed_median_s)
        ));
        text.push_str(&format!(
            "{prefix}.spoof_success_rate={}\n",
            row.spoof_success_rate
        ));
        text.push_str(&format!(
            "{prefix}.violation_success_rate={}\n",
            row.violation_success_rate
        ));
        text.push_str(&format!(
            "{prefix}.reference_median_s={}\n",
            seconds_machine(row.reference_median_s)
        ));
    }
    text
}

fn render_sweep_table(table: &SweepTable) -> String {
    let mut text = format!("base seed: {}\n", table.base_seed);
    let header = [
        "factor",
        "label",
        "seed",
        "median_s",
        "spoof_rate",
        "violation_rate",
        "reference_s",
    ];
    let rows: Vec<[String; 7]> = table
        .rows
        .iter()
        .map(|row| {
            [
                row.factor.to_string(),
                row.label.clone(),
                row.seed.to_string(),
                seconds_human(row.observed_median_s),
                format!("{:.4}", row.spoof_success_rate),
                format!("{:.4}", row.violation_success_rate),
                row.reference_median_s
                    .map(|m| format!("{m:.2}"))
                    .unwrap_or_default(),
            ]
        })
        .collect();
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([h.len()])
                .max()
                .unwrap()
        })
        .collect();
    let mut line = |cells: &[&str]| {
        let mut rendered = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                rendered.push_str("  ");
            }
            rendered.push_str(&format!("{cell:<width$}", width = widths[i]));
        }
        text.push_str(rendered.trim_end());
        text.push('\n');
    };
    line(&header);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    text
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let records = read_csv(&args.csv)?;
    let summary = summarize(&records);
    let (lo, hi) = DEFAULT_HISTOGRAM_RANGE;
    let bins = histogram(&records, DEFAULT_BIN_WIDTH, lo, hi);
    let mut out = Emitter::new(args.machine);
    out.push("records", records.len());
    push_summary(&mut out, &summary, args.machine);
    if let Some((left, right)) = bins.modal_bin() {
        out.push("modal_bin", format!("[{left:.1}, {right:.1})"));
    }
    out.push("histogram.underflow", bins.underflow);
    for (index, count) in bins.counts.iter().enumerate() {
        if *count > 0 {
            let left = bins.lo + index as f64 * bins.bin_width;
            out.push(&format!("histogram.{left:.1}"), count);
        }
    }
    out.push("histogram.overflow", bins.overflow);
    write_stdout(&out.render())
}
