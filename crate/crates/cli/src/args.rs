//! Command-line syntax.
//!
//! Configuration layering: a flag overrides the same field of the config
//! file, which overrides the built-in defaults of its preset.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use sc3sim::perf::ReportFormat;

#[derive(Debug, Parser)]
#[command(name = "sc3sim", version, about = "Cycle-approximate many-core processor simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a source file into a program image, or disassemble an image.
    Asm(AsmArgs),
    /// Simulate a program or a kernel case and emit a run report.
    Run(RunArgs),
    /// Closed-form peak throughput, bandwidth, roofline and system arithmetic.
    Peak(PeakArgs),
    /// Run every case of a kernel-suite manifest and summarize pass/fail.
    Suite(SuiteArgs),
    /// Report power and efficiency of the energy calibration scenario.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Chip configuration: a JSON file, or one of the presets sc3-default,
    /// sc2, city1, sc3-800mhz-calibration.
    #[arg(long, value_name = "FILE|PRESET")]
    pub config: Option<String>,
    /// Override the core clock.
    #[arg(long, value_name = "HZ")]
    pub frequency_hz: Option<f64>,
    /// Override the deadlock watchdog limit.
    #[arg(long, value_name = "CYCLES")]
    pub watchdog_cycles: Option<u64>,
    /// Override the line size of every cache.
    #[arg(long, value_name = "BYTES")]
    pub line_size: Option<u64>,
    /// Override the associativity of every cache.
    #[arg(long, value_name = "WAYS")]
    pub associativity: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output format: human, csv or json.
    #[arg(long, default_value = "human", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Write the output to this file instead of standard output.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct AsmArgs {
    /// Assembly source, or a program image with --disassemble.
    pub input: PathBuf,
    /// Treat the input as a program image and print its assembly.
    #[arg(long, short)]
    pub disassemble: bool,
    /// Where to write the image (or listing). Without it, assembling
    /// prints an address/word/instruction listing.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).args(["program", "kernel", "kernel_spec"])))]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Program to run: assembly source (.s, .asm) or a program image.
    #[arg(long, value_name = "FILE")]
    pub program: Option<PathBuf>,
    /// Threads launched per PE for --program.
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub threads_per_pe: usize,
    /// Run the named case of the suite manifest and check its result.
    #[arg(long, value_name = "NAME")]
    pub kernel: Option<String>,
    /// Run a kernel given as JSON, e.g.
    /// '{"kernel":"vecadd","n":1024,"variant":"dual-group","pes":16,"init":{"kind":"random"}}'.
    #[arg(long, value_name = "JSON")]
    pub kernel_spec: Option<String>,
    /// Suite manifest that --kernel looks the case up in (default: the
    /// built-in suite).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Kernel data seed; never affects simulator behaviour.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Host worker threads used inside the simulation.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub workers: usize,
    /// Write the per-request memory trace to this file.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Scale the counters to this full-chip configuration (model-derived).
    #[arg(long, value_name = "FILE|PRESET")]
    pub extrapolate_to: Option<String>,
}

#[derive(Debug, Args)]
pub struct PeakArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Nodes of a system built from this chip.
    #[arg(long, value_name = "N")]
    pub nodes: Option<u64>,
    /// Chips per node.
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub chips_per_node: u64,
    /// System Rpeak for which to derive the per-chip clock.
    #[arg(long, value_name = "TFLOPS")]
    pub target_rpeak_tflops: Option<f64>,
    /// Arithmetic intensity at which to evaluate the roofline.
    #[arg(long, value_name = "FLOPS_PER_BYTE")]
    pub intensity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Suite manifest (default: the built-in suite, without digests).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Regenerate every case's data from this seed; recorded digests are
    /// then not compared.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Host worker threads used inside each simulation.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub workers: usize,
    /// Cases run concurrently.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}
