//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::Path;

use sc3sim::chip::{simulate, Chip, ChipConfig, LaunchDescriptor};
use sc3sim::isa::{disassemble, format_instruction, parse_assembly, Precision, Program};
use sc3sim::kernels::manifest::{default_suite, SuiteCase, SuiteManifest};
use sc3sim::kernels::{run_case_traced, CaseReport, KernelSpec};
use sc3sim::mem::TraceRecord;
use sc3sim::perf::{
    calibration_scenario, energy_report, extrapolate_full_chip, one_decimal, roofline, system_arithmetic_checks,
    BandwidthModel, PeakModel, Report, ReportFormat, CALIBRATION_GFLOPS_PER_W, CALIBRATION_POWER_W,
};

use crate::args::{AsmArgs, CalibrateArgs, ConfigArgs, PeakArgs, RunArgs, SuiteArgs};
use crate::error::{CliError, Kind};

const PRESETS: [&str; 4] = ["sc3-default", "sc2", "city1", "sc3-800mhz-calibration"];

fn preset(name: &str) -> Option<ChipConfig> {
    match name {
        "sc3-default" => Some(ChipConfig::sc3()),
        "sc2" => Some(ChipConfig::sc2()),
        "city1" => Some(ChipConfig::one_city()),
        "sc3-800mhz-calibration" => Some(ChipConfig::calibration_800mhz()),
        _ => None,
    }
}

fn load_config(spec: &str) -> Result<ChipConfig, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        return Ok(ChipConfig::load(path)?);
    }
    preset(spec).ok_or_else(|| {
        CliError::input(format!("{spec}: no such config file or preset (presets: {})", PRESETS.join(", ")))
    })
}

/// Config file (or `default` preset), then flag overrides.
fn resolve_config(a: &ConfigArgs, default: &str) -> Result<ChipConfig, CliError> {
    let mut cfg = load_config(a.config.as_deref().unwrap_or(default))?;
    if let Some(f) = a.frequency_hz {
        cfg.frequency_hz = f;
    }
    if let Some(w) = a.watchdog_cycles {
        cfg.watchdog_cycles = w;
    }
    if let Some(l) = a.line_size {
        cfg.caches.set_line_size(l);
    }
    if let Some(w) = a.associativity {
        cfg.caches.set_associativity(w);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_out(dest: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match dest {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::new(Kind::Other, format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::new(Kind::Other, e.to_string()))
        }
    }
}

/// Assembly for `.s` / `.asm` files, otherwise a program image.
fn load_program(path: &Path) -> Result<Program, CliError> {
    let bytes = read_file(path)?;
    let is_source = matches!(path.extension().and_then(|e| e.to_str()), Some("s" | "asm"));
    if is_source {
        let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{}: not UTF-8", path.display())))?;
        parse_assembly(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    } else {
        Program::from_image(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

pub fn asm(a: &AsmArgs) -> Result<(), CliError> {
    if a.disassemble {
        let bytes = read_file(&a.input)?;
        let program =
            Program::from_image(&bytes).map_err(|e| CliError::input(format!("{}: {e}", a.input.display())))?;
        return write_out(a.output.as_deref(), disassemble(&program).as_bytes());
    }
    let program = load_program(&a.input)?;
    if let Some(out) = &a.output {
        return write_out(Some(out), &program.to_image());
    }
    let mut listing = String::new();
    for (pc, &word) in program.words().iter().enumerate() {
        let text = match program.fetch(pc) {
            Some(Ok(ins)) => format_instruction(&ins, None),
            _ => "<illegal>".into(),
        };
        let _ = writeln!(listing, "{:6}  {word:08x}  {text}", pc);
    }
    write_out(None, listing.as_bytes())
}

fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), CliError> {
    let mut text = String::from("# cycle pe thread level instance line_address kind outcome writeback\n");
    for r in records {
        let _ = writeln!(text, "{r}");
    }
    write_out(Some(path), text.as_bytes())
}

/// The kernel to run, its seed, and the manifest case whose recorded digest
/// applies (only when the case's own seed is used).
fn kernel_from(a: &RunArgs) -> Result<(String, KernelSpec, u64, Option<SuiteCase>), CliError> {
    if let Some(json) = &a.kernel_spec {
        let spec: KernelSpec =
            serde_json::from_str(json).map_err(|e| CliError::input(format!("--kernel-spec: {e}")))?;
        return Ok(("kernel".into(), spec, a.seed.unwrap_or(0), None));
    }
    let name = a.kernel.as_deref().expect("argument group requires one source");
    let manifest = match &a.manifest {
        Some(p) => SuiteManifest::load(p)?,
        None => default_suite(),
    };
    let case = manifest.find(name).ok_or_else(|| {
        let names: Vec<&str> = manifest.cases.iter().map(|c| c.name.as_str()).collect();
        CliError::input(format!("no kernel case `{name}` (available: {})", names.join(", ")))
    })?;
    let recorded = a.seed.is_none().then(|| case.clone());
    Ok((case.name.clone(), case.spec, a.seed.unwrap_or(case.seed), recorded))
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.config, "city1")?;
    let workers = a.workers.max(1);
    let (stats, check) = if let Some(path) = &a.program {
        let program = load_program(path)?;
        let launch = LaunchDescriptor::new(program, a.threads_per_pe);
        if let Some(trace) = &a.trace {
            let mut chip = Chip::build(cfg.clone())?;
            chip.set_workers(workers);
            chip.mem.enable_trace();
            chip.launch(&launch)?;
            let stats = chip.run()?;
            write_trace(trace, chip.mem.trace())?;
            (stats, None)
        } else {
            (simulate(&cfg, &launch, workers)?.1, None)
        }
    } else {
        let (name, spec, seed, recorded) = kernel_from(a)?;
        let case = spec.build(&cfg, seed)?;
        let (mut report, records) = run_case_traced(&cfg, &case, workers, a.trace.is_some())?;
        report.name = name;
        if let Some(c) = &recorded {
            c.check_digest(&mut report);
        }
        if let Some(trace) = &a.trace {
            write_trace(trace, &records)?;
        }
        match report.stats.clone() {
            Some(stats) => (stats, Some(report)),
            None => {
                // An expected deadlock: nothing to report but the check.
                eprintln!("check: {}", check_line(&report));
                return Ok(());
            }
        }
    };
    let stats = match &a.extrapolate_to {
        Some(target) => {
            let target = load_config(target)?;
            extrapolate_full_chip(&stats, &cfg, &target)?
        }
        None => stats,
    };
    let report_cfg = match &a.extrapolate_to {
        Some(target) => load_config(target)?,
        None => cfg.clone(),
    };
    let report = Report::new(stats, &report_cfg, &report_cfg.energy);
    write_out(a.out.output.as_deref(), report.render(a.out.format).as_bytes())?;
    if let Some(check) = check {
        eprintln!("check: {}", check_line(&check));
        if !check.passed {
            return Err(CliError::new(Kind::Validation, format!("kernel case {} failed: {}", check.name, check.detail)));
        }
    }
    Ok(())
}

fn check_line(r: &CaseReport) -> String {
    format!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)
}

pub fn peak(a: &PeakArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.config, "sc3-default")?;
    let pk = PeakModel::of(&cfg);
    let bw = BandwidthModel::of(&cfg);
    let system = a.nodes.map(|n| {
        system_arithmetic_checks(n, a.chips_per_node, &cfg, a.target_rpeak_tflops.map(|t| t * 1e12))
    });
    let roof = a.intensity.map(|i| (i, roofline(i, pk.peak(Precision::Double), bw.primary())));
    let text = match a.out.format {
        ReportFormat::Json => {
            let mut v = serde_json::json!({
                "config": cfg.name,
                "pes": pk.pes,
                "frequency_hz": pk.frequency_hz,
                "peak_flops": {
                    "dp": pk.peak(Precision::Double),
                    "sp": pk.peak(Precision::Single),
                    "hp": pk.peak(Precision::Half),
                },
                "bandwidth_bytes_per_sec": bw,
            });
            if let Some(s) = system {
                v["system"] = serde_json::to_value(s).expect("serializes");
            }
            if let Some((i, r)) = roof {
                v["roofline"] = serde_json::json!({ "intensity": i, "attainable_flops": r });
            }
            serde_json::to_string_pretty(&v).expect("serializes") + "\n"
        }
        ReportFormat::Csv => return Err(CliError::usage("peak supports --format human or json")),
        ReportFormat::Human => {
            let mut o = String::new();
            let _ = writeln!(o, "config            {} ({} PEs at {:.1} MHz)", cfg.name, pk.pes, pk.frequency_hz / 1e6);
            for (label, p) in [("DP", Precision::Double), ("SP", Precision::Single), ("HP", Precision::Half)] {
                let f = pk.peak(p);
                let _ = writeln!(o, "peak {label}           {:.1} TFlops ({:.4} TFlops exact)", one_decimal(f / 1e12), f / 1e12);
            }
            let _ = writeln!(o, "HBM2              {:.1} TB/s ({:.1} GB/s)", one_decimal(bw.hbm2 / 1e12), bw.hbm2 / 1e9);
            let _ = writeln!(o, "DDR4              {:.1} GB/s", bw.ddr4 / 1e9);
            let _ = writeln!(o, "PCIe              {:.1} GB/s", bw.pcie / 1e9);
            if let Some(s) = system {
                let _ = writeln!(
                    o,
                    "system            {} nodes x {} chips = {} chips, {} PEs, Rpeak {:.2} TFlops",
                    s.nodes,
                    s.chips_per_node,
                    s.total_chips,
                    s.total_pes,
                    s.rpeak_flops / 1e12
                );
                if let (Some(t), Some(f)) = (s.target_rpeak_flops, s.implied_frequency_hz) {
                    let _ = writeln!(o, "implied clock     {:.1} MHz for Rpeak {:.2} TFlops [model-derived]", f / 1e6, t / 1e12);
                }
            }
            if let Some((i, r)) = roof {
                let _ = writeln!(o, "roofline          {:.4} GFlops at {i} flops/byte", r / 1e9);
            }
            o
        }
    };
    write_out(a.out.output.as_deref(), text.as_bytes())
}

pub fn suite(a: &SuiteArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.config, "city1")?;
    let manifest = match &a.manifest {
        Some(p) => SuiteManifest::load(p)?,
        None => default_suite(),
    };
    let n = manifest.cases.len();
    let jobs = a.jobs.clamp(1, n.max(1));
    let workers = a.workers.max(1);
    // Each job takes every `jobs`-th case; results go back into manifest order.
    let mut results: Vec<Option<Result<CaseReport, CliError>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let (manifest, cfg) = (&manifest, &cfg);
                s.spawn(move || {
                    (j..n)
                        .step_by(jobs)
                        .map(|i| (i, manifest.run_one(i, cfg, a.seed, workers).map_err(CliError::from)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("suite worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut reports = Vec::with_capacity(n);
    for r in results {
        reports.push(r.expect("every case ran")?);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    let text = match a.out.format {
        ReportFormat::Json => {
            let cases: Vec<_> = reports
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "name": r.name,
                        "passed": r.passed,
                        "detail": r.detail,
                        "digest": r.digest,
                        "cycles": r.stats.as_ref().map(|s| s.cycles),
                    })
                })
                .collect();
            let v = serde_json::json!({ "config": cfg.name, "passed": n - failed, "failed": failed, "cases": cases });
            serde_json::to_string_pretty(&v).expect("serializes") + "\n"
        }
        ReportFormat::Csv => {
            let mut o = String::from("name,passed,cycles,digest\n");
            for r in &reports {
                let cycles = r.stats.as_ref().map(|s| s.cycles.to_string()).unwrap_or_default();
                let _ = writeln!(o, "{},{},{},{}", r.name, r.passed, cycles, r.digest.as_deref().unwrap_or(""));
            }
            o
        }
        ReportFormat::Human => {
            let mut o = String::new();
            for r in &reports {
                let _ = writeln!(o, "{}", check_line(r));
            }
            let _ = writeln!(o, "{} of {n} cases passed on {}", n - failed, cfg.name);
            o
        }
    };
    write_out(a.out.output.as_deref(), text.as_bytes())?;
    if failed > 0 {
        return Err(CliError::new(Kind::Validation, format!("{failed} of {n} suite cases failed")));
    }
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.config, "sc3-800mhz-calibration")?;
    let stats = calibration_scenario(&cfg);
    let pk = PeakModel::of(&cfg);
    let e = energy_report(&stats, &cfg.energy, Some(&pk)).map_err(|e| CliError::new(Kind::Other, e.to_string()))?;
    let efficiency = e.achieved_gflops * 1e9 / pk.peak(Precision::Double);
    let text = match a.out.format {
        ReportFormat::Json => {
            let v = serde_json::json!({
                "config": cfg.name,
                "model_derived": true,
                "energy_model": cfg.energy,
                "report": e,
                "efficiency_of_peak": efficiency,
                "target": { "watts": CALIBRATION_POWER_W, "gflops_per_watt": CALIBRATION_GFLOPS_PER_W },
            });
            serde_json::to_string_pretty(&v).expect("serializes") + "\n"
        }
        ReportFormat::Csv => return Err(CliError::usage("calibrate supports --format human or json")),
        ReportFormat::Human => {
            let mut o = String::new();
            let _ = writeln!(o, "config            {} ({:.1} MHz)", cfg.name, cfg.frequency_hz / 1e6);
            let _ = writeln!(o, "scenario          full-chip DGEMM, {:.2} % of DP peak [calibration check]", 100.0 * efficiency);
            let _ = writeln!(o, "achieved          {:.2} GFlops", e.achieved_gflops);
            let _ = writeln!(o, "power             {:.2} W (target {CALIBRATION_POWER_W} W)", e.watts);
            let _ = writeln!(
                o,
                "efficiency        {:.2} GFlops/W achieved-based (target {CALIBRATION_GFLOPS_PER_W})",
                e.gflops_per_watt
            );
            if let Some(p) = e.peak_gflops_per_watt {
                let _ = writeln!(o, "                  {p:.2} GFlops/W peak-based (alternative reading)");
            }
            o
        }
    };
    write_out(a.out.output.as_deref(), text.as_bytes())
}
