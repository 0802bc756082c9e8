use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rotspec::analysis::{plot_data, spectrum_csv, DecayTrace};
use rotspec::config::SimulationConfig;
use rotspec::levelcat::{canonical_list_name, Catalog};
use rotspec::lineshape::{line_position, MagneticField};
use rotspec::pipeline::{self, SimulationOutput};
use rotspec::protocol::Method;
use rotspec::selftest;

#[derive(Parser)]
#[command(name = "rotspec", version, about = "THz rotational spectroscopy simulator for trapped HD+")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Magnetic field in gauss; linecalc accepts a comma-separated list.
    #[arg(long = "b-field", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    b_field: Vec<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Line positions at one or more fields, flagged against the lists.
    Linecalc {
        #[command(flatten)]
        common: Common,
        /// Match tolerance in kHz.
        #[arg(long, default_value_t = 1.0)]
        tolerance_khz: f64,
    },
    /// Seeded repetitions for one list: traces, fits and a summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "I")]
        method: String,
        #[arg(long, default_value = "detuned500")]
        list: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
    /// One spectrum point per list.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "I")]
        method: String,
        #[arg(long, value_delimiter = ',', default_value = "A',B,C,detuned500")]
        list: Vec<String>,
        #[arg(long, default_value_t = 9)]
        reps: usize,
    },
    /// Run the acceptance checks.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
    /// Print (or write) the reference config with all defaults.
    DefaultConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<rotspec::Error>() {
        Some(err) if !err.is_config_error() => 2,
        Some(_) => 1,
        None if e.downcast_ref::<UsageError>().is_some() => 1,
        None if e.downcast_ref::<std::io::Error>().is_some() => 1,
        None => 2,
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Linecalc {
            common,
            tolerance_khz,
        } => {
            let cfg = load_config(&common)?;
            linecalc(&cfg, &common, tolerance_khz)?;
        }
        Command::Simulate {
            common,
            method,
            list,
            reps,
        } => {
            let cfg = load_config(&common)?;
            let method: Method = method.parse()?;
            simulate(&cfg, &common, method, &list, reps)?;
        }
        Command::Spectrum {
            common,
            method,
            list,
            reps,
        } => {
            let cfg = load_config(&common)?;
            let method: Method = method.parse()?;
            spectrum(&cfg, &common, method, &list, reps)?;
        }
        Command::Selftest { common } => {
            let cfg = load_config(&common)?;
            let reports = selftest::run_all(&cfg, workers(&common));
            let mut text = String::new();
            for r in &reports {
                let _ = writeln!(text, "{r}");
            }
            print!("{text}");
            if let Some(dir) = &common.out {
                write_file(dir, "selftest.txt", &text)?;
            }
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::DefaultConfig { common } => {
            let text = SimulationConfig::reference_toml();
            match &common.out {
                Some(dir) => write_file(dir, "rotspec.toml", &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config(common: &Common) -> Result<SimulationConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimulationConfig::load(path)?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let [b] = common.b_field[..] {
        cfg.field.magnetic_field_gauss = b;
    }
    if common.workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn single_field(common: &Common) -> Result<()> {
    if common.b_field.len() > 1 {
        return Err(usage("--b-field takes a single value here"));
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("rotspec-out"))
}

fn linecalc(cfg: &SimulationConfig, common: &Common, tolerance_khz: f64) -> Result<()> {
    if !(tolerance_khz >= 0.0) {
        return Err(usage("--tolerance-khz must be >= 0"));
    }
    let catalog = cfg.catalog()?;
    let fields = if common.b_field.is_empty() {
        vec![cfg.field.magnetic_field_gauss]
    } else {
        common.b_field.clone()
    };
    if fields.iter().any(|b| !(*b >= 0.0)) {
        return Err(usage("fields must be >= 0"));
    }
    let table = line_table(&catalog, &fields, tolerance_khz * 1e3);
    print!("{table}");
    if let Some(dir) = &common.out {
        write_file(dir, "lines.csv", &table)?;
    }
    Ok(())
}

/// CSV of line positions with the list entries each one falls on.
fn line_table(catalog: &Catalog, fields: &[f64], tolerance_hz: f64) -> String {
    let mut out = String::from("line,zeeman_khz_per_g,b_gauss,position_mhz,targeted,matches\n");
    for &b in fields {
        let field = MagneticField::new(b);
        for line in &catalog.lines {
            let pos = line_position(line, &field);
            let matches: Vec<String> = catalog
                .lists
                .iter()
                .flat_map(|l| {
                    l.entries_hz
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| (pos - **e).abs() <= tolerance_hz)
                        .map(move |(i, _)| format!("{}[{i}]", l.name))
                })
                .collect();
            let _ = writeln!(
                out,
                "\"{}\",{},{b},{:.6},{},{}",
                line.label(),
                line.zeeman_c1_hz_per_g / 1e3,
                pos / 1e6,
                line.targeted,
                matches.join(" ")
            );
        }
    }
    out
}

fn simulate(
    cfg: &SimulationConfig,
    common: &Common,
    method: Method,
    list: &str,
    reps: usize,
) -> Result<()> {
    single_field(common)?;
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let catalog = cfg.catalog()?;
    let run = pipeline::simulate(cfg, &catalog, method, list, reps, workers(common))?;
    let dir = out_dir(common);
    write_run(cfg, &dir, &run)?;
    let point = run.summary(None)?;
    match method {
        Method::I => {
            let avg = run.averaged_fit(cfg)?;
            println!(
                "method I, list {}, {} reps: rate {:.4} +- {:.4} /s (sd of reps); averaged-trace fit {:.4} +- {:.4} /s",
                run.list_name, point.n_reps, point.normalized_signal, point.stddev, avg.rate, avg.rate_stddev
            );
        }
        Method::II => println!(
            "method II, list {}, {} reps: relative decrease {:.4} +- {:.4} (sd of reps)",
            run.list_name, point.n_reps, point.normalized_signal, point.stddev
        ),
    }
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn file_stem(list_name: &str) -> String {
    list_name.replace('\'', "prime")
}

fn write_run(cfg: &SimulationConfig, dir: &Path, run: &SimulationOutput) -> Result<()> {
    let stem = file_stem(&run.list_name);
    let mut traces = format!("{}\n", DecayTrace::CSV_HEADER);
    for r in &run.reps {
        r.trace.write_csv_rows(&mut traces);
    }
    write_file(dir, &format!("traces_{stem}.csv"), &traces)?;
    write_file(dir, &format!("average_{stem}.csv"), &run.averaged_trace()?.to_csv())?;
    write_file(dir, &format!("trajectory_{stem}.csv"), &run.trajectory.to_csv())?;
    write_file(dir, &format!("timeline_{stem}.json"), &run.timeline.to_json())?;

    let mut fits = String::from(
        "rep,seed,signal,rate,rate_stddev,amplitude,offset,converged,level_before,level_after\n",
    );
    for r in &run.reps {
        let (rate, sd, amp, off, conv) = r.fit.map_or(
            (String::new(), String::new(), String::new(), String::new(), String::new()),
            |f| {
                (
                    f.rate.to_string(),
                    f.rate_stddev.to_string(),
                    f.amplitude.to_string(),
                    f.offset.to_string(),
                    f.converged.to_string(),
                )
            },
        );
        let (before, after) = r
            .levels
            .map_or((String::new(), String::new()), |(b, a)| (b.to_string(), a.to_string()));
        let _ = writeln!(
            fits,
            "{},{},{},{rate},{sd},{amp},{off},{conv},{before},{after}",
            r.rep, r.seed, r.signal
        );
    }
    write_file(dir, &format!("fits_{stem}.csv"), &fits)?;

    let summary = serde_json::json!({
        "method": run.method.to_string(),
        "list": run.list_name,
        "reps": run.reps.len(),
        "master_seed": cfg.master_seed,
        "point": run.summary(None)?,
        "averaged_fit": match run.method {
            Method::I => Some(run.averaged_fit(cfg)?),
            Method::II => None,
        },
    });
    write_file(
        dir,
        &format!("summary_{stem}.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

fn spectrum(
    cfg: &SimulationConfig,
    common: &Common,
    method: Method,
    lists: &[String],
    reps: usize,
) -> Result<()> {
    single_field(common)?;
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if lists.is_empty() {
        return Err(usage("--list needs at least one name"));
    }
    let catalog = cfg.catalog()?;
    let names: Vec<String> = lists.iter().map(|l| canonical_list_name(l).to_string()).collect();
    let result = pipeline::spectrum(cfg, &catalog, method, &names, reps, workers(common))?;
    let dir = out_dir(common);
    let csv = spectrum_csv(&result.points);
    write_file(&dir, "spectrum.csv", &csv)?;
    let triplets: Vec<(f64, f64, f64)> = result
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i as f64, p.normalized_signal, p.stddev))
        .collect();
    write_file(&dir, "spectrum_plot.csv", &plot_data(&triplets))?;
    for run in &result.runs {
        write_run(cfg, &dir, run)?;
    }
    print!("{csv}");
    if let Some(bg) = result.background_rate {
        println!("background rate (detuned500 mean): {bg:.5} /s");
    }
    println!("outputs written to {}", dir.display());
    Ok(())
}
