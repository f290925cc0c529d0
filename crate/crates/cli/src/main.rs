//! `beamshape` command-line runner.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 every
//! shaping attempt failed, 4 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use beamshape::channel::ChannelRealization;
use beamshape::eval::{db_to_linear, mi_lower_bound, monte_carlo_ser, EvalConfig};
use beamshape::experiment::{
    build_channels, design_codebooks, run_experiment, sweep, ExperimentConfig, ExperimentReport,
};
use beamshape::io::{fmt_f64, write_json};
use beamshape::shaping::ShapingCodebook;
use beamshape::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamshape", version, about = "Signal shaping for beamspace-modulated hybrid MIMO links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured channels and write them as JSON fixtures.
    Channel(Common),
    /// Design codebooks only.
    Shape(Common),
    /// SER and MI bound of a codebook on a channel.
    Evaluate(EvaluateArgs),
    /// Full pipeline: channels, shaping, evaluation, artifacts.
    Run(Common),
    /// Re-run the configuration once per value of one field.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Codebook JSON written by `shape`.
    #[arg(long)]
    codebook: PathBuf,
    /// Channel JSON written by `channel`.
    #[arg(long)]
    channel: PathBuf,
    /// Configuration whose `eval` section supplies defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated SNR list in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Dotted field path, e.g. `system.n_bits` or `eval.dac_bits`.
    #[arg(long)]
    field: String,
    /// JSON array of values, e.g. `[3,4,5]`.
    #[arg(long)]
    values: String,
}

enum Failure {
    Invalid(String),
    Shaping(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Shaping(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Shaping(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Json(_) => Failure::Io(msg),
            Error::ShapingFailure { .. } | Error::DegenerateCodebook | Error::NotComputed(_) => Failure::Shaping(msg),
            _ => Failure::Invalid(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(c: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn print_summary(report: &ExperimentReport) {
    println!("{:<10} {:>8} {:>8} {:>12} {:>12}", "method", "channels", "failures", "median_dmin", "mean_iters");
    let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    for m in &report.methods {
        println!(
            "{:<10} {:>8} {:>8} {:>12} {:>12}",
            m.method,
            m.channels,
            m.failures,
            f(m.median_d_min, 5),
            f(m.mean_iterations, 1)
        );
    }
    for row in &report.ser {
        println!("ser {:<10} {:>6} dB  {:.3e} (bound {:.3e})", row.method, row.snr_db, row.ser, row.union_bound);
    }
    for fail in &report.failures {
        eprintln!("failed: {} on channel {}: {}", fail.method, fail.channel_id, fail.message);
    }
}

fn cmd_channel(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let chans = build_channels(&cfg)?;
    let dir = cfg.out_dir.join("channels");
    for (i, ch) in chans.iter().enumerate() {
        let path = dir.join(format!("channel_{i}.json"));
        ch.save(&path)?;
        let sigma: Vec<String> = ch.primary().svd.sigma.iter().map(|s| format!("{s:.4}")).collect();
        println!(
            "{}: {}x{}, {} subcarrier(s), rank {}, singular values [{}]",
            path.display(),
            ch.n_r,
            ch.n_t,
            ch.carriers(),
            ch.rank(),
            sigma.join(", ")
        );
    }
    Ok(())
}

fn cmd_shape(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let designed = design_codebooks(&cfg)?;
    let dir = cfg.out_dir.join("codebooks");
    let mut ok = 0;
    for d in &designed {
        let name = match d.carrier {
            Some(k) => format!("{}_ch{}_k{k}.json", d.method, d.channel_id),
            None => format!("{}_ch{}.json", d.method, d.channel_id),
        };
        match &d.book {
            Ok(book) => {
                let path = dir.join(name);
                book.save(&path)?;
                ok += 1;
                println!(
                    "{}: d_min {:.6}, {} codewords",
                    path.display(),
                    book.d_min_design.unwrap_or(f64::NAN),
                    book.len()
                );
            }
            Err(e) => eprintln!("failed: {} on channel {}: {e}", d.method, d.channel_id),
        }
    }
    if ok == 0 {
        return Err(Failure::Shaping("no method produced a codebook".into()));
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Outcome {
    let book = ShapingCodebook::load(&a.codebook)?;
    let chan = ChannelRealization::load(&a.channel)?;
    let base = match &a.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?.eval
        }
        None => None,
    };
    let mut ev = base.unwrap_or(EvalConfig {
        snr_db_list: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        trials: 10_000,
        seed: 0,
        dac_bits: None,
        csi_eta: None,
    });
    if let Some(s) = &a.snr_db {
        ev.snr_db_list = s.clone();
    }
    if let Some(t) = a.trials {
        ev.trials = t;
    }
    if let Some(s) = a.seed {
        ev.seed = s;
    }
    ev.validate()?;
    let h = chan.h();
    let curve = monte_carlo_ser(&book, h, &ev, book.method.tag())?;
    let mut csv = String::from("method,snr_db,trials,errors,ser,union_bound,mi_lower_bound\n");
    for p in &curve.points {
        let mi = mi_lower_bound(&book, h, db_to_linear(p.snr_db), h.nrows());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            curve.method,
            fmt_f64(p.snr_db),
            p.trials,
            p.errors,
            fmt_f64(p.ser),
            fmt_f64(p.union_bound),
            fmt_f64(mi)
        );
        println!("{:>6} dB  ser {:.3e}  bound {:.3e}  mi_lb {:.4}", p.snr_db, p.ser, p.union_bound, mi);
    }
    let path = a.out_dir.join("evaluation.csv");
    write_text(&path, &csv)?;
    write_json(&a.out_dir.join("evaluation.json"), &curve)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let report = run_experiment(&cfg)?;
    print_summary(&report);
    println!("artifacts in {}", cfg.out_dir.display());
    if report.all_failed() {
        return Err(Failure::Shaping("every shaping method failed on every channel".into()));
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let cfg = load_config(&a.common)?;
    let values: Vec<serde_json::Value> = serde_json::from_str(&a.values)
        .map_err(|e| Failure::Invalid(format!("--values must be a JSON array: {e}")))?;
    let base = serde_json::to_value(&cfg).map_err(|e| Failure::Invalid(e.to_string()))?;
    let runs = sweep(&base, &a.field, &values, &cfg.out_dir)?;
    let mut any = false;
    for ((dir, report), v) in runs.iter().zip(&values) {
        println!("== {} = {v} -> {}", a.field, dir.display());
        print_summary(report);
        any |= !report.all_failed();
    }
    if !any {
        return Err(Failure::Shaping("every run failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Channel(c) => cmd_channel(c),
        Command::Shape(c) => cmd_shape(c),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Run(c) => cmd_run(c),
        Command::Sweep(a) => cmd_sweep(a),
    };
    eprintln!("wall time {:.2} s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
