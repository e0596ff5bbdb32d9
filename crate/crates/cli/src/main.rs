use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use beamshadow::codebook::{gain_map, DirectionalParams, Scheme};
use beamshadow::distortion::gen_distortion;
use beamshadow::experiment::{run_experiment, ExperimentConfig};
use beamshadow::field::{apply_distortion, synth_freespace_field, AntennaFieldMap};
use beamshadow::io;
use beamshadow::link::{run_chain_harness, run_theorem_harness, HarnessConfig};
use beamshadow::metrics::{
    cdf_summary, coverage_stats, loss_samples, pair_phase_diff, phase_mixing,
};

#[derive(Parser)]
#[command(
    name = "beamshadow",
    version,
    about = "Hand-blockage beamforming experiments"
)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Phase-shifter bit counts, comma separated.
    #[arg(long = "B", global = true, value_delimiter = ',')]
    bits: Option<Vec<u32>>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the free-space field file.
    Synth,
    /// Apply one scenario's distortion to a field.
    Distort {
        #[arg(long)]
        scenario: String,
        /// Free-space field file; synthesized from the config when omitted.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// RoI, loss CDFs, coverage and phase mixing between two field files.
    Metrics {
        #[arg(long)]
        free: PathBuf,
        #[arg(long)]
        blocked: PathBuf,
    },
    /// Gain maps of one scheme over the configured RoI.
    Evaluate {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
    },
    /// Randomized check of the amplitude-control SNR lower bound.
    TheoremCheck {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        antennas: usize,
        /// Also verify every intermediate inequality on random distortions.
        #[arg(long)]
        chain: bool,
    },
    /// Full experiment.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Optimal,
    Directional,
    EnhPhase,
    EnhPhaseAmp,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = &cli.bits {
        cfg.codebook.enhanced_bits = b.clone();
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(&cfg.output_dir)
}

fn write(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn freespace(cfg: &ExperimentConfig) -> Result<AntennaFieldMap> {
    Ok(synth_freespace_field(&cfg.array, &cfg.grid.build()?)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("BEAMSHADOW_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: BEAMSHADOW_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Ok(false) means the command ran but found bound violations.
fn dispatch(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    match &cli.cmd {
        Command::Synth => {
            let f = freespace(&cfg)?;
            let p = out_dir(&cfg)?.join("freespace-field.csv");
            io::write_field_file(&f, &p)?;
            println!("wrote {}", p.display());
        }
        Command::Distort { scenario, field } => {
            let s = cfg
                .scenarios
                .iter()
                .find(|s| &s.name == scenario)
                .with_context(|| format!("scenario `{scenario}` is not defined in the config"))?;
            let free = match field {
                Some(p) => {
                    io::read_field_file(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => freespace(&cfg)?,
            };
            let mut spec = s.distortion.clone();
            spec.seed = cfg.seed.wrapping_add(spec.seed);
            let mut array = cfg.array.clone();
            array.n_antennas = free.n_antennas();
            let d = gen_distortion(&spec, &array, free.grid())?;
            let mut blocked = apply_distortion(&free, &d)?;
            blocked.label = s.name.clone();
            let dir = out_dir(&cfg)?;
            io::write_field_file(&blocked, dir.join("blocked-field.csv"))?;
            io::write_distortion_file(&d, dir.join("distortion.csv"))?;
            println!("wrote {}", dir.join("blocked-field.csv").display());
        }
        Command::Metrics { free, blocked } => {
            let f =
                io::read_field_file(free).with_context(|| format!("reading {}", free.display()))?;
            let b = io::read_field_file(blocked)
                .with_context(|| format!("reading {}", blocked.display()))?;
            let roi = cfg.roi.build(&f, &b)?;
            let mut rows = Vec::new();
            for i in 0..f.n_antennas() {
                let s = cdf_summary(&loss_samples(&f, &b, i, &roi)?, &cfg.percentiles)?;
                rows.push((format!("loss/element-{i}"), s));
            }
            let coverage = coverage_stats(&f, &b, cfg.roi.g1_db, cfg.roi.g2_db)?;
            let mut mixing = Vec::new();
            for i in 0..f.n_antennas() {
                for j in i + 1..f.n_antennas() {
                    mixing.push(((i, j), phase_mixing(&pair_phase_diff(&b, i, j)?)?));
                }
            }
            let dir = out_dir(&cfg)?;
            write(
                dir.join("cdf.csv"),
                io::cdf_table_to_string(rows.iter().map(|(n, s)| (n.as_str(), s))),
            )?;
            write(dir.join("coverage.csv"), io::coverage_to_string(&coverage))?;
            let json = serde_json::json!({
                "roi_cells": roi.count(),
                "roi_area_fraction": roi.area_fraction,
                "losses": rows.iter().map(|(n, s)| serde_json::json!({"name": n, "summary": s})).collect::<Vec<_>>(),
                "coverage": coverage,
                "phase_mixing_deg": mixing,
            });
            write(
                dir.join("metrics.json"),
                serde_json::to_string_pretty(&json)? + "\n",
            )?;
            for (n, s) in &rows {
                println!(
                    "{n}: median {:.3} dB over {} cells",
                    s.percentile(50.0).unwrap_or(f64::NAN),
                    s.n_samples
                );
            }
        }
        Command::Evaluate { field, scheme } => {
            let f = io::read_field_file(field)
                .with_context(|| format!("reading {}", field.display()))?;
            let roi = cfg.roi.build(&f, &f)?;
            let params = DirectionalParams {
                beams: cfg.codebook.directional_beams,
                quant_bits: cfg.codebook.directional_quant_bits,
                spacing: cfg.array.element_spacing,
            };
            let schemes: Vec<Scheme> = match scheme {
                SchemeArg::Optimal => vec![Scheme::Optimal],
                SchemeArg::Directional => vec![Scheme::Directional],
                SchemeArg::EnhPhase => cfg
                    .codebook
                    .enhanced_bits
                    .iter()
                    .map(|&bits| Scheme::EnhPhase { bits })
                    .collect(),
                SchemeArg::EnhPhaseAmp => cfg
                    .codebook
                    .enhanced_bits
                    .iter()
                    .map(|&bits| Scheme::EnhPhaseAmp { bits })
                    .collect(),
            };
            let dir = out_dir(&cfg)?;
            for s in schemes {
                let m = gain_map(s, params, &f, &roi)?;
                let p = dir.join(format!("gain-{}.csv", s.name()));
                write(p.clone(), io::gain_map_to_string(&m))?;
                let c = cdf_summary(&m.masked_values(), &cfg.percentiles)?;
                println!(
                    "{}: median {:.3} dB over {} cells -> {}",
                    s.name(),
                    c.percentile(50.0).unwrap_or(f64::NAN),
                    c.n_samples,
                    p.display()
                );
            }
        }
        Command::TheoremCheck {
            trials,
            antennas,
            chain,
        } => {
            let bits = cli.bits.clone().unwrap_or_else(|| vec![2]);
            if bits.iter().any(|&b| b < 1) {
                bail!("--B values must be >= 1");
            }
            let mut ok = true;
            for &b in &bits {
                let h = HarnessConfig {
                    trials: *trials,
                    seed: cfg.seed,
                    bits: b,
                    n_antennas: *antennas,
                    ..HarnessConfig::default()
                };
                let s = run_theorem_harness(&h)?;
                println!(
                    "B={b}: {} trials, {} bound violations, min margin {:.3e}",
                    s.trials.len(),
                    s.violations,
                    s.min_margin
                );
                ok &= s.violations == 0;
                if let Some(o) = &cli.out {
                    fs::create_dir_all(o)?;
                    write(o.join(format!("theorem-B{b}.csv")), s.to_csv())?;
                }
                if *chain {
                    let c = run_chain_harness(&h)?;
                    println!(
                        "B={b}: chain check {} trials, {} violations, max |residual|/(pi/2^B) {:.6}",
                        c.trials, c.violations, c.max_residual_ratio
                    );
                    ok &= c.violations == 0;
                    if let Some(o) = &cli.out {
                        write(
                            o.join(format!("chain-B{b}.json")),
                            serde_json::to_string_pretty(&c)? + "\n",
                        )?;
                    }
                }
            }
            return Ok(ok);
        }
        Command::Run => {
            let report = run_experiment(&cfg)?;
            for s in &report.scenarios {
                let med = |q: &str| {
                    s.quantity(q)
                        .and_then(|c| c.percentile(50.0))
                        .unwrap_or(f64::NAN)
                };
                println!(
                    "{}: {} RoI cells, median optimal loss {:.3} dB, median directional gap {:.3} dB",
                    s.name,
                    s.roi_cells,
                    med("loss/optimal"),
                    med("gap/directional-to-optimal")
                );
            }
            println!("wrote {}", cfg.output_dir.join("report.json").display());
        }
    }
    Ok(true)
}
