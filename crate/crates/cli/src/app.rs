//! Argument parsing and dispatch for the `enf` binary.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use enf_core::SchemeId;

use crate::commands::{
    cmd_compare, cmd_eval_dataset, cmd_extract, cmd_mc, cmd_synth, McOptions, SynthOptions,
};
use crate::config::{parse_harmonics, RunOptions};

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

fn parse_schemes(s: &str) -> Result<Vec<SchemeId>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(SchemeId::ALL.to_vec());
    }
    s.split(',').map(|t| t.parse::<SchemeId>().map_err(|e| e.to_string())).collect()
}

fn parse_set(s: &str) -> Result<Vec<u32>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_harmonics(s).map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match parse_f64_list(s)?.as_slice() {
        [lo, hi] if lo <= hi => Ok((*lo, *hi)),
        _ => Err(format!("expected `lo,hi` with lo ≤ hi, got `{s}`")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "enf", version, about = "Electric network frequency extraction and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the ENF of a WAV recording.
    Extract {
        input: PathBuf,
        /// Per-frame ENF CSV.
        #[arg(short, long)]
        output: PathBuf,
        /// Diagnostics JSON; defaults to the output path with a `.json` extension.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Reference ENF (Hz per line or `time,freq`) to report the MSE against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Frames to drop from the reference (positive) or the estimate (negative).
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        ref_offset: i64,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Synthesize a harmonic ENF recording with known ground truth.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        /// Ground-truth CSV; defaults to the output path with a `.csv` extension.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Mixture SNR in dB.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        snr: f64,
        /// Write the noise-free mixture.
        #[arg(long)]
        noiseless: bool,
        #[arg(long, default_value_t = 8000.0)]
        sample_rate: f64,
        /// Constant fundamental instead of an AR(1) path.
        #[arg(long)]
        constant_hz: Option<f64>,
        /// Harmonics to corrupt with in-band noise, e.g. `3,6,7`.
        #[arg(long, value_parser = parse_set, default_value = "")]
        corrupt: ::std::vec::Vec<u32>,
        #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
        corruption_snr: f64,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Monte Carlo NMSE-vs-SNR experiment on synthetic recordings.
    Mc {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 180.0)]
        duration: f64,
        /// Comma-separated SNRs in dB.
        #[arg(long, value_parser = parse_f64_list, default_value = "-20,-10,0", allow_hyphen_values = true)]
        snr: ::std::vec::Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Comma-separated scheme ids or `all`.
        #[arg(long, value_parser = parse_schemes, default_value = "all")]
        schemes: ::std::vec::Vec<SchemeId>,
        #[arg(long, value_parser = parse_set, default_value = "")]
        corrupt: ::std::vec::Vec<u32>,
        #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
        corruption_snr: f64,
        /// Also record |Ω| before and after enhancement.
        #[arg(long)]
        omega_stats: bool,
        /// One constant fundamental per trial drawn from `lo,hi`.
        #[arg(long, value_parser = parse_range)]
        constant_range: Option<(f64, f64)>,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Evaluate schemes over a directory of recordings with sibling references.
    EvalDataset {
        dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_parser = parse_schemes, default_value = "all")]
        schemes: ::std::vec::Vec<SchemeId>,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        ref_offset: i64,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Run all ten schemes on one recording.
    Compare {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        ref_offset: i64,
        #[command(flatten)]
        run: RunOptions,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { input, output, diagnostics, reference, ref_offset, run } => {
            let cfg = run.resolve()?;
            let diag = diagnostics.unwrap_or_else(|| output.with_extension("json"));
            let r = cmd_extract(&input, &output, &diag, &cfg, reference.as_deref(), ref_offset)?;
            eprintln!(
                "{}: {} frames, omega {:?}{}",
                r.output.scheme,
                r.output.estimate.len(),
                r.output.omega,
                r.output.eta.map(|e| format!(", eta {e:.4}")).unwrap_or_default()
            );
            if let Some((n, mse)) = r.reference_mse {
                println!("mse_hz2 {mse:.6e} over {n} frames");
            }
        }
        Command::Synth {
            output,
            truth,
            duration,
            snr,
            noiseless,
            sample_rate,
            constant_hz,
            corrupt,
            corruption_snr,
            run,
        } => {
            let cfg = run.resolve()?;
            let opts = SynthOptions {
                duration_s: duration,
                snr_db: (!noiseless).then_some(snr),
                sample_rate_hz: sample_rate,
                constant_hz,
                corrupt,
                corruption_snr_db: corruption_snr,
            };
            let truth_path = truth.unwrap_or_else(|| output.with_extension("csv"));
            let t = cmd_synth(&output, &truth_path, &opts, &cfg)?;
            eprintln!("wrote {} and {} ({} truth frames)", output.display(), truth_path.display(), t.len());
        }
        Command::Mc {
            out_dir,
            duration,
            snr,
            trials,
            schemes,
            corrupt,
            corruption_snr,
            omega_stats,
            constant_range,
            run,
        } => {
            let cfg = run.resolve()?;
            let opts = McOptions {
                duration_s: duration,
                snr_db: snr,
                trials,
                schemes,
                corrupt,
                corruption_snr_db: corruption_snr,
                omega_stats,
                constant_range_hz: constant_range,
            };
            let r = cmd_mc(&out_dir, &opts, &cfg)?;
            for row in &r.summary {
                println!("{:<9} {:>7.1} dB  nmse {:.4e}", row.scheme, row.snr_db, row.nmse_hz2);
            }
        }
        Command::EvalDataset { dir, out_dir, schemes, ref_offset, run } => {
            let cfg = run.resolve()?;
            let (_, summary) = cmd_eval_dataset(&dir, &out_dir, &schemes, &cfg, ref_offset)?;
            println!("{:<9} {:>3} {:>7} {:>12} {:>12}", "scheme", "|M|", "|Ω|", "NMSE", "std");
            for s in summary {
                println!(
                    "{:<9} {:>3} {:>7.2} {:>12.4e} {:>12.4e}",
                    s.scheme, s.harmonics, s.mean_omega, s.nmse_hz2, s.std_mse_hz2
                );
            }
        }
        Command::Compare { input, out_dir, reference, ref_offset, run } => {
            let cfg = run.resolve()?;
            for r in cmd_compare(&input, &out_dir, &cfg, reference.as_deref(), ref_offset)? {
                let mse = r.mse_hz2.map(|m| format!("  mse {m:.4e}")).unwrap_or_default();
                println!("{:<9} mean {:.5} Hz  omega {:?}{mse}", r.scheme, r.mean_hz, r.omega);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_negative_snr_lists() {
        let cli = Cli::try_parse_from(["enf", "mc", "--out-dir", "x", "--snr", "-30,-20", "--schemes", "mle,p-mle"])
            .unwrap();
        match cli.command {
            Command::Mc { snr, schemes, .. } => {
                assert_eq!(snr, vec![-30.0, -20.0]);
                assert_eq!(schemes, vec![SchemeId::Mle, SchemeId::PMle]);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn run_flags_flatten() {
        let cli = Cli::try_parse_from([
            "enf", "extract", "in.wav", "-o", "out.csv", "--scheme", "e_wmle", "--tau", "100", "--desk",
            "--prefilter=false", "--harmonics", "2,3", "--ref-offset", "-3",
        ])
        .unwrap();
        match cli.command {
            Command::Extract { run, ref_offset, .. } => {
                assert_eq!(ref_offset, -3);
                let c = run.resolve().unwrap();
                assert_eq!(c.scheme, SchemeId::EWmle);
                assert_eq!((c.tau, c.n_rep, c.prefilter), (100, 1_000, false));
                assert_eq!(c.harmonics, vec![2, 3]);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Cli::try_parse_from(["enf", "extract", "in.wav", "-o", "o", "--scheme", "nope"]).is_err());
        assert!(Cli::try_parse_from(["enf", "mc", "--out-dir", "x", "--snr", "a,b"]).is_err());
        assert!(Cli::try_parse_from(["enf", "mc", "--out-dir", "x", "--constant-range", "50.1,49.9"]).is_err());
        assert!(Cli::try_parse_from(["enf", "extract", "in.wav"]).is_err());
    }
}
