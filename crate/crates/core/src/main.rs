use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echoloc::directivity::{synth_directivity, SynthPattern};
use echoloc::estimators::Method;
use echoloc::experiments::{read_records, run_to_dir, summarize, write_summary, ExperimentConfig, RECORDS_FILE, SUMMARY_FILE};
use echoloc::simulator::Snr;

#[derive(Parser)]
#[command(name = "echoloc", version, about = "Image-source localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write records.csv and summary.csv.
    Run {
        /// JSON experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated SNRs in dB ("inf" for noiseless).
        #[arg(long, value_delimiter = ',')]
        snr: Option<Vec<Snr>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated method names, e.g. L1,CC-DAS.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Absolute λ; several values run into one subdirectory each.
        #[arg(long, value_delimiter = ',', conflicts_with = "lambda_rel")]
        lambda: Option<Vec<f64>>,
        /// λ as a fraction of ‖Φᵀh‖∞; several values run into subdirectories.
        #[arg(long, value_delimiter = ',')]
        lambda_rel: Option<Vec<f64>>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        rotations: Option<usize>,
    },
    /// Recompute summary.csv from records.csv.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write a synthetic directivity table.
    SynthDirectivity {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthPattern::default().alpha)]
        alpha: f64,
        #[arg(long, default_value_t = SynthPattern::default().n_angles)]
        angles: usize,
        #[arg(long, default_value_t = SynthPattern::default().n_taps)]
        taps: usize,
        /// Pulse cutoff as a fraction of the sample rate.
        #[arg(long, default_value_t = SynthPattern::default().cutoff)]
        cutoff: f64,
        /// Extra rear delay in samples.
        #[arg(long, default_value_t = SynthPattern::default().diffraction_delay)]
        diffraction_delay: f64,
    },
}

fn print_summary(dir: &Path) {
    println!("{}", dir.join(SUMMARY_FILE).display());
}

fn run(cli: Cli) -> echoloc::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            snr,
            seed,
            methods,
            lambda,
            lambda_rel,
            realizations,
            rotations,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = snr {
                cfg.snr_db = v;
            }
            if let Some(v) = seed {
                cfg.base_seed = v;
            }
            if let Some(v) = methods {
                cfg.methods = v;
            }
            if let Some(v) = realizations {
                cfg.realizations = v;
            }
            if let Some(v) = rotations {
                cfg.rotations = v;
            }
            let sweep: Vec<(String, ExperimentConfig)> = match (lambda, lambda_rel) {
                (Some(ls), _) if ls.len() > 1 => ls
                    .iter()
                    .map(|&l| {
                        let mut c = cfg.clone();
                        c.solver.lambda = Some(l);
                        (format!("lambda_{l}"), c)
                    })
                    .collect(),
                (Some(ls), _) => {
                    cfg.solver.lambda = ls.first().copied();
                    vec![(String::new(), cfg)]
                }
                (None, Some(ls)) if ls.len() > 1 => ls
                    .iter()
                    .map(|&l| {
                        let mut c = cfg.clone();
                        c.solver.lambda_rel = l;
                        (format!("lambda_rel_{l}"), c)
                    })
                    .collect(),
                (None, Some(ls)) => {
                    if let Some(&l) = ls.first() {
                        cfg.solver.lambda_rel = l;
                    }
                    vec![(String::new(), cfg)]
                }
                (None, None) => vec![(String::new(), cfg)],
            };
            for (sub, c) in sweep {
                let dir = if sub.is_empty() { out.clone() } else { out.join(sub) };
                run_to_dir(&c, &dir)?;
                print_summary(&dir);
            }
            Ok(())
        }
        Command::Summarize { input } => {
            let rows = summarize(&read_records(input.join(RECORDS_FILE))?);
            write_summary(input.join(SUMMARY_FILE), &rows)?;
            print_summary(&input);
            Ok(())
        }
        Command::SynthDirectivity {
            out,
            alpha,
            angles,
            taps,
            cutoff,
            diffraction_delay,
        } => {
            let table = synth_directivity(&SynthPattern {
                alpha,
                n_angles: angles,
                n_taps: taps,
                cutoff,
                diffraction_delay,
                ..SynthPattern::default()
            })?;
            table.save(&out)?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
