use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use naf_core::coding::capacity_table;
use naf_core::nn::{load_model, save_model};
use naf_core::{AttackKind, TriggerMode};
use naf_cli::artifacts::{json_bytes, RunDir};
use naf_cli::report::{CAPACITY_NS, CAPACITY_TS};
use naf_cli::stages::{self, aligned_outcome, load_codebook, load_record, load_triggers, recorded_config};
use naf_cli::{report_stage, run_pipeline, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "naf", version, about = "Neuron alignment for white-box watermarks: staged experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment configuration (TOML); defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Forge against a layer-normalized reference and normalize suspects.
    #[arg(long)]
    normalize: bool,
    /// Overrides the trial count of every attack.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the host network and embed the watermark.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute centroids and the neuron codebook.
    Encode {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Synthesize trigger sets (all configured modes unless --mode is given).
    Forge {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        mode: Option<TriggerMode>,
    },
    /// Produce attacked copies of the watermarked model.
    Attack {
        #[command(flatten)]
        run: RunArgs,
        /// Only this attack kind (np, ftp, npp, rescale).
        #[arg(long)]
        kind: Option<AttackKind>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Align attacked copies (or one --model) and verify them.
    Align {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        mode: Option<TriggerMode>,
        #[arg(long)]
        normalize: bool,
        /// A single suspect model; the realigned copy is written next to the
        /// run artifacts.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Ownership verification of one model, optionally after alignment.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        /// Align with this trigger set first.
        #[arg(long)]
        mode: Option<TriggerMode>,
        #[arg(long)]
        normalize: bool,
    },
    /// Aggregate the run into report.json and table CSVs.
    Report {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the correctable-positions grid.
    CapacityTable {
        #[arg(long, value_delimiter = ',', default_values_t = CAPACITY_NS)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = CAPACITY_TS)]
        t: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        k_corrupted: usize,
    },
    /// All stages in order.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn load_config(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.normalize {
        cfg.normalize = true;
    }
    if let Some(n) = args.trials {
        cfg.attacks.iter_mut().for_each(|a| a.set_trials(n));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_capacity(ns: &[usize], ts: &[usize], k: usize, kc: usize) {
    let grid = capacity_table(ns, ts, k, kc);
    print!("{:>6}", "N\\T");
    for t in ts {
        print!("{t:>6}");
    }
    println!();
    for (n, row) in ns.iter().zip(&grid) {
        print!("{n:>6}");
        for v in row {
            print!("{v:>6}");
        }
        println!();
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    print!("{}", String::from_utf8_lossy(&json_bytes(value)?));
    Ok(())
}

fn read_suspect(path: &Path) -> CliResult<naf_core::Network> {
    load_model(path).map_err(|e| match e {
        naf_core::NafError::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { cfg, run } => {
            let cfg = load_config(&cfg)?;
            let summary = stages::train_stage(&cfg, &RunDir::create(&run.out)?)?;
            print_json(&summary)
        }
        Command::Encode { run } => {
            let run = RunDir::open(&run.out)?;
            let summary = stages::encode_stage(&run)?;
            print_capacity(&CAPACITY_NS, &CAPACITY_TS, summary.k, summary.k_corrupted);
            println!();
            print_json(&summary)
        }
        Command::Forge { run, mode } => {
            let run = RunDir::open(&run.out)?;
            let modes = match mode {
                Some(m) => vec![m],
                None => recorded_config(&run)?.forge.modes,
            };
            for set in stages::forge_stage(&run, &modes)? {
                println!(
                    "{}: {} triggers, {:.0}% converged, {} variants",
                    set.mode,
                    set.len(),
                    100.0 * set.converged_fraction(),
                    set.j()
                );
            }
            Ok(())
        }
        Command::Attack { run, kind, trials } => {
            let run = RunDir::open(&run.out)?;
            for label in stages::attack_stage(&run, kind, trials)? {
                println!("wrote attacks/{label}");
            }
            Ok(())
        }
        Command::Align { run, mode, normalize, model } => {
            let run = RunDir::open(&run.out)?;
            match model {
                None => {
                    for label in stages::align_stage(&run, mode, normalize)? {
                        println!("wrote trials_{label}.json");
                    }
                    Ok(())
                }
                Some(path) => {
                    let cfg = recorded_config(&run)?;
                    let mode = mode.unwrap_or(TriggerMode::T1);
                    let suspect = read_suspect(&path)?;
                    let triggers = load_triggers(&run, mode)?;
                    let backend = naf_core::UchidaBackend {
                        strength: cfg.watermark.strength,
                        ..Default::default()
                    };
                    let (outcome, alignment) = aligned_outcome(
                        &backend,
                        &suspect,
                        &triggers,
                        &load_codebook(&run)?,
                        &load_record(&run)?,
                        normalize || cfg.normalize,
                        None,
                    )?;
                    if let Some(a) = &alignment {
                        let restored = naf_core::apply_alignment(&suspect, &cfg.watermark.layer, a)?;
                        let stem = path.file_stem().map_or("suspect".into(), |s| s.to_string_lossy().into_owned());
                        let dest = run.path(&format!("aligned_{stem}_{mode}.naf"));
                        save_model(&restored, &dest).map_err(CliError::from)?;
                        eprintln!("wrote {}", dest.display());
                    }
                    print_json(&serde_json::json!({ "outcome": outcome, "alignment": alignment }))
                }
            }
        }
        Command::Verify { run, model, mode, normalize } => {
            let run = RunDir::open(&run.out)?;
            let cfg = recorded_config(&run)?;
            let suspect = read_suspect(&model)?;
            let record = load_record(&run)?;
            let backend = naf_core::UchidaBackend {
                strength: cfg.watermark.strength,
                ..Default::default()
            };
            match mode {
                None => {
                    let ov = naf_core::WatermarkBackend::verify(&backend, &suspect, &record)?;
                    print_json(&ov)
                }
                Some(mode) => {
                    let (outcome, _) = aligned_outcome(
                        &backend,
                        &suspect,
                        &load_triggers(&run, mode)?,
                        &load_codebook(&run)?,
                        &record,
                        normalize || cfg.normalize,
                        None,
                    )?;
                    if let Some(cause) = &outcome.tamper {
                        return Err(CliError::Integrity(format!("suspect does not fit the artifacts: {cause}")));
                    }
                    print_json(&outcome)
                }
            }
        }
        Command::Report { run } => {
            let report = report_stage(&RunDir::open(&run.out)?)?;
            print_json(&report)
        }
        Command::CapacityTable { n, t, k, k_corrupted } => {
            if k < 2 || k_corrupted < 1 || n.contains(&0) || t.contains(&0) {
                return Err(CliError::validation("need k >= 2, k_corrupted >= 1 and positive n, t"));
            }
            print_capacity(&n, &t, k, k_corrupted);
            Ok(())
        }
        Command::Run { cfg, run } => {
            let cfg = load_config(&cfg)?;
            let report = run_pipeline(&cfg, &run.out)?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("naf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
