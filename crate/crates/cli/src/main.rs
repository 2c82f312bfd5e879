//! `mmlink`: run Monte Carlo link sweeps and inspect power-delay profiles.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmlink::{
    builtin_models, coherence_bandwidth, csv_string, find_model, parse_pdp_table, run_experiment,
    sample_pdp, write_outputs, Error, ExperimentSpec, Result,
};

#[derive(Parser)]
#[command(
    name = "mmlink",
    version,
    about = "Uplink massive-MIMO OFDM link simulator",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write a CSV plus a JSON sidecar of the spec.
    Run(Box<RunArgs>),
    /// List or inspect power-delay profiles.
    #[command(subcommand)]
    Pdp(PdpCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec as JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Receiver to run; repeatable.
    /// One of: conventional-mrc, conventional-mmse, sliding, sliding:D.
    #[arg(long = "scheme")]
    schemes: Vec<String>,

    /// Swept variable: q, ebn0, or depth.
    #[arg(long)]
    sweep: Option<String>,

    /// Comma-separated sweep values, e.g. "0,2,4,6".
    #[arg(long)]
    values: Option<String>,

    /// Monte Carlo realizations per sweep point.
    #[arg(long)]
    trials: Option<usize>,

    /// Base seed; trials derive their streams from it deterministically.
    #[arg(long)]
    seed: Option<u64>,

    /// Cross-subcarrier correlation model: exact or approx.
    #[arg(long)]
    alpha: Option<String>,

    /// Power-delay profile name (etu, epa, eva, or one from --pdp-file).
    #[arg(long)]
    pdp: Option<String>,

    /// Extra profiles, one "name delay_ns power_db" tap per line.
    #[arg(long)]
    pdp_file: Option<PathBuf>,

    /// Output CSV path; the spec lands next to it as <out>.json.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; results are identical for any value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum PdpCommand {
    /// Names and tap counts of the available profiles.
    List {
        /// Extra profiles to include.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Sampled taps of one profile at a given rate.
    Inspect {
        name: String,
        /// Extra profiles to search.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Sample rate in Hz (default: 1024 subcarriers at 15 kHz).
        #[arg(long, default_value_t = 1024.0 * 15e3)]
        sample_rate: f64,
    },
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentSpec::default(),
    };
    if !args.schemes.is_empty() {
        spec.schemes = args
            .schemes
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
    }
    if let Some(sweep) = &args.sweep {
        spec.sweep = sweep.parse()?;
    }
    if let Some(values) = &args.values {
        spec.values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad sweep value '{v}'")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(seed) = args.seed {
        spec.config.seed = seed;
    }
    if let Some(alpha) = &args.alpha {
        spec.alpha_mode = alpha.parse()?;
    }
    if let Some(pdp) = &args.pdp {
        spec.pdp = pdp.clone();
    }
    if args.pdp_file.is_some() {
        spec.pdp_file = args.pdp_file.clone();
    }
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    Ok(spec)
}

fn run(args: &RunArgs) -> Result<()> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let spec = build_spec(args)?;
    let records = run_experiment(&spec)?;
    print!("{}", csv_string(&records));
    let (csv_path, json_path) = write_outputs(&spec, &records)?;
    eprintln!(
        "wrote {} ({} records) and {}",
        csv_path.display(),
        records.len(),
        json_path.display()
    );
    Ok(())
}

fn load_models(file: Option<&PathBuf>) -> Result<Vec<mmlink::PdpModel>> {
    let mut models = Vec::new();
    if let Some(path) = file {
        models.extend(parse_pdp_table(&fs::read_to_string(path)?)?);
    }
    models.extend(builtin_models());
    Ok(models)
}

fn pdp(command: &PdpCommand) -> Result<()> {
    match command {
        PdpCommand::List { file } => {
            for model in load_models(file.as_ref())? {
                println!(
                    "{:8} {:2} taps, span {:.2} us",
                    model.name,
                    model.delays_s.len(),
                    model.span_s() * 1e6
                );
            }
        }
        PdpCommand::Inspect {
            name,
            file,
            sample_rate,
        } => {
            let models = load_models(file.as_ref())?;
            let model = find_model(&models, name)?;
            let sampled = sample_pdp(model, *sample_rate)?;
            println!(
                "{} at {:.4} MHz: {} sample periods, coherence bandwidth {:.1} kHz",
                model.name,
                sample_rate / 1e6,
                sampled.channel_len(),
                coherence_bandwidth(&sampled, *sample_rate) / 1e3
            );
            println!("{:>6} {:>12} {:>10}", "index", "delay_ns", "power");
            for (l, &rho) in sampled.rho.iter().enumerate() {
                if rho == 0.0 {
                    continue;
                }
                println!("{l:>6} {:>12.1} {rho:>10.4}", l as f64 / sample_rate * 1e9);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Pdp(command) => pdp(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
