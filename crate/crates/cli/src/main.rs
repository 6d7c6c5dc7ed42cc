use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use loadtl_core::experiment::SetupKind;
use loadtl_core::io::{write_manifest, write_series_csv, ManifestEntry};
use loadtl_core::synth::synthesize_dataset;
use loadtl_core::{Error, Pipeline, PipelineConfig};

/// Cross-country transfer learning for day-ahead load forecasting.
///
/// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 training failure.
#[derive(Parser, Debug)]
#[command(name = "loadtl", version)]
struct Cli {
    /// TOML config; keys not given keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Start from the small synthetic preset (10 trials, 5 members).
    #[arg(long, global = true)]
    desk_scale: bool,

    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Scope {
    /// baseline, abo, cbo, snaive or all.
    #[arg(long, default_value = "all")]
    setup: String,

    /// Target country code; repeat for several. Defaults to every country.
    #[arg(long)]
    target: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and curate the input files.
    Ingest,
    /// Compute load profiles of the cleaned series.
    Profile,
    /// Ward clustering of the profile vectors.
    Cluster,
    /// Hyperparameter search for a setup; experiments reuse the result.
    Tune(Scope),
    /// Train, fine-tune and evaluate.
    Experiment(Scope),
    /// Build the comparison tables.
    Report,
    /// Every stage in order.
    Run,
    /// Write a synthetic dataset with a manifest, for use as real input.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved config.
    ShowConfig,
}

fn setups(s: &str) -> Result<Vec<SetupKind>, Error> {
    if s == "all" {
        return Ok(SetupKind::ALL.to_vec());
    }
    s.split(',')
        .map(|x| x.trim().parse::<SetupKind>().map_err(|_| Error::Config(format!("unknown setup `{x}`"))))
        .collect()
}

fn targets(t: &[String]) -> Option<&[String]> {
    (!t.is_empty()).then_some(t)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::InvalidInput(_)
            | Error::UnknownTimezone(_)
            | Error::Split(_)
            | Error::EmptyBucket(_)
            | Error::ModelFormat(_)
            | Error::MissingArtifact(_),
        ) => 3,
        Some(
            Error::Dimension { .. }
            | Error::NonFinite(_)
            | Error::Diverged { .. }
            | Error::StudyFailed { .. }
            | Error::Experiment(_),
        ) => 4,
        None => 1,
    }
}

fn synth(config: &PipelineConfig, out: &PathBuf) -> Result<()> {
    let spec = config.synthetic.clone().unwrap_or_default();
    let syn = synthesize_dataset(&spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::new();
    for (code, series) in &syn.dataset.series {
        let name = format!("{code}.csv");
        write_series_csv(&out.join(&name), series)?;
        entries.push(ManifestEntry {
            meta: syn.dataset.countries[code].clone(),
            csv_path: name.into(),
        });
    }
    write_manifest(&out.join("manifest.csv"), &entries)?;
    println!("wrote {} series to {}", entries.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref(), cli.desk_scale)?;
    if let Some(out) = cli.output {
        config.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    match cli.command {
        Command::ShowConfig => {
            print!("{}", config.to_toml()?);
            return Ok(());
        }
        Command::Synth { out } => return synth(&config, &out),
        _ => {}
    }
    let pipeline = Pipeline::new(config)?;
    match cli.command {
        Command::Ingest => {
            let rows = pipeline.ingest()?;
            let outliers: usize = rows.iter().map(|r| r.outliers).sum();
            let imputed: usize = rows.iter().map(|r| r.imputed).sum();
            println!("{} countries, {outliers} outliers removed, {imputed} values imputed", rows.len());
        }
        Command::Profile => {
            let v = pipeline.profile()?;
            println!("{} profile vectors", v.len());
        }
        Command::Cluster => {
            let (_, a) = pipeline.cluster()?;
            for c in 1..=a.k as u32 {
                println!("cluster {c}: {}", a.members(c).join(" "));
            }
        }
        Command::Tune(scope) => {
            for setup in setups(&scope.setup)? {
                if setup == SetupKind::SNaive168 {
                    continue;
                }
                for (country, h) in pipeline.tune(setup, targets(&scope.target))? {
                    println!(
                        "{} {country}: layers {} lookback {} lr {:.3e} batch {}",
                        setup.label(),
                        h.layers_label(),
                        h.lookback,
                        h.learning_rate,
                        h.batch_size
                    );
                }
            }
        }
        Command::Experiment(scope) => {
            for (country, setup, mape) in pipeline.experiment(&setups(&scope.setup)?, targets(&scope.target))? {
                println!("{} {country}: test MAPE {mape:.4}", setup.label());
            }
        }
        Command::Report => {
            let r = pipeline.report()?;
            let i = &r.improvements;
            println!(
                "average improvement: AbO {:.4}, CbO {:.4}, sNaive {:.4}, best TL {:.4}",
                i.abo, i.cbo, i.snaive, i.best_transfer
            );
        }
        Command::Run => {
            let r = pipeline.run_all()?;
            println!("best TL improvement {:.4}", r.improvements.best_transfer);
        }
        Command::Synth { .. } | Command::ShowConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
