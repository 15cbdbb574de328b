use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use autoscope::campaign::{self, CampaignKind, CampaignSpec, RunRecord, RunStatus};
use autoscope::sample::PhantomStyle;
use autoscope::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "autoscope", version, about = "Virtual scanning-probe microscope and autonomous-experiment engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress the summary printed on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct Common {
    /// Override the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the spec's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a sample and write it as <out>/sample.{json,raw,pgm}.
    Generate {
        /// Take the sample section of this campaign spec.
        spec: Option<PathBuf>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long, value_enum)]
        style: Option<Style>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a campaign spec of any kind.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the grid/random/adaptive comparison for a spec.
    Bench {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a tabular agent (spec kind rl_tip or rl_write).
    RlTrain {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write CSV summaries and figures for a finished run directory.
    Report { run_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Stripes,
    Bubbles,
    Mixed,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command, cli.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command, quiet: bool) -> Result<(), Failure> {
    match cmd {
        Command::Generate {
            spec,
            width,
            height,
            style,
            common,
        } => {
            let mut s = match spec {
                Some(p) => CampaignSpec::load(&p)?,
                None => CampaignSpec::new(CampaignKind::BoExplore),
            };
            if let Some(w) = width {
                s.sample.width = w;
            }
            if let Some(h) = height {
                s.sample.height = h;
            }
            if let Some(st) = style {
                s.sample.phantom.style = match st {
                    Style::Stripes => PhantomStyle::Stripes,
                    Style::Bubbles => PhantomStyle::Bubbles,
                    Style::Mixed => PhantomStyle::Mixed,
                };
            }
            let seed = common.seed.unwrap_or(s.seed);
            let sample = s.sample.build(seed)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("."));
            let paths = sample.write(&dir, "sample")?;
            if !quiet {
                for p in paths {
                    println!("{}", p.display());
                }
            }
            Ok(())
        }
        Command::Run { spec, common } => run(&spec, common, None, quiet),
        Command::Bench { spec, common } => run(
            &spec,
            common,
            Some(&[CampaignKind::BoExplore, CampaignKind::BoSpectro, CampaignKind::BenchRecon]),
            quiet,
        ),
        Command::RlTrain { spec, common } => {
            run(&spec, common, Some(&[CampaignKind::RlTip, CampaignKind::RlWrite]), quiet)
        }
        Command::Report { run_dir } => {
            let paths = campaign::report(&run_dir)?;
            if !quiet {
                for p in paths {
                    println!("{}", p.display());
                }
            }
            Ok(())
        }
    }
}

fn kind_name(k: CampaignKind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn run(path: &Path, common: Common, allowed: Option<&[CampaignKind]>, quiet: bool) -> Result<(), Failure> {
    let mut spec = CampaignSpec::load(path)?;
    if let Some(kinds) = allowed {
        if !kinds.contains(&spec.kind) {
            let names: Vec<String> = kinds.iter().map(|&k| kind_name(k)).collect();
            return Err(Failure::Validation(format!(
                "{}: kind {} is not accepted here (expected {})",
                path.display(),
                kind_name(spec.kind),
                names.join(" or ")
            )));
        }
    }
    // bench accepts any adaptive-sampling spec and compares arms on it
    if allowed.is_some_and(|k| k.contains(&CampaignKind::BenchRecon)) {
        spec.kind = CampaignKind::BenchRecon;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let dir = common
        .out
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", kind_name(spec.kind), spec.seed)));

    let started = Instant::now();
    let record = campaign::run_campaign(&spec)?;
    let wall = started.elapsed().as_secs_f64();
    let manifest = campaign::write_outputs(&record, &dir)?;
    // Wall time depends on the machine, so it stays out of the manifest.
    let advisory = serde_json::json!({ "wall_time_s": wall, "threads": available_threads() });
    let text = serde_json::to_string_pretty(&advisory).expect("advisory serializes") + "\n";
    std::fs::write(dir.join("advisory.json"), text)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.join("advisory.json").display())))?;

    if !quiet {
        print_summary(&record, &dir, manifest.files.len(), wall);
    }
    match &record.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Failed { message } => Err(Failure::Runtime(format!(
            "run failed, partial logs in {}: {message}",
            dir.display()
        ))),
    }
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn print_summary(rec: &RunRecord, dir: &Path, n_files: usize, wall: f64) {
    println!("{:<24}{}", "kind", kind_name(rec.spec.kind));
    println!("{:<24}{}", "seed", rec.spec.seed);
    println!("{:<24}{} ({n_files} files)", "output", dir.display());
    println!("{:<24}{}", "observations", rec.observations.len());
    for (k, v) in &rec.summary {
        println!("{k:<24}{v}");
    }
    println!("{:<24}{wall:.2} s", "wall time");
}
