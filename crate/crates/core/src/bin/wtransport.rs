use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wiener_transport::gaussian::DensityField;
use wiener_transport::harness::{
    exit_code, run, suite, ExperimentConfig, ExperimentKind, Manifest, ARTIFACT_VERSION, EXIT_FAILED, THREADS_ENV,
};
use wiener_transport::{Error, Result};

#[derive(Parser)]
#[command(name = "wtransport", about = "Gaussian optimal transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Override a config field, e.g. `--set params.eps=1.5`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Output root, overriding the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config of a manifest.
    Suite {
        manifest: PathBuf,
        /// Only run configs of this kind.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the accepted presets.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Print the version.
    Version,
}

#[derive(Subcommand)]
enum PresetsAction {
    List,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}=`{raw}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run_one(path: &PathBuf, overrides: &[String], out: Option<PathBuf>) -> Result<bool> {
    let mut config = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?.with_overrides(overrides)?;
    if out.is_some() {
        config.output_dir = out;
    }
    let rec = run(&config)?;
    for c in &rec.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("report: {}", rec.output_dir.join("report.json").display());
    Ok(rec.pass)
}

fn run_suite(path: &PathBuf, kind: Option<String>, out: Option<PathBuf>) -> Result<bool> {
    let kind = kind.as_deref().map(ExperimentKind::parse).transpose()?;
    let manifest = Manifest::from_path(path)?.filtered(kind);
    let root = out.unwrap_or_else(|| {
        std::env::var_os(wiener_transport::harness::OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(wiener_transport::harness::DEFAULT_OUT))
    });
    let summary = suite(&manifest, Some(&root))?;
    print!("{}", summary.table());
    summary.write(&root)?;
    println!("summary: {}", root.join("suite_summary.json").display());
    Ok(summary.ok())
}

fn list_presets() {
    println!("densities (preset field):");
    for (spec, about) in DensityField::PRESETS {
        println!("  {spec:<36} {about}");
    }
    println!("experiment kinds (kind field):");
    for k in ExperimentKind::ALL {
        println!("  {:<36} {}", k.name(), k.citation());
    }
    println!("gauge regions (params.region):");
    println!("  {:<36} half-space (u, x) >= a", "halfspace:u1,..,uk,a");
    println!("  {:<36} outside the ball: |x - c| >= r", "ballc:c1,..,ck,r");
    println!("conditioned potentials (submartingale params.potential):");
    println!("  {:<36} phi = 0", "zero");
    println!("  {:<36} phi = (x, B x) / 2 with B >= -I", "quadratic:b11,..,bdd");
    println!("  {:<36} phi = |x_i|", "abs:i");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, overrides, out } => run_one(&config, &overrides, out),
        Command::Suite { manifest, kind, out } => run_suite(&manifest, kind, out),
        Command::Presets {
            action: PresetsAction::List,
        } => {
            list_presets();
            Ok(true)
        }
        Command::Version => {
            println!("wtransport {ARTIFACT_VERSION}");
            Ok(true)
        }
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
