mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hps_core::harness::{run_scenario, verify, RunSet, Scenario};

#[derive(Debug, Parser)]
#[command(name = "hps", version, about = "Hierarchical push-sum experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write metrics CSVs.
    Run {
        scenario: PathBuf,
        /// Replace the scenario's seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override the synchronization period.
        #[arg(long)]
        gamma: Option<usize>,
        /// Also run the single-network baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Render metrics CSVs to an SVG image.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "curve")]
        kind: PlotKind,
        #[arg(short, long, default_value = "plot.svg")]
        output: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Run the invariant and oracle-equivalence checks.
    Verify {
        /// Number of random instances per check.
        #[arg(long, default_value_t = 20)]
        instances: u64,
        /// Offset added to every instance seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the example scenario files.
    Gen {
        #[arg(long, default_value = "scenarios")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Error against cumulative delay; mean ± std band when available.
    Curve,
    /// 2-d estimate path with the true trajectory on top.
    Trajectory,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            seeds,
            out_dir,
            gamma,
            baseline,
        } => {
            let mut s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if !seeds.is_empty() {
                s.seeds = seeds;
            }
            if gamma.is_some() {
                s.gamma = gamma;
            }
            s.baseline |= baseline;
            let result = run_scenario(&s, Some(&out_dir))?;
            let dir = out_dir.join(&s.name);
            summarize(&result.hierarchical);
            if let Some(b) = &result.baseline {
                summarize(b);
            }
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Plot {
            csv,
            kind,
            output,
            title,
        } => {
            let title = title.unwrap_or_else(|| default_title(&csv[0]));
            match kind {
                PlotKind::Curve => plot::curves(&csv, &output, &title)?,
                PlotKind::Trajectory => {
                    if csv.len() != 1 {
                        bail!("a trajectory plot takes exactly one CSV");
                    }
                    plot::trajectory(&csv[0], &output, &title)?
                }
            }
            println!("wrote {}", output.display());
            Ok(true)
        }
        Command::Verify { instances, seed } => {
            let outcomes = verify::run_all_from(seed, instances)?;
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
        Command::Gen { out_dir } => {
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            for s in Scenario::examples() {
                let path = out_dir.join(format!("{}.toml", s.name));
                std::fs::write(&path, s.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
    }
}

fn summarize(set: &RunSet) {
    let (Some(first), Some(last)) = (set.mean.first(), set.mean.last()) else {
        return;
    };
    let gamma = set.sync_period.map_or("-".to_string(), |g| g.to_string());
    let reach = set
        .mean_delay_to_fraction(0.05)
        .map_or("not reached".to_string(), |d| format!("{d:.1}"));
    println!(
        "{:<12} Γ={gamma:<3} seeds={:<3} error {:.4e} -> {:.4e} over {} rounds, delay to 5%: {reach}",
        set.label,
        set.runs.len(),
        first.mean_error,
        last.mean_error,
        last.round
    );
}

fn default_title(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
