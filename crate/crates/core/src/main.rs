use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinodal::estimator::ESTIMATE_CSV_HEADER;
use spinodal::interface::extract_zero_level_set;
use spinodal::runner::{estimate_snapshot, execute, parse_config, rate_study_dirs, read_snapshot, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "spinodal", version, about = "Adaptive mixed FEM solver for the Cahn-Hilliard equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; absent keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory or file.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive solver and write a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write legacy VTK files next to the snapshots.
        #[arg(long)]
        vtk: bool,
    },
    /// Evaluate the element estimators of a stored snapshot.
    Estimate {
        snapshot: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the latest level sets of three or more run directories, ordered by decreasing TOL.
    RateStudy {
        #[arg(required = true, num_args = 3..)]
        dirs: Vec<PathBuf>,
    },
    /// Extract the zero level set of a stored snapshot.
    Levelset {
        snapshot: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the configuration after defaults.
    Info {
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Option<PathBuf>) -> spinodal::Result<RunConfig> {
    match path {
        Some(p) => parse_config(&fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

/// Write to the file if given, else stdout.
fn emit(output: &Option<PathBuf>, text: &str) -> spinodal::Result<()> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("SPINODAL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cli: Cli) -> spinodal::Result<()> {
    match cli.command {
        Command::Run { common, vtk } => {
            let cfg = load(&common.config)?;
            let opts = RunOptions {
                output_dir: common.output,
                vtk,
                quiet: common.quiet,
            };
            let outcome = execute(&cfg, &opts)?;
            if !common.quiet {
                let s = &outcome.summary;
                eprintln!(
                    "done: {} blocks, {} snapshots, t = {}, mass drift {:e}, output in {}",
                    s.records.len(),
                    outcome.snapshots,
                    s.final_state.t,
                    s.final_state.mass() - s.initial_mass,
                    outcome.output_dir.display()
                );
            }
        }
        Command::Estimate { snapshot, common } => {
            let cfg = load(&common.config)?;
            let set = estimate_snapshot(&cfg, &snapshot)?;
            let mut buf = Vec::new();
            writeln!(buf, "{ESTIMATE_CSV_HEADER}")?;
            set.write_csv(&mut buf)?;
            emit(&common.output, &String::from_utf8_lossy(&buf))?;
            if !common.quiet {
                eprintln!("E = {} over {} elements", set.global, set.elements.len());
            }
        }
        Command::RateStudy { dirs } => {
            let (samples, study) = rate_study_dirs(&dirs)?;
            println!("run,tol,dofs,t");
            for (d, s) in dirs.iter().zip(&samples) {
                println!("{},{},{},{}", d.display(), s.tol, s.dofs, s.level_set.t);
            }
            for (k, d) in study.distances.iter().enumerate() {
                println!("distance {k}-{}: {d}", k + 1);
            }
            for (k, (r, p)) in study.distance_ratios.iter().zip(&study.dof_predictors).enumerate() {
                println!("ratio {k}: distance {r} dof-predictor {p}");
            }
        }
        Command::Levelset { snapshot, common } => {
            let name = snapshot.display().to_string();
            let state = read_snapshot(&fs::read_to_string(&snapshot)?, &name)?;
            let ls = extract_zero_level_set(&state.u).at_time(state.t);
            emit(&common.output, &ls.to_text())?;
        }
        Command::Info { common } => {
            let cfg = load(&common.config)?;
            emit(&common.output, &cfg.to_text())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    configure_threads();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
