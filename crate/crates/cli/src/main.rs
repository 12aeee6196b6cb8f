//! Command-line front end: run scenarios, export LP models, validate grid
//! dumps, and solve tiny models exhaustively.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use frmcs_sim::engine::{self, Scenario, OUT_DIR_ENV};
use frmcs_sim::grid::ResourceGrid;
use frmcs_sim::ilp::oracle::{solution_from_jsonl, solution_to_jsonl, solve_exhaustive};
use frmcs_sim::ilp::{lp::parse_lp, IlpModel};
use frmcs_sim::validate::validate_grid;
use frmcs_sim::SimError;

#[derive(Parser)]
#[command(
    name = "frmcs-sim",
    version,
    about = "FRMCS / GSM-R spectrum-coexistence scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Preempt,
    NoPreempt,
}

impl Variant {
    fn preemption(self) -> bool {
        matches!(self, Variant::Preempt)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its metrics CSV.
    Run {
        scenario: PathBuf,
        /// Output directory (default: $FRMCS_SIM_OUT, then ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inclusive seed range "a..b"; default is the scenario seed.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Export the optimization model of each sweep point as an LP file.
    ExportIlp {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "preempt")]
        variant: Variant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a grid dump (CSV) against the allocation constraints.
    Validate { dump: PathBuf },
    /// Solve a model exhaustively: takes an .lp file or a scenario file.
    Oracle {
        input: PathBuf,
        /// Refuse models with more binaries than this.
        #[arg(long, default_value_t = 24)]
        limit: usize,
        /// Model variant when building from a scenario file.
        #[arg(long, value_enum, default_value = "preempt")]
        variant: Variant,
        /// Check a JSON-lines solution instead of solving.
        #[arg(long)]
        check: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_seed_range(text: &str) -> Result<Vec<u64>, SimError> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| SimError::Config(format!("--seeds expects \"a..b\", got {text:?}")))?;
    let lo: u64 = a
        .trim()
        .parse()
        .map_err(|_| SimError::Config(format!("--seeds: bad start {a:?}")))?;
    let hi: u64 = b
        .trim()
        .parse()
        .map_err(|_| SimError::Config(format!("--seeds: bad end {b:?}")))?;
    if hi < lo {
        return Err(SimError::Config(format!("--seeds: empty range {text:?}")));
    }
    Ok((lo..=hi).collect())
}

fn load_models(path: &Path, variant: Variant) -> Result<Vec<IlpModel>, SimError> {
    if path.extension().is_some_and(|e| e == "lp") {
        let text = std::fs::read_to_string(path)?;
        return Ok(vec![parse_lp(&text)?]);
    }
    let sc = Scenario::load(path)?;
    engine::export_scenario_ilp(&sc, variant.preemption())?
        .into_iter()
        .map(|(_, lp)| parse_lp(&lp))
        .collect()
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { scenario, out, seeds } => {
            let sc = Scenario::load(&scenario)?;
            let seeds = match seeds {
                Some(text) => parse_seed_range(&text)?,
                None => vec![sc.traffic.arrivals.seed],
            };
            let mut rows = Vec::new();
            for seed in seeds {
                rows.extend(engine::run_scenario_seeded(&sc, seed)?);
            }
            let dir = out_dir(out);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}_metrics.csv", sc.id));
            std::fs::write(&path, engine::metrics_csv(&rows))?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::ExportIlp { scenario, variant, out } => {
            let sc = Scenario::load(&scenario)?;
            let files = engine::export_scenario_ilp(&sc, variant.preemption())?;
            let dir = out_dir(out);
            std::fs::create_dir_all(&dir)?;
            for (name, text) in files {
                let path = dir.join(name);
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Validate { dump } => {
            let text = std::fs::read_to_string(&dump)?;
            let grid = ResourceGrid::parse_csv(&text, 1.0)?;
            validate_grid(&grid).map_err(SimError::Validation)?;
            let cfg = grid.config();
            println!(
                "ok: {} PRBs x {} slots x {} mini-slots satisfy the allocation constraints",
                cfg.prbs, cfg.slots, cfg.mini_slots
            );
        }
        Command::Oracle { input, limit, variant, check } => {
            let models = load_models(&input, variant)?;
            for model in models {
                match &check {
                    Some(solution_path) => {
                        let text = std::fs::read_to_string(solution_path)?;
                        let assignment = solution_from_jsonl(&model, &text)?;
                        let violated = model.violated_rows(&assignment);
                        println!("objective {}", model.objective_value(&assignment));
                        if !violated.is_empty() {
                            for name in &violated {
                                eprintln!("violated: {name}");
                            }
                            return Err(SimError::Config(format!(
                                "solution violates {} rows",
                                violated.len()
                            )));
                        }
                        println!("feasible");
                    }
                    None => {
                        let solution = solve_exhaustive(&model, limit)?;
                        if !solution.feasible {
                            println!("infeasible");
                            continue;
                        }
                        println!("objective {}", solution.objective);
                        print!("{}", solution_to_jsonl(&model, &solution.assignment));
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
