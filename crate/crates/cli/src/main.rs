use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    #[value(name = "lqr_gd", alias = "lqr-gd")]
    LqrGd,
    Hewer,
    #[value(name = "structured_gd", alias = "structured-gd")]
    StructuredGd,
    #[value(name = "lqg_gd", alias = "lqg-gd")]
    LqgGd,
    #[value(name = "lqg_rgd", alias = "lqg-rgd")]
    LqgRgd,
    #[value(name = "hinf_eval", alias = "hinf-eval")]
    HinfEval,
    #[value(name = "hinf_descent", alias = "hinf-descent")]
    HinfDescent,
    #[value(name = "zo_gd", alias = "zo-gd")]
    ZoGd,
    Landscape,
    Connectivity,
    Dare,
}

/// Policy optimization experiments over stabilizing feedback controllers.
///
/// Exit codes: 0 ok, 2 config error, 3 infeasible start, 4 stalled,
/// 5 internal invariant violation.
#[derive(Debug, Parser)]
#[command(name = "polgeo", version)]
struct Cli {
    task: Task,
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Directory for trace.jsonl, summary.json and grid.csv
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = cli.task.to_possible_value().expect("no skipped variants");
    ExitCode::from(polgeo_cli::execute(task.get_name(), &cli.config, &cli.out, cli.seed))
}
