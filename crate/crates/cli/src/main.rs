//! `linkerr` command-line frontend.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Format, RunConfig, SampleSize};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "linkerr",
    version,
    about = "Estimate record-linkage error rates from neighbour counts"
)]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed from which every stage seed is derived.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Primary output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Neighbour-count table with `n,freq` columns.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long = "file-a")]
    file_a: Option<PathBuf>,
    #[arg(long = "file-b")]
    file_b: Option<PathBuf>,
    #[arg(long)]
    truth_column: Option<String>,
    /// Population size N.
    #[arg(long)]
    population: Option<u64>,
    /// `all`, `auto` (factor * ceil(N^(2/5))) or a record count.
    #[arg(long)]
    sample_size: Option<SampleSize>,
    #[arg(long)]
    sample_factor: Option<f64>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// `scenario1` or `scenario2`.
    #[arg(long)]
    preset: Option<String>,
    /// Population size of each register.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate two synthetic registers with truth ids.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Directory receiving `a.csv` and `b.csv`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Count the neighbours of every first-file record.
    Count {
        #[command(flatten)]
        input: InputArgs,
        /// Write the matched/unmatched split.
        #[arg(long)]
        split: bool,
    },
    /// Draw a simple random sample of records from a counts table.
    Sample {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Fit the mixture model and report linkage parameters.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Number of components.
        #[arg(long)]
        g: Option<usize>,
    },
    /// Fit the conditional-independence baseline.
    FitCi {
        #[command(flatten)]
        input: InputArgs,
        /// Pattern-frequency table used instead of record files.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Bootstrap standard errors and confidence intervals.
    Bootstrap {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        g: Option<usize>,
        /// Number of replicates.
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Write per-replicate estimates here.
        #[arg(long)]
        replicates: Option<PathBuf>,
    },
    /// Parametric-bootstrap likelihood ratio tests for the number of components.
    Lrt {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        gmax: Option<usize>,
        /// Null component counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        g_list: Option<Vec<usize>>,
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Repeated simulate, sample and fit runs scored against the true values.
    Study {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        g_list: Option<Vec<usize>>,
        /// Skip the conditional-independence baseline.
        #[arg(long)]
        no_ci: bool,
        /// Write QQ-plot data here.
        #[arg(long)]
        qq: Option<PathBuf>,
    },
    /// Render a saved report document.
    Report {
        /// Report written with `--format doc`.
        input: PathBuf,
    },
}

fn apply_input(cfg: &mut RunConfig, args: InputArgs) {
    let i = &mut cfg.input;
    if args.counts.is_some() {
        i.counts = args.counts;
    }
    if args.file_a.is_some() {
        i.file_a = args.file_a;
    }
    if args.file_b.is_some() {
        i.file_b = args.file_b;
    }
    if let Some(t) = args.truth_column {
        i.truth_column = t;
    }
    if args.population.is_some() {
        i.population = args.population;
    }
    if let Some(s) = args.sample_size {
        i.sample_size = s;
    }
    if let Some(f) = args.sample_factor {
        i.sample_factor = f;
    }
}

fn apply_scenario(s: &mut config::ScenarioConfig, args: ScenarioArgs) {
    if args.preset.is_some() {
        s.preset = args.preset;
    }
    if args.n.is_some() {
        s.n = args.n;
    }
}

enum Action {
    Simulate,
    Count,
    Sample,
    Fit,
    FitCi,
    Bootstrap,
    Lrt,
    Study,
    Report(PathBuf),
}

fn resolve(cli: Cli) -> Result<(RunConfig, Action), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    } else if matches!(cli.command, Command::Report { .. }) {
        cfg.format = Format::Table;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    let command = match cli.command {
        Command::Simulate { scenario, dir } => {
            apply_scenario(&mut cfg.simulate.scenario, scenario);
            if dir.is_some() {
                cfg.simulate.dir = dir;
            }
            Action::Simulate
        }
        Command::Count { input, split } => {
            apply_input(&mut cfg, input);
            cfg.count.split |= split;
            Action::Count
        }
        Command::Sample { input } => {
            apply_input(&mut cfg, input);
            Action::Sample
        }
        Command::Fit { input, g } => {
            apply_input(&mut cfg, input);
            if let Some(g) = g {
                cfg.fit.g = g;
            }
            Action::Fit
        }
        Command::FitCi { input, table } => {
            apply_input(&mut cfg, input);
            if table.is_some() {
                cfg.fit_ci.table = table;
            }
            Action::FitCi
        }
        Command::Bootstrap {
            input,
            g,
            b,
            alpha,
            replicates,
        } => {
            apply_input(&mut cfg, input);
            if let Some(g) = g {
                cfg.fit.g = g;
            }
            if let Some(b) = b {
                cfg.bootstrap.b = b;
            }
            if let Some(a) = alpha {
                cfg.bootstrap.alpha = a;
            }
            if replicates.is_some() {
                cfg.bootstrap.replicates = replicates;
            }
            Action::Bootstrap
        }
        Command::Lrt {
            input,
            gmax,
            g_list,
            b,
            alpha,
        } => {
            apply_input(&mut cfg, input);
            if let Some(g) = gmax {
                cfg.lrt.gmax = g;
            }
            if let Some(l) = g_list {
                cfg.lrt.g_list = l;
            }
            if let Some(b) = b {
                cfg.lrt.b = b;
            }
            if let Some(a) = alpha {
                cfg.lrt.alpha = a;
            }
            Action::Lrt
        }
        Command::Study {
            scenario,
            reps,
            g_list,
            no_ci,
            qq,
        } => {
            apply_scenario(&mut cfg.study.scenario, scenario);
            if let Some(r) = reps {
                cfg.study.reps = r;
            }
            if let Some(l) = g_list {
                cfg.study.g_list = l;
            }
            if no_ci {
                cfg.study.include_ci = false;
            }
            if qq.is_some() {
                cfg.study.qq = qq;
            }
            Action::Study
        }
        Command::Report { input } => Action::Report(input),
    };
    Ok((cfg, command))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, action) = resolve(cli)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    match action {
        Action::Simulate => commands::simulate(cfg),
        Action::Count => commands::count(cfg),
        Action::Sample => commands::sample(cfg),
        Action::Fit => commands::fit(cfg),
        Action::FitCi => commands::fit_ci(cfg),
        Action::Bootstrap => commands::bootstrap(cfg),
        Action::Lrt => commands::lrt(cfg),
        Action::Study => commands::study(cfg),
        Action::Report(input) => commands::report(cfg, &input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
