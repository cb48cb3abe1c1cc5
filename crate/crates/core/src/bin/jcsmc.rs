use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jcsmc::binary::solve_binary_model;
use jcsmc::config::load_config;
use jcsmc::experiment::{
    beampattern_for, feasibility_study, parse_grid, run_sweep, summarize, write_beampattern_csv,
    write_feasibility_csv, write_summary_csv, write_sweep_csv, Scheme, SweepParameter, SweepSpec,
};
use jcsmc::partial::{propose_decoding_order, solve_partial_pinned, RatePins};
use jcsmc::scenario::linear_to_db;
use jcsmc::validation::identity_suite;
use jcsmc::{sample_channels, Error, MultipleAccess, ScenarioConfig, SystemModel};

#[derive(Parser)]
#[command(name = "jcsmc", version, about = "NOMA-aided joint communication, sensing and multi-tier computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML scenario file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Single {
    #[command(flatten)]
    common: Common,
    /// Channel draw index.
    #[arg(long, default_value_t = 0)]
    draw: u64,
    /// Use SDMA instead of NOMA.
    #[arg(long)]
    sdma: bool,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Comma-separated schemes or `all`.
    #[arg(long, default_value = "all")]
    scheme: String,
    /// Inclusive `start:step:stop`.
    #[arg(long)]
    grid: Option<String>,
    /// Also write means over common-feasible draws to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Add a wall-time column (makes the output run-dependent).
    #[arg(long)]
    timing: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Partial offloading on one channel draw; prints the solution as JSON.
    Partial(Single),
    /// Binary offloading on one channel draw; prints the solution as JSON.
    Binary(Single),
    /// Rate versus minimum sensing SINR (dB).
    SweepSinr(Sweep),
    /// Rate versus BS power budget (dBm).
    SweepPower(Sweep),
    /// Rate versus number of users.
    SweepUsers(Sweep),
    /// Probability that the target-aimed start meets the sensing requirement.
    Feasibility {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Sensing SINR grid in dB, `start:step:stop`.
        #[arg(long, default_value = "20:1:40")]
        grid: String,
        /// Comma-separated user counts (default: the configured count).
        #[arg(long)]
        users: Option<String>,
    },
    /// Transmit-receive beampattern of a solved partial-offloading instance.
    Beampattern(Single),
    /// Runs the closed-form identity checks.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleSensing { .. } | Error::DegenerateSensing => 2,
        Error::ConvergenceFailure { .. } | Error::NumericalFailure(_) => 3,
        Error::InvalidConfig(_) | Error::InvalidArgument(_) => 4,
        _ => 1,
    }
}

fn load(common: &Common) -> jcsmc::Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", path.display())),
            e => e,
        })?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output(path: &Option<PathBuf>) -> jcsmc::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json<T: serde::Serialize>(value: &T, out: &Option<PathBuf>) -> jcsmc::Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn single_model<'a>(
    cfg: &'a ScenarioConfig,
    ch: &'a jcsmc::ChannelRealization,
    sdma: bool,
) -> jcsmc::Result<SystemModel<'a>> {
    let access = if sdma { MultipleAccess::Sdma } else { MultipleAccess::Noma };
    SystemModel::new(cfg, ch, access, propose_decoding_order(cfg))
}

fn sweep(args: &Sweep, parameter: SweepParameter, default_grid: &str) -> jcsmc::Result<()> {
    let base = load(&args.common)?;
    let spec = SweepSpec {
        parameter,
        grid: parse_grid(args.grid.as_deref().unwrap_or(default_grid))?,
        trials: args.trials,
        schemes: Scheme::parse_list(&args.scheme)?,
        seed: base.seed,
        base,
        workers: args.workers,
    };
    let rows = run_sweep(&spec)?;
    let mut w = output(&args.common.out)?;
    write_sweep_csv(&mut w, parameter, &rows, args.timing)?;
    w.flush()?;
    if let Some(path) = &args.summary {
        let summary = summarize(&rows, &spec.schemes);
        write_summary_csv(BufWriter::new(File::create(path)?), parameter, &summary)?;
    }
    Ok(())
}

fn run(cli: Cli) -> jcsmc::Result<()> {
    match cli.command {
        Command::Partial(a) => {
            let cfg = load(&a.common)?;
            let ch = sample_channels(&cfg, a.draw)?;
            let model = single_model(&cfg, &ch, a.sdma)?;
            let sol = solve_partial_pinned(&model, &RatePins::none(cfg.n_users))?;
            json(&sol, &a.common.out)
        }
        Command::Binary(a) => {
            let cfg = load(&a.common)?;
            let ch = sample_channels(&cfg, a.draw)?;
            let model = single_model(&cfg, &ch, a.sdma)?;
            let sol = solve_binary_model(&model)?;
            json(&sol, &a.common.out)
        }
        Command::SweepSinr(a) => sweep(&a, SweepParameter::SensingSinrDb, "10:10:40"),
        Command::SweepPower(a) => sweep(&a, SweepParameter::PowerBudgetDbm, "20:5:40"),
        Command::SweepUsers(a) => sweep(&a, SweepParameter::Users, "2:1:5"),
        Command::Feasibility { common, trials, grid, users } => {
            let cfg = load(&common)?;
            let users: Vec<usize> = match users {
                Some(s) => s
                    .split(',')
                    .map(|u| u.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad user count {u:?}"))))
                    .collect::<jcsmc::Result<_>>()?,
                None => vec![cfg.n_users],
            };
            let rows = feasibility_study(&cfg, &parse_grid(&grid)?, &users, trials)?;
            let mut w = output(&common.out)?;
            write_feasibility_csv(&mut w, &rows)?;
            w.flush()?;
            Ok(())
        }
        Command::Beampattern(a) => {
            let cfg = load(&a.common)?;
            let ch = sample_channels(&cfg, a.draw)?;
            let model = single_model(&cfg, &ch, a.sdma)?;
            let sol = solve_partial_pinned(&model, &RatePins::none(cfg.n_users))?;
            let pattern = beampattern_for(&model, &sol.p)?;
            let mut w = output(&a.common.out)?;
            write_beampattern_csv(&mut w, &pattern)?;
            w.flush()?;
            Ok(())
        }
        Command::Validate { common, trials } => {
            let cfg = load(&common)?;
            let checks = identity_suite(&cfg, trials, cfg.seed)?;
            let mut w = output(&common.out)?;
            let mut failed = 0;
            for c in &checks {
                let tag = if c.passed() { "PASS" } else { "FAIL" };
                writeln!(w, "{tag}  {:<48} worst {:.3e} (tol {:.0e})", c.name, c.worst, c.tolerance)?;
                failed += usize::from(!c.passed());
            }
            writeln!(w, "sensing SINR requirement {:.1} dB, {} instances", linear_to_db(cfg.sensing_sinr_min), trials)?;
            w.flush()?;
            if failed > 0 {
                return Err(Error::NumericalFailure(format!("{failed} identity checks failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors here; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
