use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dualtree::config::{Method, RunConfig, SweepConfig};
use dualtree::run::{run_synthesis, summary_text, sweep_agents, sweep_agents_parallel, sweep_csv, write_atomic, write_report};
use dualtree::{Error, Result};

/// Decoupled strategy synthesis for many-agent counting specifications.
///
/// Without --config the built-in setup is used: `(! [p1, N/2]) U [p2, N/3]`
/// with N = 4 on the default 1-D grid and three initial conditions. Flags
/// override values from the configuration file. Run with --print-defaults to
/// see every configuration key with its effective value.
///
/// Exit status: 0 success, 2 configuration or input error, 3 solver error,
/// 4 budget exceeded.
#[derive(Debug, Parser)]
#[command(name = "dualtree", version)]
struct Cli {
    /// TOML run configuration
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Specification text, overriding the configured formula
    #[arg(long)]
    formula: Option<String>,
    /// Number of agents N
    #[arg(long)]
    agents: Option<usize>,
    /// Horizon T (number of tree iterations)
    #[arg(long)]
    horizon: Option<usize>,
    /// Pruning threshold for multi-agent vertices
    #[arg(long, value_name = "THETA")]
    prune_product: Option<f64>,
    /// Pruning threshold for single-agent value vectors
    #[arg(long, value_name = "THETA")]
    prune_single: Option<f64>,
    /// Monte-Carlo runs per initial state (0 disables simulation)
    #[arg(long)]
    runs: Option<usize>,
    /// Monte-Carlo seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and summary.txt, or sweep.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated nondecreasing agent counts; switches to sweep mode
    #[arg(long, value_name = "N,N,...", value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    /// dual or flat; a comma-separated list is accepted in sweep mode
    #[arg(long)]
    method: Option<String>,
    /// Run sweep points in parallel (memory columns are left empty)
    #[arg(long)]
    parallel: bool,
    /// Print the effective configuration as TOML and exit
    #[arg(long)]
    print_defaults: bool,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::reference(),
    };
    if let Some(f) = &cli.formula {
        c.formula = f.clone();
        // Expected values belong to the configured formula.
        c.expected = None;
    }
    if let Some(n) = cli.agents {
        c.agents = n;
    }
    if let Some(t) = cli.horizon {
        c.horizon = t;
    }
    if let Some(p) = cli.prune_product {
        c.pruning.product = p;
    }
    if let Some(p) = cli.prune_single {
        c.pruning.single = p;
    }
    if let Some(r) = cli.runs {
        c.oracle.runs = r;
    }
    if let Some(s) = cli.seed {
        c.oracle.seed = s;
    }
    if let Some(o) = &cli.out {
        c.output.dir = Some(o.display().to_string());
    }
    let methods = cli.method.as_deref().map(Method::parse_list).transpose()?;
    let sweeping = cli.sweep.is_some() || (c.sweep.is_some() && cli.agents.is_none());
    if let Some(ns) = &cli.sweep {
        let methods = methods.clone().or_else(|| c.sweep.as_ref().map(|s| s.methods.clone()));
        c.sweep = Some(SweepConfig { agents: ns.clone(), methods: methods.unwrap_or_else(|| vec![Method::Dual]) });
    } else if let (Some(s), Some(m)) = (c.sweep.as_mut(), methods.as_ref()) {
        s.methods = m.clone();
    }
    if !sweeping {
        c.sweep = None;
        if let Some(m) = methods {
            match m.as_slice() {
                [one] => c.method = *one,
                _ => return Err(Error::Config("--method takes a single value outside sweep mode".into())),
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    let config = effective_config(&cli)?;
    if cli.print_defaults {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let out = config.output.dir.as_ref().map(PathBuf::from);
    if let Some(sweep) = &config.sweep {
        let rows = if cli.parallel {
            sweep_agents_parallel(&config, &sweep.agents, &sweep.methods)?
        } else {
            sweep_agents(&config, &sweep.agents, &sweep.methods)?
        };
        let csv = sweep_csv(&rows)?;
        match out {
            Some(dir) => {
                let path = dir.join("sweep.csv");
                write_atomic(&path, csv.as_bytes())?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{csv}"),
        }
        return Ok(());
    }
    let report = run_synthesis(&config)?;
    print!("{}", summary_text(&report));
    if let Some(dir) = out {
        let (r, s) = write_report(&report, &dir)?;
        eprintln!("wrote {} and {}", r.display(), s.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
