use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wienerbv_cli::config::{CheckSpec, Config, Params, Sizes};
use wienerbv_cli::output::{unix_now, write_artifacts, Metadata};
use wienerbv_cli::suite::run_suite;
use wienerbv_cli::{exit, list_catalog};

#[derive(Parser)]
#[command(name = "wienerbv", version, about = "Monte-Carlo checks of boundary estimates for Brownian motion in domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a config.
    Run {
        #[command(flatten)]
        common: Common,
        /// Validate the config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Print the domain catalog, capacity sets and check names.
    List,
    /// Calibrate C1 from exit-time CDFs and store it in c1.json.
    #[command(name = "calibrate-c1")]
    CalibrateC1 {
        #[command(flatten)]
        common: Common,
        /// Domains (ignored with --config).
        #[arg(long = "domain", default_values_t = ["ball:d=1".to_string(), "ball:d=2".to_string(), "ball:d=3".to_string()])]
        domains: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        r: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1, 0.2])]
        depths: Vec<f64>,
        #[arg(long)]
        n_paths: Option<usize>,
        #[arg(long)]
        n_steps: Option<usize>,
    },
}

fn load(common: &Common) -> Result<Config, ExitCode> {
    let path = common.config.as_deref().ok_or_else(|| {
        eprintln!("error: --config is required");
        ExitCode::from(exit::CONFIG as u8)
    })?;
    Config::from_path(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(exit::CONFIG as u8)
    })
}

fn execute(mut cfg: Config, common: &Common, default_out: &Path) -> ExitCode {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let workers = common.workers.or(cfg.workers);
    let out = common.out.clone().or(cfg.out.clone()).unwrap_or_else(|| default_out.to_path_buf());
    let started = unix_now();
    let result = run_suite(&cfg, workers, |c, t| println!("{} ({:.1} s)", c.line(), t.as_secs_f64()));
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.config { exit::CONFIG } else { exit::INTERNAL };
            return ExitCode::from(code as u8);
        }
    };
    let finished = unix_now();
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        config: common.config.clone(),
        seed: cfg.seed,
        workers,
        parallel: wienerbv::exec::Exec::parallel_available(),
        started_unix: started,
        finished_unix: finished,
        elapsed_seconds: finished - started,
    };
    if let Err(e) = write_artifacts(&out, &result, &meta) {
        eprintln!("error: writing artifacts to {}: {e:#}", out.display());
        return ExitCode::from(exit::INTERNAL as u8);
    }
    if let Some(cal) = &result.calibration {
        println!("C1 = {} (C2 = {})", cal.c1, cal.c2);
    }
    let failed = result.checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {} failed; artifacts in {}", result.checks.len(), failed, out.display());
    ExitCode::from(if failed == 0 { exit::OK } else { exit::CHECK_FAILED } as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", list_catalog());
            ExitCode::SUCCESS
        }
        Command::Run { common, dry_run } => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if dry_run {
                println!("{} checks validated", cfg.checks.len());
                return ExitCode::SUCCESS;
            }
            execute(cfg, &common, Path::new("wienerbv-results"))
        }
        Command::CalibrateC1 { common, domains, r, depths, n_paths, n_steps } => {
            let cfg = if common.config.is_some() {
                let mut cfg = match load(&common) {
                    Ok(c) => c,
                    Err(code) => return code,
                };
                cfg.checks.retain(|c| matches!(c.params, Params::CalibrateC1(_)));
                if cfg.checks.is_empty() {
                    eprintln!("error: the config has no calibrate-c1 check");
                    return ExitCode::from(exit::CONFIG as u8);
                }
                cfg
            } else {
                let Some(seed) = common.seed else {
                    eprintln!("error: --seed is required without --config");
                    return ExitCode::from(exit::CONFIG as u8);
                };
                let array = |v: toml::Value| v.to_string();
                let src = format!(
                    "seed = {seed}\n[[checks]]\ncheck = \"calibrate-c1\"\nlabel = \"c1\"\ndomains = {}\nr = {r:?}\ndepths = {}\n",
                    array(toml::Value::from(domains)),
                    array(toml::Value::from(depths)),
                );
                let mut cfg = match Config::parse(&src) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(exit::CONFIG as u8);
                    }
                };
                let spec: &mut CheckSpec = &mut cfg.checks[0];
                spec.sizes = Sizes { n_paths, n_steps, ..Sizes::default() };
                cfg
            };
            execute(cfg, &common, Path::new("wienerbv-c1"))
        }
    }
}
