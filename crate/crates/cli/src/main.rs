//! `vshmm` experiment runner.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{parse_sweep_toml, RunArgs};
use vshmm::io::{compare_tables, cost_ratio, write_points_csv, TrajectoryTable};
use vshmm::vshmm::{covering_radius, torus_sampling_diagnostic, wrapped_line_deviation};
use vshmm::StepKernel;

#[derive(Parser)]
#[command(name = "vshmm", version, about = "Variable-step multiscale integration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem with one method and write its artifacts
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// TOML file with the same keys; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Error and cost metrics of one trajectory against another
    Compare {
        run: PathBuf,
        reference: PathBuf,
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
    },
    /// Independent runs from a TOML file, in parallel
    Sweep {
        config: PathBuf,
        /// Parent directory; each run writes to `<out>/<name>`
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Torus sampling points for constant and kernel-modulated steps
    Torus {
        #[arg(long, default_value_t = 1.01f64.sqrt())]
        beta: f64,
        #[arg(long, default_value_t = 60)]
        count: usize,
        #[arg(long, default_value = "cosine")]
        kernel: String,
        #[arg(long)]
        q: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_error(e: &anyhow::Error) {
    let rec = run::error_record(e);
    eprintln!("{}", serde_json::to_string(&json!({ "error": rec })).unwrap_or_else(|_| format!("{e:#}")));
}

fn exit_code(e: &anyhow::Error) -> ExitCode {
    match e.downcast_ref::<vshmm::Error>() {
        Some(vshmm::Error::Config(_)) | Some(vshmm::Error::Domain(_)) | None => ExitCode::from(2),
        Some(_) => ExitCode::from(3),
    }
}

fn cmd_run(args: RunArgs, config: Option<PathBuf>) -> Result<()> {
    let args = match config {
        Some(path) => args.over(RunArgs::from_toml_file(&path)?),
        None => args,
    };
    let out = run::execute(&args)?;
    log::info!("artifacts in {}", out.dir.display());
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(())
}

fn cmd_compare(run_path: PathBuf, ref_path: PathBuf, columns: Option<Vec<String>>) -> Result<()> {
    let a = TrajectoryTable::load(&run_path).with_context(|| format!("reading {}", run_path.display()))?;
    let b = TrajectoryTable::load(&ref_path).with_context(|| format!("reading {}", ref_path.display()))?;
    let mut m = compare_tables(&a, &b, columns.as_deref())?;
    if run_path == ref_path {
        m.cost_ratio = Some(1.0);
    } else if let (Some(sa), Some(sb)) = (run::sibling_summary(&run_path), run::sibling_summary(&ref_path)) {
        m.cost_ratio = cost_ratio(&sa, &sb);
    }
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn cmd_sweep(path: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let sweep = parse_sweep_toml(&text)?;
    let parent = out.unwrap_or_else(|| PathBuf::from("out").join("sweep"));
    let mut names = std::collections::HashSet::new();
    for r in &sweep.runs {
        if !names.insert(r.name.as_str()) {
            bail!("duplicate run name `{}`", r.name);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    let results: Vec<(String, Result<()>)> = pool.install(|| {
        sweep
            .runs
            .par_iter()
            .map(|r| {
                let mut args = r.args.clone().over(sweep.defaults.clone());
                args.out = Some(parent.join(&r.name));
                (r.name.clone(), run::execute(&args).map(|_| ()))
            })
            .collect()
    });
    let mut failed = 0;
    for (name, res) in &results {
        match res {
            Ok(()) => println!("{name}: ok"),
            Err(e) => {
                failed += 1;
                println!("{name}: error: {e:#}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} runs failed", results.len());
    }
    Ok(())
}

fn cmd_torus(beta: f64, count: usize, kernel: String, q: Option<u32>, out: Option<PathBuf>) -> Result<()> {
    let dir = out
        .or_else(|| std::env::var("VSHMM_OUT").ok().filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join("torus"));
    std::fs::create_dir_all(&dir)?;
    let kernel = StepKernel::from_name(&kernel, q)?;
    let constant = torus_sampling_diagnostic(beta, count, &kernel, false)?;
    let variable = torus_sampling_diagnostic(beta, count, &kernel, true)?;
    write_points_csv(&constant, std::fs::File::create(dir.join("torus_constant.csv"))?)?;
    write_points_csv(&variable, std::fs::File::create(dir.join("torus_variable.csv"))?)?;
    let summary = json!({
        "beta": beta,
        "count": count,
        "kernel": kernel.name(),
        "covering_radius": { "constant": covering_radius(&constant, 200), "variable": covering_radius(&variable, 200) },
        "line_deviation": { "constant": wrapped_line_deviation(&constant), "variable": wrapped_line_deviation(&variable) },
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { args, config } => cmd_run(args, config),
        Command::Compare { run, reference, columns } => cmd_compare(run, reference, columns),
        Command::Sweep { config, out, threads } => cmd_sweep(config, out, threads),
        Command::Torus { beta, count, kernel, q, out } => cmd_torus(beta, count, kernel, q, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            print_error(&e);
            exit_code(&e)
        }
    }
}
