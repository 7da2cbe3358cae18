use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dns,
    Vshmm,
    ConstSplit,
    Averaged,
    PdeDns,
    PdeVshmm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dns => "dns",
            Method::Vshmm => "vshmm",
            Method::ConstSplit => "const-split",
            Method::Averaged => "averaged",
            Method::PdeDns => "pde-dns",
            Method::PdeVshmm => "pde-vshmm",
        }
    }

    pub fn is_pde(self) -> bool {
        matches!(self, Method::PdeDns | Method::PdeVshmm)
    }
}

/// Run options. Every field is optional so a TOML file and the command line
/// can be layered; flags win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// exp1, oscillators, diffusion or advection
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Micro step (DNS step for dns, pde-dns and averaged)
    #[arg(long)]
    pub dt: Option<f64>,
    /// Macro sampling interval
    #[arg(long = "DT")]
    #[serde(rename = "DT")]
    pub macro_dt: Option<f64>,
    /// Savings factors, comma separated
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Subperiod divisors, comma separated
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<u32>>,
    /// cosine, polynomial or constant
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Output sampling interval for dns and pde-dns
    #[arg(long)]
    pub sample_every: Option<f64>,
    /// Grid size for the PDE problems
    #[arg(long)]
    pub n: Option<usize>,
    /// Soft-threshold value; with pde-dns, also writes clusters.json
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gap: Option<u64>,
    #[arg(long)]
    pub buffer: Option<u64>,
    /// Snapshot time used for clustering (default: last sample)
    #[arg(long)]
    pub cluster_time: Option<f64>,
    /// clusters.json to use with pde-vshmm
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Output directory (VSHMM_OUT overrides the default)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference trajectory.csv for error metrics
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Columns compared against the reference, comma separated
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
}

macro_rules! layer {
    ($self:ident, $base:ident, $($f:ident),*) => {
        RunArgs { $($f: $self.$f.or($base.$f),)* }
    };
}

impl RunArgs {
    /// Fields of `self` take precedence over `base`.
    pub fn over(self, base: RunArgs) -> RunArgs {
        layer!(
            self, base, problem, method, eps, dt, macro_dt, alpha, m, kernel, q, t_end, sample_every, n, lambda, gap,
            buffer, cluster_time, clusters, out, reference, columns
        )
    }

    pub fn from_toml_file(path: &Path) -> Result<RunArgs> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_run_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn problem(&self) -> Result<&str> {
        match self.problem.as_deref() {
            Some(p) => Ok(p),
            None => bail!("--problem is required"),
        }
    }

    pub fn method(&self) -> Result<Method> {
        self.method.context("--method is required")
    }

    /// Output directory: `--out`, else `$VSHMM_OUT`, else `out/<problem>-<method>`.
    pub fn out_dir(&self) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        if let Ok(env) = std::env::var("VSHMM_OUT") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        let p = self.problem.as_deref().unwrap_or("run");
        let m = self.method.map_or("run", Method::name);
        PathBuf::from("out").join(format!("{p}-{m}"))
    }
}

/// Accepts either top-level keys or a `[run]` section.
pub fn parse_run_toml(text: &str) -> Result<RunArgs> {
    let value: toml::Table = text.parse()?;
    let table = match value.get("run") {
        Some(toml::Value::Table(t)) if value.len() == 1 => t.clone(),
        _ => value,
    };
    Ok(toml::Value::Table(table).try_into::<RunArgs>()?)
}

/// Sweep file: shared defaults plus named runs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub defaults: RunArgs,
    pub runs: Vec<SweepRun>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SweepRun {
    pub name: String,
    #[serde(flatten)]
    pub args: RunArgs,
}

pub fn parse_sweep_toml(text: &str) -> Result<SweepFile> {
    Ok(toml::from_str(text)?)
}
