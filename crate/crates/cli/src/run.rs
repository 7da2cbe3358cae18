use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde_json::json;

use vshmm::averaging::averaged_integrate_sampled;
use vshmm::io::{
    compare_tables, cost_ratio, write_clusters_json, write_coefficients_csv, write_field_csv, write_schedule_csv,
    CompareMetrics, ErrorRecord, RunSummary, TrajectoryTable,
};
use vshmm::problems::{ode_problem, pde_problem, slow_observables, BenchmarkProblem, PdeProblem};
use vshmm::spectral::{
    cluster_modes, grid_points, pde_dns_integrate, pde_vshmm_integrate, soft_threshold, SpectralState,
};
use vshmm::{dns_integrate, build_schedule, BaseStepper, StepKernel, Trajectory, VshmmConfig};

use crate::config::{Method, RunArgs};

/// Coefficients at or below this magnitude are left out of coefficient dumps.
const COEFF_FLOOR: f64 = 1e-14;
const DEFAULT_GAP: u64 = 3;

/// What a successful run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

struct Produced {
    table: TrajectoryTable,
    traj: Trajectory,
    params: serde_json::Value,
}

/// Runs one configuration and writes its artifacts. `summary.json` is written
/// whatever happens; on failure its `error` field holds the record.
pub fn execute(args: &RunArgs) -> Result<RunOutput> {
    let dir = args.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let outcome = produce(args, &dir);
    let wall = start.elapsed().as_secs_f64();
    let mut summary = RunSummary {
        status: "ok".into(),
        problem: args.problem.clone().unwrap_or_default(),
        method: args.method.map_or("", Method::name).to_string(),
        parameters: serde_json::to_value(args).unwrap_or_default(),
        rhs_evals: vec![],
        total_rhs_evals: 0,
        wall_time_s: wall,
        samples: 0,
        metrics: None,
        error: None,
    };
    let result = outcome.and_then(|p| {
        summary.parameters = p.params.clone();
        summary.rhs_evals = p.traj.rhs_evals.clone();
        summary.total_rhs_evals = p.traj.total_rhs_evals();
        summary.samples = p.traj.len();
        p.table.save(&dir.join("trajectory.csv"))?;
        if let Some(reference) = &args.reference {
            summary.metrics = Some(reference_metrics(&p.table, &summary, reference, args.columns.as_deref())?);
        }
        Ok(())
    });
    if let Err(e) = &result {
        summary.status = "error".into();
        summary.error = Some(error_record(e));
    }
    summary.save(&dir.join("summary.json"))?;
    result.map(|_| RunOutput { dir, summary })
}

pub fn error_record(e: &anyhow::Error) -> ErrorRecord {
    match e.downcast_ref::<vshmm::Error>() {
        Some(inner) => ErrorRecord::from(inner),
        None => ErrorRecord {
            kind: "config".into(),
            message: format!("{e:#}"),
            t: None,
            level: None,
            cycle: None,
        },
    }
}

fn reference_metrics(table: &TrajectoryTable, summary: &RunSummary, reference: &Path, columns: Option<&[String]>) -> Result<CompareMetrics> {
    let ref_table = TrajectoryTable::load(reference).with_context(|| format!("reading {}", reference.display()))?;
    let mut m = compare_tables(table, &ref_table, columns)?;
    m.cost_ratio = sibling_summary(reference).and_then(|r| cost_ratio(summary, &r));
    Ok(m)
}

/// `summary.json` next to a trajectory file, if there is one.
pub fn sibling_summary(trajectory: &Path) -> Option<RunSummary> {
    let p = trajectory.parent()?.join("summary.json");
    RunSummary::load(&p).ok()
}

fn produce(args: &RunArgs, dir: &Path) -> Result<Produced> {
    let method = args.method()?;
    let problem = args.problem()?;
    if method.is_pde() {
        let n = args.n.unwrap_or(match problem {
            "diffusion" => 2048,
            _ => 1024,
        });
        let p = pde_problem(problem, n)?;
        produce_pde(args, method, &p, dir)
    } else {
        if args.n.is_some() || args.lambda.is_some() || args.clusters.is_some() {
            bail!("--n, --lambda and --clusters only apply to pde-dns and pde-vshmm");
        }
        let eps = args.eps.unwrap_or(1e-2);
        let p = ode_problem(problem, eps)?;
        produce_ode(args, method, &p, dir)
    }
}

fn vshmm_config(args: &RunArgs, recommended: &VshmmConfig) -> Result<VshmmConfig> {
    let mut cfg = recommended.clone();
    if let Some(dt) = args.dt {
        cfg.micro_step = dt;
    }
    if let Some(d) = args.macro_dt {
        cfg.macro_step = d;
    }
    if let Some(a) = &args.alpha {
        cfg.savings = a.clone();
        if args.m.is_none() {
            cfg.subperiods = None;
        }
    }
    if let Some(m) = &args.m {
        cfg.subperiods = Some(m.clone());
    }
    if let Some(k) = &args.kernel {
        cfg.kernel = StepKernel::from_name(k, args.q)?;
    } else if let Some(q) = args.q {
        cfg.kernel = StepKernel::polynomial(q);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_json(cfg: &VshmmConfig) -> serde_json::Value {
    json!({
        "dt": cfg.micro_step,
        "DT": cfg.macro_step,
        "alpha": cfg.savings,
        "m": cfg.resolved_subperiods(),
        "kernel": cfg.kernel.name(),
        "q": cfg.kernel.q(),
        "variable_steps": cfg.variable_steps,
    })
}

fn ode_columns(p: &BenchmarkProblem) -> Vec<String> {
    let names: &[&str] = match p.name {
        "exp1" => &["xi", "eta", "zeta"],
        _ => &["x1", "x2", "y1", "y2", "I1", "I2", "theta", "cos_phi1"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn ode_table(p: &BenchmarkProblem, traj: &Trajectory) -> Result<TrajectoryTable> {
    let mut rows = Vec::with_capacity(traj.len());
    for s in &traj.states {
        let mut row = s.clone();
        if p.name == "oscillators" {
            let o = slow_observables(s)?;
            row.extend([o.i1, o.i2, o.theta, o.cos_phi1]);
        }
        rows.push(row);
    }
    Ok(TrajectoryTable {
        columns: ode_columns(p),
        times: traj.times.clone(),
        rows,
    })
}

fn produce_ode(args: &RunArgs, method: Method, p: &BenchmarkProblem, dir: &Path) -> Result<Produced> {
    let t_end = args.t_end.unwrap_or(p.t_end);
    let x0 = p.system.initial_state();
    let (table, traj, params) = match method {
        Method::Dns => {
            let dt = args.dt.unwrap_or(p.dns_step);
            let every = args.sample_every.or(args.macro_dt).unwrap_or(p.recommended.macro_step);
            info!("dns: dt={dt} sample_every={every} t_end={t_end}");
            let traj = dns_integrate(&p.system, x0, 0.0, BaseStepper::Rk4, dt, t_end, every)?;
            (ode_table(p, &traj)?, traj, json!({"dt": dt, "sample_every": every}))
        }
        Method::Vshmm | Method::ConstSplit => {
            let mut cfg = vshmm_config(args, &p.recommended)?;
            if method == Method::ConstSplit {
                cfg = cfg.constant_steps();
            }
            let sched = build_schedule(&cfg)?;
            write_schedule_csv(&sched, BufWriter::new(File::create(dir.join("schedule.csv"))?))?;
            info!("{}: N={} m={:?} c={}", method.name(), sched.n_cycles, sched.subperiods, sched.scale_factor);
            let traj = vshmm::vshmm::integrate_with_schedule(&p.system, x0, 0.0, &sched, cfg.base, t_end)?;
            let mut params = config_json(&cfg);
            params["n_cycles"] = json!(sched.n_cycles);
            params["scale_factor"] = json!(sched.scale_factor);
            (ode_table(p, &traj)?, traj, params)
        }
        Method::Averaged => {
            let eq = p
                .averaged
                .as_ref()
                .ok_or_else(|| anyhow!("problem `{}` has no averaged equation", p.name))?;
            let dt = args.dt.unwrap_or(1e-2);
            let every = args.sample_every.unwrap_or(dt);
            let traj = averaged_integrate_sampled(eq, dt, t_end, every)?;
            let table = TrajectoryTable {
                columns: p.slow_components.iter().map(|&i| ode_columns(p)[i].clone()).collect(),
                times: traj.times.clone(),
                rows: traj.states.clone(),
            };
            (table, traj, json!({"dt": dt, "sample_every": every}))
        }
        Method::PdeDns | Method::PdeVshmm => unreachable!(),
    };
    let mut params = params;
    params["eps"] = json!(p.eps);
    params["t_end"] = json!(t_end);
    Ok(Produced { table, traj, params })
}

fn t_label(t: f64) -> String {
    format!("{t:.6}")
}

fn produce_pde(args: &RunArgs, method: Method, p: &PdeProblem, dir: &Path) -> Result<Produced> {
    if args.eps.is_some() {
        bail!("--eps does not apply to PDE problems");
    }
    let t_end = args.t_end.unwrap_or(p.t_end);
    let u0 = p.initial_state()?;
    let lambda = args.lambda.unwrap_or(10f64.powf(-2.5));
    let (traj, mut params) = match method {
        Method::PdeDns => {
            let dt = args.dt.unwrap_or(p.dns_step);
            let every = args.sample_every.or(args.macro_dt).unwrap_or(p.recommended.macro_step);
            let traj = pde_dns_integrate(&p.operator()?, &u0, dt, t_end, every)?;
            if args.lambda.is_some() {
                let t_c = args.cluster_time.unwrap_or(*traj.times.last().unwrap());
                let i = traj
                    .index_of_time(t_c, 1e-9)
                    .ok_or_else(|| anyhow!("no snapshot at cluster time {t_c}"))?;
                let s = SpectralState::from_packed(p.n, &traj.states[i])?;
                let c = cluster_modes(&s, lambda, args.gap.unwrap_or(DEFAULT_GAP), args.buffer.unwrap_or(0))?;
                write_clusters_json(&c, BufWriter::new(File::create(dir.join("clusters.json"))?))?;
                let thresholded = soft_threshold(&s, lambda)?;
                write_coefficients_csv(
                    &thresholded,
                    lambda,
                    0.0,
                    BufWriter::new(File::create(dir.join(format!("thresholded_t{}.csv", t_label(t_c))))?),
                )?;
            }
            (traj, json!({"dt": dt, "sample_every": every}))
        }
        Method::PdeVshmm => {
            let clusters = match &args.clusters {
                Some(path) => vshmm::io::read_clusters_json(File::open(path).with_context(|| format!("opening {}", path.display()))?)?,
                None => p.clusters.clone(),
            };
            let op = p.clustered_operator(clusters.clone())?;
            let cfg = vshmm_config(args, &p.recommended)?;
            let (traj, sched) = pde_vshmm_integrate(&op, &u0, &cfg, t_end)?;
            write_schedule_csv(&sched, BufWriter::new(File::create(dir.join("schedule.csv"))?))?;
            write_clusters_json(&clusters, BufWriter::new(File::create(dir.join("clusters.json"))?))?;
            let mut params = config_json(&cfg);
            params["n_cycles"] = json!(sched.n_cycles);
            params["scale_factor"] = json!(sched.scale_factor);
            params["clusters"] = serde_json::to_value(vshmm::io::ClustersRecord::from(&clusters))?;
            (traj, params)
        }
        _ => unreachable!(),
    };
    params["kind"] = json!(p.kind.name());
    params["n"] = json!(p.n);
    params["t_end"] = json!(t_end);
    params["lambda"] = json!(lambda);
    let table = pde_snapshots(p.n, &traj, lambda, dir)?;
    Ok(Produced { table, traj, params })
}

/// Grid values for the trajectory table, plus a coefficient dump and a field
/// snapshot per sample.
fn pde_snapshots(n: usize, traj: &Trajectory, lambda: f64, dir: &Path) -> Result<TrajectoryTable> {
    let grid = vshmm::spectral::FourierGrid::new(n)?;
    let x = grid_points(n);
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let mut rows = Vec::with_capacity(traj.len());
    for (t, packed) in traj.times.iter().zip(&traj.states) {
        let s = SpectralState::from_packed(n, packed)?;
        let u = grid.inverse_transform(&s)?;
        let label = t_label(*t);
        write_coefficients_csv(&s, lambda, COEFF_FLOOR, BufWriter::new(File::create(dir.join(format!("coeffs_t{label}.csv")))?))?;
        write_field_csv(&x, &u, BufWriter::new(File::create(snap_dir.join(format!("u_t{label}.csv")))?))?;
        rows.push(u);
    }
    Ok(TrajectoryTable {
        columns: (0..n).map(|j| format!("u{j}")).collect(),
        times: traj.times.clone(),
        rows,
    })
}
