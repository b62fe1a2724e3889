//! Command-line front end.

pub mod selftest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::continuation::{maxent_initialization, trace_continuation};
use crate::error::{Error, Result};
use crate::factorization::h_inverse;
use crate::io::{matrix_to_json, path_csv, path_json, write_json};
use crate::linalg::{frob, min_hermitian_eigenvalue};
use crate::moment::{
    condition_numbers, moment_g_statespace, CoordinateChart, JacobianMethod, MomentMap, RangeBasis,
};
use crate::statespace::{check_cplus, check_lplus, min_on_grid, FactorParameter, PriorSpectrum};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SPECTRAL_HOMOTOPY_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spectral-homotopy", version, about = "Spectral estimation by continuation in the prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the continuation and write the path, final C, final Lambda and a report.
    Solve(RunArgs),
    /// Condition numbers of the f and g Jacobians at the configured C.
    Condnum(RunArgs),
    /// Membership and feasibility report for the configured data.
    Check(RunArgs),
    /// Maximum-entropy factor for the configured covariance.
    Maxent(RunArgs),
    /// Reduced oracle, round-trip and finite-difference suites.
    Selftest {
        /// Perturb h by this amount (exercises the failure path).
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_h: f64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial continuation step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Quadrature grid step.
    #[arg(long)]
    pub dtheta: Option<f64>,
    /// Newton residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        let cont = cfg.continuation.get_or_insert_with(Default::default);
        if let Some(dt) = self.dt {
            cont.dt = Some(dt);
        }
        if let Some(tol) = self.tol {
            cont.newton_tol = Some(tol);
        }
        if let Some(dtheta) = self.dtheta {
            cfg.quadrature.get_or_insert_with(Default::default).dtheta = Some(dtheta);
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Condnum(a) => cmd_condnum(a),
        Command::Check(a) => cmd_check(a),
        Command::Maxent(a) => cmd_maxent(a),
        Command::Selftest { perturb_h } => {
            let report = selftest::run(&selftest::SelfTestOptions { perturb_h: *perturb_h });
            print!("{}", report.render());
            return if report.passed() { EXIT_OK } else { EXIT_FAILURE };
        }
    };
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_SOLVER
            }
        }
    }
}

/// Caps the global worker pool at `SPECTRAL_HOMOTOPY_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn require_c(cfg: &RunConfig, filter: &crate::statespace::FilterBank) -> Result<FactorParameter> {
    let c = cfg.build_c()?.ok_or_else(|| Error::config("C", "missing"))?;
    FactorParameter::new(filter, c)
}

pub fn cmd_solve(args: &RunArgs) -> Result<Value> {
    let cfg = args.load()?;
    let filter = cfg.build_filter()?;
    let prior = cfg.build_prior()?;
    let sigma = cfg.build_sigma(&filter)?;
    let homotopy = cfg.homotopy();
    homotopy.validate().map_err(|e| Error::config("continuation", e.to_string()))?;
    let out = args.out_dir(&cfg);
    let field = filter.field();

    let start = Instant::now();
    let run = trace_continuation(&filter, &sigma, &prior, &homotopy)?;
    let solve_time = start.elapsed().as_secs_f64();

    ensure_dir(&out)?;
    if cfg.wants_format("csv") {
        std::fs::write(out.join("path.csv"), path_csv(&run.path))?;
    }
    if cfg.wants_format("json") {
        write_json(&out.join("path.json"), &path_json(&run.path, field))?;
    }
    if let Some(reason) = run.failure {
        return Err(Error::StepFloor {
            t: run.path.last().map_or(0.0, |s| s.t),
            min_dt: homotopy.min_dt,
            reason,
        });
    }
    let last = run.path.last().ok_or_else(|| Error::Consistency("empty path".into()))?;
    let c = FactorParameter::new(&filter, last.c.clone())?;
    let range = RangeBasis::new(&filter)?;
    let lambda = h_inverse(&range, c.c());
    write_json(&out.join("final_C.json"), &matrix_to_json(c.c(), field))?;
    write_json(&out.join("final_Lambda.json"), &matrix_to_json(&lambda, field))?;

    let cond_start = Instant::now();
    let chart = CoordinateChart::new(&filter, None)?;
    let cond = condition_numbers(&filter, &prior, &chart, c.c(), JacobianMethod::StateSpace)?;
    let cond_time = cond_start.elapsed().as_secs_f64();
    let final_residual = frob(&(moment_g_statespace(&filter, &prior, &c)? - &sigma));
    let report = json!({
        "command": "solve",
        "steps": run.path.steps(),
        "rejected_steps": run.rejected.iter().map(|(t, dt)| json!({"t": t, "dt": dt})).collect::<Vec<_>>(),
        "final_residual": final_residual,
        "max_residual": run.path.samples.iter().map(|s| s.residual).fold(0.0, f64::max),
        "max_gram_cond": run.path.samples.iter().map(|s| s.gram_cond).fold(0.0, f64::max),
        "newton_iterations": run.path.samples.iter().map(|s| s.newton_iters).collect::<Vec<_>>(),
        "condition_numbers": cond,
        "C": matrix_to_json(c.c(), field),
        "timings": {"continuation_s": solve_time, "condition_numbers_s": cond_time},
        "output_dir": out.display().to_string(),
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

pub fn cmd_condnum(args: &RunArgs) -> Result<Value> {
    let cfg = args.load()?;
    let filter = cfg.build_filter()?;
    let prior = cfg.build_prior()?;
    let c = require_c(&cfg, &filter)?;
    let dtheta = cfg.dtheta();
    let chart = CoordinateChart::new(&filter, None)?;
    let method = JacobianMethod::Quadrature { dtheta };
    let start = Instant::now();
    let lambda = h_inverse(&chart.range, c.c());
    let jf = crate::moment::assemble_jacobian_matrix(&filter, &prior, &chart, MomentMap::F, &lambda, method)?;
    let jg = crate::moment::assemble_jacobian_matrix(&filter, &prior, &chart, MomentMap::G, c.c(), method)?;
    let elapsed = start.elapsed().as_secs_f64();
    let cond_f = crate::linalg::condition_number(&jf);
    let cond_g = crate::linalg::condition_number(&jg);
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    };
    let report = json!({
        "command": "condnum",
        "dtheta": dtheta,
        "grid_points": crate::moment::grid_size(dtheta)?,
        "cond_g": cond_g,
        "cond_f": cond_f,
        "ratio": cond_f / cond_g,
        "timings": {"jacobians_s": elapsed},
    });
    if let Some(out) = args.out.clone().or_else(|| cfg.output_dir().map(PathBuf::from)) {
        ensure_dir(&out)?;
        let mut full = report.clone();
        full["jacobian_g"] = json!(rows(&jg));
        full["jacobian_f"] = json!(rows(&jf));
        write_json(&out.join("condnum.json"), &full)?;
    }
    Ok(report)
}

pub fn cmd_check(args: &RunArgs) -> Result<Value> {
    let cfg = args.load()?;
    let filter = cfg.build_filter()?;
    let mut report = json!({
        "command": "check",
        "filter": {"n": filter.n(), "m": filter.m(), "field": filter.field()},
    });
    report["prior"] = match cfg.build_prior() {
        Ok(p) => prior_report(&p),
        Err(e) => json!({"valid": false, "error": e.to_string()}),
    };
    match cfg.build_c() {
        Ok(Some(c)) => {
            let r = check_cplus(&filter, &c);
            report["C"] = json!({
                "in_set": r.in_set,
                "reasons": r.reasons,
                "spectral_radius": r.spectral_radius,
                "zero_moduli": r.zeros.iter().map(|z| z.norm()).collect::<Vec<_>>(),
            });
            if r.in_set {
                let range = RangeBasis::new(&filter)?;
                let lambda = h_inverse(&range, &c);
                let l = check_lplus(&filter, &lambda, cfg.homotopy().grid_n);
                report["Lambda"] = json!({"in_set": l.in_set, "min_eig": l.min_eig});
            }
        }
        Ok(None) => {}
        Err(e) => report["C"] = json!({"in_set": false, "error": e.to_string()}),
    }
    if cfg.sigma.is_some() {
        report["sigma"] = match cfg.build_sigma(&filter) {
            Ok(s) => {
                let range = RangeBasis::new(&filter)?;
                let residual = range.relative_residual(&s);
                let min_eig = min_hermitian_eigenvalue(&s);
                json!({
                    "feasible": residual <= 1e-8,
                    "projection_residual": residual,
                    "positive_definite": min_eig > 0.0,
                    "min_eig": min_eig,
                })
            }
            Err(e) => json!({"feasible": false, "error": e.to_string()}),
        };
    }
    Ok(report)
}

fn prior_report(p: &PriorSpectrum) -> Value {
    let zeros = p.zeros();
    json!({
        "valid": true,
        "kind": format!("{:?}", p.kind()).to_lowercase(),
        "min_density": min_on_grid(p, 4096),
        "zero_moduli": zeros.iter().map(|z| z.norm()).collect::<Vec<_>>(),
    })
}

pub fn cmd_maxent(args: &RunArgs) -> Result<Value> {
    let cfg = args.load()?;
    let filter = cfg.build_filter()?;
    let sigma = cfg.build_sigma(&filter)?;
    let range = RangeBasis::new(&filter)?;
    let c = maxent_initialization(&filter, &range, &sigma)?;
    let g = moment_g_statespace(&filter, &PriorSpectrum::unit(), &c)?;
    let report = json!({
        "command": "maxent",
        "C": matrix_to_json(c.c(), filter.field()),
        "relative_residual": frob(&(g - &sigma)) / frob(&sigma),
    });
    if let Some(out) = args.out.clone().or_else(|| cfg.output_dir().map(PathBuf::from)) {
        ensure_dir(&out)?;
        write_json(&out.join("maxent_C.json"), &matrix_to_json(c.c(), filter.field()))?;
    }
    Ok(report)
}
