mod options;
mod setup;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use econ::metrics::{self, RunSummary};
use serde_json::json;

use options::{Effective, RunArgs};

#[derive(Parser)]
#[command(name = "econ", version, about = "Smoothed-penalty SPIDER solvers for constrained stochastic problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one method on one problem.
    Run(RunArgs),
    /// Run a grid over the penalty weight and/or smoothing width.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated penalty weights.
        #[arg(long)]
        betas: Option<String>,
        /// Comma-separated smoothing widths.
        #[arg(long)]
        nus: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(args) => Effective::resolve(&args).and_then(|e| run_one(&e, &e.out).map(|_| ())),
        Cmd::Sweep { run, betas, nus } => sweep(&run, betas.as_deref(), nus.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_one(eff: &Effective, out: &Path) -> Result<RunSummary> {
    let problem = setup::build_problem(eff)?;
    let p = problem.as_ref();
    let (outcome, extra) = setup::run_method(p, eff)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    metrics::emit_trace(&outcome.trace, &out.join("trace.csv"))?;
    let summary = RunSummary {
        seed: eff.seed,
        stop: format!("{:?}", outcome.stop).to_lowercase(),
        iterations: outcome.iterations,
        last: outcome.trace.records.last().cloned(),
        config: serde_json::to_value(eff)?,
        extra: json!({
            "problem_constants": p.constants(),
            "estimator_gap_last": outcome.estimator_gaps.last(),
            "details": extra,
        }),
    };
    metrics::emit_summary(&summary, &out.join("summary.json"))?;
    if let Some(r) = &summary.last {
        println!(
            "{} {} stop={} k={} fv={:.6e} cvio={:.3e} svio={} dp_g={:.6e} -> {}",
            eff.problem,
            eff.method,
            summary.stop,
            r.k,
            r.fv,
            r.cvio,
            r.svio.map(|s| format!("{s:.3e}")).unwrap_or_else(|| "-".into()),
            r.dp_g,
            out.display()
        );
    }
    Ok(summary)
}

fn parse_grid(s: &str, what: &str) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let x: f64 = tok.parse().with_context(|| format!("bad {what} value {tok:?}"))?;
        if !(x > 0.0 && x.is_finite()) {
            bail!("{what} values must be positive and finite, got {tok:?}");
        }
        v.push(x);
    }
    if v.is_empty() {
        bail!("empty {what} grid");
    }
    Ok(v)
}

fn sweep(args: &RunArgs, betas: Option<&str>, nus: Option<&str>) -> Result<()> {
    let base = Effective::resolve(args)?;
    let (betas, nus) = match (betas, nus) {
        (None, None) => (vec![1.0, 10.0, 100.0, 1000.0], vec![1e-5, 1e-4, 1e-3, 1e-2]),
        (b, n) => (
            b.map(|s| parse_grid(s, "beta")).transpose()?.unwrap_or_else(|| vec![base.beta]),
            n.map(|s| parse_grid(s, "nu")).transpose()?.unwrap_or_else(|| vec![base.nu]),
        ),
    };
    let mut grid: Vec<(f64, f64)> = betas.iter().flat_map(|&b| nus.iter().map(move |&n| (b, n))).collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    grid.dedup();
    fs::create_dir_all(&base.out)?;
    let mut rows = Vec::new();
    for (beta, nu) in grid {
        let mut eff = base.clone();
        eff.beta = beta;
        eff.nu = nu;
        let dir: PathBuf = base.out.join(format!("beta_{beta:e}_nu_{nu:e}"));
        let s = run_one(&eff, &dir)?;
        rows.push((beta, nu, s));
    }
    let mut w = String::new();
    w.push_str("beta,nu,stop,k,fv,cvio,svio,dp_g\n");
    for (beta, nu, s) in &rows {
        let r = s.last.as_ref().expect("runs always record");
        w.push_str(&format!(
            "{beta:e},{nu:e},{},{},{:.16e},{:.16e},{},{:.16e}\n",
            s.stop,
            r.k,
            r.fv,
            r.cvio,
            r.svio.map(|v| format!("{v:.16e}")).unwrap_or_default(),
            r.dp_g
        ));
    }
    fs::write(base.out.join("sweep_summary.csv"), w)?;
    Ok(())
}
