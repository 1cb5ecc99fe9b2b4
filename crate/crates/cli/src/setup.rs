//! Problem construction and method dispatch for the CLI.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use econ::data::{
    augment_first_coordinate, parse_csv, parse_idx, parse_libsvm, split_and_partition, Augment, CsvSchema, Dataset,
    Split,
};
use econ::oracle::{true_constraints, BatchSpec, Population, Problem};
use econ::penalty::{cq_from_slater, default_delta, theorem_schedule, CqParams, PenaltyConfig, TheoryInputs};
use econ::problems::{
    build_dp_scad, build_example_1d, build_neyman_pearson, build_roc_fairness, build_synthetic_quadratic, DpScadSpec,
    Example1d, NeymanPearsonSpec, Objective1d, RocFairnessSpec, SyntheticNoise,
};
use econ::solver::{run_3s_econ, Monitoring, RunOutcome, SolverConfig, StepRule};
use econ::spider::SpiderSchedule;
use econ::ssg::{run_ssg, SsgConfig};
use serde_json::{json, Value};

use crate::options::{Effective, Method, ProblemKind};

pub fn build_problem(eff: &Effective) -> Result<Box<dyn Problem>> {
    Ok(match eff.problem {
        ProblemKind::Synthetic => {
            let noise = eff.has_noise().then(|| SyntheticNoise {
                sigma: eff.sigma,
                sigma_f: eff.sigma_f,
                sigma_g: eff.sigma_g,
                population: (eff.population > 0).then_some(eff.population),
                seed: eff.data_seed,
            });
            Box::new(build_synthetic_quadratic(noise)?)
        }
        ProblemKind::Example22 => Box::new(build_example_1d(Objective1d::Linear { slope: -1.0 })?),
        ProblemKind::FairRoc => {
            let split = load_split(eff)?;
            let spec = RocFairnessSpec { seed: eff.data_seed, ..Default::default() };
            Box::new(build_roc_fairness(&split, &spec)?)
        }
        ProblemKind::FairDp => {
            let split = load_split(eff)?;
            let spec = DpScadSpec { seed: eff.data_seed, ..Default::default() };
            Box::new(build_dp_scad(&split, &spec)?)
        }
        ProblemKind::NeymanPearson => {
            let images = eff.dataset.as_deref().ok_or_else(|| anyhow!("--dataset (IDX images) is required"))?;
            let labels = eff.labels.as_deref().ok_or_else(|| anyhow!("--labels (IDX labels) is required"))?;
            if eff.classes < 2 {
                bail!("--classes must be at least 2");
            }
            let all = parse_idx(images, labels)?;
            // Class i holds digit i mod 10, so the prioritised first class is digit 1.
            let mut classes = Vec::with_capacity(eff.classes);
            for i in 1..=eff.classes {
                let c = all.with_label((i % 10) as f64);
                classes.push(augment_first_coordinate(&c, Augment::Ones)?);
            }
            Box::new(build_neyman_pearson(classes, &NeymanPearsonSpec::default())?)
        }
    })
}

fn load_split(eff: &Effective) -> Result<Split> {
    let path = eff.dataset.as_deref().ok_or_else(|| anyhow!("--dataset is required for {}", eff.problem))?;
    let ds = load_grouped(eff, path)?;
    let ds = augment_first_coordinate(&ds, Augment::GroupSign)?;
    Ok(split_and_partition(&ds, eff.data_seed)?)
}

fn load_grouped(eff: &Effective, path: &Path) -> Result<Dataset> {
    if let Some(schema) = &eff.schema {
        let schema = CsvSchema::from_file(schema)?;
        return Ok(parse_csv(path, &schema)?);
    }
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        bail!("CSV dataset {} needs --schema", path.display());
    }
    let col = eff
        .group_feature
        .ok_or_else(|| anyhow!("libsvm dataset needs --group-feature (1-based column of the group indicator)"))?;
    if col == 0 {
        bail!("--group-feature is 1-based");
    }
    let ds = parse_libsvm(path, Some(col)).with_context(|| format!("reading {}", path.display()))?;
    Ok(ds.with_group_from_feature(col - 1)?)
}

fn monitoring(eff: &Effective) -> Monitoring {
    Monitoring {
        max_dp_g: eff.max_dp_g,
        max_iters: eff.max_iters,
        svio_stop: eff.svio_stop,
        svio_every: eff.svio_every,
        record_every: eff.record_every,
        wall_time: eff.wall_time,
        ..Default::default()
    }
}

pub fn run_method(p: &dyn Problem, eff: &Effective) -> Result<(RunOutcome, Value)> {
    let penalty = PenaltyConfig::new(eff.beta, eff.nu)?;
    let monitor = monitoring(eff);
    match eff.method {
        Method::EconD | Method::EconS if eff.theoretical => run_theoretical(p, eff, penalty, monitor),
        Method::EconD => {
            let mut cfg = SolverConfig::deterministic(p, penalty, eff.alpha)?;
            cfg.monitor = monitor;
            cfg.seed = eff.seed;
            let details = json!({ "schedule": cfg.schedule, "step": cfg.step });
            Ok((run_3s_econ(p, &cfg)?, details))
        }
        Method::EconS => {
            let mut cfg = SolverConfig::stochastic(p, penalty, eff.alpha)?;
            cfg.monitor = monitor;
            cfg.seed = eff.seed;
            let details = json!({ "schedule": cfg.schedule, "step": cfg.step });
            Ok((run_3s_econ(p, &cfg)?, details))
        }
        Method::Ssg | Method::SsgS => {
            if eff.theoretical {
                bail!("--theoretical applies to the penalty methods only");
            }
            let mut cfg = if eff.method == Method::Ssg {
                SsgConfig::deterministic(p, eff.alpha)?
            } else {
                let n = p
                    .constraint_population()
                    .size()
                    .ok_or_else(|| anyhow!("ssg-s needs a finite constraint population"))?;
                SsgConfig::stochastic(eff.alpha, ((n as f64).sqrt().ceil() as usize).max(1))
            };
            cfg.monitor = monitor;
            cfg.seed = eff.seed;
            let out = run_ssg(p, &cfg)?;
            let details = json!({ "check": cfg.check, "switches": out.switches.len() });
            Ok((out.run, details))
        }
    }
}

fn cq_params(p: &dyn Problem, eff: &Effective) -> Result<CqParams> {
    if eff.problem == ProblemKind::Example22 {
        return Ok(Example1d::cq_params());
    }
    // The origin is strictly feasible for every bundled instance.
    let y = vec![0.0; p.dim()];
    let g_y = true_constraints(p, &y)?;
    let diameter = p.feasible_set().diameter();
    let worst = g_y.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let b_g = worst + p.constants().l_g * diameter;
    Ok(cq_from_slater(&g_y, diameter, b_g)?)
}

fn run_theoretical(
    p: &dyn Problem,
    eff: &Effective,
    penalty: PenaltyConfig,
    monitor: Monitoring,
) -> Result<(RunOutcome, Value)> {
    let cq = cq_params(p, eff)?;
    let inputs = TheoryInputs::from_problem(p, cq);
    let g0 = true_constraints(p, &p.initial_point())?;
    let delta = default_delta(&inputs, penalty.beta, &g0);
    let sched = theorem_schedule(&inputs, penalty, eff.eps, delta, p.constants().sigma)
        .context("theoretical schedule is not available for these parameters")?;
    let pop = p.constraint_population();
    let b = sched.batches;
    let schedule = SpiderSchedule::new(pop, b.s1, b.s2, b.q)?;
    let obj_batch = match p.objective_population() {
        Population::Finite(n) if n <= b.s2 => BatchSpec::full(n),
        _ => BatchSpec::sampled(b.s2),
    };
    let mut monitor = monitor;
    let cap = sched.iterations();
    monitor.max_iters = Some(monitor.max_iters.map_or(cap, |m| m.min(cap)));
    let cfg = SolverConfig {
        penalty,
        schedule,
        step: StepRule::Constant(sched.alpha),
        f_batch: obj_batch,
        g_batch: BatchSpec::for_population(b.s2, pop),
        monitor,
        seed: eff.seed,
    };
    let details = json!({ "theorem": sched, "cq": cq, "schedule": cfg.schedule });
    Ok((run_3s_econ(p, &cfg)?, details))
}
