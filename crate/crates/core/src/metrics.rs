//! Feasibility and stationarity measures, and trace output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{true_constraints, Problem};
use crate::penalty::{self, PenaltyConfig};
use crate::set::SetKind;
use crate::ssg;

pub const TRACE_HEADER: &str = "k,alpha,fv,cvio,svio,dp_f,dp_g,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub k: u64,
    pub alpha: f64,
    pub fv: f64,
    pub cvio: f64,
    pub svio: Option<f64>,
    pub dp_f: f64,
    pub dp_g: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<Record>,
}

/// `sum_i max(g_i, 0)`.
pub fn constraint_violation(g: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in g {
        s += v.max(0.0);
    }
    s
}

/// Violation at `x` under the exact (full-population) constraints.
pub fn cvio(p: &dyn Problem, x: &[f64]) -> Result<f64> {
    Ok(constraint_violation(&true_constraints(p, x)?))
}

/// Distance from `x` to the solution of its proximal subproblem.
pub fn stationarity_violation(p: &dyn Problem, x: &[f64], tol: f64) -> Result<f64> {
    let sol = ssg::solve_prox_subproblem(p, x, tol)?;
    Ok(linalg::dist(&sol.x, x))
}

const GRID_1D: usize = 4001;
const GRID_2D: usize = 201;

/// Norm of the Moreau-envelope gradient of the penalized objective at `x`,
/// `2 rho ||x - prox(x)||` with `rho = rho_f + beta m rho_g`.
///
/// The prox point is found by a dense grid search refined by golden-section
/// search, so this is limited to one- and two-dimensional problems.
pub fn moreau_gradient_norm(p: &dyn Problem, cfg: &PenaltyConfig, x: &[f64]) -> Result<f64> {
    let z = moreau_prox(p, cfg, x)?;
    let rho = moduli_rho(p, cfg);
    Ok(2.0 * rho * linalg::dist(x, &z))
}

fn moduli_rho(p: &dyn Problem, cfg: &PenaltyConfig) -> f64 {
    penalty::derived_moduli(p.constants(), p.num_constraints(), cfg.beta).rho
}

pub fn moreau_prox(p: &dyn Problem, cfg: &PenaltyConfig, x: &[f64]) -> Result<Vec<f64>> {
    let d = p.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let rho = moduli_rho(p, cfg);
    if !(rho > 0.0) {
        return Err(Error::param("Moreau envelope needs a positive weak-convexity modulus"));
    }
    let set = p.feasible_set();
    let center = set.center().to_vec();
    let r = set.radius();
    let model = |z: &[f64]| -> Result<f64> {
        Ok(penalty::exact_penalized(p, cfg, z)? + rho * linalg::dist(z, x).powi(2))
    };
    match d {
        1 => {
            let (lo, hi) = (center[0] - r, center[0] + r);
            let f = |t: f64| model(&[t]);
            let t = grid_then_golden(lo, hi, GRID_1D, &f)?;
            Ok(vec![t])
        }
        2 => {
            if !matches!(set.kind(), SetKind::Ball | SetKind::Box) {
                return Err(Error::Unsupported("Moreau prox on this set".into()));
            }
            let h = 2.0 * r / (GRID_2D - 1) as f64;
            let mut best = (f64::INFINITY, center.clone());
            for i in 0..GRID_2D {
                for j in 0..GRID_2D {
                    let z = [center[0] - r + i as f64 * h, center[1] - r + j as f64 * h];
                    if !set.contains(&z, 0.0) {
                        continue;
                    }
                    let v = model(&z)?;
                    if v < best.0 {
                        best = (v, z.to_vec());
                    }
                }
            }
            let mut z = best.1;
            for _ in 0..200 {
                let before = z.clone();
                for axis in 0..2 {
                    let (lo, hi) = axis_segment(set.kind(), &center, r, &z, axis);
                    let lo = lo.max(z[axis] - 2.0 * h);
                    let hi = hi.min(z[axis] + 2.0 * h);
                    let f = |t: f64| {
                        let mut w = z.clone();
                        w[axis] = t;
                        model(&w)
                    };
                    z[axis] = golden(lo, hi, &f)?;
                }
                if linalg::dist(&before, &z) < 1e-13 {
                    break;
                }
            }
            Ok(z)
        }
        _ => Err(Error::Unsupported(format!("Moreau prox by grid search in dimension {d}"))),
    }
}

/// Feasible range of coordinate `axis` with the others fixed.
fn axis_segment(kind: SetKind, center: &[f64], r: f64, z: &[f64], axis: usize) -> (f64, f64) {
    match kind {
        SetKind::Box => (center[axis] - r, center[axis] + r),
        _ => {
            let mut rest = 0.0;
            for (i, (zi, ci)) in z.iter().zip(center).enumerate() {
                if i != axis {
                    rest += (zi - ci).powi(2);
                }
            }
            let half = (r * r - rest).max(0.0).sqrt();
            (center[axis] - half, center[axis] + half)
        }
    }
}

fn grid_then_golden(lo: f64, hi: f64, n: usize, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    let mut best = (f64::INFINITY, 0);
    for i in 0..n {
        let v = f(lo + i as f64 * h)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    let i = best.1;
    let a = lo + i.saturating_sub(1) as f64 * h;
    let b = (lo + (i + 1) as f64 * h).min(hi);
    golden(a, b, f)
}

fn golden(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv * (b - a);
    let mut d = a + inv * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace<W: Write>(trace: &RunTrace, mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.k,
            fmt(r.alpha),
            fmt(r.fv),
            fmt(r.cvio),
            r.svio.map(fmt).unwrap_or_default(),
            fmt(r.dp_f),
            fmt(r.dp_g),
            fmt(r.wall_ms)
        )?;
    }
    Ok(())
}

/// Writes the trace as CSV with 17 significant digits per value; an empty
/// trace gives a header-only file.
pub fn emit_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Format { path: path.to_path_buf(), msg: format!("unexpected header {header:?}") });
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                msg: format!("bad number {:?} in column {}", &rec[i], header[i]),
            })
        };
        records.push(Record {
            k: rec[0]
                .parse()
                .map_err(|_| Error::Format { path: path.to_path_buf(), msg: format!("bad k {:?}", &rec[0]) })?,
            alpha: num(1)?,
            fv: num(2)?,
            cvio: num(3)?,
            svio: if rec[4].is_empty() { None } else { Some(num(4)?) },
            dp_f: num(5)?,
            dp_g: num(6)?,
            wall_ms: num(7)?,
        });
    }
    Ok(RunTrace { records })
}

/// JSON run summary: final record, the caller's configuration echo, seed and
/// anything else the caller adds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub stop: String,
    pub iterations: u64,
    pub last: Option<Record>,
    pub config: serde_json::Value,
    pub extra: serde_json::Value,
}

pub fn emit_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n")?;
    Ok(())
}
