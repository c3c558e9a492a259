use serde_json::json;

use crate::error::{Error, Result};
use crate::solvers::{best_response, project_chi_square, SolverConfig};
use crate::weights::{chi_square_divergence, GroupLosses, GroupWeights, UncertaintySet};

/// Parses `a,b,c` into floats.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{s}` is not a number: {e}")))
        })
        .collect()
}

/// `uniform` or an explicit comma-separated distribution.
pub fn parse_center(text: &str, n: usize) -> Result<GroupWeights> {
    if text.trim() == "uniform" {
        return GroupWeights::uniform(n);
    }
    let w = GroupWeights::new(parse_vector(text)?)?;
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SetKind {
    ChiSquare,
    Cvar,
    FullSimplex,
    Singleton,
}

pub struct BestResponseArgs<'a> {
    pub v: &'a str,
    pub set: SetKind,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub center: &'a str,
    pub solver: SolverConfig,
}

/// Best response as a JSON object `{set, q, objective, active}`.
pub fn solve_best_response(args: &BestResponseArgs<'_>) -> Result<serde_json::Value> {
    let v = GroupLosses::new(parse_vector(args.v)?)?;
    let center = || parse_center(args.center, v.len());
    let set = match args.set {
        SetKind::ChiSquare => {
            let rho = args
                .rho
                .ok_or_else(|| Error::InvalidArgument("--rho is required for chi_square".into()))?;
            UncertaintySet::chi_square(rho, center()?)?
        }
        SetKind::Cvar => {
            let alpha = args
                .alpha
                .ok_or_else(|| Error::InvalidArgument("--alpha is required for cvar".into()))?;
            UncertaintySet::cvar(alpha, center()?)?
        }
        SetKind::FullSimplex => UncertaintySet::FullSimplex,
        SetKind::Singleton => UncertaintySet::singleton(center()?),
    };
    let br = best_response(&v, &set, &args.solver)?;
    Ok(json!({
        "set": set.kind(),
        "q": br.q.as_slice(),
        "objective": br.objective,
        "active": br.active,
    }))
}

/// Projection as a JSON object `{q, divergence}`.
pub fn solve_project(
    v: &str,
    rho: f64,
    center: &str,
    solver: &SolverConfig,
) -> Result<serde_json::Value> {
    let v = parse_vector(v)?;
    let center = parse_center(center, v.len())?;
    let q = project_chi_square(&v, rho, &center, solver)?;
    Ok(json!({
        "q": q.as_slice(),
        "divergence": chi_square_divergence(&q, &center)?,
    }))
}
