//! Exact maximization of a linear objective over each uncertainty set, and
//! Euclidean projection onto the chi-square ball intersected with the simplex.
//!
//! Both reduce to one-dimensional monotone root finding over dual variables:
//!
//! * best response: `q(eta)_i ∝ p_i (v_i - eta)_+`, bisect on `eta` until
//!   `chi2(q(eta), p) = rho`;
//! * projection: `q(lambda, eta)_i = (p_i (v_i + lambda - eta) / (p_i + lambda))_+`,
//!   an inner bisection on `eta` for `sum q = 1` nested in an outer bisection
//!   on `lambda >= 0` for complementary slackness of the divergence constraint.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::weights::{chi_square_unchecked, dot, GroupLosses, GroupWeights, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Bracket width at which a bisection stops.
    pub dual_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dual_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dual_tolerance > 0.0 && self.dual_tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dual_tolerance {} must be positive",
                self.dual_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub q: GroupWeights,
    /// `q . v` at the returned point.
    pub objective: f64,
    /// Whether the set's defining constraint binds at `q`.
    pub active: bool,
}

/// Maximizes `q . v` over `set`.
pub fn best_response(
    v: &GroupLosses,
    set: &UncertaintySet,
    cfg: &SolverConfig,
) -> Result<BestResponse> {
    cfg.validate()?;
    set.validate()?;
    set.check_groups(v.len())?;
    let v = v.as_slice();
    match set {
        UncertaintySet::Singleton { center } => Ok(BestResponse {
            objective: dot(center.as_slice(), v),
            q: center.clone(),
            active: false,
        }),
        UncertaintySet::FullSimplex => Ok(full_simplex(v)),
        UncertaintySet::CVaR { alpha, center } => Ok(cvar(v, *alpha, center)),
        UncertaintySet::ChiSquare { rho, center } => chi_square(v, *rho, center, cfg),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn full_simplex(v: &[f64]) -> BestResponse {
    let k = argmax(v);
    let mut q = vec![0.0; v.len()];
    q[k] = 1.0;
    BestResponse {
        q: GroupWeights::new(q).expect("vertex is on the simplex"),
        objective: v[k],
        active: false,
    }
}

fn cvar(v: &[f64], alpha: f64, center: &GroupWeights) -> BestResponse {
    // with alpha = 1 every cap equals the center, so the set is {center};
    // constant losses tie everywhere and keep the center too
    let constant = v.iter().all(|&x| x == v[0]);
    if alpha >= 1.0 || constant {
        return BestResponse {
            objective: dot(center.as_slice(), v),
            q: center.clone(),
            active: false,
        };
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable: equal losses keep ascending index order
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).expect("finite losses"));
    let mut q = vec![0.0; v.len()];
    let mut remaining = 1.0;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = (center[i] / alpha).min(remaining);
        q[i] = take;
        remaining -= take;
    }
    let q = GroupWeights::new(q).expect("sort-and-fill exhausts unit mass");
    BestResponse {
        objective: dot(q.as_slice(), v),
        q,
        active: true,
    }
}

/// `q(eta)_i ∝ p_i (v_i - eta)_+`; requires `eta < max(v)`.
fn tilted(v: &[f64], p: &[f64], eta: f64) -> Vec<f64> {
    let raw: Vec<f64> = v
        .iter()
        .zip(p)
        .map(|(vi, pi)| pi * (vi - eta).max(0.0))
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

fn chi_square(
    v: &[f64],
    rho: f64,
    center: &GroupWeights,
    cfg: &SolverConfig,
) -> Result<BestResponse> {
    let p = center.as_slice();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = v.iter().copied().fold(f64::INFINITY, f64::min);

    // every feasible point ties; keep the center
    if top == bottom {
        return Ok(BestResponse {
            objective: dot(p, v),
            q: center.clone(),
            active: false,
        });
    }

    let k = argmax(v);
    if rho >= (1.0 - p[k]) / (2.0 * p[k]) {
        let mut q = vec![0.0; v.len()];
        q[k] = 1.0;
        return Ok(BestResponse {
            q: GroupWeights::new(q)?,
            objective: v[k],
            active: false,
        });
    }

    // Several groups share the maximum: q(eta) tends to the center restricted
    // to them as eta -> max(v). If that limit is feasible it is the
    // least-divergent maximizer.
    let tied_mass: f64 = v
        .iter()
        .zip(p)
        .filter(|(vi, _)| **vi == top)
        .map(|(_, pi)| pi)
        .sum();
    if rho >= (1.0 - tied_mass) / (2.0 * tied_mass) {
        let q: Vec<f64> = v
            .iter()
            .zip(p)
            .map(|(vi, pi)| if *vi == top { pi / tied_mass } else { 0.0 })
            .collect();
        let q = GroupWeights::from_unnormalized(q)?;
        return Ok(BestResponse {
            objective: dot(q.as_slice(), v),
            q,
            active: false,
        });
    }

    // chi2(q(eta)) increases in eta from 0 (eta -> -inf) to the tied-limit
    // divergence (eta -> max v), which exceeds rho here.
    let mut lo = bottom - 1.0;
    let mut iterations = 0;
    while chi_square_unchecked(&tilted(v, p, lo), p) > rho {
        lo = top - 2.0 * (top - lo);
        iterations += 1;
        if iterations >= cfg.max_iterations || !lo.is_finite() {
            return Err(Error::NonConvergence {
                what: "best-response bracket expansion",
                iterations,
                lo,
                hi: top,
            });
        }
    }
    let mut hi = top;
    let mut iterations = 0;
    while hi - lo > cfg.dual_tolerance {
        if iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                what: "best-response bisection",
                iterations,
                lo,
                hi,
            });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi_square_unchecked(&tilted(v, p, mid), p) > rho {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }

    let q = GroupWeights::new(tilted(v, p, lo))?;
    Ok(BestResponse {
        objective: dot(q.as_slice(), v),
        q,
        active: true,
    })
}

/// Euclidean projection of `v` onto `{q in simplex : chi2(q, center) <= rho}`.
///
/// A `v` that is already feasible is returned unchanged.
pub fn project_chi_square(
    v: &[f64],
    rho: f64,
    center: &GroupWeights,
    cfg: &SolverConfig,
) -> Result<GroupWeights> {
    cfg.validate()?;
    UncertaintySet::ChiSquare {
        rho,
        center: center.clone(),
    }
    .validate()?;
    check_len(center.len(), v.len())?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "entry {i} of the projected point is not finite"
        )));
    }
    let p = center.as_slice();

    if is_feasible(v, p, rho) {
        return GroupWeights::new(v.to_vec());
    }

    let at_zero = stationary_point(v, p, 0.0);
    if chi_square_unchecked(&at_zero, p) <= rho {
        return GroupWeights::new(at_zero);
    }

    // chi2(q(lambda)) decreases towards 0 as lambda grows
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut q_hi = stationary_point(v, p, hi);
    let mut iterations = 0;
    while chi_square_unchecked(&q_hi, p) > rho {
        lo = hi;
        hi *= 2.0;
        q_hi = stationary_point(v, p, hi);
        iterations += 1;
        if iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                what: "projection multiplier bracket expansion",
                iterations,
                lo,
                hi,
            });
        }
    }

    let mut iterations = 0;
    while hi - lo > cfg.dual_tolerance * hi.max(1.0) {
        if iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                what: "projection multiplier bisection",
                iterations,
                lo,
                hi,
            });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let q_mid = stationary_point(v, p, mid);
        if chi_square_unchecked(&q_mid, p) > rho {
            lo = mid;
        } else {
            hi = mid;
            q_hi = q_mid;
        }
        iterations += 1;
    }
    GroupWeights::new(q_hi)
}

fn is_feasible(v: &[f64], p: &[f64], rho: f64) -> bool {
    v.iter().all(|&x| x >= 0.0)
        && (v.iter().sum::<f64>() - 1.0).abs() <= crate::weights::SIMPLEX_TOLERANCE
        && chi_square_unchecked(v, p) <= rho
}

/// Minimizer of the Lagrangian over the simplex for a fixed divergence
/// multiplier: `q_i = (a_i (u_i - eta))_+` with `a_i = p_i / (p_i + lambda)`,
/// `u_i = v_i + lambda`, and `eta` chosen so the entries sum to one.
///
/// The mass `sum a_i (u_i - eta)_+` is piecewise linear in `eta` with kinks
/// at the `u_i`, so `eta` is found exactly by scanning them in decreasing
/// order.
fn stationary_point(v: &[f64], p: &[f64], lambda: f64) -> Vec<f64> {
    let a: Vec<f64> = p.iter().map(|pi| pi / (pi + lambda)).collect();
    let u: Vec<f64> = v.iter().map(|vi| vi + lambda).collect();
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[j].total_cmp(&u[i]));

    let (mut sa, mut sau) = (0.0, 0.0);
    let mut eta = f64::NAN;
    for (k, &i) in order.iter().enumerate() {
        sa += a[i];
        sau += a[i] * u[i];
        let candidate = (sau - 1.0) / sa;
        let next = order.get(k + 1).map_or(f64::NEG_INFINITY, |&j| u[j]);
        if candidate >= next {
            eta = candidate;
            break;
        }
    }
    a.iter()
        .zip(&u)
        .map(|(ai, ui)| (ai * (ui - eta)).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::chi_square_divergence;

    fn losses(v: &[f64]) -> GroupLosses {
        GroupLosses::new(v.to_vec()).unwrap()
    }

    fn chi(rho: f64) -> UncertaintySet {
        UncertaintySet::chi_square(rho, GroupWeights::uniform(3).unwrap()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn toy_example_theta_one() {
        let br = best_response(
            &losses(&[0.1, 0.1, 1.1]),
            &chi(0.1),
            &SolverConfig::default(),
        )
        .unwrap();
        // full-support optimum: mean + sqrt(2 rho var) = 13/30 + sqrt(0.2 * 2/9)
        let exact = 13.0 / 30.0 + (0.2f64 * 2.0 / 9.0).sqrt();
        assert!((br.objective - exact).abs() < 1e-9, "{}", br.objective);
        assert_eq!((br.objective * 100.0).round() / 100.0, 0.64);
        assert!(
            close(br.q.as_slice(), &[0.2279, 0.2279, 0.5442], 1e-4),
            "{:?}",
            br.q
        );
        assert!(br.active);
    }

    #[test]
    fn toy_example_theta_two_returns_center() {
        let br = best_response(
            &losses(&[1.0, 1.0, 1.0]),
            &chi(0.1),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(br.objective, 1.0);
        assert_eq!(br.q, GroupWeights::uniform(3).unwrap());
        assert!(!br.active);
    }

    #[test]
    fn vertex_feasible_radius() {
        let br = best_response(
            &losses(&[0.1, 0.1, 1.1]),
            &chi(1.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(br.q.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(br.objective, 1.1);
    }

    #[test]
    fn full_simplex_and_ties() {
        let cfg = SolverConfig::default();
        let br = best_response(
            &losses(&[0.1, 0.1, 1.1]),
            &UncertaintySet::FullSimplex,
            &cfg,
        )
        .unwrap();
        assert_eq!(br.objective, 1.1);
        let br = best_response(
            &losses(&[0.5, 0.9, 0.9]),
            &UncertaintySet::FullSimplex,
            &cfg,
        )
        .unwrap();
        assert_eq!(br.q.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn tiny_radius_approaches_center() {
        let v = losses(&[0.3, -0.2, 0.7, 0.1]);
        let p = GroupWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let set = UncertaintySet::chi_square(1e-14, p.clone()).unwrap();
        let br = best_response(&v, &set, &SolverConfig::default()).unwrap();
        assert!(close(br.q.as_slice(), p.as_slice(), 1e-6));
        assert!((br.objective - dot(p.as_slice(), v.as_slice())).abs() < 1e-6);
    }

    #[test]
    fn cvar_picks_worst_fraction() {
        let u = GroupWeights::uniform(3).unwrap();
        let set = UncertaintySet::cvar(1.0 / 3.0, u.clone()).unwrap();
        let br = best_response(&losses(&[0.1, 0.1, 1.1]), &set, &SolverConfig::default()).unwrap();
        assert!(close(br.q.as_slice(), &[0.0, 0.0, 1.0], 1e-12));
        assert!((br.objective - 1.1).abs() < 1e-12);

        // half of four equal groups: the two worst, averaged
        let set = UncertaintySet::cvar(0.5, GroupWeights::uniform(4).unwrap()).unwrap();
        let br = best_response(
            &losses(&[1.0, 4.0, 2.0, 3.0]),
            &set,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(close(br.q.as_slice(), &[0.0, 0.5, 0.0, 0.5], 1e-12));
        assert!((br.objective - 3.5).abs() < 1e-12);
    }

    #[test]
    fn negative_losses_after_baseline() {
        let v = losses(&[-0.4, -0.1, -0.3]);
        let br = best_response(&v, &chi(0.05), &SolverConfig::default()).unwrap();
        assert!(
            chi_square_divergence(&br.q, &GroupWeights::uniform(3).unwrap()).unwrap()
                <= 0.05 + 1e-9
        );
        assert!(br.q[1] > 1.0 / 3.0);
    }

    #[test]
    fn dimension_mismatch() {
        let err =
            best_response(&losses(&[0.1, 0.2]), &chi(0.1), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let cfg = SolverConfig {
            dual_tolerance: 1e-14,
            max_iterations: 3,
        };
        let err = best_response(&losses(&[0.1, 0.1, 1.1]), &chi(0.1), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err}");
    }

    #[test]
    fn projection_examples() {
        let cfg = SolverConfig::default();
        let u = GroupWeights::uniform(3).unwrap();
        assert_eq!(project_chi_square(u.as_slice(), 0.1, &u, &cfg).unwrap(), u);

        let q = project_chi_square(&[0.0, 0.0, 1.0], 0.1, &u, &cfg).unwrap();
        assert!(
            close(q.as_slice(), &[0.2279, 0.2279, 0.5442], 1e-4),
            "{q:?}"
        );
        assert!((chi_square_divergence(&q, &u).unwrap() - 0.1).abs() < 1e-8);

        let v = [0.4, 0.3, 0.3];
        assert_eq!(
            project_chi_square(&v, 0.5, &u, &cfg).unwrap().as_slice(),
            &v
        );
    }

    #[test]
    fn projection_of_far_point_is_feasible_and_idempotent() {
        let cfg = SolverConfig::default();
        let p = GroupWeights::new(vec![0.05, 0.15, 0.3, 0.5]).unwrap();
        let q = project_chi_square(&[3.0, -2.0, 0.5, 10.0], 0.2, &p, &cfg).unwrap();
        assert!(chi_square_divergence(&q, &p).unwrap() <= 0.2);
        let again = project_chi_square(q.as_slice(), 0.2, &p, &cfg).unwrap();
        assert_eq!(q, again);
    }

    #[test]
    fn projection_rejects_non_finite() {
        let u = GroupWeights::uniform(2).unwrap();
        assert!(project_chi_square(&[f64::NAN, 1.0], 0.1, &u, &SolverConfig::default()).is_err());
    }
}
