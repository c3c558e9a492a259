//! Reference implementations and fixtures shared by the integration tests.
//! The oracles here do not call the library solvers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robust_sched::tasks::imbalanced_regression;
use robust_sched::{generate, TaskSpec};

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|xi| (xi - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{q : 1/2 sum (q_i - p_i)^2 / p_i <= rho}`.
pub fn project_ellipsoid(x: &[f64], p: &[f64], rho: f64) -> Vec<f64> {
    let d: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi - pi).collect();
    let g = |mu: f64| -> f64 {
        0.5 * d
            .iter()
            .zip(p)
            .map(|(di, pi)| (di * pi / (pi + mu)).powi(2) / pi)
            .sum::<f64>()
    };
    if g(0.0) <= rho {
        return x.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) > rho {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    d.iter()
        .zip(p)
        .map(|(di, pi)| pi + di * pi / (pi + hi))
        .collect()
}

/// Euclidean projection onto `{sum q = 1} ∩ {1/2 sum (q_i - p_i)^2 / p_i <= rho}`.
/// For a multiplier `mu` on the ball, the hyperplane multiplier has a closed
/// form; `mu` is found by bisection.
pub fn project_slice(x: &[f64], p: &[f64], rho: f64) -> Vec<f64> {
    let d: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi - pi).collect();
    let point = |mu: f64| -> Vec<f64> {
        let num: f64 = d.iter().zip(p).map(|(di, pi)| pi * di / (pi + mu)).sum();
        let den: f64 = p.iter().map(|pi| pi / (pi + mu)).sum();
        let nu = num / den;
        d.iter()
            .zip(p)
            .map(|(di, pi)| pi + pi * (di - nu) / (pi + mu))
            .collect()
    };
    let excess = |mu: f64| chi2(&point(mu), p) - rho;
    if excess(0.0) <= 0.0 {
        return point(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    point(hi)
}

/// Dykstra's alternating projections onto simplex ∩ chi-square ball, split
/// as (hyperplane ∩ ball) and the nonnegative orthant.
pub fn dykstra(x: &[f64], p: &[f64], rho: f64) -> Vec<f64> {
    let n = x.len();
    let mut y = x.to_vec();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let mut q = y.clone();
    for _ in 0..1_000_000 {
        let ya: Vec<f64> = (0..n).map(|i| y[i] + a[i]).collect();
        let s = project_slice(&ya, p, rho);
        a = (0..n).map(|i| ya[i] - s[i]).collect();
        let sb: Vec<f64> = (0..n).map(|i| s[i] + b[i]).collect();
        let e: Vec<f64> = sb.iter().map(|v| v.max(0.0)).collect();
        b = (0..n).map(|i| sb[i] - e[i]).collect();
        let change = norm_diff(&e, &q);
        let gap = norm_diff(&e, &s);
        q = e.clone();
        y = e;
        if change < 1e-15 && gap < 1e-13 {
            return s;
        }
    }
    q
}

/// `max q.v` over simplex ∩ chi-square ball by projected gradient ascent with
/// growing steps. `project` is the Euclidean projection onto that set.
pub fn pga_chi_square(v: &[f64], p: &[f64], project: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let scale = dot(v, v).sqrt().max(1e-12);
    let mut q = p.to_vec();
    for k in 1..=400 {
        let step = 0.05 * k as f64 / scale;
        let x: Vec<f64> = q.iter().zip(v).map(|(qi, vi)| qi + step * vi).collect();
        q = project(&x);
    }
    q
}

/// Exact `max q.v` over simplex ∩ chi-square ball by enumerating supports.
/// On a support S the problem is a linear objective over an ellipse slice,
/// which has a closed form; infeasible or sign-violating candidates are
/// discarded and the best remaining one is optimal.
pub fn enumerate_chi_square(v: &[f64], p: &[f64], rho: f64) -> f64 {
    let n = v.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let ps: f64 = s.iter().map(|&i| p[i]).sum();
        let mean: f64 = s.iter().map(|&i| p[i] * v[i]).sum::<f64>() / ps;
        let var: f64 = s.iter().map(|&i| p[i] * (v[i] - mean).powi(2)).sum();
        let c = 1.0 - ps;
        let a = c / ps;
        let budget = 2.0 * rho - (1.0 - ps) - a * a * ps;
        if budget < -1e-12 {
            continue;
        }
        let t = if var > 1e-20 {
            (budget.max(0.0) / var).sqrt()
        } else {
            0.0
        };
        let ok = s
            .iter()
            .all(|&i| p[i] + a * p[i] + t * p[i] * (v[i] - mean) >= -1e-12);
        if ok {
            best = best.max(mean + t * var);
        }
    }
    best
}

/// CVaR best response by sort-and-fill: the highest losses first, each up to
/// `p_i / alpha`.
pub fn sort_fill_cvar(v: &[f64], p: &[f64], alpha: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap().then(i.cmp(&j)));
    let mut q = vec![0.0; v.len()];
    let mut left = 1.0;
    for i in order {
        let take = (p[i] / alpha).min(left);
        q[i] = take;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    q
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn chi2(q: &[f64], p: &[f64]) -> f64 {
    0.5 * q
        .iter()
        .zip(p)
        .map(|(qi, pi)| (qi - pi).powi(2) / pi)
        .sum::<f64>()
}

pub fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Random strictly positive distribution with entries at least 0.02 before
/// normalization.
pub fn random_center<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// `argmin` of `f` over an evenly spaced grid on `[lo, hi]`.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    (0..=points)
        .map(|k| lo + (hi - lo) * k as f64 / points as f64)
        .map(|t| (t, f(t)))
        .fold(
            (lo, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// Central-difference step.
const H: f64 = 1e-5;

/// Largest relative error between analytic and central-difference gradients
/// over `points` random (theta, example) pairs.
pub fn worst_relative_gradient_error(spec: &TaskSpec, points: usize, seed: u64) -> f64 {
    let ds = generate(spec, seed).unwrap();
    let model = spec.model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let g = rng.gen_range(0..ds.group_count());
        let ex = &ds.groups[g][rng.gen_range(0..ds.groups[g].len())];
        let theta: Vec<f64> = (0..model.param_dim())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (_, grad) = model.loss_grad(&theta, ex).unwrap();
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += H;
                down[j] -= H;
                (model.loss(&up, ex).unwrap() - model.loss(&down, ex).unwrap()) / (2.0 * H)
            })
            .collect();
        let err = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(err / scale);
    }
    worst
}

pub fn gradient_tasks() -> Vec<(&'static str, TaskSpec)> {
    vec![
        (
            "quadratic",
            TaskSpec::QuadraticMeans {
                mus: vec![0.0, 0.0, 1.0],
                noise: 0.3,
                sizes: vec![20, 20, 20],
            },
        ),
        ("linear", imbalanced_regression(1000)),
        (
            "logistic",
            TaskSpec::GroupedLogistic {
                dim: 5,
                separation: vec![0.5, 1.0, 2.0],
                sizes: vec![30, 30, 30],
                hidden_units: 0,
            },
        ),
        (
            "two_layer",
            TaskSpec::GroupedLogistic {
                dim: 4,
                separation: vec![0.5, 1.5],
                sizes: vec![30, 30],
                hidden_units: 6,
            },
        ),
    ]
}
