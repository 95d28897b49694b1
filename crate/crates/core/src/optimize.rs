//! Constrained minimization of rate functionals over truncated probability
//! simplices, and the numerical contraction check relating the pair-level
//! rate to the degree-level rate.
//!
//! Measures are parameterized multiplicatively (softmax over the `k_max + 2`
//! coordinates including the aggregated tail), which keeps iterates strictly
//! positive and away from the `+∞` cliffs where a tail sequence vanishes
//! inside the support. Threshold constraints enter through a ramped
//! quadratic penalty. Rate values can be negative; the optimizer reports
//! them signed and never clamps at zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::measures::{DegreeMeasure, PairMeasure};
use crate::predicate::{Clause, Op};
use crate::rates::{pi_f, rate_i, rate_j};
use crate::weights::WeightSpec;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Truncation of the optimization simplex; the measure has `k_max + 1`
    /// degree coordinates plus a tail coordinate.
    pub k_max: usize,
    /// First-order stationarity target for the penalized objective.
    pub tol: f64,
    /// Independent starts (the limit-law start plus random Dirichlet draws).
    pub starts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, k_max: 40, starts: 8, max_iters: 4000, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub ell: DegreeMeasure,
    pub value: f64,
    /// `‖∇_θ‖_∞` of the penalized objective at the returned point.
    pub residual: f64,
    /// Largest constraint violation of the returned point (after repair).
    pub max_violation: f64,
    /// Best value found from each start, for dispersion checks.
    pub start_values: Vec<f64>,
}

/// Per-coordinate interval hull of the clauses.
fn clause_box(clauses: &[Clause], k_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = k_max + 2;
    let mut lo = vec![0.0f64; dim];
    let mut hi = vec![1.0f64; dim];
    for c in clauses {
        if c.coord > k_max {
            return Err(Error::Domain(format!(
                "constraint coordinate {} exceeds k_max = {k_max}; raise k_max",
                c.coord
            )));
        }
        match c.op {
            Op::Ge => lo[c.coord] = lo[c.coord].max(c.threshold),
            Op::Le => hi[c.coord] = hi[c.coord].min(c.threshold),
        }
    }
    Ok((lo, hi))
}

/// Feasibility pre-solve: the box must intersect the open simplex.
fn feasible_start(lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if l > h + 1e-12 || h <= 1e-12 {
            return Err(Error::Infeasible(format!(
                "coordinate {k}: bounds [{l}, {h}] admit no interior point"
            )));
        }
    }
    if sum_lo > 1.0 - 1e-9 {
        return Err(Error::Infeasible(format!("lower bounds sum to {sum_lo} >= 1")));
    }
    if sum_hi < 1.0 + 1e-9 {
        return Err(Error::Infeasible(format!("upper bounds sum to {sum_hi} <= 1")));
    }
    let slack: Vec<f64> = lo.iter().zip(hi).map(|(&l, &h)| h - l).collect();
    let slack_total: f64 = slack.iter().sum();
    let free = 1.0 - sum_lo;
    Ok(lo.iter().zip(&slack).map(|(&l, &s)| l + free * s / slack_total).collect())
}

/// `I` on a raw coordinate vector `(x_0, ..., x_K, tail)`.
fn rate_i_raw(x: &[f64], gamma: f64, beta: f64) -> f64 {
    let k_max = x.len() - 2;
    let c = gamma + beta;
    let tail = x[k_max + 1];
    let mut hat = vec![0.0; k_max + 1];
    hat[k_max] = tail;
    for k in (0..k_max).rev() {
        hat[k] = hat[k + 1] + x[k + 1];
    }
    let mut value = 0.0;
    for k in 0..=k_max {
        if x[k] > 0.0 {
            let rho = c / (gamma * k as f64 + beta) * hat[k];
            if rho == 0.0 {
                return f64::INFINITY;
            }
            value += x[k] * (x[k] / rho).ln();
        }
    }
    value
}

fn rate_i_raw_grad(x: &[f64], gamma: f64, beta: f64, grad: &mut [f64]) {
    let k_max = x.len() - 2;
    let c = gamma + beta;
    let tail = x[k_max + 1];
    let mut hat = vec![0.0; k_max + 1];
    hat[k_max] = tail;
    for k in (0..k_max).rev() {
        hat[k] = hat[k + 1] + x[k + 1];
    }
    // Σ_{k<j} x_k / hat_k, accumulated left to right.
    let mut prefix = 0.0;
    let mut full = 0.0;
    for k in 0..=k_max {
        if hat[k] > 0.0 {
            full += x[k] / hat[k];
        }
    }
    for j in 0..=k_max {
        let f = gamma * j as f64 + beta;
        let log_term = if x[j] > 0.0 && hat[j] > 0.0 {
            (x[j] * f / (c * hat[j])).ln()
        } else {
            0.0
        };
        grad[j] = log_term + 1.0 - prefix;
        if hat[j] > 0.0 {
            prefix += x[j] / hat[j];
        }
    }
    grad[k_max + 1] = -full;
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|&t| (t - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn penalty_and_grad(x: &[f64], clauses: &[Clause], weight: f64, grad: &mut [f64]) -> f64 {
    let mut p = 0.0;
    for c in clauses {
        let v = x[c.coord];
        let violation = match c.op {
            Op::Ge => (c.threshold - v).max(0.0),
            Op::Le => (v - c.threshold).max(0.0),
        };
        if violation > 0.0 {
            p += weight * violation * violation;
            let dv = match c.op {
                Op::Ge => -2.0 * weight * violation,
                Op::Le => 2.0 * weight * violation,
            };
            grad[c.coord] += dv;
        }
    }
    p
}

struct GdOutcome {
    theta: Vec<f64>,
    residual: f64,
}

/// Gradient descent with Armijo backtracking on
/// `θ ↦ I(softmax(θ)) + penalty`.
fn descend(
    theta0: Vec<f64>,
    gamma: f64,
    beta: f64,
    clauses: &[Clause],
    weight: f64,
    max_iters: usize,
    tol: f64,
) -> GdOutcome {
    let dim = theta0.len();
    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let x = softmax(theta);
        let mut gx = vec![0.0; dim];
        rate_i_raw_grad(&x, gamma, beta, &mut gx);
        let value = rate_i_raw(&x, gamma, beta) + {
            let mut pg = vec![0.0; dim];
            let p = penalty_and_grad(&x, clauses, weight, &mut pg);
            for (g, a) in gx.iter_mut().zip(&pg) {
                *g += a;
            }
            p
        };
        let dot: f64 = x.iter().zip(&gx).map(|(&xi, &gi)| xi * gi).sum();
        let gtheta: Vec<f64> = x.iter().zip(&gx).map(|(&xi, &gi)| xi * (gi - dot)).collect();
        (value, gtheta)
    };

    let mut theta = theta0;
    let (mut value, mut grad) = eval(&theta);
    let mut residual = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
    for _ in 0..max_iters {
        if residual < tol {
            break;
        }
        let norm_sq: f64 = grad.iter().map(|&g| g * g).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> =
                theta.iter().zip(&grad).map(|(&t, &g)| t - step * g).collect();
            let (cand_value, cand_grad) = eval(&cand);
            if cand_value <= value - 1e-4 * step * norm_sq {
                theta = cand;
                value = cand_value;
                grad = cand_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        residual = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if !accepted {
            break;
        }
    }
    GdOutcome { theta, residual }
}

/// Clamp into the clause box and renormalize the slack; removes the
/// O(1/penalty) residual violation of the final iterate.
fn repair(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for _ in 0..3 {
        for (xi, (&l, &h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
            *xi = xi.clamp(l.max(1e-300), h);
        }
        let total: f64 = x.iter().sum();
        let excess = total - 1.0;
        if excess.abs() < 1e-15 {
            break;
        }
        // Distribute the excess over coordinates with room.
        let room: Vec<f64> = x
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&xi, (&l, &h))| if excess > 0.0 { xi - l } else { h - xi })
            .collect();
        let room_total: f64 = room.iter().sum();
        if room_total <= 0.0 {
            break;
        }
        for (xi, r) in x.iter_mut().zip(&room) {
            *xi -= excess * r / room_total;
        }
    }
}

/// Pairwise mass-exchange local search inside the clause box: moves mass
/// between coordinate pairs at a shrinking step while it improves the rate.
/// Cleans up the last ~1e-3 the penalized descent leaves behind.
fn polish_exchange(x: &mut [f64], lo: &[f64], hi: &[f64], gamma: f64, beta: f64) {
    let dim = x.len();
    let mut best = rate_i_raw(x, gamma, beta);
    let mut delta = 0.02f64;
    while delta > 1e-9 {
        let mut improved = false;
        for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                let amt = delta.min(x[i] - lo[i]).min(hi[j] - x[j]);
                if amt <= 0.0 {
                    continue;
                }
                x[i] -= amt;
                x[j] += amt;
                let v = rate_i_raw(x, gamma, beta);
                if v < best - 1e-15 {
                    best = v;
                    improved = true;
                } else {
                    x[i] += amt;
                    x[j] -= amt;
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
}

fn max_violation(x: &[f64], clauses: &[Clause]) -> f64 {
    clauses
        .iter()
        .map(|c| match c.op {
            Op::Ge => (c.threshold - x[c.coord]).max(0.0),
            Op::Le => (x[c.coord] - c.threshold).max(0.0),
        })
        .fold(0.0, f64::max)
}

/// Minimizes `I(ℓ)` over the truncated simplex subject to threshold clauses
/// on the degree coordinates. Multi-start projected descent in the softmax
/// parameterization with a ramped penalty; the best feasible value across
/// starts is returned together with per-start values.
pub fn minimize_rate_i(
    clauses: &[Clause],
    gamma: f64,
    beta: f64,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let spec = WeightSpec::plain(gamma, beta)?;
    let k_max = opts.k_max;
    let dim = k_max + 2;
    let (lo, hi) = clause_box(clauses, k_max)?;
    let base = feasible_start(&lo, &hi)?;

    let pi = pi_f(&spec, (0, 0), k_max)?;
    let mut pi_coords: Vec<f64> = pi.probs().to_vec();
    pi_coords.push(pi.tail_mass());

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.starts.max(2));
    // Limit-law start, pulled halfway toward the feasible point.
    starts.push(
        pi_coords.iter().zip(&base).map(|(&p, &b)| (0.5 * p + 0.5 * b).max(1e-12)).collect(),
    );
    starts.push(base.clone());
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts.max(2) {
        // Dirichlet(1) via normalized exponentials, blended feasible.
        let mut draw: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = draw.iter().sum();
        for (d, &b) in draw.iter_mut().zip(&base) {
            *d = 0.5 * *d / total + 0.5 * b;
        }
        starts.push(draw);
    }

    let outcomes: Vec<(f64, f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|x0| {
            let mut theta: Vec<f64> = x0.iter().map(|&v| v.max(1e-300).ln()).collect();
            let mut residual = f64::INFINITY;
            for weight in [1e3, 1e5, 1e7, 1e9] {
                let out = descend(theta, gamma, beta, clauses, weight, opts.max_iters, opts.tol);
                theta = out.theta;
                residual = out.residual;
            }
            let mut x = softmax(&theta);
            repair(&mut x, &lo, &hi);
            polish_exchange(&mut x, &lo, &hi, gamma, beta);
            (rate_i_raw(&x, gamma, beta), residual, x)
        })
        .collect();

    let start_values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let (value, residual, x) = outcomes
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite rate values"))
        .expect("at least one start");

    let ell = DegreeMeasure::new(x[..=k_max].to_vec(), x[k_max + 1])?;
    Ok(MinimizeResult {
        ell,
        value,
        residual,
        max_violation: max_violation(&x, clauses),
        start_values,
    })
}

#[derive(Debug, Clone)]
pub struct ContractionResult {
    /// Minimum of `J` over pair measures with the prescribed degree marginal.
    pub j_min: f64,
    /// `I` of the marginal under the collapsed plain weights.
    pub i_value: f64,
    /// `j_min − i_value`.
    pub gap: f64,
}

/// Minimizes `rate_J` over pair measures whose degree marginal equals `ell`,
/// and reports the gap against `rate_I(ell)` for the collapsed plain spec.
/// For a single colour the parameterization collapses and the gap is zero
/// exactly; the weights must be colour-independent so the collapse is
/// defined.
pub fn contraction_check(
    ell: &DegreeMeasure,
    mu: &[f64],
    spec: &WeightSpec,
    opts: &MinimizeOptions,
) -> Result<ContractionResult> {
    if !spec.single_bucket() {
        return Err(Error::Domain("contraction check needs time-constant weights".into()));
    }
    if !spec.color_independent() {
        return Err(Error::Domain(
            "contraction against rate_I needs colour-independent weights".into(),
        ));
    }
    let gamma = spec.gamma(0, 0);
    let beta = spec.beta(0, 0);
    let i_value = rate_i(ell, gamma, beta)?.value;
    let s = spec.alphabet();
    if s == 1 {
        return Ok(ContractionResult { j_min: i_value, i_value, gap: 0.0 });
    }

    let s2 = s * s;
    let rows = ell.k_max() + 2;
    let build = |theta: &[f64]| -> PairMeasure {
        let k_max = ell.k_max();
        let mut atoms = vec![0.0; (k_max + 1) * s2];
        let mut tails = vec![0.0; s2];
        for row in 0..rows {
            let split = softmax(&theta[row * s2..(row + 1) * s2]);
            if row <= k_max {
                for a in 0..s2 {
                    atoms[row * s2 + a] = ell.prob(row) * split[a];
                }
            } else {
                for a in 0..s2 {
                    tails[a] = ell.tail_mass() * split[a];
                }
            }
        }
        PairMeasure::new(s, k_max, atoms, tails).expect("marginal split normalizes")
    };
    let objective = |theta: &[f64]| -> f64 {
        rate_j(&build(theta), mu, spec).map(|r| r.value).unwrap_or(f64::INFINITY)
    };

    let dim = rows * s2;
    // Product start q(a|k) = μ(a₁)μ(a₂) plus random perturbations.
    let product_theta: Vec<f64> = (0..dim)
        .map(|i| {
            let a = i % s2;
            (mu[a / s] * mu[a % s]).max(1e-12).ln()
        })
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut starts = vec![product_theta.clone(), vec![0.0; dim]];
    while starts.len() < opts.starts.max(2) {
        starts.push(
            product_theta.iter().map(|&t| t + 0.5 * (rng.random::<f64>() - 0.5)).collect(),
        );
    }

    let best = starts
        .into_par_iter()
        .map(|theta0| descend_numeric(theta0, &objective, opts.max_iters, opts.tol))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"))
        .expect("at least one start");

    let j_min = best.1;
    Ok(ContractionResult { j_min, i_value, gap: j_min - i_value })
}

/// Armijo gradient descent with central finite differences, for objectives
/// without analytic gradients.
fn descend_numeric(
    theta0: Vec<f64>,
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let dim = theta0.len();
    let h = 1e-6;
    let mut theta = theta0;
    let mut value = objective(&theta);
    for _ in 0..max_iters {
        let mut grad = vec![0.0; dim];
        for i in 0..dim {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            grad[i] = (objective(&plus) - objective(&minus)) / (2.0 * h);
        }
        let norm_sq: f64 = grad.iter().map(|&g| g * g).sum();
        if norm_sq.sqrt() < tol.max(1e-10) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<f64> =
                theta.iter().zip(&grad).map(|(&t, &g)| t - step * g).collect();
            let cand_value = objective(&cand);
            if cand_value <= value - 1e-4 * step * norm_sq {
                theta = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (theta, value)
}
