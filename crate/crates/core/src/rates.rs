//! The limiting degree law `π_f` and the entropy rate functionals `I`, `J`,
//! `J̃`, together with the variational form `K̂` used by the upper bound.
//!
//! Conventions:
//!
//! * `I(ℓ) = H(ℓ ‖ (c/f) ⊗ ℓ̂)` with the pointwise product
//!   `((c/f) ⊗ ℓ̂)(k) = (c/f(k))·ℓ̂(k)`; the product is not normalized. The
//!   reference's aggregated tail coordinate is the measure's own tail mass,
//!   which is what the transform telescopes to at the zero of the rate.
//!   `I` can be negative at feasible inputs (see the geometric witness in
//!   the tests); values are reported signed and never clamped.
//! * `J̃(ω, ν)` integrates `H(ω(·|a) ‖ (c_t/f_t) ⊗ ν̂_t(·|a))` over time,
//!   where `ν̂_t` is the tail sequence of the path's snapshot. Constant paths
//!   `ν ≡ ω` therefore reproduce `J(ω)` exactly, making the time-constant
//!   rate a special case of the path rate.
//! * `K̂` and its comparison form [`k_nu`] keep the path snapshot literal
//!   inside `U_g̃ ⊗ ν(a,t) = log⟨e^{g̃}/f, ν_t(·|a)⟩` and compare on the
//!   truncated support.

use crate::measures::{
    relative_entropy, relative_entropy_discrete, tail_sequence, tv_distance, DegreeMeasure,
    PairMeasure, PathMeasure, Reference,
};
use crate::generator::validate_color_law;
use crate::weights::WeightSpec;
use crate::{Error, Result};

/// A rate evaluation: the truncated value, a heuristic bound on what the
/// missing tail could contribute (tail mass × the worst log-ratio seen on
/// the support), and named sub-terms for reporting.
#[derive(Debug, Clone)]
pub struct RateValue {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: Vec<(String, f64)>,
}

/// The limiting degree law of Theorem-level linear weights, per colour pair:
///
/// `π_f(k|a) = (c / (c + f(k,a))) · Π_{i<k} f(i,a) / (c + f(i,a))`.
///
/// Computed by the running survivor product, so `Σ π + tail = 1` by
/// telescoping. Defined for time-constant (single-bucket) weights only.
pub fn pi_f(spec: &WeightSpec, a: (usize, usize), k_max: usize) -> Result<DegreeMeasure> {
    if !spec.single_bucket() {
        return Err(Error::Domain(
            "the limit distribution needs time-constant weights (single bucket)".into(),
        ));
    }
    let pair = spec.pair_index(a.0, a.1);
    let c = spec.c(0);
    let mut survivor = 1.0f64;
    let mut probs = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let f = spec.f(0, k, pair);
        probs.push(survivor * c / (c + f));
        survivor *= f / (c + f);
    }
    DegreeMeasure::new(probs, survivor)
}

/// Entropy of `p` against reference values with an explicit aggregated tail,
/// returning the value plus the tail-extrapolation bound.
fn entropy_term(p: &DegreeMeasure, ref_vals: Vec<f64>, ref_tail: f64) -> Result<(f64, f64)> {
    let q = Reference::new(ref_vals, ref_tail)?;
    let value = relative_entropy(p, &q)?;
    let mut max_log = 0.0f64;
    if value.is_finite() {
        for (&pk, &qk) in p.probs().iter().zip(q.values()) {
            if pk > 0.0 && qk > 0.0 {
                max_log = max_log.max((pk / qk).ln().abs());
            }
        }
    }
    Ok((value, p.tail_mass() * max_log))
}

/// The degree-measure rate function `I(ℓ) = H(ℓ ‖ (c/f) ⊗ ℓ̂)` for the plain
/// model with weight `f(k) = γk + β`.
pub fn rate_i(ell: &DegreeMeasure, gamma: f64, beta: f64) -> Result<RateValue> {
    let spec = WeightSpec::plain(gamma, beta)?;
    let c = spec.c(0);
    let hat = tail_sequence(ell);
    let ref_vals: Vec<f64> =
        hat.iter().enumerate().map(|(k, &h)| c / spec.f(0, k, 0) * h).collect();
    let (value, tail_bound) = entropy_term(ell, ref_vals, ell.tail_mass())?;
    Ok(RateValue { value, tail_bound, terms: vec![("entropy".into(), value)] })
}

/// The pair-measure rate `J(ω) = H(ω_{2,1} ‖ μ) + Σ_a ω₂(a)·H(ω(·|a) ‖
/// (c/f) ⊗ ω̂(·|a))` for time-constant weights. Zero-mass colour pairs
/// contribute nothing.
pub fn rate_j(omega: &PairMeasure, mu: &[f64], spec: &WeightSpec) -> Result<RateValue> {
    if !spec.single_bucket() {
        return Err(Error::Domain("rate J needs time-constant weights".into()));
    }
    if omega.alphabet() != spec.alphabet() {
        return Err(Error::Structure("measure and weight alphabets differ".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    let c = spec.c(0);
    let w2 = omega.pair_marginal();
    let w21 = omega.arrival_color_marginal();
    let color_term = relative_entropy_discrete(&w21, mu);
    let mut value = color_term;
    let mut tail_bound = 0.0;
    let mut terms = vec![("color".into(), color_term)];
    for (pair, &mass) in w2.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let cond = omega.conditional(pair)?;
        let hat = tail_sequence(&cond);
        let ref_vals: Vec<f64> =
            hat.iter().enumerate().map(|(k, &h)| c / spec.f(0, k, pair) * h).collect();
        let (term, bound) = entropy_term(&cond, ref_vals, cond.tail_mass())?;
        value += mass * term;
        tail_bound += mass * bound;
        terms.push((
            format!("pair_{}_{}", pair / spec.alphabet(), pair % spec.alphabet()),
            mass * term,
        ));
    }
    Ok(RateValue { value, tail_bound, terms })
}

fn infinite(terms: Vec<(String, f64)>) -> RateValue {
    RateValue { value: f64::INFINITY, tail_bound: 0.0, terms }
}

/// Checks that every bucket boundary of `spec` appears on the path grid, so
/// each grid cell lies inside a single bucket.
fn check_grid_refines(nu: &PathMeasure, spec: &WeightSpec) -> Result<()> {
    for &b in spec.bucket_bounds() {
        if !nu.breaks().iter().any(|&t| (t - b).abs() <= 1e-12) {
            return Err(Error::Domain(format!(
                "path grid must refine the weight buckets: boundary {b} missing"
            )));
        }
    }
    Ok(())
}

/// Default terminal-match tolerance of [`rate_j_tilde`].
pub const PATH_MATCH_TOL: f64 = 1e-9;

/// The pair/path rate `J̃(ω, ν)`: infinite unless `ω` matches the path's
/// terminal value, otherwise
///
/// `H(ω_{2,1} ‖ μ) + Σ_a ω₂(a) ∫₀¹ H(ω(·|a) ‖ (c_t/f_t) ⊗ ν̂_t(·|a)) dt`,
///
/// with the integral evaluated by midpoint quadrature on the path's grid
/// (exact per cell since the path is piecewise constant).
pub fn rate_j_tilde(
    omega: &PairMeasure,
    nu: &PathMeasure,
    mu: &[f64],
    spec: &WeightSpec,
    path_match_tol: Option<f64>,
) -> Result<RateValue> {
    let tol = path_match_tol.unwrap_or(PATH_MATCH_TOL);
    if omega.alphabet() != spec.alphabet() || nu.alphabet() != spec.alphabet() {
        return Err(Error::Structure("alphabet mismatch".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    check_grid_refines(nu, spec)?;

    let w2 = omega.pair_marginal();
    let w21 = omega.arrival_color_marginal();
    let color_term = relative_entropy_discrete(&w21, mu);
    let terms = vec![("color".into(), color_term)];

    // ω must equal ν₁ on the supported conditionals.
    let terminal = nu.terminal();
    for (pair, &mass) in w2.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let cond = omega.conditional(pair)?;
        match &terminal.conditionals[pair] {
            Some(t) if tv_distance(&cond, t) <= tol => {}
            _ => return Ok(infinite(terms)),
        }
    }

    let mut value = color_term;
    let mut tail_bound = 0.0;
    let mut terms = terms;
    let breaks = nu.breaks();
    let mut integral = 0.0;
    for (i, cell) in nu.cells().iter().enumerate() {
        let width = breaks[i + 1] - breaks[i];
        let mid = 0.5 * (breaks[i] + breaks[i + 1]);
        let bucket = spec.bucket_index(mid)?;
        let c = spec.c(bucket);
        for (pair, &mass) in w2.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let cond = omega.conditional(pair)?;
            let Some(snapshot) = &cell.conditionals[pair] else {
                return Ok(infinite(terms));
            };
            let k_common = cond.k_max().max(snapshot.k_max());
            let p = cond.extended(k_common);
            let snap = snapshot.extended(k_common);
            let hat = tail_sequence(&snap);
            let ref_vals: Vec<f64> =
                hat.iter().enumerate().map(|(k, &h)| c / spec.f(bucket, k, pair) * h).collect();
            let (term, bound) = entropy_term(&p, ref_vals, snap.tail_mass())?;
            if term.is_infinite() {
                return Ok(infinite(terms));
            }
            value += width * mass * term;
            integral += width * mass * term;
            tail_bound += width * mass * bound;
        }
    }
    terms.push(("path_integral".into(), integral));
    Ok(RateValue { value, tail_bound, terms })
}

/// The entropy form `K_ν(ω) = H(ω_{2,1} ‖ μ) + Σ_a ω₂(a) ∫ H(ω(·|a) ‖
/// (c_t/f_t) ⊗ ν_t(·|a)) dt` with the path snapshot kept literal in the
/// reference, evaluated on the truncated support. This is the lower form the
/// variational estimate [`variational_k_hat`] must dominate.
pub fn k_nu(omega: &PairMeasure, nu: &PathMeasure, mu: &[f64], spec: &WeightSpec) -> Result<f64> {
    if omega.alphabet() != spec.alphabet() || nu.alphabet() != spec.alphabet() {
        return Err(Error::Structure("alphabet mismatch".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    check_grid_refines(nu, spec)?;
    let w2 = omega.pair_marginal();
    let w21 = omega.arrival_color_marginal();
    let mut value = relative_entropy_discrete(&w21, mu);
    let breaks = nu.breaks();
    for (i, cell) in nu.cells().iter().enumerate() {
        let width = breaks[i + 1] - breaks[i];
        let mid = 0.5 * (breaks[i] + breaks[i + 1]);
        let bucket = spec.bucket_index(mid)?;
        let c = spec.c(bucket);
        for (pair, &mass) in w2.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let cond = omega.conditional(pair)?;
            let Some(snapshot) = &cell.conditionals[pair] else {
                return Ok(f64::INFINITY);
            };
            let k_common = cond.k_max().max(snapshot.k_max());
            let p = cond.extended(k_common);
            let snap = snapshot.extended(k_common);
            let ref_vals: Vec<f64> = (0..=k_common)
                .map(|k| c / spec.f(bucket, k, pair) * snap.prob(k))
                .collect();
            // The reference tail is set to the measure's own tail so the
            // aggregated coordinate contributes zero: the comparison lives on
            // the truncated support, like the tilt tables it is tested
            // against.
            let (term, _) = entropy_term(&p, ref_vals, p.tail_mass())?;
            if term.is_infinite() {
                return Ok(f64::INFINITY);
            }
            value += width * mass * term;
        }
    }
    Ok(value)
}

/// Search budget for [`variational_k_hat`].
#[derive(Debug, Clone)]
pub struct KHatSearch {
    /// Tilt tables cover degrees `0..=k_g`; beyond, `g̃ = 0`.
    pub k_g: usize,
    /// Full coordinate sweeps over `(h̃, g̃)`.
    pub max_sweeps: usize,
    /// Stop when a sweep improves the objective by less than this.
    pub tol: f64,
}

impl KHatSearch {
    pub fn new(k_g: usize) -> Self {
        Self { k_g, max_sweeps: 200, tol: 1e-12 }
    }
}

/// Result of the coordinate ascent: a lower estimate of the supremum (any
/// feasible tilt bounds a supremum from below), the achieving tables, and
/// the zero-tilt plug-in value it started from.
#[derive(Debug, Clone)]
pub struct KHatResult {
    pub value: f64,
    pub zero_tilt_value: f64,
    pub sweeps: usize,
    pub h: Vec<f64>,
    /// `g[bucket][k·s² + pair]`.
    pub g: Vec<Vec<f64>>,
}

const G_CLAMP: f64 = 60.0;

struct KHatProblem<'a> {
    spec: &'a WeightSpec,
    mu: &'a [f64],
    k_g: usize,
    /// Joint atoms `ω(k, a)` for `k ≤ ω.k_max`.
    omega_atoms: Vec<Vec<f64>>,
    w2: Vec<f64>,
    w21: Vec<f64>,
    /// Per cell: width, bucket, and per-pair `ν_t(k|a)/f_b(k,a)` tables.
    cells: Vec<CellData>,
    /// `Σ_cells Δ·(log c − 2⟨log f, ω⟩)`.
    const_term: f64,
    /// Integrated bucket widths.
    bucket_widths: Vec<f64>,
}

struct CellData {
    width: f64,
    bucket: usize,
    /// `ratios[pair][k] = ν(k|a) / f(k,a)`; empty when the pair carries no ω mass.
    ratios: Vec<Vec<f64>>,
}

impl<'a> KHatProblem<'a> {
    fn build(
        omega: &PairMeasure,
        nu: &PathMeasure,
        mu: &'a [f64],
        spec: &'a WeightSpec,
        k_g: usize,
    ) -> Result<Self> {
        if omega.alphabet() != spec.alphabet() || nu.alphabet() != spec.alphabet() {
            return Err(Error::Structure("alphabet mismatch".into()));
        }
        validate_color_law(mu, spec.alphabet())?;
        check_grid_refines(nu, spec)?;
        let s2 = spec.pair_count();
        let w2 = omega.pair_marginal();
        let w21 = omega.arrival_color_marginal();
        let omega_atoms: Vec<Vec<f64>> = (0..=omega.k_max())
            .map(|k| (0..s2).map(|a| omega.atom(k, a)).collect())
            .collect();

        let breaks = nu.breaks();
        let mut cells = Vec::with_capacity(nu.cells().len());
        let mut const_term = 0.0;
        let mut bucket_widths = vec![0.0; spec.bucket_count()];
        for (i, cell) in nu.cells().iter().enumerate() {
            let width = breaks[i + 1] - breaks[i];
            let mid = 0.5 * (breaks[i] + breaks[i + 1]);
            let bucket = spec.bucket_index(mid)?;
            bucket_widths[bucket] += width;
            let mut log_f_omega = 0.0;
            for (k, row) in omega_atoms.iter().enumerate() {
                for (pair, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        log_f_omega += w * spec.f(bucket, k, pair).ln();
                    }
                }
            }
            const_term += width * (spec.c(bucket).ln() - 2.0 * log_f_omega);
            let mut ratios = vec![Vec::new(); s2];
            for pair in 0..s2 {
                if w2[pair] == 0.0 {
                    continue;
                }
                let Some(snap) = &cell.conditionals[pair] else {
                    return Err(Error::Domain(format!(
                        "path lacks a conditional for supported colour pair {pair}"
                    )));
                };
                ratios[pair] = (0..=snap.k_max().max(k_g))
                    .map(|k| snap.prob(k) / spec.f(bucket, k, pair))
                    .collect();
            }
            cells.push(CellData { width, bucket, ratios });
        }
        Ok(Self { spec, mu, k_g, omega_atoms, w2, w21, cells, const_term, bucket_widths })
    }

    /// `S_{c,a}(g) = Σ_k e^{g_b(k,a)} ν_c(k|a) / f_b(k,a)` with `g = 0`
    /// beyond the table.
    fn cell_sums(&self, g: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let s2 = self.spec.pair_count();
        self.cells
            .iter()
            .map(|cell| {
                (0..s2)
                    .map(|pair| {
                        cell.ratios[pair]
                            .iter()
                            .enumerate()
                            .map(|(k, &r)| {
                                let gv = if k <= self.k_g {
                                    g[cell.bucket][k * s2 + pair]
                                } else {
                                    0.0
                                };
                                r * gv.exp()
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    fn objective(&self, h: &[f64], g: &[Vec<f64>]) -> f64 {
        let s2 = self.spec.pair_count();
        // Colour part: ⟨h, ω_{2,1}⟩ − log Σ e^{h} μ.
        let u_h: f64 = self.h_log_norm(h);
        let mut value: f64 =
            self.w21.iter().zip(h).map(|(&w, &hx)| w * hx).sum::<f64>() - u_h + self.const_term;
        // ⟨g̃, ω⟩ integrated over each bucket.
        for (b, &width) in self.bucket_widths.iter().enumerate() {
            if width == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for (k, row) in self.omega_atoms.iter().enumerate() {
                if k > self.k_g {
                    break;
                }
                for (pair, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        dot += w * g[b][k * s2 + pair];
                    }
                }
            }
            value += width * dot;
        }
        // −Σ_cells Δ Σ_a ω₂(a) log S.
        let sums = self.cell_sums(g);
        for (cell, srow) in self.cells.iter().zip(&sums) {
            for (pair, &mass) in self.w2.iter().enumerate() {
                if mass > 0.0 {
                    value -= cell.width * mass * srow[pair].ln();
                }
            }
        }
        value
    }

    fn h_log_norm(&self, h: &[f64]) -> f64 {
        if h.iter().all(|&x| x == 0.0) {
            // Σ μ = 1 by the colour-law contract.
            0.0
        } else {
            h.iter().zip(self.mu).map(|(&hx, &m)| hx.exp() * m).sum::<f64>().ln()
        }
    }
}

/// Maximizes the bracketed objective of the variational upper-bound form
/// over tabulated `h̃` (on colours) and `g̃` (on degrees × colour pairs, per
/// time bucket) by cyclic coordinate ascent from zero initialization. Any
/// feasible tilt lower-bounds the supremum, so the returned value is a lower
/// estimate; ascent never decreases it.
pub fn variational_k_hat(
    omega: &PairMeasure,
    nu: &PathMeasure,
    mu: &[f64],
    spec: &WeightSpec,
    search: &KHatSearch,
) -> Result<KHatResult> {
    if search.max_sweeps == 0 {
        return Err(Error::Budget("k-hat search needs at least one sweep".into()));
    }
    let problem = KHatProblem::build(omega, nu, mu, spec, search.k_g)?;
    let s = spec.alphabet();
    let s2 = spec.pair_count();
    let mut h = vec![0.0f64; s];
    let mut g = vec![vec![0.0f64; (search.k_g + 1) * s2]; spec.bucket_count()];
    let zero_tilt_value = problem.objective(&h, &g);

    let mut sums = problem.cell_sums(&g);
    let mut best = zero_tilt_value;
    let mut sweeps = 0;

    for sweep in 0..search.max_sweeps {
        sweeps = sweep + 1;
        // h coordinates; the objective is shift-invariant in h, so pin h[0].
        if s > 1 {
            for x in 1..s {
                let rho = problem.w21[x];
                let others: f64 = (0..s)
                    .filter(|&y| y != x)
                    .map(|y| h[y].exp() * problem.mu[y])
                    .sum();
                let new = if rho <= 0.0 {
                    -G_CLAMP
                } else if rho >= 1.0 {
                    G_CLAMP
                } else {
                    (others * rho / (problem.mu[x] * (1.0 - rho))).ln().clamp(-G_CLAMP, G_CLAMP)
                };
                h[x] = new;
            }
        }

        // g coordinates, bucket by bucket.
        for b in 0..spec.bucket_count() {
            let width = problem.bucket_widths[b];
            if width == 0.0 {
                continue;
            }
            for pair in 0..s2 {
                if problem.w2[pair] == 0.0 {
                    continue;
                }
                for k in 0..=search.k_g {
                    let idx = k * s2 + pair;
                    let w_atom = problem
                        .omega_atoms
                        .get(k)
                        .map(|row| row[pair])
                        .unwrap_or(0.0);
                    let old = g[b][idx];
                    let cells: Vec<(usize, f64, f64)> = problem
                        .cells
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.bucket == b)
                        .map(|(ci, c)| {
                            let r = c.ratios[pair].get(k).copied().unwrap_or(0.0);
                            (ci, c.width, r)
                        })
                        .collect();
                    let r_total: f64 = cells.iter().map(|&(_, _, r)| r).sum();
                    let new = if w_atom == 0.0 {
                        // No target mass: push the coordinate down.
                        if r_total == 0.0 { old } else { -G_CLAMP }
                    } else if r_total == 0.0 {
                        // Target mass with no baseline support: unbounded up.
                        G_CLAMP
                    } else {
                        solve_coordinate(&problem, &sums, &cells, pair, w_atom * width, old)
                    };
                    if new != old {
                        let delta = new.exp() - old.exp();
                        for &(ci, _, r) in &cells {
                            if r > 0.0 {
                                sums[ci][pair] += delta * r;
                            }
                        }
                        g[b][idx] = new;
                    }
                }
            }
        }

        let value = problem.objective(&h, &g);
        let improved = value - best;
        if value > best {
            best = value;
        }
        if improved.abs() < search.tol {
            break;
        }
    }

    Ok(KHatResult { value: best, zero_tilt_value, sweeps, h, g })
}

/// 1D concave maximization of `w_int·g − ω₂(a)·Σ_c Δ_c·ln(A_c + r_c e^g)`
/// over a single tilt coordinate.
fn solve_coordinate(
    problem: &KHatProblem<'_>,
    sums: &[Vec<f64>],
    cells: &[(usize, f64, f64)],
    pair: usize,
    w_int: f64,
    old: f64,
) -> f64 {
    let mass = problem.w2[pair];
    // Only cells where the baseline carries the coordinate depend on g.
    let active: Vec<(f64, f64)> = cells
        .iter()
        .filter(|&&(_, _, r)| r > 0.0)
        .map(|&(ci, width, r)| {
            let a = (sums[ci][pair] - r * old.exp()).max(0.0);
            (width, a / r)
        })
        .collect();

    // Single-cell exact step: r e^g / (A + r e^g) = ρ ⇒ e^g = (A/r)·ρ/(1−ρ).
    if active.len() == 1 {
        let (width, a_over_r) = active[0];
        let rho = w_int / (mass * width);
        if rho >= 1.0 {
            return G_CLAMP;
        }
        if rho <= 0.0 {
            return -G_CLAMP;
        }
        return (a_over_r * rho / (1.0 - rho)).ln().clamp(-G_CLAMP, G_CLAMP);
    }

    // Multi-cell: Newton on the concave derivative with clamped steps.
    let mut x = old.clamp(-G_CLAMP, G_CLAMP);
    for _ in 0..60 {
        let e = x.exp();
        let mut d1 = w_int;
        let mut d2 = 0.0;
        for &(width, a_over_r) in &active {
            let sigma = e / (a_over_r + e);
            d1 -= mass * width * sigma;
            d2 -= mass * width * sigma * (1.0 - sigma);
        }
        if d1.abs() < 1e-14 {
            break;
        }
        let step = if d2 < -1e-300 { (-d1 / d2).clamp(-5.0, 5.0) } else { d1.signum() * 1.0 };
        x = (x + step).clamp(-G_CLAMP, G_CLAMP);
    }
    x
}

/// Objective of the variational form at explicit tilt tables; exposed so
/// tests can evaluate closed-form tilts.
pub fn khat_objective(
    omega: &PairMeasure,
    nu: &PathMeasure,
    mu: &[f64],
    spec: &WeightSpec,
    k_g: usize,
    h: &[f64],
    g: &[Vec<f64>],
) -> Result<f64> {
    let problem = KHatProblem::build(omega, nu, mu, spec, k_g)?;
    Ok(problem.objective(h, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PathCell;

    fn plain() -> WeightSpec {
        WeightSpec::plain(1.0, 1.0).unwrap()
    }

    fn constant_path_from(omega: &PairMeasure) -> PathMeasure {
        let s = omega.alphabet();
        let w2 = omega.pair_marginal();
        let conds: Vec<Option<DegreeMeasure>> =
            (0..s * s).map(|a| omega.conditional(a).ok()).collect();
        PathMeasure::constant(s, PathCell { pair_weights: w2, conditionals: conds }).unwrap()
    }

    #[test]
    fn pi_f_closed_form_unit_weights() {
        // γ = β = 1: π(k) = 4 / ((k+1)(k+2)(k+3)).
        let pi = pi_f(&plain(), (0, 0), 200).unwrap();
        for k in 0..=200 {
            let expect = 4.0 / ((k + 1) as f64 * (k + 2) as f64 * (k + 3) as f64);
            assert!((pi.prob(k) - expect).abs() < 1e-15, "k = {k}");
        }
        assert!((pi.prob(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((pi.prob(1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((pi.prob(2) - 1.0 / 15.0).abs() < 1e-15);
        assert!((pi.prob(3) - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn pi_f_closed_form_beta_two() {
        // γ = 1, β = 2: π(k) = 72 / ((k+2)(k+3)(k+4)(k+5)).
        let spec = WeightSpec::plain(1.0, 2.0).unwrap();
        let pi = pi_f(&spec, (0, 0), 100).unwrap();
        for k in 0..=100 {
            let expect = 72.0
                / ((k + 2) as f64 * (k + 3) as f64 * (k + 4) as f64 * (k + 5) as f64);
            assert!((pi.prob(k) - expect).abs() < 1e-15, "k = {k}");
        }
        assert!((pi.prob(0) - 0.6).abs() < 1e-15);
        assert!((pi.prob(1) - 0.2).abs() < 1e-15);
        assert!((pi.prob(2) - 3.0 / 35.0).abs() < 1e-15);
    }

    #[test]
    fn pi_f_mass_telescopes() {
        for (g, b) in [(1.0, 1.0), (0.5, 0.5), (2.0, 3.0), (1.5, 0.25)] {
            if g + b < 1.0 {
                continue;
            }
            let spec = WeightSpec::plain(g, b).unwrap();
            let pi = pi_f(&spec, (0, 0), 50).unwrap();
            let total: f64 = pi.probs().iter().sum::<f64>() + pi.tail_mass();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_f_fixed_point_identity() {
        // π(k) = (c/f(k))·π̂(k) for all k.
        let pi = pi_f(&plain(), (0, 0), 120).unwrap();
        let hat = tail_sequence(&pi);
        for k in 0..=120 {
            let rhs = 2.0 / (k as f64 + 1.0) * hat[k];
            assert!((pi.prob(k) - rhs).abs() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn pi_f_needs_single_bucket() {
        let cfg = crate::weights::WeightConfig {
            alphabet: 1,
            buckets: vec![0.5, 1.0],
            gamma: vec![vec![1.0], vec![1.0]],
            beta: vec![vec![1.0], vec![1.0]],
            allow_zero_beta: false,
        };
        let spec = WeightSpec::new(cfg).unwrap();
        assert!(matches!(pi_f(&spec, (0, 0), 5), Err(Error::Domain(_))));
    }

    #[test]
    fn rate_i_zero_at_fixed_point() {
        let pi = pi_f(&plain(), (0, 0), 200).unwrap();
        let r = rate_i(&pi, 1.0, 1.0).unwrap();
        assert!(r.value.abs() <= 1e-10, "I(π_f) = {}", r.value);
        assert!(r.tail_bound < 1e-10);
    }

    #[test]
    fn rate_i_delta_is_infinite() {
        let r = rate_i(&DegreeMeasure::delta(0, 3), 1.0, 1.0).unwrap();
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn rate_i_geometric_witness_is_negative() {
        // ℓ(k) = 2^{-(k+1)}: ℓ̂ = ℓ, so I = Σ 2^{-(k+1)} log((k+1)/2).
        let k_max = 60;
        let probs: Vec<f64> = (0..=k_max).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
        let tail = 0.5f64.powi(k_max as i32 + 1);
        let ell = DegreeMeasure::new(probs, tail).unwrap();
        let r = rate_i(&ell, 1.0, 1.0).unwrap();
        // Independent series evaluation of Σ 2^{-(k+1)} ln((k+1)/2).
        let series: f64 =
            (0..=k_max).map(|k| 0.5f64.powi(k as i32 + 1) * ((k as f64 + 1.0) / 2.0).ln()).sum();
        assert!((r.value - series).abs() < 1e-12);
        assert!((r.value + 0.1854).abs() < 5e-4, "I = {}", r.value);
        assert!(r.value < 0.0);
    }

    #[test]
    fn rate_i_jensen_floor() {
        let pi = pi_f(&plain(), (0, 0), 40).unwrap();
        let hat = tail_sequence(&pi);
        let sum_rho: f64 = hat
            .iter()
            .enumerate()
            .map(|(k, &h)| 2.0 / (k as f64 + 1.0) * h)
            .sum::<f64>()
            + pi.tail_mass();
        let r = rate_i(&pi, 1.0, 1.0).unwrap();
        assert!(r.value >= -sum_rho.ln() - 1e-9);
    }

    #[test]
    fn rate_j_zero_at_product_fixed_point() {
        let spec = WeightSpec::constant(2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        let mu = [0.25, 0.75];
        let pi = pi_f(&spec, (0, 0), 200).unwrap();
        // ω₂(a₁, a₂) = μ(a₁)·μ(a₂) has arrival marginal μ.
        let weights: Vec<f64> =
            (0..4).map(|a| mu[a / 2] * mu[a % 2]).collect();
        let omega = PairMeasure::product(&pi, 2, &weights).unwrap();
        let r = rate_j(&omega, &mu, &spec).unwrap();
        assert!(r.value.abs() <= 1e-10, "J = {}", r.value);
    }

    #[test]
    fn rate_j_single_color_reduces_to_rate_i() {
        let ell = pi_f(&plain(), (0, 0), 30).unwrap();
        // Perturb slightly to get a nonzero value.
        let mut probs = ell.probs().to_vec();
        probs[0] -= 0.05;
        probs[1] += 0.05;
        let ell = DegreeMeasure::new(probs, ell.tail_mass()).unwrap();
        let omega = PairMeasure::product(&ell, 1, &[1.0]).unwrap();
        let j = rate_j(&omega, &[1.0], &plain()).unwrap();
        let i = rate_i(&ell, 1.0, 1.0).unwrap();
        assert!((j.value - i.value).abs() < 1e-14);
    }

    #[test]
    fn rate_j_finite_support_conditional_is_infinite() {
        // Zero tail: ω̂ vanishes at the top atom while ω is positive there.
        let entries =
            vec![((0usize, (0usize, 0usize)), 0.5), ((1usize, (0usize, 0usize)), 0.5)];
        let omega = PairMeasure::from_atoms(1, &entries).unwrap();
        let r = rate_j(&omega, &[1.0], &plain()).unwrap();
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn rate_j_tilde_gate_on_terminal_mismatch() {
        let spec = plain();
        let pi = pi_f(&spec, (0, 0), 20).unwrap();
        let omega = PairMeasure::product(&pi, 1, &[1.0]).unwrap();
        // Path ends at a measure TV-far from ω.
        let mut probs = pi.probs().to_vec();
        probs[0] -= 0.1;
        probs[1] += 0.1;
        let other = DegreeMeasure::new(probs, pi.tail_mass()).unwrap();
        let path = PathMeasure::constant(
            1,
            PathCell { pair_weights: vec![1.0], conditionals: vec![Some(other)] },
        )
        .unwrap();
        let r = rate_j_tilde(&omega, &path, &[1.0], &spec, None).unwrap();
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn rate_j_tilde_constant_path_recovers_rate_j() {
        let spec = WeightSpec::constant(2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        let mu = [0.5, 0.5];
        // A non-fixed-point ω: damped geometric conditionals.
        let probs: Vec<f64> = (0..=15).map(|k| 0.6 * 0.4f64.powi(k)).collect();
        let tail = 1.0 - probs.iter().sum::<f64>();
        let cond = DegreeMeasure::new(probs, tail).unwrap();
        let omega = PairMeasure::product(&cond, 2, &[0.25; 4]).unwrap();
        let j = rate_j(&omega, &mu, &spec).unwrap();
        let jt = rate_j_tilde(&omega, &constant_path_from(&omega), &mu, &spec, None).unwrap();
        assert!((j.value - jt.value).abs() < 1e-12, "J = {}, J̃ = {}", j.value, jt.value);
        assert!(j.value.is_finite());
    }

    #[test]
    fn rate_j_tilde_zero_at_fixed_point_path() {
        let spec = plain();
        let pi = pi_f(&spec, (0, 0), 200).unwrap();
        let omega = PairMeasure::product(&pi, 1, &[1.0]).unwrap();
        let jt = rate_j_tilde(&omega, &constant_path_from(&omega), &[1.0], &spec, None).unwrap();
        assert!(jt.value.abs() <= 1e-10, "J̃ = {}", jt.value);
    }

    #[test]
    fn rate_j_tilde_two_segment_hand_quadrature() {
        let spec = plain();
        // p and q full-support measures with tails.
        let mk = |r: f64| {
            let probs: Vec<f64> = (0..=12).map(|k| (1.0 - r) * r.powi(k)).collect();
            let tail = 1.0 - probs.iter().sum::<f64>();
            DegreeMeasure::new(probs, tail).unwrap()
        };
        let p = mk(0.3);
        let q = mk(0.5);
        let cell = |m: &DegreeMeasure| PathCell {
            pair_weights: vec![1.0],
            conditionals: vec![Some(m.clone())],
        };
        let path = PathMeasure::piecewise(1, vec![(0.5, cell(&p)), (1.0, cell(&q))]).unwrap();
        let omega = PairMeasure::product(&q, 1, &[1.0]).unwrap();
        let jt = rate_j_tilde(&omega, &path, &[1.0], &spec, None).unwrap();

        // Direct two-term sum: ½H(q ‖ (c/f)⊗p̂) + ½H(q ‖ (c/f)⊗q̂).
        let half_term = |snapshot: &DegreeMeasure| {
            let k = q.k_max().max(snapshot.k_max());
            let qq = q.extended(k);
            let snap = snapshot.extended(k);
            let hat = tail_sequence(&snap);
            let ref_vals: Vec<f64> = hat
                .iter()
                .enumerate()
                .map(|(k, &h)| 2.0 / (k as f64 + 1.0) * h)
                .collect();
            relative_entropy(&qq, &Reference::new(ref_vals, snap.tail_mass()).unwrap()).unwrap()
        };
        let expect = 0.5 * half_term(&p) + 0.5 * half_term(&q);
        assert!((jt.value - expect).abs() < 1e-12, "J̃ = {} vs {}", jt.value, expect);
    }

    #[test]
    fn khat_zero_tilt_matches_closed_form() {
        // At g̃ = h̃ = 0 the objective is
        // −2⟨log f, ω⟩ + log c − Σ_a ω₂(a)·log⟨1/f, ν(·|a)⟩.
        let spec = plain();
        let pi = pi_f(&spec, (0, 0), 25).unwrap();
        let omega = PairMeasure::product(&pi, 1, &[1.0]).unwrap();
        let nu = constant_path_from(&omega);
        let search = KHatSearch { k_g: 25, max_sweeps: 1, tol: 1e-12 };
        let res = variational_k_hat(&omega, &nu, &[1.0], &spec, &search).unwrap();
        let log_f_omega: f64 =
            (0..=25).map(|k| pi.prob(k) * ((k as f64) + 1.0).ln()).sum();
        let inner: f64 = (0..=25).map(|k| pi.prob(k) / (k as f64 + 1.0)).sum();
        let expect = -2.0 * log_f_omega + 2.0f64.ln() - inner.ln();
        assert!((res.zero_tilt_value - expect).abs() < 1e-12);
    }

    #[test]
    fn khat_reaches_analytic_tilt_value() {
        // The tilt g̃(k) = log(f·ω(k)/(c·ν(k))) with ν = ω gives the
        // entropy form plus the 2⟨log(c/f), ω⟩ bookkeeping; ascent from zero
        // must reach it.
        let spec = plain();
        let probs: Vec<f64> = (0..=15).map(|k| 0.65 * 0.35f64.powi(k)).collect();
        let tail = 1.0 - probs.iter().sum::<f64>();
        let ell = DegreeMeasure::new(probs, tail).unwrap();
        let omega = PairMeasure::product(&ell, 1, &[1.0]).unwrap();
        let nu = constant_path_from(&omega);
        let k_g = 15;
        let g_star: Vec<f64> = (0..=k_g)
            .map(|k| ((k as f64 + 1.0) * 1.0 / 2.0).ln())
            .collect();
        let plug_in =
            khat_objective(&omega, &nu, &[1.0], &spec, k_g, &[0.0], &[g_star]).unwrap();
        let res = variational_k_hat(&omega, &nu, &[1.0], &spec, &KHatSearch::new(k_g)).unwrap();
        assert!(
            res.value >= plug_in - 1e-6,
            "ascent reached {} but analytic tilt gives {plug_in}",
            res.value
        );
    }

    #[test]
    fn khat_dominates_entropy_form_at_fixed_point() {
        let spec = plain();
        let pi = pi_f(&spec, (0, 0), 40).unwrap();
        let omega = PairMeasure::product(&pi, 1, &[1.0]).unwrap();
        let nu = constant_path_from(&omega);
        let res = variational_k_hat(&omega, &nu, &[1.0], &spec, &KHatSearch::new(40)).unwrap();
        assert!(res.value >= -1e-6, "K̂ = {}", res.value);
        // The tail-referenced path rate vanishes here.
        let jt = rate_j_tilde(&omega, &nu, &[1.0], &spec, None).unwrap();
        assert!(jt.value.abs() < 1e-10);
    }

    #[test]
    fn khat_budget_error() {
        let spec = plain();
        let pi = pi_f(&spec, (0, 0), 5).unwrap();
        let omega = PairMeasure::product(&pi, 1, &[1.0]).unwrap();
        let nu = constant_path_from(&omega);
        let search = KHatSearch { k_g: 5, max_sweeps: 0, tol: 1e-12 };
        assert!(matches!(
            variational_k_hat(&omega, &nu, &[1.0], &spec, &search),
            Err(Error::Budget(_))
        ));
    }
}
