//! Exponential change of measure: tilt specification, exact likelihood
//! ratios by replay, importance-sampling and naive estimators, the
//! lower-bound tilt constructor, and decay-rate scans.
//!
//! The tilted dynamics replace the colour law by `μ̃(a) = e^{h̃(a) − U(h̃)}·μ(a)`
//! and the attachment weight by `f̃_t(k,a) = (c_t / f_t(k,a))·e^{g̃_t(k,a)}`.
//! The likelihood ratio is the exact product over colour factors, weight
//! factors and normalizer factors, evaluated by replay; the
//! exponential-of-empirical-functionals rewrite is exact only asymptotically
//! and is exposed as a diagnostic, never used for estimation.

use rayon::prelude::*;

use crate::generator::{generate_stream, generate_tilted, replay_fold, validate_color_law, EventLog};
use crate::measures::{DegreeMeasure, PairMeasure, PathMeasure};
use crate::optimize::{minimize_rate_i, MinimizeOptions};
use crate::oracle;
use crate::predicate::{EventStatistic, Predicate};
use crate::rates::pi_f;
use crate::weights::WeightSpec;
use crate::{Error, Result};

/// Clamp for tilt entries built from log-ratios with vanishing numerators.
const G_FLOOR: f64 = -700.0;

/// An exponential tilt: `h̃` on colours, `g̃` on (time bucket, degree ≤ k_g,
/// colour pair), a constant `g_default` beyond `k_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilt {
    h: Vec<f64>,
    /// `g[bucket][k·s² + pair]` for `k ≤ k_g`.
    g: Vec<Vec<f64>>,
    k_g: usize,
    g_default: f64,
}

impl Tilt {
    pub fn new(h: Vec<f64>, g: Vec<Vec<f64>>, k_g: usize, g_default: f64) -> Result<Self> {
        if h.iter().chain(g.iter().flatten()).any(|v| !v.is_finite()) || !g_default.is_finite() {
            return Err(Error::Validation("tilt entries must be finite".into()));
        }
        Ok(Self { h, g, k_g, g_default })
    }

    /// The zero tilt: `f̃ = c/f`, colours unchanged.
    pub fn zero(spec: &WeightSpec, k_g: usize) -> Self {
        let s2 = spec.pair_count();
        Self {
            h: vec![0.0; spec.alphabet()],
            g: vec![vec![0.0; (k_g + 1) * s2]; spec.bucket_count()],
            k_g,
            g_default: 0.0,
        }
    }

    /// The canonical identity tilt `g̃ = 2·log f − log c`, `h̃ = 0`, which
    /// reproduces the base dynamics on degrees up to `k_g`.
    pub fn identity(spec: &WeightSpec, k_g: usize) -> Self {
        let s2 = spec.pair_count();
        let g = (0..spec.bucket_count())
            .map(|b| {
                let mut row = vec![0.0; (k_g + 1) * s2];
                for k in 0..=k_g {
                    for pair in 0..s2 {
                        row[k * s2 + pair] = 2.0 * spec.f(b, k, pair).ln() - spec.c(b).ln();
                    }
                }
                row
            })
            .collect();
        let tilt =
            Self { h: vec![0.0; spec.alphabet()], g, k_g, g_default: 0.0 };
        debug_assert!(tilt.validate_identity(spec).is_ok());
        tilt
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn k_g(&self) -> usize {
        self.k_g
    }

    pub fn g_tables(&self) -> &[Vec<f64>] {
        &self.g
    }

    pub fn check_shape(&self, spec: &WeightSpec) -> Result<()> {
        let s2 = spec.pair_count();
        if self.h.len() != spec.alphabet() {
            return Err(Error::Structure("tilt colour table does not match alphabet".into()));
        }
        if self.g.len() != spec.bucket_count()
            || self.g.iter().any(|row| row.len() != (self.k_g + 1) * s2)
        {
            return Err(Error::Structure("tilt degree tables do not match spec shape".into()));
        }
        Ok(())
    }

    /// `g̃` at a degree, falling back to `g_default` beyond the table.
    pub fn g_at(&self, bucket: usize, k: usize, pair: usize) -> f64 {
        self.g_value(bucket, k, pair)
    }

    /// `U(h̃) = log Σ_a e^{h̃(a)} μ(a)`, the unique normalizer making `μ̃` a
    /// probability law. Exactly zero for the zero colour tilt.
    pub fn u_h(&self, mu: &[f64]) -> f64 {
        if self.h.iter().all(|&x| x == 0.0) {
            0.0
        } else {
            self.h.iter().zip(mu).map(|(&h, &m)| h.exp() * m).sum::<f64>().ln()
        }
    }

    /// The tilted colour law `μ̃(a) = e^{h̃(a) − U(h̃)}·μ(a)`.
    pub fn mu_tilde(&self, mu: &[f64]) -> Vec<f64> {
        let u = self.u_h(mu);
        self.h.iter().zip(mu).map(|(&h, &m)| (h - u).exp() * m).collect()
    }

    /// The tilt exponent relative to the identity:
    /// `δ = g̃ − (2·log f − log c)`, so `f̃ = f·e^δ`. The identity tilt gives
    /// `δ = 0` bit-exactly, making its likelihood ratio vanish identically.
    pub fn delta(&self, spec: &WeightSpec, bucket: usize, k: usize, pair: usize) -> f64 {
        self.g_value(bucket, k, pair) - (2.0 * spec.f(bucket, k, pair).ln() - spec.c(bucket).ln())
    }

    fn g_value(&self, bucket: usize, k: usize, pair: usize) -> f64 {
        if k <= self.k_g {
            let s2 = self.g[bucket].len() / (self.k_g + 1);
            self.g[bucket][k * s2 + pair]
        } else {
            self.g_default
        }
    }

    /// The tilted attachment weight `f̃ = (c/f)·e^{g̃}`, evaluated as
    /// `f·e^δ`.
    pub fn f_tilde(&self, spec: &WeightSpec, bucket: usize, k: usize, pair: usize) -> f64 {
        spec.f(bucket, k, pair) * self.delta(spec, bucket, k, pair).exp()
    }

    pub fn log_f_tilde(&self, spec: &WeightSpec, bucket: usize, k: usize, pair: usize) -> f64 {
        spec.f(bucket, k, pair).ln() + self.delta(spec, bucket, k, pair)
    }

    /// Verifies `f̃ = f` on every tabulated degree.
    pub fn validate_identity(&self, spec: &WeightSpec) -> Result<()> {
        self.check_shape(spec)?;
        if self.h.iter().any(|&x| x != 0.0) {
            return Err(Error::Validation("identity tilt requires h̃ = 0".into()));
        }
        for b in 0..spec.bucket_count() {
            for pair in 0..spec.pair_count() {
                for k in 0..=self.k_g {
                    let ft = self.f_tilde(spec, b, k, pair);
                    let f = spec.f(b, k, pair);
                    if (ft - f).abs() > 1e-12 * f {
                        return Err(Error::Validation(format!(
                            "f̃({k}) = {ft} differs from f({k}) = {f}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when the tilt reproduces the base dynamics exactly for every
    /// degree reachable in an `n`-vertex tree (`δ ≡ 0` on the table, zero
    /// colour tilt, and the table covers degrees up to `n − 2`).
    pub fn is_identity_for(&self, spec: &WeightSpec, n: usize) -> bool {
        if self.h.iter().any(|&x| x != 0.0) || self.k_g + 2 < n {
            return false;
        }
        for b in 0..spec.bucket_count() {
            for pair in 0..spec.pair_count() {
                for k in 0..=self.k_g.min(n.saturating_sub(2)) {
                    if self.delta(spec, b, k, pair) != 0.0 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Exact log likelihood ratio `log dP̃/dP` of a realized history: the sum of
/// colour log-ratios over all vertices, tilted-vs-base weight log-ratios over
/// all events, minus tilted-vs-base log-normalizer differences over all
/// steps, computed by exact replay.
pub fn log_likelihood_ratio(
    log: &EventLog,
    tilt: &Tilt,
    spec: &WeightSpec,
    mu: &[f64],
) -> Result<f64> {
    if log.alphabet() != spec.alphabet() {
        return Err(Error::Structure("log and spec alphabets differ".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    tilt.check_shape(spec)?;
    log.replay_validate().map_err(|e| Error::CorruptLog(format!("replay failed: {e}")))?;

    let n = log.n();
    let s = spec.alphabet();
    let mu_tilde = tilt.mu_tilde(mu);
    let mut llr = 0.0f64;
    for v in 1..=n {
        let c = log.color(v);
        llr += (mu_tilde[c] / mu[c]).ln();
    }

    // Lazily cached f̃ per (bucket, pair, degree); one exp/ln per distinct
    // cell instead of per step.
    let s2 = spec.pair_count();
    let mut ft_cache: Vec<Vec<f64>> = vec![Vec::new(); spec.bucket_count() * s2];
    let bounds = spec.bucket_bounds().to_vec();
    let mut bucket = 0usize;

    replay_fold(log, |state, row| {
        let t = row.m as f64 / n as f64;
        while bounds[bucket] < t {
            bucket += 1;
        }
        let pair = spec.pair_index(row.parent_color, row.child_color);
        llr += tilt.delta(spec, bucket, row.parent_indeg, pair);

        let mut sum_f = 0.0f64;
        let mut sum_ft = 0.0f64;
        for x in 0..s {
            let p = spec.pair_index(x, row.child_color);
            let cache = &mut ft_cache[bucket * s2 + p];
            for (k, &cnt) in state.deg_counts[x].iter().enumerate() {
                if cnt == 0 {
                    continue;
                }
                while cache.len() <= k {
                    cache.push(tilt.f_tilde(spec, bucket, cache.len(), p));
                }
                let w = cnt as f64;
                sum_f += w * spec.f(bucket, k, p);
                sum_ft += w * cache[k];
            }
        }
        llr -= sum_ft.ln() - sum_f.ln();
    })?;
    Ok(llr)
}

/// The exponential-of-empirical-functionals rewrite of the likelihood ratio
/// (normalizers replaced by `⟨U_{g̃} ⊗ L, M_X ⊗ id⟩`). Exact only in the
/// limit; exposed so the finite-`n` discrepancy against
/// [`log_likelihood_ratio`] can be reported.
pub fn llr_functional_form(
    log: &EventLog,
    tilt: &Tilt,
    spec: &WeightSpec,
    mu: &[f64],
) -> Result<f64> {
    if log.alphabet() != spec.alphabet() {
        return Err(Error::Structure("log and spec alphabets differ".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    tilt.check_shape(spec)?;
    let n = log.n();
    let u = tilt.u_h(mu);
    let bounds = spec.bucket_bounds().to_vec();
    let mut bucket = 0usize;
    let mut value = 0.0f64;
    replay_fold(log, |state, row| {
        let t = row.m as f64 / n as f64;
        while bounds[bucket] < t {
            bucket += 1;
        }
        let pair = spec.pair_index(row.parent_color, row.child_color);
        value += tilt.h[row.child_color] - u;
        value += tilt.g_value(bucket, row.parent_indeg, pair)
            - 2.0 * spec.f(bucket, row.parent_indeg, pair).ln()
            + spec.c(bucket).ln();
        // U_{g̃}(A(m)) against the parent colour class histogram before m.
        let class = &state.deg_counts[row.parent_color];
        let total: u32 = class.iter().sum();
        let inner: f64 = class
            .iter()
            .enumerate()
            .filter(|&(_, &cnt)| cnt > 0)
            .map(|(k, &cnt)| {
                cnt as f64 / total as f64 * tilt.g_value(bucket, k, pair).exp()
                    / spec.f(bucket, k, pair)
            })
            .sum();
        value -= inner.ln();
    })?;
    Ok(value)
}

/// A rare-event estimate.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub p_hat: f64,
    pub stderr: f64,
    /// Effective sample size from normalized importance weights (equals
    /// `reps` for the naive estimator).
    pub ess: f64,
    pub reps: usize,
    pub hits: u64,
    /// Replicas dropped for non-finite weights.
    pub excluded: usize,
    /// Mean of `e^{-LLR}` over tilted replicas with its standard error: a
    /// change-of-measure exactness diagnostic, 1 in expectation.
    pub mean_weight: f64,
    pub mean_weight_stderr: f64,
}

/// Direct Monte Carlo frequency with binomial standard error.
pub fn naive_estimate(
    event: &Predicate,
    statistic: EventStatistic,
    spec: &WeightSpec,
    mu: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    if reps < 2 {
        return Err(Error::Domain("need at least 2 replicas".into()));
    }
    let indicators: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let log = generate_stream(spec, mu, n, seed, r as u64 + 1)?;
            Ok(event.eval_log(&log, statistic))
        })
        .collect::<Result<_>>()?;
    let hits = indicators.iter().filter(|&&b| b).count() as u64;
    let p = hits as f64 / reps as f64;
    Ok(Estimate {
        p_hat: p,
        stderr: (p * (1.0 - p) / reps as f64).sqrt(),
        ess: reps as f64,
        reps,
        hits,
        excluded: 0,
        mean_weight: 1.0,
        mean_weight_stderr: 0.0,
    })
}

/// Importance-sampling estimate: replicas are drawn from the tilted
/// dynamics and reweighted by `e^{-LLR}`, which is unbiased for the base
/// probability of the event. Replicas with non-finite weights are excluded
/// and the estimate aborts when they exceed 0.1% of the total.
pub fn is_estimate(
    event: &Predicate,
    statistic: EventStatistic,
    spec: &WeightSpec,
    mu: &[f64],
    tilt: &Tilt,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    if reps < 2 {
        return Err(Error::Domain("need at least 2 replicas".into()));
    }
    let samples: Vec<Option<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let log = generate_tilted(spec, mu, tilt, n, seed, r as u64 + 1)?;
            let llr = log_likelihood_ratio(&log, tilt, spec, mu)?;
            let weight = (-llr).exp();
            if !weight.is_finite() {
                return Ok(None);
            }
            let hit = event.eval_log(&log, statistic);
            Ok(Some((if hit { weight } else { 0.0 }, weight)))
        })
        .collect::<Result<_>>()?;

    let excluded = samples.iter().filter(|s| s.is_none()).count();
    if excluded * 1000 > reps {
        return Err(Error::Domain(format!(
            "{excluded} of {reps} replicas had non-finite weights (> 0.1%)"
        )));
    }
    let kept: Vec<(f64, f64)> = samples.into_iter().flatten().collect();
    let m = kept.len();
    let mean = kept.iter().map(|&(v, _)| v).sum::<f64>() / m as f64;
    let var = kept.iter().map(|&(v, _)| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
    let w_sum: f64 = kept.iter().map(|&(_, w)| w).sum();
    let w_sq: f64 = kept.iter().map(|&(_, w)| w * w).sum();
    let w_mean = w_sum / m as f64;
    let w_var = kept.iter().map(|&(_, w)| (w - w_mean) * (w - w_mean)).sum::<f64>() / (m as f64 - 1.0);
    let hits = kept.iter().filter(|&&(v, _)| v > 0.0).count() as u64;
    Ok(Estimate {
        p_hat: mean,
        stderr: (var / m as f64).sqrt(),
        ess: if w_sq > 0.0 { w_sum * w_sum / w_sq } else { 0.0 },
        reps,
        hits,
        excluded,
        mean_weight: w_mean,
        mean_weight_stderr: (w_var / m as f64).sqrt(),
    })
}

/// The lower-bound tilt of the change-of-measure argument:
/// `g̃(k,a) = log(f(k,a)·ω(k|a) / (c·ν(k|a)))` where the baseline carries
/// mass, `h̃` from the target's arrival-colour log-ratios against `μ`.
///
/// The baseline defaults to the per-pair limit law `π_f` (time-constant
/// weights only). A supplied baseline path is sampled at each bucket's
/// midpoint, since the tilt tables are per time bucket. Target mass where
/// the baseline has none is a support violation; target zeros are floored so
/// every tilt entry stays finite.
pub fn suggest_tilt(
    target: &PairMeasure,
    baseline: Option<&PathMeasure>,
    spec: &WeightSpec,
    mu: &[f64],
) -> Result<Tilt> {
    if target.alphabet() != spec.alphabet() {
        return Err(Error::Structure("target and spec alphabets differ".into()));
    }
    validate_color_law(mu, spec.alphabet())?;
    let s = spec.alphabet();
    let s2 = spec.pair_count();
    let k_g = target.k_max();

    let w2 = target.pair_marginal();
    let w21 = target.arrival_color_marginal();
    let h: Vec<f64> = if s == 1 {
        vec![0.0]
    } else {
        w21.iter().zip(mu).map(|(&w, &m)| if w > 0.0 { (w / m).ln() } else { G_FLOOR }).collect()
    };

    let default_baseline: Vec<Option<DegreeMeasure>> = if baseline.is_none() {
        if !spec.single_bucket() {
            return Err(Error::Domain(
                "default π_f baseline needs time-constant weights; supply a baseline path".into(),
            ));
        }
        (0..s2).map(|pair| pi_f(spec, (pair / s, pair % s), k_g).ok()).collect()
    } else {
        Vec::new()
    };

    let bounds = spec.bucket_bounds();
    let mut g = Vec::with_capacity(spec.bucket_count());
    for b in 0..spec.bucket_count() {
        let left = if b == 0 { 0.0 } else { bounds[b - 1] };
        let mid = 0.5 * (left + bounds[b]);
        let c = spec.c(b);
        let mut row = vec![0.0; (k_g + 1) * s2];
        for pair in 0..s2 {
            let cond = if w2[pair] > 0.0 { Some(target.conditional(pair)?) } else { None };
            let base_cond = match baseline {
                Some(path) => path.cell_at(mid)?.conditionals[pair].clone(),
                None => default_baseline[pair].clone(),
            };
            for k in 0..=k_g {
                let f = spec.f(b, k, pair);
                let idx = k * s2 + pair;
                row[idx] = match (&cond, &base_cond) {
                    (Some(cond), Some(base)) => {
                        let target_mass = cond.prob(k);
                        let base_mass = base.prob(k);
                        if base_mass == 0.0 {
                            if target_mass > 0.0 {
                                return Err(Error::SupportViolation {
                                    k,
                                    a0: pair / s,
                                    a1: pair % s,
                                    target: target_mass,
                                });
                            }
                            // Neither side carries the degree: leave the
                            // dynamics uniform there.
                            (f / c).ln()
                        } else if target_mass == 0.0 {
                            G_FLOOR
                        } else {
                            (f / c).ln() + (target_mass.ln() - base_mass.ln())
                        }
                    }
                    // Pairs the target never exercises: uniform attachment.
                    _ => (f / c).ln(),
                };
            }
        }
        g.push(row);
    }
    Tilt::new(h, g, k_g, 0.0)
}

/// Convenience wrapper for the plain model: tilt a single-colour target
/// degree law against the `π_f` baseline.
pub fn suggest_tilt_degree(target: &DegreeMeasure, spec: &WeightSpec) -> Result<Tilt> {
    if spec.alphabet() != 1 {
        return Err(Error::Domain("degree-level tilts are for the single-colour model".into()));
    }
    let omega = PairMeasure::product(target, 1, &[1.0])?;
    suggest_tilt(&omega, None, spec, &[1.0])
}

/// How [`decay_rate_scan`] estimates each probability.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub reps: usize,
    pub seed: u64,
    /// Use importance sampling (plain model only) above the oracle limit.
    pub use_importance_sampling: bool,
    /// Truncation for the optimizer prediction and tilt target.
    pub k_max: usize,
    pub max_oracle_outcomes: u64,
    pub statistic: EventStatistic,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            reps: 20_000,
            seed: 0,
            use_importance_sampling: false,
            k_max: 40,
            max_oracle_outcomes: oracle::DEFAULT_MAX_OUTCOMES,
            statistic: EventStatistic::AttachmentMeasure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecayRow {
    pub n: usize,
    pub p_hat: f64,
    pub stderr: Option<f64>,
    /// `−log(p̂)/n`.
    pub rate_point: f64,
    pub method: &'static str,
}

#[derive(Debug, Clone)]
pub struct DecayScan {
    pub rows: Vec<DecayRow>,
    /// The optimizer's `inf I` over the event clauses, for side-by-side
    /// reporting (plain, time-constant weights only). No pass/fail claim is
    /// attached: the decay is asymptotic.
    pub i_star: Option<f64>,
}

/// Estimates the event probability for each `n`, exactly via the oracle when
/// the outcome count permits, else by Monte Carlo, and reports the per-`n`
/// decay exponent `−log(p)/n` alongside the rate-function prediction.
pub fn decay_rate_scan(
    event: &Predicate,
    ns: &[usize],
    spec: &WeightSpec,
    mu: &[f64],
    cfg: &ScanConfig,
) -> Result<DecayScan> {
    let i_star = if spec.single_bucket() && spec.color_independent() {
        minimize_rate_i(
            &event.clauses,
            spec.gamma(0, 0),
            spec.beta(0, 0),
            &MinimizeOptions { k_max: cfg.k_max, ..MinimizeOptions::default() },
        )
        .ok()
        .map(|r| r.value)
    } else {
        None
    };

    let tilt_target = if cfg.use_importance_sampling && spec.alphabet() == 1 {
        minimize_rate_i(
            &event.clauses,
            spec.gamma(0, 0),
            spec.beta(0, 0),
            &MinimizeOptions { k_max: cfg.k_max, ..MinimizeOptions::default() },
        )
        .ok()
        .map(|r| r.ell)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 2 {
            return Err(Error::Domain(format!("scan point n = {n} below 2")));
        }
        let row = if oracle::outcome_count(spec.alphabet(), n)
            .is_some_and(|c| c <= cfg.max_oracle_outcomes as u128)
        {
            let p = oracle::exact_event_probability(
                spec,
                mu,
                n,
                event,
                cfg.statistic,
                cfg.max_oracle_outcomes,
            )?;
            let p = oracle::rational_to_f64(&p);
            DecayRow { n, p_hat: p, stderr: None, rate_point: rate_point(p, n), method: "oracle" }
        } else if let Some(target) = &tilt_target {
            let tilt = suggest_tilt_degree(target, spec)?;
            let est = is_estimate(event, cfg.statistic, spec, mu, &tilt, n, cfg.reps, cfg.seed)?;
            DecayRow {
                n,
                p_hat: est.p_hat,
                stderr: Some(est.stderr),
                rate_point: rate_point(est.p_hat, n),
                method: "importance",
            }
        } else {
            let est = naive_estimate(event, cfg.statistic, spec, mu, n, cfg.reps, cfg.seed)?;
            DecayRow {
                n,
                p_hat: est.p_hat,
                stderr: Some(est.stderr),
                rate_point: rate_point(est.p_hat, n),
                method: "naive",
            }
        };
        rows.push(row);
    }
    Ok(DecayScan { rows, i_star })
}

fn rate_point(p: f64, n: usize) -> f64 {
    if p > 0.0 {
        -(p.ln()) / n as f64
    } else {
        f64::INFINITY
    }
}
