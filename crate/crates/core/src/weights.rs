//! Attachment weight specifications `f_t(k, a) = γ(t,a)·k + β(t,a)` with
//! piecewise-constant time dependence, and validation of every standing
//! assumption the limit theorems need.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for the "γ + β constant across colour pairs" condition.
const EQ_ONE_TOL: f64 = 1e-12;

/// Raw weight tables as read from configuration. Colour pairs are indexed
/// `a₁·alphabet + a₂` (parent colour, arriving colour).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// Colour alphabet size (≥ 1).
    pub alphabet: usize,
    /// Right endpoints of the time buckets partitioning `(0, 1]`; strictly
    /// increasing, last entry exactly 1.0.
    pub buckets: Vec<f64>,
    /// `gamma[bucket][pair]`, strictly positive.
    pub gamma: Vec<Vec<f64>>,
    /// `beta[bucket][pair]`, nonnegative; strictly positive unless
    /// `allow_zero_beta` is set.
    pub beta: Vec<Vec<f64>>,
    /// Confirms the caller handles degree-0 vertices carrying zero weight.
    #[serde(default)]
    pub allow_zero_beta: bool,
}

impl WeightConfig {
    /// The plain single-colour, time-constant model.
    pub fn plain(gamma: f64, beta: f64) -> Self {
        Self {
            alphabet: 1,
            buckets: vec![1.0],
            gamma: vec![vec![gamma]],
            beta: vec![vec![beta]],
            allow_zero_beta: false,
        }
    }

    /// Time-constant coloured model from per-pair tables.
    pub fn constant(alphabet: usize, gamma: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { alphabet, buckets: vec![1.0], gamma: vec![gamma], beta: vec![beta], allow_zero_beta: false }
    }
}

/// Outcome of checking one standing assumption.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Option<String>,
}

/// Per-condition pass/fail report for a [`WeightConfig`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail.as_deref().unwrap_or("failed")))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Checks structure plus every theorem hypothesis, reporting the offending
/// (bucket, colour-pair) on failure.
pub fn validate(cfg: &WeightConfig) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: Option<String>| {
        checks.push(ConditionCheck { name, passed, detail });
    };

    let s2 = cfg.alphabet * cfg.alphabet;
    let b = cfg.buckets.len();
    let mut structural = cfg.alphabet >= 1 && b >= 1;
    let mut detail = None;
    if structural {
        if cfg.buckets.last() != Some(&1.0)
            || cfg.buckets.iter().any(|&t| !(t > 0.0 && t <= 1.0))
            || cfg.buckets.windows(2).any(|w| w[1] <= w[0])
        {
            structural = false;
            detail = Some("buckets must be strictly increasing in (0,1] ending at exactly 1.0".into());
        } else if cfg.gamma.len() != b
            || cfg.beta.len() != b
            || cfg.gamma.iter().any(|row| row.len() != s2)
            || cfg.beta.iter().any(|row| row.len() != s2)
        {
            structural = false;
            detail = Some(format!("tables must be {b} buckets × {s2} colour pairs"));
        } else if cfg.gamma.iter().flatten().chain(cfg.beta.iter().flatten()).any(|v| !v.is_finite()) {
            structural = false;
            detail = Some("non-finite table entry".into());
        }
    } else {
        detail = Some("alphabet and bucket count must be at least 1".into());
    }
    push("structure", structural, detail);
    if !structural {
        return ValidationReport { checks };
    }

    // γ(t,a) + β(t,a) must be the same constant c_t across colour pairs.
    let mut eq_one = true;
    let mut eq_detail = None;
    for (bi, (grow, brow)) in cfg.gamma.iter().zip(&cfg.beta).enumerate() {
        let c0 = grow[0] + brow[0];
        for a in 0..s2 {
            let c = grow[a] + brow[a];
            if (c - c0).abs() > EQ_ONE_TOL {
                eq_one = false;
                eq_detail =
                    Some(format!("bucket {bi}, pair {a}: γ+β = {c} differs from pair 0 value {c0}"));
            }
        }
    }
    push("sum_constant_across_pairs", eq_one, eq_detail);

    // min_b c_b ≥ 1.
    let mut min_c = true;
    let mut min_detail = None;
    for (bi, (grow, brow)) in cfg.gamma.iter().zip(&cfg.beta).enumerate() {
        let c = grow[0] + brow[0];
        if c < 1.0 - EQ_ONE_TOL {
            min_c = false;
            min_detail = Some(format!("bucket {bi}: c = {c} < 1"));
        }
    }
    push("min_c_at_least_one", min_c, min_detail);

    let mut gpos = true;
    let mut gdetail = None;
    for (bi, grow) in cfg.gamma.iter().enumerate() {
        for (a, &g) in grow.iter().enumerate() {
            if g <= 0.0 {
                gpos = false;
                gdetail = Some(format!("bucket {bi}, pair {a}: γ = {g} is not positive"));
            }
        }
    }
    push("gamma_positive", gpos, gdetail);

    let mut bpos = true;
    let mut bdetail = None;
    for (bi, brow) in cfg.beta.iter().enumerate() {
        for (a, &v) in brow.iter().enumerate() {
            let ok = if cfg.allow_zero_beta { v >= 0.0 } else { v > 0.0 };
            if !ok {
                bpos = false;
                bdetail = Some(format!(
                    "bucket {bi}, pair {a}: β = {v}{}",
                    if cfg.allow_zero_beta { " is negative" } else { " is not positive (set allow_zero_beta to permit 0)" }
                ));
            }
        }
    }
    push("beta_nonnegative", bpos, bdetail);

    // Σ_k 1/(γk+β) = ∞ holds automatically for linear weights with γ > 0,
    // and sup_a ∫ log(1+β/γ) dt is finite for finite positive tables.
    push("persistence_series_diverges", gpos, None);
    push("log_ratio_integral_finite", gpos && bpos, None);

    ValidationReport { checks }
}

/// A validated weight specification. Immutable after construction and freely
/// shared across threads.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    alphabet: usize,
    buckets: Vec<f64>,
    gamma: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    /// `c_b = γ_b(a) + β_b(a)`, identical across pairs per bucket.
    c: Vec<f64>,
}

impl WeightSpec {
    /// Rejects any configuration failing [`validate`].
    pub fn new(cfg: WeightConfig) -> Result<Self> {
        let report = validate(&cfg);
        if !report.all_passed() {
            return Err(Error::Validation(report.failures()));
        }
        let c = cfg.gamma.iter().zip(&cfg.beta).map(|(g, b)| g[0] + b[0]).collect();
        Ok(Self { alphabet: cfg.alphabet, buckets: cfg.buckets, gamma: cfg.gamma, beta: cfg.beta, c })
    }

    pub fn plain(gamma: f64, beta: f64) -> Result<Self> {
        Self::new(WeightConfig::plain(gamma, beta))
    }

    pub fn constant(alphabet: usize, gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        Self::new(WeightConfig::constant(alphabet, gamma, beta))
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn pair_count(&self) -> usize {
        self.alphabet * self.alphabet
    }

    pub fn pair_index(&self, a1: usize, a2: usize) -> usize {
        a1 * self.alphabet + a2
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Right endpoints of the time buckets.
    pub fn bucket_bounds(&self) -> &[f64] {
        &self.buckets
    }

    pub fn single_bucket(&self) -> bool {
        self.buckets.len() == 1
    }

    /// Index of the bucket whose half-open interval contains `t ∈ (0, 1]`.
    pub fn bucket_index(&self, t: f64) -> Result<usize> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("time {t} outside (0, 1]")));
        }
        Ok(self.buckets.partition_point(|&b| b < t))
    }

    pub fn gamma(&self, bucket: usize, pair: usize) -> f64 {
        self.gamma[bucket][pair]
    }

    pub fn beta(&self, bucket: usize, pair: usize) -> f64 {
        self.beta[bucket][pair]
    }

    pub fn c(&self, bucket: usize) -> f64 {
        self.c[bucket]
    }

    /// `f_b(k, a) = γ_b(a)·k + β_b(a)` for a known bucket.
    pub fn f(&self, bucket: usize, k: usize, pair: usize) -> f64 {
        self.gamma[bucket][pair] * k as f64 + self.beta[bucket][pair]
    }

    /// `f_t(k, a)` with bucket lookup; errors when `t ∉ (0, 1]`.
    pub fn evaluate(&self, t: f64, k: usize, a: (usize, usize)) -> Result<f64> {
        let b = self.bucket_index(t)?;
        Ok(self.f(b, k, self.pair_index(a.0, a.1)))
    }

    /// Whether γ and β are identical for every colour pair (bucket by
    /// bucket), so the model collapses to the plain one.
    pub fn color_independent(&self) -> bool {
        self.gamma.iter().chain(self.beta.iter()).all(|row| {
            row.iter().all(|&v| (v - row[0]).abs() <= EQ_ONE_TOL)
        })
    }
}
