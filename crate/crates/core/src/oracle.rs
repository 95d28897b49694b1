//! Exact enumeration of all coloured attachment histories for tiny `n`.
//!
//! Probabilities are exact rationals built from the bit-exact rational value
//! of every f64 weight the samplers use, so the enumerated law, pushforward
//! laws and Radon–Nikodym factors are exact identities rather than tolerance
//! checks. Outcomes are visited in lexicographic order (colours, then parent
//! choices, step by step).

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::generator::{Event, EventLog};
use crate::predicate::{EventStatistic, Predicate};
use crate::rare_events::Tilt;
use crate::weights::WeightSpec;
use crate::{Error, Result};

/// Default cap on the number of enumerated outcomes: admits the plain model
/// to `n = 10` and the two-colour model to `n = 7`.
pub const DEFAULT_MAX_OUTCOMES: u64 = 500_000;

/// `|𝒳|^n · (n−1)!`, the outcome count; `None` on overflow.
pub fn outcome_count(alphabet: usize, n: usize) -> Option<u128> {
    let mut count: u128 = 1;
    for m in 1..n {
        count = count.checked_mul(m as u128)?;
    }
    for _ in 0..n {
        count = count.checked_mul(alphabet as u128)?;
    }
    Some(count)
}

fn rational_from_f64(x: f64) -> Result<BigRational> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("cannot rationalize weight {x}")));
    }
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("cannot rationalize {x}")))
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Exact-rational mirror of one set of dynamics: per (bucket, pair, degree)
/// attachment weights and a normalized colour law.
struct ExactDynamics {
    /// `weights[bucket][pair][k]` for `k ≤ n − 2`.
    weights: Vec<Vec<Vec<BigRational>>>,
    mu: Vec<BigRational>,
}

impl ExactDynamics {
    fn base(spec: &WeightSpec, mu: &[f64], n: usize) -> Result<Self> {
        Self::build(spec, mu, n, |b, k, pair| spec.f(b, k, pair))
    }

    fn tilted(spec: &WeightSpec, tilt: &Tilt, mu: &[f64], n: usize) -> Result<Self> {
        let mu_tilde = tilt.mu_tilde(mu);
        Self::build(spec, &mu_tilde, n, |b, k, pair| tilt.f_tilde(spec, b, k, pair))
    }

    fn build(
        spec: &WeightSpec,
        mu: &[f64],
        n: usize,
        weight: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(spec.bucket_count());
        for b in 0..spec.bucket_count() {
            let mut per_pair = Vec::with_capacity(spec.pair_count());
            for pair in 0..spec.pair_count() {
                let mut per_k = Vec::with_capacity(n.max(2) - 1);
                for k in 0..=(n - 2) {
                    per_k.push(rational_from_f64(weight(b, k, pair))?);
                }
                per_pair.push(per_k);
            }
            weights.push(per_pair);
        }
        let raw: Vec<BigRational> =
            mu.iter().map(|&m| rational_from_f64(m)).collect::<Result<_>>()?;
        let total: BigRational = raw.iter().sum();
        if total.is_zero() {
            return Err(Error::Validation("colour law has zero total mass".into()));
        }
        let mu = raw.into_iter().map(|m| m / &total).collect();
        Ok(Self { weights, mu })
    }
}

struct Enumerator<'a, F> {
    spec: &'a WeightSpec,
    dynamics: ExactDynamics,
    n: usize,
    visit: F,
    colors: Vec<u8>,
    events: Vec<Event>,
    indeg: Vec<u32>,
    /// Bucket index per step `m` (index `m − 2`).
    step_buckets: Vec<usize>,
}

impl<'a, F: FnMut(&EventLog, &BigRational)> Enumerator<'a, F> {
    fn run(mut self) {
        let s = self.spec.alphabet();
        let one = BigRational::one();
        for c in 0..s {
            self.colors.push(c as u8);
            let p = &one * &self.dynamics.mu[c];
            self.recurse(2, p);
            self.colors.pop();
        }
    }

    fn recurse(&mut self, m: usize, prob: BigRational) {
        if m > self.n {
            let log = EventLog::from_parts(
                self.spec.alphabet(),
                self.colors.clone(),
                self.events.clone(),
                None,
            )
            .expect("enumerated histories are consistent");
            (self.visit)(&log, &prob);
            return;
        }
        let s = self.spec.alphabet();
        let bucket = self.step_buckets[m - 2];
        for c in 0..s {
            let color_prob = &prob * &self.dynamics.mu[c];
            // Normalizer over the existing vertices for arrival colour c.
            let mut norm = BigRational::zero();
            for i in 1..m {
                let pair = self.spec.pair_index(self.colors[i - 1] as usize, c);
                norm += &self.dynamics.weights[bucket][pair][self.indeg[i - 1] as usize];
            }
            if norm.is_zero() {
                continue;
            }
            self.colors.push(c as u8);
            for parent in 1..m {
                let k = self.indeg[parent - 1];
                let pair = self.spec.pair_index(self.colors[parent - 1] as usize, c);
                let w = &self.dynamics.weights[bucket][pair][k as usize];
                if w.is_zero() {
                    continue;
                }
                let branch = &color_prob * w / &norm;
                self.events.push(Event { parent: parent as u32, parent_indeg: k });
                self.indeg[parent - 1] += 1;
                self.recurse(m + 1, branch);
                self.indeg[parent - 1] -= 1;
                self.events.pop();
            }
            self.colors.pop();
        }
    }
}

fn check_budget(spec: &WeightSpec, n: usize, max_outcomes: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    match outcome_count(spec.alphabet(), n) {
        Some(c) if c <= max_outcomes as u128 => Ok(()),
        c => Err(Error::TooLarge(format!(
            "n = {n} with alphabet {} has {} outcomes (cap {max_outcomes})",
            spec.alphabet(),
            c.map_or("> u128::MAX".to_string(), |c| c.to_string()),
        ))),
    }
}

fn step_buckets(spec: &WeightSpec, n: usize) -> Result<Vec<usize>> {
    (2..=n).map(|m| spec.bucket_index(m as f64 / n as f64)).collect()
}

/// Streams every outcome of the base dynamics through a visitor.
pub fn for_each_outcome<F: FnMut(&EventLog, &BigRational)>(
    spec: &WeightSpec,
    mu: &[f64],
    n: usize,
    max_outcomes: u64,
    visit: F,
) -> Result<()> {
    check_budget(spec, n, max_outcomes)?;
    crate::generator::validate_color_law(mu, spec.alphabet())?;
    let dynamics = ExactDynamics::base(spec, mu, n)?;
    Enumerator {
        spec,
        dynamics,
        n,
        visit,
        colors: Vec::with_capacity(n),
        events: Vec::with_capacity(n - 1),
        indeg: vec![0; n],
        step_buckets: step_buckets(spec, n)?,
    }
    .run();
    Ok(())
}

/// All outcomes of the base dynamics with their exact probabilities.
pub fn enumerate(
    spec: &WeightSpec,
    mu: &[f64],
    n: usize,
    max_outcomes: u64,
) -> Result<Vec<(EventLog, BigRational)>> {
    let mut out = Vec::new();
    for_each_outcome(spec, mu, n, max_outcomes, |log, p| out.push((log.clone(), p.clone())))?;
    Ok(out)
}

/// All outcomes of the tilted dynamics with their exact probabilities. The
/// tilted weights and colour law are the bit-exact rational values of the
/// f64 numbers the tilted sampler uses, with the colour law normalized.
pub fn enumerate_tilted(
    spec: &WeightSpec,
    mu: &[f64],
    tilt: &Tilt,
    n: usize,
    max_outcomes: u64,
) -> Result<Vec<(EventLog, BigRational)>> {
    check_budget(spec, n, max_outcomes)?;
    crate::generator::validate_color_law(mu, spec.alphabet())?;
    tilt.check_shape(spec)?;
    let dynamics = ExactDynamics::tilted(spec, tilt, mu, n)?;
    let mut out = Vec::new();
    Enumerator {
        spec,
        dynamics,
        n,
        visit: |log: &EventLog, p: &BigRational| out.push((log.clone(), p.clone())),
        colors: Vec::with_capacity(n),
        events: Vec::with_capacity(n - 1),
        indeg: vec![0; n],
        step_buckets: step_buckets(spec, n)?,
    }
    .run();
    Ok(out)
}

/// The exact Radon–Nikodym derivative `dP̃/dP` of one history: the product
/// of colour factors, weight factors, and inverse normalizer factors, over
/// the same rationalized tables the enumerators use. Satisfies
/// `P̃(x) = P(x) · rn_derivative(x)` outcome by outcome, exactly.
pub fn rn_derivative(
    log: &EventLog,
    tilt: &Tilt,
    spec: &WeightSpec,
    mu: &[f64],
) -> Result<BigRational> {
    if log.alphabet() != spec.alphabet() {
        return Err(Error::Structure("log and spec alphabets differ".into()));
    }
    crate::generator::validate_color_law(mu, spec.alphabet())?;
    tilt.check_shape(spec)?;
    let n = log.n();
    let base = ExactDynamics::base(spec, mu, n)?;
    let tilted = ExactDynamics::tilted(spec, tilt, mu, n)?;
    let buckets = step_buckets(spec, n)?;

    let mut rn = BigRational::one();
    for v in 1..=n {
        let c = log.color(v);
        rn *= &tilted.mu[c] / &base.mu[c];
    }
    let mut indeg = vec![0u32; n];
    for (i, row) in log.rows().enumerate() {
        let bucket = buckets[i];
        let pair = spec.pair_index(row.parent_color, row.child_color);
        rn *= &tilted.weights[bucket][pair][row.parent_indeg]
            / &base.weights[bucket][pair][row.parent_indeg];
        let mut norm_base = BigRational::zero();
        let mut norm_tilted = BigRational::zero();
        for v in 1..row.m {
            let p = spec.pair_index(log.color(v), row.child_color);
            let k = indeg[v - 1] as usize;
            norm_base += &base.weights[bucket][p][k];
            norm_tilted += &tilted.weights[bucket][p][k];
        }
        if norm_tilted.is_zero() {
            return Err(Error::Domain(format!("tilted normalizer vanishes at step {}", row.m)));
        }
        rn *= norm_base / norm_tilted;
        indeg[row.parent - 1] += 1;
    }
    Ok(rn)
}

/// Pushforward of an enumerated law through a statistic with exact-equality
/// grouping.
pub fn exact_law<K: Ord, F: Fn(&EventLog) -> K>(
    outcomes: &[(EventLog, BigRational)],
    statistic: F,
) -> BTreeMap<K, BigRational> {
    let mut law: BTreeMap<K, BigRational> = BTreeMap::new();
    for (log, p) in outcomes {
        *law.entry(statistic(log)).or_insert_with(BigRational::zero) += p;
    }
    law
}

/// Exact-equality key for the attachment measure: sorted
/// `((k, a1, a2), hits)` rows. Two logs share the key iff their attachment
/// measures are identical as rational vectors.
pub fn attachment_key(log: &EventLog) -> Vec<((usize, usize, usize), u64)> {
    let counts = crate::empirics::attachment_counts(log);
    let s = counts.alphabet;
    let mut key = Vec::new();
    for k in 0..=counts.k_max {
        for a1 in 0..s {
            for a2 in 0..s {
                let c = counts.count(k, a1 * s + a2);
                if c > 0 {
                    key.push(((k, a1, a2), c));
                }
            }
        }
    }
    key
}

/// Exact probability of a threshold event under the base dynamics,
/// streaming so large enumerations need no outcome storage.
pub fn exact_event_probability(
    spec: &WeightSpec,
    mu: &[f64],
    n: usize,
    event: &Predicate,
    statistic: EventStatistic,
    max_outcomes: u64,
) -> Result<BigRational> {
    let mut total = BigRational::zero();
    for_each_outcome(spec, mu, n, max_outcomes, |log, p| {
        if event.eval_log(log, statistic) {
            total += p;
        }
    })?;
    Ok(total)
}

/// Convenience: exact rational from an integer pair, for test expectations.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::generate_stream;
    use num_traits::Signed;

    fn plain() -> WeightSpec {
        WeightSpec::plain(1.0, 1.0).unwrap()
    }

    #[test]
    fn n2_single_outcome() {
        let outcomes = enumerate(&plain(), &[1.0], 2, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(outcomes.len(), 1);
        assert_eq!(outcomes[0].1, BigRational::one());
    }

    #[test]
    fn n3_two_outcomes() {
        let outcomes = enumerate(&plain(), &[1.0], 3, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(outcomes.len(), 2);
        let law = exact_law(&outcomes, |log| log.events()[1].parent);
        assert_eq!(law[&1], ratio(2, 3));
        assert_eq!(law[&2], ratio(1, 3));
    }

    #[test]
    fn n4_attachment_law() {
        let outcomes = enumerate(&plain(), &[1.0], 4, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(outcomes.len(), 6);
        let total: BigRational = outcomes.iter().map(|(_, p)| p.clone()).sum();
        assert_eq!(total, BigRational::one());
        let law = exact_law(&outcomes, attachment_key);
        // {(⅓,⅓,⅓): 2/5, (⅔,⅓): 8/15, δ₀: 1/15} via hit counts out of 3.
        let uniform = vec![((0, 0, 0), 1), ((1, 0, 0), 1), ((2, 0, 0), 1)];
        let two_one = vec![((0, 0, 0), 2), ((1, 0, 0), 1)];
        let delta0 = vec![((0, 0, 0), 3)];
        assert_eq!(law[&uniform], ratio(2, 5));
        assert_eq!(law[&two_one], ratio(8, 15));
        assert_eq!(law[&delta0], ratio(1, 15));
        assert_eq!(law.len(), 3);
    }

    #[test]
    fn mass_sums_to_one_colored() {
        let spec = WeightSpec::constant(2, vec![1.0, 1.5, 0.5, 1.0], vec![1.0, 0.5, 1.5, 1.0]).unwrap();
        let outcomes = enumerate(&spec, &[0.5, 0.5], 5, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(outcomes.len(), 2usize.pow(5) * 24);
        let total: BigRational = outcomes.iter().map(|(_, p)| p.clone()).sum();
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn budget_refusal_reports_count() {
        let spec = WeightSpec::constant(2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        let err = enumerate(&spec, &[0.5, 0.5], 8, DEFAULT_MAX_OUTCOMES);
        match err {
            Err(Error::TooLarge(msg)) => assert!(msg.contains("1290240"), "{msg}"),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn event_probability_examples() {
        let spec = plain();
        let event = Predicate::parse("M(0)>=0.99").unwrap();
        let p3 = exact_event_probability(&spec, &[1.0], 3, &event, EventStatistic::AttachmentMeasure, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(p3, ratio(1, 3));
        let p4 = exact_event_probability(&spec, &[1.0], 4, &event, EventStatistic::AttachmentMeasure, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(p4, ratio(1, 15));
        let taut = Predicate::parse("M(0)>=0.0").unwrap();
        assert_eq!(
            exact_event_probability(&spec, &[1.0], 4, &taut, EventStatistic::AttachmentMeasure, DEFAULT_MAX_OUTCOMES).unwrap(),
            BigRational::one()
        );
        let contra = Predicate::parse("M(0)>=2.0").unwrap();
        assert!(exact_event_probability(&spec, &[1.0], 4, &contra, EventStatistic::AttachmentMeasure, DEFAULT_MAX_OUTCOMES)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn tilted_law_equals_base_reweighted_exactly() {
        let spec = WeightSpec::constant(2, vec![1.0, 1.5, 0.5, 1.0], vec![1.0, 0.5, 1.5, 1.0]).unwrap();
        let mu = [0.5, 0.5];
        // An arbitrary non-identity tilt.
        let s2 = 4;
        let k_g = 3;
        let mut g = vec![0.0; (k_g + 1) * s2];
        for (i, v) in g.iter_mut().enumerate() {
            *v = 0.3 * (i as f64 % 5.0) - 0.4;
        }
        let tilt = Tilt::new(vec![0.2, -0.1], vec![g], k_g, 0.0).unwrap();
        let base = enumerate(&spec, &mu, 4, DEFAULT_MAX_OUTCOMES).unwrap();
        let tilted = enumerate_tilted(&spec, &mu, &tilt, 4, DEFAULT_MAX_OUTCOMES).unwrap();
        assert_eq!(base.len(), tilted.len());
        for ((log_b, p_b), (log_t, p_t)) in base.iter().zip(&tilted) {
            assert_eq!(log_b.colors(), log_t.colors());
            assert_eq!(log_b.events(), log_t.events());
            let rn = rn_derivative(log_b, &tilt, &spec, &mu).unwrap();
            assert_eq!(p_t, &(p_b * rn), "outcome-by-outcome rational identity");
        }
    }

    #[test]
    fn identity_tilt_enumeration_is_base_law() {
        let spec = plain();
        let tilt = Tilt::identity(&spec, 8);
        let base = enumerate(&spec, &[1.0], 5, DEFAULT_MAX_OUTCOMES).unwrap();
        let tilted = enumerate_tilted(&spec, &[1.0], &tilt, 5, DEFAULT_MAX_OUTCOMES).unwrap();
        for ((_, p_b), (_, p_t)) in base.iter().zip(&tilted) {
            assert_eq!(p_b, p_t);
        }
    }

    #[test]
    fn llr_matches_exact_log_ratio() {
        // f64 replay LLR vs exact rational log-ratio, well under 1e-10.
        let spec = plain();
        let tilt = Tilt::new(
            vec![0.0],
            vec![(0..=4).map(|k| 0.2 * k as f64 - 0.3).collect()],
            4,
            0.0,
        )
        .unwrap();
        let outcomes = enumerate(&spec, &[1.0], 5, DEFAULT_MAX_OUTCOMES).unwrap();
        for (log, _) in &outcomes {
            let rn = rn_derivative(log, &tilt, &spec, &[1.0]).unwrap();
            let exact_log = rational_to_f64(&rn).ln();
            let llr =
                crate::rare_events::log_likelihood_ratio(log, &tilt, &spec, &[1.0]).unwrap();
            assert!((llr - exact_log).abs() <= 1e-10, "llr {llr} vs {exact_log}");
        }
    }

    #[test]
    fn generator_frequencies_match_enumeration() {
        // χ² over all 6 outcomes at n = 4 with 30k runs; the 0.999 quantile
        // of χ²(5) is ≈ 20.5.
        let spec = plain();
        let outcomes = enumerate(&spec, &[1.0], 4, DEFAULT_MAX_OUTCOMES).unwrap();
        let mut freq = vec![0u32; outcomes.len()];
        let reps = 30_000;
        for r in 0..reps {
            let log = generate_stream(&spec, &[1.0], 4, 123, r as u64).unwrap();
            let idx = outcomes
                .iter()
                .position(|(o, _)| o.events() == log.events())
                .expect("every generated log is an enumerated outcome");
            freq[idx] += 1;
        }
        let chi2: f64 = outcomes
            .iter()
            .zip(&freq)
            .map(|((_, p), &f)| {
                let expect = rational_to_f64(p) * reps as f64;
                (f as f64 - expect).powi(2) / expect
            })
            .sum();
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }

    #[test]
    fn rn_is_positive_rational() {
        let spec = plain();
        let tilt = Tilt::new(vec![0.0], vec![vec![0.25; 6]], 5, 0.0).unwrap();
        let outcomes = enumerate(&spec, &[1.0], 4, DEFAULT_MAX_OUTCOMES).unwrap();
        let mut total = BigRational::zero();
        for (log, p) in &outcomes {
            let rn = rn_derivative(log, &tilt, &spec, &[1.0]).unwrap();
            assert!(rn.is_positive());
            total += p * rn;
        }
        // Σ P·(dP̃/dP) = 1 exactly.
        assert_eq!(total, BigRational::one());
    }
}
