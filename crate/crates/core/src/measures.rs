//! Truncated probability measures on the nonnegative integers and on
//! degree × colour-pair products, with the entropy and metric machinery
//! every rate functional is built from.
//!
//! All measures are finitely truncated at an explicit `k_max` and carry the
//! mass beyond the truncation as a single aggregated `tail` coordinate. The
//! tail participates in relative entropy and total variation as one extra
//! coordinate; this keeps the infinite-support formulas finite and auditable.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MASS_TOL};

/// Formats a float with 17 significant digits, enough for the decimal string
/// to round-trip bit-exactly through `str::parse::<f64>()`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

/// A probability measure on `{0, 1, ..., k_max}` plus explicit tail mass
/// beyond `k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeMeasure {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl DegreeMeasure {
    /// Validates entries and total mass (`1 ± 1e-12` including the tail).
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("degree measure needs at least one entry".into()));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Validation(format!("negative or non-finite mass {p} at degree {k}")));
            }
        }
        if !(tail_mass >= 0.0) || !tail_mass.is_finite() {
            return Err(Error::Validation(format!("negative or non-finite tail mass {tail_mass}")));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Validation(format!("total mass {total} is not 1 within {MASS_TOL:e}")));
        }
        Ok(Self { probs, tail_mass })
    }

    /// Point mass at `k`, truncated at `k_max >= k`.
    pub fn delta(k: usize, k_max: usize) -> Self {
        let mut probs = vec![0.0; k_max + 1];
        probs[k] = 1.0;
        Self { probs, tail_mass: 0.0 }
    }

    /// Empirical measure `counts[k] / denom` with zero tail. The counts must
    /// sum to `denom` exactly.
    pub fn from_counts(counts: &[u64], denom: u64) -> Result<Self> {
        if denom == 0 || counts.is_empty() {
            return Err(Error::Validation("empty count vector".into()));
        }
        let total: u64 = counts.iter().sum();
        if total != denom {
            return Err(Error::Validation(format!("counts sum to {total}, expected {denom}")));
        }
        let probs = counts.iter().map(|&c| c as f64 / denom as f64).collect();
        Self::new(probs, 0.0)
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mean degree `Σ k·p(k)` over the truncated support (the tail is
    /// excluded; callers needing a bound add `tail_mass · k_max`).
    pub fn truncated_mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    /// Same measure zero-padded out to a larger `k_max`; the tail mass is
    /// unchanged.
    pub fn extended(&self, k_max: usize) -> Self {
        let mut probs = self.probs.clone();
        probs.resize(k_max.max(self.k_max()) + 1, 0.0);
        Self { probs, tail_mass: self.tail_mass }
    }

    /// Writes the flat text table: one `index,value` row per atom plus a
    /// final `tail,value` row. Decimal strings carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,value")?;
        for (k, &p) in self.probs.iter().enumerate() {
            writeln!(w, "{k},{}", fmt_f64(p))?;
        }
        writeln!(w, "tail,{}", fmt_f64(self.tail_mass))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut probs: Vec<(usize, f64)> = Vec::new();
        let mut tail = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "k,value") {
                continue;
            }
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad row {line:?}")))?;
            if idx.trim() == "tail" {
                tail = Some(parse_f64(val)?);
            } else {
                let k: usize = idx
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad index {idx:?}")))?;
                probs.push((k, parse_f64(val)?));
            }
        }
        probs.sort_by_key(|&(k, _)| k);
        let k_max = probs.last().map(|&(k, _)| k).ok_or_else(|| Error::Parse("no atoms".into()))?;
        let mut dense = vec![0.0; k_max + 1];
        for (k, v) in probs {
            dense[k] = v;
        }
        Self::new(dense, tail.ok_or_else(|| Error::Parse("missing tail row".into()))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("degree measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            probs: Vec<f64>,
            tail_mass: f64,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("degree measure json: {e}")))?;
        Self::new(raw.probs, raw.tail_mass)
    }
}

/// A nonnegative (not necessarily normalized) reference measure on the same
/// index structure as a [`DegreeMeasure`]: entries for `0..=k_max` plus one
/// aggregated tail coordinate.
#[derive(Debug, Clone)]
pub struct Reference {
    values: Vec<f64>,
    tail: f64,
}

impl Reference {
    pub fn new(values: Vec<f64>, tail: f64) -> Result<Self> {
        for (k, &v) in values.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::Validation(format!("reference entry {v} at {k} is negative")));
            }
        }
        if !(tail >= 0.0) {
            return Err(Error::Validation(format!("reference tail {tail} is negative")));
        }
        Ok(Self { values, tail })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Total mass including the tail coordinate.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() + self.tail
    }
}

/// Relative entropy `H(p ‖ q) = Σ p(k) log(p(k)/q(k))` in nats, with the
/// conventions `0·log(0/x) = 0` and `p(k) > 0, q(k) = 0 ⇒ +∞`. Tail masses
/// are compared as a single aggregated coordinate. `q` may be unnormalized.
pub fn relative_entropy(p: &DegreeMeasure, q: &Reference) -> Result<f64> {
    if q.values.len() != p.probs.len() {
        return Err(Error::Structure(format!(
            "measure has {} entries, reference has {}",
            p.probs.len(),
            q.values.len()
        )));
    }
    let mut h = 0.0;
    for (&pk, &qk) in p.probs.iter().zip(&q.values) {
        if pk > 0.0 {
            if qk == 0.0 {
                return Ok(f64::INFINITY);
            }
            h += pk * (pk / qk).ln();
        }
    }
    if p.tail_mass > 0.0 {
        if q.tail == 0.0 {
            return Ok(f64::INFINITY);
        }
        h += p.tail_mass * (p.tail_mass / q.tail).ln();
    }
    Ok(h)
}

/// Relative entropy between two finite probability vectors (colour laws).
pub fn relative_entropy_discrete(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut h = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk > 0.0 {
            if qk == 0.0 {
                return f64::INFINITY;
            }
            h += pk * (pk / qk).ln();
        }
    }
    h
}

/// Total variation distance `½ Σ |p − q|`, tail masses included as one
/// coordinate. The two measures may have different truncations; the shorter
/// one is treated as zero beyond its support.
pub fn tv_distance(p: &DegreeMeasure, q: &DegreeMeasure) -> f64 {
    let len = p.probs.len().max(q.probs.len());
    let mut s = 0.0;
    for k in 0..len {
        s += (p.prob(k) - q.prob(k)).abs();
    }
    s += (p.tail_mass - q.tail_mass).abs();
    0.5 * s
}

/// Total variation between two finite probability vectors.
pub fn tv_discrete(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<f64>()
}

/// The tail sequence `ℓ̂(k) = 1 − Σ_{j≤k} ℓ(j)`, computed as a backward
/// suffix sum so that `ℓ̂(k_max)` equals the tail mass exactly and the
/// sequence is non-increasing and nonnegative by construction.
pub fn tail_sequence(p: &DegreeMeasure) -> Vec<f64> {
    let k_max = p.k_max();
    let mut hat = vec![0.0; k_max + 1];
    hat[k_max] = p.tail_mass;
    for k in (0..k_max).rev() {
        hat[k] = hat[k + 1] + p.probs[k + 1];
    }
    hat
}

/// A probability measure on degree × colour-pair atoms `(k, (a₁, a₂))` with
/// per-pair aggregated tail masses beyond the common truncation `k_max`.
///
/// Colour pairs are indexed `a = a₁·s + a₂` where `s` is the alphabet size,
/// `a₁` the parent colour and `a₂` the arriving vertex's colour.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMeasure {
    alphabet: usize,
    k_max: usize,
    /// Row-major `[k][pair]`.
    atoms: Vec<f64>,
    /// Per-pair tail mass.
    tails: Vec<f64>,
}

impl PairMeasure {
    pub fn new(alphabet: usize, k_max: usize, atoms: Vec<f64>, tails: Vec<f64>) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::Validation("empty colour alphabet".into()));
        }
        let s2 = alphabet * alphabet;
        if atoms.len() != (k_max + 1) * s2 || tails.len() != s2 {
            return Err(Error::Structure(format!(
                "expected {} atoms and {} tails, got {} and {}",
                (k_max + 1) * s2,
                s2,
                atoms.len(),
                tails.len()
            )));
        }
        for &v in atoms.iter().chain(&tails) {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("negative or non-finite atom {v}")));
            }
        }
        let total: f64 = atoms.iter().sum::<f64>() + tails.iter().sum::<f64>();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Validation(format!("total mass {total} is not 1 within {MASS_TOL:e}")));
        }
        Ok(Self { alphabet, k_max, atoms, tails })
    }

    /// Builds from a sparse atom map; tails default to zero.
    pub fn from_atoms(alphabet: usize, entries: &[((usize, (usize, usize)), f64)]) -> Result<Self> {
        let k_max = entries.iter().map(|&((k, _), _)| k).max().unwrap_or(0);
        let s2 = alphabet * alphabet;
        let mut atoms = vec![0.0; (k_max + 1) * s2];
        for &((k, (a1, a2)), v) in entries {
            if a1 >= alphabet || a2 >= alphabet {
                return Err(Error::Structure(format!("colour pair ({a1},{a2}) outside alphabet {alphabet}")));
            }
            atoms[k * s2 + a1 * alphabet + a2] += v;
        }
        Self::new(alphabet, k_max, atoms, vec![0.0; s2])
    }

    /// Product measure `ω(k, a) = weights(a) · ell(k)`; each conditional is a
    /// copy of `ell` (tail included).
    pub fn product(ell: &DegreeMeasure, alphabet: usize, pair_weights: &[f64]) -> Result<Self> {
        let s2 = alphabet * alphabet;
        if pair_weights.len() != s2 {
            return Err(Error::Structure(format!("expected {s2} pair weights, got {}", pair_weights.len())));
        }
        let conds: Vec<&DegreeMeasure> = std::iter::repeat(ell).take(s2).collect();
        Self::from_conditionals(alphabet, pair_weights, &conds)
    }

    /// Builds `ω(k, a) = pair_weights(a) · conds[a](k)` from per-pair
    /// conditional degree laws.
    pub fn from_conditionals(
        alphabet: usize,
        pair_weights: &[f64],
        conds: &[&DegreeMeasure],
    ) -> Result<Self> {
        let s2 = alphabet * alphabet;
        if pair_weights.len() != s2 || conds.len() != s2 {
            return Err(Error::Structure("pair weight / conditional count mismatch".into()));
        }
        let k_max = conds.iter().map(|c| c.k_max()).max().unwrap_or(0);
        let mut atoms = vec![0.0; (k_max + 1) * s2];
        let mut tails = vec![0.0; s2];
        for (a, (&w, cond)) in pair_weights.iter().zip(conds).enumerate() {
            if !(w >= 0.0) {
                return Err(Error::Validation(format!("negative pair weight {w}")));
            }
            for k in 0..=cond.k_max() {
                atoms[k * s2 + a] = w * cond.prob(k);
            }
            tails[a] = w * cond.tail_mass();
        }
        Self::new(alphabet, k_max, atoms, tails)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn pair_count(&self) -> usize {
        self.alphabet * self.alphabet
    }

    pub fn atom(&self, k: usize, pair: usize) -> f64 {
        if k > self.k_max {
            0.0
        } else {
            self.atoms[k * self.pair_count() + pair]
        }
    }

    pub fn tail(&self, pair: usize) -> f64 {
        self.tails[pair]
    }

    /// Colour-pair marginal `ω₂(a) = Σ_k ω(k, a)` (tail included).
    pub fn pair_marginal(&self) -> Vec<f64> {
        let s2 = self.pair_count();
        let mut out = vec![0.0; s2];
        for k in 0..=self.k_max {
            for a in 0..s2 {
                out[a] += self.atoms[k * s2 + a];
            }
        }
        for a in 0..s2 {
            out[a] += self.tails[a];
        }
        out
    }

    /// The arriving vertex's colour marginal `ω_{2,1}(x) = Σ_{a: a₂ = x} ω₂(a)`.
    pub fn arrival_color_marginal(&self) -> Vec<f64> {
        let w2 = self.pair_marginal();
        let mut out = vec![0.0; self.alphabet];
        for a1 in 0..self.alphabet {
            for a2 in 0..self.alphabet {
                out[a2] += w2[a1 * self.alphabet + a2];
            }
        }
        out
    }

    /// Degree marginal as a [`DegreeMeasure`] (per-pair tails aggregate).
    pub fn degree_marginal(&self) -> DegreeMeasure {
        let s2 = self.pair_count();
        let probs: Vec<f64> =
            (0..=self.k_max).map(|k| (0..s2).map(|a| self.atoms[k * s2 + a]).sum()).collect();
        let tail = self.tails.iter().sum();
        DegreeMeasure { probs, tail_mass: tail }
    }

    /// Conditional degree law `ω(·|a)`. Requesting it on a zero-mass colour
    /// pair is an explicit error, not a silent zero.
    pub fn conditional(&self, pair: usize) -> Result<DegreeMeasure> {
        let s2 = self.pair_count();
        let mass: f64 =
            (0..=self.k_max).map(|k| self.atoms[k * s2 + pair]).sum::<f64>() + self.tails[pair];
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(pair / self.alphabet, pair % self.alphabet));
        }
        let probs = (0..=self.k_max).map(|k| self.atoms[k * s2 + pair] / mass).collect();
        DegreeMeasure::new(probs, self.tails[pair] / mass)
    }

    /// One `k,a1,a2,value` row per atom plus `tail,a1,a2,value` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,a1,a2,value")?;
        let s = self.alphabet;
        for k in 0..=self.k_max {
            for a1 in 0..s {
                for a2 in 0..s {
                    writeln!(w, "{k},{a1},{a2},{}", fmt_f64(self.atom(k, a1 * s + a2)))?;
                }
            }
        }
        for a1 in 0..s {
            for a2 in 0..s {
                writeln!(w, "tail,{a1},{a2},{}", fmt_f64(self.tails[a1 * s + a2]))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut atoms: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut tails: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "k,a1,a2,value") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse(format!("bad row {line:?}")));
            }
            let a1: usize =
                parts[1].trim().parse().map_err(|_| Error::Parse(format!("bad colour {:?}", parts[1])))?;
            let a2: usize =
                parts[2].trim().parse().map_err(|_| Error::Parse(format!("bad colour {:?}", parts[2])))?;
            let v = parse_f64(parts[3])?;
            if parts[0].trim() == "tail" {
                tails.insert((a1, a2), v);
            } else {
                let k: usize =
                    parts[0].trim().parse().map_err(|_| Error::Parse(format!("bad degree {:?}", parts[0])))?;
                atoms.insert((k, a1, a2), v);
            }
        }
        let alphabet = atoms
            .keys()
            .map(|&(_, a1, a2)| a1.max(a2))
            .chain(tails.keys().map(|&(a1, a2)| a1.max(a2)))
            .max()
            .ok_or_else(|| Error::Parse("no atoms".into()))?
            + 1;
        let k_max = atoms.keys().map(|&(k, _, _)| k).max().unwrap_or(0);
        let s2 = alphabet * alphabet;
        let mut dense = vec![0.0; (k_max + 1) * s2];
        for (&(k, a1, a2), &v) in &atoms {
            dense[k * s2 + a1 * alphabet + a2] = v;
        }
        let mut dense_tails = vec![0.0; s2];
        for (&(a1, a2), &v) in &tails {
            dense_tails[a1 * alphabet + a2] = v;
        }
        Self::new(alphabet, k_max, dense, dense_tails)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pair measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            alphabet: usize,
            k_max: usize,
            atoms: Vec<f64>,
            tails: Vec<f64>,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("pair measure json: {e}")))?;
        Self::new(raw.alphabet, raw.k_max, raw.atoms, raw.tails)
    }
}

/// One cell of a [`PathMeasure`]: per-colour-pair conditional degree laws and
/// colour-pair weights, valid on the half-open time interval ending at the
/// cell's right grid point.
///
/// A conditional may be absent when the underlying colour class held no
/// vertices at that time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathCell {
    pub pair_weights: Vec<f64>,
    pub conditionals: Vec<Option<DegreeMeasure>>,
}

/// A time-gridded family of per-colour-pair degree laws on `[0, 1]`: a
/// cadlag step path with grid `0 = t₀ < t₁ < … < t_G = 1` and one
/// [`PathCell`] per interval `(t_{i-1}, t_i]`, recorded at the right
/// endpoint. The terminal cell is the path's value at time 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMeasure {
    alphabet: usize,
    /// `G + 1` breakpoints starting at 0.0 and ending at 1.0 exactly.
    breaks: Vec<f64>,
    /// `G` cells, aligned with the intervals between consecutive breaks.
    cells: Vec<PathCell>,
}

impl PathMeasure {
    pub fn new(alphabet: usize, breaks: Vec<f64>, cells: Vec<PathCell>) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(Error::Validation("grid must run from 0.0 to exactly 1.0".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("grid points must be strictly increasing".into()));
        }
        if cells.len() != breaks.len() - 1 {
            return Err(Error::Structure(format!(
                "{} cells for {} intervals",
                cells.len(),
                breaks.len() - 1
            )));
        }
        let s2 = alphabet * alphabet;
        for cell in &cells {
            if cell.pair_weights.len() != s2 || cell.conditionals.len() != s2 {
                return Err(Error::Structure("cell arity does not match alphabet".into()));
            }
        }
        Ok(Self { alphabet, breaks, cells })
    }

    /// Constant-in-time path with a single cell on `(0, 1]`.
    pub fn constant(alphabet: usize, cell: PathCell) -> Result<Self> {
        Self::new(alphabet, vec![0.0, 1.0], vec![cell])
    }

    /// Path from `(right_endpoint, cell)` pairs; the last endpoint must be 1.
    pub fn piecewise(alphabet: usize, segments: Vec<(f64, PathCell)>) -> Result<Self> {
        let mut breaks = vec![0.0];
        let mut cells = Vec::new();
        for (t, cell) in segments {
            breaks.push(t);
            cells.push(cell);
        }
        Self::new(alphabet, breaks, cells)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn cells(&self) -> &[PathCell] {
        &self.cells
    }

    /// The cell covering time `t ∈ (0, 1]`.
    pub fn cell_at(&self, t: f64) -> Result<&PathCell> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("time {t} outside (0, 1]")));
        }
        let idx = self.breaks[1..].partition_point(|&b| b < t);
        Ok(&self.cells[idx])
    }

    /// The value at time 1 (`ν₁`).
    pub fn terminal(&self) -> &PathCell {
        self.cells.last().expect("at least one cell")
    }

    /// One `t,a1,a2,k,value` row per conditional atom (`k` may be `tail`),
    /// plus `t,a1,a2,weight,value` rows for the pair weights.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,a1,a2,k,value")?;
        let s = self.alphabet;
        for (cell, &t) in self.cells.iter().zip(&self.breaks[1..]) {
            let t_str = fmt_f64(t);
            for a1 in 0..s {
                for a2 in 0..s {
                    let pair = a1 * s + a2;
                    writeln!(w, "{t_str},{a1},{a2},weight,{}", fmt_f64(cell.pair_weights[pair]))?;
                    if let Some(cond) = &cell.conditionals[pair] {
                        for k in 0..=cond.k_max() {
                            writeln!(w, "{t_str},{a1},{a2},{k},{}", fmt_f64(cond.prob(k)))?;
                        }
                        writeln!(w, "{t_str},{a1},{a2},tail,{}", fmt_f64(cond.tail_mass()))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct RawCond {
            probs: Vec<f64>,
            tail_mass: f64,
        }
        #[derive(Deserialize)]
        struct RawCell {
            pair_weights: Vec<f64>,
            conditionals: Vec<Option<RawCond>>,
        }
        #[derive(Deserialize)]
        struct Raw {
            alphabet: usize,
            breaks: Vec<f64>,
            cells: Vec<RawCell>,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("path measure json: {e}")))?;
        let mut cells = Vec::with_capacity(raw.cells.len());
        for cell in raw.cells {
            let mut conds = Vec::with_capacity(cell.conditionals.len());
            for c in cell.conditionals {
                conds.push(match c {
                    Some(c) => Some(DegreeMeasure::new(c.probs, c.tail_mass)?),
                    None => None,
                });
            }
            cells.push(PathCell { pair_weights: cell.pair_weights, conditionals: conds });
        }
        Self::new(raw.alphabet, raw.breaks, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(probs: &[f64], tail: f64) -> DegreeMeasure {
        DegreeMeasure::new(probs.to_vec(), tail).unwrap()
    }

    #[test]
    fn entropy_of_measure_with_itself_is_zero() {
        let p = dm(&[0.25, 0.5, 0.125], 0.125);
        let q = Reference::new(p.probs().to_vec(), p.tail_mass()).unwrap();
        assert_eq!(relative_entropy(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn entropy_direct_formula() {
        // H((1/2,1/2) ‖ (2/3,1/3)) = 0.5·log(9/8)
        let p = dm(&[0.5, 0.5], 0.0);
        let q = Reference::new(vec![2.0 / 3.0, 1.0 / 3.0], 0.0).unwrap();
        let h = relative_entropy(&p, &q).unwrap();
        assert!((h - 0.5 * (9.0f64 / 8.0).ln()).abs() < 1e-15, "h = {h}");
        assert!((h - 0.058891).abs() < 1e-6);
    }

    #[test]
    fn entropy_support_violation_is_infinite() {
        let p = dm(&[1.0, 0.0], 0.0);
        let q = Reference::new(vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(relative_entropy(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn entropy_tail_against_zero_tail_reference_is_infinite() {
        let p = dm(&[0.5, 0.25], 0.25);
        let q = Reference::new(vec![0.5, 0.25], 0.0).unwrap();
        assert_eq!(relative_entropy(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn entropy_structural_mismatch() {
        let p = dm(&[0.5, 0.5], 0.0);
        let q = Reference::new(vec![1.0], 0.0).unwrap();
        assert!(matches!(relative_entropy(&p, &q), Err(Error::Structure(_))));
    }

    #[test]
    fn negative_reference_rejected() {
        assert!(Reference::new(vec![0.5, -0.1], 0.0).is_err());
    }

    #[test]
    fn tv_examples() {
        let d0 = DegreeMeasure::delta(0, 1);
        let d1 = DegreeMeasure::delta(1, 1);
        assert_eq!(tv_distance(&d0, &d1), 1.0);
        let p = dm(&[2.0 / 3.0, 1.0 / 3.0], 0.0);
        let q = dm(&[0.5, 0.5], 0.0);
        assert!((tv_distance(&p, &q) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(tv_distance(&p, &p), 0.0);
    }

    #[test]
    fn tail_of_delta_zero() {
        let hat = tail_sequence(&DegreeMeasure::delta(0, 0));
        assert_eq!(hat, vec![0.0]);
    }

    #[test]
    fn tail_of_geometric_is_itself() {
        // ℓ(k) = 2^{-(k+1)} has ℓ̂(k) = 2^{-(k+1)}.
        let k_max = 30;
        let probs: Vec<f64> = (0..=k_max).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
        let tail = 0.5f64.powi(k_max as i32 + 1);
        let p = dm(&probs, tail);
        let hat = tail_sequence(&p);
        for k in 0..=k_max {
            assert!((hat[k] - probs[k]).abs() < 1e-15, "k={k}");
        }
        assert_eq!(hat[k_max], tail);
    }

    #[test]
    fn tail_matches_limit_distribution_values() {
        // ℓ = (2/3, 1/6, 1/15, ...) has ℓ̂ = (1/3, 1/6, 1/10, ...).
        let probs = vec![2.0 / 3.0, 1.0 / 6.0, 1.0 / 15.0];
        let tail = 1.0 - probs.iter().sum::<f64>();
        let hat = tail_sequence(&dm(&probs, tail));
        assert!((hat[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((hat[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((hat[2] - 1.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn pair_measure_marginals_and_conditionals() {
        // Product measure: degree marginal and colour marginal split exactly.
        let ell = dm(&[0.5, 0.3, 0.1], 0.1);
        let weights = vec![0.25, 0.25, 0.25, 0.25];
        let omega = PairMeasure::product(&ell, 2, &weights).unwrap();
        let dm_out = omega.degree_marginal();
        for k in 0..=2 {
            assert!((dm_out.prob(k) - ell.prob(k)).abs() < 1e-15);
        }
        assert!((dm_out.tail_mass() - 0.1).abs() < 1e-15);
        let w2 = omega.pair_marginal();
        for &w in &w2 {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let w21 = omega.arrival_color_marginal();
        assert!((w21[0] - 0.5).abs() < 1e-15);
        let cond = omega.conditional(3).unwrap();
        assert!(tv_distance(&cond, &ell) < 1e-15);
    }

    #[test]
    fn single_color_conditional_is_degree_marginal() {
        let ell = dm(&[0.75, 0.25], 0.0);
        let omega = PairMeasure::product(&ell, 1, &[1.0]).unwrap();
        assert_eq!(omega.pair_marginal(), vec![1.0]);
        let cond = omega.conditional(0).unwrap();
        assert!(tv_distance(&cond, &ell) < 1e-15);
    }

    #[test]
    fn zero_mass_conditional_is_flagged() {
        let entries = vec![((0usize, (0usize, 0usize)), 1.0)];
        let omega = PairMeasure::from_atoms(2, &entries).unwrap();
        assert!(matches!(omega.conditional(3), Err(Error::UndefinedConditional(1, 1))));
    }

    #[test]
    fn degree_measure_csv_roundtrip_is_bit_exact() {
        let p = dm(&[1.0 / 3.0, 1.0 / 7.0, 1.0 - 1.0 / 3.0 - 1.0 / 7.0 - 0.05], 0.05);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = DegreeMeasure::read_csv(&buf[..]).unwrap();
        assert_eq!(p.probs(), back.probs());
        assert!(p.tail_mass() == back.tail_mass());
    }

    #[test]
    fn pair_measure_json_roundtrip() {
        let ell = dm(&[0.6, 0.3], 0.1);
        let omega = PairMeasure::product(&ell, 2, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let back = PairMeasure::from_json(&omega.to_json()).unwrap();
        assert_eq!(omega, back);
    }

    #[test]
    fn path_measure_lookup() {
        let p = dm(&[1.0], 0.0);
        let q = dm(&[0.5, 0.5], 0.0);
        let mk = |m: &DegreeMeasure| PathCell {
            pair_weights: vec![1.0],
            conditionals: vec![Some(m.clone())],
        };
        let path = PathMeasure::piecewise(1, vec![(0.5, mk(&p)), (1.0, mk(&q))]).unwrap();
        assert_eq!(path.cell_at(0.3).unwrap().conditionals[0], Some(p.clone()));
        assert_eq!(path.cell_at(0.5).unwrap().conditionals[0], Some(p));
        assert_eq!(path.cell_at(0.7).unwrap().conditionals[0], Some(q.clone()));
        assert_eq!(path.terminal().conditionals[0], Some(q));
        assert!(path.cell_at(0.0).is_err());
    }

    #[test]
    fn grid_must_reach_one() {
        let cell = PathCell { pair_weights: vec![1.0], conditionals: vec![None] };
        assert!(PathMeasure::new(1, vec![0.0, 0.9], vec![cell]).is_err());
    }
}
