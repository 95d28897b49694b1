//! Empirical measures extracted from an attachment history: the attachment
//! (degree, colour-pair) measure and time-gridded per-colour degree
//! snapshots.

use crate::generator::EventLog;
use crate::measures::{DegreeMeasure, PairMeasure, PathCell, PathMeasure};
use crate::{Error, Result};

/// Integer-count backing of the attachment measure: `counts[k·s² + pair]`
/// attachment events hit a parent of in-degree `k` under that colour pair.
/// The counts sum to `denom = n − 1` exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttachmentCounts {
    pub alphabet: usize,
    pub k_max: usize,
    pub counts: Vec<u64>,
    pub denom: u64,
}

impl AttachmentCounts {
    pub fn count(&self, k: usize, pair: usize) -> u64 {
        if k > self.k_max {
            0
        } else {
            self.counts[k * self.alphabet * self.alphabet + pair]
        }
    }

    /// Per-degree counts summed over colour pairs.
    pub fn degree_counts(&self) -> Vec<u64> {
        let s2 = self.alphabet * self.alphabet;
        (0..=self.k_max).map(|k| (0..s2).map(|a| self.counts[k * s2 + a]).sum()).collect()
    }

    pub fn to_measure(&self) -> PairMeasure {
        let probs = self.counts.iter().map(|&c| c as f64 / self.denom as f64).collect();
        let s2 = self.alphabet * self.alphabet;
        PairMeasure::new(self.alphabet, self.k_max, probs, vec![0.0; s2])
            .expect("attachment counts normalize")
    }
}

/// Exact integer counts of `M_X`: one hit per event at the parent's
/// in-degree at attachment time, keyed by (parent colour, arriving colour).
pub fn attachment_counts(log: &EventLog) -> AttachmentCounts {
    let s = log.alphabet();
    let s2 = s * s;
    let k_max = log.rows().map(|r| r.parent_indeg).max().unwrap_or(0);
    let mut counts = vec![0u64; (k_max + 1) * s2];
    for row in log.rows() {
        counts[row.parent_indeg * s2 + row.parent_color * s + row.child_color] += 1;
    }
    AttachmentCounts { alphabet: s, k_max, counts, denom: (log.n() - 1) as u64 }
}

/// The empirical attachment measure `M_X`: uniform weight `1/(n−1)` on each
/// event's `(parent in-degree, colour pair)`. For a single colour its degree
/// marginal is the empirical degree measure.
pub fn attachment_measure(log: &EventLog) -> PairMeasure {
    attachment_counts(log).to_measure()
}

/// The final-state in-degree histogram over all `n` vertices, colours
/// aggregated. This converges to the limit law `π_f`, unlike the attachment
/// measure, whose limit is the tail sequence of `π_f`.
pub fn final_histogram(log: &EventLog) -> DegreeMeasure {
    let degs = log.final_in_degrees();
    let k_max = degs.iter().max().copied().unwrap_or(0) as usize;
    let mut counts = vec![0u64; k_max + 1];
    for &d in &degs {
        counts[d as usize] += 1;
    }
    DegreeMeasure::from_counts(&counts, log.n() as u64).expect("histogram normalizes")
}

/// Per-colour in-degree histograms of the vertices `1..step-1`, i.e. the
/// population the arriving vertex `step` sees. `step = n + 1` gives the
/// final state (all `n` vertices, all `n − 1` edges).
pub fn class_histograms_before(log: &EventLog, step: usize) -> Result<Vec<Vec<u64>>> {
    let n = log.n();
    if !(2..=n + 1).contains(&step) {
        return Err(Error::Domain(format!("step {step} outside 2..={}", n + 1)));
    }
    let s = log.alphabet();
    let mut indeg = vec![0u32; n];
    for row in log.rows().take(step.saturating_sub(2)) {
        indeg[row.parent - 1] += 1;
    }
    let mut hists: Vec<Vec<u64>> = vec![Vec::new(); s];
    for v in 1..step.min(n + 1) {
        let c = log.color(v);
        let k = indeg[v - 1] as usize;
        if hists[c].len() <= k {
            hists[c].resize(k + 1, 0);
        }
        hists[c][k] += 1;
    }
    Ok(hists)
}

fn cell_from_histograms(hists: &[Vec<u64>], vertices: u64, alphabet: usize) -> PathCell {
    let s = alphabet;
    let mut pair_weights = vec![0.0; s * s];
    let mut conditionals: Vec<Option<DegreeMeasure>> = vec![None; s * s];
    for a1 in 0..s {
        let class_total: u64 = hists[a1].iter().sum();
        let cond = if class_total > 0 {
            Some(DegreeMeasure::from_counts(&hists[a1], class_total).expect("histogram normalizes"))
        } else {
            None
        };
        for a2 in 0..s {
            let pair = a1 * s + a2;
            pair_weights[pair] = class_total as f64 / vertices as f64 / s as f64;
            conditionals[pair] = cond.clone();
        }
    }
    PathCell { pair_weights, conditionals }
}

/// Time-gridded snapshots of the per-colour degree histograms.
///
/// Each grid time `t < 1` maps to step `m = ⌈tn⌉` and records the state the
/// arriving vertex `m` sees: the normalized in-degree histogram of the
/// vertices `1..m-1` with colour `a₁`, exposed as the conditional for every
/// pair `(a₁, ·)`. The `t = 1` snapshot is the final-state histogram over
/// all `n` vertices. Grid points must be strictly increasing, at least
/// `2/n`, and end at exactly 1.
pub fn snapshot_path(log: &EventLog, grid: &[f64]) -> Result<PathMeasure> {
    let n = log.n();
    if grid.is_empty() || *grid.last().unwrap() != 1.0 {
        return Err(Error::Domain("snapshot grid must end at exactly 1.0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("snapshot grid must be strictly increasing".into()));
    }
    let mut steps = Vec::with_capacity(grid.len());
    for &t in grid {
        let step = if t >= 1.0 {
            n + 1
        } else {
            let m = (t * n as f64 - 1e-9).ceil() as usize;
            if m < 2 {
                return Err(Error::Domain(format!("grid point {t} is before 2/n")));
            }
            m
        };
        steps.push(step);
    }
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid points collapse onto equal steps".into()));
    }

    let s = log.alphabet();
    let mut cells = Vec::with_capacity(steps.len());
    for &step in &steps {
        let hists = class_histograms_before(log, step)?;
        cells.push(cell_from_histograms(&hists, (step - 1) as u64, s));
    }
    let mut breaks = vec![0.0];
    breaks.extend_from_slice(grid);
    PathMeasure::new(s, breaks, cells)
}

/// Uniform snapshot grid `i/points` for `i = 1..=points`, clipped below at
/// `2/n`.
pub fn uniform_grid(n: usize, points: usize) -> Vec<f64> {
    let lo = 2.0 / n as f64;
    let mut grid: Vec<f64> =
        (1..=points).map(|i| i as f64 / points as f64).filter(|&t| t >= lo).collect();
    if grid.is_empty() || *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_stream, Event, EventLog};
    use crate::weights::WeightSpec;

    fn star4() -> EventLog {
        // Events 2→1, 3→1, 4→1.
        EventLog::from_parts(
            1,
            vec![0; 4],
            vec![
                Event { parent: 1, parent_indeg: 0 },
                Event { parent: 1, parent_indeg: 1 },
                Event { parent: 1, parent_indeg: 2 },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn attachment_measure_examples() {
        // Events 2→1 (deg 0), 3→1 (deg 1): M = ½δ₀ + ½δ₁.
        let log = EventLog::from_parts(
            1,
            vec![0; 3],
            vec![Event { parent: 1, parent_indeg: 0 }, Event { parent: 1, parent_indeg: 1 }],
            None,
        )
        .unwrap();
        let m = attachment_measure(&log).degree_marginal();
        assert_eq!(m.probs(), &[0.5, 0.5]);

        // Events 2→1, 3→2: both parents fresh, M = δ₀.
        let log2 = EventLog::from_parts(
            1,
            vec![0; 3],
            vec![Event { parent: 1, parent_indeg: 0 }, Event { parent: 2, parent_indeg: 0 }],
            None,
        )
        .unwrap();
        assert_eq!(attachment_measure(&log2).degree_marginal().probs(), &[1.0]);

        // n = 2: the single event hits the degree-0 root.
        let log3 =
            EventLog::from_parts(1, vec![0; 2], vec![Event { parent: 1, parent_indeg: 0 }], None)
                .unwrap();
        assert_eq!(attachment_measure(&log3).degree_marginal().probs(), &[1.0]);
    }

    #[test]
    fn attachment_counts_sum_exactly() {
        let spec = WeightSpec::plain(1.0, 1.0).unwrap();
        let log = generate_stream(&spec, &[1.0], 500, 3, 0).unwrap();
        let counts = attachment_counts(&log);
        assert_eq!(counts.counts.iter().sum::<u64>(), 499);
    }

    #[test]
    fn degree_marginal_counts_vertices_by_threshold() {
        // (n−1)·M(j) counts vertices with final in-degree ≥ j+1, exactly.
        let spec = WeightSpec::plain(1.0, 1.0).unwrap();
        for seed in 0..20 {
            let log = generate_stream(&spec, &[1.0], 120, seed, 0).unwrap();
            let counts = attachment_counts(&log).degree_counts();
            let degs = log.final_in_degrees();
            for (j, &cnt) in counts.iter().enumerate() {
                let vertices = degs.iter().filter(|&&d| d as usize >= j + 1).count() as u64;
                assert_eq!(cnt, vertices, "seed {seed}, j {j}");
            }
            // Monotone feasibility.
            for w in counts.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn snapshot_root_only() {
        let log = star4();
        let hists = class_histograms_before(&log, 2).unwrap();
        assert_eq!(hists[0], vec![1]);
    }

    #[test]
    fn snapshot_before_last_vertex() {
        // State vertex 4 sees: root has degree 2, vertices 2 and 3 have 0.
        let log = star4();
        let hists = class_histograms_before(&log, 4).unwrap();
        assert_eq!(hists[0], vec![2, 0, 1]);
    }

    #[test]
    fn snapshot_mean_identity() {
        // Σ k·hist(k) = m − 2 exactly: the tree on m−1 vertices has m−2 edges.
        let spec = WeightSpec::plain(1.0, 1.0).unwrap();
        let log = generate_stream(&spec, &[1.0], 200, 9, 0).unwrap();
        for step in 2..=201 {
            let hists = class_histograms_before(&log, step).unwrap();
            let edge_sum: u64 =
                hists.iter().flat_map(|h| h.iter().enumerate().map(|(k, &c)| k as u64 * c)).sum();
            assert_eq!(edge_sum, step as u64 - 2);
        }
    }

    #[test]
    fn snapshot_path_terminal_is_final_state() {
        let log = star4();
        let path = snapshot_path(&log, &[0.5, 0.75, 1.0]).unwrap();
        // t = 1: all four vertices, degrees (3,0,0,0) → (3/4, 0, 0, 1/4).
        let terminal = path.terminal().conditionals[0].as_ref().unwrap();
        assert_eq!(terminal.probs(), &[0.75, 0.0, 0.0, 0.25]);
        // t = 0.5 → step 2: root only.
        let first = path.cells()[0].conditionals[0].as_ref().unwrap();
        assert_eq!(first.probs(), &[1.0]);
        // t = 0.75 → step 3: vertices {1, 2}, degrees (1, 0).
        let mid = path.cells()[1].conditionals[0].as_ref().unwrap();
        assert_eq!(mid.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn snapshot_path_rejects_early_grid() {
        let log = star4();
        assert!(snapshot_path(&log, &[0.1, 1.0]).is_err());
        assert!(snapshot_path(&log, &[0.5, 0.9]).is_err());
    }

    #[test]
    fn per_color_classes_split() {
        let spec = WeightSpec::constant(2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        let log = generate_stream(&spec, &[0.5, 0.5], 100, 21, 0).unwrap();
        let hists = class_histograms_before(&log, 101).unwrap();
        let total: u64 = hists.iter().flatten().sum();
        assert_eq!(total, 100);
        let path = snapshot_path(&log, &[1.0]).unwrap();
        let cell = path.terminal();
        // Pair weights sum to 1 over all pairs.
        let w: f64 = cell.pair_weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
    }
}
