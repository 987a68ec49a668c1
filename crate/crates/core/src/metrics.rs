//! Segmentation quality: boundary F1 with a tolerance and the Adjusted Rand
//! Index between per-window labelings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::detect::Segmentation;
use crate::error::{Error, Result};

/// One nonnegative label per window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub labels: Vec<usize>,
}

/// Sorted unique boundary indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundarySet {
    indices: Vec<usize>,
}

impl BoundarySet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy one-to-one matching: truth boundaries in ascending order each take
/// the nearest unmatched prediction within `±tolerance` (lower index on ties).
pub fn boundary_f1(predicted: &BoundarySet, truth: &BoundarySet, tolerance: usize) -> BoundaryScore {
    if predicted.is_empty() && truth.is_empty() {
        return BoundaryScore {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let mut used = vec![false; predicted.len()];
    let mut matches = 0usize;
    for &t in truth.indices() {
        let best = predicted
            .indices()
            .iter()
            .enumerate()
            .filter(|&(i, &p)| !used[i] && p.abs_diff(t) <= tolerance)
            .min_by_key(|&(_, &p)| (p.abs_diff(t), p));
        if let Some((i, _)) = best {
            used[i] = true;
            matches += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(matches, predicted.len());
    let recall = ratio(matches, truth.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    BoundaryScore {
        precision,
        recall,
        f1,
    }
}

/// Window `i` gets the index of the segment that contains it.
pub fn segment_labels(seg: &Segmentation, n: usize) -> LabelSequence {
    let mut labels = Vec::with_capacity(n);
    let mut current = 0;
    let mut cuts = seg.boundaries.iter().peekable();
    for i in 0..n {
        labels.push(current);
        if cuts.next_if_eq(&&i).is_some() {
            current += 1;
        }
    }
    LabelSequence { labels }
}

fn pairs(count: u64) -> i128 {
    let c = count as i128;
    c * (c - 1) / 2
}

/// Pair-counting ARI from the contingency table. Returns 1.0 when the
/// maximum index equals its expectation (e.g. both labelings trivial).
pub fn adjusted_rand_index(a: &LabelSequence, b: &LabelSequence) -> Result<f64> {
    if a.labels.len() != b.labels.len() {
        return Err(Error::LengthMismatch {
            left: a.labels.len(),
            right: b.labels.len(),
        });
    }
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: i128 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: i128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.labels.len() as u64);

    // scaled by 2·total to stay in integers:
    // (index − a·b/total) / ((a + b)/2 − a·b/total)
    let numerator = 2 * total * index - 2 * sum_a * sum_b;
    let denominator = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if denominator == 0 {
        return Ok(1.0);
    }
    Ok(numerator as f64 / denominator as f64)
}

/// Nearest window cut for a time index, using the same midpoint convention as
/// [`crate::detect::map_to_time`]. Ties go to the earlier cut.
pub fn time_to_window_boundary(time: usize, window_starts: &[usize], window_len: usize) -> Option<usize> {
    (0..window_starts.len().saturating_sub(1)).min_by_key(|&j| {
        let cut = (window_starts[j] + window_len + window_starts[j + 1]) / 2;
        (cut.abs_diff(time), j)
    })
}

/// Ground-truth cuts in window coordinates (deduplicated).
pub fn truth_window_boundaries(time_boundaries: &[usize], window_starts: &[usize], window_len: usize) -> BoundarySet {
    BoundarySet::new(
        time_boundaries
            .iter()
            .filter_map(|&t| time_to_window_boundary(t, window_starts, window_len))
            .collect(),
    )
}

/// Label of each window, read at the window's centre time step.
pub fn window_labels(time_labels: &[usize], window_starts: &[usize], window_len: usize) -> LabelSequence {
    LabelSequence {
        labels: window_starts
            .iter()
            .map(|&s| time_labels[(s + window_len / 2).min(time_labels.len() - 1)])
            .collect(),
    }
}
