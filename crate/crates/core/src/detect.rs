//! Boundary scores from the self-expression matrix and peak picking.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::selfexpr::{DifferenceMatrix, SelfExprMatrix};

/// `y[j]` scores the transition between window `j` and `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryScores {
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Minimum index gap between retained peaks.
    pub min_distance: usize,
    /// Peaks must exceed `mean(y) + threshold_k · std(y)`.
    pub threshold_k: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            min_distance: 2,
            threshold_k: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Cut after window `j`, strictly increasing, each in `[0, n − 2]`.
    pub boundaries: Vec<usize>,
    /// Inclusive `[start, end]` window ranges tiling `[0, n − 1]`.
    pub segments: Vec<[usize; 2]>,
    /// Boundaries in original time steps; empty until [`map_to_time`].
    pub time_boundaries: Vec<usize>,
}

impl Segmentation {
    /// Build from sorted unique cut indices over `n` windows.
    pub fn from_boundaries(boundaries: Vec<usize>, n: usize) -> Self {
        debug_assert!(boundaries.windows(2).all(|p| p[0] < p[1]));
        debug_assert!(boundaries.iter().all(|&b| b + 1 < n));
        let mut segments = Vec::with_capacity(boundaries.len() + 1);
        let mut start = 0;
        for &b in &boundaries {
            segments.push([start, b]);
            start = b + 1;
        }
        if n > 0 {
            segments.push([start, n - 1]);
        }
        Self {
            boundaries,
            segments,
            time_boundaries: Vec::new(),
        }
    }

    pub fn window_count(&self) -> usize {
        self.segments.last().map_or(0, |s| s[1] + 1)
    }
}

/// Column means of `|Θ·R|`.
pub fn boundary_scores(theta: &SelfExprMatrix, r: &DifferenceMatrix) -> Result<BoundaryScores> {
    let diffs = r.apply(theta.theta().view())?;
    let rows = diffs.nrows() as f64;
    let y = diffs
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / rows)
        .collect();
    Ok(BoundaryScores { y })
}

fn mean_and_population_std(y: &[f64]) -> (f64, f64) {
    let len = y.len() as f64;
    let mean = y.iter().sum::<f64>() / len;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    (mean, var.sqrt())
}

/// Indices that are local maxima (strict on the left, non-strict on the
/// right) above `mean + k·std`, thinned greedily by descending score so that
/// kept peaks are at least `min_distance` apart. Ties prefer the lower index.
pub fn find_peaks(scores: &BoundaryScores, cfg: &PeakConfig) -> Segmentation {
    let y = &scores.y;
    let n_windows = y.len() + 1;
    if y.is_empty() {
        return Segmentation::from_boundaries(Vec::new(), n_windows);
    }
    let (mean, std) = mean_and_population_std(y);
    let threshold = mean + cfg.threshold_k * std;

    let mut candidates: Vec<usize> = (0..y.len())
        .filter(|&j| {
            let left = j == 0 || y[j] > y[j - 1];
            let right = j + 1 == y.len() || y[j] >= y[j + 1];
            left && right && y[j] > threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));

    let min_distance = cfg.min_distance.max(1);
    let mut kept: Vec<usize> = Vec::new();
    for j in candidates {
        if kept.iter().all(|&k| k.abs_diff(j) >= min_distance) {
            kept.push(j);
        }
    }
    kept.sort_unstable();
    Segmentation::from_boundaries(kept, n_windows)
}

/// Place each cut midway between the end of window `j` and the start of
/// window `j + 1` (rounded down).
pub fn map_to_time(seg: &Segmentation, window_starts: &[usize], window_len: usize) -> Segmentation {
    let time_boundaries = seg
        .boundaries
        .iter()
        .map(|&j| (window_starts[j] + window_len + window_starts[j + 1]) / 2)
        .collect();
    Segmentation {
        time_boundaries,
        ..seg.clone()
    }
}
