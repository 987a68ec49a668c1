//! Synthetic co-evolving series with planted concept regimes.
//!
//! Each concept owns a few sinusoids (frequency, phase) and a random
//! `d × sines` mixing matrix; inside a regime every channel is a fixed linear
//! mix of the concept's sinusoids plus Gaussian noise.

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SeriesMatrix;

/// Frequencies closer than this are redrawn.
const FREQ_COLLISION: f64 = 1e-6;
const MAX_FREQ_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_concepts: usize,
    pub num_segments: usize,
    /// Inclusive `[min, max]` regime length in time steps.
    pub segment_len_range: [usize; 2],
    pub d: usize,
    pub sines_per_concept: usize,
    /// Inclusive `[f_min, f_max]` in cycles per step.
    pub freq_range: [f64; 2],
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_concepts: 3,
            num_segments: 4,
            segment_len_range: [120, 160],
            d: 5,
            sines_per_concept: 2,
            freq_range: [0.02, 0.2],
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        let [len_min, len_max] = self.segment_len_range;
        let [f_min, f_max] = self.freq_range;
        if self.num_concepts < 2 {
            return bad("need at least 2 concepts");
        }
        if self.num_segments == 0 {
            return bad("need at least 1 segment");
        }
        if len_min == 0 || len_min > len_max {
            return bad("segment lengths must satisfy 0 < min <= max");
        }
        if self.d == 0 || self.sines_per_concept == 0 {
            return bad("channels and sines per concept must be positive");
        }
        if !(f_min >= 0.0 && f_min <= f_max) {
            return bad("frequency range must satisfy 0 <= f_min <= f_max");
        }
        if f_max > 0.5 {
            return bad("f_max must not exceed 0.5 cycles/step (aliasing limit)");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise std must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub mixing: Array2<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthResult {
    pub series: SeriesMatrix,
    /// Concept id of every time step.
    pub concept_labels: Vec<usize>,
    /// First time step of every regime after the first.
    pub true_boundaries: Vec<usize>,
    /// Concept id of every regime, in order.
    pub concept_sequence: Vec<usize>,
    pub concepts: Vec<Concept>,
}

/// Sidecar written next to the synthetic CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: u32,
    pub boundaries: Vec<usize>,
    pub labels: Vec<usize>,
    pub concept_sequence: Vec<usize>,
    pub spec: SynthSpec,
}

impl SynthResult {
    pub fn truth(&self, spec: &SynthSpec) -> TruthFile {
        TruthFile {
            schema_version: 1,
            boundaries: self.true_boundaries.clone(),
            labels: self.concept_labels.clone(),
            concept_sequence: self.concept_sequence.clone(),
            spec: spec.clone(),
        }
    }
}

impl TruthFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!(
            "{} is not a truth file: {e}",
            path.display()
        )))
    }
}

fn draw_concepts(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Concept>> {
    let [f_min, f_max] = spec.freq_range;
    let mut drawn: Vec<f64> = Vec::new();
    let mut concepts = Vec::with_capacity(spec.num_concepts);
    for _ in 0..spec.num_concepts {
        let mixing = Array2::from_shape_simple_fn((spec.d, spec.sines_per_concept), || {
            StandardNormal.sample(&mut *rng)
        });
        let mut frequencies = Vec::with_capacity(spec.sines_per_concept);
        for _ in 0..spec.sines_per_concept {
            let f = (0..MAX_FREQ_DRAWS)
                .map(|_| rng.random_range(f_min..=f_max))
                .find(|f| drawn.iter().all(|g| (f - g).abs() >= FREQ_COLLISION))
                .ok_or_else(|| {
                    Error::InvalidConfig("frequency range too narrow for distinct draws".into())
                })?;
            drawn.push(f);
            frequencies.push(f);
        }
        let phases = (0..spec.sines_per_concept)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        concepts.push(Concept {
            mixing,
            frequencies,
            phases,
        });
    }
    Ok(concepts)
}

/// Regime order: the first `min(segments, concepts)` regimes visit distinct
/// concepts in random order, later regimes pick any concept other than the
/// previous one.
fn draw_sequence(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..spec.num_concepts).collect();
    ids.shuffle(rng);
    let mut sequence: Vec<usize> = ids.into_iter().take(spec.num_segments).collect();
    while sequence.len() < spec.num_segments {
        let prev = *sequence.last().expect("at least one regime");
        let mut next = rng.random_range(0..spec.num_concepts - 1);
        if next >= prev {
            next += 1;
        }
        sequence.push(next);
    }
    sequence
}

pub fn generate(spec: &SynthSpec) -> Result<SynthResult> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let concepts = draw_concepts(spec, &mut rng)?;
    let concept_sequence = draw_sequence(spec, &mut rng);
    let [len_min, len_max] = spec.segment_len_range;
    let lengths: Vec<usize> = (0..spec.num_segments)
        .map(|_| rng.random_range(len_min..=len_max))
        .collect();
    let total: usize = lengths.iter().sum();
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise std");

    let mut values = Array2::zeros((total, spec.d));
    let mut concept_labels = Vec::with_capacity(total);
    let mut true_boundaries = Vec::with_capacity(spec.num_segments - 1);
    let mut t = 0usize;
    for (regime, (&c, &len)) in concept_sequence.iter().zip(&lengths).enumerate() {
        if regime > 0 {
            true_boundaries.push(t);
        }
        let concept = &concepts[c];
        for _ in 0..len {
            let waves: Vec<f64> = concept
                .frequencies
                .iter()
                .zip(&concept.phases)
                .map(|(f, p)| (TAU * f * t as f64 + p).sin())
                .collect();
            for ch in 0..spec.d {
                let clean: f64 = concept
                    .mixing
                    .row(ch)
                    .iter()
                    .zip(&waves)
                    .map(|(m, w)| m * w)
                    .sum();
                let eps = if spec.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                values[[t, ch]] = clean + eps;
            }
            concept_labels.push(c);
            t += 1;
        }
    }

    Ok(SynthResult {
        series: SeriesMatrix::new(values, None)?,
        concept_labels,
        true_boundaries,
        concept_sequence,
        concepts,
    })
}
