//! Soft readout calibration and edge-probability estimation.
//!
//! A linear discriminant classifier (shared covariance, equal priors) labels
//! IQ points; its log-likelihood ratio becomes a per-shot weight for the
//! measurement-error edges. Edge probabilities can also be estimated directly
//! from detector statistics with the pairwise-correlation method.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_weight, xor_combine, DecodingGraph};
use crate::sampler::{shot_rng, ShotRecord};

/// Linear discriminant with Gaussian class likelihoods and equal priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub mean0: [f64; 2],
    pub mean1: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub priors: [f64; 2],
    #[serde(skip)]
    precision: [[f64; 2]; 2],
}

fn invert(cov: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let scale = cov[0][0].abs().max(cov[1][1].abs());
    if !(det.is_finite() && det > 1e-12 * scale * scale) {
        return Err(Error::Degenerate(format!(
            "covariance {cov:?} is not positive definite"
        )));
    }
    Ok([
        [cov[1][1] / det, -cov[0][1] / det],
        [-cov[1][0] / det, cov[0][0] / det],
    ])
}

impl Classifier {
    pub fn from_parameters(
        mean0: [f64; 2],
        mean1: [f64; 2],
        covariance: [[f64; 2]; 2],
    ) -> Result<Self> {
        Ok(Classifier {
            mean0,
            mean1,
            covariance,
            priors: [0.5, 0.5],
            precision: invert(covariance)?,
        })
    }

    /// Sample means and pooled within-class covariance.
    pub fn train(shots0: &[[f64; 2]], shots1: &[[f64; 2]]) -> Result<Self> {
        if shots0.len() < 2 || shots1.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least two shots per class".into(),
            ));
        }
        let mean = |s: &[[f64; 2]]| {
            let n = s.len() as f64;
            let (a, b) = s
                .iter()
                .fold((0.0, 0.0), |acc, z| (acc.0 + z[0], acc.1 + z[1]));
            [a / n, b / n]
        };
        let m0 = mean(shots0);
        let m1 = mean(shots1);
        let mut scatter = [[0.0; 2]; 2];
        for (shots, m) in [(shots0, m0), (shots1, m1)] {
            for z in shots {
                let d = [z[0] - m[0], z[1] - m[1]];
                for i in 0..2 {
                    for j in 0..2 {
                        scatter[i][j] += d[i] * d[j];
                    }
                }
            }
        }
        let dof = (shots0.len() + shots1.len() - 2) as f64;
        let cov = scatter.map(|row| row.map(|v| v / dof));
        Classifier::from_parameters(m0, m1, cov)
    }

    fn log_likelihood_ratio(&self, z: [f64; 2]) -> f64 {
        // log p(z|1) - log p(z|0) for shared covariance.
        let quad = |m: [f64; 2]| {
            let d = [z[0] - m[0], z[1] - m[1]];
            let p = &self.precision;
            d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1])
        };
        0.5 * (quad(self.mean0) - quad(self.mean1))
    }

    /// Log posterior odds of state 1; equals the likelihood ratio under equal priors.
    pub fn log_odds(&self, z: [f64; 2]) -> f64 {
        self.log_likelihood_ratio(z) + (self.priors[1] / self.priors[0]).ln()
    }

    pub fn classify(&self, z: [f64; 2]) -> bool {
        self.log_odds(z) > 0.0
    }

    /// `P(state = 1 | z)` and the argmax label.
    pub fn posterior(&self, z: [f64; 2]) -> (f64, bool) {
        let l = self.log_odds(z);
        let p = if l >= 0.0 {
            1.0 / (1.0 + (-l).exp())
        } else {
            let e = l.exp();
            e / (1.0 + e)
        };
        (p, l > 0.0)
    }

    /// `-log[P(z | not label) / P(z | label)]` for the argmax label; never negative.
    pub fn soft_weight(&self, z: [f64; 2]) -> f64 {
        self.log_likelihood_ratio(z).abs()
    }

    /// Mahalanobis distance between the two class means.
    pub fn mahalanobis_separation(&self) -> f64 {
        let d = [self.mean1[0] - self.mean0[0], self.mean1[1] - self.mean0[1]];
        let p = &self.precision;
        (d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]))
            .max(0.0)
            .sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            mean0: [f64; 2],
            mean1: [f64; 2],
            covariance: [[f64; 2]; 2],
            priors: [f64; 2],
        }
        let doc: Doc = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if (doc.priors[0] - 0.5).abs() > 1e-12 || (doc.priors[1] - 0.5).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "classifier priors must both be 1/2".into(),
            ));
        }
        Classifier::from_parameters(doc.mean0, doc.mean1, doc.covariance)
    }
}

/// Per-shot edge weights: measurement-error components take the soft weight
/// of their own measurement, everything else keeps the calibrated value.
pub fn apply_soft_weights(
    graph: &DecodingGraph,
    classifier: &Classifier,
    shot: &ShotRecord,
) -> Result<Vec<f64>> {
    let soft = shot.soft.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("shot {} carries no soft values", shot.shot))
    })?;
    if !graph.has_measurement_tags() {
        return Err(Error::Config(
            "decoding graph has no measurement-tagged edges; build it from fault enumeration"
                .into(),
        ));
    }
    let mut weights = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        if e.measurements.is_empty() {
            weights.push(e.weight);
            continue;
        }
        let mut soft_w = Vec::with_capacity(e.measurements.len());
        for &slot in &e.measurements {
            let z = soft.get(slot).ok_or_else(|| {
                Error::Config(format!(
                    "edge measurement slot {slot} has no soft value in shot {}",
                    shot.shot
                ))
            })?;
            soft_w.push(classifier.soft_weight([z[0] as f64, z[1] as f64]));
        }
        if e.non_measurement_probability == 0.0 && soft_w.len() == 1 {
            weights.push(soft_w[0]);
            continue;
        }
        let mut p = e.non_measurement_probability;
        for w in soft_w {
            p = xor_combine(p, 1.0 / (1.0 + w.exp()));
        }
        weights.push(if p >= 0.5 {
            0.0
        } else {
            edge_weight(p.max(f64::MIN_POSITIVE))?
        });
    }
    Ok(weights)
}

/// Candidate edge between two detectors, or between a detector and the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CandidateEdge {
    pub a: usize,
    pub b: Option<usize>,
}

/// First and second moments of detector outcomes over the candidate pairs.
/// Shards can be accumulated separately and merged.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub shots: u64,
    pub singles: Vec<u64>,
    pub pairs: Vec<(usize, usize)>,
    pub pair_counts: Vec<u64>,
}

impl MomentAccumulator {
    pub fn new(num_detectors: usize, candidates: &[CandidateEdge]) -> Self {
        let mut pairs: Vec<(usize, usize)> = candidates
            .iter()
            .filter_map(|c| c.b.map(|b| (c.a.min(b), c.a.max(b))))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        MomentAccumulator {
            shots: 0,
            singles: vec![0; num_detectors],
            pair_counts: vec![0; pairs.len()],
            pairs,
        }
    }

    pub fn add(&mut self, detectors: &[bool]) {
        self.shots += 1;
        for (c, &d) in self.singles.iter_mut().zip(detectors) {
            *c += u64::from(d);
        }
        for (c, &(i, j)) in self.pair_counts.iter_mut().zip(&self.pairs) {
            *c += u64::from(detectors[i] && detectors[j]);
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if self.pairs != other.pairs || self.singles.len() != other.singles.len() {
            return Err(Error::InvalidArgument(
                "accumulators track different candidates".into(),
            ));
        }
        self.shots += other.shots;
        for (a, b) in self.singles.iter_mut().zip(&other.singles) {
            *a += b;
        }
        for (a, b) in self.pair_counts.iter_mut().zip(&other.pair_counts) {
            *a += b;
        }
        Ok(())
    }

    fn pair_mean(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.pairs
            .binary_search(&key)
            .ok()
            .map(|k| self.pair_counts[k] as f64 / self.shots as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateFlag {
    Ok,
    /// Negative discriminant; the estimate was clamped to zero.
    Clamped,
    /// Denominator vanished; the estimate is meaningless.
    Undefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEstimate {
    pub candidates: Vec<CandidateEdge>,
    pub probabilities: Vec<f64>,
    pub flags: Vec<EstimateFlag>,
}

/// Minimum number of shots accepted by [`estimate_pairwise`].
pub const MIN_PAIRWISE_SHOTS: u64 = 10_000;

fn pair_probability(xi: f64, xj: f64, xij: f64) -> (f64, EstimateFlag) {
    let denom = 1.0 - 2.0 * xi - 2.0 * xj + 4.0 * xij;
    if denom.abs() < 1e-12 {
        return (0.0, EstimateFlag::Undefined);
    }
    let disc = 1.0 - 4.0 * (xij - xi * xj) / denom;
    if disc < 0.0 {
        return (0.0, EstimateFlag::Clamped);
    }
    let p = 0.5 - 0.5 * disc.sqrt();
    if p < 0.0 {
        (0.0, EstimateFlag::Clamped)
    } else {
        (p, EstimateFlag::Ok)
    }
}

/// Pairwise-correlation estimates for every candidate edge. Boundary edges take
/// whatever single-detector flip rate the pair edges do not explain.
pub fn estimate_from_moments(
    acc: &MomentAccumulator,
    candidates: &[CandidateEdge],
) -> Result<PairwiseEstimate> {
    if acc.shots < MIN_PAIRWISE_SHOTS {
        return Err(Error::InsufficientData(format!(
            "{} shots; pairwise estimation needs at least {MIN_PAIRWISE_SHOTS}",
            acc.shots
        )));
    }
    let n = acc.shots as f64;
    let x: Vec<f64> = acc.singles.iter().map(|&c| c as f64 / n).collect();
    let mut probabilities = vec![0.0; candidates.len()];
    let mut flags = vec![EstimateFlag::Ok; candidates.len()];
    // survival[i] = prod over pair edges at i of (1 - 2 p_ij)
    let mut survival = vec![1.0; x.len()];
    for (k, c) in candidates.iter().enumerate() {
        if let Some(b) = c.b {
            if c.a >= x.len() || b >= x.len() {
                return Err(Error::InvalidArgument(format!(
                    "candidate ({}, {b}) is out of range",
                    c.a
                )));
            }
            let xij = acc.pair_mean(c.a, b).ok_or_else(|| {
                Error::InvalidArgument("candidate missing from accumulator".into())
            })?;
            let (p, flag) = pair_probability(x[c.a], x[b], xij);
            probabilities[k] = p;
            flags[k] = flag;
            survival[c.a] *= 1.0 - 2.0 * p;
            survival[b] *= 1.0 - 2.0 * p;
        }
    }
    for (k, c) in candidates.iter().enumerate() {
        if c.b.is_none() {
            if c.a >= x.len() {
                return Err(Error::InvalidArgument(format!(
                    "candidate ({}, boundary) is out of range",
                    c.a
                )));
            }
            if survival[c.a].abs() < 1e-12 {
                flags[k] = EstimateFlag::Undefined;
                continue;
            }
            let p = 0.5 * (1.0 - (1.0 - 2.0 * x[c.a]) / survival[c.a]);
            if p < 0.0 {
                flags[k] = EstimateFlag::Clamped;
            } else {
                probabilities[k] = p;
            }
        }
    }
    Ok(PairwiseEstimate {
        candidates: candidates.to_vec(),
        probabilities,
        flags,
    })
}

/// Estimate candidate edge probabilities from an `N x D` defect sample.
pub fn estimate_pairwise(
    samples: &[Vec<bool>],
    candidates: &[CandidateEdge],
) -> Result<PairwiseEstimate> {
    let d = samples.first().map_or(0, |s| s.len());
    let mut acc = MomentAccumulator::new(d, candidates);
    for s in samples {
        if s.len() != d {
            return Err(Error::InvalidArgument(
                "defect rows have different lengths".into(),
            ));
        }
        acc.add(s);
    }
    estimate_from_moments(&acc, candidates)
}

/// Shards used by [`sample_graph_moments`]; fixed so results do not depend on
/// the thread count.
const MOMENT_SHARDS: u64 = 64;

/// Samples `shots` syndromes directly from the edge probabilities of `graph`
/// (each edge fires independently) and accumulates their moments.
pub fn sample_graph_moments(
    graph: &DecodingGraph,
    candidates: &[CandidateEdge],
    seed: u64,
    shots: u64,
) -> MomentAccumulator {
    let per_shard = shots.div_ceil(MOMENT_SHARDS);
    (0..MOMENT_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut acc = MomentAccumulator::new(graph.num_detectors, candidates);
            let mut det = vec![false; graph.num_detectors];
            let start = shard * per_shard;
            for shot in start..(start + per_shard).min(shots) {
                let mut rng = shot_rng(seed, shot);
                det.fill(false);
                for e in &graph.edges {
                    if rng.random::<f64>() < e.probability {
                        det[e.a] ^= true;
                        if let Some(b) = e.b {
                            det[b] ^= true;
                        }
                    }
                }
                acc.add(&det);
            }
            acc
        })
        .reduce(
            || MomentAccumulator::new(graph.num_detectors, candidates),
            |mut a, b| {
                a.merge(&b).expect("shards share candidates");
                a
            },
        )
}

/// Candidate list matching the edges of `graph`, in edge order.
pub fn candidates_of(graph: &DecodingGraph) -> Vec<CandidateEdge> {
    graph
        .edges
        .iter()
        .map(|e| CandidateEdge { a: e.a, b: e.b })
        .collect()
}

/// `graph` with every edge probability replaced by its estimate; estimates at
/// or below zero are floored at `floor`.
pub fn reweight_graph(
    graph: &DecodingGraph,
    estimate: &PairwiseEstimate,
    floor: f64,
) -> Result<DecodingGraph> {
    if estimate.candidates != candidates_of(graph) {
        return Err(Error::InvalidArgument(
            "estimate does not match the graph's edges".into(),
        ));
    }
    let probs: Vec<f64> = estimate
        .probabilities
        .iter()
        .map(|&p| p.clamp(floor, 0.5 - 1e-9))
        .collect();
    graph.with_probabilities(&probs)
}
