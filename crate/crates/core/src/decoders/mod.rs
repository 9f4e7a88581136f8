//! Decoders for defect sets on a [`DecodingGraph`].

pub mod blossom;
mod brute;
mod clustering;
mod mwpm;

pub use brute::{brute_force_matching, BRUTE_FORCE_LIMIT};
pub use clustering::decode_clustering;
pub use mwpm::{decode_mwpm, decode_mwpm_with_weights, DefectDistances};

use crate::graph::DecodingGraph;
use crate::{Error, Result};

/// One matched element: a defect pair, or a defect matched to the boundary
/// (`None`).
pub type MatchPair = (usize, Option<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub logical_flip: bool,
    /// Sorted by first defect.
    pub matching: Vec<MatchPair>,
    /// Total matching weight (MWPM and brute force).
    pub total_weight: f64,
    /// Growth rounds used (clustering).
    pub grow_steps: usize,
    /// Correction as a sorted set of edge indices.
    pub correction: Vec<usize>,
}

impl DecodeResult {
    pub(crate) fn empty() -> Self {
        DecodeResult {
            logical_flip: false,
            matching: Vec::new(),
            total_weight: 0.0,
            grow_steps: 0,
            correction: Vec::new(),
        }
    }
}

/// Detector nodes with odd degree in `edges` (the GF(2) boundary, ignoring the
/// virtual boundary node).
pub fn correction_syndrome(graph: &DecodingGraph, edges: &[usize]) -> Vec<usize> {
    let mut odd = vec![false; graph.num_detectors];
    for &e in edges {
        let edge = &graph.edges[e];
        odd[edge.a] ^= true;
        if let Some(b) = edge.b {
            odd[b] ^= true;
        }
    }
    odd.iter()
        .enumerate()
        .filter(|(_, &o)| o)
        .map(|(i, _)| i)
        .collect()
}

/// XOR of the observable flags over `edges`.
pub fn correction_parity(graph: &DecodingGraph, edges: &[usize]) -> bool {
    edges
        .iter()
        .fold(false, |acc, &e| acc ^ graph.edges[e].flips_observable)
}

/// Keeps edges that occur an odd number of times, sorted.
pub(crate) fn gf2_reduce(mut edges: Vec<usize>) -> Vec<usize> {
    edges.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(edges.len());
    for e in edges {
        if out.last() == Some(&e) {
            out.pop();
        } else {
            out.push(e);
        }
    }
    out
}

pub(crate) fn check_defects(graph: &DecodingGraph, defects: &[usize]) -> Result<Vec<usize>> {
    let mut d = defects.to_vec();
    d.sort_unstable();
    if d.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate defect".into()));
    }
    if let Some(&last) = d.last() {
        if last >= graph.num_detectors {
            return Err(Error::InvalidArgument(format!(
                "defect {last} outside graph with {} detectors",
                graph.num_detectors
            )));
        }
    }
    Ok(d)
}

/// Which decoder to run over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Mwpm,
    Clustering,
    SoftMwpm,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Mwpm => "mwpm",
            DecoderKind::Clustering => "clustering",
            DecoderKind::SoftMwpm => "soft-mwpm",
        }
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mwpm" => Ok(DecoderKind::Mwpm),
            "clustering" => Ok(DecoderKind::Clustering),
            "soft-mwpm" => Ok(DecoderKind::SoftMwpm),
            other => Err(Error::InvalidArgument(format!(
                "unknown decoder '{other}' (expected mwpm, clustering or soft-mwpm)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gf2_reduction_cancels_pairs() {
        assert_eq!(gf2_reduce(vec![3, 1, 3, 2, 1, 1]), vec![1, 2]);
        assert!(gf2_reduce(vec![]).is_empty());
    }

    #[test]
    fn decoder_names_roundtrip() {
        for k in [
            DecoderKind::Mwpm,
            DecoderKind::Clustering,
            DecoderKind::SoftMwpm,
        ] {
            assert_eq!(k.name().parse::<DecoderKind>().unwrap(), k);
        }
        assert!("belief".parse::<DecoderKind>().is_err());
    }
}
