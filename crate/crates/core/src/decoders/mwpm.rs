use super::blossom::max_weight_matching;
use super::{check_defects, correction_parity, gf2_reduce, DecodeResult, MatchPair};
use crate::graph::{dijkstra_with, DecodingGraph, ShortestPaths};
use crate::{Error, Result};

/// Fixed-point scale for converting path lengths to blossom weights.
const SCALE: f64 = (1u64 << 36) as f64;

/// Shortest-path distances between defects and from each defect to the
/// boundary, shared by the exact decoder and the brute-force oracle.
#[derive(Debug, Clone)]
pub struct DefectDistances {
    pub defects: Vec<usize>,
    /// `pair[i][j]`: distance between defects `i` and `j` (infinite if disconnected).
    pub pair: Vec<Vec<f64>>,
    pub boundary: Vec<f64>,
    paths: Vec<ShortestPaths>,
}

impl DefectDistances {
    pub fn compute(graph: &DecodingGraph, weights: &[f64], defects: &[usize]) -> Result<Self> {
        if weights.len() != graph.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} edges",
                weights.len(),
                graph.edges.len()
            )));
        }
        let defects = check_defects(graph, defects)?;
        let paths = defects
            .iter()
            .map(|&d| dijkstra_with(graph, |e| weights[e], d))
            .collect::<Result<Vec<_>>>()?;
        let pair = paths
            .iter()
            .map(|sp| defects.iter().map(|&d| sp.dist[d]).collect())
            .collect();
        let boundary = paths.iter().map(|sp| sp.dist[graph.boundary()]).collect();
        Ok(DefectDistances {
            defects,
            pair,
            boundary,
            paths,
        })
    }

    /// Weight of a matching given as indices into `defects`.
    pub fn matching_weight(&self, matching: &[(usize, Option<usize>)]) -> f64 {
        matching
            .iter()
            .map(|&(i, j)| match j {
                Some(j) => self.pair[i][j],
                None => self.boundary[i],
            })
            .sum()
    }

    /// Builds the decode result for a matching over defect indices.
    pub(crate) fn realize(
        &self,
        graph: &DecodingGraph,
        matching: &[(usize, Option<usize>)],
    ) -> DecodeResult {
        let mut edges = Vec::new();
        let mut pairs: Vec<MatchPair> = Vec::with_capacity(matching.len());
        for &(i, j) in matching {
            let target = j.map_or(graph.boundary(), |j| self.defects[j]);
            edges.extend(self.paths[i].path_edges(graph, target));
            pairs.push((self.defects[i], j.map(|j| self.defects[j])));
        }
        pairs.sort_unstable();
        let correction = gf2_reduce(edges);
        DecodeResult {
            logical_flip: correction_parity(graph, &correction),
            matching: pairs,
            total_weight: self.matching_weight(matching),
            grow_steps: 0,
            correction,
        }
    }
}

/// Exact minimum-weight perfect matching using the graph's edge weights.
pub fn decode_mwpm(graph: &DecodingGraph, defects: &[usize]) -> Result<DecodeResult> {
    let weights: Vec<f64> = graph.edges.iter().map(|e| e.weight).collect();
    decode_mwpm_with_weights(graph, &weights, defects)
}

/// Exact MWPM with per-edge weights overriding the graph's (soft overlay).
pub fn decode_mwpm_with_weights(
    graph: &DecodingGraph,
    weights: &[f64],
    defects: &[usize],
) -> Result<DecodeResult> {
    if defects.is_empty() {
        return Ok(DecodeResult::empty());
    }
    let dd = DefectDistances::compute(graph, weights, defects)?;
    let n = dd.defects.len();
    if n == 1 {
        if !dd.boundary[0].is_finite() {
            return Err(Error::Infeasible(
                "single defect cannot reach the boundary".into(),
            ));
        }
        return Ok(dd.realize(graph, &[(0, None)]));
    }

    // Defect i pairs with defect j, or with its boundary twin n+i; twins pair
    // freely at zero cost.
    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if dd.pair[i][j].is_finite() {
                raw.push((i, j, dd.pair[i][j]));
            }
        }
        if dd.boundary[i].is_finite() {
            raw.push((i, n + i, dd.boundary[i]));
        }
        for j in i + 1..n {
            raw.push((n + i, n + j, 0.0));
        }
    }
    let max_w = raw.iter().map(|e| e.2).fold(0.0, f64::max);
    let ceiling = (max_w * SCALE).round() as i64 + 1;
    let edges: Vec<(usize, usize, i64)> = raw
        .iter()
        .map(|&(i, j, w)| (i, j, ceiling - (w * SCALE).round() as i64))
        .collect();
    let mate = max_weight_matching(2 * n, &edges, true);

    let mut matching = Vec::with_capacity(n);
    for i in 0..n {
        match mate[i] {
            Some(j) if j < n => {
                if i < j {
                    matching.push((i, Some(j)));
                }
            }
            Some(_) => matching.push((i, None)),
            None => {
                return Err(Error::Infeasible(format!(
                    "no perfect matching: defect {} cannot be paired",
                    dd.defects[i]
                )))
            }
        }
    }
    Ok(dd.realize(graph, &matching))
}
