use super::mwpm::DefectDistances;
use super::DecodeResult;
use crate::graph::DecodingGraph;
use crate::{Error, Result};

pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Exhaustive minimum-weight matching over all pairings, any defect being
/// allowed to go to the boundary. Test oracle for [`super::decode_mwpm`].
pub fn brute_force_matching(graph: &DecodingGraph, defects: &[usize]) -> Result<DecodeResult> {
    if defects.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyDefects(defects.len(), BRUTE_FORCE_LIMIT));
    }
    if defects.is_empty() {
        return Ok(DecodeResult::empty());
    }
    let weights: Vec<f64> = graph.edges.iter().map(|e| e.weight).collect();
    let dd = DefectDistances::compute(graph, &weights, defects)?;
    let n = dd.defects.len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut current = Vec::with_capacity(n);
    search(&dd, &mut vec![false; n], &mut current, 0.0, &mut best);
    if !best.0.is_finite() {
        return Err(Error::Infeasible("no finite-weight matching".into()));
    }
    Ok(dd.realize(graph, &best.1))
}

fn search(
    dd: &DefectDistances,
    used: &mut [bool],
    current: &mut Vec<(usize, Option<usize>)>,
    weight: f64,
    best: &mut (f64, Vec<(usize, Option<usize>)>),
) {
    if weight >= best.0 {
        return;
    }
    let Some(i) = used.iter().position(|&u| !u) else {
        *best = (weight, current.clone());
        return;
    };
    used[i] = true;
    if dd.boundary[i].is_finite() {
        current.push((i, None));
        search(dd, used, current, weight + dd.boundary[i], best);
        current.pop();
    }
    for j in i + 1..used.len() {
        if !used[j] && dd.pair[i][j].is_finite() {
            used[j] = true;
            current.push((i, Some(j)));
            search(dd, used, current, weight + dd.pair[i][j], best);
            current.pop();
            used[j] = false;
        }
    }
    used[i] = false;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::decode_mwpm;
    use crate::graph::Edge;

    #[test]
    fn limit_enforced() {
        let edges = (0..13)
            .map(|i| Edge::new(i, None, 0.1, false).unwrap())
            .collect();
        let g = DecodingGraph::new(13, edges).unwrap();
        let d: Vec<usize> = (0..13).collect();
        assert_eq!(
            brute_force_matching(&g, &d),
            Err(Error::TooManyDefects(13, 12))
        );
        assert_eq!(
            brute_force_matching(&g, &d[..12]).unwrap().matching.len(),
            12
        );
    }

    #[test]
    fn two_defects_agree_with_mwpm() {
        let g = DecodingGraph::new(
            3,
            vec![
                Edge::new(0, Some(1), 0.02, false).unwrap(),
                Edge::new(1, Some(2), 0.02, true).unwrap(),
                Edge::new(0, None, 0.01, false).unwrap(),
                Edge::new(2, None, 0.04, true).unwrap(),
            ],
        )
        .unwrap();
        for d in [[0, 1], [0, 2], [1, 2]] {
            let a = brute_force_matching(&g, &d).unwrap();
            let b = decode_mwpm(&g, &d).unwrap();
            assert!((a.total_weight - b.total_weight).abs() < 1e-12);
            let direct = {
                let dd = DefectDistances::compute(
                    &g,
                    &g.edges.iter().map(|e| e.weight).collect::<Vec<_>>(),
                    &d,
                )
                .unwrap();
                dd.pair[0][1].min(dd.boundary[0] + dd.boundary[1])
            };
            assert!((a.total_weight - direct).abs() < 1e-12);
        }
    }
}
