//! Decoding graph construction by exhaustive single-fault enumeration.
//!
//! Every fault the noise model allows is pushed through the remainder of the
//! circuit; the detectors it flips become an edge (or a boundary edge when only
//! one fires) and its effect on the observable becomes the edge's flag.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use crate::circuit::{num_detectors, Circuit, DetectorIndex};
use crate::error::{Error, Result};
use crate::noise::{FaultKind, FaultSite, NoiseModel, NoisyProgram, Op};
use crate::pauli::PauliFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub site: FaultSite,
    pub probability: f64,
    /// Sorted, at most two entries.
    pub defects: Vec<DetectorIndex>,
    pub flips_observable: bool,
    /// Record slot when the fault is a classical measurement flip.
    pub measurement: Option<usize>,
}

/// Weight of an independent error mechanism with probability `p`.
pub fn edge_weight(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "edge probability {p} is outside (0, 1)"
        )));
    }
    Ok(-(p / (1.0 - p)).ln())
}

/// Probability that an odd number of two independent mechanisms fire.
pub fn xor_combine(p1: f64, p2: f64) -> f64 {
    p1 + p2 - 2.0 * p1 * p2
}

/// Measurement flips caused by a single Pauli inserted after `site.op`.
fn propagate(program: &NoisyProgram, site: FaultSite) -> Result<Vec<usize>> {
    let mut frame = PauliFrame::default();
    let mut flipped = Vec::new();
    match (program.ops[site.op], site.kind) {
        (Op::Depolarize1 { qubit, .. }, FaultKind::Pauli1(p)) => frame.apply(qubit, p),
        (Op::Depolarize2 { a, b, .. }, FaultKind::Pauli2(pa, pb)) => {
            frame.apply(a, pa);
            frame.apply(b, pb);
        }
        (Op::Measure { slot, .. }, FaultKind::MeasurementFlip) => return Ok(vec![slot]),
        (op, kind) => {
            return Err(Error::Inconsistent(format!(
                "fault {kind:?} does not fit op {op:?}"
            )))
        }
    }
    for op in &program.ops[site.op + 1..] {
        match *op {
            Op::H(q) => frame.h(q),
            Op::Cz(a, b) => frame.cz(a, b),
            Op::Measure { qubit, slot, .. } => {
                if frame.flips_z_measurement(qubit) {
                    flipped.push(slot);
                }
            }
            Op::Depolarize1 { .. } | Op::Depolarize2 { .. } => {}
        }
    }
    Ok(flipped)
}

/// Enumerate every single fault of `noise` on `circuit`, with its detector
/// footprint and observable effect.
pub fn enumerate_faults(circuit: &Circuit, noise: &NoiseModel) -> Result<Vec<Fault>> {
    let program = NoisyProgram::compile(circuit, noise)?;
    let mut faults = Vec::new();
    for (site, probability) in program.fault_sites() {
        let slots = propagate(&program, site)?;
        let mut record = vec![false; program.num_measurements];
        for s in slots {
            record[s] = true;
        }
        let defects: Vec<DetectorIndex> = circuit
            .detectors(&record)?
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| DetectorIndex::from_linear(i))
            .collect();
        if defects.len() > 2 {
            return Err(Error::Inconsistent(format!(
                "fault {site:?} produces {} defects",
                defects.len()
            )));
        }
        let measurement = match site.kind {
            FaultKind::MeasurementFlip => match program.ops[site.op] {
                Op::Measure { slot, .. } => Some(slot),
                _ => None,
            },
            _ => None,
        };
        faults.push(Fault {
            site,
            probability,
            defects,
            flips_observable: circuit.observable(&record)?,
            measurement,
        });
    }
    Ok(faults)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    /// `None` is the virtual boundary.
    pub b: Option<usize>,
    pub probability: f64,
    pub weight: f64,
    pub flips_observable: bool,
    /// Record slots of measurement-flip mechanisms merged into this edge.
    pub measurements: Vec<usize>,
    /// Combined probability of the mechanisms that are not measurement flips.
    pub non_measurement_probability: f64,
}

impl Edge {
    pub fn new(
        a: usize,
        b: Option<usize>,
        probability: f64,
        flips_observable: bool,
    ) -> Result<Self> {
        Ok(Edge {
            a,
            b,
            probability,
            weight: edge_weight(probability)?,
            flips_observable,
            measurements: Vec::new(),
            non_measurement_probability: probability,
        })
    }

    pub fn is_boundary(&self) -> bool {
        self.b.is_none()
    }

    /// The endpoint other than `v`; the boundary maps to `boundary`.
    pub fn other(&self, v: usize, boundary: usize) -> usize {
        let b = self.b.unwrap_or(boundary);
        if self.a == v {
            b
        } else {
            self.a
        }
    }
}

/// Detectors as nodes `0..num_detectors`, with node `num_detectors` standing
/// for the boundary in adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingGraph {
    pub num_detectors: usize,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl DecodingGraph {
    pub fn new(num_detectors: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); num_detectors + 1];
        for (i, e) in edges.iter().enumerate() {
            let b = e.b.unwrap_or(num_detectors);
            if e.a >= num_detectors || b > num_detectors || e.b == Some(e.a) {
                return Err(Error::InvalidArgument(format!(
                    "edge {i} ({}, {:?}) has an invalid endpoint",
                    e.a, e.b
                )));
            }
            adjacency[e.a].push(i);
            adjacency[b].push(i);
        }
        Ok(DecodingGraph {
            num_detectors,
            edges,
            adjacency,
        })
    }

    pub fn boundary(&self) -> usize {
        self.num_detectors
    }

    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_measurement_tags(&self) -> bool {
        self.edges.iter().any(|e| !e.measurements.is_empty())
    }

    /// Copy with every weight replaced; probabilities follow the weights.
    pub fn with_weights(&self, weights: &[f64]) -> DecodingGraph {
        let mut g = self.clone();
        for (e, &w) in g.edges.iter_mut().zip(weights) {
            e.weight = w;
            e.probability = 1.0 / (1.0 + w.exp());
        }
        g
    }

    /// Copy with every edge probability replaced (weights recomputed).
    pub fn with_probabilities(&self, probs: &[f64]) -> Result<DecodingGraph> {
        let mut g = self.clone();
        for (e, &p) in g.edges.iter_mut().zip(probs) {
            e.probability = p;
            e.weight = edge_weight(p)?;
            e.non_measurement_probability = p;
            e.measurements.clear();
        }
        Ok(g)
    }

    /// Probability that detector `node` fires, assuming independent edges.
    pub fn defect_rate(&self, node: usize) -> f64 {
        let prod: f64 = self.adjacency[node]
            .iter()
            .map(|&e| 1.0 - 2.0 * self.edges[e].probability)
            .product();
        0.5 * (1.0 - prod)
    }

    /// `u v p w obs_flag` per edge with `v = -1` for the boundary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# detectors {}", self.num_detectors);
        for e in &self.edges {
            let v = e.b.map_or(-1, |b| b as i64);
            let _ = writeln!(
                out,
                "{} {} {:.12e} {:.12e} {}",
                e.a,
                v,
                e.probability,
                e.weight,
                u8::from(e.flips_observable)
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut num_detectors = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("detectors") {
                    let n = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse(format!("line {}: bad header", lineno + 1)))?;
                    num_detectors = Some(n);
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: expected `u v p w obs_flag`", lineno + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            let a: usize = f[0].parse().map_err(|_| bad())?;
            let v: i64 = f[1].parse().map_err(|_| bad())?;
            let p: f64 = f[2].parse().map_err(|_| bad())?;
            let w: f64 = f[3].parse().map_err(|_| bad())?;
            let flag = match f[4] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let b = if v < 0 { None } else { Some(v as usize) };
            edges.push(Edge {
                a,
                b,
                probability: p,
                weight: w,
                flips_observable: flag,
                measurements: Vec::new(),
                non_measurement_probability: p,
            });
        }
        let n = match num_detectors {
            Some(n) => n,
            None => edges
                .iter()
                .map(|e| e.a.max(e.b.unwrap_or(0)) + 1)
                .max()
                .unwrap_or(0),
        };
        DecodingGraph::new(n, edges)
    }
}

/// Merge faults into a graph over `num_detectors` nodes.
pub fn build_graph(num_detectors: usize, faults: &[Fault]) -> Result<DecodingGraph> {
    // key: (a, b or MAX for boundary, flag)
    let mut merged: BTreeMap<(usize, usize, bool), (f64, f64, Vec<usize>)> = BTreeMap::new();
    for f in faults {
        if f.probability <= 0.0 {
            continue;
        }
        let nodes: Vec<usize> = f.defects.iter().map(|d| d.linear()).collect();
        if let Some(&bad) = nodes.iter().find(|&&n| n >= num_detectors) {
            return Err(Error::InvalidArgument(format!(
                "fault references detector {bad} outside 0..{num_detectors}"
            )));
        }
        let key = match nodes.as_slice() {
            [] => {
                if f.flips_observable {
                    return Err(Error::Inconsistent(format!(
                        "fault {:?} flips the observable without any defect",
                        f.site
                    )));
                }
                continue;
            }
            [a] => (*a, usize::MAX, f.flips_observable),
            [a, b] => (*a.min(b), *a.max(b), f.flips_observable),
            _ => {
                return Err(Error::Inconsistent(format!(
                    "fault {:?} has {} defects",
                    f.site,
                    nodes.len()
                )))
            }
        };
        let entry = merged.entry(key).or_insert((0.0, 0.0, Vec::new()));
        entry.0 = xor_combine(entry.0, f.probability);
        match f.measurement {
            Some(slot) => entry.2.push(slot),
            None => entry.1 = xor_combine(entry.1, f.probability),
        }
    }
    let mut edges = Vec::with_capacity(merged.len());
    for ((a, b, flag), (p, other, mut slots)) in merged {
        if p <= 0.0 {
            continue;
        }
        slots.sort_unstable();
        slots.dedup();
        edges.push(Edge {
            a,
            b: (b != usize::MAX).then_some(b),
            probability: p,
            weight: edge_weight(p)?,
            flips_observable: flag,
            measurements: slots,
            non_measurement_probability: other,
        });
    }
    DecodingGraph::new(num_detectors, edges)
}

/// Enumerate faults and build the graph in one step.
pub fn stability_graph(circuit: &Circuit, noise: &NoiseModel) -> Result<DecodingGraph> {
    let faults = enumerate_faults(circuit, noise)?;
    build_graph(num_detectors(circuit.rounds), &faults)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths where the boundary is a sink (paths never pass
/// through it). `pred[v]` is the edge used to reach `v`.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
}

impl ShortestPaths {
    pub fn reachable(&self, v: usize) -> bool {
        self.dist[v].is_finite()
    }

    /// Edges along the path from the source to `v`.
    pub fn path_edges(&self, graph: &DecodingGraph, mut v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(e) = self.pred[v] {
            out.push(e);
            v = graph.edges[e].other(v, graph.boundary());
        }
        out
    }

    pub fn path_parity(&self, graph: &DecodingGraph, v: usize) -> bool {
        self.path_edges(graph, v)
            .iter()
            .fold(false, |acc, &e| acc ^ graph.edges[e].flips_observable)
    }
}

pub fn dijkstra(graph: &DecodingGraph, source: usize) -> Result<ShortestPaths> {
    dijkstra_with(graph, |e| graph.edges[e].weight, source)
}

/// [`dijkstra`] with per-edge weights supplied by `weight` (e.g. a soft overlay).
pub fn dijkstra_with(
    graph: &DecodingGraph,
    weight: impl Fn(usize) -> f64,
    source: usize,
) -> Result<ShortestPaths> {
    let n = graph.num_detectors + 1;
    let boundary = graph.boundary();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == boundary && u != source {
            continue;
        }
        for &ei in graph.incident(u) {
            let e = &graph.edges[ei];
            let w = weight(ei);
            if w < 0.0 || w.is_nan() {
                return Err(Error::NegativeWeight {
                    edge: ei,
                    weight: w,
                });
            }
            let v = e.other(u, boundary);
            let nd = d + w;
            if nd < dist[v] || (nd == dist[v] && !done[v] && pred[v].is_some_and(|p| ei < p)) {
                dist[v] = nd;
                pred[v] = Some(ei);
                heap.push(HeapItem { dist: nd, node: v });
            }
        }
    }
    Ok(ShortestPaths { source, dist, pred })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_stability8, QubitLayout};

    fn graph(r: usize) -> DecodingGraph {
        let c = build_stability8(r, QubitLayout::default()).unwrap();
        stability_graph(&c, &NoiseModel::default()).unwrap()
    }

    fn measurement_fault(faults: &[Fault], slot: usize) -> &Fault {
        faults.iter().find(|f| f.measurement == Some(slot)).unwrap()
    }

    #[test]
    fn weight_values() {
        assert_eq!(edge_weight(0.5).unwrap(), 0.0);
        assert!((edge_weight(0.03).unwrap() - 3.476098).abs() < 1e-6);
        assert!((edge_weight(0.97).unwrap() + 3.476098).abs() < 1e-6);
        assert!(edge_weight(0.0).is_err());
        assert!(edge_weight(1.0).is_err());
        assert!(edge_weight(f64::NAN).is_err());
    }

    #[test]
    fn bulk_measurement_flip_is_two_round_edge() {
        let c = build_stability8(8, QubitLayout::default()).unwrap();
        let faults = enumerate_faults(&c, &NoiseModel::default()).unwrap();
        for a in 0..4 {
            let f = measurement_fault(&faults, c.ancilla_slot(a, 4));
            assert_eq!(
                f.defects,
                vec![DetectorIndex::new(a, 4), DetectorIndex::new(a, 6)]
            );
            assert!(!f.flips_observable);
            assert_eq!(f.probability, 0.03);

            let last = measurement_fault(&faults, c.ancilla_slot(a, 8));
            assert_eq!(last.defects, vec![DetectorIndex::new(a, 8)]);
            assert!(last.flips_observable);
        }
    }

    #[test]
    fn hook_edges_exist() {
        let c = build_stability8(8, QubitLayout::default()).unwrap();
        let faults = enumerate_faults(&c, &NoiseModel::default()).unwrap();
        let program = NoisyProgram::compile(&c, &NoiseModel::default()).unwrap();
        let hooks: Vec<&Fault> = faults
            .iter()
            .filter(|f| matches!(program.ops[f.site.op], Op::Depolarize2 { .. }))
            .filter(|f| {
                f.defects.len() == 2
                    && f.defects[0].ancilla != f.defects[1].ancilla
                    && f.defects[0].round + 1 == f.defects[1].round
            })
            .collect();
        assert!(!hooks.is_empty());
    }

    #[test]
    fn xor_merge() {
        let site = FaultSite {
            op: 0,
            kind: FaultKind::MeasurementFlip,
        };
        let d = vec![DetectorIndex::new(0, 2), DetectorIndex::new(1, 2)];
        let faults = vec![
            Fault {
                site,
                probability: 0.01,
                defects: d.clone(),
                flips_observable: false,
                measurement: None,
            },
            Fault {
                site,
                probability: 0.01,
                defects: d,
                flips_observable: false,
                measurement: None,
            },
        ];
        let g = build_graph(4, &faults).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].probability - 0.0198).abs() < 1e-15);
    }

    #[test]
    fn empty_fault_list() {
        let g = build_graph(12, &[]).unwrap();
        assert_eq!(g.num_detectors, 12);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn observable_without_defect_rejected() {
        let site = FaultSite {
            op: 0,
            kind: FaultKind::MeasurementFlip,
        };
        let f = Fault {
            site,
            probability: 0.01,
            defects: vec![],
            flips_observable: true,
            measurement: None,
        };
        assert!(matches!(build_graph(4, &[f]), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn two_round_experiment_has_undetectable_logical_fault() {
        // With a single detector layer the first-round outcome is never
        // compared to anything, so its flip is invisible but changes the
        // observable.
        let c = build_stability8(2, QubitLayout::default()).unwrap();
        assert!(matches!(
            stability_graph(&c, &NoiseModel::default()),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn time_like_edges_two_rounds_apart() {
        let r = 8;
        let g = graph(r);
        assert_eq!(g.num_detectors, 28);
        for a in 0..4 {
            for round in 3..=r - 2 {
                let u = DetectorIndex::new(a, round).linear();
                let v = DetectorIndex::new(a, round + 2).linear();
                assert!(
                    g.edges.iter().any(|e| e.a == u && e.b == Some(v)),
                    "missing {a} {round}"
                );
            }
        }
        for e in &g.edges {
            assert!((e.weight - edge_weight(e.probability).unwrap()).abs() < 1e-12);
            assert!(e.weight > 0.0);
        }
    }

    #[test]
    fn bulk_rounds_translate() {
        let r = 10;
        let g = graph(r);
        let signature = |round: usize| {
            let mut sig: Vec<(i64, i64, u64, bool)> = Vec::new();
            for a in 0..4 {
                let u = DetectorIndex::new(a, round).linear();
                for &ei in g.incident(u) {
                    let e = &g.edges[ei];
                    let other = e.other(u, g.boundary());
                    let rel = if other == g.boundary() {
                        (i64::MAX, -1)
                    } else {
                        let d = DetectorIndex::from_linear(other);
                        (d.round as i64 - round as i64, d.ancilla as i64)
                    };
                    sig.push((
                        a as i64,
                        rel.0 * 10 + rel.1,
                        (e.probability * 1e15).round() as u64,
                        e.flips_observable,
                    ));
                }
            }
            sig.sort();
            sig
        };
        let reference = signature(4);
        for round in 5..=r - 3 {
            assert_eq!(signature(round), reference, "round {round}");
        }
    }

    #[test]
    fn text_roundtrip() {
        let g = graph(4);
        let back = DecodingGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(back.num_detectors, g.num_detectors);
        assert_eq!(back.edges.len(), g.edges.len());
        for (x, y) in back.edges.iter().zip(&g.edges) {
            assert_eq!(
                (x.a, x.b, x.flips_observable),
                (y.a, y.b, y.flips_observable)
            );
            assert!((x.probability - y.probability).abs() < 1e-12 * y.probability);
        }
        assert!(!back.has_measurement_tags());
        assert!(DecodingGraph::from_text("0 1 0.1 2.0").is_err());
    }

    #[test]
    fn dijkstra_on_chain() {
        let edges = vec![
            Edge::new(0, Some(1), 0.1, false).unwrap(),
            Edge::new(1, Some(2), 0.1, true).unwrap(),
            Edge::new(2, None, 0.2, false).unwrap(),
        ];
        let g = DecodingGraph::new(3, edges).unwrap();
        let sp = dijkstra(&g, 0).unwrap();
        let w = edge_weight(0.1).unwrap();
        assert!((sp.dist[2] - 2.0 * w).abs() < 1e-12);
        assert!(sp.path_parity(&g, 2));
        assert_eq!(sp.path_edges(&g, 3), vec![2, 1, 0]);
    }

    #[test]
    fn negative_weight_rejected() {
        let g = DecodingGraph::new(2, vec![Edge::new(0, Some(1), 0.7, false).unwrap()]).unwrap();
        assert!(matches!(dijkstra(&g, 0), Err(Error::NegativeWeight { .. })));
    }
}
