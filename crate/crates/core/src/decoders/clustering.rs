use std::collections::VecDeque;

use super::{check_defects, correction_parity, DecodeResult, MatchPair};
use crate::graph::DecodingGraph;
use crate::{Error, Result};

struct Clusters {
    parent: Vec<usize>,
    size: Vec<usize>,
    odd: Vec<bool>,
    boundary: Vec<bool>,
    members: Vec<Vec<usize>>,
}

impl Clusters {
    fn new(nodes: usize, boundary_node: usize) -> Self {
        let mut boundary = vec![false; nodes];
        boundary[boundary_node] = true;
        Clusters {
            parent: (0..nodes).collect(),
            size: vec![1; nodes],
            odd: vec![false; nodes],
            boundary,
            members: (0..nodes).map(|v| vec![v]).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) =
            if self.size[ra] > self.size[rb] || (self.size[ra] == self.size[rb] && ra < rb) {
                (ra, rb)
            } else {
                (rb, ra)
            };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.odd[big] ^= self.odd[small];
        self.boundary[big] |= self.boundary[small];
        let moved = std::mem::take(&mut self.members[small]);
        self.members[big].extend(moved);
    }

    fn active(&self, root: usize) -> bool {
        self.parent[root] == root && self.odd[root] && !self.boundary[root]
    }
}

/// Weightless union-find decoder: odd clusters grow by half-edges in
/// synchronized steps (ascending root order), merge on collision, and a
/// peeling pass over each cluster's spanning forest yields the correction.
pub fn decode_clustering(graph: &DecodingGraph, defects: &[usize]) -> Result<DecodeResult> {
    let defects = check_defects(graph, defects)?;
    if defects.is_empty() {
        return Ok(DecodeResult::empty());
    }
    let boundary = graph.boundary();
    let nodes = graph.num_detectors + 1;
    let mut clusters = Clusters::new(nodes, boundary);
    let mut is_defect = vec![false; nodes];
    for &d in &defects {
        is_defect[d] = true;
        clusters.odd[d] = true;
    }
    let mut growth = vec![0u8; graph.edges.len()];
    let mut steps = 0;
    loop {
        let active: Vec<usize> = (0..nodes).filter(|&r| clusters.active(r)).collect();
        if active.is_empty() {
            break;
        }
        steps += 1;
        let mut fused = Vec::new();
        let mut grew = false;
        for root in active {
            for &v in &clusters.members[root] {
                for &e in graph.incident(v) {
                    if growth[e] < 2 {
                        growth[e] += 1;
                        grew = true;
                        if growth[e] == 2 {
                            fused.push(e);
                        }
                    }
                }
            }
        }
        if !grew {
            return Err(Error::Infeasible(
                "odd cluster cannot grow and has no boundary".into(),
            ));
        }
        for e in fused {
            let edge = &graph.edges[e];
            clusters.union(edge.a, edge.b.unwrap_or(boundary));
        }
    }

    // Peel a BFS forest of fully grown edges, rooted at the boundary first.
    let mut parent_edge: Vec<Option<usize>> = vec![None; nodes];
    let mut visited = vec![false; nodes];
    let mut order = Vec::new();
    let starts = std::iter::once(boundary).chain(defects.iter().copied());
    for s in starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &e in graph.incident(u) {
                if growth[e] != 2 {
                    continue;
                }
                let v = graph.edges[e].other(u, boundary);
                if !visited[v] {
                    visited[v] = true;
                    parent_edge[v] = Some(e);
                    queue.push_back(v);
                }
            }
        }
    }
    let mut marked = is_defect.clone();
    let mut correction = Vec::new();
    for &v in order.iter().rev() {
        if !marked[v] {
            continue;
        }
        if let Some(e) = parent_edge[v] {
            correction.push(e);
            marked[v] = false;
            let u = graph.edges[e].other(v, boundary);
            marked[u] ^= true;
        }
    }
    if defects.iter().any(|&d| marked[d]) {
        return Err(Error::Inconsistent(
            "peeling left an unpaired defect".into(),
        ));
    }
    correction.sort_unstable();

    let mut by_cluster: Vec<(usize, usize)> =
        defects.iter().map(|&d| (clusters.find(d), d)).collect();
    by_cluster.sort_unstable();
    let mut matching: Vec<MatchPair> = Vec::new();
    let mut i = 0;
    while i < by_cluster.len() {
        let root = by_cluster[i].0;
        let mut j = i;
        while j < by_cluster.len() && by_cluster[j].0 == root {
            j += 1;
        }
        let group: Vec<usize> = by_cluster[i..j].iter().map(|x| x.1).collect();
        for pair in group.chunks(2) {
            matching.push((pair[0], pair.get(1).copied()));
        }
        i = j;
    }
    matching.sort_unstable();

    Ok(DecodeResult {
        logical_flip: correction_parity(graph, &correction),
        matching,
        total_weight: 0.0,
        grow_steps: steps,
        correction,
    })
}
