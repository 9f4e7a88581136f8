//! Decoding graphs at p = 0.03 are pinned byte for byte. Set
//! `STABILITY_LAB_BLESS=1` to rewrite the files after an intended change.

use std::path::PathBuf;

use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::graph::{stability_graph, DecodingGraph};
use stability_lab::noise::NoiseModel;

fn check(rounds: usize) {
    let circuit = build_stability8(rounds, QubitLayout::default()).unwrap();
    let graph = stability_graph(&circuit, &NoiseModel::standard(0.03).unwrap()).unwrap();
    let text = graph.to_text();
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/graph_r{rounds}.txt"));
    if std::env::var_os("STABILITY_LAB_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        golden,
        "graph for R={rounds} drifted from {}",
        path.display()
    );

    let back = DecodingGraph::from_text(&golden).unwrap();
    assert_eq!(back.to_text(), golden);
    assert_eq!(back.num_detectors, graph.num_detectors);
}

#[test]
fn three_rounds() {
    check(3);
}

#[test]
fn eight_rounds() {
    check(8);
}
