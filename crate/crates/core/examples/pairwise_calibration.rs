//! Recovers edge probabilities of a known graph from detector correlations.

use stability_lab::calibration::{candidates_of, estimate_from_moments, sample_graph_moments};
use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::graph::stability_graph;
use stability_lab::noise::NoiseModel;

fn main() -> stability_lab::Result<()> {
    let circuit = build_stability8(5, QubitLayout::default())?;
    let graph = stability_graph(&circuit, &NoiseModel::standard(0.02)?)?;
    let candidates = candidates_of(&graph);
    let acc = sample_graph_moments(&graph, &candidates, 11, 500_000);
    let est = estimate_from_moments(&acc, &candidates)?;

    let mut worst = (0.0f64, 0);
    for (k, (e, p)) in graph.edges.iter().zip(&est.probabilities).enumerate() {
        let d = (p - e.probability).abs();
        if d > worst.0 {
            worst = (d, k);
        }
        if k < 8 {
            println!("edge {k:>3}: model {:.5} estimate {p:.5}", e.probability);
        }
    }
    println!("largest deviation {:.5} on edge {}", worst.0, worst.1);
    Ok(())
}
