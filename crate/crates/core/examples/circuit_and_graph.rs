//! Builds the ring circuit for a few rounds and prints its schedule and the
//! decoding graph derived from fault enumeration.

use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::graph::stability_graph;
use stability_lab::noise::NoiseModel;

fn main() -> stability_lab::Result<()> {
    let circuit = build_stability8(3, QubitLayout::default())?;
    println!("{}", circuit.to_text());
    println!(
        "{} measurements, {} detectors, round {} ns",
        circuit.num_measurements(),
        circuit.num_detectors(),
        circuit.round_duration_ns()
    );

    let graph = stability_graph(&circuit, &NoiseModel::standard(0.03)?)?;
    let boundary = graph.edges.iter().filter(|e| e.is_boundary()).count();
    println!("{} edges ({boundary} to the boundary)", graph.edges.len());
    print!("{}", graph.to_text());
    Ok(())
}
