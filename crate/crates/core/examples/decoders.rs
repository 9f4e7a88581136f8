//! Logical error of MWPM and clustering against detector rounds.

use rayon::prelude::*;
use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::decoders::{correction_syndrome, decode_clustering, decode_mwpm};
use stability_lab::graph::stability_graph;
use stability_lab::noise::NoiseModel;
use stability_lab::sampler::Sampler;

fn main() -> stability_lab::Result<()> {
    let noise = NoiseModel::standard(0.03)?;
    let shots = 20_000;
    println!("{:>7} {:>10} {:>10}", "rounds", "mwpm", "clustering");
    for rounds in [5, 9, 13, 17] {
        let circuit = build_stability8(rounds + 1, QubitLayout::default())?;
        let graph = stability_graph(&circuit, &noise)?;
        let batch = Sampler::new(&circuit, &noise)?.sample_batch(7, shots);
        let (m, c) = batch
            .par_iter()
            .map(|s| {
                let defects = s.defects();
                let m = decode_mwpm(&graph, &defects).expect("graph reaches the boundary");
                let c = decode_clustering(&graph, &defects).expect("graph reaches the boundary");
                assert_eq!(correction_syndrome(&graph, &c.correction), defects);
                (
                    u64::from(m.logical_flip != s.observable_flip_truth),
                    u64::from(c.logical_flip != s.observable_flip_truth),
                )
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        println!(
            "{rounds:>7} {:>10.4} {:>10.4}",
            m as f64 / shots as f64,
            c as f64 / shots as f64
        );
    }
    Ok(())
}
