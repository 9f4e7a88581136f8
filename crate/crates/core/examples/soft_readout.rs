//! Hard versus soft-information matching on the same IQ readout.

use stability_lab::calibration::apply_soft_weights;
use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::decoders::{decode_mwpm, decode_mwpm_with_weights};
use stability_lab::graph::stability_graph;
use stability_lab::noise::NoiseModel;
use stability_lab::sampler::{IqModel, Sampler};

fn main() -> stability_lab::Result<()> {
    let error = 0.07;
    let iq = IqModel::with_assignment_error(error, 1.0)?;
    println!(
        "classifier separation {:.3}",
        iq.classifier().mahalanobis_separation()
    );

    let noise = NoiseModel::standard(0.03)?;
    let circuit = build_stability8(6, QubitLayout::default())?;
    let graph = stability_graph(
        &circuit,
        &NoiseModel {
            measurement_flip: error,
            ..noise
        },
    )?;
    let shots = Sampler::new(&circuit, &noise)?.sample_soft_batch(&iq, 3, 10_000);

    let (mut hard, mut soft) = (0, 0);
    for s in &shots {
        let defects = s.defects();
        let h = decode_mwpm(&graph, &defects)?;
        let w = apply_soft_weights(&graph, iq.classifier(), s)?;
        let o = decode_mwpm_with_weights(&graph, &w, &defects)?;
        hard += usize::from(h.logical_flip != s.observable_flip_truth);
        soft += usize::from(o.logical_flip != s.observable_flip_truth);
    }
    let n = shots.len() as f64;
    println!("hard {:.4}  soft {:.4}", hard as f64 / n, soft as f64 / n);
    Ok(())
}
