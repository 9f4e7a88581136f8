//! The Pauli-frame sampler and the fault enumeration behind the decoding graph
//! must agree on every single fault, and faults must compose linearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::graph::{enumerate_faults, stability_graph};
use stability_lab::noise::NoiseModel;
use stability_lab::sampler::Sampler;

fn xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

#[test]
fn single_faults_match_enumeration() {
    let noise = NoiseModel::standard(0.03).unwrap();
    for rounds in [3, 4, 6] {
        let circuit = build_stability8(rounds, QubitLayout::default()).unwrap();
        let sampler = Sampler::new(&circuit, &noise).unwrap();
        let faults = enumerate_faults(&circuit, &noise).unwrap();
        assert!(!faults.is_empty());
        for f in &faults {
            let shot = sampler.inject(&[f.site]).unwrap();
            let expected: Vec<usize> = f.defects.iter().map(|d| d.linear()).collect();
            assert_eq!(shot.defects(), expected, "{:?}", f.site);
            assert_eq!(
                shot.observable_flip_truth, f.flips_observable,
                "{:?}",
                f.site
            );
        }
    }
}

#[test]
fn fault_pairs_compose_by_xor() {
    let noise = NoiseModel::standard(0.03).unwrap();
    let circuit = build_stability8(5, QubitLayout::default()).unwrap();
    let sampler = Sampler::new(&circuit, &noise).unwrap();
    let faults = enumerate_faults(&circuit, &noise).unwrap();
    let base = sampler.inject(&[]).unwrap();
    assert!(base.defects().is_empty() && !base.observable_flip_truth);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let a = &faults[rng.random_range(0..faults.len())];
        let b = &faults[rng.random_range(0..faults.len())];
        if a.site.op == b.site.op {
            continue;
        }
        let sa = sampler.inject(&[a.site]).unwrap();
        let sb = sampler.inject(&[b.site]).unwrap();
        let both = sampler.inject(&[a.site, b.site]).unwrap();
        assert_eq!(both.detectors, xor(&sa.detectors, &sb.detectors));
        assert_eq!(both.measurements, xor(&sa.measurements, &sb.measurements));
        assert_eq!(
            both.observable_flip_truth,
            sa.observable_flip_truth ^ sb.observable_flip_truth
        );
    }
}

/// Sampled detector firing rates against the independent-edge prediction of
/// the graph. Depolarizing channels are not exactly independent mechanisms,
/// so a small absolute slack is allowed on top of the sampling error.
#[test]
fn defect_rates_match_graph_prediction() {
    let noise = NoiseModel::standard(0.01).unwrap();
    let circuit = build_stability8(5, QubitLayout::default()).unwrap();
    let graph = stability_graph(&circuit, &noise).unwrap();
    let shots = 100_000;
    let batch = Sampler::new(&circuit, &noise)
        .unwrap()
        .sample_batch(17, shots);
    let rates = stability_lab::sampler::defect_rates(&batch);
    for (i, &r) in rates.iter().enumerate() {
        let p = graph.defect_rate(i);
        let sd = (p * (1.0 - p) / shots as f64).sqrt();
        assert!(
            (r - p).abs() < 5.0 * sd + 5e-4,
            "detector {i}: sampled {r} predicted {p}"
        );
    }
}
