//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use stability_lab::calibration::{
    apply_soft_weights, candidates_of, estimate_from_moments, sample_graph_moments,
};
use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::decoders::{
    brute_force_matching, correction_syndrome, decode_clustering, decode_mwpm,
    decode_mwpm_with_weights,
};
use stability_lab::graph::{stability_graph, DecodingGraph};
use stability_lab::noise::NoiseModel;
use stability_lab::realtime::{
    biased_delay_estimate, detect_backlog, expected_exp_decay, response_time, simulate_stream,
    Backlog, DecodeTimeSource, GammaFit, LatencyModel,
};
use stability_lab::reset::{fit_reset_decay, fit_two_tone, mhz, synth_two_tone, DispersiveParams};
use stability_lab::sampler::{IqModel, Sampler};
use stability_lab::t1_clock::{
    bootstrap, forward_simulate, ConfusionMatrix, DecayFit, DelaySource, ExperimentPlan,
    ForwardModel, PostMeasurementMatrix,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn graph_for(detector_rounds: usize, noise: &NoiseModel) -> (Sampler, DecodingGraph) {
    let circuit = build_stability8(detector_rounds + 1, QubitLayout::default()).unwrap();
    (
        Sampler::new(&circuit, noise).unwrap(),
        stability_graph(&circuit, noise).unwrap(),
    )
}

fn within_limit(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn logical_error_suppression() -> Outcome {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let noise = NoiseModel::standard(0.03).unwrap();
    let shots = 100_000u64;
    let points: Vec<(usize, f64, f64)> = pool.install(|| {
        [5, 9, 13, 17, 21, 25]
            .into_iter()
            .map(|rounds| {
                let (sampler, graph) = graph_for(rounds, &noise);
                let fails = (0..shots)
                    .filter(|&s| {
                        let shot = sampler.sample_shot(2024, s);
                        decode_mwpm(&graph, &shot.defects()).unwrap().logical_flip
                            != shot.observable_flip_truth
                    })
                    .count();
                let p = fails as f64 / shots as f64;
                (rounds, p, (p * (1.0 - p) / shots as f64).sqrt())
            })
            .collect()
    });
    let elapsed = start.elapsed();
    let trend = points
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
    let text: Vec<String> = points
        .iter()
        .map(|(r, p, _)| format!("{r}:{p:.4}"))
        .collect();
    outcome(
        trend && within_limit(elapsed, 300.0),
        format!(
            "{} single-threaded in {:.1}s",
            text.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn mwpm_exactness() -> Outcome {
    let start = Instant::now();
    let noise = NoiseModel::standard(0.03).unwrap();
    let graphs: Vec<DecodingGraph> = (2..=7).map(|r| graph_for(r, &noise).1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 1000 {
        let graph = &graphs[rng.random_range(0..graphs.len())];
        let k = rng.random_range(1..=12usize);
        let mut defects: Vec<usize> =
            rand::seq::index::sample(&mut rng, graph.num_detectors, k.min(graph.num_detectors))
                .into_vec();
        defects.sort_unstable();
        let m = decode_mwpm(graph, &defects).unwrap();
        let b = brute_force_matching(graph, &defects).unwrap();
        worst = worst.max((m.total_weight - b.total_weight).abs());
        cases += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && within_limit(elapsed, 60.0),
        format!(
            "{cases} syndromes, max |mwpm - brute| = {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn decoder_validity() -> Outcome {
    let start = Instant::now();
    let noise = NoiseModel::standard(0.03).unwrap();
    let (sampler, graph) = graph_for(9, &noise);
    let shots = 100_000u64;
    let (mv, cv) = (0..shots)
        .into_par_iter()
        .map(|s| {
            let shot = sampler.sample_shot(31, s);
            let defects = shot.defects();
            let m = decode_mwpm(&graph, &defects)
                .map(|r| correction_syndrome(&graph, &r.correction) == defects);
            let c = decode_clustering(&graph, &defects)
                .map(|r| correction_syndrome(&graph, &r.correction) == defects);
            (u64::from(m == Ok(true)), u64::from(c == Ok(true)))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    outcome(
        mv == shots && cv == shots,
        format!(
            "mwpm {mv}/{shots}, clustering {cv}/{shots} valid, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn soft_information() -> Outcome {
    let start = Instant::now();
    let error = 0.07;
    let noise = NoiseModel::standard(0.03).unwrap();
    let iq = IqModel::with_assignment_error(error, 1.0).unwrap();
    let circuit = build_stability8(6, QubitLayout::default()).unwrap();
    let sampler = Sampler::new(&circuit, &noise).unwrap();
    let graph = stability_graph(
        &circuit,
        &NoiseModel {
            measurement_flip: error,
            ..noise
        },
    )
    .unwrap();
    let shots = 100_000u64;
    let (hard, soft, only_hard, only_soft) = (0..shots)
        .into_par_iter()
        .map(|s| {
            let shot = sampler.sample_soft_shot(&iq, 5, s);
            let defects = shot.defects();
            let h =
                decode_mwpm(&graph, &defects).unwrap().logical_flip != shot.observable_flip_truth;
            let w = apply_soft_weights(&graph, iq.classifier(), &shot).unwrap();
            let o = decode_mwpm_with_weights(&graph, &w, &defects)
                .unwrap()
                .logical_flip
                != shot.observable_flip_truth;
            (
                u64::from(h),
                u64::from(o),
                u64::from(h && !o),
                u64::from(o && !h),
            )
        })
        .reduce(
            || (0, 0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
        );
    let n = shots as f64;
    let d = (only_hard as f64 - only_soft as f64) / n;
    let se = (((only_hard + only_soft) as f64 / n - d * d) / n).sqrt();
    let elapsed = start.elapsed();
    outcome(
        soft <= hard && d >= 3.0 * se && within_limit(elapsed, 600.0),
        format!(
            "hard {:.4} soft {:.4}, difference {:.1} SE, {:.1}s",
            hard as f64 / n,
            soft as f64 / n,
            d / se,
            elapsed.as_secs_f64()
        ),
    )
}

fn pairwise_recovery() -> Outcome {
    let start = Instant::now();
    let noise = NoiseModel::standard(0.03).unwrap();
    let (_, topology) = graph_for(5, &noise);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let truth: Vec<f64> = topology
        .edges
        .iter()
        .map(|_| rng.random_range(0.005..=0.05))
        .collect();
    let graph = topology.with_probabilities(&truth).unwrap();
    let candidates = candidates_of(&graph);
    let acc = sample_graph_moments(&graph, &candidates, 123, 1_000_000);
    let est = estimate_from_moments(&acc, &candidates).unwrap();
    let (mut bulk, mut boundary) = (0.0f64, 0.0f64);
    for (c, (p, t)) in candidates.iter().zip(est.probabilities.iter().zip(&truth)) {
        let dev = (p - t).abs();
        if c.b.is_some() {
            bulk = bulk.max(dev);
        } else {
            boundary = boundary.max(dev);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bulk <= 0.002 && boundary <= 0.005 && within_limit(elapsed, 120.0),
        format!(
            "{} edges, max bulk error {bulk:.5}, max boundary error {boundary:.5}, {:.1}s",
            candidates.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn response_decomposition() -> Outcome {
    let b = response_time(&LatencyModel::default(), 9).unwrap();
    let ok = (b.total - 9.6).abs() < 1e-12
        && (b.decode - 6.5).abs() < 1e-12
        && (b.latency - 3.1).abs() < 1e-12;
    outcome(
        ok,
        format!(
            "total {:.3} us = decode {:.3} + latency {:.3}",
            b.total, b.decode, b.latency
        ),
    )
}

fn backlog_dichotomy() -> Outcome {
    let start = Instant::now();
    let run = |c: f64| {
        let model = LatencyModel {
            decode_time: DecodeTimeSource::Fixed(c),
            ..LatencyModel::default()
        };
        detect_backlog(&simulate_stream(&model, 5000, 1, 1).unwrap()).unwrap()
    };
    let fast = run(0.79);
    let slow = run(2.0);
    let expected = (2.0 - 1.7) / 1.7;
    let rel = (slow.slope() - expected).abs() / expected;
    let ok = matches!(fast, Backlog::Bounded { .. })
        && matches!(slow, Backlog::Growing { .. })
        && rel <= 0.10
        && within_limit(start.elapsed(), 30.0);
    outcome(
        ok,
        format!(
            "0.79 us -> {:?}; 2.0 us -> slope {:.4} vs {expected:.4} ({:.2}% off)",
            fast,
            slow.slope(),
            100.0 * rel
        ),
    )
}

fn gamma_bias() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, (k, theta, t1)) in [
        (2.0f64, 0.39f64, 13.0f64),
        (4.0, 0.1, 13.0),
        (1.0, 0.3, 10.0),
    ]
    .into_iter()
    .enumerate()
    {
        let dist = Gamma::new(k, theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let n = 1_000_000;
        let mc = (0..n)
            .map(|_| (-dist.sample(&mut rng) / t1).exp())
            .sum::<f64>()
            / n as f64;
        let closed = (1.0 + theta / t1).powf(-k);
        let lib = expected_exp_decay(GammaFit { k, theta }, t1).unwrap();
        worst = worst
            .max(((mc - closed) / closed).abs())
            .max(((lib - closed) / closed).abs());
    }
    let ratio = biased_delay_estimate(
        GammaFit {
            k: 2.0,
            theta: 0.39,
        },
        13.0,
    )
    .unwrap()
    .ratio;
    let target = 1.03f64.ln() / 0.03;
    let ok = worst <= 1e-3 && (ratio - target).abs() <= 1e-6 && within_limit(start.elapsed(), 60.0);
    outcome(
        ok,
        format!("max relative MC error {worst:.2e}; ratio {ratio:.9} vs {target:.9}"),
    )
}

fn t1_model(rng: Option<&mut ChaCha8Rng>) -> (ForwardModel, f64) {
    match rng {
        None => (
            ForwardModel {
                decay: DecayFit::new(0.87, 13.0, 0.08).unwrap(),
                pms: ConfusionMatrix::from_errors(0.03, 0.09).unwrap(),
                q: PostMeasurementMatrix::new([[0.97, 0.06], [0.03, 0.94]]).unwrap(),
                pm1: [0.55, 0.45],
                p_l1: 0.5,
                t_r: 0.5,
                total_time: 10.0,
                delay: DelaySource::Fixed(3.0),
            },
            3.0,
        ),
        Some(rng) => {
            let t1 = rng.random_range(8.0..20.0);
            let td = rng.random_range(1.0..6.0);
            let total = rng.random_range(td + 1.0..15.0f64.max(td + 1.5));
            let b = rng.random_range(0.02..0.1);
            let a = rng.random_range(0.8..1.0 - b);
            let (q0, q1) = (rng.random_range(0.9..0.99), rng.random_range(0.9..0.99));
            let pm = rng.random_range(0.3..0.7);
            (
                ForwardModel {
                    decay: DecayFit::new(a, t1, b).unwrap(),
                    pms: ConfusionMatrix::from_errors(
                        rng.random_range(0.01..0.1),
                        rng.random_range(0.01..0.1),
                    )
                    .unwrap(),
                    q: PostMeasurementMatrix::new([[q0, 1.0 - q1], [1.0 - q0, q1]]).unwrap(),
                    pm1: [pm, 1.0 - pm],
                    p_l1: 0.5,
                    t_r: 0.5,
                    total_time: total,
                    delay: DelaySource::Fixed(td),
                },
                td,
            )
        }
    }
}

fn t1_clock_round_trip() -> Outcome {
    let start = Instant::now();
    let plan = ExperimentPlan::standard(1_000_000);
    let (model, td) = t1_model(None);
    let data = forward_simulate(&model, &plan, 1).unwrap();
    let main = bootstrap(&data, 200, 2).unwrap();
    let main_ok = (main.delay.estimate - td).abs() <= 0.3;

    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut worst_z = 0.0f64;
    let mut failed_sets = 0;
    for set in 0..20u64 {
        let (model, td) = t1_model(Some(&mut rng));
        let data = forward_simulate(&model, &plan, 100 + set).unwrap();
        match bootstrap(&data, 200, 200 + set) {
            Ok(r) => worst_z = worst_z.max((r.delay.estimate - td).abs() / r.delay.sd),
            Err(_) => failed_sets += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        main_ok && failed_sets == 0 && worst_z <= 3.0 && within_limit(elapsed, 300.0),
        format!(
            "T_d {:.3} +- {:.3} (truth 3.0); 20 random sets: worst |z| {worst_z:.2}, {failed_sets} failures, {:.1}s",
            main.delay.estimate,
            main.delay.sd,
            elapsed.as_secs_f64()
        ),
    )
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| mhz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

fn reset_fits() -> Outcome {
    let start = Instant::now();
    let params = DispersiveParams::from_chi(mhz(-2.5), mhz(-1000.0), mhz(3.0), 2.0, 20.0).unwrap();
    let map = synth_two_tone(
        &params,
        &axis(-12.0, 12.0, 97),
        &axis(-12.0, 2.0, 561),
        mhz(0.3),
        0.02,
        4,
    )
    .unwrap();
    let tone = fit_two_tone(&map).unwrap();
    let chi = tone.chi / mhz(1.0);
    let kappa = tone.kappa / mhz(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tau: Vec<f64> = (0..40).map(|i| 0.05 * i as f64).collect();
    let pop: Vec<f64> = tau
        .iter()
        .map(|&t| {
            let p = 0.045 + 0.9 * (-t / 0.31f64).exp();
            Binomial::new(1000, p).unwrap().sample(&mut rng) as f64 / 1000.0
        })
        .collect();
    let decay = fit_reset_decay(&tau, &pop).unwrap();
    let ok = ((chi + 2.5) / 2.5).abs() <= 0.05
        && ((kappa - 3.0) / 3.0).abs() <= 0.05
        && (decay.a - 0.045).abs() <= 0.01
        && (decay.t - 0.31).abs() <= 0.03
        && within_limit(start.elapsed(), 60.0);
    outcome(
        ok,
        format!(
            "chi/2pi {chi:.3} MHz, kappa/2pi {kappa:.3} MHz, a {:.4}, T {:.4} us",
            decay.a, decay.t
        ),
    )
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let root =
        std::env::temp_dir().join(format!("stability-lab-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    let runs: [&[&str]; 8] = [
        &["--experiment", "sample", "--rounds", "5", "--shots", "2000"],
        &[
            "--experiment",
            "decode",
            "--rounds",
            "5",
            "--shots",
            "2000",
            "--decoder",
            "clustering",
        ],
        &[
            "--experiment",
            "sweep-rounds",
            "--rounds",
            "5,9",
            "--shots",
            "2000",
            "--set",
            "graph=true",
        ],
        &[
            "--experiment",
            "soft-compare",
            "--rounds",
            "5",
            "--shots",
            "2000",
        ],
        &[
            "--experiment",
            "calibrate",
            "--rounds",
            "4",
            "--shots",
            "20000",
        ],
        &[
            "--experiment",
            "realtime",
            "--rounds",
            "9",
            "--set",
            "timeline=true",
        ],
        &[
            "--experiment",
            "t1clock",
            "--shots",
            "100000",
            "--set",
            "replicates=20",
        ],
        &["--experiment", "reset-fit", "--shots", "1000"],
    ];
    let mut identical = 0;
    let mut notes = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let dirs: Vec<_> = ["a", "b"]
            .iter()
            .map(|t| root.join(format!("{i}{t}")))
            .collect();
        let mut ok = true;
        for d in &dirs {
            let o = Command::new(env!("CARGO_BIN_EXE_stability-lab"))
                .args(*args)
                .args(["--seed", "42", "--out", d.to_str().unwrap()])
                .output()
                .unwrap();
            ok &= o.status.success();
        }
        if ok && read_dir_sorted(&dirs[0]) == read_dir_sorted(&dirs[1]) {
            identical += 1;
        } else {
            notes.push(args[1].to_string());
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    outcome(
        identical == runs.len(),
        format!(
            "{identical}/{} experiment kinds byte-identical on repeat {notes:?}",
            runs.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("logical-error suppression", logical_error_suppression),
        ("MWPM exactness", mwpm_exactness),
        ("decoder validity", decoder_validity),
        ("soft-information direction", soft_information),
        ("pairwise-correlation recovery", pairwise_recovery),
        ("response-time decomposition", response_decomposition),
        ("backlog dichotomy", backlog_dichotomy),
        ("gamma bias", gamma_bias),
        ("T1-clock round trip", t1_clock_round_trip),
        ("reset fits", reset_fits),
        ("determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "{} [{:>2}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
