use stability_lab::realtime::{
    biased_delay_estimate, detect_backlog, response_time, simulate_stream, DecodeTimeSource,
    GammaFit, LatencyModel,
};

fn main() -> stability_lab::Result<()> {
    let model = LatencyModel::default();
    let b = response_time(&model, 9)?;
    print!("{}", b.to_table());

    for per_round in [0.44, 0.79, 2.0] {
        let stream = LatencyModel {
            decode_time: DecodeTimeSource::Fixed(per_round),
            ..model.clone()
        };
        let timeline = simulate_stream(&stream, 3000, 1, 5)?;
        let backlog = detect_backlog(&timeline)?;
        println!(
            "{per_round:.2} us/round: {:?}, max queue {}",
            backlog,
            timeline.max_queue_depth()
        );
    }

    let bias = biased_delay_estimate(
        GammaFit {
            k: 2.0,
            theta: 0.39,
        },
        13.0,
    )?;
    println!(
        "gamma delay mean 0.78 us, exp-weighted estimate {:.4} us",
        bias.estimate
    );
    Ok(())
}
