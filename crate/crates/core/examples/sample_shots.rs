use stability_lab::circuit::{build_stability8, QubitLayout};
use stability_lab::noise::NoiseModel;
use stability_lab::sampler::{defect_rates, write_shots_csv, Sampler};

fn main() -> stability_lab::Result<()> {
    let circuit = build_stability8(6, QubitLayout::default())?;
    let sampler = Sampler::new(&circuit, &NoiseModel::standard(0.03)?)?;
    let shots = sampler.sample_batch(42, 20_000);

    // Defect rates per detector, grouped by round.
    for (r, row) in defect_rates(&shots).chunks(4).enumerate() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.4}")).collect();
        println!("round {}: {}", r + 2, cells.join("  "));
    }
    let flips = shots.iter().filter(|s| s.observable_flip_truth).count();
    println!("observable flipped in {flips} of {} shots", shots.len());

    let mut head = Vec::new();
    write_shots_csv(&mut head, &shots[..3])?;
    print!("{}", String::from_utf8_lossy(&head));
    Ok(())
}
