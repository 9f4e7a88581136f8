use stability_lab::reset::{
    fit_reset_decay, fit_two_tone, mhz, steady_photon_number, synth_two_tone, DispersiveParams,
    QubitState,
};

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| mhz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

fn main() -> stability_lab::Result<()> {
    let params = DispersiveParams::from_chi(mhz(-2.5), mhz(-1000.0), mhz(3.0), 2.0, 20.0)?;
    for dr in [-4.0, -2.5, 0.0, 2.5] {
        println!(
            "dr {dr:>5} MHz: n_g {:.3} n_e {:.3}",
            steady_photon_number(mhz(dr), QubitState::Ground, &params),
            steady_photon_number(mhz(dr), QubitState::Excited, &params)
        );
    }

    let map = synth_two_tone(
        &params,
        &axis(-12.0, 12.0, 97),
        &axis(-12.0, 2.0, 561),
        mhz(0.3),
        0.02,
        9,
    )?;
    let fit = fit_two_tone(&map)?;
    println!(
        "chi/2pi {:.3} MHz  kappa/2pi {:.3} MHz  n0 {:.3}",
        fit.chi / mhz(1.0),
        fit.kappa / mhz(1.0),
        fit.n0
    );

    let tau: Vec<f64> = (0..40).map(|i| 0.05 * i as f64).collect();
    let pop: Vec<f64> = tau
        .iter()
        .map(|&t| 0.045 + 0.9 * (-t / 0.31f64).exp())
        .collect();
    let decay = fit_reset_decay(&tau, &pop)?;
    println!(
        "reset: a {:.4}  T {:.4} us  residual after 2 us {:.2e}",
        decay.a,
        decay.t,
        decay.residual(2.0)
    );
    Ok(())
}
