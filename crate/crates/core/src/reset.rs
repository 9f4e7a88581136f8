//! Dispersive steady-state formulas, two-tone spectroscopy maps and the fits
//! used to characterise the resonator-assisted reset.
//!
//! Frequencies are angular (rad/us, i.e. angular MHz); use [`mhz`] to convert
//! from ordinary MHz.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::{fit_exp_decay, multi_start};
use crate::{Error, Result};

/// Angular frequency for `f` in MHz.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveParams {
    pub g: f64,
    /// Qubit-resonator detuning.
    pub delta: f64,
    pub kappa: f64,
    pub n0: f64,
    pub t1: f64,
}

impl DispersiveParams {
    pub fn new(g: f64, delta: f64, kappa: f64, n0: f64, t1: f64) -> Result<Self> {
        let p = DispersiveParams {
            g,
            delta,
            kappa,
            n0,
            t1,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with a given dispersive shift at detuning `delta`.
    pub fn from_chi(chi: f64, delta: f64, kappa: f64, n0: f64, t1: f64) -> Result<Self> {
        if chi * delta <= 0.0 {
            return Err(Error::Domain(format!(
                "chi = {chi} must be nonzero with the sign of delta = {delta}"
            )));
        }
        Self::new((chi * delta).sqrt(), delta, kappa, n0, t1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0.0 || !self.delta.is_finite() {
            return Err(Error::Domain("detuning must be nonzero".into()));
        }
        if !(self.kappa > 0.0 && self.n0 > 0.0 && self.t1 > 0.0) {
            return Err(Error::Domain(format!(
                "kappa = {}, n0 = {}, T1 = {} must be positive",
                self.kappa, self.n0, self.t1
            )));
        }
        Ok(())
    }

    /// `chi = g^2 / delta`.
    pub fn chi(&self) -> f64 {
        self.g * self.g / self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitState {
    Ground,
    Excited,
}

/// `n0 / (1 + 4 (dr ± chi)^2 / kappa^2)`, `+` for ground and `-` for excited.
pub fn steady_photon_number(dr: f64, state: QubitState, params: &DispersiveParams) -> f64 {
    photon_number(dr, state, params.chi(), params.kappa, params.n0)
}

fn photon_number(dr: f64, state: QubitState, chi: f64, kappa: f64, n0: f64) -> f64 {
    let x = match state {
        QubitState::Ground => dr + chi,
        QubitState::Excited => dr - chi,
    };
    n0 / (1.0 + 4.0 * x * x / (kappa * kappa))
}

/// ac-Stark shift `2 chi n`.
pub fn stark_shift(n: f64, params: &DispersiveParams) -> f64 {
    2.0 * params.chi() * n
}

/// Excited-state population over a grid: `pop[i][j]` at resonator detuning
/// `dr[i]` and qubit probe detuning `dq[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoToneMap {
    pub dr: Vec<f64>,
    pub dq: Vec<f64>,
    pub pop: Vec<Vec<f64>>,
}

fn lorentzian(x: f64, fwhm: f64) -> f64 {
    1.0 / (1.0 + 4.0 * x * x / (fwhm * fwhm))
}

/// Baseline 0.5 with a Lorentzian dip toward 0 centred on the excited-branch
/// Stark shift and a rise toward 1 on the ground branch, plus Gaussian noise,
/// clamped to [0, 1].
pub fn synth_two_tone(
    params: &DispersiveParams,
    dr: &[f64],
    dq: &[f64],
    linewidth: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<TwoToneMap> {
    params.validate()?;
    if dr.is_empty() || dq.is_empty() {
        return Err(Error::InvalidArgument(
            "two-tone grids must be non-empty".into(),
        ));
    }
    if !(linewidth > 0.0) || !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(
            "linewidth must be positive and noise_sd non-negative".into(),
        ));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let pop = dr
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ce = stark_shift(steady_photon_number(r, QubitState::Excited, params), params);
            let cg = stark_shift(steady_photon_number(r, QubitState::Ground, params), params);
            dq.iter()
                .map(|&q| {
                    let v = 0.5 - 0.5 * lorentzian(q - ce, linewidth)
                        + 0.5 * lorentzian(q - cg, linewidth);
                    let n = if noise_sd > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (v + n).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(TwoToneMap {
        dr: dr.to_vec(),
        dq: dq.to_vec(),
        pop,
    })
}

impl TwoToneMap {
    /// Header `dr\dq,<dq...>`, then one row per resonator detuning.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "dr\\dq")?;
        for q in &self.dq {
            write!(w, ",{q}")?;
        }
        writeln!(w)?;
        for (r, row) in self.dr.iter().zip(&self.pop) {
            write!(w, "{r}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("'{s}': {e}")))
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty two-tone file".into()))??;
        let dq = header
            .split(',')
            .skip(1)
            .map(parse)
            .collect::<Result<Vec<_>>>()?;
        let (mut dr, mut pop) = (Vec::new(), Vec::new());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split(',');
            dr.push(parse(f.next().unwrap_or(""))?);
            let row = f.map(parse).collect::<Result<Vec<_>>>()?;
            if row.len() != dq.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} values for {} columns",
                    dr.len(),
                    row.len(),
                    dq.len()
                )));
            }
            pop.push(row);
        }
        Ok(TwoToneMap { dr, dq, pop })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoToneFit {
    pub chi: f64,
    pub kappa: f64,
    pub n0: f64,
    /// RMS of the branch-centre residuals.
    pub rms: f64,
    pub rows_excited: usize,
    pub rows_ground: usize,
}

/// Extremum location along one row, refined by a parabola through the
/// neighbouring points.
fn refine(dq: &[f64], row: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= row.len() {
        return dq[k];
    }
    let (y0, y1, y2) = (row[k - 1], row[k], row[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return dq[k];
    }
    let off = (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0);
    let h = if off >= 0.0 {
        dq[k + 1] - dq[k]
    } else {
        dq[k] - dq[k - 1]
    };
    dq[k] + off * h
}

/// Full width at half depth of the dip in `row`, or `None` if it runs off the
/// grid.
fn dip_fwhm(dq: &[f64], row: &[f64]) -> Option<f64> {
    let (k, &vmin) = row.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 - 0.5 * (0.5 - vmin);
    let left = (0..k).rev().find(|&i| row[i] >= half)?;
    let right = (k + 1..row.len()).find(|&i| row[i] >= half)?;
    Some(dq[right] - dq[left])
}

/// Minimum number of resolved rows per branch.
const MIN_BRANCH_ROWS: usize = 4;

/// Extracts the branch centres row by row (the dip for the excited branch, the
/// peak for the ground branch), keeping rows where the extremum is nearly as
/// deep as on well-separated rows, then fits the centre model
/// `2 chi n0 / (1 + 4 (dr ∓ chi)^2 / kappa^2)`.
pub fn fit_two_tone(map: &TwoToneMap) -> Result<TwoToneFit> {
    if map.dr.len() != map.pop.len()
        || map.pop.iter().any(|r| r.len() != map.dq.len())
        || map.dq.len() < 3
    {
        return Err(Error::InvalidArgument(
            "two-tone map is ragged or too small".into(),
        ));
    }
    let mut dips = Vec::new();
    let mut peaks = Vec::new();
    for (i, row) in map.pop.iter().enumerate() {
        let (kmin, &vmin) = row
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty row");
        let (kmax, &vmax) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty row");
        dips.push((i, 0.5 - vmin, refine(&map.dq, row, kmin)));
        peaks.push((i, vmax - 0.5, refine(&map.dq, row, kmax)));
    }
    let resolved = |mut v: Vec<(usize, f64, f64)>| -> Vec<(f64, f64)> {
        let mut depths: Vec<f64> = v.iter().map(|x| x.1).collect();
        depths.sort_by(|a, b| b.total_cmp(a));
        let top = &depths[..depths.len().div_ceil(4)];
        let typical = top[top.len() / 2];
        v.retain(|x| x.1 > 0.8 * typical);
        v.into_iter().map(|(i, _, c)| (map.dr[i], c)).collect()
    };
    // Width of the deepest dip, for the overlap check below.
    let deepest = dips
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|d| d.0)
        .expect("rows");
    let fwhm = dip_fwhm(&map.dq, &map.pop[deepest])
        .ok_or_else(|| Error::Degenerate("probe line is wider than the scanned range".into()))?;
    let e = resolved(dips);
    let g = resolved(peaks);
    if e.len() < MIN_BRANCH_ROWS || g.len() < MIN_BRANCH_ROWS {
        return Err(Error::Degenerate(format!(
            "branches unresolved: {} excited and {} ground rows clear of overlap",
            e.len(),
            g.len()
        )));
    }

    // Starting point: the branch maxima sit at dr = chi (excited) and dr = -chi
    // (ground), with centre 2 chi n0.
    let extreme = |b: &[(f64, f64)]| {
        *b.iter()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("rows")
    };
    let (dre, ce) = extreme(&e);
    let (drg, cg) = extreme(&g);
    let shift_range = |b: &[(f64, f64)]| {
        let (lo, hi) = b
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
                (l.min(p.1), h.max(p.1))
            });
        hi - lo
    };
    if shift_range(&e).min(shift_range(&g)) < fwhm {
        return Err(Error::Degenerate(format!(
            "branch overlap: probe FWHM {fwhm:.3} exceeds the resolved Stark-shift range"
        )));
    }
    let chi0 = 0.5 * (dre - drg);
    if chi0.abs() < 1e-12 {
        return Err(Error::Degenerate(
            "branch maxima coincide; chi is unresolved".into(),
        ));
    }
    let n00 = 0.5 * (ce + cg) / (2.0 * chi0);

    let xs: Vec<f64> = (0..e.len() + g.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = e.iter().chain(&g).map(|p| p.1).collect();
    let rows: Vec<(f64, bool)> = e
        .iter()
        .map(|p| (p.0, true))
        .chain(g.iter().map(|p| (p.0, false)))
        .collect();
    let model = |x: f64, p: &[f64], grad: &mut [f64]| {
        let (dr, excited) = rows[x as usize];
        let (chi, kappa, n0) = (p[0], p[1], p[2]);
        let s = if excited { -1.0 } else { 1.0 };
        let u = dr + s * chi;
        let den = 1.0 + 4.0 * u * u / (kappa * kappa);
        let v = 2.0 * chi * n0 / den;
        let dv_du = -v * 8.0 * u / (kappa * kappa) / den;
        grad[0] = 2.0 * n0 / den + dv_du * s;
        grad[1] = v * 8.0 * u * u / (kappa * kappa * kappa) / den;
        grad[2] = 2.0 * chi / den;
        v
    };
    let starts: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&f| vec![chi0, f * chi0.abs(), n00])
        .collect();
    let f = multi_start(&model, &xs, &ys, &starts)?;
    Ok(TwoToneFit {
        chi: f.params[0],
        kappa: f.params[1].abs(),
        n0: f.params[2],
        rms: f.rms,
        rows_excited: e.len(),
        rows_ground: g.len(),
    })
}

/// `a + b exp(-tau / t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetDecayFit {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub rms: f64,
}

impl ResetDecayFit {
    pub fn eval(&self, tau: f64) -> f64 {
        self.a + self.b * (-tau / self.t).exp()
    }

    /// Excited population left above the steady state after a reset of
    /// length `duration`.
    pub fn residual(&self, duration: f64) -> f64 {
        self.b * (-duration / self.t).exp()
    }
}

pub fn fit_reset_decay(tau: &[f64], pop: &[f64]) -> Result<ResetDecayFit> {
    let f = fit_exp_decay(tau, pop)?;
    Ok(ResetDecayFit {
        a: f.offset,
        b: f.amplitude,
        t: f.tau,
        rms: f.rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa_mhz: f64) -> DispersiveParams {
        DispersiveParams::from_chi(mhz(-2.5), mhz(-1000.0), mhz(kappa_mhz), 2.0, 20.0).unwrap()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| mhz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn photon_number_shape() {
        let p = params(3.0);
        let chi = p.chi();
        assert!((chi - mhz(-2.5)).abs() < 1e-9);
        assert!((steady_photon_number(-chi, QubitState::Ground, &p) - 2.0).abs() < 1e-12);
        assert!((steady_photon_number(chi, QubitState::Excited, &p) - 2.0).abs() < 1e-12);
        for s in [-0.5, 0.5] {
            let n = steady_photon_number(-chi + s * p.kappa, QubitState::Ground, &p);
            assert!((n - 1.0).abs() < 1e-12);
        }
        // Branch peaks are 2|chi| apart.
        assert!(((chi - (-chi)).abs() / (2.0 * PI) - 5.0).abs() < 1e-9);
        // Mirror symmetry between the branches.
        for dr in [-3.0, 0.4, 7.0] {
            let a = steady_photon_number(dr, QubitState::Ground, &p);
            let b = steady_photon_number(-dr, QubitState::Excited, &p);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stark_values() {
        let p = params(3.0);
        assert_eq!(stark_shift(0.0, &p), 0.0);
        assert!((stark_shift(2.0, &p) / (2.0 * PI) + 10.0).abs() < 1e-9);
        let n = steady_photon_number(1.3, QubitState::Excited, &p);
        assert!((stark_shift(n, &p) / (2.0 * p.chi()) - n).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        assert!(DispersiveParams::from_chi(mhz(2.5), mhz(-1000.0), 1.0, 1.0, 1.0).is_err());
        assert!(DispersiveParams::new(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(DispersiveParams::new(1.0, -1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn far_detuned_probe_is_flat() {
        let m = synth_two_tone(
            &params(3.0),
            &grid(-10.0, 10.0, 11),
            &grid(200.0, 210.0, 11),
            mhz(0.3),
            0.0,
            1,
        )
        .unwrap();
        assert!(m.pop.iter().flatten().all(|&v| (v - 0.5).abs() < 1e-4));
    }

    fn standard_map(kappa_mhz: f64, noise: f64) -> TwoToneMap {
        synth_two_tone(
            &params(kappa_mhz),
            &grid(-12.0, 12.0, 97),
            &grid(-12.0, 2.0, 561),
            mhz(0.3),
            noise,
            9,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_fit_is_tight() {
        let f = fit_two_tone(&standard_map(3.0, 0.0)).unwrap();
        assert!((f.chi / mhz(-2.5) - 1.0).abs() < 1e-3, "{f:?}");
        assert!((f.kappa / mhz(3.0) - 1.0).abs() < 1e-3, "{f:?}");
        assert!((f.n0 / 2.0 - 1.0).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn kappa_scaling() {
        let f = fit_two_tone(&standard_map(6.0, 0.0)).unwrap();
        assert!((f.kappa / mhz(6.0) - 1.0).abs() < 1e-2, "{f:?}");
    }

    #[test]
    fn map_is_deterministic_and_bounded() {
        let a = standard_map(3.0, 0.05);
        assert_eq!(a, standard_map(3.0, 0.05));
        assert!(a.pop.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(TwoToneMap::read_csv(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn unresolved_branches_rejected() {
        let m = synth_two_tone(
            &params(3.0),
            &grid(-10.0, 10.0, 21),
            &grid(-12.0, 2.0, 141),
            mhz(40.0),
            0.0,
            1,
        )
        .unwrap();
        assert!(matches!(fit_two_tone(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reset_decay_values() {
        let tau: Vec<f64> = (0..30).map(|i| 0.05 * i as f64).collect();
        let pop: Vec<f64> = tau
            .iter()
            .map(|&t| 0.045 + 0.9 * (-t / 0.31).exp())
            .collect();
        let f = fit_reset_decay(&tau, &pop).unwrap();
        assert!((f.a - 0.045).abs() < 1e-8 && (f.t - 0.31).abs() < 1e-8);
        assert!(f.residual(1.5) < 0.01);
        let flat = fit_reset_decay(&tau, &vec![0.2; tau.len()]).unwrap();
        assert!(flat.b.abs() < 1e-12 && (flat.a - 0.2).abs() < 1e-12);
    }
}
