//! Feedback-delay estimation from excited-state decay ("T1 clock").
//!
//! A qubit is measured (M1), a decoder-conditioned X gate is applied after an
//! unknown delay T_d when the decoder output L is 1, and the qubit is measured
//! again (M2) a fixed time T after M1. Reference experiments (a T1 decay curve,
//! a prepare-and-measure confusion matrix and a back-to-back double
//! measurement) pin down the readout model; the feedback statistics then give
//! first T and then T_d.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::fit_exp_decay;
use crate::sampler::shot_rng;
use crate::{Error, Result};

/// `m(t) = a * exp(-t / t1) + b`: probability of reading 1 a time `t` after
/// preparing the excited state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub t1: f64,
    pub b: f64,
    pub rms: f64,
}

impl DecayFit {
    pub fn new(a: f64, t1: f64, b: f64) -> Result<Self> {
        let d = DecayFit { a, t1, b, rms: 0.0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0)
            || !(0.0..=1.0).contains(&self.b)
            || !(self.a >= 0.0 && self.a + self.b <= 1.0)
        {
            return Err(Error::Domain(format!(
                "decay (A={}, T1={}, B={}) violates T1 > 0, 0 <= B <= A + B <= 1",
                self.a, self.t1, self.b
            )));
        }
        Ok(())
    }

    pub fn m(&self, t: f64) -> f64 {
        self.a * (-t / self.t1).exp() + self.b
    }
}

/// Least-squares fit of the decay curve.
pub fn fit_exponential(t: &[f64], p: &[f64]) -> Result<DecayFit> {
    let f = fit_exp_decay(t, p)?;
    Ok(DecayFit {
        a: f.amplitude,
        t1: f.tau,
        b: f.offset,
        rms: f.rms,
    })
}

/// Fit with the offset held at `b`. Two points are solved in closed form.
pub fn fit_exponential_fixed_offset(t: &[f64], p: &[f64], b: f64) -> Result<DecayFit> {
    if t.len() != p.len() || t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} times for {} values; need two or more",
            t.len(),
            p.len()
        )));
    }
    if t.len() == 2 {
        let (y0, y1) = (p[0] - b, p[1] - b);
        if !(y0 > 0.0 && y1 > 0.0) || t[0] == t[1] || y0 == y1 {
            return Err(Error::Fit(
                "two-point solve needs distinct times and values above the offset".into(),
            ));
        }
        let t1 = (t[1] - t[0]) / (y0 / y1).ln();
        if !(t1 > 0.0) {
            return Err(Error::Fit(format!("two-point solve gave T1 = {t1}")));
        }
        return Ok(DecayFit {
            a: y0 * (t[0] / t1).exp(),
            t1,
            b,
            rms: 0.0,
        });
    }
    let model = |t: f64, q: &[f64], g: &mut [f64]| {
        let tau = q[1].exp();
        let e = (-t / tau).exp();
        g[0] = e;
        g[1] = q[0] * e * t / tau;
        q[0] * e + b
    };
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - t.iter().cloned().fold(f64::INFINITY, f64::min);
    let starts: Vec<Vec<f64>> = [0.1, 0.3, 1.0, 3.0]
        .iter()
        .map(|&s| vec![p[0] - b, (s * span).ln()])
        .collect();
    let f = crate::fit::multi_start(&model, t, p, &starts)?;
    Ok(DecayFit {
        a: f.params[0],
        t1: f.params[1].exp(),
        b,
        rms: f.rms,
    })
}

fn check_column_stochastic(m: &[[f64; 2]; 2], what: &str) -> Result<()> {
    for j in 0..2 {
        if m.iter().any(|row| !(0.0..=1.0).contains(&row[j]))
            || (m[0][j] + m[1][j] - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "{what} column {j} is not a probability vector"
            )));
        }
    }
    Ok(())
}

/// `m[i][j] = P(M = i | S = j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub m: [[f64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        check_column_stochastic(&m, "confusion matrix")?;
        Ok(ConfusionMatrix { m })
    }

    /// From `P(M=1|S=0)` and `P(M=0|S=1)`.
    pub fn from_errors(p10: f64, p01: f64) -> Result<Self> {
        Self::new([[1.0 - p10, p01], [p10, 1.0 - p01]])
    }

    pub fn identity() -> Self {
        ConfusionMatrix {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn p10(&self) -> f64 {
        self.m[1][0]
    }
}

/// `q[i][j] = P(S = i | M = j)` right after a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostMeasurementMatrix {
    pub q: [[f64; 2]; 2],
    /// Largest adjustment applied when clamping the raw solve into [0, 1].
    pub clamp: f64,
}

impl PostMeasurementMatrix {
    pub fn new(q: [[f64; 2]; 2]) -> Result<Self> {
        check_column_stochastic(&q, "post-measurement matrix")?;
        Ok(PostMeasurementMatrix { q, clamp: 0.0 })
    }
}

/// Solves `P(M'2=1 | M'1=j) = P10 * Q[0][j] + m(t_r) * Q[1][j]` with
/// `Q[0][j] + Q[1][j] = 1` for each column. `double_stats[i][j]` is
/// `P(M'2 = i | M'1 = j)`.
pub fn solve_post_measurement(
    pms: &ConfusionMatrix,
    double_stats: &[[f64; 2]; 2],
    t_r: f64,
    decay: &DecayFit,
) -> Result<PostMeasurementMatrix> {
    check_column_stochastic(double_stats, "double-measurement statistics")?;
    let p10 = pms.p10();
    let mr = decay.m(t_r);
    let det = mr - p10;
    if det.abs() < 1e-6 {
        return Err(Error::IllConditioned(format!(
            "m(t_r) = {mr} is indistinguishable from P10 = {p10}"
        )));
    }
    let mut q = [[0.0; 2]; 2];
    let mut clamp = 0.0f64;
    for j in 0..2 {
        let raw = (double_stats[1][j] - p10) / det;
        let s1 = raw.clamp(0.0, 1.0);
        clamp = clamp.max((raw - s1).abs());
        q[1][j] = s1;
        q[0][j] = 1.0 - s1;
    }
    Ok(PostMeasurementMatrix { q, clamp })
}

/// `P(S1 = i) = sum_j Q[i][j] * P(M1 = j)`.
pub fn state_distribution(pm1: [f64; 2], q: &PostMeasurementMatrix) -> [f64; 2] {
    [0, 1].map(|i| q.q[i][0] * pm1[0] + q.q[i][1] * pm1[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStats {
    /// `P(M1 = j)`.
    pub pm1: [f64; 2],
    pub p_m2_given_l0: f64,
    pub p_m2_given_l1: f64,
    /// Ring-down delay between back-to-back measurements.
    pub t_r: f64,
}

impl FeedbackStats {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.pm1[0],
            self.pm1[1],
            self.p_m2_given_l0,
            self.p_m2_given_l1,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.pm1[0] + self.pm1[1] - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(
                "feedback statistics are not valid probabilities".into(),
            ));
        }
        Ok(())
    }
}

/// Post-selecting on L = 0: `m(T) = [P(M2=1|L=0) - P10 P(S1=0)] / P(S1=1)` and
/// `T = -T1 ln((m(T) - B) / A)`.
pub fn recover_total_time(
    stats: &FeedbackStats,
    pms: &ConfusionMatrix,
    q: &PostMeasurementMatrix,
    decay: &DecayFit,
) -> Result<f64> {
    stats.validate()?;
    let ps = state_distribution(stats.pm1, q);
    if ps[1] < 1e-9 {
        return Err(Error::Degenerate(
            "P(S1 = 1) vanishes; m(T) is undefined".into(),
        ));
    }
    let m_t = (stats.p_m2_given_l0 - pms.p10() * ps[0]) / ps[1];
    if !(m_t > decay.b && m_t < decay.a + decay.b) {
        return Err(Error::OutOfRange(format!(
            "m(T) = {m_t} lies outside ({}, {})",
            decay.b,
            decay.a + decay.b
        )));
    }
    Ok(-decay.t1 * ((m_t - decay.b) / decay.a).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub td: f64,
    pub alpha: f64,
    /// Second admissible root, when the quadratic has two in (0, 1].
    pub alternative: Option<f64>,
}

/// Solves the feedback equation for `alpha = exp(-T_d / T1)`:
///
/// `P(M2=1|L=1) = (c/alpha + B) P(S1=0) + [(c/alpha + B)(1 - alpha) + P10 alpha] P(S1=1)`
///
/// with `c = m(T) - B`. Multiplying by alpha gives a quadratic, linear when
/// `P10 = B` or `P(S1=1) = 0`.
pub fn recover_delay(
    stats: &FeedbackStats,
    pms: &ConfusionMatrix,
    q: &PostMeasurementMatrix,
    decay: &DecayFit,
    total_time: f64,
) -> Result<DelayEstimate> {
    stats.validate()?;
    let ps = state_distribution(stats.pm1, q);
    let (b, p10, y) = (decay.b, pms.p10(), stats.p_m2_given_l1);
    let c = decay.m(total_time) - b;
    let a2 = ps[1] * (p10 - b);
    let a1 = b * ps[0] - y + (b - c) * ps[1];
    let a0 = c * (ps[0] + ps[1]);
    let scale = a0.abs().max(a1.abs()).max(1e-300);
    let roots: Vec<f64> = if a2.abs() <= 1e-12 * scale {
        if a1 == 0.0 {
            return Err(Error::Infeasible("feedback equation is degenerate".into()));
        }
        vec![-a0 / a1]
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            return Err(Error::Infeasible(format!(
                "complex roots (discriminant {disc:e})"
            )));
        }
        let s = disc.sqrt();
        // Numerically stable pair.
        let qv = -0.5 * (a1 + a1.signum() * s);
        let mut r = vec![qv / a2];
        if qv != 0.0 {
            r.push(a0 / qv);
        }
        r
    };
    const TOL: f64 = 1e-9;
    let mut ok: Vec<f64> = roots
        .into_iter()
        .filter(|&r| r > 0.0 && r <= 1.0 + TOL)
        .map(|r| r.min(1.0))
        .collect();
    ok.sort_by(|x, y| y.total_cmp(x));
    ok.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let td = |alpha: f64| -decay.t1 * alpha.ln();
    match ok.as_slice() {
        [] => Err(Error::Infeasible(
            "no root for exp(-T_d/T1) in (0, 1]".into(),
        )),
        [alpha] => Ok(DelayEstimate {
            td: td(*alpha),
            alpha: *alpha,
            alternative: None,
        }),
        [alpha, other, ..] => Ok(DelayEstimate {
            td: td(*alpha),
            alpha: *alpha,
            alternative: Some(td(*other)),
        }),
    }
}

/// Distribution of the feedback delay in the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySource {
    Fixed(f64),
    Gamma { k: f64, theta: f64 },
}

/// Ground truth for the forward simulator. Outcome probabilities follow the
/// estimator's own model exactly, so the chain can be checked as an inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    pub decay: DecayFit,
    pub pms: ConfusionMatrix,
    pub q: PostMeasurementMatrix,
    pub pm1: [f64; 2],
    /// Probability that the decoder output L is 1, independent of the state.
    pub p_l1: f64,
    pub t_r: f64,
    pub total_time: f64,
    pub delay: DelaySource,
}

/// Sizes of the reference and feedback experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub decay_times: Vec<f64>,
    pub decay_shots: u64,
    pub pms_shots: u64,
    pub double_shots: u64,
    pub feedback_shots: u64,
}

impl ExperimentPlan {
    /// Decay sampled every 2 us out to 60 us.
    pub fn standard(feedback_shots: u64) -> Self {
        ExperimentPlan {
            decay_times: (0..=30).map(|i| 2.0 * i as f64).collect(),
            decay_shots: 20_000,
            pms_shots: 100_000,
            double_shots: 100_000,
            feedback_shots,
        }
    }
}

/// Observed (or exact) statistics of every experiment, plus the shot counts
/// needed to resample them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub plan: ExperimentPlan,
    pub decay_p: Vec<f64>,
    pub pms: ConfusionMatrix,
    pub double_pm1: [f64; 2],
    pub double_stats: [[f64; 2]; 2],
    pub feedback: FeedbackStats,
    pub p_l1: f64,
    /// `P(M1 = M2 | L = l)`.
    pub agreement: [f64; 2],
}

fn m2_probability(model: &ForwardModel, s1: bool, l: bool, td: f64) -> f64 {
    let d = &model.decay;
    let p10 = model.pms.p10();
    let t = model.total_time;
    let td = td.min(t);
    match (l, s1) {
        (false, false) => p10,
        (false, true) => d.m(t),
        (true, false) => d.m(t - td),
        (true, true) => {
            let alpha = (-td / d.t1).exp();
            d.m(t - td) * (1.0 - alpha) + p10 * alpha
        }
    }
}

/// Expected value of [`m2_probability`] over the delay distribution.
fn mean_m2_probability(model: &ForwardModel, s1: bool, l: bool) -> Result<f64> {
    match model.delay {
        DelaySource::Fixed(td) => Ok(m2_probability(model, s1, l, td)),
        DelaySource::Gamma { k, theta } => {
            if !l {
                return Ok(m2_probability(model, s1, l, 0.0));
            }
            let d = &model.decay;
            if theta >= d.t1 {
                return Err(Error::Domain(
                    "E[exp(T_d/T1)] diverges for theta >= T1".into(),
                ));
            }
            let e_alpha = (1.0 + theta / d.t1).powf(-k);
            let e_inv_alpha = (1.0 - theta / d.t1).powf(-k);
            let c = d.a * (-model.total_time / d.t1).exp();
            Ok(if s1 {
                e_alpha * model.pms.p10() + c * (e_inv_alpha - 1.0) + d.b * (1.0 - e_alpha)
            } else {
                c * e_inv_alpha + d.b
            })
        }
    }
}

fn validate_model(model: &ForwardModel) -> Result<()> {
    model.decay.validate()?;
    check_column_stochastic(&model.pms.m, "confusion matrix")?;
    check_column_stochastic(&model.q.q, "post-measurement matrix")?;
    if (model.pm1[0] + model.pm1[1] - 1.0).abs() > 1e-9 || !(0.0..=1.0).contains(&model.p_l1) {
        return Err(Error::InvalidArgument(
            "M1 marginal or L probability is not a probability".into(),
        ));
    }
    if !(model.total_time > 0.0 && model.t_r >= 0.0) {
        return Err(Error::InvalidArgument(
            "T must be positive and t_r non-negative".into(),
        ));
    }
    match model.delay {
        DelaySource::Fixed(td) if !(td >= 0.0 && td <= model.total_time) => Err(
            Error::InvalidArgument(format!("T_d = {td} must lie in [0, T]")),
        ),
        DelaySource::Gamma { k, theta } if !(k > 0.0 && theta > 0.0) => Err(
            Error::InvalidArgument("gamma delay needs k, theta > 0".into()),
        ),
        _ => Ok(()),
    }
}

fn double_m2_probability(model: &ForwardModel, m1: usize) -> f64 {
    let mr = model.decay.m(model.t_r);
    model.pms.p10() * model.q.q[0][m1] + mr * model.q.q[1][m1]
}

/// Infinite-statistics reference data.
pub fn analytic_data(model: &ForwardModel, plan: &ExperimentPlan) -> Result<ReferenceData> {
    validate_model(model)?;
    let ps = state_distribution(model.pm1, &model.q);
    let mut p_m2 = [0.0; 2];
    let mut agreement = [0.0; 2];
    for l in [false, true] {
        let p0 = mean_m2_probability(model, false, l)?;
        let p1 = mean_m2_probability(model, true, l)?;
        p_m2[l as usize] = ps[0] * p0 + ps[1] * p1;
        // P(M1 = M2) = sum_j P(M1=j) sum_i Q[i][j] P(M2=j | S1=i)
        agreement[l as usize] = (0..2)
            .map(|j| {
                let pm2_1 = model.q.q[0][j] * p0 + model.q.q[1][j] * p1;
                model.pm1[j] * if j == 1 { pm2_1 } else { 1.0 - pm2_1 }
            })
            .sum();
    }
    let dm = [
        double_m2_probability(model, 0),
        double_m2_probability(model, 1),
    ];
    Ok(ReferenceData {
        plan: plan.clone(),
        decay_p: plan.decay_times.iter().map(|&t| model.decay.m(t)).collect(),
        pms: model.pms,
        double_pm1: model.pm1,
        double_stats: [[1.0 - dm[0], 1.0 - dm[1]], [dm[0], dm[1]]],
        feedback: FeedbackStats {
            pm1: model.pm1,
            p_m2_given_l0: p_m2[0],
            p_m2_given_l1: p_m2[1],
            t_r: model.t_r,
        },
        p_l1: model.p_l1,
        agreement,
    })
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("probability clamped")
        .sample(rng)
}

fn ratio(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct FeedbackCounts {
    m1: [u64; 2],
    l: [u64; 2],
    m2_and_l: [u64; 2],
    agree_and_l: [u64; 2],
}

impl FeedbackCounts {
    fn merge(mut self, o: FeedbackCounts) -> Self {
        for i in 0..2 {
            self.m1[i] += o.m1[i];
            self.l[i] += o.l[i];
            self.m2_and_l[i] += o.m2_and_l[i];
            self.agree_and_l[i] += o.agree_and_l[i];
        }
        self
    }
}

/// Monte Carlo of every experiment. Feedback shots are simulated one by one
/// with per-shot seeding; the reference experiments use binomial counts.
pub fn forward_simulate(
    model: &ForwardModel,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<ReferenceData> {
    validate_model(model)?;
    let gamma = match model.delay {
        DelaySource::Gamma { k, theta } => {
            Some(Gamma::new(k, theta).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        }
        DelaySource::Fixed(_) => None,
    };
    let counts = (0..plan.feedback_shots)
        .into_par_iter()
        .fold(FeedbackCounts::default, |mut c, shot| {
            let mut rng = shot_rng(seed, shot);
            let m1 = rng.random::<f64>() < model.pm1[1];
            let s1 = rng.random::<f64>() < model.q.q[1][m1 as usize];
            let l = rng.random::<f64>() < model.p_l1;
            let td = match (model.delay, &gamma) {
                (DelaySource::Fixed(td), _) => td,
                (_, Some(g)) => g.sample(&mut rng),
                _ => unreachable!(),
            };
            let m2 = rng.random::<f64>() < m2_probability(model, s1, l, td);
            c.m1[m1 as usize] += 1;
            c.l[l as usize] += 1;
            c.m2_and_l[l as usize] += m2 as u64;
            c.agree_and_l[l as usize] += (m1 == m2) as u64;
            c
        })
        .reduce(FeedbackCounts::default, FeedbackCounts::merge);

    // Reference experiments draw from a stream past the feedback shots.
    let mut rng = shot_rng(seed, u64::MAX);
    let decay_p = plan
        .decay_times
        .iter()
        .map(|&t| {
            ratio(
                binomial(&mut rng, plan.decay_shots, model.decay.m(t)),
                plan.decay_shots,
            )
        })
        .collect();
    let p10 = ratio(
        binomial(&mut rng, plan.pms_shots, model.pms.m[1][0]),
        plan.pms_shots,
    );
    let p11 = ratio(
        binomial(&mut rng, plan.pms_shots, model.pms.m[1][1]),
        plan.pms_shots,
    );
    let n1 = binomial(&mut rng, plan.double_shots, model.pm1[1]);
    let n = [plan.double_shots - n1, n1];
    let k = [0, 1].map(|j| binomial(&mut rng, n[j], double_m2_probability(model, j)));
    let dm = [ratio(k[0], n[0]), ratio(k[1], n[1])];
    let n_fb = plan.feedback_shots;
    Ok(ReferenceData {
        plan: plan.clone(),
        decay_p,
        pms: ConfusionMatrix {
            m: [[1.0 - p10, 1.0 - p11], [p10, p11]],
        },
        double_pm1: [
            ratio(n[0], plan.double_shots),
            ratio(n[1], plan.double_shots),
        ],
        double_stats: [[1.0 - dm[0], 1.0 - dm[1]], [dm[0], dm[1]]],
        feedback: FeedbackStats {
            pm1: [ratio(counts.m1[0], n_fb), ratio(counts.m1[1], n_fb)],
            p_m2_given_l0: ratio(counts.m2_and_l[0], counts.l[0]),
            p_m2_given_l1: ratio(counts.m2_and_l[1], counts.l[1]),
            t_r: model.t_r,
        },
        p_l1: ratio(counts.l[1], n_fb),
        agreement: [
            ratio(counts.agree_and_l[0], counts.l[0]),
            ratio(counts.agree_and_l[1], counts.l[1]),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainEstimate {
    pub decay: DecayFit,
    pub q: PostMeasurementMatrix,
    pub ps1: [f64; 2],
    pub total_time: f64,
    pub delay: DelayEstimate,
}

/// Runs the full chain: decay fit, post-measurement matrix, T, then T_d.
pub fn estimate_chain(data: &ReferenceData) -> Result<ChainEstimate> {
    let decay = fit_exponential(&data.plan.decay_times, &data.decay_p)?;
    let q = solve_post_measurement(&data.pms, &data.double_stats, data.feedback.t_r, &decay)?;
    let total_time = recover_total_time(&data.feedback, &data.pms, &q, &decay)?;
    let delay = recover_delay(&data.feedback, &data.pms, &q, &decay, total_time)?;
    Ok(ChainEstimate {
        decay,
        q,
        ps1: state_distribution(data.feedback.pm1, &q),
        total_time,
        delay,
    })
}

/// Parametric resample of every dataset from its observed frequencies.
pub fn resample<R: Rng>(data: &ReferenceData, rng: &mut R) -> ReferenceData {
    let plan = &data.plan;
    let decay_p = data
        .decay_p
        .iter()
        .map(|&p| ratio(binomial(rng, plan.decay_shots, p), plan.decay_shots))
        .collect();
    let p10 = ratio(
        binomial(rng, plan.pms_shots, data.pms.m[1][0]),
        plan.pms_shots,
    );
    let p11 = ratio(
        binomial(rng, plan.pms_shots, data.pms.m[1][1]),
        plan.pms_shots,
    );
    let n1 = binomial(rng, plan.double_shots, data.double_pm1[1]);
    let n = [plan.double_shots - n1, n1];
    let dm = [0, 1].map(|j| ratio(binomial(rng, n[j], data.double_stats[1][j]), n[j]));
    let nf = plan.feedback_shots;
    let m1 = binomial(rng, nf, data.feedback.pm1[1]);
    let l1 = binomial(rng, nf, data.p_l1);
    let nl = [nf - l1, l1];
    let pm2 = [
        ratio(binomial(rng, nl[0], data.feedback.p_m2_given_l0), nl[0]),
        ratio(binomial(rng, nl[1], data.feedback.p_m2_given_l1), nl[1]),
    ];
    ReferenceData {
        plan: plan.clone(),
        decay_p,
        pms: ConfusionMatrix {
            m: [[1.0 - p10, 1.0 - p11], [p10, p11]],
        },
        double_pm1: [
            ratio(n[0], plan.double_shots),
            ratio(n[1], plan.double_shots),
        ],
        double_stats: [[1.0 - dm[0], 1.0 - dm[1]], [dm[0], dm[1]]],
        feedback: FeedbackStats {
            pm1: [ratio(nf - m1, nf), ratio(m1, nf)],
            p_m2_given_l0: pm2[0],
            p_m2_given_l1: pm2[1],
            t_r: data.feedback.t_r,
        },
        p_l1: ratio(l1, nf),
        agreement: data.agreement,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub estimate: ChainEstimate,
    pub total_time: Interval,
    pub delay: Interval,
    pub replicates: usize,
    /// Replicates where the chain failed (excluded from the intervals).
    pub failures: usize,
}

fn interval(estimate: f64, mut xs: Vec<f64>) -> Interval {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd =
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0)).sqrt();
    let at = |q: f64| xs[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    Interval {
        estimate,
        sd,
        lo: at(0.025),
        hi: at(0.975),
    }
}

/// Point estimate plus parametric-bootstrap standard deviations and 95%
/// percentile intervals for T and T_d.
pub fn bootstrap(data: &ReferenceData, replicates: usize, seed: u64) -> Result<BootstrapReport> {
    if replicates < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least two replicates".into(),
        ));
    }
    let estimate = estimate_chain(data)?;
    let reps: Vec<Option<(f64, f64)>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = shot_rng(seed, r);
            estimate_chain(&resample(data, &mut rng))
                .ok()
                .map(|e| (e.total_time, e.delay.td))
        })
        .collect();
    let ok: Vec<(f64, f64)> = reps.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(Error::InsufficientData(
            "fewer than two bootstrap replicates succeeded".into(),
        ));
    }
    Ok(BootstrapReport {
        total_time: interval(estimate.total_time, ok.iter().map(|x| x.0).collect()),
        delay: interval(estimate.delay.td, ok.iter().map(|x| x.1).collect()),
        estimate,
        replicates,
        failures: replicates - ok.len(),
    })
}

fn data_rows<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(v) => rows.push(v),
            // A header line is allowed before the first data row.
            Err(_) if rows.is_empty() && n == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", n + 1))),
        }
    }
    Ok(rows)
}

/// Reads `t,p` pairs.
pub fn read_decay_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = data_rows(r)?;
    if let Some(bad) = rows.iter().position(|r| r.len() != 2) {
        return Err(Error::Parse(format!(
            "decay row {} does not have two fields",
            bad + 1
        )));
    }
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

pub fn write_decay_csv<W: Write>(mut w: W, t: &[f64], p: &[f64]) -> Result<()> {
    writeln!(w, "t_us,p")?;
    for (t, p) in t.iter().zip(p) {
        writeln!(w, "{t},{p}")?;
    }
    Ok(())
}

/// Reads a 2x2 matrix stored as one row `m00,m01,m10,m11`.
pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<[[f64; 2]; 2]> {
    let rows = data_rows(r)?;
    match rows.as_slice() {
        [row] if row.len() == 4 => Ok([[row[0], row[1]], [row[2], row[3]]]),
        _ => Err(Error::Parse(
            "matrix file must hold one row of four values".into(),
        )),
    }
}

pub fn write_matrix_csv<W: Write>(mut w: W, m: &[[f64; 2]; 2]) -> Result<()> {
    writeln!(w, "m00,m01,m10,m11")?;
    writeln!(w, "{},{},{},{}", m[0][0], m[0][1], m[1][0], m[1][1])?;
    Ok(())
}
