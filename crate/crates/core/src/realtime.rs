//! Timing model of the real-time decoding loop: response-time breakdown,
//! streaming throughput and backlog detection, and the Gamma-distributed
//! decode-time analysis used to bound the feedback-delay bias.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where decode times come from, in microseconds. For [`response_time`] a value
/// is the decode time of a full syndrome; for [`simulate_stream`] it is the
/// cost of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeTimeSource {
    Fixed(f64),
    Empirical(Vec<f64>),
    Gamma { k: f64, theta: f64 },
}

impl DecodeTimeSource {
    pub fn mean(&self) -> f64 {
        match self {
            DecodeTimeSource::Fixed(v) => *v,
            DecodeTimeSource::Empirical(xs) => xs.iter().sum::<f64>() / xs.len() as f64,
            DecodeTimeSource::Gamma { k, theta } => k * theta,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DecodeTimeSource::Fixed(v) => *v,
            DecodeTimeSource::Empirical(xs) => xs[rng.random_range(0..xs.len())],
            DecodeTimeSource::Gamma { k, theta } => Gamma::new(*k, *theta)
                .expect("validated gamma parameters")
                .sample(rng),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DecodeTimeSource::Fixed(v) if !(*v >= 0.0 && v.is_finite()) => Err(
                Error::InvalidArgument(format!("decode time {v} must be finite and >= 0")),
            ),
            DecodeTimeSource::Empirical(xs) if xs.is_empty() => Err(Error::InvalidArgument(
                "empirical decode-time list is empty".into(),
            )),
            DecodeTimeSource::Empirical(xs) if xs.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => {
                Err(Error::InvalidArgument(
                    "empirical decode times must be finite and >= 0".into(),
                ))
            }
            DecodeTimeSource::Gamma { k, theta } if !(*k > 0.0 && *theta > 0.0) => {
                Err(Error::InvalidArgument(format!(
                    "gamma parameters k={k}, theta={theta} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Durations in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub round_time: f64,
    pub readout_propagation: f64,
    pub buffer_time: f64,
    pub control_logic: f64,
    pub decode_time: DecodeTimeSource,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            round_time: 1.7,
            readout_propagation: 1.4,
            buffer_time: 0.05,
            control_logic: 1.7,
            decode_time: DecodeTimeSource::Fixed(6.5),
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("round_time", self.round_time),
            ("readout_propagation", self.readout_propagation),
            ("buffer_time", self.buffer_time),
            ("control_logic", self.control_logic),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        self.decode_time.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseBreakdown {
    pub rounds: usize,
    pub decode: f64,
    pub propagation: f64,
    pub control: f64,
    /// decode + propagation + control: from the final measurement to the
    /// conditional operation.
    pub total: f64,
    /// Communication and control share of `total`.
    pub latency: f64,
    /// rounds * round_time + total. Mid-circuit propagation overlaps with the
    /// following rounds and is not counted again.
    pub experiment: f64,
}

impl ResponseBreakdown {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (name, v) in [
            ("decode", self.decode),
            ("propagation", self.propagation),
            ("control", self.control),
            ("latency", self.latency),
            ("total", self.total),
            ("experiment", self.experiment),
        ] {
            s.push_str(&format!("{name:<12} {v:>10.3} us\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// Full decoding response time for an experiment of `rounds` rounds, using the
/// mean of the decode-time source.
pub fn response_time(model: &LatencyModel, rounds: usize) -> Result<ResponseBreakdown> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    model.validate()?;
    let decode = model.decode_time.mean();
    let latency = model.readout_propagation + model.control_logic;
    let total = decode + latency;
    Ok(ResponseBreakdown {
        rounds,
        decode,
        propagation: model.readout_propagation,
        control: model.control_logic,
        total,
        latency,
        experiment: rounds as f64 * model.round_time + total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RoundStart,
    RoundEnd,
    Buffered,
    DecodeStart,
    DecodeEnd,
    Feedback,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::RoundStart => "round_start",
            EventKind::RoundEnd => "round_end",
            EventKind::Buffered => "buffered",
            EventKind::DecodeStart => "decode_start",
            EventKind::DecodeEnd => "decode_end",
            EventKind::Feedback => "feedback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Round index, or the last round of the window for decode events.
    pub round: usize,
    pub t_us: f64,
    pub queue_depth: usize,
}

/// Queue depth observed when a decode window finishes while rounds are still
/// being produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSample {
    pub t_us: f64,
    pub decoded_rounds: usize,
    pub queue_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub total_rounds: usize,
    pub window_rounds: usize,
    pub events: Vec<Event>,
    pub depth: Vec<DepthSample>,
    /// Time at which the last round was produced.
    pub production_end: f64,
}

impl Timeline {
    pub fn max_queue_depth(&self) -> usize {
        self.events.iter().map(|e| e.queue_depth).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "event,round,t_us,queue_depth")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{:.6},{}",
                e.kind.name(),
                e.round,
                e.t_us,
                e.queue_depth
            )?;
        }
        Ok(())
    }
}

/// Discrete-event run of a producer emitting one round per `round_time` and a
/// single consumer decoding windows of `window_rounds` rounds. A round becomes
/// available `buffer_time` after it ends (the last one also waits for readout
/// propagation); the consumer starts a window as soon
/// as it is idle and a full window (or the final partial one) is available.
/// Per-round decode costs are drawn from the model's source.
pub fn simulate_stream(
    model: &LatencyModel,
    total_rounds: usize,
    window_rounds: usize,
    seed: u64,
) -> Result<Timeline> {
    if window_rounds == 0 {
        return Err(Error::InvalidArgument("window_rounds must be >= 1".into()));
    }
    if total_rounds == 0 {
        return Err(Error::InvalidArgument("total_rounds must be >= 1".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = model.round_time;
    // Only the final round waits for the readout to propagate; earlier
    // propagation overlaps with the following rounds.
    let available = |r: usize| {
        let extra = if r + 1 == total_rounds {
            model.readout_propagation
        } else {
            0.0
        };
        (r + 1) as f64 * tau + model.buffer_time + extra
    };
    let produced_by = |t: f64| (((t / tau) + 1e-9).floor() as usize).min(total_rounds);

    let mut events = Vec::with_capacity(4 * total_rounds);
    let mut decode_marks = Vec::new();
    let mut depth = Vec::new();
    let mut consumer_free = 0.0f64;
    let mut decoded = 0usize;
    while decoded < total_rounds {
        let last = (decoded + window_rounds).min(total_rounds) - 1;
        let start = consumer_free.max(available(last));
        let cost: f64 = (decoded..=last)
            .map(|_| model.decode_time.draw(&mut rng))
            .sum();
        let end = start + cost;
        decode_marks.push((start, end, decoded, last));
        decoded = last + 1;
        consumer_free = end;
        let produced = produced_by(end);
        if end <= total_rounds as f64 * tau {
            depth.push(DepthSample {
                t_us: end,
                decoded_rounds: decoded,
                queue_depth: produced.saturating_sub(decoded),
            });
        }
    }

    // Merge producer and consumer events in time order (ties: producer first).
    let ends: Vec<f64> = decode_marks.iter().map(|m| m.1).collect();
    let consumed_at = |t: f64| match ends.partition_point(|&e| e <= t) {
        0 => 0,
        k => decode_marks[k - 1].3 + 1,
    };
    let mut raw: Vec<(f64, u8, EventKind, usize)> = Vec::new();
    for r in 0..total_rounds {
        raw.push((r as f64 * tau, 0, EventKind::RoundStart, r));
        raw.push(((r + 1) as f64 * tau, 1, EventKind::RoundEnd, r));
        raw.push((available(r), 2, EventKind::Buffered, r));
    }
    for &(s, e, _, last) in &decode_marks {
        raw.push((s, 3, EventKind::DecodeStart, last));
        raw.push((e, 4, EventKind::DecodeEnd, last));
    }
    let feedback = consumer_free + model.control_logic;
    raw.push((feedback, 5, EventKind::Feedback, total_rounds - 1));
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
    for (t, _, kind, round) in raw {
        let produced = produced_by(t);
        let consumed = consumed_at(t);
        events.push(Event {
            kind,
            round,
            t_us: t,
            queue_depth: produced.saturating_sub(consumed),
        });
    }
    Ok(Timeline {
        total_rounds,
        window_rounds,
        events,
        depth,
        production_end: total_rounds as f64 * tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Backlog {
    Bounded { slope: f64 },
    Growing { slope: f64 },
}

impl Backlog {
    pub fn slope(&self) -> f64 {
        match *self {
            Backlog::Bounded { slope } | Backlog::Growing { slope } => slope,
        }
    }

    pub fn is_growing(&self) -> bool {
        matches!(self, Backlog::Growing { .. })
    }
}

pub const MIN_BACKLOG_ROUNDS: usize = 1000;
pub const BACKLOG_SLOPE_THRESHOLD: f64 = 1e-3;

/// Least-squares slope of queue depth against decoded rounds over the second
/// half of the production period. A consumer slower than the producer by a
/// per-round cost `c > round_time` gives slope `(c - round_time) / round_time`.
pub fn detect_backlog(timeline: &Timeline) -> Result<Backlog> {
    if timeline.total_rounds < MIN_BACKLOG_ROUNDS {
        return Err(Error::InsufficientData(format!(
            "{} rounds; backlog detection needs at least {MIN_BACKLOG_ROUNDS}",
            timeline.total_rounds
        )));
    }
    let half = &timeline.depth[timeline.depth.len() / 2..];
    if half.len() < 2 {
        return Err(Error::InsufficientData(
            "fewer than two depth samples in the second half".into(),
        ));
    }
    let n = half.len() as f64;
    let mx = half.iter().map(|s| s.decoded_rounds as f64).sum::<f64>() / n;
    let my = half.iter().map(|s| s.queue_depth as f64).sum::<f64>() / n;
    let sxx: f64 = half
        .iter()
        .map(|s| (s.decoded_rounds as f64 - mx).powi(2))
        .sum();
    let sxy: f64 = half
        .iter()
        .map(|s| (s.decoded_rounds as f64 - mx) * (s.queue_depth as f64 - my))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(if slope > BACKLOG_SLOPE_THRESHOLD {
        Backlog::Growing { slope }
    } else {
        Backlog::Bounded { slope }
    })
}

/// Gamma(k, theta) with theta in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub k: f64,
    pub theta: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.k * self.theta
    }
}

pub const MIN_GAMMA_SAMPLES: usize = 30;

/// Method-of-moments fit: `k = mean^2 / var`, `theta = var / mean`.
pub fn fit_gamma(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < MIN_GAMMA_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples; gamma fit needs at least {MIN_GAMMA_SAMPLES}",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(
            "gamma samples must be positive and finite".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= f64::EPSILON * mean * mean {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    Ok(GammaFit {
        k: mean * mean / var,
        theta: var / mean,
    })
}

/// `E[exp(-x / t1)]` for `x ~ Gamma(k, theta)`: `(1 + theta / t1)^(-k)`.
pub fn expected_exp_decay(fit: GammaFit, t1: f64) -> Result<f64> {
    if !(t1 > 0.0) {
        return Err(Error::Domain(format!("T1 = {t1} must be positive")));
    }
    Ok((1.0 + fit.theta / t1).powf(-fit.k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBias {
    /// `t1 * k * ln(1 + theta / t1)`.
    pub estimate: f64,
    /// `estimate / (k * theta)`.
    pub ratio: f64,
}

/// Delay an exponential-decay estimator reports when the true delay is
/// Gamma-distributed.
pub fn biased_delay_estimate(fit: GammaFit, t1: f64) -> Result<DelayBias> {
    if !(t1 > 0.0) {
        return Err(Error::Domain(format!("T1 = {t1} must be positive")));
    }
    let x = fit.theta / t1;
    let estimate = t1 * fit.k * x.ln_1p();
    let ratio = if x == 0.0 { 1.0 } else { x.ln_1p() / x };
    Ok(DelayBias { estimate, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_breakdown() {
        let b = response_time(&LatencyModel::default(), 9).unwrap();
        assert!((b.total - 9.6).abs() < 1e-12);
        assert!((b.decode - 6.5).abs() < 1e-12);
        assert!((b.latency - 3.1).abs() < 1e-12);
        assert!((b.experiment - (9.0 * 1.7 + 9.6)).abs() < 1e-12);
        assert!(b.to_table().contains("total"));
        assert!(b.to_json().contains("\"total\""));
    }

    #[test]
    fn zero_model_breakdown() {
        let m = LatencyModel {
            round_time: 0.0,
            readout_propagation: 0.0,
            buffer_time: 0.0,
            control_logic: 0.0,
            decode_time: DecodeTimeSource::Fixed(0.0),
        };
        assert_eq!(response_time(&m, 1).unwrap().total, 0.0);
        assert!(response_time(&m, 0).is_err());
    }

    #[test]
    fn empirical_mean_total() {
        let m = LatencyModel {
            decode_time: DecodeTimeSource::Empirical(vec![5.0, 6.0, 7.0]),
            ..Default::default()
        };
        assert!((response_time(&m, 9).unwrap().total - 9.1).abs() < 1e-12);
    }

    #[test]
    fn negative_duration_rejected() {
        let m = LatencyModel {
            buffer_time: -0.1,
            ..Default::default()
        };
        assert!(matches!(
            response_time(&m, 9),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn fixed(c: f64) -> LatencyModel {
        LatencyModel {
            decode_time: DecodeTimeSource::Fixed(c),
            ..Default::default()
        }
    }

    #[test]
    fn fast_decoder_is_bounded() {
        let tl = simulate_stream(&fixed(0.79), 10_000, 1, 0).unwrap();
        assert!(tl.max_queue_depth() <= 2);
        assert!(!detect_backlog(&tl).unwrap().is_growing());
    }

    #[test]
    fn slow_decoder_backlogs() {
        let tl = simulate_stream(&fixed(2.0), 10_000, 1, 0).unwrap();
        let b = detect_backlog(&tl).unwrap();
        let want = (2.0 - 1.7) / 1.7;
        assert!(b.is_growing());
        assert!((b.slope() - want).abs() < 0.01 * want, "{b:?}");
    }

    #[test]
    fn instant_decoder_never_exceeds_window() {
        for w in [1, 3, 7] {
            let tl = simulate_stream(&fixed(0.0), 2000, w, 0).unwrap();
            assert!(tl.max_queue_depth() <= w);
            assert!(!detect_backlog(&tl).unwrap().is_growing());
        }
    }

    #[test]
    fn events_are_ordered() {
        let tl = simulate_stream(&fixed(1.0), 50, 4, 0).unwrap();
        assert!(tl.events.windows(2).all(|w| w[0].t_us <= w[1].t_us));
        assert_eq!(tl.events.last().unwrap().kind, EventKind::Feedback);
        let mut buf = Vec::new();
        tl.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("event,round,t_us,queue_depth\n"));
    }

    #[test]
    fn short_timeline_rejected() {
        let tl = simulate_stream(&fixed(1.0), 100, 1, 0).unwrap();
        assert!(matches!(
            detect_backlog(&tl),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn gamma_fit_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Gamma::new(4.0, 0.25).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        let f = fit_gamma(&xs).unwrap();
        assert!(
            (f.k - 4.0).abs() < 0.1 && (f.theta - 0.25).abs() < 0.01,
            "{f:?}"
        );
    }

    #[test]
    fn gamma_fit_degenerate_and_short() {
        assert!(matches!(fit_gamma(&[2.0; 50]), Err(Error::Degenerate(_))));
        assert!(matches!(
            fit_gamma(&[1.0, 2.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn exponential_samples_have_unit_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000).map(|_| -rng.random::<f64>().ln()).collect();
        assert!((fit_gamma(&xs).unwrap().k - 1.0).abs() < 0.03);
    }

    #[test]
    fn decay_expectation_values() {
        let f = GammaFit {
            k: 1.0,
            theta: 13.0,
        };
        assert!((expected_exp_decay(f, 13.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            expected_exp_decay(GammaFit { k: 3.0, theta: 0.0 }, 5.0).unwrap(),
            1.0
        );
        assert!(expected_exp_decay(f, 0.0).is_err());
    }

    #[test]
    fn bias_ratio() {
        let b = biased_delay_estimate(
            GammaFit {
                k: 2.0,
                theta: 0.39,
            },
            13.0,
        )
        .unwrap();
        assert!((b.ratio - 1.03f64.ln() / 0.03).abs() < 1e-12);
        assert!(b.estimate < 2.0 * 0.39);
        let b = biased_delay_estimate(GammaFit { k: 2.0, theta: 0.2 }, 13.0).unwrap();
        assert!((b.estimate - 26.0 * (1.0 + 0.2f64 / 13.0).ln()).abs() < 1e-12);
        assert_eq!(
            biased_delay_estimate(GammaFit { k: 2.0, theta: 0.0 }, 13.0)
                .unwrap()
                .ratio,
            1.0
        );
    }
}
