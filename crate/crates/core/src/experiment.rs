//! Run configuration and the end-to-end pipelines behind the command line.
//!
//! A run is described by a [`RunConfig`], read from a `key = value` file and
//! then overridden by flags. [`execute`] produces every artifact in memory and
//! [`write_outputs`] puts them under the output directory.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::calibration::{
    apply_soft_weights, candidates_of, estimate_from_moments, Classifier, EstimateFlag,
    MomentAccumulator, MIN_PAIRWISE_SHOTS,
};
use crate::circuit::{build_stability8, num_detectors, Circuit, QubitLayout};
use crate::decoders::{
    correction_syndrome, decode_clustering, decode_mwpm, decode_mwpm_with_weights, DecodeResult,
    DecoderKind,
};
use crate::graph::{stability_graph, DecodingGraph};
use crate::noise::NoiseModel;
use crate::realtime::{
    detect_backlog, response_time, simulate_stream, Backlog, DecodeTimeSource, LatencyModel,
    MIN_BACKLOG_ROUNDS,
};
use crate::reset::{fit_reset_decay, fit_two_tone, mhz, synth_two_tone, DispersiveParams};
use crate::sampler::{
    read_shots_csv, read_soft_sidecar, shot_rng, write_shots_csv, write_soft_sidecar, IqModel,
    Sampler, ShotRecord,
};
use crate::t1_clock::{
    bootstrap, forward_simulate, ConfusionMatrix, DecayFit, DelaySource, ExperimentPlan,
    ForwardModel, PostMeasurementMatrix,
};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Width of the IQ blobs used for soft readout; only the ratio to the blob
/// separation matters.
const IQ_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sample,
    Decode,
    SweepRounds,
    SoftCompare,
    Calibrate,
    Realtime,
    T1Clock,
    ResetFit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Sample,
        ExperimentKind::Decode,
        ExperimentKind::SweepRounds,
        ExperimentKind::SoftCompare,
        ExperimentKind::Calibrate,
        ExperimentKind::Realtime,
        ExperimentKind::T1Clock,
        ExperimentKind::ResetFit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Decode => "decode",
            ExperimentKind::SweepRounds => "sweep-rounds",
            ExperimentKind::SoftCompare => "soft-compare",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Realtime => "realtime",
            ExperimentKind::T1Clock => "t1clock",
            ExperimentKind::ResetFit => "reset-fit",
        }
    }

    /// Runs that build a circuit and therefore need at least two detector rounds.
    pub fn uses_circuit(self) -> bool {
        matches!(
            self,
            ExperimentKind::Sample
                | ExperimentKind::Decode
                | ExperimentKind::SweepRounds
                | ExperimentKind::SoftCompare
                | ExperimentKind::Calibrate
        )
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "experiment: unknown kind '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Everything a run depends on. `rounds` counts detector rounds; the circuit
/// has one more measurement round.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub rounds: Vec<usize>,
    pub shots: u64,
    pub p: f64,
    pub seed: u64,
    pub decoder: DecoderKind,
    pub out: PathBuf,
    /// Sampler CSV to decode instead of sampling afresh.
    pub input: Option<PathBuf>,
    /// Soft-value sidecar belonging to `input`.
    pub soft_input: Option<PathBuf>,
    /// Classifier overlap error used for soft readout.
    pub assignment_error: f64,
    pub graph: bool,
    pub timeline: bool,
    /// Full-syndrome decode time for the response-time breakdown, in us.
    pub decode_time: f64,
    /// Per-round decode cost for the streaming simulation, in us.
    pub round_decode_time: f64,
    pub stream_rounds: usize,
    pub window_rounds: usize,
    pub t1: f64,
    pub delay: f64,
    pub total_time: f64,
    pub replicates: usize,
    pub chi_mhz: f64,
    pub kappa_mhz: f64,
    pub noise_sd: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentKind::SweepRounds,
            rounds: vec![5, 9, 13, 17, 21, 25],
            shots: 10_000,
            p: crate::noise::DEFAULT_P,
            seed: 1,
            decoder: DecoderKind::Mwpm,
            out: PathBuf::from("out"),
            input: None,
            soft_input: None,
            assignment_error: 0.07,
            graph: false,
            timeline: false,
            decode_time: 6.5,
            round_decode_time: 0.79,
            stream_rounds: 2000,
            window_rounds: 1,
            t1: 13.0,
            delay: 3.0,
            total_time: 10.0,
            replicates: 200,
            chi_mhz: -2.5,
            kappa_mhz: 3.0,
            noise_sd: 0.02,
        }
    }
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got '{value}'"
        ))),
    }
}

/// Comma-separated list; an empty string is an empty list.
pub fn parse_rounds(value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| parse_field("rounds", s.trim()))
        .collect()
}

fn join_rounds(rounds: &[usize]) -> String {
    rounds
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "experiment",
        "rounds",
        "shots",
        "p",
        "seed",
        "decoder",
        "out",
        "input",
        "soft_input",
        "assignment_error",
        "graph",
        "timeline",
        "decode_time",
        "round_decode_time",
        "stream_rounds",
        "window_rounds",
        "t1",
        "delay",
        "total_time",
        "replicates",
        "chi_mhz",
        "kappa_mhz",
        "noise_sd",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => self.experiment = v.parse()?,
            "rounds" => self.rounds = parse_rounds(v)?,
            "shots" => self.shots = parse_field(key, v)?,
            "p" => self.p = parse_field(key, v)?,
            "seed" => self.seed = parse_field(key, v)?,
            "decoder" => {
                self.decoder = v
                    .parse()
                    .map_err(|e: Error| Error::Config(format!("decoder: {e}")))?
            }
            "out" => self.out = PathBuf::from(v),
            "input" => self.input = (!v.is_empty()).then(|| PathBuf::from(v)),
            "soft_input" => self.soft_input = (!v.is_empty()).then(|| PathBuf::from(v)),
            "assignment_error" => self.assignment_error = parse_field(key, v)?,
            "graph" => self.graph = parse_bool(key, v)?,
            "timeline" => self.timeline = parse_bool(key, v)?,
            "decode_time" => self.decode_time = parse_field(key, v)?,
            "round_decode_time" => self.round_decode_time = parse_field(key, v)?,
            "stream_rounds" => self.stream_rounds = parse_field(key, v)?,
            "window_rounds" => self.window_rounds = parse_field(key, v)?,
            "t1" => self.t1 = parse_field(key, v)?,
            "delay" => self.delay = parse_field(key, v)?,
            "total_time" => self.total_time = parse_field(key, v)?,
            "replicates" => self.replicates = parse_field(key, v)?,
            "chi_mhz" => self.chi_mhz = parse_field(key, v)?,
            "kappa_mhz" => self.kappa_mhz = parse_field(key, v)?,
            "noise_sd" => self.noise_sd = parse_field(key, v)?,
            other => return Err(Error::Config(format!("{other}: unknown configuration key"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        RunConfig::from_text(&text)
    }

    /// Every field except the output directory, one `key = value` per line in
    /// a fixed order. Two configs with the same canonical text produce the
    /// same artifacts.
    pub fn canonical(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut s = String::new();
        for key in RunConfig::KEYS {
            let value = match key {
                "experiment" => self.experiment.name().to_string(),
                "rounds" => join_rounds(&self.rounds),
                "shots" => self.shots.to_string(),
                "p" => self.p.to_string(),
                "seed" => self.seed.to_string(),
                "decoder" => self.decoder.name().to_string(),
                "out" => continue,
                "input" => path(&self.input),
                "soft_input" => path(&self.soft_input),
                "assignment_error" => self.assignment_error.to_string(),
                "graph" => self.graph.to_string(),
                "timeline" => self.timeline.to_string(),
                "decode_time" => self.decode_time.to_string(),
                "round_decode_time" => self.round_decode_time.to_string(),
                "stream_rounds" => self.stream_rounds.to_string(),
                "window_rounds" => self.window_rounds.to_string(),
                "t1" => self.t1.to_string(),
                "delay" => self.delay.to_string(),
                "total_time" => self.total_time.to_string(),
                "replicates" => self.replicates.to_string(),
                "chi_mhz" => self.chi_mhz.to_string(),
                "kappa_mhz" => self.kappa_mhz.to_string(),
                "noise_sd" => self.noise_sd.to_string(),
                _ => unreachable!("every key is rendered"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every field the chosen experiment depends on. Errors name the
    /// offending field first.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.shots < 1 {
            return bad("shots", "must be >= 1".into());
        }
        if self.rounds.is_empty()
            && self.experiment != ExperimentKind::T1Clock
            && self.experiment != ExperimentKind::ResetFit
        {
            return bad("rounds", "list is empty".into());
        }
        let kind = self.experiment;
        if kind.uses_circuit() {
            if let Some(r) = self.rounds.iter().find(|&&r| r < 2) {
                return bad(
                    "rounds",
                    format!("{r} detector rounds; decoding runs need at least 2"),
                );
            }
            if !(self.p > 0.0 && self.p < 0.5) {
                return bad("p", format!("{} must lie in (0, 0.5)", self.p));
            }
            if matches!(
                kind,
                ExperimentKind::Sample | ExperimentKind::Decode | ExperimentKind::Calibrate
            ) && self.rounds.len() != 1
            {
                return bad(
                    "rounds",
                    format!(
                        "{} takes a single value, got {}",
                        kind.name(),
                        self.rounds.len()
                    ),
                );
            }
        }
        let soft = kind == ExperimentKind::SoftCompare
            || (kind.uses_circuit() && self.decoder == DecoderKind::SoftMwpm);
        if soft && !(self.assignment_error > 0.0 && self.assignment_error < 0.5) {
            return bad(
                "assignment_error",
                format!("{} must lie in (0, 0.5)", self.assignment_error),
            );
        }
        if self.input.is_some() && kind != ExperimentKind::Decode {
            return bad(
                "input",
                format!(
                    "only the decode experiment reads an input file, not {}",
                    kind.name()
                ),
            );
        }
        if kind == ExperimentKind::Decode
            && self.decoder == DecoderKind::SoftMwpm
            && self.input.is_some()
            && self.soft_input.is_none()
        {
            return bad("soft_input", "required to soft-decode an input file".into());
        }
        match kind {
            ExperimentKind::Calibrate if self.shots < MIN_PAIRWISE_SHOTS => bad(
                "shots",
                format!("calibration needs at least {MIN_PAIRWISE_SHOTS}"),
            ),
            ExperimentKind::Realtime => {
                if self.rounds.contains(&0) {
                    return bad("rounds", "realtime rounds must be >= 1".into());
                }
                for (field, v) in [
                    ("decode_time", self.decode_time),
                    ("round_decode_time", self.round_decode_time),
                ] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return bad(field, format!("{v} must be finite and >= 0"));
                    }
                }
                if self.stream_rounds < MIN_BACKLOG_ROUNDS {
                    return bad("stream_rounds", format!("must be >= {MIN_BACKLOG_ROUNDS}"));
                }
                if self.window_rounds < 1 {
                    return bad("window_rounds", "must be >= 1".into());
                }
                Ok(())
            }
            ExperimentKind::T1Clock => {
                if !(self.t1 > 0.0 && self.t1.is_finite()) {
                    return bad("t1", format!("{} must be positive", self.t1));
                }
                if !(self.delay >= 0.0) {
                    return bad("delay", format!("{} must be >= 0", self.delay));
                }
                if !(self.total_time > self.delay && self.total_time.is_finite()) {
                    return bad(
                        "total_time",
                        format!("{} must exceed delay {}", self.total_time, self.delay),
                    );
                }
                if self.replicates < 2 {
                    return bad("replicates", "must be >= 2".into());
                }
                Ok(())
            }
            ExperimentKind::ResetFit => {
                if !(self.chi_mhz != 0.0 && self.chi_mhz.is_finite()) {
                    return bad("chi_mhz", "must be finite and nonzero".into());
                }
                if !(self.kappa_mhz > 0.0 && self.kappa_mhz.is_finite()) {
                    return bad("kappa_mhz", "must be positive".into());
                }
                if !(self.noise_sd >= 0.0 && self.noise_sd < 0.5) {
                    return bad(
                        "noise_sd",
                        format!("{} must lie in [0, 0.5)", self.noise_sd),
                    );
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn provenance_line(&self) -> String {
        format!(
            "# stability-lab {VERSION} experiment={} config_hash={} seed={}\n",
            self.experiment.name(),
            self.hash(),
            self.seed
        )
    }
}

/// Artifacts of one run, ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// `(file name, contents)` in write order; always starts with
    /// `results.csv` and `summary.json`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Human-readable summary for the terminal.
    pub table: String,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

struct Parts {
    csv: String,
    results: serde_json::Value,
    table: String,
    extra: Vec<(String, Vec<u8>)>,
}

/// Circuit, sampler and decoding graph for one detector-round count.
struct Setup {
    circuit: Circuit,
    sampler: Sampler,
    graph: DecodingGraph,
    iq: Option<IqModel>,
}

impl Setup {
    /// Hard decoding samples with the classical flip channel. Soft decoding
    /// reads out through IQ blobs instead, and the graph carries the blob
    /// overlap as its measurement-error prior.
    fn new(config: &RunConfig, detector_rounds: usize, soft: bool) -> Result<Self> {
        let circuit = build_stability8(detector_rounds + 1, QubitLayout::default())?;
        let noise = NoiseModel::standard(config.p)?;
        let sampler = Sampler::new(&circuit, &noise)?;
        let (graph, iq) = if soft {
            let iq = IqModel::with_assignment_error(config.assignment_error, IQ_SIGMA)?;
            let prior = NoiseModel {
                measurement_flip: config.assignment_error,
                ..noise
            };
            (stability_graph(&circuit, &prior)?, Some(iq))
        } else {
            (stability_graph(&circuit, &noise)?, None)
        };
        Ok(Setup {
            circuit,
            sampler,
            graph,
            iq,
        })
    }

    fn sample(&self, seed: u64, shots: u64) -> Vec<ShotRecord> {
        match &self.iq {
            Some(iq) => self.sampler.sample_soft_batch(iq, seed, shots),
            None => self.sampler.sample_batch(seed, shots),
        }
    }

    fn classifier(&self) -> Option<&Classifier> {
        self.iq.as_ref().map(|iq| iq.classifier())
    }
}

/// Decodes one shot with the chosen decoder.
pub fn decode_shot(
    graph: &DecodingGraph,
    decoder: DecoderKind,
    classifier: Option<&Classifier>,
    shot: &ShotRecord,
) -> Result<DecodeResult> {
    let defects = shot.defects();
    match decoder {
        DecoderKind::Mwpm => decode_mwpm(graph, &defects),
        DecoderKind::Clustering => decode_clustering(graph, &defects),
        DecoderKind::SoftMwpm => {
            let classifier = classifier.ok_or_else(|| {
                Error::Config("decoder: soft-mwpm needs a readout classifier".into())
            })?;
            let weights = apply_soft_weights(graph, classifier, shot)?;
            decode_mwpm_with_weights(graph, &weights, &defects)
        }
    }
}

/// Matching weight for MWPM results; summed correction weight for clustering.
fn reported_weight(graph: &DecodingGraph, decoder: DecoderKind, r: &DecodeResult) -> f64 {
    match decoder {
        DecoderKind::Clustering => r.correction.iter().map(|&e| graph.edges[e].weight).sum(),
        _ => r.total_weight,
    }
}

fn decode_batch(
    graph: &DecodingGraph,
    decoder: DecoderKind,
    classifier: Option<&Classifier>,
    shots: &[ShotRecord],
) -> Result<Vec<DecodeResult>> {
    shots
        .par_iter()
        .map(|s| decode_shot(graph, decoder, classifier, s))
        .collect()
}

fn failures(shots: &[ShotRecord], results: &[DecodeResult]) -> u64 {
    shots
        .iter()
        .zip(results)
        .filter(|(s, r)| s.observable_flip_truth != r.logical_flip)
        .count() as u64
}

fn rate_and_stderr(failures: u64, shots: u64) -> (f64, f64) {
    let p = failures as f64 / shots as f64;
    (p, (p * (1.0 - p) / shots as f64).sqrt())
}

fn graph_file(config: &RunConfig, setup: &Setup) -> Vec<(String, Vec<u8>)> {
    if config.graph {
        vec![("graph.txt".to_string(), setup.graph.to_text().into_bytes())]
    } else {
        Vec::new()
    }
}

fn run_sample(config: &RunConfig) -> Result<Parts> {
    let rounds = config.rounds[0];
    let setup = Setup::new(config, rounds, config.decoder == DecoderKind::SoftMwpm)?;
    let shots = setup.sample(config.seed, config.shots);
    let mut csv = Vec::new();
    write_shots_csv(&mut csv, &shots)?;
    let mut extra = graph_file(config, &setup);
    if setup.iq.is_some() {
        let mut soft = Vec::new();
        write_soft_sidecar(&mut soft, &shots)?;
        extra.push(("soft.bin".to_string(), soft));
    }
    let n = shots.len() as f64;
    let defect_rate = shots.iter().map(|s| s.defects().len() as f64).sum::<f64>()
        / (n * setup.circuit.num_detectors() as f64);
    let flip_rate = shots.iter().filter(|s| s.observable_flip_truth).count() as f64 / n;
    let table = format!(
        "sampled {} shots at {rounds} detector rounds\nmean defect rate {defect_rate:.5}\nobservable flip rate {flip_rate:.5}\n",
        shots.len()
    );
    Ok(Parts {
        csv: String::from_utf8(csv).expect("shot CSV is ASCII"),
        results: json!({
            "rounds": rounds,
            "shots": config.shots,
            "num_measurements": setup.circuit.num_measurements(),
            "num_detectors": setup.circuit.num_detectors(),
            "mean_defect_rate": defect_rate,
            "observable_flip_rate": flip_rate,
        }),
        table,
        extra,
    })
}

fn run_decode(config: &RunConfig) -> Result<Parts> {
    let rounds = config.rounds[0];
    let soft = config.decoder == DecoderKind::SoftMwpm;
    let setup = Setup::new(config, rounds, soft)?;
    let shots = match &config.input {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Config(format!("input {}: {e}", path.display())))?;
            let mut shots = read_shots_csv(
                BufReader::new(file),
                setup.circuit.num_measurements(),
                num_detectors(setup.circuit.rounds),
            )?;
            if let Some(sp) = &config.soft_input {
                let file = std::fs::File::open(sp)
                    .map_err(|e| Error::Config(format!("soft_input {}: {e}", sp.display())))?;
                read_soft_sidecar(BufReader::new(file), &mut shots)?;
            }
            shots
        }
        None => setup.sample(config.seed, config.shots),
    };
    if shots.is_empty() {
        return Err(Error::Config("input: no shots to decode".into()));
    }
    let results = decode_batch(&setup.graph, config.decoder, setup.classifier(), &shots)?;
    let mut csv = String::from("shot_id,predicted_flip,truth_flip,weight\n");
    let mut valid = 0u64;
    for (s, r) in shots.iter().zip(&results) {
        let w = reported_weight(&setup.graph, config.decoder, r);
        let _ = writeln!(
            csv,
            "{},{},{},{w:.6}",
            s.shot,
            u8::from(r.logical_flip),
            u8::from(s.observable_flip_truth)
        );
        valid += u64::from(correction_syndrome(&setup.graph, &r.correction) == s.defects());
    }
    let n = shots.len() as u64;
    let fails = failures(&shots, &results);
    let (rate, se) = rate_and_stderr(fails, n);
    let table = format!(
        "decoded {n} shots at {rounds} detector rounds with {}\nlogical error {rate:.5} +- {se:.5}\nvalid corrections {valid}/{n}\n",
        config.decoder.name()
    );
    Ok(Parts {
        csv,
        results: json!({
            "rounds": rounds,
            "decoder": config.decoder.name(),
            "shots": n,
            "failures": fails,
            "logical_error": rate,
            "stderr": se,
            "valid_corrections": valid,
        }),
        table,
        extra: graph_file(config, &setup),
    })
}

fn run_sweep(config: &RunConfig) -> Result<Parts> {
    let soft = config.decoder == DecoderKind::SoftMwpm;
    let mut csv = String::from("rounds,shots,failures,logical_error,stderr\n");
    let mut table = format!(
        "{:>7} {:>10} {:>12} {:>10}\n",
        "rounds", "failures", "logical_err", "stderr"
    );
    let mut points = Vec::new();
    let mut extra = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut non_increasing = true;
    for (i, &rounds) in config.rounds.iter().enumerate() {
        let setup = Setup::new(config, rounds, soft)?;
        if i == 0 {
            extra = graph_file(config, &setup);
        }
        let shots = setup.sample(config.seed, config.shots);
        let results = decode_batch(&setup.graph, config.decoder, setup.classifier(), &shots)?;
        let fails = failures(&shots, &results);
        let (rate, se) = rate_and_stderr(fails, config.shots);
        if let Some((pr, pse)) = prev {
            non_increasing &= rate <= pr + 2.0 * (se * se + pse * pse).sqrt();
        }
        prev = Some((rate, se));
        let _ = writeln!(csv, "{rounds},{},{fails},{rate:.6},{se:.6}", config.shots);
        let _ = writeln!(table, "{rounds:>7} {fails:>10} {rate:>12.5} {se:>10.5}");
        points.push(
            json!({"rounds": rounds, "failures": fails, "logical_error": rate, "stderr": se}),
        );
    }
    Ok(Parts {
        csv,
        results: json!({
            "decoder": config.decoder.name(),
            "shots_per_point": config.shots,
            "points": points,
            "non_increasing_within_2se": non_increasing,
        }),
        table,
        extra,
    })
}

/// Hard and soft MWPM on the same soft-readout shots. `z` is the paired
/// difference (hard minus soft) in units of its standard error.
fn run_soft_compare(config: &RunConfig) -> Result<Parts> {
    let mut csv = String::from("rounds,shots,hard_failures,hard_error,hard_stderr,soft_failures,soft_error,soft_stderr,z\n");
    let mut table = format!(
        "{:>7} {:>10} {:>10} {:>8}\n",
        "rounds", "hard_err", "soft_err", "z"
    );
    let mut points = Vec::new();
    let mut extra = Vec::new();
    for (i, &rounds) in config.rounds.iter().enumerate() {
        let setup = Setup::new(config, rounds, true)?;
        if i == 0 {
            extra = graph_file(config, &setup);
        }
        let shots = setup.sample(config.seed, config.shots);
        let hard = decode_batch(&setup.graph, DecoderKind::Mwpm, None, &shots)?;
        let soft = decode_batch(
            &setup.graph,
            DecoderKind::SoftMwpm,
            setup.classifier(),
            &shots,
        )?;
        let (mut hf, mut sf, mut only_hard, mut only_soft) = (0u64, 0u64, 0u64, 0u64);
        for ((s, h), o) in shots.iter().zip(&hard).zip(&soft) {
            let he = h.logical_flip != s.observable_flip_truth;
            let se = o.logical_flip != s.observable_flip_truth;
            hf += u64::from(he);
            sf += u64::from(se);
            only_hard += u64::from(he && !se);
            only_soft += u64::from(se && !he);
        }
        let n = config.shots as f64;
        let (hr, hse) = rate_and_stderr(hf, config.shots);
        let (sr, sse) = rate_and_stderr(sf, config.shots);
        let d = (only_hard as f64 - only_soft as f64) / n;
        let var = ((only_hard + only_soft) as f64 / n - d * d) / n;
        let z = if var > 0.0 { d / var.sqrt() } else { 0.0 };
        let _ = writeln!(
            csv,
            "{rounds},{},{hf},{hr:.6},{hse:.6},{sf},{sr:.6},{sse:.6},{z:.3}",
            config.shots
        );
        let _ = writeln!(table, "{rounds:>7} {hr:>10.5} {sr:>10.5} {z:>8.2}");
        points.push(json!({
            "rounds": rounds,
            "hard_failures": hf,
            "soft_failures": sf,
            "hard_error": hr,
            "soft_error": sr,
            "z": z,
        }));
    }
    Ok(Parts {
        csv,
        results: json!({
            "assignment_error": config.assignment_error,
            "shots_per_point": config.shots,
            "points": points,
        }),
        table,
        extra,
    })
}

/// Pairwise re-estimation of every edge of the model graph from sampled
/// detector data, plus a readout classifier trained on fresh IQ draws.
fn run_calibrate(config: &RunConfig) -> Result<Parts> {
    let rounds = config.rounds[0];
    let setup = Setup::new(config, rounds, false)?;
    let candidates = candidates_of(&setup.graph);
    let nd = setup.graph.num_detectors;
    const CHUNK: u64 = 4096;
    let acc = (0..config.shots.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = MomentAccumulator::new(nd, &candidates);
            for shot in c * CHUNK..((c + 1) * CHUNK).min(config.shots) {
                acc.add(&setup.sampler.sample_shot(config.seed, shot).detectors);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .try_fold(MomentAccumulator::new(nd, &candidates), |mut a, b| {
            a.merge(&b).map(|_| a)
        })?;
    let estimate = estimate_from_moments(&acc, &candidates)?;

    let mut csv = String::from("edge,a,b,model_p,estimated_p,flag\n");
    let mut max_dev: f64 = 0.0;
    for (k, (e, (&p, flag))) in setup
        .graph
        .edges
        .iter()
        .zip(estimate.probabilities.iter().zip(&estimate.flags))
        .enumerate()
    {
        let b = e.b.map(|b| b.to_string()).unwrap_or_else(|| "B".into());
        let flag = match flag {
            EstimateFlag::Ok => "ok",
            EstimateFlag::Clamped => "clamped",
            EstimateFlag::Undefined => "undefined",
        };
        max_dev = max_dev.max((p - e.probability).abs());
        let _ = writeln!(csv, "{k},{},{b},{:.6},{p:.6},{flag}", e.a, e.probability);
    }

    let iq = IqModel::with_assignment_error(config.assignment_error, IQ_SIGMA)?;
    let mut rng = shot_rng(config.seed, u64::MAX - 1);
    let n = config.shots.min(100_000) as usize;
    let zeros: Vec<[f64; 2]> = (0..n).map(|_| iq.draw(false, &mut rng)).collect();
    let ones: Vec<[f64; 2]> = (0..n).map(|_| iq.draw(true, &mut rng)).collect();
    let classifier = Classifier::train(&zeros, &ones)?;
    let wrong = zeros.iter().filter(|&&z| classifier.classify(z)).count()
        + ones.iter().filter(|&&z| !classifier.classify(z)).count();
    let measured_error = wrong as f64 / (2 * n) as f64;

    let mut extra = graph_file(config, &setup);
    extra.push((
        "classifier.json".to_string(),
        classifier.to_json().into_bytes(),
    ));
    let table = format!(
        "{} edges re-estimated from {} shots\nmax |estimate - model| {max_dev:.5}\nclassifier error {measured_error:.5} (configured {})\n",
        candidates.len(),
        config.shots,
        config.assignment_error
    );
    Ok(Parts {
        csv,
        results: json!({
            "rounds": rounds,
            "edges": candidates.len(),
            "max_abs_deviation": max_dev,
            "classifier_error": measured_error,
        }),
        table,
        extra,
    })
}

fn run_realtime(config: &RunConfig) -> Result<Parts> {
    let model = LatencyModel {
        decode_time: DecodeTimeSource::Fixed(config.decode_time),
        ..LatencyModel::default()
    };
    let mut csv = String::from(
        "rounds,decode_us,propagation_us,control_us,latency_us,total_us,experiment_us\n",
    );
    let mut table = String::new();
    let mut breakdowns = Vec::new();
    for &rounds in &config.rounds {
        let b = response_time(&model, rounds)?;
        let _ = writeln!(
            csv,
            "{rounds},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            b.decode, b.propagation, b.control, b.latency, b.total, b.experiment
        );
        let _ = writeln!(table, "rounds {rounds}\n{}", b.to_table());
        breakdowns.push(serde_json::to_value(b).expect("plain struct serializes"));
    }

    let stream_model = LatencyModel {
        decode_time: DecodeTimeSource::Fixed(config.round_decode_time),
        ..model
    };
    let timeline = simulate_stream(
        &stream_model,
        config.stream_rounds,
        config.window_rounds,
        config.seed,
    )?;
    let backlog = detect_backlog(&timeline)?;
    let expected =
        ((config.round_decode_time - stream_model.round_time) / stream_model.round_time).max(0.0);
    let state = match backlog {
        Backlog::Bounded { .. } => "bounded",
        Backlog::Growing { .. } => "growing",
    };
    let _ = writeln!(
        table,
        "stream of {} rounds at {} us/round: {state}, slope {:.4} (expected {expected:.4}), max queue {}",
        config.stream_rounds,
        config.round_decode_time,
        backlog.slope(),
        timeline.max_queue_depth()
    );
    let mut extra = Vec::new();
    if config.timeline {
        let mut buf = Vec::new();
        timeline.write_csv(&mut buf)?;
        extra.push(("timeline.csv".to_string(), buf));
    }
    Ok(Parts {
        csv,
        results: json!({
            "breakdowns": breakdowns,
            "stream": {
                "rounds": config.stream_rounds,
                "window_rounds": config.window_rounds,
                "round_decode_time": config.round_decode_time,
                "backlog": state,
                "slope": backlog.slope(),
                "expected_slope": expected,
                "max_queue_depth": timeline.max_queue_depth(),
            },
        }),
        table,
        extra,
    })
}

/// Readout and decay constants of the simulated feedback experiment.
pub fn t1_clock_model(t1: f64, delay: f64, total_time: f64) -> Result<ForwardModel> {
    Ok(ForwardModel {
        decay: DecayFit::new(0.87, t1, 0.08)?,
        pms: ConfusionMatrix::from_errors(0.03, 0.09)?,
        q: PostMeasurementMatrix::new([[0.97, 0.06], [0.03, 0.94]])?,
        pm1: [0.55, 0.45],
        p_l1: 0.5,
        t_r: 0.5,
        total_time,
        delay: DelaySource::Fixed(delay),
    })
}

fn run_t1_clock(config: &RunConfig) -> Result<Parts> {
    let model = t1_clock_model(config.t1, config.delay, config.total_time)?;
    let data = forward_simulate(&model, &ExperimentPlan::standard(config.shots), config.seed)?;
    let report = bootstrap(&data, config.replicates, config.seed.wrapping_add(1))?;
    let mut csv = String::from("quantity,truth,estimate,sd,lo,hi\n");
    for (name, truth, iv) in [
        ("total_time_us", config.total_time, report.total_time),
        ("delay_us", config.delay, report.delay),
    ] {
        let _ = writeln!(
            csv,
            "{name},{truth},{:.6},{:.6},{:.6},{:.6}",
            iv.estimate, iv.sd, iv.lo, iv.hi
        );
    }
    let table = format!(
        "T   = {:.3} +- {:.3} us (truth {})\nT_d = {:.3} +- {:.3} us (truth {})\nfitted T1 {:.3} us, {} of {} replicates failed\n",
        report.total_time.estimate,
        report.total_time.sd,
        config.total_time,
        report.delay.estimate,
        report.delay.sd,
        config.delay,
        report.estimate.decay.t1,
        report.failures,
        report.replicates
    );
    Ok(Parts {
        csv,
        results: serde_json::to_value(&report).expect("plain struct serializes"),
        table,
        extra: Vec::new(),
    })
}

/// Detuning of the qubit from the resonator for the synthetic reset maps.
const RESET_DELTA_MHZ: f64 = -1000.0;
const RESET_N0: f64 = 2.0;
const RESET_T1_US: f64 = 20.0;
const RESET_A: f64 = 0.045;
const RESET_B: f64 = 0.9;
const RESET_T_US: f64 = 0.31;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| mhz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Two-tone map and reset-decay curve synthesized from known constants, then
/// fitted. The decay curve uses `shots` binomial draws per point.
fn run_reset_fit(config: &RunConfig) -> Result<Parts> {
    let params = DispersiveParams::from_chi(
        mhz(config.chi_mhz),
        mhz(RESET_DELTA_MHZ),
        mhz(config.kappa_mhz),
        RESET_N0,
        RESET_T1_US,
    )?;
    let map = synth_two_tone(
        &params,
        &grid(-12.0, 12.0, 97),
        &grid(-12.0, 2.0, 561),
        mhz(0.3),
        config.noise_sd,
        config.seed,
    )?;
    let tone = fit_two_tone(&map)?;

    let tau: Vec<f64> = (0..40).map(|i| 0.05 * i as f64).collect();
    let pop = tau
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = RESET_A + RESET_B * (-t / RESET_T_US).exp();
            let mut rng = shot_rng(config.seed, i as u64);
            let k = Binomial::new(config.shots, p)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng);
            Ok(k as f64 / config.shots as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let decay = fit_reset_decay(&tau, &pop)?;

    let two_pi_mhz = mhz(1.0);
    let rows = [
        ("chi_mhz", config.chi_mhz, tone.chi / two_pi_mhz),
        ("kappa_mhz", config.kappa_mhz, tone.kappa / two_pi_mhz),
        ("n0", RESET_N0, tone.n0),
        ("a", RESET_A, decay.a),
        ("t_us", RESET_T_US, decay.t),
    ];
    let mut csv = String::from("quantity,truth,estimate,relative_error\n");
    let mut table = String::new();
    for (name, truth, est) in rows {
        let rel = (est - truth) / truth;
        let _ = writeln!(csv, "{name},{truth},{est:.6},{rel:.6}");
        let _ = writeln!(table, "{name:<10} {est:>10.4} (truth {truth})");
    }
    let mut map_csv = Vec::new();
    map.write_csv(&mut map_csv)?;
    let mut extra = vec![("two_tone.csv".to_string(), map_csv)];
    let mut decay_csv = String::from("tau_us,population\n");
    for (t, p) in tau.iter().zip(&pop) {
        let _ = writeln!(decay_csv, "{t:.3},{p:.6}");
    }
    extra.push(("reset_decay.csv".to_string(), decay_csv.into_bytes()));
    Ok(Parts {
        csv,
        results: json!({"two_tone": tone, "decay": decay}),
        table,
        extra,
    })
}

/// Runs the configured pipeline and returns its artifacts without touching
/// the file system (except to read `input`).
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let parts = match config.experiment {
        ExperimentKind::Sample => run_sample(config)?,
        ExperimentKind::Decode => run_decode(config)?,
        ExperimentKind::SweepRounds => run_sweep(config)?,
        ExperimentKind::SoftCompare => run_soft_compare(config)?,
        ExperimentKind::Calibrate => run_calibrate(config)?,
        ExperimentKind::Realtime => run_realtime(config)?,
        ExperimentKind::T1Clock => run_t1_clock(config)?,
        ExperimentKind::ResetFit => run_reset_fit(config)?,
    };
    let summary = json!({
        "provenance": {
            "tool": "stability-lab",
            "version": VERSION,
            "config_hash": config.hash(),
            "seed": config.seed,
        },
        "experiment": config.experiment.name(),
        "config": config.canonical(),
        "results": parts.results,
    });
    let mut summary_text = serde_json::to_string_pretty(&summary).expect("json values serialize");
    summary_text.push('\n');
    let mut files = vec![
        (
            "results.csv".to_string(),
            format!("{}{}", config.provenance_line(), parts.csv).into_bytes(),
        ),
        ("summary.json".to_string(), summary_text.into_bytes()),
    ];
    files.extend(parts.extra);
    Ok(RunOutput {
        files,
        table: parts.table,
    })
}

/// Writes every artifact under `config.out`, creating it if needed.
pub fn write_outputs(config: &RunConfig, output: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&config.out)?;
    output
        .files
        .iter()
        .map(|(name, bytes)| {
            let path = config.out.join(name);
            std::fs::write(&path, bytes)?;
            Ok(path)
        })
        .collect()
}

/// [`execute`] followed by [`write_outputs`].
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let output = execute(config)?;
    write_outputs(config, &output)?;
    Ok(output)
}
