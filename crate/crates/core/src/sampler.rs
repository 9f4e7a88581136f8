//! Monte Carlo Pauli-frame sampling of the noisy stability circuit.
//!
//! The noiseless reference run is fixed by the first-round stabilizer collapse
//! (one fair coin per ancilla, the fourth forced by the ring parity). Noise is
//! tracked as a Pauli frame on top of that reference, and the frame is carried
//! through every measurement since ancillas are never reset.

use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibration::Classifier;
use crate::circuit::{Circuit, MeasuredQubit, NUM_ANCILLA, NUM_DATA};
use crate::error::{Error, Result};
use crate::noise::{FaultKind, FaultSite, NoiseModel, NoisyProgram, Op};
use crate::pauli::{Pauli, PauliFrame};

/// Per-shot generator derived from `(seed, shot)` only, so results do not
/// depend on how shots are scheduled across threads.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Two class-conditional Gaussians in the IQ plane with a shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct IqModel {
    pub mean0: [f64; 2],
    pub mean1: [f64; 2],
    pub cov: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
    classifier: Classifier,
}

impl IqModel {
    pub fn new(mean0: [f64; 2], mean1: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
        if !(a > 0.0) || (cov[1][0] - b).abs() > 1e-12 * a.abs().max(c.abs()) {
            return Err(Error::InvalidArgument(
                "IQ covariance must be symmetric positive definite".into(),
            ));
        }
        let l00 = a.sqrt();
        let l10 = b / l00;
        let rem = c - l10 * l10;
        if !(rem > 1e-12 * a.max(c)) {
            return Err(Error::InvalidArgument("IQ covariance is degenerate".into()));
        }
        let classifier = Classifier::from_parameters(mean0, mean1, cov)?;
        Ok(IqModel {
            mean0,
            mean1,
            cov,
            chol: [[l00, 0.0], [l10, rem.sqrt()]],
            classifier,
        })
    }

    /// Isotropic blobs of width `sigma` on the I axis, separated so that the
    /// equal-prior classifier mislabels a fraction `error` of each class.
    pub fn with_assignment_error(error: f64, sigma: f64) -> Result<Self> {
        if !(error > 0.0 && error <= 0.5) || !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "assignment error {error} must lie in (0, 0.5] and sigma {sigma} be positive"
            )));
        }
        let half = -Normal::standard().inverse_cdf(error) * sigma;
        IqModel::new(
            [-half, 0.0],
            [half, 0.0],
            [[sigma * sigma, 0.0], [0.0, sigma * sigma]],
        )
    }

    /// Fraction of each class falling on the wrong side of the discriminant.
    pub fn assignment_error(&self) -> f64 {
        Normal::standard().cdf(-0.5 * self.classifier.mahalanobis_separation())
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn draw<R: Rng + ?Sized>(&self, state: bool, rng: &mut R) -> [f64; 2] {
        let m = if state { self.mean1 } else { self.mean0 };
        let u: f64 = StandardNormal.sample(rng);
        let v: f64 = StandardNormal.sample(rng);
        [
            m[0] + self.chol[0][0] * u,
            m[1] + self.chol[1][0] * u + self.chol[1][1] * v,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub shot: u64,
    pub measurements: Vec<bool>,
    /// Raw `(I, Q)` per measurement when sampled in soft mode.
    pub soft: Option<Vec<[f32; 2]>>,
    pub detectors: Vec<bool>,
    pub observable_flip_truth: bool,
}

impl ShotRecord {
    pub fn defects(&self) -> Vec<usize> {
        self.detectors
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Circuit and noise compiled once, then sampled shot by shot.
#[derive(Debug, Clone)]
pub struct Sampler {
    circuit: Circuit,
    program: NoisyProgram,
    soft_program: NoisyProgram,
}

impl Sampler {
    pub fn new(circuit: &Circuit, noise: &NoiseModel) -> Result<Self> {
        Ok(Sampler {
            circuit: circuit.clone(),
            program: NoisyProgram::compile(circuit, noise)?,
            soft_program: NoisyProgram::compile(circuit, &noise.without_measurement_flip())?,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn program(&self) -> &NoisyProgram {
        &self.program
    }

    /// Noiseless outcomes for a given first-round collapse.
    fn reference(&self, collapse: [bool; NUM_ANCILLA], data0: bool) -> Vec<bool> {
        let supports = self.circuit.layout.supports;
        // Data Z values consistent with the collapse: walk the ring from data 0.
        let mut data = [None; NUM_DATA];
        data[0] = Some(data0);
        for _ in 0..NUM_DATA {
            for (a, &(u, v)) in supports.iter().enumerate() {
                match (data[u], data[v]) {
                    (Some(x), None) => data[v] = Some(x ^ collapse[a]),
                    (None, Some(y)) => data[u] = Some(y ^ collapse[a]),
                    _ => {}
                }
            }
        }
        self.circuit
            .measurements
            .iter()
            .map(|tag| match tag.qubit {
                // m[a][r] = m[a][r-1] ^ s[a], starting from m[a][0] = 0.
                MeasuredQubit::Ancilla(a) => collapse[a] && tag.round % 2 == 1,
                MeasuredQubit::Data(d) => data[d].unwrap_or(false),
            })
            .collect()
    }

    fn random_reference(&self, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let mut collapse = [false; NUM_ANCILLA];
        for c in collapse.iter_mut().take(NUM_ANCILLA - 1) {
            *c = rng.random();
        }
        collapse[NUM_ANCILLA - 1] = collapse[..NUM_ANCILLA - 1]
            .iter()
            .fold(false, |a, &b| a ^ b);
        self.reference(collapse, rng.random())
    }

    fn finish(
        &self,
        shot: u64,
        measurements: Vec<bool>,
        soft: Option<Vec<[f32; 2]>>,
    ) -> ShotRecord {
        let detectors = self
            .circuit
            .detectors(&measurements)
            .expect("record length matches circuit");
        let observable_flip_truth = self
            .circuit
            .observable(&measurements)
            .expect("record length matches circuit");
        ShotRecord {
            shot,
            measurements,
            soft,
            detectors,
            observable_flip_truth,
        }
    }

    fn run(
        &self,
        program: &NoisyProgram,
        rng: &mut ChaCha8Rng,
        iq: Option<&IqModel>,
    ) -> (Vec<bool>, Option<Vec<[f32; 2]>>) {
        let reference = self.random_reference(rng);
        let mut record = vec![false; program.num_measurements];
        let mut soft = iq.map(|_| vec![[0f32; 2]; program.num_measurements]);
        let mut frame = PauliFrame::default();
        for op in &program.ops {
            match *op {
                Op::H(q) => frame.h(q),
                Op::Cz(a, b) => frame.cz(a, b),
                Op::Depolarize1 { qubit, p } => {
                    let u: f64 = rng.random();
                    if u < p {
                        let k = ((u / p * 3.0) as usize).min(2);
                        frame.apply(qubit, Pauli::NONTRIVIAL[k]);
                    }
                }
                Op::Depolarize2 { a, b, p } => {
                    let u: f64 = rng.random();
                    if u < p {
                        let k = ((u / p * 15.0) as usize).min(14) + 1;
                        frame.apply(a, Pauli::from_index(k / 4));
                        frame.apply(b, Pauli::from_index(k % 4));
                    }
                }
                Op::Measure { qubit, slot, flip } => {
                    let physical = reference[slot] ^ frame.flips_z_measurement(qubit);
                    record[slot] = match (iq, soft.as_mut()) {
                        (Some(model), Some(values)) => {
                            let z = model.draw(physical, rng);
                            values[slot] = [z[0] as f32, z[1] as f32];
                            model.classifier().classify(z)
                        }
                        _ => physical ^ (flip > 0.0 && rng.random::<f64>() < flip),
                    };
                }
            }
        }
        (record, soft)
    }

    pub fn sample_shot(&self, seed: u64, shot: u64) -> ShotRecord {
        let mut rng = shot_rng(seed, shot);
        let (m, _) = self.run(&self.program, &mut rng, None);
        self.finish(shot, m, None)
    }

    /// Soft readout: each outcome is the classifier's label for an IQ point
    /// drawn from the physical state's blob. The classical flip channel is off.
    pub fn sample_soft_shot(&self, iq: &IqModel, seed: u64, shot: u64) -> ShotRecord {
        let mut rng = shot_rng(seed, shot);
        let (m, soft) = self.run(&self.soft_program, &mut rng, Some(iq));
        self.finish(shot, m, soft)
    }

    pub fn sample_batch(&self, seed: u64, shots: u64) -> Vec<ShotRecord> {
        (0..shots)
            .into_par_iter()
            .map(|s| self.sample_shot(seed, s))
            .collect()
    }

    pub fn sample_soft_batch(&self, iq: &IqModel, seed: u64, shots: u64) -> Vec<ShotRecord> {
        (0..shots)
            .into_par_iter()
            .map(|s| self.sample_soft_shot(iq, seed, s))
            .collect()
    }

    /// Noise-free run with exactly the given faults injected (zero collapse).
    pub fn inject(&self, faults: &[FaultSite]) -> Result<ShotRecord> {
        let reference = self.reference([false; NUM_ANCILLA], false);
        let mut record = vec![false; self.program.num_measurements];
        let mut frame = PauliFrame::default();
        for (i, op) in self.program.ops.iter().enumerate() {
            let mut measurement_flip = false;
            for f in faults.iter().filter(|f| f.op == i) {
                match (*op, f.kind) {
                    (Op::Depolarize1 { qubit, .. }, FaultKind::Pauli1(p)) => frame.apply(qubit, p),
                    (Op::Depolarize2 { a, b, .. }, FaultKind::Pauli2(pa, pb)) => {
                        frame.apply(a, pa);
                        frame.apply(b, pb);
                    }
                    (Op::Measure { .. }, FaultKind::MeasurementFlip) => measurement_flip ^= true,
                    (op, kind) => {
                        return Err(Error::InvalidArgument(format!(
                            "fault {kind:?} cannot act on {op:?}"
                        )))
                    }
                }
            }
            match *op {
                Op::H(q) => frame.h(q),
                Op::Cz(a, b) => frame.cz(a, b),
                Op::Measure { qubit, slot, .. } => {
                    record[slot] =
                        reference[slot] ^ frame.flips_z_measurement(qubit) ^ measurement_flip;
                }
                _ => {}
            }
        }
        Ok(self.finish(0, record, None))
    }
}

/// One shot under `noise` with the given seed.
pub fn sample_shot(circuit: &Circuit, noise: &NoiseModel, seed: u64) -> Result<ShotRecord> {
    Ok(Sampler::new(circuit, noise)?.sample_shot(seed, 0))
}

pub fn sample_soft_shot(
    circuit: &Circuit,
    noise: &NoiseModel,
    iq: &IqModel,
    seed: u64,
) -> Result<ShotRecord> {
    Ok(Sampler::new(circuit, noise)?.sample_soft_shot(iq, seed, 0))
}

/// Pack bits LSB-first into bytes and hex-encode them.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(8) * 2);
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i));
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

pub fn hex_to_bits(hex: &str, len: usize) -> Result<Vec<bool>> {
    if hex.len() != len.div_ceil(8) * 2 {
        return Err(Error::Parse(format!(
            "hex field of length {} cannot hold {len} bits",
            hex.len()
        )));
    }
    let mut bits = Vec::with_capacity(len);
    for k in 0..hex.len() / 2 {
        let byte = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
            .map_err(|_| Error::Parse(format!("invalid hex byte {:?}", &hex[2 * k..2 * k + 2])))?;
        for i in 0..8 {
            if bits.len() < len {
                bits.push((byte >> i) & 1 == 1);
            }
        }
    }
    Ok(bits)
}

pub const SHOT_CSV_HEADER: &str = "shot,measurements,detectors,truth";

/// CSV with one row per shot: id, measurement bits (hex), detector bits (hex),
/// truth bit.
pub fn write_shots_csv<W: Write>(mut w: W, shots: &[ShotRecord]) -> Result<()> {
    writeln!(w, "{SHOT_CSV_HEADER}")?;
    for s in shots {
        writeln!(
            w,
            "{},{},{},{}",
            s.shot,
            bits_to_hex(&s.measurements),
            bits_to_hex(&s.detectors),
            u8::from(s.observable_flip_truth)
        )?;
    }
    Ok(())
}

/// Inverse of [`write_shots_csv`]; lines starting with `#` are skipped.
pub fn read_shots_csv<R: BufRead>(
    r: R,
    num_measurements: usize,
    num_detectors: usize,
) -> Result<Vec<ShotRecord>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != SHOT_CSV_HEADER {
                return Err(Error::Parse(format!(
                    "line {}: expected header `{SHOT_CSV_HEADER}`",
                    lineno + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected 4 fields",
                lineno + 1
            )));
        }
        let shot = f[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad shot id", lineno + 1)))?;
        let truth = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Parse(format!("line {}: bad truth bit", lineno + 1))),
        };
        out.push(ShotRecord {
            shot,
            measurements: hex_to_bits(f[1], num_measurements)?,
            soft: None,
            detectors: hex_to_bits(f[2], num_detectors)?,
            observable_flip_truth: truth,
        });
    }
    Ok(out)
}

/// Little-endian `f32` pairs, I then Q, for every measurement of every shot.
pub fn write_soft_sidecar<W: Write>(mut w: W, shots: &[ShotRecord]) -> Result<()> {
    for s in shots {
        let soft = s
            .soft
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("shot {} has no soft values", s.shot)))?;
        for z in soft {
            w.write_all(&z[0].to_le_bytes())?;
            w.write_all(&z[1].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Attach sidecar values to shots read from CSV.
pub fn read_soft_sidecar<R: Read>(mut r: R, shots: &mut [ShotRecord]) -> Result<()> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected: usize = shots.iter().map(|s| s.measurements.len() * 8).sum();
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "soft sidecar has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    for s in shots.iter_mut() {
        let values = (0..s.measurements.len())
            .map(|_| [floats.next().unwrap_or(0.0), floats.next().unwrap_or(0.0)])
            .collect();
        s.soft = Some(values);
    }
    Ok(())
}

/// Defect rate of each detector across a batch.
pub fn defect_rates(shots: &[ShotRecord]) -> Vec<f64> {
    let Some(first) = shots.first() else {
        return Vec::new();
    };
    let mut counts = vec![0u64; first.detectors.len()];
    for s in shots {
        for (c, &d) in counts.iter_mut().zip(&s.detectors) {
            *c += u64::from(d);
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 / shots.len() as f64)
        .collect()
}
