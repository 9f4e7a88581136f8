//! Circuit-level noise: depolarizing channels after every operation and on
//! idle qubits, plus classical flips of recorded measurement outcomes.

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::pauli::Pauli;

/// Default physical error probability.
pub const DEFAULT_P: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub p: f64,
    /// Two-qubit depolarizing strength after each `CZ`.
    pub two_qubit: f64,
    /// Single-qubit depolarizing strength after single-qubit gates and
    /// measurements, and on idle qubits.
    pub single_qubit: f64,
    /// Probability that a recorded outcome is flipped.
    pub measurement_flip: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::standard(DEFAULT_P).expect("default p is valid")
    }
}

impl NoiseModel {
    pub fn standard(p: f64) -> Result<Self> {
        let model = NoiseModel {
            p,
            two_qubit: p,
            single_qubit: p / 10.0,
            measurement_flip: p,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            p: 0.0,
            two_qubit: 0.0,
            single_qubit: 0.0,
            measurement_flip: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p", self.p),
            ("two_qubit", self.two_qubit),
            ("single_qubit", self.single_qubit),
            ("measurement_flip", self.measurement_flip),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} is outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Same gate noise with the classical measurement flip switched off.
    pub fn without_measurement_flip(mut self) -> Self {
        self.measurement_flip = 0.0;
        self
    }
}

/// One step of the flattened noisy circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    H(usize),
    Cz(usize, usize),
    Measure {
        qubit: usize,
        slot: usize,
        flip: f64,
    },
    Depolarize1 {
        qubit: usize,
        p: f64,
    },
    Depolarize2 {
        a: usize,
        b: usize,
        p: f64,
    },
}

/// A circuit with its noise channels interleaved in execution order.
#[derive(Debug, Clone)]
pub struct NoisyProgram {
    pub ops: Vec<Op>,
    pub num_measurements: usize,
}

/// A single fault: which noisy op fires and with which Pauli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultKind {
    Pauli1(Pauli),
    Pauli2(Pauli, Pauli),
    MeasurementFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaultSite {
    pub op: usize,
    pub kind: FaultKind,
}

impl NoisyProgram {
    pub fn compile(circuit: &Circuit, noise: &NoiseModel) -> Result<Self> {
        noise.validate()?;
        let mut ops = Vec::new();
        for layer in &circuit.layers {
            for g in &layer.gates {
                match *g {
                    Gate::H(q) => ops.push(Op::H(q)),
                    Gate::Cz(a, b) => ops.push(Op::Cz(a, b)),
                    Gate::Measure { qubit, slot } => ops.push(Op::Measure {
                        qubit,
                        slot,
                        flip: noise.measurement_flip,
                    }),
                }
            }
            for g in &layer.gates {
                match *g {
                    Gate::H(q) | Gate::Measure { qubit: q, .. } => push_nonzero(
                        &mut ops,
                        Op::Depolarize1 {
                            qubit: q,
                            p: noise.single_qubit,
                        },
                    ),
                    Gate::Cz(a, b) => push_nonzero(
                        &mut ops,
                        Op::Depolarize2 {
                            a,
                            b,
                            p: noise.two_qubit,
                        },
                    ),
                }
            }
            for q in layer.idle_qubits() {
                push_nonzero(
                    &mut ops,
                    Op::Depolarize1 {
                        qubit: q,
                        p: noise.single_qubit,
                    },
                );
            }
        }
        Ok(NoisyProgram {
            ops,
            num_measurements: circuit.num_measurements(),
        })
    }

    /// Every single fault the noise model can produce, with its probability.
    pub fn fault_sites(&self) -> Vec<(FaultSite, f64)> {
        let mut out = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Depolarize1 { p, .. } => {
                    for pauli in Pauli::NONTRIVIAL {
                        out.push((
                            FaultSite {
                                op: i,
                                kind: FaultKind::Pauli1(pauli),
                            },
                            p / 3.0,
                        ));
                    }
                }
                Op::Depolarize2 { p, .. } => {
                    for (pa, pb) in crate::pauli::two_qubit_terms() {
                        out.push((
                            FaultSite {
                                op: i,
                                kind: FaultKind::Pauli2(pa, pb),
                            },
                            p / 15.0,
                        ));
                    }
                }
                Op::Measure { flip, .. } if flip > 0.0 => {
                    out.push((
                        FaultSite {
                            op: i,
                            kind: FaultKind::MeasurementFlip,
                        },
                        flip,
                    ));
                }
                _ => {}
            }
        }
        out
    }
}

fn push_nonzero(ops: &mut Vec<Op>, op: Op) {
    let p = match op {
        Op::Depolarize1 { p, .. } | Op::Depolarize2 { p, .. } => p,
        _ => 1.0,
    };
    if p > 0.0 {
        ops.push(op);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_stability8, QubitLayout};

    #[test]
    fn standard_channel_strengths() {
        let n = NoiseModel::standard(0.03).unwrap();
        assert_eq!(n.two_qubit, 0.03);
        assert!((n.single_qubit - 0.003).abs() < 1e-15);
        assert_eq!(n.measurement_flip, 0.03);
        assert!(NoiseModel::standard(1.0).is_err());
        assert!(NoiseModel::standard(-0.1).is_err());
    }

    #[test]
    fn noiseless_program_has_no_channels() {
        let c = build_stability8(3, QubitLayout::default()).unwrap();
        let prog = NoisyProgram::compile(&c, &NoiseModel::noiseless()).unwrap();
        assert!(prog.fault_sites().is_empty());
        assert!(prog
            .ops
            .iter()
            .all(|op| !matches!(op, Op::Depolarize1 { .. } | Op::Depolarize2 { .. })));
    }

    #[test]
    fn channel_counts_per_round() {
        let c = build_stability8(2, QubitLayout::default()).unwrap();
        let prog = NoisyProgram::compile(&c, &NoiseModel::default()).unwrap();
        let two = prog
            .ops
            .iter()
            .filter(|o| matches!(o, Op::Depolarize2 { .. }))
            .count();
        let one = prog
            .ops
            .iter()
            .filter(|o| matches!(o, Op::Depolarize1 { .. }))
            .count();
        // 8 CZs per round. Single-qubit: prep 4 H + 4 idle; per round 2x(4 H + 4 idle)
        // plus 4 measured ancillas + 4 idle data (last round measures data).
        assert_eq!(two, 16);
        assert_eq!(one, 8 + 2 * 16 + (4 + 4) + 8);
    }
}
