//! The 8-qubit stability circuit.
//!
//! Four data qubits sit on a ring with four ancillas in between; each ancilla
//! extracts the `ZZ` parity of its two neighbours. Data qubits are prepared in
//! the `X` basis once, then every round conjugates the ancillas into the `X`
//! basis around two `CZ` sub-layers and measures them. Ancillas are never reset,
//! so a round's stabilizer value is the XOR of two consecutive outcomes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const NUM_DATA: usize = 4;
pub const NUM_ANCILLA: usize = 4;
pub const NUM_QUBITS: usize = NUM_DATA + NUM_ANCILLA;

/// Layer durations in nanoseconds.
pub const PREP_NS: f64 = 40.0;
pub const BASIS_NS: f64 = 40.0;
pub const FIRST_CZ_NS: f64 = 176.0;
pub const SECOND_CZ_NS: f64 = 112.0;
pub const MEASURE_NS: f64 = 948.0;
pub const RING_DOWN_NS: f64 = 336.0;

/// Physical placement of the ring. Qubit indices `0..4` are data qubits and
/// `4..8` are ancillas; `labels` keeps the hardware names for printing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitLayout {
    pub data_labels: [u32; NUM_DATA],
    pub ancilla_labels: [u32; NUM_ANCILLA],
    /// Data qubits (by data index) checked by each ancilla, in `CZ` order.
    pub supports: [(usize, usize); NUM_ANCILLA],
}

impl Default for QubitLayout {
    fn default() -> Self {
        // Ankaa-2 sublattice: ancillas 38, 52, 50, 36 interleaved with data
        // 37, 45, 51, 43 around the ring.
        QubitLayout {
            data_labels: [37, 45, 51, 43],
            ancilla_labels: [38, 52, 50, 36],
            supports: [(0, 1), (1, 2), (2, 3), (3, 0)],
        }
    }
}

impl QubitLayout {
    pub fn new(
        data_labels: [u32; NUM_DATA],
        ancilla_labels: [u32; NUM_ANCILLA],
        supports: [(usize, usize); NUM_ANCILLA],
    ) -> Result<Self> {
        let layout = QubitLayout {
            data_labels,
            ancilla_labels,
            supports,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let mut count = [0usize; NUM_DATA];
        for &(a, b) in &self.supports {
            if a >= NUM_DATA || b >= NUM_DATA || a == b {
                return Err(Error::InvalidArgument(format!(
                    "stabilizer support ({a}, {b}) is not a pair of distinct data qubits"
                )));
            }
            count[a] += 1;
            count[b] += 1;
        }
        if count.iter().any(|&c| c != 2) {
            return Err(Error::InvalidArgument(
                "every data qubit must appear in exactly two stabilizers".into(),
            ));
        }
        // Degree two everywhere; the ring is a single cycle iff it is connected.
        let mut seen = [false; NUM_DATA];
        let mut stack = vec![0usize];
        while let Some(d) = stack.pop() {
            if std::mem::replace(&mut seen[d], true) {
                continue;
            }
            for &(a, b) in &self.supports {
                if a == d && !seen[b] {
                    stack.push(b);
                }
                if b == d && !seen[a] {
                    stack.push(a);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("layout is not a single ring".into()));
        }
        // Each CZ sub-layer must touch every data qubit once.
        let firsts: BTreeSet<usize> = self.supports.iter().map(|s| s.0).collect();
        let seconds: BTreeSet<usize> = self.supports.iter().map(|s| s.1).collect();
        if firsts.len() != NUM_DATA || seconds.len() != NUM_DATA {
            return Err(Error::InvalidArgument(
                "CZ sub-layers would act twice on one data qubit".into(),
            ));
        }
        Ok(())
    }

    pub fn data_qubit(&self, d: usize) -> usize {
        d
    }

    pub fn ancilla_qubit(&self, a: usize) -> usize {
        NUM_DATA + a
    }

    pub fn label(&self, qubit: usize) -> u32 {
        if qubit < NUM_DATA {
            self.data_labels[qubit]
        } else {
            self.ancilla_labels[qubit - NUM_DATA]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    H(usize),
    /// Symmetric; stored as (ancilla, data).
    Cz(usize, usize),
    /// Z-basis measurement writing to the given record slot.
    Measure {
        qubit: usize,
        slot: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    DataPrep,
    AncillaBasis,
    Entangle,
    Measure,
}

impl LayerKind {
    pub fn tag(self) -> &'static str {
        match self {
            LayerKind::DataPrep => "PREP",
            LayerKind::AncillaBasis => "H",
            LayerKind::Entangle => "CZ",
            LayerKind::Measure => "M",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// Measurement round the layer belongs to (1-based); `None` for preparation.
    pub round: Option<usize>,
    pub gates: Vec<Gate>,
    pub duration_ns: f64,
}

impl Layer {
    /// Qubits not acted on by any gate in this layer.
    pub fn idle_qubits(&self) -> Vec<usize> {
        let mut busy = [false; NUM_QUBITS];
        for g in &self.gates {
            match *g {
                Gate::H(q) | Gate::Measure { qubit: q, .. } => busy[q] = true,
                Gate::Cz(a, b) => {
                    busy[a] = true;
                    busy[b] = true;
                }
            }
        }
        (0..NUM_QUBITS).filter(|&q| !busy[q]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasuredQubit {
    Ancilla(usize),
    Data(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementTag {
    pub qubit: MeasuredQubit,
    pub round: usize,
}

/// A detector compares derived stabilizer values of one ancilla across
/// consecutive rounds; `round` runs over `2..=R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorIndex {
    pub round: usize,
    pub ancilla: usize,
}

impl DetectorIndex {
    pub fn new(ancilla: usize, round: usize) -> Self {
        DetectorIndex { round, ancilla }
    }

    /// Dense index, ordered by (round, ancilla).
    pub fn linear(self) -> usize {
        NUM_ANCILLA * (self.round - 2) + self.ancilla
    }

    pub fn from_linear(i: usize) -> Self {
        DetectorIndex {
            round: i / NUM_ANCILLA + 2,
            ancilla: i % NUM_ANCILLA,
        }
    }
}

pub fn num_detectors(rounds: usize) -> usize {
    NUM_ANCILLA * rounds.saturating_sub(1)
}

/// Stability circuit over `rounds` measurement rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub rounds: usize,
    pub layout: QubitLayout,
    pub layers: Vec<Layer>,
    pub measurements: Vec<MeasurementTag>,
}

pub fn build_stability8(rounds: usize, layout: QubitLayout) -> Result<Circuit> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    layout.validate()?;
    let data: Vec<usize> = (0..NUM_DATA).map(|d| layout.data_qubit(d)).collect();
    let ancillas: Vec<usize> = (0..NUM_ANCILLA).map(|a| layout.ancilla_qubit(a)).collect();

    let mut layers = vec![Layer {
        kind: LayerKind::DataPrep,
        round: None,
        gates: data.iter().map(|&q| Gate::H(q)).collect(),
        duration_ns: PREP_NS,
    }];
    let mut measurements = Vec::with_capacity(NUM_ANCILLA * rounds + NUM_DATA);

    for r in 1..=rounds {
        let basis = Layer {
            kind: LayerKind::AncillaBasis,
            round: Some(r),
            gates: ancillas.iter().map(|&q| Gate::H(q)).collect(),
            duration_ns: BASIS_NS,
        };
        layers.push(basis.clone());
        layers.push(Layer {
            kind: LayerKind::Entangle,
            round: Some(r),
            gates: (0..NUM_ANCILLA)
                .map(|a| Gate::Cz(ancillas[a], data[layout.supports[a].0]))
                .collect(),
            duration_ns: FIRST_CZ_NS,
        });
        layers.push(Layer {
            kind: LayerKind::Entangle,
            round: Some(r),
            gates: (0..NUM_ANCILLA)
                .map(|a| Gate::Cz(ancillas[a], data[layout.supports[a].1]))
                .collect(),
            duration_ns: SECOND_CZ_NS,
        });
        layers.push(Layer {
            duration_ns: BASIS_NS,
            ..basis
        });

        let mut gates = Vec::new();
        for (a, &q) in ancillas.iter().enumerate() {
            gates.push(Gate::Measure {
                qubit: q,
                slot: measurements.len(),
            });
            measurements.push(MeasurementTag {
                qubit: MeasuredQubit::Ancilla(a),
                round: r,
            });
        }
        if r == rounds {
            for (d, &q) in data.iter().enumerate() {
                gates.push(Gate::Measure {
                    qubit: q,
                    slot: measurements.len(),
                });
                measurements.push(MeasurementTag {
                    qubit: MeasuredQubit::Data(d),
                    round: r,
                });
            }
        }
        layers.push(Layer {
            kind: LayerKind::Measure,
            round: Some(r),
            gates,
            duration_ns: MEASURE_NS + RING_DOWN_NS,
        });
    }

    Ok(Circuit {
        rounds,
        layout,
        layers,
        measurements,
    })
}

impl Circuit {
    pub fn num_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn num_detectors(&self) -> usize {
        num_detectors(self.rounds)
    }

    /// Record slot of ancilla `a` in round `r` (1-based).
    pub fn ancilla_slot(&self, a: usize, r: usize) -> usize {
        NUM_ANCILLA * (r - 1) + a
    }

    pub fn total_duration_ns(&self) -> f64 {
        self.layers.iter().map(|l| l.duration_ns).sum()
    }

    /// Duration of one syndrome-extraction round (layers f through j).
    pub fn round_duration_ns(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| l.round == Some(1))
            .map(|l| l.duration_ns)
            .sum()
    }

    /// Ancilla outcomes in (round, ancilla) order, dropping the data readout.
    pub fn ancilla_bits(&self, record: &[bool]) -> Result<Vec<bool>> {
        let n = NUM_ANCILLA * self.rounds;
        if record.len() < n {
            return Err(Error::InvalidArgument(format!(
                "measurement record has {} bits, expected at least {n}",
                record.len()
            )));
        }
        Ok(record[..n].to_vec())
    }

    pub fn detectors(&self, record: &[bool]) -> Result<Vec<bool>> {
        detector_values(self.rounds, &self.ancilla_bits(record)?)
    }

    pub fn observable(&self, record: &[bool]) -> Result<bool> {
        observable_value(self.rounds, &self.ancilla_bits(record)?)
    }

    /// Line-oriented dump: `<kind> <qubits> <duration_ns>` per layer, with
    /// `CZ` pairs written as `a:b`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# stability8 rounds={}", self.rounds);
        for layer in &self.layers {
            let qubits: Vec<String> = layer
                .gates
                .iter()
                .map(|g| match *g {
                    Gate::H(q) | Gate::Measure { qubit: q, .. } => q.to_string(),
                    Gate::Cz(a, b) => format!("{a}:{b}"),
                })
                .collect();
            let _ = writeln!(
                out,
                "{} {} {}",
                layer.kind.tag(),
                qubits.join(","),
                layer.duration_ns
            );
        }
        out
    }
}

fn check_ancilla_record(rounds: usize, bits: &[bool]) -> Result<()> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    if bits.len() != NUM_ANCILLA * rounds {
        return Err(Error::InvalidArgument(format!(
            "expected {} ancilla outcomes for {rounds} rounds, got {}",
            NUM_ANCILLA * rounds,
            bits.len()
        )));
    }
    Ok(())
}

/// Derived stabilizer value `s[a][r] = m[a][r] ^ m[a][r-1]` with `m[a][0] = 0`.
fn stabilizer(bits: &[bool], a: usize, r: usize) -> bool {
    let m = |r: usize| {
        if r == 0 {
            false
        } else {
            bits[NUM_ANCILLA * (r - 1) + a]
        }
    };
    m(r) ^ m(r - 1)
}

/// Detector bits in [`DetectorIndex::linear`] order.
pub fn detector_values(rounds: usize, ancilla_bits: &[bool]) -> Result<Vec<bool>> {
    check_ancilla_record(rounds, ancilla_bits)?;
    let mut out = Vec::with_capacity(num_detectors(rounds));
    for r in 2..=rounds {
        for a in 0..NUM_ANCILLA {
            out.push(stabilizer(ancilla_bits, a, r) ^ stabilizer(ancilla_bits, a, r - 1));
        }
    }
    Ok(out)
}

/// Parity of the final-round stabilizer values; zero without errors because
/// the four ring stabilizers multiply to the identity.
pub fn observable_value(rounds: usize, ancilla_bits: &[bool]) -> Result<bool> {
    check_ancilla_record(rounds, ancilla_bits)?;
    Ok((0..NUM_ANCILLA).fold(false, |acc, a| acc ^ stabilizer(ancilla_bits, a, rounds)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circuit(r: usize) -> Circuit {
        build_stability8(r, QubitLayout::default()).unwrap()
    }

    #[test]
    fn eight_rounds_have_28_detectors() {
        let c = circuit(8);
        let measure_layers = c
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Measure)
            .count();
        assert_eq!(measure_layers, 8);
        assert_eq!(c.num_detectors(), 28);
        assert_eq!(c.num_measurements(), 8 * 4 + 4);
    }

    #[test]
    fn single_round_has_no_detectors() {
        let c = circuit(1);
        assert_eq!(c.num_detectors(), 0);
        assert_eq!(
            detector_values(1, &[true, false, true, true]).unwrap(),
            Vec::<bool>::new()
        );
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(matches!(
            build_stability8(0, QubitLayout::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn round_takes_about_1_7_us() {
        let c = circuit(8);
        let round = c.round_duration_ns();
        assert_eq!(round, 1652.0);
        assert!((round - 1700.0).abs() < 60.0);
        let total = c.total_duration_ns() - PREP_NS;
        assert!((total - 8.0 * 1700.0).abs() < 8.0 * 60.0);
    }

    #[test]
    fn no_resets_in_circuit() {
        // Only H, CZ and measurements appear; no gate ever returns an ancilla to |0>.
        let c = circuit(3);
        for l in &c.layers {
            for g in &l.gates {
                assert!(matches!(
                    g,
                    Gate::H(_) | Gate::Cz(..) | Gate::Measure { .. }
                ));
            }
        }
    }

    #[test]
    fn all_zero_record() {
        let bits = vec![false; 32];
        assert!(detector_values(8, &bits).unwrap().iter().all(|&d| !d));
        assert!(!observable_value(8, &bits).unwrap());
    }

    #[test]
    fn single_flip_hits_two_rounds_apart() {
        let mut bits = vec![false; 32];
        let a = 2;
        bits[4 * (5 - 1) + a] = true;
        let det = detector_values(8, &bits).unwrap();
        let fired: Vec<DetectorIndex> = det
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| DetectorIndex::from_linear(i))
            .collect();
        assert_eq!(
            fired,
            vec![DetectorIndex::new(a, 5), DetectorIndex::new(a, 7)]
        );
    }

    #[test]
    fn final_round_flip_flips_observable() {
        let mut bits = vec![false; 32];
        bits[4 * 7 + 1] = true;
        assert!(observable_value(8, &bits).unwrap());
    }

    #[test]
    fn short_record_rejected() {
        assert!(detector_values(3, &[false; 11]).is_err());
        assert!(observable_value(3, &[false; 13]).is_err());
    }

    #[test]
    fn bad_layouts_rejected() {
        let l = QubitLayout::default();
        assert!(QubitLayout::new(
            l.data_labels,
            l.ancilla_labels,
            [(0, 1), (0, 1), (2, 3), (2, 3)]
        )
        .is_err());
        assert!(QubitLayout::new(
            l.data_labels,
            l.ancilla_labels,
            [(0, 1), (1, 2), (2, 3), (3, 3)]
        )
        .is_err());
        assert!(QubitLayout::new(
            l.data_labels,
            l.ancilla_labels,
            [(0, 1), (1, 0), (2, 3), (3, 2)]
        )
        .is_err());
    }

    #[test]
    fn detector_linear_roundtrip() {
        for i in 0..40 {
            assert_eq!(DetectorIndex::from_linear(i).linear(), i);
        }
    }

    #[test]
    fn text_dump_lists_layers() {
        let text = circuit(2).to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "PREP 0,1,2,3 40");
        assert_eq!(lines[3], "CZ 4:0,5:1,6:2,7:3 176");
        assert_eq!(lines.last().unwrap(), &"M 4,5,6,7,0,1,2,3 1284");
    }
}
