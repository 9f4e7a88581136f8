//! Pauli frames over at most 64 qubits.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NONTRIVIAL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(i: usize) -> Pauli {
        match i & 3 {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// The 15 non-identity two-qubit Paulis in lexicographic order.
pub fn two_qubit_terms() -> impl Iterator<Item = (Pauli, Pauli)> {
    (1..16).map(|i| (Pauli::from_index(i / 4), Pauli::from_index(i % 4)))
}

/// Accumulated X/Z flips relative to the noiseless reference run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PauliFrame {
    pub x: u64,
    pub z: u64,
}

impl PauliFrame {
    #[inline]
    pub fn apply(&mut self, q: usize, p: Pauli) {
        let bit = 1u64 << q;
        if p.has_x() {
            self.x ^= bit;
        }
        if p.has_z() {
            self.z ^= bit;
        }
    }

    #[inline]
    pub fn h(&mut self, q: usize) {
        let bit = 1u64 << q;
        let x = self.x & bit;
        let z = self.z & bit;
        self.x = (self.x & !bit) | z;
        self.z = (self.z & !bit) | x;
    }

    #[inline]
    pub fn cz(&mut self, a: usize, b: usize) {
        let xa = (self.x >> a) & 1;
        let xb = (self.x >> b) & 1;
        self.z ^= (xb << a) | (xa << b);
    }

    /// Whether a Z-basis measurement of `q` is flipped by the frame.
    #[inline]
    pub fn flips_z_measurement(&self, q: usize) -> bool {
        (self.x >> q) & 1 == 1
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_terms() {
        let terms: Vec<_> = two_qubit_terms().collect();
        assert_eq!(terms.len(), 15);
        assert!(!terms.contains(&(Pauli::I, Pauli::I)));
    }

    #[test]
    fn h_swaps_x_and_z() {
        let mut f = PauliFrame::default();
        f.apply(3, Pauli::X);
        f.h(3);
        assert_eq!(f, PauliFrame { x: 0, z: 1 << 3 });
        f.apply(3, Pauli::X);
        f.h(3);
        assert_eq!(
            f,
            PauliFrame {
                x: 1 << 3,
                z: 1 << 3
            }
        );
    }

    #[test]
    fn cz_spreads_x_as_z() {
        let mut f = PauliFrame::default();
        f.apply(0, Pauli::X);
        f.cz(0, 5);
        assert_eq!(f, PauliFrame { x: 1, z: 1 << 5 });
        let mut g = PauliFrame::default();
        g.apply(0, Pauli::Z);
        g.cz(0, 5);
        assert_eq!(g, PauliFrame { x: 0, z: 1 });
    }
}
