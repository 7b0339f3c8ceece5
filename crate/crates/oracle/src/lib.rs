//! Reference oracles for the qrewrite test suites.
//!
//! Everything here is written from textbook definitions and shares no code
//! with the engine: dense unitaries over `2^n` amplitudes, a permutation view
//! of classical reversible circuits, a Kahn-style topological-order checker,
//! and a chi-square statistic for sampling tests. Qubit `k` is bit `k` of the
//! basis-state index.

use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub type C = Complex64;

/// A gate as the oracle understands it. Qubit indices are wire numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    H(usize),
    X(usize),
    Z(usize),
    S(usize),
    Sdg(usize),
    T(usize),
    Tdg(usize),
    Rx(usize, f64),
    Rz(usize, f64),
    Cx(usize, usize),
    Ccx(usize, usize, usize),
    Cswap(usize, usize, usize),
}

impl Op {
    /// Builds an op from a lowercase OpenQASM-style name.
    pub fn from_name(name: &str, qubits: &[usize], param: f64) -> Option<Op> {
        let q = |i: usize| qubits.get(i).copied();
        Some(match name {
            "h" => Op::H(q(0)?),
            "x" => Op::X(q(0)?),
            "z" => Op::Z(q(0)?),
            "s" => Op::S(q(0)?),
            "sdg" => Op::Sdg(q(0)?),
            "t" => Op::T(q(0)?),
            "tdg" => Op::Tdg(q(0)?),
            "rx" => Op::Rx(q(0)?, param),
            "rz" => Op::Rz(q(0)?, param),
            "cx" => Op::Cx(q(0)?, q(1)?),
            "ccx" => Op::Ccx(q(0)?, q(1)?, q(2)?),
            "cswap" => Op::Cswap(q(0)?, q(1)?, q(2)?),
            _ => return None,
        })
    }

    fn single_matrix(&self) -> Option<(usize, [[C; 2]; 2])> {
        let z = C::new(0.0, 0.0);
        let one = C::new(1.0, 0.0);
        let i = C::new(0.0, 1.0);
        let r = FRAC_1_SQRT_2;
        Some(match *self {
            Op::H(q) => (q, [[C::new(r, 0.0), C::new(r, 0.0)], [C::new(r, 0.0), C::new(-r, 0.0)]]),
            Op::X(q) => (q, [[z, one], [one, z]]),
            Op::Z(q) => (q, [[one, z], [z, -one]]),
            Op::S(q) => (q, [[one, z], [z, i]]),
            Op::Sdg(q) => (q, [[one, z], [z, -i]]),
            Op::T(q) => (q, [[one, z], [z, C::from_polar(1.0, PI / 4.0)]]),
            Op::Tdg(q) => (q, [[one, z], [z, C::from_polar(1.0, -PI / 4.0)]]),
            Op::Rx(q, t) => {
                let c = C::new((t / 2.0).cos(), 0.0);
                let s = C::new(0.0, -(t / 2.0).sin());
                (q, [[c, s], [s, c]])
            }
            Op::Rz(q, t) => (
                q,
                [[C::from_polar(1.0, -t / 2.0), z], [z, C::from_polar(1.0, t / 2.0)]],
            ),
            _ => return None,
        })
    }

    pub fn max_qubit(&self) -> usize {
        match *self {
            Op::H(q) | Op::X(q) | Op::Z(q) | Op::S(q) | Op::Sdg(q) | Op::T(q) | Op::Tdg(q) => q,
            Op::Rx(q, _) | Op::Rz(q, _) => q,
            Op::Cx(a, b) => a.max(b),
            Op::Ccx(a, b, c) | Op::Cswap(a, b, c) => a.max(b).max(c),
        }
    }

    /// Classical action on a basis state, for permutation gates only.
    pub fn permute(&self, state: u64) -> Option<u64> {
        let bit = |q: usize| (state >> q) & 1 == 1;
        Some(match *self {
            Op::X(q) => state ^ (1 << q),
            Op::Cx(c, t) => {
                if bit(c) {
                    state ^ (1 << t)
                } else {
                    state
                }
            }
            Op::Ccx(a, b, t) => {
                if bit(a) && bit(b) {
                    state ^ (1 << t)
                } else {
                    state
                }
            }
            Op::Cswap(c, a, b) => {
                if bit(c) && bit(a) != bit(b) {
                    state ^ (1 << a) ^ (1 << b)
                } else {
                    state
                }
            }
            _ => return None,
        })
    }
}

/// Applies one op to a state vector in place.
pub fn apply(state: &mut [C], op: &Op) {
    if let Some((q, m)) = op.single_matrix() {
        let mask = 1usize << q;
        for i in 0..state.len() {
            if i & mask == 0 {
                let a = state[i];
                let b = state[i | mask];
                state[i] = m[0][0] * a + m[0][1] * b;
                state[i | mask] = m[1][0] * a + m[1][1] * b;
            }
        }
        return;
    }
    // permutation gates: swap amplitude pairs
    let n = state.len();
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let j = op.permute(i as u64).expect("permutation gate") as usize;
        seen[i] = true;
        seen[j] = true;
        if i != j {
            state.swap(i, j);
        }
    }
}

/// Dense `2^n x 2^n` unitary, column-major: `columns[k]` is the image of `|k>`.
#[derive(Clone, Debug)]
pub struct Unitary {
    pub num_qubits: usize,
    pub columns: Vec<Vec<C>>,
}

impl Unitary {
    pub fn identity(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        let columns = (0..dim)
            .map(|k| {
                let mut v = vec![C::new(0.0, 0.0); dim];
                v[k] = C::new(1.0, 0.0);
                v
            })
            .collect();
        Unitary { num_qubits, columns }
    }

    /// Unitary of the circuit that applies `ops` left to right.
    pub fn of(num_qubits: usize, ops: &[Op]) -> Self {
        let mut u = Unitary::identity(num_qubits);
        for col in u.columns.iter_mut() {
            for op in ops {
                apply(col, op);
            }
        }
        u
    }

    pub fn max_abs_diff(&self, other: &Unitary) -> f64 {
        assert_eq!(self.num_qubits, other.num_qubits);
        let mut worst = 0.0f64;
        for (a, b) in self.columns.iter().zip(&other.columns) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).norm());
            }
        }
        worst
    }

    /// Matrix product `self * other` (apply `other` first).
    pub fn mul(&self, other: &Unitary) -> Unitary {
        let dim = 1usize << self.num_qubits;
        let columns = other
            .columns
            .iter()
            .map(|col| {
                let mut out = vec![C::new(0.0, 0.0); dim];
                for (k, amp) in col.iter().enumerate() {
                    if amp.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (o, s) in out.iter_mut().zip(&self.columns[k]) {
                        *o += s * amp;
                    }
                }
                out
            })
            .collect();
        Unitary { num_qubits: self.num_qubits, columns }
    }

    pub fn adjoint(&self) -> Unitary {
        let dim = 1usize << self.num_qubits;
        let columns = (0..dim)
            .map(|c| (0..dim).map(|r| self.columns[r][c].conj()).collect())
            .collect();
        Unitary { num_qubits: self.num_qubits, columns }
    }

    pub fn entry(&self, row: usize, col: usize) -> C {
        self.columns[col][row]
    }
}

/// GF(2) matrix of a CNOT-only circuit, computed by running the
/// circuit on each unit vector: row `t` of the result has bit `c` set when
/// input bit `c` contributes to output bit `t`.
pub fn linear_map(num_qubits: usize, ops: &[Op]) -> Vec<Vec<bool>> {
    let mut images = Vec::with_capacity(num_qubits);
    for c in 0..num_qubits {
        let mut state: Vec<bool> = (0..num_qubits).map(|k| k == c).collect();
        for op in ops {
            match *op {
                Op::Cx(a, b) => state[b] ^= state[a],
                _ => panic!("linear_map only accepts CNOT circuits"),
            }
        }
        images.push(state);
    }
    (0..num_qubits)
        .map(|t| (0..num_qubits).map(|c| images[c][t]).collect())
        .collect()
}

/// Kahn-style check that `order` is a topological order of the given edges:
/// every node's in-degree must be exhausted before it is visited.
pub fn is_topological<N: std::hash::Hash + Eq + Copy>(order: &[N], edges: &[(N, N)]) -> bool {
    let mut indegree: HashMap<N, usize> = HashMap::new();
    let mut out: HashMap<N, Vec<N>> = HashMap::new();
    for &(a, b) in edges {
        *indegree.entry(b).or_default() += 1;
        out.entry(a).or_default().push(b);
    }
    for n in order {
        if indegree.get(n).copied().unwrap_or(0) != 0 {
            return false;
        }
        if let Some(succ) = out.get(n) {
            for s in succ {
                *indegree.get_mut(s).unwrap() -= 1;
            }
        }
    }
    indegree.values().all(|&d| d == 0)
}

/// Pearson chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
