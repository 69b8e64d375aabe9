//! Unscrambled base-2 Sobol sequence with Joe–Kuo direction numbers.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;
const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2..=8; dimension 1 is van der Corput.
const JOE_KUO: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for l in 1..s {
            if (a >> (s - 1 - l)) & 1 == 1 {
                x ^= v[k - l];
            }
        }
        v[k] = x;
    }
    v
}

/// Gray-code Sobol generator over `[0, 1)^dim`. The all-zeros point that
/// opens the sequence is skipped, so the first point is `(0.5, ..., 0.5)`.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!("Sobol dimension {dim} unsupported (1..={MAX_DIM})")));
        }
        Ok(Sobol { directions: (0..dim).map(direction_numbers).collect(), state: vec![0; dim], index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        // Flip the direction number at the lowest zero bit of the index.
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        for (x, v) in self.state.iter_mut().zip(&self.directions) {
            *x ^= v[c];
        }
        self.index += 1;
        self.state.iter().map(|&x| x as f64 / (1u64 << BITS) as f64).collect()
    }
}
