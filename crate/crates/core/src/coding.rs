//! Rate-1/2 recursive systematic convolutional code `[1, (1+D)/(1+D+D²)]`
//! with soft-input Viterbi decoding.
//!
//! Encoder state is the register pair `(s1, s2)`. For input `u` the feedback
//! bit is `a = u ⊕ s1 ⊕ s2`, the parity is `a ⊕ s1`, and the register shifts to
//! `(a, s1)`. Two tail bits `u = s1 ⊕ s2` return the register to zero; their
//! systematic bits are transmitted like any other.

use crate::error::{IsacError, Result};

pub const MEMORY: usize = 2;
pub const STATES: usize = 4;
pub const TAIL: usize = MEMORY;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    pub systematic: Vec<u8>,
    pub parity: Vec<u8>,
}

impl Codeword {
    pub fn len(&self) -> usize {
        self.systematic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systematic.is_empty()
    }
}

#[inline]
fn step(state: usize, u: u8) -> (usize, u8) {
    let s1 = (state >> 1) as u8 & 1;
    let s2 = state as u8 & 1;
    let a = u ^ s1 ^ s2;
    let p = a ^ s1;
    (((a as usize) << 1) | s1 as usize, p)
}

#[inline]
fn tail_input(state: usize) -> u8 {
    ((state >> 1) ^ state) as u8 & 1
}

/// Encode `bits` and append the terminating tail. Output length is
/// `bits.len() + 2`.
pub fn encode(bits: &[u8]) -> Codeword {
    let mut state = 0usize;
    let mut systematic = Vec::with_capacity(bits.len() + TAIL);
    let mut parity = Vec::with_capacity(bits.len() + TAIL);
    for &b in bits {
        let u = b & 1;
        let (next, p) = step(state, u);
        systematic.push(u);
        parity.push(p);
        state = next;
    }
    for _ in 0..TAIL {
        let u = tail_input(state);
        let (next, p) = step(state, u);
        systematic.push(u);
        parity.push(p);
        state = next;
    }
    debug_assert_eq!(state, 0);
    Codeword { systematic, parity }
}

/// Soft Viterbi decoding of a terminated codeword.
///
/// LLRs are positive when bit 0 is more likely. Returns the information bits
/// (tail stripped).
pub fn viterbi_decode(llr_systematic: &[f64], llr_parity: &[f64]) -> Result<Vec<u8>> {
    let n = llr_systematic.len();
    if llr_parity.len() != n {
        return Err(IsacError::LengthMismatch {
            expected: n,
            actual: llr_parity.len(),
        });
    }
    if n < TAIL {
        return Err(IsacError::LengthMismatch {
            expected: TAIL,
            actual: n,
        });
    }
    const NEG: f64 = f64::NEG_INFINITY;
    let mut metric = [NEG; STATES];
    metric[0] = 0.0;
    // Per step and end state: (previous state, input bit).
    let mut back: Vec<[(u8, u8); STATES]> = Vec::with_capacity(n);
    for k in 0..n {
        let ls = llr_systematic[k];
        let lp = llr_parity[k];
        let mut next = [NEG; STATES];
        let mut from = [(0u8, 0u8); STATES];
        for (s, &m) in metric.iter().enumerate() {
            if m == NEG {
                continue;
            }
            for u in 0..2u8 {
                let (ns, p) = step(s, u);
                let bm = 0.5 * (sign(u) * ls + sign(p) * lp);
                let cand = m + bm;
                if cand > next[ns] {
                    next[ns] = cand;
                    from[ns] = (s as u8, u);
                }
            }
        }
        metric = next;
        back.push(from);
    }
    if metric[0] == NEG {
        return Err(IsacError::Numeric("trellis did not terminate".into()));
    }
    let mut bits = vec![0u8; n];
    let mut state = 0usize;
    for k in (0..n).rev() {
        let (prev, u) = back[k][state];
        bits[k] = u;
        state = prev as usize;
    }
    bits.truncate(n - TAIL);
    Ok(bits)
}

#[inline]
fn sign(b: u8) -> f64 {
    if b == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Row-column block interleaver: write row-wise into `cols` columns, read
/// column-wise. Works for any length; trailing cells of a partial last row
/// are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInterleaver {
    pub cols: usize,
}

impl BlockInterleaver {
    pub fn new(cols: usize) -> Self {
        Self { cols: cols.max(1) }
    }

    /// `perm[k]` is the input index sent to output position `k`.
    pub fn permutation(&self, len: usize) -> Vec<usize> {
        let rows = len.div_ceil(self.cols);
        let mut perm = Vec::with_capacity(len);
        for c in 0..self.cols {
            for r in 0..rows {
                let i = r * self.cols + c;
                if i < len {
                    perm.push(i);
                }
            }
        }
        perm
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.permutation(x.len()).into_iter().map(|i| x[i]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); y.len()];
        for (k, i) in self.permutation(y.len()).into_iter().enumerate() {
            out[i] = y[k];
        }
        out
    }
}
