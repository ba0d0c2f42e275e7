//! Dyadic arithmetic and sequency-ordered Walsh functions.
//!
//! A point of [0,1) is carried as `t / 2^p` with an explicit depth `p`, so
//! a dyadic rational always uses its finite binary expansion (`1/2` is the
//! digit string `1`, never `0111…`). Walsh functions are evaluated with the
//! digit-sum formula
//!
//! ```text
//! w_n(x) = (-1)^{ Σ_j (n_j + n_{j+1}) x_j }
//! ```
//!
//! where `n = Σ n_j 2^{j-1}` and `x = Σ x_j 2^{-j}`. With this convention
//! `w_n` has exactly `n` sign changes on [0,1).

use nalgebra::DMatrix;

use crate::error::{CsError, Result};
use crate::grid::GridFunction;

/// Largest supported dyadic depth; keeps every shift inside a `u64`.
pub const MAX_DEPTH: u32 = 62;

/// Largest scale for which a dense Hadamard matrix is materialized.
pub const MAX_DENSE_SCALE: u32 = 13;

/// The dyadic rational `t · 2^-p` in [0,1).
#[derive(Debug, Clone, Copy, Eq)]
pub struct DyadicPoint {
    t: u64,
    p: u32,
}

impl DyadicPoint {
    pub fn new(t: u64, p: u32) -> Result<Self> {
        if p > MAX_DEPTH {
            return Err(CsError::SizeLimit(format!(
                "dyadic depth {p} > {MAX_DEPTH}"
            )));
        }
        if t >= 1u64 << p {
            return Err(CsError::InvalidArgument(format!(
                "numerator {t} out of range for depth {p}"
            )));
        }
        Ok(Self { t, p })
    }

    pub const fn zero() -> Self {
        Self { t: 0, p: 0 }
    }

    /// Left endpoint of the cell `Δ_{k,p} = [k 2^-p, (k+1) 2^-p)`.
    pub fn cell(k: u64, p: u32) -> Result<Self> {
        Self::new(k, p)
    }

    pub fn numerator(&self) -> u64 {
        self.t
    }

    pub fn depth(&self) -> u32 {
        self.p
    }

    pub fn value(&self) -> f64 {
        self.t as f64 * (-(self.p as f64)).exp2()
    }

    /// Digit `x_i` (1-based) of the finite expansion; zero beyond the depth.
    pub fn digit(&self, i: u32) -> u8 {
        if i == 0 || i > self.p {
            0
        } else {
            ((self.t >> (self.p - i)) & 1) as u8
        }
    }

    /// Same point at a larger depth (trailing zero digits appended).
    pub fn at_depth(&self, p: u32) -> Result<Self> {
        if p < self.p {
            return Err(CsError::InvalidArgument(format!(
                "cannot lower depth {} to {p}",
                self.p
            )));
        }
        Self::new(self.t << (p - self.p), p)
    }

    /// `x / 2^j`: j zero digits inserted in front of the expansion.
    pub fn scale_down(&self, j: u32) -> Result<Self> {
        Self::new(self.t, self.p + j)
    }

    /// Digits `x_1..x_p` packed little-endian (`x_j` at bit `j-1`).
    fn reversed_digits(&self) -> u64 {
        if self.p == 0 {
            0
        } else {
            self.t.reverse_bits() >> (64 - self.p)
        }
    }
}

impl PartialEq for DyadicPoint {
    fn eq(&self, other: &Self) -> bool {
        let p = self.p.max(other.p);
        (self.t << (p - self.p)) == (other.t << (p - other.p))
    }
}

/// Sequency index `n` of a Walsh function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WalshIndex(pub u64);

impl WalshIndex {
    /// Digit `n_j` (1-based) of `n = n_1 2^0 + n_2 2^1 + …`.
    pub fn digit(&self, j: u32) -> u8 {
        if j == 0 || j > 64 {
            0
        } else {
            ((self.0 >> (j - 1)) & 1) as u8
        }
    }

    /// Bits `n_j ⊕ n_{j+1}`, i.e. the Gray code of `n`.
    fn gray(&self) -> u64 {
        self.0 ^ (self.0 >> 1)
    }
}

impl From<u64> for WalshIndex {
    fn from(n: u64) -> Self {
        WalshIndex(n)
    }
}

/// Digitwise `|x_i - y_i|` at the common depth.
pub fn dyadic_xor(x: DyadicPoint, y: DyadicPoint) -> DyadicPoint {
    let p = x.p.max(y.p);
    DyadicPoint {
        t: (x.t << (p - x.p)) ^ (y.t << (p - y.p)),
        p,
    }
}

/// `w_n(x) ∈ {+1, -1}`.
pub fn walsh_eval(n: WalshIndex, x: DyadicPoint) -> i8 {
    if (n.gray() & x.reversed_digits()).count_ones() & 1 == 0 {
        1
    } else {
        -1
    }
}

/// The `2^r × 2^r` sequency-ordered Hadamard matrix with entries
/// `V[i][j] = w_i(j / 2^r)` (0-based).
pub fn sequency_hadamard(r: u32) -> Result<DMatrix<f64>> {
    if r > MAX_DENSE_SCALE {
        return Err(CsError::SizeLimit(format!(
            "dense Hadamard scale {r} > {MAX_DENSE_SCALE}"
        )));
    }
    let n = 1usize << r;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let x = DyadicPoint { t: j as u64, p: r };
        walsh_eval(WalshIndex(i as u64), x) as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `V c`.
    Unnormalized,
    /// `2^-r V c`: entry `n` is `⟨f, w_n⟩` for the step function with values `c`.
    Analysis,
    /// Inverse of `Analysis`: step-function values from Walsh coefficients.
    Synthesis,
}

fn log2_exact(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(CsError::NotPowerOfTwo(len));
    }
    Ok(len.trailing_zeros())
}

fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Natural-ordered (Hadamard/Sylvester) butterflies, in place.
fn fwht_natural(a: &mut [f64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Fast sequency-ordered Walsh–Hadamard transform in `O(2^r r)`.
///
/// `w_n(t/2^r) = H[gray(n)][rev(t)]` with `H` the natural-ordered Hadamard
/// matrix, so the transform is a bit-reversal scatter, natural butterflies
/// and a Gray-code gather.
pub fn fwht_sequency(c: &[f64], normalization: Normalization) -> Result<Vec<f64>> {
    let r = log2_exact(c.len())?;
    let n = c.len();
    let mut work = vec![0.0; n];
    match normalization {
        Normalization::Unnormalized | Normalization::Analysis => {
            for (t, &v) in c.iter().enumerate() {
                work[bit_reverse(t, r)] = v;
            }
            fwht_natural(&mut work);
            let scale = if normalization == Normalization::Analysis {
                1.0 / n as f64
            } else {
                1.0
            };
            Ok((0..n).map(|k| work[k ^ (k >> 1)] * scale).collect())
        }
        Normalization::Synthesis => {
            for (k, &v) in c.iter().enumerate() {
                work[k ^ (k >> 1)] = v;
            }
            fwht_natural(&mut work);
            Ok((0..n).map(|t| work[bit_reverse(t, r)]).collect())
        }
    }
}

/// `Σ_{n<N} y_n w_n` as a step function on the depth-`grid_depth` grid.
pub fn truncated_walsh_series(samples: &[f64], grid_depth: u32) -> Result<GridFunction> {
    if grid_depth > 30 {
        return Err(CsError::SizeLimit(format!("grid depth {grid_depth}")));
    }
    let len = 1usize << grid_depth;
    if samples.len() > len {
        return Err(CsError::InvalidArgument(format!(
            "{} Walsh samples do not fit a depth-{grid_depth} grid",
            samples.len()
        )));
    }
    let mut padded = vec![0.0; len];
    padded[..samples.len()].copy_from_slice(samples);
    GridFunction::new(
        grid_depth,
        fwht_sequency(&padded, Normalization::Synthesis)?,
    )
}
