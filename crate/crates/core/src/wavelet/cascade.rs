use nalgebra::{DMatrix, DVector};

use super::{Kind, WaveletSystem};
use crate::error::{CsError, Result};

/// Largest number of grid points a single cascade table may hold.
pub const MAX_TABLE_POINTS: usize = 1 << 27;

/// Values of a function on the dyadic grid `origin + i 2^-level`,
/// `i = 0..=(2ν-1) 2^level`, covering the support `[-ν+1, ν]`.
///
/// Outside the table the function equals `0` on the left and `tail` on the
/// right (`tail` is nonzero only for the antiderivative of φ).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportGrid {
    level: u32,
    origin: i64,
    values: Vec<f64>,
    tail: f64,
}

impl SupportGrid {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Value at grid index `i` (may lie outside the support).
    #[inline]
    pub fn at(&self, i: i64) -> f64 {
        if i < 0 {
            0.0
        } else if i as usize >= self.values.len() {
            self.tail
        } else {
            self.values[i as usize]
        }
    }

    /// `(x, value)` pairs over the support.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = self.spacing();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.origin as f64 + i as f64 * h, v))
    }

    /// Riemann sum `Σ f(x_i) g(x_i) h` over the support.
    pub fn riemann_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        self.spacing() * self.points().map(|(x, v)| v * weight(x)).sum::<f64>()
    }

    /// Sup-norm distance between the piecewise-constant representatives of
    /// this table and a finer one, measured on the finer grid.
    pub fn sup_distance(&self, finer: &SupportGrid) -> f64 {
        assert!(finer.level >= self.level && finer.origin == self.origin);
        let shift = finer.level - self.level;
        finer
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.values[i >> shift]).abs())
            .fold(0.0, f64::max)
    }
}

fn table_len(taps: usize, level: u32) -> Result<usize> {
    let len = (taps - 1)
        .checked_mul(1usize.checked_shl(level).unwrap_or(usize::MAX))
        .and_then(|n| n.checked_add(1))
        .unwrap_or(usize::MAX);
    if len > MAX_TABLE_POINTS {
        return Err(CsError::SizeLimit(format!(
            "cascade table at level {level} needs {len} points"
        )));
    }
    Ok(len)
}

/// `φ(n)` at the integers `0..2ν-1` (filter coordinates, support `[0, 2ν-1]`):
/// the eigenvector of `T[n][m] = √2 h_{2n-m}` at eigenvalue 1 with unit sum.
fn integer_values(h: &[f64]) -> Result<Vec<f64>> {
    let l = h.len();
    let t = DMatrix::from_fn(l, l, |n, m| {
        let k = 2 * n as i64 - m as i64;
        if (0..l as i64).contains(&k) {
            std::f64::consts::SQRT_2 * h[k as usize]
        } else {
            0.0
        }
    });
    let shifted = &t - DMatrix::identity(l, l);
    let sv = shifted.clone().svd(false, false).singular_values;
    let scale = sv.max().max(1.0);
    let null_dim = sv.iter().filter(|&&s| s < 1e-9 * scale).count();
    if null_dim != 1 {
        return Err(CsError::InvalidFilter(format!(
            "eigenvalue 1 of the transfer matrix has a {null_dim}-dimensional eigenspace"
        )));
    }
    // Replace the last row of (T - I) v = 0 by the normalization Σ v = 1.
    let mut a = shifted;
    let mut b = DVector::zeros(l);
    for m in 0..l {
        a[(l - 1, m)] = 1.0;
    }
    b[l - 1] = 1.0;
    a.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| CsError::InvalidFilter("singular transfer system".into()))
}

/// `Φ(n) = ∫_{-∞}^n φ` at the integers `0..2ν-1`, from
/// `Φ(x) = Σ_k (h_k/√2) Φ(2x - k)` with `Φ(0) = 0`, `Φ(2ν-1) = 1`.
fn antiderivative_integer_values(h: &[f64]) -> Result<Vec<f64>> {
    let l = h.len();
    let c: Vec<f64> = h.iter().map(|v| v / std::f64::consts::SQRT_2).collect();
    let mut out = vec![0.0; l];
    out[l - 1] = 1.0;
    let unknowns = l.saturating_sub(2);
    if unknowns == 0 {
        return Ok(out);
    }
    let mut a = DMatrix::<f64>::identity(unknowns, unknowns);
    let mut b = DVector::<f64>::zeros(unknowns);
    for row in 0..unknowns {
        let n = row + 1;
        for (k, &ck) in c.iter().enumerate() {
            let m = 2 * n as i64 - k as i64;
            if m <= 0 {
                continue;
            }
            if m as usize >= l - 1 {
                b[row] += ck;
            } else {
                a[(row, m as usize - 1)] -= ck;
            }
        }
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| CsError::InvalidFilter("singular antiderivative system".into()))?;
    out[1..l - 1].copy_from_slice(sol.as_slice());
    Ok(out)
}

/// One cascade step: values at level `q` from values at level `q - 1`,
/// `f(i 2^-q) = Σ_k c_k f((i - k 2^{q-1}) 2^{-(q-1)})`.
fn refine(prev: &[f64], c: &[f64], q: u32, tail: f64) -> Vec<f64> {
    let l = c.len();
    let half = 1i64 << (q - 1);
    let len = (l - 1) * (1usize << q) + 1;
    let last = prev.len() as i64;
    (0..len as i64)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, &ck)| {
                    let m = i - k as i64 * half;
                    if m < 0 {
                        0.0
                    } else if m >= last {
                        ck * tail
                    } else {
                        ck * prev[m as usize]
                    }
                })
                .sum()
        })
        .collect()
}

fn scaling_points(h: &[f64], level: u32) -> Result<Vec<f64>> {
    table_len(h.len(), level)?;
    let c: Vec<f64> = h.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut vals = integer_values(h)?;
    for q in 1..=level {
        vals = refine(&vals, &c, q, 0.0);
    }
    Ok(vals)
}

fn scaling_antiderivative(h: &[f64], level: u32) -> Result<Vec<f64>> {
    table_len(h.len(), level)?;
    let c: Vec<f64> = h.iter().map(|v| v / std::f64::consts::SQRT_2).collect();
    let mut vals = antiderivative_integer_values(h)?;
    for q in 1..=level {
        vals = refine(&vals, &c, q, 1.0);
    }
    Ok(vals)
}

/// `ψ`-type combination `f(i 2^-q) = Σ_k c_k F(2x - k)` read off a level-`q`
/// table of `F`.
fn two_scale_wavelet(table: &[f64], c: &[f64], q: u32, tail: f64) -> Vec<f64> {
    let len = table.len() as i64;
    let step = 1i64 << q;
    (0..len)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, &ck)| {
                    let m = 2 * i - k as i64 * step;
                    if m < 0 {
                        0.0
                    } else if m >= len {
                        ck * tail
                    } else {
                        ck * table[m as usize]
                    }
                })
                .sum()
        })
        .collect()
}

fn haar_points(kind: Kind, level: u32) -> Vec<f64> {
    let n = 1usize << level;
    (0..=n)
        .map(|i| match kind {
            _ if i == n => 0.0,
            Kind::Scaling => 1.0,
            Kind::Wavelet if 2 * i < n => 1.0,
            Kind::Wavelet => -1.0,
        })
        .collect()
}

/// Point values of φ (`Kind::Scaling`) or ψ (`Kind::Wavelet`) on the grid of
/// spacing `2^-q` over `[-ν+1, ν]`, after `q` cascade iterations from the
/// exact integer values. Haar is returned exactly.
pub fn cascade_refine(sys: &WaveletSystem, kind: Kind, q: u32) -> Result<SupportGrid> {
    let (origin, _) = sys.support();
    let h = sys.lowpass();
    table_len(h.len(), q)?;
    let values = if sys.is_haar() {
        haar_points(kind, q)
    } else {
        let phi = scaling_points(h, q)?;
        match kind {
            Kind::Scaling => phi,
            Kind::Wavelet => {
                let g: Vec<f64> = sys
                    .highpass()
                    .iter()
                    .map(|v| v * std::f64::consts::SQRT_2)
                    .collect();
                two_scale_wavelet(&phi, &g, q, 0.0)
            }
        }
    };
    Ok(SupportGrid {
        level: q,
        origin,
        values,
        tail: 0.0,
    })
}

/// `∫_{-∞}^x φ` or `∫_{-∞}^x ψ` on the grid of spacing `2^-level`. The
/// antiderivative satisfies the same two-scale relation with taps halved,
/// so dyadic values are exact up to round-off.
pub fn antiderivative_table(sys: &WaveletSystem, kind: Kind, level: u32) -> Result<SupportGrid> {
    let (origin, _) = sys.support();
    let h = sys.lowpass();
    let big_phi = scaling_antiderivative(h, level)?;
    let (values, tail) = match kind {
        Kind::Scaling => (big_phi, 1.0),
        Kind::Wavelet => {
            let g: Vec<f64> = sys
                .highpass()
                .iter()
                .map(|v| v / std::f64::consts::SQRT_2)
                .collect();
            (two_scale_wavelet(&big_phi, &g, level, 1.0), 0.0)
        }
    };
    Ok(SupportGrid {
        level,
        origin,
        values,
        tail,
    })
}
