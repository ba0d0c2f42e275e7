//! Multilevel random subsampling, the scaled measurement operator and the
//! sample-allocation formulas.
//!
//! Row indices are Walsh sequencies `n` (0-based), so sampling level `k`
//! covers `N_{k-1} ≤ n < N_k`. Coefficient positions are 0-based too.

use std::io::{self, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CsError, Result};
use crate::limits;
use crate::section::SectionMatrix;

fn check_bounds(name: &str, bounds: &[usize]) -> Result<()> {
    if bounds.is_empty() {
        return Err(CsError::InvalidScheme(format!("{name} has no levels")));
    }
    if bounds[0] == 0 || bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CsError::InvalidScheme(format!(
            "{name} = {bounds:?} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

fn widths(bounds: &[usize]) -> Vec<usize> {
    let mut prev = 0;
    bounds
        .iter()
        .map(|&b| {
            let w = b - prev;
            prev = b;
            w
        })
        .collect()
}

fn range_of(bounds: &[usize], k: usize) -> Range<usize> {
    let lo = if k == 0 { 0 } else { bounds[k - 1] };
    lo..bounds[k]
}

/// Sampling levels `N`, local sample counts `m`, sparsity levels `M`,
/// local sparsities `s` and the number `r0` of fully sampled levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelScheme {
    n: Vec<usize>,
    m: Vec<usize>,
    levels: Vec<usize>,
    s: Vec<usize>,
    r0: usize,
}

impl LevelScheme {
    pub fn new(
        n: Vec<usize>,
        m: Vec<usize>,
        levels: Vec<usize>,
        s: Vec<usize>,
        r0: usize,
    ) -> Result<Self> {
        check_bounds("N", &n)?;
        check_bounds("M", &levels)?;
        let r = n.len();
        if m.len() != r || levels.len() != r || s.len() != r {
            return Err(CsError::InvalidScheme(format!(
                "level counts differ: N {}, m {}, M {}, s {}",
                r,
                m.len(),
                levels.len(),
                s.len()
            )));
        }
        if r0 > r {
            return Err(CsError::InvalidScheme(format!("r0 = {r0} > r = {r}")));
        }
        for (k, (&mk, w)) in m.iter().zip(widths(&n)).enumerate() {
            if mk == 0 || mk > w {
                return Err(CsError::InvalidScheme(format!(
                    "m_{} = {mk} outside 1..={w}",
                    k + 1
                )));
            }
            if k < r0 && mk != w {
                return Err(CsError::InvalidScheme(format!(
                    "level {} is saturated (k ≤ r0) but m_{} = {mk} ≠ {w}",
                    k + 1,
                    k + 1
                )));
            }
        }
        for (l, (&sl, w)) in s.iter().zip(widths(&levels)).enumerate() {
            if sl > w {
                return Err(CsError::InvalidScheme(format!(
                    "s_{} = {sl} exceeds level width {w}",
                    l + 1
                )));
            }
        }
        Ok(Self {
            n,
            m,
            levels,
            s,
            r0,
        })
    }

    /// Every sampling level fully sampled.
    pub fn full(n: Vec<usize>, levels: Vec<usize>, s: Vec<usize>) -> Result<Self> {
        check_bounds("N", &n)?;
        let m = widths(&n);
        let r = n.len();
        Self::new(n, m, levels, s, r)
    }

    /// `N = M = [2^{J0+1}, …, 2^{J0+r}]`.
    pub fn dyadic(j0: u32, r: usize, m: Vec<usize>, s: Vec<usize>, r0: usize) -> Result<Self> {
        let bounds: Vec<usize> = (1..=r as u32).map(|k| 1usize << (j0 + k)).collect();
        Self::new(bounds.clone(), m, bounds, s, r0)
    }

    pub fn with_counts(&self, m: Vec<usize>, r0: usize) -> Result<Self> {
        Self::new(self.n.clone(), m, self.levels.clone(), self.s.clone(), r0)
    }

    pub fn with_sparsities(&self, s: Vec<usize>) -> Result<Self> {
        Self::new(
            self.n.clone(),
            self.m.clone(),
            self.levels.clone(),
            s,
            self.r0,
        )
    }

    pub fn r(&self) -> usize {
        self.n.len()
    }

    pub fn r0(&self) -> usize {
        self.r0
    }

    pub fn sampling_bounds(&self) -> &[usize] {
        &self.n
    }

    pub fn counts(&self) -> &[usize] {
        &self.m
    }

    pub fn sparsity_bounds(&self) -> &[usize] {
        &self.levels
    }

    pub fn sparsities(&self) -> &[usize] {
        &self.s
    }

    /// `N_r`.
    pub fn bandwidth(&self) -> usize {
        *self.n.last().unwrap()
    }

    /// `M_r`.
    pub fn sparsity_bandwidth(&self) -> usize {
        *self.levels.last().unwrap()
    }

    /// Rows of sampling level `k` (0-based level).
    pub fn sampling_range(&self, k: usize) -> Range<usize> {
        range_of(&self.n, k)
    }

    /// Coefficients of sparsity level `l` (0-based level).
    pub fn sparsity_range(&self, l: usize) -> Range<usize> {
        range_of(&self.levels, l)
    }

    pub fn sampling_widths(&self) -> Vec<usize> {
        widths(&self.n)
    }

    pub fn sparsity_widths(&self) -> Vec<usize> {
        widths(&self.levels)
    }

    /// `p_k = m_k / (N_k − N_{k−1})`.
    pub fn probability(&self, k: usize) -> f64 {
        self.m[k] as f64 / self.sampling_range(k).len() as f64
    }

    pub fn is_saturated(&self, k: usize) -> bool {
        k < self.r0 || self.m[k] == self.sampling_range(k).len()
    }

    pub fn total_samples(&self) -> usize {
        self.m.iter().sum()
    }

    /// `s_1 + … + s_r`.
    pub fn total_sparsity(&self) -> usize {
        self.s.iter().sum()
    }
}

/// Drawn rows per sampling level, with repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPattern {
    levels: Vec<Vec<usize>>,
    probabilities: Vec<f64>,
    seed: u64,
}

impl SamplingPattern {
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All rows in measurement order.
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.iter().flatten().copied()
    }

    /// `1/√p_k` for every measurement row.
    pub fn row_scales(&self) -> Vec<f64> {
        self.levels
            .iter()
            .zip(&self.probabilities)
            .flat_map(|(rows, &p)| std::iter::repeat_n(1.0 / p.sqrt(), rows.len()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `level,row_index` with 1-based levels and sequency row indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "level,row_index")?;
        for (k, rows) in self.levels.iter().enumerate() {
            for row in rows {
                writeln!(out, "{},{}", k + 1, row)?;
            }
        }
        Ok(())
    }
}

/// Uniform draws with replacement in each unsaturated level; saturated
/// levels take their whole range and consume no randomness.
pub fn draw_pattern(scheme: &LevelScheme, seed: u64) -> SamplingPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = (0..scheme.r())
        .map(|k| {
            let range = scheme.sampling_range(k);
            if scheme.is_saturated(k) {
                range.collect()
            } else {
                (0..scheme.counts()[k])
                    .map(|_| rng.gen_range(range.clone()))
                    .collect()
            }
        })
        .collect();
    SamplingPattern {
        levels,
        probabilities: (0..scheme.r()).map(|k| scheme.probability(k)).collect(),
        seed,
    }
}

/// `H = D P_Ω U` restricted to the columns of a section, and `A = H P_K`.
///
/// The sampled rows are stored unscaled and `D` is applied after each
/// product, so every sample is `(1/√p_k) · (row · x)` exactly.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    pattern: SamplingPattern,
    rows: DMatrix<f64>,
    scales: Vec<f64>,
    k: usize,
}

/// Scaled samples and the part of them coming from coefficients beyond `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: Vec<f64>,
    pub truncation: Vec<f64>,
}

impl MeasurementOperator {
    /// `k` is the data-fidelity bandwidth; columns of `sec` beyond `k` are
    /// kept to model the truncation term.
    pub fn new(sec: &SectionMatrix, pattern: &SamplingPattern, k: usize) -> Result<Self> {
        if k == 0 || k > sec.cols() {
            return Err(CsError::DimensionMismatch {
                expected: sec.cols(),
                got: k,
            });
        }
        if let Some(row) = pattern.rows().find(|&r| r >= sec.rows()) {
            return Err(CsError::DimensionMismatch {
                expected: sec.rows(),
                got: row + 1,
            });
        }
        limits::check_dense(pattern.len(), sec.cols())?;
        let picked: Vec<usize> = pattern.rows().collect();
        let rows = DMatrix::from_fn(picked.len(), sec.cols(), |i, j| {
            sec.entries()[(picked[i], j)]
        });
        Ok(Self {
            pattern: pattern.clone(),
            rows,
            scales: pattern.row_scales(),
            k,
        })
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    /// Data-fidelity bandwidth `K`.
    pub fn bandwidth(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.rows.nrows()
    }

    /// `1/√p_k` per measurement row.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Dense `A = H P_K`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.k, |i, j| {
            self.scales[i] * self.rows[(i, j)]
        })
    }

    /// Dense `H` over every available column.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.rows.ncols(), |i, j| {
            self.scales[i] * self.rows[(i, j)]
        })
    }

    /// `P_Ω U x` without the level scaling.
    pub fn unscaled(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() > self.rows.ncols() {
            return Err(CsError::DimensionMismatch {
                expected: self.rows.ncols(),
                got: x.len(),
            });
        }
        Ok(
            (self.rows.columns(0, x.len()) * DVector::from_column_slice(x))
                .as_slice()
                .to_vec(),
        )
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k {
            return Err(CsError::DimensionMismatch {
                expected: self.k,
                got: z.len(),
            });
        }
        let mut out = self.unscaled(z)?;
        out.iter_mut().zip(&self.scales).for_each(|(v, s)| *v *= s);
        Ok(out)
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows() {
            return Err(CsError::DimensionMismatch {
                expected: self.rows(),
                got: v.len(),
            });
        }
        let scaled =
            DVector::from_iterator(v.len(), v.iter().zip(&self.scales).map(|(a, s)| a * s));
        Ok(self
            .rows
            .columns(0, self.k)
            .tr_mul(&scaled)
            .as_slice()
            .to_vec())
    }

    /// `ỹ = D P_Ω U x + e1` for `x` on up to the section's column count.
    pub fn measure(&self, x: &[f64], e1: &[f64]) -> Result<Measurement> {
        if e1.len() != self.rows() {
            return Err(CsError::DimensionMismatch {
                expected: self.rows(),
                got: e1.len(),
            });
        }
        let raw = self.unscaled(x)?;
        let truncation = if x.len() > self.k {
            let tail = self.rows.columns(self.k, x.len() - self.k)
                * DVector::from_column_slice(&x[self.k..]);
            tail.iter().zip(&self.scales).map(|(t, s)| s * t).collect()
        } else {
            vec![0.0; self.rows()]
        };
        let y = raw
            .iter()
            .zip(&self.scales)
            .zip(e1)
            .map(|((r, s), e)| s * r + e)
            .collect();
        Ok(Measurement { y, truncation })
    }
}

/// Constants shared by the allocation formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationParams {
    pub delta: f64,
    pub eps: f64,
    /// Constant hidden in the `≳` of the sampling conditions.
    pub c_univ: f64,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            eps: 0.1,
            c_univ: 1.0,
        }
    }
}

/// Allocated counts with the intermediate terms of the formula.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub m: Vec<usize>,
    /// Per-level demand before rounding and capping.
    pub demand: Vec<f64>,
    /// Level-coupling sum of each level.
    pub bracket: Vec<f64>,
    /// `L = r log(2m̃) log(2N) log²(2s) + log(1/ε)` at the final `m̃`.
    pub log_term: f64,
    pub m_tilde: usize,
    pub iterations: usize,
    /// False when the fixed point was not reached and every level was
    /// saturated instead.
    pub converged: bool,
}

const MAX_FIXED_POINT_ITERS: usize = 8;

fn validate_allocation(
    n_bounds: &[usize],
    s: &[usize],
    r0: usize,
    p: &AllocationParams,
) -> Result<()> {
    check_bounds("N", n_bounds)?;
    if s.len() != n_bounds.len() {
        return Err(CsError::InvalidScheme(format!(
            "{} sparsities for {} levels",
            s.len(),
            n_bounds.len()
        )));
    }
    if r0 > n_bounds.len() {
        return Err(CsError::InvalidScheme(format!("r0 = {r0} > r")));
    }
    if s.iter().sum::<usize>() == 0 {
        return Err(CsError::InvalidScheme("total sparsity is zero".into()));
    }
    let unit = |v: f64| v > 0.0 && v <= 1.0;
    if !unit(p.delta) || !(p.eps > 0.0 && p.eps < 1.0) || !(p.c_univ > 0.0) {
        return Err(CsError::InvalidArgument(format!(
            "need δ ∈ (0,1], ε ∈ (0,1), C > 0; got {p:?}"
        )));
    }
    Ok(())
}

/// Shared fixed-point driver: `demand(k, L)` is the unrounded requirement of
/// level `k`.
fn fixed_point(
    n_bounds: &[usize],
    s: &[usize],
    r0: usize,
    eps: f64,
    bracket: Vec<f64>,
    demand: impl Fn(usize, f64) -> f64,
) -> Allocation {
    let r = n_bounds.len();
    let w = widths(n_bounds);
    let n = *n_bounds.last().unwrap() as f64;
    let s_tot = s.iter().sum::<usize>() as f64;
    let log_term = |m_tilde: usize| {
        r as f64 * (2.0 * m_tilde.max(1) as f64).ln() * (2.0 * n).ln() * (2.0 * s_tot).ln().powi(2)
            + (1.0 / eps).ln()
    };
    let evaluate = |l: f64| {
        let dem: Vec<f64> = (0..r).map(|k| demand(k, l)).collect();
        let m: Vec<usize> = (0..r)
            .map(|k| {
                if k < r0 {
                    w[k]
                } else {
                    (dem[k].ceil().max(1.0) as usize).min(w[k])
                }
            })
            .collect();
        (dem, m)
    };

    let mut m_tilde: usize = w[r0..].iter().sum();
    for it in 1..=MAX_FIXED_POINT_ITERS {
        let l = log_term(m_tilde);
        let (dem, m) = evaluate(l);
        let next: usize = m[r0..].iter().sum();
        if next == m_tilde || r0 == r {
            return Allocation {
                m,
                demand: dem,
                bracket,
                log_term: l,
                m_tilde,
                iterations: it,
                converged: true,
            };
        }
        m_tilde = next;
    }
    let l = log_term(m_tilde);
    Allocation {
        m: w,
        demand: (0..r).map(|k| demand(k, l)).collect(),
        bracket,
        log_term: l,
        m_tilde,
        iterations: MAX_FIXED_POINT_ITERS,
        converged: false,
    }
}

/// Wavelet-specific allocation
/// `m_k = min(w_k, ⌈C δ^-2 θ^-1 2^{q max(k+1−r,0)} (Σ_l 2^{−|k−l|} s_l) L⌉)`.
pub fn allocate_samples(
    n_bounds: &[usize],
    s: &[usize],
    r0: usize,
    theta: f64,
    q: u32,
    params: &AllocationParams,
) -> Result<Allocation> {
    validate_allocation(n_bounds, s, r0, params)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(CsError::InvalidArgument(format!(
            "θ = {theta} outside (0,1]"
        )));
    }
    let r = n_bounds.len();
    let bracket: Vec<f64> = (0..r)
        .map(|k| {
            s.iter()
                .enumerate()
                .map(|(l, &sl)| (-(k.abs_diff(l) as f64)).exp2() * sl as f64)
                .sum()
        })
        .collect();
    let coef = params.c_univ / (params.delta * params.delta * theta);
    let b = bracket.clone();
    Ok(fixed_point(
        n_bounds,
        s,
        r0,
        params.eps,
        bracket,
        move |k, l| {
            let boost = (q as f64 * (k as f64 + 2.0 - r as f64).max(0.0)).exp2();
            coef * boost * b[k] * l
        },
    ))
}

/// Allocation from explicit local coherences
/// `m_k = min(w_k, ⌈C δ^-2 ‖G⁻¹‖² w_k (Σ_l μ_{k,l} s_l) L⌉)`.
pub fn general_allocate(
    n_bounds: &[usize],
    s: &[usize],
    r0: usize,
    mu: &DMatrix<f64>,
    g_inv_norm: f64,
    params: &AllocationParams,
) -> Result<Allocation> {
    validate_allocation(n_bounds, s, r0, params)?;
    let r = n_bounds.len();
    if mu.nrows() != r || mu.ncols() != r {
        return Err(CsError::DimensionMismatch {
            expected: r,
            got: mu.nrows().max(mu.ncols()),
        });
    }
    if !(g_inv_norm >= 1.0 - 1e-12 && g_inv_norm.is_finite()) {
        return Err(CsError::InvalidArgument(format!("‖G⁻¹‖ = {g_inv_norm}")));
    }
    let w = widths(n_bounds);
    let bracket: Vec<f64> = (0..r)
        .map(|k| (0..r).map(|l| mu[(k, l)] * s[l] as f64).sum())
        .collect();
    let coef = params.c_univ * g_inv_norm * g_inv_norm / (params.delta * params.delta);
    let b = bracket.clone();
    Ok(fixed_point(
        n_bounds,
        s,
        r0,
        params.eps,
        bracket,
        move |k, l| coef * w[k] as f64 * b[k] * l,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::section::assemble_section;
    use crate::wavelet::WaveletSystem;

    #[test]
    fn scheme_validation() {
        assert!(LevelScheme::new(vec![2, 4], vec![2, 1], vec![2, 4], vec![1, 1], 1).is_ok());
        assert!(LevelScheme::new(vec![2, 4], vec![1, 1], vec![2, 4], vec![1, 1], 1).is_err());
        assert!(LevelScheme::new(vec![2, 2], vec![2, 1], vec![2, 4], vec![1, 1], 0).is_err());
        assert!(LevelScheme::new(vec![2, 4], vec![2, 3], vec![2, 4], vec![1, 1], 0).is_err());
        assert!(LevelScheme::new(vec![2, 4], vec![2, 1], vec![2, 4], vec![3, 1], 0).is_err());
        assert!(LevelScheme::new(vec![2, 4], vec![2, 1], vec![2, 4], vec![1], 0).is_err());
        assert!(LevelScheme::new(vec![2, 4], vec![2, 1], vec![2, 4], vec![1, 1], 3).is_err());
    }

    #[test]
    fn full_sampling_takes_every_row() {
        let scheme = LevelScheme::full(vec![2, 4, 8], vec![2, 4, 8], vec![1, 1, 1]).unwrap();
        let p = draw_pattern(&scheme, 3);
        assert_eq!(p.rows().collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        assert!(p.probabilities().iter().all(|&q| q == 1.0));
    }

    #[test]
    fn patterns_are_seeded_and_saturated_levels_fixed() {
        let scheme = LevelScheme::new(
            vec![4, 16, 64],
            vec![4, 5, 9],
            vec![4, 16, 64],
            vec![1, 2, 2],
            1,
        )
        .unwrap();
        let a = draw_pattern(&scheme, 11);
        assert_eq!(a, draw_pattern(&scheme, 11));
        assert_ne!(a, draw_pattern(&scheme, 12));
        for seed in 0..20 {
            let p = draw_pattern(&scheme, seed);
            assert_eq!(p.levels()[0], vec![0, 1, 2, 3]);
            assert_eq!(p.levels()[1].len(), 5);
            assert!(p.levels()[2].iter().all(|r| (16..64).contains(r)));
        }
    }

    #[test]
    fn level_frequencies_match_binomial() {
        let scheme = LevelScheme::new(vec![2, 4], vec![2, 1], vec![2, 4], vec![1, 1], 1).unwrap();
        let trials = 10_000;
        let mut hits = [0usize; 2];
        for seed in 0..trials {
            let p = draw_pattern(&scheme, seed);
            hits[p.levels()[1][0] - 2] += 1;
        }
        let sd = (trials as f64 * 0.25).sqrt();
        for h in hits {
            assert!(
                (h as f64 - trials as f64 / 2.0).abs() < 3.0 * sd,
                "{hits:?}"
            );
        }
    }

    #[test]
    fn full_haar_measurement_is_isometric() {
        let sys = WaveletSystem::haar(0);
        let sec = assemble_section(&sys, 16, 16, 4).unwrap();
        let scheme =
            LevelScheme::full(vec![2, 4, 8, 16], vec![2, 4, 8, 16], vec![1, 1, 1, 1]).unwrap();
        let op = MeasurementOperator::new(&sec, &draw_pattern(&scheme, 0), 16).unwrap();
        let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let y = op.measure(&x, &[0.0; 16]).unwrap().y;
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() < 1e-12);
        let zero = op.measure(&[0.0; 16], &[0.0; 16]).unwrap().y;
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn measurement_matches_dense_oracle_and_splits_truncation() {
        let sys = WaveletSystem::haar(1);
        let sec = assemble_section(&sys, 16, 32, 5).unwrap();
        let scheme = LevelScheme::new(vec![4, 16], vec![4, 6], vec![4, 16], vec![1, 2], 1).unwrap();
        let pat = draw_pattern(&scheme, 5);
        let op = MeasurementOperator::new(&sec, &pat, 16).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let e1: Vec<f64> = (0..10).map(|i| 1e-3 * i as f64).collect();
        let meas = op.measure(&x, &e1).unwrap();
        let scales = pat.row_scales();
        for (i, row) in pat.rows().enumerate() {
            let full: f64 = (0..32).map(|j| sec.entries()[(row, j)] * x[j]).sum();
            let tail: f64 = (16..32).map(|j| sec.entries()[(row, j)] * x[j]).sum();
            assert!((meas.y[i] - scales[i] * full - e1[i]).abs() < 1e-12);
            assert!((meas.truncation[i] - scales[i] * tail).abs() < 1e-12);
        }
        // rows 0..16 only see Haar functions up to scale 3, so the tail is silent
        assert!(meas.truncation.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn expectation_of_sampled_gram_is_section_gram() {
        let sys = WaveletSystem::haar(0);
        let sec = assemble_section(&sys, 16, 16, 4).unwrap();
        let g2 = sec.gram();
        let scheme = LevelScheme::new(
            vec![2, 4, 8, 16],
            vec![2, 1, 2, 3],
            vec![2, 4, 8, 16],
            vec![1, 1, 1, 1],
            1,
        )
        .unwrap();
        let trials = 10_000;
        let mut sum = DMatrix::<f64>::zeros(16, 16);
        let mut sum2 = DMatrix::<f64>::zeros(16, 16);
        for seed in 0..trials {
            let op = MeasurementOperator::new(&sec, &draw_pattern(&scheme, seed), 16).unwrap();
            let a = op.matrix();
            let ata = a.tr_mul(&a);
            sum2 += ata.component_mul(&ata);
            sum += ata;
        }
        let t = trials as f64;
        for i in 0..16 {
            for j in 0..16 {
                let mean = sum[(i, j)] / t;
                let var = (sum2[(i, j)] / t - mean * mean).max(0.0);
                let slack = 5.0 * (var.sqrt() / t.sqrt()) + 1e-12;
                assert!(
                    (mean - g2[(i, j)]).abs() <= slack,
                    "({i},{j}) {mean} vs {}",
                    g2[(i, j)]
                );
            }
        }
    }

    #[test]
    fn rescaling_reproduces_samples() {
        let sys = WaveletSystem::haar(1);
        let sec = assemble_section(&sys, 16, 16, 4).unwrap();
        let scheme = LevelScheme::new(vec![4, 16], vec![4, 5], vec![4, 16], vec![1, 2], 1).unwrap();
        let pat = draw_pattern(&scheme, 9);
        let op = MeasurementOperator::new(&sec, &pat, 16).unwrap();
        let x: Vec<f64> = (0..16).map(|i| i as f64 - 7.5).collect();
        let y = op.measure(&x, &[0.0; 9]).unwrap().y;
        let raw = op.unscaled(&x).unwrap();
        let scales = op.scales();
        assert!(scales[..4].iter().all(|&s| s == 1.0));
        assert!(scales[4..].iter().all(|&s| s == scales[4]));
        for i in 0..9 {
            assert_eq!(y[i], scales[i] * raw[i]);
        }
        assert_eq!(op.apply(&x).unwrap(), y);
    }

    #[test]
    fn single_level_allocation_by_hand() {
        // r = 1, s = 1, N = 64, ε = 1/2: L(m̃) = ln(2m̃) ln(128) ln²(2) + ln 2.
        // m̃: 64 → 13 → 9 → 8 → 8, with L(8) = 7.1565…
        let p = AllocationParams {
            delta: 1.0,
            eps: 0.5,
            c_univ: 1.0,
        };
        let a = allocate_samples(&[64], &[1], 0, 1.0, 0, &p).unwrap();
        assert_eq!(a.bracket, vec![1.0]);
        assert_eq!(a.m, vec![8]);
        assert_eq!(a.m_tilde, 8);
        assert_eq!(a.iterations, 4);
        assert!(a.converged);
        assert!((a.log_term - 7.156529940886281).abs() < 1e-12);
    }

    #[test]
    fn saturated_levels_and_linearity_in_s() {
        let p = AllocationParams {
            delta: 1.0,
            eps: 0.5,
            c_univ: 1e-3,
        };
        let n = [4, 16, 64, 256, 1024];
        let a = allocate_samples(&n, &[2, 2, 2, 2, 2], 2, 0.8, 1, &p).unwrap();
        assert_eq!(&a.m[..2], &[4, 12]);
        let mut s2 = [2, 2, 2, 2, 2];
        s2[3] = 4;
        let b = allocate_samples(&n, &s2, 2, 0.8, 1, &p).unwrap();
        // Doubling s_k doubles the bracket term it contributes to level k.
        assert!((b.bracket[3] - a.bracket[3] - 2.0).abs() < 1e-12);
        let c = allocate_samples(
            &n,
            &[2, 2, 2, 2, 2],
            2,
            0.8,
            1,
            &AllocationParams { c_univ: 2e-3, ..p },
        )
        .unwrap();
        for k in 2..5 {
            let ratio = c.demand[k] / a.demand[k] * a.log_term / c.log_term;
            assert!((ratio - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_general_allocation_reduces_to_sparsity() {
        let j0 = 1;
        let r = 4;
        let n: Vec<usize> = (1..=r).map(|k| 1 << (j0 + k)).collect();
        let mu = DMatrix::from_fn(r, r, |k, l| {
            if k == l {
                (-(j0 as f64) - k as f64).exp2()
            } else {
                0.0
            }
        });
        let p = AllocationParams {
            delta: 1.0,
            eps: 0.5,
            c_univ: 1e-2,
        };
        let s = [1, 2, 3, 4];
        let a = general_allocate(&n, &s, 0, &mu, 1.0, &p).unwrap();
        let w = widths(&n);
        for k in 0..r {
            let factor = w[k] as f64 * mu[(k, k)];
            let expected = if k == 0 { 2.0 } else { 1.0 };
            assert_eq!(factor, expected);
            assert!((a.demand[k] - 1e-2 * expected * s[k] as f64 * a.log_term).abs() < 1e-9);
        }
        let mut bumped = mu.clone();
        bumped[(2, 1)] = 0.05;
        let b = general_allocate(&n, &s, 0, &bumped, 1.0, &p).unwrap();
        assert!(b.m[2] >= a.m[2]);
    }
}
