//! Finite sections `P_N U P_M` of the change of basis between the Walsh
//! sampling basis and a periodized wavelet basis.
//!
//! Column `j` holds `⟨φ_j, w_n⟩` for `n < N`. Since `w_n` with `n < 2^t` is
//! constant on the cells of depth `t`, these inner products only depend on
//! the depth-`t` cell averages of `φ_j`, and one fast transform per column
//! yields the whole column.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CsError, Result};
use crate::limits;
use crate::walsh::{fwht_sequency, Normalization, WalshIndex};
use crate::wavelet::{BasisIndex, CellAverager, CellRule, WaveletSystem};

/// Largest accepted assembly depth.
pub const MAX_QUALITY: u32 = 30;

/// Default assembly depth.
pub const DEFAULT_QUALITY: u32 = 16;

const ROUNDOFF_FLOOR: f64 = 64.0 * f64::EPSILON;

fn ceil_log2(n: usize) -> u32 {
    n.next_power_of_two().trailing_zeros()
}

/// Dense `N × M` section with its column labels and an entrywise error
/// estimate.
#[derive(Debug, Clone)]
pub struct SectionMatrix {
    entries: DMatrix<f64>,
    sys: WaveletSystem,
    quality: u32,
    entry_err: f64,
    columns: Vec<BasisIndex>,
}

impl SectionMatrix {
    /// Wraps a matrix built elsewhere. Columns are labelled in basis order.
    pub fn from_entries(sys: &WaveletSystem, entries: DMatrix<f64>, entry_err: f64) -> Self {
        let columns = (0..entries.ncols())
            .map(|p| BasisIndex::from_position(p, sys.j0()))
            .collect();
        Self {
            entries,
            sys: sys.clone(),
            quality: 0,
            entry_err,
            columns,
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn system(&self) -> &WaveletSystem {
        &self.sys
    }

    pub fn quality(&self) -> u32 {
        self.quality
    }

    pub fn entry_err(&self) -> f64 {
        self.entry_err
    }

    pub fn column_index(&self, col: usize) -> BasisIndex {
        self.columns[col]
    }

    pub fn column_indices(&self) -> &[BasisIndex] {
        &self.columns
    }

    /// Leading `rows × cols` block.
    pub fn truncate(&self, rows: usize, cols: usize) -> Result<SectionMatrix> {
        if rows > self.rows() || cols > self.cols() {
            return Err(CsError::DimensionMismatch {
                expected: self.rows().min(self.cols()),
                got: rows.max(cols),
            });
        }
        Ok(SectionMatrix {
            entries: self.entries.view((0, 0), (rows, cols)).into_owned(),
            sys: self.sys.clone(),
            quality: self.quality,
            entry_err: self.entry_err,
            columns: self.columns[..cols].to_vec(),
        })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(CsError::DimensionMismatch {
                expected: self.cols(),
                got: v.len(),
            });
        }
        Ok((&self.entries * DVector::from_column_slice(v))
            .as_slice()
            .to_vec())
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows() {
            return Err(CsError::DimensionMismatch {
                expected: self.rows(),
                got: v.len(),
            });
        }
        Ok((self.entries.tr_mul(&DVector::from_column_slice(v)))
            .as_slice()
            .to_vec())
    }

    /// `secᵀ sec`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.tr_mul(&self.entries)
    }

    /// One line per matrix row, comma separated, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.rows() {
            let line: Vec<String> = self
                .entries
                .row(i)
                .iter()
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Walsh coefficients `⟨φ, w_n⟩, n < 2^t`, of one basis function, from its
/// cell averages at depth `max(depth, j)`.
fn column_coefficients(
    avg: &CellAverager,
    idx: BasisIndex,
    depth: u32,
    t: u32,
) -> Result<Vec<f64>> {
    let cells = avg.averages_coarsened(idx, depth.max(idx.j), t)?;
    fwht_sequency(&cells, Normalization::Analysis)
}

/// `U_{n,idx} = ⟨φ_idx, w_n⟩`.
///
/// Refuses `n ≥ 2^quality` instead of aliasing.
pub fn u_entry(sys: &WaveletSystem, n: WalshIndex, idx: BasisIndex, quality: u32) -> Result<f64> {
    if quality > MAX_QUALITY {
        return Err(CsError::SizeLimit(format!(
            "quality {quality} > {MAX_QUALITY}"
        )));
    }
    if n.0 >= 1u64 << quality {
        return Err(CsError::Aliasing {
            n: n.0 as usize,
            depth: quality,
        });
    }
    let t = 64 - n.0.leading_zeros();
    let avg = CellAverager::new(sys, CellRule::Exact);
    let coeffs = column_coefficients(&avg, idx, quality, t)?;
    Ok(coeffs[n.0 as usize])
}

/// Assembles `P_N U P_M` with cell averages computed at depth `quality`
/// (or at the scale of the column, when finer).
pub fn assemble_section(
    sys: &WaveletSystem,
    n: usize,
    m: usize,
    quality: u32,
) -> Result<SectionMatrix> {
    assemble_section_with(&CellAverager::new(sys, CellRule::Exact), n, m, quality)
}

/// As [`assemble_section`], reusing the tables of `avg`.
pub fn assemble_section_with(
    avg: &CellAverager,
    n: usize,
    m: usize,
    quality: u32,
) -> Result<SectionMatrix> {
    let sys = avg.system();
    if n == 0 || m == 0 {
        return Err(CsError::InvalidArgument("empty section".into()));
    }
    if quality > MAX_QUALITY {
        return Err(CsError::SizeLimit(format!(
            "quality {quality} > {MAX_QUALITY}"
        )));
    }
    let t = ceil_log2(n);
    if t > quality {
        return Err(CsError::Aliasing {
            n: n - 1,
            depth: quality,
        });
    }
    limits::check_dense(n, m)?;

    let columns: Vec<BasisIndex> = (0..m)
        .map(|p| BasisIndex::from_position(p, sys.j0()))
        .collect();
    let j_max = columns.last().map_or(sys.j0(), |c| c.j);
    avg.prepare(quality, j_max)?;

    let blocks: Vec<Vec<f64>> = columns
        .par_iter()
        .map(|&idx| {
            let mut c = column_coefficients(avg, idx, quality, t)?;
            c.truncate(n);
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let entries = DMatrix::from_iterator(n, m, blocks.into_iter().flatten());

    let entry_err = probe_entry_error(avg, &columns, n, quality, t, &entries)?;
    Ok(SectionMatrix {
        entries,
        sys: sys.clone(),
        quality,
        entry_err,
        columns,
    })
}

/// Largest change of a few probe columns when the depth grows by 2.
fn probe_entry_error(
    avg: &CellAverager,
    columns: &[BasisIndex],
    n: usize,
    quality: u32,
    t: u32,
    entries: &DMatrix<f64>,
) -> Result<f64> {
    if avg.system().is_haar() || quality + 2 > MAX_QUALITY {
        return Ok(ROUNDOFF_FLOOR);
    }
    let m = columns.len();
    let mut probes = vec![0, m / 2, m - 1];
    probes.dedup();
    let mut err: f64 = ROUNDOFF_FLOOR;
    for p in probes {
        let finer = column_coefficients(avg, columns[p], quality + 2, t)?;
        for (i, v) in finer.iter().take(n).enumerate() {
            err = err.max((v - entries[(i, p)]).abs());
        }
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::Family;

    #[test]
    fn haar_entry_examples() {
        let sys = WaveletSystem::haar(0);
        assert_eq!(
            u_entry(&sys, WalshIndex(0), BasisIndex::scaling(0, 0), 4).unwrap(),
            1.0
        );
        let sys1 = WaveletSystem::haar(1);
        let v = u_entry(&sys1, WalshIndex(1), BasisIndex::scaling(1, 0), 4).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let sys3 = WaveletSystem::haar(3);
        for k in 0..8 {
            for n in 8..32 {
                let v = u_entry(&sys3, WalshIndex(n), BasisIndex::scaling(3, k), 6).unwrap();
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn refuses_aliased_sequency() {
        let sys = WaveletSystem::haar(0);
        assert_eq!(
            u_entry(&sys, WalshIndex(16), BasisIndex::scaling(0, 0), 4),
            Err(CsError::Aliasing { n: 16, depth: 4 })
        );
        assert!(assemble_section(&sys, 32, 4, 4).is_err());
    }

    #[test]
    fn haar_square_sections_are_orthogonal() {
        for k in 1..=6 {
            let sys = WaveletSystem::haar(0);
            let sec = assemble_section(&sys, 1 << k, 1 << k, k).unwrap();
            let dev = (sec.gram() - DMatrix::identity(1 << k, 1 << k)).amax();
            assert!(dev < 1e-12, "k={k}: {dev}");
        }
    }

    #[test]
    fn apply_and_adjoint() {
        let sys = WaveletSystem::new(3, 3, Family::MinimumPhase).unwrap();
        let sec = assemble_section(&sys, 32, 16, 10).unwrap();
        let e3: Vec<f64> = (0..16).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect();
        let col = sec.apply(&e3).unwrap();
        for i in 0..32 {
            assert_eq!(col[i], sec.entries()[(i, 3)]);
        }
        let u: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..32).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = sec
            .apply(&u)
            .unwrap()
            .iter()
            .zip(&v)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = sec
            .apply_adjoint(&v)
            .unwrap()
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(sec.apply(&v).is_err());
    }

    #[test]
    fn column_norms_bounded_and_entries_stable() {
        let sys = WaveletSystem::new(4, 4, Family::MinimumPhase).unwrap();
        let sec = assemble_section(&sys, 128, 64, 12).unwrap();
        assert!(sec.entry_err() < 1e-10, "{}", sec.entry_err());
        for j in 0..sec.cols() {
            let n2 = sec.entries().column(j).norm_squared();
            assert!(n2 <= 1.0 + 2.0 * 64.0 * sec.entry_err(), "col {j}: {n2}");
        }
        let direct = u_entry(&sys, WalshIndex(37), sec.column_index(41), 12).unwrap();
        assert!((direct - sec.entries()[(37, 41)]).abs() < 1e-13);
    }

    #[test]
    fn isometry_deficit_shrinks_with_bandwidth() {
        let sys = WaveletSystem::new(4, 4, Family::MinimumPhase).unwrap();
        let sec = assemble_section(&sys, 1 << 9, 32, 12).unwrap();
        let deficit = |n: usize| {
            (0..32)
                .map(|j| 1.0 - sec.entries().view((0, j), (n, 1)).norm_squared())
                .fold(0.0, f64::max)
        };
        let (d1, d2, d3) = (deficit(64), deficit(128), deficit(512));
        assert!(d1 >= d2 && d2 >= d3);
        assert!(d3 < 1e-2, "{d3}");
    }

    #[test]
    fn csv_is_one_line_per_row() {
        let sys = WaveletSystem::haar(1);
        let sec = assemble_section(&sys, 4, 4, 2).unwrap();
        let mut buf = Vec::new();
        sec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}
