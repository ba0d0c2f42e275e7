use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{CsError, Result};
use crate::sampling::LevelScheme;
use crate::section::SectionMatrix;

/// `μ[k][l]`: largest squared entry in the block (sampling level `k`,
/// sparsity level `l`). Levels are 0-based in the API and 1-based in CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceTable {
    mu: DMatrix<f64>,
}

pub fn local_coherence(sec: &SectionMatrix, scheme: &LevelScheme) -> Result<CoherenceTable> {
    if sec.rows() < scheme.bandwidth() || sec.cols() < scheme.sparsity_bandwidth() {
        return Err(CsError::DimensionMismatch {
            expected: scheme.bandwidth().max(scheme.sparsity_bandwidth()),
            got: sec.rows().min(sec.cols()),
        });
    }
    let r = scheme.r();
    let e = sec.entries();
    let mu = DMatrix::from_fn(r, r, |k, l| {
        let mut best: f64 = 0.0;
        for j in scheme.sparsity_range(l) {
            for i in scheme.sampling_range(k) {
                best = best.max(e[(i, j)] * e[(i, j)]);
            }
        }
        best
    });
    Ok(CoherenceTable { mu })
}

impl CoherenceTable {
    pub fn from_matrix(mu: DMatrix<f64>) -> Self {
        Self { mu }
    }

    pub fn r(&self) -> usize {
        self.mu.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mu
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.mu[(k, l)]
    }

    /// Table entry in row `k` (1-based, `2 ≤ k ≤ r`) and column `l`
    /// (1-based, `l < k`): `μ_{k−1,l} / μ_{k,l}`, the factor gained by
    /// stepping one sampling level further away from sparsity level `l`.
    pub fn ratio(&self, k: usize, l: usize) -> Option<f64> {
        if k < 2 || k > self.r() || l == 0 || l >= k {
            return None;
        }
        let den = self.mu[(k - 1, l - 1)];
        (den > 0.0).then(|| self.mu[(k - 2, l - 1)] / den)
    }

    /// `μ_{k,l} 2^{J0+k} 2^{|l−k|}` (1-based levels) for every nonzero entry.
    pub fn decay_constants(&self, j0: u32) -> DMatrix<f64> {
        DMatrix::from_fn(self.r(), self.r(), |k, l| {
            let e = j0 as f64 + (k + 1) as f64 + k.abs_diff(l) as f64;
            self.mu[(k, l)] * e.exp2()
        })
    }

    /// Ratio of the largest to the smallest nonzero decay constant.
    pub fn decay_spread(&self, j0: u32) -> f64 {
        let c = self.decay_constants(j0);
        let (lo, hi) = c
            .iter()
            .filter(|&&v| v > 0.0)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi / lo
    }

    /// Header `k,l1,…,lr`, one row per sampling level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let r = self.r();
        let header: Vec<String> = (1..=r).map(|l| format!("l{l}")).collect();
        writeln!(out, "k,{}", header.join(","))?;
        for k in 0..r {
            let row: Vec<String> = (0..r).map(|l| format!("{:e}", self.mu[(k, l)])).collect();
            writeln!(out, "{},{}", k + 1, row.join(","))?;
        }
        Ok(())
    }

    /// Rows `k = 2..r`, columns `l = 1..cols`; cells with `l ≥ k` are empty.
    pub fn write_ratio_csv<W: Write>(&self, mut out: W, cols: usize) -> io::Result<()> {
        let cols = cols.min(self.r().saturating_sub(1));
        let header: Vec<String> = (1..=cols).map(|l| format!("l{l}")).collect();
        writeln!(out, "k,{}", header.join(","))?;
        for k in 2..=self.r() {
            let row: Vec<String> = (1..=cols)
                .map(|l| {
                    self.ratio(k, l)
                        .map_or(String::new(), |v| format!("{v:.6}"))
                })
                .collect();
            writeln!(out, "{k},{}", row.join(","))?;
        }
        Ok(())
    }
}
