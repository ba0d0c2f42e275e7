use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CsError, Result};
use crate::section::{assemble_section_with, SectionMatrix};
use crate::wavelet::{CellAverager, CellRule, WaveletSystem};

/// `G = √(P_M U* P_N U P_M)` with the quantities derived from its spectrum.
#[derive(Debug, Clone)]
pub struct GramRoot {
    g: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    theta: f64,
    g_norm: f64,
    g_inv_norm: f64,
}

/// Eigenvalues of the Gram below this are treated as zero.
const SINGULAR_TOL: f64 = 1e-14;

/// Root of a symmetric positive semidefinite Gram matrix.
pub fn gram_root(gram: &DMatrix<f64>) -> Result<GramRoot> {
    if !gram.is_square() {
        return Err(CsError::DimensionMismatch {
            expected: gram.nrows(),
            got: gram.ncols(),
        });
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lam = eig.eigenvalues.map(|v| v.max(0.0));
    let root = DMatrix::from_diagonal(&lam.map(f64::sqrt));
    let g = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    let lmin = lam.min();
    let lmax = lam.max();
    let theta = 1.0
        - eig
            .eigenvalues
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
    if theta <= 0.0 || lmin <= SINGULAR_TOL {
        return Err(CsError::BalancingFails { theta });
    }
    Ok(GramRoot {
        g,
        eigenvalues: eig.eigenvalues,
        theta,
        g_norm: lmax.sqrt(),
        g_inv_norm: 1.0 / lmin.sqrt(),
    })
}

/// Balancing data of the leading `n × m` block of a section.
pub fn balancing(sec: &SectionMatrix, n: usize, m: usize) -> Result<GramRoot> {
    if n < m {
        return Err(CsError::InvalidArgument(format!("N = {n} < M = {m}")));
    }
    if n > sec.rows() || m > sec.cols() {
        return Err(CsError::DimensionMismatch {
            expected: sec.rows(),
            got: n,
        });
    }
    let block = sec.entries().view((0, 0), (n, m));
    gram_root(&block.tr_mul(&block))
}

impl GramRoot {
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `G²` rebuilt from the root.
    pub fn g_squared(&self) -> DMatrix<f64> {
        &self.g * &self.g
    }

    /// Eigenvalues of `G²`.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `1 − ‖P_M U* P_N U P_M − P_M‖₂`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn g_norm(&self) -> f64 {
        self.g_norm
    }

    pub fn g_inv_norm(&self) -> f64 {
        self.g_inv_norm
    }

    /// `κ(G) = ‖G‖₂ ‖G⁻¹‖₂`.
    pub fn condition(&self) -> f64 {
        self.g_norm * self.g_inv_norm
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// `θ` for `N = 2^{k+q}`, `q = 0, 1, …`, and the first `q` meeting the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaScan {
    pub target: f64,
    pub q: Option<u32>,
    /// `(q, θ)`; `θ` is negative infinity where the Gram is singular.
    pub trace: Vec<(u32, f64)>,
}

impl ThetaScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "q,theta")?;
        for (q, t) in &self.trace {
            writeln!(out, "{q},{t:.12}")?;
        }
        Ok(())
    }
}

/// Smallest `q ≤ max_q` with `θ(M = 2^k, N = 2^{k+q}) ≥ target`.
///
/// Returns the trace up to the first success; fails with `ScanCap` when no
/// `q` up to `max_q` meets the target.
pub fn balancing_scan(
    sys: &WaveletSystem,
    k: u32,
    target: f64,
    quality: u32,
    max_q: u32,
) -> Result<ThetaScan> {
    if !(target > 0.0 && target < 1.0) {
        return Err(CsError::InvalidArgument(format!(
            "θ target {target} outside (0,1)"
        )));
    }
    let m = 1usize << k;
    let n_max = 1usize << (k + max_q);
    let avg = CellAverager::new(sys, CellRule::Exact);
    let sec = assemble_section_with(&avg, n_max, m, quality.max(k + max_q))?;
    let mut trace = Vec::new();
    for q in 0..=max_q {
        let theta = match balancing(&sec, 1 << (k + q), m) {
            Ok(g) => g.theta(),
            Err(CsError::BalancingFails { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        trace.push((q, theta));
        if theta >= target {
            return Ok(ThetaScan {
                target,
                q: Some(q),
                trace,
            });
        }
    }
    Err(CsError::ScanCap { steps: max_q + 1 })
}
