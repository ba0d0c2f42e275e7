use nalgebra::DMatrix;

use super::balancing::GramRoot;
use crate::error::{CsError, Result};

/// `C = 2(2+√3)/(2−√3)`.
pub const ERROR_C: f64 = 2.0 * (2.0 + 1.732_050_807_568_877_2) / (2.0 - 1.732_050_807_568_877_2);
/// `D = 8√2/(2−√3)`.
pub const ERROR_D: f64 = 8.0 * std::f64::consts::SQRT_2 / (2.0 - 1.732_050_807_568_877_2);

/// Level weights `ω_1 … ω_{r+1}`; the last one applies to `[M_r, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(CsError::InvalidArgument(format!(
                "weights must be r+1 ≥ 2 positive numbers, got {w:?}"
            )));
        }
        Ok(Self(w))
    }

    /// `ω = (1, …, 1)` for `r` levels plus the tail.
    pub fn unweighted(r: usize) -> Self {
        Self(vec![1.0; r + 1])
    }

    /// `ω_l = s_l^{-1/2}` with the given tail weight.
    pub fn inverse_sqrt(s: &[usize], tail: f64) -> Result<Self> {
        if s.contains(&0) {
            return Err(CsError::InvalidArgument(
                "s_l^{-1/2} needs every s_l ≥ 1".into(),
            ));
        }
        let mut w: Vec<f64> = s.iter().map(|&v| 1.0 / (v as f64).sqrt()).collect();
        w.push(tail);
        Self::new(w)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of sparsity levels `r`.
    pub fn r(&self) -> usize {
        self.0.len() - 1
    }

    pub fn tail(&self) -> f64 {
        self.0[self.r()]
    }

    /// Same level weights with a different tail weight.
    pub fn with_tail(&self, tail: f64) -> Result<Self> {
        let mut w = self.0.clone();
        *w.last_mut().unwrap() = tail;
        Self::new(w)
    }

    /// `S_{ω,s} = Σ ω_l² s_l`.
    pub fn s_omega(&self, s: &[usize]) -> f64 {
        self.0.iter().zip(s).map(|(w, &sl)| w * w * sl as f64).sum()
    }

    /// `ζ_{s,ω} = min_l ω_l² s_l`.
    pub fn zeta(&self, s: &[usize]) -> f64 {
        self.0
            .iter()
            .zip(s)
            .map(|(w, &sl)| w * w * sl as f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// Weight of coefficient `i` under sparsity levels `bounds`.
    pub fn weight_of(&self, bounds: &[usize], i: usize) -> f64 {
        let l = bounds.partition_point(|&b| b <= i);
        self.0[l.min(self.r())]
    }

    /// Per-coefficient weights for a vector of length `k`.
    pub fn expand(&self, bounds: &[usize], k: usize) -> Vec<f64> {
        (0..k).map(|i| self.weight_of(bounds, i)).collect()
    }
}

fn check_len(x: &[f64], bounds: &[usize], w: &Weights) -> Result<()> {
    let mr = *bounds.last().unwrap_or(&0);
    if bounds.len() != w.r() || x.len() < mr {
        return Err(CsError::DimensionMismatch {
            expected: mr,
            got: x.len(),
        });
    }
    Ok(())
}

/// `‖x‖_{1,ω} = Σ_l ω_l ‖x restricted to level l‖₁`, the tail level being
/// everything from `M_r` on.
pub fn weighted_norm(x: &[f64], bounds: &[usize], w: &Weights) -> Result<f64> {
    check_len(x, bounds, w)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| w.weight_of(bounds, i) * v.abs())
        .sum())
}

/// `σ_{s,M}(x)_{1,ω}`: keeps the `s_l` largest entries of every level
/// (lower index first on ties) and charges everything else, including the
/// whole tail.
pub fn best_sm_error(x: &[f64], bounds: &[usize], s: &[usize], w: &Weights) -> Result<f64> {
    check_len(x, bounds, w)?;
    if s.len() != bounds.len() {
        return Err(CsError::DimensionMismatch {
            expected: bounds.len(),
            got: s.len(),
        });
    }
    let mut err = 0.0;
    let mut lo = 0;
    for (l, &hi) in bounds.iter().enumerate() {
        let mut idx: Vec<usize> = (lo..hi).collect();
        idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
        err += w.values()[l] * idx.iter().skip(s[l]).map(|&i| x[i].abs()).sum::<f64>();
        lo = hi;
    }
    err += w.tail() * x[lo..].iter().map(|v| v.abs()).sum::<f64>();
    Ok(err)
}

/// `ω_l = s_l^{-1/2}` and
/// `ω_{r+1} = √r (1/(3(1+r^{1/4})) + 2√(2/θ) ‖A P_K^M‖_{1→2})`,
/// the norm being the largest column norm of `A` beyond column `M`.
pub fn recommended_weights(s: &[usize], a: &DMatrix<f64>, m: usize, theta: f64) -> Result<Weights> {
    if !(theta > 0.0) {
        return Err(CsError::BalancingFails { theta });
    }
    if m > a.ncols() {
        return Err(CsError::DimensionMismatch {
            expected: a.ncols(),
            got: m,
        });
    }
    let tail_norm = (m..a.ncols())
        .map(|j| a.column(j).norm())
        .fold(0.0, f64::max);
    let r = s.len() as f64;
    let tail =
        r.sqrt() * (1.0 / (3.0 * (1.0 + r.powf(0.25))) + 2.0 * (2.0 / theta).sqrt() * tail_norm);
    Weights::inverse_sqrt(s, tail)
}

/// `t_l = min(M_l − M_{l−1}, 2⌈4κ(G)² S_{ω,s}/ω_l²⌉)`.
///
/// The ceiling ignores relative excesses below 1e-9 so that a computed
/// `κ(G) = 1 + O(ε)` does not bump an integer argument.
pub fn t_levels(bounds: &[usize], s: &[usize], w: &Weights, g: &GramRoot) -> Result<Vec<usize>> {
    if bounds.len() != s.len() || bounds.len() != w.r() {
        return Err(CsError::DimensionMismatch {
            expected: bounds.len(),
            got: s.len().min(w.r()),
        });
    }
    let kappa = g.condition();
    let s_omega = w.s_omega(s);
    let mut lo = 0;
    Ok(bounds
        .iter()
        .enumerate()
        .map(|(l, &hi)| {
            let width = hi - lo;
            lo = hi;
            let arg = 4.0 * kappa * kappa * s_omega / (w.values()[l] * w.values()[l]);
            let ceil = (arg * (1.0 - 1e-9)).ceil();
            width.min(2 * ceil as usize)
        })
        .collect())
}

/// Right-hand sides of the weighted `ℓ¹` and the `ℓ²` recovery bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    pub l1_weighted: f64,
    pub l2: f64,
}

/// `‖x − x̂‖_{1,ω} ≤ Cσ + D‖G⁻¹‖√S η` and
/// `‖x − x̂‖₂ ≤ (1 + (S/ζ)^{1/4}) (Cσ/√S + D‖G⁻¹‖η)`.
pub fn error_bounds(
    sigma: f64,
    eta: f64,
    s: &[usize],
    w: &Weights,
    g_inv_norm: f64,
) -> ErrorBounds {
    let s_omega = w.s_omega(s);
    let zeta = w.zeta(s);
    ErrorBounds {
        l1_weighted: ERROR_C * sigma + ERROR_D * g_inv_norm * s_omega.sqrt() * eta,
        l2: (1.0 + (s_omega / zeta).powf(0.25))
            * (ERROR_C * sigma / s_omega.sqrt() + ERROR_D * g_inv_norm * eta),
    }
}
