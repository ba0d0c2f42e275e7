//! Weighted quadratically-constrained basis pursuit
//!
//! ```text
//! minimize Σ ω_i |z_i|   subject to   ‖A z − y‖₂ ≤ η
//! ```
//!
//! solved with the Chambolle–Pock primal-dual iteration. Every few
//! iterations the current support is polished by solving the optimality
//! conditions on that support in closed form; a polished point is accepted
//! only with a dual certificate, so the reported gap is always a true
//! duality gap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

use crate::error::{CsError, Result};
use crate::grid::GridFunction;
use crate::walsh::sequency_hadamard;
use crate::wavelet::{periodic_dwt_matrix, WaveletSystem};

pub const DEFAULT_TOL_FEAS: f64 = 1e-6;
pub const DEFAULT_TOL_GAP: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 200_000;

const POWER_ITERS: usize = 100;
const CHECK_EVERY: usize = 25;
const SUPPORT_REL_TOL: f64 = 1e-7;

/// Stopping rule shared by every solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: DEFAULT_TOL_FEAS,
            tol_gap: DEFAULT_TOL_GAP,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Problem data and tolerances.
#[derive(Debug, Clone)]
pub struct SolveRequest<'a> {
    pub a: &'a DMatrix<f64>,
    pub y: &'a [f64],
    /// Radius `η ≥ 0` of the residual ball.
    pub eta: f64,
    /// One positive weight per column of `a`.
    pub weights: Vec<f64>,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: usize,
}

impl<'a> SolveRequest<'a> {
    pub fn new(a: &'a DMatrix<f64>, y: &'a [f64], eta: f64, weights: Vec<f64>) -> Self {
        Self {
            a,
            y,
            eta,
            weights,
            tol_feas: DEFAULT_TOL_FEAS,
            tol_gap: DEFAULT_TOL_GAP,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn unweighted(a: &'a DMatrix<f64>, y: &'a [f64], eta: f64) -> Self {
        Self::new(a, y, eta, vec![1.0; a.ncols()])
    }

    pub fn with_options(mut self, opts: SolverOptions) -> Self {
        self.tol_feas = opts.tol_feas;
        self.tol_gap = opts.tol_gap;
        self.max_iters = opts.max_iters;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.y.len() != self.a.nrows() {
            return Err(CsError::DimensionMismatch {
                expected: self.a.nrows(),
                got: self.y.len(),
            });
        }
        if self.weights.len() != self.a.ncols() {
            return Err(CsError::DimensionMismatch {
                expected: self.a.ncols(),
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(CsError::InvalidArgument("weights must be positive".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(CsError::InvalidArgument(format!("η = {}", self.eta)));
        }
        if !(self.tol_feas > 0.0 && self.tol_gap > 0.0) || self.max_iters == 0 {
            return Err(CsError::InvalidArgument(
                "tolerances and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Largest residual accepted as feasible: `η + tol_feas · max(η, ‖y‖)`.
    pub fn feasibility_bound(&self) -> f64 {
        let ny = norm(self.y);
        self.eta + self.tol_feas * self.eta.max(ny)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    InfeasibleRadius,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleRadius => "infeasible_radius",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub xhat: Vec<f64>,
    pub residual_norm: f64,
    pub objective: f64,
    /// Primal objective minus the best dual value found; infinite until
    /// a dual point has been evaluated.
    pub gap_estimate: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Whether `xhat` came from the support polish.
    pub polished: bool,
    pub op_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mul(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn mul_t(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    a.tr_mul(&DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `‖A‖₂` by power iteration on `AᵀA` from the all-ones vector.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let y = mul_t(a, &mul(a, &x));
        lambda = norm(&y);
        if lambda == 0.0 {
            return 0.0;
        }
        x = y.iter().map(|v| v / lambda).collect();
    }
    lambda.sqrt()
}

struct Problem<'r, 'a> {
    req: &'r SolveRequest<'a>,
    bound: f64,
}

impl Problem<'_, '_> {
    fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.req.weights)
            .map(|(v, w)| w * v.abs())
            .sum()
    }

    fn residual(&self, z: &[f64]) -> f64 {
        let az = mul(self.req.a, z);
        az.iter()
            .zip(self.req.y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `⟨v,y⟩ − η‖v‖` after shrinking `v` into `|Aᵀv|_i ≤ ω_i`.
    fn dual_value(&self, v: &[f64]) -> f64 {
        let atv = mul_t(self.req.a, v);
        let scale = atv
            .iter()
            .zip(&self.req.weights)
            .map(|(g, w)| if g.abs() > *w { w / g.abs() } else { 1.0 })
            .fold(1.0, f64::min);
        scale * (dot(v, self.req.y) - self.req.eta * norm(v))
    }

    fn converged(&self, residual: f64, objective: f64, gap: f64) -> bool {
        residual <= self.bound && gap <= self.req.tol_gap * objective.max(1.0)
    }

    /// Optimality conditions on the support of `z` with its signs fixed.
    /// Returns the polished point and its dual certificate.
    fn polish(&self, z: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let a = self.req.a;
        let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if zmax == 0.0 {
            return None;
        }
        let support: Vec<usize> = (0..z.len())
            .filter(|&i| z[i].abs() > SUPPORT_REL_TOL * zmax)
            .collect();
        if support.len() > a.nrows() {
            return None;
        }
        let a_s = a.select_columns(support.iter());
        let chol = Cholesky::<f64, Dyn>::new(a_s.tr_mul(&a_s))?;
        let y = DVector::from_column_slice(self.req.y);
        let z_ls = chol.solve(&a_s.tr_mul(&y));
        let r_ls = &y - &a_s * &z_ls;
        let signed_w = DVector::from_iterator(
            support.len(),
            support.iter().map(|&i| self.req.weights[i] * z[i].signum()),
        );
        let c = chol.solve(&signed_w);
        let q = &a_s * &c;
        let eta = self.req.eta;
        let (z_s, u) = if eta > 0.0 {
            let slack = eta * eta - r_ls.norm_squared();
            if slack < 0.0 || q.norm() == 0.0 {
                return None;
            }
            let mu = slack.sqrt() / q.norm();
            if mu == 0.0 {
                return None;
            }
            (&z_ls - &c * mu, &r_ls / mu + &q)
        } else {
            if r_ls.norm() > self.bound {
                return None;
            }
            (z_ls, q)
        };
        for (k, &i) in support.iter().enumerate() {
            if z_s[k] == 0.0 || z_s[k].signum() != z[i].signum() {
                return None;
            }
        }
        let mut out = vec![0.0; z.len()];
        for (k, &i) in support.iter().enumerate() {
            out[i] = z_s[k];
        }
        Some((out, u.as_slice().to_vec()))
    }
}

/// Weighted QCBP by Chambolle–Pock with steps `τ = σ = 0.99/‖A‖`, zero
/// start and support polishing.
pub fn solve_wqcbp(req: &SolveRequest) -> Result<SolveReport> {
    req.validate()?;
    let a = req.a;
    let (m, k) = (a.nrows(), a.ncols());
    let pb = Problem {
        req,
        bound: req.feasibility_bound(),
    };
    let op_norm = operator_norm(a);
    let ny = norm(req.y);
    if ny <= req.eta || op_norm == 0.0 {
        let status = if ny <= pb.bound {
            SolveStatus::Converged
        } else {
            SolveStatus::InfeasibleRadius
        };
        return Ok(SolveReport {
            xhat: vec![0.0; k],
            residual_norm: ny,
            objective: 0.0,
            gap_estimate: 0.0,
            iterations: 0,
            status,
            polished: false,
            op_norm,
        });
    }

    let step = 0.99 / op_norm;
    let (tau, sigma) = (step, step);
    let mut z = vec![0.0; k];
    let mut zbar = vec![0.0; k];
    let mut u = vec![0.0; m];
    let mut best: Option<(Vec<f64>, f64, f64, bool)> = None;
    let mut best_dual = f64::NEG_INFINITY;

    for it in 1..=req.max_iters {
        let azbar = mul(a, &zbar);
        // u ← v − σ P_B(v/σ), B the η-ball around y
        for i in 0..m {
            u[i] += sigma * azbar[i];
        }
        let p: Vec<f64> = u.iter().zip(req.y).map(|(v, yi)| v / sigma - yi).collect();
        let pn = norm(&p);
        let shrink = if pn > req.eta { req.eta / pn } else { 1.0 };
        for i in 0..m {
            u[i] -= sigma * (req.y[i] + shrink * p[i]);
        }
        let atu = mul_t(a, &u);
        for j in 0..k {
            let v = z[j] - tau * atu[j];
            let t = tau * req.weights[j];
            let new = v.signum() * (v.abs() - t).max(0.0);
            zbar[j] = 2.0 * new - z[j];
            z[j] = new;
        }

        if it % CHECK_EVERY != 0 && it != req.max_iters {
            continue;
        }
        let neg_u: Vec<f64> = u.iter().map(|v| -v).collect();
        best_dual = best_dual.max(pb.dual_value(&neg_u));
        let mut candidates = vec![(z.clone(), false)];
        if let Some((zp, cert)) = pb.polish(&z) {
            best_dual = best_dual.max(pb.dual_value(&cert));
            candidates.push((zp, true));
        }
        for (cand, polished) in candidates {
            let res = pb.residual(&cand);
            let obj = pb.objective(&cand);
            if res > pb.bound {
                continue;
            }
            let gap = (obj - best_dual).max(0.0);
            if pb.converged(res, obj, gap) {
                return Ok(SolveReport {
                    xhat: cand,
                    residual_norm: res,
                    objective: obj,
                    gap_estimate: gap,
                    iterations: it,
                    status: SolveStatus::Converged,
                    polished,
                    op_norm,
                });
            }
            if best.as_ref().is_none_or(|b| obj < b.2) {
                best = Some((cand, res, obj, polished));
            }
        }
    }

    let (xhat, residual_norm, objective, polished, status) = match best {
        Some((x, r, o, p)) => (x, r, o, p, SolveStatus::MaxIters),
        None => {
            let r = pb.residual(&z);
            let o = pb.objective(&z);
            let status = if least_squares_floor(a, req.y) > pb.bound {
                SolveStatus::InfeasibleRadius
            } else {
                SolveStatus::MaxIters
            };
            (z, r, o, false, status)
        }
    };
    let gap_estimate = if best_dual.is_finite() {
        (objective - best_dual).max(0.0)
    } else {
        f64::INFINITY
    };
    Ok(SolveReport {
        xhat,
        residual_norm,
        objective,
        gap_estimate,
        iterations: req.max_iters,
        status,
        polished,
        op_norm,
    })
}

/// `min_z ‖Az − y‖₂`.
pub fn least_squares_floor(a: &DMatrix<f64>, y: &[f64]) -> f64 {
    let svd = SVD::new(a.clone(), true, true);
    let yv = DVector::from_column_slice(y);
    match svd.solve(&yv, 1e-12) {
        Ok(z) => (a * z - yv).norm(),
        Err(_) => yv.norm(),
    }
}

/// Finite-dimensional model: grid values `c` on `2^r` cells, wavelet
/// coefficients `z = Ψ c`, samples `P_Ω (2^-r V) c`. Solves the unweighted
/// QCBP for `z` and returns `Ψ⁻¹ ẑ` as a step function.
pub fn solve_findim_baseline(
    sys: &WaveletSystem,
    r: u32,
    rows: &[usize],
    y: &[f64],
    eta: f64,
    opts: SolverOptions,
) -> Result<(GridFunction, SolveReport)> {
    let n = 1usize << r;
    if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
        return Err(CsError::Aliasing { n: bad, depth: r });
    }
    let v = sequency_hadamard(r)? / n as f64;
    let psi = periodic_dwt_matrix(sys, r)?;
    let b = v.select_rows(rows.iter()) * psi.transpose();
    let report = solve_wqcbp(&SolveRequest::unweighted(&b, y, eta).with_options(opts))?;
    let grid = mul_t(&psi, &report.xhat);
    Ok((GridFunction::new(r, grid)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walsh::{fwht_sequency, Normalization};

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    #[test]
    fn large_radius_gives_zero() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let y = [0.3, 0.4];
        let rep = solve_wqcbp(&SolveRequest::unweighted(&a, &y, 0.5)).unwrap();
        assert_eq!(rep.xhat, vec![0.0; 3]);
        assert_eq!(rep.objective, 0.0);
        assert_eq!(rep.status, SolveStatus::Converged);
    }

    #[test]
    fn recovers_sparse_vector_exactly() {
        let mut rnd = lcg(7);
        let a = DMatrix::from_fn(12, 24, |_, _| rnd() / 12f64.sqrt());
        let mut x = vec![0.0; 24];
        x[3] = 1.0;
        x[17] = -0.5;
        let y = mul(&a, &x);
        let rep = solve_wqcbp(&SolveRequest::unweighted(&a, &y, 0.0)).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        let err: f64 = rep
            .xhat
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn converged_reports_meet_contracts() {
        let mut rnd = lcg(3);
        for trial in 0..10 {
            let a = DMatrix::from_fn(6, 12, |_, _| rnd());
            let y: Vec<f64> = (0..6).map(|_| rnd()).collect();
            let eta = 0.1 * (trial % 3) as f64;
            let w: Vec<f64> = (0..12).map(|_| 1.0 + rnd().abs()).collect();
            let req = SolveRequest::new(&a, &y, eta, w);
            let rep = solve_wqcbp(&req).unwrap();
            assert_eq!(rep.status, SolveStatus::Converged, "trial {trial}");
            assert!(rep.residual_norm <= req.feasibility_bound());
            assert!(rep.gap_estimate <= req.tol_gap * rep.objective.max(1.0));
        }
    }

    #[test]
    fn weight_scaling_and_radius_monotonicity() {
        let mut rnd = lcg(11);
        let a = DMatrix::from_fn(5, 10, |_, _| rnd());
        let y: Vec<f64> = (0..5).map(|_| rnd()).collect();
        let w: Vec<f64> = (0..10).map(|_| 0.5 + rnd().abs()).collect();
        let base = solve_wqcbp(&SolveRequest::new(&a, &y, 0.05, w.clone())).unwrap();
        let scaled = solve_wqcbp(&SolveRequest::new(
            &a,
            &y,
            0.05,
            w.iter().map(|v| 3.0 * v).collect(),
        ))
        .unwrap();
        assert!((scaled.objective - 3.0 * base.objective).abs() < 1e-6 * base.objective.max(1.0));
        for (p, q) in base.xhat.iter().zip(&scaled.xhat) {
            assert!((p - q).abs() < 1e-8);
        }
        let mut last = f64::INFINITY;
        for eta in [0.0, 0.05, 0.1, 0.3] {
            let rep = solve_wqcbp(&SolveRequest::new(&a, &y, eta, w.clone())).unwrap();
            assert!(rep.objective <= last + 1e-8);
            last = rep.objective;
        }
    }

    #[test]
    fn inconsistent_data_is_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let y = [1.0, -1.0];
        let mut req = SolveRequest::unweighted(&a, &y, 0.1);
        req.max_iters = 500;
        let rep = solve_wqcbp(&req).unwrap();
        assert_eq!(rep.status, SolveStatus::InfeasibleRadius);
    }

    #[test]
    fn full_findim_sampling_inverts_transform() {
        let sys = WaveletSystem::haar(0);
        let r = 4;
        let c: Vec<f64> = (0..16).map(|i| ((i * 5) % 7) as f64).collect();
        let y = fwht_sequency(&c, Normalization::Analysis).unwrap();
        let rows: Vec<usize> = (0..16).collect();
        let (grid, rep) =
            solve_findim_baseline(&sys, r, &rows, &y, 0.0, SolverOptions::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        for (g, v) in grid.values().iter().zip(&c) {
            assert!((g - v).abs() < 1e-6 * 7.0, "{g} vs {v}");
        }
    }
}
