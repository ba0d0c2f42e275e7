//! Recovery of a function from its first Walsh samples by three routes:
//! weighted QCBP on the section of the continuous change of basis, QCBP in
//! the discrete `2^r`-point model, and direct inversion of the truncated
//! Walsh series.

use std::fmt;
use std::str::FromStr;

use crate::analysis::Weights;
use crate::error::{CsError, Result};
use crate::grid::GridFunction;
use crate::section::{assemble_section_with, SectionMatrix};
use crate::solver::{solve_findim_baseline, solve_wqcbp, SolveReport, SolveRequest, SolverOptions};
use crate::walsh::{fwht_sequency, truncated_walsh_series, Normalization};
use crate::wavelet::{BasisIndex, CellAverager, CellRule, WaveletSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Infinite,
    Finite,
    Series,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Infinite => "infinite",
            Mode::Finite => "finite",
            Mode::Series => "series",
        })
    }
}

impl FromStr for Mode {
    type Err = CsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infinite" => Ok(Mode::Infinite),
            "finite" => Ok(Mode::Finite),
            "series" => Ok(Mode::Series),
            _ => Err(CsError::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

/// The function to be sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    /// Finite expansion in the wavelet basis.
    Coefficients(Vec<(BasisIndex, f64)>),
    /// Cell averages on a dyadic grid; Walsh samples are then taken by
    /// quadrature and are exact only for indices below the grid size.
    Grid(GridFunction),
}

impl Signal {
    /// Largest basis position used, plus one.
    fn coefficient_span(&self, j0: u32) -> usize {
        match self {
            Signal::Coefficients(c) => c.iter().map(|(i, _)| i.position(j0) + 1).max().unwrap_or(0),
            Signal::Grid(_) => 0,
        }
    }

    fn finest_scale(&self) -> u32 {
        match self {
            Signal::Coefficients(c) => c.iter().map(|(i, _)| i.j).max().unwrap_or(0),
            Signal::Grid(g) => g.depth(),
        }
    }

    /// Cell averages on the depth-`depth` grid.
    pub fn grid(&self, avg: &CellAverager, depth: u32) -> Result<GridFunction> {
        match self {
            Signal::Coefficients(c) => {
                let mut out = GridFunction::zeros(depth);
                for &(idx, v) in c {
                    let cells = avg.averages_coarsened(idx, depth.max(idx.j), depth)?;
                    for (o, a) in out.values_mut().iter_mut().zip(cells) {
                        *o += v * a;
                    }
                }
                Ok(out)
            }
            Signal::Grid(g) if g.depth() >= depth => Ok(g.coarsen_to(depth)),
            Signal::Grid(g) => Ok(g.refine_to(depth)),
        }
    }

    /// `⟨f, w_n⟩` for `n < count`.
    pub fn walsh_samples(&self, avg: &CellAverager, count: usize) -> Result<Vec<f64>> {
        let t = count.max(1).next_power_of_two().trailing_zeros();
        if let Signal::Grid(g) = self {
            if g.depth() < t {
                return Err(CsError::Aliasing {
                    n: count - 1,
                    depth: g.depth(),
                });
            }
        }
        let depth = t.max(self.finest_scale());
        let cells = self.grid(avg, depth)?;
        let mut y = fwht_sequency(cells.values(), Normalization::Analysis)?;
        y.truncate(count);
        Ok(y)
    }

    /// Coefficient vector over the first `k` basis positions.
    pub fn coefficient_vector(&self, j0: u32, k: usize) -> Option<Vec<f64>> {
        match self {
            Signal::Coefficients(c) => {
                let mut out = vec![0.0; k.max(self.coefficient_span(j0))];
                for &(idx, v) in c {
                    out[idx.position(j0)] += v;
                }
                Some(out)
            }
            Signal::Grid(_) => None,
        }
    }
}

/// Pipeline settings. `samples` are sequency indices; the infinite mode
/// uses the first `bandwidth` basis functions and `weights` (unweighted if
/// absent); the finite mode works on `2^finite_scale` points.
#[derive(Debug, Clone)]
pub struct ReconstructionSetup {
    pub mode: Mode,
    pub samples: Vec<usize>,
    pub bandwidth: usize,
    pub finite_scale: u32,
    pub eta: f64,
    pub weights: Option<Weights>,
    pub weight_bounds: Vec<usize>,
    pub quality: u32,
    pub grid_depth: u32,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: usize,
}

impl ReconstructionSetup {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol_feas: self.tol_feas,
            tol_gap: self.tol_gap,
            max_iters: self.max_iters,
        }
    }

    pub fn new(mode: Mode, samples: Vec<usize>, bandwidth: usize) -> Self {
        Self {
            mode,
            samples,
            bandwidth,
            finite_scale: 5,
            eta: 1e-6,
            weights: None,
            weight_bounds: Vec::new(),
            quality: crate::section::DEFAULT_QUALITY,
            grid_depth: 10,
            tol_feas: crate::solver::DEFAULT_TOL_FEAS,
            tol_gap: crate::solver::DEFAULT_TOL_GAP,
            max_iters: crate::solver::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mode: Mode,
    pub reference: GridFunction,
    pub grid: GridFunction,
    /// Recovered coefficients over the first `bandwidth` positions
    /// (infinite mode only).
    pub coefficients: Option<Vec<f64>>,
    pub report: Option<SolveReport>,
    /// `‖grid − reference‖ / ‖reference‖` in L².
    pub grid_error: f64,
    /// Relative ℓ² coefficient error when both vectors are available.
    pub coefficient_error: Option<f64>,
}

fn relative(err: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        err
    } else {
        err / reference
    }
}

pub fn reconstruct(
    sys: &WaveletSystem,
    signal: &Signal,
    setup: &ReconstructionSetup,
) -> Result<Reconstruction> {
    if setup.samples.is_empty() {
        return Err(CsError::InvalidArgument("no samples".into()));
    }
    let avg = CellAverager::new(sys, CellRule::Exact);
    let count = setup.samples.iter().max().unwrap() + 1;
    let all = signal.walsh_samples(&avg, count)?;
    let y: Vec<f64> = setup.samples.iter().map(|&i| all[i]).collect();
    let reference = signal.grid(&avg, setup.grid_depth)?;

    let (grid, coefficients, report) = match setup.mode {
        Mode::Series => {
            let mut dense = vec![0.0; count];
            for (&i, &v) in setup.samples.iter().zip(&y) {
                dense[i] = v;
            }
            let depth = count.next_power_of_two().trailing_zeros();
            (truncated_walsh_series(&dense, depth)?, None, None)
        }
        Mode::Finite => {
            let (g, rep) = solve_findim_baseline(
                sys,
                setup.finite_scale,
                &setup.samples,
                &y,
                setup.eta,
                setup.solver_options(),
            )?;
            (g, None, Some(rep))
        }
        Mode::Infinite => {
            let k = setup.bandwidth;
            if k < 1 << sys.j0() {
                return Err(CsError::InvalidArgument(format!(
                    "bandwidth {k} below the {} scaling functions",
                    1u64 << sys.j0()
                )));
            }
            let needed = count.max(k).next_power_of_two().trailing_zeros();
            let sec = assemble_section_with(&avg, count, k, setup.quality.max(needed))?;
            let a = sec.entries().select_rows(setup.samples.iter());
            let weights = match &setup.weights {
                Some(w) if w.r() == setup.weight_bounds.len() => w.expand(&setup.weight_bounds, k),
                Some(w) => {
                    return Err(CsError::DimensionMismatch {
                        expected: w.r(),
                        got: setup.weight_bounds.len(),
                    })
                }
                None => vec![1.0; k],
            };
            let req =
                SolveRequest::new(&a, &y, setup.eta, weights).with_options(setup.solver_options());
            let rep = solve_wqcbp(&req)?;
            let g = synthesize(&avg, &sec, &rep.xhat, setup.grid_depth)?;
            (g, Some(rep.xhat.clone()), Some(rep))
        }
    };

    let depth = setup.grid_depth.max(grid.depth());
    let reference = if depth > reference.depth() {
        signal.grid(&avg, depth)?
    } else {
        reference
    };
    let grid_error = relative(grid.l2_distance(&reference), reference.l2_norm());
    let coefficient_error = coefficients.as_ref().and_then(|z| {
        let truth = signal.coefficient_vector(sys.j0(), z.len())?;
        let tail: f64 = truth[z.len()..].iter().map(|v| v * v).sum();
        let head: f64 = truth.iter().zip(z).map(|(t, v)| (t - v) * (t - v)).sum();
        let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(relative((head + tail).sqrt(), norm))
    });
    Ok(Reconstruction {
        mode: setup.mode,
        reference,
        grid,
        coefficients,
        report,
        grid_error,
        coefficient_error,
    })
}

/// `Σ_i z_i φ_i` as cell averages at `depth`.
fn synthesize(
    avg: &CellAverager,
    sec: &SectionMatrix,
    z: &[f64],
    depth: u32,
) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(depth);
    for (i, &v) in z.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let idx = sec.column_index(i);
        let cells = avg.averages_coarsened(idx, depth.max(idx.j), depth)?;
        for (o, a) in out.values_mut().iter_mut().zip(cells) {
            *o += v * a;
        }
    }
    Ok(out)
}
