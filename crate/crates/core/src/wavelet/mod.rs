//! Daubechies scaling functions and wavelets with minimal support,
//! periodized to [0,1).
//!
//! Functions are never sampled symbolically. Point values come from the
//! cascade algorithm started at the exact integer values, and cell averages
//! come from the same cascade run on the antiderivative, which makes them
//! exact up to round-off at every grid depth.

mod cascade;
mod cells;
mod dwt;
mod filters;

pub use cascade::{antiderivative_table, cascade_refine, SupportGrid};
pub use cells::{periodized_cell_averages, CellAverager, CellRule, DEFAULT_MARGIN};
pub use dwt::{periodic_dwt, periodic_dwt_matrix, periodic_idwt};

use std::fmt;

use crate::error::{CsError, Result};

/// Which minimal-support orthonormal filter of a given ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MinimumPhase,
    Symlet,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::MinimumPhase => write!(f, "db"),
            Family::Symlet => write!(f, "sym"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = CsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db" | "minimum-phase" | "daubechies" => Ok(Family::MinimumPhase),
            "sym" | "symlet" => Ok(Family::Symlet),
            _ => Err(CsError::InvalidArgument(format!(
                "unknown wavelet family {s:?}"
            ))),
        }
    }
}

/// Scaling function (`s = 0`) or wavelet (`s = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Scaling,
    Wavelet,
}

/// Lipschitz regularity of the Daubechies functions with ν vanishing
/// moments. Haar is discontinuous and reported as 0; beyond ν = 4 the
/// asymptotic growth `0.2 ν` is used as a heuristic only.
pub fn lipschitz_alpha(nu: u32) -> f64 {
    match nu {
        1 => 0.0,
        2 => 0.55,
        3 => 1.08,
        4 => 1.61,
        n => 0.2 * n as f64,
    }
}

/// Sparsifying basis `{φ_{J0,k}} ∪ {ψ_{j,k} : j ≥ J0}` built from one
/// Daubechies filter.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSystem {
    nu: u32,
    j0: u32,
    family: Family,
    lowpass: Vec<f64>,
    alpha: f64,
}

const TAP_SUM_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-10;

impl WaveletSystem {
    pub fn new(nu: u32, j0: u32, family: Family) -> Result<Self> {
        let taps = filters::lookup(nu, family).ok_or_else(|| {
            CsError::InvalidSystem(format!("no {family} filter with {nu} vanishing moments"))
        })?;
        Self::with_taps(nu, j0, family, taps)
    }

    pub fn haar(j0: u32) -> Self {
        Self::new(1, j0, Family::MinimumPhase).expect("Haar filter is always available")
    }

    /// Validates the filter and the coarsest-scale constraint.
    pub fn with_taps(nu: u32, j0: u32, family: Family, lowpass: Vec<f64>) -> Result<Self> {
        if nu == 0 {
            return Err(CsError::InvalidSystem("ν must be at least 1".into()));
        }
        if lowpass.len() != 2 * nu as usize {
            return Err(CsError::InvalidFilter(format!(
                "expected {} taps, got {}",
                2 * nu,
                lowpass.len()
            )));
        }
        let sum: f64 = lowpass.iter().sum();
        if (sum - std::f64::consts::SQRT_2).abs() > TAP_SUM_TOL {
            return Err(CsError::InvalidFilter(format!("taps sum to {sum}, not √2")));
        }
        for m in 0..nu as usize {
            let acc: f64 = (0..lowpass.len() - 2 * m)
                .map(|k| lowpass[k] * lowpass[k + 2 * m])
                .sum();
            let want = if m == 0 { 1.0 } else { 0.0 };
            if (acc - want).abs() > ORTHO_TOL {
                return Err(CsError::InvalidFilter(format!(
                    "shift-{m} autocorrelation {acc} (want {want})"
                )));
            }
        }
        if j0 > 30 {
            return Err(CsError::InvalidSystem(format!("J0 = {j0} too large")));
        }
        if nu >= 2 && (1u64 << j0) < 2 * nu as u64 {
            return Err(CsError::InvalidSystem(format!(
                "2^J0 = {} must be at least 2ν = {}",
                1u64 << j0,
                2 * nu
            )));
        }
        Ok(Self {
            nu,
            j0,
            family,
            lowpass,
            alpha: lipschitz_alpha(nu),
        })
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn j0(&self) -> u32 {
        self.j0
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    /// `g_k = (-1)^k h_{2ν-1-k}`.
    pub fn highpass(&self) -> Vec<f64> {
        let l = self.lowpass.len();
        (0..l)
            .map(|k| {
                let h = self.lowpass[l - 1 - k];
                if k % 2 == 0 {
                    h
                } else {
                    -h
                }
            })
            .collect()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_haar(&self) -> bool {
        self.nu == 1
    }

    /// Recovery guarantees for Walsh sampling need ν = 1 or ν ≥ 3.
    pub fn has_recovery_guarantee(&self) -> bool {
        self.nu != 2
    }

    /// Support `[-ν+1, ν]` of φ and ψ.
    pub fn support(&self) -> (i64, i64) {
        (-(self.nu as i64) + 1, self.nu as i64)
    }

    pub fn label(&self) -> String {
        format!("{}{} (J0={})", self.family, self.nu, self.j0)
    }
}

/// Where a translation sits relative to the interval boundary at its scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Left,
    Mid,
    Right,
}

/// A function `φ^s_{j,k}` of the basis, addressed by scale, translation and
/// kind. Positions follow the ordering scaling functions at J0, then
/// wavelets at J0, J0+1, ….
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub j: u32,
    pub k: u64,
    pub kind: Kind,
}

impl BasisIndex {
    pub fn scaling(j: u32, k: u64) -> Self {
        Self {
            j,
            k,
            kind: Kind::Scaling,
        }
    }

    pub fn wavelet(j: u32, k: u64) -> Self {
        Self {
            j,
            k,
            kind: Kind::Wavelet,
        }
    }

    pub fn from_position(position: usize, j0: u32) -> Self {
        let base = 1usize << j0;
        if position < base {
            return Self::scaling(j0, position as u64);
        }
        let j = usize::BITS - 1 - position.leading_zeros();
        Self::wavelet(j, (position - (1usize << j)) as u64)
    }

    pub fn position(&self, j0: u32) -> usize {
        match self.kind {
            Kind::Scaling => {
                debug_assert_eq!(self.j, j0);
                self.k as usize
            }
            Kind::Wavelet => (1usize << self.j) + self.k as usize,
        }
    }

    pub fn validate(&self, sys: &WaveletSystem) -> Result<()> {
        let ok = match self.kind {
            Kind::Scaling => self.j == sys.j0,
            Kind::Wavelet => self.j >= sys.j0,
        } && self.j < 40
            && self.k < (1u64 << self.j);
        if ok {
            Ok(())
        } else {
            Err(CsError::InvalidIndex(format!(
                "{self:?} for {}",
                sys.label()
            )))
        }
    }

    pub fn region(&self, nu: u32) -> Region {
        let n = nu as u64;
        let width = 1u64 << self.j;
        if self.k < n {
            Region::Left
        } else if self.k + n >= width {
            Region::Right
        } else {
            Region::Mid
        }
    }
}
