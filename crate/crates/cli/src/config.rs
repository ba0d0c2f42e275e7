//! Experiment configuration: one JSON document, every key optional,
//! unknown keys rejected.

use std::path::{Path, PathBuf};

use cs_lab_core::analysis::Weights;
use cs_lab_core::reconstruct::{Mode, Signal};
use cs_lab_core::sampling::LevelScheme;
use cs_lab_core::{BasisIndex, CsError, Family, GridFunction, WaveletSystem};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub wavelet: WaveletConfig,
    pub scheme: SchemeConfig,
    pub weights: WeightsConfig,
    pub solver: SolverConfig,
    pub signal: SignalConfig,
    pub reconstruct: ReconstructConfig,
    pub balancing: BalancingConfig,
    pub ripl: RiplConfig,
    pub allocation: AllocationConfig,
    pub seed: u64,
    pub quality: u32,
    pub out: PathBuf,
    /// Refuse systems without a recovery guarantee instead of warning.
    pub guarantee: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            wavelet: WaveletConfig::default(),
            scheme: SchemeConfig::default(),
            weights: WeightsConfig::default(),
            solver: SolverConfig::default(),
            signal: SignalConfig::default(),
            reconstruct: ReconstructConfig::default(),
            balancing: BalancingConfig::default(),
            ripl: RiplConfig::default(),
            allocation: AllocationConfig::default(),
            seed: 0,
            quality: cs_lab_core::section::DEFAULT_QUALITY,
            out: PathBuf::from("cs-lab-out"),
            guarantee: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletConfig {
    pub nu: u32,
    pub j0: u32,
    pub family: String,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            nu: 4,
            j0: 4,
            family: "db".into(),
        }
    }
}

/// Level structure. Missing pieces default to dyadic levels
/// `M_k = 2^{J0+k}`, `k = 1…levels_count`, with `N = M`, full sampling and
/// `s_k = 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub levels_count: Option<usize>,
    /// Sparsity levels `M`.
    pub levels: Option<Vec<usize>>,
    /// Sampling levels `N`.
    pub n: Option<Vec<usize>>,
    /// Samples per level.
    pub m: Option<Vec<usize>>,
    pub s: Option<Vec<usize>>,
    pub r0: Option<usize>,
    /// Oversampling exponent of the allocation rule.
    pub q: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    /// `unweighted`, `inverse-sqrt-s` or `explicit`.
    pub mode: String,
    pub values: Option<Vec<f64>>,
    pub tail: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            mode: "unweighted".into(),
            values: None,
            tail: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eta: f64,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            tol_feas: cs_lab_core::solver::DEFAULT_TOL_FEAS,
            tol_gap: cs_lab_core::solver::DEFAULT_TOL_GAP,
            max_iters: cs_lab_core::solver::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    /// `scaling` or `wavelet`.
    pub kind: String,
    pub j: u32,
    pub k: u64,
    pub value: f64,
}

/// Either wavelet coefficients or cell averages on a `2^depth` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub coefficients: Option<Vec<CoefficientEntry>>,
    pub grid: Option<Vec<f64>>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            coefficients: Some(vec![CoefficientEntry {
                kind: "scaling".into(),
                j: 4,
                k: 4,
                value: 1.0,
            }]),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub mode: String,
    /// `first` takes sequency indices `0..samples`; `multilevel` draws a
    /// pattern from the scheme with the run seed.
    pub pattern: String,
    pub samples: usize,
    pub bandwidth: usize,
    pub finite_scale: u32,
    pub grid_depth: u32,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            mode: "infinite".into(),
            pattern: "first".into(),
            samples: 16,
            bandwidth: 32,
            finite_scale: 5,
            grid_depth: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalancingConfig {
    pub theta_target: f64,
    /// `M = 2^k`; defaults to the last sparsity level.
    pub k: Option<u32>,
    pub max_q: u32,
}

impl Default for BalancingConfig {
    fn default() -> Self {
        Self {
            theta_target: 0.5,
            k: None,
            max_q: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiplConfig {
    /// Patterns drawn with seeds `seed, seed+1, …`.
    pub patterns: u64,
    pub cap: u64,
}

impl Default for RiplConfig {
    fn default() -> Self {
        Self {
            patterns: 5,
            cap: cs_lab_core::analysis::DEFAULT_ENUMERATION_CAP as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationConfig {
    /// `wavelet` (decay model) or `coherence` (measured local coherences).
    pub rule: String,
    pub delta: f64,
    pub eps: f64,
    pub c_univ: f64,
    /// Balancing constant; computed from the section when absent.
    pub theta: Option<f64>,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            rule: "wavelet".into(),
            delta: 0.5,
            eps: 0.1,
            c_univ: 1.0,
            theta: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn system(&self) -> Result<WaveletSystem, CliError> {
        let family: Family = self.wavelet.family.parse()?;
        let sys = WaveletSystem::new(self.wavelet.nu, self.wavelet.j0, family)?;
        Ok(sys)
    }

    /// Checks the guarantee flag against the system; returns a warning for
    /// compute-only runs.
    pub fn guarantee_check(&self, sys: &WaveletSystem) -> Result<Option<String>, CliError> {
        if sys.has_recovery_guarantee() {
            return Ok(None);
        }
        let msg = format!("{} carries no recovery guarantee", sys.label());
        if self.guarantee {
            Err(CliError::Validation(msg))
        } else {
            Ok(Some(msg))
        }
    }

    pub fn levels(&self) -> Vec<usize> {
        match &self.scheme.levels {
            Some(l) => l.clone(),
            None => {
                let r = self.scheme.levels_count.unwrap_or(6) as u32;
                (1..=r).map(|k| 1usize << (self.wavelet.j0 + k)).collect()
            }
        }
    }

    pub fn level_scheme(&self) -> Result<LevelScheme, CliError> {
        let levels = self.levels();
        let r = levels.len();
        let n = self.scheme.n.clone().unwrap_or_else(|| levels.clone());
        let s = self.scheme.s.clone().unwrap_or_else(|| vec![1; r]);
        let m = match &self.scheme.m {
            Some(m) => m.clone(),
            None => {
                let mut lo = 0;
                n.iter()
                    .map(|&hi| {
                        let w = hi.saturating_sub(lo);
                        lo = hi;
                        w
                    })
                    .collect()
            }
        };
        Ok(LevelScheme::new(
            n,
            m,
            levels,
            s,
            self.scheme.r0.unwrap_or(0),
        )?)
    }

    pub fn weights(&self, s: &[usize]) -> Result<Weights, CliError> {
        let w = match self.weights.mode.as_str() {
            "unweighted" => Weights::unweighted(s.len()).with_tail(self.weights.tail)?,
            "inverse-sqrt-s" => Weights::inverse_sqrt(s, self.weights.tail)?,
            "explicit" => {
                let v =
                    self.weights.values.clone().ok_or_else(|| {
                        CliError::Validation("explicit weights need `values`".into())
                    })?;
                if v.len() != s.len() + 1 {
                    return Err(CliError::Validation(format!(
                        "{} explicit weights for {} levels plus the tail",
                        v.len(),
                        s.len()
                    )));
                }
                Weights::new(v)?
            }
            other => {
                return Err(CliError::Validation(format!(
                    "unknown weights mode {other:?}"
                )))
            }
        };
        Ok(w)
    }

    pub fn signal(&self) -> Result<Signal, CliError> {
        match (&self.signal.coefficients, &self.signal.grid) {
            (Some(c), None) => {
                let mut out = Vec::with_capacity(c.len());
                for e in c {
                    let idx = match e.kind.as_str() {
                        "scaling" => BasisIndex::scaling(e.j, e.k),
                        "wavelet" => BasisIndex::wavelet(e.j, e.k),
                        other => {
                            return Err(CliError::Validation(format!(
                                "unknown basis kind {other:?}"
                            )))
                        }
                    };
                    idx.validate(&self.system()?)?;
                    out.push((idx, e.value));
                }
                Ok(Signal::Coefficients(out))
            }
            (None, Some(g)) => {
                if !g.len().is_power_of_two() {
                    return Err(CsError::NotPowerOfTwo(g.len()).into());
                }
                let depth = g.len().trailing_zeros();
                Ok(Signal::Grid(GridFunction::new(depth, g.clone())?))
            }
            _ => Err(CliError::Validation(
                "signal needs exactly one of `coefficients` or `grid`".into(),
            )),
        }
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        Ok(self.reconstruct.mode.parse()?)
    }
}
