use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::cascade::{antiderivative_table, cascade_refine, SupportGrid};
use super::{BasisIndex, Kind, WaveletSystem};
use crate::error::{CsError, Result};
use crate::grid::GridFunction;

/// How cell averages of a basis function are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellRule {
    /// Differences of the cascaded antiderivative: exact up to round-off.
    #[default]
    Exact,
    /// Mean of midpoint cascade values on `2^margin` sub-cells per cell.
    Midpoint { margin: u32 },
}

/// Default oversampling margin of the midpoint rule.
pub const DEFAULT_MARGIN: u32 = 10;

/// Cell averages of periodized basis functions, with the cascade tables
/// shared across calls.
#[derive(Debug)]
pub struct CellAverager {
    sys: WaveletSystem,
    rule: CellRule,
    tables: Mutex<HashMap<(Kind, u32), Arc<SupportGrid>>>,
}

impl CellAverager {
    pub fn new(sys: &WaveletSystem, rule: CellRule) -> Self {
        Self {
            sys: sys.clone(),
            rule,
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn system(&self) -> &WaveletSystem {
        &self.sys
    }

    pub fn rule(&self) -> CellRule {
        self.rule
    }

    fn table(&self, kind: Kind, level: u32) -> Result<Arc<SupportGrid>> {
        if let Some(t) = self.tables.lock().unwrap().get(&(kind, level)) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(match self.rule {
            CellRule::Exact => antiderivative_table(&self.sys, kind, level)?,
            CellRule::Midpoint { .. } => cascade_refine(&self.sys, kind, level)?,
        });
        self.tables
            .lock()
            .unwrap()
            .insert((kind, level), Arc::clone(&table));
        Ok(table)
    }

    /// Builds every table needed for scales `j0..=j_max` at `depth`, so later
    /// calls from worker threads only read.
    pub fn prepare(&self, depth: u32, j_max: u32) -> Result<()> {
        if self.sys.is_haar() {
            return Ok(());
        }
        for j in self.sys.j0()..=j_max.min(depth) {
            let level = self.table_level(depth - j);
            self.table(Kind::Wavelet, level)?;
            if j == self.sys.j0() {
                self.table(Kind::Scaling, level)?;
            }
        }
        Ok(())
    }

    fn table_level(&self, rel: u32) -> u32 {
        match self.rule {
            CellRule::Exact => rel,
            CellRule::Midpoint { margin } => rel + margin + 1,
        }
    }

    /// Averages of `φ^s_{j,k}` (periodized) over the `2^depth` cells of [0,1).
    pub fn averages(&self, idx: BasisIndex, depth: u32) -> Result<GridFunction> {
        let values = self.averages_coarsened(idx, depth, depth)?;
        GridFunction::new(depth, values)
    }

    /// Averages computed at `depth` and then averaged down to `out_depth`.
    pub fn averages_coarsened(
        &self,
        idx: BasisIndex,
        depth: u32,
        out_depth: u32,
    ) -> Result<Vec<f64>> {
        idx.validate(&self.sys)?;
        if depth < idx.j {
            return Err(CsError::DepthTooSmall {
                depth,
                scale: idx.j,
            });
        }
        if out_depth > depth || depth > 40 {
            return Err(CsError::InvalidArgument(format!(
                "output depth {out_depth} with computation depth {depth}"
            )));
        }
        let mut out = vec![0.0; 1usize << out_depth];
        let shift = depth - out_depth;
        let cell_mask = (1i64 << depth) - 1;
        let norm = (-(shift as f64)).exp2();
        let mut deposit = |cell: i64, v: f64| {
            out[((cell & cell_mask) >> shift) as usize] += v * norm;
        };

        let j = idx.j;
        let rel = depth - j;
        let amp = (j as f64 / 2.0).exp2();

        if self.sys.is_haar() {
            // signed cell counts first, so every output is amp · 2^e exactly
            let width = 1i64 << rel;
            let start = idx.k as i64 * width;
            let mut counts = vec![0i64; out.len()];
            let mut count = |cell: i64, v: i64| counts[((cell & cell_mask) >> shift) as usize] += v;
            match idx.kind {
                Kind::Scaling => (0..width).for_each(|c| count(start + c, 1)),
                Kind::Wavelet if rel > 0 => {
                    (0..width).for_each(|c| count(start + c, if 2 * c < width { 1 } else { -1 }))
                }
                Kind::Wavelet => {}
            }
            for (o, c) in out.iter_mut().zip(counts) {
                *o = amp * c as f64 * norm;
            }
            return Ok(out);
        }

        let nu = self.sys.nu() as i64;
        // Cell at (filter-coordinate) grid index 0 of the level-`rel` grid.
        let offset = (idx.k as i64 - nu + 1) << rel;
        let table = self.table(idx.kind, self.table_level(rel))?;
        match self.rule {
            CellRule::Exact => {
                // 2^d 2^{-j/2} = 2^{j/2} 2^{rel}
                let scale = amp * (1u64 << rel) as f64;
                let vals = table.values();
                for (i, w) in vals.windows(2).enumerate() {
                    deposit(offset + i as i64, scale * (w[1] - w[0]));
                }
            }
            CellRule::Midpoint { margin } => {
                let sub = 1usize << margin;
                let vals = table.values();
                let cells = (vals.len() - 1) / (2 * sub);
                for c in 0..cells {
                    let base = c * 2 * sub;
                    let s: f64 = (0..sub).map(|m| vals[base + 2 * m + 1]).sum();
                    deposit(offset + c as i64, amp * s / sub as f64);
                }
            }
        }
        Ok(out)
    }
}

/// Averages of the periodized `φ^s_{j,k}` over the cells `Δ_{i,depth}`.
pub fn periodized_cell_averages(
    sys: &WaveletSystem,
    idx: BasisIndex,
    depth: u32,
) -> Result<GridFunction> {
    CellAverager::new(sys, CellRule::Exact).averages(idx, depth)
}
