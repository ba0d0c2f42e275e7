use crate::error::{CsError, Result};

/// Piecewise-constant function on [0,1): `values[i]` is the value on the
/// dyadic cell `[i 2^-depth, (i+1) 2^-depth)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    depth: u32,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(depth: u32, values: Vec<f64>) -> Result<Self> {
        if depth > 40 || values.len() != 1usize << depth {
            return Err(CsError::DimensionMismatch {
                expected: 1usize.checked_shl(depth).unwrap_or(usize::MAX),
                got: values.len(),
            });
        }
        Ok(Self { depth, values })
    }

    pub fn zeros(depth: u32) -> Self {
        Self {
            depth,
            values: vec![0.0; 1 << depth],
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    /// `∫ f g` over [0,1).
    pub fn inner(&self, other: &GridFunction) -> f64 {
        if self.depth == other.depth {
            return self.cell_width()
                * self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
        let d = self.depth.max(other.depth);
        self.refine_to(d).inner(&other.refine_to(d))
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.cell_width() * self.values.iter().sum::<f64>()
    }

    /// Same function represented on a finer grid (each value repeated).
    pub fn refine_to(&self, depth: u32) -> GridFunction {
        assert!(depth >= self.depth, "refine_to cannot coarsen");
        let rep = 1usize << (depth - self.depth);
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, rep))
            .collect();
        GridFunction { depth, values }
    }

    /// Orthogonal projection onto a coarser grid (cell averages).
    pub fn coarsen_to(&self, depth: u32) -> GridFunction {
        assert!(depth <= self.depth, "coarsen_to cannot refine");
        let block = 1usize << (self.depth - depth);
        let values = self
            .values
            .chunks(block)
            .map(|c| c.iter().sum::<f64>() / block as f64)
            .collect();
        GridFunction { depth, values }
    }

    pub fn l2_distance(&self, other: &GridFunction) -> f64 {
        let d = self.depth.max(other.depth);
        let a = self.refine_to(d);
        let b = other.refine_to(d);
        let w = a.cell_width();
        (w * a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>())
        .sqrt()
    }

    /// Cell midpoints, for plotting and CSV output.
    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let w = self.cell_width();
        (0..self.values.len()).map(move |i| (i as f64 + 0.5) * w)
    }
}

impl std::ops::AddAssign<&GridFunction> for GridFunction {
    fn add_assign(&mut self, rhs: &GridFunction) {
        assert_eq!(self.depth, rhs.depth);
        for (a, b) in self.values.iter_mut().zip(&rhs.values) {
            *a += b;
        }
    }
}
