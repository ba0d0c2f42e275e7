use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CsError, Result};
use crate::sampling::LevelScheme;

/// Default limit on the number of supports enumerated by brute force.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Maximal supports `Θ` with exactly `s_l` indices in every level
/// `[M_{l−1}, M_l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportFamily {
    bounds: Vec<usize>,
    s: Vec<usize>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

fn combinations(lo: usize, hi: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (lo..lo + k).collect();
    if k == 0 {
        return vec![Vec::new()];
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < hi - (k - i) {
                break;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

impl SupportFamily {
    pub fn new(bounds: Vec<usize>, s: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != s.len() {
            return Err(CsError::InvalidScheme(format!(
                "{} levels with {} sparsities",
                bounds.len(),
                s.len()
            )));
        }
        let mut prev = 0;
        for (&b, &sl) in bounds.iter().zip(&s) {
            if b <= prev || sl > b - prev {
                return Err(CsError::InvalidScheme(format!(
                    "levels {bounds:?} with sparsities {s:?}"
                )));
            }
            prev = b;
        }
        Ok(Self { bounds, s })
    }

    pub fn from_scheme(scheme: &LevelScheme) -> Self {
        Self {
            bounds: scheme.sparsity_bounds().to_vec(),
            s: scheme.sparsities().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn sparsities(&self) -> &[usize] {
        &self.s
    }

    fn level(&self, l: usize) -> (usize, usize) {
        let lo = if l == 0 { 0 } else { self.bounds[l - 1] };
        (lo, self.bounds[l])
    }

    /// `Π_l C(M_l − M_{l−1}, s_l)`.
    pub fn count(&self) -> u128 {
        (0..self.s.len())
            .map(|l| {
                let (lo, hi) = self.level(l);
                binomial(hi - lo, self.s[l])
            })
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    fn per_level(&self) -> Vec<Vec<Vec<usize>>> {
        (0..self.s.len())
            .map(|l| {
                let (lo, hi) = self.level(l);
                combinations(lo, hi, self.s[l])
            })
            .collect()
    }

    /// Every maximal support, in lexicographic order per level.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        let levels = self.per_level();
        let total: usize = levels.iter().map(Vec::len).product();
        (0..total).map(|i| decode(&levels, i)).collect()
    }
}

/// Mixed-radix decoding of a support number, last level fastest.
fn decode(levels: &[Vec<Vec<usize>>], mut idx: usize) -> Vec<usize> {
    let mut picks = vec![0; levels.len()];
    for (l, choices) in levels.iter().enumerate().rev() {
        picks[l] = idx % choices.len();
        idx /= choices.len();
    }
    levels
        .iter()
        .zip(picks)
        .flat_map(|(choices, p)| choices[p].iter().copied())
        .collect()
}

/// `‖P_Θ D P_Θ‖₂` for symmetric `D`.
pub fn restricted_norm(d: &DMatrix<f64>, theta: &[usize]) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(theta.len(), theta.len(), |i, j| d[(theta[i], theta[j])]);
    SymmetricEigen::new(sub)
        .eigenvalues
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn difference(a: &DMatrix<f64>, g2: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    if a.ncols() < dim || g2.nrows() != dim || g2.ncols() != dim {
        return Err(CsError::DimensionMismatch {
            expected: dim,
            got: a.ncols().min(g2.nrows()),
        });
    }
    let a = a.columns(0, dim);
    Ok(a.tr_mul(&a) - g2)
}

/// `δ = max_Θ ‖P_Θ (A*A − G²) P_Θ‖₂` over all maximal supports, with `A`
/// restricted to its first `M_r` columns.
pub fn gripl_bruteforce(
    a: &DMatrix<f64>,
    g2: &DMatrix<f64>,
    family: &SupportFamily,
    cap: u128,
) -> Result<f64> {
    let count = family.count();
    if count > cap {
        return Err(CsError::EnumerationCap { count, cap });
    }
    let d = difference(a, g2, family.dim())?;
    let levels = family.per_level();
    Ok((0..count as usize)
        .into_par_iter()
        .map(|i| restricted_norm(&d, &decode(&levels, i)))
        .reduce(|| 0.0, f64::max))
}

/// Lower bound on `δ` from `trials` uniformly drawn maximal supports.
pub fn gripl_probe(
    a: &DMatrix<f64>,
    g2: &DMatrix<f64>,
    family: &SupportFamily,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(CsError::InvalidArgument("at least one trial".into()));
    }
    let d = difference(a, g2, family.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let mut theta = Vec::new();
        for l in 0..family.s.len() {
            let (lo, hi) = family.level(l);
            theta.extend(
                sample(&mut rng, hi - lo, family.s[l])
                    .into_iter()
                    .map(|i| lo + i),
            );
        }
        best = best.max(restricted_norm(&d, &theta));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_counts_and_enumerates_maximal_supports() {
        let fam = SupportFamily::new(vec![2, 4, 8], vec![1, 1, 2]).unwrap();
        assert_eq!(fam.count(), 2 * 2 * 6);
        let all = fam.supports();
        assert_eq!(all.len(), 24);
        for t in &all {
            assert_eq!(t.iter().filter(|&&i| i < 2).count(), 1);
            assert_eq!(t.iter().filter(|&&i| (2..4).contains(&i)).count(), 1);
            assert_eq!(t.iter().filter(|&&i| (4..8).contains(&i)).count(), 2);
        }
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        assert!(SupportFamily::new(vec![2, 4], vec![3, 1]).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(combinations(3, 7, 2).len(), 6);
        assert_eq!(combinations(0, 3, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn full_support_gives_spectral_norm() {
        let a = DMatrix::from_fn(5, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
        let g2 = DMatrix::identity(4, 4);
        let fam = SupportFamily::new(vec![2, 4], vec![2, 2]).unwrap();
        let d = a.tr_mul(&a) - &g2;
        let want = restricted_norm(&d, &[0, 1, 2, 3]);
        assert!((gripl_bruteforce(&a, &g2, &fam, 10).unwrap() - want).abs() < 1e-14);
        let probe = gripl_probe(&a, &g2, &fam, 3, 0).unwrap();
        assert!((probe - want).abs() < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        let a = DMatrix::zeros(4, 64);
        let g2 = DMatrix::zeros(64, 64);
        let fam = SupportFamily::new(vec![64], vec![10]).unwrap();
        assert!(matches!(
            gripl_bruteforce(&a, &g2, &fam, DEFAULT_ENUMERATION_CAP),
            Err(CsError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn within_level_permutation_equivariance() {
        let a = DMatrix::from_fn(6, 6, |i, j| (((i + 1) * (j + 2)) % 5) as f64 / 5.0 - 0.3);
        let g2 = DMatrix::identity(6, 6) * 0.5;
        let fam = SupportFamily::new(vec![2, 6], vec![1, 2]).unwrap();
        let base = gripl_bruteforce(&a, &g2, &fam, 1000).unwrap();
        let perm = [1, 0, 5, 3, 2, 4];
        let pa = DMatrix::from_fn(6, 6, |i, j| a[(i, perm[j])]);
        let pg = DMatrix::from_fn(6, 6, |i, j| g2[(perm[i], perm[j])]);
        let permuted = gripl_bruteforce(&pa, &pg, &fam, 1000).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }
}
