use nalgebra::DMatrix;

use super::WaveletSystem;
use crate::error::{CsError, Result};

fn check_len(sys: &WaveletSystem, len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(CsError::NotPowerOfTwo(len));
    }
    let r = len.trailing_zeros();
    if r < sys.j0() {
        return Err(CsError::InvalidArgument(format!(
            "length 2^{r} below the coarsest scale 2^{}",
            sys.j0()
        )));
    }
    Ok(r)
}

/// Orthonormal periodic DWT of a length-`2^r` vector down to `2^{J0}`
/// scaling coefficients. Output order: scaling coefficients, then details
/// from coarse to fine.
pub fn periodic_dwt(sys: &WaveletSystem, x: &[f64]) -> Result<Vec<f64>> {
    let r = check_len(sys, x.len())?;
    let h = sys.lowpass();
    let g = sys.highpass();
    let mut out = x.to_vec();
    for j in (sys.j0()..r).rev() {
        let n = 1usize << (j + 1);
        let half = n / 2;
        let cur = out[..n].to_vec();
        for k in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for (t, (&hv, &gv)) in h.iter().zip(&g).enumerate() {
                let v = cur[(2 * k + t) % n];
                a += hv * v;
                d += gv * v;
            }
            out[k] = a;
            out[half + k] = d;
        }
    }
    Ok(out)
}

/// Inverse of [`periodic_dwt`].
pub fn periodic_idwt(sys: &WaveletSystem, c: &[f64]) -> Result<Vec<f64>> {
    let r = check_len(sys, c.len())?;
    let h = sys.lowpass();
    let g = sys.highpass();
    let mut out = c.to_vec();
    for j in sys.j0()..r {
        let n = 1usize << (j + 1);
        let half = n / 2;
        let mut next = vec![0.0; n];
        for k in 0..half {
            let (a, d) = (out[k], out[half + k]);
            for (t, (&hv, &gv)) in h.iter().zip(&g).enumerate() {
                next[(2 * k + t) % n] += hv * a + gv * d;
            }
        }
        out[..n].copy_from_slice(&next);
    }
    Ok(out)
}

/// Dense matrix of [`periodic_dwt`] on length `2^r`.
pub fn periodic_dwt_matrix(sys: &WaveletSystem, r: u32) -> Result<DMatrix<f64>> {
    if r > 13 {
        return Err(CsError::SizeLimit(format!("dense DWT of scale {r}")));
    }
    let n = 1usize << r;
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = periodic_dwt(sys, &e)?;
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::Family;

    #[test]
    fn orthonormal_and_invertible() {
        for (nu, j0, r) in [(1, 0, 4), (2, 2, 5), (4, 4, 5), (4, 3, 7)] {
            let sys = WaveletSystem::new(nu, j0, Family::MinimumPhase).unwrap();
            let w = periodic_dwt_matrix(&sys, r).unwrap();
            let n = 1 << r;
            assert!((w.tr_mul(&w) - DMatrix::identity(n, n)).amax() < 1e-12);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.41).sin()).collect();
            let back = periodic_idwt(&sys, &periodic_dwt(&sys, &x).unwrap()).unwrap();
            assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn haar_coarsest_coefficient_is_scaled_mean() {
        let sys = WaveletSystem::haar(0);
        let c = periodic_dwt(&sys, &[1.0; 8]).unwrap();
        assert!((c[0] - 8f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }
}
