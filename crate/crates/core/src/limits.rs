//! Caps on dense allocations.

use crate::error::{CsError, Result};

/// Environment variable holding the dense-allocation cap in MiB.
pub const MAX_MEM_ENV: &str = "CS_LAB_MAX_MEM_MB";

const DEFAULT_MAX_MEM_MB: u64 = 4096;

/// Current cap in bytes. Unparsable values fall back to the default.
pub fn max_dense_bytes() -> u64 {
    std::env::var(MAX_MEM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_MAX_MEM_MB)
        .saturating_mul(1 << 20)
}

/// Fails when a dense `rows × cols` f64 matrix would exceed the cap.
pub fn check_dense(rows: usize, cols: usize) -> Result<()> {
    let bytes = (rows as u128) * (cols as u128) * 8;
    let cap = max_dense_bytes() as u128;
    if bytes > cap {
        return Err(CsError::SizeLimit(format!(
            "{rows}×{cols} dense matrix needs {} MiB, cap is {} MiB ({MAX_MEM_ENV})",
            bytes >> 20,
            cap >> 20
        )));
    }
    Ok(())
}
