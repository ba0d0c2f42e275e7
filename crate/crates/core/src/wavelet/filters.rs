use std::sync::OnceLock;

use super::Family;

const FILTER_TABLE: &str = include_str!("../../data/filters.txt");

#[derive(Debug, Clone)]
pub(crate) struct FilterEntry {
    pub nu: u32,
    pub family: Family,
    pub taps: Vec<f64>,
}

fn table() -> &'static [FilterEntry] {
    static TABLE: OnceLock<Vec<FilterEntry>> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(FILTER_TABLE))
}

fn parse_table(text: &str) -> Vec<FilterEntry> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let mut fields = line.split_whitespace();
            let nu: u32 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .expect("filter table: bad nu");
            let family = match fields.next() {
                Some("db") => Family::MinimumPhase,
                Some("sym") => Family::Symlet,
                other => panic!("filter table: unknown family {other:?}"),
            };
            let taps: Vec<f64> = fields
                .map(|f| f.parse().expect("filter table: bad tap"))
                .collect();
            assert_eq!(taps.len(), 2 * nu as usize, "filter table: tap count");
            FilterEntry { nu, family, taps }
        })
        .collect()
}

/// Lowpass taps `h_0..h_{2ν-1}` with `φ(x) = √2 Σ h_k φ(2x - k)`.
///
/// Symlets with ν = 1 are the Haar filter.
pub(crate) fn lookup(nu: u32, family: Family) -> Option<Vec<f64>> {
    let family = if nu == 1 {
        Family::MinimumPhase
    } else {
        family
    };
    table()
        .iter()
        .find(|e| e.nu == nu && e.family == family)
        .map(|e| e.taps.clone())
}

#[cfg(test)]
pub(crate) fn available() -> impl Iterator<Item = (u32, Family)> {
    table().iter().map(|e| (e.nu, e.family))
}
