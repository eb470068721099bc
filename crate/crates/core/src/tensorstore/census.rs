use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{GemmClass, ModelContainer, Storage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub applicable: usize,
    pub total: usize,
}

impl ClassCount {
    /// `"X/Y"`
    pub fn ratio(&self) -> String {
        format!("{}/{}", self.applicable, self.total)
    }
}

/// Layer applicability per GEMM class. Totals cover GEMM1-4 only; OTHER
/// layers are counted in their own column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityReport {
    pub per_class: BTreeMap<GemmClass, ClassCount>,
    pub applicable: usize,
    pub total: usize,
    /// `applicable / total`, absent for a model without GEMM1-4 layers.
    pub fraction: Option<f64>,
    /// Across every layer, including OTHER; absent for an empty model.
    pub min_value: Option<f64>,
    pub max_value: Option<f64>,
}

impl ApplicabilityReport {
    pub fn class(&self, class: GemmClass) -> ClassCount {
        self.per_class.get(&class).copied().unwrap_or_default()
    }

    /// `"X/Y (P%)"` over GEMM1-4.
    pub fn total_ratio(&self) -> String {
        format_ratio(self.applicable, self.total)
    }
}

/// Formats `"X/Y (P%)"` with one decimal, rounding half to even on the exact
/// rational (146/160 is 91.25% and prints as 91.2%). `0/0` prints `n/a`.
pub fn format_ratio(x: usize, y: usize) -> String {
    if y == 0 {
        return format!("{x}/{y} (n/a)");
    }
    let num = 1000 * x as u128;
    let den = y as u128;
    let (q, r) = (num / den, num % den);
    let tenths = match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    };
    format!("{x}/{y} ({}.{}%)", tenths / 10, tenths % 10)
}

pub fn census(model: &ModelContainer) -> ApplicabilityReport {
    let mut per_class: BTreeMap<GemmClass, ClassCount> = GemmClass::ALL[..4]
        .iter()
        .map(|&c| (c, ClassCount::default()))
        .collect();
    let mut min: Option<f64> = None;
    let mut max: Option<f64> = None;
    for e in model.manifest() {
        let c = per_class.entry(e.gemm_class).or_default();
        c.total += 1;
        if e.storage == Storage::Nested {
            c.applicable += 1;
        }
        min = Some(min.map_or(e.stats.min_value, |m| m.min(e.stats.min_value)));
        max = Some(max.map_or(e.stats.max_value, |m| m.max(e.stats.max_value)));
    }
    let (applicable, total) = per_class
        .iter()
        .filter(|(c, _)| **c != GemmClass::Other)
        .fold((0, 0), |(a, t), (_, n)| (a + n.applicable, t + n.total));
    ApplicabilityReport {
        per_class,
        applicable,
        total,
        fraction: (total > 0).then(|| applicable as f64 / total as f64),
        min_value: min,
        max_value: max,
    }
}
