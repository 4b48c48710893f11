//! Numeric-column bins and bin-membership weights.
//!
//! A fitted layout always carries two overflow bins beyond the training
//! range. For interval layouts, a value inside bin `[lo, hi]` belongs to it
//! with weight `0.5 + dist_from_nearer_border / (hi - lo)`; the remainder
//! goes to the adjacent bin on the side the value leans toward, so the exact
//! position inside the bin is preserved. A value at the bin center belongs
//! exclusively to its bin; a value on a border is shared 0.5/0.5.

use crate::error::{Error, Result};
use crate::schema::BinPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    column: String,
    kind: LayoutKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutKind {
    /// Strictly increasing borders; interior bin `i` spans
    /// `[edges[i], edges[i+1])`, the last interior bin is closed. A single
    /// edge marks the degenerate constant-column bin.
    Intervals { edges: Vec<f64> },
    /// One degenerate bin per distinct training value, sorted ascending.
    Distinct { values: Vec<f64> },
}

/// Membership of a single value: bin ids are layout-local, with id 0 the low
/// overflow bin and `bin_count() - 1` the high overflow bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinAssignment {
    pub primary: usize,
    pub primary_weight: f64,
    pub secondary: Option<(usize, f64)>,
}

impl BinLayout {
    /// Fit a layout on the non-missing training values of one column.
    pub fn fit(column: &str, values: &[f64], policy: BinPolicy) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyColumn(column.to_string()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let kind = match policy {
            BinPolicy::Quantile(k) => LayoutKind::Intervals {
                edges: quantile_edges(&sorted, k),
            },
            BinPolicy::PerDistinctValue => {
                sorted.dedup();
                LayoutKind::Distinct { values: sorted }
            }
        };
        Ok(BinLayout {
            column: column.to_string(),
            kind,
        })
    }

    pub fn from_parts(column: String, kind: LayoutKind) -> Self {
        BinLayout { column, kind }
    }

    pub fn column(&self) -> &str {
        &self.column
    }

    pub fn kind(&self) -> &LayoutKind {
        &self.kind
    }

    /// Number of interior (or distinct-value) bins, excluding overflow bins.
    pub fn interior_count(&self) -> usize {
        match &self.kind {
            LayoutKind::Intervals { edges } => edges.len().saturating_sub(1).max(1),
            LayoutKind::Distinct { values } => values.len(),
        }
    }

    /// Total bin count including the two overflow bins.
    pub fn bin_count(&self) -> usize {
        self.interior_count() + 2
    }

    pub fn high_overflow_id(&self) -> usize {
        self.bin_count() - 1
    }

    pub fn assign(&self, value: f64) -> BinAssignment {
        self.assign_with(value, true)
    }

    /// `split_to_overflow = false` suppresses the border split toward the
    /// overflow bins on the outermost interior bins; the full weight then
    /// stays on the interior bin.
    pub fn assign_with(&self, value: f64, split_to_overflow: bool) -> BinAssignment {
        match &self.kind {
            LayoutKind::Intervals { edges } => {
                self.assign_interval(edges, value, split_to_overflow)
            }
            LayoutKind::Distinct { values } => self.assign_distinct(values, value),
        }
    }

    fn assign_interval(&self, edges: &[f64], value: f64, split_to_overflow: bool) -> BinAssignment {
        let min = edges[0];
        let max = edges[edges.len() - 1];
        if value < min {
            return exclusive(0);
        }
        if value > max {
            return exclusive(self.high_overflow_id());
        }
        if edges.len() == 1 {
            // Constant training column: the single degenerate bin.
            return exclusive(1);
        }
        let interior = edges.len() - 1;
        // A value on a border belongs to the higher bin; the training max
        // belongs to the last (closed) interior bin.
        let bin = if value == max {
            interior
        } else {
            edges.partition_point(|&e| e <= value)
        };
        let lo = edges[bin - 1];
        let hi = edges[bin];
        let center = 0.5 * (lo + hi);
        let (weight, neighbor) = if value <= center {
            (0.5 + (value - lo) / (hi - lo), bin - 1)
        } else {
            (0.5 + (hi - value) / (hi - lo), bin + 1)
        };
        let remainder = 1.0 - weight;
        let neighbor_is_overflow = neighbor == 0 || neighbor == self.high_overflow_id();
        if remainder > 0.0 && (split_to_overflow || !neighbor_is_overflow) {
            BinAssignment {
                primary: bin,
                primary_weight: weight,
                secondary: Some((neighbor, remainder)),
            }
        } else {
            exclusive(bin)
        }
    }

    fn assign_distinct(&self, values: &[f64], value: f64) -> BinAssignment {
        if value < values[0] {
            return exclusive(0);
        }
        if value > values[values.len() - 1] {
            return exclusive(self.high_overflow_id());
        }
        // In-range: snap to the nearest distinct value, ties to the lower one.
        let at_or_above = values.partition_point(|&v| v < value);
        let bin = if values[at_or_above] == value {
            at_or_above
        } else {
            let below = at_or_above - 1;
            if value - values[below] <= values[at_or_above] - value {
                below
            } else {
                at_or_above
            }
        };
        exclusive(bin + 1)
    }
}

fn exclusive(bin: usize) -> BinAssignment {
    BinAssignment {
        primary: bin,
        primary_weight: 1.0,
        secondary: None,
    }
}

/// Nearest-rank quantile borders over the sorted training values, duplicates
/// collapsed so the edges stay strictly increasing.
fn quantile_edges(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges = Vec::with_capacity(k + 1);
    let mut push = |e: f64| {
        if edges.last().map_or(true, |&last| e > last) {
            edges.push(e);
        }
    };
    push(sorted[0]);
    for i in 1..k {
        // ceil(i * n / k) as a 1-based rank
        let rank = (i * n).div_ceil(k);
        push(sorted[rank - 1]);
    }
    push(sorted[n - 1]);
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(edges: &[f64]) -> BinLayout {
        BinLayout::from_parts(
            "x".to_string(),
            LayoutKind::Intervals {
                edges: edges.to_vec(),
            },
        )
    }

    #[test]
    fn quantile_fit_counts_bins() {
        let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let layout = BinLayout::fit("age", &values, BinPolicy::Quantile(20)).unwrap();
        assert_eq!(layout.interior_count(), 20);
        assert_eq!(layout.bin_count(), 22);
        // Equal-frequency: every interior bin holds ~10 of the 200 values.
        if let LayoutKind::Intervals { edges } = layout.kind() {
            for pair in edges.windows(2) {
                let count = values
                    .iter()
                    .filter(|&&v| v >= pair[0] && (v < pair[1] || pair[1] == 199.0 && v == 199.0))
                    .count();
                assert!((9..=11).contains(&count), "bin {pair:?} holds {count}");
            }
        } else {
            panic!("expected interval layout");
        }
    }

    #[test]
    fn per_distinct_fit() {
        let layout =
            BinLayout::fit("sibsp", &[1.0, 0.0, 2.0, 0.0, 1.0], BinPolicy::PerDistinctValue)
                .unwrap();
        assert_eq!(layout.interior_count(), 3);
        assert_eq!(layout.bin_count(), 5);
        assert_eq!(layout.assign(1.0), exclusive(2));
        // Unseen in-range values snap to the nearest distinct value.
        assert_eq!(layout.assign(0.9), exclusive(2));
        assert_eq!(layout.assign(0.5), exclusive(1)); // tie goes low
        assert_eq!(layout.assign(-1.0), exclusive(0));
        assert_eq!(layout.assign(8.0), exclusive(4));
    }

    #[test]
    fn constant_column_collapses_to_one_bin() {
        let layout = BinLayout::fit("c", &[5.0, 5.0, 5.0], BinPolicy::Quantile(20)).unwrap();
        assert_eq!(layout.interior_count(), 1);
        assert_eq!(layout.bin_count(), 3);
        assert_eq!(layout.assign(5.0), exclusive(1));
        assert_eq!(layout.assign(4.0), exclusive(0));
        assert_eq!(layout.assign(6.0), exclusive(2));
    }

    #[test]
    fn empty_column_is_an_error() {
        assert!(matches!(
            BinLayout::fit("e", &[], BinPolicy::Quantile(3)),
            Err(Error::EmptyColumn(_))
        ));
    }

    #[test]
    fn center_belongs_exclusively_to_its_bin() {
        let layout = interval(&[0.0, 10.0, 20.0]);
        let a = layout.assign(5.0);
        assert_eq!(a.primary, 1);
        assert_eq!(a.primary_weight, 1.0);
        assert_eq!(a.secondary, None);
    }

    #[test]
    fn leaning_low_splits_toward_the_lower_bin() {
        let layout = interval(&[0.0, 10.0, 20.0]);
        let a = layout.assign(12.5);
        assert_eq!(a.primary, 2);
        assert_eq!(a.primary_weight, 0.75);
        assert_eq!(a.secondary, Some((1, 0.25)));
    }

    #[test]
    fn leaning_high_splits_toward_the_higher_bin() {
        let layout = interval(&[0.0, 10.0, 20.0]);
        let a = layout.assign(8.0);
        assert_eq!(a.primary, 1);
        assert_eq!(a.primary_weight, 0.7);
        assert_eq!(a.secondary, Some((2, 0.30000000000000004)));
    }

    #[test]
    fn border_value_is_shared_half_half_with_the_lower_bin() {
        let layout = interval(&[0.0, 10.0, 20.0]);
        let a = layout.assign(10.0);
        assert_eq!(a.primary, 2); // border resolves to the higher bin
        assert_eq!(a.primary_weight, 0.5);
        assert_eq!(a.secondary, Some((1, 0.5)));
    }

    #[test]
    fn outermost_bins_split_toward_overflow_by_default() {
        let layout = interval(&[0.0, 10.0]);
        let low = layout.assign(0.0);
        assert_eq!(low.primary, 1);
        assert_eq!(low.secondary, Some((0, 0.5)));
        let high = layout.assign(10.0);
        assert_eq!(high.primary, 1);
        assert_eq!(high.secondary, Some((2, 0.5)));

        let clamped = layout.assign_with(0.0, false);
        assert_eq!(clamped, exclusive(1));
    }

    #[test]
    fn out_of_range_values_take_the_overflow_bins_exclusively() {
        let layout = interval(&[0.0, 10.0, 20.0]);
        assert_eq!(layout.assign(-3.0), exclusive(0));
        assert_eq!(layout.assign(25.0), exclusive(3));
    }

    #[test]
    fn weights_sum_to_one_and_neighbor_weight_grows_toward_borders() {
        let layout = interval(&[0.0, 4.0, 10.0, 11.0, 25.0, 100.0]);
        for bin in 1..=5usize {
            let (lo, hi) = match layout.kind() {
                LayoutKind::Intervals { edges } => (edges[bin - 1], edges[bin]),
                _ => unreachable!(),
            };
            let mut previous_toward_center: Option<f64> = None;
            for step in 0..=10 {
                let x = lo + (hi - lo) * step as f64 / 10.0;
                let a = layout.assign(x);
                let total = a.primary_weight + a.secondary.map_or(0.0, |(_, w)| w);
                assert!((total - 1.0).abs() < 1e-12);
                assert!(a.primary_weight >= 0.5 && a.primary_weight <= 1.0);
                // Neighbor weight decreases monotonically from the lower
                // border to the center, then increases to the upper border.
                let neighbor = a.secondary.map_or(0.0, |(_, w)| w);
                if step <= 5 {
                    if let Some(prev) = previous_toward_center {
                        assert!(neighbor <= prev + 1e-12);
                    }
                } else if let Some(prev) = previous_toward_center {
                    assert!(neighbor >= prev - 1e-12);
                }
                previous_toward_center = Some(neighbor);
            }
        }
    }

    #[test]
    fn quantile_edges_use_nearest_rank() {
        // 4 values, 2 bins: the interior border is the rank-2 value.
        let edges = quantile_edges(&[1.0, 3.0, 5.0, 9.0], 2);
        assert_eq!(edges, vec![1.0, 3.0, 9.0]);
        // Heavy duplication collapses edges.
        let edges = quantile_edges(&[1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 9.0], 4);
        assert_eq!(edges, vec![1.0, 2.0, 9.0]);
    }
}
