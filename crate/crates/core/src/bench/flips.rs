use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Default histogram bin width, in flips.
pub const FLIP_BIN_WIDTH: usize = 5;

/// Adjacent pairs that cross 0.5 strictly; a value of exactly 0.5 never
/// takes part in a crossing.
pub fn flip_count(trace: &[f64]) -> usize {
    trace.windows(2).filter(|w| (w[0] - 0.5) * (w[1] - 0.5) < 0.0).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipHistogram {
    pub bin_width: usize,
    /// `bins[k]` counts variables with flips in `[k*w, (k+1)*w)`.
    pub bins: Vec<usize>,
    pub total: usize,
    pub zero_flips: usize,
}

impl FlipHistogram {
    pub fn from_counts<T: Copy + Into<u64>>(counts: &[T], bin_width: usize) -> Self {
        let bin_width = bin_width.max(1);
        let mut bins = vec![0usize; 1];
        let mut zero_flips = 0;
        for &c in counts {
            let c: u64 = c.into();
            if c == 0 {
                zero_flips += 1;
            }
            let k = (c / bin_width as u64) as usize;
            if k >= bins.len() {
                bins.resize(k + 1, 0);
            }
            bins[k] += 1;
        }
        FlipHistogram {
            bin_width,
            bins,
            total: counts.len(),
            zero_flips,
        }
    }

    /// Share of variables in bin `k`, in `[0, 1]`.
    pub fn fraction(&self, k: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.bins.get(k).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.zero_flips as f64 / self.total as f64
    }

    /// Index of the most populated bin (lowest index on ties).
    pub fn modal_bin(&self) -> usize {
        let max = self.bins.iter().copied().max().unwrap_or(0);
        self.bins.iter().position(|&b| b == max).unwrap_or(0)
    }

    /// Adds the counts of `other`, which must use the same bin width.
    pub fn merge(&mut self, other: &FlipHistogram) {
        debug_assert_eq!(self.bin_width, other.bin_width);
        if other.bins.len() > self.bins.len() {
            self.bins.resize(other.bins.len(), 0);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.total += other.total;
        self.zero_flips += other.zero_flips;
    }

    /// `bin_start,bin_end,count,percent` rows, one per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count,percent\n");
        for (k, &c) in self.bins.iter().enumerate() {
            let lo = k * self.bin_width;
            let _ = writeln!(out, "{lo},{},{c},{:.4}", lo + self.bin_width, 100.0 * self.fraction(k));
        }
        out
    }
}

/// Histogram of the flip counts of full-run traces.
pub fn flip_histogram(traces: &[Vec<f64>]) -> FlipHistogram {
    let counts: Vec<u64> = traces.iter().map(|t| flip_count(t) as u64).collect();
    FlipHistogram::from_counts(&counts, FLIP_BIN_WIDTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flips_by_definition() {
        assert_eq!(flip_count(&[0.6, 0.6, 0.6]), 0);
        assert_eq!(flip_count(&[0.9, 0.3, 0.9]), 2);
        assert_eq!(flip_count(&[0.5, 0.5, 0.9]), 0);
        assert_eq!(flip_count(&[0.9, 0.5, 0.1]), 0);
        assert_eq!(flip_count(&[0.2]), 0);
    }

    #[test]
    fn histogram_bins() {
        let h = flip_histogram(&[vec![0.1; 4], vec![0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1]]);
        assert_eq!(h.bins, vec![1, 1]);
        assert_eq!(h.zero_flips, 1);
        assert_eq!(h.bins.iter().sum::<usize>(), h.total);

        let constant = flip_histogram(&vec![vec![0.7; 10]; 3]);
        assert_eq!(constant.fraction(0), 1.0);
        assert_eq!(constant.zero_fraction(), 1.0);
        assert_eq!(constant.modal_bin(), 0);
        assert!(constant.to_csv().starts_with("bin_start,bin_end,count,percent\n0,5,3,100.0000\n"));
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = FlipHistogram::from_counts(&[0u32, 12], 5);
        a.merge(&FlipHistogram::from_counts(&[3u32], 5));
        assert_eq!(a.bins, vec![2, 0, 1]);
        assert_eq!((a.total, a.zero_flips), (3, 1));
    }
}
