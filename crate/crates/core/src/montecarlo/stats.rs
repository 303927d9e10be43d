use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::SinrSampleSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StatsOptions {
    /// Probability levels for the empirical quantiles of `beta`.
    pub quantile_levels: Vec<f64>,
    pub hist_bins: usize,
    pub hist_range: (f64, f64),
    /// Number of points in the Q-Q table.
    pub qq_points: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            quantile_levels: vec![0.01, 0.05, 0.5],
            hist_bins: 50,
            hist_range: (-4.0, 4.0),
            qq_points: 99,
        }
    }
}

/// Equal-width histogram of the normalized samples; values outside the
/// range are counted in `below` / `above`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    fn build(values: &[f64], bins: usize, (lo, hi): (f64, f64)) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        let (mut below, mut above) = (0, 0);
        for &v in values {
            if v < lo {
                below += 1;
            } else if v >= hi {
                above += 1;
            } else {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        Self {
            edges,
            counts,
            below,
            above,
        }
    }

    /// Two-column CSV: bin center, density normalized by the total sample count.
    pub fn to_csv(&self) -> String {
        let total = (self.counts.iter().sum::<u64>() + self.below + self.above).max(1) as f64;
        let mut out = String::from("bin_center,density\n");
        for (i, &c) in self.counts.iter().enumerate() {
            let w = self.edges[i + 1] - self.edges[i];
            let center = 0.5 * (self.edges[i] + self.edges[i + 1]);
            out.push_str(&format!("{center},{}\n", c as f64 / (total * w)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub n_samples: usize,
    pub mean: f64,
    /// Unbiased sample variance of `beta`.
    pub variance: f64,
    /// `K mean((beta - beta_bar)^2) / theta^2`.
    pub mse_ratio: f64,
    /// Sup distance between the empirical CDF of the normalized samples and `Phi`.
    pub ks_distance: f64,
    /// `(level, empirical quantile of beta)`.
    pub quantiles: Vec<(f64, f64)>,
    pub histogram: Histogram,
    /// `(standard normal quantile, empirical quantile of the normalized samples)`.
    pub qq: Vec<(f64, f64)>,
}

impl EmpiricalStats {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|(l, _)| (*l - level).abs() < 1e-15)
            .map(|(_, q)| *q)
    }

    pub fn qq_csv(&self) -> String {
        let mut out = String::from("normal_quantile,sample_quantile\n");
        for (t, e) in &self.qq {
            out.push_str(&format!("{t},{e}\n"));
        }
        out
    }
}

/// Linear-interpolation quantile (the usual "type 7") of sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-sample Kolmogorov-Smirnov statistic against the standard normal.
pub fn ks_distance_normal(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

pub fn empirical_stats(set: &SinrSampleSet, opts: &StatsOptions) -> Result<EmpiricalStats> {
    let m = set.samples.len();
    if m < 2 {
        return Err(Error::TooFewSamples(m));
    }
    if !(set.theta_sq > 0.0) {
        return Err(Error::invalid(
            "theta_sq",
            "normalized statistics need a positive variance",
        ));
    }
    if opts.hist_bins == 0 || !(opts.hist_range.0 < opts.hist_range.1) {
        return Err(Error::invalid(
            "histogram",
            "need at least one bin and lo < hi",
        ));
    }
    if let Some(l) = opts
        .quantile_levels
        .iter()
        .find(|l| !(**l >= 0.0 && **l <= 1.0))
    {
        return Err(Error::invalid(
            "quantile_levels",
            format!("{l} is outside [0, 1]"),
        ));
    }

    let mf = m as f64;
    let mean = set.samples.iter().sum::<f64>() / mf;
    let variance = set.samples.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    let mse = set
        .samples
        .iter()
        .map(|b| (b - set.beta_bar).powi(2))
        .sum::<f64>()
        / mf;
    let mse_ratio = set.n_users as f64 * mse / set.theta_sq;

    let ks_distance = ks_distance_normal(&set.normalized)?;

    let mut sorted = set.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = opts
        .quantile_levels
        .iter()
        .map(|&l| (l, quantile_sorted(&sorted, l)))
        .collect();

    let mut norm_sorted = set.normalized.clone();
    norm_sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let qq = (1..=opts.qq_points)
        .map(|i| {
            let p = i as f64 / (opts.qq_points + 1) as f64;
            (normal.inverse_cdf(p), quantile_sorted(&norm_sorted, p))
        })
        .collect();

    Ok(EmpiricalStats {
        n_samples: m,
        mean,
        variance,
        mse_ratio,
        ks_distance,
        quantiles,
        histogram: Histogram::build(&set.normalized, opts.hist_bins, opts.hist_range),
        qq,
    })
}
