//! Monte Carlo estimates with binning (blocking) error analysis.

use crate::error::{Error, Result};

/// Minimum number of bins a level needs before its error estimate is trusted.
pub const MIN_BINS: usize = 32;

/// Error estimate at one level of the log₂ bin hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct BinLevel {
    pub bin_size: usize,
    pub n_bins: usize,
    pub stderr: f64,
}

/// Mean of a scalar observable with its binning error.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    /// Error estimate at every bin size `2^k` that still has at least two bins.
    pub autocorr_bins: Vec<BinLevel>,
    /// Bin means at the level that produced `stderr`; bins never straddle chains.
    pub bins: Vec<f64>,
}

impl McEstimate {
    /// An estimate with no statistical uncertainty.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n_samples: 0,
            autocorr_bins: Vec::new(),
            bins: Vec::new(),
        }
    }

    /// Bin size used for `stderr`.
    pub fn bin_size(&self) -> usize {
        self.autocorr_bins
            .iter()
            .rev()
            .find(|l| l.n_bins >= MIN_BINS)
            .or(self.autocorr_bins.first())
            .map_or(1, |l| l.bin_size)
    }

    /// Integrated autocorrelation time estimated from the error ratio
    /// `τ ≈ ½ (σ_binned / σ_naive)²`.
    pub fn tau_int(&self) -> f64 {
        match self.autocorr_bins.first() {
            Some(naive) if naive.stderr > 0.0 => 0.5 * (self.stderr / naive.stderr).powi(2),
            _ => 0.5,
        }
    }

    /// Is `value` within `k` standard errors of the mean?
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean of `xs` treated as independent samples.
fn naive_stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Means of consecutive blocks of `bin_size` samples, per chain, discarding
/// any incomplete trailing block.
pub fn binned_means(chains: &[&[f64]], bin_size: usize) -> Vec<f64> {
    chains
        .iter()
        .flat_map(|series| {
            series
                .chunks_exact(bin_size)
                .map(|chunk| chunk.iter().sum::<f64>() / bin_size as f64)
        })
        .collect()
}

/// Binning analysis over one or more independent chains.
///
/// The mean is the plain sample mean over all chains. The error is taken at
/// the largest bin size that still leaves at least [`MIN_BINS`] bins.
pub fn binning_analysis(chains: &[&[f64]]) -> McEstimate {
    let n_samples: usize = chains.iter().map(|c| c.len()).sum();
    if n_samples == 0 {
        return McEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            n_samples: 0,
            autocorr_bins: Vec::new(),
            bins: Vec::new(),
        };
    }
    let total: f64 = chains.iter().flat_map(|c| c.iter()).sum();
    let overall_mean = total / n_samples as f64;

    let mut levels = Vec::new();
    let mut chosen: Option<(f64, Vec<f64>)> = None;
    let mut bin_size = 1;
    loop {
        let bins = binned_means(chains, bin_size);
        if bins.len() < 2 {
            break;
        }
        let stderr = naive_stderr(&bins);
        levels.push(BinLevel {
            bin_size,
            n_bins: bins.len(),
            stderr,
        });
        if bins.len() >= MIN_BINS || chosen.is_none() {
            chosen = Some((stderr, bins));
        }
        bin_size *= 2;
    }
    let (stderr, bins) = chosen.unwrap_or_else(|| (0.0, vec![overall_mean]));
    McEstimate {
        mean: overall_mean,
        stderr,
        n_samples,
        autocorr_bins: levels,
        bins,
    }
}

/// Jackknife estimate of `f` applied to the per-bin means of several observables.
///
/// `bins[k][b]` is the mean of observable `k` in bin `b`; every observable must
/// share the same binning. Returns `(f(full means), jackknife error)`.
pub fn jackknife<F>(bins: &[&[f64]], f: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n_obs = bins.len();
    let n_bins = bins.first().map_or(0, |b| b.len());
    assert!(
        bins.iter().all(|b| b.len() == n_bins),
        "observables must share a binning"
    );
    let sums: Vec<f64> = bins.iter().map(|b| b.iter().sum()).collect();
    let full: Vec<f64> = sums.iter().map(|s| s / n_bins as f64).collect();
    let value = f(&full);
    if n_bins < 2 {
        return (value, 0.0);
    }
    let mut leave_one = vec![0.0; n_obs];
    let replicas: Vec<f64> = (0..n_bins)
        .map(|b| {
            for k in 0..n_obs {
                leave_one[k] = (sums[k] - bins[k][b]) / (n_bins - 1) as f64;
            }
            f(&leave_one)
        })
        .collect();
    let rep_mean = mean(&replicas);
    let var = replicas
        .iter()
        .map(|r| (r - rep_mean) * (r - rep_mean))
        .sum::<f64>()
        * (n_bins - 1) as f64
        / n_bins as f64;
    (value, var.sqrt())
}

/// `Var(E) = ⟨E²⟩ − ⟨E⟩²` from paired estimates, with a jackknife error over
/// their shared bins. Fails when the variance is negative beyond noise.
pub fn variance_from_moments(first: &McEstimate, second: &McEstimate) -> Result<(f64, f64)> {
    let err = if first.bins.len() == second.bins.len() && first.bins.len() >= 2 {
        jackknife(&[&first.bins, &second.bins], |m| m[1] - m[0] * m[0]).1
    } else {
        (second.stderr.powi(2) + (2.0 * first.mean * first.stderr).powi(2)).sqrt()
    };
    // bins hold only complete blocks; the point value uses the full means
    let var_full = second.mean - first.mean * first.mean;
    let floor = 3.0 * err + 1e-12 * second.mean.abs().max(1.0);
    if var_full < -floor {
        return Err(Error::Statistical(format!(
            "negative variance {var_full:.6e} exceeds noise floor {floor:.3e}"
        )));
    }
    Ok((var_full.max(0.0), err))
}
