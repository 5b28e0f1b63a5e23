//! Post-hoc analysis of learned couplings: origin alignment, the long-range
//! tail and scans over the transverse field.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{ed_ground_state, free_fermion_energy, MAX_ED_SITES};
use crate::io::{Cell, CsvTable};
use crate::rbm::RbmParams;
use crate::seeds::derive_seed;
use crate::spin::TfiParams;
use crate::sr::{optimize, OptTrace, SrConfig};
use crate::stats::McEstimate;
use crate::vmc::{estimate, SamplerConfig};

/// Rotates `W` so the largest `|W_d|` sits at `d = 0` (ties go to the smallest
/// original index) and flips the global sign so that `W_0 > 0`.
///
/// Both operations leave `Ψ` unchanged: a rotation relabels hidden units and
/// `W → −W` negates every θ.
pub fn align_origin(params: &RbmParams) -> Result<(RbmParams, usize)> {
    let w = params.w();
    let mut origin = 0;
    for (d, x) in w.iter().enumerate() {
        if x.abs() > w[origin].abs() {
            origin = d;
        }
    }
    if w[origin] == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot align an all-zero coupling profile".into(),
        ));
    }
    let rotated = params.rotated(origin);
    let aligned = if rotated.w()[0] < 0.0 {
        rotated.negated()
    } else {
        rotated
    };
    Ok((aligned, origin))
}

/// Inclusive separation window `[⌈7L/16⌉, ⌊9L/16⌋]`, i.e. `L/2 ± L/16`.
pub fn tail_window(len: usize) -> Option<(usize, usize)> {
    let lo = (7 * len).div_ceil(16);
    let hi = 9 * len / 16;
    (lo <= hi).then_some((lo, hi))
}

/// Mean of the aligned profile over [`tail_window`].
pub fn w_tail(aligned: &RbmParams) -> Result<f64> {
    let len = aligned.len();
    let (lo, hi) = tail_window(len)
        .ok_or_else(|| Error::DegenerateInput(format!("tail window is empty for L={len}")))?;
    let window = &aligned.w()[lo..=hi];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub gamma: f64,
    pub len: usize,
    pub w_profile: Vec<f64>,
    pub w_tail: f64,
    pub w_tail_times_l: f64,
    pub origin_index: usize,
}

impl TailReport {
    pub fn new(gamma: f64, params: &RbmParams) -> Result<Self> {
        let (aligned, origin_index) = align_origin(params)?;
        let tail = w_tail(&aligned)?;
        Ok(Self {
            gamma,
            len: aligned.len(),
            w_profile: aligned.w().to_vec(),
            w_tail: tail,
            w_tail_times_l: tail * aligned.len() as f64,
            origin_index,
        })
    }

    pub fn profile_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["d", "W_d"]);
        for (d, w) in self.w_profile.iter().enumerate() {
            t.push(vec![Cell::from(d), Cell::from(*w)]);
        }
        t
    }
}

/// Exact ground-state energy: free fermions for even `L`, otherwise ED.
pub fn exact_energy(len: usize, tfi: TfiParams) -> Result<f64> {
    if len.is_multiple_of(2) {
        free_fermion_energy(len, tfi)
    } else if len <= MAX_ED_SITES {
        Ok(ed_ground_state(len, tfi)?.ground_energy)
    } else {
        Err(Error::Capability(format!(
            "no exact reference for odd L={len} above {MAX_ED_SITES}"
        )))
    }
}

/// Result of optimizing and analyzing one transverse field.
#[derive(Clone, Debug)]
pub struct GammaPoint {
    pub gamma: f64,
    pub len: usize,
    pub seed: u64,
    pub params: RbmParams,
    pub trace: OptTrace,
    /// Fresh-chain estimate with the optimized couplings.
    pub energy: McEstimate,
    pub exact_energy: f64,
    pub rel_error: f64,
    pub report: TailReport,
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub gamma: f64,
    pub result: Result<GammaPoint>,
}

/// Seed for the point at `gamma`, independent of the rest of the grid.
pub fn gamma_seed(master: u64, len: usize, gamma: f64) -> u64 {
    derive_seed(derive_seed(master, len as u64), gamma.to_bits())
}

/// Optimizes, evaluates and analyzes the RBM at a single transverse field.
pub fn run_gamma_point(
    gamma: f64,
    len: usize,
    sr_config: &SrConfig,
    sampler_config: &SamplerConfig,
) -> Result<GammaPoint> {
    let tfi = TfiParams::new(gamma)?;
    let seed = gamma_seed(sr_config.seed, len, gamma);
    let sr = SrConfig {
        seed,
        ..sr_config.clone()
    };
    let sampler = SamplerConfig {
        seed: derive_seed(seed, 1),
        ..sampler_config.clone()
    };
    let (params, trace) = optimize(len, tfi, &sr, &sampler)?;
    let eval = SamplerConfig {
        seed: derive_seed(seed, 2),
        ..sampler_config.clone()
    };
    let energy = estimate(&params, tfi, &eval)?.energy;
    let exact = exact_energy(len, tfi)?;
    let report = TailReport::new(gamma, &params)?;
    Ok(GammaPoint {
        gamma,
        len,
        seed,
        rel_error: ((energy.mean - exact) / exact).abs(),
        params,
        trace,
        energy,
        exact_energy: exact,
        report,
    })
}

/// Runs [`run_gamma_point`] over a grid; failures are recorded, not fatal.
pub fn gamma_scan(
    gammas: &[f64],
    len: usize,
    sr_config: &SrConfig,
    sampler_config: &SamplerConfig,
) -> Vec<ScanOutcome> {
    gammas
        .par_iter()
        .map(|&gamma| ScanOutcome {
            gamma,
            result: run_gamma_point(gamma, len, sr_config, sampler_config),
        })
        .collect()
}

pub fn tail_csv(points: &[&GammaPoint]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "gamma",
        "L",
        "w_tail",
        "w_tail_L",
        "origin_index",
        "energy",
        "energy_err",
        "exact_energy",
        "rel_error",
        "seed",
    ]);
    for p in points {
        t.push(vec![
            Cell::from(p.gamma),
            Cell::from(p.len),
            Cell::from(p.report.w_tail),
            Cell::from(p.report.w_tail_times_l),
            Cell::from(p.report.origin_index),
            Cell::from(p.energy.mean),
            Cell::from(p.energy.stderr),
            Cell::from(p.exact_energy),
            Cell::from(p.rel_error),
            Cell::from(p.seed),
        ]);
    }
    t
}

/// Largest decrease of `w_tail·L` between adjacent grid points.
///
/// Returns `(drop, gamma_left, gamma_right)`; reports must be sorted by Γ.
pub fn max_adjacent_drop(reports: &[&TailReport]) -> Option<(f64, f64, f64)> {
    reports
        .windows(2)
        .map(|w| {
            (
                w[0].w_tail_times_l - w[1].w_tail_times_l,
                w[0].gamma,
                w[1].gamma,
            )
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
}
