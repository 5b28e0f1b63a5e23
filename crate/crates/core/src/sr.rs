//! Stochastic reconfiguration: `ΔW = −η (S + λ_rel diag S + λ_abs I)⁻¹ F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{Cell, CsvTable};
use crate::rbm::RbmParams;
use crate::seeds::{derive_seed, stream_rng};
use crate::spin::TfiParams;
use crate::vmc::{Sampler, SamplerConfig};

/// Sweeps used to re-equilibrate persistent chains after each parameter update.
pub const RETHERMALIZE_SWEEPS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SrConfig {
    pub eta: f64,
    pub lambda_abs: f64,
    pub lambda_rel: f64,
    pub n_iters: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Keep a copy of `W` every this many iterations (0 disables).
    pub snapshot_every: usize,
    /// The returned `W` is the mean over this final fraction of iterations
    /// (0 returns the last iterate). Damps the SR noise in soft directions
    /// such as the long-range tail.
    pub average_fraction: f64,
}

impl SrConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            eta: 0.05,
            lambda_abs: 1e-2,
            lambda_rel: 1e-3,
            n_iters: 1000,
            init_scale: 0.01,
            seed,
            snapshot_every: 100,
            average_fraction: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda_abs >= 0.0 && self.lambda_rel >= 0.0) {
            return Err(Error::Config("diagonal shifts must be non-negative".into()));
        }
        if self.n_iters == 0 {
            return Err(Error::Config("n_iters must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.average_fraction) {
            return Err(Error::Config(format!(
                "average_fraction must lie in [0, 1], got {}",
                self.average_fraction
            )));
        }
        Ok(())
    }

    /// Number of final iterates averaged into the returned parameters.
    pub fn n_averaged(&self) -> usize {
        ((self.average_fraction * self.n_iters as f64).ceil() as usize).min(self.n_iters)
    }
}

/// Solves the regularized SR system and returns the parameter step.
pub fn sr_update(s: &DMatrix<f64>, f: &[f64], config: &SrConfig) -> Result<Vec<f64>> {
    let len = f.len();
    if s.nrows() != len || s.ncols() != len {
        return Err(Error::Config(format!(
            "S is {}x{} but F has length {len}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().chain(f).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entry in S or F".into()));
    }
    let mut reg = s.clone();
    for d in 0..len {
        reg[(d, d)] += config.lambda_rel * s[(d, d)] + config.lambda_abs;
    }
    let chol = reg.cholesky().ok_or_else(|| {
        Error::Numerical("regularized S is not positive definite; SR solve failed".into())
    })?;
    let x = chol.solve(&DVector::from_column_slice(f));
    let delta: Vec<f64> = x.iter().map(|v| -config.eta * v).collect();
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "SR solve produced a non-finite step".into(),
        ));
    }
    Ok(delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub energy: f64,
    pub energy_err: f64,
    pub eloc_var: f64,
    pub delta_w_norm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct OptTrace {
    pub records: Vec<TraceRecord>,
    /// `(iteration, W)` taken before that iteration's update.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl OptTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Mean and combined error of the energy over the last `n` iterations.
    pub fn tail_energy(&self, n: usize) -> Option<(f64, f64)> {
        let n = n.min(self.records.len());
        if n == 0 {
            return None;
        }
        let tail = &self.records[self.records.len() - n..];
        let mean = tail.iter().map(|r| r.energy).sum::<f64>() / n as f64;
        let err = (tail.iter().map(|r| r.energy_err.powi(2)).sum::<f64>()).sqrt() / n as f64;
        Some((mean, err))
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iter", "energy", "energy_err", "eloc_var", "delta_w_norm"]);
        for r in &self.records {
            t.push(vec![
                Cell::from(r.iter),
                Cell::from(r.energy),
                Cell::from(r.energy_err),
                Cell::from(r.eloc_var),
                Cell::from(r.delta_w_norm),
            ]);
        }
        t
    }
}

/// Random initial couplings, i.i.d. uniform in `[−init_scale, init_scale]`.
pub fn initial_params(len: usize, config: &SrConfig) -> RbmParams {
    let mut rng = stream_rng(derive_seed(config.seed, 0x1417), 0);
    RbmParams::random_uniform(len, config.init_scale, &mut rng)
}

/// Minimizes the variational energy of an `L`-site RBM from a small random start.
pub fn optimize(
    len: usize,
    tfi: TfiParams,
    sr_config: &SrConfig,
    sampler_config: &SamplerConfig,
) -> Result<(RbmParams, OptTrace)> {
    sr_config.validate()?;
    if len < 2 {
        return Err(Error::Config(format!("L must be at least 2, got {len}")));
    }
    let params = initial_params(len, sr_config);
    optimize_from(params, tfi, sr_config, sampler_config, |_| {})
}

/// Runs `n_iters` SR iterations starting at `params`; `observe` sees every record.
pub fn optimize_from<F>(
    mut params: RbmParams,
    tfi: TfiParams,
    sr_config: &SrConfig,
    sampler_config: &SamplerConfig,
    mut observe: F,
) -> Result<(RbmParams, OptTrace)>
where
    F: FnMut(&TraceRecord),
{
    sr_config.validate()?;
    sampler_config.validate()?;
    let mut sampler = Sampler::new(&params, sampler_config);
    let mut trace = OptTrace::default();
    let average_from = sr_config.n_iters - sr_config.n_averaged();
    let mut sum = vec![0.0; params.len()];
    for iter in 0..sr_config.n_iters {
        let wrap = |e: Error| Error::Optimization {
            iteration: iter,
            source: Box::new(e),
        };
        if sr_config.snapshot_every > 0 && iter % sr_config.snapshot_every == 0 {
            trace.snapshots.push((iter, params.w().to_vec()));
        }
        let (moments, _) = sampler
            .sample(&params, tfi, sampler_config, RETHERMALIZE_SWEEPS)
            .map_err(wrap)?;
        let (s, f) = moments.sr_inputs();
        let delta = sr_update(&s, &f, sr_config).map_err(wrap)?;
        params.apply_delta(&delta).map_err(wrap)?;
        let record = TraceRecord {
            iter,
            energy: moments.energy.mean,
            energy_err: moments.energy.stderr,
            eloc_var: moments.eloc_variance,
            delta_w_norm: delta.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        observe(&record);
        trace.records.push(record);
        if iter >= average_from {
            for (acc, w) in sum.iter_mut().zip(params.w()) {
                *acc += w;
            }
        }
    }
    let n_avg = sr_config.n_iters - average_from;
    if n_avg > 0 {
        params = RbmParams::new(sum.into_iter().map(|x| x / n_avg as f64).collect())?;
    }
    Ok((params, trace))
}
