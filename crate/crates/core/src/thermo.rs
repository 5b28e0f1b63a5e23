//! Classical finite-temperature Monte Carlo of the 2L-spin RBM Ising system
//! `E(σ, h) = −Σ_{i,j} W_{i−j} σᵢ hⱼ`.
//!
//! Visible and hidden spins are treated on an equal footing. Each chain keeps
//! both field caches, `θⱼ = Σᵢ W_{i−j} σᵢ` (seen by hidden spins) and
//! `φᵢ = Σⱼ W_{i−j} hⱼ` (seen by visible spins), so an energy change costs
//! O(1) and an accepted flip O(L).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{Cell, CsvTable};
use crate::rbm::RbmParams;
use crate::seeds::{derive_seed, stream_rng};
use crate::spin::SpinConfig;
use crate::stats::{binning_analysis, variance_from_moments, McEstimate};
use crate::vmc::SamplerConfig;

/// Accepted flips between full recomputations of the field caches.
const FIELD_REFRESH_INTERVAL: usize = 10_000;

/// Visible and hidden layer of the classical RBM system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointConfig {
    pub visible: SpinConfig,
    pub hidden: SpinConfig,
}

impl JointConfig {
    pub fn new(visible: SpinConfig, hidden: SpinConfig) -> Result<Self> {
        if visible.len() != hidden.len() {
            return Err(Error::Config(format!(
                "visible layer has {} spins but hidden layer has {}",
                visible.len(),
                hidden.len()
            )));
        }
        Ok(Self { visible, hidden })
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    /// Bits `0..L` encode the visible layer and `L..2L` the hidden layer.
    pub fn from_index(index: usize, len: usize) -> Self {
        Self {
            visible: SpinConfig::from_index(index & ((1 << len) - 1), len),
            hidden: SpinConfig::from_index(index >> len, len),
        }
    }

    pub fn to_index(&self) -> usize {
        self.visible.to_index() | (self.hidden.to_index() << self.len())
    }
}

/// A strictly positive temperature.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {t}"
            )));
        }
        Ok(Self(t))
    }

    #[inline]
    pub fn t(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn beta(self) -> f64 {
        1.0 / self.0
    }
}

/// `E_RBM(σ, h) = −Σⱼ hⱼ θⱼ`.
pub fn rbm_energy(params: &RbmParams, joint: &JointConfig) -> Result<f64> {
    params.check_len(joint.len())?;
    let theta = params.thetas(joint.visible.spins());
    Ok(-theta
        .iter()
        .zip(joint.hidden.spins())
        .map(|(t, &h)| t * h as f64)
        .sum::<f64>())
}

/// Visible fields `φᵢ = Σⱼ W_{i−j} hⱼ`.
fn visible_fields(params: &RbmParams, hidden: &[i8]) -> Vec<f64> {
    let len = params.len();
    let w = params.w();
    (0..len)
        .map(|i| {
            (0..len)
                .map(|j| w[(i + len - j) % len] * hidden[j] as f64)
                .sum()
        })
        .collect()
}

/// Update scheme for the thermal sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThermalUpdate {
    /// Single-spin Metropolis over all 2L spins; a sweep is 2L proposals.
    #[default]
    Metropolis,
    /// Alternating exact conditional draws of the hidden and visible layers.
    HeatBath,
}

/// One Markov chain over joint configurations.
#[derive(Clone, Debug)]
pub struct ThermalChain {
    joint: JointConfig,
    theta: Vec<f64>,
    phi: Vec<f64>,
    energy: f64,
    beta: f64,
    rng: ChaCha8Rng,
    accepted: u64,
    proposed: u64,
    since_refresh: usize,
}

impl ThermalChain {
    /// Ordered start: visible layer uniform with a random global sign, each
    /// hidden spin aligned with its field. Random starts leave domain walls
    /// that single-spin moves cannot remove at the lowest grid temperatures.
    pub fn new(params: &RbmParams, temp: Temperature, mut rng: ChaCha8Rng) -> Self {
        let len = params.len();
        let sign: i8 = if rng.gen::<bool>() { 1 } else { -1 };
        let visible = SpinConfig::new(vec![sign; len]).expect("valid spins");
        let hidden = params
            .thetas(visible.spins())
            .iter()
            .map(|&t| if t >= 0.0 { 1 } else { -1 })
            .collect();
        let joint = JointConfig {
            visible,
            hidden: SpinConfig::new(hidden).expect("valid spins"),
        };
        let mut chain = Self {
            theta: Vec::new(),
            phi: Vec::new(),
            energy: 0.0,
            beta: temp.beta(),
            joint,
            rng,
            accepted: 0,
            proposed: 0,
            since_refresh: 0,
        };
        chain.refresh(params);
        chain
    }

    pub fn joint(&self) -> &JointConfig {
        &self.joint
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    fn refresh(&mut self, params: &RbmParams) {
        self.theta = params.thetas(self.joint.visible.spins());
        self.phi = visible_fields(params, self.joint.hidden.spins());
        self.energy = -self
            .theta
            .iter()
            .zip(self.joint.hidden.spins())
            .map(|(t, &h)| t * h as f64)
            .sum::<f64>();
        self.since_refresh = 0;
    }

    #[inline]
    fn accept(&mut self, delta_e: f64) -> bool {
        delta_e <= 0.0 || self.rng.gen::<f64>() < (-self.beta * delta_e).exp()
    }

    fn metropolis_sweep(&mut self, params: &RbmParams) {
        let len = params.len();
        let w = params.w();
        for _ in 0..2 * len {
            let k = self.rng.gen_range(0..2 * len);
            self.proposed += 1;
            if k < len {
                let i = k;
                let s = self.joint.visible.spins()[i] as f64;
                let delta_e = 2.0 * s * self.phi[i];
                if self.accept(delta_e) {
                    for (j, t) in self.theta.iter_mut().enumerate() {
                        *t -= 2.0 * s * w[(i + len - j) % len];
                    }
                    self.joint.visible.flip(i);
                    self.energy += delta_e;
                    self.accepted += 1;
                    self.since_refresh += 1;
                }
            } else {
                let j = k - len;
                let h = self.joint.hidden.spins()[j] as f64;
                let delta_e = 2.0 * h * self.theta[j];
                if self.accept(delta_e) {
                    for (i, p) in self.phi.iter_mut().enumerate() {
                        *p -= 2.0 * h * w[(i + len - j) % len];
                    }
                    self.joint.hidden.flip(j);
                    self.energy += delta_e;
                    self.accepted += 1;
                    self.since_refresh += 1;
                }
            }
        }
        if self.since_refresh >= FIELD_REFRESH_INTERVAL {
            self.refresh(params);
        }
    }

    fn heat_bath_sweep(&mut self, params: &RbmParams) {
        let len = params.len();
        let mut hidden = Vec::with_capacity(len);
        for j in 0..len {
            let p_up = 1.0 / (1.0 + (-2.0 * self.beta * self.theta[j]).exp());
            hidden.push(if self.rng.gen::<f64>() < p_up { 1 } else { -1 });
        }
        self.joint.hidden = SpinConfig::new(hidden).expect("valid spins");
        self.phi = visible_fields(params, self.joint.hidden.spins());
        let mut visible = Vec::with_capacity(len);
        for i in 0..len {
            let p_up = 1.0 / (1.0 + (-2.0 * self.beta * self.phi[i]).exp());
            visible.push(if self.rng.gen::<f64>() < p_up { 1 } else { -1 });
        }
        self.joint.visible = SpinConfig::new(visible).expect("valid spins");
        self.proposed += 2 * len as u64;
        self.accepted += 2 * len as u64;
        self.refresh(params);
    }

    pub fn sweep(&mut self, params: &RbmParams, update: ThermalUpdate) {
        match update {
            ThermalUpdate::Metropolis => self.metropolis_sweep(params),
            ThermalUpdate::HeatBath => self.heat_bath_sweep(params),
        }
    }
}

/// Thermal averages at one temperature, merged over chains.
#[derive(Clone, Debug)]
pub struct ThermalSample {
    pub temperature: Temperature,
    pub energy: McEstimate,
    pub energy_sq: McEstimate,
    pub visible_magnetization: McEstimate,
    pub hidden_magnetization: McEstimate,
    pub acceptance: f64,
}

struct ChainSeries {
    e: Vec<f64>,
    e2: Vec<f64>,
    mv: Vec<f64>,
    mh: Vec<f64>,
    acceptance: f64,
}

/// Samples the Boltzmann distribution at `temp` with independent chains.
pub fn thermal_sample(
    params: &RbmParams,
    temp: Temperature,
    config: &SamplerConfig,
    update: ThermalUpdate,
) -> Result<ThermalSample> {
    config.validate()?;
    let series: Vec<ChainSeries> = (0..config.n_chains)
        .into_par_iter()
        .map(|k| {
            let mut chain = ThermalChain::new(params, temp, stream_rng(config.seed, k as u64));
            for _ in 0..config.n_burnin {
                chain.sweep(params, update);
            }
            let start = (chain.accepted, chain.proposed);
            let mut out = ChainSeries {
                e: Vec::with_capacity(config.n_sweeps),
                e2: Vec::with_capacity(config.n_sweeps),
                mv: Vec::with_capacity(config.n_sweeps),
                mh: Vec::with_capacity(config.n_sweeps),
                acceptance: 0.0,
            };
            for _ in 0..config.n_sweeps {
                chain.sweep(params, update);
                let e = chain.energy;
                out.e.push(e);
                out.e2.push(e * e);
                out.mv.push(chain.joint.visible.magnetization() as f64);
                out.mh.push(chain.joint.hidden.magnetization() as f64);
            }
            let prop = chain.proposed - start.1;
            out.acceptance = if prop == 0 {
                0.0
            } else {
                (chain.accepted - start.0) as f64 / prop as f64
            };
            out
        })
        .collect();
    let collect = |f: fn(&ChainSeries) -> &Vec<f64>| -> McEstimate {
        let chains: Vec<&[f64]> = series.iter().map(|s| f(s).as_slice()).collect();
        binning_analysis(&chains)
    };
    let energy = collect(|s| &s.e);
    if !energy.mean.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite thermal energy at T={}",
            temp.t()
        )));
    }
    Ok(ThermalSample {
        temperature: temp,
        energy,
        energy_sq: collect(|s| &s.e2),
        visible_magnetization: collect(|s| &s.mv),
        hidden_magnetization: collect(|s| &s.mh),
        acceptance: series.iter().map(|s| s.acceptance).sum::<f64>() / series.len() as f64,
    })
}

/// Energy variance `⟨E²⟩ − ⟨E⟩²` with its jackknife error.
pub fn energy_variance(e: &McEstimate, e2: &McEstimate) -> Result<McEstimate> {
    let (var, err) = variance_from_moments(e, e2)?;
    Ok(McEstimate {
        mean: var,
        stderr: err,
        n_samples: e.n_samples,
        autocorr_bins: Vec::new(),
        bins: Vec::new(),
    })
}

/// `C = (⟨E²⟩ − ⟨E⟩²) / T²`, divided by `n_sites`.
pub fn specific_heat(
    e: &McEstimate,
    e2: &McEstimate,
    temp: Temperature,
    n_sites: usize,
) -> Result<McEstimate> {
    let var = energy_variance(e, e2)?;
    let scale = 1.0 / (temp.t() * temp.t() * n_sites as f64);
    Ok(McEstimate {
        mean: var.mean * scale,
        stderr: var.stderr * scale,
        ..var
    })
}

/// One temperature of a scan, per-site values (divisor `2L`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub t: f64,
    pub e_per_site: f64,
    pub e_err: f64,
    pub var_per_site: f64,
    pub var_err: f64,
    pub c_per_site: f64,
    pub c_err: f64,
    pub n_sweeps: usize,
    pub seed: u64,
}

/// Outcome of one grid point; failures are kept and the scan continues.
#[derive(Debug)]
pub struct ScanPoint {
    pub temperature: Temperature,
    pub result: Result<ScanRow>,
}

/// `T = 0.2, 0.3, …, 4.0`; `T = 1` is on the grid exactly.
pub fn default_grid() -> Vec<Temperature> {
    with_unit_temperature((2..=40).map(|k| Temperature(k as f64 / 10.0)).collect())
}

/// Sorts ascending, removes duplicates, and inserts `T = 1` if absent.
pub fn with_unit_temperature(mut grid: Vec<Temperature>) -> Vec<Temperature> {
    if !grid.iter().any(|t| t.t() == 1.0) {
        grid.push(Temperature(1.0));
    }
    grid.sort_by(|a, b| a.t().total_cmp(&b.t()));
    grid.dedup_by(|a, b| a.t() == b.t());
    grid
}

/// Seed used at temperature `t`, independent of the rest of the grid.
pub fn point_seed(master: u64, t: Temperature) -> u64 {
    derive_seed(master, t.t().to_bits())
}

fn scan_row(
    params: &RbmParams,
    temp: Temperature,
    config: &SamplerConfig,
    update: ThermalUpdate,
) -> Result<ScanRow> {
    let seed = point_seed(config.seed, temp);
    let point_config = SamplerConfig {
        seed,
        ..config.clone()
    };
    let sample = thermal_sample(params, temp, &point_config, update)?;
    let n_sites = 2 * params.len();
    let per_site = 1.0 / n_sites as f64;
    let var = energy_variance(&sample.energy, &sample.energy_sq)?;
    let c = specific_heat(&sample.energy, &sample.energy_sq, temp, n_sites)?;
    Ok(ScanRow {
        t: temp.t(),
        e_per_site: sample.energy.mean * per_site,
        e_err: sample.energy.stderr * per_site,
        var_per_site: var.mean * per_site,
        var_err: var.stderr * per_site,
        c_per_site: c.mean,
        c_err: c.stderr,
        n_sweeps: config.n_sweeps,
        seed,
    })
}

/// Runs [`thermal_sample`] at every grid temperature with its own seed.
pub fn temperature_scan(
    params: &RbmParams,
    grid: &[Temperature],
    config: &SamplerConfig,
    update: ThermalUpdate,
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0].t() >= w[1].t()) {
        return Err(Error::Config(
            "temperature grid must be strictly ascending".into(),
        ));
    }
    Ok(grid
        .par_iter()
        .map(|&temp| ScanPoint {
            temperature: temp,
            result: scan_row(params, temp, config, update),
        })
        .collect())
}

/// Scan CSV; `gamma` is `NaN` when the snapshot's field is unknown.
pub fn scan_csv(gamma: f64, len: usize, rows: &[ScanRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "gamma",
        "L",
        "T",
        "e_per_site",
        "e_err",
        "var_per_site",
        "var_err",
        "c_per_site",
        "c_err",
        "n_sweeps",
        "seed",
    ]);
    for r in rows {
        t.push(vec![
            Cell::from(gamma),
            Cell::from(len),
            Cell::from(r.t),
            Cell::from(r.e_per_site),
            Cell::from(r.e_err),
            Cell::from(r.var_per_site),
            Cell::from(r.var_err),
            Cell::from(r.c_per_site),
            Cell::from(r.c_err),
            Cell::from(r.n_sweeps),
            Cell::from(r.seed),
        ]);
    }
    t
}

/// Location of the specific-heat maximum on a scan, with its row index.
pub fn peak(rows: &[ScanRow]) -> Option<(usize, &ScanRow)> {
    rows.iter()
        .enumerate()
        .max_by(|a, b| a.1.c_per_site.total_cmp(&b.1.c_per_site))
}

/// Exhaustive Boltzmann averages `(⟨E⟩, ⟨E²⟩)` over all `2^{2L}` joint states.
pub fn exact_thermal_moments(params: &RbmParams, temp: Temperature) -> Result<(f64, f64)> {
    let len = params.len();
    if 2 * len > 20 {
        return Err(Error::Capability(format!(
            "exhaustive thermal sums support L <= 10, got L={len}"
        )));
    }
    let energies: Vec<f64> = (0..1usize << (2 * len))
        .map(|s| rbm_energy(params, &JointConfig::from_index(s, len)))
        .collect::<Result<_>>()?;
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut z, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for e in energies {
        let w = (-(e - e_min) * temp.beta()).exp();
        z += w;
        e1 += w * e;
        e2 += w * e * e;
    }
    Ok((e1 / z, e2 / z))
}
