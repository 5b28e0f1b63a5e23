//! Metropolis sampling of `|Ψ(σ)|²` and the moments needed for SR.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rbm::{log_ratio_unchecked, psi_ratio, RbmParams, ThetaCache};
use crate::seeds::stream_rng;
use crate::spin::{diagonal_energy, SpinConfig, TfiParams};
use crate::stats::{binning_analysis, McEstimate};

/// Above this `max |2W_d|` flip ratios fall back to the log-cosh form.
const FAST_RATIO_LIMIT: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Measured sweeps per chain.
    pub n_sweeps: usize,
    pub n_burnin: usize,
    pub n_chains: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(n_sweeps: usize, n_burnin: usize, n_chains: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_sweeps,
            n_burnin,
            n_chains,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 2000 sweeps, 500 burn-in, one chain per worker (at least 4).
    pub fn with_seed(seed: u64) -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self {
            n_sweeps: 2000,
            n_burnin: 500,
            n_chains: workers.max(4),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps == 0 || self.n_chains == 0 {
            return Err(Error::Config(
                "n_sweeps and n_chains must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `cosh(2W_d)` and `sinh(2W_d)`, which turn a flip ratio into
/// `Πⱼ [cosh 2W − σ tanh θⱼ sinh 2W]` with no transcendental calls.
#[derive(Clone, Debug)]
pub struct RatioTable {
    cosh2w: Vec<f64>,
    sinh2w: Vec<f64>,
    fast: bool,
}

impl RatioTable {
    pub fn new(params: &RbmParams) -> Self {
        let w = params.w();
        let fast = w.iter().all(|x| (2.0 * x).abs() <= FAST_RATIO_LIMIT);
        Self {
            cosh2w: w.iter().map(|x| (2.0 * x).cosh()).collect(),
            sinh2w: w.iter().map(|x| (2.0 * x).sinh()).collect(),
            fast,
        }
    }
}

/// One Markov chain: configuration, θ cache, `tanh θ` and its RNG stream.
#[derive(Clone, Debug)]
pub struct Walker {
    config: SpinConfig,
    cache: ThetaCache,
    tanh: Vec<f64>,
    rng: ChaCha8Rng,
    accepted: u64,
    proposed: u64,
}

impl Walker {
    /// Starts from a uniformly random configuration drawn from `rng`.
    pub fn new(params: &RbmParams, mut rng: ChaCha8Rng) -> Self {
        let config = SpinConfig::random(params.len(), &mut rng);
        Self::from_config(params, config, rng).expect("lengths agree")
    }

    pub fn from_config(params: &RbmParams, config: SpinConfig, rng: ChaCha8Rng) -> Result<Self> {
        let cache = ThetaCache::new(params, &config)?;
        let tanh = cache.theta().iter().map(|t| t.tanh()).collect();
        Ok(Self {
            config,
            cache,
            tanh,
            rng,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn config(&self) -> &SpinConfig {
        &self.config
    }

    pub fn cache(&self) -> &ThetaCache {
        &self.cache
    }

    /// Fraction of accepted single-flip proposals so far.
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    /// Rebuilds caches after the parameters changed.
    pub fn rebind(&mut self, params: &RbmParams) {
        self.cache.refresh(params, &self.config);
        self.refresh_tanh();
    }

    fn refresh_tanh(&mut self) {
        for (t, th) in self.tanh.iter_mut().zip(self.cache.theta()) {
            *t = th.tanh();
        }
    }

    /// `Ψ(σ with site flipped) / Ψ(σ)`.
    #[inline]
    fn flip_ratio(&self, params: &RbmParams, table: &RatioTable, site: usize) -> f64 {
        let spin = self.config.spins()[site];
        if !table.fast {
            return log_ratio_unchecked(params.w(), self.cache.theta(), spin, site).exp();
        }
        let len = self.tanh.len();
        let s = spin as f64;
        let mut prod = 1.0;
        // d = site − j (mod L)
        for j in 0..=site {
            let d = site - j;
            prod *= table.cosh2w[d] - s * self.tanh[j] * table.sinh2w[d];
        }
        for j in site + 1..len {
            let d = site + len - j;
            prod *= table.cosh2w[d] - s * self.tanh[j] * table.sinh2w[d];
        }
        prod
    }

    fn local_energy(&self, params: &RbmParams, table: &RatioTable, tfi: TfiParams) -> f64 {
        let flips: f64 = (0..self.config.len())
            .map(|i| self.flip_ratio(params, table, i))
            .sum();
        diagonal_energy(self.config.spins()) - tfi.gamma() * flips
    }
}

/// `E_loc(σ) = −Σᵢ σᵢσᵢ₊₁ − Γ Σᵢ Ψ(σ^{(i)})/Ψ(σ)`.
pub fn local_energy(
    params: &RbmParams,
    cache: &ThetaCache,
    config: &SpinConfig,
    tfi: TfiParams,
) -> Result<f64> {
    let mut flips = 0.0;
    for i in 0..config.len() {
        flips += psi_ratio(params, cache, config, i)?;
    }
    Ok(diagonal_energy(config.spins()) - tfi.gamma() * flips)
}

/// `L` single-flip proposals at uniform random sites, each accepted with
/// probability `min(1, |Ψ'/Ψ|²)`, followed by a global inversion `σ → −σ`
/// (always accepted since `Ψ(−σ) = Ψ(σ)`).
pub fn metropolis_sweep(walker: &mut Walker, params: &RbmParams, table: &RatioTable) {
    let len = walker.config.len();
    for _ in 0..len {
        let site = walker.rng.gen_range(0..len);
        let ratio = walker.flip_ratio(params, table, site);
        let prob = ratio * ratio;
        walker.proposed += 1;
        if prob >= 1.0 || walker.rng.gen::<f64>() < prob {
            walker
                .cache
                .update(params, &walker.config, site)
                .expect("site in range");
            walker.config.flip(site);
            walker.refresh_tanh();
            walker.accepted += 1;
        }
    }
    walker.config.invert();
    walker.cache.invert();
    for t in &mut walker.tanh {
        *t = -*t;
    }
}

/// Sample moments of `E_loc` and `O_d` merged over all chains.
#[derive(Clone, Debug)]
pub struct Moments {
    pub energy: McEstimate,
    /// `⟨E_loc²⟩ − ⟨E_loc⟩²`.
    pub eloc_variance: f64,
    pub o_mean: Vec<f64>,
    pub oo_mean: DMatrix<f64>,
    pub eo_mean: Vec<f64>,
    pub acceptance: f64,
}

impl Moments {
    /// `S = ⟨OO⟩ − ⟨O⟩⟨O⟩` and `F = ⟨E O⟩ − ⟨E⟩⟨O⟩`.
    pub fn sr_inputs(&self) -> (DMatrix<f64>, Vec<f64>) {
        let len = self.o_mean.len();
        let s = DMatrix::from_fn(len, len, |d, e| {
            self.oo_mean[(d, e)] - self.o_mean[d] * self.o_mean[e]
        });
        let f = (0..len)
            .map(|d| self.eo_mean[d] - self.energy.mean * self.o_mean[d])
            .collect();
        (s, f)
    }
}

/// Per-chain running sums.
#[derive(Clone, Debug)]
pub struct ChainTally {
    pub eloc: Vec<f64>,
    pub sum_e2: f64,
    pub sum_o: Vec<f64>,
    /// Upper triangle of `Σ O Oᵀ`, row-major over `d ≤ e`.
    pub sum_oo: Vec<f64>,
    pub sum_eo: Vec<f64>,
    pub acceptance: f64,
}

impl ChainTally {
    fn new(len: usize, capacity: usize) -> Self {
        Self {
            eloc: Vec::with_capacity(capacity),
            sum_e2: 0.0,
            sum_o: vec![0.0; len],
            sum_oo: vec![0.0; len * (len + 1) / 2],
            sum_eo: vec![0.0; len],
            acceptance: 0.0,
        }
    }

    pub fn mean_energy(&self) -> f64 {
        self.eloc.iter().sum::<f64>() / self.eloc.len() as f64
    }
}

fn run_chain(
    walker: &mut Walker,
    params: &RbmParams,
    table: &RatioTable,
    tfi: TfiParams,
    n_burnin: usize,
    n_sweeps: usize,
    chain_index: usize,
) -> Result<ChainTally> {
    let len = params.len();
    for _ in 0..n_burnin {
        metropolis_sweep(walker, params, table);
    }
    let mut tally = ChainTally::new(len, n_sweeps);
    let mut o = vec![0.0; len];
    let start_acc = (walker.accepted, walker.proposed);
    for sweep in 0..n_sweeps {
        metropolis_sweep(walker, params, table);
        let e = walker.local_energy(params, table, tfi);
        if !e.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite local energy {e} in chain {chain_index} at sweep {sweep}, \
                 config {:?}, max |theta| = {:.3e}",
                walker.config,
                walker
                    .cache
                    .theta()
                    .iter()
                    .fold(0.0f64, |m, t| m.max(t.abs()))
            )));
        }
        crate::rbm::log_derivatives_into(&walker.tanh, walker.config.spins(), &mut o);
        tally.eloc.push(e);
        tally.sum_e2 += e * e;
        let mut k = 0;
        for d in 0..len {
            tally.sum_o[d] += o[d];
            tally.sum_eo[d] += e * o[d];
            let od = o[d];
            for &oe in &o[d..] {
                tally.sum_oo[k] += od * oe;
                k += 1;
            }
        }
    }
    let acc = walker.accepted - start_acc.0;
    let prop = walker.proposed - start_acc.1;
    tally.acceptance = if prop == 0 {
        0.0
    } else {
        acc as f64 / prop as f64
    };
    Ok(tally)
}

/// Deterministic, chain-ordered reduction of per-chain tallies.
pub fn merge_tallies(len: usize, tallies: &[ChainTally]) -> Moments {
    let n: usize = tallies.iter().map(|t| t.eloc.len()).sum();
    let nf = n as f64;
    let series: Vec<&[f64]> = tallies.iter().map(|t| t.eloc.as_slice()).collect();
    let energy = binning_analysis(&series);
    let mut o_mean = vec![0.0; len];
    let mut eo_mean = vec![0.0; len];
    let mut oo_upper = vec![0.0; len * (len + 1) / 2];
    let mut e2 = 0.0;
    for t in tallies {
        e2 += t.sum_e2;
        for d in 0..len {
            o_mean[d] += t.sum_o[d];
            eo_mean[d] += t.sum_eo[d];
        }
        for (acc, v) in oo_upper.iter_mut().zip(&t.sum_oo) {
            *acc += v;
        }
    }
    o_mean.iter_mut().for_each(|x| *x /= nf);
    eo_mean.iter_mut().for_each(|x| *x /= nf);
    let mut oo_mean = DMatrix::zeros(len, len);
    let mut k = 0;
    for d in 0..len {
        for e in d..len {
            let v = oo_upper[k] / nf;
            oo_mean[(d, e)] = v;
            oo_mean[(e, d)] = v;
            k += 1;
        }
    }
    let acceptance =
        tallies.iter().map(|t| t.acceptance).sum::<f64>() / tallies.len().max(1) as f64;
    Moments {
        eloc_variance: e2 / nf - energy.mean * energy.mean,
        energy,
        o_mean,
        oo_mean,
        eo_mean,
        acceptance,
    }
}

/// A set of persistent chains reused across calls (e.g. SR iterations).
#[derive(Clone, Debug)]
pub struct Sampler {
    walkers: Vec<Walker>,
    burned_in: bool,
}

impl Sampler {
    pub fn new(params: &RbmParams, config: &SamplerConfig) -> Self {
        let walkers = (0..config.n_chains)
            .map(|k| Walker::new(params, stream_rng(config.seed, k as u64)))
            .collect();
        Self {
            walkers,
            burned_in: false,
        }
    }

    pub fn walkers(&self) -> &[Walker] {
        &self.walkers
    }

    /// Runs every chain with the full burn-in on first use and
    /// `rethermalize` sweeps on later calls, then returns merged moments.
    pub fn sample(
        &mut self,
        params: &RbmParams,
        tfi: TfiParams,
        config: &SamplerConfig,
        rethermalize: usize,
    ) -> Result<(Moments, Vec<ChainTally>)> {
        let table = RatioTable::new(params);
        let burnin = if self.burned_in {
            rethermalize
        } else {
            config.n_burnin
        };
        let tallies: Vec<ChainTally> = self
            .walkers
            .par_iter_mut()
            .enumerate()
            .map(|(k, w)| {
                w.rebind(params);
                run_chain(w, params, &table, tfi, burnin, config.n_sweeps, k)
            })
            .collect::<Result<_>>()?;
        self.burned_in = true;
        Ok((merge_tallies(params.len(), &tallies), tallies))
    }
}

/// Fresh chains: burn-in, then `n_sweeps` measurements per chain.
pub fn estimate(params: &RbmParams, tfi: TfiParams, config: &SamplerConfig) -> Result<Moments> {
    config.validate()?;
    let mut sampler = Sampler::new(params, config);
    sampler.sample(params, tfi, config, 0).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{ed_ground_state, exact_expectations};
    use rand::SeedableRng;

    fn tfi(g: f64) -> TfiParams {
        TfiParams::new(g).unwrap()
    }

    #[test]
    fn local_energy_at_zero_couplings() {
        let p = RbmParams::zeros(8);
        let c = SpinConfig::all_up(8);
        let cache = ThetaCache::new(&p, &c).unwrap();
        assert_eq!(local_energy(&p, &cache, &c, tfi(0.5)).unwrap(), -12.0);
    }

    #[test]
    fn fast_and_log_ratios_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = RbmParams::random_uniform(11, 1.2, &mut rng);
        let table = RatioTable::new(&p);
        assert!(table.fast);
        let w = Walker::new(&p, stream_rng(1, 0));
        for site in 0..11 {
            let fast = w.flip_ratio(&p, &table, site);
            let slow = psi_ratio(&p, w.cache(), w.config(), site).unwrap();
            assert!(((fast - slow) / slow).abs() < 1e-12);
        }
        let e_fast = w.local_energy(&p, &table, tfi(0.7));
        let e_slow = local_energy(&p, w.cache(), w.config(), tfi(0.7)).unwrap();
        assert!((e_fast - e_slow).abs() < 1e-10);
    }

    #[test]
    fn large_couplings_use_log_ratios() {
        let mut w = vec![0.0; 6];
        w[0] = 30.0;
        w[1] = -2.0;
        let p = RbmParams::new(w).unwrap();
        let table = RatioTable::new(&p);
        assert!(!table.fast);
        let walker = Walker::new(&p, stream_rng(2, 0));
        for site in 0..6 {
            let r = walker.flip_ratio(&p, &table, site);
            assert!(r.is_finite() && r >= 0.0);
        }
    }

    #[test]
    fn exact_eigenstate_has_zero_variance_local_energy() {
        // E_loc with ED amplitudes in place of Ψ
        for (len, g) in [(6usize, 0.6), (8, 1.0), (10, 1.4)] {
            let ed = ed_ground_state(len, tfi(g)).unwrap();
            for s in 0..1usize << len {
                let c = SpinConfig::from_index(s, len);
                let mut eloc = c.diagonal_energy();
                for i in 0..len {
                    eloc -= g * ed.ground_vector[s ^ (1 << i)] / ed.ground_vector[s];
                }
                assert!((eloc - ed.ground_energy).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_couplings_accept_everything() {
        let p = RbmParams::zeros(10);
        let table = RatioTable::new(&p);
        let mut w = Walker::new(&p, stream_rng(3, 0));
        for _ in 0..20 {
            metropolis_sweep(&mut w, &p, &table);
        }
        assert_eq!(w.acceptance(), 1.0);
    }

    #[test]
    fn equal_superposition_energy() {
        let cfg = SamplerConfig::new(400, 50, 4, 11).unwrap();
        let m = estimate(&RbmParams::zeros(8), tfi(0.8), &cfg).unwrap();
        // every sample has E_loc = diag − ΓL; only the diagonal part fluctuates
        assert!(m.energy.within(-0.8 * 8.0, 3.0), "{:?}", m.energy);
    }

    #[test]
    fn sampled_moments_track_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = RbmParams::random_uniform(8, 0.3, &mut rng);
        let exact = exact_expectations(&p, tfi(1.0)).unwrap();
        let cfg = SamplerConfig::new(5000, 200, 4, 5).unwrap();
        let m = estimate(&p, tfi(1.0), &cfg).unwrap();
        assert!(m.energy.within(exact.energy, 4.0));
        let (s, f) = m.sr_inputs();
        let s_err = (s - &exact.s_matrix).abs().max();
        let f_err = f
            .iter()
            .zip(&exact.f_vector)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(s_err < 0.2, "{s_err}");
        assert!(f_err < 0.5, "{f_err}");
    }

    #[test]
    fn merged_mean_is_weighted_chain_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = RbmParams::random_uniform(6, 0.5, &mut rng);
        let cfg = SamplerConfig::new(300, 10, 3, 9).unwrap();
        let mut sampler = Sampler::new(&p, &cfg);
        let (m, tallies) = sampler.sample(&p, tfi(1.0), &cfg, 0).unwrap();
        let n: usize = tallies.iter().map(|t| t.eloc.len()).sum();
        let weighted: f64 = tallies
            .iter()
            .map(|t| t.mean_energy() * t.eloc.len() as f64)
            .sum::<f64>()
            / n as f64;
        assert!((m.energy.mean - weighted).abs() < 1e-12);
        assert!(m.acceptance > 0.0 && m.acceptance <= 1.0);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = RbmParams::random_uniform(8, 0.5, &mut rng);
        let cfg = SamplerConfig::new(200, 20, 4, 77).unwrap();
        let a = estimate(&p, tfi(0.9), &cfg).unwrap();
        let b = estimate(&p, tfi(0.9), &cfg).unwrap();
        assert_eq!(a.energy.mean.to_bits(), b.energy.mean.to_bits());
        assert_eq!(a.eo_mean, b.eo_mean);
        assert_eq!(a.oo_mean, b.oo_mean);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SamplerConfig::new(0, 1, 1, 0).is_err());
        assert!(SamplerConfig::new(1, 1, 0, 0).is_err());
    }
}
