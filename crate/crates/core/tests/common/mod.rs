//! Checks shared by the integration tests and the acceptance harness. Each
//! returns `Ok(detail)` on success and `Err(detail)` otherwise.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rbm_tfi::exact::{exact_expectations, hamiltonian_matrix};
use rbm_tfi::rbm::{log_derivatives, log_psi, psi_ratio};
use rbm_tfi::seeds::stream_rng;
use rbm_tfi::sr::{optimize, sr_update, SrConfig};
use rbm_tfi::thermo::{
    exact_thermal_moments, specific_heat, thermal_sample, JointConfig, Temperature, ThermalChain,
    ThermalUpdate,
};
use rbm_tfi::vmc::{metropolis_sweep, RatioTable, SamplerConfig, Walker};
use rbm_tfi::{RbmParams, SpinConfig, TfiParams, ThetaCache};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Pearson statistic of observed counts against probabilities; returns the p-value.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let expected = p * n as f64;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Translation, global-flip and gauge invariance of `Ψ`, and the closed form
/// against an explicit trace over hidden spins.
pub fn rbm_invariants() -> Check {
    let len = 6;
    let mut r = rng(11);
    let p = RbmParams::random_uniform(len, 0.8, &mut r);
    let neg = p.negated();
    let mut worst: f64 = 0.0;
    for index in 0..1usize << len {
        let c = SpinConfig::from_index(index, len);
        let lp = log_psi(&p, &c).unwrap();
        for s in 0..len as i64 {
            worst = worst.max((log_psi(&p, &c.shift(s)).unwrap() - lp).abs());
        }
        worst = worst.max((log_psi(&p, &c.inverted()).unwrap() - lp).abs());
        worst = worst.max((log_psi(&neg, &c).unwrap() - lp).abs());
        // Σ_h exp(Σ_ij W_{i−j} σ_i h_j)
        let mut trace = 0.0;
        for hidden in 0..1usize << len {
            let h = SpinConfig::from_index(hidden, len);
            let mut x = 0.0;
            for i in 0..len {
                for j in 0..len {
                    x += p.coupling(i, j) * c.get(i) as f64 * h.get(j) as f64;
                }
            }
            trace += x.exp();
        }
        worst = worst.max((trace.ln() - lp).abs());
    }
    verdict(worst < 1e-10, format!("max |Δ ln Ψ| = {worst:.2e}"))
}

/// Analytic `∂ ln Ψ/∂W_d` against central differences.
pub fn log_derivative_fd() -> Check {
    let len = 8;
    let mut r = rng(12);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = RbmParams::random_uniform(len, 1.0, &mut r);
        let c = SpinConfig::random(len, &mut r);
        let cache = ThetaCache::new(&p, &c).unwrap();
        let analytic = log_derivatives(&p, &cache, &c).unwrap();
        for d in 0..len {
            let mut plus = p.w().to_vec();
            let mut minus = p.w().to_vec();
            plus[d] += h;
            minus[d] -= h;
            let fd = (log_psi(&RbmParams::new(plus).unwrap(), &c).unwrap()
                - log_psi(&RbmParams::new(minus).unwrap(), &c).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - analytic[d]).abs());
        }
        for site in 0..len {
            let direct = (log_psi(&p, &c.flipped(site)).unwrap() - log_psi(&p, &c).unwrap()).exp();
            let ratio = psi_ratio(&p, &cache, &c, site).unwrap();
            worst = worst.max((direct - ratio).abs() / direct.abs().max(1.0));
        }
    }
    verdict(worst < 1e-6, format!("max deviation {worst:.2e}"))
}

/// SR with exact moments at L=8 never raises the energy.
pub fn sr_monotone_descent() -> Check {
    let len = 8;
    let tfi = TfiParams::new(1.0).unwrap();
    let mut cfg = SrConfig::with_seed(0);
    cfg.eta = 0.02;
    let mut p = RbmParams::random_uniform(len, 0.1, &mut rng(13));
    let mut prev = exact_expectations(&p, tfi).unwrap().energy;
    let first = prev;
    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..100 {
        let ex = exact_expectations(&p, tfi).unwrap();
        let delta = sr_update(&ex.s_matrix, &ex.f_vector, &cfg).unwrap();
        p.apply_delta(&delta).unwrap();
        let e = exact_expectations(&p, tfi).unwrap().energy;
        worst_rise = worst_rise.max(e - prev);
        prev = e;
    }
    verdict(
        worst_rise <= 1e-9 && prev < first,
        format!("E {first:.6} -> {prev:.6}, largest step change {worst_rise:.2e}"),
    )
}

/// Visit frequencies of the `|Ψ|²` sampler at L=6 against exact weights.
pub fn quantum_detailed_balance() -> Check {
    let len = 6;
    let p = RbmParams::random_uniform(len, 0.6, &mut rng(14));
    let weights: Vec<f64> = (0..1usize << len)
        .map(|s| (2.0 * log_psi(&p, &SpinConfig::from_index(s, len)).unwrap()).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let table = RatioTable::new(&p);
    let mut counts = vec![0u64; 1 << len];
    for chain in 0..4 {
        let mut walker = Walker::new(&p, stream_rng(15, chain));
        for _ in 0..200 {
            metropolis_sweep(&mut walker, &p, &table);
        }
        for _ in 0..25_000 {
            for _ in 0..3 {
                metropolis_sweep(&mut walker, &p, &table);
            }
            counts[walker.config().to_index()] += 1;
        }
    }
    let pv = chi_square_p(&counts, &probs);
    verdict(pv > 1e-3, format!("chi-square p = {pv:.3}"))
}

/// Visit frequencies of the thermal sampler at L=4 against Boltzmann weights.
pub fn thermal_detailed_balance(t: f64) -> Check {
    let len = 4;
    let p = RbmParams::random_uniform(len, 0.5, &mut rng(16));
    let temp = Temperature::new(t).unwrap();
    let n_states = 1usize << (2 * len);
    let weights: Vec<f64> = (0..n_states)
        .map(|s| {
            let e = rbm_tfi::thermo::rbm_energy(&p, &JointConfig::from_index(s, len)).unwrap();
            (-e / t).exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mut counts = vec![0u64; n_states];
    for chain in 0..4 {
        let mut c = ThermalChain::new(&p, temp, stream_rng(17, chain));
        for _ in 0..200 {
            c.sweep(&p, ThermalUpdate::Metropolis);
        }
        for _ in 0..50_000 {
            for _ in 0..2 {
                c.sweep(&p, ThermalUpdate::Metropolis);
            }
            counts[c.joint().to_index()] += 1;
        }
    }
    let pv = chi_square_p(&counts, &probs);
    verdict(pv > 1e-3, format!("T={t}: chi-square p = {pv:.3}"))
}

/// Identical seeds give bit-identical optimization traces and thermal samples.
pub fn seed_reproducibility() -> Check {
    let tfi = TfiParams::new(0.7).unwrap();
    let mut sr = SrConfig::with_seed(21);
    sr.n_iters = 20;
    let sampler = SamplerConfig::new(100, 20, 3, 22).unwrap();
    let (pa, ta) = optimize(8, tfi, &sr, &sampler).unwrap();
    let (pb, tb) = optimize(8, tfi, &sr, &sampler).unwrap();
    let same_opt = pa == pb && ta.to_csv().render() == tb.to_csv().render();
    let temp = Temperature::new(1.0).unwrap();
    let tc = SamplerConfig::new(500, 50, 3, 23).unwrap();
    let a = thermal_sample(&pa, temp, &tc, ThermalUpdate::Metropolis).unwrap();
    let b = thermal_sample(&pa, temp, &tc, ThermalUpdate::Metropolis).unwrap();
    let same_thermal = a.energy.mean.to_bits() == b.energy.mean.to_bits()
        && a.energy_sq.mean.to_bits() == b.energy_sq.mean.to_bits();
    verdict(
        same_opt && same_thermal,
        format!("optimizer identical: {same_opt}, thermal identical: {same_thermal}"),
    )
}

/// Thermal MC against exhaustive Boltzmann sums at L=5 for `⟨E⟩` and `C`.
pub fn thermal_enumeration() -> Check {
    let len = 5;
    let p = RbmParams::random_uniform(len, 1.0, &mut rng(31));
    let config = SamplerConfig::new(40_000, 1_000, 4, 32).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0, 2.0] {
        let temp = Temperature::new(t).unwrap();
        let (e1, e2) = exact_thermal_moments(&p, temp).unwrap();
        let c_exact = (e2 - e1 * e1) / (t * t * (2 * len) as f64);
        let s = thermal_sample(&p, temp, &config, ThermalUpdate::Metropolis).unwrap();
        let c = specific_heat(&s.energy, &s.energy_sq, temp, 2 * len).unwrap();
        let ze = (s.energy.mean - e1) / s.energy.stderr;
        let zc = (c.mean - c_exact) / c.stderr;
        ok &= ze.abs() <= 3.0 && zc.abs() <= 3.0;
        lines.push(format!("T={t}: z(E)={ze:+.2} z(C)={zc:+.2}"));
    }
    verdict(ok, lines.join(", "))
}

/// Decoupled pairs: `⟨E⟩ = −L w tanh(w/T)`, `C/site = ½ (w/T)² sech²(w/T)`.
pub fn thermal_pair_formula() -> Check {
    let len = 8;
    let w = 0.7;
    let mut coup = vec![0.0; len];
    coup[0] = w;
    let p = RbmParams::new(coup).unwrap();
    let config = SamplerConfig::new(20_000, 500, 4, 33).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0, 2.0] {
        let temp = Temperature::new(t).unwrap();
        let x = w / t;
        let e_exact = -(len as f64) * w * x.tanh();
        let c_exact = 0.5 * x * x / x.cosh().powi(2);
        let s = thermal_sample(&p, temp, &config, ThermalUpdate::Metropolis).unwrap();
        let c = specific_heat(&s.energy, &s.energy_sq, temp, 2 * len).unwrap();
        let ze = (s.energy.mean - e_exact) / s.energy.stderr;
        let zc = (c.mean - c_exact) / c.stderr;
        ok &= ze.abs() <= 3.0 && zc.abs() <= 3.0;
        lines.push(format!("T={t}: z(E)={ze:+.2} z(C)={zc:+.2}"));
    }
    verdict(ok, lines.join(", "))
}

/// Lowest eigenvalue of the dense Hamiltonian, for cross-checks at small L.
pub fn dense_ground_energy(len: usize, gamma: f64) -> f64 {
    let h = hamiltonian_matrix(len, TfiParams::new(gamma).unwrap()).unwrap();
    h.symmetric_eigenvalues().min()
}
