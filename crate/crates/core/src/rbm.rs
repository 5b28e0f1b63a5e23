//! Translationally symmetric, bias-free RBM wave function.
//!
//! With `N_h = L` hidden units and couplings `W_{ij} = W_{(i−j) mod L}` the
//! hidden layer traces out to
//!
//! ```text
//! ln Ψ(σ) = Σⱼ ln 2cosh θⱼ,    θⱼ = Σᵢ W_{(i−j) mod L} σᵢ
//! ```
//!
//! Everything is evaluated in the log domain; `Ψ` itself is never formed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::spin::SpinConfig;

/// Incremental θ updates performed before the cache is rebuilt from scratch.
pub const CACHE_REFRESH_INTERVAL: usize = 10_000;

/// `ln(2 cosh x)` without overflow for large `|x|`.
#[inline]
pub fn log_cosh2(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Couplings `W_d`, `d = (i − j) mod L`, one per separation.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmParams {
    w: Vec<f64>,
}

impl RbmParams {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::Config(format!(
                "coupling profile needs at least 2 entries, got {}",
                w.len()
            )));
        }
        if let Some(d) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!("coupling W_{d} is not finite")));
        }
        Ok(Self { w })
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len]).expect("zero profile is valid")
    }

    /// I.i.d. uniform couplings in `[−scale, +scale]`.
    pub fn random_uniform<R: Rng + ?Sized>(len: usize, scale: f64, rng: &mut R) -> Self {
        let w = (0..len)
            .map(|_| {
                if scale > 0.0 {
                    rng.gen_range(-scale..=scale)
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(w).expect("finite random profile")
    }

    /// Number of visible (and hidden) units.
    #[inline]
    pub fn len(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn n_hidden(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// `W_{i−j}` for visible site `i` and hidden site `j`.
    #[inline]
    pub fn coupling(&self, visible: usize, hidden: usize) -> f64 {
        let len = self.w.len();
        self.w[(visible + len - hidden % len) % len]
    }

    /// Adds `delta` entrywise, rejecting non-finite results.
    pub fn apply_delta(&mut self, delta: &[f64]) -> Result<()> {
        self.check_len(delta.len())?;
        let updated: Vec<f64> = self.w.iter().zip(delta).map(|(w, d)| w + d).collect();
        if let Some(d) = updated.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "update made coupling W_{d} non-finite"
            )));
        }
        self.w = updated;
        Ok(())
    }

    pub fn negated(&self) -> Self {
        Self {
            w: self.w.iter().map(|x| -x).collect(),
        }
    }

    /// Cyclic rotation `W'_d = W_{(d + by) mod L}`.
    pub fn rotated(&self, by: usize) -> Self {
        let len = self.w.len();
        Self {
            w: (0..len).map(|d| self.w[(d + by) % len]).collect(),
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.w.len() {
            return Err(Error::Config(format!(
                "dimension mismatch: RBM has L={} but input has length {}",
                self.w.len(),
                len
            )));
        }
        Ok(())
    }

    /// Effective fields θⱼ computed from scratch, O(L²).
    pub fn thetas(&self, spins: &[i8]) -> Vec<f64> {
        let len = self.w.len();
        (0..len)
            .map(|j| {
                (0..len)
                    .map(|i| self.w[(i + len - j) % len] * spins[i] as f64)
                    .sum()
            })
            .collect()
    }

    /// Writes the plain-text snapshot: `L <n>` then one `d W_d` line per separation.
    pub fn to_snapshot_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "L {}", self.w.len()).unwrap();
        for (d, w) in self.w.iter().enumerate() {
            writeln!(out, "{} {}", d, crate::io::fmt_f64(*w)).unwrap();
        }
        out
    }

    pub fn from_snapshot_str(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty snapshot"))?;
        let mut head = header.split_whitespace();
        let len: usize = match (head.next(), head.next(), head.next()) {
            (Some("L"), Some(n), None) => n
                .parse()
                .map_err(|_| Error::parse(origin, format!("bad chain length `{n}`")))?,
            _ => {
                return Err(Error::parse(
                    origin,
                    format!("first line must be `L <int>`, got `{header}`"),
                ))
            }
        };
        let mut w = vec![f64::NAN; len];
        let mut seen = vec![false; len];
        for (lineno, line) in lines {
            let mut fields = line.split_whitespace();
            let (d, value) = match (fields.next(), fields.next(), fields.next()) {
                (Some(d), Some(v), None) => (d, v),
                _ => {
                    return Err(Error::parse(
                        origin,
                        format!("line {}: expected `d W_d`", lineno + 1),
                    ))
                }
            };
            let d: usize = d.parse().map_err(|_| {
                Error::parse(origin, format!("line {}: bad index `{d}`", lineno + 1))
            })?;
            if d >= len || seen[d] {
                return Err(Error::parse(
                    origin,
                    format!("line {}: index {d} out of range or repeated", lineno + 1),
                ));
            }
            w[d] = value.parse().map_err(|_| {
                Error::parse(origin, format!("line {}: bad value `{value}`", lineno + 1))
            })?;
            seen[d] = true;
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(Error::parse(origin, format!("missing entry for d={d}")));
        }
        Self::new(w).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_snapshot_string().as_bytes())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_str(&text, &path.display().to_string())
    }
}

/// Cached effective fields θⱼ for the configuration a sampler is tracking.
#[derive(Clone, Debug)]
pub struct ThetaCache {
    theta: Vec<f64>,
    updates: usize,
}

impl ThetaCache {
    pub fn new(params: &RbmParams, config: &SpinConfig) -> Result<Self> {
        params.check_len(config.len())?;
        Ok(Self {
            theta: params.thetas(config.spins()),
            updates: 0,
        })
    }

    #[inline]
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Accounts for flipping `site` of `config`, which must still hold the
    /// pre-flip spins: `θⱼ ← θⱼ − 2 W_{site−j} σ_site`.
    pub fn update(&mut self, params: &RbmParams, config: &SpinConfig, site: usize) -> Result<()> {
        let len = self.theta.len();
        if site >= len {
            return Err(Error::Config(format!(
                "site {site} out of range for L={len}"
            )));
        }
        params.check_len(config.len())?;
        self.updates += 1;
        if self.updates >= CACHE_REFRESH_INTERVAL {
            self.theta = params.thetas(config.spins());
            self.updates = 0;
        }
        let two_s = 2.0 * config.spins()[site] as f64;
        let w = params.w();
        for (j, t) in self.theta.iter_mut().enumerate() {
            *t -= two_s * w[(site + len - j) % len];
        }
        Ok(())
    }

    /// Global inversion `σ → −σ` negates every θⱼ.
    pub fn invert(&mut self) {
        for t in &mut self.theta {
            *t = -*t;
        }
    }

    pub fn refresh(&mut self, params: &RbmParams, config: &SpinConfig) {
        self.theta = params.thetas(config.spins());
        self.updates = 0;
    }

    /// Largest deviation from a from-scratch recomputation.
    pub fn drift(&self, params: &RbmParams, config: &SpinConfig) -> f64 {
        params
            .thetas(config.spins())
            .iter()
            .zip(&self.theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `ln Ψ(σ) = Σⱼ ln 2cosh θⱼ`.
pub fn log_psi(params: &RbmParams, config: &SpinConfig) -> Result<f64> {
    params.check_len(config.len())?;
    Ok(params
        .thetas(config.spins())
        .into_iter()
        .map(log_cosh2)
        .sum())
}

/// `Ψ(σ with site flipped) / Ψ(σ)`, O(L) given a consistent cache.
pub fn psi_ratio(
    params: &RbmParams,
    cache: &ThetaCache,
    config: &SpinConfig,
    site: usize,
) -> Result<f64> {
    let len = params.len();
    params.check_len(config.len())?;
    params.check_len(cache.len())?;
    if site >= len {
        return Err(Error::Config(format!(
            "site {site} out of range for L={len}"
        )));
    }
    Ok(log_ratio_unchecked(params.w(), cache.theta(), config.spins()[site], site).exp())
}

#[inline]
pub(crate) fn log_ratio_unchecked(w: &[f64], theta: &[f64], spin: i8, site: usize) -> f64 {
    let len = w.len();
    let two_s = 2.0 * spin as f64;
    theta
        .iter()
        .enumerate()
        .map(|(j, &t)| log_cosh2(t - two_s * w[(site + len - j) % len]) - log_cosh2(t))
        .sum()
}

/// Variational derivatives `O_d = ∂ ln Ψ / ∂W_d = Σⱼ tanh(θⱼ) σ_{(j+d) mod L}`.
pub fn log_derivatives(
    params: &RbmParams,
    cache: &ThetaCache,
    config: &SpinConfig,
) -> Result<Vec<f64>> {
    params.check_len(config.len())?;
    params.check_len(cache.len())?;
    let tanh: Vec<f64> = cache.theta().iter().map(|t| t.tanh()).collect();
    let mut out = vec![0.0; params.len()];
    log_derivatives_into(&tanh, config.spins(), &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn log_derivatives_into(tanh: &[f64], spins: &[i8], out: &mut [f64]) {
    let len = tanh.len();
    for (d, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &t) in tanh.iter().enumerate() {
            let k = j + d;
            let k = if k >= len { k - len } else { k };
            acc += t * spins[k] as f64;
        }
        *o = acc;
    }
}
