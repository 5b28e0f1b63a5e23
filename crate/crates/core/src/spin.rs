//! Periodic spin chains and the transverse-field Ising model.
//!
//! Spins are stored as `i8` values in `{-1, +1}`. All index arithmetic is
//! taken modulo the chain length.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// A configuration of `L` Ising spins `σᶻᵢ ∈ {−1, +1}` on a periodic chain.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    /// Builds a configuration, rejecting entries other than ±1 and chains shorter than 2.
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.len() < 2 {
            return Err(Error::Config(format!(
                "chain length must be at least 2, got {}",
                spins.len()
            )));
        }
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::Config(format!(
                "spin {} has value {}, expected -1 or +1",
                pos, spins[pos]
            )));
        }
        Ok(Self { spins })
    }

    pub fn all_up(len: usize) -> Self {
        assert!(len >= 2, "chain length must be at least 2");
        Self {
            spins: vec![1; len],
        }
    }

    /// `+ − + − …`
    pub fn alternating(len: usize) -> Self {
        assert!(len >= 2, "chain length must be at least 2");
        Self {
            spins: (0..len).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        assert!(len >= 2, "chain length must be at least 2");
        Self {
            spins: (0..len)
                .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                .collect(),
        }
    }

    /// Decodes the low `len` bits of `index`; bit `i` set means spin `i` is down.
    pub fn from_index(index: usize, len: usize) -> Self {
        assert!(len >= 2, "chain length must be at least 2");
        Self {
            spins: (0..len)
                .map(|i| if (index >> i) & 1 == 1 { -1 } else { 1 })
                .collect(),
        }
    }

    /// Inverse of [`SpinConfig::from_index`].
    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == -1)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Spin at `i mod L`.
    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.spins[i % self.spins.len()]
    }

    #[inline]
    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    pub fn flipped(&self, site: usize) -> Self {
        let mut out = self.clone();
        out.flip(site);
        out
    }

    /// Global spin inversion `σ → −σ`.
    pub fn invert(&mut self) {
        for s in &mut self.spins {
            *s = -*s;
        }
    }

    pub fn inverted(&self) -> Self {
        let mut out = self.clone();
        out.invert();
        out
    }

    /// Translation: `σ'ᵢ = σ_{(i+s) mod L}` for any integer `s`.
    pub fn shift(&self, s: i64) -> Self {
        let len = self.spins.len();
        let offset = s.rem_euclid(len as i64) as usize;
        Self {
            spins: (0..len).map(|i| self.spins[(i + offset) % len]).collect(),
        }
    }

    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    /// The diagonal (Ising) part of the TFI Hamiltonian, `−Σᵢ σᵢσᵢ₊₁` with periodic wrap.
    pub fn diagonal_energy(&self) -> f64 {
        diagonal_energy(&self.spins)
    }
}

impl fmt::Debug for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .spins
            .iter()
            .map(|&x| if x > 0 { '+' } else { '-' })
            .collect();
        write!(f, "SpinConfig({s})")
    }
}

/// `−Σᵢ σᵢσᵢ₊₁` over a periodic ring of ±1 values.
pub fn diagonal_energy(spins: &[i8]) -> f64 {
    let len = spins.len();
    let bonds: i64 = (0..len)
        .map(|i| (spins[i] as i64) * (spins[(i + 1) % len] as i64))
        .sum();
    -(bonds as f64)
}

/// Parameters of `H = −J Σ σᶻᵢσᶻᵢ₊₁ − Γ Σ σˣᵢ` with `J = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfiParams {
    gamma: f64,
}

impl TfiParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Config(format!(
                "transverse field must be a finite non-negative number, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}
