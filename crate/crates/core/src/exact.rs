//! Ground-truth references for the TFI chain.
//!
//! * [`ed_ground_state`]: exact diagonalization, done in the translation- and
//!   inversion-symmetric sector where the positive ground state lives, then
//!   expanded back to the full `2^L` basis.
//! * [`free_fermion_energy`]: the Jordan–Wigner momentum sum.
//! * [`exact_expectations`]: noise-free VMC/SR moments by enumerating all
//!   `2^L` configurations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rbm::{log_derivatives, log_psi, RbmParams, ThetaCache};
use crate::spin::{diagonal_energy, SpinConfig, TfiParams};

pub const MAX_ED_SITES: usize = 14;
pub const MAX_DENSE_SITES: usize = 10;
pub const MAX_ENUM_SITES: usize = 12;

/// Lowest eigenpair of the TFI Hamiltonian on `L` sites.
#[derive(Clone, Debug)]
pub struct EdResult {
    pub ground_energy: f64,
    /// Unit-norm, entrywise non-negative, indexed by [`SpinConfig::to_index`].
    pub ground_vector: Vec<f64>,
}

fn check_ed_size(len: usize, max: usize) -> Result<()> {
    if !(2..=max).contains(&len) {
        return Err(Error::Capability(format!(
            "exact diagonalization supports 2 <= L <= {max}, got L={len}"
        )));
    }
    Ok(())
}

/// Diagonal matrix element of basis state `index`.
#[inline]
fn diag_of_index(index: usize, len: usize) -> f64 {
    let rotated = ((index >> 1) | ((index & 1) << (len - 1))) & ((1 << len) - 1);
    // each anti-aligned bond contributes +1, aligned −1
    let broken = (index ^ rotated).count_ones() as f64;
    2.0 * broken - len as f64
}

/// `H·v` without forming the matrix.
pub fn apply_hamiltonian(len: usize, tfi: TfiParams, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), 1 << len, "vector length must be 2^L");
    let gamma = tfi.gamma();
    (0..v.len())
        .map(|s| {
            let mut acc = diag_of_index(s, len) * v[s];
            for i in 0..len {
                acc -= gamma * v[s ^ (1 << i)];
            }
            acc
        })
        .collect()
}

/// Full `2^L × 2^L` Hamiltonian matrix.
pub fn hamiltonian_matrix(len: usize, tfi: TfiParams) -> Result<DMatrix<f64>> {
    check_ed_size(len, MAX_DENSE_SITES)?;
    let dim = 1 << len;
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        h[(s, s)] = diag_of_index(s, len);
        for i in 0..len {
            h[(s ^ (1 << i), s)] -= tfi.gamma();
        }
    }
    Ok(h)
}

fn lowest_eigenpair(h: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(h);
    let (idx, &e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    (e0, eig.eigenvectors.column(idx).into_owned())
}

/// Inverse iteration just below `e0`, where `H − μI` is positive definite.
fn polish_eigenvector(h: &DMatrix<f64>, e0: f64, mut v: DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let shift = e0 - 1e-7 * (1.0 + e0.abs());
    let shifted = h - DMatrix::identity(n, n) * shift;
    if let Some(chol) = shifted.cholesky() {
        for _ in 0..2 {
            v = chol.solve(&v);
            v /= v.norm();
        }
    }
    v
}

fn sign_fix(mut v: Vec<f64>) -> Vec<f64> {
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Ground state from a dense eigensolve of the full matrix, `L ≤ 10`.
pub fn ed_ground_state_dense(len: usize, tfi: TfiParams) -> Result<EdResult> {
    let h = hamiltonian_matrix(len, tfi)?;
    let (e0, v) = lowest_eigenpair(h);
    Ok(EdResult {
        ground_energy: e0,
        ground_vector: sign_fix(v.iter().copied().collect()),
    })
}

/// Orbits of basis states under translations and global inversion.
struct SymmetricSector {
    rep_of: Vec<u32>,
    reps: Vec<usize>,
    orbit_size: Vec<usize>,
    slot_of_rep: Vec<u32>,
}

impl SymmetricSector {
    fn new(len: usize) -> Self {
        let dim = 1usize << len;
        let mask = dim - 1;
        let rotate = |s: usize| ((s >> 1) | ((s & 1) << (len - 1))) & mask;
        let mut rep_of = vec![u32::MAX; dim];
        let mut reps = Vec::new();
        let mut orbit_size = Vec::new();
        let mut slot_of_rep = vec![u32::MAX; dim];
        for s in 0..dim {
            if rep_of[s] != u32::MAX {
                continue;
            }
            // s is the smallest member of its orbit since we scan upward
            let mut orbit = Vec::with_capacity(2 * len);
            let mut t = s;
            for _ in 0..len {
                orbit.push(t);
                orbit.push(t ^ mask);
                t = rotate(t);
            }
            orbit.sort_unstable();
            orbit.dedup();
            for &m in &orbit {
                rep_of[m] = s as u32;
            }
            slot_of_rep[s] = reps.len() as u32;
            reps.push(s);
            orbit_size.push(orbit.len());
        }
        Self {
            rep_of,
            reps,
            orbit_size,
            slot_of_rep,
        }
    }

    fn slot(&self, state: usize) -> usize {
        self.slot_of_rep[self.rep_of[state] as usize] as usize
    }
}

/// Ground state of the TFI chain with `2 ≤ L ≤ 14`.
///
/// All off-diagonal elements are non-positive, so the ground state is
/// positive and invariant under every lattice symmetry; the eigenproblem is
/// solved densely in the zero-momentum, inversion-even sector.
pub fn ed_ground_state(len: usize, tfi: TfiParams) -> Result<EdResult> {
    check_ed_size(len, MAX_ED_SITES)?;
    let sector = SymmetricSector::new(len);
    let n = sector.reps.len();
    let mut h = DMatrix::zeros(n, n);
    for (a, &r) in sector.reps.iter().enumerate() {
        h[(a, a)] = diag_of_index(r, len);
        let size_a = sector.orbit_size[a] as f64;
        for i in 0..len {
            let b = sector.slot(r ^ (1 << i));
            let size_b = sector.orbit_size[b] as f64;
            h[(a, b)] -= tfi.gamma() * (size_a / size_b).sqrt();
        }
    }
    let (e0, coeffs) = lowest_eigenpair(h.clone());
    let coeffs = polish_eigenvector(&h, e0, coeffs);
    let e0 = coeffs.dot(&(&h * &coeffs));
    let full: Vec<f64> = (0..1usize << len)
        .map(|s| {
            let slot = sector.slot(s);
            coeffs[slot] / (sector.orbit_size[slot] as f64).sqrt()
        })
        .collect();
    Ok(EdResult {
        ground_energy: e0,
        ground_vector: sign_fix(full),
    })
}

/// `E₀ = −Σₙ √(1 + Γ² − 2Γ cos kₙ)`, `kₙ = (2n+1)π/L`, for even `L`.
pub fn free_fermion_energy(len: usize, tfi: TfiParams) -> Result<f64> {
    if len < 2 || !len.is_multiple_of(2) {
        return Err(Error::Capability(format!(
            "even L required: the free-fermion formula needs even L >= 2, got L={len}"
        )));
    }
    let g = tfi.gamma();
    let lf = len as f64;
    Ok(-(0..len)
        .map(|n| {
            let k = (2 * n + 1) as f64 * std::f64::consts::PI / lf;
            (1.0 + g * g - 2.0 * g * k.cos()).max(0.0).sqrt()
        })
        .sum::<f64>())
}

/// Noise-free expectation values under `|Ψ(σ)|²`.
#[derive(Clone, Debug)]
pub struct ExactExpectations {
    pub energy: f64,
    /// `⟨E_loc²⟩ − ⟨E_loc⟩²`.
    pub eloc_variance: f64,
    pub o_mean: Vec<f64>,
    /// `S_{dd'} = ⟨O_d O_d'⟩ − ⟨O_d⟩⟨O_d'⟩`.
    pub s_matrix: DMatrix<f64>,
    /// `F_d = ⟨E_loc O_d⟩ − ⟨E_loc⟩⟨O_d⟩`.
    pub f_vector: Vec<f64>,
}

/// Enumerates all `2^L` configurations (`L ≤ 12`).
pub fn exact_expectations(params: &RbmParams, tfi: TfiParams) -> Result<ExactExpectations> {
    let len = params.len();
    if len > MAX_ENUM_SITES {
        return Err(Error::Capability(format!(
            "exact enumeration supports L <= {MAX_ENUM_SITES}, got L={len}"
        )));
    }
    let dim = 1usize << len;
    let configs: Vec<SpinConfig> = (0..dim).map(|s| SpinConfig::from_index(s, len)).collect();
    let log_amp: Vec<f64> = configs
        .iter()
        .map(|c| log_psi(params, c))
        .collect::<Result<_>>()?;
    let max_log = log_amp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_amp
        .iter()
        .map(|l| (2.0 * (l - max_log)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();

    let mut energy = 0.0;
    let mut e2 = 0.0;
    let mut o_mean = vec![0.0; len];
    let mut oo = DMatrix::<f64>::zeros(len, len);
    let mut eo = vec![0.0; len];
    for (s, config) in configs.iter().enumerate() {
        let p = weights[s] / norm;
        let ratios: f64 = (0..len)
            .map(|i| (log_amp[s ^ (1 << i)] - log_amp[s]).exp())
            .sum();
        let eloc = diagonal_energy(config.spins()) - tfi.gamma() * ratios;
        let cache = ThetaCache::new(params, config)?;
        let o = log_derivatives(params, &cache, config)?;
        energy += p * eloc;
        e2 += p * eloc * eloc;
        for d in 0..len {
            o_mean[d] += p * o[d];
            eo[d] += p * eloc * o[d];
            for e in 0..len {
                oo[(d, e)] += p * o[d] * o[e];
            }
        }
    }
    let s_matrix = DMatrix::from_fn(len, len, |d, e| oo[(d, e)] - o_mean[d] * o_mean[e]);
    let f_vector = (0..len).map(|d| eo[d] - energy * o_mean[d]).collect();
    Ok(ExactExpectations {
        energy,
        eloc_variance: e2 - energy * energy,
        o_mean,
        s_matrix,
        f_vector,
    })
}

/// `⟨Ψ|H|Ψ⟩ / ⟨Ψ|Ψ⟩` by dense linear algebra on the full amplitude vector.
pub fn variational_energy_dense(params: &RbmParams, tfi: TfiParams) -> Result<f64> {
    let len = params.len();
    check_ed_size(len, MAX_ENUM_SITES)?;
    let log_amp: Vec<f64> = (0..1usize << len)
        .map(|s| log_psi(params, &SpinConfig::from_index(s, len)))
        .collect::<Result<_>>()?;
    let max_log = log_amp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let psi: Vec<f64> = log_amp.iter().map(|l| (l - max_log).exp()).collect();
    let h_psi = apply_hamiltonian(len, tfi, &psi);
    let num: f64 = psi.iter().zip(&h_psi).map(|(a, b)| a * b).sum();
    let den: f64 = psi.iter().map(|a| a * a).sum();
    Ok(num / den)
}
