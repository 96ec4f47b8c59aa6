//! Exact truncated matrix elements of the displacement operator and the
//! contractions built on them (displaced parity, displaced photon
//! distributions, coherent-state overlaps).
//!
//! Unlike exponentiating the truncated generator αa† − α*a, the band
//! recurrence below produces the *infinite-dimensional* operator's elements
//! ⟨m|D(α)|n⟩ restricted to the truncated block, which is the physically
//! correct measurement kernel: a displaced-parity measurement acts on the
//! full oscillator, not on a finite block. The two constructions agree deep
//! inside the cutoff and differ near it.

use nalgebra::{Complex, DMatrix, DVector};

use crate::hilbert::{displacement_matrix, DensityMatrix};
use crate::real::cr;
use crate::Real;

/// Fock amplitudes ⟨n|γ⟩ = e^{−|γ|²/2}·γⁿ/√n! of a coherent state, exact
/// (not renormalized over the truncated block).
pub(crate) fn coherent_amplitudes<T: Real>(gamma: Complex<T>, dim: usize) -> DVector<Complex<T>> {
    let mut v = DVector::zeros(dim);
    let mut c = Complex::new((-gamma.norm_sqr() * T::lit(0.5)).exp(), T::zero());
    for n in 0..dim {
        v[n] = c;
        c *= gamma / cr(T::from_usize(n + 1).unwrap().sqrt());
    }
    v
}

/// W(β) = (2/π)·Tr[ρ·D(2β)Π], the displaced-parity expectation. The identity
/// D(β)ΠD(−β) = D(2β)Π (exact, with no extra phase since
/// D(β)D(β) = D(2β)) reduces the kernel to a single displacement matrix.
pub(crate) fn wigner_value<T: Real>(rho: &DensityMatrix<T>, beta: Complex<T>) -> T {
    let dim = rho.dim();
    let d2 = displacement_matrix(beta * cr(T::lit(2.0)), dim);
    let m = rho.matrix();
    // Tr[ρ·D2·Π] = Σ_{j,k} ρ_{jk}·D2_{kj}·(−1)^j; real for Hermitian ρ.
    let mut acc = T::zero();
    for j in 0..dim {
        let sign = if j % 2 == 0 { T::one() } else { -T::one() };
        for k in 0..dim {
            acc += (m[(j, k)] * d2[(k, j)]).re * sign;
        }
    }
    acc * T::lit(2.0) / T::pi()
}

/// The displaced-parity observable M(β) = (2/π)·D(2β)Π as a dense Hermitian
/// matrix (the reconstruction forward model: W(β) = Tr[ρ·M(β)]).
pub(crate) fn displaced_parity_observable<T: Real>(
    beta: Complex<T>,
    dim: usize,
) -> DMatrix<Complex<T>> {
    let mut d2 = displacement_matrix(beta * cr(T::lit(2.0)), dim);
    let scale = T::lit(2.0) / T::pi();
    for j in 0..dim {
        let sign = if j % 2 == 0 { scale } else { -scale };
        for i in 0..dim {
            d2[(i, j)] *= cr(sign);
        }
    }
    d2
}

/// Q(γ) = (1/π)·⟨γ|ρ|γ⟩ with exact coherent amplitudes.
pub(crate) fn q_value<T: Real>(rho: &DensityMatrix<T>, gamma: Complex<T>) -> T {
    let dim = rho.dim();
    let c = coherent_amplitudes(gamma, dim);
    let m = rho.matrix();
    let mut acc = T::zero();
    for j in 0..dim {
        for k in 0..dim {
            acc += (c[j].conj() * m[(j, k)] * c[k]).re;
        }
    }
    acc / T::pi()
}

/// Photon-number populations ⟨n|D(−β)ρD(β)|n⟩ for n = 0..=n_max: the
/// distribution an ancilla-Rabi measurement samples after an ideal
/// displacement by −β.
pub(crate) fn displaced_populations<T: Real>(
    rho: &DensityMatrix<T>,
    beta: Complex<T>,
    n_max: usize,
) -> Vec<T> {
    let dim = rho.dim();
    let d = displacement_matrix(-beta, dim);
    let m = rho.matrix();
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut row = DVector::zeros(dim);
    let mut tmp = DVector::zeros(dim);
    for n in 0..=n_max.min(dim - 1) {
        for k in 0..dim {
            row[k] = d[(n, k)];
        }
        // P_n = row·ρ·row† = Σ_j (ρ·row†)_j · row_j
        for i in 0..dim {
            let mut s = Complex::new(T::zero(), T::zero());
            for j in 0..dim {
                s += m[(i, j)] * row[j].conj();
            }
            tmp[i] = s;
        }
        let mut p = T::zero();
        for i in 0..dim {
            p += (row[i] * tmp[i]).re;
        }
        probs.push(p.max(T::zero()));
    }
    while probs.len() < n_max + 1 {
        probs.push(T::zero());
    }
    probs
}
