//! Density-matrix reconstruction from Wigner samples by accelerated
//! projected least squares.
//!
//! The forward model is linear: W(β_i) = Tr[ρ·M_i] with the Hermitian
//! kernel M_i = (2/π)·D(2β_i)Π. Reconstruction minimizes
//! f(ρ) = Σ_i (Tr[ρ·M_i] − w_i)² over the convex set of density matrices
//! (Hermitian, positive semidefinite, unit trace) using FISTA-accelerated
//! projected gradient descent with adaptive restart. The projection is the
//! eigenvalue clip: hermitize, zero negative eigenvalues, rescale the trace
//! to one. The gradient step size comes from a power-iteration estimate of
//! the largest eigenvalue of the normal operator G(X) = Σ_i Tr[X·M_i]·M_i —
//! analytic bounds on ‖G‖ are orders of magnitude too loose and would stall
//! the iteration.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::{displaced_parity_observable, WignerGrid};
use crate::hilbert::DensityMatrix;
use crate::real::cr;
use crate::{Error, Real, Result};

/// Knobs for [`reconstruct_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions<T> {
    /// Iteration cap per solve phase.
    pub max_iter: usize,
    /// Stop when the objective decreases by less than this (absolute).
    pub tol: T,
    /// Known 1σ noise level of the Wigner samples; when set, a final
    /// residual RMS above 3σ raises `residual_warning`.
    pub noise_estimate: Option<T>,
    /// Run a second solve with points whose first-pass residual exceeds
    /// 3× the median residual removed.
    pub mask_outliers: bool,
}

impl<T: Real> Default for ReconstructOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: T::lit(1e-8),
            noise_estimate: None,
            mask_outliers: false,
        }
    }
}

/// Result of a reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction<T: Real> {
    pub rho: DensityMatrix<T>,
    /// RMS of Tr[ρ·M_i] − w_i over the points used in the final solve.
    pub residual_rms: T,
    /// Total gradient iterations across solve phases.
    pub iterations: usize,
    /// Whether the objective plateaued before the iteration cap.
    pub converged: bool,
    /// Residual RMS exceeded 3× `noise_estimate`: the state basis may be
    /// too small or the data inconsistent.
    pub residual_warning: bool,
    /// Points removed by outlier masking (0 unless `mask_outliers`).
    pub masked_points: usize,
}

/// Re Tr[A·B], exact for the Hermitian pairs used here.
fn trace_product<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> T {
    let n = a.nrows();
    let mut acc = T::zero();
    for r in 0..n {
        for k in 0..n {
            acc += (a[(r, k)] * b[(k, r)]).re;
        }
    }
    acc
}

/// Nearest density matrix (in Frobenius norm) to `x`: hermitize, clip
/// negative eigenvalues, renormalize the trace. An all-nonpositive spectrum
/// falls back to the maximally mixed state.
fn project_to_states<T: Real>(x: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let n = x.nrows();
    let herm = (x + x.adjoint()) * cr(T::lit(0.5));
    let eig = SymmetricEigen::new(herm);
    let clipped: Vec<T> = eig.eigenvalues.iter().map(|&l| l.max(T::zero())).collect();
    let total = clipped.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::lit(1e-300) {
        return DMatrix::from_diagonal_element(n, n, cr(T::one() / T::from_usize(n).unwrap()));
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &l) in clipped.iter().enumerate() {
        let s = cr(l / total);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * v.adjoint()
}

fn objective<T: Real>(
    rho: &DMatrix<Complex<T>>,
    kernels: &[DMatrix<Complex<T>>],
    w: &[T],
    mask: &[bool],
) -> T {
    let mut f = T::zero();
    for (i, m) in kernels.iter().enumerate() {
        if mask[i] {
            let r = trace_product(rho, m) - w[i];
            f += r * r;
        }
    }
    f
}

/// Largest eigenvalue of G(X) = Σ_i Tr[X·M_i]·M_i by power iteration from a
/// deterministic Hermitian start.
fn normal_operator_norm<T: Real>(
    kernels: &[DMatrix<Complex<T>>],
    mask: &[bool],
    dim: usize,
) -> T {
    let mut x = DMatrix::from_diagonal_element(
        dim,
        dim,
        cr(T::one() / T::from_usize(dim).unwrap().sqrt()),
    );
    let mut lam = T::one();
    for _ in 0..30 {
        let mut g: DMatrix<Complex<T>> = DMatrix::zeros(dim, dim);
        for (i, m) in kernels.iter().enumerate() {
            if mask[i] {
                let t = cr(trace_product(&x, m));
                for (gv, mv) in g.iter_mut().zip(m.iter()) {
                    *gv += mv * t;
                }
            }
        }
        lam = trace_product(&x, &g);
        let norm = g.iter().fold(T::zero(), |a, v| a + v.norm_sqr()).sqrt();
        if norm <= T::lit(1e-300) {
            return T::one();
        }
        x = g * cr(T::one() / norm);
    }
    lam.max(T::lit(1e-12))
}

struct SolvePhase<T: Real> {
    rho: DMatrix<Complex<T>>,
    iterations: usize,
    converged: bool,
}

fn solve<T: Real>(
    kernels: &[DMatrix<Complex<T>>],
    w: &[T],
    mask: &[bool],
    dim: usize,
    max_iter: usize,
    tol: T,
) -> SolvePhase<T> {
    // Lipschitz constant of ∇f is 2·λ_max(G); 5% safety margin.
    let inv_l = T::one() / (T::lit(2.1) * normal_operator_norm(kernels, mask, dim));

    let mut rho = DMatrix::from_diagonal_element(
        dim,
        dim,
        cr(T::one() / T::from_usize(dim).unwrap()),
    );
    let mut f_cur = objective(&rho, kernels, w, mask);
    let mut y = rho.clone();
    let mut momentum = T::one();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut grad: DMatrix<Complex<T>> = DMatrix::zeros(dim, dim);
        for (i, m) in kernels.iter().enumerate() {
            if mask[i] {
                let r = trace_product(&y, m) - w[i];
                let c = cr(T::lit(2.0) * r);
                for (gv, mv) in grad.iter_mut().zip(m.iter()) {
                    *gv += mv * c;
                }
            }
        }
        let candidate = project_to_states(&(&y - grad * cr(inv_l)));
        let f_new = objective(&candidate, kernels, w, mask);

        if f_new > f_cur {
            // Momentum overshot a convex valley: restart from the last
            // accepted iterate with momentum reset. The plain projected
            // gradient step taken next cannot increase the objective.
            momentum = T::one();
            y = rho.clone();
            continue;
        }
        let progress = f_cur - f_new;
        let next = (T::one() + (T::one() + T::lit(4.0) * momentum * momentum).sqrt())
            * T::lit(0.5);
        let beta = cr((momentum - T::one()) / next);
        y = &candidate + (&candidate - &rho) * beta;
        momentum = next;
        rho = candidate;
        f_cur = f_new;
        if progress <= tol {
            converged = true;
            break;
        }
    }
    SolvePhase { rho, iterations, converged }
}

/// Reconstructs the density matrix (Fock dimension `cutoff`) that best
/// reproduces the Wigner samples in the least-squares sense.
///
/// Requires at least `cutoff`² grid points — fewer cannot determine the
/// `cutoff`² real parameters of a Hermitian matrix and the problem is
/// refused as ill-posed. With `mask_outliers`, points whose first-pass
/// residual exceeds 3× the median are dropped and the solve repeats, as
/// long as enough points survive to keep the problem determined.
pub fn reconstruct_density<T: Real>(
    w: &WignerGrid<T>,
    cutoff: usize,
    opts: &ReconstructOptions<T>,
) -> Result<Reconstruction<T>> {
    if cutoff < 2 {
        return Err(Error::Domain("reconstruction needs a Fock dimension of at least 2".into()));
    }
    if opts.max_iter == 0 || !(opts.tol > T::zero()) {
        return Err(Error::Domain("max_iter and tol must be positive".into()));
    }
    let n_points = w.grid().len();
    if n_points < cutoff * cutoff {
        return Err(Error::IllPosed(format!(
            "{} Wigner samples cannot determine a {0}x{1} density matrix ({2} real parameters)",
            n_points,
            cutoff,
            cutoff * cutoff
        )));
    }

    let points = w.grid().points();
    let kernels: Vec<DMatrix<Complex<T>>> = points
        .par_iter()
        .map(|&beta| displaced_parity_observable(beta, cutoff))
        .collect();
    let values = w.values();

    let mut mask = vec![true; n_points];
    let first = solve(&kernels, values, &mask, cutoff, opts.max_iter, opts.tol);
    let mut total_iterations = first.iterations;
    let mut phase = first;
    let mut masked_points = 0usize;

    if opts.mask_outliers {
        let residuals: Vec<T> = kernels
            .iter()
            .enumerate()
            .map(|(i, m)| (trace_product(&phase.rho, m) - values[i]).abs())
            .collect();
        let mut sorted = residuals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
        let median = if n_points % 2 == 1 {
            sorted[n_points / 2]
        } else {
            (sorted[n_points / 2 - 1] + sorted[n_points / 2]) * T::lit(0.5)
        };
        if median > T::lit(1e-14) {
            let threshold = T::lit(3.0) * median;
            let keep: Vec<bool> = residuals.iter().map(|&r| r <= threshold).collect();
            let dropped = keep.iter().filter(|&&k| !k).count();
            let active = n_points - dropped;
            if dropped > 0 && active >= cutoff * cutoff {
                mask = keep;
                masked_points = dropped;
                phase = solve(&kernels, values, &mask, cutoff, opts.max_iter, opts.tol);
                total_iterations += phase.iterations;
            }
        }
    }

    let active = mask.iter().filter(|&&k| k).count();
    let mut ss = T::zero();
    for (i, m) in kernels.iter().enumerate() {
        if mask[i] {
            let r = trace_product(&phase.rho, m) - values[i];
            ss += r * r;
        }
    }
    let residual_rms = (ss / T::from_usize(active).unwrap()).sqrt();
    let residual_warning = match opts.noise_estimate {
        Some(sigma) => residual_rms > T::lit(3.0) * sigma,
        None => false,
    };

    Ok(Reconstruction {
        rho: DensityMatrix::new(phase.rho)?,
        residual_rms,
        iterations: total_iterations,
        converged: phase.converged,
        residual_warning,
        masked_points,
    })
}
