//! The measurement pipeline: forward synthesis of ancilla Rabi signals,
//! least-squares inversion to photon-number distributions, Wigner and Q
//! evaluation, conditional Wigner assembly, constrained density-matrix
//! reconstruction, and the deterministic phase-space rotation correction.
//!
//! Conventions: the Wigner function is W(β) = (2/π)·Tr[ρ·D(2β)Π] (so a
//! coherent state peaks at 2/π) and the Husimi function is
//! Q(γ) = (1/π)·⟨γ|ρ|γ⟩. Grids are rectangular with separable axes; values
//! are stored row-major over the imaginary axis (index = row·n_re + col,
//! where rows sweep Im β and columns Re β).

mod kernel;
mod reconstruct;

pub use reconstruct::{reconstruct_density, ReconstructOptions, Reconstruction};

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::hilbert::DensityMatrix;
use crate::optimize::{levenberg_marquardt, linear_least_squares, normal_condition, LmOptions};
use crate::real::cr;
use crate::{Error, Real, Result};

pub(crate) use kernel::displaced_parity_observable;

/// Which ancilla-qubit measurement outcome a grid or state is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Excited,
    Ground,
    Unconditioned,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::Excited => write!(f, "e"),
            Condition::Ground => write!(f, "g"),
            Condition::Unconditioned => write!(f, "unconditioned"),
        }
    }
}

/// Rectangular phase-space grid with separable, strictly increasing axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid<T> {
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> PhaseGrid<T> {
    pub fn new(re: Vec<T>, im: Vec<T>) -> Result<Self> {
        for axis in [&re, &im] {
            if axis.is_empty() {
                return Err(Error::Domain("phase-space grid axis is empty".into()));
            }
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::Domain("grid axes must be strictly increasing".into()));
                }
            }
        }
        Ok(Self { re, im })
    }

    /// n × n grid over [−radius, radius]².
    pub fn square(radius: T, n: usize) -> Result<Self> {
        if n < 2 || !(radius > T::zero()) {
            return Err(Error::Domain("square grid needs n >= 2 and radius > 0".into()));
        }
        let axis: Vec<T> = (0..n)
            .map(|i| {
                -radius
                    + T::lit(2.0) * radius * T::from_usize(i).unwrap()
                        / T::from_usize(n - 1).unwrap()
            })
            .collect();
        Self::new(axis.clone(), axis)
    }

    /// Default tomography window: 41 × 41 over [−R, R]² with
    /// R = max(3, 1.5·√n̄ + 2), scaling with the state size.
    pub fn default_for(nbar: T) -> Self {
        let r = (T::lit(1.5) * nbar.max(T::zero()).sqrt() + T::lit(2.0)).max(T::lit(3.0));
        Self::square(r, 41).expect("default grid parameters are valid")
    }

    pub fn n_re(&self) -> usize {
        self.re.len()
    }

    pub fn n_im(&self) -> usize {
        self.im.len()
    }

    pub fn len(&self) -> usize {
        self.re.len() * self.im.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn re_axis(&self) -> &[T] {
        &self.re
    }

    pub fn im_axis(&self) -> &[T] {
        &self.im
    }

    /// Point at flat index `idx` = row·n_re + col (rows sweep the imaginary
    /// axis).
    pub fn point(&self, idx: usize) -> Complex<T> {
        let row = idx / self.re.len();
        let col = idx % self.re.len();
        Complex::new(self.re[col], self.im[row])
    }

    /// All points in flat-index order.
    pub fn points(&self) -> Vec<Complex<T>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Largest |β| on the grid (a corner).
    pub fn max_radius(&self) -> T {
        let re = self.re[0].abs().max(self.re[self.re.len() - 1].abs());
        let im = self.im[0].abs().max(self.im[self.im.len() - 1].abs());
        (re * re + im * im).sqrt()
    }

    /// Area of one grid cell. Errors unless both axes are uniformly spaced
    /// (required by every quadrature in this crate).
    pub fn cell_area(&self) -> Result<T> {
        let spacing = |axis: &[T]| -> Result<T> {
            if axis.len() < 2 {
                return Err(Error::Domain("grid axis too short for quadrature".into()));
            }
            let h = axis[1] - axis[0];
            for w in axis.windows(2) {
                if ((w[1] - w[0]) - h).abs() > h.abs() * T::lit(1e-9) {
                    return Err(Error::Domain("grid axis is not uniformly spaced".into()));
                }
            }
            Ok(h)
        };
        Ok(spacing(&self.re)? * spacing(&self.im)?)
    }
}

/// Wigner function samples on a [`PhaseGrid`]. Values are validated against
/// the universal bound |W| ≤ 2/π.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid<T: Real> {
    grid: PhaseGrid<T>,
    values: Vec<T>,
    condition: Condition,
}

impl<T: Real> WignerGrid<T> {
    pub fn new(grid: PhaseGrid<T>, values: Vec<T>, condition: Condition) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { left: grid.len(), right: values.len() });
        }
        let bound = T::lit(2.0) / T::pi() + T::lit(1e-9);
        for v in &values {
            if !v.is_finite() || v.abs() > bound {
                return Err(Error::Domain(format!(
                    "Wigner value {} outside the universal bound 2/pi",
                    v
                )));
            }
        }
        Ok(Self { grid, values, condition })
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Riemann sum Σ W·(cell area); 1 for a normalized state on a covering
    /// grid.
    pub fn integral(&self) -> Result<T> {
        let area = self.grid.cell_area()?;
        Ok(self.values.iter().fold(T::zero(), |acc, &v| acc + v) * area)
    }

    /// Riemann sum Σ |W|·(cell area).
    pub fn abs_integral(&self) -> Result<T> {
        let area = self.grid.cell_area()?;
        Ok(self.values.iter().fold(T::zero(), |acc, &v| acc + v.abs()) * area)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b))
    }
}

/// Husimi-Q samples on a [`PhaseGrid`]; values validated against
/// 0 ≤ Q ≤ 1/π. `truncation_warning` flags grids that probe amplitudes the
/// state's Fock cutoff cannot faithfully represent (|γ|² > cutoff/4).
#[derive(Debug, Clone, PartialEq)]
pub struct QGrid<T: Real> {
    grid: PhaseGrid<T>,
    values: Vec<T>,
    condition: Condition,
    pub truncation_warning: bool,
}

impl<T: Real> QGrid<T> {
    pub fn new(grid: PhaseGrid<T>, values: Vec<T>, condition: Condition) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { left: grid.len(), right: values.len() });
        }
        let upper = T::one() / T::pi() + T::lit(1e-9);
        for v in &values {
            if !v.is_finite() || *v < -T::lit(1e-9) || *v > upper {
                return Err(Error::Domain(format!("Q value {} outside [0, 1/pi]", v)));
            }
        }
        Ok(Self { grid, values, condition, truncation_warning: false })
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn integral(&self) -> Result<T> {
        let area = self.grid.cell_area()?;
        Ok(self.values.iter().fold(T::zero(), |acc, &v| acc + v) * area)
    }
}

/// Parameters of the ancilla Rabi-fit model
/// P_e(τ) = ½[1 − pg0·Σ_n P_n·e^{−κ_n τ}·cos(2√n·λ′·τ)] with
/// κ_n = n^l / T1p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<T> {
    /// Ancilla–resonator vacuum Rabi coupling λ′ (rad/µs).
    pub lambda_prime: T,
    /// Rabi-decay reference time T1p (µs).
    pub t1p: T,
    /// Decay exponent l in κ_n = n^l/T1p.
    pub l: T,
    /// Photon-number cutoff of the fit.
    pub n_max: usize,
}

impl<T: Real> FitConfig<T> {
    /// l defaults to 0.7.
    pub fn new(lambda_prime: T, t1p: T, n_max: usize) -> Result<Self> {
        if !(lambda_prime > T::zero()) || !(t1p > T::zero()) {
            return Err(Error::Domain("lambda_prime and t1p must be positive".into()));
        }
        if n_max < 1 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        Ok(Self { lambda_prime, t1p, l: T::lit(0.7), n_max })
    }

    /// Reference ancilla parameters: λ′/2π = 20.91 MHz, T1p = 2.5 µs,
    /// l = 0.7.
    pub fn reference(n_max: usize) -> Result<Self> {
        Self::new(T::lit(20.91) * T::two_pi(), T::lit(2.5), n_max)
    }

    /// Rabi decay rate κ_n = n^l/T1p (κ_0 = 0).
    pub fn kappa(&self, n: usize) -> T {
        if n == 0 {
            return T::zero();
        }
        T::from_usize(n).unwrap().powf(self.l) / self.t1p
    }

    /// Smallest cutoff whose Poisson(n̄) tail mass is below 1e−3 — a
    /// starting point when the photon distribution is near-coherent.
    pub fn suggest_n_max(nbar: T) -> usize {
        let mut term = (-nbar).exp(); // P(0)
        let mut cdf = term;
        let mut n = 0usize;
        while T::one() - cdf > T::lit(1e-3) && n < 200 {
            n += 1;
            term *= nbar / T::from_usize(n).unwrap();
            cdf += term;
        }
        n.max(1)
    }
}

/// Measured (or synthesized) ancilla excited-state populations over
/// interaction times.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiSignal<T> {
    taus: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> RabiSignal<T> {
    /// Validates: equal lengths, strictly increasing times, values in [0,1].
    pub fn new(taus: Vec<T>, values: Vec<T>) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(Error::LengthMismatch { left: taus.len(), right: values.len() });
        }
        for w in taus.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain("interaction times must be strictly increasing".into()));
            }
        }
        for v in &values {
            if !(*v >= T::zero() && *v <= T::one()) {
                return Err(Error::Domain(format!("population {} outside [0,1]", v)));
            }
        }
        Ok(Self { taus, values })
    }

    pub fn taus(&self) -> &[T] {
        &self.taus
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Photon-number distribution with the initial ancilla ground-state
/// probability `pg0` (the paper's only readout-error concession).
///
/// `probs` may be subnormalized: conditional pipelines store the *joint*
/// probabilities P_{j,n} whose sum is the qubit-outcome probability P_j.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution<T> {
    probs: Vec<T>,
    pg0: T,
}

impl<T: Real> PhotonDistribution<T> {
    pub fn new(probs: Vec<T>, pg0: T) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty photon distribution".into()));
        }
        let mut sum = T::zero();
        for p in &probs {
            if !p.is_finite() || *p < -T::lit(1e-12) {
                return Err(Error::Domain(format!("negative photon probability {}", p)));
            }
            sum += *p;
        }
        if sum > T::one() + T::lit(1e-6) {
            return Err(Error::ProbabilitySum(format!(
                "photon probabilities sum to {} > 1",
                sum
            )));
        }
        if !(pg0 >= T::zero() && pg0 <= T::one()) {
            return Err(Error::Domain(format!("pg0 = {} outside [0,1]", pg0)));
        }
        Ok(Self { probs: probs.into_iter().map(|p| p.max(T::zero())).collect(), pg0 })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn pg0(&self) -> T {
        self.pg0
    }

    /// Σ_n n·P_n (unnormalized when the distribution is subnormalized).
    pub fn mean_photon(&self) -> T {
        self.probs
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (n, &p)| acc + T::from_usize(n).unwrap() * p)
    }

    /// Total probability mass Σ_n P_n.
    pub fn mass(&self) -> T {
        self.probs.iter().fold(T::zero(), |acc, &p| acc + p)
    }
}

/// Deterministic phase-space rotation accumulated during the quench readout:
/// U_k = exp[−iθ_k·(t/t_f)·a†a] for outcome k ∈ {e, g}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCorrection<T> {
    pub theta_e: T,
    pub theta_g: T,
    pub tf: T,
}

impl<T: Real> RotationCorrection<T> {
    /// Calibrated reference values (θ_e, θ_g, t_f) = (10.6, 10.2, 3.0 µs).
    pub fn reference() -> Self {
        Self { theta_e: T::lit(10.6), theta_g: T::lit(10.2), tf: T::lit(3.0) }
    }
}

/// Diagnostics attached to a photon-distribution fit.
#[derive(Debug, Clone)]
pub struct FitDiagnostics<T> {
    /// Root-mean-square residual per sample.
    pub residual_rms: T,
    /// 1σ uncertainty per recovered P_n (linearized covariance).
    pub uncertainties: Vec<T>,
    pub iterations: usize,
    /// Normal-equation condition exceeded 1e10: n_max too large for the τ
    /// span.
    pub ill_conditioned: bool,
}

// ---------------------------------------------------------------------------
// Forward model and fit
// ---------------------------------------------------------------------------

/// Basis functions B_n(τ) = e^{−κ_n τ}·cos(2√n·λ′·τ) as an n_res × (n_max+1)
/// matrix.
fn rabi_basis<T: Real>(taus: &[T], cfg: &FitConfig<T>) -> DMatrix<T> {
    let mut b = DMatrix::zeros(taus.len(), cfg.n_max + 1);
    for (i, &tau) in taus.iter().enumerate() {
        for n in 0..=cfg.n_max {
            let root = T::from_usize(n).unwrap().sqrt();
            b[(i, n)] = (-cfg.kappa(n) * tau).exp()
                * (T::lit(2.0) * root * cfg.lambda_prime * tau).cos();
        }
    }
    b
}

/// Forward model: P_e(τ) = ½[1 − pg0·Σ_n P_n·e^{−κ_n τ}·cos(2√n·λ′·τ)].
pub fn synthesize_rabi_signal<T: Real>(
    pd: &PhotonDistribution<T>,
    cfg: &FitConfig<T>,
    taus: &[T],
) -> Result<RabiSignal<T>> {
    let b = rabi_basis(taus, cfg);
    let half = T::lit(0.5);
    let values: Vec<T> = taus
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mut osc = T::zero();
            for n in 0..=cfg.n_max {
                if n < pd.probs.len() {
                    osc += pd.probs[n] * b[(i, n)];
                }
            }
            // Clamp pure-roundoff excursions; the model is bounded by [0,1].
            (half * (T::one() - pd.pg0 * osc)).max(T::zero()).min(T::one())
        })
        .collect();
    RabiSignal::new(taus.to_vec(), values)
}

/// Inverts a Rabi signal to a photon distribution by damped least squares
/// with the nonnegativity substitution P_n ∝ c_n².
///
/// Only the products pg0·P_n are identifiable from the signal, so the result
/// is reported with Σ P_n = 1 and pg0 = min(1, Σ_n c_n²): a fully depolarized
/// signal (all amplitudes zero) comes back as pg0 = 0 with P_0 = 1.
///
/// Preconditions: at least 2·(n_max+2) samples spanning at least one vacuum
/// Rabi period π/λ′.
pub fn fit_photon_distribution<T: Real>(
    sig: &RabiSignal<T>,
    cfg: &FitConfig<T>,
) -> Result<(PhotonDistribution<T>, FitDiagnostics<T>)> {
    let n_res = sig.len();
    let n_par = cfg.n_max + 1;
    if n_res < 2 * (cfg.n_max + 2) {
        return Err(Error::Domain(format!(
            "{} samples cannot determine {} photon amplitudes; need at least {}",
            n_res,
            n_par,
            2 * (cfg.n_max + 2)
        )));
    }
    let span = sig.taus[n_res - 1] - sig.taus[0];
    if span < T::pi() / cfg.lambda_prime {
        return Err(Error::Domain(
            "interaction times must span at least one vacuum Rabi period pi/lambda'".into(),
        ));
    }

    let b = rabi_basis(&sig.taus, cfg);
    let ill_conditioned = normal_condition(&b) > T::lit(1e10);

    // Linear warm start in u_n = pg0·P_n: ½(1 − B·u) ≈ y.
    let rhs = DVector::from_iterator(n_res, sig.values.iter().map(|&y| T::one() - T::lit(2.0) * y));
    let u0 = linear_least_squares(&b, &rhs)?;
    let c0 = DVector::from_iterator(n_par, u0.iter().map(|&u| u.max(T::lit(1e-6)).sqrt()));

    let half = T::lit(0.5);
    let residuals = |c: &DVector<T>, out: &mut DVector<T>| {
        for i in 0..n_res {
            let mut osc = T::zero();
            for n in 0..n_par {
                osc += c[n] * c[n] * b[(i, n)];
            }
            out[i] = half * (T::one() - osc) - sig.values[i];
        }
    };
    let lm = levenberg_marquardt(residuals, n_res, c0, &LmOptions::default())?;
    if !lm.converged {
        return Err(Error::NonConvergence(format!(
            "photon-distribution fit did not converge in {} iterations",
            lm.iterations
        )));
    }

    let u: Vec<T> = lm.params.iter().map(|&c| c * c).collect();
    let total = u.iter().fold(T::zero(), |a, &b| a + b);
    let (pg0, probs): (T, Vec<T>) = if total <= T::lit(1e-12) {
        let mut p = vec![T::zero(); n_par];
        p[0] = T::one();
        (T::zero(), p)
    } else {
        (total.min(T::one()), u.iter().map(|&v| v / total).collect())
    };

    // Linearized covariance: cov(c) = σ̂²·(JᵀJ)⁻¹, propagated through
    // u = c² and the normalization.
    let dof = T::from_usize(n_res.saturating_sub(n_par).max(1)).unwrap();
    let sigma2 = lm.chi2 / dof;
    let jtj = lm.jacobian.transpose() * &lm.jacobian;
    let uncertainties = match jtj.clone().try_inverse() {
        Some(inv) => (0..n_par)
            .map(|n| {
                let var_c = (inv[(n, n)] * sigma2).max(T::zero());
                let scale = if total > T::lit(1e-12) { total } else { T::one() };
                T::lit(2.0) * lm.params[n].abs() * var_c.sqrt() / scale
            })
            .collect(),
        None => vec![T::max_value().unwrap(); n_par],
    };

    let pd = PhotonDistribution::new(probs, pg0)?;
    let diagnostics = FitDiagnostics {
        residual_rms: (lm.chi2 / T::from_usize(n_res).unwrap()).sqrt(),
        uncertainties,
        iterations: lm.iterations,
        ill_conditioned,
    };
    Ok((pd, diagnostics))
}

// ---------------------------------------------------------------------------
// Phase-space functions
// ---------------------------------------------------------------------------

/// Wigner function of `rho` sampled on `grid` via the displaced-parity
/// kernel W(β) = (2/π)·Tr[ρ·D(2β)Π]. Grid points are evaluated in parallel.
pub fn wigner_function<T: Real>(
    rho: &DensityMatrix<T>,
    grid: &PhaseGrid<T>,
    condition: Condition,
) -> Result<WignerGrid<T>> {
    let points = grid.points();
    let values: Vec<T> = points.par_iter().map(|&beta| kernel::wigner_value(rho, beta)).collect();
    WignerGrid::new(grid.clone(), values, condition)
}

/// Single-point Wigner value W(β) = (2/π)·Tr[ρ·D(2β)Π].
pub fn wigner_point<T: Real>(rho: &DensityMatrix<T>, beta: Complex<T>) -> T {
    kernel::wigner_value(rho, beta)
}

/// Husimi function Q(γ) = (1/π)·⟨γ|ρ|γ⟩ on a grid, with a truncation warning
/// when the grid probes |γ|² > cutoff/4.
pub fn q_function<T: Real>(
    rho: &DensityMatrix<T>,
    grid: &PhaseGrid<T>,
    condition: Condition,
) -> Result<QGrid<T>> {
    let points = grid.points();
    let values: Vec<T> = points.par_iter().map(|&gamma| kernel::q_value(rho, gamma)).collect();
    let mut out = QGrid::new(grid.clone(), values, condition)?;
    let r = grid.max_radius();
    out.truncation_warning = r * r > T::from_usize(rho.dim()).unwrap() * T::lit(0.25);
    Ok(out)
}

/// Single-point Husimi value.
pub fn q_point<T: Real>(rho: &DensityMatrix<T>, gamma: Complex<T>) -> T {
    kernel::q_value(rho, gamma)
}

/// Photon distributions of D(−β)ρD(β) for every grid point β — the forward
/// simulation of a displaced-population measurement. The returned
/// distributions carry `pg0 = 1` and are aligned with the grid's flat index.
pub fn displaced_distributions<T: Real>(
    rho: &DensityMatrix<T>,
    grid: &PhaseGrid<T>,
    n_max: usize,
) -> Result<Vec<PhotonDistribution<T>>> {
    let points = grid.points();
    points
        .par_iter()
        .map(|&beta| {
            let probs = kernel::displaced_populations(rho, beta, n_max);
            PhotonDistribution::new(probs, T::one())
        })
        .collect()
}

/// Assembles a conditional Wigner function from *joint* displaced photon
/// distributions (Σ_n P_{j,n} = P_j per grid point):
/// W_j(β) = (2/(π·P_j))·Σ_n (−1)^n·P_{j,n}(β).
///
/// Errors when the conditioning outcome is too rare (P_j ≤ 0.01) to
/// normalize against.
pub fn wigner_from_conditional<T: Real>(
    grid: &PhaseGrid<T>,
    pn_at_beta: &[PhotonDistribution<T>],
    p_j: T,
    condition: Condition,
) -> Result<WignerGrid<T>> {
    if p_j <= T::lit(0.01) {
        return Err(Error::Normalization(format!(
            "conditioning probability {} <= 0.01 is too rare to normalize",
            p_j
        )));
    }
    if pn_at_beta.len() != grid.len() {
        return Err(Error::LengthMismatch { left: grid.len(), right: pn_at_beta.len() });
    }
    let scale = T::lit(2.0) / (T::pi() * p_j);
    let values: Vec<T> = pn_at_beta
        .iter()
        .map(|pd| {
            let mut alt = T::zero();
            for (n, &p) in pd.probs.iter().enumerate() {
                if n % 2 == 0 {
                    alt += p;
                } else {
                    alt -= p;
                }
            }
            alt * scale
        })
        .collect();
    WignerGrid::new(grid.clone(), values, condition)
}

/// Undoes the deterministic phase-space rotation accumulated by readout time
/// `t`: ρ′ = UρU† with U = exp[−iθ_k·(t/tf)·a†a]. Exact in the Fock basis
/// (element-wise phases), so trace, spectrum, and photon statistics are
/// preserved to machine precision.
pub fn rotate_state<T: Real>(
    rho: &DensityMatrix<T>,
    corr: &RotationCorrection<T>,
    which: Condition,
    t: T,
) -> Result<DensityMatrix<T>> {
    if !(t >= T::zero() && t <= corr.tf) {
        return Err(Error::Domain(format!("time {} outside [0, {}]", t, corr.tf)));
    }
    let theta = match which {
        Condition::Excited => corr.theta_e,
        Condition::Ground => corr.theta_g,
        Condition::Unconditioned => {
            return Err(Error::Domain(
                "rotation correction is defined per qubit outcome (e or g)".into(),
            ))
        }
    };
    let angle = theta * t / corr.tf;
    let dim = rho.dim();
    let mut out = rho.matrix().clone();
    for m in 0..dim {
        for n in 0..dim {
            // (UρU†)_{mn} = ρ_{mn}·e^{−iθ(t/tf)(m−n)}
            let k = T::from_isize(m as isize - n as isize).unwrap();
            let phase = -angle * k;
            out[(m, n)] *= Complex::new(phase.cos(), phase.sin());
        }
    }
    Ok(DensityMatrix::unchecked(out))
}

/// Reassembles the unconditioned resonator state from rotation-corrected
/// conditional states: ρ_r = P_e·ρ_e′ + P_g·ρ_g′, requiring
/// P_e + P_g = 1 ± 1e−6.
pub fn combine_conditional<T: Real>(
    rho_e: &DensityMatrix<T>,
    rho_g: &DensityMatrix<T>,
    p_e: T,
    p_g: T,
) -> Result<DensityMatrix<T>> {
    if rho_e.dim() != rho_g.dim() {
        return Err(Error::Dimension { expected: rho_e.dim(), got: rho_g.dim() });
    }
    if !(p_e >= T::zero() && p_g >= T::zero()) {
        return Err(Error::ProbabilitySum("negative branch probability".into()));
    }
    let sum = p_e + p_g;
    if (sum - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::ProbabilitySum(format!("P_e + P_g = {} is not 1 +/- 1e-6", sum)));
    }
    let mat = (rho_e.matrix() * cr(p_e / sum)) + (rho_g.matrix() * cr(p_g / sum));
    DensityMatrix::new(mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        coherent_state, condition_on_level, fock_state, reduce_to_field, tensor_state,
        vacuum, FockSpace, QubitSpace, StateVector,
    };
    use approx::assert_abs_diff_eq;

    type C64 = Complex<f64>;
    const PI: f64 = std::f64::consts::PI;

    fn poisson(nbar: f64, n_max: usize) -> Vec<f64> {
        let mut p = Vec::with_capacity(n_max + 1);
        let mut term = (-nbar).exp();
        for n in 0..=n_max {
            p.push(term);
            term *= nbar / (n + 1) as f64;
        }
        p
    }

    fn taus(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn synthesized_signal_special_cases() {
        let cfg = FitConfig::<f64>::reference(4).unwrap();
        let ts = taus(50, 0.2);
        // Pure vacuum: the n = 0 term has κ_0 = 0 and cos 0 = 1, so P_e ≡ 0.
        let vac = PhotonDistribution::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let sig = synthesize_rabi_signal(&vac, &cfg, &ts).unwrap();
        for &v in sig.values() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        // Pure |1⟩: ½[1 − e^{−τ/T1p}·cos(2λ′τ)].
        let one = PhotonDistribution::new(vec![0.0, 1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let sig = synthesize_rabi_signal(&one, &cfg, &ts).unwrap();
        for (i, &v) in sig.values().iter().enumerate() {
            let tau = ts[i];
            let expect =
                0.5 * (1.0 - (-tau / cfg.t1p).exp() * (2.0 * cfg.lambda_prime * tau).cos());
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn synthesis_matches_direct_summation_oracle() {
        let cfg = FitConfig::<f64>::reference(8).unwrap();
        let pd = PhotonDistribution::new(poisson(1.0, 8), 0.93).unwrap();
        let ts = taus(101, 0.3);
        let sig = synthesize_rabi_signal(&pd, &cfg, &ts).unwrap();
        for (i, &tau) in ts.iter().enumerate() {
            // Independent term-by-term summation.
            let mut osc = 0.0;
            for (n, &p) in pd.probs().iter().enumerate() {
                let kappa = if n == 0 { 0.0 } else { (n as f64).powf(0.7) / cfg.t1p };
                osc += p * (-kappa * tau).exp() * (2.0 * (n as f64).sqrt() * cfg.lambda_prime * tau).cos();
            }
            let expect = 0.5 * (1.0 - 0.93 * osc);
            assert_abs_diff_eq!(sig.values()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_round_trips_a_poisson_distribution() {
        let cfg = FitConfig::<f64>::reference(10).unwrap();
        let truth = PhotonDistribution::new(poisson(1.0, 10), 1.0).unwrap();
        // 400 points over 4 vacuum Rabi periods.
        let span = 4.0 * PI / cfg.lambda_prime;
        let sig = synthesize_rabi_signal(&truth, &cfg, &taus(400, span)).unwrap();
        let (fitted, diag) = fit_photon_distribution(&sig, &cfg).unwrap();
        for n in 0..=10 {
            assert_abs_diff_eq!(fitted.probs()[n], truth.probs()[n], epsilon = 1e-3);
        }
        assert!(fitted.pg0() > 0.999, "pg0 = {}", fitted.pg0());
        assert!(diag.residual_rms < 1e-6);
    }

    #[test]
    fn fit_recovers_vacuum_from_flat_signal() {
        let cfg = FitConfig::<f64>::reference(5).unwrap();
        let span = 2.0 * PI / cfg.lambda_prime;
        let ts = taus(60, span);
        let sig = RabiSignal::new(ts, vec![0.0; 60]).unwrap();
        let (fitted, _) = fit_photon_distribution(&sig, &cfg).unwrap();
        assert_abs_diff_eq!(fitted.probs()[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fitted.pg0(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn fit_with_noise_stays_close() {
        // Deterministic pseudo-noise (fixed linear-congruential stream) at
        // σ = 0.01; recovered probabilities within 0.02 element-wise.
        let cfg = FitConfig::<f64>::reference(6).unwrap();
        let truth = PhotonDistribution::new(poisson(0.8, 6), 0.97).unwrap();
        let span = 4.0 * PI / cfg.lambda_prime;
        let ts = taus(300, span);
        let clean = synthesize_rabi_signal(&truth, &cfg, &ts).unwrap();
        let mut state = 0x2545F4914F6CDD1Du64;
        let noisy: Vec<f64> = clean
            .values()
            .iter()
            .map(|&v| {
                // Two uniform draws → one Gaussian (Box–Muller).
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u1 = (state >> 11) as f64 / (1u64 << 53) as f64;
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u2 = (state >> 11) as f64 / (1u64 << 53) as f64;
                let g = (-2.0 * u1.max(1e-12).ln()).sqrt() * (2.0 * PI * u2).cos();
                (v + 0.01 * g).clamp(0.0, 1.0)
            })
            .collect();
        let sig = RabiSignal::new(ts, noisy).unwrap();
        let (fitted, diag) = fit_photon_distribution(&sig, &cfg).unwrap();
        let scale = fitted.pg0() / truth.pg0();
        for n in 0..=6 {
            let err = (fitted.probs()[n] * scale - truth.probs()[n]).abs();
            assert!(err < 0.02, "P_{n}: fitted {} vs {}", fitted.probs()[n], truth.probs()[n]);
        }
        assert!(diag.residual_rms < 0.02);
    }

    #[test]
    fn fit_preconditions_are_enforced() {
        let cfg = FitConfig::<f64>::reference(6).unwrap();
        // Too few samples.
        let short = RabiSignal::new(taus(10, 1.0), vec![0.3; 10]).unwrap();
        assert!(fit_photon_distribution(&short, &cfg).is_err());
        // Span below one vacuum Rabi period.
        let narrow = RabiSignal::new(taus(40, 0.5 * PI / cfg.lambda_prime), vec![0.3; 40]).unwrap();
        assert!(fit_photon_distribution(&narrow, &cfg).is_err());
    }

    #[test]
    fn wigner_values_of_reference_states() {
        let f = FockSpace::new(30);
        let grid = PhaseGrid::<f64>::square(3.0, 21).unwrap();
        let vac = fock_state::<f64>(f, 0).unwrap().to_density();
        let w = wigner_function(&vac, &grid, Condition::Unconditioned).unwrap();
        // Center point (index of β = 0) is 2/π.
        let center = (21 / 2) * 21 + 21 / 2;
        assert_abs_diff_eq!(w.values()[center], 2.0 / PI, epsilon = 1e-12);
        // Fock |1⟩ at the origin: −2/π.
        let one = fock_state::<f64>(f, 1).unwrap().to_density();
        assert_abs_diff_eq!(wigner_point(&one, C64::new(0.0, 0.0)), -2.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn wigner_normalization_and_q_normalization() {
        let f = FockSpace::new(30);
        let cat = {
            let plus = coherent_state::<f64>(f, C64::new(1.2, 0.0));
            let minus = coherent_state::<f64>(f, C64::new(-1.2, 0.0));
            StateVector::normalized(plus.amplitudes() + minus.amplitudes()).unwrap().to_density()
        };
        let grid = PhaseGrid::<f64>::square(5.0, 81).unwrap();
        let w = wigner_function(&cat, &grid, Condition::Unconditioned).unwrap();
        assert_abs_diff_eq!(w.integral().unwrap(), 1.0, epsilon = 5e-3);
        // The grid corners probe |γ|² = 50 > 30/4, so Q on the same grid
        // must flag the cutoff as untrustworthy there.
        let q_wide = q_function(&cat, &grid, Condition::Unconditioned).unwrap();
        assert!(q_wide.truncation_warning);

        // With a cutoff comfortably above 4·max|γ|² the warning clears and
        // the quadrature closes to 1.
        let big = FockSpace::new(80);
        let vac = vacuum::<f64>(big).to_density();
        let qgrid = PhaseGrid::<f64>::square(3.0, 61).unwrap();
        let q = q_function(&vac, &qgrid, Condition::Unconditioned).unwrap();
        assert!(!q.truncation_warning);
        assert_abs_diff_eq!(q.integral().unwrap(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn conditional_wigner_matches_reduced_state() {
        // P_e·W_e + P_g·W_g must equal the Wigner of the reduced resonator
        // state pointwise when all three come from the same joint ρ.
        let q = QubitSpace::new(2);
        let f = FockSpace::new(18);
        // Entangled-ish joint state: |g⟩|α⟩ + |e⟩|−α⟩ (normalized).
        let a = tensor_state(
            &crate::hilbert::qubit_state::<f64>(q, 0).unwrap(),
            &coherent_state(f, C64::new(1.0, 0.0)),
        );
        let b = tensor_state(
            &crate::hilbert::qubit_state::<f64>(q, 1).unwrap(),
            &coherent_state(f, C64::new(-1.0, 0.0)),
        );
        let joint = StateVector::normalized(a.amplitudes() + b.amplitudes())
            .unwrap()
            .to_density();

        let grid = PhaseGrid::<f64>::square(3.0, 15).unwrap();
        let (p_g, rho_g) = condition_on_level(&joint, q, f, 0).unwrap();
        let (p_e, rho_e) = condition_on_level(&joint, q, f, 1).unwrap();
        let w_g = wigner_function(&rho_g, &grid, Condition::Ground).unwrap();
        let w_e = wigner_function(&rho_e, &grid, Condition::Excited).unwrap();
        let reduced = reduce_to_field(&joint, q, f);
        let w_all = wigner_function(&reduced, &grid, Condition::Unconditioned).unwrap();
        for i in 0..grid.len() {
            let mix = p_e * w_e.values()[i] + p_g * w_g.values()[i];
            assert_abs_diff_eq!(mix, w_all.values()[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn conditional_assembly_from_joint_distributions() {
        // wigner_from_conditional consumes joint P_{j,n} = P_j·P_{n|j}.
        // The parity sum Σ(−1)ⁿ·P_n equals the Wigner value only when the
        // populations of the *displaced* state are complete, so the cutoff
        // must cover max (|β| + |α|)² with room to spare.
        let f = FockSpace::new(45);
        let rho = coherent_state::<f64>(f, C64::new(0.8, -0.3)).to_density();
        let grid = PhaseGrid::<f64>::square(2.0, 11).unwrap();
        let p_j = 0.37;
        let conds = displaced_distributions(&rho, &grid, 44).unwrap();
        let joint: Vec<PhotonDistribution<f64>> = conds
            .iter()
            .map(|pd| {
                PhotonDistribution::new(
                    pd.probs().iter().map(|&p| p * p_j).collect(),
                    1.0,
                )
                .unwrap()
            })
            .collect();
        let w_cond = wigner_from_conditional(&grid, &joint, p_j, Condition::Ground).unwrap();
        let w_direct = wigner_function(&rho, &grid, Condition::Unconditioned).unwrap();
        for i in 0..grid.len() {
            assert_abs_diff_eq!(w_cond.values()[i], w_direct.values()[i], epsilon = 1e-8);
        }
        // Too-rare conditioning is refused.
        assert!(wigner_from_conditional(&grid, &joint, 0.005, Condition::Ground).is_err());
    }

    #[test]
    fn displaced_distributions_probe_fock_content() {
        let f = FockSpace::new(25);
        let rho = vacuum::<f64>(f).to_density();
        let grid = PhaseGrid::<f64>::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let pds = displaced_distributions(&rho, &grid, 6).unwrap();
        // At β: populations are Poisson(|β|²).
        for (i, pd) in pds.iter().enumerate() {
            let beta = grid.point(i);
            let x = beta.norm_sqr();
            for (n, &p) in pd.probs().iter().enumerate() {
                let mut expect = (-x).exp();
                for k in 0..n {
                    expect *= x / (k + 1) as f64;
                }
                assert_abs_diff_eq!(p, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn rotation_correction_behaves() {
        let f = FockSpace::new(15);
        let corr = RotationCorrection::<f64>::reference();
        let rho = coherent_state::<f64>(f, C64::new(1.0, 0.5)).to_density();
        // t = 0: identity.
        let same = rotate_state(&rho, &corr, Condition::Excited, 0.0).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_abs_diff_eq!(
                    (same.matrix()[(i, j)] - rho.matrix()[(i, j)]).norm(),
                    0.0,
                    epsilon = 1e-15
                );
            }
        }
        // Full time: coherence (0,1) rotates by exactly θ_e; photon numbers
        // are untouched.
        let rot = rotate_state(&rho, &corr, Condition::Excited, corr.tf).unwrap();
        let expect = rho.matrix()[(0, 1)] * C64::new((10.6f64).cos(), -(10.6f64).sin()).conj();
        assert_abs_diff_eq!((rot.matrix()[(0, 1)] - expect).norm(), 0.0, epsilon = 1e-12);
        for n in 0..15 {
            assert_abs_diff_eq!(
                rot.matrix()[(n, n)].re,
                rho.matrix()[(n, n)].re,
                epsilon = 1e-12
            );
        }
        // Out-of-range time and unconditioned label are refused.
        assert!(rotate_state(&rho, &corr, Condition::Excited, 4.0).is_err());
        assert!(rotate_state(&rho, &corr, Condition::Unconditioned, 1.0).is_err());
    }

    #[test]
    fn combining_conditionals_validates_probabilities() {
        let f = FockSpace::new(10);
        let rho_e = fock_state::<f64>(f, 1).unwrap().to_density();
        let rho_g = vacuum::<f64>(f).to_density();
        let out = combine_conditional(&rho_e, &rho_g, 0.25, 0.75).unwrap();
        assert_abs_diff_eq!(out.matrix()[(1, 1)].re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.75, epsilon = 1e-12);
        assert!(combine_conditional(&rho_e, &rho_g, 0.25, 0.70).is_err());
        // Purity of the mixture never exceeds the extremes.
        assert!(out.purity() <= rho_e.purity().max(rho_g.purity()) + 1e-12);
    }

    #[test]
    fn grid_geometry_helpers() {
        let g = PhaseGrid::<f64>::square(3.0, 41).unwrap();
        assert_eq!(g.len(), 1681);
        assert_abs_diff_eq!(g.cell_area().unwrap(), 0.15 * 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(g.max_radius(), (18.0f64).sqrt(), epsilon = 1e-12);
        // Default window never shrinks below radius 3.
        let d = PhaseGrid::<f64>::default_for(0.0);
        assert_abs_diff_eq!(d.re_axis()[0], -3.0, epsilon = 1e-12);
        let d = PhaseGrid::<f64>::default_for(16.0);
        assert_abs_diff_eq!(d.re_axis()[0], -8.0, epsilon = 1e-12);
        // Non-uniform axes refuse quadrature.
        let irregular = PhaseGrid::<f64>::new(vec![0.0, 0.5, 2.0], vec![0.0, 1.0]).unwrap();
        assert!(irregular.cell_area().is_err());
        // Decreasing axes are rejected outright.
        assert!(PhaseGrid::<f64>::new(vec![1.0, 0.0], vec![0.0]).is_err());
    }

    #[test]
    fn suggested_cutoff_tracks_poisson_tails() {
        assert_eq!(FitConfig::<f64>::suggest_n_max(0.0), 1);
        let n1 = FitConfig::<f64>::suggest_n_max(1.0);
        // Poisson(1): tail below 1e−3 needs n ≈ 5–6.
        assert!((4..=7).contains(&n1), "n_max({n1}) for nbar = 1");
        let n4 = FitConfig::<f64>::suggest_n_max(4.0);
        assert!(n4 > n1);
    }
}
