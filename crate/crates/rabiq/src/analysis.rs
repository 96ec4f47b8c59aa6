//! State-quality metrics and calibration searches: nonclassical volume of a
//! Wigner function, order-parameter peak extraction from Husimi data,
//! Uhlmann fidelity, the mean-squared fitting-error metric, and the
//! parabolic phase-scan optimizer used to calibrate drive phases.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::hilbert::DensityMatrix;
use crate::optimize::{levenberg_marquardt, linear_least_squares, LmOptions};
use crate::tomography::{QGrid, WignerGrid};
use crate::{Error, Real, Result};

/// Nonclassical volume of a Wigner function together with the quadrature
/// diagnostics behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeReport<T> {
    /// max(raw, 0): the reported nonclassical volume.
    pub volume: T,
    /// (∫|W| − 1)/2 before clamping; for a normalized W this equals the
    /// total quasiprobability in the regions where W < 0, and only
    /// truncation or noise can push it below zero.
    pub raw: T,
    /// ∫W d²β — should be 1 when the grid covers the state.
    pub integral: T,
    /// |∫W − 1| exceeded 5e−3: the grid is too small or too coarse for the
    /// state and `volume` is biased.
    pub coverage_warning: bool,
}

/// Integrates a Wigner grid into its nonclassical volume — zero for any
/// state with a nonnegative Wigner function (vacuum, coherent, thermal)
/// and positive when interference fringes dip below zero.
pub fn nonclassical_volume<T: Real>(w: &WignerGrid<T>) -> Result<VolumeReport<T>> {
    let integral = w.integral()?;
    let abs_integral = w.abs_integral()?;
    let raw = (abs_integral - T::one()) * T::lit(0.5);
    Ok(VolumeReport {
        volume: raw.max(T::zero()),
        raw,
        integral,
        coverage_warning: (integral - T::one()).abs() > T::lit(5e-3),
    })
}

/// The two local maxima of a Husimi function, refined by symmetric-Gaussian
/// fits. `heights[0]` and `gaussian_widths[0]` belong to `alpha_plus`.
///
/// `alpha_plus` is the peak with the larger real part (larger imaginary
/// part when the real parts agree within 1e−9). When only one maximum
/// exists, or two maxima are closer than 1.5× the wider fitted width, the
/// pair is degenerate: both coordinates equal the dominant fitted center
/// and `resolved` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPair<T> {
    pub alpha_plus: Complex<T>,
    pub alpha_minus: Complex<T>,
    pub heights: [T; 2],
    pub gaussian_widths: [T; 2],
    pub resolved: bool,
}

#[derive(Clone, Copy)]
struct FittedPeak<T> {
    center: Complex<T>,
    height: T,
    width: T,
}

/// Symmetric-Gaussian refinement of one grid-search maximum in its 7×7
/// neighborhood (clipped at the grid edge): model
/// h·exp(−|β−c|²/2w²) + b over five parameters (h, Re c, Im c, w, b).
fn refine_peak<T: Real>(q: &QGrid<T>, row: usize, col: usize) -> FittedPeak<T> {
    let g = q.grid();
    let n_re = g.n_re();
    let r0 = row.saturating_sub(3);
    let r1 = (row + 3).min(g.n_im() - 1);
    let c0 = col.saturating_sub(3);
    let c1 = (col + 3).min(n_re - 1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vs = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            xs.push(g.re_axis()[c]);
            ys.push(g.im_axis()[r]);
            vs.push(q.values()[r * n_re + c]);
        }
    }
    let peak_v = q.values()[row * n_re + col];
    let base0 = vs.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    let spacing = g.re_axis()[1] - g.re_axis()[0];
    let h0 = (peak_v - base0).max(T::lit(1e-9));
    let w0 = spacing * T::lit(2.0);
    let fallback = FittedPeak {
        center: Complex::new(g.re_axis()[col], g.im_axis()[row]),
        height: h0,
        width: w0,
    };

    let n_res = vs.len();
    let x0 = DVector::from_vec(vec![h0, fallback.center.re, fallback.center.im, w0, base0]);
    let residuals = |p: &DVector<T>, out: &mut DVector<T>| {
        let (h, cx, cy, wdt, b) = (p[0], p[1], p[2], p[3], p[4]);
        let two_w2 = (wdt * wdt * T::lit(2.0)).max(T::lit(1e-12));
        for k in 0..n_res {
            let dx = xs[k] - cx;
            let dy = ys[k] - cy;
            out[k] = h * (-(dx * dx + dy * dy) / two_w2).exp() + b - vs[k];
        }
    };
    match levenberg_marquardt(residuals, n_res, x0, &LmOptions::default()) {
        Ok(res) => FittedPeak {
            center: Complex::new(res.params[1], res.params[2]),
            height: res.params[0].abs().max(T::lit(1e-12)),
            width: res.params[3].abs().max(spacing * T::lit(1e-3)),
        },
        Err(_) => fallback,
    }
}

fn assemble_pair<T: Real>(a: FittedPeak<T>, b: FittedPeak<T>, resolved: bool) -> PeakPair<T> {
    let a_is_plus = if (a.center.re - b.center.re).abs() > T::lit(1e-9) {
        a.center.re > b.center.re
    } else {
        a.center.im >= b.center.im
    };
    let (p, m) = if a_is_plus { (a, b) } else { (b, a) };
    PeakPair {
        alpha_plus: p.center,
        alpha_minus: m.center,
        heights: [p.height, m.height],
        gaussian_widths: [p.width, m.width],
        resolved,
    }
}

/// Locates the order-parameter peaks of a Husimi function: a grid search
/// for up to two local maxima followed by a symmetric-Gaussian fit around
/// each. Requires at least a 31×31 grid; flat input (range < 1e−9) carries
/// no peak information and is refused.
pub fn find_order_parameters<T: Real>(q: &QGrid<T>) -> Result<PeakPair<T>> {
    let g = q.grid();
    let (n_re, n_im) = (g.n_re(), g.n_im());
    if n_re < 31 || n_im < 31 {
        return Err(Error::Domain(format!(
            "peak search needs at least a 31x31 grid, got {}x{}",
            n_re, n_im
        )));
    }
    let vals = q.values();
    let max = vals.iter().fold(-T::max_value().unwrap(), |a, &b| a.max(b));
    let min = vals.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    if max - min < T::lit(1e-9) {
        return Err(Error::NoPeak("Husimi data is flat; no maxima to locate".into()));
    }

    // Local maxima above the noise floor (2% of the data range), boundary
    // cells included with their in-grid neighbors.
    let floor = min + (max - min) * T::lit(0.02);
    let mut candidates: Vec<(usize, usize, T)> = Vec::new();
    for r in 0..n_im {
        for c in 0..n_re {
            let v = vals[r * n_re + c];
            if v <= floor {
                continue;
            }
            let mut is_max = true;
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= n_im as i64 || nc >= n_re as i64 {
                        continue;
                    }
                    if vals[nr as usize * n_re + nc as usize] > v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                candidates.push((r, c, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("Q values are finite"));
    // Plateau ties produce adjacent duplicates; keep maxima at least three
    // cells apart (Chebyshev), tallest first, at most two.
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for &(r, c, _) in &candidates {
        if picked.iter().all(|&(pr, pc)| pr.abs_diff(r).max(pc.abs_diff(c)) >= 3) {
            picked.push((r, c));
            if picked.len() == 2 {
                break;
            }
        }
    }
    match picked.len() {
        0 => Err(Error::NoPeak("no interior maximum above the 2% noise floor".into())),
        1 => {
            let peak = refine_peak(q, picked[0].0, picked[0].1);
            Ok(assemble_pair(peak, peak, false))
        }
        _ => {
            let a = refine_peak(q, picked[0].0, picked[0].1);
            let b = refine_peak(q, picked[1].0, picked[1].1);
            let separation = (a.center - b.center).norm_sqr().sqrt();
            if separation < T::lit(1.5) * a.width.max(b.width) {
                let dominant = if a.height >= b.height { a } else { b };
                Ok(assemble_pair(dominant, dominant, false))
            } else {
                Ok(assemble_pair(a, b, true))
            }
        }
    }
}

/// Mean squared difference Σ(measuredᵢ − idealᵢ)²/N between two curves.
pub fn fitting_error<T: Real>(measured: &[T], ideal: &[T]) -> Result<T> {
    if measured.len() != ideal.len() {
        return Err(Error::LengthMismatch { left: measured.len(), right: ideal.len() });
    }
    if measured.is_empty() {
        return Err(Error::Domain("fitting error of empty curves is undefined".into()));
    }
    let n = T::from_usize(measured.len()).unwrap();
    let ss = measured
        .iter()
        .zip(ideal)
        .fold(T::zero(), |acc, (&m, &i)| acc + (m - i) * (m - i));
    Ok(ss / n)
}

/// Result of a drive-phase scan: per-phase fitting errors, the fitted
/// parabola `c₀ + c₁φ + c₂φ²`, and its vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanResult<T> {
    pub phases: Vec<T>,
    pub errors: Vec<T>,
    /// Vertex of the fitted parabola; always inside the scanned interval.
    pub best_phase: T,
    /// [c₀, c₁, c₂] of the least-squares parabola.
    pub parabola_coeffs: [T; 3],
}

/// Finds the drive phase minimizing the fitting error against an ideal
/// curve: runs `experiment` at every phase, scores it with
/// [`fitting_error`], least-squares fits a parabola to (phase, error), and
/// returns the vertex.
///
/// Needs at least five strictly increasing phases bracketing the minimum.
/// A downward-opening parabola means the scan found no interior minimum
/// (concavity error); a vertex outside the scanned interval means the
/// bracket missed it (domain error).
pub fn scan_phase<T, F>(phases: &[T], mut experiment: F, ideal: &[T]) -> Result<PhaseScanResult<T>>
where
    T: Real,
    F: FnMut(T) -> Result<Vec<T>>,
{
    if phases.len() < 5 {
        return Err(Error::Domain(format!(
            "phase scan needs at least 5 phases, got {}",
            phases.len()
        )));
    }
    for w in phases.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain("scan phases must be strictly increasing".into()));
        }
    }
    let mut errors = Vec::with_capacity(phases.len());
    for &phi in phases {
        let curve = experiment(phi)?;
        errors.push(fitting_error(&curve, ideal)?);
    }

    let mut design = DMatrix::zeros(phases.len(), 3);
    for (i, &phi) in phases.iter().enumerate() {
        design[(i, 0)] = T::one();
        design[(i, 1)] = phi;
        design[(i, 2)] = phi * phi;
    }
    let rhs = DVector::from_vec(errors.clone());
    let coeffs = linear_least_squares(&design, &rhs)?;
    let (c0, c1, c2) = (coeffs[0], coeffs[1], coeffs[2]);
    if c2 <= T::zero() {
        return Err(Error::Concavity(format!(
            "fitted parabola opens downward (c2 = {}); no interior minimum",
            c2
        )));
    }
    let best_phase = -c1 / (T::lit(2.0) * c2);
    if best_phase < phases[0] || best_phase > phases[phases.len() - 1] {
        return Err(Error::Domain(format!(
            "parabola vertex {} lies outside the scanned interval [{}, {}]",
            best_phase,
            phases[0],
            phases[phases.len() - 1]
        )));
    }
    Ok(PhaseScanResult {
        phases: phases.to_vec(),
        errors,
        best_phase,
        parabola_coeffs: [c0, c1, c2],
    })
}

/// Hermitian square root. Eigenvalues below 1e−13 of the largest are
/// numerical noise and are clipped to zero — the square root would amplify
/// an O(ε) eigenvalue into an O(√ε) contribution otherwise.
fn sqrt_psd<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let n = m.nrows();
    let herm = (m + m.adjoint()) * Complex::new(T::lit(0.5), T::zero());
    let eig = SymmetricEigen::new(herm);
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b));
    let cut = lmax * T::lit(1e-13);
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for j in 0..n {
        let l = eig.eigenvalues[j];
        let root = if l > cut { l.sqrt() } else { T::zero() };
        let s = Complex::new(root, T::zero());
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * v.adjoint()
}

/// Uhlmann fidelity F(ρ, σ) = (Tr√(√ρ σ √ρ))² ∈ [0, 1]; reduces to
/// ⟨ψ|ρ|ψ⟩ when σ = |ψ⟩⟨ψ| is pure.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> Result<T> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension { expected: rho.dim(), got: sigma.dim() });
    }
    let s = sqrt_psd(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let herm = (&inner + inner.adjoint()) * Complex::new(T::lit(0.5), T::zero());
    let eig = SymmetricEigen::new(herm);
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b));
    let cut = lmax * T::lit(1e-13);
    let trace_sqrt = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &l| if l > cut { acc + l.sqrt() } else { acc });
    Ok((trace_sqrt * trace_sqrt).max(T::zero()).min(T::one()))
}
