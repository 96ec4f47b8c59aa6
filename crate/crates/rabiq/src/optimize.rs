//! Internal least-squares machinery shared by the tomography fitters and the
//! peak/parabola fits in `analysis`: a dense Levenberg-Marquardt loop with a
//! numeric Jacobian, plus an SVD-backed linear solver.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Real, Result};

pub(crate) struct LmOptions<T> {
    pub max_iter: usize,
    /// Stop when max |∇χ²| drops below this.
    pub tol_grad: T,
    /// Stop when the step is this small relative to the parameter norm.
    pub tol_step: T,
    /// Stop when the relative χ² reduction over an accepted step is below this.
    pub tol_reduction: T,
    /// Initial damping.
    pub lambda0: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol_grad: T::lit(1e-12),
            tol_step: T::lit(1e-10),
            tol_reduction: T::lit(1e-10),
            lambda0: T::lit(1e-3),
        }
    }
}

pub(crate) struct LmResult<T: Real> {
    pub params: DVector<T>,
    /// Final χ² = Σᵢ rᵢ².
    pub chi2: T,
    pub iterations: usize,
    pub converged: bool,
    /// Jacobian at the solution, for covariance estimates.
    pub jacobian: DMatrix<T>,
}

/// Central-difference Jacobian of the residual vector.
fn numeric_jacobian<T: Real>(
    residuals: &mut dyn FnMut(&DVector<T>, &mut DVector<T>),
    x: &DVector<T>,
    n_res: usize,
) -> DMatrix<T> {
    let n_par = x.len();
    let mut jac = DMatrix::zeros(n_res, n_par);
    let mut plus = DVector::zeros(n_res);
    let mut minus = DVector::zeros(n_res);
    let base_step = T::lit(1e-6);
    let mut xp = x.clone();
    for j in 0..n_par {
        let h = base_step * x[j].abs().max(T::one());
        let orig = xp[j];
        xp[j] = orig + h;
        residuals(&xp, &mut plus);
        xp[j] = orig - h;
        residuals(&xp, &mut minus);
        xp[j] = orig;
        let inv = T::one() / (T::lit(2.0) * h);
        for i in 0..n_res {
            jac[(i, j)] = (plus[i] - minus[i]) * inv;
        }
    }
    jac
}

/// Dense Levenberg-Marquardt minimization of ½Σᵢ rᵢ(x)² with a numeric
/// Jacobian and multiplicative damping on the normal-equation diagonal.
pub(crate) fn levenberg_marquardt<T: Real>(
    mut residuals: impl FnMut(&DVector<T>, &mut DVector<T>),
    n_res: usize,
    x0: DVector<T>,
    opts: &LmOptions<T>,
) -> Result<LmResult<T>> {
    let n_par = x0.len();
    if n_res < n_par {
        return Err(Error::IllPosed(format!(
            "{n_res} residuals cannot determine {n_par} parameters"
        )));
    }
    let mut x = x0;
    let mut r = DVector::zeros(n_res);
    residuals(&x, &mut r);
    let mut chi2 = r.norm_squared();
    let mut lambda = opts.lambda0;
    let mut jac = numeric_jacobian(&mut residuals, &x, n_res);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.tol_grad {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;

        // Inner damping loop: grow λ until a step reduces χ².
        let mut accepted = false;
        for _ in 0..50 {
            let mut a = jtj.clone();
            for d in 0..n_par {
                let scale = jtj[(d, d)].max(T::lit(1e-12));
                a[(d, d)] += lambda * scale;
            }
            let step = match Cholesky::new(a) {
                Some(chol) => chol.solve(&(-&grad)),
                None => {
                    lambda *= T::lit(10.0);
                    continue;
                }
            };
            let x_new = &x + &step;
            let mut r_new = DVector::zeros(n_res);
            residuals(&x_new, &mut r_new);
            let chi2_new = r_new.norm_squared();
            if chi2_new.is_finite() && chi2_new < chi2 {
                let reduction = (chi2 - chi2_new) / chi2.max(T::lit(1e-300));
                let step_small = step.norm() <= opts.tol_step * (x.norm() + opts.tol_step);
                x = x_new;
                r = r_new;
                chi2 = chi2_new;
                lambda = (lambda * T::lit(0.33)).max(T::lit(1e-12));
                accepted = true;
                if reduction < opts.tol_reduction || step_small {
                    converged = true;
                }
                break;
            }
            lambda *= T::lit(10.0);
            if lambda > T::lit(1e12) {
                break;
            }
        }
        if !accepted {
            // Damping saturated: local minimum to working precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = numeric_jacobian(&mut residuals, &x, n_res);
    }

    let jacobian = numeric_jacobian(&mut residuals, &x, n_res);
    Ok(LmResult { params: x, chi2, iterations, converged, jacobian })
}

/// Minimum-norm least-squares solution of A x ≈ b via SVD.
pub(crate) fn linear_least_squares<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    if a.nrows() != b.len() {
        return Err(Error::LengthMismatch { left: a.nrows(), right: b.len() });
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, T::lit(1e-12))
        .map_err(|e| Error::IllPosed(format!("linear least squares failed: {e}")))
}

/// Condition number estimate of AᵀA from the singular values of A.
pub(crate) fn normal_condition<T: Real>(a: &DMatrix<T>) -> T {
    let svd = a.clone().svd(false, false);
    let mut smax = T::zero();
    let mut smin = T::max_value().unwrap_or_else(T::one);
    for &s in svd.singular_values.iter() {
        smax = smax.max(s);
        smin = smin.min(s);
    }
    if smin <= T::zero() {
        T::max_value().unwrap_or_else(T::one)
    } else {
        (smax / smin) * (smax / smin)
    }
}
