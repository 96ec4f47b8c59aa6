//! Bessel functions of the first kind, J_m(x), for the sideband expansion.
//!
//! Small arguments use the defining power series; larger ones use Miller's
//! backward recurrence with the Σ-normalization J_0 + 2J_2 + 2J_4 + … = 1,
//! which is stable where the forward recurrence is not. Absolute error stays
//! below 1e−12 (f64) over the supported range |x| ≤ 30.

use crate::{Error, Real, Result};

/// J_order(x) for order ≥ 0 and |x| ≤ 30.
///
/// Errors on negative order (use J_{−m}(x) = (−1)^m J_m(x) externally) and on
/// arguments outside the supported range.
pub fn bessel_j<T: Real>(order: i64, x: T) -> Result<T> {
    if order < 0 {
        return Err(Error::Domain(format!(
            "negative Bessel order {order}; apply J_-m = (-1)^m J_m externally"
        )));
    }
    if x.abs() > T::lit(30.0) {
        return Err(Error::Domain(format!("|x| = {} outside supported range 30", x.abs())));
    }
    let m = order as usize;
    // J_m(−x) = (−1)^m J_m(x).
    let sign = if x < T::zero() && m % 2 == 1 { -T::one() } else { T::one() };
    let x = x.abs();

    if x == T::zero() {
        return Ok(if m == 0 { T::one() } else { T::zero() });
    }
    let val = if x <= T::lit(2.0) { series(m, x) } else { miller(m, x) };
    Ok(sign * val)
}

/// Power series Σ_k (−1)^k (x/2)^{2k+m} / (k!(k+m)!): fully accurate for
/// small x where no cancellation occurs.
fn series<T: Real>(m: usize, x: T) -> T {
    let half = x * T::lit(0.5);
    let mut term = T::one();
    for j in 1..=m {
        term *= half / T::from_usize(j).unwrap();
        if term == T::zero() {
            return T::zero(); // underflow: the true value is below representability
        }
    }
    let q = -half * half;
    let mut sum = term;
    for k in 1..200 {
        let kf = T::from_usize(k).unwrap();
        let kmf = T::from_usize(k + m).unwrap();
        term *= q / (kf * kmf);
        sum += term;
        if term.abs() <= sum.abs() * T::default_epsilon() {
            break;
        }
    }
    sum
}

/// Miller's algorithm: seed a downward three-term recurrence high above both
/// the order and the turning point, then normalize.
fn miller<T: Real>(m: usize, x: T) -> T {
    // Smallest integer ≥ x; x is bounded by 30, so the scan is trivial.
    let mut x_ceil = 0usize;
    while T::from_usize(x_ceil).unwrap() < x {
        x_ceil += 1;
    }
    let start = m.max(x_ceil) + 34;
    let rescale_at = T::max_value().expect("bounded float").sqrt();
    let inv_rescale = T::one() / rescale_at;

    let seed = T::default_epsilon().powi(3);
    let mut above = T::zero(); // J_{k+1} (arbitrary common scale)
    let mut here = seed; //       J_k
    let mut result = if start == m { here } else { T::zero() };
    let mut norm = if start % 2 == 0 { here + here } else { T::zero() };

    let two_over_x = T::lit(2.0) / x;
    for k in (1..=start).rev() {
        let below = T::from_usize(k).unwrap() * two_over_x * here - above;
        above = here;
        here = below;
        let idx = k - 1;
        if idx == m {
            result = here;
        }
        if idx >= 2 && idx % 2 == 0 {
            norm += here + here;
        }
        if here.abs() > rescale_at {
            here *= inv_rescale;
            above *= inv_rescale;
            result *= inv_rescale;
            norm *= inv_rescale;
        }
    }
    norm += here; // J_0 term
    result / norm
}
