//! Truncated Fock-space and qubit operator algebra.
//!
//! All operators are dense complex matrices on finite-dimensional spaces. The
//! composite-space convention everywhere in this crate is **qubit factor
//! first**: a joint operator is `tensor(qubit_op, field_op)` and a joint basis
//! index decomposes as `idx = level * fock_dim + n`.
//!
//! Qubit basis ordering is (|g⟩, |e⟩, optionally |f⟩) with
//! σ_z = |e⟩⟨e| − |g⟩⟨g|.

mod bessel;

pub use bessel::bessel_j;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::real::{ci, cr};
use crate::{Error, Real, Result};

/// Truncated bosonic mode: Fock levels |0⟩..|cutoff−1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    pub cutoff: usize,
}

impl FockSpace {
    /// Panics if `cutoff < 2`; a one-level "mode" supports no dynamics.
    pub fn new(cutoff: usize) -> Self {
        assert!(cutoff >= 2, "Fock cutoff must be at least 2");
        Self { cutoff }
    }

    pub fn dim(&self) -> usize {
        self.cutoff
    }
}

/// Qubit with 2 levels {|g⟩,|e⟩}, or 3 when the second excited level |f⟩ is
/// retained. Pauli operators embed into the 3-level space acting on the
/// {|g⟩,|e⟩} block with zero rows/columns for |f⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitSpace {
    pub levels: usize,
}

impl QubitSpace {
    /// Panics unless `levels` is 2 or 3.
    pub fn new(levels: usize) -> Self {
        assert!(levels == 2 || levels == 3, "qubit must have 2 or 3 levels");
        Self { levels }
    }

    pub fn dim(&self) -> usize {
        self.levels
    }
}

/// Non-fatal truncation diagnostic attached to operators whose action has
/// leaked appreciable population toward the top of the truncated space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationWarning<T> {
    /// Probed population of the top ~10% of Fock levels.
    pub leakage: T,
}

/// Dense complex matrix operator carrying its dimension and an optional
/// truncation diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix<T: Real> {
    mat: DMatrix<Complex<T>>,
    pub truncation: Option<TruncationWarning<T>>,
}

impl<T: Real> OperatorMatrix<T> {
    /// Wraps a square dense matrix. Panics on non-square input.
    pub fn from_matrix(mat: DMatrix<Complex<T>>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operator must be square");
        Self { mat, truncation: None }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.mat
    }

    /// Hermitian conjugate.
    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint(), truncation: self.truncation }
    }

    pub fn trace(&self) -> Complex<T> {
        self.mat.trace()
    }

    /// Rescaled copy `c * M`.
    pub fn scaled(&self, c: Complex<T>) -> Self {
        let mut mat = self.mat.clone();
        mat.iter_mut().for_each(|x| *x *= c);
        Self { mat, truncation: self.truncation }
    }

    /// Largest element-wise deviation from Hermiticity, max |M − M†|.
    pub fn max_nonhermiticity(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                let d = (self.mat[(i, j)] - self.mat[(j, i)].conj()).norm_sqr();
                worst = worst.max(d);
            }
        }
        worst.sqrt()
    }

    pub fn is_hermitian(&self) -> bool {
        self.max_nonhermiticity() <= T::HERM_TOL
    }

    /// max |M†M − I|, zero for unitary operators.
    pub fn max_nonunitarity(&self) -> T {
        let p = self.mat.adjoint() * &self.mat;
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { Complex::new(T::one(), T::zero()) } else { Complex::new(T::zero(), T::zero()) };
                worst = worst.max((p[(i, j)] - expect).norm_sqr());
            }
        }
        worst.sqrt()
    }

    fn merge_truncation(a: Option<TruncationWarning<T>>, b: Option<TruncationWarning<T>>) -> Option<TruncationWarning<T>> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if x.leakage >= y.leakage { x } else { y }),
            (x, None) => x,
            (None, y) => y,
        }
    }
}

impl<T: Real> std::ops::Add for &OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn add(self, rhs: Self) -> OperatorMatrix<T> {
        OperatorMatrix {
            mat: &self.mat + &rhs.mat,
            truncation: OperatorMatrix::merge_truncation(self.truncation, rhs.truncation),
        }
    }
}

impl<T: Real> std::ops::Sub for &OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn sub(self, rhs: Self) -> OperatorMatrix<T> {
        OperatorMatrix {
            mat: &self.mat - &rhs.mat,
            truncation: OperatorMatrix::merge_truncation(self.truncation, rhs.truncation),
        }
    }
}

impl<T: Real> std::ops::Mul for &OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn mul(self, rhs: Self) -> OperatorMatrix<T> {
        OperatorMatrix {
            mat: &self.mat * &rhs.mat,
            truncation: OperatorMatrix::merge_truncation(self.truncation, rhs.truncation),
        }
    }
}

impl<T: Real> std::ops::Mul<Complex<T>> for &OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn mul(self, c: Complex<T>) -> OperatorMatrix<T> {
        self.scaled(c)
    }
}

/// Pure state on a truncated space. Constructors enforce unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    vec: DVector<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    /// Accepts an already-normalized vector; |norm − 1| ≤ `Real::NORM_TOL`.
    pub fn new(vec: DVector<Complex<T>>) -> Result<Self> {
        let norm = vec.norm();
        if (norm - T::one()).abs() > T::NORM_TOL {
            return Err(Error::Normalization(format!(
                "state norm {} deviates from 1 beyond tolerance",
                norm
            )));
        }
        Ok(Self { vec })
    }

    /// Normalizes the input; errors if the norm is too small to divide by.
    pub fn normalized(vec: DVector<Complex<T>>) -> Result<Self> {
        let norm = vec.norm();
        if norm <= T::lit(1e-30) {
            return Err(Error::Normalization("cannot normalize the zero vector".into()));
        }
        Ok(Self { vec: vec / cr(norm) })
    }

    pub(crate) fn unchecked(vec: DVector<Complex<T>>) -> Self {
        Self { vec }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex<T>> {
        &self.vec
    }

    pub fn norm(&self) -> T {
        self.vec.norm()
    }

    /// Population |⟨i|ψ⟩|² of basis state `i`.
    pub fn probability(&self, i: usize) -> T {
        self.vec[i].norm_sqr()
    }

    /// ⟨ψ|φ⟩.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.vec.dotc(&other.vec)
    }

    /// ⟨ψ|M|ψ⟩.
    pub fn expectation(&self, op: &OperatorMatrix<T>) -> Complex<T> {
        self.vec.dotc(&(op.matrix() * &self.vec))
    }

    /// Rank-one density matrix |ψ⟩⟨ψ|.
    pub fn to_density(&self) -> DensityMatrix<T> {
        let n = self.dim();
        let mut mat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = self.vec[i] * self.vec[j].conj();
            }
        }
        DensityMatrix::unchecked(mat)
    }
}

/// Mixed state: Hermitian, unit-trace, positive semidefinite (within
/// numerical slack) complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    mat: DMatrix<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity (`HERM_TOL`), trace (`TRACE_TOL`) and the
    /// positivity slack (min eigenvalue ≥ −`PSD_SLACK`).
    pub fn new(mat: DMatrix<Complex<T>>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension { expected: mat.nrows(), got: mat.ncols() });
        }
        let cand = Self { mat };
        let herm = OperatorMatrix::from_matrix(cand.mat.clone()).max_nonhermiticity();
        if herm > T::HERM_TOL {
            return Err(Error::Domain(format!(
                "density matrix not Hermitian: max |M - M\u{2020}| = {}",
                herm
            )));
        }
        let tr = cand.mat.trace();
        if (tr.re - T::one()).abs() > T::TRACE_TOL || tr.im.abs() > T::TRACE_TOL {
            return Err(Error::Normalization(format!("density matrix trace {} deviates from 1", tr.re)));
        }
        let min_eig = cand.min_eigenvalue();
        if min_eig < -T::PSD_SLACK {
            return Err(Error::Domain(format!(
                "density matrix not positive semidefinite: min eigenvalue {}",
                min_eig
            )));
        }
        Ok(cand)
    }

    pub fn from_pure(psi: &StateVector<T>) -> Self {
        psi.to_density()
    }

    pub(crate) fn unchecked(mat: DMatrix<Complex<T>>) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.mat
    }

    pub fn trace(&self) -> Complex<T> {
        self.mat.trace()
    }

    /// Tr(ρ²), equals 1 exactly for pure states.
    pub fn purity(&self) -> T {
        let n = self.dim();
        let mut acc = T::zero();
        // Tr(ρ²) = Σ_{ij} ρ_ij ρ_ji = Σ_{ij} |ρ_ij|² for Hermitian ρ.
        for i in 0..n {
            for j in 0..n {
                acc += self.mat[(i, j)].norm_sqr();
            }
        }
        acc
    }

    /// Tr(ρ M).
    pub fn expectation(&self, op: &OperatorMatrix<T>) -> Complex<T> {
        let n = self.dim();
        assert_eq!(n, op.dim(), "operator dimension mismatch");
        let m = op.matrix();
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..n {
            for j in 0..n {
                acc += self.mat[(i, j)] * m[(j, i)];
            }
        }
        acc
    }

    /// Smallest eigenvalue (Hermitian part is used).
    pub fn min_eigenvalue(&self) -> T {
        let h = herm_part(&self.mat);
        let eig = SymmetricEigen::new(h);
        let mut min = T::max_value().unwrap_or_else(T::one);
        for &v in eig.eigenvalues.iter() {
            min = min.min(v);
        }
        min
    }
}

/// Hermitian part (M + M†)/2.
pub(crate) fn herm_part<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let half = cr(T::lit(0.5));
    let mut out = m.adjoint();
    out += m;
    out.iter_mut().for_each(|x| *x *= half);
    out
}

/// Annihilation operator: a[m, m+1] = √(m+1).
pub fn annihilation<T: Real>(space: FockSpace) -> OperatorMatrix<T> {
    let n = space.dim();
    let mut mat = DMatrix::zeros(n, n);
    for m in 0..n - 1 {
        mat[(m, m + 1)] = cr(T::from_usize(m + 1).unwrap().sqrt());
    }
    OperatorMatrix::from_matrix(mat)
}

/// Creation operator a†.
pub fn creation<T: Real>(space: FockSpace) -> OperatorMatrix<T> {
    annihilation::<T>(space).dagger()
}

/// Number operator n = a†a (diagonal 0..cutoff−1).
pub fn number<T: Real>(space: FockSpace) -> OperatorMatrix<T> {
    let n = space.dim();
    let mut mat = DMatrix::zeros(n, n);
    for m in 0..n {
        mat[(m, m)] = cr(T::from_usize(m).unwrap());
    }
    OperatorMatrix::from_matrix(mat)
}

/// Identity operator of the given dimension.
pub fn identity<T: Real>(dim: usize) -> OperatorMatrix<T> {
    OperatorMatrix::from_matrix(DMatrix::identity(dim, dim))
}

/// Fock basis state |n⟩.
pub fn fock_state<T: Real>(space: FockSpace, n: usize) -> Result<StateVector<T>> {
    if n >= space.dim() {
        return Err(Error::Domain(format!("Fock index {} outside cutoff {}", n, space.cutoff)));
    }
    let mut v = DVector::zeros(space.dim());
    v[n] = Complex::new(T::one(), T::zero());
    Ok(StateVector::unchecked(v))
}

/// Vacuum state |0⟩.
pub fn vacuum<T: Real>(space: FockSpace) -> StateVector<T> {
    fock_state(space, 0).expect("cutoff >= 2")
}

/// Qubit basis state |level⟩ (0 = g, 1 = e, 2 = f).
pub fn qubit_state<T: Real>(space: QubitSpace, level: usize) -> Result<StateVector<T>> {
    if level >= space.dim() {
        return Err(Error::Domain(format!("qubit level {} outside {} levels", level, space.levels)));
    }
    let mut v = DVector::zeros(space.dim());
    v[level] = Complex::new(T::one(), T::zero());
    Ok(StateVector::unchecked(v))
}

/// |i⟩⟨j| on a space of the given dimension.
pub fn basis_transition<T: Real>(dim: usize, i: usize, j: usize) -> OperatorMatrix<T> {
    assert!(i < dim && j < dim, "basis index out of range");
    let mut mat = DMatrix::zeros(dim, dim);
    mat[(i, j)] = Complex::new(T::one(), T::zero());
    OperatorMatrix::from_matrix(mat)
}

/// σ_x embedded in the {|g⟩,|e⟩} block (zero |f⟩ row/column for 3 levels).
pub fn sigma_x<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    let mut mat = DMatrix::zeros(q.dim(), q.dim());
    mat[(0, 1)] = cr(T::one());
    mat[(1, 0)] = cr(T::one());
    OperatorMatrix::from_matrix(mat)
}

/// σ_y embedded as for σ_x.
pub fn sigma_y<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    let mut mat = DMatrix::zeros(q.dim(), q.dim());
    mat[(0, 1)] = ci(-T::one());
    mat[(1, 0)] = ci(T::one());
    OperatorMatrix::from_matrix(mat)
}

/// σ_z = |e⟩⟨e| − |g⟩⟨g| (zero on |f⟩).
pub fn sigma_z<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    let mut mat = DMatrix::zeros(q.dim(), q.dim());
    mat[(0, 0)] = cr(-T::one());
    mat[(1, 1)] = cr(T::one());
    OperatorMatrix::from_matrix(mat)
}

/// σ₋ = |g⟩⟨e| (two-level lowering; zero on |f⟩).
pub fn sigma_minus<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    basis_transition(q.dim(), 0, 1)
}

/// σ₊ = |e⟩⟨g|.
pub fn sigma_plus<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    basis_transition(q.dim(), 1, 0)
}

/// Transmon lowering ladder: |g⟩⟨e| for 2 levels, |g⟩⟨e| + √2|e⟩⟨f| for 3.
///
/// The √2 is the harmonic-ladder matrix element of the second excited level;
/// drives coupling through σ₋ acquire it automatically when |f⟩ is retained.
pub fn lowering_ladder<T: Real>(q: QubitSpace) -> OperatorMatrix<T> {
    let mut mat = DMatrix::zeros(q.dim(), q.dim());
    mat[(0, 1)] = cr(T::one());
    if q.levels == 3 {
        mat[(1, 2)] = cr(T::lit(2.0).sqrt());
    }
    OperatorMatrix::from_matrix(mat)
}

/// Field parity exp(iπ a†a) = diag((−1)ⁿ), built in closed form.
pub fn fock_parity<T: Real>(space: FockSpace) -> OperatorMatrix<T> {
    let n = space.dim();
    let mut mat = DMatrix::zeros(n, n);
    for m in 0..n {
        let sign = if m % 2 == 0 { T::one() } else { -T::one() };
        mat[(m, m)] = cr(sign);
    }
    OperatorMatrix::from_matrix(mat)
}

/// Joint parity Π = exp(iπ|e⟩⟨e|) ⊗ exp(iπ a†a) in the qubit-first ordering.
///
/// Π² = I exactly, and Π commutes with the effective Rabi Hamiltonian: the
/// coupling flips both factors' signs at once.
pub fn parity<T: Real>(q: QubitSpace, f: FockSpace) -> OperatorMatrix<T> {
    let dim = q.dim();
    let mut qp = DMatrix::zeros(dim, dim);
    // exp(iπ|e⟩⟨e|): −1 on |e⟩, +1 elsewhere (|f⟩ untouched by the projector).
    for l in 0..dim {
        let sign = if l == 1 { -T::one() } else { T::one() };
        qp[(l, l)] = cr(sign);
    }
    tensor(&OperatorMatrix::from_matrix(qp), &fock_parity(f))
}

/// Matrix exponential via scaling-and-squaring with a Padé approximant.
pub fn expm<T: Real>(op: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    OperatorMatrix { mat: op.matrix().exp(), truncation: op.truncation }
}

/// Probes how much the operator pushes low-lying states toward the cutoff:
/// population of the top ~10% of Fock levels in the image of the vacuum
/// column. Non-fatal; returned as a warning above 1e−6.
fn truncation_probe<T: Real>(u: &DMatrix<Complex<T>>) -> Option<TruncationWarning<T>> {
    let n = u.nrows();
    let top = n.div_ceil(10);
    let mut leak = T::zero();
    for r in (n - top)..n {
        leak += u[(r, 0)].norm_sqr();
    }
    (leak > T::lit(1e-6)).then_some(TruncationWarning { leakage: leak })
}

/// Displacement operator D(α) = exp(αa† − α*a), via matrix exponential.
///
/// Reliable for |α|² ≲ cutoff/4; beyond that (or when the vacuum-column probe
/// leaks) a truncation warning is attached.
pub fn displacement<T: Real>(space: FockSpace, alpha: Complex<T>) -> OperatorMatrix<T> {
    let a = annihilation::<T>(space);
    let gen = &a.dagger().scaled(alpha) - &a.scaled(alpha.conj());
    let mut out = expm(&gen);
    let quarter = T::from_usize(space.cutoff).unwrap() * T::lit(0.25);
    let probe = truncation_probe(out.matrix());
    if alpha.norm_sqr() > quarter {
        let leakage = probe.map(|w| w.leakage).unwrap_or_else(T::zero);
        out.truncation = Some(TruncationWarning { leakage });
    } else {
        out.truncation = probe;
    }
    out
}

/// ⟨m|D(α)|n⟩ for 0 ≤ m, n < dim, where D(α) = exp(αa† − α*a).
///
/// Unlike exponentiating the truncated generator, this band recurrence
/// produces the *infinite-dimensional* operator's elements restricted to the
/// truncated block — the right kernel when the physical operation acts on
/// the full oscillator (measurement kernels, large displacements). The two
/// constructions agree deep inside the cutoff and differ near it.
///
/// For m = n + d (d ≥ 0) the closed form is
/// √(n!/(n+d)!)·α^d·e^{−|α|²/2}·L_n^{(d)}(|α|²), with the mirror element
/// ⟨n|D(α)|n+d⟩ carrying (−α*)^d in place of α^d. The generalized-Laguerre
/// three-term recurrence is carried *with* the prefactor folded in, so every
/// intermediate stays bounded by 1 in magnitude (elements of a unitary).
pub(crate) fn displacement_matrix<T: Real>(alpha: Complex<T>, dim: usize) -> DMatrix<Complex<T>> {
    let mut out = DMatrix::zeros(dim, dim);
    let x = alpha.norm_sqr();
    if x == T::zero() {
        out.fill_with_identity();
        return out;
    }
    let modulus = x.sqrt();
    // Unit phase of the mirror band: (−α*/α)^d built as (−(α*/|α|)²)^d.
    let unit = alpha.conj() / cr(modulus);
    let mirror_step = -unit * unit;

    // seed_d = e^{−x/2}·α^d/√d!, advanced incrementally over d.
    let mut seed = Complex::new((-x * T::lit(0.5)).exp(), T::zero());
    let mut mirror_phase = Complex::new(T::one(), T::zero());

    for d in 0..dim {
        if d > 0 {
            seed *= alpha / cr(T::from_usize(d).unwrap().sqrt());
            mirror_phase *= mirror_step;
        }
        let df = T::from_usize(d).unwrap();
        // c_n = √(n!/(n+d)!)·α^d·e^{−x/2}·L_n^{(d)}(x), via
        // c_{n+1} = [(2n+1+d−x)·r_n·c_n − (n+d)·r_n·r_{n−1}·c_{n−1}]/(n+1)
        // with r_n = √((n+1)/(n+1+d)).
        let mut c_prev = Complex::new(T::zero(), T::zero());
        let mut c = seed;
        let mut r_prev = T::zero();
        for n in 0..dim - d {
            out[(n + d, n)] = c;
            if d > 0 {
                out[(n, n + d)] = c * mirror_phase;
            }
            let nf = T::from_usize(n).unwrap();
            let r_n = ((nf + T::one()) / (nf + T::one() + df)).sqrt();
            let next = ((cr(T::lit(2.0) * nf + T::one() + df - x) * c * cr(r_n))
                - (c_prev * cr((nf + df) * r_n * r_prev)))
                / cr(nf + T::one());
            c_prev = c;
            c = next;
            r_prev = r_n;
        }
    }
    out
}

/// Squeezing operator S(r) = exp[r(a² − a†²)/2], via matrix exponential.
///
/// For r > 0 this squeezes the X = a + a† quadrature: Var(X) = e^{−2r} in
/// S(r)|0⟩. Reliable for |r| ≲ 2 at cutoff ≥ 30; warning rules as for
/// [`displacement`].
pub fn squeeze<T: Real>(space: FockSpace, r: T) -> OperatorMatrix<T> {
    let a = annihilation::<T>(space);
    let half_r = cr(r * T::lit(0.5));
    let a2 = &a * &a;
    let adag2 = a2.dagger();
    let gen = &a2.scaled(half_r) - &adag2.scaled(half_r);
    let mut out = expm(&gen);
    let probe = truncation_probe(out.matrix());
    if r.abs() > T::lit(2.0) {
        let leakage = probe.map(|w| w.leakage).unwrap_or_else(T::zero);
        out.truncation = Some(TruncationWarning { leakage });
    } else {
        out.truncation = probe;
    }
    out
}

/// Coherent state D(α)|0⟩, renormalized against truncation loss.
pub fn coherent_state<T: Real>(space: FockSpace, alpha: Complex<T>) -> StateVector<T> {
    let d = displacement(space, alpha);
    let v = d.matrix() * vacuum::<T>(space).amplitudes();
    StateVector::normalized(v).expect("displaced vacuum has nonzero norm")
}

/// Kronecker product; by crate convention the first factor is the qubit.
pub fn tensor<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    OperatorMatrix {
        mat: a.matrix().kronecker(b.matrix()),
        truncation: OperatorMatrix::merge_truncation(a.truncation, b.truncation),
    }
}

/// Kronecker product of states, qubit factor first.
pub fn tensor_state<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> StateVector<T> {
    StateVector::unchecked(a.amplitudes().kronecker(b.amplitudes()))
}

/// Partial trace over the qubit of a joint (qubit ⊗ field) density matrix.
pub fn reduce_to_field<T: Real>(
    rho: &DensityMatrix<T>,
    q: QubitSpace,
    f: FockSpace,
) -> DensityMatrix<T> {
    let nf = f.dim();
    assert_eq!(rho.dim(), q.dim() * nf, "joint dimension mismatch");
    let m = rho.matrix();
    let mut out = DMatrix::zeros(nf, nf);
    for l in 0..q.dim() {
        let off = l * nf;
        for i in 0..nf {
            for j in 0..nf {
                out[(i, j)] += m[(off + i, off + j)];
            }
        }
    }
    DensityMatrix::unchecked(out)
}

/// Conditions a joint (qubit ⊗ field) state on a qubit measurement outcome.
///
/// Returns the outcome probability P_level = Tr⟨level|ρ|level⟩ and the
/// normalized field state ⟨level|ρ|level⟩ / P_level. Errors when the
/// probability is too small to normalize against.
pub fn condition_on_level<T: Real>(
    rho: &DensityMatrix<T>,
    q: QubitSpace,
    f: FockSpace,
    level: usize,
) -> Result<(T, DensityMatrix<T>)> {
    let nf = f.dim();
    assert_eq!(rho.dim(), q.dim() * nf, "joint dimension mismatch");
    if level >= q.dim() {
        return Err(Error::Domain(format!("qubit level {} outside {} levels", level, q.levels)));
    }
    let m = rho.matrix();
    let off = level * nf;
    let mut block = DMatrix::zeros(nf, nf);
    for i in 0..nf {
        for j in 0..nf {
            block[(i, j)] = m[(off + i, off + j)];
        }
    }
    let p = block.trace().re;
    if p <= T::lit(1e-12) {
        return Err(Error::Normalization(format!(
            "conditional probability {} too small to normalize",
            p
        )));
    }
    let inv = cr(T::one() / p);
    block.iter_mut().for_each(|x| *x *= inv);
    Ok((p, DensityMatrix::unchecked(block)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type C64 = Complex<f64>;

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn annihilation_matches_definition_at_cutoff_2() {
        let a = annihilation::<f64>(FockSpace::new(2));
        let expect = DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
            C64::new(0.0, 0.0), C64::new(0.0, 0.0),
        ]);
        assert_eq!(a.matrix(), &expect);
    }

    #[test]
    fn annihilation_lowers_fock_states() {
        let f = FockSpace::new(4);
        let a = annihilation::<f64>(f);
        let three = fock_state::<f64>(f, 3).unwrap();
        let lowered = a.matrix() * three.amplitudes();
        assert_abs_diff_eq!(lowered[2].re, 3.0_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(lowered[3].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let f = FockSpace::new(20);
        let a = annihilation::<f64>(f);
        let comm = &(&a * &a.dagger()) - &(&a.dagger() * &a);
        // [a, a†] = 1 on the lowest cutoff−1 levels; the top level is where
        // truncation breaks the algebra.
        for m in 0..19 {
            assert_abs_diff_eq!(comm.matrix()[(m, m)].re, 1.0, epsilon = 1e-12);
        }
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    assert!(comm.matrix()[(i, j)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn displacement_of_zero_is_identity() {
        let f = FockSpace::new(12);
        let d = displacement::<f64>(f, C64::new(0.0, 0.0));
        assert!(max_abs_diff(d.matrix(), &DMatrix::identity(12, 12)) < 1e-13);
        assert!(d.truncation.is_none());
    }

    #[test]
    fn displaced_vacuum_has_poisson_photon_statistics() {
        let f = FockSpace::new(30);
        let alpha = 1.0_f64;
        let st = coherent_state::<f64>(f, C64::new(alpha, 0.0));
        let mut log_fact = 0.0;
        for n in 0..20 {
            if n > 0 {
                log_fact += (n as f64).ln();
            }
            let poisson = (-alpha * alpha + 2.0 * (n as f64) * alpha.ln() - log_fact).exp();
            assert_abs_diff_eq!(st.probability(n), poisson, epsilon = 1e-8);
        }
    }

    #[test]
    fn displacement_inverse_composes_to_identity() {
        let f = FockSpace::new(30);
        let beta = C64::new(0.7, 0.3);
        let prod = &displacement::<f64>(f, -beta) * &displacement::<f64>(f, beta);
        assert!(max_abs_diff(prod.matrix(), &DMatrix::identity(30, 30)) < 1e-9);
    }

    #[test]
    fn squeeze_of_zero_is_identity() {
        let f = FockSpace::new(12);
        let s = squeeze::<f64>(f, 0.0);
        assert!(max_abs_diff(s.matrix(), &DMatrix::identity(12, 12)) < 1e-13);
    }

    #[test]
    fn squeezed_vacuum_quadrature_variance() {
        let f = FockSpace::new(40);
        let r = 0.3_f64;
        let sv = StateVector::new(squeeze::<f64>(f, r).matrix() * vacuum::<f64>(f).amplitudes()).unwrap();
        let a = annihilation::<f64>(f);
        let x = &a + &a.dagger();
        let mean_x = sv.expectation(&x).re;
        let mean_x2 = sv.expectation(&(&x * &x)).re;
        let var = mean_x2 - mean_x * mean_x;
        // Vacuum Var(X) = 1 in this scaling; S(r) multiplies it by e^{−2r}.
        assert_abs_diff_eq!(var, (-2.0 * r).exp(), epsilon = 1e-6);
    }

    #[test]
    fn squeeze_inverse_composes_to_identity() {
        let f = FockSpace::new(30);
        let prod = &squeeze::<f64>(f, 0.4) * &squeeze::<f64>(f, -0.4);
        assert!(max_abs_diff(prod.matrix(), &DMatrix::identity(30, 30)) < 1e-9);
    }

    #[test]
    fn truncation_warning_fires_for_oversized_displacement() {
        let f = FockSpace::new(10);
        let d = displacement::<f64>(f, C64::new(3.0, 0.0)); // |α|² = 9 ≫ 10/4
        assert!(d.truncation.is_some());
        let ok = displacement::<f64>(f, C64::new(0.3, 0.0));
        assert!(ok.truncation.is_none());
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let i2 = identity::<f64>(2);
        let i3 = identity::<f64>(3);
        assert_eq!(tensor(&i2, &i3).matrix(), &DMatrix::<C64>::identity(6, 6));
    }

    #[test]
    fn tensor_mixed_product_property() {
        let q = QubitSpace::new(2);
        let f = FockSpace::new(5);
        let lhs = &tensor(&sigma_z::<f64>(q), &identity(f.dim())) * &tensor(&identity(q.dim()), &annihilation(f));
        let rhs = tensor(&sigma_z::<f64>(q), &annihilation(f));
        assert!(max_abs_diff(lhs.matrix(), rhs.matrix()) < 1e-14);
    }

    #[test]
    fn tensor_trace_is_multiplicative() {
        // Two fixed Hermitian matrices.
        let a = OperatorMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[
            C64::new(1.5, 0.0), C64::new(0.2, -0.7),
            C64::new(0.2, 0.7), C64::new(-0.3, 0.0),
        ]));
        let b = OperatorMatrix::from_matrix(DMatrix::from_row_slice(3, 3, &[
            C64::new(0.4, 0.0), C64::new(0.1, 0.5), C64::new(0.0, -0.2),
            C64::new(0.1, -0.5), C64::new(2.0, 0.0), C64::new(0.3, 0.0),
            C64::new(0.0, 0.2), C64::new(0.3, 0.0), C64::new(-1.1, 0.0),
        ]));
        let t = tensor(&a, &b).trace();
        let prod = a.trace() * b.trace();
        assert_abs_diff_eq!(t.re, prod.re, epsilon = 1e-12);
        assert_abs_diff_eq!(t.im, prod.im, epsilon = 1e-12);
    }

    #[test]
    fn parity_squares_to_identity_and_matches_exponential_route() {
        let q = QubitSpace::new(2);
        let f = FockSpace::new(16);
        let pi_op = parity::<f64>(q, f);
        let sq = &pi_op * &pi_op;
        assert!(max_abs_diff(sq.matrix(), &DMatrix::identity(32, 32)) < 1e-10);

        // Independent route: actual matrix exponentials of iπ n and iπ|e⟩⟨e|.
        let i_pi = C64::new(0.0, std::f64::consts::PI);
        let field_route = expm(&number::<f64>(f).scaled(i_pi));
        let qubit_route = expm(&basis_transition::<f64>(2, 1, 1).scaled(i_pi));
        let joint = tensor(&qubit_route, &field_route);
        assert!(max_abs_diff(pi_op.matrix(), joint.matrix()) < 1e-10);
    }

    #[test]
    fn coherent_state_is_annihilation_eigenstate() {
        let f = FockSpace::new(30);
        let alpha = C64::new(1.2, -0.8); // |α|² = 2.08 ≤ 7.5
        let st = coherent_state::<f64>(f, alpha);
        let lowered = annihilation::<f64>(f).matrix() * st.amplitudes();
        let expected = st.amplitudes().map(|c| c * alpha);
        let diff: f64 = (&lowered - &expected).norm();
        assert!(diff < 1e-6, "a|α⟩ deviates from α|α⟩ by {diff}");
    }

    #[test]
    fn lowering_ladder_embeds_previous_levels() {
        let l2 = lowering_ladder::<f64>(QubitSpace::new(2));
        assert_eq!(l2.matrix(), sigma_minus::<f64>(QubitSpace::new(2)).matrix());
        let l3 = lowering_ladder::<f64>(QubitSpace::new(3));
        assert_abs_diff_eq!(l3.matrix()[(1, 2)].re, 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(l3.matrix()[(0, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn state_vector_rejects_bad_norm() {
        let v = DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, 0.0)]);
        assert!(StateVector::new(v).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let f = FockSpace::new(4);
        let pure = DensityMatrix::from_pure(&vacuum::<f64>(f));
        assert!(DensityMatrix::new(pure.matrix().clone()).is_ok());

        let mut bad = pure.matrix().clone();
        bad[(0, 1)] = C64::new(0.3, 0.0); // breaks Hermiticity
        assert!(DensityMatrix::new(bad).is_err());

        let mut neg = DMatrix::<C64>::zeros(4, 4);
        neg[(0, 0)] = C64::new(1.5, 0.0);
        neg[(1, 1)] = C64::new(-0.5, 0.0); // trace 1 but indefinite
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn conditioning_and_reduction_are_consistent() {
        let q = QubitSpace::new(2);
        let f = FockSpace::new(6);
        // |ψ⟩ = (|g⟩⊗|0⟩ + |e⟩⊗|1⟩)/√2, entangled so the blocks differ.
        let g0 = tensor_state(&qubit_state::<f64>(q, 0).unwrap(), &fock_state(f, 0).unwrap());
        let e1 = tensor_state(&qubit_state::<f64>(q, 1).unwrap(), &fock_state(f, 1).unwrap());
        let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = StateVector::new(g0.amplitudes() * amp + e1.amplitudes() * amp).unwrap();
        let rho = psi.to_density();

        let (pg, rho_g) = condition_on_level(&rho, q, f, 0).unwrap();
        let (pe, rho_e) = condition_on_level(&rho, q, f, 1).unwrap();
        assert_abs_diff_eq!(pg, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pe, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho_g.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho_e.matrix()[(1, 1)].re, 1.0, epsilon = 1e-12);

        let reduced = reduce_to_field(&rho, q, f);
        assert_abs_diff_eq!(reduced.trace().re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced.matrix()[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn operators_are_deterministic() {
        let f = FockSpace::new(24);
        let d1 = displacement::<f64>(f, C64::new(0.9, -0.4));
        let d2 = displacement::<f64>(f, C64::new(0.9, -0.4));
        assert_eq!(d1.matrix(), d2.matrix());
    }
}
