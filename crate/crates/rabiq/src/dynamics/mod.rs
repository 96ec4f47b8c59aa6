//! Time evolution: unitary propagation under time-dependent Hamiltonians and
//! Lindblad master-equation integration, plus the quench protocols built on
//! them.
//!
//! Two integrators share the recording machinery:
//!
//! * **Unitary**: fixed-step midpoint-exponential — ψ(t+dt) =
//!   exp(−iH(t+dt/2)dt)ψ(t), the exponential applied to the state vector by a
//!   scaled Taylor series (never materializing the propagator).
//! * **Master**: classical fourth-order Runge-Kutta on
//!   ρ̇ = −i[H,ρ] + Σ_k r_k (L_kρL_k† − ½{L_k†L_k, ρ}), with the state
//!   re-Hermitized after every step.
//!
//! Both exploit the banded structure of the operators through
//! [`sparse::SparseOp`]; Hamiltonians enter either as a sum of static sparse
//! terms with time-dependent coefficients (the quench drivers) or as an
//! arbitrary dense closure (the public `evolve_*` entry points).

mod sparse;

use nalgebra::{Complex, DMatrix, DVector};

pub(crate) use sparse::SparseOp;

use crate::hilbert::{
    self, annihilation, lowering_ladder, sigma_z, tensor, DensityMatrix, FockSpace,
    OperatorMatrix, QubitSpace, StateVector,
};
use crate::model::{schedule_at, DriveParams, QuenchSchedule};
use crate::real::cr;
use crate::{Error, Real, Result};

/// How a flat state index decomposes into subsystem labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceLayout {
    /// Qubit ⊗ field with qubit-first ordering: idx = level·dim(field) + n.
    Joint { qubit: QubitSpace, field: FockSpace },
    /// A single bosonic mode.
    FieldOnly { field: FockSpace },
}

impl SpaceLayout {
    pub fn dim(&self) -> usize {
        match self {
            SpaceLayout::Joint { qubit, field } => qubit.dim() * field.dim(),
            SpaceLayout::FieldOnly { field } => field.dim(),
        }
    }

    fn field_dim(&self) -> usize {
        match self {
            SpaceLayout::Joint { field, .. } => field.dim(),
            SpaceLayout::FieldOnly { field } => field.dim(),
        }
    }

    fn levels(&self) -> usize {
        match self {
            SpaceLayout::Joint { qubit, .. } => qubit.dim(),
            SpaceLayout::FieldOnly { .. } => 1,
        }
    }
}

/// Per-microsecond decoherence rates of the standard channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceRates<T> {
    /// Resonator photon loss κ.
    pub kappa: T,
    /// Qubit relaxation γ₁.
    pub gamma1: T,
    /// Qubit dephasing γ_φ.
    pub gamma_phi: T,
}

impl<T: Real> DecoherenceRates<T> {
    /// Typical circuit-QED values: κ = 1/25 µs⁻¹, γ₁ = 1/20 µs⁻¹,
    /// γ_φ = 1/5 µs⁻¹.
    pub fn typical() -> Self {
        Self { kappa: T::lit(1.0 / 25.0), gamma1: T::lit(1.0 / 20.0), gamma_phi: T::lit(0.2) }
    }

    pub fn zero() -> Self {
        Self { kappa: T::zero(), gamma1: T::zero(), gamma_phi: T::zero() }
    }
}

/// Collapse channels for the Lindblad dissipator as (operator, rate) pairs.
/// Zero-rate channels are dropped at construction.
#[derive(Debug, Clone)]
pub struct LindbladSpec<T: Real> {
    channels: Vec<(OperatorMatrix<T>, T)>,
}

impl<T: Real> LindbladSpec<T> {
    /// Validates rates (finite, ≥ 0) and drops zero-rate channels.
    pub fn new(channels: Vec<(OperatorMatrix<T>, T)>) -> Result<Self> {
        for (_, rate) in &channels {
            if !rate.is_finite() || *rate < T::zero() {
                return Err(Error::Domain(format!("collapse rate {} must be finite and >= 0", rate)));
            }
        }
        Ok(Self { channels: channels.into_iter().filter(|(_, r)| *r > T::zero()).collect() })
    }

    /// No dissipation.
    pub fn none() -> Self {
        Self { channels: Vec::new() }
    }

    /// The standard channel set on a joint qubit ⊗ field space: resonator
    /// decay (I⊗a, κ), qubit relaxation (σ₋-ladder⊗I, γ₁), qubit dephasing
    /// (σ_z⊗I, γ_φ).
    pub fn standard(rates: &DecoherenceRates<T>, q: QubitSpace, f: FockSpace) -> Result<Self> {
        let id_f = hilbert::identity::<T>(f.dim());
        let id_q = hilbert::identity::<T>(q.dim());
        Self::new(vec![
            (tensor(&id_q, &annihilation(f)), rates.kappa),
            (tensor(&lowering_ladder(q), &id_f), rates.gamma1),
            (tensor(&sigma_z(q), &id_f), rates.gamma_phi),
        ])
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[(OperatorMatrix<T>, T)] {
        &self.channels
    }
}

/// Recording request: times at which scalar observables are sampled, and the
/// (typically much sparser) times at which full density matrices are kept.
/// Decoupling the two keeps memory bounded when observables are sampled
/// densely on large spaces.
#[derive(Debug, Clone, Default)]
pub struct RecordSpec<T> {
    pub observable_times: Vec<T>,
    pub state_times: Vec<T>,
}

impl<T: Real> RecordSpec<T> {
    /// Observables and states at the same grid.
    pub fn dense(times: &[T]) -> Self {
        Self { observable_times: times.to_vec(), state_times: times.to_vec() }
    }

    /// Observables only; states kept at no intermediate time.
    pub fn observables_only(times: &[T]) -> Self {
        Self { observable_times: times.to_vec(), state_times: Vec::new() }
    }

    fn validate(list: &[T], lo: T, hi: T, what: &str) -> Result<()> {
        for w in list.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(format!("{what} must be strictly increasing")));
            }
        }
        if let (Some(&first), Some(&last)) = (list.first(), list.last()) {
            if first < lo || last > hi + hi.abs().max(T::one()) * T::lit(1e-12) {
                return Err(Error::Domain(format!(
                    "{what} must lie within [{}, {}]",
                    lo, hi
                )));
            }
        }
        Ok(())
    }
}

/// Integrator step control. `f_max` is the highest cycle frequency (cycles
/// per µs) present in H(t); the stability rule caps the step at
/// 1/(50·f_max). A caller-supplied `step` that violates the rule is an
/// error; `substep_factor` scales the resolved step down (e.g. 0.5 for
/// convergence checks).
#[derive(Debug, Clone, Copy)]
pub struct StepOptions<T> {
    pub f_max: T,
    pub step: Option<T>,
    pub substep_factor: T,
}

impl<T: Real> Default for StepOptions<T> {
    fn default() -> Self {
        Self { f_max: T::zero(), step: None, substep_factor: T::one() }
    }
}

impl<T: Real> StepOptions<T> {
    pub fn with_f_max(f_max: T) -> Self {
        Self { f_max, ..Self::default() }
    }

    fn resolve(&self, span: T, open: bool) -> Result<T> {
        if !(self.substep_factor > T::zero() && self.substep_factor <= T::one()) {
            return Err(Error::StepSize(format!(
                "substep factor {} must be in (0, 1]",
                self.substep_factor
            )));
        }
        let rule = if self.f_max > T::zero() {
            Some(T::one() / (T::lit(50.0) * self.f_max))
        } else {
            None
        };
        let gross = match self.step {
            Some(s) => {
                if !(s > T::zero()) {
                    return Err(Error::StepSize(format!("step {} must be positive", s)));
                }
                if let Some(r) = rule {
                    if s > r * (T::one() + T::lit(1e-12)) {
                        return Err(Error::StepSize(format!(
                            "step {} exceeds the stability rule 1/(50 f_max) = {}",
                            s, r
                        )));
                    }
                }
                s
            }
            None => {
                let base = if open { span / T::lit(20_000.0) } else { span };
                match rule {
                    Some(r) => base.min(r),
                    None => base,
                }
            }
        };
        Ok(gross * self.substep_factor)
    }
}

/// Named scalar time series sampled at the observable record times. For
/// field-only layouts the qubit populations are reported as P_g ≡ 1 and the
/// parity is the field parity ⟨(−1)ⁿ⟩.
#[derive(Debug, Clone, Default)]
pub struct ObservableSeries<T> {
    /// Mean photon number ⟨a†a⟩.
    pub nbar: Vec<T>,
    pub p_g: Vec<T>,
    pub p_e: Vec<T>,
    pub p_f: Vec<T>,
    /// Joint parity ⟨Π⟩ (field parity for field-only layouts).
    pub parity: Vec<T>,
}

/// Integration health report.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionDiagnostics<T> {
    /// Step actually used (µs).
    pub step: T,
    pub steps_taken: usize,
    /// Unitary runs: max |‖ψ‖ − 1| at record times.
    pub norm_drift: T,
    /// Master runs: max |Tr ρ − 1| at record times.
    pub trace_drift: T,
    /// Most negative density-matrix eigenvalue seen at audited times.
    pub min_eigenvalue: Option<T>,
    /// min_eigenvalue < −1e−6 (non-fatal).
    pub positivity_alarm: bool,
    /// Max population of the top Fock level at observable times.
    pub truncation_max: T,
    /// truncation_max exceeded 1e−4 (non-fatal).
    pub truncation_alarm: bool,
}

impl<T: Real> Default for EvolutionDiagnostics<T> {
    fn default() -> Self {
        Self {
            step: T::zero(),
            steps_taken: 0,
            norm_drift: T::zero(),
            trace_drift: T::zero(),
            min_eigenvalue: None,
            positivity_alarm: false,
            truncation_max: T::zero(),
            truncation_alarm: false,
        }
    }
}

/// Result of one evolution: observable series on `times`, full states on
/// `state_times` (a subset chosen by the [`RecordSpec`]), the final state,
/// and diagnostics.
#[derive(Debug, Clone)]
pub struct EvolutionResult<T: Real> {
    pub times: Vec<T>,
    pub observables: ObservableSeries<T>,
    pub state_times: Vec<T>,
    pub states: Vec<DensityMatrix<T>>,
    pub final_state: DensityMatrix<T>,
    /// Final pure state for unitary runs.
    pub final_pure: Option<StateVector<T>>,
    pub diagnostics: EvolutionDiagnostics<T>,
}

// ---------------------------------------------------------------------------
// Hamiltonian sources
// ---------------------------------------------------------------------------

type CoeffFn<T> = Box<dyn Fn(T) -> Complex<T> + Send + Sync>;

/// Hamiltonian as Σ_k c_k(t)·A_k with static sparse A_k: the fast path used
/// by the quench drivers.
pub(crate) struct SparseHamiltonian<T: Real> {
    dim: usize,
    terms: Vec<(SparseOp<T>, CoeffFn<T>)>,
}

impl<T: Real> SparseHamiltonian<T> {
    pub(crate) fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub(crate) fn push(&mut self, op: &OperatorMatrix<T>, coeff: CoeffFn<T>) {
        assert_eq!(op.dim(), self.dim, "term dimension mismatch");
        self.terms.push((SparseOp::from_dense(op.matrix()), coeff));
    }

    fn dense_at(&self, t: T) -> DMatrix<Complex<T>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (op, c) in &self.terms {
            let coeff = c(t);
            let d = op.to_dense();
            m.zip_apply(&d, |acc, v| *acc += coeff * v);
        }
        m
    }
}

/// A Hamiltonian source the engines can sample: structured sparse terms or an
/// arbitrary dense closure.
enum HamSource<'a, T: Real> {
    Terms(&'a SparseHamiltonian<T>),
    Dense(&'a dyn Fn(T) -> OperatorMatrix<T>),
}

/// Mutable per-run workspace caching the most recent sample of the source.
struct HamWork<T: Real> {
    coeffs: Vec<Complex<T>>,
    dense: DMatrix<Complex<T>>,
    sparse: Option<SparseOp<T>>,
}

impl<'a, T: Real> HamSource<'a, T> {
    fn dim(&self) -> usize {
        match self {
            HamSource::Terms(h) => h.dim,
            HamSource::Dense(f) => f(T::zero()).dim(),
        }
    }

    fn workspace(&self, need_sparse: bool) -> HamWork<T> {
        let dim = self.dim();
        HamWork {
            coeffs: Vec::new(),
            dense: DMatrix::zeros(if matches!(self, HamSource::Dense(_)) { dim } else { 0 }, if matches!(self, HamSource::Dense(_)) { dim } else { 0 }),
            sparse: if need_sparse && matches!(self, HamSource::Dense(_)) {
                Some(SparseOp::from_dense(&DMatrix::zeros(dim, dim)))
            } else {
                None
            },
        }
    }

    /// Samples the source at `t`, refreshing the workspace caches.
    fn prepare(&self, t: T, w: &mut HamWork<T>) {
        match self {
            HamSource::Terms(h) => {
                w.coeffs.clear();
                w.coeffs.extend(h.terms.iter().map(|(_, c)| c(t)));
            }
            HamSource::Dense(f) => {
                w.dense = f(t).into_matrix();
                if w.sparse.is_some() {
                    w.sparse = Some(SparseOp::from_dense(&w.dense));
                }
            }
        }
    }

    /// out += scale · H(t_prepared) · v
    fn apply_add(&self, w: &HamWork<T>, v: &DVector<Complex<T>>, out: &mut DVector<Complex<T>>, scale: Complex<T>) {
        match self {
            HamSource::Terms(h) => {
                for ((op, _), &c) in h.terms.iter().zip(&w.coeffs) {
                    op.apply_add(v, out, scale * c);
                }
            }
            HamSource::Dense(_) => {
                out.gemv(scale, &w.dense, v, Complex::new(T::one(), T::zero()));
            }
        }
    }

    /// out += −i[H(t_prepared), ρ]
    fn commutator_add(&self, w: &HamWork<T>, rho: &DMatrix<Complex<T>>, out: &mut DMatrix<Complex<T>>) {
        let minus_i = Complex::new(T::zero(), -T::one());
        let plus_i = Complex::new(T::zero(), T::one());
        match self {
            HamSource::Terms(h) => {
                for ((op, _), &c) in h.terms.iter().zip(&w.coeffs) {
                    op.left_mul_add(rho, out, minus_i * c);
                    op.right_mul_add(rho, out, plus_i * c);
                }
            }
            HamSource::Dense(_) => {
                let s = w.sparse.as_ref().expect("sparse cache prepared for master runs");
                s.left_mul_add(rho, out, minus_i);
                s.right_mul_add(rho, out, plus_i);
            }
        }
    }

    /// Upper bound on ‖H(t_prepared)‖ for Taylor scaling.
    fn norm_bound(&self, w: &HamWork<T>) -> T {
        match self {
            HamSource::Terms(h) => {
                let mut acc = T::zero();
                for ((op, _), &c) in h.terms.iter().zip(&w.coeffs) {
                    acc += c.norm_sqr().sqrt() * op.norm_one();
                }
                acc
            }
            HamSource::Dense(_) => {
                let n = w.dense.nrows();
                let mut worst = T::zero();
                for j in 0..n {
                    let mut s = T::zero();
                    for i in 0..n {
                        s += w.dense[(i, j)].norm_sqr().sqrt();
                    }
                    worst = worst.max(s);
                }
                worst
            }
        }
    }

    /// Fresh dense sample (Hermiticity audits only).
    fn dense_sample(&self, t: T) -> DMatrix<Complex<T>> {
        match self {
            HamSource::Terms(h) => h.dense_at(t),
            HamSource::Dense(f) => f(t).into_matrix(),
        }
    }
}

fn audit_hermitian<T: Real>(h: &DMatrix<Complex<T>>, t: T) -> Result<()> {
    let op = OperatorMatrix::from_matrix(h.clone());
    let scale = h.iter().map(|x| x.norm_sqr().sqrt()).fold(T::zero(), |a, b| a.max(b));
    if op.max_nonhermiticity() > T::HERM_TOL * (T::one() + scale) {
        return Err(Error::Domain(format!("Hamiltonian is not Hermitian at t = {}", t)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Record plan
// ---------------------------------------------------------------------------

struct RecordPoint<T> {
    t: T,
    observe: bool,
    store: bool,
}

fn build_plan<T: Real>(record: &RecordSpec<T>, lo: T, hi: T) -> Result<Vec<RecordPoint<T>>> {
    RecordSpec::validate(&record.observable_times, lo, hi, "observable times")?;
    RecordSpec::validate(&record.state_times, lo, hi, "state times")?;
    if record.observable_times.is_empty() && record.state_times.is_empty() {
        return Err(Error::Domain("nothing to record: both time lists are empty".into()));
    }
    let coincide = |a: T, b: T| (a - b).abs() <= (a.abs().max(b.abs()).max(T::one())) * T::lit(1e-12);
    let mut plan: Vec<RecordPoint<T>> = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let obs = &record.observable_times;
    let sts = &record.state_times;
    while i < obs.len() || j < sts.len() {
        if j >= sts.len() || (i < obs.len() && obs[i] < sts[j] && !coincide(obs[i], sts[j])) {
            plan.push(RecordPoint { t: obs[i], observe: true, store: false });
            i += 1;
        } else if i >= obs.len() || (sts[j] < obs[i] && !coincide(obs[i], sts[j])) {
            plan.push(RecordPoint { t: sts[j], observe: false, store: true });
            j += 1;
        } else {
            plan.push(RecordPoint { t: obs[i], observe: true, store: true });
            i += 1;
            j += 1;
        }
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Observable extraction
// ---------------------------------------------------------------------------

fn push_observables_from_diag<T: Real>(
    diag: impl Fn(usize) -> T,
    layout: SpaceLayout,
    series: &mut ObservableSeries<T>,
) -> T {
    let nf = layout.field_dim();
    let levels = layout.levels();
    let mut nbar = T::zero();
    let mut p = [T::zero(); 3];
    let mut parity = T::zero();
    let mut top = T::zero();
    for l in 0..levels {
        for n in 0..nf {
            let w = diag(l * nf + n);
            nbar += T::from_usize(n).unwrap() * w;
            p[l] += w;
            let mut sign = if n % 2 == 0 { T::one() } else { -T::one() };
            if matches!(layout, SpaceLayout::Joint { .. }) && l == 1 {
                sign = -sign;
            }
            parity += sign * w;
            if n == nf - 1 {
                top += w;
            }
        }
    }
    if matches!(layout, SpaceLayout::FieldOnly { .. }) {
        p[0] = T::one();
    }
    series.nbar.push(nbar);
    series.p_g.push(p[0]);
    series.p_e.push(p[1]);
    series.p_f.push(p[2]);
    series.parity.push(parity);
    top
}

// ---------------------------------------------------------------------------
// Unitary engine
// ---------------------------------------------------------------------------

/// One midpoint-exponential substep: ψ ← exp(−i·H·dt)·ψ by scaled Taylor.
fn taylor_substep<T: Real>(
    source: &HamSource<'_, T>,
    work: &HamWork<T>,
    dt: T,
    psi: &mut DVector<Complex<T>>,
    term: &mut DVector<Complex<T>>,
    next: &mut DVector<Complex<T>>,
) {
    let theta = source.norm_bound(work) * dt;
    let mut segments = 1usize;
    while T::from_usize(segments).unwrap() < theta {
        segments += 1;
    }
    let h = dt / T::from_usize(segments).unwrap();
    for _ in 0..segments {
        term.copy_from(psi);
        for k in 1..=64usize {
            next.fill(Complex::new(T::zero(), T::zero()));
            let factor = Complex::new(T::zero(), -h / T::from_usize(k).unwrap());
            source.apply_add(work, term, next, factor);
            std::mem::swap(term, next);
            *psi += &*term;
            if term.norm() <= T::lit(1e-16) * psi.norm() {
                break;
            }
        }
    }
}

fn integrate_unitary<T: Real>(
    source: &HamSource<'_, T>,
    psi0: &StateVector<T>,
    t0: T,
    record: &RecordSpec<T>,
    opts: &StepOptions<T>,
    layout: SpaceLayout,
) -> Result<EvolutionResult<T>> {
    let dim = layout.dim();
    if psi0.dim() != dim {
        return Err(Error::Dimension { expected: dim, got: psi0.dim() });
    }
    let last = record
        .observable_times
        .last()
        .copied()
        .unwrap_or(t0)
        .max(record.state_times.last().copied().unwrap_or(t0));
    let plan = build_plan(record, t0, last)?;
    let span = last - t0;
    let step = if span > T::zero() { opts.resolve(span, false)? } else { T::one() };

    let mut work = source.workspace(false);
    source.prepare(t0, &mut work);
    audit_hermitian(&source.dense_sample(t0), t0)?;

    let mut psi = psi0.amplitudes().clone();
    let mut term = DVector::zeros(dim);
    let mut next = DVector::zeros(dim);
    let mut t = t0;
    let eps_t = step * T::lit(1e-9);

    let mut diagnostics = EvolutionDiagnostics { step, ..Default::default() };
    let mut series = ObservableSeries::default();
    let mut times = Vec::new();
    let mut state_times = Vec::new();
    let mut states = Vec::new();

    for point in &plan {
        while t < point.t - eps_t {
            let dt = step.min(point.t - t);
            source.prepare(t + dt * T::lit(0.5), &mut work);
            taylor_substep(source, &work, dt, &mut psi, &mut term, &mut next);
            diagnostics.steps_taken += 1;
            t += dt;
        }
        t = point.t;
        let norm = psi.norm();
        diagnostics.norm_drift = diagnostics.norm_drift.max((norm - T::one()).abs());
        if point.observe {
            times.push(point.t);
            let top = push_observables_from_diag(|i| psi[i].norm_sqr(), layout, &mut series);
            diagnostics.truncation_max = diagnostics.truncation_max.max(top);
        }
        if point.store {
            audit_hermitian(&source.dense_sample(point.t), point.t)?;
            state_times.push(point.t);
            states.push(StateVector::unchecked(psi.clone()).to_density());
        }
    }

    if diagnostics.norm_drift > T::lit(1e-8) {
        return Err(Error::Normalization(format!(
            "unitary norm drift {} exceeds 1e-8; step too coarse",
            diagnostics.norm_drift
        )));
    }
    diagnostics.truncation_alarm = diagnostics.truncation_max > T::lit(1e-4);

    let final_pure = StateVector::normalized(psi.clone())?;
    let final_state = StateVector::unchecked(psi).to_density();
    // Pure states are positive by construction.
    diagnostics.min_eigenvalue = Some(T::zero());

    Ok(EvolutionResult {
        times,
        observables: series,
        state_times,
        states,
        final_state,
        final_pure: Some(final_pure),
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Master engine
// ---------------------------------------------------------------------------

struct PreparedChannel<T: Real> {
    l: SparseOp<T>,
    l_dag: SparseOp<T>,
    /// L†L.
    m: SparseOp<T>,
    rate: T,
}

fn prepare_channels<T: Real>(spec: &LindbladSpec<T>, dim: usize) -> Result<Vec<PreparedChannel<T>>> {
    spec.channels()
        .iter()
        .map(|(op, rate)| {
            if op.dim() != dim {
                return Err(Error::Dimension { expected: dim, got: op.dim() });
            }
            let l = SparseOp::from_dense(op.matrix());
            let l_dag = l.dagger();
            let m_dense = op.matrix().adjoint() * op.matrix();
            Ok(PreparedChannel { l, l_dag, m: SparseOp::from_dense(&m_dense), rate: *rate })
        })
        .collect()
}

/// out = −i[H,ρ] + Σ_k r_k (L_kρL_k† − ½{L_k†L_k, ρ})
fn lindblad_rhs<T: Real>(
    source: &HamSource<'_, T>,
    work: &HamWork<T>,
    channels: &[PreparedChannel<T>],
    rho: &DMatrix<Complex<T>>,
    out: &mut DMatrix<Complex<T>>,
    tmp: &mut DMatrix<Complex<T>>,
) {
    out.fill(Complex::new(T::zero(), T::zero()));
    source.commutator_add(work, rho, out);
    for ch in channels {
        tmp.fill(Complex::new(T::zero(), T::zero()));
        ch.l.left_mul_add(rho, tmp, Complex::new(T::one(), T::zero()));
        ch.l_dag.right_mul_add(tmp, out, cr(ch.rate));
        let neg_half = cr(-ch.rate * T::lit(0.5));
        ch.m.left_mul_add(rho, out, neg_half);
        ch.m.right_mul_add(rho, out, neg_half);
    }
}

fn hermitize<T: Real>(rho: &mut DMatrix<Complex<T>>) {
    let n = rho.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in i..n {
            let a = rho[(i, j)];
            let b = rho[(j, i)];
            let m = Complex::new((a.re + b.re) * half, (a.im - b.im) * half);
            rho[(i, j)] = m;
            rho[(j, i)] = m.conj();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn integrate_master<T: Real>(
    source: &HamSource<'_, T>,
    spec: &LindbladSpec<T>,
    rho0: &DensityMatrix<T>,
    t0: T,
    record: &RecordSpec<T>,
    opts: &StepOptions<T>,
    layout: SpaceLayout,
) -> Result<EvolutionResult<T>> {
    let dim = layout.dim();
    if rho0.dim() != dim {
        return Err(Error::Dimension { expected: dim, got: rho0.dim() });
    }
    let channels = prepare_channels(spec, dim)?;
    let last = record
        .observable_times
        .last()
        .copied()
        .unwrap_or(t0)
        .max(record.state_times.last().copied().unwrap_or(t0));
    let plan = build_plan(record, t0, last)?;
    let span = last - t0;
    let step = if span > T::zero() { opts.resolve(span, true)? } else { T::one() };

    let mut work = source.workspace(true);
    source.prepare(t0, &mut work);
    audit_hermitian(&source.dense_sample(t0), t0)?;

    let mut rho = rho0.matrix().clone();
    let mut k1 = DMatrix::zeros(dim, dim);
    let mut k2 = DMatrix::zeros(dim, dim);
    let mut k3 = DMatrix::zeros(dim, dim);
    let mut k4 = DMatrix::zeros(dim, dim);
    let mut stage = DMatrix::zeros(dim, dim);
    let mut tmp = DMatrix::zeros(dim, dim);

    let mut t = t0;
    let eps_t = step * T::lit(1e-9);
    let mut diagnostics = EvolutionDiagnostics { step, ..Default::default() };
    let mut series = ObservableSeries::default();
    let mut times = Vec::new();
    let mut state_times = Vec::new();
    let mut states = Vec::new();
    let mut min_eig: Option<T> = None;

    for point in &plan {
        while t < point.t - eps_t {
            let dt = step.min(point.t - t);
            let half = dt * T::lit(0.5);

            source.prepare(t, &mut work);
            lindblad_rhs(source, &work, &channels, &rho, &mut k1, &mut tmp);

            stage.copy_from(&rho);
            stage.zip_apply(&k1, |acc, v| *acc += v * cr(half));
            source.prepare(t + half, &mut work);
            lindblad_rhs(source, &work, &channels, &stage, &mut k2, &mut tmp);

            stage.copy_from(&rho);
            stage.zip_apply(&k2, |acc, v| *acc += v * cr(half));
            lindblad_rhs(source, &work, &channels, &stage, &mut k3, &mut tmp);

            stage.copy_from(&rho);
            stage.zip_apply(&k3, |acc, v| *acc += v * cr(dt));
            source.prepare(t + dt, &mut work);
            lindblad_rhs(source, &work, &channels, &stage, &mut k4, &mut tmp);

            let w = dt / T::lit(6.0);
            for idx in 0..rho.len() {
                rho[idx] += (k1[idx] + (k2[idx] + k3[idx]) * cr(T::lit(2.0)) + k4[idx]) * cr(w);
            }
            hermitize(&mut rho);
            diagnostics.steps_taken += 1;
            t += dt;
        }
        t = point.t;
        let trace: T = (0..dim).map(|i| rho[(i, i)].re).fold(T::zero(), |a, b| a + b);
        diagnostics.trace_drift = diagnostics.trace_drift.max((trace - T::one()).abs());
        if point.observe {
            times.push(point.t);
            let top = push_observables_from_diag(|i| rho[(i, i)].re, layout, &mut series);
            diagnostics.truncation_max = diagnostics.truncation_max.max(top);
        }
        if point.store {
            audit_hermitian(&source.dense_sample(point.t), point.t)?;
            let snapshot = DensityMatrix::unchecked(rho.clone());
            let eig = snapshot.min_eigenvalue();
            min_eig = Some(match min_eig {
                Some(prev) => prev.min(eig),
                None => eig,
            });
            state_times.push(point.t);
            states.push(snapshot);
        }
    }

    let final_state = DensityMatrix::unchecked(rho);
    let eig = final_state.min_eigenvalue();
    min_eig = Some(match min_eig {
        Some(prev) => prev.min(eig),
        None => eig,
    });
    diagnostics.min_eigenvalue = min_eig;
    diagnostics.positivity_alarm = min_eig.is_some_and(|e| e < -T::lit(1e-6));
    diagnostics.truncation_alarm = diagnostics.truncation_max > T::lit(1e-4);

    Ok(EvolutionResult {
        times,
        observables: series,
        state_times,
        states,
        final_state,
        final_pure: None,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Unitary propagation of `psi0` (given at `t_grid[0]`) under `h_of_t`,
/// recording observables and states at every grid time.
///
/// Precondition (per the integrator contract): `h_of_t` is Hermitian at all
/// sample times — audited at record times — and `opts.f_max` honestly bounds
/// the highest frequency in H for time-dependent Hamiltonians. Norm drift
/// beyond 1e−8 is an error.
pub fn evolve_unitary<T: Real>(
    h_of_t: &dyn Fn(T) -> OperatorMatrix<T>,
    psi0: &StateVector<T>,
    t_grid: &[T],
    layout: SpaceLayout,
    opts: &StepOptions<T>,
) -> Result<EvolutionResult<T>> {
    if t_grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    let record = RecordSpec::dense(t_grid);
    integrate_unitary(&HamSource::Dense(h_of_t), psi0, t_grid[0], &record, opts, layout)
}

/// Lindblad master-equation integration of `rho0` (given at `t_grid[0]`)
/// with collapse channels `spec`, recording at every grid time. Preconditions
/// as [`evolve_unitary`]; the state is re-Hermitized each step, and a
/// positivity alarm (min eigenvalue < −1e−6) is reported in the diagnostics
/// rather than raised as an error.
pub fn evolve_master<T: Real>(
    h_of_t: &dyn Fn(T) -> OperatorMatrix<T>,
    spec: &LindbladSpec<T>,
    rho0: &DensityMatrix<T>,
    t_grid: &[T],
    layout: SpaceLayout,
    opts: &StepOptions<T>,
) -> Result<EvolutionResult<T>> {
    if t_grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    let record = RecordSpec::dense(t_grid);
    integrate_master(&HamSource::Dense(h_of_t), spec, rho0, t_grid[0], &record, opts, layout)
}

/// Builds the effective-model quench Hamiltonian Σ terms with schedule-driven
/// coefficients: H(t) = ½Ω(t)·σ_z⊗I + δ(t)·I⊗n + η·σ_x⊗(a+a†).
fn effective_quench_terms<T: Real>(s: &QuenchSchedule<T>, space: FockSpace) -> SparseHamiltonian<T> {
    let q = QubitSpace::new(2);
    let nf = space.dim();
    let id_q = hilbert::identity::<T>(q.dim());
    let id_f = hilbert::identity::<T>(nf);
    let a = annihilation::<T>(space);
    let x_field = &a + &a.dagger();

    let sched = *s;
    let omega_of = move |t: T| {
        let tc = t.max(T::zero()).min(sched.tf);
        let xi = sched.xi0 + (sched.xi_max - sched.xi0) * tc / sched.tf;
        T::lit(2.0) * sched.eta * sched.ratio.sqrt() / xi
    };

    let mut h = SparseHamiltonian::new(q.dim() * nf);
    let om1 = omega_of;
    h.push(
        &tensor(&sigma_z(q), &id_f),
        Box::new(move |t| cr(om1(t) * T::lit(0.5))),
    );
    let om2 = omega_of;
    let ratio = s.ratio;
    h.push(
        &tensor(&id_q, &hilbert::number(space)),
        Box::new(move |t| cr(om2(t) / ratio)),
    );
    let eta = s.eta;
    h.push(&tensor(&hilbert::sigma_x(q), &x_field), Box::new(move |t| {
        let _ = t;
        cr(eta)
    }));
    h
}

/// Runs the linear-ξ quench from vacuum ⊗ |g⟩ under the effective Rabi
/// Hamiltonian with dissipation `l`, recording per `record`.
///
/// With an empty `l` the closed-system path (midpoint-exponential on the
/// state vector) is used; otherwise the RK4 master integrator. The step is
/// resolved from the spectral bound of H along the schedule unless
/// `opts.f_max` is already set.
pub fn quench_run<T: Real>(
    s: &QuenchSchedule<T>,
    l: &LindbladSpec<T>,
    space: FockSpace,
    record: &RecordSpec<T>,
    opts: &StepOptions<T>,
) -> Result<EvolutionResult<T>> {
    s.validate()?;
    let q = QubitSpace::new(2);
    let layout = SpaceLayout::Joint { qubit: q, field: space };
    let ham = effective_quench_terms(s, space);

    let mut resolved = *opts;
    if resolved.f_max <= T::zero() {
        let mut work = HamSource::Terms(&ham).workspace(false);
        let mut worst = T::zero();
        for k in 0..=4 {
            let t = s.tf * T::from_usize(k).unwrap() / T::lit(4.0);
            HamSource::Terms(&ham).prepare(t, &mut work);
            worst = worst.max(HamSource::Terms(&ham).norm_bound(&work));
        }
        resolved.f_max = worst / T::two_pi();
    }

    RecordSpec::validate(&record.observable_times, T::zero(), s.tf, "observable times")?;
    RecordSpec::validate(&record.state_times, T::zero(), s.tf, "state times")?;

    let g0 = hilbert::qubit_state::<T>(q, 0)?;
    let psi0 = hilbert::tensor_state(&g0, &hilbert::vacuum(space));
    let source = HamSource::Terms(&ham);
    if l.is_empty() {
        integrate_unitary(&source, &psi0, T::zero(), record, &resolved, layout)
    } else {
        integrate_master(&source, l, &psi0.to_density(), T::zero(), record, &resolved, layout)
    }
}

/// Drive parameters the full-model quench uses at time `t`: the base set
/// with ε₂(t) = 2Ω(t), resonator frequency δ(t) from the schedule (the
/// static-frame Stark correction is absorbed by setting δ directly), and the
/// slow-modulation frequency on resonance with the drive-induced precession,
/// ν₂ = B₀ = 2A·J₀(μ).
pub fn lab_drive_at<T: Real>(
    base: &DriveParams<T>,
    s: &QuenchSchedule<T>,
    t: T,
) -> Result<DriveParams<T>> {
    let e = schedule_at(s, t)?;
    let mut p = *base;
    p.eps2 = T::lit(2.0) * e.omega;
    p.delta = e.delta;
    p.nu2 = T::lit(2.0) * p.drive_amp * hilbert::bessel_j(0, p.mu())?;
    Ok(p)
}

/// Builds the lab-frame quench Hamiltonian as static sparse terms with
/// time-dependent coefficients (identical to assembling
/// `lab_frame_hamiltonian(lab_drive_at(t))` densely, but O(nnz) to sample).
fn lab_quench_terms<T: Real>(
    base: &DriveParams<T>,
    s: &QuenchSchedule<T>,
    q: QubitSpace,
    space: FockSpace,
) -> Result<SparseHamiltonian<T>> {
    let nf = space.dim();
    let id_q = hilbert::identity::<T>(q.dim());
    let id_f = hilbert::identity::<T>(nf);
    let nu2 = T::lit(2.0) * base.drive_amp * hilbert::bessel_j(0, base.mu())?;

    let sched = *s;
    let eff = move |t: T| {
        let tc = t.max(T::zero()).min(sched.tf);
        let xi = sched.xi0 + (sched.xi_max - sched.xi0) * tc / sched.tf;
        let omega = T::lit(2.0) * sched.eta * sched.ratio.sqrt() / xi;
        (omega, omega / sched.ratio)
    };

    let mut h = SparseHamiltonian::new(q.dim() * nf);

    let eff_d = eff;
    h.push(&tensor(&id_q, &hilbert::number(space)), Box::new(move |t| cr(eff_d(t).1)));

    let eff_o = eff;
    let phi2 = base.phi2;
    h.push(
        &tensor(&sigma_z(q), &id_f),
        Box::new(move |t| cr(eff_o(t).0 * (nu2 * t + phi2).cos())),
    );

    if q.levels == 3 {
        let anh = base.anharmonicity;
        h.push(
            &tensor(&hilbert::basis_transition(3, 2, 2), &id_f),
            Box::new(move |_| cr(anh)),
        );
    }

    if base.stark_subtraction != T::zero() {
        let shifts = crate::model::drive_stark_shifts(base, q.levels)?;
        let neg_scale = -base.stark_subtraction;
        for (l, (per_photon, offset)) in shifts.into_iter().enumerate() {
            let proj = hilbert::basis_transition::<T>(q.levels, l, l);
            let block = &tensor(&proj, &hilbert::number(space)).scaled(cr(per_photon))
                + &tensor(&proj, &id_f).scaled(cr(offset));
            h.push(&block, Box::new(move |_| cr(neg_scale)));
        }
    }

    // e^{−iμ sin(ν₁t+φ₁)} [g e^{2iν₁t} a† + A] σ₋ + h.c.
    let lower = lowering_ladder::<T>(q);
    let up = tensor(&lower, &hilbert::creation(space));
    let dr = tensor(&lower, &id_f);
    let (mu, nu1, phi1, g_amp, a_amp) = (base.mu(), base.nu1, base.phi1, base.g, base.drive_amp);

    let c_up = move |t: T| {
        let phase = -mu * (nu1 * t + phi1).sin() + T::lit(2.0) * nu1 * t;
        Complex::new(phase.cos(), phase.sin()) * cr(g_amp)
    };
    let c_dr = move |t: T| {
        let phase = -mu * (nu1 * t + phi1).sin();
        Complex::new(phase.cos(), phase.sin()) * cr(a_amp)
    };

    h.push(&up, Box::new(c_up));
    h.push(&up.dagger(), Box::new(move |t| c_up(t).conj()));
    h.push(&dr, Box::new(c_dr));
    h.push(&dr.dagger(), Box::new(move |t| c_dr(t).conj()));
    Ok(h)
}

/// Runs the quench protocol on the lab-frame Hamiltonian (the drive-level
/// model) with `q.levels` qubit levels, from vacuum ⊗ |g⟩, recording P_f and
/// the other standard observables.
///
/// The schedule enters through ε₂(t) = 2Ω(t) and δ(t); the step honors the
/// ν₁-scale oscillations via `DriveParams::max_drive_frequency` plus the
/// static level splittings unless `opts.f_max` is set explicitly.
pub fn full_model_quench<T: Real>(
    base: &DriveParams<T>,
    s: &QuenchSchedule<T>,
    l: &LindbladSpec<T>,
    q: QubitSpace,
    space: FockSpace,
    record: &RecordSpec<T>,
    opts: &StepOptions<T>,
) -> Result<EvolutionResult<T>> {
    s.validate()?;
    base.validate()?;
    let layout = SpaceLayout::Joint { qubit: q, field: space };
    let ham = lab_quench_terms(base, s, q, space)?;

    let mut resolved = *opts;
    if resolved.f_max <= T::lit(0.0) {
        let drive_f = base.max_drive_frequency()?;
        let e0 = schedule_at(s, T::zero())?;
        let static_f = (e0.delta * T::from_usize(space.dim() - 1).unwrap()
            + e0.omega
            + base.anharmonicity.abs())
            / T::two_pi();
        resolved.f_max = drive_f + static_f;
    }

    RecordSpec::validate(&record.observable_times, T::zero(), s.tf, "observable times")?;
    RecordSpec::validate(&record.state_times, T::zero(), s.tf, "state times")?;

    let g0 = hilbert::qubit_state::<T>(q, 0)?;
    let psi0 = hilbert::tensor_state(&g0, &hilbert::vacuum(space));
    let source = HamSource::Terms(&ham);
    if l.is_empty() {
        integrate_unitary(&source, &psi0, T::zero(), record, &resolved, layout)
    } else {
        integrate_master(&source, l, &psi0.to_density(), T::zero(), record, &resolved, layout)
    }
}
