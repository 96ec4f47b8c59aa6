//! Hamiltonians, drive parameterization, quench schedule and analytic ground
//! states of the engineered quantum Rabi model.
//!
//! The physical picture: a transmon qubit with its frequency modulated at two
//! tones (fast ν₁ for sideband engineering, slow ν₂ setting the effective
//! qubit frequency) couples to a resonator. In the frame rotating with the
//! drives, the second upper sideband of the ν₁ modulation realizes a
//! Jaynes-Cummings-like a†σ₋ coupling while a transverse tone A supplies a
//! σ_x drive; together they synthesize the quantum Rabi Hamiltonian
//! H_R = ½Ω σ_z + δ a†a + η σ_x (a† + a) with fully tunable Ω, δ, η.
//!
//! Units: angular frequencies in rad/µs, times in µs (see crate docs).

use nalgebra::{Complex, SymmetricEigen};

use crate::hilbert::{
    self, annihilation, creation, lowering_ladder, number, sigma_z, squeeze, tensor, vacuum,
    FockSpace, OperatorMatrix, QubitSpace, StateVector,
};
use crate::real::cr;
use crate::{Error, Real, Result};

/// Lab-frame (rotating-frame) drive parameters.
///
/// `eps1, nu1, phi1` describe the fast qubit-frequency modulation whose index
/// is μ = ε₁/ν₁; `eps2, nu2, phi2` the slow one; `drive_amp` (A) the
/// transverse microwave tone; `g` the bare qubit-resonator coupling; `delta`
/// the resonator detuning in the rotating frame. `omega0` is the mean qubit
/// frequency (bookkeeping only; it is transformed away). `anharmonicity` is
/// the |f⟩-level offset used when the third level is retained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams<T> {
    pub omega0: T,
    pub eps1: T,
    pub nu1: T,
    pub phi1: T,
    pub eps2: T,
    pub nu2: T,
    pub phi2: T,
    pub drive_amp: T,
    pub g: T,
    pub delta: T,
    pub anharmonicity: T,
    /// Dimensionless scale of the drive-induced Stark subtraction: the
    /// sideband couplings that are averaged away by the rotating-wave
    /// hierarchy leave behind static qubit-state-dependent a†a shifts
    /// ([`drive_stark_shifts`]), which detune the engineered resonator
    /// frequency away from its nominal δ. Subtracting them (scale 1.0, the
    /// default) keeps the dressed detuning on schedule — the simulation
    /// analogue of recalibrating the resonator frequency under drive. Set to
    /// 0.0 for the uncorrected Hamiltonian.
    pub stark_subtraction: T,
}

/// Rotating-wave validity report for a [`DriveParams`]: each retained term's
/// magnitude relative to the fast modulation frequency ν₁. The discarded
/// fast-oscillating terms are negligible when every ratio is small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveValidity<T> {
    /// |g·J₂(μ)| / ν₁
    pub coupling_ratio: T,
    /// |A·J₀(μ)| / ν₁
    pub drive_ratio: T,
    /// |δ| / ν₁
    pub detuning_ratio: T,
    /// ε₂ / ν₁
    pub modulation_ratio: T,
    /// All ratios below 0.1.
    pub valid: bool,
}

impl<T: Real> DriveParams<T> {
    /// Modulation index μ = ε₁/ν₁. Panics if ν₁ ≤ 0 (checked by `validate`).
    pub fn mu(&self) -> T {
        self.eps1 / self.nu1
    }

    /// Basic finiteness/sign checks; front ends call this at the boundary.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu1 > T::zero()) {
            return Err(Error::Domain("nu1 must be positive".into()));
        }
        if !self.mu().is_finite() {
            return Err(Error::Domain("mu = eps1/nu1 must be finite".into()));
        }
        Ok(())
    }

    /// Rotating-wave validity ratios (each must be ≪ 1, flagged at < 0.1).
    pub fn validity(&self) -> Result<DriveValidity<T>> {
        self.validate()?;
        let mu = self.mu();
        let j0 = hilbert::bessel_j(0, mu)?;
        let j2 = hilbert::bessel_j(2, mu)?;
        let coupling_ratio = (self.g * j2).abs() / self.nu1;
        let drive_ratio = (self.drive_amp * j0).abs() / self.nu1;
        let detuning_ratio = self.delta.abs() / self.nu1;
        let modulation_ratio = self.eps2.abs() / self.nu1;
        let thresh = T::lit(0.1);
        Ok(DriveValidity {
            coupling_ratio,
            drive_ratio,
            detuning_ratio,
            modulation_ratio,
            valid: coupling_ratio < thresh
                && drive_ratio < thresh
                && detuning_ratio < thresh
                && modulation_ratio < thresh,
        })
    }

    /// Highest significant cycle frequency in H(t), in cycles/µs: the m-th
    /// sideband rotates at mν₁, and terms are negligible once J_m(μ) times
    /// the larger drive scale drops below 1e−6·ν₁. Used for step-size rules.
    pub fn max_drive_frequency(&self) -> Result<T> {
        let mu = self.mu();
        let scale = self.g.abs().max(self.drive_amp.abs());
        let mut m_sig = 2_i64; // the resonant sideband is m = 2
        for m in 2_i64..=20 {
            if (hilbert::bessel_j(m, mu)? * scale).abs() > self.nu1 * T::lit(1e-6) {
                m_sig = m;
            }
        }
        // +2 covers the e^{2iν₁t} factor riding on the a† term.
        let omega_max = T::from_i64(m_sig + 2).unwrap() * self.nu1;
        Ok(omega_max / T::two_pi())
    }
}

/// Effective Rabi-model parameters. `b0 = 2AJ₀(μ)` is the qubit Rabi
/// precession frequency of the underlying drive; it is zero for parameter
/// sets not derived from a [`DriveParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams<T> {
    pub omega: T,
    pub delta: T,
    pub eta: T,
    pub b0: T,
    pub xi: T,
}

impl<T: Real> EffectiveParams<T> {
    /// Builds from explicit Ω, δ, η; computes ξ = 2η/√(Ωδ).
    pub fn new(omega: T, delta: T, eta: T) -> Result<Self> {
        if !(omega > T::zero()) || !(delta > T::zero()) {
            return Err(Error::Domain("Omega and delta must be positive".into()));
        }
        let xi = T::lit(2.0) * eta / (omega * delta).sqrt();
        Ok(Self { omega, delta, eta, b0: T::zero(), xi })
    }

    /// Derives the effective model from lab-frame drive parameters:
    /// Ω = ε₂/2, η = g·J₂(μ)/2, B₀ = 2A·J₀(μ), δ carried over.
    pub fn from_drive(p: &DriveParams<T>) -> Result<Self> {
        p.validate()?;
        let mu = p.mu();
        let omega = p.eps2 * T::lit(0.5);
        let eta = p.g * hilbert::bessel_j(2, mu)? * T::lit(0.5);
        let b0 = T::lit(2.0) * p.drive_amp * hilbert::bessel_j(0, mu)?;
        let mut out = Self::new(omega, p.delta, eta)?;
        out.b0 = b0;
        Ok(out)
    }
}

/// Linear quench of the normalized coupling at fixed Ω/δ ratio and fixed η:
/// ξ(t) = ξ₀ + (ξ_max − ξ₀)·t/t_f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchSchedule<T> {
    pub xi0: T,
    pub xi_max: T,
    pub tf: T,
    pub ratio: T,
    pub eta: T,
}

impl<T: Real> QuenchSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tf > T::zero()) || !(self.ratio > T::zero()) || !(self.eta > T::zero()) {
            return Err(Error::Domain("tf, ratio and eta must be positive".into()));
        }
        if !(self.xi_max > self.xi0) || !(self.xi0 > T::zero()) {
            return Err(Error::Domain("need 0 < xi0 < xi_max for a monotone quench".into()));
        }
        Ok(())
    }
}

/// Dispersive Stark-control parameters of the ancilla used to tune δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkParams<T> {
    pub g_prime: T,
    pub f0: T,
    pub omega_r: T,
}

impl<T: Real> StarkParams<T> {
    /// Dispersive validity at ancilla frequency `f`: |f − ω_r| > 5·g′.
    pub fn dispersive_valid(&self, f: T) -> bool {
        (f - self.omega_r).abs() > T::lit(5.0) * self.g_prime
    }
}

/// Lab-frame Hamiltonian in the rotating frame of the drives:
///
/// H(t) = δ a†a + ½ε₂cos(ν₂t+φ₂) σ_z
///        + { e^{−iμ sin(ν₁t+φ₁)} [g e^{2iν₁t} a† + A] σ₋ + h.c. }
///
/// For `levels = 3` the lowering operator extends to the |e⟩↔|f⟩ transition
/// with the harmonic-ladder factor √2, and the constant anharmonicity is
/// added on the |f⟩ diagonal (the σ_z modulation embeds with a zero |f⟩
/// row, so only the static offset distinguishes the third level).
///
/// When `p.stark_subtraction` is nonzero, that multiple of the predicted
/// drive-induced Stark shifts ([`drive_stark_shifts`]) is subtracted so the
/// dressed resonator detuning stays at the nominal δ. Panics if the
/// modulation index μ is outside the Bessel evaluation domain (|μ| ≤ 30;
/// physical drives sit far below that).
pub fn lab_frame_hamiltonian<T: Real>(
    p: &DriveParams<T>,
    t: T,
    q: QubitSpace,
    space: FockSpace,
) -> OperatorMatrix<T> {
    let nf = space.dim();
    let id_f = hilbert::identity::<T>(nf);
    let id_q = hilbert::identity::<T>(q.dim());

    let mut h = tensor(&id_q, &number(space)).scaled(cr(p.delta));

    let slow = p.eps2 * T::lit(0.5) * (p.nu2 * t + p.phi2).cos();
    h = &h + &tensor(&sigma_z(q), &id_f).scaled(cr(slow));

    if q.levels == 3 {
        h = &h + &tensor(&hilbert::basis_transition(3, 2, 2), &id_f).scaled(cr(p.anharmonicity));
    }

    if p.stark_subtraction != T::zero() {
        let shifts = drive_stark_shifts(p, q.levels)
            .expect("modulation index within Bessel evaluation domain");
        for (l, (per_photon, offset)) in shifts.into_iter().enumerate() {
            let proj = hilbert::basis_transition::<T>(q.levels, l, l);
            let block = &tensor(&proj, &number(space)).scaled(cr(per_photon))
                + &tensor(&proj, &id_f).scaled(cr(offset));
            h = &h + &block.scaled(cr(-p.stark_subtraction));
        }
    }

    // e^{−iμ sin(ν₁t+φ₁)} [g e^{2iν₁t} a† + A] σ₋  + h.c.
    let mu = p.mu();
    let fast_phase = -mu * (p.nu1 * t + p.phi1).sin();
    let fast = Complex::new(fast_phase.cos(), fast_phase.sin());
    let two_nu1 = Complex::new((T::lit(2.0) * p.nu1 * t).cos(), (T::lit(2.0) * p.nu1 * t).sin());
    let lower = lowering_ladder(q);
    let up_coeff = fast * two_nu1 * cr(p.g);
    let drive_coeff = fast * cr(p.drive_amp);
    let term = &tensor(&lower, &creation(space)).scaled(up_coeff)
        + &tensor(&lower, &id_f).scaled(drive_coeff);
    h = &h + &(&term + &term.dagger());
    h
}

/// Predicted static diagonal shifts left behind by the off-resonant sideband
/// couplings, per qubit level: entry `l` is `(per-photon, constant)` so the
/// induced term is Σ_l (per_photon_l·a†a + offset_l)|l⟩⟨l|.
///
/// Each ladder transition l↔l+1 (coupling c_l = g√(l+1), upper-level static
/// offset o_l: 0 for g↔e, the anharmonicity for e↔f) appears through the
/// modulation sidebands as c_l·J_m(μ)·a†|l⟩⟨l+1| rotating at
/// Δ_m = (2−m)ν₁ − o_l. Every non-resonant sideband contributes its
/// second-order average (c_l·J_m)²/Δ_m · (n̂|l⟩⟨l| − (n̂+1)|l+1⟩⟨l+1|); the
/// resonant one (Δ_m = 0, the engineered coupling) is excluded. These shifts
/// are the qubit-state-dependent resonator pulls a drive-level simulation
/// must recalibrate away, exactly as the hardware's resonator frequency is
/// retuned under drive; see [`DriveParams::stark_subtraction`].
pub fn drive_stark_shifts<T: Real>(p: &DriveParams<T>, levels: usize) -> Result<Vec<(T, T)>> {
    p.validate()?;
    let mu = p.mu();
    let mut shifts = vec![(T::zero(), T::zero()); levels];
    for l in 0..levels.saturating_sub(1) {
        let c2 = p.g * p.g * T::from_usize(l + 1).unwrap();
        let o_l = if l == 0 { T::zero() } else { p.anharmonicity };
        for m in -20_i64..=20 {
            let delta_m = T::from_i64(2 - m).unwrap() * p.nu1 - o_l;
            if delta_m.abs() < T::lit(1e-9) * p.nu1 {
                continue; // the engineered resonant sideband
            }
            let jm = hilbert::bessel_j(m.abs(), mu)?; // J_m² is even in m
            let k = c2 * jm * jm / delta_m;
            shifts[l].0 += k;
            shifts[l + 1].0 -= k;
            shifts[l + 1].1 -= k;
        }
    }
    Ok(shifts)
}

/// One term of the Jacobi-Anger sideband expansion of the lab-frame coupling.
///
/// The full coupling block is Σ_m H_m(t) with
/// H_m(t) = J_m(μ) { g e^{−i(m−2)ν₁t} a† + A e^{−imν₁t} } σ₋ e^{−imφ₁} + h.c.
/// The complex amplitudes carry the e^{−imφ₁} phase; `a_dag_freq` and
/// `drive_freq` are the rotation frequencies of the two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandTerm<T> {
    pub m: i64,
    pub a_dag_amp: Complex<T>,
    pub a_dag_freq: T,
    pub drive_amp: Complex<T>,
    pub drive_freq: T,
}

impl<T: Real> SidebandTerm<T> {
    /// Materializes H_m(t) on the joint space.
    pub fn at(&self, t: T, q: QubitSpace, space: FockSpace) -> OperatorMatrix<T> {
        let rot_a = (-self.a_dag_freq * t).exp_phase();
        let rot_d = (-self.drive_freq * t).exp_phase();
        let lower = lowering_ladder(q);
        let id_f = hilbert::identity::<T>(space.dim());
        let term = &tensor(&lower, &creation(space)).scaled(self.a_dag_amp * rot_a)
            + &tensor(&lower, &id_f).scaled(self.drive_amp * rot_d);
        &term + &term.dagger()
    }
}

/// Helper: e^{iθ} for a real phase θ.
trait ExpPhase<T> {
    fn exp_phase(self) -> Complex<T>;
}

impl<T: Real> ExpPhase<T> for T {
    fn exp_phase(self) -> Complex<T> {
        Complex::new(self.cos(), self.sin())
    }
}

/// Sideband amplitudes of order m (|m| ≤ 20): coefficient g·J_m(μ) on a†σ₋
/// rotating at (m−2)ν₁ and A·J_m(μ) on σ₋ rotating at mν₁.
pub fn sideband_term<T: Real>(p: &DriveParams<T>, m: i64) -> Result<SidebandTerm<T>> {
    if m.abs() > 20 {
        return Err(Error::Domain(format!("sideband order |{m}| > 20")));
    }
    let mu = p.mu();
    // J_{−m}(μ) = (−1)^m J_m(μ)
    let jm = {
        let base = hilbert::bessel_j(m.abs(), mu)?;
        if m < 0 && m.abs() % 2 == 1 {
            -base
        } else {
            base
        }
    };
    let mf = T::from_i64(m).unwrap();
    let phase = (-mf * p.phi1).exp_phase();
    Ok(SidebandTerm {
        m,
        a_dag_amp: phase * cr(p.g * jm),
        a_dag_freq: (mf - T::lit(2.0)) * p.nu1,
        drive_amp: phase * cr(p.drive_amp * jm),
        drive_freq: mf * p.nu1,
    })
}

/// Effective quantum Rabi Hamiltonian on (2-level qubit) ⊗ field:
/// H_R = ½Ω σ_z + δ a†a + η σ_x (a† + a).
pub fn effective_rabi_hamiltonian<T: Real>(
    e: &EffectiveParams<T>,
    space: FockSpace,
) -> OperatorMatrix<T> {
    let q = QubitSpace::new(2);
    let a = annihilation::<T>(space);
    let x_field = &a + &a.dagger();
    let h = &tensor(&sigma_z(q), &hilbert::identity(space.dim())).scaled(cr(e.omega * T::lit(0.5)))
        + &tensor(&hilbert::identity(q.dim()), &number(space)).scaled(cr(e.delta));
    &h + &tensor(&hilbert::sigma_x(q), &x_field).scaled(cr(e.eta))
}

/// Static calibration Hamiltonian: the m = 2 and m = 0 stationary sidebands,
///
/// H_opt = gJ₂(μ)(e^{−2iφ₁}σ₋a† + h.c.) + AJ₀(μ)(e^{0}σ₋ + h.c.),
///
/// reducing to gJ₂(μ)(σ⁺a + σ⁻a†) + AJ₀(μ)(σ⁺ + σ⁻) at φ₁ = 0.
pub fn calibration_hamiltonian<T: Real>(
    p: &DriveParams<T>,
    space: FockSpace,
) -> Result<OperatorMatrix<T>> {
    let q = QubitSpace::new(2);
    let m2 = sideband_term(p, 2)?;
    let m0 = sideband_term(p, 0)?;
    let lower = lowering_ladder(q);
    let id_f = hilbert::identity::<T>(space.dim());
    let term = &tensor(&lower, &creation(space)).scaled(m2.a_dag_amp)
        + &tensor(&lower, &id_f).scaled(m0.drive_amp);
    Ok(&term + &term.dagger())
}

/// Schedule evaluation: ξ(t) linear; Ω(t) = 2η√ratio/ξ(t), δ(t) = Ω(t)/ratio,
/// so that 2η/√(Ωδ) = ξ(t) identically and Ω/δ stays pinned to `ratio`.
pub fn schedule_at<T: Real>(s: &QuenchSchedule<T>, t: T) -> Result<EffectiveParams<T>> {
    s.validate()?;
    if t < T::zero() || t > s.tf {
        return Err(Error::Domain(format!("t = {} outside quench window [0, {}]", t, s.tf)));
    }
    let xi = s.xi0 + (s.xi_max - s.xi0) * t / s.tf;
    let omega = T::lit(2.0) * s.eta * s.ratio.sqrt() / xi;
    let delta = omega / s.ratio;
    let mut e = EffectiveParams::new(omega, delta, s.eta)?;
    // Propagate the exact schedule value; the constructor recomputes it from
    // (Ω, δ, η) with an extra rounding step.
    e.xi = xi;
    Ok(e)
}

/// Normal-phase analytic ground state for ξ < 1, valid in the Ω/δ → ∞ limit:
/// |g⟩ ⊗ exp[r(a†² − a²)/2]|0⟩ with r = −¼ln(1 − ξ²).
///
/// Note the generator's sign: r > 0 here, and the state's X = a + a†
/// quadrature is *anti*-squeezed (the soft mode softens as ξ → 1), i.e. the
/// field factor is `squeeze(-r)` in this crate's convention.
pub fn ground_state_np<T: Real>(xi: T, space: FockSpace) -> Result<StateVector<T>> {
    if !(xi >= T::zero() && xi < T::one()) {
        return Err(Error::Domain(format!("normal phase requires 0 <= xi < 1, got {xi}")));
    }
    let r = -T::lit(0.25) * (T::one() - xi * xi).ln();
    let field = squeeze::<T>(space, -r);
    let field_state =
        StateVector::normalized(field.matrix() * vacuum::<T>(space).amplitudes()).expect("nonzero");
    let g = hilbert::qubit_state::<T>(QubitSpace::new(2), 0)?;
    Ok(hilbert::tensor_state(&g, &field_state))
}

/// Which of the two degenerate superradiant ground states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign<T: Real>(self) -> T {
        match self {
            Branch::Plus => T::one(),
            Branch::Minus => -T::one(),
        }
    }
}

/// Superradiant-phase analytic ground state for ξ > 1 (Ω/δ → ∞ limit):
///
/// |ψ_sp^s⟩ = |q_s⟩ ⊗ D(sα) exp[r(a†² − a²)/2]|0⟩,  s = ±1,
///
/// with r = −¼ln(1 − ξ⁻⁴) and α = √[Ω(ξ⁴ − 1)/(4ξ²δ)].
///
/// The qubit factor is the tilted state |q_s⟩ = cos(φ/2)|g⟩ − s·sin(φ/2)|e⟩
/// with tanφ = √(ξ⁴ − 1): the ground state of ½Ωσ_z + 2ηsα·σ_x at the
/// displaced field. It approaches the σ_x eigenstates only as ξ → ∞;
/// using those directly fails the large-ratio fidelity contract near the
/// transition (⟨σ_x⟩ = −s·sinφ, not −s).
pub fn ground_state_sp<T: Real>(
    e: &EffectiveParams<T>,
    branch: Branch,
    space: FockSpace,
) -> Result<StateVector<T>> {
    let xi = e.xi;
    if !(xi > T::one()) {
        return Err(Error::Domain(format!("superradiant phase requires xi > 1, got {xi}")));
    }
    let s: T = branch.sign();
    let xi2 = xi * xi;
    let xi4 = xi2 * xi2;
    let r = -T::lit(0.25) * (T::one() - T::one() / xi4).ln();
    let alpha = (e.omega * (xi4 - T::one()) / (T::lit(4.0) * xi2 * e.delta)).sqrt();

    // Exact ⟨m|D(sα)|n⟩ elements (band recurrence) rather than the Padé
    // exponential of the truncated generator: large-α displacements at big
    // cutoffs are O(dim²) this way, and the amplitudes below the cutoff are
    // those of the untruncated state.
    let sq = squeeze::<T>(space, -r);
    let squeezed = sq.matrix() * vacuum::<T>(space).amplitudes();
    let field_vec = hilbert::displacement_matrix::<T>(cr(s * alpha), space.dim()) * squeezed;
    let field_state = StateVector::normalized(field_vec).expect("nonzero");

    // tanφ = √(ξ⁴−1), φ ∈ (0, π/2): cosφ = ξ⁻², sinφ = √(1−ξ⁻⁴).
    let cos_phi = T::one() / xi2;
    let half = T::lit(0.5);
    let cos_half = ((T::one() + cos_phi) * half).sqrt();
    let sin_half = ((T::one() - cos_phi) * half).sqrt();
    let mut qv = nalgebra::DVector::zeros(2);
    qv[0] = cr(cos_half);
    qv[1] = cr(-s * sin_half);
    let qubit = StateVector::new(qv).expect("unit by construction");

    Ok(hilbert::tensor_state(&qubit, &field_state))
}

/// Parity-even equal superposition N(|ψ_sp^+⟩ + |ψ_sp^−⟩); N accounts for the
/// generally nonzero overlap of the two branches.
pub fn ground_state_superposition<T: Real>(
    e: &EffectiveParams<T>,
    space: FockSpace,
) -> Result<StateVector<T>> {
    let plus = ground_state_sp(e, Branch::Plus, space)?;
    let minus = ground_state_sp(e, Branch::Minus, space)?;
    StateVector::normalized(plus.amplitudes() + minus.amplitudes())
}

/// Dispersive Stark shift of the resonator frequency when the ancilla moves
/// from `f_ref` to `f_t`:  δ(t) − δ(ref) = g′²/(f_ref − ω_r) − g′²/(f_t − ω_r).
pub fn stark_shift<T: Real>(s: &StarkParams<T>, f_t: T, f_ref: T) -> Result<T> {
    let g2 = s.g_prime * s.g_prime;
    for f in [f_t, f_ref] {
        if (f - s.omega_r).abs() < T::lit(2.0) * s.g_prime {
            return Err(Error::Domain(format!(
                "ancilla frequency {} within 2g' of the resonator; dispersive model invalid",
                f
            )));
        }
    }
    Ok(g2 / (f_ref - s.omega_r) - g2 / (f_t - s.omega_r))
}

/// Exact ground state(s) of a Hermitian matrix: returns the `k` lowest
/// eigenvectors (ascending eigenvalue order). Shared by tests and calibration
/// checks; exposed because the analytic ground states advertise fidelity
/// against exactly this diagonalization.
pub fn lowest_eigenstates<T: Real>(h: &OperatorMatrix<T>, k: usize) -> Vec<(T, StateVector<T>)> {
    let eig = SymmetricEigen::new(hilbert::herm_part(h.matrix()));
    let n = h.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    order
        .into_iter()
        .take(k)
        .map(|i| {
            let v = eig.eigenvectors.column(i).into_owned();
            (eig.eigenvalues[i], StateVector::normalized(v).expect("eigenvector"))
        })
        .collect()
}

/// Paper-style drive parameter set used widely in tests and presets:
/// g/2π = 20 MHz, A/2π = 15 MHz, ν₁/2π = 185 MHz, ε₁/2π = 146 MHz,
/// φ₁ = 0, φ₂ = −0.45, anharmonicity −2π·240 MHz.
pub fn reference_drive<T: Real>() -> DriveParams<T> {
    let mhz = T::two_pi();
    DriveParams {
        omega0: T::zero(),
        eps1: T::lit(146.0) * mhz,
        nu1: T::lit(185.0) * mhz,
        phi1: T::zero(),
        eps2: T::zero(),
        nu2: T::zero(),
        phi2: T::lit(-0.45),
        drive_amp: T::lit(15.0) * mhz,
        g: T::lit(20.0) * mhz,
        delta: T::zero(),
        anharmonicity: T::lit(-240.0) * mhz,
        stark_subtraction: T::one(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fock_state, parity, qubit_state, tensor_state};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    type C64 = Complex<f64>;
    const TWO_PI: f64 = std::f64::consts::TAU;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lab_frame_diagonal_when_uncoupled() {
        let mut p = reference_drive::<f64>();
        p.g = 0.0;
        p.drive_amp = 0.0;
        p.eps2 = TWO_PI * 3.0;
        p.nu2 = TWO_PI * 25.0;
        p.delta = TWO_PI * 0.9;
        let q = QubitSpace::new(2);
        let f = FockSpace::new(5);
        let t = 0.0173;
        let h = lab_frame_hamiltonian(&p, t, q, f);
        let slow = 0.5 * p.eps2 * (p.nu2 * t + p.phi2).cos();
        for level in 0..2 {
            let sz = if level == 0 { -1.0 } else { 1.0 };
            for n in 0..5 {
                let idx = level * 5 + n;
                assert_abs_diff_eq!(
                    h.matrix()[(idx, idx)].re,
                    sz * slow + p.delta * n as f64,
                    epsilon = 1e-12
                );
            }
        }
        let diag_norm: f64 = (0..10).map(|i| h.matrix()[(i, i)].norm_sqr()).sum::<f64>().sqrt();
        let total: f64 = h.matrix().iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert_abs_diff_eq!(diag_norm, total, epsilon = 1e-12);
    }

    #[test]
    fn lab_frame_is_hermitian_at_arbitrary_times() {
        let mut p = reference_drive::<f64>();
        p.eps2 = TWO_PI * 2.0;
        p.nu2 = TWO_PI * 25.97;
        p.delta = TWO_PI * 0.93;
        let f = FockSpace::new(8);
        for (lv, t) in [(2, 0.0134), (2, 0.377), (3, 0.0134), (3, 1.91)] {
            let h = lab_frame_hamiltonian(&p, t, QubitSpace::new(lv), f);
            assert!(h.max_nonhermiticity() < 1e-12);
        }
    }

    #[test]
    fn modulation_time_average_recovers_second_bessel() {
        // (1/T)∫ e^{−iμ sin(ν₁t)} e^{2iν₁t} dt = J₂(μ); trapezoid quadrature
        // over one period as an independent check of the sideband content.
        let p = reference_drive::<f64>();
        let mu = p.mu();
        let period = TWO_PI / p.nu1;
        let n = 20_000;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            let t = period * (k as f64 + 0.5) / n as f64;
            let phase = -mu * (p.nu1 * t).sin() + 2.0 * p.nu1 * t;
            acc += C64::new(phase.cos(), phase.sin());
        }
        acc /= C64::new(n as f64, 0.0);
        let j2 = hilbert::bessel_j::<f64>(2, mu).unwrap();
        assert_abs_diff_eq!(acc.re, j2, epsilon = 1e-6);
        assert_abs_diff_eq!(acc.im, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn sideband_static_orders() {
        let p = reference_drive::<f64>();
        let mu = p.mu();
        let m2 = sideband_term(&p, 2).unwrap();
        assert_abs_diff_eq!(m2.a_dag_amp.re, p.g * hilbert::bessel_j::<f64>(2, mu).unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(m2.a_dag_freq, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m2.drive_freq, 2.0 * p.nu1, epsilon = 1e-9);
        let m0 = sideband_term(&p, 0).unwrap();
        assert_abs_diff_eq!(m0.drive_amp.re, p.drive_amp * hilbert::bessel_j::<f64>(0, mu).unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(m0.drive_freq, 0.0, epsilon = 1e-12);
        assert!(sideband_term(&p, 21).is_err());
    }

    #[test]
    fn sideband_sum_reassembles_lab_frame_coupling() {
        // δ = ε₂ = 0 and no Stark subtraction isolate the coupling block
        // (the sideband expansion covers only the off-diagonal part);
        // Jacobi-Anger truncated at |m| ≤ 20 is converged far below 1e−6 for
        // μ ≈ 0.79.
        let mut p = reference_drive::<f64>();
        p.delta = 0.0;
        p.eps2 = 0.0;
        p.stark_subtraction = 0.0;
        p.phi1 = 0.37; // exercise the e^{−imφ₁} phases too
        let q = QubitSpace::new(2);
        let f = FockSpace::new(6);
        let t = 0.37 / p.nu1;
        let direct = lab_frame_hamiltonian(&p, t, q, f);
        let mut acc = DMatrix::<C64>::zeros(12, 12);
        for m in -20..=20 {
            acc += sideband_term(&p, m).unwrap().at(t, q, f).matrix();
        }
        let scale = max_abs(direct.matrix());
        assert!(max_abs(&(direct.matrix() - &acc)) / scale < 1e-6);
    }

    #[test]
    fn drive_stark_shifts_match_sideband_sums() {
        // Independently computed second-order sums (scipy Bessel oracle),
        // in 2π·MHz: g↔e ladder k = Σ_{m≠2} g²J_m²/((2−m)ν₁), e↔f ladder
        // k' = Σ_m 2g²J_m²/((2−m)ν₁ − anharmonicity).
        let p = reference_drive::<f64>();
        let kge = TWO_PI * 1.1676873068995084;
        let kef = TWO_PI * 1.3563567458224257;

        let two = drive_stark_shifts(&p, 2).unwrap();
        assert_abs_diff_eq!(two[0].0, kge, epsilon = TWO_PI * 1e-9);
        assert_abs_diff_eq!(two[0].1, 0.0, epsilon = 1e-15);
        // The same ladder pulls the upper level down by k per photon plus a
        // constant k (the aa† ordering): (−k·n̂ − k) on |e⟩.
        assert_abs_diff_eq!(two[1].0, -kge, epsilon = TWO_PI * 1e-9);
        assert_abs_diff_eq!(two[1].1, -kge, epsilon = TWO_PI * 1e-9);

        let three = drive_stark_shifts(&p, 3).unwrap();
        assert_eq!(three[0], two[0], "ground-level shift is ladder-local");
        assert_abs_diff_eq!(three[1].0, -kge + kef, epsilon = TWO_PI * 1e-9);
        assert_abs_diff_eq!(three[1].1, -kge, epsilon = TWO_PI * 1e-9);
        assert_abs_diff_eq!(three[2].0, -kef, epsilon = TWO_PI * 1e-9);
        assert_abs_diff_eq!(three[2].1, -kef, epsilon = TWO_PI * 1e-9);

        // No coupling, no shift.
        let mut off = p;
        off.g = 0.0;
        for (a, b) in drive_stark_shifts(&off, 3).unwrap() {
            assert_eq!((a, b), (0.0, 0.0));
        }
    }

    #[test]
    fn stark_subtraction_cancels_predicted_shifts() {
        // With the subtraction enabled, the diagonal of H at the coupling
        // zeros differs from the bare δ/ε₂/anharmonicity diagonal by exactly
        // −1× the predicted shifts.
        let p = reference_drive::<f64>();
        let q = QubitSpace::new(3);
        let f = FockSpace::new(5);
        let t = 0.713;
        let mut bare = p;
        bare.stark_subtraction = 0.0;
        let diff = lab_frame_hamiltonian(&p, t, q, f).matrix()
            - lab_frame_hamiltonian(&bare, t, q, f).matrix();
        let shifts = drive_stark_shifts(&p, 3).unwrap();
        for l in 0..3 {
            for n in 0..5 {
                let idx = l * 5 + n;
                let expected = -(shifts[l].0 * n as f64 + shifts[l].1);
                assert_abs_diff_eq!(diff[(idx, idx)].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(diff[(idx, idx)].im, 0.0, epsilon = 1e-15);
            }
        }
        for i in 0..15 {
            for j in 0..15 {
                if i != j {
                    assert!(diff[(i, j)].norm() <= 1e-12, "subtraction must be purely diagonal");
                }
            }
        }
    }

    #[test]
    fn effective_rabi_uncoupled_spectrum() {
        let f = FockSpace::new(6);
        let e = EffectiveParams::new(TWO_PI * 10.0, TWO_PI * 1.0, 0.0).unwrap();
        let h = effective_rabi_hamiltonian(&e, f);
        let eigs = lowest_eigenstates(&h, 12);
        // Spectrum {±Ω/2 + nδ}: the lowest levels are −Ω/2 + nδ for n = 0..4
        // (δ = Ω/10 keeps the +Ω/2 branch above them).
        for (n, (val, _)) in eigs.iter().take(5).enumerate() {
            assert_abs_diff_eq!(*val, -0.5 * e.omega + n as f64 * e.delta, epsilon = 1e-9);
        }
    }

    #[test]
    fn effective_rabi_commutes_with_parity() {
        let f = FockSpace::new(24);
        let q = QubitSpace::new(2);
        let e = EffectiveParams::new(TWO_PI * 9.3, TWO_PI * 0.93, TWO_PI * 0.735).unwrap();
        let h = effective_rabi_hamiltonian(&e, f);
        let pi_op = parity::<f64>(q, f);
        let comm = &(&h * &pi_op) - &(&pi_op * &h);
        assert!(max_abs(comm.matrix()) < 1e-10);
    }

    #[test]
    fn effective_params_from_drive() {
        let mut p = reference_drive::<f64>();
        p.eps2 = TWO_PI * 9.3; // Ω = 2π × 4.65 MHz, mid-quench conditions
        p.nu2 = TWO_PI * 25.97;
        p.delta = TWO_PI * 0.465;
        let e = EffectiveParams::from_drive(&p).unwrap();
        assert_abs_diff_eq!(e.omega, 0.5 * p.eps2, epsilon = 1e-12);
        // η = g·J₂(μ)/2 lands on 2π × (0.735 ± 0.005) MHz for these values.
        assert_abs_diff_eq!(e.eta / TWO_PI, 0.735, epsilon = 0.005);
        assert_abs_diff_eq!(e.b0, 2.0 * p.drive_amp * 0.8502522648802646, epsilon = 1e-6);
        let v = p.validity().unwrap();
        assert!(v.valid, "reference drive must sit in the rotating-wave regime");
    }

    #[test]
    fn calibration_hamiltonian_limits() {
        let f = FockSpace::new(10);
        let q = QubitSpace::new(2);
        // A = 0: Jaynes-Cummings form conserves total excitation number.
        let mut p = reference_drive::<f64>();
        p.drive_amp = 0.0;
        let h = calibration_hamiltonian(&p, f).unwrap();
        let n_exc = &tensor(&hilbert::basis_transition::<f64>(2, 1, 1), &hilbert::identity(10))
            + &tensor(&hilbert::identity(2), &number(f));
        let comm = &(&h * &n_exc) - &(&n_exc * &h);
        assert!(max_abs(comm.matrix()) < 1e-12);

        // g = 0: (|g⟩+|e⟩)/√2 is a σ_x eigenstate; its population is frozen.
        let mut p2 = reference_drive::<f64>();
        p2.g = 0.0;
        let h2 = calibration_hamiltonian(&p2, f).unwrap();
        let plus = StateVector::normalized(
            qubit_state::<f64>(q, 0).unwrap().amplitudes()
                + qubit_state::<f64>(q, 1).unwrap().amplitudes(),
        )
        .unwrap();
        let psi = tensor_state(&plus, &fock_state(f, 0).unwrap());
        let sz_joint = tensor(&sigma_z::<f64>(q), &hilbert::identity(10));
        // [H, σz⊗I] acting on ψ should vanish in expectation growth: check
        // H ψ stays proportional to ψ on the qubit factor instead — simplest
        // is commutation of H with the σ_x projector, i.e. H ψ ∝ ψ.
        let h_psi = h2.matrix() * psi.amplitudes();
        let overlap = psi.amplitudes().dotc(&h_psi);
        let residual = (&h_psi - psi.amplitudes() * overlap).norm();
        assert!(residual < 1e-12, "drive-only H must not leak out of the σ_x eigenstate");
        let _ = sz_joint;
    }

    #[test]
    fn schedule_reproduces_quench_waypoints() {
        let s = QuenchSchedule {
            xi0: 0.5,
            xi_max: 2.5,
            tf: 3.0,
            ratio: 10.0,
            eta: TWO_PI * 0.735,
        };
        assert_abs_diff_eq!(schedule_at(&s, 0.0).unwrap().xi, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(schedule_at(&s, 0.75).unwrap().xi, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(schedule_at(&s, 3.0).unwrap().xi, 2.5, epsilon = 1e-15);
        assert!(schedule_at(&s, -0.1).is_err());
        assert!(schedule_at(&s, 3.1).is_err());

        // Ω/δ pinned, ξ consistent, Ω strictly decreasing.
        let mut prev = f64::INFINITY;
        for k in 0..=30 {
            let t = 3.0 * k as f64 / 30.0;
            let e = schedule_at(&s, t).unwrap();
            assert_abs_diff_eq!(e.omega / e.delta, 10.0, epsilon = 1e-12);
            assert_abs_diff_eq!(2.0 * e.eta / (e.omega * e.delta).sqrt(), e.xi, epsilon = 1e-12);
            assert!(e.omega < prev);
            prev = e.omega;
        }
    }

    #[test]
    fn np_ground_state_squeezing_parameter() {
        let f = FockSpace::new(40);
        let st = ground_state_np::<f64>(0.5, f).unwrap();
        // r_np(0.5) = −¼ ln(0.75)
        let r = -0.25 * 0.75_f64.ln();
        assert_abs_diff_eq!(r, 0.07192051811294523, epsilon = 1e-15);
        // X-variance of the field factor must be anti-squeezed: e^{+2r}.
        let q = QubitSpace::new(2);
        let rho = st.to_density();
        let (_, field) = hilbert::condition_on_level(&rho, q, f, 0).unwrap();
        let a = annihilation::<f64>(f);
        let x = &a + &a.dagger();
        let x2 = &x * &x;
        let var = field.expectation(&x2).re - field.expectation(&x).re.powi(2);
        assert_abs_diff_eq!(var, (2.0 * r).exp(), epsilon = 1e-9);
        assert!(ground_state_np::<f64>(1.0, f).is_err());
    }

    #[test]
    fn np_ground_state_xi_zero_is_bare_vacuum() {
        let f = FockSpace::new(12);
        let st = ground_state_np::<f64>(0.0, f).unwrap();
        assert_abs_diff_eq!(st.probability(0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sp_displacement_amplitude_and_coherence() {
        let f = FockSpace::new(60);
        let s = QuenchSchedule { xi0: 0.5, xi_max: 2.5, tf: 3.0, ratio: 10.0, eta: TWO_PI * 0.735 };
        let e = schedule_at(&s, 3.0).unwrap(); // ξ = 2.5
        let alpha = (e.omega * (2.5_f64.powi(4) - 1.0) / (4.0 * 2.5_f64.powi(2) * e.delta)).sqrt();
        assert_abs_diff_eq!(alpha, 3.9019226030253342, epsilon = 1e-12);

        let q = QubitSpace::new(2);
        let a_joint = tensor(&hilbert::identity::<f64>(2), &annihilation(f));
        for (branch, sign) in [(Branch::Plus, 1.0), (Branch::Minus, -1.0)] {
            let st = ground_state_sp(&e, branch, f).unwrap();
            let coh = st.expectation(&a_joint);
            assert_abs_diff_eq!(coh.re, sign * alpha, epsilon = 1e-6);
            assert_abs_diff_eq!(coh.im, 0.0, epsilon = 1e-8);
        }
        let _ = q;
        assert!(ground_state_sp(&schedule_at(&s, 0.0).unwrap(), Branch::Plus, f).is_err());
    }

    #[test]
    fn sp_branches_map_onto_each_other_under_parity() {
        let f = FockSpace::new(40);
        let q = QubitSpace::new(2);
        // ξ = 2η/√(Ωδ) = 1.5 with Ω/2π = 10, δ/2π = 1.
        let eta = TWO_PI * 0.75 * 10f64.sqrt();
        let e = EffectiveParams::new(TWO_PI * 10.0, TWO_PI * 1.0, eta).unwrap();
        let plus = ground_state_sp(&e, Branch::Plus, f).unwrap();
        let minus = ground_state_sp(&e, Branch::Minus, f).unwrap();
        let pi_op = parity::<f64>(q, f);
        let mapped = pi_op.matrix() * plus.amplitudes();
        let diff = (&mapped - minus.amplitudes()).norm();
        assert!(diff < 1e-10, "parity must exchange the ± branches, diff {diff}");
    }

    #[test]
    fn superposition_is_parity_even_and_correctly_normalized() {
        let f = FockSpace::new(40);
        let q = QubitSpace::new(2);
        // ξ = 2η/√(Ωδ) = 1.5 with Ω/2π = 10, δ/2π = 1.
        let eta = TWO_PI * 0.75 * 10f64.sqrt();
        let e = EffectiveParams::new(TWO_PI * 10.0, TWO_PI * 1.0, eta).unwrap();
        let st = ground_state_superposition(&e, f).unwrap();
        let pi_op = parity::<f64>(q, f);
        assert_abs_diff_eq!(st.expectation(&pi_op).re, 1.0, epsilon = 1e-6);

        let plus = ground_state_sp(&e, Branch::Plus, f).unwrap();
        let minus = ground_state_sp(&e, Branch::Minus, f).unwrap();
        let overlap = plus.inner(&minus).re;
        let norm = (plus.amplitudes() + minus.amplitudes()).norm();
        assert_abs_diff_eq!(norm, (2.0 + 2.0 * overlap).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sp_alpha_vanishes_continuously_at_the_transition() {
        let f = FockSpace::new(30);
        let eta = TWO_PI * 0.5 * 10f64.sqrt() * 1.0001; // ξ barely above critical
        let e = EffectiveParams::new(TWO_PI * 10.0, TWO_PI * 1.0, eta).unwrap();
        assert!(e.xi > 1.0 && e.xi < 1.001);
        let st = ground_state_sp(&e, Branch::Plus, f).unwrap();
        let a_joint = tensor(&hilbert::identity::<f64>(2), &annihilation(f));
        assert!(st.expectation(&a_joint).re < 0.05);
    }

    #[test]
    fn stark_shift_reference_point() {
        let ghz = TWO_PI * 1000.0; // rad/µs per GHz
        let s = StarkParams {
            g_prime: TWO_PI * 20.91e-3 * 1000.0, // 20.91 MHz in rad/µs
            f0: 5.93 * ghz,
            omega_r: 5.581 * ghz,
        };
        let f_t = 6.0 * ghz;
        let shift = stark_shift(&s, f_t, s.f0).unwrap();
        let g2 = s.g_prime * s.g_prime;
        let expect = g2 * (1.0 / (0.349 * ghz) - 1.0 / (0.419 * ghz));
        assert_abs_diff_eq!(shift, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(stark_shift(&s, s.f0, s.f0).unwrap(), 0.0, epsilon = 1e-12);

        // Monotone in f_t above the resonator: larger detuning, smaller pull.
        let mut prev = stark_shift(&s, 5.85 * ghz, s.f0).unwrap();
        for k in 1..10 {
            let f = (5.85 + 0.03 * k as f64) * ghz;
            let val = stark_shift(&s, f, s.f0).unwrap();
            assert!(val > prev);
            prev = val;
        }
        assert!(stark_shift(&s, s.omega_r + s.g_prime, s.f0).is_err());
    }

    #[test]
    fn drive_validity_flags() {
        let mut p = reference_drive::<f64>();
        p.eps2 = TWO_PI * 10.0; // ratio 10/185 ≈ 0.054
        p.delta = TWO_PI * 0.93;
        assert!(p.validity().unwrap().valid);
        p.eps2 = TWO_PI * 40.0; // ratio 40/185 > 0.1
        assert!(!p.validity().unwrap().valid);
    }
}
