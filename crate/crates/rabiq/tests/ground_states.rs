//! Cross-checks of the analytic ground-state formulas against exact
//! diagonalization of the Rabi Hamiltonian they approximate.
//!
//! The analytic states hold in the Ω/δ → ∞ limit; at Ω/δ = 1000 the
//! advertised contract is fidelity ≥ 0.999 with the numerically exact
//! ground state(s). Degenerate superradiant doublets are compared through
//! the projection onto the exact two-dimensional lowest eigenspace, since
//! the eigensolver is free to return any basis of it.

use num_complex::Complex;
use rabiq::hilbert::{identity, number, parity, tensor, FockSpace, QubitSpace};
use rabiq::model::{
    effective_rabi_hamiltonian, ground_state_np, ground_state_sp, ground_state_superposition,
    lowest_eigenstates, Branch, EffectiveParams,
};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Effective parameters with a pinned ratio Ω/δ and coupling ξ, using an
/// arbitrary overall frequency scale (the ground-state structure only
/// depends on the two dimensionless numbers).
fn params(ratio: f64, xi: f64) -> EffectiveParams<f64> {
    let delta = TWO_PI * 1.0;
    let omega = ratio * delta;
    let eta = xi * (omega * delta).sqrt() / 2.0;
    let e = EffectiveParams::new(omega, delta, eta).unwrap();
    assert!((e.xi - xi).abs() < 1e-12);
    e
}

/// |⟨analytic|exact⟩|² against a single exact eigenvector.
fn fidelity_with(state: &rabiq::StateVector64, exact: &rabiq::StateVector64) -> f64 {
    state.inner(exact).norm_sqr()
}

#[test]
fn normal_phase_formula_matches_exact_diagonalization() {
    let space = FockSpace::new(60);
    let e = params(1000.0, 0.5);
    let h = effective_rabi_hamiltonian(&e, space);
    let ground = lowest_eigenstates(&h, 1);
    let np = ground_state_np(0.5, space).unwrap();

    let fid = fidelity_with(&np, &ground[0].1);
    assert!(fid >= 0.999, "normal-phase fidelity {fid} below contract");
    // Frozen value from an independent eigensolver run at these parameters.
    assert!((fid - 0.9999280020392151).abs() < 1e-7, "fid = {fid}");

    // The analytic state is a squeezed vacuum with r = −¼ln(1−ξ²);
    // its mean photon number is sinh²(r).
    let n_joint = tensor(&identity::<f64>(2), &number(space));
    let nbar = np.expectation(&n_joint).re;
    assert!((nbar - 0.005181485540922544).abs() < 1e-9, "nbar = {nbar}");
    let nbar_exact = ground[0].1.expectation(&n_joint).re;
    assert!((nbar_exact - 0.005238638188157378).abs() < 1e-7);
}

#[test]
fn superradiant_manifold_projection_at_extreme_ratio() {
    // ξ = 1.5 at Ω/δ = 1000 puts α² = Ω(ξ⁴−1)/(4ξ²δ) ≈ 451 photons in the
    // field, so the basis must reach well past n = 451 + a few σ of the
    // displaced-squeezed photon distribution before the state (or the exact
    // ground doublet) is representable at all.
    let space = FockSpace::new(680);
    let e = params(1000.0, 1.5);
    let h = effective_rabi_hamiltonian(&e, space);
    let doublet = lowest_eigenstates(&h, 2);

    let split = doublet[1].0 - doublet[0].0;
    assert!(
        split.abs() < 1e-6,
        "SP ground doublet should be near-degenerate, split = {split}"
    );

    let alpha = (e.omega * (1.5f64.powi(4) - 1.0) / (4.0 * 1.5f64.powi(2) * e.delta)).sqrt();
    assert!((alpha - 21.245914639969936).abs() < 1e-9);

    let a_joint = tensor(&identity::<f64>(2), &rabiq::hilbert::annihilation(space));
    for branch in [Branch::Plus, Branch::Minus] {
        let psi = ground_state_sp(&e, branch, space).unwrap();
        let proj = fidelity_with(&psi, &doublet[0].1) + fidelity_with(&psi, &doublet[1].1);
        assert!(proj >= 0.999, "{branch:?} manifold projection {proj} below contract");
        assert!((proj - 0.9999607623).abs() < 1e-6, "proj = {proj}");

        // ⟨ψ±|a|ψ±⟩ = ±α: the order parameter of the branch.
        let sign = match branch {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        };
        let coh = psi.expectation(&a_joint);
        assert!((coh.re - sign * alpha).abs() < 1e-6, "⟨a⟩ = {coh}");
        assert!(coh.im.abs() < 1e-9);
    }
}

#[test]
fn superradiant_doublet_at_moderate_ratio() {
    // Ω/δ = 10 is the regime the quench actually runs in; the analytic
    // formulas are still good to better than 1×10⁻³ infidelity here.
    let space = FockSpace::new(60);
    let e = params(10.0, 2.5);
    let h = effective_rabi_hamiltonian(&e, space);
    let doublet = lowest_eigenstates(&h, 2);
    assert!((doublet[1].0 - doublet[0].0).abs() < 1e-9);

    let n_joint = tensor(&identity::<f64>(2), &number(space));
    let nbar = doublet[0].1.expectation(&n_joint).re;
    // Frozen from an independent eigensolver; the analytic α² = 15.225
    // differs in the third decimal, which is the finite-ratio correction.
    assert!((nbar - 15.204448163617782).abs() < 1e-6, "nbar = {nbar}");

    for branch in [Branch::Plus, Branch::Minus] {
        let psi = ground_state_sp(&e, branch, space).unwrap();
        let proj = fidelity_with(&psi, &doublet[0].1) + fidelity_with(&psi, &doublet[1].1);
        assert!((proj - 0.999875598051784).abs() < 1e-7, "projection = {proj}");
    }
}

#[test]
fn parity_even_superposition_matches_the_true_ground_state() {
    // The exact eigenstates of the near-degenerate doublet are parity
    // eigenstates (parity commutes with H and the tiny splitting lifts the
    // branch degeneracy). The analytic even superposition must line up with
    // the parity-even member, not an arbitrary doublet vector.
    let q = QubitSpace::new(2);
    let space = FockSpace::new(60);
    let e = params(10.0, 2.5);
    let h = effective_rabi_hamiltonian(&e, space);
    let doublet = lowest_eigenstates(&h, 2);
    let pi = parity::<f64>(q, space);

    let p0 = doublet[0].1.expectation(&pi).re;
    let p1 = doublet[1].1.expectation(&pi).re;
    assert!(p0 > 0.999, "lowest eigenvector should be parity-even, ⟨Π⟩ = {p0}");
    assert!(p1 < -0.999, "second eigenvector should be parity-odd, ⟨Π⟩ = {p1}");

    let sup = ground_state_superposition(&e, space).unwrap();
    let sup_parity = sup.expectation(&pi).re;
    assert!((sup_parity - 1.0).abs() < 1e-6, "superposition parity = {sup_parity}");

    let overlap_even = fidelity_with(&sup, &doublet[0].1);
    let overlap_odd = fidelity_with(&sup, &doublet[1].1);
    assert!((overlap_even - 0.9998755893229497).abs() < 1e-7, "even overlap = {overlap_even}");
    assert!(overlap_odd < 1e-6, "odd overlap = {overlap_odd}");

    // The normalization constant accounts for the finite branch overlap:
    // ‖ψ₊ + ψ₋‖ = √(2 + 2Re⟨ψ₊|ψ₋⟩).
    let plus = ground_state_sp(&e, Branch::Plus, space).unwrap();
    let minus = ground_state_sp(&e, Branch::Minus, space).unwrap();
    let cross = plus.inner(&minus);
    let norm = (2.0 + 2.0 * cross.re).sqrt();
    let raw = plus.amplitudes() + minus.amplitudes();
    let raw_norm = raw.map(|c: Complex<f64>| c.norm_sqr()).sum().sqrt();
    assert!((raw_norm - norm).abs() < 1e-12);
}
