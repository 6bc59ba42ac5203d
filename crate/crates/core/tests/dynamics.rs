use std::f64::consts::PI;

use nvgatesim::dynamics::*;
use nvgatesim::hamiltonian::*;
use nvgatesim::ode::{integrate, OdeOptions};
use nvgatesim::{matrix_exponential, CMatrix, StateVector, C64};

const TWO_PI: f64 = 2.0 * PI;

use ElectronLevel::{Minus, Plus, Zero};
use NuclearLevel::{Down, Up};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn grid(t_final: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { t_final } else { t_final * k as f64 / n as f64 }).collect()
}

fn superposition(a: usize, b: usize) -> StateVector {
    let r = 0.5f64.sqrt();
    let mut v = StateVector::new(vec![c(0.0, 0.0); 6]);
    v[a] = c(r, 0.0);
    v[b] = c(r, 0.0);
    v
}

#[test]
fn zero_hamiltonian_keeps_state() {
    let psi = superposition(1, 2);
    let r = evolve_schrodinger(&CMatrix::zeros(6, 6), &psi, 1e-6, &grid(1e-6, 4)).unwrap();
    for s in &r.states {
        assert_eq!(s, &QuantumState::Pure(psi.clone()));
    }
}

#[test]
fn constant_hamiltonian_matches_propagator() {
    let h = CMatrix::from_fn(6, 6, |i, j| {
        let x = ((i * 5 + j * 3) % 7) as f64 - 3.0;
        let y = if i == j { 0.0 } else { (i as f64 - j as f64) * 0.4 };
        c(x, y)
    });
    let h = (&h + &h.adjoint()).scale_real(1e7);
    let psi = superposition(0, 3);
    // ~10 rad of accumulated phase; global error scales with phase times rtol
    let t = 2e-7;
    let int = Integration { t0: 0.0, options: OdeOptions { rtol: 1e-11, atol: 1e-14, ..OdeOptions::default() } };
    let r = evolve_schrodinger_with(&h, &psi, t, &[], &int).unwrap();
    let exact = matrix_exponential(&h, c(0.0, -t)).unwrap().apply(&psi).unwrap();
    let QuantumState::Pure(got) = r.final_state() else { panic!("pure state expected") };
    let diff = got.as_slice().iter().zip(exact.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff:e}");
    assert!((got.norm() - 1.0).abs() < nvgatesim::tol::NORM);
}

/// Times at which `p` crosses 1/2, linearly interpolated.
fn half_crossings(times: &[f64], p: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..p.len() {
        let (a, b) = (p[k - 1] - 0.5, p[k] - 0.5);
        if a * b < 0.0 {
            out.push(times[k - 1] + (times[k] - times[k - 1]) * a / (a - b));
        }
    }
    out
}

#[test]
fn rabi_oscillation_matches_effective_model() {
    let p = SystemParams::defaults();
    let d = DriveParams::electron_resonant(&p, TWO_PI * 62.5e6, -PI, Polarization::Unpolarized);
    let h = ModelHamiltonian::interaction(&p, &d);
    let period = TWO_PI / (d.omega0 / 2f64.sqrt());
    let t_final = 3.0 * period;
    let times = grid(t_final, 600);
    let psi0 = basis_state(Zero, Down);
    let full = evolve_schrodinger(&h, &psi0, t_final, &times).unwrap();
    let p_full: Vec<f64> = full.states.iter().map(|s| s.populations()[basis_index(Plus, Down)]).collect();

    let heff = effective_driven_h(&p, &d);
    let q0 = StateVector::basis(4, 0);
    let p_eff: Vec<f64> = times
        .iter()
        .map(|&t| matrix_exponential(&heff, c(0.0, -t)).unwrap().apply(&q0).unwrap()[2].norm_sqr())
        .collect();

    let xf = half_crossings(&times, &p_full);
    let xe = half_crossings(&times, &p_eff);
    assert_eq!(xf.len(), 6);
    assert_eq!(xe.len(), 6);
    // two crossings per cycle
    let period_full = (xf[5] - xf[1]) / 2.0;
    let period_eff = (xe[5] - xe[1]) / 2.0;
    let rel = (period_full / period_eff - 1.0).abs();
    assert!(rel < 0.01, "Rabi period mismatch {rel:e}");
    for (a, b) in xf.iter().zip(&xe) {
        assert!((a - b).abs() < 0.01 * period_eff, "crossing {a:e} vs {b:e}");
    }
}

fn zero_h() -> CMatrix {
    CMatrix::zeros(6, 6)
}

#[test]
fn electron_relaxation_follows_rate_equations() {
    let gamma = 2e6;
    let noise = NoiseParams { gamma_e1: gamma, ..NoiseParams::noiseless() };
    let rho0 = QuantumState::Pure(basis_state(Plus, Up));
    let times = grid(1e-6, 20);
    let r = evolve_lindblad(&zero_h(), &noise, &rho0, 1e-6, &times).unwrap();
    r.check_cptp().unwrap();
    for (t, s) in r.times.iter().zip(&r.states) {
        let pops = s.populations();
        // ⟨+1|S₊S₋|+1⟩ = ⟨0|S₊S₋|0⟩ = 2
        let k = 2.0 * gamma * t;
        let plus = (-k).exp();
        let zero = k * (-k).exp();
        assert!((pops[basis_index(Plus, Up)] - plus).abs() < 1e-8, "t = {t}");
        assert!((pops[basis_index(Zero, Up)] - zero).abs() < 1e-8, "t = {t}");
        assert!((pops[basis_index(Minus, Up)] - (1.0 - plus - zero)).abs() < 1e-8, "t = {t}");
    }
}

#[test]
fn nuclear_dephasing_decays_coherence() {
    let gamma = 3e5;
    let noise = NoiseParams { gamma_n2: gamma, ..NoiseParams::noiseless() };
    let psi = superposition(basis_index(Zero, Up), basis_index(Zero, Down));
    let times = grid(5e-6, 10);
    let r = evolve_lindblad(&zero_h(), &noise, &QuantumState::Pure(psi), 5e-6, &times).unwrap();
    r.check_cptp().unwrap();
    for (t, s) in r.times.iter().zip(&r.states) {
        let rho_n = nvgatesim::partial_trace_electron(&s.density()).unwrap();
        assert!((rho_n[(0, 1)].re - 0.5 * (-2.0 * gamma * t).exp()).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn thermal_occupations_drive_towards_mixture() {
    let noise = NoiseParams { gamma_n1: 1e6, nbar_n: 1.0, ..NoiseParams::noiseless() };
    let r = evolve_lindblad(&zero_h(), &noise, &QuantumState::Pure(basis_state(Zero, Up)), 2e-5, &[]).unwrap();
    let pops = r.final_state().populations();
    // n̄ = 1: down rate 2Γ, up rate Γ → p↑ = 1/3
    assert!((pops[basis_index(Zero, Up)] - 1.0 / 3.0).abs() < 1e-6);
}

#[test]
fn noiseless_lindblad_matches_schrodinger() {
    let p = SystemParams::defaults();
    let d = DriveParams::electron_resonant(&p, TWO_PI * 125e6, -PI / 2.0, Polarization::Unpolarized);
    let h = ModelHamiltonian::interaction(&p, &d);
    let psi = superposition(basis_index(Zero, Up), basis_index(Zero, Down));
    let times = grid(8e-9, 16);
    let a = evolve_schrodinger(&h, &psi, 8e-9, &times).unwrap();
    let b = evolve_lindblad(&h, &NoiseParams::noiseless(), &QuantumState::Pure(psi), 8e-9, &times).unwrap();
    b.check_cptp().unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        let QuantumState::Pure(psi_t) = sa else { panic!() };
        assert!((1.0 - sb.overlap(psi_t).unwrap()).abs() < 1e-8);
    }
}

#[test]
fn lindblad_map_is_linear() {
    let p = SystemParams::defaults();
    let d = DriveParams::electron_resonant(&p, TWO_PI * 62.5e6, -PI, Polarization::Unpolarized);
    let h = ModelHamiltonian::interaction(&p, &d);
    let noise = NoiseParams { gamma_e1: 1e6, gamma_n1: 5e5, gamma_n2: 2e5, nbar_e: 0.3, nbar_n: 0.1, ..NoiseParams::noiseless() };
    let r1 = basis_state(Zero, Up).density();
    let r2 = superposition(basis_index(Plus, Down), basis_index(Zero, Down)).density();
    let alpha = 0.3;
    let mix = &r1.scale_real(alpha) + &r2.scale_real(1.0 - alpha);
    let t = 5e-9;
    let run = |rho: &CMatrix| evolve_lindblad(&h, &noise, &QuantumState::Mixed(rho.clone()), t, &[]).unwrap();
    let (e1, e2, em) = (run(&r1), run(&r2), run(&mix));
    let combo = &e1.final_state().density().scale_real(alpha) + &e2.final_state().density().scale_real(1.0 - alpha);
    assert!(em.final_state().density().max_abs_diff(&combo) < 1e-9);
}

#[test]
fn zero_lambda_equals_lindblad() {
    let noise = NoiseParams { lambda_e: 0.0, ensemble_size: 8, ..NoiseParams::defaults() };
    let h = ModelHamiltonian::interaction(&SystemParams::defaults(), &DriveParams::off());
    let rho0 = QuantumState::Pure(superposition(1, 2));
    let a = evolve_with_quasistatic_noise(&h, &noise, &rho0, 2e-8, &grid(2e-8, 4), 11).unwrap();
    let b = evolve_lindblad(&h, &noise, &rho0, 2e-8, &grid(2e-8, 4)).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn free_induction_decay_is_gaussian() {
    let t2 = DEFAULT_T2_STAR;
    let noise = NoiseParams { ensemble_size: 256, ..NoiseParams::noiseless() }.with_t2_star(t2);
    let psi = superposition(basis_index(Plus, Up), basis_index(Zero, Up));
    let times = grid(t2, 10);
    let r = evolve_with_quasistatic_noise(&zero_h(), &noise, &QuantumState::Pure(psi), t2, &times, 2024).unwrap();
    r.check_cptp().unwrap();
    for (t, s) in r.times.iter().zip(&r.states) {
        let rho_e = nvgatesim::partial_trace_nucleus(&s.density()).unwrap();
        let coherence = 2.0 * rho_e[(0, 1)].norm();
        let envelope = (-(t / t2).powi(2)).exp();
        assert!((coherence - envelope).abs() < 0.05, "t = {t:e}: {coherence} vs {envelope}");
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    let noise = NoiseParams { ensemble_size: 6, gamma_e1: 1e5, ..NoiseParams::defaults() };
    let h = ModelHamiltonian::interaction(&SystemParams::defaults(), &DriveParams::off());
    let rho0 = QuantumState::Pure(superposition(1, 2));
    let run = || evolve_with_quasistatic_noise(&h, &noise, &rho0, 1e-6, &grid(1e-6, 5), 99).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.states, b.states);
    assert_eq!(a.step_count, b.step_count);
    let other = evolve_with_quasistatic_noise(&h, &noise, &rho0, 1e-6, &grid(1e-6, 5), 100).unwrap();
    assert_ne!(a.states, other.states);
}

#[test]
fn lab_and_interaction_frames_agree_without_drive() {
    let p = SystemParams::defaults();
    let d = DriveParams::off();
    let lab = ModelHamiltonian::lab(&p, &d);
    let rot = ModelHamiltonian::interaction(&p, &d);
    let r = 0.5;
    let psi = StateVector::new(vec![c(r, 0.0), c(0.0, r), c(r, 0.0), c(-r, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let times = grid(1e-6, 10);
    // the lab frame accumulates ~2e4 rad per microsecond, so the default
    // tolerance is too loose for a 1e-7 comparison
    let int = Integration { t0: 0.0, options: OdeOptions { rtol: 1e-11, atol: 1e-14, ..OdeOptions::default() } };
    let a = evolve_schrodinger_with(&lab, &psi, 1e-6, &times, &int).unwrap();
    let b = evolve_schrodinger_with(&rot, &psi, 1e-6, &times, &int).unwrap();
    let energies = rot.frame_energies().to_vec();
    for ((t, sa), sb) in a.times.iter().zip(&a.states).zip(&b.states) {
        let QuantumState::Pure(moved) = sa.rotate_frame(&energies, *t, 1.0).unwrap() else { panic!() };
        let infidelity = 1.0 - sb.overlap(&moved).unwrap();
        assert!(infidelity.abs() < 1e-7, "t = {t:e}: {infidelity:e}");
    }
}

#[test]
fn invalid_initial_states_are_rejected() {
    let bad = QuantumState::Mixed(CMatrix::identity(6));
    assert!(evolve_lindblad(&zero_h(), &NoiseParams::noiseless(), &bad, 1e-9, &[]).is_err());
    let unnormalized = StateVector::new(vec![c(1.0, 0.0); 6]);
    assert!(evolve_schrodinger(&zero_h(), &unnormalized, 1e-9, &[]).is_err());
    assert!(evolve_schrodinger(&zero_h(), &StateVector::basis(4, 0), 1e-9, &[]).is_err());
}

#[test]
fn integrator_order_is_five() {
    // a smooth non-autonomous problem: y' = -i (1 + 0.5 cos t) y
    let exact = |t: f64| C64::from_polar(1.0, -(t + 0.5 * t.sin()));
    let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = c(0.0, -(1.0 + 0.5 * t.cos())) * y[0];
    let t_end = 20.0;
    let mut pts = Vec::new();
    let mut rtol = 1e-5;
    for _ in 0..8 {
        let opts = OdeOptions { rtol, atol: rtol * 1e-3, ..OdeOptions::default() };
        let sol = integrate(f, 0.0, &[c(1.0, 0.0)], &[t_end], &opts).unwrap();
        let err = (sol.states[0][0] - exact(t_end)).norm();
        pts.push(((sol.stats.accepted as f64).ln(), err.ln()));
        rtol /= 2.0;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 5.0).abs() < 0.7, "error ~ steps^{slope}");
}
