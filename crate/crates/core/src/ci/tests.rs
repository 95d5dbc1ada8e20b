use nalgebra::SymmetricEigen;

use super::*;
use crate::coupled::PulseSpec;

fn params(n_b: usize, n_i: usize, g_bb: f64, g_bi: f64) -> SystemParams {
    SystemParams { n_b, n_i, g_bb, g_bi, ..Default::default() }
}

fn cfg(d_b: usize, d_i: usize) -> CiConfig {
    CiConfig { grid_points: 96, half_width: 9.0, d_b, d_i, ..Default::default() }
}

fn dense_min(m: &CsrMatrix, mask: impl Fn(usize) -> bool) -> f64 {
    let keep: Vec<usize> = (0..m.n).filter(|&i| mask(i)).collect();
    let d = m.to_dense();
    let sub = nalgebra::DMatrix::from_fn(keep.len(), keep.len(), |i, j| d[(keep[i], keep[j])]);
    SymmetricEigen::new(sub).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn noninteracting_energy_is_zero_point_sum() {
    let sys = CiSystem::new(&params(3, 1, 0.0, 0.0), &cfg(3, 3)).unwrap();
    let (e, _) = sys.ground_state(0).unwrap();
    assert!((e - 2.0).abs() < 1e-8, "{e}");
    // diagonal with oscillator sums
    let h = &sys.parts.h0;
    assert_eq!(h.nnz(), h.n);
    for (r, occ) in sys.basis.bath_states().iter().enumerate() {
        let expect: f64 = occ.iter().enumerate().map(|(k, &n)| n as f64 * (k as f64 + 0.5)).sum::<f64>() + 0.5;
        assert!((h.get(r * sys.basis.imp_dim(), r * sys.basis.imp_dim()) - expect).abs() < 1e-8);
    }
}

#[test]
fn two_level_rabi_spectrum() {
    let sys = CiSystem::new(&params(0, 1, 0.0, 0.0), &cfg(1, 1)).unwrap();
    let (w, d) = (3.0, 1.7);
    let h = sys.hamiltonian(&PulseSpec::pump(w, d, 1.0)).unwrap();
    assert_eq!(h.n, 2);
    let ev = SymmetricEigen::new(h.to_dense()).eigenvalues;
    let half = 0.5 * (w * w + d * d).sqrt();
    let mut ev: Vec<f64> = ev.iter().map(|e| e - 0.5).collect();
    ev.sort_by(f64::total_cmp);
    assert!((ev[0] + half).abs() < 1e-8 && (ev[1] - half).abs() < 1e-8);
}

#[test]
fn lanczos_agrees_with_dense() {
    let mut p = params(1, 1, 0.0, 0.5);
    p.g_bb = 0.5;
    let sys = CiSystem::new(&p, &cfg(5, 5)).unwrap();
    let (e, _) = sys.ground_state(1).unwrap();
    let exact = dense_min(&sys.parts.h0, |r| sys.basis.n_up(sys.basis.split(r).1) == 1);
    assert!((e - exact).abs() < 1e-10);
    assert!(sys.parts.h0.symmetry_residual() < 1e-14);
}

#[test]
fn attraction_lowers_energy_monotonically() {
    let mut last = f64::INFINITY;
    for g in [0.0, -0.3, -0.6, -1.0, -1.5] {
        let sys = CiSystem::new(&params(2, 1, 0.5, g), &cfg(4, 4)).unwrap();
        let (e, _) = sys.ground_state(1).unwrap();
        assert!(e < last + 1e-12);
        last = e;
    }
}

#[test]
fn variational_in_basis_size() {
    let p = params(2, 1, 0.5, 1.5);
    let mut last = f64::INFINITY;
    for d in 2..=6 {
        let c = CiConfig { spin_filter: Some(1), ..cfg(d, d) };
        let (e, _) = CiSystem::new(&p, &c).unwrap().ground_state(1).unwrap();
        assert!(e <= last + 1e-10, "d={d}: {e} > {last}");
        last = e;
    }
}

#[test]
fn fermion_pair_fills_two_orbitals() {
    let p = SystemParams { statistics: Statistics::Fermion, ..params(1, 2, 0.0, 0.0) };
    let sys = CiSystem::new(&p, &cfg(2, 3)).unwrap();
    let (e, _) = sys.ground_state(2).unwrap();
    assert!((e - 2.5).abs() < 1e-8, "{e}");
    // opposite spins share the lowest orbital
    let (e, _) = sys.ground_state(1).unwrap();
    assert!((e - 1.5).abs() < 1e-8);
}

#[test]
fn schmidt_spectra() {
    let l = schmidt_decompose(&[C64::new(1.0, 0.0), ZERO, ZERO, ZERO], 2, 2).unwrap();
    assert!((l[0] - 1.0).abs() < 1e-15 && l[1].abs() < 1e-15);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let l = schmidt_decompose(&[C64::new(h, 0.0), ZERO, ZERO, C64::new(h, 0.0)], 2, 2).unwrap();
    assert!((l[0] - 0.5).abs() < 1e-12 && (l[1] - 0.5).abs() < 1e-12);

    let sys = CiSystem::new(&params(2, 1, 0.5, 1.5), &CiConfig { spin_filter: Some(1), ..cfg(4, 4) }).unwrap();
    let (_, gs) = sys.ground_state(1).unwrap();
    let lam = sys.schmidt_spectrum(&gs).unwrap();
    assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(lam.windows(2).all(|w| w[0] >= w[1]));
    assert!(lam[1] > 1e-3, "{lam:?}");
    // independent route: eigenvalues of the reduced bath density matrix
    let (r, c) = (sys.basis.bath_dim(), sys.basis.imp_dim());
    let m = nalgebra::DMatrix::from_fn(r, c, |i, j| gs.amps[i * c + j].re);
    let mut ev: Vec<f64> = SymmetricEigen::new(&m * m.transpose()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    assert!((ev[1] - lam[1]).abs() < 1e-10);
}

#[test]
fn krylov_conserves_energy_and_norm() {
    let sys = CiSystem::new(&params(1, 1, 0.0, 1.0), &cfg(3, 3)).unwrap();
    let pulse = PulseSpec::pump(2.0, 0.7, 100.0);
    let h = sys.hamiltonian(&pulse).unwrap();
    let mut s = sys.initial_state().unwrap();
    let e0 = h.expectation(&s.amps);
    for _ in 0..10_000 {
        s.amps = krylov_propagate(&h, &s.amps, 0.01, &KrylovOptions::default()).unwrap();
    }
    assert!((h.expectation(&s.amps) - e0).abs() < 1e-10);
    assert!((s.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn dark_evolution_keeps_spin() {
    let sys = CiSystem::new(&params(2, 1, 0.5, 1.5), &cfg(3, 4)).unwrap();
    let s0 = sys.initial_state().unwrap();
    let pumped = sys.evolve(&s0, &PulseSpec::pump(4.0, 1.0, 0.4), 0.01, 1.0, |_| Ok(())).unwrap();
    let (u0, _) = sys.spin_populations(&pumped);
    assert!(u0 > 0.1);
    let mut worst: f64 = 0.0;
    sys.evolve(&pumped, &PulseSpec::dark(3.0), 0.01, 0.1, |s| {
        worst = worst.max((sys.spin_populations(s).0 - u0).abs());
        Ok(())
    })
    .unwrap();
    assert!(worst < 1e-10);
}

#[test]
fn blasts_and_flip() {
    let sys = CiSystem::new(&params(1, 1, 0.0, 1.0), &cfg(2, 3)).unwrap();
    let s0 = sys.initial_state().unwrap();
    assert!(matches!(sys.blast_project(&s0), Err(Error::EmptyProjection(_))));
    let up = sys.flip_down_to_up(&s0).unwrap();
    assert!((sys.spin_populations(&up).0 - 1.0).abs() < 1e-12);
    assert!(sys.flip_down_to_up(&up).is_err());
    let half = sys.evolve(&s0, &PulseSpec::pump(1.0, 0.0, std::f64::consts::FRAC_PI_2), 0.01, 1.0, |_| Ok(())).unwrap();
    let p = sys.blast_project(&half).unwrap();
    assert!((sys.spin_populations(&p).0 - 1.0).abs() < 1e-12);
    let d = sys.blast_dissipative(&half, 5.0, 2.0).unwrap();
    assert!(sys.spin_populations(&d).1 < 1e-8);
}

#[test]
fn density_matrices_have_right_traces() {
    let sys = CiSystem::new(&params(2, 1, 0.5, 1.0), &cfg(3, 4)).unwrap();
    let s0 = sys.initial_state().unwrap();
    let rb = sys.one_body_density_matrix(&s0, Species::Bath);
    assert!((rb.trace() - 2.0).abs() < 1e-10);
    assert!(rb.hermiticity_residual() < 1e-12);
    let rd = sys.one_body_density_matrix(&s0, Species::Down);
    assert!((rd.trace() - 1.0).abs() < 1e-10);
    assert!(sys.one_body_density_matrix(&s0, Species::Up).trace().abs() < 1e-12);
}

#[test]
fn structure_factor_starts_at_one_and_stays_bounded() {
    let sys = CiSystem::new(&params(1, 1, 0.0, 1.5), &cfg(3, 4)).unwrap();
    let s0 = sys.initial_state().unwrap();
    let sf = sys.structure_factor(&s0, 2.0, 0.01, 0.1).unwrap();
    assert!((sf[0].1 - 1.0).abs() < 1e-12);
    assert!(sf.iter().all(|&(_, s)| s <= 1.0 + 1e-12));
    assert!(sf.last().unwrap().1 < 0.999);
}

#[test]
fn convergence_deviation_cases() {
    let a = nalgebra::DMatrix::from_element(4, 4, 1.0);
    assert_eq!(convergence_deviation(&a, &a).unwrap(), 0.0);
    let b = nalgebra::DMatrix::from_element(4, 4, 0.9);
    assert!((convergence_deviation(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    assert!(convergence_deviation(&a, &nalgebra::DMatrix::zeros(3, 3)).is_err());
}
