use ddrf::exact::{
    build_mb_hamiltonian, kubo_check, mb_spectrum, spectral_peak, tdse_propagate, DensityCoupling, PerturbationSetup, TimeProfile,
    DEFAULT_DIM_CAP, DEFAULT_GAP_TOL, STEP_LIMIT,
};
use ddrf::grid::{assemble_hamiltonian, build_grid, PotentialSpec};
use ddrf::kernels::InteractionKernel;
use ddrf::linalg;
use nalgebra::DVector;

/// Dipole response of two fermions in a harmonic trap. The three-point
/// stencil lowers the first excitation by about `0.28 dx^2`, so the grid is
/// kept at `dx < 0.24`.
#[test]
fn kohn_mode_at_trap_frequency() {
    let g = build_grid(-6.0, 6.0, 52).unwrap();
    let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
    for w in [InteractionKernel::Zero, InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 }] {
        let mb = build_mb_hamiltonian(&h, &w, DEFAULT_DIM_CAP).unwrap();
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        let e_max = spec.excitations().last().copied().unwrap();
        let dt = 0.9 * STEP_LIMIT / e_max;
        let x = DVector::from_vec(g.points());
        let every = 20;
        let setup =
            PerturbationSetup { v_p: x.clone(), v_o: x, profile: TimeProfile::Step, epsilon: 1e-2, dt, t_final: 30.0, record_every: every };
        let run = tdse_propagate(&spec, &setup).unwrap();
        let peak = spectral_peak(&run.values, dt * every as f64);
        assert!((peak - 1.0).abs() <= 0.02, "{w:?}: peak {peak}");
        assert!(run.norm_drift <= 1e-8);
    }
}

#[test]
fn zero_amplitude_has_zero_deviation() {
    let g = build_grid(-5.0, 5.0, 12).unwrap();
    let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
    let mb = build_mb_hamiltonian(&h, &InteractionKernel::SoftCoulomb { softening: 1.0, strength: 0.5 }, DEFAULT_DIM_CAP).unwrap();
    let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
    let s = DensityCoupling::new(&spec);
    let x = DVector::from_vec(g.points());
    let setup = PerturbationSetup {
        v_p: x.clone(),
        v_o: x,
        profile: TimeProfile::Pulse { frequency: 1.0, center: 2.0, width: 0.5 },
        epsilon: 0.0,
        dt: 0.01 * STEP_LIMIT,
        t_final: 1.0,
        record_every: 1,
    };
    let r = kubo_check(&spec, &s, &setup, &[0.0]).unwrap();
    assert!(r.deviations[0] <= 1e-12, "{:?}", r.deviations);
}

#[test]
fn coupling_rank_matches_its_gram_rank() {
    let g = build_grid(-5.0, 5.0, 14).unwrap();
    let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
    let mb = build_mb_hamiltonian(&h, &InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 }, DEFAULT_DIM_CAP).unwrap();
    let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
    let s = DensityCoupling::new(&spec);
    let img = s.excited_images(&spec) * s.dx.sqrt();
    // Harmonic two-fermion spectra are degenerate; check every group.
    let exc = spec.excitations();
    let mut start = 0;
    for i in 1..=exc.len() {
        if i == exc.len() || exc[i] - exc[i - 1] > 1e-9 {
            let sp = img.columns(start, i - start).into_owned();
            let gram = &sp * sp.transpose();
            let a = linalg::numerical_rank(&sp, 1e-10, 1e-10);
            let b = linalg::numerical_rank(&gram, 1e-10, 1e-20);
            assert_eq!(a, b, "group at {}", exc[start]);
            start = i;
        }
    }
}
