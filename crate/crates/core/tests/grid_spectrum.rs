use ddrf::grid::{assemble_hamiltonian, build_grid, diagonalize, PotentialSpec};
use ddrf::linalg::fitted_order;

fn harmonic_levels(x: f64, n: usize, count: usize) -> Vec<f64> {
    let g = build_grid(-x, x, n).unwrap();
    let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
    diagonalize(&h).unwrap().eigenvalues.iter().take(count).copied().collect()
}

/// The three-point stencil lowers level `j` by `dx^2 (2 j^2 + 2 j + 1) / 32`
/// to leading order, which is 1.02e-3 for `j = 2` at `dx = 0.05`.
#[test]
fn harmonic_levels_on_a_fine_grid() {
    let e = harmonic_levels(10.0, 401, 3);
    let dx: f64 = 0.05;
    for (j, v) in e.iter().enumerate() {
        let jf = j as f64;
        let exact = jf + 0.5;
        if j < 2 {
            assert!((v - exact).abs() < 1e-3, "level {j}: {v}");
        }
        let corrected = exact - dx * dx * (2.0 * jf * jf + 2.0 * jf + 1.0) / 32.0;
        assert!((v - corrected).abs() < 1e-5, "level {j}: {v} vs {corrected}");
    }
}

#[test]
fn particle_in_a_box() {
    let g = build_grid(0.0, std::f64::consts::PI, 2001).unwrap();
    let eig = diagonalize(&assemble_hamiltonian(&g, &PotentialSpec::Tabulated { values: vec![0.0; 2001] }).unwrap()).unwrap();
    // Dirichlet walls sit one spacing outside the grid ends.
    let width = std::f64::consts::PI + 2.0 * g.dx();
    for j in 1..=3 {
        let want = 0.5 * (j as f64 * std::f64::consts::PI / width).powi(2);
        let got = eig.eigenvalues[j - 1];
        assert!((got - want).abs() < 1e-3, "j = {j}: {got} vs {want}");
        assert!((got - 0.5 * (j * j) as f64).abs() < 1e-2);
    }
    assert!(eig.orthonormality_residual() < 1e-10);
}

#[test]
fn second_order_convergence() {
    let ns = [81, 161, 321];
    let dxs: Vec<f64> = ns.iter().map(|&n| 16.0 / (n - 1) as f64).collect();
    let levels: Vec<Vec<f64>> = ns.iter().map(|&n| harmonic_levels(8.0, n, 3)).collect();
    for j in 0..3 {
        let err: Vec<f64> = levels.iter().map(|l| (l[j] - (j as f64 + 0.5)).abs()).collect();
        let p = fitted_order(&dxs, &err);
        assert!((p - 2.0).abs() <= 0.3, "level {j}: order {p}");
    }
    let d1 = (levels[0][0] - levels[1][0]).abs();
    let d2 = (levels[1][0] - levels[2][0]).abs();
    assert!(d2 < d1);
}

#[test]
fn diagonalization_is_deterministic() {
    let g = build_grid(-6.0, 6.0, 90).unwrap();
    let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 0.7 }).unwrap();
    let a = diagonalize(&h).unwrap();
    let b = diagonalize(&h).unwrap();
    assert_eq!(a.eigenvectors, b.eigenvectors);
    for k in 0..a.eigenvectors.ncols() {
        let first = a.eigenvectors.column(k).iter().copied().find(|v| v.abs() > 1e-12).unwrap();
        assert!(first > 0.0);
    }
}
