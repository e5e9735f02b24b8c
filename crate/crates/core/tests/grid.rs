use approx::assert_relative_eq;
use boussinesq::grid::{h_norm, FieldState, Grid};
use proptest::prelude::*;

/// Smooth periodic-compatible field: a few Gaussians well inside the box.
fn bumps(grid: &Grid, params: &[(f64, f64, f64)]) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&x| params.iter().map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp()).sum())
        .collect()
}

fn bump_params() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -5.0..5.0f64, 1.0..2.0f64), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(ps in bump_params()) {
        let g = Grid::new(20.0, 256).unwrap();
        let f = bumps(&g, &ps);
        let c = g.forward(&f);
        let spectral: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spacing() / g.n_points() as f64;
        let direct = g.quadrature(&f.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap();
        prop_assert!((spectral - direct).abs() <= 1e-10 * direct.max(1e-300));
    }

    #[test]
    fn first_derivative_twice_is_second(ps in bump_params()) {
        let g = Grid::new(20.0, 256).unwrap();
        let f = bumps(&g, &ps);
        let d1 = g.spectral_derivative(&f, 1).unwrap();
        let dd = g.spectral_derivative(&d1, 1).unwrap();
        let d2 = g.spectral_derivative(&f, 2).unwrap();
        let scale = d2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = dd.iter().zip(&d2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-10 * scale);
    }

    #[test]
    fn h_norm_triangle_and_homogeneity(
        a in bump_params(), b in bump_params(), c in bump_params(), d in bump_params(),
        k in -5.0..5.0f64,
    ) {
        let g = Grid::new(20.0, 256).unwrap();
        let u = FieldState::new(g.clone(), bumps(&g, &a), bumps(&g, &b), 0.0).unwrap();
        let v = FieldState::new(g.clone(), bumps(&g, &c), bumps(&g, &d), 0.0).unwrap();
        let sum = u.axpy(1.0, &v).unwrap();
        prop_assert!(h_norm(&sum) <= (h_norm(&u) + h_norm(&v)) * (1.0 + 1e-14));
        assert_relative_eq!(h_norm(&u.scaled(k)), k.abs() * h_norm(&u), max_relative = 1e-13);
    }

    #[test]
    fn translations_compose(ps in bump_params(), s1 in -3.0..3.0f64, s2 in -3.0..3.0f64) {
        let g = Grid::new(20.0, 256).unwrap();
        let f = bumps(&g, &ps);
        let once = g.translate(&f, s1 + s2).unwrap();
        let twice = g.translate(&g.translate(&f, s1).unwrap(), s2).unwrap();
        let err = once.iter().zip(&twice).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn whole_cell_translation_is_a_cyclic_shift(ps in bump_params(), cells in -20isize..20) {
        let g = Grid::new(20.0, 256).unwrap();
        let f = bumps(&g, &ps);
        let s = FieldState::new(g.clone(), f.clone(), f.clone(), 0.0).unwrap();
        let shifted = s.shifted_cells(cells);
        let spectral = g.translate(&f, cells as f64 * g.spacing()).unwrap();
        let err = shifted.u1.iter().zip(&spectral).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err < 1e-12);
    }
}

#[test]
fn second_derivative_of_sech_profile() {
    // Φ = √2 sech x solves Φ'' = Φ − Φ³
    let g = Grid::new(40.0, 1024).unwrap();
    let phi: Vec<f64> = g.points().iter().map(|x| 2f64.sqrt() / x.cosh()).collect();
    let d2 = g.spectral_derivative(&phi, 2).unwrap();
    let err = d2
        .iter()
        .zip(&phi)
        .fold(0.0f64, |m, (d, f)| m.max((d - (f - f * f * f)).abs()));
    assert!(err < 1e-10, "{err}");
}

#[test]
fn quadrature_of_sech_squared() {
    let g = Grid::new(40.0, 1024).unwrap();
    let f: Vec<f64> = g.points().iter().map(|x| 2.0 / x.cosh().powi(2)).collect();
    let exact = 2.0 * (40f64.tanh() - (-40f64).tanh());
    assert_relative_eq!(g.quadrature(&f).unwrap(), exact, max_relative = 1e-10);
}

#[test]
fn h_norm_of_rest_soliton() {
    // ‖√2 sech‖² = 4 and ‖(√2 sech)'‖² = 4/3
    let g = Grid::new(40.0, 1024).unwrap();
    let u1: Vec<f64> = g.points().iter().map(|x| 2f64.sqrt() / x.cosh()).collect();
    let s = FieldState::new(g.clone(), u1, vec![0.0; 1024], 0.0).unwrap();
    assert_relative_eq!(h_norm(&s), (4.0f64 + 4.0 / 3.0).sqrt(), max_relative = 1e-10);
}
