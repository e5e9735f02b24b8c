use approx::assert_relative_eq;
use boussinesq::functionals::{energy, h_distance_to_sum, localized_functionals, momentum, CutoffSystem};
use boussinesq::grid::{h_norm, FieldState};
use boussinesq::soliton::{soliton_sum, SolitonFamily};
use proptest::prelude::*;

#[test]
fn energy_and_momentum_of_moving_soliton() {
    // p = 1: ∫Φ_ω² = 4a, ∫Φ_ω'² = 4a³/3, ∫Φ_ω⁴ = 16a³/3 with a = √(1−ω²)
    for w in [0.0, 0.5, -0.8] {
        let f = SolitonFamily::new(1.0, &[(w, 0.0)]).unwrap();
        let g = f.default_grid(0.0).unwrap();
        let s = soliton_sum(&f, &g, 0.0).unwrap();
        let a = (1.0f64 - w * w).sqrt();
        let e = 2.0 * a * (1.0 + w * w) - 2.0 * a.powi(3) / 3.0;
        assert_relative_eq!(energy(&s, 1.0), e, max_relative = 1e-10);
        assert!((momentum(&s) + 2.0 * a * w).abs() < 1e-10);
    }
}

#[test]
fn localized_momenta_match_single_solitons() {
    let f = SolitonFamily::new(1.0, &[(-0.5, -10.0), (0.5, 10.0)]).unwrap();
    let g = f.default_grid(40.0).unwrap();
    let t = 30.0;
    let cs = CutoffSystem::new(&f);
    let rep = localized_functionals(&soliton_sum(&f, &g, t).unwrap(), &f, &cs, 1.0).unwrap();
    for (j, s) in f.solitons.iter().enumerate() {
        let single = SolitonFamily::new(1.0, &[(s.omega, s.x0)]).unwrap();
        let m = momentum(&soliton_sum(&single, &g, t).unwrap());
        assert!((rep.localized_momenta[j] - m).abs() < 1e-10, "{j}");
    }
}

#[test]
fn shift_distance_is_first_order() {
    let f = SolitonFamily::new(1.0, &[(-0.5, -10.0), (0.5, 10.0)]).unwrap();
    let g = f.default_grid(0.0).unwrap();
    let d = 1e-3;
    let moved = SolitonFamily::new(1.0, &[(-0.5, -10.0), (0.5, 10.0 + d)]).unwrap();
    let state = soliton_sum(&moved, &g, 0.0).unwrap();
    let dist = h_distance_to_sum(&state, &f).unwrap();
    // ‖∂x(Φ_ω, −ωΦ_ω)‖_H for the moved soliton
    let single = SolitonFamily::new(1.0, &[(0.5, 10.0)]).unwrap();
    let r = soliton_sum(&single, &g, 0.0).unwrap();
    let dx = FieldState::new(
        g.clone(),
        g.spectral_derivative(&r.u1, 1).unwrap(),
        g.spectral_derivative(&r.u2, 1).unwrap(),
        0.0,
    )
    .unwrap();
    assert_relative_eq!(dist, d * h_norm(&dx), max_relative = 2e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cutoffs_partition_unity(t in 0.1..60.0f64, w1 in -0.9..-0.1f64, w2 in 0.1..0.9f64) {
        let f = SolitonFamily::new(1.0, &[(w1, -5.0), (0.0, 0.0), (w2, 5.0)]).unwrap();
        let g = f.default_grid(0.0).unwrap();
        let ws = CutoffSystem::new(&f).weights(&g, t).unwrap();
        for i in 0..g.n_points() {
            let s: f64 = ws.iter().map(|w| w[i]).sum();
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }
    }
}
