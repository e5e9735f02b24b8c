use std::sync::OnceLock;

use boussinesq::builder::*;
use boussinesq::grid::{h_norm, FieldState, Grid};
use boussinesq::{Error, PegoWeinsteinModes, SolitonFamily};
use ndarray::Array1;
use ndarray_linalg::Inverse;
use proptest::prelude::*;

fn pair_family(shift: f64) -> SolitonFamily {
    SolitonFamily::new(1.0, &[(-0.5, -10.0 + shift), (0.5, 10.0 + shift)]).unwrap()
}

/// Two supercritical solitons with their modes on the default grid for T = 40.
fn super_pair() -> &'static (SolitonFamily, Vec<PegoWeinsteinModes>, Grid) {
    static CELL: OnceLock<(SolitonFamily, Vec<PegoWeinsteinModes>, Grid)> = OnceLock::new();
    CELL.get_or_init(|| {
        let sp = [(0.3, -5.0), (0.6, 5.0)];
        let pre = SolitonFamily::supercritical(3.0, &sp, &[1.0, 1.0]).unwrap();
        let g = pre.default_grid(40.0).unwrap();
        let (f, m) = supercritical_setup(3.0, &sp, &g, 20.0).unwrap();
        (f, m, g)
    })
}

#[test]
fn subcritical_pair_over_short_horizon() {
    let f = pair_family(0.0);
    let times = [14.0, 16.0, 18.0];
    let cfg = BuildConfig::new(&f, &times).unwrap();
    let run = build_subcritical(&f, 10.0, &times, &cfg).unwrap();
    assert!(run.all_reached_t0());
    for (tn, s) in times.iter().zip(&run.error_series) {
        assert_eq!(s[0], (*tn, 0.0));
        assert!(s.iter().all(|(_, e)| e.is_finite()));
        assert!((s.last().unwrap().0 - 10.0).abs() < 1e-12);
    }
    assert!(run.uniform_bound_holds());
    assert!(run.cauchy_strictly_decreasing(), "{:?}", run.cauchy_series);
}

#[test]
fn single_soliton_is_exact() {
    let f = SolitonFamily::new(1.0, &[(0.5, 0.0)]).unwrap();
    let cfg = BuildConfig::new(&f, &[20.0]).unwrap();
    let run = build_subcritical(&f, 10.0, &[20.0], &cfg).unwrap();
    assert!(run.error_series[0].iter().all(|&(_, e)| e == 0.0));
    let mut d = cfg.clone();
    d.model = ForcingModel::Discrete;
    let run = build_subcritical(&f, 10.0, &[20.0], &d).unwrap();
    // only the grid's discretization defect drives the run
    assert!(run.error_series[0].iter().all(|&(_, e)| e < 1e-8));
}

#[test]
fn construction_is_translation_covariant() {
    let times = [13.0, 15.0];
    let f = pair_family(0.0);
    let cfg = BuildConfig::new(&f, &times).unwrap();
    let h = cfg.grid.spacing();
    let g = pair_family(h);
    let a = build_subcritical(&f, 10.0, &times, &cfg).unwrap();
    let b = build_subcritical(&g, 10.0, &times, &cfg).unwrap();
    for (ta, tb) in a.perturbations.iter().zip(&b.perturbations) {
        for (sa, sb) in ta.states.iter().zip(&tb.states) {
            let d = sa.shifted_cells(1).sub(sb).unwrap();
            assert!(h_norm(&d) < 1e-12 * (1.0 + h_norm(sa)) + 1e-15);
        }
    }
}

#[test]
fn rejects_bad_time_lists() {
    let f = pair_family(0.0);
    let cfg = BuildConfig::new(&f, &[30.0]).unwrap();
    assert!(build_subcritical(&f, 10.0, &[30.0, 20.0], &cfg).is_err());
    assert!(build_subcritical(&f, 30.0, &[30.0], &cfg).is_err());
    assert!(build_subcritical(&f, 0.0, &[], &cfg).is_err());
}

#[test]
fn gram_matrix_is_near_identity() {
    let (f, m, g) = super_pair();
    let gram = final_data_gram(f, m, g, 40.0).unwrap();
    for j in 0..2 {
        for k in 0..2 {
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((gram[[j, k]] - target).abs() < 1e-6, "{gram}");
        }
    }
}

#[test]
fn corrected_final_data_is_exact() {
    let (f, m, g) = super_pair();
    let mut cfg = BuildConfig::new(f, &[12.0]).unwrap();
    cfg.grid = g.clone();
    let alpha = [3e-9, -2e-9];
    let run = backward_with_correction(f, m, &alpha, 12.0, 11.5, &cfg).unwrap();
    let first = run.perturbation.first();
    let pl0 = m[0].time_reversed().placed(g, f.solitons[0].position(12.0)).unwrap();
    let pl1 = m[1].time_reversed().placed(g, f.solitons[1].position(12.0)).unwrap();
    let intended = FieldState::zeros(g, 12.0)
        .axpy(alpha[0], &pl0.y_plus)
        .unwrap()
        .axpy(alpha[1], &pl1.y_plus)
        .unwrap();
    assert_eq!(first.u1, intended.u1);
    assert_eq!(first.u2, intended.u2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_bounded_by_twice_a_minus(a in prop::collection::vec(-1.0..1.0f64, 2)) {
        let (f, m, g) = super_pair();
        let inv = final_data_gram(f, m, g, 30.0).unwrap().inv().unwrap();
        let am = Array1::from(a);
        let alpha = inv.dot(&am);
        prop_assert!(alpha.dot(&alpha).sqrt() <= 2.0 * am.dot(&am).sqrt() + 1e-300);
    }

    #[test]
    fn fit_tolerates_tiny_noise(rate in 0.05..2.0f64, c in 0.1..10.0f64, seed in any::<u64>()) {
        let mut state = seed | 1;
        let series: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let noise = 1e-12 * ((state % 2001) as f64 / 1000.0 - 1.0);
                let t = 0.25 * i as f64;
                (t, c * (-rate * t).exp() + noise)
            })
            .collect();
        let (r, _, _) = fit_exponential(&series).unwrap();
        prop_assert!((r - rate).abs() < 1e-3);
    }
}

#[test]
fn fit_edge_cases() {
    let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.3)).collect();
    let (r, c, r2) = fit_exponential(&flat).unwrap();
    assert!(r.abs() < 1e-15 && (c - 0.3).abs() < 1e-15 && r2 == 1.0);
    let exact: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (-0.3 * i as f64).exp())).collect();
    assert!((fit_exponential(&exact).unwrap().0 - 0.3).abs() < 1e-6);
    assert!(matches!(
        fit_exponential(&exact[..3]),
        Err(Error::InsufficientData { needed: 4, got: 3 })
    ));
}
