use std::sync::OnceLock;

use approx::assert_relative_eq;
use boussinesq::grid::{FieldState, Grid};
use boussinesq::modulation::{modulate, unstable_projections};
use boussinesq::soliton::{soliton_sum, SolitonFamily};
use boussinesq::spectrum::*;
use boussinesq::ModulationMode;
use ndarray_linalg::{EigValsh, UPLO};
use proptest::prelude::*;

/// p = 3, ω = 0.5 operator and its unstable modes, computed once.
fn supercritical() -> &'static (OperatorAssembly, PegoWeinsteinModes) {
    static CELL: OnceLock<(OperatorAssembly, PegoWeinsteinModes)> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = Grid::new(20.0, 832).unwrap();
        let a = assemble_linearized(3.0, 0.5, &g).unwrap();
        let m = compute_pw_modes(&a).unwrap().expect("unstable mode");
        (a, m)
    })
}

fn min_eig(m: &ndarray::Array2<f64>) -> f64 {
    m.eigvalsh(UPLO::Lower).unwrap()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembly_is_symmetric(p in prop::sample::select(vec![0.5, 1.0, 1.5, 3.0]), w in -0.8..0.8f64) {
        let sp = boussinesq::SolitonParams::new(p, w, 0.0).unwrap();
        let g = Grid::with_max_spacing(12.0, sp.max_spacing()).unwrap();
        let a = assemble_linearized(p, w, &g).unwrap();
        prop_assert!(a.asymmetry() <= 1e-12);
    }

    #[test]
    fn free_operator_bounded_below(w in -0.95..0.95f64) {
        let g = Grid::new(10.0, 128).unwrap();
        let a = OperatorAssembly::free(w, &g).unwrap();
        prop_assert!(min_eig(&a.matrix) >= (1.0 - w.abs()) * (1.0 - 1e-10));
    }
}

#[test]
fn scalar_ground_level_at_rest() {
    // Pöschl–Teller: −∂xx + 1 − 6 sech² has lowest eigenvalue −3
    let g = Grid::new(40.0, 1024).unwrap();
    let a = assemble_linearized(1.0, 0.0, &g).unwrap();
    let lm = min_eig(&a.scalar_operator());
    assert_relative_eq!(lm, -3.0, max_relative = 1e-9);
    assert_relative_eq!(lm, lambda_minus_exact(1.0, 0.0), max_relative = 1e-9);
    assert_relative_eq!(lambda0_formula(lm, 0.0), -3.0, max_relative = 1e-9);
}

#[test]
fn lambda0_is_spectrally_converged() {
    let coarse = assemble_linearized(1.0, 0.5, &Grid::new(20.0, 320).unwrap()).unwrap();
    let fine = assemble_linearized(1.0, 0.5, &Grid::new(20.0, 640).unwrap()).unwrap();
    assert!((min_eig(&coarse.matrix) - min_eig(&fine.matrix)).abs() < 1e-8);
}

#[test]
fn kernel_direction_is_annihilated() {
    let g = Grid::new(32.0, 512).unwrap();
    let a = assemble_linearized(1.0, 0.6, &g).unwrap();
    let (k1, k2) = a.kernel_direction();
    let (r1, r2) = a.apply(&k1, &k2).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rel = (norm(&r1) + norm(&r2)) / (norm(&k1) + norm(&k2));
    // roundoff of the dense product scales with ‖A‖ (bounded by the row-sum norm)
    let op = a.matrix.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    assert!(rel < kernel_tolerance(op), "{rel} vs {}", kernel_tolerance(op));
}

#[test]
fn stable_subcritical_coercivity() {
    let g = Grid::new(24.0, 512).unwrap();
    let a = assemble_linearized(1.0, 0.9, &g).unwrap();
    let c = coercivity_constant(&a, ConstraintSet::SubcriticalPair, None).unwrap();
    assert!(c > 0.0);
}

#[test]
fn unstable_modes_are_biorthogonal_eigenvectors() {
    let (a, m) = supercritical();
    let b = m.biorthogonality();
    assert!(b[0][0].abs() < 1e-8 && b[1][1].abs() < 1e-8);
    assert!((b[0][1] - 1.0).abs() < 1e-8 && (b[1][0] - 1.0).abs() < 1e-8);
    let (rp, rm) = m.eigen_residuals(a).unwrap();
    assert!(rp <= 1e-6 && rm <= 1e-6);
    assert_relative_eq!(m.lambda0, 4.2304, max_relative = 1e-4);
    let (eta, _) = fit_tail_decay(&a.grid, &m.y_plus.u1, 3.0, 1e-10).unwrap();
    assert!(eta > 0.0);
}

#[test]
fn supercritical_triplet_coercivity() {
    let (a, m) = supercritical();
    let c = coercivity_constant(a, ConstraintSet::SupercriticalTriplet, Some(m)).unwrap();
    assert!(c > 0.0);
}

#[test]
fn unstable_mode_projects_to_unit_coefficient() {
    let (_, m) = supercritical();
    let f = SolitonFamily::supercritical(3.0, &[(0.5, 0.0)], &[m.lambda0]).unwrap();
    let g = m.grid().clone();
    let delta = 1e-7;
    let eps = m.y_plus.scaled(delta);
    let state = soliton_sum(&f, &g, 0.0).unwrap().axpy(1.0, &eps).unwrap();
    let d = modulate(&state, &f, ModulationMode::Supercritical).unwrap();
    let gam = unstable_projections(&d, &f, std::slice::from_ref(m)).unwrap();
    assert!((gam[1] / delta - 1.0).abs() < 1e-6, "{gam:?}");
    assert!((gam[0] / delta).abs() < 1e-6, "{gam:?}");
}

#[test]
fn placed_modes_keep_the_pairing() {
    let (_, m) = supercritical();
    let src = m.grid();
    let big = Grid::new(src.half_length() * 2.0, src.n_points() * 2).unwrap();
    let pl = m.placed(&big, 3.0 * src.spacing()).unwrap();
    assert!((pl.y_plus.pairing(&pl.z_minus).unwrap() - 1.0).abs() < 1e-10);
    let bad = Grid::new(src.half_length(), src.n_points() / 2).unwrap();
    assert!(m.placed(&bad, 0.0).is_err());
    let _ = FieldState::zeros(&big, 0.0);
}
