use boussinesq::evolution::evolve;
use boussinesq::grid::{h_norm, FieldState, Grid};
use boussinesq::modulation::{modulate, modulate_from, parameter_drift_bound_check};
use boussinesq::soliton::{soliton_sum, SolitonFamily};
use boussinesq::{Direction, EvolveConfig, ModulationMode};
use proptest::prelude::*;

const SUB: ModulationMode = ModulationMode::Subcritical;

fn pair() -> (SolitonFamily, Grid) {
    let f = SolitonFamily::new(1.0, &[(-0.5, -10.0), (0.5, 10.0)]).unwrap();
    let g = f.default_grid(0.0).unwrap();
    (f, g)
}

fn shifted(f: &SolitonFamily, dw: &[f64], dx: &[f64]) -> SolitonFamily {
    let sp: Vec<(f64, f64)> = f
        .solitons
        .iter()
        .enumerate()
        .map(|(j, s)| (s.omega + dw[j], s.x0 + dx[j]))
        .collect();
    SolitonFamily::new(f.p, &sp).unwrap()
}

/// A smooth generic perturbation with unit H norm.
fn generic(g: &Grid) -> FieldState {
    let x = g.points();
    let u1 = x.iter().map(|x| (-(x - 9.0).powi(2)).exp() - 0.5 * (-(x + 12.0).powi(2) / 2.0).exp()).collect();
    let u2 = x.iter().map(|x| 0.7 * (x - 10.0) * (-(x - 10.0).powi(2)).exp()).collect();
    let s = FieldState::new(g.clone(), u1, u2, 0.0).unwrap();
    s.scaled(1.0 / h_norm(&s))
}

/// Generic perturbation with its u1 part orthogonalized against every
/// (Φ_j, ∂xΦ_j).
fn orthogonal(f: &SolitonFamily, g: &Grid) -> FieldState {
    let mut p = generic(g);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let single_sum = |s: &boussinesq::SolitonParams| {
        let one = SolitonFamily::new(f.p, &[(s.omega, s.x0)]).unwrap();
        soliton_sum(&one, g, 0.0).unwrap().u1
    };
    for s in &f.solitons {
        let phi = single_sum(s);
        basis.push(g.spectral_derivative(&phi, 1).unwrap());
        basis.push(phi);
    }
    // modified Gram–Schmidt, twice for stability
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for mut b in basis {
        for _ in 0..2 {
            for q in &ortho {
                let c = g.inner(&b, q).unwrap();
                b.iter_mut().zip(q).for_each(|(v, w)| *v -= c * w);
            }
        }
        let n = g.inner(&b, &b).unwrap().sqrt();
        ortho.push(b.iter().map(|v| v / n).collect());
    }
    for _ in 0..2 {
        for q in &ortho {
            let c = g.inner(&p.u1, q).unwrap();
            p.u1.iter_mut().zip(q).for_each(|(v, w)| *v -= c * w);
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recovers_parameters_of_a_modulated_sum(
        dw in prop::collection::vec(-1e-3..1e-3f64, 2),
        dx in prop::collection::vec(-1e-2..1e-2f64, 2),
    ) {
        let (f, g) = pair();
        let truth = shifted(&f, &dw, &dx);
        let d = modulate(&soliton_sum(&truth, &g, 0.0).unwrap(), &f, SUB).unwrap();
        let w = d.tilde_omegas.as_ref().unwrap();
        for j in 0..2 {
            prop_assert!((w[j] - truth.solitons[j].omega).abs() < 1e-10);
            prop_assert!((d.tilde_positions[j] - truth.solitons[j].x0).abs() < 1e-10);
        }
        prop_assert!(d.epsilon_norm() < 1e-10);
        prop_assert!(d.max_ortho_residual() <= 1e-10);
    }

    #[test]
    fn orthogonal_perturbation_is_left_alone(amp in -0.02..0.02f64) {
        let (f, g) = pair();
        let p = orthogonal(&f, &g).scaled(amp);
        let state = soliton_sum(&f, &g, 0.0).unwrap().axpy(1.0, &p).unwrap();
        let d = modulate(&state, &f, SUB).unwrap();
        let w = d.tilde_omegas.as_ref().unwrap();
        for j in 0..2 {
            prop_assert!((w[j] - f.solitons[j].omega).abs() < 1e-10);
            prop_assert!((d.tilde_positions[j] - f.solitons[j].x0).abs() < 1e-10);
        }
        prop_assert!(h_norm(&d.epsilon.sub(&p).unwrap()) < 1e-10);
    }
}

#[test]
fn lipschitz_ratio_is_bounded() {
    let (f, g) = pair();
    let r = soliton_sum(&f, &g, 0.0).unwrap();
    let p = generic(&g);
    let ratios: Vec<f64> = [1e-4, 1e-3, 1e-2]
        .iter()
        .map(|&a| {
            let d = modulate(&r.axpy(a, &p).unwrap(), &f, SUB).unwrap();
            let w = d.tilde_omegas.as_ref().unwrap();
            let change: f64 = (0..2)
                .map(|j| (w[j] - f.solitons[j].omega).abs() + (d.tilde_positions[j] - f.solitons[j].x0).abs())
                .sum();
            (d.epsilon_norm() + change) / a
        })
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r <= 3.0 * ratios[0]), "{ratios:?}");
}

#[test]
fn newton_starts_agree() {
    let (f, g) = pair();
    let truth = shifted(&f, &[2e-3, -1e-3], &[0.05, -0.03]);
    let state = soliton_sum(&truth, &g, 0.0).unwrap().axpy(1e-3, &generic(&g)).unwrap();
    let a = modulate(&state, &f, SUB).unwrap();
    let b = modulate_from(&state, &f, SUB, &truth.omegas(), &truth.positions()).unwrap();
    let (wa, wb) = (a.tilde_omegas.unwrap(), b.tilde_omegas.unwrap());
    for j in 0..2 {
        assert!((wa[j] - wb[j]).abs() < 1e-10);
        assert!((a.tilde_positions[j] - b.tilde_positions[j]).abs() < 1e-10);
    }
}

#[test]
fn drift_along_perturbed_soliton_run() {
    // 2ω² > p: an orbitally stable soliton
    let f = SolitonFamily::new(1.0, &[(0.9, 0.0)]).unwrap();
    let g = f.default_grid(10.0).unwrap();
    let pert = {
        let x = g.points();
        let u1 = x.iter().map(|x| 1e-3 * (-(x - 1.0).powi(2)).exp()).collect();
        FieldState::new(g.clone(), u1, vec![0.0; g.n_points()], 0.0).unwrap()
    };
    let s0 = soliton_sum(&f, &g, 0.0).unwrap().axpy(1.0, &pert).unwrap();
    let mut c = EvolveConfig::new(&g, 1.0, 10.0, Direction::Forward);
    c.checkpoint_stride = 25;
    let traj = evolve(&s0, &c).unwrap();
    let rep = parameter_drift_bound_check(&traj.states, &f, SUB).unwrap();
    assert_eq!(rep.gaps, 0);
    let first = rep.intervals[0].ratio.unwrap();
    assert!(rep.max_ratio.unwrap() < 100.0 * first);
    assert!(rep.intervals.iter().all(|i| i.drift_rate <= 0.1));
}
