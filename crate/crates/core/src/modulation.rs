//! Decomposition of a state near a soliton sum into modulated solitons and
//! an orthogonal residual.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;

use crate::error::{Error, Result};
use crate::functionals::h_distance_to_sum;
use crate::grid::{h_norm, FieldState, Grid};
use crate::soliton::{periodic_offset, SolitonFamily, SolitonParams};
use crate::spectrum::PegoWeinsteinModes;

pub const MAX_NEWTON_ITERATIONS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModulationMode {
    /// speeds and positions
    Subcritical,
    /// positions only, speeds pinned to the nominal values
    Supercritical,
}

#[derive(Clone, Debug)]
pub struct ModulationDecomposition {
    pub mode: ModulationMode,
    pub time: f64,
    /// `None` in supercritical mode.
    pub tilde_omegas: Option<Vec<f64>>,
    pub tilde_positions: Vec<f64>,
    pub epsilon: FieldState,
    /// Imposed inner products, per soliton: `(ε₁, R̃_j)` (subcritical only)
    /// then `(ε₁, ∂xR̃_j)`.
    pub ortho_residuals: Vec<f64>,
    /// The second-component products `(ε₂, R̃_j⁽²⁾)`, `(ε₂, ∂xR̃_j⁽²⁾)`.
    pub diagnostics: Vec<f64>,
    pub newton_iterations: usize,
}

impl ModulationDecomposition {
    pub fn max_ortho_residual(&self) -> f64 {
        self.ortho_residuals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn epsilon_norm(&self) -> f64 {
        h_norm(&self.epsilon)
    }

    /// Speeds used in `R̃`: modulated or nominal.
    pub fn speeds(&self, family: &SolitonFamily) -> Vec<f64> {
        self.tilde_omegas.clone().unwrap_or_else(|| family.omegas())
    }

    pub fn csv_header(n: usize, with_gammas: bool) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|j| format!("omega_{j}")));
        h.extend((1..=n).map(|j| format!("x_{j}")));
        h.push("eps_h".into());
        h.push("max_ortho".into());
        if with_gammas {
            for j in 1..=n {
                h.push(format!("gamma_plus_{j}"));
                h.push(format!("gamma_minus_{j}"));
            }
        }
        h
    }

    pub fn csv_row(&self, family: &SolitonFamily, gammas: Option<&[f64]>) -> Vec<String> {
        let f = |v: f64| format!("{v:.17e}");
        let mut r = vec![f(self.time)];
        r.extend(self.speeds(family).into_iter().map(f));
        r.extend(self.tilde_positions.iter().copied().map(f));
        r.push(f(self.epsilon_norm()));
        r.push(f(self.max_ortho_residual()));
        if let Some(g) = gammas {
            r.extend(g.iter().copied().map(f));
        }
        r
    }
}

/// `α₁ = 0.1 · min_j ‖Φ_{ω_j}‖_H` evaluated on `grid`.
pub fn modulation_radius(family: &SolitonFamily, grid: &Grid) -> Result<f64> {
    let mut r = f64::INFINITY;
    for s in &family.solitons {
        let c = SolitonParams::new(s.p, s.omega, 0.0)?;
        let (u1, u2) = c.scaled_soliton(&grid.points());
        r = r.min(h_norm(&FieldState::new(grid.clone(), u1, u2, 0.0)?));
    }
    Ok(0.1 * r)
}

// profile columns of one modulated soliton on the grid
struct Wave {
    phi: Vec<f64>,
    dphi: Vec<f64>,
    d2phi: Vec<f64>,
    dw_phi: Vec<f64>,
    dw_dphi: Vec<f64>,
}

fn wave(p: f64, omega: f64, center: f64, grid: &Grid) -> Result<Wave> {
    let s = SolitonParams::new(p, omega, 0.0)?;
    let l = grid.half_length();
    let n = grid.n_points();
    let mut w = Wave {
        phi: Vec::with_capacity(n),
        dphi: Vec::with_capacity(n),
        d2phi: Vec::with_capacity(n),
        dw_phi: Vec::with_capacity(n),
        dw_dphi: Vec::with_capacity(n),
    };
    for x in grid.points() {
        let v = s.sample(periodic_offset(x, center, l));
        w.phi.push(v.phi);
        w.dphi.push(v.dphi);
        w.d2phi.push(v.d2phi);
        w.dw_phi.push(v.dw_phi);
        w.dw_dphi.push(v.dw_dphi);
    }
    Ok(w)
}

fn dot(h: f64, a: &[f64], b: &[f64]) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

struct Evaluation {
    waves: Vec<Wave>,
    eps1: Vec<f64>,
    residual: Vec<f64>,
}

fn evaluate(
    state: &FieldState,
    family: &SolitonFamily,
    mode: ModulationMode,
    omegas: &[f64],
    positions: &[f64],
) -> Result<Evaluation> {
    let g = &state.grid;
    let h = g.spacing();
    let t = state.time;
    let nominal = family.omegas();
    let waves: Vec<Wave> = (0..family.len())
        .map(|j| wave(family.p, omegas[j], nominal[j] * t + positions[j], g))
        .collect::<Result<_>>()?;
    let mut eps1 = state.u1.clone();
    for w in &waves {
        for (e, v) in eps1.iter_mut().zip(&w.phi) {
            *e -= v;
        }
    }
    let mut residual = Vec::new();
    for w in &waves {
        if mode == ModulationMode::Subcritical {
            residual.push(dot(h, &eps1, &w.phi));
        }
        residual.push(dot(h, &eps1, &w.dphi));
    }
    Ok(Evaluation {
        waves,
        eps1,
        residual,
    })
}

fn jacobian(ev: &Evaluation, mode: ModulationMode, h: f64) -> Array2<f64> {
    let nw = ev.waves.len();
    let eps = &ev.eps1;
    match mode {
        ModulationMode::Subcritical => {
            // unknowns ordered (ω̃_1, x̃_1, ω̃_2, x̃_2, ...)
            let mut jac = Array2::zeros((2 * nw, 2 * nw));
            for j in 0..nw {
                let wj = &ev.waves[j];
                for k in 0..nw {
                    let wk = &ev.waves[k];
                    // ∂ε₁/∂ω̃_k = −∂ωΦ_k, ∂ε₁/∂x̃_k = +∂xΦ_k
                    jac[[2 * j, 2 * k]] = -dot(h, &wk.dw_phi, &wj.phi);
                    jac[[2 * j, 2 * k + 1]] = dot(h, &wk.dphi, &wj.phi);
                    jac[[2 * j + 1, 2 * k]] = -dot(h, &wk.dw_phi, &wj.dphi);
                    jac[[2 * j + 1, 2 * k + 1]] = dot(h, &wk.dphi, &wj.dphi);
                }
                jac[[2 * j, 2 * j]] += dot(h, eps, &wj.dw_phi);
                jac[[2 * j, 2 * j + 1]] -= dot(h, eps, &wj.dphi);
                jac[[2 * j + 1, 2 * j]] += dot(h, eps, &wj.dw_dphi);
                jac[[2 * j + 1, 2 * j + 1]] -= dot(h, eps, &wj.d2phi);
            }
            jac
        }
        ModulationMode::Supercritical => {
            let mut jac = Array2::zeros((nw, nw));
            for j in 0..nw {
                let wj = &ev.waves[j];
                for k in 0..nw {
                    jac[[j, k]] = dot(h, &ev.waves[k].dphi, &wj.dphi);
                }
                jac[[j, j]] -= dot(h, eps, &wj.d2phi);
            }
            jac
        }
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Modulate starting from the nominal parameters of `family`.
pub fn modulate(
    state: &FieldState,
    family: &SolitonFamily,
    mode: ModulationMode,
) -> Result<ModulationDecomposition> {
    modulate_from(state, family, mode, &family.omegas(), &family.positions())
}

/// Modulate with an explicit Newton starting point.
pub fn modulate_from(
    state: &FieldState,
    family: &SolitonFamily,
    mode: ModulationMode,
    omega_guess: &[f64],
    position_guess: &[f64],
) -> Result<ModulationDecomposition> {
    let nw = family.len();
    if omega_guess.len() != nw || position_guess.len() != nw {
        return Err(Error::Contract(format!(
            "initial guess has {} speeds and {} positions for {nw} solitons",
            omega_guess.len(),
            position_guess.len()
        )));
    }
    let radius = modulation_radius(family, &state.grid)?;
    let distance = h_distance_to_sum(state, family)?;
    if !(distance < radius) {
        return Err(Error::OutOfBasin { distance, radius });
    }

    let h = state.grid.spacing();
    let scale = 1.0 + h_norm(state).powi(2);
    let target = 1e-14 * scale;
    let accept = 1e-10 * scale;
    let mut omegas = match mode {
        ModulationMode::Subcritical => omega_guess.to_vec(),
        ModulationMode::Supercritical => family.omegas(),
    };
    let mut positions = position_guess.to_vec();
    let mut ev = evaluate(state, family, mode, &omegas, &positions)?;
    let mut res = norm_inf(&ev.residual);
    let mut iterations = 0;

    while res > target && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let jac = jacobian(&ev, mode, h);
        let rhs = Array1::from(ev.residual.iter().map(|v| -v).collect::<Vec<_>>());
        let delta = match jac.solve(&rhs) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                return Err(Error::Convergence {
                    iterations,
                    residual: res,
                })
            }
        };
        let mut damping = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let (mut w, mut x) = (omegas.clone(), positions.clone());
            for j in 0..nw {
                match mode {
                    ModulationMode::Subcritical => {
                        w[j] += damping * delta[2 * j];
                        x[j] += damping * delta[2 * j + 1];
                    }
                    ModulationMode::Supercritical => x[j] += damping * delta[j],
                }
            }
            if w.iter().all(|v| v.abs() < 1.0) {
                let trial = evaluate(state, family, mode, &w, &x)?;
                let r = norm_inf(&trial.residual);
                if r < res {
                    omegas = w;
                    positions = x;
                    ev = trial;
                    res = r;
                    improved = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if res > accept || omegas.iter().any(|w| w.abs() >= 1.0) {
        return Err(Error::Convergence {
            iterations,
            residual: res,
        });
    }

    let g = &state.grid;
    let mut eps2 = state.u2.clone();
    for (w, om) in ev.waves.iter().zip(&omegas) {
        for (e, v) in eps2.iter_mut().zip(&w.phi) {
            *e += om * v;
        }
    }
    let mut diagnostics = Vec::with_capacity(2 * nw);
    for (w, om) in ev.waves.iter().zip(&omegas) {
        diagnostics.push(-om * dot(h, &eps2, &w.phi));
        diagnostics.push(-om * dot(h, &eps2, &w.dphi));
    }
    Ok(ModulationDecomposition {
        mode,
        time: state.time,
        tilde_omegas: (mode == ModulationMode::Subcritical).then_some(omegas),
        tilde_positions: positions,
        epsilon: FieldState::new(g.clone(), ev.eps1, eps2, state.time)?,
        ortho_residuals: ev.residual,
        diagnostics,
        newton_iterations: iterations,
    })
}

/// `R̃` for given modulation parameters at time `t`.
pub fn modulated_sum(
    family: &SolitonFamily,
    grid: &Grid,
    t: f64,
    omegas: &[f64],
    positions: &[f64],
) -> Result<FieldState> {
    let n = grid.n_points();
    let (mut u1, mut u2) = (vec![0.0; n], vec![0.0; n]);
    for (j, s) in family.solitons.iter().enumerate() {
        let w = wave(family.p, omegas[j], s.omega * t + positions[j], grid)?;
        for i in 0..n {
            u1[i] += w.phi[i];
            u2[i] -= omegas[j] * w.phi[i];
        }
    }
    FieldState::new(grid.clone(), u1, u2, t)
}

#[derive(Clone, Debug)]
pub struct DriftInterval {
    pub t_start: f64,
    pub t_end: f64,
    /// `Σ(|Δω̃_j| + |Δx̃_j|)/Δt`
    pub drift_rate: f64,
    /// mean of `‖ε‖_H` at the two ends
    pub epsilon_norm: f64,
    /// `drift_rate / (‖ε‖_H + e^{−3ω⋆^{3/2}t})`, `None` if either end was
    /// out of the basin
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DriftReport {
    pub intervals: Vec<DriftInterval>,
    pub max_ratio: Option<f64>,
    pub gaps: usize,
}

impl DriftReport {
    pub fn is_bounded(&self) -> bool {
        self.max_ratio.is_some_and(f64::is_finite)
    }
}

/// Finite-difference parameter drift across checkpoints, normalized by the
/// residual size plus the interaction scale.
pub fn parameter_drift_bound_check(
    trajectory: &[FieldState],
    family: &SolitonFamily,
    mode: ModulationMode,
) -> Result<DriftReport> {
    let decomps: Vec<Option<ModulationDecomposition>> = trajectory
        .iter()
        .map(|s| match modulate(s, family, mode) {
            Ok(d) => Ok(Some(d)),
            Err(Error::OutOfBasin { .. }) | Err(Error::Convergence { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let rate = family.rate();
    let mut intervals = Vec::new();
    let mut gaps = 0;
    for k in 1..trajectory.len() {
        let (t0, t1) = (trajectory[k - 1].time, trajectory[k].time);
        let dt = (t1 - t0).abs();
        if dt == 0.0 {
            continue;
        }
        match (&decomps[k - 1], &decomps[k]) {
            (Some(a), Some(b)) => {
                let wa = a.speeds(family);
                let wb = b.speeds(family);
                let change: f64 = (0..family.len())
                    .map(|j| {
                        (wb[j] - wa[j]).abs() + (b.tilde_positions[j] - a.tilde_positions[j]).abs()
                    })
                    .sum();
                let drift_rate = change / dt;
                let eps = 0.5 * (a.epsilon_norm() + b.epsilon_norm());
                let tm = 0.5 * (t0 + t1);
                let denom = eps + (-3.0 * rate * tm).exp();
                intervals.push(DriftInterval {
                    t_start: t0,
                    t_end: t1,
                    drift_rate,
                    epsilon_norm: eps,
                    ratio: Some(drift_rate / denom),
                });
            }
            _ => {
                gaps += 1;
                intervals.push(DriftInterval {
                    t_start: t0,
                    t_end: t1,
                    drift_rate: f64::NAN,
                    epsilon_norm: f64::NAN,
                    ratio: None,
                });
            }
        }
    }
    let max_ratio = intervals
        .iter()
        .filter_map(|i| i.ratio)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Ok(DriftReport {
        intervals,
        max_ratio,
        gaps,
    })
}

/// `[γ_1⁺, γ_1⁻, γ_2⁺, γ_2⁻, …]` with `γ_j^± = (ε, Ψ̃_j^±)_{L²×L²}` and
/// `Ψ̃_j^±` the mode `Z^±` translated to `ω_j t + x̃_j`.
pub fn unstable_projections(
    decomp: &ModulationDecomposition,
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
) -> Result<Vec<f64>> {
    if decomp.mode != ModulationMode::Supercritical {
        return Err(Error::Contract(
            "unstable projections need a supercritical decomposition".into(),
        ));
    }
    if modes.len() != family.len() || decomp.tilde_positions.len() != family.len() {
        return Err(Error::Contract(format!(
            "{} mode sets for {} solitons",
            modes.len(),
            family.len()
        )));
    }
    let g = &decomp.epsilon.grid;
    let mut out = Vec::with_capacity(2 * modes.len());
    for (j, (m, s)) in modes.iter().zip(&family.solitons).enumerate() {
        if (m.omega - s.omega).abs() > 1e-14 || (m.p - family.p).abs() > 1e-14 {
            return Err(Error::Contract(format!(
                "mode set {j} was computed for (p, omega) = ({}, {}), soliton has ({}, {})",
                m.p, m.omega, family.p, s.omega
            )));
        }
        let center = s.omega * decomp.time + decomp.tilde_positions[j];
        let placed = m.placed(g, center)?;
        out.push(decomp.epsilon.pairing(&placed.z_plus)?);
        out.push(decomp.epsilon.pairing(&placed.z_minus)?);
    }
    Ok(out)
}
