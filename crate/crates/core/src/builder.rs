//! Approximate multi-solitons by backward integration from soliton-sum final
//! data, with shooting over the unstable coefficients when the solitons are
//! unstable.
//!
//! Runs integrate the perturbation `ε = u − R(t)` about the analytic sum
//! `R(t)`, so the tiny quantities the construction measures are never
//! formed as differences of O(1) numbers.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, Solve};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{rhs_with, EvolveConfig, Forcing, Integrator, LinearizedFlux, Trajectory};
use crate::grid::{h_norm, FieldState, Grid};
use crate::modulation::{modulate, modulation_radius, unstable_projections, ModulationMode};
use crate::soliton::{periodic_offset, power_term, soliton_sum, Regime, SolitonFamily, SolitonParams};
use crate::spectrum::{PegoWeinsteinModes, PlacedModes};

/// How the equation for `ε` is closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingModel {
    /// Each `R_j` is taken as an exact solution; `ε` is driven only by the
    /// interaction `f(R) − Σ f(R_j)`.
    Analytic,
    /// Algebraically the full discrete equation for `u = R + ε`: the source
    /// is the discrete right-hand side at `R` minus the analytic `∂t R`,
    /// which includes the grid's discretization defect.
    Discrete,
}

impl std::fmt::Display for ForcingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ForcingModel::Analytic => "analytic",
            ForcingModel::Discrete => "discrete",
        })
    }
}

/// `f(r + e) − f(r)` without cancellation when `|e| ≪ |r|`.
#[inline]
pub fn power_difference(r: f64, e: f64, p: f64) -> f64 {
    if r != 0.0 && e.abs() <= 0.5 * r.abs() {
        power_term(r, p) * ((2.0 * p + 1.0) * (e / r).ln_1p()).exp_m1()
    } else {
        power_term(r + e, p) - power_term(r, p)
    }
}

/// `f(Σ r_j) − Σ f(r_j)`, referenced to the dominant term.
pub fn interaction_term(parts: &[f64], p: f64) -> f64 {
    let Some((k, _)) = parts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    else {
        return 0.0;
    };
    let rest: f64 = parts.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v).sum();
    let mut out = power_difference(parts[k], rest, p);
    for (j, &v) in parts.iter().enumerate() {
        if j != k {
            out -= power_term(v, p);
        }
    }
    out
}

/// Forcing for `ε = u − R(t)`.
pub struct PerturbationForcing {
    family: SolitonFamily,
    grid: Grid,
    points: Vec<f64>,
    model: ForcingModel,
    dealias: bool,
    source_enabled: bool,
}

impl PerturbationForcing {
    pub fn new(family: &SolitonFamily, grid: &Grid, model: ForcingModel, dealias: bool) -> Self {
        Self {
            family: family.clone(),
            grid: grid.clone(),
            points: grid.points(),
            model,
            dealias,
            source_enabled: true,
        }
    }

    /// Response dynamics: the flux of `ε` about `R` with every source term
    /// removed.
    pub fn homogeneous(family: &SolitonFamily, grid: &Grid, dealias: bool) -> Self {
        let mut f = Self::new(family, grid, ForcingModel::Discrete, dealias);
        f.source_enabled = false;
        f
    }

    fn components(&self, t: f64) -> Vec<Vec<f64>> {
        let l = self.grid.half_length();
        self.family
            .solitons
            .iter()
            .map(|s| {
                let c = s.position(t);
                self.points.iter().map(|&x| s.profile_at(periodic_offset(x, c, l))).collect()
            })
            .collect()
    }
}

impl Forcing for PerturbationForcing {
    fn flux(&self, e1: &[f64], t: f64, out: &mut [f64]) {
        let p = self.family.p;
        let comps = self.components(t);
        let mut parts = vec![0.0; comps.len()];
        for i in 0..out.len() {
            for (v, c) in parts.iter_mut().zip(&comps) {
                *v = c[i];
            }
            let r: f64 = parts.iter().sum();
            let mut f = power_difference(r, e1[i], p);
            if self.model == ForcingModel::Analytic && self.source_enabled {
                f += interaction_term(&parts, p);
            }
            out[i] = f;
        }
    }

    fn source(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.model != ForcingModel::Discrete || !self.source_enabled {
            return None;
        }
        let r = soliton_sum(&self.family, &self.grid, t).expect("grid resolves the family");
        let (mut a1, mut a2) = rhs_with(&r, self.family.p, self.dealias).expect("finite sum");
        let l = self.grid.half_length();
        for s in &self.family.solitons {
            let c = s.position(t);
            for (i, &x) in self.points.iter().enumerate() {
                let d = s.sample(periodic_offset(x, c, l)).dphi;
                // ∂t of (Φ, −ωΦ)(x − ωt − x0) is (−ωΦ', ω²Φ')
                a1[i] += s.omega * d;
                a2[i] -= s.omega * s.omega * d;
            }
        }
        Some((a1, a2))
    }
}

#[derive(Clone, Debug)]
pub struct BuildConfig {
    pub grid: Grid,
    pub dt: f64,
    pub dealias: bool,
    pub checkpoint_stride: usize,
    pub model: ForcingModel,
    /// A run stops (failed at that time) once `‖ε‖_H` exceeds this.
    pub escape_norm: f64,
}

impl BuildConfig {
    /// Default grid for the horizon `max Tⁿ`, default step, analytic model,
    /// escape at the modulation radius.
    pub fn new(family: &SolitonFamily, final_times: &[f64]) -> Result<Self> {
        let horizon = final_times.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        let grid = family.default_grid(horizon)?;
        let dt = EvolveConfig::default_dt(&grid);
        Ok(Self {
            escape_norm: modulation_radius(family, &grid)?,
            grid,
            dt,
            dealias: true,
            checkpoint_stride: 10,
            model: ForcingModel::Analytic,
        })
    }

    fn validate(&self, family: &SolitonFamily) -> Result<()> {
        family.check_resolution(&self.grid)?;
        let mut c = EvolveConfig::new(&self.grid, family.p, 0.0, crate::evolution::Direction::Forward);
        c.dt = self.dt;
        c.checkpoint_stride = self.checkpoint_stride;
        c.validate(&self.grid)?;
        if !(self.escape_norm > 0.0) {
            return Err(Error::Config("escape_norm must be positive".into()));
        }
        Ok(())
    }

    fn integrator(&self) -> Integrator {
        let mut i = Integrator::new(&self.grid, self.dealias);
        i.escape_norm = self.escape_norm;
        // ε starts at zero, so the relative jump test needs a floor
        i.blowup_floor = self.escape_norm;
        i
    }
}

fn check_times(t0: f64, final_times: &[f64]) -> Result<()> {
    if final_times.is_empty() {
        return Err(Error::Config("at least one final time is required".into()));
    }
    if final_times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("final times must be strictly increasing".into()));
    }
    if !(t0 < final_times[0]) {
        return Err(Error::Config(format!(
            "t0 = {t0} must precede the first final time {}",
            final_times[0]
        )));
    }
    Ok(())
}

/// One backward solve of the perturbation equation.
#[derive(Clone, Debug)]
pub struct BackwardRun {
    /// `ε` at the checkpoints, decreasing in time.
    pub perturbation: Trajectory,
    /// Time at which the run blew up or escaped, if it did.
    pub failed_at: Option<f64>,
}

fn backward_run<F: Forcing>(
    cfg: &BuildConfig,
    eps_final: &FieldState,
    t0: f64,
    forcing: &F,
) -> Result<BackwardRun> {
    let r = cfg
        .integrator()
        .run_partial(eps_final, t0, cfg.dt, cfg.checkpoint_stride, forcing)?;
    Ok(BackwardRun {
        perturbation: r.trajectory,
        failed_at: r.stopped_at,
    })
}

/// Per-checkpoint modulation summary.
#[derive(Clone, Debug)]
pub struct ModulationRecord {
    pub time: f64,
    pub omegas: Vec<f64>,
    pub positions: Vec<f64>,
    pub epsilon_norm: f64,
    pub max_ortho_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ShootingReport {
    pub a_minus: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `G_jk = (Υ̃_k⁺, Ψ̃_j⁻)` at `Tⁿ`.
    pub gram: Vec<Vec<f64>>,
    /// `max_t ‖γ⁻(t)‖ e^{2ω⋆^{3/2} t}` over the reached checkpoints.
    pub objective: f64,
    /// Earliest time reached by the best run (equals `t0` on success).
    pub reached_time: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(objective, reached_time)` per shooting iterate.
    pub history: Vec<(f64, f64)>,
}

impl ShootingReport {
    pub fn alpha_norm(&self) -> f64 {
        self.alpha.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn a_minus_norm(&self) -> f64 {
        self.a_minus.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct ConstructionRun {
    pub family: SolitonFamily,
    pub t0: f64,
    pub final_times: Vec<f64>,
    pub model: ForcingModel,
    /// `uⁿ = R + εⁿ` at the checkpoints, decreasing in time.
    pub trajectories: Vec<Trajectory>,
    /// `εⁿ` at the same checkpoints.
    pub perturbations: Vec<Trajectory>,
    /// `(t, ‖uⁿ(t) − R(t)‖_H)` per `n`.
    pub error_series: Vec<Vec<(f64, f64)>>,
    /// `‖u^{n+1}(t0) − uⁿ(t0)‖_H` for consecutive `n` that both reached `t0`.
    pub cauchy_series: Vec<f64>,
    /// Blowup or escape time per `n`.
    pub failures: Vec<Option<f64>>,
    pub modulation: Vec<Vec<ModulationRecord>>,
    /// Supercritical only.
    pub alphas: Option<Vec<Vec<f64>>>,
    pub shooting: Option<Vec<ShootingReport>>,
}

impl ConstructionRun {
    /// Does every checkpoint obey `‖uⁿ(t) − R(t)‖_H ≤ e^{−ω⋆^{3/2} t}`?
    pub fn uniform_bound_holds(&self) -> bool {
        let rate = self.family.rate();
        self.error_series
            .iter()
            .flatten()
            .all(|&(t, e)| e <= (-rate * t).exp())
    }

    pub fn all_reached_t0(&self) -> bool {
        self.failures.iter().all(Option::is_none)
    }

    pub fn cauchy_strictly_decreasing(&self) -> bool {
        self.cauchy_series.len() + 1 == self.final_times.len()
            && self.cauchy_series.windows(2).all(|w| w[1] < w[0])
    }

    pub const ERROR_CSV_HEADER: [&'static str; 3] = ["n", "t", "error_h"];
}

fn assemble_run(
    family: &SolitonFamily,
    t0: f64,
    final_times: &[f64],
    model: ForcingModel,
    runs: Vec<BackwardRun>,
) -> Result<ConstructionRun> {
    let mut trajectories = Vec::with_capacity(runs.len());
    let mut perturbations = Vec::with_capacity(runs.len());
    let mut error_series = Vec::with_capacity(runs.len());
    let mut failures = Vec::with_capacity(runs.len());
    let mut modulation = Vec::with_capacity(runs.len());
    let mode = match family.regime {
        Regime::Subcritical => ModulationMode::Subcritical,
        Regime::Supercritical => ModulationMode::Supercritical,
    };
    for run in runs {
        let mut states = Vec::with_capacity(run.perturbation.states.len());
        let mut errs = Vec::with_capacity(states.capacity());
        let mut mods = Vec::new();
        for e in &run.perturbation.states {
            let r = soliton_sum(family, &e.grid, e.time)?;
            let u = r.axpy(1.0, e)?;
            errs.push((e.time, h_norm(e)));
            if let Ok(d) = modulate(&u, family, mode) {
                mods.push(ModulationRecord {
                    time: e.time,
                    omegas: d.speeds(family),
                    positions: d.tilde_positions.clone(),
                    epsilon_norm: d.epsilon_norm(),
                    max_ortho_residual: d.max_ortho_residual(),
                });
            }
            states.push(u);
        }
        trajectories.push(Trajectory { states });
        error_series.push(errs);
        failures.push(run.failed_at);
        modulation.push(mods);
        perturbations.push(run.perturbation);
    }
    let mut cauchy_series = Vec::new();
    for n in 1..perturbations.len() {
        if failures[n - 1].is_some() || failures[n].is_some() {
            break;
        }
        let a = perturbations[n - 1].last();
        let b = perturbations[n].last();
        cauchy_series.push(h_norm(&b.sub(a)?));
    }
    Ok(ConstructionRun {
        family: family.clone(),
        t0,
        final_times: final_times.to_vec(),
        model,
        trajectories,
        perturbations,
        error_series,
        cauchy_series,
        failures,
        modulation,
        alphas: None,
        shooting: None,
    })
}

/// Backward solves from `uⁿ(Tⁿ) = R(Tⁿ)` for every `Tⁿ`, run concurrently.
pub fn build_subcritical(
    family: &SolitonFamily,
    t0: f64,
    final_times: &[f64],
    cfg: &BuildConfig,
) -> Result<ConstructionRun> {
    if family.regime != Regime::Subcritical {
        return Err(Error::Config("build_subcritical needs a subcritical family".into()));
    }
    check_times(t0, final_times)?;
    cfg.validate(family)?;
    let forcing = PerturbationForcing::new(family, &cfg.grid, cfg.model, cfg.dealias);
    let runs: Vec<BackwardRun> = final_times
        .par_iter()
        .map(|&tn| backward_run(cfg, &FieldState::zeros(&cfg.grid, tn), t0, &forcing))
        .collect::<Result<_>>()?;
    assemble_run(family, t0, final_times, cfg.model, runs)
}

#[derive(Clone, Debug)]
pub struct ShootConfig {
    pub max_iterations: usize,
    /// Amplitude of the final data used to measure the response of `γ⁻` to
    /// `a⁻`; the homogeneous equation keeps relative precision at any scale.
    pub response_amplitude: f64,
    /// Iterations without progress in reached time before giving up.
    pub patience: usize,
    /// Corrections use the earliest checkpoint with `‖ε‖_H` below this,
    /// where the response is still linear.
    pub linear_threshold: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            response_amplitude: 1e-200,
            patience: 4,
            linear_threshold: 1e-6,
        }
    }
}

/// Grid with the spacing of `grid` and half-length close to `half_length`,
/// for computing modes that [`PegoWeinsteinModes::placed`] can transplant.
pub fn mode_grid_for(grid: &Grid, half_length: f64) -> Result<Grid> {
    let h = grid.spacing();
    let mut n = (2.0 * half_length / h).round() as usize;
    n += n % 2;
    let n = n.min(grid.n_points());
    Grid::new(0.5 * n as f64 * h, n)
}

/// Unstable modes of every soliton, computed on a grid of half-length about
/// `mode_half_length` with the spacing of `grid`, and the supercritical
/// family carrying their growth rates.
pub fn supercritical_setup(
    p: f64,
    speeds_positions: &[(f64, f64)],
    grid: &Grid,
    mode_half_length: f64,
) -> Result<(SolitonFamily, Vec<PegoWeinsteinModes>)> {
    let mg = mode_grid_for(grid, mode_half_length)?;
    let modes = speeds_positions
        .iter()
        .map(|&(w, _)| {
            let asm = crate::spectrum::assemble_linearized(p, w, &mg)?;
            crate::spectrum::compute_pw_modes(&asm)?.ok_or_else(|| {
                Error::Certification(format!("no real unstable eigenvalue for p = {p}, omega = {w}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<f64> = modes.iter().map(|m| m.lambda0).collect();
    let family = SolitonFamily::supercritical(p, speeds_positions, &rates)?;
    // the family is sorted by speed; keep the modes in the same order
    let mut ordered = Vec::with_capacity(modes.len());
    for s in &family.solitons {
        let m = modes
            .iter()
            .find(|m| m.omega == s.omega)
            .expect("one mode set per speed");
        ordered.push(m.clone());
    }
    Ok((family, ordered))
}

/// Modes of the backward-time generator placed at every soliton at time `t`
/// (using nominal positions).
fn placed_backward_modes(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    grid: &Grid,
    t: f64,
) -> Result<Vec<PlacedModes>> {
    family
        .solitons
        .iter()
        .zip(modes)
        .map(|(s, m)| m.time_reversed().placed(grid, s.position(t)))
        .collect()
}

/// `G_jk = (Υ̃_k⁺, Ψ̃_j⁻)` at time `t`, with the backward-time modes.
pub fn final_data_gram(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    grid: &Grid,
    t: f64,
) -> Result<Array2<f64>> {
    check_modes(family, modes)?;
    let placed = placed_backward_modes(family, modes, grid, t)?;
    let n = family.len();
    let mut g = Array2::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            g[[j, k]] = placed[k].y_plus.pairing(&placed[j].z_minus)?;
        }
    }
    Ok(g)
}

fn check_modes(family: &SolitonFamily, modes: &[PegoWeinsteinModes]) -> Result<()> {
    if modes.len() != family.len() {
        return Err(Error::Contract(format!(
            "{} mode sets for {} solitons",
            modes.len(),
            family.len()
        )));
    }
    for (m, s) in modes.iter().zip(&family.solitons) {
        if (m.omega - s.omega).abs() > 1e-14 || (m.p - family.p).abs() > 1e-14 {
            return Err(Error::Contract(format!(
                "modes for omega = {} do not match soliton omega = {}",
                m.omega, s.omega
            )));
        }
    }
    Ok(())
}

/// `γ⁻_j(t) = (ε(t), Ψ̃_j⁻(t))` with nominal positions, per checkpoint.
fn direct_gammas(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    traj: &Trajectory,
) -> Result<Vec<(f64, Vec<f64>)>> {
    traj.states
        .iter()
        .map(|e| {
            let placed = placed_backward_modes(family, modes, &e.grid, e.time)?;
            let g = placed
                .iter()
                .map(|p| e.pairing(&p.z_minus))
                .collect::<Result<Vec<f64>>>()?;
            Ok((e.time, g))
        })
        .collect()
}

/// `max_t ‖γ⁻(t)‖ e^{2ω⋆^{3/2} t}` with `γ⁻` from the supercritical
/// modulation of `u = R + ε` (backward-time modes).
fn shooting_objective(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    traj: &Trajectory,
) -> Result<f64> {
    let rev: Vec<PegoWeinsteinModes> = modes.iter().map(|m| m.time_reversed()).collect();
    let rate = family.rate();
    let mut worst = 0.0_f64;
    for e in &traj.states {
        let u = soliton_sum(family, &e.grid, e.time)?.axpy(1.0, e)?;
        let g = match modulate(&u, family, ModulationMode::Supercritical) {
            Ok(d) => unstable_projections(&d, family, &rev)?,
            Err(Error::OutOfBasin { .. }) | Err(Error::Convergence { .. }) => {
                return Ok(f64::INFINITY)
            }
            Err(e) => return Err(e),
        };
        // entries alternate (γ⁺, γ⁻) per soliton
        let gm: f64 = g.iter().skip(1).step_by(2).map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(gm * (2.0 * rate * e.time).exp());
    }
    Ok(worst)
}

struct ShotResult {
    run: BackwardRun,
    alpha: Vec<f64>,
    objective: f64,
    reached: f64,
}

fn shoot_once(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    cfg: &BuildConfig,
    forcing: &PerturbationForcing,
    gram_inv: &Array2<f64>,
    placed: &[PlacedModes],
    a_minus: &[f64],
    tn: f64,
    t0: f64,
) -> Result<ShotResult> {
    let alpha = gram_inv.dot(&Array1::from(a_minus.to_vec())).to_vec();
    let mut eps = FieldState::zeros(&cfg.grid, tn);
    for (a, p) in alpha.iter().zip(placed) {
        eps = eps.axpy(*a, &p.y_plus)?;
    }
    eps.time = tn;
    let run = backward_run(cfg, &eps, t0, forcing)?;
    let reached = run.perturbation.last().time;
    let mut objective = shooting_objective(family, modes, &run.perturbation)?;
    if run.failed_at.is_some() {
        objective = f64::INFINITY;
    }
    Ok(ShotResult {
        run,
        alpha,
        objective,
        reached,
    })
}

/// Least-squares shooting over `a⁻` for one final time.
fn shoot(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    cfg: &BuildConfig,
    shoot_cfg: &ShootConfig,
    tn: f64,
    t0: f64,
) -> Result<(BackwardRun, ShootingReport)> {
    let n = family.len();
    let placed = placed_backward_modes(family, modes, &cfg.grid, tn)?;
    let gram = final_data_gram(family, modes, &cfg.grid, tn)?;
    let gram_inv = gram.inv()?;
    let forcing = PerturbationForcing::new(family, &cfg.grid, cfg.model, cfg.dealias);

    // response of γ⁻(t) to each unit a⁻_k, from the homogeneous equation
    let homog = PerturbationForcing::homogeneous(family, &cfg.grid, cfg.dealias);
    let mut resp_cfg = cfg.clone();
    resp_cfg.escape_norm = f64::INFINITY;
    let amp = shoot_cfg.response_amplitude;
    let mut responses: Vec<Vec<(f64, Vec<f64>)>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = vec![0.0; n];
        a[k] = amp;
        let alpha = gram_inv.dot(&Array1::from(a)).to_vec();
        let mut eps = FieldState::zeros(&cfg.grid, tn);
        for (c, p) in alpha.iter().zip(&placed) {
            eps = eps.axpy(*c, &p.y_plus)?;
        }
        eps.time = tn;
        let run = backward_run(&resp_cfg, &eps, t0, &homog)?;
        let g = direct_gammas(family, modes, &run.perturbation)?;
        responses.push(g.into_iter().map(|(t, v)| (t, v.into_iter().map(|x| x / amp).collect())).collect());
    }

    let mut a_minus = vec![0.0; n];
    let mut best = shoot_once(family, modes, cfg, &forcing, &gram_inv, &placed, &a_minus, tn, t0)?;
    let mut best_a = a_minus.clone();
    let mut history = vec![(best.objective, best.reached)];
    let mut current = best.run.clone();
    let mut stall = 0;
    let mut iterations = 0;
    while iterations < shoot_cfg.max_iterations && !(best.objective < 1.0) {
        iterations += 1;
        // correct at the earliest checkpoint still in the linear regime,
        // where the unstable growth dominates γ⁻
        let g = direct_gammas(family, modes, &current.perturbation)?;
        let Some(idx) = current
            .perturbation
            .states
            .iter()
            .rposition(|e| h_norm(e) <= shoot_cfg.linear_threshold)
        else {
            break;
        };
        let (te, ge) = g[idx].clone();
        let Some(k_idx) = responses[0]
            .iter()
            .position(|(t, _)| (t - te).abs() < 1e-9 * (1.0 + te.abs()))
        else {
            break;
        };
        let mut r = Array2::zeros((n, n));
        for k in 0..n {
            for j in 0..n {
                r[[j, k]] = responses[k][k_idx].1[j];
            }
        }
        let delta = match r.solve(&Array1::from(ge.iter().map(|v| -v).collect::<Vec<_>>())) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => break,
        };
        for (a, d) in a_minus.iter_mut().zip(&delta) {
            *a += d;
        }
        let shot = shoot_once(family, modes, cfg, &forcing, &gram_inv, &placed, &a_minus, tn, t0)?;
        history.push((shot.objective, shot.reached));
        let better = shot.reached < best.reached - 1e-9
            || (shot.reached <= best.reached + 1e-9 && shot.objective < best.objective);
        current = shot.run.clone();
        if better {
            best = shot;
            best_a = a_minus.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= shoot_cfg.patience {
                break;
            }
        }
    }
    let report = ShootingReport {
        a_minus: best_a,
        alpha: best.alpha.clone(),
        gram: gram.outer_iter().map(|r| r.to_vec()).collect(),
        objective: best.objective,
        reached_time: best.reached,
        iterations,
        converged: best.objective < 1.0,
        history,
    };
    Ok((best.run, report))
}

/// Backward solves from `uⁿ(Tⁿ) = R(Tⁿ) + Σ α_j Υ̃_j⁺` with `α = G⁻¹a⁻` and
/// `a⁻` found by shooting. `modes[j]` are the forward-time modes of soliton
/// `j`, on a grid with the spacing of `cfg.grid`.
pub fn build_supercritical(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    t0: f64,
    final_times: &[f64],
    cfg: &BuildConfig,
    shoot_cfg: &ShootConfig,
) -> Result<ConstructionRun> {
    if family.regime != Regime::Supercritical {
        return Err(Error::Config("build_supercritical needs a supercritical family".into()));
    }
    check_times(t0, final_times)?;
    cfg.validate(family)?;
    check_modes(family, modes)?;
    let results: Vec<(BackwardRun, ShootingReport)> = final_times
        .par_iter()
        .map(|&tn| shoot(family, modes, cfg, shoot_cfg, tn, t0))
        .collect::<Result<_>>()?;
    let (runs, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut run = assemble_run(family, t0, final_times, cfg.model, runs)?;
    run.alphas = Some(reports.iter().map(|r| r.alpha.clone()).collect());
    run.shooting = Some(reports);
    Ok(run)
}

/// Backward solve with given final corrections `α` (no shooting).
pub fn backward_with_correction(
    family: &SolitonFamily,
    modes: &[PegoWeinsteinModes],
    alpha: &[f64],
    tn: f64,
    t0: f64,
    cfg: &BuildConfig,
) -> Result<BackwardRun> {
    check_modes(family, modes)?;
    if alpha.len() != family.len() {
        return Err(Error::Contract("one coefficient per soliton is required".into()));
    }
    let placed = placed_backward_modes(family, modes, &cfg.grid, tn)?;
    let mut eps = FieldState::zeros(&cfg.grid, tn);
    for (a, p) in alpha.iter().zip(&placed) {
        eps = eps.axpy(*a, &p.y_plus)?;
    }
    eps.time = tn;
    let forcing = PerturbationForcing::new(family, &cfg.grid, cfg.model, cfg.dealias);
    backward_run(cfg, &eps, t0, &forcing)
}

/// Log-linear least squares `y ≈ C e^{−rate·t}` over positive samples.
/// Returns `(rate, C, r²)`.
pub fn fit_exponential(series: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, y)| t.is_finite() && *y > 0.0 && y.is_finite())
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok((-slope, (my - slope * mt).exp(), r2))
}

/// Exponential fit of the error series of the longest successful run.
pub fn decay_fit(run: &ConstructionRun) -> Result<(f64, f64, f64)> {
    let series = run
        .error_series
        .iter()
        .zip(&run.failures)
        .rev()
        .find(|(_, f)| f.is_none())
        .map(|(s, _)| s.as_slice())
        .unwrap_or(&[]);
    fit_exponential(series)
}

/// Growth rate of `γ⁺ = (ε, Z̃⁺)` under the equation linearized about the
/// soliton of `modes`, integrated backward from `ε(0) = Y⁻ + bump` over
/// `span`. Uses the grid of `modes`.
pub fn linearized_growth_rate(modes: &PegoWeinsteinModes, span: f64, dt: f64) -> Result<f64> {
    let grid = modes.grid().clone();
    let soliton = SolitonParams::new(modes.p, modes.omega, 0.0)?;
    let bump: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| 0.3 * (-(x - 1.0).powi(2)).exp())
        .collect();
    let mut e0 = modes.y_minus.clone();
    for (a, b) in e0.u1.iter_mut().zip(&bump) {
        *a += b;
    }
    let integ = Integrator::new(&grid, true);
    let stride = ((span / dt / 40.0).round() as usize).max(1);
    let traj = integ.run(&e0, -span, dt, stride, &LinearizedFlux::new(soliton, &grid))?;
    let series: Vec<(f64, f64)> = traj
        .states
        .iter()
        .map(|e| {
            let z = modes.placed(&grid, soliton.position(e.time))?.z_plus;
            Ok((e.time, e.pairing(&z)?.abs()))
        })
        .collect::<Result<_>>()?;
    // skip the first unit while the initial transient decays
    let tail: Vec<(f64, f64)> = series.into_iter().filter(|(t, _)| *t <= -1.0).collect();
    // γ⁺ grows as t decreases, so its decay rate in t is λ
    let (rate, _, _) = fit_exponential(&tail)?;
    Ok(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn power_difference_matches_direct_form() {
        for (r, e) in [(1.2, 1e-3), (0.7, -0.2), (0.1, 0.9), (-0.5, 1e-6), (0.0, 0.3)] {
            for p in [1.0, 3.0, 0.5] {
                let direct = power_term(r + e, p) - power_term(r, p);
                assert_abs_diff_eq!(power_difference(r, e, p), direct, epsilon = 1e-14);
            }
        }
        // far below the cancellation floor of the direct form
        let d = power_difference(1.0, 1e-30, 1.0);
        assert_abs_diff_eq!(d / 3e-30, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interaction_vanishes_for_one_part() {
        assert_eq!(interaction_term(&[0.8], 1.0), 0.0);
        let v = interaction_term(&[1.0, 1e-3], 1.0);
        assert_abs_diff_eq!(v, 3e-3 + 3e-6, epsilon = 1e-15);
    }

    #[test]
    fn exponential_fit_on_exact_data() {
        let s: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0 * (-0.3 * i as f64).exp())).collect();
        let (rate, c, r2) = fit_exponential(&s).unwrap();
        assert_abs_diff_eq!(rate, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-11);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
        assert!(matches!(
            fit_exponential(&s[..3]),
            Err(Error::InsufficientData { .. })
        ));
    }
}
