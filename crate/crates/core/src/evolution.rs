//! Time integration of `∂t u1 = ∂x u2`, `∂t u2 = ∂x(u1 − ∂xx u1 − f(u1))`.
//!
//! Each Fourier mode is written in the characteristic variables
//! `q± = √(1+k²) û1 ± û2`, which diagonalize the linear part with symbols
//! `±ik√(1+k²)`. The linear flow is applied exactly and the nonlinear flux
//! by fourth-order exponential time differencing (ETDRK4, coefficients by
//! contour averaging). Backward integration uses the reversal
//! `(u1, u2, t) → (u1, −u2, −t)`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};
use crate::soliton::{periodic_offset, power_term, power_term_derivative, SolitonParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub nonlinearity_p: f64,
    pub dealias: bool,
    pub checkpoint_stride: usize,
    pub direction: Direction,
}

impl EvolveConfig {
    /// Defaults: `dt = 10/(1 + k_max√(1+k_max²))`, dealiasing on, a
    /// checkpoint every 100 steps.
    pub fn new(grid: &Grid, p: f64, t_end: f64, direction: Direction) -> Self {
        Self {
            dt: Self::default_dt(grid),
            t_end,
            nonlinearity_p: p,
            dealias: true,
            checkpoint_stride: 100,
            direction,
        }
    }

    pub fn default_dt(grid: &Grid) -> f64 {
        let k = grid.k_max();
        0.2 / (1.0 + k * (1.0 + k * k).sqrt()) * 50.0
    }

    /// Largest accepted step: a flux CFL `dt · k_max ≤ 2`. The linear part
    /// is exact and imposes no limit.
    pub fn stability_bound(grid: &Grid) -> f64 {
        2.0 / grid.k_max()
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let bound = Self::stability_bound(grid);
        if self.dt > bound {
            return Err(Error::Config(format!(
                "dt = {} exceeds the stability bound {bound:.3e} for this grid",
                self.dt
            )));
        }
        if !(self.nonlinearity_p.is_finite() && self.nonlinearity_p > 0.0) {
            return Err(Error::Config(format!("p must be positive, got {}", self.nonlinearity_p)));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::Config("checkpoint_stride must be positive".into()));
        }
        if !self.t_end.is_finite() {
            return Err(Error::Config("t_end must be finite".into()));
        }
        Ok(())
    }
}

/// The flux `F(u1, t)` entering `∂t u2 = ∂x(u1 − ∂xx u1 − F)` and an optional
/// additive source `(a1, a2)` added to `(∂t u1, ∂t u2)`.
pub trait Forcing: Sync {
    fn flux(&self, u1: &[f64], t: f64, out: &mut [f64]);

    fn source(&self, _t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// `F(u1) = |u1|^{2p} u1`: the full equation.
#[derive(Clone, Copy, Debug)]
pub struct PowerFlux {
    pub p: f64,
}

impl Forcing for PowerFlux {
    fn flux(&self, u1: &[f64], _t: f64, out: &mut [f64]) {
        for (o, &u) in out.iter_mut().zip(u1) {
            *o = power_term(u, self.p);
        }
    }
}

/// `F(ε1, t) = (2p+1)|Φ_ω(x − ωt − x0)|^{2p} ε1`: the equation linearized
/// about one traveling soliton.
#[derive(Clone, Debug)]
pub struct LinearizedFlux {
    pub soliton: SolitonParams,
    points: Vec<f64>,
    half_length: f64,
}

impl LinearizedFlux {
    pub fn new(soliton: SolitonParams, grid: &Grid) -> Self {
        Self {
            soliton,
            points: grid.points(),
            half_length: grid.half_length(),
        }
    }
}

impl Forcing for LinearizedFlux {
    fn flux(&self, u1: &[f64], t: f64, out: &mut [f64]) {
        let s = &self.soliton;
        let c = s.position(t);
        for ((o, &u), &x) in out.iter_mut().zip(u1).zip(&self.points) {
            let r = s.profile_at(periodic_offset(x, c, self.half_length));
            *o = power_term_derivative(r, s.p) * u;
        }
    }
}

/// Reversed-time view of a forcing: physical time is `−τ` and the source's
/// first component changes sign.
struct Reversed<'a, F: Forcing + ?Sized>(&'a F);

impl<F: Forcing + ?Sized> Forcing for Reversed<'_, F> {
    fn flux(&self, u1: &[f64], t: f64, out: &mut [f64]) {
        self.0.flux(u1, -t, out)
    }

    fn source(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        self.0
            .source(-t)
            .map(|(a1, a2)| (a1.into_iter().map(|v| -v).collect(), a2))
    }
}

/// Right-hand side `(∂x u2, ∂x(u1 − ∂xx u1 − |u1|^{2p}u1))` without dealiasing.
pub fn rhs(state: &FieldState, p: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    rhs_with(state, p, false)
}

pub fn rhs_with(state: &FieldState, p: f64, dealias: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    if !state.is_finite() {
        return Err(Error::Blowup { time: state.time });
    }
    let g = &state.grid;
    let du1 = g.spectral_derivative(&state.u2, 1)?;
    let mut f = vec![0.0; g.n_points()];
    PowerFlux { p }.flux(&state.u1, state.time, &mut f);
    let mut fh = g.forward(&f);
    if dealias {
        apply_mask(&mut fh, &dealias_mask(g));
    }
    let u1h = g.forward(&state.u1);
    let sym1 = g.derivative_symbol(1);
    let k = g.wavenumbers();
    let nyq = g.nyquist_index();
    let mut c: Vec<Complex64> = (0..g.n_points())
        .map(|m| {
            let k2 = if m == nyq { 0.0 } else { k[m] * k[m] };
            sym1[m] * ((1.0 + k2) * u1h[m] - fh[m])
        })
        .collect();
    c[nyq] = Complex64::new(0.0, 0.0);
    Ok((du1, g.inverse_real(c)))
}

fn dealias_mask(g: &Grid) -> Vec<f64> {
    let n = g.n_points() as i64;
    (0..n)
        .map(|m| {
            let m = if m < n / 2 { m } else { m - n };
            if 3 * m.abs() <= n { 1.0 } else { 0.0 }
        })
        .collect()
}

fn apply_mask(c: &mut [Complex64], mask: &[f64]) {
    for (c, m) in c.iter_mut().zip(mask) {
        *c *= m;
    }
}

/// Per-mode ETDRK4 coefficients for the `+` branch; the `−` branch uses the
/// complex conjugates.
struct Coefficients {
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

const CONTOUR_POINTS: usize = 64;

impl Coefficients {
    fn new(omega: &[f64], h: f64) -> Self {
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64 * 2.0))
            .collect();
        let n = omega.len();
        let mut out = Self {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        let m = CONTOUR_POINTS as f64;
        for &w in omega {
            let z = Complex64::new(0.0, w * h);
            out.e.push(z.exp());
            out.e2.push((z * 0.5).exp());
            let (mut q, mut f1, mut f2, mut f3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let zz = z + r;
                let ez = zz.exp();
                let z3 = zz * zz * zz;
                q += ((zz * 0.5).exp() - 1.0) / zz;
                f1 += (-4.0 - zz + ez * (4.0 - 3.0 * zz + zz * zz)) / z3;
                f2 += (2.0 + zz + ez * (zz - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * zz - zz * zz + ez * (4.0 - zz)) / z3;
            }
            out.q.push(q * (h / m));
            out.f1.push(f1 * (h / m));
            out.f2.push(f2 * (h / m));
            out.f3.push(f3 * (h / m));
        }
        out
    }
}

/// A checkpointed run. States are stored in integration order.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<FieldState>,
}

impl Trajectory {
    pub fn first(&self) -> &FieldState {
        &self.states[0]
    }

    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// Exponential integrator on a fixed grid.
pub struct Integrator {
    grid: Grid,
    dealias: bool,
    /// `√(1+k²)` per mode.
    s: Vec<f64>,
    /// `k` with the Nyquist mode zeroed (odd-order convention).
    k: Vec<f64>,
    mask: Vec<f64>,
    /// Blowup is only declared once the norm exceeds this floor.
    pub blowup_floor: f64,
    /// A run also stops, as a blowup, once the H-norm exceeds this value.
    pub escape_norm: f64,
}

/// A run that may have stopped early; `stopped_at` carries the blowup time.
#[derive(Clone, Debug)]
pub struct PartialRun {
    pub trajectory: Trajectory,
    pub stopped_at: Option<f64>,
}

struct Work {
    u1h: Vec<Complex64>,
    buf: Vec<Complex64>,
    u1: Vec<f64>,
    flux: Vec<f64>,
}

impl Integrator {
    pub fn new(grid: &Grid, dealias: bool) -> Self {
        let nyq = grid.nyquist_index();
        let k: Vec<f64> = grid
            .wavenumbers()
            .iter()
            .enumerate()
            .map(|(m, &k)| if m == nyq { 0.0 } else { k })
            .collect();
        Self {
            grid: grid.clone(),
            dealias,
            s: k.iter().map(|k| (1.0 + k * k).sqrt()).collect(),
            k,
            mask: if dealias { dealias_mask(grid) } else { vec![1.0; grid.n_points()] },
            blowup_floor: 0.0,
            escape_norm: f64::INFINITY,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    fn to_characteristic(&self, u1: &[f64], u2: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let a = self.grid.forward(u1);
        let b = self.grid.forward(u2);
        let qp = (0..a.len()).map(|m| a[m] * self.s[m] + b[m]).collect();
        let qm = (0..a.len()).map(|m| a[m] * self.s[m] - b[m]).collect();
        (qp, qm)
    }

    fn from_characteristic(&self, qp: &[Complex64], qm: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<Complex64> = (0..qp.len()).map(|m| (qp[m] + qm[m]) / (2.0 * self.s[m])).collect();
        let b: Vec<Complex64> = (0..qp.len()).map(|m| (qp[m] - qm[m]) * 0.5).collect();
        (self.grid.inverse_real(a), self.grid.inverse_real(b))
    }

    /// Squared discrete H-norm from the characteristic variables.
    fn norm_sq(&self, qp: &[Complex64], qm: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for m in 0..qp.len() {
            let a = (qp[m] + qm[m]) / (2.0 * self.s[m]);
            let b = (qp[m] - qm[m]) * 0.5;
            acc += self.s[m] * self.s[m] * a.norm_sqr() + b.norm_sqr();
        }
        acc * self.grid.spacing() / self.grid.n_points() as f64
    }

    /// Nonlinear terms `(N+, N−)` at `(q+, q−)` and time `t`.
    fn nonlinear<F: Forcing + ?Sized>(
        &self,
        qp: &[Complex64],
        qm: &[Complex64],
        t: f64,
        forcing: &F,
        w: &mut Work,
        np: &mut [Complex64],
        nm: &mut [Complex64],
    ) {
        let n = qp.len();
        let inv_n = 1.0 / n as f64;
        for m in 0..n {
            w.u1h[m] = (qp[m] + qm[m]) / (2.0 * self.s[m]);
        }
        w.buf.copy_from_slice(&w.u1h);
        self.grid.inverse_in_place(&mut w.buf);
        for (u, c) in w.u1.iter_mut().zip(&w.buf) {
            *u = c.re * inv_n;
        }
        forcing.flux(&w.u1, t, &mut w.flux);
        for (b, &f) in w.buf.iter_mut().zip(&w.flux) {
            *b = Complex64::new(f, 0.0);
        }
        self.grid.forward_in_place(&mut w.buf);
        for m in 0..n {
            let g = Complex64::new(0.0, self.k[m]) * w.buf[m] * self.mask[m];
            np[m] = -g;
            nm[m] = g;
        }
        if let Some((a1, a2)) = forcing.source(t) {
            let a1h = self.grid.forward(&a1);
            let a2h = self.grid.forward(&a2);
            for m in 0..n {
                np[m] += a1h[m] * self.s[m] + a2h[m];
                nm[m] += a1h[m] * self.s[m] - a2h[m];
            }
        }
    }

    /// Integrate from `initial` to `t_target` (either direction) with step
    /// at most `dt`, storing every `stride`-th state plus both endpoints.
    pub fn run<F: Forcing + ?Sized>(
        &self,
        initial: &FieldState,
        t_target: f64,
        dt: f64,
        stride: usize,
        forcing: &F,
    ) -> Result<Trajectory> {
        let r = self.run_partial(initial, t_target, dt, stride, forcing)?;
        match r.stopped_at {
            Some(time) => Err(Error::Blowup { time }),
            None => Ok(r.trajectory),
        }
    }

    /// As [`Integrator::run`], but a blowup ends the run and keeps the
    /// checkpoints reached so far.
    pub fn run_partial<F: Forcing + ?Sized>(
        &self,
        initial: &FieldState,
        t_target: f64,
        dt: f64,
        stride: usize,
        forcing: &F,
    ) -> Result<PartialRun> {
        if initial.grid != self.grid {
            return Err(Error::Contract("state grid differs from integrator grid".into()));
        }
        if !initial.is_finite() {
            return Err(Error::Blowup { time: initial.time });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let span = t_target - initial.time;
        if span >= 0.0 {
            Ok(self.run_forward(initial, t_target, dt, stride.max(1), forcing))
        } else {
            let rev = reverse(initial);
            let r = self.run_forward(&rev, -t_target, dt, stride.max(1), &Reversed(forcing));
            Ok(PartialRun {
                trajectory: Trajectory {
                    states: r.trajectory.states.iter().map(reverse).collect(),
                },
                stopped_at: r.stopped_at.map(|t| -t),
            })
        }
    }

    fn run_forward<F: Forcing + ?Sized>(
        &self,
        initial: &FieldState,
        t_target: f64,
        dt: f64,
        stride: usize,
        forcing: &F,
    ) -> PartialRun {
        let span = t_target - initial.time;
        let n_steps = if span == 0.0 { 0 } else { (span / dt - 1e-9).ceil().max(1.0) as usize };
        let mut states = vec![initial.clone()];
        if n_steps == 0 {
            return PartialRun {
                trajectory: Trajectory { states },
                stopped_at: None,
            };
        }
        let h = span / n_steps as f64;
        let omega: Vec<f64> = self.k.iter().zip(&self.s).map(|(k, s)| k * s).collect();
        let co = Coefficients::new(&omega, h);
        let n = self.grid.n_points();
        let zero = Complex64::default();
        let mut w = Work {
            u1h: vec![zero; n],
            buf: vec![zero; n],
            u1: vec![0.0; n],
            flux: vec![0.0; n],
        };
        let (mut qp, mut qm) = self.to_characteristic(&initial.u1, &initial.u2);
        let mut bufs: Vec<Vec<Complex64>> = (0..10).map(|_| vec![zero; n]).collect();
        let mut norm_prev = self.norm_sq(&qp, &qm).sqrt();
        let t0 = initial.time;
        for step in 1..=n_steps {
            let t = t0 + (step - 1) as f64 * h;
            let [nup, num, ap, am, nap, nam, bp, bm, nbp, nbm] = &mut bufs[..] else {
                unreachable!()
            };
            self.nonlinear(&qp, &qm, t, forcing, &mut w, nup, num);
            for m in 0..n {
                ap[m] = co.e2[m] * qp[m] + co.q[m] * nup[m];
                am[m] = co.e2[m].conj() * qm[m] + co.q[m].conj() * num[m];
            }
            self.nonlinear(ap, am, t + 0.5 * h, forcing, &mut w, nap, nam);
            for m in 0..n {
                bp[m] = co.e2[m] * qp[m] + co.q[m] * nap[m];
                bm[m] = co.e2[m].conj() * qm[m] + co.q[m].conj() * nam[m];
            }
            self.nonlinear(bp, bm, t + 0.5 * h, forcing, &mut w, nbp, nbm);
            // c-stage reuses the a buffers
            for m in 0..n {
                ap[m] = co.e2[m] * ap[m] + co.q[m] * (2.0 * nbp[m] - nup[m]);
                am[m] = co.e2[m].conj() * am[m] + co.q[m].conj() * (2.0 * nbm[m] - num[m]);
            }
            let (ncp, ncm) = (bp, bm);
            self.nonlinear(ap, am, t + h, forcing, &mut w, ncp, ncm);
            for m in 0..n {
                qp[m] = co.e[m] * qp[m]
                    + co.f1[m] * nup[m]
                    + 2.0 * co.f2[m] * (nap[m] + nbp[m])
                    + co.f3[m] * ncp[m];
                qm[m] = co.e[m].conj() * qm[m]
                    + co.f1[m].conj() * num[m]
                    + 2.0 * co.f2[m].conj() * (nam[m] + nbm[m])
                    + co.f3[m].conj() * ncm[m];
            }
            let norm = self.norm_sq(&qp, &qm).sqrt();
            let t_new = t0 + step as f64 * h;
            if !norm.is_finite()
                || (norm > 10.0 * norm_prev && norm > self.blowup_floor)
                || norm > self.escape_norm
            {
                return PartialRun {
                    trajectory: Trajectory { states },
                    stopped_at: Some(t_new),
                };
            }
            norm_prev = norm;
            if step % stride == 0 || step == n_steps {
                let (u1, u2) = self.from_characteristic(&qp, &qm);
                let time = if step == n_steps { t_target } else { t_new };
                states.push(FieldState {
                    grid: self.grid.clone(),
                    u1,
                    u2,
                    time,
                });
            }
        }
        PartialRun {
            trajectory: Trajectory { states },
            stopped_at: None,
        }
    }
}

/// `(u1, u2, t) → (u1, −u2, −t)`.
pub fn reverse(s: &FieldState) -> FieldState {
    FieldState {
        grid: s.grid.clone(),
        u1: s.u1.clone(),
        u2: s.u2.iter().map(|v| -v).collect(),
        time: -s.time,
    }
}

/// One step of size `cfg.dt` in `cfg.direction`.
pub fn step(state: &FieldState, cfg: &EvolveConfig) -> Result<FieldState> {
    cfg.validate(&state.grid)?;
    let target = match cfg.direction {
        Direction::Forward => state.time + cfg.dt,
        Direction::Backward => state.time - cfg.dt,
    };
    let integ = Integrator::new(&state.grid, cfg.dealias);
    let traj = integ.run(state, target, cfg.dt, 1, &PowerFlux { p: cfg.nonlinearity_p })?;
    Ok(traj.last().clone())
}

/// Integrate to `cfg.t_end`; `cfg.direction` must agree with the sign of
/// `t_end − state.time`.
pub fn evolve(state: &FieldState, cfg: &EvolveConfig) -> Result<Trajectory> {
    cfg.validate(&state.grid)?;
    let forward = cfg.t_end >= state.time;
    if forward != (cfg.direction == Direction::Forward) && cfg.t_end != state.time {
        return Err(Error::Config(format!(
            "direction {:?} inconsistent with t = {} -> t_end = {}",
            cfg.direction, state.time, cfg.t_end
        )));
    }
    let integ = Integrator::new(&state.grid, cfg.dealias);
    integ.run(state, cfg.t_end, cfg.dt, cfg.checkpoint_stride, &PowerFlux { p: cfg.nonlinearity_p })
}

/// Solve the final-value problem from `final_state` down to `t_start`.
/// Checkpoints come in decreasing time.
pub fn evolve_backward_from_final(
    final_state: &FieldState,
    t_start: f64,
    cfg: &EvolveConfig,
) -> Result<Trajectory> {
    if !(t_start < final_state.time) {
        return Err(Error::Contract(format!(
            "t_start = {t_start} must precede the final time {}",
            final_state.time
        )));
    }
    let mut c = cfg.clone();
    c.t_end = t_start;
    c.direction = Direction::Backward;
    evolve(final_state, &c)
}
