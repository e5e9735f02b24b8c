//! Periodic grid on `[-L, L)` with Fourier differentiation, rectangle-rule
//! quadrature and the discrete energy norm.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
pub struct Grid {
    half_length: f64,
    n_points: usize,
    spacing: f64,
    wavenumbers: Vec<f64>,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_length", &self.half_length)
            .field("n_points", &self.n_points)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.half_length == other.half_length && self.n_points == other.n_points
    }
}

impl Grid {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Config(format!(
                "half_length must be positive and finite, got {half_length}"
            )));
        }
        if n_points < 16 || n_points % 2 != 0 {
            return Err(Error::Config(format!(
                "n_points must be even and >= 16, got {n_points}"
            )));
        }
        let n = n_points as i64;
        let wavenumbers = (0..n)
            .map(|m| {
                let m = if m < n / 2 { m } else { m - n };
                PI * m as f64 / half_length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        };
        Ok(Self {
            half_length,
            n_points,
            spacing: 2.0 * half_length / n_points as f64,
            wavenumbers,
            plans: Arc::new(plans),
        })
    }

    /// Grid with the given spacing bound: the smallest even point count `n`
    /// (rounded up to a multiple of 16) with `2L/n <= max_spacing`.
    pub fn with_max_spacing(half_length: f64, max_spacing: f64) -> Result<Self> {
        if !(max_spacing > 0.0) {
            return Err(Error::Config(format!("spacing bound must be positive, got {max_spacing}")));
        }
        let raw = (2.0 * half_length / max_spacing).ceil() as usize;
        let n = raw.div_ceil(16).max(1) * 16;
        Self::new(half_length, n)
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn k_max(&self) -> f64 {
        PI / self.spacing
    }

    pub fn nyquist_index(&self) -> usize {
        self.n_points / 2
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|m| -self.half_length + m as f64 * self.spacing)
            .collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_points {
            return Err(Error::Contract(format!(
                "array length {len} does not match grid size {}",
                self.n_points
            )));
        }
        Ok(())
    }

    /// Unnormalized forward DFT.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.forward.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.plans.forward.process(buf);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.plans.inverse.process(buf);
    }

    /// Inverse DFT including the `1/n` factor; the imaginary part is dropped.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.plans.inverse.process(&mut buf);
        let scale = 1.0 / self.n_points as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Fourier symbol of `∂_x^order`. Odd orders drop the Nyquist mode.
    pub fn derivative_symbol(&self, order: u32) -> Vec<Complex64> {
        let nyq = self.nyquist_index();
        self.wavenumbers
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                if m == nyq && order % 2 == 1 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k).powu(order)
                }
            })
            .collect()
    }

    pub fn spectral_derivative(&self, f: &[f64], order: u32) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        if !(1..=4).contains(&order) {
            return Err(Error::Contract(format!("derivative order must be 1..=4, got {order}")));
        }
        let symbol = self.derivative_symbol(order);
        let mut c = self.forward(f);
        for (c, s) in c.iter_mut().zip(&symbol) {
            *c *= s;
        }
        Ok(self.inverse_real(c))
    }

    pub fn quadrature(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        Ok(self.spacing * f.iter().sum::<f64>())
    }

    /// `∫ f g dx` by the rectangle rule.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        Ok(self.spacing * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Shift `f` by `s` (returns `f(x - s)`) through the Fourier phase; the
    /// Nyquist mode is kept as a cosine so the result stays real.
    pub fn translate(&self, f: &[f64], s: f64) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        let nyq = self.nyquist_index();
        let mut c = self.forward(f);
        for (m, (c, &k)) in c.iter_mut().zip(&self.wavenumbers).enumerate() {
            if m == nyq {
                *c *= (k * s).cos();
            } else {
                *c *= Complex64::from_polar(1.0, -k * s);
            }
        }
        Ok(self.inverse_real(c))
    }

    /// Evaluate `∂_x^order` of the trigonometric interpolant with DFT
    /// coefficients `c` at an arbitrary point `x`.
    pub fn interpolant_at(&self, c: &[Complex64], x: f64, order: u32) -> f64 {
        let nyq = self.nyquist_index();
        let mut acc = 0.0;
        for (m, (c, &k)) in c.iter().zip(&self.wavenumbers).enumerate() {
            let arg = k * (x + self.half_length);
            let e = if m == nyq {
                if order % 2 == 1 {
                    continue;
                }
                Complex64::new(arg.cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, arg)
            };
            acc += (c * e * Complex64::new(0.0, k).powu(order)).re;
        }
        acc / self.n_points as f64
    }

    /// Location of the global maximum of `f`, refined off-grid by Newton's
    /// method on the derivative of the interpolant.
    pub fn peak_position(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        let (imax, _) = f
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let c = self.forward(f);
        let x0 = -self.half_length + imax as f64 * self.spacing;
        let mut x = x0;
        for _ in 0..20 {
            let d1 = self.interpolant_at(&c, x, 1);
            let d2 = self.interpolant_at(&c, x, 2);
            if d2 >= 0.0 {
                break;
            }
            let step = (d1 / d2).clamp(-self.spacing, self.spacing);
            x -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        if (x - x0).abs() > self.spacing {
            return Ok(x0);
        }
        Ok(x)
    }

    /// Reflection `f(x) -> f(-x)`; exact on the grid since `x_m = -L + m h`.
    pub fn reflect(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        let n = self.n_points;
        Ok((0..n).map(|m| f[(n - m) % n]).collect())
    }
}

/// The pair `(u1, u2)` on a grid at time `time`.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub grid: Grid,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn new(grid: Grid, u1: Vec<f64>, u2: Vec<f64>, time: f64) -> Result<Self> {
        grid.check_len(u1.len())?;
        grid.check_len(u2.len())?;
        if u1.iter().chain(&u2).any(|v| !v.is_finite()) {
            return Err(Error::Contract("field contains non-finite values".into()));
        }
        Ok(Self { grid, u1, u2, time })
    }

    pub fn zeros(grid: &Grid, time: f64) -> Self {
        let n = grid.n_points();
        Self {
            grid: grid.clone(),
            u1: vec![0.0; n],
            u2: vec![0.0; n],
            time,
        }
    }

    fn check_same_grid(&self, other: &FieldState) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Contract("states live on different grids".into()));
        }
        Ok(())
    }

    /// `self + a * other`, keeping `self.time`.
    pub fn axpy(&self, a: f64, other: &FieldState) -> Result<FieldState> {
        self.check_same_grid(other)?;
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| x + a * y).collect();
        Ok(FieldState {
            grid: self.grid.clone(),
            u1: comb(&self.u1, &other.u1),
            u2: comb(&self.u2, &other.u2),
            time: self.time,
        })
    }

    pub fn sub(&self, other: &FieldState) -> Result<FieldState> {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, a: f64) -> FieldState {
        FieldState {
            grid: self.grid.clone(),
            u1: self.u1.iter().map(|v| a * v).collect(),
            u2: self.u2.iter().map(|v| a * v).collect(),
            time: self.time,
        }
    }

    /// Cyclic shift by whole grid cells (positive moves the profile right).
    pub fn shifted_cells(&self, cells: isize) -> FieldState {
        let n = self.grid.n_points() as isize;
        let r = cells.rem_euclid(n) as usize;
        let mut u1 = self.u1.clone();
        let mut u2 = self.u2.clone();
        u1.rotate_right(r);
        u2.rotate_right(r);
        FieldState {
            grid: self.grid.clone(),
            u1,
            u2,
            time: self.time,
        }
    }

    /// `h * Σ (a1 b1 + a2 b2)`: the discrete `L² × L²` pairing.
    pub fn pairing(&self, other: &FieldState) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.inner(&self.u1, &other.u1)? + self.grid.inner(&self.u2, &other.u2)?)
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(&self.u2).all(|v| v.is_finite())
    }
}

/// `sqrt(‖u1‖² + ‖∂x u1‖² + ‖u2‖²)`.
pub fn h_norm(state: &FieldState) -> f64 {
    let g = &state.grid;
    let d = g
        .spectral_derivative(&state.u1, 1)
        .expect("state arrays match their grid");
    let sq = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>();
    (g.spacing() * (sq(&state.u1) + sq(&d) + sq(&state.u2))).sqrt()
}

pub fn l2_norm(grid: &Grid, f: &[f64]) -> f64 {
    (grid.spacing() * f.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(10.0, 15).is_err());
        assert!(Grid::new(10.0, 8).is_err());
        assert!(Grid::new(-1.0, 64).is_err());
        assert!(Grid::new(10.0, 64).is_ok());
    }

    #[test]
    fn spacing_times_points_is_length() {
        let g = Grid::new(40.0, 1024).unwrap();
        assert_abs_diff_eq!(g.spacing() * 1024.0, 80.0, epsilon = 1e-12);
    }

    #[test]
    fn wavenumbers_antisymmetric_except_nyquist() {
        let g = Grid::new(7.0, 32).unwrap();
        let k = g.wavenumbers();
        for m in 1..16 {
            assert_abs_diff_eq!(k[m], -k[32 - m], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(k[16], -PI * 16.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid::new(40.0, 256).unwrap();
        let x = g.points();
        let f: Vec<f64> = x.iter().map(|x| (PI * x / 40.0).sin()).collect();
        let d = g.spectral_derivative(&f, 1).unwrap();
        for (x, d) in x.iter().zip(&d) {
            assert_abs_diff_eq!(*d, PI / 40.0 * (PI * x / 40.0).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::new(3.0, 64).unwrap();
        for order in 1..=4 {
            let d = g.spectral_derivative(&vec![1.0; 64], order).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn derivative_rejects_bad_input() {
        let g = Grid::new(3.0, 64).unwrap();
        assert!(matches!(g.spectral_derivative(&[0.0; 10], 1), Err(Error::Contract(_))));
        assert!(g.spectral_derivative(&[0.0; 64], 5).is_err());
        assert!(matches!(g.quadrature(&[0.0; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn sech_squared_integral() {
        let g = Grid::new(40.0, 1024).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| 2.0 / x.cosh().powi(2)).collect();
        // ∫ 2 sech² = 2 tanh(x) |_{-L}^{L}
        let exact = 4.0 * 40f64.tanh();
        assert_abs_diff_eq!(g.quadrature(&f).unwrap(), exact, epsilon = 1e-10);
    }

    #[test]
    fn cosine_integrates_to_zero() {
        let g = Grid::new(40.0, 1024).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| (PI * x / 40.0).cos()).collect();
        assert!(g.quadrature(&f).unwrap().abs() < 1e-12);
        assert_eq!(g.quadrature(&vec![0.0; 1024]).unwrap(), 0.0);
    }

    #[test]
    fn reflect_and_translate() {
        let g = Grid::new(10.0, 128).unwrap();
        let x = g.points();
        let f: Vec<f64> = x.iter().map(|x| (-(x - 1.0) * (x - 1.0)).exp()).collect();
        let r = g.reflect(&f).unwrap();
        for (x, r) in x.iter().zip(&r) {
            assert_abs_diff_eq!(*r, (-(x + 1.0) * (x + 1.0)).exp(), epsilon = 1e-14);
        }
        let t = g.translate(&f, 0.37).unwrap();
        for (x, t) in x.iter().zip(&t) {
            assert_abs_diff_eq!(*t, (-(x - 1.37) * (x - 1.37)).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn h_norm_of_zero_and_scaling() {
        let g = Grid::new(10.0, 64).unwrap();
        assert_eq!(h_norm(&FieldState::zeros(&g, 0.0)), 0.0);
        let x = g.points();
        let s = FieldState::new(
            g.clone(),
            x.iter().map(|x| (-x * x).exp()).collect(),
            x.iter().map(|x| x * (-x * x).exp()).collect(),
            0.0,
        )
        .unwrap();
        assert_abs_diff_eq!(h_norm(&s.scaled(2.0)), 2.0 * h_norm(&s), epsilon = 1e-14);
    }

    #[test]
    fn field_state_rejects_nan() {
        let g = Grid::new(10.0, 16).unwrap();
        let mut u = vec![0.0; 16];
        u[3] = f64::NAN;
        assert!(FieldState::new(g, u, vec![0.0; 16], 0.0).is_err());
    }
}
