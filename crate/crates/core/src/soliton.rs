//! Ground states `Φ`, scaled profiles `Φ_ω`, traveling soliton pairs and
//! their sums.

use std::f64::consts::LN_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};

/// `sign(s)|s|^{2p+1}`, the real odd extension of `|s|^{2p}s`.
#[inline]
pub fn power_term(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.signum() * s.abs().powf(2.0 * p + 1.0)
    }
}

/// `(2p+1)|s|^{2p}`.
#[inline]
pub fn power_term_derivative(s: f64, p: f64) -> f64 {
    (2.0 * p + 1.0) * s.abs().powf(2.0 * p)
}

#[inline]
fn ln_sech(y: f64) -> f64 {
    let a = y.abs();
    -a + LN_2 - (-2.0 * a).exp().ln_1p()
}

/// `Φ(x) = ((p+1) sech²(px))^{1/(2p)}`, evaluated in log form so the tails
/// never overflow.
#[inline]
pub fn ground_state_at(p: f64, x: f64) -> f64 {
    (((p + 1.0).ln() + 2.0 * ln_sech(p * x)) / (2.0 * p)).exp()
}

pub fn ground_state(p: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&x| ground_state_at(p, x)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitonParams {
    pub p: f64,
    pub omega: f64,
    pub x0: f64,
}

/// Values of `Φ_ω` and the derivatives used by modulation at one point
/// `ξ` of the co-moving coordinate.
#[derive(Clone, Copy, Debug)]
pub struct ProfileSample {
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
    /// `∂_ω Φ_ω`
    pub dw_phi: f64,
    /// `∂_ω ∂_ξ Φ_ω`
    pub dw_dphi: f64,
}

impl SolitonParams {
    pub fn new(p: f64, omega: f64, x0: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Config(format!("p must be positive, got {p}")));
        }
        if !(omega.is_finite() && omega.abs() < 1.0) {
            return Err(Error::Config(format!(
                "speed must satisfy |omega| < 1 strictly, got {omega}"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::Config(format!("position must be finite, got {x0}")));
        }
        Ok(Self { p, omega, x0 })
    }

    /// `√(1−ω²)`.
    pub fn scale(&self) -> f64 {
        (1.0 - self.omega * self.omega).sqrt()
    }

    /// Width of the profile core, `1/(max(p,1)·√(1−ω²))`.
    pub fn core_width(&self) -> f64 {
        1.0 / (self.p.max(1.0) * self.scale())
    }

    /// Largest grid spacing accepted for this profile (8 points per core width).
    pub fn max_spacing(&self) -> f64 {
        self.core_width() / 8.0
    }

    pub fn position(&self, t: f64) -> f64 {
        self.x0 + self.omega * t
    }

    /// `Φ_ω(ξ) = a^{1/p} Φ(aξ)`, `a = √(1−ω²)`.
    pub fn profile_at(&self, xi: f64) -> f64 {
        let a = self.scale();
        a.powf(1.0 / self.p) * ground_state_at(self.p, a * xi)
    }

    pub fn sample(&self, xi: f64) -> ProfileSample {
        let p = self.p;
        let w = self.omega;
        let a = self.scale();
        let phi = self.profile_at(xi);
        let dphi = -a * (p * a * xi).tanh() * phi;
        let d2phi = a * a * phi - power_term(phi, p);
        let c = -w / (a * a);
        ProfileSample {
            phi,
            dphi,
            d2phi,
            dw_phi: c * (phi / p + xi * dphi),
            dw_dphi: c * ((1.0 / p + 1.0) * dphi + xi * d2phi),
        }
    }

    /// `(Φ_ω(x − x0), −ω Φ_ω(x − x0))`.
    pub fn scaled_soliton(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let phi: Vec<f64> = x.iter().map(|&x| self.profile_at(x - self.x0)).collect();
        let psi = phi.iter().map(|v| -self.omega * v).collect();
        (phi, psi)
    }
}

pub fn scaled_soliton(params: &SolitonParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    params.scaled_soliton(x)
}

/// Nearest periodic image of `x - c` in `[-L, L)`.
#[inline]
pub fn periodic_offset(x: f64, c: f64, half_length: f64) -> f64 {
    let period = 2.0 * half_length;
    (x - c + half_length).rem_euclid(period) - half_length
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Supercritical,
}

impl Regime {
    pub fn of(p: f64) -> Result<Self> {
        if p < 2.0 {
            Ok(Regime::Subcritical)
        } else if p > 2.0 {
            Ok(Regime::Supercritical)
        } else {
            Err(Error::Config(
                "p = 2 is the critical exponent; neither regime applies".into(),
            ))
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Subcritical => write!(f, "subcritical"),
            Regime::Supercritical => write!(f, "supercritical"),
        }
    }
}

/// `N` solitons sharing one exponent, sorted by increasing speed.
#[derive(Clone, Debug)]
pub struct SolitonFamily {
    pub p: f64,
    pub solitons: Vec<SolitonParams>,
    pub omega_star: f64,
    pub regime: Regime,
    /// Unstable growth rates `λ₀^j` of the supercritical solitons, in the
    /// same order as `solitons`.
    pub growth_rates: Option<Vec<f64>>,
}

impl SolitonFamily {
    /// Subcritical family from `(ω_j, x_j)` pairs.
    pub fn new(p: f64, speeds_positions: &[(f64, f64)]) -> Result<Self> {
        match Regime::of(p)? {
            Regime::Subcritical => Self::build(p, speeds_positions, None),
            Regime::Supercritical => Err(Error::Config(
                "a supercritical family needs the unstable growth rates of its solitons".into(),
            )),
        }
    }

    /// Supercritical family; `growth_rates[j]` belongs to `speeds_positions[j]`.
    pub fn supercritical(p: f64, speeds_positions: &[(f64, f64)], growth_rates: &[f64]) -> Result<Self> {
        if Regime::of(p)? != Regime::Supercritical {
            return Err(Error::Config(format!("p = {p} is not supercritical")));
        }
        if growth_rates.len() != speeds_positions.len() {
            return Err(Error::Config("one growth rate per soliton is required".into()));
        }
        if growth_rates.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config("growth rates must be positive".into()));
        }
        Self::build(p, speeds_positions, Some(growth_rates))
    }

    fn build(p: f64, speeds_positions: &[(f64, f64)], rates: Option<&[f64]>) -> Result<Self> {
        if speeds_positions.is_empty() {
            return Err(Error::Config("a family needs at least one soliton".into()));
        }
        let regime = Regime::of(p)?;
        let mut items: Vec<(SolitonParams, f64)> = speeds_positions
            .iter()
            .enumerate()
            .map(|(j, &(w, x0))| {
                SolitonParams::new(p, w, x0).map(|s| (s, rates.map_or(0.0, |r| r[j])))
            })
            .collect::<Result<_>>()?;
        items.sort_by(|a, b| a.0.omega.total_cmp(&b.0.omega));
        for pair in items.windows(2) {
            if pair[0].0.omega == pair[1].0.omega {
                return Err(Error::Config(format!(
                    "speeds must be pairwise distinct (omega = {} repeated)",
                    pair[0].0.omega
                )));
            }
        }
        let mut m = f64::INFINITY;
        for (j, (s, _)) in items.iter().enumerate() {
            m = m.min(1.0 - s.omega * s.omega);
            for (t, _) in items.iter().skip(j + 1) {
                m = m.min((s.omega - t.omega).abs());
            }
            if rates.is_some() {
                m = m.min(items[j].1.powf(1.5) * s.omega.abs());
            }
        }
        let omega_star = m / 256.0;
        if !(omega_star > 0.0) {
            return Err(Error::Config(
                "omega_star must be positive (a supercritical soliton with zero speed gives omega_star = 0)"
                    .into(),
            ));
        }
        let growth_rates = rates.map(|_| items.iter().map(|(_, l)| *l).collect());
        Ok(Self {
            p,
            solitons: items.into_iter().map(|(s, _)| s).collect(),
            omega_star,
            regime,
            growth_rates,
        })
    }

    pub fn len(&self) -> usize {
        self.solitons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solitons.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.solitons.iter().map(|s| s.omega).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.solitons.iter().map(|s| s.x0).collect()
    }

    /// `ω⋆^{3/2}`, the rate in the multi-soliton estimate.
    pub fn rate(&self) -> f64 {
        self.omega_star.powf(1.5)
    }

    pub fn max_spacing(&self) -> f64 {
        self.solitons
            .iter()
            .map(SolitonParams::max_spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// Default half-length: room for the widest tail plus the distance any
    /// soliton travels over `horizon`.
    pub fn default_half_length(&self, horizon: f64) -> f64 {
        let tail = self
            .solitons
            .iter()
            .map(|s| (30.0 / s.scale()).max(40.0))
            .fold(0.0, f64::max);
        let reach = self.solitons.iter().map(|s| s.x0.abs()).fold(0.0, f64::max);
        let drift = self.solitons.iter().map(|s| s.omega.abs()).fold(0.0, f64::max);
        tail + reach + horizon.abs() * drift
    }

    /// Grid obeying the default half-length and the resolution rule.
    pub fn default_grid(&self, horizon: f64) -> Result<Grid> {
        Grid::with_max_spacing(self.default_half_length(horizon), self.max_spacing())
    }

    pub fn check_resolution(&self, grid: &Grid) -> Result<()> {
        check_spacing(grid, self.max_spacing())
    }
}

pub(crate) fn check_spacing(grid: &Grid, limit: f64) -> Result<()> {
    if grid.spacing() > limit * (1.0 + 1e-12) {
        return Err(Error::Resolution {
            spacing: grid.spacing(),
            limit,
            required_points: (2.0 * grid.half_length() / limit).ceil() as usize,
        });
    }
    Ok(())
}

/// Profile of soliton `s` at time `t` on `grid`, using the nearest periodic
/// image of the center.
pub fn soliton_component(s: &SolitonParams, grid: &Grid, t: f64) -> Vec<f64> {
    let c = s.position(t);
    let l = grid.half_length();
    grid.points()
        .iter()
        .map(|&x| s.profile_at(periodic_offset(x, c, l)))
        .collect()
}

/// `R(t) = Σ_j (Φ_{ω_j}, −ω_j Φ_{ω_j})(x − ω_j t − x_j)`.
pub fn soliton_sum(family: &SolitonFamily, grid: &Grid, t: f64) -> Result<FieldState> {
    family.check_resolution(grid)?;
    let n = grid.n_points();
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    for s in &family.solitons {
        let phi = soliton_component(s, grid, t);
        for i in 0..n {
            u1[i] += phi[i];
            u2[i] -= s.omega * phi[i];
        }
    }
    FieldState::new(grid.clone(), u1, u2, t)
}

/// Sup norm of `−φ'' + (1−ω²)φ − |φ|^{2p}φ` for an arbitrary profile `phi`.
pub fn elliptic_residual_of(phi: &[f64], params: &SolitonParams, grid: &Grid) -> Result<f64> {
    let d2 = grid.spectral_derivative(phi, 2)?;
    let c = 1.0 - params.omega * params.omega;
    Ok(phi
        .iter()
        .zip(&d2)
        .map(|(&f, &f2)| (-f2 + c * f - power_term(f, params.p)).abs())
        .fold(0.0, f64::max))
}

/// Residual of the elliptic equation for `Φ_ω(x − x0)`.
pub fn elliptic_residual(params: &SolitonParams, grid: &Grid) -> Result<f64> {
    check_spacing(grid, params.max_spacing())?;
    let l = grid.half_length();
    let phi: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| params.profile_at(periodic_offset(x, params.x0, l)))
        .collect();
    elliptic_residual_of(&phi, params, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ground_state_values() {
        assert_abs_diff_eq!(ground_state_at(1.0, 0.0), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(ground_state_at(3.0, 0.0), 4f64.powf(1.0 / 6.0), epsilon = 1e-15);
        let x = [-3.0, -1.0, 0.5, 1.0, 3.0];
        let direct: Vec<f64> = x
            .iter()
            .map(|&x: &f64| (2.0 / x.cosh().powi(2)).sqrt())
            .collect();
        for (a, b) in ground_state(1.0, &x).iter().zip(direct) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn ground_state_is_even_and_tails_finite() {
        let v = ground_state(1.5, &[-700.0, -2.0, 2.0, 700.0]);
        assert_eq!(v[1], v[2]);
        assert!(v[0] >= 0.0 && v[0] < 1e-300);
        assert_eq!(v[0], v[3]);
    }

    #[test]
    fn power_term_is_odd() {
        assert_eq!(power_term(0.0, 0.7), 0.0);
        assert_abs_diff_eq!(power_term(-2.0, 0.5), -4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(power_term(2.0, 1.0), 8.0, epsilon = 1e-14);
    }

    #[test]
    fn params_validation() {
        assert!(SolitonParams::new(1.0, 1.0, 0.0).is_err());
        assert!(SolitonParams::new(1.0, -1.0, 0.0).is_err());
        assert!(SolitonParams::new(0.0, 0.1, 0.0).is_err());
        assert!(SolitonParams::new(1.0, 0.999, 0.0).is_ok());
    }

    #[test]
    fn zero_speed_has_zero_psi() {
        let s = SolitonParams::new(1.0, 0.0, 0.0).unwrap();
        let x = [-1.0, 0.0, 2.0];
        let (phi, psi) = s.scaled_soliton(&x);
        assert_eq!(psi, vec![0.0; 3]);
        assert_eq!(phi, ground_state(1.0, &x));
    }

    #[test]
    fn derivative_samples_match_finite_differences() {
        let s = SolitonParams::new(1.5, 0.4, 0.0).unwrap();
        let xi = 0.8;
        let h = 1e-5;
        let c = s.sample(xi);
        let fd = |f: &dyn Fn(f64) -> f64| (f(xi + h) - f(xi - h)) / (2.0 * h);
        assert_abs_diff_eq!(c.dphi, fd(&|x| s.profile_at(x)), epsilon = 1e-8);
        assert_abs_diff_eq!(c.d2phi, fd(&|x| s.sample(x).dphi), epsilon = 1e-8);
        let at = |w: f64| SolitonParams::new(1.5, w, 0.0).unwrap().sample(xi);
        assert_abs_diff_eq!(c.dw_phi, (at(0.4 + h).phi - at(0.4 - h).phi) / (2.0 * h), epsilon = 1e-8);
        assert_abs_diff_eq!(c.dw_dphi, (at(0.4 + h).dphi - at(0.4 - h).dphi) / (2.0 * h), epsilon = 1e-8);
    }

    #[test]
    fn family_sorting_and_omega_star() {
        let f = SolitonFamily::new(1.0, &[(0.5, 10.0), (-0.5, -10.0)]).unwrap();
        assert_eq!(f.omegas(), vec![-0.5, 0.5]);
        assert_eq!(f.positions(), vec![-10.0, 10.0]);
        assert_abs_diff_eq!(f.omega_star, 0.75 / 256.0, epsilon = 1e-16);
        assert!(SolitonFamily::new(1.0, &[(0.2, 0.0), (0.2, 5.0)]).is_err());
        assert!(SolitonFamily::new(2.0, &[(0.2, 0.0)]).is_err());
        assert!(SolitonFamily::new(3.0, &[(0.2, 0.0)]).is_err());
        let sup = SolitonFamily::supercritical(3.0, &[(0.5, 0.0)], &[4.0]).unwrap();
        assert_abs_diff_eq!(sup.omega_star, (0.75f64).min(8.0 * 0.5) / 256.0, epsilon = 1e-16);
        assert!(SolitonFamily::supercritical(3.0, &[(0.0, 0.0)], &[4.0]).is_err());
    }

    #[test]
    fn periodic_offset_wraps() {
        assert_abs_diff_eq!(periodic_offset(-9.0, 9.5, 10.0), 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(periodic_offset(1.0, 0.0, 10.0), 1.0, epsilon = 1e-14);
    }
}
