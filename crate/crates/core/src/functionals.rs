//! Energy, momentum, the moving partition of unity and the localized
//! functionals built on it.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::grid::{h_norm, FieldState, Grid};
use crate::soliton::{soliton_sum, SolitonFamily};

fn energy_density(u1: f64, u2: f64, u1x: f64, p: f64) -> f64 {
    0.5 * (u1 * u1 + u2 * u2 + u1x * u1x - u1.abs().powf(2.0 * p + 2.0) / (p + 1.0))
}

/// `½∫(u1² + u2² + (∂x u1)² − |u1|^{2p+2}/(p+1))`.
pub fn energy(state: &FieldState, p: f64) -> f64 {
    let g = &state.grid;
    let d = g.spectral_derivative(&state.u1, 1).expect("state matches grid");
    let s: f64 = (0..g.n_points())
        .map(|i| energy_density(state.u1[i], state.u2[i], d[i], p))
        .sum();
    g.spacing() * s
}

/// `½∫ u1 u2`.
pub fn momentum(state: &FieldState) -> f64 {
    0.5 * state.grid.inner(&state.u1, &state.u2).expect("state matches grid")
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn rule() -> &'static (GaussLegendre, f64) {
    static RULE: OnceLock<(GaussLegendre, f64)> = OnceLock::new();
    RULE.get_or_init(|| {
        let q = GaussLegendre::new(NonZeroUsize::new(64).unwrap());
        let total = q.integrate(-1.0, 0.0, bump) + q.integrate(0.0, 1.0, bump);
        (q, total)
    })
}

/// Smooth monotone transition: 0 for `s ≤ −1`, 1 for `s ≥ 1`, and the
/// normalized integral of `exp(−1/(1−s²))` in between.
pub fn transition(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let (q, total) = rule();
    // integrate over the shorter side to keep the rule's panel small
    let v = if s <= 0.0 {
        q.integrate(-1.0, s, bump) / total
    } else {
        1.0 - q.integrate(s, 1.0, bump) / total
    };
    v.clamp(0.0, 1.0)
}

/// Moving cutoffs `ψ_j(x,t) = ψ((x − m_j t)/√t)` and the partition
/// `φ_j = ψ_j − ψ_{j+1}`, `φ_N = ψ_N`, `ψ_1 ≡ 1`.
#[derive(Clone, Debug)]
pub struct CutoffSystem {
    /// `m_j = (ω_{j−1} + ω_j)/2` for `j = 2..N`.
    pub midspeeds: Vec<f64>,
}

impl CutoffSystem {
    pub fn new(family: &SolitonFamily) -> Self {
        let w = family.omegas();
        Self {
            midspeeds: w.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.midspeeds.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `ψ_j` on the grid, `j` zero-based (`j = 0` is the constant 1).
    pub fn psi(&self, j: usize, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("cutoffs need t > 0, got t = {t}")));
        }
        if j == 0 {
            return Ok(vec![1.0; grid.n_points()]);
        }
        let m = self.midspeeds[j - 1];
        let st = t.sqrt();
        Ok(grid.points().iter().map(|&x| transition((x - m * t) / st)).collect())
    }

    /// The partition `φ_1, …, φ_N` on the grid at time `t`.
    pub fn weights(&self, grid: &Grid, t: f64) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let psis: Vec<Vec<f64>> = (0..n).map(|j| self.psi(j, grid, t)).collect::<Result<_>>()?;
        Ok((0..n)
            .map(|j| {
                if j + 1 < n {
                    psis[j].iter().zip(&psis[j + 1]).map(|(a, b)| a - b).collect()
                } else {
                    psis[j].clone()
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalReport {
    pub time: f64,
    pub energy: f64,
    pub momentum: f64,
    pub localized_momenta: Vec<f64>,
    pub localized_energies: Vec<f64>,
    pub actions: Vec<f64>,
    pub total_action: f64,
}

impl FunctionalReport {
    pub const CSV_HEADER_PREFIX: [&'static str; 4] = ["t", "energy", "momentum", "total_action"];

    /// CSV header for `n` solitons: `t, energy, momentum, total_action,
    /// M_1..M_n, E_1..E_n, S_1..S_n`.
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = Self::CSV_HEADER_PREFIX.iter().map(|s| s.to_string()).collect();
        for tag in ["M", "E", "S"] {
            h.extend((1..=n).map(|j| format!("{tag}_{j}")));
        }
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            format!("{:.17e}", self.time),
            format!("{:.17e}", self.energy),
            format!("{:.17e}", self.momentum),
            format!("{:.17e}", self.total_action),
        ];
        for v in self
            .localized_momenta
            .iter()
            .chain(&self.localized_energies)
            .chain(&self.actions)
        {
            r.push(format!("{v:.17e}"));
        }
        r
    }
}

/// Localized momenta, energies and actions `S_j = 𝓔_j + ω_j 𝓜_j` with the
/// nominal speeds of `family`.
pub fn localized_functionals(
    state: &FieldState,
    family: &SolitonFamily,
    cutoffs: &CutoffSystem,
    p: f64,
) -> Result<FunctionalReport> {
    localized_functionals_with_speeds(state, cutoffs, p, &family.omegas())
}

/// As [`localized_functionals`], with the speeds in the actions supplied by
/// the caller (nominal or modulated).
pub fn localized_functionals_with_speeds(
    state: &FieldState,
    cutoffs: &CutoffSystem,
    p: f64,
    speeds: &[f64],
) -> Result<FunctionalReport> {
    if speeds.len() != cutoffs.len() {
        return Err(Error::Contract(format!(
            "{} speeds for {} cutoffs",
            speeds.len(),
            cutoffs.len()
        )));
    }
    let g = &state.grid;
    let weights = cutoffs.weights(g, state.time)?;
    let d = g.spectral_derivative(&state.u1, 1)?;
    let h = g.spacing();
    let n = g.n_points();
    let mom: Vec<f64> = (0..n).map(|i| 0.5 * state.u1[i] * state.u2[i]).collect();
    let en: Vec<f64> = (0..n)
        .map(|i| energy_density(state.u1[i], state.u2[i], d[i], p))
        .collect();
    let mut localized_momenta = Vec::with_capacity(speeds.len());
    let mut localized_energies = Vec::with_capacity(speeds.len());
    for w in &weights {
        localized_momenta.push(h * w.iter().zip(&mom).map(|(a, b)| a * b).sum::<f64>());
        localized_energies.push(h * w.iter().zip(&en).map(|(a, b)| a * b).sum::<f64>());
    }
    let actions: Vec<f64> = localized_energies
        .iter()
        .zip(&localized_momenta)
        .zip(speeds)
        .map(|((e, m), w)| e + w * m)
        .collect();
    Ok(FunctionalReport {
        time: state.time,
        energy: h * en.iter().sum::<f64>(),
        momentum: h * mom.iter().sum::<f64>(),
        total_action: actions.iter().sum(),
        localized_momenta,
        localized_energies,
        actions,
    })
}

/// `‖u − R(t)‖_H` with `t = state.time`.
pub fn h_distance_to_sum(state: &FieldState, family: &SolitonFamily) -> Result<f64> {
    let r = soliton_sum(family, &state.grid, state.time)?;
    Ok(h_norm(&state.sub(&r)?))
}
