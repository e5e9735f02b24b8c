//! Dense realizations of the linearized operator `L` around `Φ_ω`, the
//! symplectic generator `J·L`, eigenvalue certification, the unstable
//! eigenmodes and constrained Rayleigh minima.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{Eig, Eigh, UPLO};

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};
use crate::soliton::{check_spacing, power_term_derivative, Regime, SolitonParams};

/// Periodic spectral first-derivative matrix (Nyquist mode dropped).
pub fn first_derivative_matrix(grid: &Grid) -> Array2<f64> {
    let n = grid.n_points();
    let scale = PI / grid.half_length();
    let col: Vec<f64> = (0..n)
        .map(|j| {
            // evaluate on the folded index so the matrix is exactly skew
            let m = j.min(n - j);
            if m == 0 || 2 * m == n {
                return 0.0;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let v = 0.5 * sign / (m as f64 * PI / n as f64).tan() * scale;
            if j == m {
                v
            } else {
                -v
            }
        })
        .collect();
    toeplitz(&col)
}

/// Periodic spectral second-derivative matrix (Nyquist mode kept).
pub fn second_derivative_matrix(grid: &Grid) -> Array2<f64> {
    let n = grid.n_points();
    let scale = (PI / grid.half_length()).powi(2);
    let hh = 2.0 * PI / n as f64;
    let col: Vec<f64> = (0..n)
        .map(|j| {
            let m = j.min(n - j);
            if m == 0 {
                (-PI * PI / (3.0 * hh * hh) - 1.0 / 6.0) * scale
            } else {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                -0.5 * sign / (m as f64 * PI / n as f64).sin().powi(2) * scale
            }
        })
        .collect();
    toeplitz(&col)
}

// entry (i, k) depends on (i - k) mod n
fn toeplitz(col: &[f64]) -> Array2<f64> {
    let n = col.len();
    Array2::from_shape_fn((n, n), |(i, k)| col[(i + n - k) % n])
}

fn weighted_inner(h: f64, a: &[f64], b: &[f64]) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn stack(u1: &[f64], u2: &[f64]) -> Array1<f64> {
    u1.iter().chain(u2).copied().collect()
}

/// `L = [[−∂xx + 1 − (2p+1)Φ_ω^{2p}, ω], [ω, 1]]` as a dense `2n × 2n`
/// matrix, with `Φ_ω` centered at `x = 0`.
#[derive(Clone, Debug)]
pub struct OperatorAssembly {
    pub grid: Grid,
    pub p: f64,
    pub omega: f64,
    pub matrix: Array2<f64>,
    /// `Φ_ω` on the grid (zero for the free assembly).
    pub profile: Vec<f64>,
    d1: Array2<f64>,
    scalar_block: Array2<f64>,
}

impl OperatorAssembly {
    pub fn matrix_dim(&self) -> usize {
        2 * self.grid.n_points()
    }

    /// Constant-coefficient part (`Φ ≡ 0`), the essential-spectrum proxy.
    pub fn free(omega: f64, grid: &Grid) -> Result<Self> {
        SolitonParams::new(1.0, omega, 0.0)?;
        build(1.0, omega, grid, vec![0.0; grid.n_points()])
    }

    pub fn first_derivative(&self) -> &Array2<f64> {
        &self.d1
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let a = &self.matrix;
        a.iter()
            .zip(a.t().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, w1: &[f64], w2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grid.check_len(w1.len())?;
        self.grid.check_len(w2.len())?;
        let n = self.grid.n_points();
        let y = self.matrix.dot(&stack(w1, w2));
        Ok((y.slice(s![..n]).to_vec(), y.slice(s![n..]).to_vec()))
    }

    pub fn apply_state(&self, w: &FieldState) -> Result<FieldState> {
        let (a, b) = self.apply(&w.u1, &w.u2)?;
        FieldState::new(self.grid.clone(), a, b, w.time)
    }

    /// `⟨L w, w⟩` with the `L²×L²` pairing.
    pub fn quadratic_form(&self, w1: &[f64], w2: &[f64]) -> Result<f64> {
        let (a, b) = self.apply(w1, w2)?;
        let h = self.grid.spacing();
        Ok(weighted_inner(h, &a, w1) + weighted_inner(h, &b, w2))
    }

    /// `(∂xΦ_ω, −ω∂xΦ_ω)`, the kernel direction.
    pub fn kernel_direction(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.d1.dot(&Array1::from(self.profile.clone())).to_vec();
        let e = d.iter().map(|v| -self.omega * v).collect();
        (d, e)
    }

    /// `(Φ_ω, 0)`.
    pub fn profile_direction(&self) -> (Vec<f64>, Vec<f64>) {
        (self.profile.clone(), vec![0.0; self.grid.n_points()])
    }

    /// `−∂xx + (1−ω²) − (2p+1)Φ_ω^{2p}`.
    pub fn scalar_operator(&self) -> Array2<f64> {
        let mut s = self.scalar_block.clone();
        s.diag_mut().mapv_inplace(|v| v - self.omega * self.omega);
        s
    }

    /// `J·L` with `J = [[0, ∂x], [∂x, 0]]`.
    pub fn symplectic_generator(&self) -> Array2<f64> {
        let n = self.grid.n_points();
        let w = self.omega;
        let d1s = self.d1.dot(&self.scalar_block);
        let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
        m.slice_mut(s![..n, ..n]).assign(&(&self.d1 * w));
        m.slice_mut(s![..n, n..]).assign(&self.d1);
        m.slice_mut(s![n.., ..n]).assign(&d1s);
        m.slice_mut(s![n.., n..]).assign(&(&self.d1 * w));
        m
    }

    /// Gram matrix of the chosen norm on stacked vectors.
    fn norm_matrix(&self, norm: RayleighNorm) -> Array2<f64> {
        let n = self.grid.n_points();
        let mut g = Array2::<f64>::eye(2 * n);
        if norm == RayleighNorm::Energy {
            let dtd = self.d1.t().dot(&self.d1);
            let mut b = g.slice_mut(s![..n, ..n]);
            b += &dtd;
        }
        g
    }
}

fn build(p: f64, omega: f64, grid: &Grid, profile: Vec<f64>) -> Result<OperatorAssembly> {
    let n = grid.n_points();
    let d1 = first_derivative_matrix(grid);
    let mut scalar_block = -second_derivative_matrix(grid);
    for i in 0..n {
        scalar_block[[i, i]] += 1.0 - power_term_derivative(profile[i], p);
    }
    let mut matrix = Array2::<f64>::zeros((2 * n, 2 * n));
    matrix.slice_mut(s![..n, ..n]).assign(&scalar_block);
    for i in 0..n {
        matrix[[i, n + i]] = omega;
        matrix[[n + i, i]] = omega;
        matrix[[n + i, n + i]] = 1.0;
    }
    Ok(OperatorAssembly {
        grid: grid.clone(),
        p,
        omega,
        matrix,
        profile,
        d1,
        scalar_block,
    })
}

pub fn assemble_linearized(p: f64, omega: f64, grid: &Grid) -> Result<OperatorAssembly> {
    let params = SolitonParams::new(p, omega, 0.0)?;
    check_spacing(grid, params.max_spacing())?;
    let profile = grid.points().iter().map(|&x| params.profile_at(x)).collect();
    build(p, omega, grid, profile)
}

/// Closed-form negative eigenvalue of `L` in terms of the scalar ground level.
pub fn lambda0_formula(lambda_minus: f64, omega: f64) -> f64 {
    let w2 = omega * omega;
    let disc = lambda_minus * lambda_minus + 2.0 * (w2 - 1.0) * lambda_minus + (w2 + 1.0).powi(2);
    0.5 * (lambda_minus + w2 + 1.0 - disc.sqrt())
}

/// Exact ground level of the scalar operator, `−(1−ω²)p(p+2)`.
pub fn lambda_minus_exact(p: f64, omega: f64) -> f64 {
    -(1.0 - omega * omega) * p * (p + 2.0)
}

/// Eigenvalues below this magnitude count as kernel.
pub fn kernel_tolerance(norm2: f64) -> f64 {
    2.0e4 * f64::EPSILON * norm2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintSet {
    /// `{∂xΦ-pair, (Φ_ω, 0)}`
    SubcriticalPair,
    /// `{Z⁺, Z⁻, ∂xΦ-pair}`
    SupercriticalTriplet,
}

impl std::fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintSet::SubcriticalPair => "subcritical_pair",
            ConstraintSet::SupercriticalTriplet => "supercritical_triplet",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayleighNorm {
    /// `‖w‖_H²`
    Energy,
    /// `‖w‖_{L²×L²}²`
    L2,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub p: f64,
    pub omega: f64,
    pub n_points: usize,
    pub negative_eigenvalues: Vec<f64>,
    /// `(eigenvalue, correlation with the normalized kernel direction)`
    pub zero_modes: Vec<(f64, f64)>,
    pub kernel_tolerance: f64,
    pub lambda_minus: f64,
    pub lambda0_formula: f64,
    pub lambda0_numeric: f64,
    /// Correlation of the ground eigenvector with `(ψ₀, ωψ₀/(λ₀−1))`.
    pub ground_state_correlation: f64,
    /// Correlation of the eigenvector nearest zero with the kernel direction.
    pub kernel_correlation: f64,
    pub coercivity_constant: Option<f64>,
    pub constraint_set: ConstraintSet,
    pub unstable_rate: Option<f64>,
}

impl SpectrumReport {
    pub fn n_negative(&self) -> usize {
        self.negative_eigenvalues.len()
    }

    pub fn n_zero(&self) -> usize {
        self.zero_modes.len()
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("p", self.p.to_string());
        kv("omega", self.omega.to_string());
        kv("n_points", self.n_points.to_string());
        kv("n_negative", self.n_negative().to_string());
        kv(
            "negative_eigenvalues",
            self.negative_eigenvalues
                .iter()
                .map(|v| format!("{v:.12e}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        kv("n_zero", self.n_zero().to_string());
        kv("kernel_tolerance", format!("{:.3e}", self.kernel_tolerance));
        kv("kernel_correlation", format!("{:.12}", self.kernel_correlation));
        kv("lambda_minus", format!("{:.12e}", self.lambda_minus));
        kv("lambda0_formula", format!("{:.12e}", self.lambda0_formula));
        kv("lambda0_numeric", format!("{:.12e}", self.lambda0_numeric));
        kv(
            "ground_state_correlation",
            format!("{:.12}", self.ground_state_correlation),
        );
        kv("constraint_set", self.constraint_set.to_string());
        kv(
            "coercivity_constant",
            self.coercivity_constant
                .map_or("none".into(), |c| format!("{c:.12e}")),
        );
        kv(
            "unstable_rate",
            self.unstable_rate.map_or("none".into(), |c| format!("{c:.12e}")),
        );
        out
    }

    pub const CSV_HEADER: [&'static str; 8] = [
        "p",
        "omega",
        "lambda_minus",
        "lambda0_formula",
        "lambda0_numeric",
        "coercivity_C",
        "n_negative",
        "n_zero",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.p.to_string(),
            self.omega.to_string(),
            format!("{:.17e}", self.lambda_minus),
            format!("{:.17e}", self.lambda0_formula),
            format!("{:.17e}", self.lambda0_numeric),
            self.coercivity_constant
                .map_or(String::new(), |c| format!("{c:.17e}")),
            self.n_negative().to_string(),
            self.n_zero().to_string(),
        ]
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    (ab / (aa * bb).sqrt()).abs()
}

/// Full symmetric eigensolve of `L` with the checks of the negative
/// direction and the kernel, plus the regime's coercivity constant.
pub fn certify_spectrum(assembly: &OperatorAssembly) -> Result<SpectrumReport> {
    let n = assembly.grid.n_points();
    let (vals, vecs) = assembly.matrix.eigh(UPLO::Lower)?;
    let norm2 = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = kernel_tolerance(norm2);

    let (svals, svecs) = assembly.scalar_operator().eigh(UPLO::Lower)?;
    let lambda_minus = svals[0];
    let lambda0_f = lambda0_formula(lambda_minus, assembly.omega);

    let negative_eigenvalues: Vec<f64> = vals.iter().copied().filter(|&v| v < -tol).collect();
    let (k1, k2) = assembly.kernel_direction();
    let kernel = stack(&k1, &k2).to_vec();
    let zero_modes: Vec<(f64, f64)> = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tol)
        .map(|(i, &v)| (v, correlation(&vecs.column(i).to_vec(), &kernel)))
        .collect();
    let nearest = (0..vals.len())
        .min_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()))
        .expect("nonempty spectrum");
    let kernel_correlation = correlation(&vecs.column(nearest).to_vec(), &kernel);

    let psi0 = svecs.column(0).to_vec();
    let c = assembly.omega / (lambda0_f - 1.0);
    let gamma0: Vec<f64> = psi0.iter().copied().chain(psi0.iter().map(|v| c * v)).collect();
    let ground_state_correlation = correlation(&vecs.column(0).to_vec(), &gamma0);

    if negative_eigenvalues.len() != 1 {
        return Err(Error::Certification(format!(
            "expected exactly one negative eigenvalue of L, found {} (p = {}, omega = {}, n = {n})",
            negative_eigenvalues.len(),
            assembly.p,
            assembly.omega
        )));
    }

    let regime = Regime::of(assembly.p)?;
    let (constraint_set, modes) = match regime {
        Regime::Subcritical => (ConstraintSet::SubcriticalPair, None),
        Regime::Supercritical => (ConstraintSet::SupercriticalTriplet, compute_pw_modes(assembly)?),
    };
    let coercivity_constant = match (regime, &modes) {
        (Regime::Supercritical, None) => None,
        _ => {
            let cons = constraint_vectors(assembly, constraint_set, modes.as_ref())?;
            Some(rayleigh_minimum(assembly, &cons, RayleighNorm::Energy)?)
        }
    };

    Ok(SpectrumReport {
        p: assembly.p,
        omega: assembly.omega,
        n_points: n,
        negative_eigenvalues,
        zero_modes,
        kernel_tolerance: tol,
        lambda_minus,
        lambda0_formula: lambda0_f,
        lambda0_numeric: vals[0],
        ground_state_correlation,
        kernel_correlation,
        coercivity_constant,
        constraint_set,
        unstable_rate: modes.map(|m| m.lambda0),
    })
}

/// The eigenpairs `J L Y± = ±λ₀ Y±`, `Z± = L Y±`, normalized so that
/// `(Y⁺, Z⁻) = (Y⁻, Z⁺) = 1`. All four live on `grid`, centered at 0.
#[derive(Clone, Debug)]
pub struct PegoWeinsteinModes {
    pub p: f64,
    pub omega: f64,
    pub lambda0: f64,
    pub y_plus: FieldState,
    pub y_minus: FieldState,
    pub z_plus: FieldState,
    pub z_minus: FieldState,
}

impl PegoWeinsteinModes {
    pub fn grid(&self) -> &Grid {
        &self.y_plus.grid
    }

    /// `[[(Y⁺,Z⁺), (Y⁺,Z⁻)], [(Y⁻,Z⁺), (Y⁻,Z⁻)]]`.
    pub fn biorthogonality(&self) -> [[f64; 2]; 2] {
        let ip = |a: &FieldState, b: &FieldState| a.pairing(b).expect("same grid");
        [
            [ip(&self.y_plus, &self.z_plus), ip(&self.y_plus, &self.z_minus)],
            [ip(&self.y_minus, &self.z_plus), ip(&self.y_minus, &self.z_minus)],
        ]
    }

    /// Relative residuals `‖J L Y± ∓ λ₀ Y±‖ / ‖Y±‖` (Euclidean).
    pub fn eigen_residuals(&self, assembly: &OperatorAssembly) -> Result<(f64, f64)> {
        let m = assembly.symplectic_generator();
        let res = |y: &FieldState, lam: f64| {
            let v = stack(&y.u1, &y.u2);
            let r = m.dot(&v) - &(&v * lam);
            r.dot(&r).sqrt() / v.dot(&v).sqrt()
        };
        Ok((res(&self.y_plus, self.lambda0), res(&self.y_minus, -self.lambda0)))
    }

    /// Modes of the backward-time generator `−J L`: `Y±` and `Z±` swap roles.
    pub fn time_reversed(&self) -> Self {
        Self {
            p: self.p,
            omega: self.omega,
            lambda0: self.lambda0,
            y_plus: self.y_minus.clone(),
            y_minus: self.y_plus.clone(),
            z_plus: self.z_minus.clone(),
            z_minus: self.z_plus.clone(),
        }
    }

    /// The four vectors transplanted onto `target` (same spacing, at least as
    /// long) and translated to be centered at `center`.
    pub fn placed(&self, target: &Grid, center: f64) -> Result<PlacedModes> {
        let src = self.grid();
        if (src.spacing() - target.spacing()).abs() > 1e-12 * src.spacing() {
            return Err(Error::Contract(format!(
                "mode grid spacing {} differs from target spacing {}",
                src.spacing(),
                target.spacing()
            )));
        }
        let (ns, nt) = (src.n_points(), target.n_points());
        if nt < ns {
            return Err(Error::Contract(format!(
                "target grid ({nt} points) is smaller than the mode grid ({ns} points)"
            )));
        }
        let offset = (nt - ns) / 2;
        let put = |f: &[f64]| -> Result<Vec<f64>> {
            let mut out = vec![0.0; nt];
            out[offset..offset + ns].copy_from_slice(f);
            if center == 0.0 {
                Ok(out)
            } else {
                target.translate(&out, center)
            }
        };
        let pair = |s: &FieldState| -> Result<FieldState> {
            FieldState::new(target.clone(), put(&s.u1)?, put(&s.u2)?, 0.0)
        };
        Ok(PlacedModes {
            y_plus: pair(&self.y_plus)?,
            y_minus: pair(&self.y_minus)?,
            z_plus: pair(&self.z_plus)?,
            z_minus: pair(&self.z_minus)?,
        })
    }
}

/// Mode vectors on a working grid, translated to a soliton position.
#[derive(Clone, Debug)]
pub struct PlacedModes {
    pub y_plus: FieldState,
    pub y_minus: FieldState,
    pub z_plus: FieldState,
    pub z_minus: FieldState,
}

/// Real positive eigenvalue of `J L` with a spatially localized eigenvector,
/// or `None` when there is none.
pub fn compute_pw_modes(assembly: &OperatorAssembly) -> Result<Option<PegoWeinsteinModes>> {
    let grid = &assembly.grid;
    let n = grid.n_points();
    let m = assembly.symplectic_generator();
    let (vals, vecs) = m.eig()?;
    let xs = grid.points();
    let edge = 0.75 * grid.half_length();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (i, lam) in vals.iter().enumerate() {
        if !(lam.re > 1e-6 && lam.im.abs() < 1e-8) {
            continue;
        }
        let col = vecs.column(i);
        // rotate so the largest entry is real, then keep the real part
        let piv = col
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .copied()
            .expect("nonempty");
        let phase = piv.conj() / piv.norm();
        let v: Vec<f64> = col.iter().map(|z| (z * phase).re).collect();
        let peak = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let tail = (0..n)
            .filter(|&j| xs[j].abs() > edge)
            .map(|j| v[j].abs().max(v[n + j].abs()))
            .fold(0.0_f64, f64::max);
        if tail > 1e-3 * peak {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| lam.re > *b) {
            best = Some((lam.re, v));
        }
    }
    let Some((lambda0, v)) = best else {
        return Ok(None);
    };

    let h = grid.spacing();
    let mut y1 = v[..n].to_vec();
    let mut y2 = v[n..].to_vec();
    // fix the overall sign so Y⁺₁ has a positive right lobe integral
    let right: f64 = (0..n).filter(|&j| xs[j] > 0.0).map(|j| y1[j]).sum();
    if right < 0.0 {
        y1.iter_mut().for_each(|x| *x = -*x);
        y2.iter_mut().for_each(|x| *x = -*x);
    }
    let r1 = grid.reflect(&y1)?;
    let r2 = grid.reflect(&y2)?;
    let (lr1, lr2) = assembly.apply(&r1, &r2)?;
    let c = weighted_inner(h, &y1, &lr1) + weighted_inner(h, &y2, &lr2);
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Certification(format!(
            "unstable mode pairing (Y+, L P Y+) = {c} cannot be normalized"
        )));
    }
    let k = 1.0 / c.abs().sqrt();
    let sg = c.signum();
    let scale = |f: &[f64], a: f64| f.iter().map(|x| a * x).collect::<Vec<f64>>();
    let yp1 = scale(&y1, k);
    let yp2 = scale(&y2, k);
    let ym1 = scale(&r1, sg * k);
    let ym2 = scale(&r2, sg * k);
    let (zp1, zp2) = assembly.apply(&yp1, &yp2)?;
    let (zm1, zm2) = assembly.apply(&ym1, &ym2)?;
    let st = |a, b| FieldState::new(grid.clone(), a, b, 0.0);
    Ok(Some(PegoWeinsteinModes {
        p: assembly.p,
        omega: assembly.omega,
        lambda0,
        y_plus: st(yp1, yp2)?,
        y_minus: st(ym1, ym2)?,
        z_plus: st(zp1, zp2)?,
        z_minus: st(zm1, zm2)?,
    }))
}

/// Constraint vectors (stacked `(w1, w2)`) for a named set.
pub fn constraint_vectors(
    assembly: &OperatorAssembly,
    set: ConstraintSet,
    modes: Option<&PegoWeinsteinModes>,
) -> Result<Vec<Vec<f64>>> {
    let (k1, k2) = assembly.kernel_direction();
    let kernel = stack(&k1, &k2).to_vec();
    match set {
        ConstraintSet::SubcriticalPair => {
            let (g1, g2) = assembly.profile_direction();
            Ok(vec![kernel, stack(&g1, &g2).to_vec()])
        }
        ConstraintSet::SupercriticalTriplet => {
            let m = modes.ok_or_else(|| {
                Error::Contract("the supercritical constraint set needs the unstable modes".into())
            })?;
            if m.grid() != &assembly.grid {
                return Err(Error::Contract("modes and assembly live on different grids".into()));
            }
            Ok(vec![
                stack(&m.z_plus.u1, &m.z_plus.u2).to_vec(),
                stack(&m.z_minus.u1, &m.z_minus.u2).to_vec(),
                kernel,
            ])
        }
    }
}

/// Orthonormal basis (columns) of the Euclidean complement of the span of
/// `constraints`, by Householder reflections.
fn complement_basis(dim: usize, constraints: &[Vec<f64>]) -> Result<Array2<f64>> {
    let m = constraints.len();
    if m >= dim {
        return Err(Error::Contract(format!("{m} constraints in dimension {dim}")));
    }
    let mut c = Array2::<f64>::zeros((dim, m));
    for (j, v) in constraints.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Contract(format!(
                "constraint of length {} in dimension {dim}",
                v.len()
            )));
        }
        c.column_mut(j).assign(&Array1::from(v.clone()));
    }
    let mut reflectors = Vec::with_capacity(m);
    for j in 0..m {
        let x = c.slice(s![j.., j]).to_owned();
        let nx = x.dot(&x).sqrt();
        if nx == 0.0 {
            return Err(Error::Contract("linearly dependent constraints".into()));
        }
        let mut u = x;
        u[0] += if u[0] >= 0.0 { nx } else { -nx };
        let nu = u.dot(&u).sqrt();
        u /= nu;
        let mut block = c.slice_mut(s![j.., j..]);
        let proj = u.dot(&block);
        for (mut row, &ui) in block.axis_iter_mut(Axis(0)).zip(&u) {
            row.scaled_add(-2.0 * ui, &proj);
        }
        reflectors.push(u);
    }
    // Q = H_0 H_1 ... H_{m-1}; columns m.. of Q span the complement
    let mut q = Array2::<f64>::zeros((dim, dim - m));
    for k in 0..dim - m {
        q[[m + k, k]] = 1.0;
    }
    for (j, u) in reflectors.iter().enumerate().rev() {
        let mut block = q.slice_mut(s![j.., ..]);
        let proj = u.dot(&block);
        for (mut row, &ui) in block.axis_iter_mut(Axis(0)).zip(u) {
            row.scaled_add(-2.0 * ui, &proj);
        }
    }
    Ok(q)
}

/// `min ⟨L w, w⟩ / ‖w‖²` over `w` orthogonal (in `L²×L²`) to every
/// constraint. An empty constraint list gives the unconstrained minimum.
pub fn rayleigh_minimum(
    assembly: &OperatorAssembly,
    constraints: &[Vec<f64>],
    norm: RayleighNorm,
) -> Result<f64> {
    let dim = assembly.matrix_dim();
    let g = assembly.norm_matrix(norm);
    let (a, b) = if constraints.is_empty() {
        (assembly.matrix.clone(), g)
    } else {
        let q = complement_basis(dim, constraints)?;
        (q.t().dot(&assembly.matrix).dot(&q), q.t().dot(&g).dot(&q))
    };
    let (vals, _) = (a, b).eigh(UPLO::Lower)?;
    Ok(vals[0])
}

/// The coercivity constant for `set`, in the energy norm; a non-positive
/// value is a certification failure.
pub fn coercivity_constant(
    assembly: &OperatorAssembly,
    set: ConstraintSet,
    modes: Option<&PegoWeinsteinModes>,
) -> Result<f64> {
    let cons = constraint_vectors(assembly, set, modes)?;
    let c = rayleigh_minimum(assembly, &cons, RayleighNorm::Energy)?;
    if c <= 0.0 {
        return Err(Error::Certification(format!(
            "constrained minimum {c:.6e} is not positive (p = {}, omega = {}, {set})",
            assembly.p, assembly.omega
        )));
    }
    Ok(c)
}

/// Least-squares fit of `log|f| ≈ log C − η|x|` over the tail where
/// `|f| > floor·max|f|` and `|x| > x_min`. Returns `(η, C)`.
pub fn fit_tail_decay(grid: &Grid, f: &[f64], x_min: f64, floor: f64) -> Result<(f64, f64)> {
    grid.check_len(f.len())?;
    let peak = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let pts: Vec<(f64, f64)> = grid
        .points()
        .iter()
        .zip(f)
        .filter(|(x, v)| x.abs() > x_min && v.abs() > floor * peak)
        .map(|(x, v)| (x.abs(), v.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((-slope, (my - slope * mx).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivative_matrices_match_fft() {
        let g = Grid::new(10.0, 64).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| (-x * x / 4.0).exp()).collect();
        let d1 = first_derivative_matrix(&g).dot(&Array1::from(f.clone()));
        let d2 = second_derivative_matrix(&g).dot(&Array1::from(f.clone()));
        let e1 = g.spectral_derivative(&f, 1).unwrap();
        let e2 = g.spectral_derivative(&f, 2).unwrap();
        for i in 0..64 {
            assert_abs_diff_eq!(d1[i], e1[i], epsilon = 1e-11);
            assert_abs_diff_eq!(d2[i], e2[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let c = vec![vec![1.0, 2.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0, -1.0]];
        let q = complement_basis(5, &c).unwrap();
        let qtq = q.t().dot(&q);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(qtq[[i, j]], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
            for v in &c {
                assert_abs_diff_eq!(q.column(i).dot(&Array1::from(v.clone())), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn formula_at_rest() {
        assert_abs_diff_eq!(lambda0_formula(-3.0, 0.0), -3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_minus_exact(1.0, 0.0), -3.0);
    }

    #[test]
    fn tail_fit_recovers_rate() {
        let g = Grid::new(30.0, 256).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| 2.0 * (-0.7 * x.abs()).exp()).collect();
        let (eta, c) = fit_tail_decay(&g, &f, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(eta, 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-9);
    }
}
