//! Flat `key = value` run manifests.
//!
//! ```text
//! # two solitons
//! p = 1
//! soliton.1.omega = -0.5
//! soliton.1.x0 = -10
//! soliton.2.omega = 0.5
//! soliton.2.x0 = 10
//! final_times = 30, 40, 50
//! t0 = 10
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::builder::ForcingModel;
use crate::error::{Error, Result};
use crate::evolution::EvolveConfig;
use crate::grid::Grid;
use crate::soliton::{Regime, SolitonFamily, SolitonParams};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Derived from `p` when absent; must agree with it when present.
    pub regime: Option<Regime>,
    pub p: f64,
    /// `(ω_j, x_j)` in block order.
    pub solitons: Vec<(f64, f64)>,
    /// `(L, n)`; the default grid for the horizon when absent.
    pub grid: Option<(f64, usize)>,
    pub dt: Option<f64>,
    pub dealias: bool,
    pub checkpoint_stride: usize,
    /// End time of `evolve` runs.
    pub t_end: f64,
    pub final_times: Vec<f64>,
    pub t0: f64,
    pub model: ForcingModel,
    /// Half-length of the grid the unstable modes are computed on.
    pub mode_half_length: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            regime: None,
            p: 1.0,
            solitons: Vec::new(),
            grid: None,
            dt: None,
            dealias: true,
            checkpoint_stride: 10,
            t_end: 20.0,
            final_times: vec![30.0, 40.0, 50.0],
            t0: 10.0,
            model: ForcingModel::Analytic,
            mode_half_length: 20.0,
            output_dir: None,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut half_length = None;
        let mut n_points = None;
        let mut blocks: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "regime" => {
                    c.regime = Some(match v {
                        "subcritical" => Regime::Subcritical,
                        "supercritical" => Regime::Supercritical,
                        _ => return Err(Error::Config(format!("regime: unknown value {v:?}"))),
                    })
                }
                "p" => c.p = parse_num(key, v)?,
                "grid.half_length" => half_length = Some(parse_num(key, v)?),
                "grid.n_points" => n_points = Some(parse_num(key, v)?),
                "dt" => c.dt = Some(parse_num(key, v)?),
                "dealias" => c.dealias = parse_bool(key, v)?,
                "checkpoint_stride" => c.checkpoint_stride = parse_num(key, v)?,
                "t_end" => c.t_end = parse_num(key, v)?,
                "final_times" => c.final_times = parse_list(key, v)?,
                "t0" => c.t0 = parse_num(key, v)?,
                "model" => {
                    c.model = match v {
                        "analytic" => ForcingModel::Analytic,
                        "discrete" => ForcingModel::Discrete,
                        _ => return Err(Error::Config(format!("model: unknown value {v:?}"))),
                    }
                }
                "mode_half_length" => c.mode_half_length = parse_num(key, v)?,
                "output_dir" => c.output_dir = Some(PathBuf::from(v)),
                "seed" => c.seed = parse_num(key, v)?,
                _ => {
                    let parts: Vec<&str> = key.split('.').collect();
                    match parts.as_slice() {
                        ["soliton", idx, field] => {
                            let j: usize = parse_num(key, idx)?;
                            let e = blocks.entry(j).or_default();
                            match *field {
                                "omega" => e.0 = Some(parse_num(key, v)?),
                                "x0" => e.1 = Some(parse_num(key, v)?),
                                _ => return Err(Error::Config(format!("unknown key {key}"))),
                            }
                        }
                        _ => return Err(Error::Config(format!("unknown key {key}"))),
                    }
                }
            }
        }
        c.grid = match (half_length, n_points) {
            (Some(l), Some(n)) => Some((l, n)),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "grid.half_length and grid.n_points must be given together".into(),
                ))
            }
        };
        for (j, (w, x)) in blocks {
            let w = w.ok_or_else(|| Error::Config(format!("soliton.{j}.omega is missing")))?;
            c.solitons.push((w, x.unwrap_or(0.0)));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Manifest text that [`RunConfig::parse`] reads back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(r) = self.regime {
            writeln!(s, "regime = {r}").unwrap();
        }
        writeln!(s, "p = {:?}", self.p).unwrap();
        for (j, (w, x)) in self.solitons.iter().enumerate() {
            writeln!(s, "soliton.{}.omega = {w:?}", j + 1).unwrap();
            writeln!(s, "soliton.{}.x0 = {x:?}", j + 1).unwrap();
        }
        if let Some((l, n)) = self.grid {
            writeln!(s, "grid.half_length = {l:?}\ngrid.n_points = {n}").unwrap();
        }
        if let Some(dt) = self.dt {
            writeln!(s, "dt = {dt:?}").unwrap();
        }
        writeln!(s, "dealias = {}", self.dealias).unwrap();
        writeln!(s, "checkpoint_stride = {}", self.checkpoint_stride).unwrap();
        writeln!(s, "t_end = {:?}", self.t_end).unwrap();
        let ft: Vec<String> = self.final_times.iter().map(|t| format!("{t:?}")).collect();
        writeln!(s, "final_times = {}", ft.join(", ")).unwrap();
        writeln!(s, "t0 = {:?}", self.t0).unwrap();
        writeln!(s, "model = {}", self.model).unwrap();
        writeln!(s, "mode_half_length = {:?}", self.mode_half_length).unwrap();
        if let Some(d) = &self.output_dir {
            writeln!(s, "output_dir = {}", d.display()).unwrap();
        }
        writeln!(s, "seed = {}", self.seed).unwrap();
        s
    }

    /// Checks every field against the soliton and grid invariants; no
    /// numerical work beyond that.
    pub fn validate(&self) -> Result<()> {
        let regime = Regime::of(self.p)?;
        if let Some(r) = self.regime {
            if r != regime {
                return Err(Error::Config(format!("regime {r} does not match p = {}", self.p)));
            }
        }
        if self.solitons.is_empty() {
            return Err(Error::Config("at least one soliton block is required".into()));
        }
        for &(w, x) in &self.solitons {
            SolitonParams::new(self.p, w, x)?;
        }
        // growth rates only enter ω⋆, which is positive for any positive rate
        let placeholder = vec![1.0; self.solitons.len()];
        match regime {
            Regime::Subcritical => SolitonFamily::new(self.p, &self.solitons)?,
            Regime::Supercritical => SolitonFamily::supercritical(self.p, &self.solitons, &placeholder)?,
        };
        if let Some((l, n)) = self.grid {
            Grid::new(l, n)?;
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::Config("checkpoint_stride must be positive".into()));
        }
        if !self.t_end.is_finite() || !self.t0.is_finite() {
            return Err(Error::Config("times must be finite".into()));
        }
        if self.final_times.is_empty() || self.final_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("final_times must be a nonempty list of finite times".into()));
        }
        if self.final_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("final_times must be strictly increasing".into()));
        }
        if !(self.t0 < self.final_times[0]) {
            return Err(Error::Config("t0 must precede every final time".into()));
        }
        if !(self.mode_half_length > 0.0) {
            return Err(Error::Config("mode_half_length must be positive".into()));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.p).expect("validated")
    }

    /// Subcritical family; supercritical configurations need growth rates
    /// from [`RunConfig::family_with_rates`].
    pub fn family(&self) -> Result<SolitonFamily> {
        SolitonFamily::new(self.p, &self.solitons)
    }

    pub fn family_with_rates(&self, rates: &[f64]) -> Result<SolitonFamily> {
        match self.regime() {
            Regime::Subcritical => self.family(),
            Regime::Supercritical => SolitonFamily::supercritical(self.p, &self.solitons, rates),
        }
    }

    /// The configured grid, or the default one for `horizon`.
    pub fn grid_for(&self, family: &SolitonFamily, horizon: f64) -> Result<Grid> {
        match self.grid {
            Some((l, n)) => Grid::new(l, n),
            None => family.default_grid(horizon),
        }
    }

    pub fn dt_for(&self, grid: &Grid) -> f64 {
        self.dt.unwrap_or_else(|| EvolveConfig::default_dt(grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "p = 1\nsoliton.1.omega = -0.5\nsoliton.1.x0 = -10\n\
                       soliton.2.omega = 0.5 # right\nsoliton.2.x0 = 10\n";

    #[test]
    fn parse_and_round_trip() {
        let c = RunConfig::parse(TWO).unwrap();
        assert_eq!(c.solitons, vec![(-0.5, -10.0), (0.5, 10.0)]);
        assert_eq!(c.final_times, vec![30.0, 40.0, 50.0]);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_luminal_speed() {
        let e = RunConfig::parse("p = 1\nsoliton.1.omega = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("|omega| < 1"));
    }

    #[test]
    fn rejects_unknown_and_inconsistent_keys() {
        assert!(RunConfig::parse("p = 1\nsoliton.1.omega = 0.2\nfoo = 3\n").is_err());
        assert!(RunConfig::parse("regime = supercritical\np = 1\nsoliton.1.omega = 0.2\n").is_err());
        assert!(RunConfig::parse("p = 1\nsoliton.1.omega = 0.2\ngrid.n_points = 64\n").is_err());
        assert!(RunConfig::parse("p = 3\nsoliton.1.omega = 0.0\n").is_err());
    }
}
