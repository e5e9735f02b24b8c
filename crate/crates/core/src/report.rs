//! CSV outputs of a run directory and the pass/fail summary built from them.

use std::path::Path;

use crate::error::{Error, Result};

pub const CONSERVATION_CSV: &str = "conservation.csv";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const CAUCHY_CSV: &str = "cauchy.csv";
pub const MODULATION_CSV: &str = "modulation.csv";
pub const SHOOTING_CSV: &str = "shooting.csv";
pub const FUNCTIONALS_CSV: &str = "functionals.csv";
pub const PROFILE_CSV: &str = "profile.csv";

pub const CONSERVATION_HEADER: [&str; 5] =
    ["t", "energy", "momentum", "energy_drift_rel", "momentum_drift"];
pub const ERRORS_HEADER: [&str; 5] = ["n", "final_time", "t", "error_h", "bound"];
pub const CAUCHY_HEADER: [&str; 4] = ["n", "final_time", "next_final_time", "cauchy_h"];
pub const SHOOTING_HEADER: [&str; 8] = [
    "n",
    "final_time",
    "a_minus_norm",
    "alpha_norm",
    "objective",
    "reached_time",
    "iterations",
    "converged",
];
pub const PROFILE_HEADER: [&str; 5] = ["x", "phi", "dphi", "u1", "u2"];

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header.iter().map(AsRef::as_ref))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Contract(format!(
                "row of {} fields for a {}-column header",
                r.len(),
                header.len()
            )));
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Full-precision text form used in every CSV.
pub fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        self.checks.iter().map(|c| c.line() + "\n").collect()
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column {name}")))
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|_| Error::Format(format!("column {name}: bad number {:?}", r[c])))
            })
            .collect()
    }

    /// Empty cells read as `None`.
    fn optional_floats(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .map(|r| {
                if r[c].is_empty() {
                    Ok(None)
                } else {
                    r[c].parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Format(format!("column {name}: bad number {:?}", r[c])))
                }
            })
            .collect()
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn conservation_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let de = max_abs(t.floats("energy_drift_rel")?);
    let m = t.floats("momentum")?;
    let m0 = m.first().copied().unwrap_or(0.0);
    let dm = max_abs(t.floats("momentum_drift")?) / (1.0 + m0.abs());
    out.push(Check::new("energy conservation", de <= 1e-8, format!("max relative drift {de:.3e} (limit 1e-8)")));
    out.push(Check::new("momentum conservation", dm <= 1e-8, format!("max scaled drift {dm:.3e} (limit 1e-8)")));
    Ok(())
}

fn spectrum_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let p = t.floats("p")?;
    let w = t.floats("omega")?;
    let formula = t.floats("lambda0_formula")?;
    let numeric = t.floats("lambda0_numeric")?;
    let neg = t.floats("n_negative")?;
    let zero = t.floats("n_zero")?;
    let coer = t.optional_floats("coercivity_C")?;
    for i in 0..p.len() {
        let tag = format!("spectrum p={} omega={}", p[i], w[i]);
        let rel = (numeric[i] - formula[i]).abs() / formula[i].abs();
        out.push(Check::new(
            &format!("{tag} lambda0"),
            rel <= 1e-6,
            format!("numeric {:.12} vs formula {:.12} (relative {rel:.2e})", numeric[i], formula[i]),
        ));
        out.push(Check::new(
            &format!("{tag} counts"),
            neg[i] == 1.0 && zero[i] == 1.0,
            format!("{} negative, {} zero", neg[i], zero[i]),
        ));
        if let Some(c) = coer[i] {
            out.push(Check::new(&format!("{tag} coercivity"), c > 0.0, format!("C = {c:.6e}")));
        }
    }
    Ok(())
}

fn error_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let e = t.floats("error_h")?;
    let b = t.floats("bound")?;
    let bad = e.iter().zip(&b).filter(|(e, b)| !(e.is_finite() && e <= b)).count();
    out.push(Check::new(
        "uniform error bound",
        bad == 0,
        format!("{} of {} checkpoints exceed the bound; max error {:.3e}", bad, e.len(), max_abs(e.iter().copied())),
    ));
    Ok(())
}

fn cauchy_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let c = t.floats("cauchy_h")?;
    let ok = !c.is_empty() && c.windows(2).all(|w| w[1] < w[0]) && c.iter().all(|v| v.is_finite());
    let list: Vec<String> = c.iter().map(|v| format!("{v:.3e}")).collect();
    out.push(Check::new("cauchy series decreasing", ok, format!("[{}]", list.join(", "))));
    Ok(())
}

fn modulation_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let r = max_abs(t.floats("max_ortho")?);
    out.push(Check::new("orthogonality residuals", r <= 1e-10, format!("max {r:.3e} (limit 1e-10)")));
    Ok(())
}

fn shooting_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let a = t.floats("a_minus_norm")?;
    let al = t.floats("alpha_norm")?;
    let obj = t.floats("objective")?;
    let reached = t.floats("reached_time")?;
    let tn = t.floats("final_time")?;
    for i in 0..a.len() {
        out.push(Check::new(
            &format!("shooting T={} objective", tn[i]),
            obj[i] < 1.0,
            format!("objective {:.3e}, reached t = {:.3}", obj[i], reached[i]),
        ));
        out.push(Check::new(
            &format!("shooting T={} alpha bound", tn[i]),
            al[i] <= 2.0 * a[i],
            format!("|alpha| {:.3e} vs 2|a-| {:.3e}", al[i], 2.0 * a[i]),
        ));
    }
    Ok(())
}

fn functional_checks(t: &Table, out: &mut Vec<Check>) -> Result<()> {
    let m = t.floats("momentum")?;
    let m0 = m.first().copied().unwrap_or(0.0);
    let d = max_abs(m.iter().map(|v| v - m0));
    out.push(Check::new(
        "total momentum along construction",
        d <= 1e-8 * (1.0 + m0.abs()),
        format!("max drift {d:.3e}"),
    ));
    Ok(())
}

type Checker = fn(&Table, &mut Vec<Check>) -> Result<()>;

/// Checks every known CSV present in `dir`. A directory holding none of
/// them is an error.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let table: [(&str, Checker); 7] = [
        (CONSERVATION_CSV, conservation_checks),
        (SPECTRUM_CSV, spectrum_checks),
        (ERRORS_CSV, error_checks),
        (CAUCHY_CSV, cauchy_checks),
        (MODULATION_CSV, modulation_checks),
        (SHOOTING_CSV, shooting_checks),
        (FUNCTIONALS_CSV, functional_checks),
    ];
    let mut checks = Vec::new();
    let mut found = 0;
    for (name, check) in table {
        let path = dir.join(name);
        if path.exists() {
            found += 1;
            check(&Table::read(&path)?, &mut checks)?;
        }
    }
    if found == 0 {
        return Err(Error::Config(format!("no result CSVs in {}", dir.display())));
    }
    Ok(Summary { checks })
}
