use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boussinesq::builder::{
    build_subcritical, build_supercritical, decay_fit, supercritical_setup, BuildConfig,
    ShootConfig,
};
use boussinesq::checkpoint;
use boussinesq::evolution::{evolve, evolve_backward_from_final};
use boussinesq::functionals::{energy, localized_functionals, momentum};
use boussinesq::modulation::{modulate, unstable_projections};
use boussinesq::report::{self, fmt, write_csv};
use boussinesq::soliton::{elliptic_residual, soliton_sum};
use boussinesq::spectrum::{assemble_linearized, certify_spectrum, SpectrumReport};
use boussinesq::{
    CutoffSystem, Direction, Error, EvolveConfig, FunctionalReport, Grid, ModulationDecomposition,
    ModulationMode, Regime, RunConfig, SolitonFamily, SolitonParams,
};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "BOUSSINESQ_OUT";

#[derive(Parser)]
#[command(name = "boussinesq", version, about = "Soliton experiments for the good Boussinesq system")]
struct Cli {
    /// Output directory for this run [default: $BOUSSINESQ_OUT/<command>, or ./runs/<command>]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a soliton profile and print its elliptic residual.
    Soliton {
        #[arg(long)]
        p: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Evolve the soliton sum of a configuration, forward or backward.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        backward: bool,
    },
    /// Modulate every record of a checkpoint file.
    Modulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Certify the spectrum of the linearized operator.
    Spectrum {
        #[arg(long)]
        p: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Construct an approximate multi-soliton by backward integration.
    Multisoliton {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check the CSVs of a run directory and print PASS/FAIL lines.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    half_length: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest; command-line values override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    /// Soliton as OMEGA:X0; repeat for several.
    #[arg(long = "soliton", allow_hyphen_values = true)]
    solitons: Vec<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> boussinesq::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.p {
            c.p = p;
        }
        if !self.solitons.is_empty() {
            c.solitons = self
                .solitons
                .iter()
                .map(|s| {
                    let (w, x) = s.split_once(':').unwrap_or((s, "0"));
                    let parse = |v: &str| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("--soliton {s:?}: expected OMEGA:X0")))
                    };
                    Ok((parse(w)?, parse(x)?))
                })
                .collect::<boussinesq::Result<_>>()?;
        }
        if let Some(t) = self.t_end {
            c.t_end = t;
        }
        if self.dt.is_some() {
            c.dt = self.dt;
        }
        c.validate()?;
        Ok(c)
    }
}

enum Failure {
    Invariant(String),
    Err(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Err(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Blowup { .. } => 3,
        Error::Certification(_)
        | Error::Convergence { .. }
        | Error::OutOfBasin { .. }
        | Error::InsufficientData { .. }
        | Error::Linalg(_) => 1,
        _ => 2,
    }
}

fn out_dir(cli_out: &Option<PathBuf>, config_out: Option<&Path>, name: &str) -> PathBuf {
    if let Some(d) = cli_out {
        return d.clone();
    }
    if let Some(d) = config_out {
        return d.to_path_buf();
    }
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(name)
}

fn grid_from(args: &GridArgs, fallback: Grid) -> boussinesq::Result<Grid> {
    match (args.half_length, args.points) {
        (None, None) => Ok(fallback),
        (Some(l), Some(n)) => Grid::new(l, n),
        (Some(l), None) => Grid::with_max_spacing(l, fallback.spacing()),
        (None, Some(n)) => Grid::new(fallback.half_length(), n),
    }
}

fn summarize(dir: &Path) -> Outcome {
    let s = report::summarize_dir(dir)?;
    let text = s.to_text();
    std::fs::write(dir.join("summary.txt"), &text).map_err(Error::from)?;
    print!("{text}");
    if s.passed() {
        Ok(())
    } else {
        Err(Failure::Invariant("one or more checks failed".into()))
    }
}

fn cmd_soliton(dir: &Path, p: f64, omega: f64, x0: f64, g: &GridArgs) -> Outcome {
    let s = SolitonParams::new(p, omega, x0)?;
    let fam = match boussinesq::soliton::Regime::of(p) {
        Ok(Regime::Supercritical) => SolitonFamily::supercritical(p, &[(omega, x0)], &[1.0]),
        _ => SolitonFamily::new(p, &[(omega, x0)]),
    };
    let fallback = match fam {
        Ok(f) => f.default_grid(0.0)?,
        // p = 2 or ω = 0 supercritical: no family, but the profile exists
        Err(_) => Grid::with_max_spacing((30.0 / s.scale()).max(40.0) + x0.abs(), s.max_spacing())?,
    };
    let grid = grid_from(g, fallback)?;
    let res = elliptic_residual(&s, &grid)?;
    let rows: Vec<Vec<String>> = grid
        .points()
        .iter()
        .map(|&x| {
            let k = s.sample(x - x0);
            vec![fmt(x), fmt(k.phi), fmt(k.dphi), fmt(k.phi), fmt(-omega * k.phi)]
        })
        .collect();
    write_csv(&dir.join(report::PROFILE_CSV), &report::PROFILE_HEADER, &rows)?;
    println!("grid: L = {}, n = {}", grid.half_length(), grid.n_points());
    println!("elliptic_residual: {res:.6e}");
    if res <= 1e-8 {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("elliptic residual {res:.3e} exceeds 1e-8")))
    }
}

fn cmd_evolve(dir: &Path, cfg: &RunConfig, backward: bool) -> Outcome {
    let rates = vec![1.0; cfg.solitons.len()];
    let family = cfg.family_with_rates(&rates)?;
    let grid = cfg.grid_for(&family, cfg.t_end)?;
    family.check_resolution(&grid)?;
    let start = if backward { cfg.t_end } else { 0.0 };
    let initial = soliton_sum(&family, &grid, start)?;
    let dir_flag = if backward { Direction::Backward } else { Direction::Forward };
    let mut ec = EvolveConfig::new(&grid, family.p, if backward { 0.0 } else { cfg.t_end }, dir_flag);
    ec.dt = cfg.dt_for(&grid);
    ec.dealias = cfg.dealias;
    ec.checkpoint_stride = cfg.checkpoint_stride;
    let traj = if backward {
        evolve_backward_from_final(&initial, 0.0, &ec)?
    } else {
        evolve(&initial, &ec)?
    };
    checkpoint::save_trajectory(&dir.join("trajectory.ckpt"), &traj)?;
    let e0 = energy(traj.first(), family.p);
    let m0 = momentum(traj.first());
    let rows: Vec<Vec<String>> = traj
        .states
        .iter()
        .map(|s| {
            let (e, m) = (energy(s, family.p), momentum(s));
            vec![fmt(s.time), fmt(e), fmt(m), fmt((e - e0) / e0.abs()), fmt(m - m0)]
        })
        .collect();
    write_csv(&dir.join(report::CONSERVATION_CSV), &report::CONSERVATION_HEADER, &rows)?;
    std::fs::write(dir.join("manifest.txt"), cfg.to_text()).map_err(Error::from)?;
    println!("checkpoints: {}", traj.states.len());
    summarize(dir)
}

fn cmd_modulate(dir: &Path, cfg: &RunConfig, path: &Path) -> Outcome {
    let states = checkpoint::load_states(path)?;
    let first = states.first().ok_or_else(|| Error::Corruption("empty checkpoint".into()))?;
    let (family, modes) = match cfg.regime() {
        Regime::Subcritical => (cfg.family()?, None),
        Regime::Supercritical => {
            let (f, m) = supercritical_setup(cfg.p, &cfg.solitons, &first.grid, cfg.mode_half_length)?;
            (f, Some(m))
        }
    };
    let mode = match family.regime {
        Regime::Subcritical => ModulationMode::Subcritical,
        Regime::Supercritical => ModulationMode::Supercritical,
    };
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let d = modulate(s, &family, mode)?;
        let g = match &modes {
            Some(m) => Some(unstable_projections(&d, &family, m)?),
            None => None,
        };
        rows.push(d.csv_row(&family, g.as_deref()));
    }
    let header = ModulationDecomposition::csv_header(family.len(), modes.is_some());
    write_csv(&dir.join(report::MODULATION_CSV), &header, &rows)?;
    println!("decomposed {} checkpoints", rows.len());
    summarize(dir)
}

fn cmd_spectrum(dir: &Path, p: f64, omega: f64, g: &GridArgs) -> Outcome {
    let s = SolitonParams::new(p, omega, 0.0)?;
    let fallback = Grid::new(40.0, 1024)?;
    let mut grid = grid_from(g, fallback)?;
    if grid.spacing() > s.max_spacing() && g.points.is_none() {
        grid = Grid::with_max_spacing(grid.half_length(), s.max_spacing())?;
    }
    let asm = assemble_linearized(p, omega, &grid)?;
    let rep = certify_spectrum(&asm)?;
    let text = rep.to_text();
    std::fs::write(dir.join("spectrum.txt"), &text).map_err(Error::from)?;
    write_csv(&dir.join(report::SPECTRUM_CSV), &SpectrumReport::CSV_HEADER, &[rep.csv_row()])?;
    print!("{text}");
    summarize(dir)
}

fn cmd_multisoliton(dir: &Path, cfg: &RunConfig) -> Outcome {
    let horizon = cfg.final_times.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let pre = cfg.family_with_rates(&vec![1.0; cfg.solitons.len()])?;
    let grid = cfg.grid_for(&pre, horizon)?;
    let mut bc = BuildConfig::new(&pre, &cfg.final_times)?;
    bc.grid = grid.clone();
    bc.escape_norm = boussinesq::modulation::modulation_radius(&pre, &grid)?;
    bc.dt = cfg.dt_for(&grid);
    bc.dealias = cfg.dealias;
    bc.checkpoint_stride = cfg.checkpoint_stride;
    bc.model = cfg.model;
    let run = match pre.regime {
        Regime::Subcritical => build_subcritical(&pre, cfg.t0, &cfg.final_times, &bc)?,
        Regime::Supercritical => {
            let (family, modes) = supercritical_setup(cfg.p, &cfg.solitons, &grid, cfg.mode_half_length)?;
            build_supercritical(&family, &modes, cfg.t0, &cfg.final_times, &bc, &ShootConfig::default())?
        }
    };
    let family = &run.family;
    std::fs::write(dir.join("manifest.txt"), cfg.to_text()).map_err(Error::from)?;

    let rate = family.rate();
    let mut rows = Vec::new();
    for (n, (tn, series)) in run.final_times.iter().zip(&run.error_series).enumerate() {
        for &(t, e) in series {
            rows.push(vec![n.to_string(), fmt(*tn), fmt(t), fmt(e), fmt((-rate * t).exp())]);
        }
    }
    write_csv(&dir.join(report::ERRORS_CSV), &report::ERRORS_HEADER, &rows)?;

    let rows: Vec<Vec<String>> = run
        .cauchy_series
        .iter()
        .enumerate()
        .map(|(n, c)| {
            vec![n.to_string(), fmt(run.final_times[n]), fmt(run.final_times[n + 1]), fmt(*c)]
        })
        .collect();
    write_csv(&dir.join(report::CAUCHY_CSV), &report::CAUCHY_HEADER, &rows)?;

    for (n, traj) in run.trajectories.iter().enumerate() {
        checkpoint::save_trajectory(&dir.join(format!("trajectory_{n}.ckpt")), traj)?;
    }

    // functionals and modulation along the longest trajectory
    if let Some(traj) = run.trajectories.last() {
        let cs = CutoffSystem::new(family);
        let rows = traj
            .states
            .iter()
            .map(|s| localized_functionals(s, family, &cs, family.p).map(|r| r.csv_row()))
            .collect::<boussinesq::Result<Vec<_>>>()?;
        write_csv(&dir.join(report::FUNCTIONALS_CSV), &FunctionalReport::csv_header(family.len()), &rows)?;
    }
    if let Some(mods) = run.modulation.last() {
        let mut header = vec!["t".to_string()];
        header.extend((1..=family.len()).map(|j| format!("omega_{j}")));
        header.extend((1..=family.len()).map(|j| format!("x_{j}")));
        header.push("eps_h".into());
        header.push("max_ortho".into());
        let rows: Vec<Vec<String>> = mods
            .iter()
            .map(|m| {
                let mut r = vec![fmt(m.time)];
                r.extend(m.omegas.iter().map(|v| fmt(*v)));
                r.extend(m.positions.iter().map(|v| fmt(*v)));
                r.push(fmt(m.epsilon_norm));
                r.push(fmt(m.max_ortho_residual));
                r
            })
            .collect();
        write_csv(&dir.join(report::MODULATION_CSV), &header, &rows)?;
    }
    if let Some(reports) = &run.shooting {
        let rows: Vec<Vec<String>> = reports
            .iter()
            .enumerate()
            .map(|(n, r)| {
                vec![
                    n.to_string(),
                    fmt(run.final_times[n]),
                    fmt(r.a_minus_norm()),
                    fmt(r.alpha_norm()),
                    fmt(r.objective),
                    fmt(r.reached_time),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                ]
            })
            .collect();
        write_csv(&dir.join(report::SHOOTING_CSV), &report::SHOOTING_HEADER, &rows)?;
    }

    match decay_fit(&run) {
        Ok((r, c, r2)) => println!(
            "decay fit: rate {r:.4e}, constant {c:.4e}, r2 {r2:.4} (bound rate {rate:.4e}; the bound is an upper estimate, not the sharp rate)"
        ),
        Err(e) => println!("decay fit: {e}"),
    }
    for (tn, f) in run.final_times.iter().zip(&run.failures) {
        if let Some(t) = f {
            println!("run from T = {tn} stopped at t = {t}");
        }
    }
    let outcome = summarize(dir);
    if family.regime == Regime::Subcritical {
        if let Some(t) = run.failures.iter().flatten().next() {
            return Err(Failure::Err(Error::Blowup { time: *t }));
        }
    }
    outcome
}

fn dispatch(cli: &Cli) -> Outcome {
    let (name, config_out) = match &cli.command {
        Command::Soliton { .. } => ("soliton", None),
        Command::Evolve { .. } => ("evolve", None),
        Command::Modulate { .. } => ("modulate", None),
        Command::Spectrum { .. } => ("spectrum", None),
        Command::Multisoliton { .. } => ("multisoliton", None),
        Command::Report { .. } => ("report", None),
    };
    let run_cfg = match &cli.command {
        Command::Evolve { run, .. } | Command::Modulate { run, .. } | Command::Multisoliton { run } => {
            Some(run.resolve()?)
        }
        _ => config_out,
    };
    if let Command::Report { dir } = &cli.command {
        return summarize(dir);
    }
    let dir = out_dir(&cli.out, run_cfg.as_ref().and_then(|c| c.output_dir.as_deref()), name);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    match &cli.command {
        Command::Soliton { p, omega, x0, grid } => cmd_soliton(&dir, *p, *omega, *x0, grid),
        Command::Evolve { backward, .. } => cmd_evolve(&dir, run_cfg.as_ref().unwrap(), *backward),
        Command::Modulate { checkpoint, .. } => cmd_modulate(&dir, run_cfg.as_ref().unwrap(), checkpoint),
        Command::Spectrum { p, omega, grid } => cmd_spectrum(&dir, *p, *omega, grid),
        Command::Multisoliton { .. } => cmd_multisoliton(&dir, run_cfg.as_ref().unwrap()),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
