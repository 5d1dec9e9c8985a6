//! `anchorage` command-line front end.
//!
//! Exit codes: 0 when every checked threshold holds, 1 on a threshold
//! violation or a numerical breakdown, 2 on input errors.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anchorage::algebroid::{
    anchor_defect, jacobiator, reconstruct_from_differential, Algebroid, DifferentialOf, Section,
};
use anchorage::hj::hj_equivalence_check;
use anchorage::io::{SnakeFile, SpecFile};
use anchorage::mechanics::{constrain, integrate_el, Lagrangian, MechanicalLagrangian, VelPoint};
use anchorage::poisson::{integrate_hamilton, PhaseFunction, PhasePoint};
use anchorage::random;
use anchorage::snake::{charm, extremal_regular, pair_count};
use anchorage::suite::{property_suite, Thresholds, DEFAULT_SEED};
use anchorage::trajectory::{time_grid, Trajectory};
use anchorage::{Error, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Largest reconstruction error accepted by `derivation-roundtrip`.
pub const ROUNDTRIP_THRESHOLD: f64 = 1e-10;
/// Jacobiator and anchor-defect level below which `jacobi-report` calls the
/// structure Lie.
pub const LIE_THRESHOLD: f64 = 1e-9;
/// Charm tracking error limit.
pub const TRACKING_THRESHOLD: f64 = 1e-6;
/// Charm unit-norm drift limit.
pub const NORM_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "anchorage", version, about = "Mechanics on almost Lie algebroids")]
pub struct Cli {
    /// Directory for artifacts; without it data goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Integrator step.
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub step: f64,
    /// Final time.
    #[arg(long = "t", global = true, default_value_t = 1.0)]
    pub t: f64,
    /// JSON object of threshold overrides for `check-all`.
    #[arg(long, global = true)]
    pub thresholds: Option<PathBuf>,
    /// Suppress informational messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a spec file.
    Validate { spec: PathBuf },
    /// Integrate Hamilton's equations.
    Hamilton {
        spec: PathBuf,
        #[arg(long)]
        h: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, allow_hyphen_values = true)]
        xi0: String,
    },
    /// Integrate the Euler–Lagrange equations.
    Lagrange {
        spec: PathBuf,
        /// Lagrangian in x1..xn, u1..um; defaults to the spec file's `L`.
        #[arg(long = "L", conflicts_with = "riemannian")]
        lagrangian: Option<String>,
        /// Use ½⟨g u, u⟩ − V from the spec file.
        #[arg(long)]
        riemannian: bool,
        /// Restrict to the spec file's frame; `u0` then has one entry per frame
        /// section.
        #[arg(long)]
        constrained: bool,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, allow_hyphen_values = true)]
        u0: String,
    },
    /// Jacobiator and anchor-morphism defects at random points.
    JacobiReport {
        spec: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Report on the structure induced by the spec file's frame.
        #[arg(long)]
        constrained: bool,
    },
    /// Two-way Hamilton–Jacobi check for a dual section.
    HjCheck {
        spec: PathBuf,
        #[arg(long)]
        h: String,
        /// Components of ω, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        omega: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
    },
    /// Recover ρ and C from the differential and compare.
    DerivationRoundtrip {
        spec: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Drive a snake along its head curve.
    SnakeCharm { config: PathBuf },
    /// Sample the closed-form regular extremal.
    SnakeExtremal {
        #[arg(long, allow_hyphen_values = true)]
        sigma0: String,
        #[arg(long, allow_hyphen_values = true)]
        sigmadot0: String,
        #[arg(long, allow_hyphen_values = true)]
        xi0: String,
        #[arg(long, allow_hyphen_values = true)]
        xidot0: String,
    },
    /// Run the full invariant suite.
    CheckAll,
}

/// Where command output goes.
pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

struct Ctx<'a, 'b> {
    cli: &'a Cli,
    io: &'a mut Io<'b>,
}

impl Ctx<'_, '_> {
    fn info(&mut self, msg: &str) {
        if !self.cli.quiet {
            let _ = writeln!(self.io.stderr, "{msg}");
        }
    }

    fn fail(&mut self, msg: &str) {
        let _ = writeln!(self.io.stderr, "{msg}");
    }

    /// Write `text` to `out/name`, or to stdout without `--out`.
    fn emit(&mut self, name: &str, text: &str) -> Result<()> {
        match &self.cli.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(name);
                std::fs::write(&path, text)?;
                self.info(&format!("wrote {}", path.display()));
            }
            None => self.io.stdout.write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn emit_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.emit(name, &text)
    }

    fn emit_trajectory(&mut self, name: &str, traj: &Trajectory) -> Result<()> {
        let csv = traj.to_csv()?;
        self.emit(name, &csv)
    }
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, S>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = io.stderr.write_all(text.as_bytes());
            } else {
                let _ = io.stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let mut ctx = Ctx { cli: &cli, io };
    match dispatch(&mut ctx) {
        Ok(code) => code,
        Err(e) => {
            let code = error_code(&e);
            if let Error::BlowUp { partial, .. } = &e {
                let _ = ctx.emit_trajectory("partial.csv", partial);
            }
            ctx.fail(&format!("error: {e}"));
            code
        }
    }
}

/// Numerical breakdowns during a run count as violations; everything else
/// is an input problem.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. }
        | Error::Singular { .. }
        | Error::RankDeficient { .. }
        | Error::SingularConfiguration { at_time: Some(_), .. } => EXIT_VIOLATION,
        _ => EXIT_INPUT,
    }
}

/// Split on commas outside parentheses.
pub fn split_top_level(text: &str) -> Vec<String> {
    let (mut out, mut cur, mut depth) = (Vec::new(), String::new(), 0i32);
    for c in text.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur.trim().to_string());
    out
}

/// Comma-separated reals.
pub fn parse_vector(what: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{what}: `{}` is not a number", s.trim())))
        })
        .collect()
}

fn check_len(what: &str, v: &[f64], expect: usize) -> Result<()> {
    if v.len() != expect {
        return Err(Error::Dimension(format!(
            "{what} needs {expect} entries, got {}",
            v.len()
        )));
    }
    Ok(())
}

fn check_time(cli: &Cli) -> Result<()> {
    time_grid(cli.t, cli.step).map(|_| ())
}

fn load_spec(path: &Path) -> Result<SpecFile> {
    SpecFile::load(path)
}

fn dispatch(ctx: &mut Ctx) -> Result<i32> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Validate { spec } => validate(ctx, spec),
        Command::Hamilton { spec, h, x0, xi0 } => hamilton(ctx, spec, h, x0, xi0),
        Command::Lagrange {
            spec,
            lagrangian,
            riemannian,
            constrained,
            x0,
            u0,
        } => lagrange(ctx, spec, lagrangian.as_deref(), *riemannian, *constrained, x0, u0),
        Command::JacobiReport {
            spec,
            samples,
            constrained,
        } => {
            let file = load_spec(spec)?;
            let ambient = file.build()?;
            if *constrained {
                let frame = file.frame().ok_or_else(|| {
                    Error::InvalidArgument("--constrained needs a `frame` entry in the spec file".into())
                })??;
                jacobi_report(ctx, &constrain(&ambient, frame)?, *samples)
            } else {
                jacobi_report(ctx, &ambient, *samples)
            }
        }
        Command::HjCheck { spec, h, omega, x0 } => hj_check(ctx, spec, h, omega, x0),
        Command::DerivationRoundtrip { spec, points } => roundtrip(ctx, spec, *points),
        Command::SnakeCharm { config } => snake_charm(ctx, config),
        Command::SnakeExtremal {
            sigma0,
            sigmadot0,
            xi0,
            xidot0,
        } => snake_extremal(ctx, sigma0, sigmadot0, xi0, xidot0),
        Command::CheckAll => check_all(ctx),
    }
}

fn validate(ctx: &mut Ctx, path: &Path) -> Result<i32> {
    let file = load_spec(path)?;
    let spec = file.build()?;
    if let Some(l) = file.lagrangian() {
        l?;
    }
    let mut frame_len = None;
    if let Some(frame) = file.frame() {
        let frame = frame?;
        frame_len = Some(frame.len());
        if spec.has_metric() {
            constrain(&spec, frame)?;
        }
    }
    let mut msg = format!(
        "ok: n = {}, m = {}, metric: {}",
        spec.n(),
        spec.m(),
        if spec.has_metric() { "yes" } else { "no" }
    );
    if let Some(k) = frame_len {
        msg.push_str(&format!(", frame: {k} sections"));
    }
    ctx.info(&msg);
    Ok(EXIT_OK)
}

fn hamilton(ctx: &mut Ctx, path: &Path, h: &str, x0: &str, xi0: &str) -> Result<i32> {
    let spec = load_spec(path)?.build()?;
    let (n, m) = (spec.n(), spec.m());
    let h = PhaseFunction::parse(h, n, m)?;
    let x0 = parse_vector("x0", x0)?;
    let xi0 = parse_vector("xi0", xi0)?;
    check_len("x0", &x0, n)?;
    check_len("xi0", &xi0, m)?;
    check_time(ctx.cli)?;
    let traj = integrate_hamilton(&spec, &h, &PhasePoint::new(x0, xi0), ctx.cli.t, ctx.cli.step)?;
    ctx.emit_trajectory("hamilton.csv", &traj)?;
    ctx.info(&format!("h drift {:e}", traj.stat("h_drift").unwrap_or(f64::NAN)));
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn lagrange(
    ctx: &mut Ctx,
    path: &Path,
    lagrangian: Option<&str>,
    riemannian: bool,
    constrained: bool,
    x0: &str,
    u0: &str,
) -> Result<i32> {
    let file = load_spec(path)?;
    let spec = file.build()?;
    let (n, m) = (spec.n(), spec.m());
    let x0 = parse_vector("x0", x0)?;
    let u0 = parse_vector("u0", u0)?;
    check_len("x0", &x0, n)?;
    check_time(ctx.cli)?;
    let (t, step) = (ctx.cli.t, ctx.cli.step);
    let explicit = match (lagrangian, riemannian) {
        (Some(text), _) => Some(Lagrangian::parse(text, n, m)?),
        (None, true) => None,
        (None, false) => Some(file.lagrangian().ok_or_else(|| {
            Error::InvalidArgument("give --L, --riemannian, or an `L` entry in the spec file".into())
        })??),
    };
    let traj = if constrained {
        let frame = file
            .frame()
            .ok_or_else(|| Error::InvalidArgument("--constrained needs a `frame` entry in the spec file".into()))??;
        let sys = constrain(&spec, frame)?;
        check_len("u0", &u0, sys.rank())?;
        let vp = VelPoint::new(x0, u0);
        match &explicit {
            Some(l) => integrate_el(&sys, &sys.restrict(l), &vp, t, step)?,
            None => integrate_el(&sys, &MechanicalLagrangian(&sys), &vp, t, step)?,
        }
    } else {
        check_len("u0", &u0, m)?;
        let vp = VelPoint::new(x0, u0);
        match &explicit {
            Some(l) => integrate_el(&spec, l, &vp, t, step)?,
            None => integrate_el(&spec, &MechanicalLagrangian(&spec), &vp, t, step)?,
        }
    };
    ctx.emit_trajectory("lagrange.csv", &traj)?;
    ctx.info(&format!(
        "HL drift {:e}, admissibility defect {:e}",
        traj.stat("HL_drift").unwrap_or(f64::NAN),
        traj.stat("admissibility_defect").unwrap_or(f64::NAN)
    ));
    Ok(EXIT_OK)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |w, x| w.max(x.abs()))
}

fn jacobi_report<A: Algebroid>(ctx: &mut Ctx, spec: &A, samples: usize) -> Result<i32> {
    let (n, m) = (spec.base_dim(), spec.rank());
    let seed = ctx.cli.seed.unwrap_or(DEFAULT_SEED);
    let mut rng = random::stream(seed, 0);
    let basis: Vec<Section> = (0..m).map(|a| Section::basis(m, a, n)).collect();
    let (mut jac_basis, mut jac_random, mut anchor) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let x = random::point(&mut rng, n, -1.0, 1.0);
        for a in 0..m {
            for b in a + 1..m {
                anchor = anchor.max(max_abs(&anchor_defect(spec, &basis[a], &basis[b], &x)?));
                for c in b + 1..m {
                    jac_basis = jac_basis.max(max_abs(&jacobiator(spec, &basis[a], &basis[b], &basis[c], &x)?));
                }
            }
        }
        let s: Vec<Section> = (0..3).map(|_| random::section(&mut rng, n, m)).collect();
        jac_random = jac_random.max(max_abs(&jacobiator(spec, &s[0], &s[1], &s[2], &x)?));
        anchor = anchor.max(max_abs(&anchor_defect(spec, &s[0], &s[1], &x)?));
    }
    let is_lie = jac_basis.max(jac_random).max(anchor) < LIE_THRESHOLD;
    let report = json!({
        "samples": samples,
        "seed": seed,
        "max_jacobiator_basis": jac_basis,
        "max_jacobiator_random": jac_random,
        "max_anchor_defect": anchor,
        "threshold": LIE_THRESHOLD,
        "is_lie": is_lie,
    });
    ctx.emit_json("jacobi_report.json", &report)?;
    ctx.info(if is_lie {
        "Lie algebroid on the sample"
    } else {
        "Jacobi identity fails on the sample"
    });
    Ok(EXIT_OK)
}

fn hj_check(ctx: &mut Ctx, path: &Path, h: &str, omega: &str, x0: &str) -> Result<i32> {
    let spec = load_spec(path)?.build()?;
    let (n, m) = (spec.n(), spec.m());
    let h = PhaseFunction::parse(h, n, m)?;
    let comps = split_top_level(omega);
    if comps.len() != m {
        return Err(Error::Dimension(format!(
            "omega needs {m} components, got {}",
            comps.len()
        )));
    }
    let omega = anchorage::algebroid::DualSection::parse(&comps, n)?;
    let x0 = parse_vector("x0", x0)?;
    check_len("x0", &x0, n)?;
    check_time(ctx.cli)?;
    let report = hj_equivalence_check(&spec, &h, &omega, &x0, ctx.cli.t, ctx.cli.step)?;
    ctx.emit_json("hj_report.json", &serde_json::to_value(&report)?)?;
    if !report.hypothesis_met {
        ctx.fail(&format!(
            "FAIL closedness: d_rho omega defect {:e} exceeds {:e}",
            report.closedness_defect, report.thresholds.closedness
        ));
        return Ok(EXIT_VIOLATION);
    }
    if !report.consistent {
        ctx.fail(&format!(
            "FAIL hj_equivalence: hj_defect {:e}, lift_deviation {:e}",
            report.hj_defect, report.lift_deviation
        ));
        return Ok(EXIT_VIOLATION);
    }
    let solves = report.hj_defect < report.thresholds.hj && report.lift_deviation < report.thresholds.lift;
    ctx.info(&format!(
        "PASS hj_equivalence: hj_defect {:e}, lift_deviation {:e}; omega {} the Hamilton-Jacobi equation",
        report.hj_defect,
        report.lift_deviation,
        if solves { "solves" } else { "does not solve" }
    ));
    Ok(EXIT_OK)
}

fn roundtrip(ctx: &mut Ctx, path: &Path, points: usize) -> Result<i32> {
    let spec = load_spec(path)?.build()?;
    let seed = ctx.cli.seed.unwrap_or(DEFAULT_SEED);
    let mut rng = random::stream(seed, 0);
    let (mut rho_err, mut c_err) = (0.0_f64, 0.0_f64);
    for _ in 0..points {
        let x = random::point(&mut rng, spec.n(), -1.0, 1.0);
        let r = reconstruct_from_differential(&DifferentialOf(&spec), &x)?;
        rho_err = rho_err.max(anchorage::linalg::max_abs_diff(&r.rho, &spec.anchor(&x)?));
        c_err = c_err.max(anchorage::linalg::max_abs_diff(&r.structure, &spec.structure(&x)?));
    }
    let pass = rho_err <= ROUNDTRIP_THRESHOLD && c_err <= ROUNDTRIP_THRESHOLD;
    ctx.emit_json(
        "derivation_roundtrip.json",
        &json!({
            "points": points,
            "seed": seed,
            "max_anchor_error": rho_err,
            "max_structure_error": c_err,
            "threshold": ROUNDTRIP_THRESHOLD,
            "pass": pass,
        }),
    )?;
    if pass {
        Ok(EXIT_OK)
    } else {
        ctx.fail("FAIL derivation_roundtrip");
        Ok(EXIT_VIOLATION)
    }
}

fn snake_charm(ctx: &mut Ctx, path: &Path) -> Result<i32> {
    let (cfg, head) = SnakeFile::load(path)?.build()?;
    check_time(ctx.cli)?;
    let out = charm(&cfg, &head, ctx.cli.t, ctx.cli.step)?;
    ctx.emit_trajectory("snake_charm.csv", &out.trajectory)?;
    let track = out.trajectory.stat("track_err_max").unwrap_or(f64::NAN);
    let drift = out.trajectory.stat("norm_drift_max").unwrap_or(f64::NAN);
    let mut code = EXIT_OK;
    if !(track <= TRACKING_THRESHOLD) {
        ctx.fail(&format!("FAIL charm_tracking: {track:e} > {TRACKING_THRESHOLD:e}"));
        code = EXIT_VIOLATION;
    }
    if !(drift <= NORM_THRESHOLD) {
        ctx.fail(&format!("FAIL charm_unit_norm: {drift:e} > {NORM_THRESHOLD:e}"));
        code = EXIT_VIOLATION;
    }
    ctx.info(&format!(
        "tracking error {track:e}, norm drift {drift:e}, energy {:e}",
        out.trajectory.stat("energy").unwrap_or(f64::NAN)
    ));
    Ok(code)
}

fn snake_extremal(ctx: &mut Ctx, sigma0: &str, sigmadot0: &str, xi0: &str, xidot0: &str) -> Result<i32> {
    let s0 = parse_vector("sigma0", sigma0)?;
    let sd = parse_vector("sigmadot0", sigmadot0)?;
    let x0 = parse_vector("xi0", xi0)?;
    let xd = parse_vector("xidot0", xidot0)?;
    let d = s0.len();
    check_len("sigmadot0", &sd, d)?;
    check_len("xi0", &x0, pair_count(d))?;
    check_len("xidot0", &xd, pair_count(d))?;
    let grid = time_grid(ctx.cli.t, ctx.cli.step)?;
    let mut columns: Vec<String> = (1..=d).map(|i| format!("sigma{i}")).collect();
    for j in 1..=d {
        for l in j + 1..=d {
            columns.push(format!("xi_{j}_{l}"));
        }
    }
    let mut traj = Trajectory::new(columns, ctx.cli.step);
    traj.meta.integrator = "closed-form".into();
    for &t in &grid {
        let (sigma, xi) = extremal_regular(&s0, &sd, &x0, &xd, t)?;
        let mut row = sigma;
        row.extend(xi);
        traj.push(t, row);
    }
    ctx.emit_trajectory("snake_extremal.csv", &traj)?;
    Ok(EXIT_OK)
}

fn check_all(ctx: &mut Ctx) -> Result<i32> {
    let mut th = Thresholds::default();
    if let Some(path) = &ctx.cli.thresholds {
        let text = std::fs::read_to_string(path)?;
        let overrides: BTreeMap<String, f64> = serde_json::from_str(&text)?;
        th.merge(&overrides)?;
    }
    let report = property_suite(ctx.cli.seed.unwrap_or(DEFAULT_SEED), &th);
    ctx.emit("check_all.json", &report.to_json()?)?;
    for c in report.failures() {
        let detail = match (&c.error, c.max_defect) {
            (Some(e), _) => e.clone(),
            (None, Some(v)) => format!("{v:e} vs threshold {:e}", c.threshold),
            (None, None) => String::new(),
        };
        ctx.fail(&format!("FAIL {}: {detail}", c.name));
    }
    ctx.info(&format!(
        "{} of {} checks passed",
        report.checks.len() - report.failures().len(),
        report.checks.len()
    ));
    Ok(if report.passed { EXIT_OK } else { EXIT_VIOLATION })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_level_split_respects_parentheses() {
        assert_eq!(split_top_level("x1, sin(x2)"), vec!["x1", "sin(x2)"]);
        assert_eq!(split_top_level("(a,b),c"), vec!["(a,b)", "c"]);
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vector("v", "1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert!(parse_vector("v", "1,,2").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(error_code(&Error::InvalidArgument("x".into())), EXIT_INPUT);
        assert_eq!(
            error_code(&Error::SingularConfiguration {
                margin: 0.0,
                at_time: Some(0.5)
            }),
            EXIT_VIOLATION
        );
        assert_eq!(
            error_code(&Error::SingularConfiguration {
                margin: 0.0,
                at_time: None
            }),
            EXIT_INPUT
        );
    }
}
