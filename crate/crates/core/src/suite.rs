//! Seeded invariant suite.
//!
//! Every check draws from its own ChaCha8 stream of the run seed, runs on its
//! own thread and reports the largest defect it saw. The report lists checks
//! in a fixed order, so a seed determines the JSON byte for byte.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebroid::{
    anchor_apply, base_names, bracket, bracket_difference, d_rho_1, d_rho_1_tensorial, derivative_along, jacobiator,
    lie_derivative_0, reconstruct_from_differential, Algebroid, AlgebroidSpec, Components, DifferentialOf, DualSection,
    ExactForm, ScalarField, ScaledField, Section,
};
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::expr::{indexed_names, Expr};
use crate::hj::{hj_defect, hj_equivalence_check};
use crate::linalg;
use crate::mechanics::{
    constrain, el_field, integrate_el, legendre, riemannian_spray, spray_defect, ConstrainedSystem, FrameSpec,
    Lagrangian, MechanicalHamiltonian, MechanicalLagrangian, Riemannian, VelPoint,
};
use crate::poisson::{
    bundle_names, integrate_hamilton, phi, poisson_bracket, poisson_jacobiator, BasePullback, BundleFunction,
    LinearFunction, PhaseFunction, PhasePoint,
};
use crate::random::{self, MetricKind};
use crate::snake::{
    calibrate_bracket_sign, charm, control_operator, curve_energy, e_field, end_map, extremal_regular, g_bracket,
    horizontal_velocity, kinetic, pair_count, pair_index, project_to_kernel, snake_bracket_defect,
    triple_relation_defect, HeadCurve, SnakeConfig, SnakePath,
};

pub const DEFAULT_SEED: u64 = 42;

/// Direction of a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Pass when the value is at most the threshold.
    AtMost,
    /// Pass when the value is at least the threshold.
    AtLeast,
}

type CheckFn = fn(&Ctx) -> Result<f64>;

struct CheckDef {
    name: &'static str,
    threshold: f64,
    bound: Bound,
    run: CheckFn,
}

const fn at_most(name: &'static str, threshold: f64, run: CheckFn) -> CheckDef {
    CheckDef {
        name,
        threshold,
        bound: Bound::AtMost,
        run,
    }
}

const CHECKS: &[CheckDef] = &[
    at_most("expr.derivative_fd", 1e-6, expr_derivative_fd),
    at_most("algebroid.antisymmetry", 1e-13, algebroid_antisymmetry),
    at_most("algebroid.leibniz", 1e-10, algebroid_leibniz),
    at_most("algebroid.anchor_morphism", 1e-6, algebroid_anchor_morphism),
    at_most("algebroid.crochetderiv", 1e-10, algebroid_crochetderiv),
    at_most("algebroid.d_squared", 1e-9, algebroid_d_squared),
    at_most("algebroid.tensoriality", 1e-10, algebroid_tensoriality),
    at_most("algebroid.derivation_roundtrip", 1e-10, algebroid_roundtrip),
    at_most("poisson.coordinate_x_xi", 1e-12, poisson_x_xi),
    at_most("poisson.coordinate_x_x", 1e-13, poisson_x_x),
    at_most("poisson.coordinate_xi_xi", 1e-12, poisson_xi_xi),
    at_most("poisson.antisymmetry", 1e-13, poisson_antisymmetry),
    at_most("poisson.leibniz", 1e-10, poisson_leibniz),
    at_most("poisson.correspondence_linear", 1e-10, poisson_correspondence_linear),
    at_most(
        "poisson.correspondence_pullback",
        1e-10,
        poisson_correspondence_pullback,
    ),
    at_most("poisson.flow_bracket", 1e-5, poisson_flow_bracket),
    at_most("poisson.energy_drift", 1e-8, poisson_energy_drift),
    at_most("poisson.jacobi_agreement", 1e-8, poisson_jacobi_agreement),
    at_most("poisson.jacobi_lie_vanishes", 1e-10, poisson_jacobi_lie),
    CheckDef {
        name: "poisson.jacobi_non_lie_detected",
        threshold: 1e-3,
        bound: Bound::AtLeast,
        run: poisson_jacobi_non_lie,
    },
    at_most("mechanics.legendre_hamilton", 1e-6, mechanics_legendre_hamilton),
    at_most("mechanics.energy_drift", 1e-8, mechanics_energy_drift),
    at_most("mechanics.admissibility", 0.0, mechanics_admissibility),
    at_most("mechanics.spray_vs_el", 1e-9, mechanics_spray_vs_el),
    at_most("mechanics.spray_homogeneity", 1e-10, mechanics_homogeneity),
    at_most("mechanics.rigid_body", 1e-10, mechanics_rigid_body),
    at_most(
        "mechanics.rigid_body_conservation",
        1e-8,
        mechanics_rigid_body_conservation,
    ),
    at_most("mechanics.constrained_energy", 1e-8, mechanics_constrained_energy),
    at_most("mechanics.constrained_full_frame", 1e-12, mechanics_full_frame),
    at_most("hj.constant_composite", 1e-12, hj_constant_composite),
    at_most("hj.equivalence_inconsistencies", 0.0, hj_equivalence),
    at_most("snake.e_field_tangential", 1e-13, snake_tangential),
    at_most("snake.horizontal_feasibility", 1e-10, snake_feasibility),
    at_most("snake.horizontal_tangentiality", 1e-12, snake_tangentiality),
    at_most("snake.horizontal_minimality", 1e-12, snake_minimality),
    at_most("snake.control_psd", 1e-12, snake_control_psd),
    at_most("snake.colinear_singular", 1e-12, snake_colinear),
    at_most("snake.charm_tracking", 1e-6, snake_charm_tracking),
    at_most("snake.charm_unit_norm", 1e-9, snake_charm_norm),
    at_most("snake.charm_minimality", 1e-12, snake_charm_minimality),
    at_most("snake.bracket_relation", 1e-5, snake_bracket),
    at_most("snake.triple_relation", 1e-4, snake_triple),
    at_most("snake.g_jacobi", 1e-12, snake_g_jacobi),
    at_most("snake.extremal_residual", 1e-6, snake_extremal),
];

/// Threshold per check name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Thresholds(BTreeMap<String, f64>);

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds(CHECKS.iter().map(|c| (c.name.to_string(), c.threshold)).collect())
    }
}

impl Thresholds {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// Override one threshold; unknown names are rejected.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold for {name} must be finite and ≥ 0"
            )));
        }
        match self.0.get_mut(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("unknown check `{name}`"))),
        }
    }

    /// Apply every entry of `overrides`.
    pub fn merge(&mut self, overrides: &BTreeMap<String, f64>) -> Result<()> {
        overrides.iter().try_for_each(|(k, v)| self.set(k, *v))
    }

    pub fn names() -> Vec<&'static str> {
        CHECKS.iter().map(|c| c.name).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// `None` when the check could not run.
    pub max_defect: Option<f64>,
    pub threshold: f64,
    pub bound: Bound,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Fault injection for testing the suite itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Replace the structure functions of the random specs by tables with
    /// independent `(α, β)` and `(β, α)` entries.
    pub corrupt_structure: bool,
}

struct Ctx {
    seed: u64,
    stream: u64,
    opts: SuiteOptions,
}

impl Ctx {
    fn rng(&self) -> ChaCha8Rng {
        random::stream(self.seed, self.stream)
    }

    /// `count` random polynomial specs with `n ≤ nmax` and `m` in `mrange`.
    fn specs(&self, rng: &mut ChaCha8Rng, count: usize, nmax: usize, mmin: usize, mmax: usize) -> Vec<AlgebroidSpec> {
        (0..count)
            .map(|_| {
                let n = rng.random_range(1..=nmax);
                let m = rng.random_range(mmin..=mmax);
                let spec = random::polynomial_spec(rng, n, m);
                if self.opts.corrupt_structure {
                    corrupt(rng, spec)
                } else {
                    spec
                }
            })
            .collect()
    }
}

fn corrupt(rng: &mut ChaCha8Rng, spec: AlgebroidSpec) -> AlgebroidSpec {
    let (n, m) = (spec.n(), spec.m());
    let vars = base_names(n);
    let mut texts = Vec::new();
    for g in 0..m {
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    texts.push((g, a, b, random::polynomial(rng, &vars, 2, 2.0)));
                }
            }
        }
    }
    let entries: Vec<(usize, usize, usize, &str)> = texts.iter().map(|(g, a, b, s)| (*g, *a, *b, s.as_str())).collect();
    spec.with_raw_structure(&entries).expect("corrupted table parses")
}

/// Run every check with default options.
pub fn property_suite(seed: u64, thresholds: &Thresholds) -> SuiteReport {
    property_suite_with(seed, thresholds, SuiteOptions::default())
}

pub fn property_suite_with(seed: u64, thresholds: &Thresholds, opts: SuiteOptions) -> SuiteReport {
    let outcomes: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = CHECKS
            .iter()
            .enumerate()
            .map(|(i, def)| {
                let ctx = Ctx {
                    seed,
                    stream: i as u64,
                    opts,
                };
                scope.spawn(move || (def.run)(&ctx))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidArgument("check panicked".into())))
            })
            .collect()
    });
    let checks: Vec<CheckResult> = CHECKS
        .iter()
        .zip(outcomes)
        .map(|(def, outcome)| {
            let threshold = thresholds.get(def.name).unwrap_or(def.threshold);
            match outcome {
                Ok(v) => CheckResult {
                    name: def.name.into(),
                    max_defect: Some(v),
                    threshold,
                    bound: def.bound,
                    pass: match def.bound {
                        Bound::AtMost => v <= threshold,
                        Bound::AtLeast => v >= threshold,
                    },
                    error: None,
                },
                Err(e) => CheckResult {
                    name: def.name.into(),
                    max_defect: None,
                    threshold,
                    bound: def.bound,
                    pass: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    SuiteReport {
        seed,
        passed: checks.iter().all(|c| c.pass),
        checks,
    }
}

/// Heisenberg distribution on `ℝ³` with the Euclidean metric and a
/// quadratic potential: frame `f1 = ∂1 + x2 ∂3`, `f2 = ∂2`.
pub fn heisenberg() -> ConstrainedSystem<AlgebroidSpec> {
    let ambient = AlgebroidSpec::builder(3, 3)
        .anchor(&[["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
        .metric(&[["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
        .potential("0.5*(x1^2 + x2^2 + x3^2)")
        .build()
        .expect("Euclidean spec is valid");
    let frame = FrameSpec::parse(&[["1", "0", "x2"], ["0", "1", "0"]], 3).expect("Heisenberg frame parses");
    constrain(ambient, frame).expect("Heisenberg frame has full rank")
}

fn parse<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Expr> {
    Expr::parse(text, vars).map_err(|source| Error::Parse {
        context: "generated expression".into(),
        source,
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    linalg::max_abs_diff(a, b)
}

fn unit_box(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    random::point(rng, n, -1.0, 1.0)
}

fn scalar(rng: &mut ChaCha8Rng, n: usize) -> Expr {
    let vars = base_names(n);
    Expr::parse(&random::expression(rng, &vars, 3), &vars).expect("random expression parses")
}

fn dual_section(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DualSection {
    let vars = base_names(n);
    let comps: Vec<String> = (0..m).map(|_| random::polynomial(rng, &vars, 2, 2.0)).collect();
    DualSection::parse(&comps, n).expect("random dual section parses")
}

fn phase_poly(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> PhaseFunction {
    let vars = bundle_names(n, m, "xi");
    PhaseFunction::parse(&random::polynomial(rng, &vars, 2, scale), n, m).expect("random phase polynomial parses")
}

fn coord(text: &str, n: usize, m: usize) -> PhaseFunction {
    PhaseFunction::parse(text, n, m).expect("coordinate function parses")
}

fn phase_point(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PhasePoint {
    PhasePoint::new(unit_box(rng, n), unit_box(rng, m))
}

fn expr_derivative_fd(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let vars = ["a", "b", "c"];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let e = parse(&random::expression(&mut rng, &vars, 4), &vars)?;
        let x = unit_box(&mut rng, 3);
        let dir = random::unit_vector(&mut rng, 3);
        let (_, d) = e.directional_at(&x, &dir)?;
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(p, q)| p + s * q).collect() };
        let fd = (e.eval_at(&shifted(h))? - e.eval_at(&shifted(-h))?) / (2.0 * h);
        worst = worst.max((d - fd).abs() / d.abs().max(1.0));
    }
    Ok(worst)
}

fn algebroid_antisymmetry(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 2, 3) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let x = unit_box(&mut rng, n);
            let a = bracket(&spec, &s1, &s2, &x)?;
            let b = bracket(&spec, &s2, &s1, &x)?;
            worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p + q).abs()).fold(0.0, f64::max));
        }
    }
    Ok(worst)
}

fn algebroid_leibniz(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 1, 3) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let f = scalar(&mut rng, n);
            let x = unit_box(&mut rng, n);
            let lhs = bracket(&spec, &s1, &ScaledField { f: &f, s: &s2 }, &x)?;
            let fx = f.eval_at(&x)?;
            let lf = lie_derivative_0(&spec, &s1, &f, &x)?;
            let rhs: Vec<f64> = bracket(&spec, &s1, &s2, &x)?
                .iter()
                .zip(s2.eval_f64(&x)?)
                .map(|(b, s)| fx * b + lf * s)
                .collect();
            worst = worst.max(max_diff(&lhs, &rhs));
        }
    }
    Ok(worst)
}

/// `ρ(s)` as a vector field on the base.
fn anchored(alg: &AlgebroidSpec, s: &Section, x: &[f64]) -> Result<Vec<f64>> {
    anchor_apply(alg, x, &s.eval_f64(x)?)
}

/// Central-difference Jacobian-vector product `DX(x)·v`.
fn fd_jvp<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: &F, x: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
    Ok(f(&plus)?
        .iter()
        .zip(f(&minus)?)
        .map(|(p, q)| (p - q) / (2.0 * h))
        .collect())
}

fn algebroid_anchor_morphism(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in [AlgebroidSpec::tangent_bundle(3), AlgebroidSpec::so3_action()] {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let x = unit_box(&mut rng, n);
            let xf = |y: &[f64]| anchored(&spec, &s1, y);
            let yf = |y: &[f64]| anchored(&spec, &s2, y);
            let (xv, yv) = (xf(&x)?, yf(&x)?);
            let lie: Vec<f64> = fd_jvp(&yf, &x, &xv, 1e-5)?
                .iter()
                .zip(fd_jvp(&xf, &x, &yv, 1e-5)?)
                .map(|(a, b)| a - b)
                .collect();
            let image = anchor_apply(&spec, &x, &bracket(&spec, &s1, &s2, &x)?)?;
            worst = worst.max(max_diff(&image, &lie));
        }
    }
    Ok(worst)
}

struct Pair<'a> {
    omega: &'a DualSection,
    s: &'a Section,
}

impl ScalarField for Pair<'_> {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        Ok(crate::dual::dot(&self.omega.eval(x)?, &self.s.eval(x)?))
    }
}

fn algebroid_crochetderiv(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 1, 3) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let w = dual_section(&mut rng, n, m);
            let x = unit_box(&mut rng, n);
            let lhs = crate::dual::dot(&w.eval_f64(&x)?, &bracket(&spec, &s1, &s2, &x)?);
            let l1 = lie_derivative_0(&spec, &s1, &Pair { omega: &w, s: &s2 }, &x)?;
            let l2 = lie_derivative_0(&spec, &s2, &Pair { omega: &w, s: &s1 }, &x)?;
            let rhs = l1 - l2 - d_rho_1_tensorial(&spec, &w, &s1, &s2, &x)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

fn algebroid_d_squared(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in [
        AlgebroidSpec::tangent_bundle(3),
        AlgebroidSpec::so3(2),
        AlgebroidSpec::so3_action(),
    ] {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..10 {
            let f = scalar(&mut rng, n);
            let df = ExactForm { alg: &spec, f: &f };
            let s: Vec<Section> = (0..3).map(|_| random::section(&mut rng, n, m)).collect();
            let x = unit_box(&mut rng, n);
            let jac = jacobiator(&spec, &s[0], &s[1], &s[2], &x)?;
            worst = worst.max(jac.iter().fold(0.0, |w, v| w.max(v.abs())));
            worst = worst.max(d_rho_1(&spec, &df, &s[0], &s[1], x.as_slice())?.abs());
        }
    }
    Ok(worst)
}

fn algebroid_tensoriality(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let vars = base_names(n);
        let rows: Vec<Vec<String>> = (0..n)
            .map(|_| (0..m).map(|_| random::polynomial(&mut rng, &vars, 2, 2.0)).collect())
            .collect();
        let mut build = || {
            let mut b = AlgebroidSpec::builder(n, m).anchor(&rows);
            for g in 0..m {
                for a in 0..m {
                    for be in a + 1..m {
                        b = b.structure(g, a, be, random::polynomial(&mut rng, &vars, 2, 2.0));
                    }
                }
            }
            b.build()
        };
        let (sa, sb) = (build()?, build()?);
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let f = scalar(&mut rng, n);
            let x = unit_box(&mut rng, n);
            let fx = f.eval_at(&x)?;
            let base: Vec<f64> = bracket_difference(&sa, &sb, &s1, &s2, &x)?
                .iter()
                .map(|v| fx * v)
                .collect();
            let left = bracket_difference(&sa, &sb, &ScaledField { f: &f, s: &s1 }, &s2, &x)?;
            let right = bracket_difference(&sa, &sb, &s1, &ScaledField { f: &f, s: &s2 }, &x)?;
            worst = worst.max(max_diff(&left, &base)).max(max_diff(&right, &base));
        }
    }
    Ok(worst)
}

fn algebroid_roundtrip(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 1, 3) {
        for _ in 0..20 {
            let x = unit_box(&mut rng, spec.n());
            let r = reconstruct_from_differential(&DifferentialOf(&spec), &x)?;
            worst = worst
                .max(max_diff(&r.rho, &spec.anchor(&x)?))
                .max(max_diff(&r.structure, &spec.structure(&x)?));
        }
    }
    Ok(worst)
}

fn poisson_x_xi(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 4, 1, 4) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let p = phase_point(&mut rng, n, m);
            let rho = spec.anchor(&p.x)?;
            for i in 0..n {
                for a in 0..m {
                    let b = poisson_bracket(
                        &spec,
                        &coord(&format!("x{}", i + 1), n, m),
                        &coord(&format!("xi{}", a + 1), n, m),
                        &p,
                    )?;
                    worst = worst.max((b - rho[i * m + a]).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn poisson_x_x(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 4, 1, 4) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let p = phase_point(&mut rng, n, m);
            for i in 0..n {
                for j in 0..n {
                    let b = poisson_bracket(
                        &spec,
                        &coord(&format!("x{}", i + 1), n, m),
                        &coord(&format!("x{}", j + 1), n, m),
                        &p,
                    )?;
                    worst = worst.max(b.abs());
                }
            }
        }
    }
    Ok(worst)
}

fn poisson_xi_xi(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 4, 1, 4) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let p = phase_point(&mut rng, n, m);
            let c = spec.structure(&p.x)?;
            for a in 0..m {
                for b in 0..m {
                    let v = poisson_bracket(
                        &spec,
                        &coord(&format!("xi{}", a + 1), n, m),
                        &coord(&format!("xi{}", b + 1), n, m),
                        &p,
                    )?;
                    let cxi: f64 = (0..m).map(|g| c[g * m * m + a * m + b] * p.xi[g]).sum();
                    worst = worst.max((v + cxi).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn poisson_antisymmetry(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 2, 3) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let f = phase_poly(&mut rng, n, m, 2.0);
            let g = phase_poly(&mut rng, n, m, 2.0);
            let p = phase_point(&mut rng, n, m);
            worst = worst.max((poisson_bracket(&spec, &f, &g, &p)? + poisson_bracket(&spec, &g, &f, &p)?).abs());
        }
    }
    Ok(worst)
}

fn poisson_leibniz(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 1, 3) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let f = phase_poly(&mut rng, n, m, 2.0);
            let g = phase_poly(&mut rng, n, m, 2.0);
            let h = phase_poly(&mut rng, n, m, 2.0);
            let gh = PhaseFunction::parse(&format!("({})*({})", g.expr(), h.expr()), n, m)?;
            let p = phase_point(&mut rng, n, m);
            let lhs = poisson_bracket(&spec, &f, &gh, &p)?;
            let rhs = g.eval(&p.x, &p.xi)? * poisson_bracket(&spec, &f, &h, &p)?
                + h.eval(&p.x, &p.xi)? * poisson_bracket(&spec, &f, &g, &p)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// With the coordinate bracket, `{Φ_{s1}, Φ_{s2}} = −Φ_{[s1,s2]}`.
fn poisson_correspondence_linear(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 4, 1, 4) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let p = phase_point(&mut rng, n, m);
            let br = bracket(&spec, &s1, &s2, &p.x)?;
            let lhs = crate::dual::dot(&p.xi, &br);
            let rhs = poisson_bracket(&spec, &LinearFunction(&s1), &LinearFunction(&s2), &p)?;
            worst = worst.max((lhs + rhs).abs());
        }
    }
    Ok(worst)
}

/// `{Φ_s, f∘τ} = −(L_s f)∘τ`.
fn poisson_correspondence_pullback(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 4, 1, 4) {
        let (n, m) = (spec.n(), spec.m());
        for _ in 0..20 {
            let s = random::section(&mut rng, n, m);
            let f = scalar(&mut rng, n);
            let p = phase_point(&mut rng, n, m);
            let lhs = poisson_bracket(&spec, &LinearFunction(&s), &BasePullback(&f), &p)?;
            let rhs = lie_derivative_0(&spec, &s, &f, &p.x)?;
            worst = worst.max((lhs + rhs).abs());
            worst = worst.max((phi(&s, &p)? - crate::dual::dot(&s.eval_f64(&p.x)?, &p.xi)).abs());
        }
    }
    Ok(worst)
}

/// A random system and Hamiltonian, integrated over `[0, 1]` at step `1e-3`.
fn hamiltonian_run(ctx: &Ctx) -> Result<(AlgebroidSpec, PhaseFunction, crate::trajectory::Trajectory, ChaCha8Rng)> {
    let mut rng = ctx.rng();
    let spec = ctx.specs(&mut rng, 1, 2, 1, 2).remove(0);
    let (n, m) = (spec.n(), spec.m());
    let h = phase_poly(&mut rng, n, m, 1.0);
    let p0 = PhasePoint::new(
        random::point(&mut rng, n, -0.5, 0.5),
        random::point(&mut rng, m, -0.5, 0.5),
    );
    let traj = integrate_hamilton(&spec, &h, &p0, 1.0, 1e-3)?;
    Ok((spec, h, traj, rng))
}

fn split(row: &[f64], n: usize, m: usize) -> PhasePoint {
    PhasePoint::new(row[..n].to_vec(), row[n..n + m].to_vec())
}

fn poisson_flow_bracket(ctx: &Ctx) -> Result<f64> {
    let (spec, h, traj, mut rng) = hamiltonian_run(ctx)?;
    let (n, m) = (spec.n(), spec.m());
    let f = phase_poly(&mut rng, n, m, 2.0);
    let step = traj.meta.step;
    let mut worst: f64 = 0.0;
    for k in (1..traj.len() - 1).step_by(25) {
        let (a, b) = (split(&traj.rows[k - 1], n, m), split(&traj.rows[k + 1], n, m));
        let fd = (f.eval(&b.x, &b.xi)? - f.eval(&a.x, &a.xi)?) / (2.0 * step);
        let exact = poisson_bracket(&spec, &f, &h, &split(&traj.rows[k], n, m))?;
        worst = worst.max((fd - exact).abs());
    }
    Ok(worst)
}

fn poisson_energy_drift(ctx: &Ctx) -> Result<f64> {
    let (_, _, traj, _) = hamiltonian_run(ctx)?;
    Ok(traj.stat("h_drift").expect("h_drift statistic"))
}

/// `ρ(e_α)` as a base vector field.
struct AnchorColumn<'a, A> {
    alg: &'a A,
    alpha: usize,
}

impl<A: Algebroid> Components for AnchorColumn<'_, A> {
    fn len(&self) -> usize {
        self.alg.base_dim()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let (n, m) = (self.alg.base_dim(), self.alg.rank());
        let rho = self.alg.anchor(x)?;
        Ok((0..n).map(|i| rho[i * m + self.alpha]).collect())
    }
}

/// Max over coordinate triples of `|Jac_P − oracle|` and of `|Jac_P|`.
fn coordinate_jacobi<A: Algebroid>(alg: &A, rng: &mut ChaCha8Rng, points: usize) -> Result<(f64, f64)> {
    let (n, m) = (alg.base_dim(), alg.rank());
    let xs: Vec<PhaseFunction> = (1..=n).map(|i| coord(&format!("x{i}"), n, m)).collect();
    let xis: Vec<PhaseFunction> = (1..=m).map(|a| coord(&format!("xi{a}"), n, m)).collect();
    let basis: Vec<Section> = (0..m).map(|a| Section::basis(m, a, n)).collect();
    let (mut agreement, mut size) = (0.0_f64, 0.0_f64);
    for _ in 0..points {
        let p = phase_point(rng, n, m);
        let mut record = |jac: f64, oracle: f64| {
            agreement = agreement.max((jac - oracle).abs());
            size = size.max(jac.abs());
        };
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    let jac = poisson_jacobiator(alg, &xis[a], &xis[b], &xis[c], &p)?;
                    let j = jacobiator(alg, &basis[a], &basis[b], &basis[c], &p.x)?;
                    record(jac, crate::dual::dot(&p.xi, &j));
                }
            }
        }
        let rho = alg.anchor(&p.x)?;
        for b in 0..m {
            for c in b + 1..m {
                let cb = AnchorColumn { alg, alpha: b };
                let cc = AnchorColumn { alg, alpha: c };
                let lie: Vec<f64> = derivative_along(&cc, &p.x, &cb.eval(&p.x)?)?
                    .iter()
                    .zip(derivative_along(&cb, &p.x, &cc.eval(&p.x)?)?)
                    .map(|(u, v)| u - v)
                    .collect();
                let br = bracket(alg, &basis[b], &basis[c], &p.x)?;
                for i in 0..n {
                    let jac = poisson_jacobiator(alg, &xs[i], &xis[b], &xis[c], &p)?;
                    let image: f64 = (0..m).map(|g| rho[i * m + g] * br[g]).sum();
                    record(jac, lie[i] - image);
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for a in 0..m {
                    record(poisson_jacobiator(alg, &xs[i], &xs[j], &xis[a], &p)?, 0.0);
                }
            }
        }
    }
    Ok((agreement, size))
}

fn poisson_jacobi_agreement(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in [
        AlgebroidSpec::tangent_bundle(2),
        AlgebroidSpec::so3(1),
        AlgebroidSpec::so3_action(),
    ] {
        worst = worst.max(coordinate_jacobi(&spec, &mut rng, 10)?.0);
    }
    for spec in ctx.specs(&mut rng, 3, 3, 2, 3) {
        worst = worst.max(coordinate_jacobi(&spec, &mut rng, 10)?.0);
    }
    Ok(worst.max(coordinate_jacobi(&heisenberg(), &mut rng, 10)?.0))
}

fn poisson_jacobi_lie(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in [
        AlgebroidSpec::tangent_bundle(2),
        AlgebroidSpec::so3(1),
        AlgebroidSpec::so3_action(),
    ] {
        worst = worst.max(coordinate_jacobi(&spec, &mut rng, 10)?.1);
    }
    Ok(worst)
}

fn poisson_jacobi_non_lie(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    Ok(coordinate_jacobi(&heisenberg(), &mut rng, 10)?.1)
}

fn legendre_runs(
    ctx: &Ctx,
) -> Result<
    Vec<(
        AlgebroidSpec,
        crate::trajectory::Trajectory,
        crate::trajectory::Trajectory,
    )>,
> {
    let mut rng = ctx.rng();
    [MetricKind::Flat, MetricKind::Diagonal]
        .into_iter()
        .map(|kind| {
            let spec = random::riemannian_spec(&mut rng, 2, 2, kind, false);
            let vp0 = VelPoint::new(
                random::point(&mut rng, 2, -0.5, 0.5),
                random::point(&mut rng, 2, -0.5, 0.5),
            );
            let el = integrate_el(&spec, &MechanicalLagrangian(&spec), &vp0, 1.0, 1e-3)?;
            let p0 = legendre(&spec, &MechanicalLagrangian(&spec), &vp0)?;
            let ham = integrate_hamilton(&spec, &MechanicalHamiltonian(&spec), &p0, 1.0, 1e-3)?;
            Ok((spec, el, ham))
        })
        .collect()
}

fn mechanics_legendre_hamilton(ctx: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (spec, el, ham) in legendre_runs(ctx)? {
        let (n, m) = (spec.n(), spec.m());
        for (a, b) in el.rows.iter().zip(&ham.rows) {
            let vp = VelPoint::new(a[..n].to_vec(), a[n..n + m].to_vec());
            let p = legendre(&spec, &MechanicalLagrangian(&spec), &vp)?;
            let mut pushed = p.x;
            pushed.extend(p.xi);
            worst = worst.max(linalg::norm(
                &pushed.iter().zip(&b[..n + m]).map(|(u, v)| u - v).collect::<Vec<_>>(),
            ));
        }
    }
    Ok(worst)
}

fn mechanics_energy_drift(ctx: &Ctx) -> Result<f64> {
    let runs = legendre_runs(ctx)?;
    Ok(runs
        .iter()
        .map(|(_, el, _)| el.stat("HL_drift").expect("HL_drift"))
        .fold(0.0, f64::max))
}

fn mechanics_admissibility(ctx: &Ctx) -> Result<f64> {
    let runs = legendre_runs(ctx)?;
    Ok(runs
        .iter()
        .map(|(_, el, _)| el.stat("admissibility_defect").expect("admissibility_defect"))
        .fold(0.0, f64::max))
}

fn mechanics_spray_vs_el(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for kind in [
        MetricKind::Flat,
        MetricKind::Diagonal,
        MetricKind::General,
        MetricKind::General,
    ] {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let tangent = rng.random_bool(0.25);
        let spec = random::riemannian_spec(&mut rng, n, m, kind, tangent);
        for _ in 0..25 {
            let vp = VelPoint::new(unit_box(&mut rng, spec.n()), unit_box(&mut rng, spec.m()));
            let (_, a) = riemannian_spray(&spec, &vp)?;
            let (_, b) = el_field(&spec, &MechanicalLagrangian(&spec), &vp)?;
            worst = worst.max(max_diff(&a, &b));
        }
    }
    Ok(worst)
}

/// `½⟨g u, u⟩`.
struct Kinetic<'a, R>(&'a R);

impl<R: Riemannian> BundleFunction for Kinetic<'_, R> {
    fn eval<T: Scalar>(&self, x: &[T], u: &[T]) -> Result<T> {
        let m = self.0.rank();
        let g = self.0.metric(x)?;
        Ok(T::constant(0.5) * crate::dual::dot(u, &linalg::mat_vec(&g, m, m, u)))
    }
}

fn mechanics_homogeneity(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for kind in [MetricKind::Flat, MetricKind::Diagonal, MetricKind::General] {
        let spec = random::riemannian_spec(&mut rng, 2, 3, kind, false);
        let l = Kinetic(&spec);
        for _ in 0..10 {
            let vp = VelPoint::new(unit_box(&mut rng, 2), unit_box(&mut rng, 3));
            for lambda in [0.5, 2.0, 3.0] {
                worst = worst.max(spray_defect(&spec, &l, &vp, lambda)?);
            }
        }
    }
    Ok(worst)
}

fn rigid_body_lagrangian(inertia: &[f64]) -> Result<Lagrangian> {
    Lagrangian::parse(
        &format!(
            "0.5*({:?}*u1^2 + {:?}*u2^2 + {:?}*u3^2)",
            inertia[0], inertia[1], inertia[2]
        ),
        1,
        3,
    )
}

fn mechanics_rigid_body(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let spec = AlgebroidSpec::so3(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let inertia = random::point(&mut rng, 3, 1.0, 3.0);
        let l = rigid_body_lagrangian(&inertia)?;
        for _ in 0..10 {
            let u = unit_box(&mut rng, 3);
            let (_, ud) = el_field(&spec, &l, &VelPoint::new(vec![0.0], u.clone()))?;
            let iu: Vec<f64> = inertia.iter().zip(&u).map(|(a, b)| a * b).collect();
            let cross = [
                iu[1] * u[2] - iu[2] * u[1],
                iu[2] * u[0] - iu[0] * u[2],
                iu[0] * u[1] - iu[1] * u[0],
            ];
            let expect: Vec<f64> = cross.iter().zip(&inertia).map(|(c, i)| c / i).collect();
            worst = worst.max(max_diff(&ud, &expect));
        }
    }
    Ok(worst)
}

fn mechanics_rigid_body_conservation(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let spec = AlgebroidSpec::so3(1);
    let inertia = random::point(&mut rng, 3, 1.0, 3.0);
    let l = rigid_body_lagrangian(&inertia)?;
    let traj = integrate_el(&spec, &l, &VelPoint::new(vec![0.0], unit_box(&mut rng, 3)), 5.0, 1e-3)?;
    let casimir: Vec<f64> = traj
        .rows
        .iter()
        .map(|r| (0..3).map(|a| (inertia[a] * r[1 + a]).powi(2)).sum())
        .collect();
    let drift = casimir.iter().map(|c| (c - casimir[0]).abs()).fold(0.0, f64::max);
    Ok(drift.max(traj.stat("HL_drift").expect("HL_drift")))
}

fn mechanics_constrained_energy(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let sys = heisenberg();
    let mut worst: f64 = 0.0;
    for _ in 0..2 {
        let vp0 = VelPoint::new(
            random::point(&mut rng, 3, -0.5, 0.5),
            random::point(&mut rng, 2, -0.5, 0.5),
        );
        let traj = integrate_el(&sys, &MechanicalLagrangian(&sys), &vp0, 1.0, 1e-3)?;
        worst = worst.max(traj.stat("HL_drift").expect("HL_drift"));
    }
    Ok(worst)
}

fn mechanics_full_frame(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for kind in [MetricKind::Flat, MetricKind::General] {
        let spec = random::riemannian_spec(&mut rng, 2, 3, kind, false);
        let identity: Vec<Section> = (0..3).map(|a| Section::basis(3, a, 2)).collect();
        let sys = constrain(&spec, FrameSpec::new(identity)?)?;
        for _ in 0..10 {
            let vp = VelPoint::new(unit_box(&mut rng, 2), unit_box(&mut rng, 3));
            let x = vp.x.as_slice();
            worst = worst
                .max(max_diff(&sys.anchor(x)?, &spec.anchor(x)?))
                .max(max_diff(&sys.structure(x)?, &spec.structure(x)?))
                .max(max_diff(&sys.metric(x)?, &spec.metric(x)?));
            let (_, a) = el_field(&sys, &MechanicalLagrangian(&sys), &vp)?;
            let (_, b) = el_field(&spec, &MechanicalLagrangian(&spec), &vp)?;
            let (_, c) = riemannian_spray(&sys, &vp)?;
            let (_, d) = riemannian_spray(&spec, &vp)?;
            worst = worst.max(max_diff(&a, &b)).max(max_diff(&c, &d));
        }
    }
    Ok(worst)
}

fn hj_constant_composite(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for spec in ctx.specs(&mut rng, 5, 3, 1, 3) {
        let (n, m) = (spec.n(), spec.m());
        let vars = indexed_names("xi", m);
        let h = PhaseFunction::parse(&random::polynomial(&mut rng, &vars, 3, 2.0), n, m)?;
        let w = DualSection::constant(&unit_box(&mut rng, m), n);
        let points: Vec<Vec<f64>> = (0..20).map(|_| unit_box(&mut rng, n)).collect();
        worst = worst.max(hj_defect(&spec, &h, &w, &points)?);
    }
    Ok(worst)
}

/// Number of reports that miss the hypothesis or break the equivalence.
fn hj_equivalence(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let spec = AlgebroidSpec::tangent_bundle(2);
    let vars = base_names(2);
    let mut bad = 0usize;
    for k in 0..9 {
        let h = PhaseFunction::parse(
            &format!("0.5*(xi1^2 + xi2^2) + {}", random::polynomial(&mut rng, &vars, 2, 0.5)),
            2,
            2,
        )?;
        let f = match k % 3 {
            0 => format!(
                "{:?}*x1 + {:?}*x2",
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0)
            ),
            1 => format!("0.5*{:?}*x1^2", rng.random_range(0.5..1.5)),
            _ => random::polynomial(&mut rng, &vars, 2, 1.0),
        };
        let f = parse(&f, &vars)?;
        let w = ExactForm { alg: &spec, f: &f };
        let x0 = random::point(&mut rng, 2, 0.3, 0.8);
        let r = hj_equivalence_check(&spec, &h, &w, &x0, 1.0, 1e-3)?;
        if !(r.hypothesis_met && r.consistent) {
            bad += 1;
        }
    }
    Ok(bad as f64)
}

fn snake_configs(rng: &mut ChaCha8Rng, count: usize, d: usize) -> Result<Vec<SnakeConfig>> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=5);
            let lengths = random::point(rng, n, 0.5, 1.5);
            random::snake_config(rng, d, &lengths, 1e-3)
        })
        .collect()
}

fn snake_tangential(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for cfg in snake_configs(&mut rng, 20, 4)? {
        for i in 0..cfg.d() {
            for (e, u) in e_field(&cfg, i)?.iter().zip(cfg.segments()) {
                worst = worst.max(crate::dual::dot(e, u).abs());
            }
        }
    }
    Ok(worst)
}

fn random_lift(rng: &mut ChaCha8Rng, cfg: &SnakeConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let cdot = random::point(rng, cfg.d(), -1.0, 1.0);
    let (v, _) = horizontal_velocity(cfg, &cdot)?;
    Ok((cdot, v))
}

fn snake_feasibility(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for cfg in snake_configs(&mut rng, 20, 3)? {
        let (cdot, v) = random_lift(&mut rng, &cfg)?;
        let mut sum = vec![0.0; cfg.d()];
        for (l, vk) in cfg.lengths().iter().zip(&v) {
            sum.iter_mut().zip(vk).for_each(|(s, x)| *s += l * x);
        }
        worst = worst.max(max_diff(&sum, &cdot));
    }
    Ok(worst)
}

fn snake_tangentiality(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for cfg in snake_configs(&mut rng, 20, 3)? {
        let (_, v) = random_lift(&mut rng, &cfg)?;
        for (vk, uk) in v.iter().zip(cfg.segments()) {
            worst = worst.max(crate::dual::dot(vk, uk).abs());
        }
    }
    Ok(worst)
}

fn random_kernel_vector(rng: &mut ChaCha8Rng, cfg: &SnakeConfig) -> Result<Vec<Vec<f64>>> {
    let z: Vec<Vec<f64>> = (0..cfg.segment_count())
        .map(|_| random::point(rng, cfg.d(), -1.0, 1.0))
        .collect();
    project_to_kernel(cfg, &z)
}

/// `max(0, ‖v‖² − ‖v + w‖²)`, or `1` if a non-negligible `w` fails to
/// increase the norm strictly.
fn snake_minimality(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for cfg in snake_configs(&mut rng, 5, 3)? {
        let (_, v) = random_lift(&mut rng, &cfg)?;
        let base = kinetic(cfg.lengths(), &v);
        for _ in 0..100 {
            let w = random_kernel_vector(&mut rng, &cfg)?;
            let sum: Vec<Vec<f64>> = v
                .iter()
                .zip(&w)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
                .collect();
            let moved = kinetic(cfg.lengths(), &sum);
            worst = worst.max(base - moved);
            if kinetic(cfg.lengths(), &w).sqrt() > 1e-6 && moved <= base {
                worst = worst.max(1.0);
            }
        }
    }
    Ok(worst)
}

fn psd_defect(cfg: &SnakeConfig) -> f64 {
    let d = cfg.d();
    let a = control_operator(cfg);
    let mut asym: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            asym = asym.max((a[i * d + j] - a[j * d + i]).abs());
        }
    }
    asym.max(-linalg::min_eigenvalue(&linalg::to_dmatrix(&a, d, d)))
}

fn colinear(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Result<SnakeConfig> {
    let u = random::unit_vector(rng, d);
    let segs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            u.iter().map(|x| s * x).collect()
        })
        .collect();
    SnakeConfig::new(random::point(rng, n, 0.5, 1.5), segs)
}

fn snake_control_psd(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for cfg in snake_configs(&mut rng, 20, 3)? {
        worst = worst.max(psd_defect(&cfg));
    }
    for _ in 0..10 {
        worst = worst.max(psd_defect(&colinear(&mut rng, 3, 4)?));
    }
    Ok(worst)
}

fn snake_colinear(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let cfg = colinear(&mut rng, 3, 4)?;
        let d = cfg.d();
        worst = worst.max(linalg::min_eigenvalue(&linalg::to_dmatrix(&control_operator(&cfg), d, d)).abs());
    }
    Ok(worst)
}

fn straight_head(c0: &[f64], dir: &[f64], length: f64) -> Result<HeadCurve> {
    let exprs: Vec<String> = c0
        .iter()
        .zip(dir)
        .map(|(c, v)| format!("({c:?}) + ({:?})*t", length * v))
        .collect();
    HeadCurve::parse(&exprs)
}

/// The charm run of the acceptance setup: `d = 3`, five unit segments, a
/// straight head segment of length `0.5`.
fn charm_run(ctx: &Ctx) -> Result<(SnakeConfig, SnakePath, ChaCha8Rng)> {
    let mut rng = ctx.rng();
    let cfg = random::snake_config(&mut rng, 3, &[1.0; 5], 1e-2)?;
    let dir = random::unit_vector(&mut rng, 3);
    let head = straight_head(&end_map(&cfg), &dir, 0.5)?;
    let path = charm(&cfg, &head, 1.0, 1e-3)?;
    Ok((cfg, path, rng))
}

fn snake_charm_tracking(ctx: &Ctx) -> Result<f64> {
    let (_, path, _) = charm_run(ctx)?;
    Ok(path.trajectory.stat("track_err_max").expect("track_err_max"))
}

fn snake_charm_norm(ctx: &Ctx) -> Result<f64> {
    let (_, path, _) = charm_run(ctx)?;
    Ok(path.trajectory.stat("norm_drift_max").expect("norm_drift_max"))
}

/// Energy of the lift against 100 perturbations by kernel fields, on every
/// tenth sample.
fn snake_charm_minimality(ctx: &Ctx) -> Result<f64> {
    let (cfg0, path, mut rng) = charm_run(ctx)?;
    let (d, n) = (cfg0.d(), cfg0.segment_count());
    let idx: Vec<usize> = (0..path.trajectory.len()).step_by(10).collect();
    let configs: Vec<SnakeConfig> = idx
        .iter()
        .map(|&k| {
            let row = &path.trajectory.rows[k];
            let u: Vec<Vec<f64>> = (0..n).map(|s| row[s * d..(s + 1) * d].to_vec()).collect();
            SnakeConfig::new(path.lengths.clone(), u)
        })
        .collect::<Result<_>>()?;
    let coarse = |vel: Vec<Vec<Vec<f64>>>| -> Result<f64> {
        let mut traj = crate::trajectory::Trajectory::new(vec![], 1e-2);
        for &k in &idx {
            traj.push(path.trajectory.times[k], vec![]);
        }
        curve_energy(&SnakePath {
            trajectory: traj,
            velocities: vel,
            lengths: path.lengths.clone(),
        })
    };
    let lift: Vec<Vec<Vec<f64>>> = idx.iter().map(|&k| path.velocities[k].clone()).collect();
    let base = coarse(lift.clone())?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let z: Vec<Vec<f64>> = (0..n).map(|_| random::point(&mut rng, d, -1.0, 1.0)).collect();
        let amp = rng.random_range(0.01..1.0);
        let perturbed: Vec<Vec<Vec<f64>>> = configs
            .iter()
            .zip(&lift)
            .map(|(cfg, v)| {
                let w = project_to_kernel(cfg, &z)?;
                Ok(v.iter()
                    .zip(&w)
                    .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + amp * q).collect())
                    .collect())
            })
            .collect::<Result<_>>()?;
        worst = worst.max(base - coarse(perturbed)?);
    }
    Ok(worst)
}

fn snake_bracket(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let configs = snake_configs(&mut rng, 20, 4)?;
    let sign = calibrate_bracket_sign(&configs[0]);
    let mut worst: f64 = 0.0;
    for cfg in &configs {
        for i in 0..4 {
            for j in i + 1..4 {
                worst = worst.max(snake_bracket_defect(cfg, i, j, sign)?);
            }
        }
    }
    Ok(worst)
}

fn snake_triple(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let configs = snake_configs(&mut rng, 3, 4)?;
    let sign = calibrate_bracket_sign(&configs[0]);
    let mut worst: f64 = 0.0;
    for cfg in &configs {
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if j != k {
                        worst = worst.max(triple_relation_defect(cfg, i, j, k, sign)?);
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn snake_g_jacobi(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random::gvector(&mut rng, 6);
        let b = random::gvector(&mut rng, 6);
        let c = random::gvector(&mut rng, 6);
        let terms = [
            g_bracket(&a, &g_bracket(&b, &c)?)?,
            g_bracket(&b, &g_bracket(&c, &a)?)?,
            g_bracket(&c, &g_bracket(&a, &b)?)?,
        ];
        for k in 0..6 {
            worst = worst.max(terms.iter().map(|t| t.sigma[k]).sum::<f64>().abs());
        }
        for k in 0..pair_count(6) {
            worst = worst.max(terms.iter().map(|t| t.xi[k]).sum::<f64>().abs());
        }
    }
    Ok(worst)
}

fn snake_extremal(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng();
    let (d, dt) = (4, 1e-3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s0 = unit_box(&mut rng, d);
        let sd = unit_box(&mut rng, d);
        let x0 = unit_box(&mut rng, pair_count(d));
        let xd = unit_box(&mut rng, pair_count(d));
        let t = rng.random_range(0.0..2.0);
        let at = |t: f64| extremal_regular(&s0, &sd, &x0, &xd, t);
        let ((sa, xa), (sb, xb), (sc, xc)) = (at(t - dt)?, at(t)?, at(t + dt)?);
        for k in 0..d {
            worst = worst.max(((sa[k] - 2.0 * sb[k] + sc[k]) / (dt * dt)).abs());
        }
        for j in 0..d {
            for l in j + 1..d {
                let p = pair_index(j, l, d);
                let acc = (xa[p] - 2.0 * xb[p] + xc[p]) / (dt * dt);
                worst = worst.max((acc - sd[j] * sd[l]).abs());
            }
        }
    }
    Ok(worst)
}
