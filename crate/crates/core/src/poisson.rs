//! The linear almost Poisson structure on the dual bundle.
//!
//! Phase-space functions are evaluated generically in `(x, ξ)` so their
//! partial derivatives come from dual numbers. Flow equations are
//! `ẋ^i = ρ^i_α ∂h/∂ξ_α`, `ξ̇_α = −ρ^i_α ∂h/∂x^i − C^γ_{αβ} ξ_γ ∂h/∂ξ_β`,
//! so that `d/dt F = {F, h}` along the flow.
//!
//! With `{x^i, ξ_α} = ρ^i_α` and `{ξ_α, ξ_β} = −C^γ_{αβ} ξ_γ`, linear
//! functions satisfy `{Φ_{s1}, Φ_{s2}} = −Φ_{[s1,s2]}` and
//! `{Φ_s, f∘τ} = −(L_s f)∘τ`.

use std::sync::Arc;

use crate::algebroid::{apply_anchor, base_names, contract_structure, Algebroid, Components, ScalarField};
use crate::dual::{self, Dual, Scalar};
use crate::error::{Error, Result};
use crate::expr::{indexed_names, Expr};
use crate::linalg;
use crate::trajectory::{integrate_rk4, time_grid, Trajectory};

/// A function on the total space of a rank-`m` bundle over an `n`-patch,
/// written in base coordinates and fiber coordinates.
pub trait BundleFunction {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T>;
}

impl<F: BundleFunction + ?Sized> BundleFunction for &F {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T> {
        (**self).eval(x, fiber)
    }
}

/// A point `(x, ξ)` of the dual bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        PhasePoint { x, xi }
    }

    fn check<A: Algebroid>(&self, alg: &A) -> Result<()> {
        if self.x.len() != alg.base_dim() || self.xi.len() != alg.rank() {
            return Err(Error::Dimension(format!(
                "phase point has shape ({}, {}), expected ({}, {})",
                self.x.len(),
                self.xi.len(),
                alg.base_dim(),
                alg.rank()
            )));
        }
        Ok(())
    }
}

/// Variable names `x1..xn, <fiber>1..<fiber>m`.
pub fn bundle_names(n: usize, m: usize, fiber: &str) -> Vec<String> {
    let mut v = base_names(n);
    v.extend(indexed_names(fiber, m));
    v
}

pub(crate) fn eval_bundle_expr<T: Scalar>(e: &Expr, n: usize, x: &[T], fiber: &[T]) -> Result<T> {
    debug_assert_eq!(x.len(), n);
    let mut all = Vec::with_capacity(x.len() + fiber.len());
    all.extend_from_slice(x);
    all.extend_from_slice(fiber);
    Ok(e.eval_at(&all)?)
}

/// An expression in `x1..xn, xi1..xim`.
#[derive(Debug, Clone)]
pub struct PhaseFunction {
    expr: Expr,
    n: usize,
}

impl PhaseFunction {
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self> {
        let (expr, n) = parse_bundle_expr(text, n, m, "xi", "phase-space function")?;
        Ok(PhaseFunction { expr, n })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl BundleFunction for PhaseFunction {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T> {
        eval_bundle_expr(&self.expr, self.n, x, fiber)
    }
}

pub(crate) fn parse_bundle_expr(text: &str, n: usize, m: usize, fiber: &str, context: &str) -> Result<(Expr, usize)> {
    let vars: Arc<[String]> = bundle_names(n, m, fiber).into();
    let expr = Expr::parse_shared(text, vars).map_err(|source| Error::Parse {
        context: context.into(),
        source,
    })?;
    Ok((expr, n))
}

/// The fiberwise linear function `Φ_s(x, ξ) = ⟨ξ, s(x)⟩`.
pub struct LinearFunction<'a, S>(pub &'a S);

impl<S: Components> BundleFunction for LinearFunction<'_, S> {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T> {
        Ok(dual::dot(fiber, &self.0.eval(x)?))
    }
}

/// `f ∘ τ_*`: a base function viewed on the dual bundle.
pub struct BasePullback<'a, F>(pub &'a F);

impl<F: ScalarField> BundleFunction for BasePullback<'_, F> {
    fn eval<T: Scalar>(&self, x: &[T], _fiber: &[T]) -> Result<T> {
        self.0.eval(x)
    }
}

/// `Φ_s(p)`.
pub fn phi<S: Components>(s: &S, p: &PhasePoint) -> Result<f64> {
    LinearFunction(s).eval(&p.x, &p.xi)
}

/// Partial derivatives `(∂f/∂x, ∂f/∂fiber)` at a point.
pub fn partials<T: Scalar, F: BundleFunction>(f: &F, x: &[T], fiber: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let (n, m) = (x.len(), fiber.len());
    let lx = dual::lift(x);
    let lf = dual::lift(fiber);
    let mut dx = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = lx.clone();
        p[i] = Dual::new(x[i], T::one());
        dx.push(f.eval(&p, &lf)?.eps);
    }
    let mut df = Vec::with_capacity(m);
    for a in 0..m {
        let mut q = lf.clone();
        q[a] = Dual::new(fiber[a], T::one());
        df.push(f.eval(&lx, &q)?.eps);
    }
    Ok((dx, df))
}

/// `{F, G}(p) = ρ^i_α (∂_i F ∂^α G − ∂_i G ∂^α F) − C^γ_{αβ} ξ_γ ∂^α F ∂^β G`.
pub fn poisson_bracket<A, F, G>(alg: &A, f: &F, g: &G, p: &PhasePoint) -> Result<f64>
where
    A: Algebroid,
    F: BundleFunction,
    G: BundleFunction,
{
    p.check(alg)?;
    bracket_at(alg, f, g, &p.x, &p.xi)
}

fn bracket_at<T, A, F, G>(alg: &A, f: &F, g: &G, x: &[T], xi: &[T]) -> Result<T>
where
    T: Scalar,
    A: Algebroid,
    F: BundleFunction,
    G: BundleFunction,
{
    let (n, m) = (alg.base_dim(), alg.rank());
    let rho = alg.anchor(x)?;
    let c = alg.structure(x)?;
    let (fx, fxi) = partials(f, x, xi)?;
    let (gx, gxi) = partials(g, x, xi)?;
    let rf = linalg::mat_t_vec(&rho, n, m, &fx);
    let rg = linalg::mat_t_vec(&rho, n, m, &gx);
    let anchor_part = dual::dot(&rf, &gxi) - dual::dot(&rg, &fxi);
    let fiber_part = dual::dot(xi, &contract_structure(&c, m, &fxi, &gxi));
    Ok(anchor_part - fiber_part)
}

/// `{F, G}` as a phase-space function, so brackets nest with exact
/// derivatives.
pub struct BracketFunction<'a, A, F, G> {
    pub alg: &'a A,
    pub left: &'a F,
    pub right: &'a G,
}

impl<A: Algebroid, F: BundleFunction, G: BundleFunction> BundleFunction for BracketFunction<'_, A, F, G> {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T> {
        bracket_at(self.alg, self.left, self.right, x, fiber)
    }
}

/// `{F,{G,H}} + {G,{H,F}} + {H,{F,G}}` at `p`.
pub fn poisson_jacobiator<A, F, G, H>(alg: &A, f: &F, g: &G, h: &H, p: &PhasePoint) -> Result<f64>
where
    A: Algebroid,
    F: BundleFunction,
    G: BundleFunction,
    H: BundleFunction,
{
    let gh = BracketFunction { alg, left: g, right: h };
    let hf = BracketFunction { alg, left: h, right: f };
    let fg = BracketFunction { alg, left: f, right: g };
    Ok(poisson_bracket(alg, f, &gh, p)? + poisson_bracket(alg, g, &hf, p)? + poisson_bracket(alg, h, &fg, p)?)
}

/// Right-hand side `(ẋ, ξ̇)` of the flow of `h` at `p`.
pub fn hamiltonian_field<A, H>(alg: &A, h: &H, p: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)>
where
    A: Algebroid,
    H: BundleFunction,
{
    p.check(alg)?;
    let (n, m) = (alg.base_dim(), alg.rank());
    let rho = alg.anchor(&p.x)?;
    let c = alg.structure(&p.x)?;
    let (hx, hxi) = partials(h, &p.x, &p.xi)?;
    let xdot = apply_anchor(&rho, n, m, &hxi);
    let rh = linalg::mat_t_vec(&rho, n, m, &hx);
    let xidot = (0..m)
        .map(|a| {
            let mut acc = -rh[a];
            for b in 0..m {
                for g in 0..m {
                    acc -= c[g * m * m + a * m + b] * p.xi[g] * hxi[b];
                }
            }
            acc
        })
        .collect();
    Ok((xdot, xidot))
}

/// Fixed-step RK4 flow of `h` from `p0`. Columns `x1..xn, xi1..xim, h`;
/// the statistic `h_drift` is `max |h(t) − h(0)|`.
pub fn integrate_hamilton<A, H>(alg: &A, h: &H, p0: &PhasePoint, t_end: f64, step: f64) -> Result<Trajectory>
where
    A: Algebroid,
    H: BundleFunction,
{
    p0.check(alg)?;
    let n = alg.base_dim();
    let grid = time_grid(t_end, step)?;
    let mut y0 = p0.x.clone();
    y0.extend_from_slice(&p0.xi);
    let sampled = integrate_rk4(
        y0,
        &grid,
        |_, y| {
            let p = PhasePoint::new(y[..n].to_vec(), y[n..].to_vec());
            let (mut dx, dxi) = hamiltonian_field(alg, h, &p)?;
            dx.extend(dxi);
            Ok(dx)
        },
        |_| {},
    );
    let mut columns = bundle_names(n, alg.rank(), "xi");
    columns.push("h".into());
    let mut traj = sampled.into_trajectory(columns, step, |_, y| Ok(vec![h.eval(&y[..n], &y[n..])?]))?;
    let hcol = traj.column("h").expect("h column");
    let drift = hcol.iter().map(|v| (v - hcol[0]).abs()).fold(0.0, f64::max);
    traj.meta.stats.insert("h_drift".into(), drift);
    Ok(traj)
}
