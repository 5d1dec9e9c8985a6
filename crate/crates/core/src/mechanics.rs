//! Lagrangian mechanics on an anchored bundle: Legendre map, energy, the
//! Euler–Lagrange field, Riemannian sprays and metric-projected constrained
//! systems.
//!
//! The Euler–Lagrange field is computed from
//! `d/dt(∂L/∂u^α) = ρ^i_α ∂L/∂x^i − C^γ_{αβ} u^β ∂L/∂u^γ` with `ẋ = ρ(x)u`,
//! expanding the total derivative with exact second derivatives.

use crate::algebroid::{apply_anchor, base_names, bracket, Algebroid, AlgebroidSpec, Components, Section};
use crate::dual::{self, Dual, Scalar};
use crate::error::{Error, Result};
use crate::expr::{indexed_names, Expr};
use crate::linalg;
use crate::poisson::{eval_bundle_expr, parse_bundle_expr, partials, BundleFunction, PhasePoint};
use crate::trajectory::{integrate_rk4, time_grid, Trajectory};

/// Smallest-to-largest singular value ratio below which `∂²L/∂u∂u` is
/// treated as singular.
pub const REGULARITY_THRESHOLD: f64 = 1e-9;

/// Frames whose smallest singular value falls to this level are rejected.
pub const FRAME_RANK_THRESHOLD: f64 = 1e-9;

/// A point `(x, u)` of the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct VelPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl VelPoint {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Self {
        VelPoint { x, u }
    }

    fn check<A: Algebroid>(&self, alg: &A) -> Result<()> {
        if self.x.len() != alg.base_dim() || self.u.len() != alg.rank() {
            return Err(Error::Dimension(format!(
                "velocity point has shape ({}, {}), expected ({}, {})",
                self.x.len(),
                self.u.len(),
                alg.base_dim(),
                alg.rank()
            )));
        }
        Ok(())
    }
}

/// An expression in `x1..xn, u1..um`.
#[derive(Debug, Clone)]
pub struct Lagrangian {
    expr: Expr,
    n: usize,
}

impl Lagrangian {
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self> {
        let (expr, n) = parse_bundle_expr(text, n, m, "u", "Lagrangian")?;
        Ok(Lagrangian { expr, n })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl BundleFunction for Lagrangian {
    fn eval<T: Scalar>(&self, x: &[T], fiber: &[T]) -> Result<T> {
        eval_bundle_expr(&self.expr, self.n, x, fiber)
    }
}

/// `Λ_L(x, u) = (x, ∂L/∂u)`.
pub fn legendre<A: Algebroid, L: BundleFunction>(alg: &A, l: &L, vp: &VelPoint) -> Result<PhasePoint> {
    vp.check(alg)?;
    let (_, du) = partials(l, &vp.x, &vp.u)?;
    Ok(PhasePoint::new(vp.x.clone(), du))
}

/// `H_L = ⟨∂L/∂u, u⟩ − L`.
pub fn lagrangian_energy<A: Algebroid, L: BundleFunction>(alg: &A, l: &L, vp: &VelPoint) -> Result<f64> {
    vp.check(alg)?;
    let lu = l.eval(&vp.x, &vp.u)?;
    let (_, du) = partials(l, &vp.x, &vp.u)?;
    Ok(dual::dot(&du, &vp.u) - lu)
}

/// First and second derivatives of `L` at `(x, u)`.
struct Derivatives {
    dx: Vec<f64>,
    du: Vec<f64>,
    /// `∂²L/∂u^α∂u^β`, row-major `m × m`.
    duu: Vec<f64>,
    /// `∂²L/∂x^i∂u^α`, row-major `n × m`.
    dxu: Vec<f64>,
}

fn derivatives<L: BundleFunction>(l: &L, x: &[f64], u: &[f64]) -> Result<Derivatives> {
    let (n, m) = (x.len(), u.len());
    let (dx, du) = partials(l, x, u)?;
    let mut z: Vec<f64> = x.to_vec();
    z.extend_from_slice(u);
    let mixed = |p: usize, q: usize| -> Result<f64> {
        let pt: Vec<Dual<Dual<f64>>> = z
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let a = if k == p { 1.0 } else { 0.0 };
                let b = if k == q { 1.0 } else { 0.0 };
                Dual::new(Dual::new(v, b), Dual::new(a, 0.0))
            })
            .collect();
        Ok(l.eval(&pt[..n], &pt[n..])?.eps.eps)
    };
    let mut duu = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let v = mixed(n + a, n + b)?;
            duu[a * m + b] = v;
            duu[b * m + a] = v;
        }
    }
    let mut dxu = vec![0.0; n * m];
    for i in 0..n {
        for a in 0..m {
            dxu[i * m + a] = mixed(i, n + a)?;
        }
    }
    Ok(Derivatives { dx, du, duu, dxu })
}

/// The Euler–Lagrange field `(ẋ, u̇)` at `vp` for a regular Lagrangian.
pub fn el_field<A: Algebroid, L: BundleFunction>(alg: &A, l: &L, vp: &VelPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    vp.check(alg)?;
    let (n, m) = (alg.base_dim(), alg.rank());
    let rho = alg.anchor(&vp.x)?;
    let c = alg.structure(&vp.x)?;
    let d = derivatives(l, &vp.x, &vp.u)?;
    linalg::check_regular(&linalg::to_dmatrix(&d.duu, m, m), REGULARITY_THRESHOLD)?;

    let xdot = apply_anchor(&rho, n, m, &vp.u);
    let rdx = linalg::mat_t_vec(&rho, n, m, &d.dx);
    let mixed = linalg::mat_t_vec(&d.dxu, n, m, &xdot);
    // Σ_{β,γ} C^γ_{αβ} u^β ∂L/∂u^γ
    let cterm = |a: usize| {
        let mut acc = 0.0;
        for b in 0..m {
            for g in 0..m {
                acc += c[g * m * m + a * m + b] * vp.u[b] * d.du[g];
            }
        }
        acc
    };
    let rhs: Vec<f64> = (0..m).map(|a| rdx[a] - cterm(a) - mixed[a]).collect();
    let udot = linalg::solve(&d.duu, &rhs)?;
    Ok((xdot, udot))
}

/// `‖u̇(x, λu) − λ² u̇(x, u)‖`.
pub fn spray_defect<A: Algebroid, L: BundleFunction>(alg: &A, l: &L, vp: &VelPoint, lambda: f64) -> Result<f64> {
    let (_, a) = el_field(alg, l, vp)?;
    let scaled = VelPoint::new(vp.x.clone(), vp.u.iter().map(|v| lambda * v).collect());
    let (_, b) = el_field(alg, l, &scaled)?;
    let diff: Vec<f64> = b.iter().zip(&a).map(|(p, q)| p - lambda * lambda * q).collect();
    Ok(linalg::norm(&diff))
}

/// Fixed-step RK4 on [`el_field`]. Columns `x1..xn, u1..um, HL`; statistics
/// `HL_drift` and `admissibility_defect`.
pub fn integrate_el<A: Algebroid, L: BundleFunction>(
    alg: &A,
    l: &L,
    vp0: &VelPoint,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    vp0.check(alg)?;
    let (n, m) = (alg.base_dim(), alg.rank());
    let grid = time_grid(t_end, step)?;
    let mut y0 = vp0.x.clone();
    y0.extend_from_slice(&vp0.u);
    let mut admissibility: f64 = 0.0;
    let sampled = integrate_rk4(
        y0,
        &grid,
        |_, y| {
            let vp = VelPoint::new(y[..n].to_vec(), y[n..].to_vec());
            let (mut dx, du) = el_field(alg, l, &vp)?;
            let rho_u = apply_anchor(&alg.anchor(&vp.x)?, n, m, &vp.u);
            admissibility = admissibility.max(linalg::max_abs_diff(&dx, &rho_u));
            dx.extend(du);
            Ok(dx)
        },
        |_| {},
    );
    let mut columns = base_names(n);
    columns.extend(indexed_names("u", m));
    columns.push("HL".into());
    let mut traj = sampled.into_trajectory(columns, step, |_, y| {
        let vp = VelPoint::new(y[..n].to_vec(), y[n..].to_vec());
        Ok(vec![lagrangian_energy(alg, l, &vp)?])
    })?;
    let hl = traj.column("HL").expect("HL column");
    let drift = hl.iter().map(|v| (v - hl[0]).abs()).fold(0.0, f64::max);
    traj.meta.stats.insert("HL_drift".into(), drift);
    traj.meta.stats.insert("admissibility_defect".into(), admissibility);
    Ok(traj)
}

/// An algebroid with a fiber metric `g_{αβ}(x)` and a potential `V(x)`.
pub trait Riemannian: Algebroid {
    /// Row-major `m × m`.
    fn metric<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>>;
    fn potential<T: Scalar>(&self, x: &[T]) -> Result<T>;
}

impl Riemannian for AlgebroidSpec {
    fn metric<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let g = self
            .metric_exprs()
            .ok_or_else(|| Error::InvalidSpec("spec has no metric".into()))?;
        g.iter().map(|e| Ok(e.eval_at(x)?)).collect()
    }

    fn potential<T: Scalar>(&self, x: &[T]) -> Result<T> {
        match self.potential_expr() {
            Some(v) => Ok(v.eval_at(x)?),
            None => Ok(T::zero()),
        }
    }
}

impl<R: Riemannian> Riemannian for &R {
    fn metric<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        (**self).metric(x)
    }
    fn potential<T: Scalar>(&self, x: &[T]) -> Result<T> {
        (**self).potential(x)
    }
}

/// `L(x, u) = ½⟨g(x)u, u⟩ − V(x)`.
pub struct MechanicalLagrangian<'a, R>(pub &'a R);

impl<R: Riemannian> BundleFunction for MechanicalLagrangian<'_, R> {
    fn eval<T: Scalar>(&self, x: &[T], u: &[T]) -> Result<T> {
        let m = u.len();
        let g = self.0.metric(x)?;
        let gu = linalg::mat_vec(&g, m, m, u);
        Ok(T::constant(0.5) * dual::dot(&gu, u) - self.0.potential(x)?)
    }
}

/// `h(x, ξ) = ½⟨g(x)⁻¹ξ, ξ⟩ + V(x)`.
pub struct MechanicalHamiltonian<'a, R>(pub &'a R);

impl<R: Riemannian> BundleFunction for MechanicalHamiltonian<'_, R> {
    fn eval<T: Scalar>(&self, x: &[T], xi: &[T]) -> Result<T> {
        let g = self.0.metric(x)?;
        let w = linalg::solve(&g, xi)?;
        Ok(T::constant(0.5) * dual::dot(&w, xi) + self.0.potential(x)?)
    }
}

/// The spray of a Riemannian system, `(ρ(x)u, −2G)` with `G` solving
///
/// `g_{αδ} G^δ = ½[∂_i g_{αβ} ρ^i_γ − ½ ∂_i g_{βγ} ρ^i_α + C^δ_{αβ} g_{δγ}] u^β u^γ
///   + ½ ∂_i V ρ^i_α`.
pub fn riemannian_spray<R: Riemannian>(sys: &R, vp: &VelPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    vp.check(sys)?;
    let (n, m) = (sys.base_dim(), sys.rank());
    let x = &vp.x;
    let u = &vp.u;
    let rho = sys.anchor(x)?;
    let c = sys.structure(x)?;
    let g = sys.metric(x)?;
    let mut dg = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for i in 0..n {
        let p = dual::seed(x, &dual::unit(n, i));
        dg.push(sys.metric(&p)?.into_iter().map(|d| d.eps).collect::<Vec<f64>>());
        dv.push(sys.potential(&p)?.eps);
    }
    // ∂_ρ(γ) g_{αβ} = Σ_i ∂_i g_{αβ} ρ^i_γ
    let along = |k: usize, gamma: usize| -> f64 { (0..n).map(|i| dg[i][k] * rho[i * m + gamma]).sum() };
    let mut rhs = vec![0.0; m];
    for a in 0..m {
        let mut q = 0.0;
        for b in 0..m {
            for gm in 0..m {
                let ub = u[b] * u[gm];
                let mut t = along(a * m + b, gm) - 0.5 * along(b * m + gm, a);
                for d in 0..m {
                    t += c[d * m * m + a * m + b] * g[d * m + gm];
                }
                q += t * ub;
            }
        }
        let pot: f64 = (0..n).map(|i| dv[i] * rho[i * m + a]).sum();
        rhs[a] = 0.5 * q + 0.5 * pot;
    }
    let big_g = linalg::solve(&g, &rhs)?;
    let xdot = apply_anchor(&rho, n, m, u);
    Ok((xdot, big_g.into_iter().map(|v| -2.0 * v).collect()))
}

/// `k` sections spanning a subbundle of a rank-`m` bundle.
#[derive(Debug, Clone)]
pub struct FrameSpec {
    sections: Vec<Section>,
}

impl FrameSpec {
    pub fn new(sections: Vec<Section>) -> Result<Self> {
        let m = sections.first().map(|s| s.len()).unwrap_or(0);
        if sections.is_empty() || sections.iter().any(|s| s.len() != m) {
            return Err(Error::Dimension("frame needs k ≥ 1 sections of equal length".into()));
        }
        Ok(FrameSpec { sections })
    }

    /// Parse `k` rows of `m` component expressions in `x1..xn`.
    pub fn parse<R: AsRef<[S]>, S: AsRef<str>>(rows: &[R], n: usize) -> Result<Self> {
        let sections = rows
            .iter()
            .map(|r| Section::parse(r.as_ref(), n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sections)
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Ambient rank `m`.
    pub fn ambient_rank(&self) -> usize {
        self.sections[0].len()
    }

    /// The `m × k` matrix `F^α_a = f_a^α(x)`, row-major.
    pub fn matrix<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let (m, k) = (self.ambient_rank(), self.len());
        let mut f = vec![T::zero(); m * k];
        for (a, s) in self.sections.iter().enumerate() {
            for (al, v) in s.eval(x)?.into_iter().enumerate() {
                f[al * k + a] = v;
            }
        }
        Ok(f)
    }
}

/// A metric-orthogonally projected subsystem of a Riemannian algebroid.
/// Anchor `ρF`, metric `FᵀgF`, bracket `Π[i_F s1, i_F s2]`.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem<A> {
    ambient: A,
    frame: FrameSpec,
}

/// Build the constrained system of `frame` inside `ambient`.
pub fn constrain<A: Riemannian>(ambient: A, frame: FrameSpec) -> Result<ConstrainedSystem<A>> {
    if frame.ambient_rank() != ambient.rank() {
        return Err(Error::Dimension(format!(
            "frame sections have {} components, bundle rank is {}",
            frame.ambient_rank(),
            ambient.rank()
        )));
    }
    if frame.len() > ambient.rank() {
        return Err(Error::Dimension(format!(
            "{} frame sections exceed bundle rank {}",
            frame.len(),
            ambient.rank()
        )));
    }
    ambient.metric(&vec![0.0; ambient.base_dim()])?;
    Ok(ConstrainedSystem { ambient, frame })
}

/// `i_F s = F(x) s(x)` as an ambient section.
struct Included<'a, S> {
    frame: &'a FrameSpec,
    s: &'a S,
}

impl<S: Components> Components for Included<'_, S> {
    fn len(&self) -> usize {
        self.frame.ambient_rank()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let f = self.frame.matrix(x)?;
        Ok(linalg::mat_vec(
            &f,
            self.frame.ambient_rank(),
            self.frame.len(),
            &self.s.eval(x)?,
        ))
    }
}

impl<A: Riemannian> ConstrainedSystem<A> {
    pub fn ambient(&self) -> &A {
        &self.ambient
    }

    pub fn frame(&self) -> &FrameSpec {
        &self.frame
    }

    fn frame_checked<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let f = self.frame.matrix(x)?;
        let s = linalg::singular_values(&linalg::to_dmatrix(&f, self.frame.ambient_rank(), self.frame.len()));
        let smallest = s.last().copied().unwrap_or(0.0);
        if !(smallest > FRAME_RANK_THRESHOLD) {
            return Err(Error::RankDeficient {
                point: x.iter().map(|v| v.value()).collect(),
                smallest,
            });
        }
        Ok(f)
    }

    /// Coefficients of the `g`-orthogonal projection of an ambient vector
    /// `b` onto the frame: `(FᵀgF)⁻¹ Fᵀ g b`.
    fn project<T: Scalar>(&self, f: &[T], g: &[T], b: &[T]) -> Result<Vec<T>> {
        let (m, k) = (self.frame.ambient_rank(), self.len_k());
        let gb = linalg::mat_vec(g, m, m, b);
        let rhs = linalg::mat_t_vec(f, m, k, &gb);
        linalg::solve(&self.gram(f, g), &rhs)
    }

    fn gram<T: Scalar>(&self, f: &[T], g: &[T]) -> Vec<T> {
        let (m, k) = (self.frame.ambient_rank(), self.len_k());
        let mut out = vec![T::zero(); k * k];
        for a in 0..k {
            let col_a: Vec<T> = (0..m).map(|al| f[al * k + a]).collect();
            let ga = linalg::mat_vec(g, m, m, &col_a);
            for b in 0..k {
                out[a * k + b] = (0..m).fold(T::zero(), |acc, al| acc + ga[al] * f[al * k + b]);
            }
        }
        out
    }

    fn len_k(&self) -> usize {
        self.frame.len()
    }

    /// `Π[i_F s1, i_F s2]` computed literally from the ambient bracket, for
    /// sections given in frame coordinates.
    pub fn bracket_projected<S1: Components, S2: Components>(&self, s1: &S1, s2: &S2, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.frame_checked(x)?;
        let g = self.ambient.metric(x)?;
        let a = Included {
            frame: &self.frame,
            s: s1,
        };
        let b = Included {
            frame: &self.frame,
            s: s2,
        };
        let amb = bracket(&self.ambient, &a, &b, x)?;
        self.project(&f, &g, &amb)
    }

    /// The restriction `L ∘ i_F` of an ambient Lagrangian.
    pub fn restrict<'a, L: BundleFunction>(&'a self, l: &'a L) -> Restricted<'a, L> {
        Restricted { frame: &self.frame, l }
    }
}

/// `L′(x, v) = L(x, F(x)v)`.
pub struct Restricted<'a, L> {
    frame: &'a FrameSpec,
    l: &'a L,
}

impl<L: BundleFunction> BundleFunction for Restricted<'_, L> {
    fn eval<T: Scalar>(&self, x: &[T], v: &[T]) -> Result<T> {
        let f = self.frame.matrix(x)?;
        let u = linalg::mat_vec(&f, self.frame.ambient_rank(), self.frame.len(), v);
        self.l.eval(x, &u)
    }
}

impl<A: Riemannian> Algebroid for ConstrainedSystem<A> {
    fn base_dim(&self) -> usize {
        self.ambient.base_dim()
    }

    fn rank(&self) -> usize {
        self.frame.len()
    }

    fn anchor<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let (n, m, k) = (self.base_dim(), self.ambient.rank(), self.len_k());
        let f = self.frame_checked(x)?;
        let rho = self.ambient.anchor(x)?;
        let mut out = vec![T::zero(); n * k];
        for i in 0..n {
            for a in 0..k {
                out[i * k + a] = (0..m).fold(T::zero(), |acc, al| acc + rho[i * m + al] * f[al * k + a]);
            }
        }
        Ok(out)
    }

    fn structure<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let k = self.len_k();
        let f = self.frame_checked(x)?;
        let g = self.ambient.metric(x)?;
        let mut c = vec![T::zero(); k * k * k];
        let secs = self.frame.sections();
        for a in 0..k {
            for b in a + 1..k {
                let amb = bracket(&self.ambient, &secs[a], &secs[b], x)?;
                let coeff = self.project(&f, &g, &amb)?;
                for (gm, v) in coeff.into_iter().enumerate() {
                    c[gm * k * k + a * k + b] = v;
                    c[gm * k * k + b * k + a] = -v;
                }
            }
        }
        Ok(c)
    }
}

impl<A: Riemannian> Riemannian for ConstrainedSystem<A> {
    fn metric<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let f = self.frame_checked(x)?;
        let g = self.ambient.metric(x)?;
        Ok(self.gram(&f, &g))
    }

    fn potential<T: Scalar>(&self, x: &[T]) -> Result<T> {
        self.ambient.potential(x)
    }
}
