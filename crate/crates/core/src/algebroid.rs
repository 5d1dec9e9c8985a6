//! Anchored bundles over a coordinate patch with an almost Lie bracket.
//!
//! A structure is described by the anchor matrix `ρ^i_α(x)` and the
//! structure functions `C^γ_{αβ}(x)`. Everything here is generic over the
//! [`Algebroid`] trait so that derived structures (the constrained system in
//! [`crate::mechanics`]) reuse the same bracket and differential code.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{self, Scalar};
use crate::error::{Error, Result};
use crate::expr::{indexed_names, Expr};
use crate::linalg;

/// Numeric view of an anchored bundle with an almost Lie bracket.
pub trait Algebroid {
    /// Base dimension `n`.
    fn base_dim(&self) -> usize;
    /// Fiber rank `m`.
    fn rank(&self) -> usize;
    /// Anchor matrix at `x`, row-major `n × m`.
    fn anchor<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>>;
    /// Structure functions at `x` as a full table indexed
    /// `[γ·m² + α·m + β]`.
    fn structure<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>>;
}

impl<A: Algebroid> Algebroid for &A {
    fn base_dim(&self) -> usize {
        (**self).base_dim()
    }
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn anchor<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        (**self).anchor(x)
    }
    fn structure<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        (**self).structure(x)
    }
}

/// A field of `len()` components over the base (section, dual section, or
/// anything that can be evaluated like one).
#[allow(clippy::len_without_is_empty)]
pub trait Components {
    fn len(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>>;
}

/// A scalar function on the base.
pub trait ScalarField {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T>;
}

impl ScalarField for Expr {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        Ok(self.eval_at(x)?)
    }
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        (**self).eval(x)
    }
}

impl<C: Components + ?Sized> Components for &C {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        (**self).eval(x)
    }
}

/// Base variable names `x1..xn`.
pub fn base_names(n: usize) -> Vec<String> {
    indexed_names("x", n)
}

fn parse_in(text: &str, vars: &Arc<[String]>, context: impl Into<String>) -> Result<Expr> {
    Expr::parse_shared(text, vars.clone()).map_err(|source| Error::Parse {
        context: context.into(),
        source,
    })
}

fn eval_all<T: Scalar>(exprs: &[Expr], x: &[T]) -> Result<Vec<T>> {
    exprs.iter().map(|e| Ok(e.eval_at(x)?)).collect()
}

macro_rules! expr_components {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Local components of a ", $what, ", one expression per fiber index.")]
        #[derive(Debug, Clone)]
        pub struct $name {
            comps: Vec<Expr>,
        }

        impl $name {
            /// Parse components in the base variables `x1..xn`.
            pub fn parse<S: AsRef<str>>(components: &[S], n: usize) -> Result<Self> {
                let vars: Arc<[String]> = base_names(n).into();
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(a, s)| parse_in(s.as_ref(), &vars, format!("{} component {}", $what, a + 1)))
                    .collect::<Result<_>>()?;
                Ok($name { comps })
            }

            pub fn constant(values: &[f64], n: usize) -> Self {
                let vars = base_names(n);
                $name {
                    comps: values.iter().map(|&v| Expr::constant(v, &vars)).collect(),
                }
            }

            /// The constant basis element with a 1 in slot `index`.
            pub fn basis(m: usize, index: usize, n: usize) -> Self {
                let mut v = vec![0.0; m];
                v[index] = 1.0;
                Self::constant(&v, n)
            }

            pub fn components(&self) -> &[Expr] {
                &self.comps
            }

            pub fn eval_f64(&self, x: &[f64]) -> Result<Vec<f64>> {
                eval_all(&self.comps, x)
            }
        }

        impl Components for $name {
            fn len(&self) -> usize {
                self.comps.len()
            }
            fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
                eval_all(&self.comps, x)
            }
        }
    };
}

expr_components!(Section, "section");
expr_components!(DualSection, "dual section");

#[derive(Debug, Clone)]
enum StructureTable {
    /// Entries `(γ, α, β)` with `α < β`; the rest follows by antisymmetry.
    Upper(BTreeMap<(usize, usize, usize), Expr>),
    /// Unconstrained `(γ, α, β)` table, only reachable through
    /// [`AlgebroidSpec::with_raw_structure`].
    Raw(BTreeMap<(usize, usize, usize), Expr>),
}

/// Almost Lie algebroid given by expression tables, plus optional metric
/// and potential.
#[derive(Debug, Clone)]
pub struct AlgebroidSpec {
    n: usize,
    m: usize,
    rho: Vec<Expr>,
    structure: StructureTable,
    metric: Option<Vec<Expr>>,
    potential: Option<Expr>,
}

/// Collects the expression tables of an [`AlgebroidSpec`]; indices are
/// 0-based.
#[derive(Debug, Clone)]
pub struct SpecBuilder {
    n: usize,
    m: usize,
    rho: Option<Vec<Vec<String>>>,
    structure: Vec<(usize, usize, usize, String)>,
    metric: Option<Vec<Vec<String>>>,
    potential: Option<String>,
}

/// Number of random points used to sample metric positivity.
pub const METRIC_SAMPLES: usize = 50;
const METRIC_SAMPLE_SEED: u64 = 0x6d65_7472_6963;

impl SpecBuilder {
    pub fn anchor<R: AsRef<[S]>, S: AsRef<str>>(mut self, rows: &[R]) -> Self {
        self.rho = Some(
            rows.iter()
                .map(|r| r.as_ref().iter().map(|s| s.as_ref().to_string()).collect())
                .collect(),
        );
        self
    }

    /// Add `C^γ_{αβ}`. Entries with `α > β` are stored as `−C^γ_{βα}`.
    pub fn structure(mut self, gamma: usize, alpha: usize, beta: usize, expr: impl Into<String>) -> Self {
        self.structure.push((gamma, alpha, beta, expr.into()));
        self
    }

    pub fn metric<R: AsRef<[S]>, S: AsRef<str>>(mut self, rows: &[R]) -> Self {
        self.metric = Some(
            rows.iter()
                .map(|r| r.as_ref().iter().map(|s| s.as_ref().to_string()).collect())
                .collect(),
        );
        self
    }

    pub fn potential(mut self, expr: impl Into<String>) -> Self {
        self.potential = Some(expr.into());
        self
    }

    /// Parse and validate.
    pub fn build(self) -> Result<AlgebroidSpec> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("n and m must be positive (n={n}, m={m})")));
        }
        let vars: Arc<[String]> = base_names(n).into();
        let rows = self
            .rho
            .ok_or_else(|| Error::InvalidSpec("missing anchor table".into()))?;
        if rows.len() != n || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(format!(
                "anchor must be {n}×{m}, got {}×{}",
                rows.len(),
                rows.first().map_or(0, Vec::len)
            )));
        }
        let mut rho = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            for (a, s) in row.iter().enumerate() {
                rho.push(parse_in(s, &vars, format!("rho[{}][{}]", i + 1, a + 1))?);
            }
        }

        let mut table = BTreeMap::new();
        for (g, a, b, s) in &self.structure {
            let (g, a, b) = (*g, *a, *b);
            if g >= m || a >= m || b >= m {
                return Err(Error::Dimension(format!(
                    "structure index ({}, {}, {}) out of range 1..={m}",
                    g + 1,
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::InvalidSpec(format!(
                    "structure function C^{}_{{{},{}}} has equal lower indices",
                    g + 1,
                    a + 1,
                    b + 1
                )));
            }
            let context = format!("C^{}_{{{},{}}}", g + 1, a + 1, b + 1);
            let (key, text) = if a < b {
                ((g, a, b), s.clone())
            } else {
                ((g, b, a), format!("-({s})"))
            };
            let e = parse_in(&text, &vars, context.clone())?;
            if table.insert(key, e).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate entry for {context}")));
            }
        }

        let metric = match self.metric {
            None => None,
            Some(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(Error::Dimension(format!("metric must be {m}×{m}")));
                }
                let mut g = Vec::with_capacity(m * m);
                for (a, row) in rows.iter().enumerate() {
                    for (b, s) in row.iter().enumerate() {
                        g.push(parse_in(s, &vars, format!("g[{}][{}]", a + 1, b + 1))?);
                    }
                }
                for a in 0..m {
                    for b in a + 1..m {
                        if g[a * m + b].to_string() != g[b * m + a].to_string() {
                            return Err(Error::InvalidSpec(format!(
                                "metric is not symmetric: g[{}][{}] = `{}` but g[{}][{}] = `{}`",
                                a + 1,
                                b + 1,
                                g[a * m + b],
                                b + 1,
                                a + 1,
                                g[b * m + a]
                            )));
                        }
                        g[b * m + a] = g[a * m + b].clone();
                    }
                }
                Some(g)
            }
        };
        let potential = self.potential.map(|s| parse_in(&s, &vars, "potential V")).transpose()?;

        let spec = AlgebroidSpec {
            n,
            m,
            rho,
            structure: StructureTable::Upper(table),
            metric,
            potential,
        };
        spec.check_metric_samples()?;
        Ok(spec)
    }
}

impl AlgebroidSpec {
    pub fn builder(n: usize, m: usize) -> SpecBuilder {
        SpecBuilder {
            n,
            m,
            rho: None,
            structure: Vec::new(),
            metric: None,
            potential: None,
        }
    }

    /// `TM` over `ℝⁿ`: identity anchor, zero structure functions.
    pub fn tangent_bundle(n: usize) -> AlgebroidSpec {
        let rows: Vec<Vec<&str>> = (0..n)
            .map(|i| (0..n).map(|a| if i == a { "1" } else { "0" }).collect())
            .collect();
        Self::builder(n, n)
            .anchor(&rows)
            .build()
            .expect("tangent bundle spec is valid")
    }

    /// `so(3)` as a bundle over a point-like base of dimension `n`: zero
    /// anchor and `C^γ_{αβ} = ε_{αβγ}`.
    pub fn so3(n: usize) -> AlgebroidSpec {
        let rows = vec![vec!["0"; 3]; n];
        Self::builder(n, 3)
            .anchor(&rows)
            .structure(2, 0, 1, "1")
            .structure(0, 1, 2, "1")
            .structure(1, 2, 0, "1")
            .build()
            .expect("so(3) spec is valid")
    }

    /// Action algebroid of `so(3)` on `ℝ³`: `ρ(e_α)(x) = x × e_α`,
    /// `C^γ_{αβ} = ε_{αβγ}`.
    pub fn so3_action() -> AlgebroidSpec {
        Self::builder(3, 3)
            .anchor(&[["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]])
            .structure(2, 0, 1, "1")
            .structure(0, 1, 2, "1")
            .structure(1, 2, 0, "1")
            .build()
            .expect("so(3) action spec is valid")
    }

    /// Fault-injection hook: replaces the structure functions by an
    /// arbitrary `(γ, α, β)` table with no antisymmetry imposed.
    #[doc(hidden)]
    pub fn with_raw_structure(mut self, entries: &[(usize, usize, usize, &str)]) -> Result<Self> {
        let vars: Arc<[String]> = base_names(self.n).into();
        let mut table = BTreeMap::new();
        for &(g, a, b, s) in entries {
            table.insert((g, a, b), parse_in(s, &vars, "raw structure entry")?);
        }
        self.structure = StructureTable::Raw(table);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn anchor_exprs(&self) -> &[Expr] {
        &self.rho
    }

    pub fn metric_exprs(&self) -> Option<&[Expr]> {
        self.metric.as_deref()
    }

    pub fn potential_expr(&self) -> Option<&Expr> {
        self.potential.as_ref()
    }

    pub fn has_metric(&self) -> bool {
        self.metric.is_some()
    }

    /// Stored structure entries `(γ, α, β, expr)` (0-based; `α < β` unless
    /// the raw hook was used).
    pub fn structure_entries(&self) -> Vec<(usize, usize, usize, &Expr)> {
        let t = match &self.structure {
            StructureTable::Upper(t) | StructureTable::Raw(t) => t,
        };
        t.iter().map(|(&(g, a, b), e)| (g, a, b, e)).collect()
    }

    fn check_metric_samples(&self) -> Result<()> {
        let Some(g) = &self.metric else {
            return Ok(());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(METRIC_SAMPLE_SEED);
        for _ in 0..METRIC_SAMPLES {
            let x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let vals = eval_all(g, &x)?;
            let lambda = linalg::min_eigenvalue(&linalg::to_dmatrix(&vals, self.m, self.m));
            if !(lambda > 0.0) {
                return Err(Error::MetricNotPositive {
                    point: x,
                    eigenvalue: lambda,
                });
            }
        }
        Ok(())
    }
}

impl Algebroid for AlgebroidSpec {
    fn base_dim(&self) -> usize {
        self.n
    }

    fn rank(&self) -> usize {
        self.m
    }

    fn anchor<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        eval_all(&self.rho, x)
    }

    fn structure<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let m = self.m;
        let mut c = vec![T::zero(); m * m * m];
        match &self.structure {
            StructureTable::Upper(t) => {
                for (&(g, a, b), e) in t {
                    let v = e.eval_at(x)?;
                    c[g * m * m + a * m + b] = v;
                    c[g * m * m + b * m + a] = -v;
                }
            }
            StructureTable::Raw(t) => {
                for (&(g, a, b), e) in t {
                    c[g * m * m + a * m + b] = e.eval_at(x)?;
                }
            }
        }
        Ok(c)
    }
}

/// `Σ_α ρ^i_α u^α` for an `n × m` anchor matrix.
pub fn apply_anchor<T: Scalar>(rho: &[T], n: usize, m: usize, u: &[T]) -> Vec<T> {
    linalg::mat_vec(rho, n, m, u)
}

/// `Σ_{α,β} C^γ_{αβ} a^α b^β` for each `γ`.
///
/// Terms are grouped in `(α, β)`/`(β, α)` pairs so that an antisymmetric
/// table gives a result that is exactly antisymmetric in `(a, b)`.
pub fn contract_structure<T: Scalar>(c: &[T], m: usize, a: &[T], b: &[T]) -> Vec<T> {
    (0..m)
        .map(|g| {
            let t = &c[g * m * m..(g + 1) * m * m];
            let mut acc = T::zero();
            for al in 0..m {
                acc = acc + t[al * m + al] * (a[al] * b[al]);
                for be in al + 1..m {
                    acc = acc + (t[al * m + be] * (a[al] * b[be]) + t[be * m + al] * (a[be] * b[al]));
                }
            }
            acc
        })
        .collect()
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Directional derivative of a field along `dir` at `x`.
pub fn derivative_along<T: Scalar, C: Components>(s: &C, x: &[T], dir: &[T]) -> Result<Vec<T>> {
    Ok(s.eval(&dual::seed(x, dir))?.into_iter().map(|d| d.eps).collect())
}

/// Directional derivative of a scalar field along `dir` at `x`.
pub fn scalar_derivative_along<T: Scalar, F: ScalarField>(f: &F, x: &[T], dir: &[T]) -> Result<T> {
    Ok(f.eval(&dual::seed(x, dir))?.eps)
}

/// `ρ(u)` at `x`.
pub fn anchor_apply<A: Algebroid>(alg: &A, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("base point", x.len(), alg.base_dim())?;
    check_len("fiber vector", u.len(), alg.rank())?;
    let rho = alg.anchor(x)?;
    Ok(apply_anchor(&rho, alg.base_dim(), alg.rank(), u))
}

/// The almost Lie bracket `[s1, s2]` at `x` in local components:
/// `C(s1, s2) + Ds2·ρ(s1) − Ds1·ρ(s2)`.
pub fn bracket<T, A, S1, S2>(alg: &A, s1: &S1, s2: &S2, x: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    A: Algebroid,
    S1: Components,
    S2: Components,
{
    let (n, m) = (alg.base_dim(), alg.rank());
    check_len("base point", x.len(), n)?;
    check_len("first section", s1.len(), m)?;
    check_len("second section", s2.len(), m)?;
    let rho = alg.anchor(x)?;
    let c = alg.structure(x)?;
    let a = s1.eval(x)?;
    let b = s2.eval(x)?;
    let va = apply_anchor(&rho, n, m, &a);
    let vb = apply_anchor(&rho, n, m, &b);
    let db_along_a = derivative_along(s2, x, &va)?;
    let da_along_b = derivative_along(s1, x, &vb)?;
    let cab = contract_structure(&c, m, &a, &b);
    Ok((0..m).map(|g| cab[g] + db_along_a[g] - da_along_b[g]).collect())
}

/// The bracket of two fields, itself usable as a field (so brackets nest
/// with exact derivatives).
pub struct BracketField<'a, A, S1, S2> {
    pub alg: &'a A,
    pub left: &'a S1,
    pub right: &'a S2,
}

impl<A: Algebroid, S1: Components, S2: Components> Components for BracketField<'_, A, S1, S2> {
    fn len(&self) -> usize {
        self.alg.rank()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        bracket(self.alg, self.left, self.right, x)
    }
}

/// `[s1,[s2,s3]] + [s2,[s3,s1]] + [s3,[s1,s2]]` at `x`. The inner brackets
/// are differentiated exactly through second-order duals.
pub fn jacobiator<A, S1, S2, S3>(alg: &A, s1: &S1, s2: &S2, s3: &S3, x: &[f64]) -> Result<Vec<f64>>
where
    A: Algebroid,
    S1: Components,
    S2: Components,
    S3: Components,
{
    let b23 = BracketField {
        alg,
        left: s2,
        right: s3,
    };
    let b31 = BracketField {
        alg,
        left: s3,
        right: s1,
    };
    let b12 = BracketField {
        alg,
        left: s1,
        right: s2,
    };
    let t1 = bracket(alg, s1, &b23, x)?;
    let t2 = bracket(alg, s2, &b31, x)?;
    let t3 = bracket(alg, s3, &b12, x)?;
    Ok((0..alg.rank()).map(|g| t1[g] + t2[g] + t3[g]).collect())
}

/// `(d_ρ f)_α = Σ_i ρ^i_α ∂f/∂x^i`.
pub fn d_rho_0<T: Scalar, A: Algebroid, F: ScalarField>(alg: &A, f: &F, x: &[T]) -> Result<Vec<T>> {
    let (n, m) = (alg.base_dim(), alg.rank());
    check_len("base point", x.len(), n)?;
    let rho = alg.anchor(x)?;
    let grad: Vec<T> = (0..n)
        .map(|i| scalar_derivative_along(f, x, &dual::unit(n, i)))
        .collect::<Result<_>>()?;
    Ok(linalg::mat_t_vec(&rho, n, m, &grad))
}

/// `L^ρ_s f = ⟨d_ρ f, s⟩`.
pub fn lie_derivative_0<T: Scalar, A: Algebroid, S: Components, F: ScalarField>(
    alg: &A,
    s: &S,
    f: &F,
    x: &[T],
) -> Result<T> {
    check_len("section", s.len(), alg.rank())?;
    let df = d_rho_0(alg, f, x)?;
    Ok(dual::dot(&df, &s.eval(x)?))
}

/// `x ↦ ⟨ω(x), s(x)⟩`.
struct Pairing<'a, W, S> {
    omega: &'a W,
    s: &'a S,
}

impl<W: Components, S: Components> ScalarField for Pairing<'_, W, S> {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        Ok(dual::dot(&self.omega.eval(x)?, &self.s.eval(x)?))
    }
}

/// Almost exterior differential of a 1-form, evaluated on `(s1, s2)`:
/// `L_{s1}(ω(s2)) − L_{s2}(ω(s1)) − ω([s1, s2])`.
pub fn d_rho_1<T, A, W, S1, S2>(alg: &A, omega: &W, s1: &S1, s2: &S2, x: &[T]) -> Result<T>
where
    T: Scalar,
    A: Algebroid,
    W: Components,
    S1: Components,
    S2: Components,
{
    check_len("dual section", omega.len(), alg.rank())?;
    let w_s2 = Pairing { omega, s: s2 };
    let w_s1 = Pairing { omega, s: s1 };
    let l1 = lie_derivative_0(alg, s1, &w_s2, x)?;
    let l2 = lie_derivative_0(alg, s2, &w_s1, x)?;
    let br = bracket(alg, s1, s2, x)?;
    Ok(l1 - l2 - dual::dot(&omega.eval(x)?, &br))
}

/// Same value as [`d_rho_1`], computed from the tensorial local form
/// `⟨Dω(ρ(s1)), s2⟩ − ⟨Dω(ρ(s2)), s1⟩ − ⟨ω, C(s1, s2)⟩`, which never
/// differentiates the sections.
pub fn d_rho_1_tensorial<A, W, S1, S2>(alg: &A, omega: &W, s1: &S1, s2: &S2, x: &[f64]) -> Result<f64>
where
    A: Algebroid,
    W: Components,
    S1: Components,
    S2: Components,
{
    let (n, m) = (alg.base_dim(), alg.rank());
    let rho = alg.anchor(x)?;
    let c = alg.structure(x)?;
    let a = s1.eval(x)?;
    let b = s2.eval(x)?;
    let w = omega.eval(x)?;
    let dw_a = derivative_along(omega, x, &apply_anchor(&rho, n, m, &a))?;
    let dw_b = derivative_along(omega, x, &apply_anchor(&rho, n, m, &b))?;
    Ok(dual::dot(&dw_a, &b) - dual::dot(&dw_b, &a) - dual::dot(&w, &contract_structure(&c, m, &a, &b)))
}

/// `d_ρ f` as a dual-section field.
pub struct ExactForm<'a, A, F> {
    pub alg: &'a A,
    pub f: &'a F,
}

impl<A: Algebroid, F: ScalarField> Components for ExactForm<'_, A, F> {
    fn len(&self) -> usize {
        self.alg.rank()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        d_rho_0(self.alg, self.f, x)
    }
}

/// `ρ(s)` as a vector field on the base.
pub struct AnchoredField<'a, A, S> {
    pub alg: &'a A,
    pub s: &'a S,
}

impl<A: Algebroid, S: Components> Components for AnchoredField<'_, A, S> {
    fn len(&self) -> usize {
        self.alg.base_dim()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let rho = self.alg.anchor(x)?;
        Ok(apply_anchor(
            &rho,
            self.alg.base_dim(),
            self.alg.rank(),
            &self.s.eval(x)?,
        ))
    }
}

/// `ρ([s1, s2]) − [ρ(s1), ρ(s2)]`, zero on Lie algebroids.
pub fn anchor_defect<A, S1, S2>(alg: &A, s1: &S1, s2: &S2, x: &[f64]) -> Result<Vec<f64>>
where
    A: Algebroid,
    S1: Components,
    S2: Components,
{
    let (n, m) = (alg.base_dim(), alg.rank());
    let (a, b) = (AnchoredField { alg, s: s1 }, AnchoredField { alg, s: s2 });
    let (av, bv) = (a.eval(x)?, b.eval(x)?);
    let lie: Vec<f64> = derivative_along(&b, x, &av)?
        .iter()
        .zip(derivative_along(&a, x, &bv)?)
        .map(|(p, q)| p - q)
        .collect();
    let image = apply_anchor(&alg.anchor(x)?, n, m, &bracket(alg, s1, s2, x)?);
    Ok(image.iter().zip(&lie).map(|(p, q)| p - q).collect())
}

/// `f · s` as a section field.
pub struct ScaledField<'a, F, S> {
    pub f: &'a F,
    pub s: &'a S,
}

impl<F: ScalarField, S: Components> Components for ScaledField<'_, F, S> {
    fn len(&self) -> usize {
        self.s.len()
    }
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let f = self.f.eval(x)?;
        Ok(self.s.eval(x)?.into_iter().map(|v| f * v).collect())
    }
}

/// Degree-0 and degree-1 parts of an almost exterior differential, as
/// black boxes.
pub trait AlmostDifferential {
    fn base_dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn degree0(&self, f: &Expr, x: &[f64]) -> Result<Vec<f64>>;
    fn degree1(&self, omega: &DualSection, s1: &Section, s2: &Section, x: &[f64]) -> Result<f64>;
}

/// The differential `d_ρ` of an algebroid.
pub struct DifferentialOf<'a, A>(pub &'a A);

impl<A: Algebroid> AlmostDifferential for DifferentialOf<'_, A> {
    fn base_dim(&self) -> usize {
        self.0.base_dim()
    }
    fn rank(&self) -> usize {
        self.0.rank()
    }
    fn degree0(&self, f: &Expr, x: &[f64]) -> Result<Vec<f64>> {
        d_rho_0(self.0, f, x)
    }
    fn degree1(&self, omega: &DualSection, s1: &Section, s2: &Section, x: &[f64]) -> Result<f64> {
        d_rho_1(self.0, omega, s1, s2, x)
    }
}

/// Anchor and structure functions recovered from a differential at one
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Row-major `n × m`.
    pub rho: Vec<f64>,
    /// Full table `[γ·m² + α·m + β]`.
    pub structure: Vec<f64>,
}

/// Recover `ρ^i_α(x) = ⟨δ(x^i), e_α⟩` and `C^γ_{αβ}(x) = −δ(e*_γ)(e_α, e_β)`
/// from the degree-0 and degree-1 parts of a differential.
pub fn reconstruct_from_differential<D: AlmostDifferential>(delta: &D, x: &[f64]) -> Result<Reconstruction> {
    let (n, m) = (delta.base_dim(), delta.rank());
    check_len("base point", x.len(), n)?;
    let names = base_names(n);
    let mut rho = vec![0.0; n * m];
    for (i, name) in names.iter().enumerate() {
        let coord = Expr::parse(name, &names).expect("coordinate function parses");
        let row = delta.degree0(&coord, x)?;
        check_len("degree-0 output", row.len(), m)?;
        rho[i * m..(i + 1) * m].copy_from_slice(&row);
    }
    let basis: Vec<Section> = (0..m).map(|a| Section::basis(m, a, n)).collect();
    let cobasis: Vec<DualSection> = (0..m).map(|a| DualSection::basis(m, a, n)).collect();
    let mut structure = vec![0.0; m * m * m];
    for (g, eg) in cobasis.iter().enumerate() {
        for a in 0..m {
            for b in 0..m {
                structure[g * m * m + a * m + b] = -delta.degree1(eg, &basis[a], &basis[b], x)?;
            }
        }
    }
    Ok(Reconstruction { rho, structure })
}

/// `[s1,s2]_A − [s1,s2]_B` for two brackets sharing an anchor. The result is
/// tensorial: `Σ (C_A − C_B)^γ_{αβ} s1^α s2^β`.
pub fn bracket_difference<S1: Components, S2: Components>(
    spec_a: &AlgebroidSpec,
    spec_b: &AlgebroidSpec,
    s1: &S1,
    s2: &S2,
    x: &[f64],
) -> Result<Vec<f64>> {
    if spec_a.n != spec_b.n || spec_a.m != spec_b.m {
        return Err(Error::Dimension(format!(
            "specs differ in shape: ({}, {}) vs ({}, {})",
            spec_a.n, spec_a.m, spec_b.n, spec_b.m
        )));
    }
    for (k, (ra, rb)) in spec_a.rho.iter().zip(&spec_b.rho).enumerate() {
        let (ta, tb) = (ra.to_string(), rb.to_string());
        if ta != tb {
            return Err(Error::AnchorMismatch(format!(
                "rho[{}][{}]: `{ta}` vs `{tb}`",
                k / spec_a.m + 1,
                k % spec_a.m + 1
            )));
        }
    }
    let a = bracket(spec_a, s1, s2, x)?;
    let b = bracket(spec_b, s1, s2, x)?;
    Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
}

/// Lift a plain point to a given scalar type.
pub fn point<T: Scalar>(x: &[f64]) -> Vec<T> {
    dual::constants(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_defect_vanishes_on_action_algebroid() {
        let spec = AlgebroidSpec::so3_action();
        let s1 = Section::parse(&["x1*x2", "1", "x3^2"], 3).unwrap();
        let s2 = Section::parse(&["x3", "x1 - x2", "2"], 3).unwrap();
        let d = anchor_defect(&spec, &s1, &s2, &[0.3, -0.7, 0.5]).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-14), "{d:?}");
        let j = jacobiator(&spec, &s1, &s2, &Section::basis(3, 0, 3), &[0.3, -0.7, 0.5]).unwrap();
        assert!(j.iter().all(|v| v.abs() < 1e-13), "{j:?}");
    }

    fn so3_constant(v: [f64; 3]) -> Section {
        Section::constant(&v, 1)
    }

    #[test]
    fn tangent_spec_validates_and_anchor_is_identity() {
        let t = AlgebroidSpec::tangent_bundle(2);
        assert_eq!(anchor_apply(&t, &[0.3, -2.0], &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_anchor_maps_to_zero() {
        let s = AlgebroidSpec::so3(2);
        assert_eq!(anchor_apply(&s, &[0.1, 0.2], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let err = AlgebroidSpec::builder(2, 2)
            .anchor(&[["x3", "0"], ["0", "1"]])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn wrong_anchor_shape_is_rejected() {
        let err = AlgebroidSpec::builder(1, 2)
            .anchor(&[["x1", "0"], ["0", "1"]])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn degenerate_dimensions_are_rejected() {
        let rows: Vec<Vec<&str>> = vec![];
        assert!(matches!(
            AlgebroidSpec::builder(0, 1).anchor(&rows).build(),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let err = AlgebroidSpec::builder(2, 2)
            .anchor(&[["1", "0"], ["0", "1"]])
            .metric(&[["1", "0"], ["0", "-1"]])
            .build()
            .unwrap_err();
        match err {
            Error::MetricNotPositive { eigenvalue, point } => {
                assert_eq!(eigenvalue, -1.0);
                assert_eq!(point.len(), 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn asymmetric_metric_is_rejected() {
        let err = AlgebroidSpec::builder(1, 2)
            .anchor(&[["1", "0"]])
            .metric(&[["2", "x1"], ["0", "2"]])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn structure_with_equal_lower_indices_is_rejected() {
        let err = AlgebroidSpec::builder(1, 2)
            .anchor(&[["1", "0"]])
            .structure(0, 1, 1, "1")
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn reversed_structure_entry_is_negated() {
        let spec = AlgebroidSpec::builder(1, 2)
            .anchor(&[["0", "0"]])
            .structure(0, 1, 0, "x1")
            .build()
            .unwrap();
        let c = spec.structure(&[2.0]).unwrap();
        assert_eq!(c[1], -2.0); // C^0_{01}
        assert_eq!(c[2], 2.0); // C^0_{10}
    }

    #[test]
    fn so3_bracket_of_basis() {
        let s = AlgebroidSpec::so3(1);
        let b = bracket(
            &s,
            &so3_constant([1.0, 0.0, 0.0]),
            &so3_constant([0.0, 1.0, 0.0]),
            &[0.0],
        )
        .unwrap();
        assert_eq!(b, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn one_dimensional_vector_fields() {
        // [∂, x∂] = ∂
        let t = AlgebroidSpec::tangent_bundle(1);
        let s1 = Section::parse(&["1"], 1).unwrap();
        let s2 = Section::parse(&["x1"], 1).unwrap();
        assert_eq!(bracket(&t, &s1, &s2, &[0.7]).unwrap(), vec![1.0]);
    }

    #[test]
    fn bracket_of_section_with_itself_vanishes() {
        let spec = AlgebroidSpec::builder(2, 2)
            .anchor(&[["x2", "1"], ["x1^2", "0"]])
            .structure(1, 0, 1, "sin(x1)")
            .build()
            .unwrap();
        let s = Section::parse(&["x1*x2", "cos(x2)"], 2).unwrap();
        let b = bracket(&spec, &s, &s, &[0.3, -0.4]).unwrap();
        assert!(b.iter().all(|v| *v == 0.0), "{b:?}");
    }

    #[test]
    fn jacobiator_vanishes_for_lie_algebroids() {
        let s = AlgebroidSpec::so3(1);
        let j = jacobiator(
            &s,
            &so3_constant([1.0, 2.0, 0.5]),
            &so3_constant([0.0, 1.0, -1.0]),
            &so3_constant([3.0, 0.0, 1.0]),
            &[0.0],
        )
        .unwrap();
        assert!(j.iter().all(|v| v.abs() < 1e-14));

        let t = AlgebroidSpec::tangent_bundle(2);
        let s1 = Section::parse(&["x1^2", "x2"], 2).unwrap();
        let s2 = Section::parse(&["x1*x2", "1 + x1"], 2).unwrap();
        let s3 = Section::parse(&["x2^3 - x1", "x1*x2^2"], 2).unwrap();
        let j = jacobiator(&t, &s1, &s2, &s3, &[0.4, -0.9]).unwrap();
        assert!(j.iter().all(|v| v.abs() < 1e-10), "{j:?}");
    }

    #[test]
    fn d_rho_0_examples() {
        let t = AlgebroidSpec::tangent_bundle(2);
        let f = Expr::parse("x1^2", &["x1", "x2"]).unwrap();
        assert_eq!(d_rho_0(&t, &f, &[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);

        let zero = AlgebroidSpec::so3(2);
        assert_eq!(d_rho_0(&zero, &f, &[1.0, 0.5]).unwrap(), vec![0.0; 3]);

        let swap = AlgebroidSpec::builder(2, 2)
            .anchor(&[["0", "1"], ["1", "0"]])
            .build()
            .unwrap();
        let f = Expr::parse("x1", &["x1", "x2"]).unwrap();
        assert_eq!(d_rho_0(&swap, &f, &[0.2, 0.9]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn lie_derivative_examples() {
        let t = AlgebroidSpec::tangent_bundle(2);
        let f = Expr::parse("x1", &["x1", "x2"]).unwrap();
        let e1 = Section::basis(2, 0, 2);
        assert_eq!(lie_derivative_0(&t, &e1, &f, &[0.5, 0.5]).unwrap(), 1.0);
        let c = Expr::parse("3", &["x1", "x2"]).unwrap();
        let s = Section::parse(&["x1", "x2^2"], 2).unwrap();
        assert_eq!(lie_derivative_0(&t, &s, &c, &[0.5, 0.5]).unwrap(), 0.0);
        let zero = AlgebroidSpec::so3(2);
        let s3 = Section::parse(&["x1", "1", "x2"], 2).unwrap();
        assert_eq!(lie_derivative_0(&zero, &s3, &f, &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn d_rho_1_of_x2_dx1() {
        let t = AlgebroidSpec::tangent_bundle(2);
        let w = DualSection::parse(&["x2", "0"], 2).unwrap();
        let e1 = Section::basis(2, 0, 2);
        let e2 = Section::basis(2, 1, 2);
        assert_eq!(d_rho_1(&t, &w, &e1, &e2, &[0.3, 0.8]).unwrap(), -1.0);
        assert_eq!(d_rho_1_tensorial(&t, &w, &e1, &e2, &[0.3, 0.8]).unwrap(), -1.0);
    }

    #[test]
    fn d_rho_1_so3_constant_form() {
        let s = AlgebroidSpec::so3(1);
        let w = DualSection::constant(&[0.5, -1.0, 2.0], 1);
        let a = so3_constant([1.0, 0.0, 0.0]);
        let b = so3_constant([0.0, 1.0, 0.0]);
        // only −ω(C(a,b)) = −ω(e3) survives
        assert_eq!(d_rho_1(&s, &w, &a, &b, &[0.0]).unwrap(), -2.0);
    }

    #[test]
    fn reconstruct_tangent_and_zero() {
        let t = AlgebroidSpec::tangent_bundle(2);
        let r = reconstruct_from_differential(&DifferentialOf(&t), &[0.1, 0.2]).unwrap();
        assert_eq!(r.rho, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(r.structure.iter().all(|v| *v == 0.0));

        struct Zero;
        impl AlmostDifferential for Zero {
            fn base_dim(&self) -> usize {
                2
            }
            fn rank(&self) -> usize {
                3
            }
            fn degree0(&self, _: &Expr, _: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![0.0; 3])
            }
            fn degree1(&self, _: &DualSection, _: &Section, _: &Section, _: &[f64]) -> Result<f64> {
                Ok(0.0)
            }
        }
        let r = reconstruct_from_differential(&Zero, &[0.0, 0.0]).unwrap();
        assert!(r.rho.iter().chain(&r.structure).all(|v| *v == 0.0));
    }

    #[test]
    fn bracket_difference_examples() {
        let a = AlgebroidSpec::so3(1);
        let e1 = so3_constant([1.0, 0.0, 0.0]);
        let e2 = so3_constant([0.0, 1.0, 0.0]);
        assert_eq!(bracket_difference(&a, &a, &e1, &e2, &[0.0]).unwrap(), vec![0.0; 3]);

        let b = AlgebroidSpec::builder(1, 3)
            .anchor(&[["0", "0", "0"]])
            .structure(0, 1, 2, "1")
            .structure(1, 2, 0, "1")
            .build()
            .unwrap();
        assert_eq!(
            bracket_difference(&a, &b, &e1, &e2, &[0.0]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );

        let t = AlgebroidSpec::builder(1, 3).anchor(&[["1", "0", "0"]]).build().unwrap();
        assert!(matches!(
            bracket_difference(&a, &t, &e1, &e2, &[0.0]),
            Err(Error::AnchorMismatch(_))
        ));
    }

    #[test]
    fn raw_structure_hook_breaks_antisymmetry() {
        let s = AlgebroidSpec::so3(1)
            .with_raw_structure(&[(2, 0, 1, "1"), (2, 1, 0, "1")])
            .unwrap();
        let e1 = so3_constant([1.0, 0.0, 0.0]);
        let e2 = so3_constant([0.0, 1.0, 0.0]);
        let ab = bracket(&s, &e1, &e2, &[0.0]).unwrap();
        let ba = bracket(&s, &e2, &e1, &[0.0]).unwrap();
        assert_eq!(ab[2] + ba[2], 2.0);
    }
}
