//! Seeded generators for randomized checks.
//!
//! Every draw comes from a ChaCha8 stream selected by `(seed, stream)`, so
//! independent checks never share state and a run is reproducible from a
//! single seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebroid::{base_names, AlgebroidSpec, Section, SpecBuilder};
use crate::error::{Error, Result};
use crate::snake::{pair_count, singularity_margin, GVector, SnakeConfig};

/// The generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point in `[lo, hi]^n`.
pub fn point<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

fn literal(c: f64) -> String {
    if c < 0.0 {
        format!("({c:?})")
    } else {
        format!("{c:?}")
    }
}

/// Monomials of total degree `≤ degree` in `vars`, as exponent lists.
fn monomials(nvars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for deg in 1..=degree {
        let mut stack: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
        while let Some((prefix, start)) = stack.pop() {
            if prefix.len() == deg {
                out.push(prefix);
                continue;
            }
            for v in start..nvars {
                let mut p = prefix.clone();
                p.push(v);
                stack.push((p, v));
            }
        }
    }
    out
}

/// A random polynomial of total degree `≤ degree` whose coefficients are
/// uniform in `[−scale, scale]` divided by the number of monomials, so that
/// it is bounded by `scale` on the unit box.
pub fn polynomial<R: Rng, S: AsRef<str>>(rng: &mut R, vars: &[S], degree: usize, scale: f64) -> String {
    let monos = monomials(vars.len(), degree);
    let c = scale / monos.len() as f64;
    let terms: Vec<String> = monos
        .iter()
        .map(|mono| {
            let coeff = literal(rng.random_range(-c..=c));
            mono.iter().fold(coeff, |acc, &v| format!("{acc}*{}", vars[v].as_ref()))
        })
        .collect();
    terms.join(" + ")
}

fn polynomial_builder<R: Rng>(rng: &mut R, n: usize, m: usize) -> SpecBuilder {
    let vars = base_names(n);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| (0..m).map(|_| polynomial(rng, &vars, 2, 2.0)).collect())
        .collect();
    let mut b = AlgebroidSpec::builder(n, m).anchor(&rows);
    for g in 0..m {
        for a in 0..m {
            for be in a + 1..m {
                b = b.structure(g, a, be, polynomial(rng, &vars, 2, 2.0));
            }
        }
    }
    b
}

/// A spec with polynomial anchor and structure functions of degree `≤ 2`.
pub fn polynomial_spec<R: Rng>(rng: &mut R, n: usize, m: usize) -> AlgebroidSpec {
    polynomial_builder(rng, n, m)
        .build()
        .expect("random polynomial spec is valid")
}

/// Shape of a random metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// The identity.
    Flat,
    /// `g_αα = a_α + b_α x_j²`.
    Diagonal,
    /// Diagonally dominant with polynomial entries.
    General,
}

/// A polynomial spec carrying a metric and a polynomial potential.
pub fn riemannian_spec<R: Rng>(rng: &mut R, n: usize, m: usize, kind: MetricKind, tangent: bool) -> AlgebroidSpec {
    let vars = base_names(n);
    let mut b = if tangent {
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| (0..n).map(|a| if i == a { "1".into() } else { "0".into() }).collect())
            .collect();
        AlgebroidSpec::builder(n, n).anchor(&rows)
    } else {
        polynomial_builder(rng, n, m)
    };
    let m = if tangent { n } else { m };
    let mut g = vec![vec!["0".to_string(); m]; m];
    for a in 0..m {
        g[a][a] = match kind {
            MetricKind::Flat => "1".into(),
            MetricKind::Diagonal | MetricKind::General => {
                let j = rng.random_range(0..n);
                format!(
                    "{:?} + {:?}*x{}^2",
                    rng.random_range(1.0..2.0),
                    rng.random_range(0.0..0.5),
                    j + 1
                )
            }
        };
    }
    if kind == MetricKind::General && m > 1 {
        let off = 0.4 / (m - 1) as f64;
        for a in 0..m {
            for be in a + 1..m {
                let p = polynomial(rng, &vars, 2, off);
                g[a][be] = p.clone();
                g[be][a] = p;
            }
        }
    }
    b = b.metric(&g).potential(polynomial(rng, &vars, 2, 1.0));
    b.build().expect("random Riemannian spec is valid")
}

/// A section with polynomial components of degree `≤ 2`.
pub fn section<R: Rng>(rng: &mut R, n: usize, m: usize) -> Section {
    let vars = base_names(n);
    let comps: Vec<String> = (0..m).map(|_| polynomial(rng, &vars, 2, 2.0)).collect();
    Section::parse(&comps, n).expect("random section parses")
}

/// A random smooth expression in `vars`, defined everywhere.
pub fn expression<R: Rng, S: AsRef<str>>(rng: &mut R, vars: &[S], depth: usize) -> String {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.7) {
            vars[rng.random_range(0..vars.len())].as_ref().to_string()
        } else {
            literal(rng.random_range(-2.0..2.0))
        };
    }
    let a = expression(rng, vars, depth - 1);
    match rng.random_range(0..13) {
        0 => format!("sin({a})"),
        1 => format!("cos({a})"),
        2 => format!("tanh({a})"),
        3 => format!("exp(0.3*({a}))"),
        4 => format!("sqrt(1 + ({a})^2)"),
        5 => format!("log(2 + sin({a}))"),
        6 => format!("-({a})"),
        7 => format!("({a})^2"),
        8 => format!("({a})^3"),
        9 => format!("({a}) + ({})", expression(rng, vars, depth - 1)),
        10 => format!("({a}) - ({})", expression(rng, vars, depth - 1)),
        11 => format!("({a})*({})", expression(rng, vars, depth - 1)),
        _ => format!("({a})/(2 + cos({}))", expression(rng, vars, depth - 1)),
    }
}

/// A uniformly random unit vector in `ℝ^d`.
pub fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A random snake with the given lengths whose singularity margin relative
/// to the total length exceeds `min_margin`.
pub fn snake_config<R: Rng>(rng: &mut R, d: usize, lengths: &[f64], min_margin: f64) -> Result<SnakeConfig> {
    if d < 2 || lengths.len() < 2 {
        return Err(Error::InvalidArgument("regular snakes need d ≥ 2 and N ≥ 2".into()));
    }
    let total: f64 = lengths.iter().sum();
    for _ in 0..10_000 {
        let u: Vec<Vec<f64>> = lengths.iter().map(|_| unit_vector(rng, d)).collect();
        let cfg = SnakeConfig::normalized(lengths.to_vec(), u)?;
        if singularity_margin(&cfg) / total > min_margin {
            return Ok(cfg);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no configuration with relative margin above {min_margin} found"
    )))
}

/// A random element of the truncated algebra with standard normal
/// coefficients.
pub fn gvector<R: Rng>(rng: &mut R, d: usize) -> GVector {
    GVector {
        sigma: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
        xi: (0..pair_count(d)).map(|_| rng.sample(StandardNormal)).collect(),
    }
}
