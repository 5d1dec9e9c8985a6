//! The discrete snake: `N` unit segments `u_k ∈ S^{d−1}` with lengths `ℓ_k`.
//!
//! Tangent vectors are `N × d` arrays with each row orthogonal to its
//! segment, and the kinetic metric is `⟨v, w⟩ = Σ ℓ_k ⟨v_k, w_k⟩`. The head
//! of the snake sits at the end map `ℰ(u) = Σ ℓ_k u_k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::expr::{indexed_names, Expr};
use crate::linalg;
use crate::trajectory::{integrate_rk4, time_grid, Trajectory};

/// Allowed deviation of a segment from unit length.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// `λ_min(A) / Σℓ` at or below this counts as singular.
pub const SINGULAR_MARGIN: f64 = 1e-6;
/// Relative residual of `Aλ = ċ` above which the head velocity is not
/// reachable.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Initial head mismatch tolerated by [`charm`].
pub const HEAD_MISMATCH: f64 = 1e-8;
/// Step of the central differences used for brackets of the `E_i`.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct SnakeConfig {
    d: usize,
    lengths: Vec<f64>,
    u: Vec<Vec<f64>>,
}

impl SnakeConfig {
    pub fn new(lengths: Vec<f64>, u: Vec<Vec<f64>>) -> Result<Self> {
        if u.is_empty() || u.len() != lengths.len() {
            return Err(Error::Dimension(format!(
                "{} segments but {} lengths",
                u.len(),
                lengths.len()
            )));
        }
        let d = u[0].len();
        if d == 0 || u.iter().any(|s| s.len() != d) {
            return Err(Error::Dimension("segments must share a positive dimension".into()));
        }
        if let Some(l) = lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!("segment length {l} is not positive")));
        }
        for (k, s) in u.iter().enumerate() {
            let norm = linalg::norm(s);
            if !((norm - 1.0).abs() < UNIT_TOLERANCE) {
                return Err(Error::InvalidArgument(format!(
                    "segment {} has norm {norm}, expected 1",
                    k + 1
                )));
            }
        }
        Ok(SnakeConfig { d, lengths, u })
    }

    /// Like [`SnakeConfig::new`] after scaling every segment to unit length.
    pub fn normalized(lengths: Vec<f64>, mut u: Vec<Vec<f64>>) -> Result<Self> {
        for s in &mut u {
            let norm = linalg::norm(s);
            if norm == 0.0 {
                return Err(Error::InvalidArgument("zero segment direction".into()));
            }
            s.iter_mut().for_each(|v| *v /= norm);
        }
        Self::new(lengths, u)
    }

    fn from_state(d: usize, lengths: &[f64], state: &[f64]) -> Self {
        SnakeConfig {
            d,
            lengths: lengths.to_vec(),
            u: state.chunks(d).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn segment_count(&self) -> usize {
        self.u.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn segments(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Segments flattened row by row.
    pub fn state(&self) -> Vec<f64> {
        self.u.concat()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Remove from each row of `w` its component along the matching segment.
fn tangential(state: &[f64], d: usize, w: &mut [f64]) {
    for (u, v) in state.chunks(d).zip(w.chunks_mut(d)) {
        let c = dot(u, v);
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
    }
}

fn flat_to_rows(v: &[f64], d: usize) -> Vec<Vec<f64>> {
    v.chunks(d).map(<[f64]>::to_vec).collect()
}

/// `ℰ(u) = Σ ℓ_k u_k`.
pub fn end_map(cfg: &SnakeConfig) -> Vec<f64> {
    let mut e = vec![0.0; cfg.d];
    for (l, u) in cfg.lengths.iter().zip(&cfg.u) {
        e.iter_mut().zip(u).for_each(|(a, b)| *a += l * b);
    }
    e
}

/// `(E_i)_k = e_i − ⟨e_i, u_k⟩ u_k` on the flattened state, defined off the
/// spheres too.
fn e_flat(state: &[f64], d: usize, i: usize) -> Vec<f64> {
    let mut w = vec![0.0; state.len()];
    for (u, v) in state.chunks(d).zip(w.chunks_mut(d)) {
        v[i] = 1.0;
        let c = u[i];
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
    }
    w
}

/// The field `E_i` at `cfg` (0-based `i`).
pub fn e_field(cfg: &SnakeConfig, i: usize) -> Result<Vec<Vec<f64>>> {
    check_axis(cfg.d, i)?;
    Ok(flat_to_rows(&e_flat(&cfg.state(), cfg.d, i), cfg.d))
}

fn check_axis(d: usize, i: usize) -> Result<()> {
    if i >= d {
        return Err(Error::InvalidArgument(format!("axis {} out of range 1..={d}", i + 1)));
    }
    Ok(())
}

/// `A(u) = Σ ℓ_k (I − u_k u_kᵀ)`, row-major `d × d`.
pub fn control_operator(cfg: &SnakeConfig) -> Vec<f64> {
    let d = cfg.d;
    let mut a = vec![0.0; d * d];
    for (l, u) in cfg.lengths.iter().zip(&cfg.u) {
        for r in 0..d {
            for c in 0..d {
                let id = if r == c { 1.0 } else { 0.0 };
                a[r * d + c] += l * (id - u[r] * u[c]);
            }
        }
    }
    a
}

/// `λ_min(A(u))`.
pub fn singularity_margin(cfg: &SnakeConfig) -> f64 {
    linalg::min_eigenvalue(&DMatrix::from_row_slice(cfg.d, cfg.d, &control_operator(cfg)))
}

/// Minimal-norm tangent velocity with `Tℰ(v) = ċ`: `v_k = (I − u_k u_kᵀ) λ`
/// where `A(u) λ = ċ`. Returns `(v, λ)`.
pub fn horizontal_velocity(cfg: &SnakeConfig, cdot: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = cfg.d;
    if cdot.len() != d {
        return Err(Error::Dimension(format!(
            "head velocity has {} components, expected {d}",
            cdot.len()
        )));
    }
    let a = DMatrix::from_row_slice(d, d, &control_operator(cfg));
    let b = DVector::from_column_slice(cdot);
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let lambda = if largest > 0.0 {
        svd.solve(&b, 1e-12 * largest)
            .map_err(|e| Error::InvalidArgument(e.into()))?
    } else {
        DVector::zeros(d)
    };
    let residual = (&a * &lambda - &b).norm();
    if residual > RESIDUAL_TOLERANCE * b.norm() {
        return Err(Error::SingularConfiguration {
            margin: linalg::min_eigenvalue(&a),
            at_time: None,
        });
    }
    let lambda: Vec<f64> = lambda.iter().copied().collect();
    let v = cfg
        .u
        .iter()
        .map(|u| {
            let c = dot(u, &lambda);
            lambda.iter().zip(u).map(|(l, uk)| l - c * uk).collect()
        })
        .collect();
    Ok((v, lambda))
}

/// `L²`-orthogonal projection of an arbitrary `N × d` array onto the
/// tangent vectors with `Tℰ(w) = 0`.
pub fn project_to_kernel(cfg: &SnakeConfig, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cfg.d;
    if z.len() != cfg.u.len() || z.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("perturbation shape does not match the snake".into()));
    }
    let state = cfg.state();
    let mut w = z.concat();
    tangential(&state, d, &mut w);
    let mut push = vec![0.0; d];
    for (l, r) in cfg.lengths.iter().zip(w.chunks(d)) {
        push.iter_mut().zip(r).for_each(|(a, b)| *a += l * b);
    }
    let (h, _) = horizontal_velocity(cfg, &push)?;
    for (r, hk) in w.chunks_mut(d).zip(&h) {
        r.iter_mut().zip(hk).for_each(|(a, b)| *a -= b);
    }
    Ok(flat_to_rows(&w, d))
}

/// Kinetic energy density `½ Σ ℓ_k |v_k|²`.
pub fn kinetic(lengths: &[f64], v: &[Vec<f64>]) -> f64 {
    0.5 * lengths.iter().zip(v).map(|(l, r)| l * dot(r, r)).sum::<f64>()
}

/// A prescribed head curve `c(t)`.
#[derive(Debug, Clone)]
pub enum HeadCurve {
    /// Component expressions in the variable `t`.
    Exprs(Vec<Expr>),
    /// Piecewise-linear interpolation of `(t, c(t))` samples.
    Samples { times: Vec<f64>, points: Vec<Vec<f64>> },
}

impl HeadCurve {
    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self> {
        let vars: Arc<[String]> = vec!["t".to_string()].into();
        let exprs = components
            .iter()
            .enumerate()
            .map(|(j, s)| {
                Expr::parse_shared(s.as_ref(), vars.clone()).map_err(|source| Error::Parse {
                    context: format!("head component {}", j + 1),
                    source,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if exprs.is_empty() {
            return Err(Error::Dimension("head curve has no components".into()));
        }
        Ok(HeadCurve::Exprs(exprs))
    }

    /// Rows `[t, c1, .., cd]` with strictly increasing `t`.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("head samples need at least two rows".into()));
        }
        let width = rows[0].len();
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("head sample rows must be [t, c1, .., cd]".into()));
        }
        let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("head sample times must increase".into()));
        }
        Ok(HeadCurve::Samples {
            times,
            points: rows.iter().map(|r| r[1..].to_vec()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            HeadCurve::Exprs(e) => e.len(),
            HeadCurve::Samples { points, .. } => points[0].len(),
        }
    }

    fn segment(times: &[f64], t: f64) -> usize {
        let k = times.partition_point(|&s| s <= t);
        k.clamp(1, times.len() - 1) - 1
    }

    pub fn position(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            HeadCurve::Exprs(e) => e.iter().map(|c| Ok(c.eval_at(&[t])?)).collect(),
            HeadCurve::Samples { times, points } => {
                let k = Self::segment(times, t);
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                Ok(points[k]
                    .iter()
                    .zip(&points[k + 1])
                    .map(|(a, b)| a + s * (b - a))
                    .collect())
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            HeadCurve::Exprs(e) => e.iter().map(|c| Ok(c.eval_at(&[Dual::new(t, 1.0)])?.eps)).collect(),
            HeadCurve::Samples { times, points } => {
                let k = Self::segment(times, t);
                let dt = times[k + 1] - times[k];
                Ok(points[k]
                    .iter()
                    .zip(&points[k + 1])
                    .map(|(a, b)| (b - a) / dt)
                    .collect())
            }
        }
    }
}

/// Output of [`charm`]: the CSV-shaped trajectory plus the horizontal
/// velocity at every sample.
#[derive(Debug, Clone)]
pub struct SnakePath {
    pub trajectory: Trajectory,
    /// Velocity `N × d` at each sample.
    pub velocities: Vec<Vec<Vec<f64>>>,
    pub lengths: Vec<f64>,
}

/// Trapezoidal `½∫ Σ ℓ_k |u̇_k|² dt` over the stored velocities.
pub fn curve_energy(path: &SnakePath) -> Result<f64> {
    let times = &path.trajectory.times;
    if times.len() < 2 || path.velocities.len() != times.len() {
        return Err(Error::InvalidArgument(
            "energy needs at least two samples with velocities".into(),
        ));
    }
    let dens: Vec<f64> = path.velocities.iter().map(|v| kinetic(&path.lengths, v)).collect();
    Ok(times
        .windows(2)
        .zip(dens.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1]))
        .sum())
}

/// Column names `u_k_j, e1..ed, track_err, energy`.
pub fn charm_columns(d: usize, segments: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(segments * d + d + 2);
    for k in 1..=segments {
        for j in 1..=d {
            cols.push(format!("u_{k}_{j}"));
        }
    }
    cols.extend(indexed_names("e", d));
    cols.push("track_err".into());
    cols.push("energy".into());
    cols
}

/// Drive the head along `head` with minimal-norm horizontal velocities:
/// RK4 on `u̇ = v(u, ċ(t))`, renormalizing every segment after each step.
/// Statistics: `track_err_max`, `norm_drift_max`, `energy`.
pub fn charm(cfg0: &SnakeConfig, head: &HeadCurve, t_end: f64, step: f64) -> Result<SnakePath> {
    let d = cfg0.d;
    if head.dim() != d {
        return Err(Error::Dimension(format!(
            "head curve has {} components, snake lives in ℝ^{d}",
            head.dim()
        )));
    }
    let total = cfg0.total_length();
    let margin = singularity_margin(cfg0);
    if !(margin / total > SINGULAR_MARGIN) {
        return Err(Error::SingularConfiguration { margin, at_time: None });
    }
    let grid = time_grid(t_end, step)?;
    let mismatch = linalg::norm(
        &end_map(cfg0)
            .iter()
            .zip(head.position(grid[0])?)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    if mismatch > HEAD_MISMATCH {
        return Err(Error::InvalidArgument(format!(
            "initial end point is {mismatch:e} away from the head curve"
        )));
    }

    let lengths = cfg0.lengths.clone();
    let velocity_at = |t: f64, y: &[f64]| -> Result<Vec<Vec<f64>>> {
        let cfg = SnakeConfig::from_state(d, &lengths, y);
        let margin = singularity_margin(&cfg);
        if !(margin / total > SINGULAR_MARGIN) {
            return Err(Error::SingularConfiguration {
                margin,
                at_time: Some(t),
            });
        }
        let (v, _) = horizontal_velocity(&cfg, &head.velocity(t)?).map_err(|e| match e {
            Error::SingularConfiguration { margin, .. } => Error::SingularConfiguration {
                margin,
                at_time: Some(t),
            },
            other => other,
        })?;
        Ok(v)
    };
    let sampled = integrate_rk4(
        cfg0.state(),
        &grid,
        |t, y| Ok(velocity_at(t, y)?.concat()),
        |y| {
            for s in y.chunks_mut(d) {
                let n = linalg::norm(s);
                s.iter_mut().for_each(|v| *v /= n);
            }
        },
    );

    let mut velocities = Vec::with_capacity(grid.len());
    let mut energy = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut track_max: f64 = 0.0;
    let mut drift_max: f64 = 0.0;
    let traj = sampled.into_trajectory(charm_columns(d, lengths.len()), step, |t, y| {
        let v = velocity_at(t, y)?;
        let dens = kinetic(&lengths, &v);
        if let Some((t0, e0)) = prev {
            energy += 0.5 * (t - t0) * (e0 + dens);
        }
        prev = Some((t, dens));
        velocities.push(v);
        let cfg = SnakeConfig::from_state(d, &lengths, y);
        let e = end_map(&cfg);
        let c = head.position(t)?;
        let track = linalg::norm(&e.iter().zip(&c).map(|(a, b)| a - b).collect::<Vec<_>>());
        track_max = track_max.max(track);
        for s in y.chunks(d) {
            drift_max = drift_max.max((linalg::norm(s) - 1.0).abs());
        }
        let mut extra = e;
        extra.push(track);
        extra.push(energy);
        Ok(extra)
    })?;
    let mut trajectory = traj;
    trajectory.meta.stats.insert("track_err_max".into(), track_max);
    trajectory.meta.stats.insert("norm_drift_max".into(), drift_max);
    trajectory.meta.stats.insert("energy".into(), energy);
    Ok(SnakePath {
        trajectory,
        velocities,
        lengths,
    })
}

type Field<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// Central-difference `[X, Y] = DY·X − DX·Y`, projected tangentially.
fn fd_bracket(x: &Field<'_>, y: &Field<'_>, state: &[f64], d: usize, h: f64) -> Vec<f64> {
    let shift = |dir: &[f64], s: f64| -> Vec<f64> { state.iter().zip(dir).map(|(a, b)| a + s * b).collect() };
    let xv = x(state);
    let yv = y(state);
    let (yp, ym) = (y(&shift(&xv, h)), y(&shift(&xv, -h)));
    let (xp, xm) = (x(&shift(&yv, h)), x(&shift(&yv, -h)));
    let mut out: Vec<f64> = (0..state.len())
        .map(|k| ((yp[k] - ym[k]) - (xp[k] - xm[k])) / (2.0 * h))
        .collect();
    tangential(state, d, &mut out);
    out
}

/// `⟨e_j, u_k⟩ E_i − ⟨e_i, u_k⟩ E_j` segment by segment.
fn claimed_bracket(state: &[f64], d: usize, i: usize, j: usize) -> Vec<f64> {
    let ei = e_flat(state, d, i);
    let ej = e_flat(state, d, j);
    let mut out = vec![0.0; state.len()];
    for (k, u) in state.chunks(d).enumerate() {
        for c in 0..d {
            out[k * d + c] = u[j] * ei[k * d + c] - u[i] * ej[k * d + c];
        }
    }
    out
}

fn fd_e_bracket(state: &[f64], d: usize, i: usize, j: usize) -> Vec<f64> {
    let x = move |s: &[f64]| e_flat(s, d, i);
    let y = move |s: &[f64]| e_flat(s, d, j);
    fd_bracket(&x, &y, state, d, FD_STEP)
}

fn max_dev(a: &[f64], b: &[f64], sign: f64) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - sign * q).abs()).fold(0.0, f64::max)
}

/// Global sign `s` for which the finite-difference bracket `[E_i, E_j]`
/// matches `s (⟨e_j,u⟩E_i − ⟨e_i,u⟩E_j)` at `cfg`, judged over all pairs.
pub fn calibrate_bracket_sign(cfg: &SnakeConfig) -> f64 {
    let (d, state) = (cfg.d, cfg.state());
    let (mut plus, mut minus) = (0.0_f64, 0.0_f64);
    for i in 0..d {
        for j in i + 1..d {
            let fd = fd_e_bracket(&state, d, i, j);
            let cl = claimed_bracket(&state, d, i, j);
            plus = plus.max(max_dev(&fd, &cl, 1.0));
            minus = minus.max(max_dev(&fd, &cl, -1.0));
        }
    }
    if minus < plus {
        -1.0
    } else {
        1.0
    }
}

/// Max-norm deviation of the finite-difference `[E_i, E_j]` from
/// `sign · (⟨e_j,u⟩E_i − ⟨e_i,u⟩E_j)`.
pub fn snake_bracket_defect(cfg: &SnakeConfig, i: usize, j: usize, sign: f64) -> Result<f64> {
    check_axis(cfg.d, i)?;
    check_axis(cfg.d, j)?;
    let state = cfg.state();
    let fd = fd_e_bracket(&state, cfg.d, i, j);
    Ok(max_dev(&fd, &claimed_bracket(&state, cfg.d, i, j), sign))
}

/// Max-norm deviation of the nested finite-difference `[E_i, [E_j, E_k]]`
/// from `sign² (δ_ij E_k − δ_ik E_j)`.
pub fn triple_relation_defect(cfg: &SnakeConfig, i: usize, j: usize, k: usize, sign: f64) -> Result<f64> {
    let d = cfg.d;
    for a in [i, j, k] {
        check_axis(d, a)?;
    }
    let state = cfg.state();
    let x = move |s: &[f64]| e_flat(s, d, i);
    let inner = move |s: &[f64]| fd_e_bracket(s, d, j, k);
    let fd = fd_bracket(&x, &inner, &state, d, FD_STEP);
    let mut claim = vec![0.0; state.len()];
    if i == j {
        claim.iter_mut().zip(e_flat(&state, d, k)).for_each(|(a, b)| *a += b);
    }
    if i == k {
        claim.iter_mut().zip(e_flat(&state, d, j)).for_each(|(a, b)| *a -= b);
    }
    Ok(max_dev(&fd, &claim, sign * sign))
}

/// Index of the pair `(i, j)`, `i < j`, in the ordering
/// `(0,1), (0,2), .., (0,d−1), (1,2), ..`.
pub fn pair_index(i: usize, j: usize, d: usize) -> usize {
    debug_assert!(i < j && j < d);
    i * (2 * d - i - 1) / 2 + (j - i - 1)
}

pub fn pair_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// An element `Σ σ_i ε_i + Σ_{i<j} ξ_{ij} ω_{ij}` of the truncated algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GVector {
    pub sigma: Vec<f64>,
    pub xi: Vec<f64>,
}

impl GVector {
    pub fn zero(d: usize) -> Self {
        GVector {
            sigma: vec![0.0; d],
            xi: vec![0.0; pair_count(d)],
        }
    }

    pub fn new(sigma: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != pair_count(sigma.len()) {
            return Err(Error::Dimension(format!(
                "d = {} needs {} pair coefficients, got {}",
                sigma.len(),
                pair_count(sigma.len()),
                xi.len()
            )));
        }
        Ok(GVector { sigma, xi })
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn epsilon(d: usize, i: usize) -> Self {
        let mut g = Self::zero(d);
        g.sigma[i] = 1.0;
        g
    }

    pub fn omega(d: usize, i: usize, j: usize) -> Self {
        let mut g = Self::zero(d);
        g.add_omega(i, j, 1.0);
        g
    }

    /// `ξ(i, j)` with `ω_ji = −ω_ij` and `ω_ii = 0`.
    pub fn omega_coeff(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.xi[pair_index(i, j, d)],
            std::cmp::Ordering::Greater => -self.xi[pair_index(j, i, d)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    fn add_omega(&mut self, i: usize, j: usize, v: f64) {
        let d = self.dim();
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.xi[pair_index(i, j, d)] += v,
            std::cmp::Ordering::Greater => self.xi[pair_index(j, i, d)] -= v,
            std::cmp::Ordering::Equal => {}
        }
    }
}

/// Bilinear extension of `[ε_i, ε_j] = ω_ij`,
/// `[ε_i, ω_jk] = δ_ij ε_k − δ_ik ε_j`,
/// `[ω_ij, ω_kl] = δ_il ω_jk + δ_jk ω_il − δ_ik ω_jl − δ_jl ω_ik`.
pub fn g_bracket(a: &GVector, b: &GVector) -> Result<GVector> {
    let d = a.dim();
    if b.dim() != d || a.xi.len() != pair_count(d) || b.xi.len() != pair_count(d) {
        return Err(Error::Dimension("g_bracket operands differ in shape".into()));
    }
    let mut out = GVector::zero(d);
    for i in 0..d {
        for j in i + 1..d {
            out.add_omega(i, j, a.sigma[i] * b.sigma[j] - a.sigma[j] * b.sigma[i]);
        }
    }
    // [ε_i, ω_jk] contributes at j = i (ε_k) and k = i (−ε_j); summing over
    // all ordered (j, k) with the antisymmetric coefficient covers both.
    for i in 0..d {
        for k in 0..d {
            let ab = a.sigma[i] * b.omega_coeff(i, k) - b.sigma[i] * a.omega_coeff(i, k);
            out.sigma[k] += ab;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let aij = a.omega_coeff(i, j);
            if aij == 0.0 {
                continue;
            }
            for k in 0..d {
                for l in 0..d {
                    let c = 0.25 * aij * b.omega_coeff(k, l);
                    if c == 0.0 {
                        continue;
                    }
                    if i == l {
                        out.add_omega(j, k, c);
                    }
                    if j == k {
                        out.add_omega(i, l, c);
                    }
                    if i == k {
                        out.add_omega(j, l, -c);
                    }
                    if j == l {
                        out.add_omega(i, k, -c);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_same(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// Closed-form regular extremal: `σ(t) = σ0 + σ̇0 t`,
/// `ξ_jl(t) = ξ0_jl + ξ̇0_jl t + ½ σ̇0_j σ̇0_l t²`.
pub fn extremal_regular(
    sigma0: &[f64],
    sigmadot0: &[f64],
    xi0: &[f64],
    xidot0: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = sigma0.len();
    check_same("sigma0/sigmadot0", d, sigmadot0.len())?;
    check_same("xi0 vs pair count", pair_count(d), xi0.len())?;
    check_same("xidot0 vs pair count", pair_count(d), xidot0.len())?;
    let sigma = sigma0.iter().zip(sigmadot0).map(|(s, v)| s + v * t).collect();
    let mut xi = vec![0.0; pair_count(d)];
    for j in 0..d {
        for l in j + 1..d {
            let p = pair_index(j, l, d);
            xi[p] = xi0[p] + xidot0[p] * t + 0.5 * sigmadot0[j] * sigmadot0[l] * t * t;
        }
    }
    Ok((sigma, xi))
}

/// Closed-form singular extremal: `σ(t) = σ0 + σ̇0 t`.
pub fn extremal_singular(sigma0: &[f64], sigmadot0: &[f64], t: f64) -> Result<Vec<f64>> {
    check_same("sigma0/sigmadot0", sigma0.len(), sigmadot0.len())?;
    Ok(sigma0.iter().zip(sigmadot0).map(|(s, v)| s + v * t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn cfg(u: &[&[f64]]) -> SnakeConfig {
        SnakeConfig::new(vec![1.0; u.len()], u.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn end_map_examples() {
        assert_eq!(
            end_map(&cfg(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]])),
            vec![1.0, 1.0, 0.0]
        );
        let c = SnakeConfig::new(vec![0.5, 2.0], vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(end_map(&c), vec![2.5, 0.0]);
        assert_eq!(end_map(&cfg(&[&[1.0, 0.0], &[-1.0, 0.0]])), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_non_unit_segments() {
        assert!(SnakeConfig::new(vec![1.0], vec![vec![1.0, 1e-4]]).is_err());
        assert!(SnakeConfig::new(vec![0.0], vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn e_field_examples() {
        let c = cfg(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(e_field(&c, 0).unwrap(), vec![vec![0.0; 3]; 2]);
        let c = cfg(&[&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(e_field(&c, 0).unwrap(), vec![vec![1.0, 0.0, 0.0]; 2]);
        let c = cfg(&[&[S, S, 0.0]]);
        let e = e_field(&c, 0).unwrap();
        assert!(linalg::max_abs_diff(&e[0], &[1.0 - S * S, -S * S, 0.0]) < 1e-15);
    }

    #[test]
    fn control_operator_examples() {
        assert_eq!(
            control_operator(&cfg(&[&[1.0, 0.0, 0.0]])),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
        let c = cfg(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(control_operator(&c), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        assert!((singularity_margin(&c) - 1.0).abs() < 1e-15);
        let colinear = cfg(&[&[0.0, 1.0, 0.0], &[0.0, -1.0, 0.0]]);
        assert!(singularity_margin(&colinear).abs() < 1e-15);
    }

    #[test]
    fn horizontal_velocity_examples() {
        let c = cfg(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let (v, lambda) = horizontal_velocity(&c, &[0.0, 0.0, 1.0]).unwrap();
        assert!(linalg::max_abs_diff(&lambda, &[0.0, 0.0, 0.5]) < 1e-15);
        assert!(v.iter().all(|r| linalg::max_abs_diff(r, &[0.0, 0.0, 0.5]) < 1e-15));
        let (v, _) = horizontal_velocity(&c, &[0.0, 0.0, 0.0]).unwrap();
        assert!(v.iter().flatten().all(|x| *x == 0.0));
        let stretched = cfg(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        assert!(matches!(
            horizontal_velocity(&stretched, &[1.0, 0.0, 0.0]),
            Err(Error::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn kernel_projection_is_feasible_and_tangent() {
        let c = SnakeConfig::normalized(
            vec![1.0, 0.5, 2.0],
            vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.4, 0.0, 1.0]],
        )
        .unwrap();
        let z = vec![vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0], vec![-0.5, 0.2, 0.1]];
        let w = project_to_kernel(&c, &z).unwrap();
        let mut push = [0.0; 3];
        for (l, r) in c.lengths().iter().zip(&w) {
            for j in 0..3 {
                push[j] += l * r[j];
            }
        }
        assert!(linalg::norm(&push) < 1e-14);
        for (u, r) in c.segments().iter().zip(&w) {
            assert!(dot(u, r).abs() < 1e-15);
        }
    }

    #[test]
    fn bracket_sign_and_single_segment() {
        let c = cfg(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(calibrate_bracket_sign(&c), -1.0);
        assert!(snake_bracket_defect(&c, 0, 1, -1.0).unwrap() < 1e-9);
        assert_eq!(snake_bracket_defect(&c, 1, 1, -1.0).unwrap(), 0.0);
        let flat = cfg(&[&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]]);
        assert!(snake_bracket_defect(&flat, 0, 1, 1.0).unwrap() < 1e-9);
    }

    #[test]
    fn triple_relation_at_a_generic_point() {
        let c = SnakeConfig::normalized(vec![1.0, 1.0], vec![vec![0.3, -0.5, 0.8], vec![0.9, 0.1, 0.2]]).unwrap();
        for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 2, 1), (0, 1, 2)] {
            assert!(triple_relation_defect(&c, i, j, k, -1.0).unwrap() < 1e-5);
        }
    }

    #[test]
    fn g_bracket_examples() {
        let d = 3;
        assert_eq!(
            g_bracket(&GVector::epsilon(d, 0), &GVector::epsilon(d, 1)).unwrap(),
            GVector::omega(d, 0, 1)
        );
        assert_eq!(
            g_bracket(&GVector::epsilon(d, 0), &GVector::omega(d, 0, 1)).unwrap(),
            GVector::epsilon(d, 1)
        );
        // [ω_12, ω_23] = δ_22 ω_13 = ω_13
        assert_eq!(
            g_bracket(&GVector::omega(d, 0, 1), &GVector::omega(d, 1, 2)).unwrap(),
            GVector::omega(d, 0, 2)
        );
        let a = GVector::new(vec![0.3, -1.0, 2.0], vec![0.5, 0.25, -4.0]).unwrap();
        assert_eq!(g_bracket(&a, &a).unwrap(), GVector::zero(d));
    }

    #[test]
    fn extremal_examples() {
        let (s, x) = extremal_regular(&[0.0, 0.0], &[1.0, 1.0], &[0.0], &[0.0], 2.0).unwrap();
        assert_eq!(s, vec![2.0, 2.0]);
        assert_eq!(x, vec![2.0]);
        let (s, x) = extremal_regular(&[1.0, 2.0], &[0.0, 0.0], &[0.5], &[3.0], 0.5).unwrap();
        assert_eq!((s, x), (vec![1.0, 2.0], vec![2.0]));
        assert_eq!(extremal_singular(&[0.0], &[1.0], 0.7).unwrap(), vec![0.7]);
        assert!(extremal_regular(&[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn stationary_head_keeps_configuration() {
        let c = SnakeConfig::normalized(vec![1.0, 1.0], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let e = end_map(&c);
        let head = HeadCurve::parse(&[e[0].to_string(), e[1].to_string(), "0".into()]).unwrap();
        let path = charm(&c, &head, 0.1, 0.01).unwrap();
        let last = path.trajectory.last_row().unwrap();
        assert_eq!(&last[..6], c.state().as_slice());
        assert_eq!(curve_energy(&path).unwrap(), 0.0);
    }

    #[test]
    fn rotating_segment_energy() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
        let velocities = times.iter().map(|t| vec![vec![-t.sin(), t.cos()]]).collect();
        let mut trajectory = Trajectory::new(vec!["u_1_1".into(), "u_1_2".into()], 0.02);
        for t in &times {
            trajectory.push(*t, vec![t.cos(), t.sin()]);
        }
        let path = SnakePath {
            trajectory,
            velocities,
            lengths: vec![1.0],
        };
        assert!((curve_energy(&path).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polyline_head() {
        let h = HeadCurve::from_samples(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 2.0], vec![2.0, 1.0, 2.0]]).unwrap();
        assert_eq!(h.position(0.5).unwrap(), vec![0.5, 1.0]);
        assert_eq!(h.velocity(0.5).unwrap(), vec![1.0, 2.0]);
        assert_eq!(h.velocity(1.5).unwrap(), vec![0.0, 0.0]);
        assert_eq!(h.position(2.0).unwrap(), vec![1.0, 2.0]);
    }
}
