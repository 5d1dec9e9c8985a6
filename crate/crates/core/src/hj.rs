//! Hamilton–Jacobi checks for a dual section `ω`.
//!
//! `ω` solves the Hamilton–Jacobi problem for `h` when `d_ρ ω = 0` and
//! `d_ρ(h ∘ ω) = 0`. Then integral curves of the base field
//! `ẋ = ρ(x) ∂h/∂ξ(x, ω(x))` lift through `ω` to solutions of the Hamiltonian
//! system. [`hj_equivalence_check`] integrates both sides and compares.

use serde::Serialize;

use crate::algebroid::{apply_anchor, d_rho_0, d_rho_1, Algebroid, Components, ScalarField, Section};
use crate::dual::Scalar;
use crate::error::Result;
use crate::linalg;
use crate::poisson::{integrate_hamilton, partials, BundleFunction, PhasePoint};
use crate::trajectory::{integrate_rk4, time_grid};

/// Closedness level below which `d_ρ ω = 0` is taken to hold.
pub const CLOSEDNESS_THRESHOLD: f64 = 1e-8;
/// `hj_defect` below this counts as a solution of the Hamilton–Jacobi equation.
pub const HJ_THRESHOLD: f64 = 1e-8;
/// `lift_deviation` below this counts as agreement of the two flows.
pub const LIFT_THRESHOLD: f64 = 1e-5;
/// A lift this close should force a small `hj_defect` ...
pub const LIFT_TIGHT_THRESHOLD: f64 = 1e-8;
/// ... namely below this.
pub const HJ_LOOSE_THRESHOLD: f64 = 1e-4;

/// `x ↦ h(x, ω(x))`.
pub struct Composite<'a, H, W> {
    pub h: &'a H,
    pub omega: &'a W,
}

impl<H: BundleFunction, W: Components> ScalarField for Composite<'_, H, W> {
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        self.h.eval(x, &self.omega.eval(x)?)
    }
}

/// `max |d_ρ ω(e_α, e_β)(x)|` over the points and pairs `α < β`.
pub fn drho_closed_defect<A: Algebroid, W: Components>(alg: &A, omega: &W, points: &[Vec<f64>]) -> Result<f64> {
    let (n, m) = (alg.base_dim(), alg.rank());
    let basis: Vec<Section> = (0..m).map(|a| Section::basis(m, a, n)).collect();
    let mut worst: f64 = 0.0;
    for x in points {
        for a in 0..m {
            for b in a + 1..m {
                worst = worst.max(d_rho_1(alg, omega, &basis[a], &basis[b], x.as_slice())?.abs());
            }
        }
    }
    Ok(worst)
}

/// `max |d_ρ(h ∘ ω)(x)|` over the points and components.
pub fn hj_defect<A, H, W>(alg: &A, h: &H, omega: &W, points: &[Vec<f64>]) -> Result<f64>
where
    A: Algebroid,
    H: BundleFunction,
    W: Components,
{
    let comp = Composite { h, omega };
    let mut worst: f64 = 0.0;
    for x in points {
        let d = d_rho_0(alg, &comp, x.as_slice())?;
        worst = d.iter().fold(worst, |w, v| w.max(v.abs()));
    }
    Ok(worst)
}

/// Time grid summary of an [`HJReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub t_end: f64,
    pub step: f64,
    pub count: usize,
}

/// Thresholds echoed in an [`HJReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HJThresholds {
    pub closedness: f64,
    pub hj: f64,
    pub lift: f64,
    pub lift_tight: f64,
    pub hj_loose: f64,
}

impl Default for HJThresholds {
    fn default() -> Self {
        HJThresholds {
            closedness: CLOSEDNESS_THRESHOLD,
            hj: HJ_THRESHOLD,
            lift: LIFT_THRESHOLD,
            lift_tight: LIFT_TIGHT_THRESHOLD,
            hj_loose: HJ_LOOSE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HJReport {
    /// Closedness defect of `ω` on the visited base points.
    pub closedness_defect: f64,
    /// `hj_defect` on the visited base points.
    pub hj_defect: f64,
    /// Sup over the grid of the distance between `(c(t), ω(c(t)))` and the
    /// Hamiltonian flow from `(x0, ω(x0))`.
    pub lift_deviation: f64,
    pub samples: usize,
    pub times: GridInfo,
    /// Whether `ω` passed the closedness threshold.
    pub hypothesis_met: bool,
    /// False when one side of the equivalence holds and the other clearly
    /// fails.
    pub consistent: bool,
    pub thresholds: HJThresholds,
}

/// Integrate the base field of `h` along `ω` and the Hamiltonian flow of
/// `h`, then compare the lift with the flow.
pub fn hj_equivalence_check<A, H, W>(alg: &A, h: &H, omega: &W, x0: &[f64], t_end: f64, step: f64) -> Result<HJReport>
where
    A: Algebroid,
    H: BundleFunction,
    W: Components,
{
    let (n, m) = (alg.base_dim(), alg.rank());
    let grid = time_grid(t_end, step)?;
    let base = integrate_rk4(
        x0.to_vec(),
        &grid,
        |_, x| {
            let w = omega.eval(x)?;
            let (_, hxi) = partials(h, x, &w)?;
            Ok(apply_anchor(&alg.anchor(x)?, n, m, &hxi))
        },
        |_| {},
    );
    let names = crate::algebroid::base_names(n);
    let base = base.into_trajectory(names, step, |_, _| Ok(Vec::new()))?;
    let p0 = PhasePoint::new(x0.to_vec(), omega.eval(x0)?);
    let flow = integrate_hamilton(alg, h, &p0, t_end, step)?;

    let mut deviation: f64 = 0.0;
    for (c, row) in base.rows.iter().zip(&flow.rows) {
        let mut lift = c.clone();
        lift.extend(omega.eval(c.as_slice())?);
        deviation = deviation.max(linalg::norm(
            &lift.iter().zip(&row[..n + m]).map(|(a, b)| a - b).collect::<Vec<_>>(),
        ));
    }
    let closedness = drho_closed_defect(alg, omega, &base.rows)?;
    let hj = hj_defect(alg, h, omega, &base.rows)?;
    let th = HJThresholds::default();
    let consistent = !(hj < th.hj && deviation >= th.lift) && !(deviation < th.lift_tight && hj >= th.hj_loose);
    Ok(HJReport {
        closedness_defect: closedness,
        hj_defect: hj,
        lift_deviation: deviation,
        samples: base.len(),
        times: GridInfo {
            t_end,
            step,
            count: grid.len(),
        },
        hypothesis_met: closedness < th.closedness,
        consistent,
        thresholds: th,
    })
}
