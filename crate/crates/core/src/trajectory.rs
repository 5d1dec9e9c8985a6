//! Sampled trajectories, the fixed-step RK4 driver, and CSV emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub step: f64,
    /// Named diagnostic values (drift, admissibility defect, ...).
    pub stats: BTreeMap<String, f64>,
}

/// A time series of numeric rows with named columns (the `t` column is
/// implicit).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(columns: Vec<String>, step: f64) -> Self {
        Trajectory {
            columns,
            times: Vec::new(),
            rows: Vec::new(),
            meta: TrajectoryMeta {
                integrator: "rk4".into(),
                step,
                stats: BTreeMap::new(),
            },
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.times.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    pub fn stat(&self, name: &str) -> Option<f64> {
        self.meta.stats.get(name).copied()
    }

    /// CSV text: header `t,<columns>`, one row per sample, 17 significant
    /// digits, LF line endings.
    pub fn to_csv(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("cannot emit an empty trajectory".into()));
        }
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            write!(out, "{}", fmt_float(*t)).expect("write to String");
            for v in row {
                write!(out, ",{}", fmt_float(*v)).expect("write to String");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_csv()?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sample times `0 = t_0 < t_1 < … < t_n = t_end` spaced by `step`, with a
/// shorter final step when `t_end` is not a multiple of `step`.
pub fn time_grid(t_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    let ratio = t_end / step;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    let n = n.max(1);
    let mut times: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    times.push(t_end);
    Ok(times)
}

/// One classical Runge–Kutta step.
pub fn rk4_step<F>(field: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(v, d)| v + a * d).collect() };
    let k1 = field(t, y)?;
    let k2 = field(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = field(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = field(t + h, &axpy(h, &k3))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Why a fixed-step integration stopped early.
#[derive(Debug)]
pub enum Halt {
    NonFinite { time: f64 },
    Field { time: f64, error: Error },
}

/// States on a time grid, possibly cut short.
#[derive(Debug)]
pub struct Sampled {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub halt: Option<Halt>,
}

/// Fixed-step RK4 from `y0` over `grid`. `project` runs after every step
/// (used for sphere renormalization); pass a no-op otherwise.
pub fn integrate_rk4<F, P>(y0: Vec<f64>, grid: &[f64], mut field: F, mut project: P) -> Sampled
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    P: FnMut(&mut [f64]),
{
    let mut times = vec![grid[0]];
    let mut states = vec![y0];
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let y = states.last().expect("non-empty");
        match rk4_step(&mut field, t0, y, t1 - t0) {
            Ok(mut next) => {
                project(&mut next);
                if next.iter().any(|v| !v.is_finite()) {
                    return Sampled {
                        times,
                        states,
                        halt: Some(Halt::NonFinite { time: t1 }),
                    };
                }
                times.push(t1);
                states.push(next);
            }
            Err(error) => {
                return Sampled {
                    times,
                    states,
                    halt: Some(Halt::Field { time: t0, error }),
                }
            }
        }
    }
    Sampled {
        times,
        states,
        halt: None,
    }
}

impl Sampled {
    /// Build a [`Trajectory`] whose rows are the states followed by
    /// `extra(state)`. A non-finite halt becomes [`Error::BlowUp`] carrying
    /// the rows computed so far; a field error is returned as is.
    pub fn into_trajectory<E>(self, columns: Vec<String>, step: f64, mut extra: E) -> Result<Trajectory>
    where
        E: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    {
        let mut traj = Trajectory::new(columns, step);
        for (t, y) in self.times.iter().zip(&self.states) {
            let mut row = y.clone();
            row.extend(extra(*t, y)?);
            traj.push(*t, row);
        }
        match self.halt {
            None => Ok(traj),
            Some(Halt::NonFinite { time }) => Err(Error::BlowUp {
                time,
                partial: Box::new(traj),
            }),
            Some(Halt::Field { error, .. }) => Err(error),
        }
    }
}
