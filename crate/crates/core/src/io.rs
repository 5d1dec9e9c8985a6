//! JSON input files.
//!
//! Spec file:
//!
//! ```json
//! {"n": 2, "m": 2, "rho": [["1", "0"], ["0", "1"]],
//!  "C": [{"gamma": 1, "alpha": 1, "beta": 2, "expr": "x2"}],
//!  "g": [["1", "0"], ["0", "1"]], "V": "0.5*x1^2",
//!  "L": "0.5*(u1^2+u2^2)", "frame": [["1", "0"]]}
//! ```
//!
//! Indices in `C` are 1-based; `C`, `g`, `V`, `L` and `frame` are optional.
//!
//! Snake file: `{"d", "N", "lengths", "u", "head"}` with `head` either
//! `{"exprs": [..]}` (functions of `t`) or `{"samples": [[t, c1, .., cd], ..]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algebroid::AlgebroidSpec;
use crate::error::{Error, Result};
use crate::mechanics::{FrameSpec, Lagrangian};
use crate::snake::{HeadCurve, SnakeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureEntry {
    pub gamma: usize,
    pub alpha: usize,
    pub beta: usize,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub n: usize,
    pub m: usize,
    pub rho: Vec<Vec<String>>,
    #[serde(rename = "C", default)]
    pub structure: Vec<StructureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<String>>>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Vec<Vec<String>>>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read(path.as_ref())?)
    }

    /// Validate and build the algebroid.
    pub fn build(&self) -> Result<AlgebroidSpec> {
        let mut b = AlgebroidSpec::builder(self.n, self.m).anchor(&self.rho);
        for e in &self.structure {
            if e.gamma == 0 || e.alpha == 0 || e.beta == 0 {
                return Err(Error::Dimension(format!(
                    "structure indices are 1-based, got ({}, {}, {})",
                    e.gamma, e.alpha, e.beta
                )));
            }
            b = b.structure(e.gamma - 1, e.alpha - 1, e.beta - 1, e.expr.clone());
        }
        if let Some(g) = &self.g {
            b = b.metric(g);
        }
        if let Some(v) = &self.potential {
            b = b.potential(v.clone());
        }
        b.build()
    }

    pub fn lagrangian(&self) -> Option<Result<Lagrangian>> {
        self.lagrangian.as_ref().map(|l| Lagrangian::parse(l, self.n, self.m))
    }

    pub fn frame(&self) -> Option<Result<FrameSpec>> {
        self.frame.as_ref().map(|rows| {
            if rows.iter().any(|r| r.len() != self.m) {
                return Err(Error::Dimension(format!("frame rows must have {} components", self.m)));
            }
            FrameSpec::parse(rows, self.n)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HeadFile {
    Exprs { exprs: Vec<String> },
    Samples { samples: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnakeFile {
    pub d: usize,
    #[serde(rename = "N")]
    pub segments: usize,
    pub lengths: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub head: HeadFile,
}

impl SnakeFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read(path.as_ref())?)
    }

    pub fn build(&self) -> Result<(SnakeConfig, HeadCurve)> {
        if self.lengths.len() != self.segments || self.u.len() != self.segments {
            return Err(Error::Dimension(format!(
                "N = {} but {} lengths and {} segments given",
                self.segments,
                self.lengths.len(),
                self.u.len()
            )));
        }
        if self.u.iter().any(|r| r.len() != self.d) {
            return Err(Error::Dimension(format!(
                "segments must have d = {} components",
                self.d
            )));
        }
        let cfg = SnakeConfig::new(self.lengths.clone(), self.u.clone())?;
        let head = match &self.head {
            HeadFile::Exprs { exprs } => HeadCurve::parse(exprs)?,
            HeadFile::Samples { samples } => HeadCurve::from_samples(samples)?,
        };
        if head.dim() != self.d {
            return Err(Error::Dimension(format!(
                "head curve has {} components, expected {}",
                head.dim(),
                self.d
            )));
        }
        Ok((cfg, head))
    }
}
