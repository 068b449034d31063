use serde::{Deserialize, Serialize};

use super::interpolate;
use crate::error::{Error, Result};
use crate::spinor::FourVector;

/// Detector model at one end of the interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndKind {
    /// `n_slash psi = u_slash psi` with detector velocity `u` tangent to the end.
    Ideal { u: FourVector },
    /// `(n.alpha + theta beta) psi = sqrt(1 + theta^2) psi`.
    SemiIdeal { theta: f64 },
    /// Non-detecting zero-flux bag wall.
    Wall,
    /// Non-detecting open end: outgoing characteristics leave, nothing enters.
    Off,
}

impl EndKind {
    pub fn ideal() -> Self {
        EndKind::Ideal { u: FourVector::REST }
    }

    pub fn is_detecting(&self) -> bool {
        matches!(self, EndKind::Ideal { .. } | EndKind::SemiIdeal { .. })
    }
}

/// Sampled boundary worldline `x_b(t)`, linear between samples and constant
/// outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Worldline {
    pub samples: Vec<(f64, f64)>,
}

impl Worldline {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("worldline has no samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("worldline sample times must be distinct".into()));
        }
        Ok(Self { samples })
    }

    /// Uniform motion `x_b(t) = x0 + v t` for `t` in `[0, t_end]`.
    pub fn uniform(x0: f64, v: f64, t_end: f64) -> Self {
        Self { samples: vec![(0.0, x0), (t_end, x0 + v * t_end)] }
    }

    pub fn position(&self, t: f64) -> f64 {
        interpolate(&self.samples, t)
    }

    /// Largest `|dx_b/dt|` over the segments and the time where it occurs.
    pub fn max_speed(&self) -> (f64, f64) {
        self.samples
            .windows(2)
            .map(|w| (((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs(), w[0].0))
            .fold((0.0, 0.0), |acc, s| if s.0 > acc.0 { s } else { acc })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndSpec {
    pub kind: EndKind,
    pub worldline: Option<Worldline>,
}

impl EndSpec {
    pub fn new(kind: EndKind) -> Self {
        Self { kind, worldline: None }
    }

    pub fn ideal() -> Self {
        Self::new(EndKind::ideal())
    }

    pub fn moving(worldline: Worldline) -> Self {
        Self { kind: EndKind::ideal(), worldline: Some(worldline) }
    }
}

/// Instantaneous detector activation over `[x_lo, x_hi]` at `time`
/// (a spacelike piece of the detecting surface).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub time: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub left: EndSpec,
    pub right: EndSpec,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
}

impl BoundarySpec {
    pub fn new(left: EndSpec, right: EndSpec) -> Self {
        Self { left, right, sweeps: Vec::new() }
    }

    pub fn ideal() -> Self {
        Self::new(EndSpec::ideal(), EndSpec::ideal())
    }

    pub fn walls() -> Self {
        Self::new(EndSpec::new(EndKind::Wall), EndSpec::new(EndKind::Wall))
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweeps.push(sweep);
        self
    }

    pub fn is_static(&self) -> bool {
        self.left.worldline.is_none() && self.right.worldline.is_none()
    }
}
