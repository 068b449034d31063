//! Contraction evolution of a 4-spinor field on an interval.
//!
//! The scheme is an exact-characteristics split step at unit CFL
//! (`c dt = dx`): right movers (the `+1` eigenspace of `alpha^1`) shift one
//! cell right, left movers one cell left, then every cell is rotated by the
//! pointwise unitary generated by the transverse-momentum, mass and
//! potential terms. Boundary conditions act on the characteristic that
//! enters the domain, so absorption is exact and the norm lost in a step
//! is exactly the recorded boundary flux.

mod boundary;
mod field;
mod scheme;

pub use boundary::{BoundarySpec, EndKind, EndSpec, Sweep, Worldline};
pub use field::{init_state, InitReport, SpinorField};
pub use scheme::{
    sweep_region, AmplitudeTrace, DetectionRecord, EndOutput, EndSeries, Evolver, Metric, Observer, LEDGER_TOL,
    OutcomeLabel, StepOutput, SweepOutput, SweepRecord, TraceEvent,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the mass term enters the pointwise rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassScheme {
    /// Rotation angle `E_perp dt / hbar`.
    #[default]
    Bare,
    /// Rotation angle `atan(E_perp dt / hbar)`, which makes the lattice
    /// kinetic mass at small momenta equal to `mass`. Used for
    /// non-relativistic comparisons, where the bare angle would bias the
    /// effective mass by a relative `O((mc dx / hbar)^2)`.
    LatticeRenormalized,
}

/// Static potential `V(x)`, linearly interpolated between samples and held
/// constant beyond them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub samples: Vec<(f64, f64)>,
}

impl Potential {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("potential table is empty".into()));
        }
        if samples.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidConfig("potential table has non-finite entries".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { samples })
    }

    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.samples, x)
    }
}

pub(crate) fn interpolate(samples: &[(f64, f64)], x: f64) -> f64 {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = samples.partition_point(|s| s.0 <= x);
    let (x0, y0) = samples[k - 1];
    let (x1, y1) = samples[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub hbar: f64,
    pub c: f64,
    pub mass: f64,
    pub k2: f64,
    pub k3: f64,
    pub potential: Option<Potential>,
    pub mass_scheme: MassScheme,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            c: 1.0,
            mass: 1.0,
            k2: 0.0,
            k3: 0.0,
            potential: None,
            mass_scheme: MassScheme::Bare,
        }
    }
}

impl Physics {
    pub fn massless() -> Self {
        Self { mass: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.c > 0.0) {
            return Err(Error::Physics("hbar and c must be positive".into()));
        }
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(Error::Physics("mass must be non-negative".into()));
        }
        if !self.k2.is_finite() || !self.k3.is_finite() {
            return Err(Error::Physics("transverse wave numbers must be finite".into()));
        }
        Ok(())
    }

    /// Rest-plus-transverse energy `sqrt(c^2 hbar^2 k_perp^2 + m^2 c^4)`.
    pub fn transverse_energy(&self) -> f64 {
        let p = self.c * self.hbar * (self.k2 * self.k2 + self.k3 * self.k3).sqrt();
        let m = self.mass * self.c * self.c;
        p.hypot(m)
    }
}

/// Uniform cell-centred grid on `[x_min, x_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidConfig(format!("empty interval [{x_min}, {x_max}]")));
        }
        if n_cells < Self::MIN_CELLS {
            return Err(Error::InvalidConfig(format!(
                "n_cells = {n_cells} is below the minimum {}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    /// Unit-CFL time step.
    pub fn dt(&self, c: f64) -> f64 {
        self.dx() / c
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }

    /// Number of cells whose centre lies strictly left of `x`.
    pub fn cells_left_of(&self, x: f64) -> usize {
        let y = (x - self.x_min) / self.dx() - 0.5;
        if y <= 0.0 {
            0
        } else {
            (y.ceil() as usize).min(self.n_cells)
        }
    }

    /// Number of cells whose centre lies at or left of `x`.
    pub fn cells_at_or_left_of(&self, x: f64) -> usize {
        let y = (x - self.x_min) / self.dx() - 0.5;
        if y < 0.0 {
            0
        } else {
            ((y.floor() as usize) + 1).min(self.n_cells)
        }
    }
}
