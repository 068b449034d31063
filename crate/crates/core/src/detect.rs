//! Detection measure, conditional distributions and the discretized POVM.
//!
//! Outcomes are (step, end) pairs and individual sweep cells. Probability
//! that leaves through a non-detecting open end is never detected and is
//! counted, together with the final survival, as the mass at infinity.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{
    AmplitudeTrace, BoundarySpec, DetectionRecord, Evolver, Grid, OutcomeLabel, Physics,
    SpinorField, SweepRecord, LEDGER_TOL,
};
use crate::spinor::{Side, C64};

/// Largest Hilbert-space dimension for which operators are formed explicitly.
pub const POVM_DIM_CAP: usize = 1024;

pub const MIN_EIGENVALUE_TOL: f64 = -1e-10;
pub const COMPLETENESS_TOL: f64 = 1e-8;
pub const SEMIGROUP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndDensity {
    pub detecting: bool,
    /// Probability per unit time, one value per step.
    pub density: Vec<f64>,
}

/// The detection measure of one run, normalized to unit total mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionDistribution {
    pub dt: f64,
    /// Midpoint of each step interval.
    pub times: Vec<f64>,
    pub left: EndDensity,
    pub right: EndDensity,
    /// Sweep atoms, weights normalized like the densities.
    pub atoms: Vec<SweepRecord>,
    /// Survival after each step (normalized).
    pub survival: Vec<f64>,
    /// Probability through non-detecting open ends (part of `mass_at_infinity`).
    pub escaped: f64,
    pub mass_at_infinity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub total_detected: f64,
    pub mass_at_infinity: f64,
    /// Mean detection time given detection.
    pub first_moment: f64,
}

impl DetectionDistribution {
    pub fn end(&self, side: Side) -> &EndDensity {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Detected probability in step `k` (both detecting ends).
    pub fn step_mass(&self, k: usize) -> f64 {
        [&self.left, &self.right]
            .iter()
            .filter(|e| e.detecting)
            .map(|e| e.density[k] * self.dt)
            .sum()
    }

    pub fn atom_total(&self) -> f64 {
        self.atoms.iter().flat_map(|a| a.weights.iter()).sum()
    }

    pub fn total_detected(&self) -> f64 {
        (0..self.times.len()).map(|k| self.step_mass(k)).sum::<f64>() + self.atom_total()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_detected() + self.mass_at_infinity
    }

    /// Detected probability up to the end of each step, sweeps included.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.times.len());
        let mut atoms = self.atoms.iter().peekable();
        for k in 0..self.times.len() {
            let start = self.times[k] - self.dt / 2.0;
            while let Some(a) = atoms.next_if(|a| a.time <= start + 1e-9 * self.dt) {
                acc += a.weights.iter().sum::<f64>();
            }
            acc += self.step_mass(k);
            out.push(acc);
        }
        out
    }

    pub fn first_moment(&self) -> f64 {
        let mut m: f64 = (0..self.times.len()).map(|k| self.times[k] * self.step_mass(k)).sum();
        m += self.atoms.iter().map(|a| a.time * a.weights.iter().sum::<f64>()).sum::<f64>();
        let total = self.total_detected();
        if total > 0.0 {
            m / total
        } else {
            f64::NAN
        }
    }

    pub fn summary(&self) -> DistributionSummary {
        DistributionSummary {
            total_detected: self.total_detected(),
            mass_at_infinity: self.mass_at_infinity,
            first_moment: self.first_moment(),
        }
    }

    /// CSV with columns `t, left_density, right_density, cumulative, survival`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,left_density,right_density,cumulative,survival")?;
        let cum = self.cumulative();
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[k], self.left.density[k], self.right.density[k], cum[k], self.survival[k]
            )?;
        }
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, &self.summary()).map_err(io::Error::other)
    }
}

/// Turn a record into a normalized distribution, after checking its ledger.
pub fn detection_distribution(record: &DetectionRecord) -> Result<DetectionDistribution> {
    record.check_ledger(LEDGER_TOL * record.initial_norm.max(1.0))?;
    let norm = record.initial_norm;
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let scale = 1.0 / norm;
    let density = |s: &crate::evolution::EndSeries| EndDensity {
        detecting: s.detecting,
        density: s.flux.iter().map(|f| f * scale / record.dt).collect(),
    };
    let atoms = record
        .sweeps
        .iter()
        .map(|s| SweepRecord { weights: s.weights.iter().map(|w| w * scale).collect(), ..s.clone() })
        .collect();
    let escaped = record.escaped() * scale;
    Ok(DetectionDistribution {
        dt: record.dt,
        times: record.times().iter().map(|t| t - record.dt / 2.0).collect(),
        left: density(&record.left),
        right: density(&record.right),
        atoms,
        survival: record.survival.iter().map(|s| s * scale).collect(),
        escaped,
        mass_at_infinity: record.final_survival() * scale + escaped,
    })
}

/// Distribution of the detection event given no detection before the
/// current time of `state`: the normalized state evolved onward for
/// `n_steps` under the same (time-aligned) boundaries.
pub fn conditional_distribution(
    evolver: &Evolver,
    state: &SpinorField,
    n_steps: usize,
) -> Result<DetectionDistribution> {
    let norm = state.norm_sq();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let mut psi = state.clone();
    psi.scale(C64::from(1.0 / norm.sqrt()));
    let record = evolver.evolve(&mut psi, n_steps)?;
    detection_distribution(&record)
}

/// One POVM outcome `E = A^dagger M A`.
#[derive(Clone, Debug)]
pub struct PovmOutcome {
    pub label: OutcomeLabel,
    /// Amplitude functionals on orthonormal coordinates, `d x dim`.
    pub factor: DMatrix<C64>,
    /// `d x d` positive quadratic form.
    pub metric: DMatrix<C64>,
}

impl PovmOutcome {
    pub fn operator(&self) -> DMatrix<C64> {
        self.factor.adjoint() * &self.metric * &self.factor
    }

    pub fn expectation(&self, coeffs: &DVector<C64>) -> f64 {
        let a = &self.factor * coeffs;
        (a.adjoint() * &self.metric * a)[(0, 0)].re
    }

    /// Smallest eigenvalue of the full operator.
    pub fn min_eigenvalue(&self) -> f64 {
        let g = &self.factor * self.factor.adjoint();
        let eig = SymmetricEigen::new(g);
        let sqrt_vals = eig.eigenvalues.map(|l| C64::from(l.max(0.0).sqrt()));
        let g_half = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.adjoint();
        let h = &g_half * &self.metric * &g_half;
        let h = (&h + h.adjoint()) * C64::from(0.5);
        let small = SymmetricEigen::new(h).eigenvalues.min();
        if self.factor.nrows() < self.factor.ncols() {
            small.min(0.0)
        } else {
            small
        }
    }
}

/// Explicit POVM of the discretized problem on the `4 n_cells`-dimensional
/// space of orthonormal coordinates `sqrt(dx) psi` (see
/// [`SpinorField::to_coefficients`]).
#[derive(Clone, Debug)]
pub struct PovmSet {
    pub grid: Grid,
    pub physics: Physics,
    pub boundary: BoundarySpec,
    pub n_steps: usize,
    pub outcomes: Vec<PovmOutcome>,
    /// `W^dagger W` at `t_max` plus the flux through non-detecting open ends.
    pub e_inf: DMatrix<C64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PovmReport {
    pub dim: usize,
    pub n_outcomes: usize,
    pub min_eigenvalue: f64,
    pub completeness_residual: f64,
    /// `None` when the boundaries are not time-homogeneous.
    pub semigroup_residual: Option<f64>,
    pub passed: bool,
}

fn check_dim(grid: &Grid) -> Result<usize> {
    let dim = 4 * grid.n_cells;
    if dim > POVM_DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: POVM_DIM_CAP });
    }
    Ok(dim)
}

fn basis_field(grid: Grid, j: usize) -> SpinorField {
    let mut e = vec![C64::new(0.0, 0.0); 4 * grid.n_cells];
    e[j] = C64::new(1.0, 0.0);
    SpinorField::from_coefficients(grid, &e)
}

/// Columns `W_n e_j` of the `n`-step evolution, as a `dim x dim` matrix.
pub fn evolution_matrix(evolver: &Evolver, n_steps: usize) -> Result<DMatrix<C64>> {
    let grid = *evolver.grid();
    let dim = check_dim(&grid)?;
    let cols: Result<Vec<Vec<C64>>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut psi = basis_field(grid, j);
            evolver.evolve(&mut psi, n_steps)?;
            Ok(psi.to_coefficients())
        })
        .collect();
    let cols = cols?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| cols[j][i]))
}

/// Build the POVM for outcomes up to `t_max` by propagating basis vectors.
pub fn assemble_povm(
    physics: &Physics,
    grid: Grid,
    boundary: &BoundarySpec,
    t_max: f64,
) -> Result<PovmSet> {
    let dim = check_dim(&grid)?;
    let evolver = Evolver::new(grid, physics.clone(), boundary.clone())?;
    let n_steps = evolver.steps_for(t_max)?;
    let runs: Result<Vec<(AmplitudeTrace, Vec<C64>)>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut psi = basis_field(grid, j);
            let mut trace = AmplitudeTrace::default();
            evolver.evolve_observed(&mut psi, n_steps, &mut trace)?;
            Ok((trace, psi.to_coefficients()))
        })
        .collect();
    let runs = runs?;

    let w = DMatrix::from_fn(dim, dim, |i, j| runs[j].1[i]);
    let mut e_inf = w.adjoint() * &w;
    let mut outcomes = Vec::new();
    let template = &runs[0].0.events;
    for (k, event) in template.iter().enumerate() {
        let d = event.amps.len();
        let factor = DMatrix::from_fn(d, dim, |r, j| runs[j].0.events[k].amps[r]);
        let metric = evolver.metric_matrix(event.metric, d);
        let outcome = PovmOutcome { label: event.label, factor, metric };
        let detecting = match event.label {
            OutcomeLabel::Boundary { side, .. } => evolver.is_detecting(side),
            OutcomeLabel::Sweep { .. } => true,
        };
        if detecting {
            outcomes.push(outcome);
        } else {
            e_inf += outcome.operator();
        }
    }
    Ok(PovmSet {
        grid,
        physics: physics.clone(),
        boundary: boundary.clone(),
        n_steps,
        outcomes,
        e_inf,
    })
}

impl PovmSet {
    pub fn dim(&self) -> usize {
        4 * self.grid.n_cells
    }

    pub fn position(&self, label: &OutcomeLabel) -> Option<usize> {
        self.outcomes.iter().position(|o| &o.label == label)
    }

    /// `<psi|E(B)|psi>` for the union `B` of the listed outcomes.
    pub fn probability(&self, outcomes: &[usize], psi: &SpinorField) -> f64 {
        let c = DVector::from_vec(psi.to_coefficients());
        outcomes.iter().map(|&k| self.outcomes[k].expectation(&c)).sum()
    }

    pub fn probability_inf(&self, psi: &SpinorField) -> f64 {
        let c = DVector::from_vec(psi.to_coefficients());
        (c.adjoint() * &self.e_inf * c)[(0, 0)].re
    }

    /// `sum_k E_k + E_inf`.
    pub fn total(&self) -> DMatrix<C64> {
        let mut sum = self.e_inf.clone();
        for o in &self.outcomes {
            sum += o.operator();
        }
        sum
    }
}

fn hermitian_norm(m: DMatrix<C64>) -> f64 {
    let h = (&m + m.adjoint()) * C64::from(0.5);
    SymmetricEigen::new(h).eigenvalues.amax()
}

/// Positivity, completeness and (for time-homogeneous boundaries) the
/// semigroup law of the evolution behind `p`.
pub fn check_povm(p: &PovmSet) -> Result<PovmReport> {
    let dim = p.dim();
    let mut min_eigenvalue = SymmetricEigen::new(p.e_inf.clone()).eigenvalues.min();
    for o in &p.outcomes {
        min_eigenvalue = min_eigenvalue.min(o.min_eigenvalue());
    }
    let completeness_residual = hermitian_norm(p.total() - DMatrix::identity(dim, dim));

    let semigroup_residual = if p.boundary.is_static() && p.boundary.sweeps.is_empty() {
        let evolver = Evolver::new(p.grid, p.physics.clone(), p.boundary.clone())?;
        let s = (p.n_steps / 3).max(1);
        let t = (p.n_steps / 2).max(1);
        let ws = evolution_matrix(&evolver, s)?;
        let wt = evolution_matrix(&evolver, t)?;
        let wst = evolution_matrix(&evolver, s + t)?;
        Some((ws * wt - wst).norm())
    } else {
        None
    };
    let passed = min_eigenvalue >= MIN_EIGENVALUE_TOL
        && completeness_residual <= COMPLETENESS_TOL
        && semigroup_residual.map_or(true, |r| r <= SEMIGROUP_TOL);
    Ok(PovmReport {
        dim,
        n_outcomes: p.outcomes.len(),
        min_eigenvalue,
        completeness_residual,
        semigroup_residual,
        passed,
    })
}
