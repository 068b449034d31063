use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::Serialize;

use super::field::from_chars;
use super::{BoundarySpec, EndKind, EndSpec, Grid, MassScheme, Physics, SpinorField, Worldline};
use crate::error::{Error, Result};
use crate::spinor::{
    dirac_matrices, ideal_subspace, operator_norm, reflection_map, semiideal_subspace,
    to_characteristic, wall_subspace, Mat2, Side, SpinMatrix, Spinor, C64,
};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest reflection norm accepted before a boundary is declared non-contractive.
const REFLECTION_NORM_TOL: f64 = 1e-12;

/// Default tolerance of the probability ledger.
pub const LEDGER_TOL: f64 = 1e-8;

/// Which quadratic form turns recorded amplitudes into a probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// Static end: `dx (|o|^2 - |S o|^2)` with `S` that end's reflection map.
    Reflect(Side),
    /// Plain `dx |a|^2` (moving ends and sweeps).
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum OutcomeLabel {
    /// Flux through an end during step `step` (1-based), i.e. over
    /// `[(step - 1) dt, step dt]`.
    Boundary { step: usize, side: Side },
    /// Cell `cell` of sweep number `sweep`.
    Sweep { sweep: usize, cell: usize },
}

/// Flux through one end in one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EndOutput {
    pub flux: f64,
    /// Outgoing characteristic amplitudes that reached the end, two per cell.
    pub outgoing: Vec<C64>,
    /// Dirac-basis value at a static end (outgoing plus injected incoming).
    pub boundary_spinor: Option<Spinor>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutput {
    pub left: EndOutput,
    pub right: EndOutput,
}

impl StepOutput {
    pub fn end(&self, side: Side) -> &EndOutput {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub cells: Vec<usize>,
    pub weights: Vec<f64>,
    /// Dirac-basis values removed from the state, one per cell.
    pub spinors: Vec<Spinor>,
}

impl SweepOutput {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Detector activation on `[x_lo, x_hi]`: records `|psi|^2 dx` for every
/// cell whose centre lies in the region and zeroes those cells.
pub fn sweep_region(state: &mut SpinorField, x_lo: f64, x_hi: f64) -> Result<SweepOutput> {
    let grid = *state.grid();
    if !(x_lo <= x_hi) || x_lo < grid.x_min || x_hi > grid.x_max {
        return Err(Error::RegionOutsideDomain { lo: x_lo, hi: x_hi });
    }
    let dx = grid.dx();
    let first = grid.cells_left_of(x_lo);
    let end = grid.cells_at_or_left_of(x_hi);
    let mut out = SweepOutput { cells: Vec::new(), weights: Vec::new(), spinors: Vec::new() };
    for i in first..end.max(first) {
        out.cells.push(i);
        out.weights.push(state.density(i) * dx);
        out.spinors.push(state.spinor(i));
        state.amps[i] = [ZERO; 4];
    }
    Ok(out)
}

/// Hooks called during [`Evolver::evolve_observed`].
pub trait Observer {
    /// Sweep number `sweep` fired on the current state, before step `state.steps() + 1`.
    fn on_sweep(&mut self, _sweep: usize, _out: &SweepOutput, _state: &SpinorField) {}
    /// Step `state.steps()` (1-based) has completed.
    fn on_step(&mut self, _out: &StepOutput, _state: &SpinorField) {}
}

impl Observer for () {}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub label: OutcomeLabel,
    pub metric: Metric,
    pub amps: Vec<C64>,
}

/// Records the raw amplitudes behind every detection outcome, so that
/// probabilities of arbitrary outcome sets (and their bilinear versions)
/// can be recomputed later.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmplitudeTrace {
    pub events: Vec<TraceEvent>,
}

impl Observer for AmplitudeTrace {
    fn on_sweep(&mut self, sweep: usize, out: &SweepOutput, _state: &SpinorField) {
        for (cell, psi) in out.cells.iter().zip(&out.spinors) {
            self.events.push(TraceEvent {
                label: OutcomeLabel::Sweep { sweep, cell: *cell },
                metric: Metric::Plain,
                amps: psi.iter().copied().collect(),
            });
        }
    }

    fn on_step(&mut self, out: &StepOutput, state: &SpinorField) {
        for side in [Side::Left, Side::Right] {
            let end = out.end(side);
            if end.outgoing.is_empty() {
                continue;
            }
            let metric = if end.boundary_spinor.is_some() { Metric::Reflect(side) } else { Metric::Plain };
            self.events.push(TraceEvent {
                label: OutcomeLabel::Boundary { step: state.steps(), side },
                metric,
                amps: end.outgoing.clone(),
            });
        }
    }
}

/// Per-step flux through one end.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EndSeries {
    pub detecting: bool,
    pub flux: Vec<f64>,
}

impl EndSeries {
    pub fn total(&self) -> f64 {
        self.flux.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub time: f64,
    pub cells: Vec<usize>,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Everything a run contributes to the detection measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub dt: f64,
    pub start_time: f64,
    pub initial_norm: f64,
    pub left: EndSeries,
    pub right: EndSeries,
    /// `||psi||^2` after each step; `survival[k]` belongs to `start_time + (k+1) dt`.
    pub survival: Vec<f64>,
    pub sweeps: Vec<SweepRecord>,
    /// `(t, x_left, x_right)` after every step when an end moves.
    pub boundary_positions: Vec<(f64, f64, f64)>,
}

impl DetectionRecord {
    pub fn n_steps(&self) -> usize {
        self.survival.len()
    }

    pub fn end(&self, side: Side) -> &EndSeries {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// End time of each step.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_steps()).map(|k| self.start_time + k as f64 * self.dt).collect()
    }

    pub fn final_survival(&self) -> f64 {
        self.survival.last().copied().unwrap_or(self.initial_norm)
    }

    pub fn sweep_total(&self) -> f64 {
        self.sweeps.iter().flat_map(|s| s.weights.iter()).sum()
    }

    /// Probability that left through detecting ends and sweeps.
    pub fn total_detected(&self) -> f64 {
        let ends: f64 = [&self.left, &self.right]
            .iter()
            .filter(|e| e.detecting)
            .map(|e| e.total())
            .sum();
        ends + self.sweep_total()
    }

    /// Probability carried by one outcome (zero for steps beyond the run).
    pub fn outcome_mass(&self, label: &OutcomeLabel) -> f64 {
        match *label {
            OutcomeLabel::Boundary { step, side } => {
                step.checked_sub(1).and_then(|k| self.end(side).flux.get(k)).copied().unwrap_or(0.0)
            }
            OutcomeLabel::Sweep { sweep, cell } => self
                .sweeps
                .iter()
                .filter(|s| s.sweep == sweep)
                .flat_map(|s| s.cells.iter().zip(&s.weights))
                .filter(|(c, _)| **c == cell)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Probability that left through non-detecting open ends.
    pub fn escaped(&self) -> f64 {
        [&self.left, &self.right].iter().filter(|e| !e.detecting).map(|e| e.total()).sum()
    }

    /// `|fluxes + sweeps + final survival - initial norm|`.
    pub fn ledger_residual(&self) -> f64 {
        let out = self.left.total() + self.right.total() + self.sweep_total();
        (out + self.final_survival() - self.initial_norm).abs()
    }

    pub fn check_ledger(&self, tolerance: f64) -> Result<()> {
        let residual = self.ledger_residual();
        let min_flux = self.left.flux.iter().chain(&self.right.flux).fold(0.0f64, |a, &b| a.min(b));
        if residual > tolerance || min_flux < -1e-12 {
            return Err(Error::Ledger { residual: residual.max(-min_flux), tolerance });
        }
        Ok(())
    }

    /// CSV with columns `t, left_flux, right_flux, survival`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,left_flux,right_flux,survival")?;
        writeln!(w, "{:.17e},0,0,{:.17e}", self.start_time, self.initial_norm)?;
        for (k, t) in self.times().iter().enumerate() {
            writeln!(
                w,
                "{t:.17e},{:.17e},{:.17e},{:.17e}",
                self.left.flux[k], self.right.flux[k], self.survival[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum EndRuntime {
    Static { reflect: Mat2, detecting: bool },
    Moving { worldline: Worldline },
}

#[derive(Clone, Debug)]
enum Rotation {
    Identity,
    /// Independent `(r1, l1)` and `(r2, l2)` sectors; entries `[a, b, c, d]`
    /// of the 2x2 block acting on `(r, l)`.
    Block([C64; 4]),
    Full([[C64; 4]; 4]),
}

/// Split-step evolution operator for fixed physics and boundaries.
#[derive(Clone, Debug)]
pub struct Evolver {
    grid: Grid,
    physics: Physics,
    boundary: BoundarySpec,
    dt: f64,
    rotation: Rotation,
    phases: Option<Vec<C64>>,
    left: EndRuntime,
    right: EndRuntime,
    /// Step index before which each sweep fires.
    sweep_steps: Vec<usize>,
}

/// Round to the nearest of `{0, +-1, +-i}` when within `1e-12`, which keeps
/// the rotation matrices free of representation noise.
fn snap(z: C64) -> C64 {
    let s = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-12 {
            r
        } else {
            v
        }
    };
    C64::new(s(z.re), s(z.im))
}

fn to_char_matrix(m: &SpinMatrix) -> SpinMatrix {
    let t = to_characteristic();
    (t * m * t.adjoint()).map(snap)
}

impl Evolver {
    pub fn new(grid: Grid, physics: Physics, boundary: BoundarySpec) -> Result<Self> {
        physics.validate()?;
        let dt = grid.dt(physics.c);
        let left = Self::end_runtime(&grid, &physics, &boundary.left, Side::Left)?;
        let right = Self::end_runtime(&grid, &physics, &boundary.right, Side::Right)?;
        if let (Some(wl), Some(wr)) = (&boundary.left.worldline, &boundary.right.worldline) {
            for &(t, _) in wl.samples.iter().chain(&wr.samples) {
                if wl.position(t) >= wr.position(t) {
                    return Err(Error::WorldlineOffGrid { t });
                }
            }
        }
        let mut sweep_steps = Vec::with_capacity(boundary.sweeps.len());
        for s in &boundary.sweeps {
            if !(s.time >= 0.0) || !s.time.is_finite() {
                return Err(Error::InvalidConfig(format!("sweep time {} must be >= 0", s.time)));
            }
            if !(s.x_lo <= s.x_hi) || s.x_lo < grid.x_min || s.x_hi > grid.x_max {
                return Err(Error::RegionOutsideDomain { lo: s.x_lo, hi: s.x_hi });
            }
            sweep_steps.push((s.time / dt).round() as usize);
        }
        let rotation = Self::rotation(&physics, dt);
        let phases = physics.potential.as_ref().map(|v| {
            grid.centers()
                .map(|x| C64::from_polar(1.0, -v.eval(x) * dt / physics.hbar))
                .collect()
        });
        Ok(Self { grid, physics, boundary, dt, rotation, phases, left, right, sweep_steps })
    }

    fn end_runtime(grid: &Grid, physics: &Physics, spec: &EndSpec, side: Side) -> Result<EndRuntime> {
        if let Some(w) = &spec.worldline {
            match &spec.kind {
                EndKind::Ideal { u } if u.0[2].abs() < 1e-12 && u.0[3].abs() < 1e-12 => {}
                _ => {
                    return Err(Error::Unsupported(
                        "moving ends must be ideal detectors comoving with the worldline".into(),
                    ))
                }
            }
            let (speed, t) = w.max_speed();
            if !(speed < physics.c) {
                return Err(Error::Superluminal { t, speed });
            }
            for &(t, x) in &w.samples {
                let ok = match side {
                    Side::Left => x >= grid.x_min && x < grid.x_max,
                    Side::Right => x > grid.x_min && x <= grid.x_max,
                };
                if !ok || !x.is_finite() {
                    return Err(Error::WorldlineOffGrid { t });
                }
            }
            return Ok(EndRuntime::Moving { worldline: w.clone() });
        }
        let n = side.normal();
        let subspace = match &spec.kind {
            EndKind::Ideal { u } => Some(ideal_subspace(n, *u).map_err(|e| match e {
                Error::InvalidVector(m) => Error::Physics(format!("{side:?} end: {m}")),
                other => other,
            })?),
            EndKind::SemiIdeal { theta } => {
                if !theta.is_finite() {
                    return Err(Error::Physics("theta must be finite".into()));
                }
                Some(semiideal_subspace(n, *theta)?)
            }
            EndKind::Wall => Some(wall_subspace(n)?),
            EndKind::Off => None,
        };
        let reflect = match subspace {
            Some(bs) => reflection_map(&bs, side)?.map(snap),
            None => Mat2::zeros(),
        };
        let norm = operator_norm(&reflect);
        if norm > 1.0 + REFLECTION_NORM_TOL {
            return Err(Error::Physics(format!(
                "{side:?} end reflects with norm {norm} > 1 and would create probability"
            )));
        }
        Ok(EndRuntime::Static { reflect, detecting: spec.kind.is_detecting() })
    }

    fn rotation(physics: &Physics, dt: f64) -> Rotation {
        let e = physics.transverse_energy();
        if e == 0.0 {
            return Rotation::Identity;
        }
        let d = dirac_matrices();
        let a2 = to_char_matrix(&d.alpha[1]);
        let a3 = to_char_matrix(&d.alpha[2]);
        let b = to_char_matrix(&d.beta);
        let p = physics.c * physics.hbar;
        let m = (a2 * C64::from(p * physics.k2)
            + a3 * C64::from(p * physics.k3)
            + b * C64::from(physics.mass * physics.c * physics.c))
            / C64::from(e);
        let mut phi = e * dt / physics.hbar;
        if physics.mass_scheme == MassScheme::LatticeRenormalized {
            phi = phi.atan();
        }
        let r = SpinMatrix::identity() * C64::from(phi.cos()) - m * C64::new(0.0, phi.sin());
        if physics.k2 == 0.0 && physics.k3 == 0.0 {
            Rotation::Block([r[(0, 0)], r[(0, 2)], r[(2, 0)], r[(2, 2)]])
        } else {
            Rotation::Full(std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])))
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps to reach `t_final` from `t = 0`.
    pub fn steps_for(&self, t_final: f64) -> Result<usize> {
        let k = t_final / self.dt;
        let n = k.round();
        if !(t_final >= 0.0) || (k - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final = {t_final} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Entries `[a, b, c, d]` of the 2x2 rotation acting on each `(r_k, l_k)`
    /// pair, when the rotation is block diagonal and non-trivial.
    pub fn block_rotation(&self) -> Option<[C64; 4]> {
        match self.rotation {
            Rotation::Block(b) => Some(b),
            _ => None,
        }
    }

    /// Reflection map of a static end (zero for moving ends).
    pub fn reflection(&self, side: Side) -> Mat2 {
        match self.end(side) {
            EndRuntime::Static { reflect, .. } => *reflect,
            EndRuntime::Moving { .. } => Mat2::zeros(),
        }
    }

    pub fn is_detecting(&self, side: Side) -> bool {
        match self.end(side) {
            EndRuntime::Static { detecting, .. } => *detecting,
            EndRuntime::Moving { .. } => true,
        }
    }

    fn end(&self, side: Side) -> &EndRuntime {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Position of an end at time `t`.
    pub fn end_position(&self, side: Side, t: f64) -> f64 {
        match (self.end(side), side) {
            (EndRuntime::Moving { worldline }, _) => worldline.position(t),
            (EndRuntime::Static { .. }, Side::Left) => self.grid.x_min,
            (EndRuntime::Static { .. }, Side::Right) => self.grid.x_max,
        }
    }

    /// Cells `[lo, hi)` inside the domain at time `t`.
    pub fn live_cells(&self, t: f64) -> (usize, usize) {
        let lo = match &self.left {
            EndRuntime::Moving { worldline } => self.grid.cells_at_or_left_of(worldline.position(t)),
            EndRuntime::Static { .. } => 0,
        };
        let hi = match &self.right {
            EndRuntime::Moving { worldline } => self.grid.cells_left_of(worldline.position(t)),
            EndRuntime::Static { .. } => self.grid.n_cells,
        };
        (lo, hi)
    }

    /// 2x2 (or `len`-dimensional) quadratic form for a [`Metric`].
    pub fn metric_matrix(&self, metric: Metric, len: usize) -> DMatrix<C64> {
        let dx = C64::from(self.grid.dx());
        match metric {
            Metric::Reflect(side) => {
                let s = self.reflection(side);
                let m = (Mat2::identity() - s.adjoint() * s) * dx;
                DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
            }
            Metric::Plain => DMatrix::identity(len, len) * dx,
        }
    }

    fn check_grid(&self, state: &SpinorField) -> Result<()> {
        if state.grid() != &self.grid {
            return Err(Error::InvalidConfig("state grid differs from evolver grid".into()));
        }
        Ok(())
    }

    /// Advance by one step.
    pub fn step(&self, state: &mut SpinorField) -> Result<StepOutput> {
        self.check_grid(state)?;
        let n = self.grid.n_cells;
        let dx = self.grid.dx();
        let t0 = state.steps as f64 * self.dt;
        let t1 = (state.steps + 1) as f64 * self.dt;
        let (l0, k0) = self.live_cells(t0);
        let (l1, k1) = self.live_cells(t1);
        if l1 >= k1 || l0 >= k0 {
            return Err(Error::WorldlineOffGrid { t: t1 });
        }
        let amps = &mut state.amps;

        let mut out = StepOutput::default();
        for i in k1.saturating_sub(1).max(l0)..k0 {
            out.right.outgoing.extend_from_slice(&amps[i][0..2]);
        }
        for i in l0..=l1.min(k0 - 1) {
            out.left.outgoing.extend_from_slice(&amps[i][2..4]);
        }

        for i in (1..n).rev() {
            amps[i][0] = amps[i - 1][0];
            amps[i][1] = amps[i - 1][1];
        }
        amps[0][0] = ZERO;
        amps[0][1] = ZERO;
        for i in 0..n - 1 {
            amps[i][2] = amps[i + 1][2];
            amps[i][3] = amps[i + 1][3];
        }
        amps[n - 1][2] = ZERO;
        amps[n - 1][3] = ZERO;
        amps[k1..].fill([ZERO; 4]);
        amps[..l1].fill([ZERO; 4]);

        for (side, end_out) in [(Side::Left, &mut out.left), (Side::Right, &mut out.right)] {
            let o = &end_out.outgoing;
            let raw: f64 = o.iter().map(|a| a.norm_sqr()).sum();
            match self.end(side) {
                EndRuntime::Moving { .. } => end_out.flux = raw * dx,
                EndRuntime::Static { reflect, .. } => {
                    let ov = nalgebra::Vector2::new(o[0], o[1]);
                    let inj = reflect * ov;
                    end_out.flux = (raw - inj.norm_squared()) * dx;
                    let chars = match side {
                        Side::Left => {
                            amps[0][0] = inj[0];
                            amps[0][1] = inj[1];
                            [inj[0], inj[1], o[0], o[1]]
                        }
                        Side::Right => {
                            amps[n - 1][2] = inj[0];
                            amps[n - 1][3] = inj[1];
                            [o[0], o[1], inj[0], inj[1]]
                        }
                    };
                    end_out.boundary_spinor = Some(from_chars(&chars));
                }
            }
        }

        self.rotate(&mut amps[l1..k1], l1);
        state.steps += 1;
        state.time = state.steps as f64 * self.dt;
        Ok(out)
    }

    fn rotate(&self, cells: &mut [[C64; 4]], offset: usize) {
        match &self.rotation {
            Rotation::Identity => {}
            Rotation::Block([a, b, c, d]) => {
                for cell in cells.iter_mut() {
                    let [r1, r2, l1, l2] = *cell;
                    *cell = [a * r1 + b * l1, a * r2 + b * l2, c * r1 + d * l1, c * r2 + d * l2];
                }
            }
            Rotation::Full(r) => {
                for cell in cells.iter_mut() {
                    let v = *cell;
                    *cell = std::array::from_fn(|i| {
                        r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2] + r[i][3] * v[3]
                    });
                }
            }
        }
        if let Some(ph) = &self.phases {
            for (cell, p) in cells.iter_mut().zip(&ph[offset..]) {
                for a in cell.iter_mut() {
                    *a *= p;
                }
            }
        }
    }

    /// Probability currently outside the live cells.
    fn mass_outside(&self, state: &SpinorField) -> f64 {
        let (lo, hi) = self.live_cells(state.steps as f64 * self.dt);
        let dx = self.grid.dx();
        (0..lo).chain(hi..self.grid.n_cells).map(|i| state.density(i)).sum::<f64>() * dx
    }

    pub fn evolve(&self, state: &mut SpinorField, n_steps: usize) -> Result<DetectionRecord> {
        self.evolve_observed(state, n_steps, &mut ())
    }

    /// Evolve to `t_final` (measured from `t = 0`, not from the current time).
    pub fn evolve_to(&self, state: &mut SpinorField, t_final: f64) -> Result<DetectionRecord> {
        let target = self.steps_for(t_final)?;
        let n = target.checked_sub(state.steps).ok_or_else(|| {
            Error::InvalidConfig(format!("state is already past t = {t_final}"))
        })?;
        self.evolve(state, n)
    }

    /// Run `n_steps` steps. Sweeps fire before the first step that starts at
    /// (the nearest grid time to) their scheduled time.
    pub fn evolve_observed(
        &self,
        state: &mut SpinorField,
        n_steps: usize,
        observer: &mut impl Observer,
    ) -> Result<DetectionRecord> {
        self.check_grid(state)?;
        let outside = self.mass_outside(state);
        if outside > 1e-14 {
            return Err(Error::Physics(format!(
                "state has probability {outside:e} outside the moving domain"
            )));
        }
        let moving = !self.boundary.is_static();
        let mut record = DetectionRecord {
            dt: self.dt,
            start_time: state.time,
            initial_norm: state.norm_sq(),
            left: EndSeries { detecting: self.is_detecting(Side::Left), flux: Vec::with_capacity(n_steps) },
            right: EndSeries { detecting: self.is_detecting(Side::Right), flux: Vec::with_capacity(n_steps) },
            survival: Vec::with_capacity(n_steps),
            sweeps: Vec::new(),
            boundary_positions: Vec::new(),
        };
        for _ in 0..n_steps {
            for (k, &s) in self.sweep_steps.iter().enumerate() {
                if s == state.steps {
                    let sw = &self.boundary.sweeps[k];
                    let res = sweep_region(state, sw.x_lo, sw.x_hi)?;
                    observer.on_sweep(k, &res, state);
                    record.sweeps.push(SweepRecord {
                        sweep: k,
                        time: state.time,
                        x: res.cells.iter().map(|&i| self.grid.center(i)).collect(),
                        cells: res.cells,
                        weights: res.weights,
                    });
                }
            }
            let out = self.step(state)?;
            observer.on_step(&out, state);
            record.left.flux.push(out.left.flux);
            record.right.flux.push(out.right.flux);
            record.survival.push(state.norm_sq());
            if moving {
                let t = state.time;
                record.boundary_positions.push((
                    t,
                    self.end_position(Side::Left, t),
                    self.end_position(Side::Right, t),
                ));
            }
        }
        Ok(record)
    }
}
