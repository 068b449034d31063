//! Non-relativistic comparator: a Crank–Nicolson Pauli solver with the
//! Robin absorbing condition `d phi / dn = i kappa phi`, the `kappa <-> theta`
//! correspondence, and the limit experiment that compares it with the
//! semi-ideal Dirac detector along a ladder of light speeds.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{
    BoundarySpec, DetectionRecord, EndKind, EndSeries, EndSpec, Evolver, Grid, MassScheme,
    Physics, Potential, SpinorField,
};
use crate::spinor::{semiideal_ratio, C64};

/// `kappa = (2 m c / hbar) (sqrt(1 + theta^2) - theta)`.
pub fn kappa_from_theta(theta: f64, mass: f64, c: f64, hbar: f64) -> f64 {
    2.0 * mass * c / hbar * semiideal_ratio(theta)
}

/// Inverse of [`kappa_from_theta`]: `theta = (1/r - r) / 2` with `r = hbar kappa / (2 m c)`.
pub fn theta_from_kappa(kappa: f64, mass: f64, c: f64, hbar: f64) -> f64 {
    let r = hbar * kappa / (2.0 * mass * c);
    (1.0 / r - r) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaTheta {
    pub kappa: f64,
    pub theta: f64,
    pub mass: f64,
    pub c: f64,
    pub hbar: f64,
}

impl KappaTheta {
    pub fn from_kappa(kappa: f64, mass: f64, c: f64, hbar: f64) -> Self {
        Self { kappa, theta: theta_from_kappa(kappa, mass, c, hbar), mass, c, hbar }
    }

    pub fn from_theta(theta: f64, mass: f64, c: f64, hbar: f64) -> Self {
        Self { kappa: kappa_from_theta(theta, mass, c, hbar), theta, mass, c, hbar }
    }
}

/// Boundary condition at one end of the Pauli solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NrEnd {
    /// `d phi / dn = i kappa phi` with outward normal `n`.
    Robin { kappa: f64 },
    /// `phi = 0`.
    Wall,
}

/// Two-component wave function on the nodes `x_min + j h`, `j = 0..=n_cells`,
/// of a [`Grid`] (`h = grid.dx()`).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliField {
    grid: Grid,
    values: Vec<[C64; 2]>,
    time: f64,
}

impl PauliField {
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [C64; 2]) -> Self {
        let values = (0..=grid.n_cells).map(|j| f(node(&grid, j))).collect();
        Self { grid, values, time: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[[C64; 2]] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn weight(&self, j: usize) -> f64 {
        let h = self.grid.dx();
        if j == 0 || j == self.grid.n_cells {
            h / 2.0
        } else {
            h
        }
    }

    /// Trapezoid-rule `||phi||^2`.
    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| self.weight(j) * (v[0].norm_sqr() + v[1].norm_sqr()))
            .sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / n.sqrt();
        for v in &mut self.values {
            v[0] *= s;
            v[1] *= s;
        }
        Ok(())
    }
}

fn node(grid: &Grid, j: usize) -> f64 {
    grid.x_min + j as f64 * grid.dx()
}

/// Pre-factorized Crank–Nicolson propagator.
#[derive(Clone, Debug)]
pub struct PauliSolver {
    grid: Grid,
    hbar: f64,
    mass: f64,
    dt: f64,
    left: NrEnd,
    right: NrEnd,
    /// `H` as (sub, diag, super) diagonals.
    h_lower: Vec<C64>,
    h_diag: Vec<C64>,
    h_upper: Vec<C64>,
    /// Thomas factors of `I + i dt H / (2 hbar)`.
    upper_prime: Vec<C64>,
    inv_denom: Vec<C64>,
}

impl PauliSolver {
    pub fn new(
        grid: Grid,
        hbar: f64,
        mass: f64,
        potential: Option<&Potential>,
        left: NrEnd,
        right: NrEnd,
        dt: f64,
    ) -> Result<Self> {
        if !(hbar > 0.0 && mass > 0.0 && dt > 0.0) {
            return Err(Error::Physics("hbar, mass and dt must be positive".into()));
        }
        for end in [left, right] {
            if let NrEnd::Robin { kappa } = end {
                if !(kappa >= 0.0) || !kappa.is_finite() {
                    return Err(Error::Physics(format!("Robin kappa = {kappa} must be >= 0")));
                }
            }
        }
        let n = grid.n_cells + 1;
        let h = grid.dx();
        let g = hbar * hbar / (2.0 * mass * h * h);
        let v = |j: usize| potential.map_or(0.0, |p| p.eval(node(&grid, j)));
        let mut lower = vec![C64::from(-g); n];
        let mut diag: Vec<C64> = (0..n).map(|j| C64::from(2.0 * g + v(j))).collect();
        let mut upper = vec![C64::from(-g); n];
        lower[0] = C64::from(0.0);
        upper[n - 1] = C64::from(0.0);
        let robin = |kappa: f64| C64::new(0.0, -2.0 * h * kappa * g);
        match left {
            NrEnd::Robin { kappa } => {
                upper[0] = C64::from(-2.0 * g);
                diag[0] += robin(kappa);
            }
            NrEnd::Wall => {
                upper[0] = C64::from(0.0);
                diag[0] = C64::from(0.0);
            }
        }
        match right {
            NrEnd::Robin { kappa } => {
                lower[n - 1] = C64::from(-2.0 * g);
                diag[n - 1] += robin(kappa);
            }
            NrEnd::Wall => {
                lower[n - 1] = C64::from(0.0);
                diag[n - 1] = C64::from(0.0);
            }
        }
        let tau = C64::new(0.0, dt / (2.0 * hbar));
        let one = C64::from(1.0);
        let a: Vec<C64> = lower.iter().map(|x| tau * x).collect();
        let b: Vec<C64> = diag.iter().map(|x| one + tau * x).collect();
        let c: Vec<C64> = upper.iter().map(|x| tau * x).collect();
        let mut upper_prime = vec![C64::from(0.0); n];
        let mut inv_denom = vec![C64::from(0.0); n];
        let mut prev = C64::from(0.0);
        for j in 0..n {
            let denom = b[j] - a[j] * prev;
            if denom.norm() < 1e-300 {
                return Err(Error::Physics("singular Crank-Nicolson system".into()));
            }
            inv_denom[j] = 1.0 / denom;
            upper_prime[j] = c[j] * inv_denom[j];
            prev = upper_prime[j];
        }
        Ok(Self {
            grid,
            hbar,
            mass,
            dt,
            left,
            right,
            h_lower: lower,
            h_diag: diag,
            h_upper: upper,
            upper_prime,
            inv_denom,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_h(&self, x: &[C64], j: usize) -> C64 {
        let n = x.len();
        let mut y = self.h_diag[j] * x[j];
        if j > 0 {
            y += self.h_lower[j] * x[j - 1];
        }
        if j + 1 < n {
            y += self.h_upper[j] * x[j + 1];
        }
        y
    }

    fn solve_component(&self, x: &mut [C64], scratch: &mut Vec<C64>) {
        let n = x.len();
        let tau = C64::new(0.0, self.dt / (2.0 * self.hbar));
        scratch.clear();
        scratch.extend((0..n).map(|j| x[j] - tau * self.apply_h(x, j)));
        let a = |j: usize| tau * self.h_lower[j];
        let d = scratch;
        d[0] *= self.inv_denom[0];
        for j in 1..n {
            d[j] = (d[j] - a(j) * d[j - 1]) * self.inv_denom[j];
        }
        for j in (0..n - 1).rev() {
            d[j] = d[j] - self.upper_prime[j] * d[j + 1];
        }
        x.copy_from_slice(d);
    }

    /// One step; returns the `(left, right)` flux `(hbar kappa / m) |phi_mid|^2 dt`.
    pub fn step(&self, state: &mut PauliField) -> (f64, f64) {
        let n = state.values.len();
        if self.left == NrEnd::Wall {
            state.values[0] = [C64::from(0.0); 2];
        }
        if self.right == NrEnd::Wall {
            state.values[n - 1] = [C64::from(0.0); 2];
        }
        let old_ends = [state.values[0], state.values[n - 1]];
        let mut comp = vec![C64::from(0.0); n];
        let mut scratch = Vec::with_capacity(n);
        for s in 0..2 {
            for (c, v) in comp.iter_mut().zip(&state.values) {
                *c = v[s];
            }
            self.solve_component(&mut comp, &mut scratch);
            for (v, c) in state.values.iter_mut().zip(&comp) {
                v[s] = *c;
            }
        }
        let new_ends = [state.values[0], state.values[n - 1]];
        let flux = |end: NrEnd, old: [C64; 2], new: [C64; 2]| match end {
            NrEnd::Robin { kappa } => {
                let m0 = (old[0] + new[0]) * 0.5;
                let m1 = (old[1] + new[1]) * 0.5;
                self.hbar * kappa / self.mass * (m0.norm_sqr() + m1.norm_sqr()) * self.dt
            }
            NrEnd::Wall => 0.0,
        };
        state.time += self.dt;
        (
            flux(self.left, old_ends[0], new_ends[0]),
            flux(self.right, old_ends[1], new_ends[1]),
        )
    }

    /// Evolve for `n_steps`, producing a record compatible with [`crate::detect`].
    pub fn evolve(&self, state: &mut PauliField, n_steps: usize) -> Result<DetectionRecord> {
        if state.grid != self.grid {
            return Err(Error::InvalidConfig("state grid differs from solver grid".into()));
        }
        let detecting = |e: NrEnd| matches!(e, NrEnd::Robin { .. });
        let mut record = DetectionRecord {
            dt: self.dt,
            start_time: state.time,
            initial_norm: state.norm_sq(),
            left: EndSeries { detecting: detecting(self.left), flux: Vec::with_capacity(n_steps) },
            right: EndSeries { detecting: detecting(self.right), flux: Vec::with_capacity(n_steps) },
            survival: Vec::with_capacity(n_steps),
            sweeps: Vec::new(),
            boundary_positions: Vec::new(),
        };
        for _ in 0..n_steps {
            let (l, r) = self.step(state);
            record.left.flux.push(l);
            record.right.flux.push(r);
            record.survival.push(state.norm_sq());
        }
        Ok(record)
    }
}

/// Gaussian packet `(2 pi sigma^2)^{-1/4} exp(-(x-x0)^2 / (4 sigma^2) + i k0 x)`
/// (`sigma` is the position standard deviation).
pub fn gaussian(x: f64, x0: f64, sigma: f64, k0: f64) -> C64 {
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    let d = x - x0;
    C64::from_polar(norm * (-d * d / (4.0 * sigma * sigma)).exp(), k0 * x)
}

/// Result of projecting onto the positive-energy branch of the lattice step.
#[derive(Clone, Debug)]
pub struct PositiveEnergyState {
    pub field: SpinorField,
    /// Fraction of the norm removed by the projection.
    pub projection_loss: f64,
}

/// Dirac state whose upper components are approximately `phi` and which
/// lies in the positive-energy branch of the evolver's lattice step.
/// Requires zero transverse momentum and no potential; uses periodic FFTs
/// over the grid, so `phi` should vanish near both ends.
pub fn positive_energy_state(evolver: &Evolver, phi: &[[C64; 2]]) -> Result<PositiveEnergyState> {
    let [a, b, c, d] = evolver.block_rotation().ok_or_else(|| {
        Error::Unsupported("positive-energy projection needs m > 0 and k_perp = 0".into())
    })?;
    if evolver.physics().potential.is_some() {
        return Err(Error::Unsupported("positive-energy projection with a potential".into()));
    }
    let grid = *evolver.grid();
    let n = grid.n_cells;
    if phi.len() != n {
        return Err(Error::InvalidConfig("one upper spinor per cell required".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let chars: Vec<[C64; 4]> =
        phi.iter().map(|p| [p[0] * h, p[1] * h, p[0] * h, p[1] * h]).collect();
    let before: f64 = chars.iter().flatten().map(|z| z.norm_sqr()).sum();
    let amps = project_positive([a, b, c, d], chars);
    let after: f64 = amps.iter().flatten().map(|z| z.norm_sqr()).sum();
    let mut field = SpinorField::from_characteristics(grid, amps);
    let norm = field.norm_sq();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    field.scale(C64::from(1.0 / norm.sqrt()));
    Ok(PositiveEnergyState { field, projection_loss: 1.0 - after / before })
}

/// Orthogonal projection of characteristic amplitudes onto the
/// positive-energy eigenvectors (eigenvalue `e^{-i Omega}`, `Omega > 0`) of
/// the periodic lattice step with block rotation `[a, b, c, d]`.
fn project_positive(rot: [C64; 4], chars: Vec<[C64; 4]>) -> Vec<[C64; 4]> {
    let [a, b, c, d] = rot;
    let n = chars.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut amps = vec![[C64::from(0.0); 4]; n];
    for s in 0..2 {
        let mut r: Vec<C64> = chars.iter().map(|x| x[s]).collect();
        let mut l: Vec<C64> = chars.iter().map(|x| x[s + 2]).collect();
        fwd.process(&mut r);
        fwd.process(&mut l);
        for q in 0..n {
            let qs = if q < n.div_ceil(2) { q as f64 } else { q as f64 - n as f64 };
            let theta = 2.0 * std::f64::consts::PI * qs / n as f64;
            let e = C64::from_polar(1.0, -theta);
            // U = R diag(e^{-i theta}, e^{i theta})
            let (p, qq, rr, ss) = (a * e, b * e.conj(), c * e, d * e.conj());
            let tr = p + ss;
            let det = p * ss - qq * rr;
            let disc = (tr * tr - det * 4.0).sqrt();
            let l1 = (tr + disc) * 0.5;
            let l2 = (tr - disc) * 0.5;
            let lam = if l1.im < l2.im { l1 } else { l2 };
            let v1 = [qq, lam - p];
            let v2 = [lam - ss, rr];
            let nrm = |v: &[C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            let v = if nrm(&v1) >= nrm(&v2) { v1 } else { v2 };
            let vn = nrm(&v);
            let v = [v[0] / vn, v[1] / vn];
            let coef = v[0].conj() * r[q] + v[1].conj() * l[q];
            r[q] = v[0] * coef;
            l[q] = v[1] * coef;
        }
        inv.process(&mut r);
        inv.process(&mut l);
        let scale = 1.0 / n as f64;
        for j in 0..n {
            amps[j][s] = r[j] * scale;
            amps[j][s + 2] = l[j] * scale;
        }
    }
    amps
}

/// Setup of the non-relativistic limit experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub hbar: f64,
    pub mass: f64,
    pub kappa: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Packet centre, position standard deviation and mean wave number.
    pub x0: f64,
    pub sigma: f64,
    pub k0: f64,
    pub t_end: f64,
    /// Lattice mass parameter `m c dx / hbar` of the Dirac runs.
    pub mu: f64,
    pub bin_width: f64,
    pub nr_cells: usize,
    pub nr_steps: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            kappa: 1.5,
            x_min: 0.0,
            x_max: 12.0,
            x0: 4.0,
            sigma: 1.0,
            k0: 1.0,
            t_end: 24.0,
            mu: 1.0,
            bin_width: 0.1,
            nr_cells: 6000,
            nr_steps: 24000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rung {
    pub c: f64,
    pub theta: f64,
    pub tv: f64,
    pub runtime_s: f64,
    pub n_cells: usize,
    pub n_steps: usize,
    pub projection_loss: f64,
    pub mass_at_infinity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderReport {
    pub rungs: Vec<Rung>,
    pub nr_mass_at_infinity: f64,
    /// Each TV at most 10% above its predecessor.
    pub monotone: bool,
    pub final_tv: f64,
    pub warnings: Vec<String>,
}

impl LadderReport {
    pub fn passed(&self, final_tol: f64) -> bool {
        self.monotone && self.final_tv <= final_tol
    }

    /// CSV `c, theta, tv, runtime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "c,theta,tv,runtime")?;
        for r in &self.rungs {
            writeln!(w, "{},{:.17e},{:.17e},{:.3}", r.c, r.theta, r.tv, r.runtime_s)?;
        }
        Ok(())
    }
}

/// Detected mass per `(end, bin)` on `[start, start + n_bins width]`, with
/// each step's flux spread uniformly over its interval. Index `n_bins`
/// of each row collects mass beyond the last bin.
pub fn rebin(record: &DetectionRecord, width: f64, n_bins: usize) -> [Vec<f64>; 2] {
    let mut out = [vec![0.0; n_bins + 1], vec![0.0; n_bins + 1]];
    for (e, series) in [&record.left, &record.right].into_iter().enumerate() {
        for (k, &m) in series.flux.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let t0 = record.start_time + k as f64 * record.dt;
            let t1 = t0 + record.dt;
            let mut b = ((t0 / width).floor().max(0.0) as usize).min(n_bins);
            loop {
                let lo = b as f64 * width;
                let hi = if b == n_bins { f64::INFINITY } else { lo + width };
                let overlap = (t1.min(hi) - t0.max(lo)).max(0.0);
                out[e][b] += m * overlap / record.dt;
                if hi >= t1 || b == n_bins {
                    break;
                }
                b += 1;
            }
        }
    }
    out
}

/// Total-variation distance between two records on common bins, with
/// both ends and the never-detected atom as outcomes.
pub fn tv_distance(a: &DetectionRecord, b: &DetectionRecord, width: f64, n_bins: usize) -> f64 {
    let ra = rebin(a, width, n_bins);
    let rb = rebin(b, width, n_bins);
    let inf = |r: &DetectionRecord| {
        (r.final_survival() + [&r.left, &r.right].iter().filter(|e| !e.detecting).map(|e| e.total()).sum::<f64>())
            / r.initial_norm
    };
    let mut sum = (inf(a) - inf(b)).abs();
    for e in 0..2 {
        for (x, y) in ra[e].iter().zip(&rb[e]) {
            sum += (x / a.initial_norm - y / b.initial_norm).abs();
        }
    }
    sum / 2.0
}

/// Run the Pauli reference once and the semi-ideal Dirac solver for every
/// `c` in `ladder`, returning the TV distances between detection-time
/// distributions.
pub fn limit_experiment(cfg: &LimitConfig, ladder: &[f64]) -> Result<LadderReport> {
    if ladder.len() < 3 {
        return Err(Error::LadderTooShort(ladder.len()));
    }
    let mut warnings = Vec::new();
    let v = cfg.hbar * cfg.k0 / cfg.mass;
    let c_min = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    if v.abs() > 0.02 * c_min {
        let msg = format!("packet speed {v} exceeds 2% of the smallest c = {c_min}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let length = cfg.x_max - cfg.x_min;
    let n_bins = (cfg.t_end / cfg.bin_width).round() as usize;

    let nr_grid = Grid::new(cfg.x_min, cfg.x_max, cfg.nr_cells)?;
    let robin = NrEnd::Robin { kappa: cfg.kappa };
    let solver = PauliSolver::new(
        nr_grid,
        cfg.hbar,
        cfg.mass,
        None,
        robin,
        robin,
        cfg.t_end / cfg.nr_steps as f64,
    )?;
    let mut phi = PauliField::from_fn(nr_grid, |x| {
        [gaussian(x, cfg.x0, cfg.sigma, cfg.k0), C64::from(0.0)]
    });
    phi.normalize()?;
    let nr = solver.evolve(&mut phi, cfg.nr_steps)?;
    nr.check_ledger(1e-8)?;

    let rungs: Result<Vec<Rung>> = ladder
        .par_iter()
        .map(|&c| {
            let started = Instant::now();
            let n_cells = (length * cfg.mass * c / (cfg.mu * cfg.hbar)).round() as usize;
            let grid = Grid::new(cfg.x_min, cfg.x_max, n_cells)?;
            let theta = theta_from_kappa(cfg.kappa, cfg.mass, c, cfg.hbar);
            let physics = Physics {
                hbar: cfg.hbar,
                c,
                mass: cfg.mass,
                mass_scheme: MassScheme::LatticeRenormalized,
                ..Physics::default()
            };
            let end = EndSpec::new(EndKind::SemiIdeal { theta });
            let evolver = Evolver::new(grid, physics, BoundarySpec::new(end.clone(), end))?;
            let n_steps = (cfg.t_end / evolver.dt()).round() as usize;
            let upper: Vec<[C64; 2]> = grid
                .centers()
                .map(|x| [gaussian(x, cfg.x0, cfg.sigma, cfg.k0), C64::from(0.0)])
                .collect();
            let init = positive_energy_state(&evolver, &upper)?;
            let mut psi = init.field;
            let record = evolver.evolve(&mut psi, n_steps)?;
            record.check_ledger(1e-8)?;
            let tv = tv_distance(&record, &nr, cfg.bin_width, n_bins);
            Ok(Rung {
                c,
                theta,
                tv,
                runtime_s: started.elapsed().as_secs_f64(),
                n_cells,
                n_steps,
                projection_loss: init.projection_loss,
                mass_at_infinity: record.final_survival() / record.initial_norm,
            })
        })
        .collect();
    let rungs = rungs?;
    let monotone = rungs.windows(2).all(|w| w[1].tv <= 1.1 * w[0].tv);
    let final_tv = rungs.last().map_or(f64::NAN, |r| r.tv);
    Ok(LadderReport {
        rungs,
        nr_mass_at_infinity: nr.final_survival() / nr.initial_norm,
        monotone,
        final_tv,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_zero_is_twice_compton() {
        assert_eq!(kappa_from_theta(0.0, 1.0, 1.0, 1.0), 2.0);
        assert_eq!(theta_from_kappa(2.0, 1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn robin_ledger_is_exact() {
        let grid = Grid::new(0.0, 10.0, 500).unwrap();
        let s = PauliSolver::new(
            grid,
            1.0,
            1.0,
            None,
            NrEnd::Robin { kappa: 1.0 },
            NrEnd::Robin { kappa: 2.0 },
            0.01,
        )
        .unwrap();
        let mut phi = PauliField::from_fn(grid, |x| [gaussian(x, 6.0, 0.7, 1.0), C64::from(0.0)]);
        phi.normalize().unwrap();
        for _ in 0..300 {
            let before = phi.norm_sq();
            let (l, r) = s.step(&mut phi);
            assert!(l >= 0.0 && r >= 0.0);
            assert!((before - phi.norm_sq() - l - r).abs() < 1e-14);
        }
        assert!(phi.norm_sq() < 0.9);
    }

    #[test]
    fn walls_conserve_norm_and_spin_decouples() {
        let grid = Grid::new(0.0, 10.0, 400).unwrap();
        let s = PauliSolver::new(grid, 1.0, 1.0, None, NrEnd::Wall, NrEnd::Wall, 0.01).unwrap();
        let mut phi = PauliField::from_fn(grid, |x| [gaussian(x, 5.0, 0.7, 2.0), C64::from(0.0)]);
        phi.normalize().unwrap();
        s.evolve(&mut phi, 1000).unwrap();
        assert!((phi.norm_sq() - 1.0).abs() < 1e-10);
        assert!(phi.values().iter().all(|v| v[1] == C64::from(0.0)));
    }

    #[test]
    fn positive_energy_projection_is_an_eigenstate() {
        let grid = Grid::new(0.0, 12.0, 600).unwrap();
        let physics = Physics {
            c: 50.0,
            mass_scheme: MassScheme::LatticeRenormalized,
            ..Physics::default()
        };
        let ev = Evolver::new(grid, physics, BoundarySpec::walls()).unwrap();
        let upper: Vec<[C64; 2]> =
            grid.centers().map(|x| [gaussian(x, 6.0, 1.0, 1.0), C64::from(0.0)]).collect();
        let init = positive_energy_state(&ev, &upper).unwrap();
        assert!(init.projection_loss >= 0.0 && init.projection_loss < 1e-3);
        let once = init.field.characteristics().to_vec();
        let twice = project_positive(ev.block_rotation().unwrap(), once.clone());
        let diff: f64 = once.iter().flatten().zip(twice.iter().flatten()).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(diff < 1e-24, "{diff}");
        // upper components still carry the packet
        let p = init.field.spinor(300);
        assert!(p[0].norm() > 10.0 * p[3].norm());
    }
}
