use std::io::{self, Write};

use super::Grid;
use crate::error::{Error, Result};
use crate::spinor::{Spinor, C64};

/// Spinor field on a [`Grid`], stored as characteristic amplitudes
/// `(r1, r2, l1, l2)` per cell (see [`crate::spinor::characteristic_basis`]).
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: Grid,
    pub(crate) amps: Vec<[C64; 4]>,
    pub(crate) steps: usize,
    pub(crate) time: f64,
}

pub(crate) fn to_chars(psi: &Spinor) -> [C64; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        (psi[0] + psi[3]) * h,
        (psi[1] + psi[2]) * h,
        (psi[0] - psi[3]) * h,
        (psi[1] - psi[2]) * h,
    ]
}

pub(crate) fn from_chars(a: &[C64; 4]) -> Spinor {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Spinor::new(
        (a[0] + a[2]) * h,
        (a[1] + a[3]) * h,
        (a[1] - a[3]) * h,
        (a[0] - a[2]) * h,
    )
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, amps: vec![[C64::new(0.0, 0.0); 4]; grid.n_cells], steps: 0, time: 0.0 }
    }

    /// Sample a Dirac-basis spinor function at the cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Spinor) -> Self {
        let amps = grid.centers().map(|x| to_chars(&f(x))).collect();
        Self { grid, amps, steps: 0, time: 0.0 }
    }

    pub fn from_spinors(grid: Grid, values: &[Spinor]) -> Self {
        assert_eq!(values.len(), grid.n_cells, "one spinor per cell");
        Self { grid, amps: values.iter().map(to_chars).collect(), steps: 0, time: 0.0 }
    }

    /// Field given directly by characteristic amplitudes `(r1, r2, l1, l2)`.
    pub fn from_characteristics(grid: Grid, amps: Vec<[C64; 4]>) -> Self {
        assert_eq!(amps.len(), grid.n_cells, "one amplitude set per cell");
        Self { grid, amps, steps: 0, time: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of evolution steps taken since `t = 0`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn characteristics(&self) -> &[[C64; 4]] {
        &self.amps
    }

    /// Dirac-basis value in cell `i`.
    pub fn spinor(&self, i: usize) -> Spinor {
        from_chars(&self.amps[i])
    }

    pub fn spinors(&self) -> Vec<Spinor> {
        self.amps.iter().map(from_chars).collect()
    }

    /// `|psi_i|^2`.
    pub fn density(&self, i: usize) -> f64 {
        self.amps[i].iter().map(|a| a.norm_sqr()).sum()
    }

    /// `(j^0, j^1)` in cell `i`; `j^1 = |right movers|^2 - |left movers|^2`.
    pub fn current(&self, i: usize) -> (f64, f64) {
        let a = &self.amps[i];
        let r = a[0].norm_sqr() + a[1].norm_sqr();
        let l = a[2].norm_sqr() + a[3].norm_sqr();
        (r + l, r - l)
    }

    /// `sum_i |psi_i|^2 dx`.
    pub fn norm_sq(&self) -> f64 {
        (0..self.amps.len()).map(|i| self.density(i)).sum::<f64>() * self.grid.dx()
    }

    /// `<self|other> = sum_i psi_i^dagger phi_i dx`.
    pub fn inner(&self, other: &SpinorField) -> C64 {
        let s: C64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y))
            .sum();
        s * self.grid.dx()
    }

    pub fn scale(&mut self, factor: C64) {
        for cell in &mut self.amps {
            for a in cell.iter_mut() {
                *a *= factor;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &SpinorField, factor: C64) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            for k in 0..4 {
                a[k] += b[k] * factor;
            }
        }
    }

    /// Orthonormal-coordinate vector `sqrt(dx) psi` in the Dirac basis,
    /// laid out as `4 i + component`.
    pub fn to_coefficients(&self) -> Vec<C64> {
        let s = self.grid.dx().sqrt();
        self.amps
            .iter()
            .flat_map(|a| {
                let psi = from_chars(a);
                [psi[0] * s, psi[1] * s, psi[2] * s, psi[3] * s]
            })
            .collect()
    }

    pub fn from_coefficients(grid: Grid, coeffs: &[C64]) -> Self {
        assert_eq!(coeffs.len(), 4 * grid.n_cells);
        let s = 1.0 / grid.dx().sqrt();
        let amps = coeffs
            .chunks_exact(4)
            .map(|c| to_chars(&(Spinor::new(c[0], c[1], c[2], c[3]) * C64::from(s))))
            .collect();
        Self { grid, amps, steps: 0, time: 0.0 }
    }

    /// Restart the clock, e.g. for a conditional run from a later state.
    pub fn with_time_reset(mut self) -> Self {
        self.steps = 0;
        self.time = 0.0;
        self
    }

    /// Snapshot CSV: `x, re/im of the four Dirac components, j0, j1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,re1,im1,re2,im2,re3,im3,re4,im4,j0,j1")?;
        for i in 0..self.grid.n_cells {
            let psi = self.spinor(i);
            let (j0, j1) = self.current(i);
            write!(w, "{:.17e}", self.grid.center(i))?;
            for k in 0..4 {
                write!(w, ",{:.17e},{:.17e}", psi[k].re, psi[k].im)?;
            }
            writeln!(w, ",{j0:.17e},{j1:.17e}")?;
        }
        Ok(())
    }
}

/// Diagnostics from [`init_state`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitReport {
    /// Norm of the sampled function before normalization.
    pub raw_norm: f64,
    /// Probability (after normalization) in the two boundary cells.
    pub boundary_mass: f64,
    pub warnings: Vec<String>,
}

/// Boundary-cell probability above which [`init_state`] warns.
pub const BOUNDARY_MASS_WARN: f64 = 1e-10;

/// Sample `psi0` on the grid and normalize to unit norm.
pub fn init_state(grid: Grid, psi0: impl Fn(f64) -> Spinor) -> Result<(SpinorField, InitReport)> {
    let mut field = SpinorField::from_fn(grid, psi0);
    let raw = field.norm_sq();
    if !(raw > 0.0) || !raw.is_finite() {
        return Err(Error::ZeroNorm);
    }
    field.scale(C64::from(1.0 / raw.sqrt()));
    let dx = grid.dx();
    let boundary_mass = (field.density(0) + field.density(grid.n_cells - 1)) * dx;
    let mut warnings = Vec::new();
    if boundary_mass > BOUNDARY_MASS_WARN {
        let msg = format!(
            "initial state has probability {boundary_mass:.3e} in the boundary cells; \
             it should be concentrated inside the domain"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok((field, InitReport { raw_norm: raw.sqrt(), boundary_mass, warnings }))
}
