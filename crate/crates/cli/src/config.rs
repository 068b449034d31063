//! TOML experiment configuration.

use dirac_detect::evolution::{
    BoundarySpec, EndKind, EndSpec, Evolver, Grid, MassScheme, Physics, Potential, SpinorField,
    Sweep, Worldline,
};
use dirac_detect::nonrel::{gaussian, LimitConfig};
use dirac_detect::spinor::{FourVector, Spinor, C64};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "natural")]
    pub units: String,
    pub seed: Option<u64>,
    pub physics: Option<PhysicsBlock>,
    pub grid: Option<GridBlock>,
    pub boundary: Option<BoundaryBlock>,
    pub initial: Option<InitialBlock>,
    pub run: Option<RunBlock>,
    pub bohm: Option<BohmBlock>,
    pub povm: Option<PovmBlock>,
    pub nonrel: Option<NonrelBlock>,
    pub two_particle: Option<TwoParticleBlock>,
}

fn natural() -> String {
    "natural".into()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    pub hbar: f64,
    pub c: f64,
    pub mass: f64,
    pub k2: f64,
    pub k3: f64,
    /// `[x, V]` samples, linearly interpolated.
    pub potential: Option<Vec<[f64; 2]>>,
    pub mass_scheme: MassScheme,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        let p = Physics::default();
        Self { hbar: p.hbar, c: p.c, mass: p.mass, k2: p.k2, k3: p.k3, potential: None, mass_scheme: p.mass_scheme }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKindName {
    Ideal,
    SemiIdeal,
    Wall,
    Off,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EndBlock {
    pub kind: EndKindName,
    pub theta: Option<f64>,
    /// Detector rapidity along the transverse direction `phi` (ideal ends).
    #[serde(default)]
    pub rapidity: f64,
    #[serde(default)]
    pub phi: f64,
    /// `[t, x]` samples of a moving end.
    pub worldline: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub time: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBlock {
    pub left: EndBlock,
    pub right: EndBlock,
    #[serde(default)]
    pub sweeps: Vec<SweepBlock>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    Gaussian,
}

/// Gaussian packet `spinor * g(x)`; the spinor is either given in the Dirac
/// basis or as weights of the right- and left-moving massless spinors
/// `(1, 0, 0, +-1) / sqrt 2`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default)]
    pub envelope: Envelope,
    pub center: f64,
    /// Standard deviation of `|psi|^2`.
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
    /// `[re, im]` weights.
    pub right: Option<[f64; 2]>,
    pub left: Option<[f64; 2]>,
    pub spinor: Option<[[f64; 2]; 4]>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub t_final: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BohmBlock {
    pub samples: usize,
    /// Number of trajectories whose full path is exported.
    pub keep_paths: usize,
}

impl Default for BohmBlock {
    fn default() -> Self {
        Self { samples: 10_000, keep_paths: 20 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PovmBlock {
    /// Defaults to `run.t_final`.
    pub t_max: Option<f64>,
    /// Random outcome sets compared with a direct run when `[initial]` is given.
    pub random_sets: usize,
}

impl Default for PovmBlock {
    fn default() -> Self {
        Self { t_max: None, random_sets: 20 }
    }
}

/// Overrides of [`LimitConfig`] plus the `c` ladder.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NonrelBlock {
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
    pub kappa: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub x0: Option<f64>,
    pub sigma: Option<f64>,
    pub k0: Option<f64>,
    pub t_end: Option<f64>,
    pub mu: Option<f64>,
    pub bin_width: Option<f64>,
    pub nr_cells: Option<usize>,
    pub nr_steps: Option<usize>,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
}

fn default_ladder() -> Vec<f64> {
    vec![25.0, 50.0, 100.0, 200.0]
}

fn default_tv_tolerance() -> f64 {
    0.05
}

impl NonrelBlock {
    pub fn limit_config(&self) -> LimitConfig {
        let d = LimitConfig::default();
        LimitConfig {
            hbar: self.hbar.unwrap_or(d.hbar),
            mass: self.mass.unwrap_or(d.mass),
            kappa: self.kappa.unwrap_or(d.kappa),
            x_min: self.x_min.unwrap_or(d.x_min),
            x_max: self.x_max.unwrap_or(d.x_max),
            x0: self.x0.unwrap_or(d.x0),
            sigma: self.sigma.unwrap_or(d.sigma),
            k0: self.k0.unwrap_or(d.k0),
            t_end: self.t_end.unwrap_or(d.t_end),
            mu: self.mu.unwrap_or(d.mu),
            bin_width: self.bin_width.unwrap_or(d.bin_width),
            nr_cells: self.nr_cells.unwrap_or(d.nr_cells),
            nr_steps: self.nr_steps.unwrap_or(d.nr_steps),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermBlock {
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
    pub a: InitialBlock,
    pub b: InitialBlock,
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TwoParticleBlock {
    pub terms: Vec<TermBlock>,
    /// Clock offset (in steps) of particle 2 in the collapse cross-check.
    #[serde(default)]
    pub lag: usize,
    /// Also compare with the product POVM (at most 64 cells).
    #[serde(default)]
    pub povm_check: bool,
}

fn complex(v: [f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

fn missing(block: &str) -> CliError {
    CliError::Schema(format!("missing [{block}] block"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if cfg.units != "natural" {
            return Err(CliError::Schema(format!("unsupported units {:?}; only \"natural\" is implemented", cfg.units)));
        }
        Ok(cfg)
    }

    pub fn physics(&self) -> Result<Physics> {
        let b = self.physics.clone().unwrap_or_default();
        let potential = match b.potential {
            Some(samples) => Some(Potential::new(samples.iter().map(|s| (s[0], s[1])).collect())?),
            None => None,
        };
        let physics = Physics {
            hbar: b.hbar,
            c: b.c,
            mass: b.mass,
            k2: b.k2,
            k3: b.k3,
            potential,
            mass_scheme: b.mass_scheme,
        };
        physics.validate()?;
        Ok(physics)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.grid.ok_or_else(|| missing("grid"))?;
        Ok(Grid::new(g.x_min, g.x_max, g.n_cells)?)
    }

    pub fn boundary(&self) -> Result<BoundarySpec> {
        let b = self.boundary.as_ref().ok_or_else(|| missing("boundary"))?;
        let mut spec = BoundarySpec::new(end_spec(&b.left, "left")?, end_spec(&b.right, "right")?);
        for s in &b.sweeps {
            spec = spec.with_sweep(Sweep { time: s.time, x_lo: s.x_lo, x_hi: s.x_hi });
        }
        Ok(spec)
    }

    /// Physics, grid and boundary checked together.
    pub fn evolver(&self) -> Result<Evolver> {
        Ok(Evolver::new(self.grid()?, self.physics()?, self.boundary()?)?)
    }

    pub fn t_final(&self) -> Result<f64> {
        let t = self.run.ok_or_else(|| missing("run"))?.t_final;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CliError::Schema(format!("run.t_final = {t} must be finite and >= 0")));
        }
        Ok(t)
    }

    pub fn initial(&self) -> Result<&InitialBlock> {
        self.initial.as_ref().ok_or_else(|| missing("initial"))
    }
}

fn end_spec(b: &EndBlock, side: &str) -> Result<EndSpec> {
    if b.theta.is_some() != (b.kind == EndKindName::SemiIdeal) {
        return Err(CliError::Schema(format!("boundary.{side}: theta is required for semi_ideal ends and only there")));
    }
    if b.kind != EndKindName::Ideal && (b.rapidity != 0.0 || b.phi != 0.0) {
        return Err(CliError::Schema(format!("boundary.{side}: rapidity applies to ideal ends only")));
    }
    let kind = match b.kind {
        EndKindName::Ideal => EndKind::Ideal { u: FourVector::transverse_velocity(b.rapidity, b.phi) },
        EndKindName::SemiIdeal => EndKind::SemiIdeal { theta: b.theta.unwrap_or_default() },
        EndKindName::Wall => EndKind::Wall,
        EndKindName::Off => EndKind::Off,
    };
    let worldline = match &b.worldline {
        Some(samples) => Some(Worldline::new(samples.iter().map(|s| (s[0], s[1])).collect())?),
        None => None,
    };
    Ok(EndSpec { kind, worldline })
}

impl InitialBlock {
    pub fn spinor(&self) -> Result<Spinor> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(CliError::Schema(format!("initial width {} must be positive", self.width)));
        }
        if let Some(s) = self.spinor {
            if self.right.is_some() || self.left.is_some() {
                return Err(CliError::Schema("give either spinor or right/left weights, not both".into()));
            }
            return Ok(Spinor::new(complex(s[0]), complex(s[1]), complex(s[2]), complex(s[3])));
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = complex(self.right.unwrap_or(if self.left.is_some() { [0.0, 0.0] } else { [1.0, 0.0] }));
        let l = complex(self.left.unwrap_or([0.0, 0.0]));
        Ok(Spinor::new((r + l) * h, C64::from(0.0), C64::from(0.0), (r - l) * h))
    }

    /// `psi(x)` before normalization.
    pub fn profile(&self) -> Result<impl Fn(f64) -> Spinor> {
        let spin = self.spinor()?;
        let (x0, sigma, k0) = (self.center, self.width, self.momentum);
        let Envelope::Gaussian = self.envelope;
        Ok(move |x| spin * gaussian(x, x0, sigma, k0))
    }

    /// Unnormalized sample on the grid.
    pub fn field(&self, grid: Grid) -> Result<SpinorField> {
        Ok(SpinorField::from_fn(grid, self.profile()?))
    }
}
