use std::time::Instant;

use dirac_detect::bohm::{hitting_statistics, integrate_all, sample_initial, write_trajectories_csv, FieldHistory, NODE_DENSITY};
use dirac_detect::detect::{
    assemble_povm, check_povm, detection_distribution, COMPLETENESS_TOL, MIN_EIGENVALUE_TOL,
    SEMIGROUP_TOL,
};
use dirac_detect::evolution::{init_state, Evolver, InitReport, SpinorField, LEDGER_TOL};
use dirac_detect::multi::{joint_collapse_lagged, joint_multitime, product_povm_check, TwoParticleState};
use dirac_detect::nonrel::limit_experiment;
use dirac_detect::spinor::C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Joint distributions from the two evaluation paths must agree this well.
pub const CROSS_PATH_TOL: f64 = 1e-8;
pub const PRODUCT_POVM_TOL: f64 = 1e-7;
/// Largest `|<psi|E(B)|psi> - direct|` accepted by `povm-check`.
pub const DIRECT_RUN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Evolve,
    Detect,
    Bohm,
    PovmCheck,
    NonrelCompare,
    TwoParticle,
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub scheme: Value,
    pub warnings: Vec<String>,
}

impl Artifacts {
    fn add(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|source| CliError::Io { path: name.into(), source })?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value).map_err(std::io::Error::other)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig, seed: u64) -> Result<Artifacts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match command {
        Command::Evolve => evolve(cfg),
        Command::Detect => detect(cfg),
        Command::Bohm => bohm(cfg, &mut rng),
        Command::PovmCheck => povm_check(cfg, &mut rng),
        Command::NonrelCompare => nonrel_compare(cfg),
        Command::TwoParticle => two_particle(cfg, &mut rng),
    }
}

pub fn tolerances() -> Value {
    json!({
        "ledger": LEDGER_TOL,
        "povm_min_eigenvalue": MIN_EIGENVALUE_TOL,
        "povm_completeness": COMPLETENESS_TOL,
        "semigroup": SEMIGROUP_TOL,
        "bohm_node_density": NODE_DENSITY,
        "cross_path": CROSS_PATH_TOL,
        "product_povm": PRODUCT_POVM_TOL,
        "povm_direct_run": DIRECT_RUN_TOL,
    })
}

fn scheme(ev: &Evolver, n_steps: usize) -> Value {
    let g = ev.grid();
    json!({
        "name": "characteristic split step: exact light-cone transport, pointwise rotation",
        "mass_scheme": ev.physics().mass_scheme,
        "n_cells": g.n_cells,
        "dx": g.dx(),
        "dt": ev.dt(),
        "n_steps": n_steps,
        "moving_boundaries": "sampled per step; sub-step worldline curvature ignored (first-order boundary accuracy)",
    })
}

fn initial_state(ev: &Evolver, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<SpinorField> {
    let (psi, InitReport { warnings, .. }) = init_state(*ev.grid(), cfg.initial()?.profile()?)?;
    art.warnings.extend(warnings);
    Ok(psi)
}

fn evolve(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let ev = cfg.evolver()?;
    let n_steps = ev.steps_for(cfg.t_final()?)?;
    let mut art = Artifacts { scheme: scheme(&ev, n_steps), ..Default::default() };
    let mut psi = initial_state(&ev, cfg, &mut art)?;
    let record = ev.evolve(&mut psi, n_steps)?;
    record.check_ledger(LEDGER_TOL * record.initial_norm.max(1.0))?;
    art.add("record.csv", |w| record.write_csv(w))?;
    art.add("snapshot.csv", |w| psi.write_csv(w))?;
    Ok(art)
}

fn detect(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let ev = cfg.evolver()?;
    let n_steps = ev.steps_for(cfg.t_final()?)?;
    let mut art = Artifacts { scheme: scheme(&ev, n_steps), ..Default::default() };
    let mut psi = initial_state(&ev, cfg, &mut art)?;
    let dist = detection_distribution(&ev.evolve(&mut psi, n_steps)?)?;
    art.add("distribution.csv", |w| dist.write_csv(w))?;
    art.add_json("summary.json", &dist.summary())?;
    if !dist.atoms.is_empty() {
        art.add_json("atoms.json", &dist.atoms)?;
    }
    Ok(art)
}

fn bohm(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Artifacts> {
    let ev = cfg.evolver()?;
    let n_steps = ev.steps_for(cfg.t_final()?)?;
    let opts = cfg.bohm.unwrap_or_default();
    let mut art = Artifacts { scheme: scheme(&ev, n_steps), ..Default::default() };
    let mut psi = initial_state(&ev, cfg, &mut art)?;
    let starts = sample_initial(&psi, rng.gen(), opts.samples)?;
    let (history, record) = FieldHistory::record(&ev, &mut psi, n_steps)?;
    let dist = detection_distribution(&record)?;
    let trajectories = integrate_all(&history, &starts, opts.keep_paths)?;
    let stats = hitting_statistics(&trajectories, &dist);
    if stats.clamped_fraction > 0.0 {
        let msg = format!("{:.3e} of velocity queries hit a node and were clamped", stats.clamped_fraction);
        log::warn!("{msg}");
        art.warnings.push(msg);
    }
    art.add("trajectories.csv", |w| write_trajectories_csv(&trajectories[..opts.keep_paths.min(trajectories.len())], w))?;
    art.add_json("statistics.json", &stats)?;
    art.add("distribution.csv", |w| dist.write_csv(w))?;
    Ok(art)
}

#[derive(Serialize)]
struct PovmOutput {
    #[serde(flatten)]
    report: dirac_detect::detect::PovmReport,
    t_max: f64,
    n_steps: usize,
    /// Largest deviation from a direct run over random outcome sets.
    direct_run_residual: Option<f64>,
}

fn povm_check(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Artifacts> {
    let ev = cfg.evolver()?;
    let opts = cfg.povm.unwrap_or_default();
    let t_max = match opts.t_max {
        Some(t) => t,
        None => cfg.t_final()?,
    };
    let povm = assemble_povm(ev.physics(), *ev.grid(), ev.boundary(), t_max)?;
    let report = check_povm(&povm)?;
    let mut art = Artifacts { scheme: scheme(&ev, povm.n_steps), ..Default::default() };
    let direct_run_residual = if cfg.initial.is_some() {
        let psi0 = initial_state(&ev, cfg, &mut art)?;
        let mut psi = psi0.clone();
        let record = ev.evolve(&mut psi, povm.n_steps)?;
        let direct: Vec<f64> = povm.outcomes.iter().map(|o| record.outcome_mass(&o.label)).collect();
        let mut worst: f64 = (povm.probability_inf(&psi0) - record.final_survival() - record.escaped()).abs();
        let mut idx: Vec<usize> = (0..povm.outcomes.len()).collect();
        for _ in 0..opts.random_sets {
            idx.shuffle(rng);
            let k = rng.gen_range(0..=idx.len());
            let set = &idx[..k];
            let p = povm.probability(set, &psi0);
            let d: f64 = set.iter().map(|&i| direct[i]).sum();
            worst = worst.max((p - d).abs());
        }
        Some(worst)
    } else {
        None
    };
    let passed = report.passed && direct_run_residual.map_or(true, |r| r <= DIRECT_RUN_TOL);
    let out = PovmOutput { report, t_max, n_steps: povm.n_steps, direct_run_residual };
    if !passed {
        return Err(CliError::Check(format!(
            "POVM validation failed: min eigenvalue {:.3e}, completeness {:.3e}, semigroup {:?}, direct run {:?}",
            out.report.min_eigenvalue, out.report.completeness_residual, out.report.semigroup_residual, out.direct_run_residual
        )));
    }
    art.add_json("povm_report.json", &out)?;
    Ok(art)
}

fn nonrel_compare(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let block = cfg.nonrel.as_ref().ok_or_else(|| CliError::Schema("missing [nonrel] block".into()))?;
    let limit = block.limit_config();
    let report = limit_experiment(&limit, &block.ladder)?;
    let passed = report.passed(block.tv_tolerance);
    let mut art = Artifacts {
        scheme: json!({
            "dirac": "characteristic split step, lattice-renormalized mass, positive-energy initial state",
            "schroedinger": "Crank-Nicolson with Robin ends",
            "limit": limit,
        }),
        ..Default::default()
    };
    art.warnings.extend(report.warnings.iter().cloned());
    if !passed {
        let msg = format!(
            "ladder did not reach TV <= {} monotonically (final TV {:.3e})",
            block.tv_tolerance, report.final_tv
        );
        log::warn!("{msg}");
        art.warnings.push(msg);
    }
    art.add("ladder.csv", |w| report.write_csv(w))?;
    art.add_json("ladder.json", &json!({ "report": report, "tv_tolerance": block.tv_tolerance, "passed": passed }))?;
    Ok(art)
}

fn two_particle(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Artifacts> {
    let block = cfg.two_particle.as_ref().ok_or_else(|| CliError::Schema("missing [two_particle] block".into()))?;
    if block.terms.is_empty() {
        return Err(CliError::Schema("two_particle.terms is empty".into()));
    }
    let ev = cfg.evolver()?;
    let grid = *ev.grid();
    let n_steps = ev.steps_for(cfg.t_final()?)?;
    let terms = block
        .terms
        .iter()
        .map(|t| Ok((C64::new(t.amplitude[0], t.amplitude[1]), t.a.field(grid)?, t.b.field(grid)?)))
        .collect::<Result<Vec<_>>>()?;
    let psi = TwoParticleState::from_terms(&terms)?.normalized()?;
    let joint = joint_multitime(&psi, &ev, n_steps)?;
    let collapse = joint_collapse_lagged(&psi, &ev, n_steps, block.lag)?;
    let cross_path_tv = joint.tv_distance(&collapse);
    if cross_path_tv > CROSS_PATH_TOL {
        return Err(CliError::Check(format!("multi-time and collapse joints differ: TV {cross_path_tv:.3e}")));
    }
    let product_povm_residual = if block.povm_check {
        let povm = assemble_povm(ev.physics(), grid, ev.boundary(), n_steps as f64 * ev.dt())?;
        let r = product_povm_check(&povm, &joint, &psi, rng.gen())?;
        if r > PRODUCT_POVM_TOL {
            return Err(CliError::Check(format!("product POVM residual {r:.3e}")));
        }
        Some(r)
    } else {
        None
    };
    let mut art = Artifacts { scheme: scheme(&ev, n_steps), ..Default::default() };
    art.scheme["schmidt_rank"] = json!(psi.rank());
    art.scheme["lag"] = json!(block.lag);
    art.add("joint.csv", |w| joint.write_csv(w, 1e-16))?;
    art.add("joint_summary.json", |w| joint.write_summary_json(w))?;
    art.add_json(
        "cross_check.json",
        &json!({
            "cross_path_tv": cross_path_tv,
            "product_povm_residual": product_povm_residual,
            "total_mass": joint.total(),
            "min_mass": joint.min_mass(),
        }),
    )?;
    Ok(art)
}

/// Metadata written next to the outputs.
pub fn metadata(command: Command, cfg: &ExperimentConfig, source: &str, seed: u64, art: &Artifacts, wall_clock: Instant) -> Value {
    json!({
        "tool": "dirac-detect",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "units": cfg.units,
        "config": cfg,
        "config_source": source,
        "scheme": art.scheme,
        "tolerances": tolerances(),
        "outputs": art.files.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "warnings": art.warnings,
        "wall_clock_s": wall_clock.elapsed().as_secs_f64(),
    })
}
