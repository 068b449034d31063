//! Two non-interacting particles sharing one detecting boundary.
//!
//! The state is kept in Schmidt form `sum_r lambda_r a_r (x) b_r`; each
//! factor evolves on its own. The joint detection distribution is computed
//! twice: directly from the tensor-product evolution (multi-time formula)
//! and by sequential collapse on a simultaneity foliation.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::detect::PovmSet;
use crate::error::{Error, Result};
use crate::evolution::{
    AmplitudeTrace, DetectionRecord, Evolver, Observer, OutcomeLabel, SpinorField, StepOutput, SweepOutput,
    TraceEvent,
};
use crate::spinor::{Side, C64};

pub const RANK_CAP: usize = 16;

/// Schmidt coefficients below this fraction of the largest are dropped.
const SCHMIDT_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct TwoParticleState {
    pub lambdas: Vec<f64>,
    pub a: Vec<SpinorField>,
    pub b: Vec<SpinorField>,
}

fn orthonormalize(fields: &[SpinorField]) -> (Vec<SpinorField>, DMatrix<C64>) {
    // fields[k] = sum_i q[i] r[(i, k)]
    let mut q: Vec<SpinorField> = Vec::new();
    let mut r = DMatrix::<C64>::zeros(fields.len(), fields.len());
    for (k, f) in fields.iter().enumerate() {
        let mut v = f.clone();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = qi.inner(&v);
                r[(i, k)] += c;
                v.add_scaled(qi, -c);
            }
        }
        let n = v.norm_sq().sqrt();
        if n > 1e-13 * f.norm_sq().sqrt().max(1e-300) {
            r[(q.len(), k)] = C64::from(n);
            v.scale(C64::from(1.0 / n));
            q.push(v);
        }
    }
    let rows = q.len();
    (q, r.rows(0, rows).into_owned())
}

impl TwoParticleState {
    /// Schmidt form of `sum_k c_k a_k (x) b_k`.
    pub fn from_terms(terms: &[(C64, SpinorField, SpinorField)]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::ZeroNorm);
        }
        let grid = *terms[0].1.grid();
        if terms.iter().any(|t| t.1.grid() != &grid || t.2.grid() != &grid) {
            return Err(Error::InvalidConfig("all factors must share one grid".into()));
        }
        let a: Vec<SpinorField> = terms.iter().map(|t| t.1.clone().with_time_reset()).collect();
        let b: Vec<SpinorField> = terms.iter().map(|t| t.2.clone().with_time_reset()).collect();
        let (qa, ra) = orthonormalize(&a);
        let (qb, rb) = orthonormalize(&b);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            terms.len(),
            terms.iter().map(|t| t.0),
        ));
        let coeff = &ra * d * rb.transpose();
        let svd = coeff.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let mut out = TwoParticleState { lambdas: Vec::new(), a: Vec::new(), b: Vec::new() };
        for k in order {
            let s = svd.singular_values[k];
            if s <= SCHMIDT_CUTOFF * smax {
                continue;
            }
            let mut fa = SpinorField::zeros(grid);
            for (i, q) in qa.iter().enumerate() {
                fa.add_scaled(q, u[(i, k)]);
            }
            let mut fb = SpinorField::zeros(grid);
            for (j, q) in qb.iter().enumerate() {
                fb.add_scaled(q, v_t[(k, j)]);
            }
            out.lambdas.push(s);
            out.a.push(fa);
            out.b.push(fb);
        }
        if out.rank() > RANK_CAP {
            return Err(Error::RankCap { rank: out.rank(), cap: RANK_CAP });
        }
        Ok(out)
    }

    pub fn product(a: SpinorField, b: SpinorField) -> Result<Self> {
        Self::from_terms(&[(C64::from(1.0), a, b)])
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.lambdas.iter().map(|l| l * l).sum()
    }

    /// Rescaled to unit norm.
    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sq().sqrt();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        self.lambdas.iter_mut().for_each(|l| *l /= n);
        Ok(self)
    }

    /// Exchange the particle labels.
    pub fn swapped(&self) -> Self {
        Self { lambdas: self.lambdas.clone(), a: self.b.clone(), b: self.a.clone() }
    }
}

/// Joint outcome of one particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Detected { label: OutcomeLabel },
    Infinity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub dt: f64,
    /// Shared outcome list of both particles; the last entry is `Infinity`.
    pub outcomes: Vec<Outcome>,
    /// Sweep times by sweep number.
    pub sweep_times: Vec<f64>,
    /// `mass[(o1, o2)]`.
    pub mass: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Marginal {
    pub left: f64,
    pub right: f64,
    pub sweeps: f64,
    pub infinity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub both_detected: f64,
    pub mean_t1: f64,
    pub mean_t2: f64,
    pub covariance: f64,
}

#[derive(Serialize)]
struct JointSummary<'a> {
    total_mass: f64,
    marginal_1: &'a Marginal,
    marginal_2: &'a Marginal,
    correlation: &'a CorrelationSummary,
}

impl JointDistribution {
    pub fn infinity(&self) -> usize {
        self.outcomes.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.mass.sum()
    }

    pub fn min_mass(&self) -> f64 {
        self.mass.min()
    }

    pub fn marginal_1(&self) -> Vec<f64> {
        (0..self.mass.nrows()).map(|i| self.mass.row(i).sum()).collect()
    }

    pub fn marginal_2(&self) -> Vec<f64> {
        (0..self.mass.ncols()).map(|j| self.mass.column(j).sum()).collect()
    }

    /// Masses of a one-particle run on this outcome list, `inf` last.
    pub fn outcome_masses(&self, record: &DetectionRecord) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes.len()];
        for (o, slot) in self.outcomes.iter().zip(out.iter_mut()) {
            *slot = match o {
                Outcome::Detected { label } => record.outcome_mass(label),
                Outcome::Infinity => record.final_survival() + record.escaped(),
            };
        }
        out
    }

    /// Half the summed absolute difference; outcome lists must match.
    pub fn tv_distance(&self, other: &JointDistribution) -> f64 {
        assert_eq!(self.outcomes, other.outcomes, "outcome lists differ");
        (&self.mass - &other.mass).abs().sum() / 2.0
    }

    /// Detection time of an outcome.
    pub fn time(&self, o: usize) -> Option<f64> {
        match self.outcomes[o] {
            Outcome::Detected { label: OutcomeLabel::Boundary { step, .. } } => {
                Some((step as f64 - 0.5) * self.dt)
            }
            Outcome::Detected { label: OutcomeLabel::Sweep { sweep, .. } } => {
                Some(self.sweep_times[sweep])
            }
            Outcome::Infinity => None,
        }
    }

    fn summarize(&self, marginal: &[f64]) -> Marginal {
        let mut m = Marginal { left: 0.0, right: 0.0, sweeps: 0.0, infinity: 0.0 };
        for (o, p) in self.outcomes.iter().zip(marginal) {
            match o {
                Outcome::Detected { label: OutcomeLabel::Boundary { side: Side::Left, .. } } => m.left += p,
                Outcome::Detected { label: OutcomeLabel::Boundary { side: Side::Right, .. } } => m.right += p,
                Outcome::Detected { label: OutcomeLabel::Sweep { .. } } => m.sweeps += p,
                Outcome::Infinity => m.infinity += p,
            }
        }
        m
    }

    pub fn correlation(&self) -> CorrelationSummary {
        let (mut p, mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.outcomes.len() {
            let Some(t1) = self.time(i) else { continue };
            for j in 0..self.outcomes.len() {
                let Some(t2) = self.time(j) else { continue };
                let m = self.mass[(i, j)];
                p += m;
                s1 += m * t1;
                s2 += m * t2;
                s12 += m * t1 * t2;
            }
        }
        if p > 0.0 {
            let (m1, m2) = (s1 / p, s2 / p);
            CorrelationSummary { both_detected: p, mean_t1: m1, mean_t2: m2, covariance: s12 / p - m1 * m2 }
        } else {
            CorrelationSummary { both_detected: 0.0, mean_t1: f64::NAN, mean_t2: f64::NAN, covariance: f64::NAN }
        }
    }

    fn describe(&self, o: usize) -> (String, &'static str) {
        let t = self.time(o).map_or_else(|| "inf".to_string(), |t| format!("{t:.17e}"));
        let b = match self.outcomes[o] {
            Outcome::Detected { label: OutcomeLabel::Boundary { side: Side::Left, .. } } => "left",
            Outcome::Detected { label: OutcomeLabel::Boundary { side: Side::Right, .. } } => "right",
            Outcome::Detected { label: OutcomeLabel::Sweep { .. } } => "sweep",
            Outcome::Infinity => "inf",
        };
        (t, b)
    }

    /// Sparse CSV `t1, b1, t2, b2, mass` of entries with `|mass| > threshold`.
    pub fn write_csv<W: Write>(&self, mut w: W, threshold: f64) -> io::Result<()> {
        writeln!(w, "t1,b1,t2,b2,mass")?;
        for i in 0..self.outcomes.len() {
            for j in 0..self.outcomes.len() {
                let m = self.mass[(i, j)];
                if m.abs() > threshold {
                    let (t1, b1) = self.describe(i);
                    let (t2, b2) = self.describe(j);
                    writeln!(w, "{t1},{b1},{t2},{b2},{m:.17e}")?;
                }
            }
        }
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> io::Result<()> {
        let m1 = self.summarize(&self.marginal_1());
        let m2 = self.summarize(&self.marginal_2());
        let corr = self.correlation();
        let s = JointSummary { total_mass: self.total(), marginal_1: &m1, marginal_2: &m2, correlation: &corr };
        serde_json::to_writer_pretty(w, &s).map_err(io::Error::other)
    }
}

/// Per-factor run: the amplitude trace, states after every slot, and the
/// final state. Slot `2 j` is "after step `j`", slot `2 j + 1` "after the
/// sweeps at step `j`".
struct FactorRun {
    events: Vec<TraceEvent>,
    snapshots: Vec<SpinorField>,
    last: SpinorField,
}

struct SlotRecorder {
    trace: AmplitudeTrace,
    snapshots: Vec<SpinorField>,
}

impl Observer for SlotRecorder {
    fn on_sweep(&mut self, sweep: usize, out: &SweepOutput, state: &SpinorField) {
        self.trace.on_sweep(sweep, out, state);
        if !self.snapshots.is_empty() {
            self.snapshots[2 * state.steps() + 1] = state.clone();
        }
    }

    fn on_step(&mut self, out: &StepOutput, state: &SpinorField) {
        self.trace.on_step(out, state);
        if !self.snapshots.is_empty() {
            self.snapshots[2 * state.steps()] = state.clone();
            self.snapshots[2 * state.steps() + 1] = state.clone();
        }
    }
}

fn slot(label: &OutcomeLabel, sweep_steps: &[usize]) -> usize {
    match label {
        OutcomeLabel::Boundary { step, .. } => 2 * step,
        OutcomeLabel::Sweep { sweep, .. } => 2 * sweep_steps[*sweep] + 1,
    }
}

fn run_factor(evolver: &Evolver, psi: &SpinorField, n_steps: usize, keep: bool) -> Result<FactorRun> {
    let mut state = psi.clone().with_time_reset();
    let slots = if keep { 2 * n_steps + 2 } else { 0 };
    let mut rec = SlotRecorder { trace: AmplitudeTrace::default(), snapshots: vec![state.clone(); slots] };
    evolver.evolve_observed(&mut state, n_steps, &mut rec)?;
    Ok(FactorRun { events: rec.trace.events, snapshots: rec.snapshots, last: state })
}

/// Bilinear form `a^dagger M b` of an event.
fn form(evolver: &Evolver, e: &TraceEvent, a: &[C64], b: &[C64]) -> C64 {
    let m = evolver.metric_matrix(e.metric, a.len());
    let mut s = C64::from(0.0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += a[i].conj() * m[(i, j)] * b[j];
        }
    }
    s
}

struct Layout {
    outcomes: Vec<Outcome>,
    index: HashMap<OutcomeLabel, usize>,
    sweep_steps: Vec<usize>,
    sweep_times: Vec<f64>,
}

impl Layout {
    fn new(evolver: &Evolver, events: &[TraceEvent]) -> Self {
        let mut outcomes = Vec::new();
        let mut index = HashMap::new();
        for e in events {
            let detecting = match e.label {
                OutcomeLabel::Boundary { side, .. } => evolver.is_detecting(side),
                OutcomeLabel::Sweep { .. } => true,
            };
            if detecting && !index.contains_key(&e.label) {
                index.insert(e.label, outcomes.len());
                outcomes.push(Outcome::Detected { label: e.label });
            }
        }
        outcomes.push(Outcome::Infinity);
        let dt = evolver.dt();
        let sweep_steps: Vec<usize> =
            evolver.boundary().sweeps.iter().map(|s| (s.time / dt).round() as usize).collect();
        let sweep_times = sweep_steps.iter().map(|&k| k as f64 * dt).collect();
        Self { outcomes, index, sweep_steps, sweep_times }
    }

    fn of(&self, label: &OutcomeLabel) -> usize {
        self.index.get(label).copied().unwrap_or(self.outcomes.len() - 1)
    }
}

fn check_state(psi: &TwoParticleState, evolver: &Evolver) -> Result<()> {
    if psi.rank() > RANK_CAP {
        return Err(Error::RankCap { rank: psi.rank(), cap: RANK_CAP });
    }
    if psi.rank() == 0 {
        return Err(Error::ZeroNorm);
    }
    if psi.a.iter().chain(&psi.b).any(|f| f.grid() != evolver.grid()) {
        return Err(Error::InvalidConfig("factor grid differs from evolver grid".into()));
    }
    Ok(())
}

/// `G[o]_{rs} = <f_r|E_o|f_s>` for every outcome of one particle.
fn gram_per_outcome(evolver: &Evolver, layout: &Layout, runs: &[FactorRun]) -> Vec<DMatrix<C64>> {
    let rank = runs.len();
    let mut g = vec![DMatrix::<C64>::zeros(rank, rank); layout.outcomes.len()];
    for k in 0..runs[0].events.len() {
        let e = &runs[0].events[k];
        let o = layout.of(&e.label);
        for r in 0..rank {
            for s in 0..rank {
                g[o][(r, s)] += form(evolver, e, &runs[r].events[k].amps, &runs[s].events[k].amps);
            }
        }
    }
    let inf = layout.outcomes.len() - 1;
    for r in 0..rank {
        for s in 0..rank {
            g[inf][(r, s)] += runs[r].last.inner(&runs[s].last);
        }
    }
    g
}

/// Joint distribution from the tensor-product (multi-time) evolution.
pub fn joint_multitime(psi: &TwoParticleState, evolver: &Evolver, n_steps: usize) -> Result<JointDistribution> {
    check_state(psi, evolver)?;
    let ra: Vec<FactorRun> = psi.a.par_iter().map(|f| run_factor(evolver, f, n_steps, false)).collect::<Result<_>>()?;
    let rb: Vec<FactorRun> = psi.b.par_iter().map(|f| run_factor(evolver, f, n_steps, false)).collect::<Result<_>>()?;
    let layout = Layout::new(evolver, &ra[0].events);
    let g1 = gram_per_outcome(evolver, &layout, &ra);
    let g2 = gram_per_outcome(evolver, &layout, &rb);
    let n = layout.outcomes.len();
    let rank = psi.rank();
    let mut mass = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::from(0.0);
            for r in 0..rank {
                for q in 0..rank {
                    s += psi.lambdas[r] * psi.lambdas[q] * g1[i][(r, q)] * g2[j][(r, q)];
                }
            }
            mass[(i, j)] = s.re;
        }
    }
    Ok(JointDistribution { dt: evolver.dt(), outcomes: layout.outcomes, sweep_times: layout.sweep_times, mass })
}

/// Joint distribution by sequential collapse on the simultaneity foliation.
pub fn joint_collapse(psi: &TwoParticleState, evolver: &Evolver, n_steps: usize) -> Result<JointDistribution> {
    joint_collapse_lagged(psi, evolver, n_steps, 0)
}

/// As [`joint_collapse`], with particle 2's clock running `lag` steps
/// behind particle 1 on each leaf of the foliation.
pub fn joint_collapse_lagged(
    psi: &TwoParticleState,
    evolver: &Evolver,
    n_steps: usize,
    lag: usize,
) -> Result<JointDistribution> {
    check_state(psi, evolver)?;
    let runs = [
        psi.a.par_iter().map(|f| run_factor(evolver, f, n_steps, true)).collect::<Result<Vec<_>>>()?,
        psi.b.par_iter().map(|f| run_factor(evolver, f, n_steps, true)).collect::<Result<Vec<_>>>()?,
    ];
    let layout = Layout::new(evolver, &runs[0][0].events);
    let n = layout.outcomes.len();
    let inf = n - 1;
    let rank = psi.rank();
    let lam = &psi.lambdas;
    let mut mass = DMatrix::zeros(n, n);
    let max_slot = 2 * n_steps + 1;
    let offsets = [0, 2 * lag];

    // events of each particle grouped by slot
    let mut by_slot: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); max_slot + 1], vec![Vec::new(); max_slot + 1]];
    for p in 0..2 {
        for (k, e) in runs[p][0].events.iter().enumerate() {
            by_slot[p][slot(&e.label, &layout.sweep_steps)].push(k);
        }
    }
    let local = |p: usize, g: usize| g.checked_sub(offsets[p]).filter(|&s| s <= max_slot);

    for g in 0..=max_slot + offsets[1] {
        let s1 = local(0, g);
        let s2 = local(1, g);
        let ev1: &[usize] = s1.map_or(&[], |s| &by_slot[0][s]);
        let ev2: &[usize] = s2.map_or(&[], |s| &by_slot[1][s]);

        for &k1 in ev1 {
            for &k2 in ev2 {
                let e1 = &runs[0][0].events[k1];
                let e2 = &runs[1][0].events[k2];
                let mut s = C64::from(0.0);
                for r in 0..rank {
                    for q in 0..rank {
                        s += lam[r] * lam[q]
                            * form(evolver, e1, &runs[0][r].events[k1].amps, &runs[0][q].events[k1].amps)
                            * form(evolver, e2, &runs[1][r].events[k2].amps, &runs[1][q].events[k2].amps);
                    }
                }
                mass[(layout.of(&e1.label), layout.of(&e2.label))] += s.re;
            }
        }

        for p in 0..2 {
            let other = 1 - p;
            let events = if p == 0 { ev1 } else { ev2 };
            // the other particle's position on this leaf; before its first slot it is at the start
            let other_slot = g.saturating_sub(offsets[other]).min(max_slot);
            let other_started = g >= offsets[other];
            for &k in events {
                let e = &runs[p][0].events[k];
                let d = e.amps.len();
                let weight: f64 = (0..rank)
                    .map(|r| lam[r] * lam[r] * runs[p][r].events[k].amps.iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum();
                if weight < 1e-300 {
                    continue;
                }
                let metric = evolver.metric_matrix(e.metric, d);
                let o_self = layout.of(&e.label);
                // collapsed states of the other particle, one per retained amplitude index
                let snap_slot = if other_started { other_slot } else { 0 };
                let chis: Vec<SpinorField> = (0..d)
                    .map(|idx| {
                        let base = &runs[other][0].snapshots[snap_slot];
                        let mut chi = base.clone();
                        chi.scale(C64::from(0.0));
                        for r in 0..rank {
                            let coef = runs[p][r].events[k].amps[idx] * lam[r];
                            chi.add_scaled(&runs[other][r].snapshots[snap_slot], coef);
                        }
                        chi
                    })
                    .collect();
                let remaining = n_steps - chis[0].steps();
                let cont: Vec<FactorRun> = chis
                    .par_iter()
                    .map(|c| {
                        let mut st = c.clone();
                        let mut tr = AmplitudeTrace::default();
                        evolver.evolve_observed(&mut st, remaining, &mut tr)?;
                        Ok(FactorRun { events: tr.events, snapshots: Vec::new(), last: st })
                    })
                    .collect::<Result<_>>()?;
                let mut add = |o_other: usize, v: f64| {
                    if p == 0 {
                        mass[(o_self, o_other)] += v;
                    } else {
                        mass[(o_other, o_self)] += v;
                    }
                };
                for (ke, e2) in cont[0].events.iter().enumerate() {
                    // events at the collapse slot itself were accounted as simultaneous
                    if slot(&e2.label, &layout.sweep_steps) <= snap_slot && other_started {
                        continue;
                    }
                    let mut s = C64::from(0.0);
                    for i in 0..d {
                        for j in 0..d {
                            s += metric[(i, j)] * form(evolver, e2, &cont[i].events[ke].amps, &cont[j].events[ke].amps);
                        }
                    }
                    add(layout.of(&e2.label), s.re);
                }
                let mut s = C64::from(0.0);
                for i in 0..d {
                    for j in 0..d {
                        s += metric[(i, j)] * cont[i].last.inner(&cont[j].last);
                    }
                }
                add(inf, s.re);
            }
        }
    }

    let mut s = C64::from(0.0);
    for r in 0..rank {
        for q in 0..rank {
            s += lam[r] * lam[q] * runs[0][r].last.inner(&runs[0][q].last) * runs[1][r].last.inner(&runs[1][q].last);
        }
    }
    mass[(inf, inf)] += s.re;
    Ok(JointDistribution { dt: evolver.dt(), outcomes: layout.outcomes, sweep_times: layout.sweep_times, mass })
}

/// `max |<psi|E(B1) (x) E(B2)|psi> - joint(B1 x B2)|` over 20 random
/// product sets plus the two degenerate checks (`B2` = everything and
/// `B1 = B2 = {inf}`).
pub fn product_povm_check(
    povm: &PovmSet,
    joint: &JointDistribution,
    psi: &TwoParticleState,
    seed: u64,
) -> Result<f64> {
    if povm.grid.n_cells > 64 {
        return Err(Error::DimensionCap { dim: 4 * povm.grid.n_cells, cap: 256 });
    }
    let n = joint.outcomes.len();
    let inf = n - 1;
    // joint outcome index -> operator
    let mut ops: Vec<DMatrix<C64>> = Vec::with_capacity(n);
    for o in &joint.outcomes {
        match o {
            Outcome::Detected { label } => {
                let k = povm.position(label).ok_or_else(|| {
                    Error::InvalidConfig(format!("POVM has no outcome {label:?}"))
                })?;
                ops.push(povm.outcomes[k].operator());
            }
            Outcome::Infinity => ops.push(povm.e_inf.clone()),
        }
    }
    let coeffs = |fs: &[SpinorField]| -> Vec<nalgebra::DVector<C64>> {
        fs.iter().map(|f| nalgebra::DVector::from_vec(f.to_coefficients())).collect()
    };
    let ca = coeffs(&psi.a);
    let cb = coeffs(&psi.b);
    let rank = psi.rank();
    let gram = |set: &[usize], c: &[nalgebra::DVector<C64>]| -> DMatrix<C64> {
        let dim = c[0].len();
        let mut e = DMatrix::<C64>::zeros(dim, dim);
        for &k in set {
            e += &ops[k];
        }
        DMatrix::from_fn(rank, rank, |r, s| (c[r].adjoint() * &e * &c[s])[(0, 0)])
    };
    let check = |b1: &[usize], b2: &[usize]| -> f64 {
        let g1 = gram(b1, &ca);
        let g2 = gram(b2, &cb);
        let mut s = C64::from(0.0);
        for r in 0..rank {
            for q in 0..rank {
                s += psi.lambdas[r] * psi.lambdas[q] * g1[(r, q)] * g2[(r, q)];
            }
        }
        let j: f64 = b1.iter().flat_map(|&i| b2.iter().map(move |&k| (i, k))).map(|(i, k)| joint.mass[(i, k)]).sum();
        (s.re - j).abs()
    };
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = check(&[inf], &[inf]).max(check(&all[..n / 2], &all));
    for _ in 0..20 {
        let b1: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        let b2: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        worst = worst.max(check(&b1, &b2));
    }
    Ok(worst)
}
