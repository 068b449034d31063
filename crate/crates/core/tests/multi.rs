mod common;

use common::{c, packet, right_mover, left_mover};
use dirac_detect::detect::assemble_povm;
use dirac_detect::evolution::{init_state, BoundarySpec, EndKind, EndSpec, Evolver, Grid, Physics, SpinorField, Sweep};
use dirac_detect::multi::{
    joint_collapse, joint_collapse_lagged, joint_multitime, product_povm_check, TwoParticleState,
};
use dirac_detect::spinor::{Spinor, C64};

fn field(grid: Grid, x0: f64, k0: f64, spin: Spinor) -> SpinorField {
    init_state(grid, packet(x0, 0.5, k0, spin)).unwrap().0
}

fn setup() -> (Grid, Evolver) {
    let grid = Grid::new(0.0, 8.0, 64).unwrap();
    let boundary = BoundarySpec::new(EndSpec::new(EndKind::SemiIdeal { theta: 0.4 }), EndSpec::ideal())
        .with_sweep(Sweep { time: 1.0, x_lo: 3.0, x_hi: 4.0 });
    (grid, Evolver::new(grid, Physics::default(), boundary).unwrap())
}

fn entangled(grid: Grid) -> TwoParticleState {
    let a = field(grid, 3.0, 1.0, right_mover());
    let b = field(grid, 5.0, -0.5, left_mover());
    let d = field(grid, 4.0, 0.0, (right_mover() + left_mover() * C64::new(0.0, 1.0)).normalize());
    TwoParticleState::from_terms(&[(c(0.6), a.clone(), b.clone()), (C64::new(0.0, 0.6), b, d.clone()), (c(0.5), d, a)])
        .unwrap()
        .normalized()
        .unwrap()
}

#[test]
fn product_state_gives_independent_outcomes() {
    let (grid, ev) = setup();
    let psi = TwoParticleState::product(field(grid, 3.0, 1.0, right_mover()), field(grid, 5.0, -1.0, left_mover())).unwrap();
    let joint = joint_multitime(&psi, &ev, 200).unwrap();
    let (m1, m2) = (joint.marginal_1(), joint.marginal_2());
    let mut worst: f64 = 0.0;
    for i in 0..m1.len() {
        for j in 0..m2.len() {
            worst = worst.max((joint.mass[(i, j)] - m1[i] * m2[j]).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
    assert!((joint.total() - 1.0).abs() < 1e-12);
}

#[test]
fn marginals_match_single_particle_runs() {
    let (grid, ev) = setup();
    let a = field(grid, 3.0, 1.0, right_mover());
    let b = field(grid, 5.0, -1.0, left_mover());
    let joint = joint_multitime(&TwoParticleState::product(a.clone(), b.clone()).unwrap(), &ev, 200).unwrap();
    for (f, marginal) in [(a, joint.marginal_1()), (b, joint.marginal_2())] {
        let mut psi = f;
        let direct = joint.outcome_masses(&ev.evolve(&mut psi, 200).unwrap());
        for (x, y) in direct.iter().zip(&marginal) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn exchange_transposes_the_joint_distribution() {
    let (grid, ev) = setup();
    let psi = entangled(grid);
    let joint = joint_multitime(&psi, &ev, 200).unwrap();
    let swapped = joint_multitime(&psi.swapped(), &ev, 200).unwrap();
    assert!((&joint.mass - swapped.mass.transpose()).abs().max() < 1e-12);
    assert!(joint.min_mass() > -1e-12);
}

#[test]
fn collapse_agrees_with_multitime_for_any_lag() {
    let (grid, ev) = setup();
    let psi = entangled(grid);
    let reference = joint_multitime(&psi, &ev, 200).unwrap();
    assert!(reference.tv_distance(&joint_collapse(&psi, &ev, 200).unwrap()) < 1e-12);
    for lag in [1, 3, 10] {
        let lagged = joint_collapse_lagged(&psi, &ev, 200, lag).unwrap();
        assert!(reference.tv_distance(&lagged) < 1e-12, "lag {lag}");
    }
}

#[test]
fn far_particle_is_not_detected() {
    let grid = Grid::new(0.0, 40.0, 400).unwrap();
    let ev = Evolver::new(grid, Physics::massless(), BoundarySpec::ideal()).unwrap();
    let near = field(grid, 37.0, 0.0, right_mover());
    let far = field(grid, 20.0, 0.0, right_mover());
    let n_steps = ev.steps_for(8.0).unwrap();
    let joint = joint_multitime(&TwoParticleState::product(near, far).unwrap(), &ev, n_steps).unwrap();
    let inf = joint.infinity();
    assert!(joint.marginal_2()[inf] >= 1.0 - 1e-8);
    assert!(joint.marginal_1()[inf] < 1e-8);
}

#[test]
fn joint_matches_product_povm() {
    let grid = Grid::new(0.0, 4.0, 16).unwrap();
    let physics = Physics { mass: 0.5, ..Physics::default() };
    let boundary = BoundarySpec::ideal();
    let ev = Evolver::new(grid, physics.clone(), boundary.clone()).unwrap();
    let a = init_state(grid, packet(1.5, 0.4, 1.0, right_mover())).unwrap().0;
    let b = init_state(grid, packet(2.5, 0.4, -1.0, left_mover())).unwrap().0;
    let psi = TwoParticleState::from_terms(&[(c(0.8), a.clone(), b.clone()), (c(0.6), b, a)]).unwrap().normalized().unwrap();
    let povm = assemble_povm(&physics, grid, &boundary, 2.0).unwrap();
    let joint = joint_multitime(&psi, &ev, povm.n_steps).unwrap();
    let residual = product_povm_check(&povm, &joint, &psi, 1).unwrap();
    assert!(residual < 1e-10, "{residual}");
}
