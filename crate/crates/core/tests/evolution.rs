mod common;

use common::{c, left_mover, packet, right_mover};
use dirac_detect::evolution::{
    init_state, sweep_region, BoundarySpec, EndKind, EndSpec, Evolver, Grid, Physics, Sweep,
    Worldline,
};
use dirac_detect::spinor::Side;
use dirac_detect::Error;

#[test]
fn massless_transport_is_bit_exact() {
    let grid = Grid::new(0.0, 20.0, 400).unwrap();
    let ev = Evolver::new(grid, Physics::massless(), BoundarySpec::walls()).unwrap();
    let (psi0, _) = init_state(grid, packet(6.0, 0.7, 2.0, right_mover())).unwrap();
    let mut psi = psi0.clone();
    let shift = 100;
    ev.evolve(&mut psi, shift).unwrap();
    let before = psi0.characteristics();
    let after = psi.characteristics();
    for i in 0..grid.n_cells - shift {
        assert_eq!(after[i + shift][0], before[i][0]);
        assert_eq!(after[i + shift][1], before[i][1]);
    }
}

#[test]
fn ideal_ends_detect_everything() {
    let grid = Grid::new(0.0, 20.0, 400).unwrap();
    let ev = Evolver::new(grid, Physics::massless(), BoundarySpec::ideal()).unwrap();
    let spin = (right_mover() * c(0.6) + left_mover() * c(0.8)).normalize();
    let (mut psi, _) = init_state(grid, packet(10.0, 1.0, 0.0, spin)).unwrap();
    let record = ev.evolve(&mut psi, 500).unwrap();
    assert!(record.total_detected() >= 1.0 - 1e-10, "{}", record.total_detected());
    assert!((record.left.total() - 0.64).abs() < 1e-10);
    assert!((record.right.total() - 0.36).abs() < 1e-10);
}

#[test]
fn walls_conserve_norm() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let physics = Physics { mass: 1.3, k2: 0.4, ..Physics::default() };
    let ev = Evolver::new(grid, physics, BoundarySpec::walls()).unwrap();
    let (mut psi, _) = init_state(grid, packet(4.0, 0.8, 1.5, right_mover())).unwrap();
    let record = ev.evolve(&mut psi, 5000).unwrap();
    for s in &record.survival {
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }
}

#[test]
fn evolution_is_a_semigroup() {
    let grid = Grid::new(0.0, 12.0, 240).unwrap();
    let physics = Physics { mass: 0.8, ..Physics::default() };
    let boundary = BoundarySpec::new(EndSpec::new(EndKind::SemiIdeal { theta: 0.5 }), EndSpec::ideal());
    let ev = Evolver::new(grid, physics, boundary).unwrap();
    let (psi0, _) = init_state(grid, packet(6.0, 1.0, -1.0, right_mover())).unwrap();
    let mut split = psi0.clone();
    ev.evolve(&mut split, 130).unwrap();
    ev.evolve(&mut split, 270).unwrap();
    let mut whole = psi0;
    ev.evolve(&mut whole, 400).unwrap();
    let mut diff = whole.clone();
    diff.add_scaled(&split, c(-1.0));
    assert!(diff.norm_sq().sqrt() < 1e-13);
    assert_eq!(whole.steps(), split.steps());
}

#[test]
fn survival_matches_cumulative_flux() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let physics = Physics { mass: 1.0, ..Physics::default() };
    let boundary = BoundarySpec::new(EndSpec::ideal(), EndSpec::new(EndKind::SemiIdeal { theta: 1.0 }));
    let ev = Evolver::new(grid, physics, boundary).unwrap();
    let (mut psi, _) = init_state(grid, packet(5.0, 1.0, 1.0, right_mover())).unwrap();
    let record = ev.evolve(&mut psi, 3000).unwrap();
    let mut flux = 0.0;
    for k in 0..record.n_steps() {
        flux += record.left.flux[k] + record.right.flux[k];
        assert!((record.survival[k] - (1.0 - flux)).abs() < 1e-10);
        assert!(record.left.flux[k] >= -1e-15 && record.right.flux[k] >= -1e-15);
    }
}

#[test]
fn whole_domain_sweep_takes_the_norm() {
    let grid = Grid::new(0.0, 10.0, 100).unwrap();
    let (mut psi, _) = init_state(grid, packet(5.0, 1.0, 0.5, right_mover())).unwrap();
    let norm = psi.norm_sq();
    let out = sweep_region(&mut psi, grid.x_min, grid.x_max).unwrap();
    assert_eq!(out.cells.len(), grid.n_cells);
    assert!((out.total() - norm).abs() < 1e-14);
    assert_eq!(psi.norm_sq(), 0.0);
}

#[test]
fn empty_sweep_changes_nothing() {
    let grid = Grid::new(0.0, 10.0, 100).unwrap();
    let (psi0, _) = init_state(grid, packet(2.0, 0.3, 0.0, right_mover())).unwrap();
    let mut psi = psi0.clone();
    sweep_region(&mut psi, 0.1, 0.1).unwrap();
    assert_eq!(psi, psi0);
    let far = sweep_region(&mut psi, 8.0, 9.0).unwrap();
    assert!(far.total() < 1e-30);
    assert!(matches!(sweep_region(&mut psi, -1.0, 2.0), Err(Error::RegionOutsideDomain { .. })));
}

#[test]
fn disjoint_sweeps_commute() {
    let grid = Grid::new(0.0, 10.0, 100).unwrap();
    let (psi0, _) = init_state(grid, packet(5.0, 1.5, 0.5, right_mover())).unwrap();
    let mut ab = psi0.clone();
    let a1 = sweep_region(&mut ab, 2.0, 4.0).unwrap();
    let b1 = sweep_region(&mut ab, 6.0, 7.5).unwrap();
    let mut ba = psi0;
    let b2 = sweep_region(&mut ba, 6.0, 7.5).unwrap();
    let a2 = sweep_region(&mut ba, 2.0, 4.0).unwrap();
    assert_eq!(ab, ba);
    assert_eq!(a1.weights, a2.weights);
    assert_eq!(b1.weights, b2.weights);
}

#[test]
fn scheduled_sweep_enters_the_ledger() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let boundary = BoundarySpec::ideal().with_sweep(Sweep { time: 1.0, x_lo: 4.0, x_hi: 6.0 });
    let ev = Evolver::new(grid, Physics::default(), boundary).unwrap();
    let (mut psi, _) = init_state(grid, packet(5.0, 1.0, 0.0, right_mover())).unwrap();
    let record = ev.evolve(&mut psi, 600).unwrap();
    assert_eq!(record.sweeps.len(), 1);
    assert!(record.sweep_total() > 0.1);
    assert!(record.ledger_residual() < 1e-12);
}

#[test]
fn constant_worldline_matches_static_end() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let physics = Physics { mass: 1.0, ..Physics::default() };
    let (psi0, _) = init_state(grid, packet(6.0, 0.8, 1.0, right_mover())).unwrap();
    let fixed = Evolver::new(grid, physics.clone(), BoundarySpec::ideal()).unwrap();
    let wl = Worldline::new(vec![(0.0, 10.0), (20.0, 10.0)]).unwrap();
    let moving = Evolver::new(grid, physics, BoundarySpec::new(EndSpec::ideal(), EndSpec::moving(wl))).unwrap();
    let (mut a, mut b) = (psi0.clone(), psi0);
    let ra = fixed.evolve(&mut a, 800).unwrap();
    let rb = moving.evolve(&mut b, 800).unwrap();
    for side in [Side::Left, Side::Right] {
        for (x, y) in ra.end(side).flux.iter().zip(&rb.end(side).flux) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let mut diff = a;
    diff.add_scaled(&b, c(-1.0));
    assert!(diff.norm_sq() < 1e-24);
}

#[test]
fn receding_end_sees_doppler_stretched_density() {
    // x_b(t) = 12 + t/2: the packet point x reaches the end at t = 2 (12 - x)
    let (x_b0, v) = (12.0, 0.5);
    let grid = Grid::new(0.0, 40.0, 4000).unwrap();
    let wl = Worldline::uniform(x_b0, v, 30.0);
    let ev = Evolver::new(grid, Physics::massless(), BoundarySpec::new(EndSpec::ideal(), EndSpec::moving(wl))).unwrap();
    let (psi0, _) = init_state(grid, packet(5.0, 0.5, 0.0, right_mover())).unwrap();
    let mut psi = psi0.clone();
    let record = ev.evolve(&mut psi, 2500).unwrap();
    let dx = grid.dx();
    let initial_right_of = |x: f64| -> f64 {
        (0..grid.n_cells).filter(|&i| grid.center(i) >= x).map(|i| psi0.density(i) * dx).sum()
    };
    let mut detected = 0.0;
    let mut worst: f64 = 0.0;
    let mut mean_t = 0.0;
    for (k, t) in record.times().into_iter().enumerate() {
        let f = record.right.flux[k];
        detected += f;
        mean_t += f * (t - record.dt / 2.0);
        let exact = initial_right_of(x_b0 - (1.0 - v) * t);
        worst = worst.max((detected - exact).abs());
    }
    assert!(worst < 0.02, "cdf error {worst}");
    assert!((detected - 1.0).abs() < 1e-10);
    assert!((mean_t - 2.0 * (x_b0 - 5.0)).abs() < 0.05, "mean {mean_t}");
}

#[test]
fn superluminal_and_non_ideal_moving_ends_are_rejected() {
    let grid = Grid::new(0.0, 20.0, 100).unwrap();
    let fast = EndSpec::moving(Worldline::uniform(10.0, 1.5, 5.0));
    let err = Evolver::new(grid, Physics::default(), BoundarySpec::new(EndSpec::ideal(), fast)).unwrap_err();
    assert!(matches!(err, Error::Superluminal { .. }));
    let semi = EndSpec {
        kind: EndKind::SemiIdeal { theta: 1.0 },
        worldline: Some(Worldline::uniform(10.0, 0.2, 5.0)),
    };
    let err = Evolver::new(grid, Physics::default(), BoundarySpec::new(EndSpec::ideal(), semi)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}
