mod common;

use common::{packet, right_mover};
use dirac_detect::bohm::{
    hitting_statistics, integrate_all, integrate_trajectory, sample_initial, velocity_field,
    FieldHistory, Terminal,
};
use dirac_detect::detect::detection_distribution;
use dirac_detect::evolution::{init_state, BoundarySpec, Evolver, Grid, Physics, SpinorField, Sweep};
use dirac_detect::spinor::{Side, Spinor, C64};

#[test]
fn uniform_density_samples_pass_ks() {
    let grid = Grid::new(0.0, 2.0, 64).unwrap();
    let psi = SpinorField::from_fn(grid, |_| Spinor::new(C64::from(0.5), C64::from(0.0), C64::from(0.0), C64::from(0.0)));
    let n = 20_000;
    let mut xs = sample_initial(&psi, 3, n).unwrap();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x / 2.0;
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.36 / (n as f64).sqrt(), "{ks}");
    assert_ne!(xs, sample_initial(&psi, 4, n).unwrap());
}

#[test]
fn massless_hit_times_are_the_push_forward_of_the_initial_density() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let ev = Evolver::new(grid, Physics::massless(), BoundarySpec::ideal()).unwrap();
    let (mut psi, _) = init_state(grid, packet(4.0, 0.5, 1.0, right_mover())).unwrap();
    let starts = sample_initial(&psi, 11, 20_000).unwrap();
    let (hist, record) = FieldHistory::record(&ev, &mut psi, 240).unwrap();
    let trajectories = integrate_all(&hist, &starts, 0).unwrap();
    for (x0, tr) in starts.iter().zip(&trajectories) {
        match tr.terminal {
            Terminal::Hit { t, side: Side::Right, detected: true } => assert!((t - (10.0 - x0)).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }
    let stats = hitting_statistics(&trajectories, &detection_distribution(&record).unwrap());
    assert_eq!(stats.n_detected, stats.n);
    assert!(stats.ks < 0.015, "{}", stats.ks);
}

#[test]
fn massive_packet_statistics_follow_the_flux() {
    let grid = Grid::new(0.0, 12.0, 480).unwrap();
    let ev = Evolver::new(grid, Physics::default(), BoundarySpec::ideal()).unwrap();
    let (mut psi, _) = init_state(grid, packet(6.0, 1.0, 1.0, right_mover())).unwrap();
    let starts = sample_initial(&psi, 5, 10_000).unwrap();
    let (hist, record) = FieldHistory::record(&ev, &mut psi, 960).unwrap();
    let trajectories = integrate_all(&hist, &starts, 0).unwrap();
    let stats = hitting_statistics(&trajectories, &detection_distribution(&record).unwrap());
    assert!(stats.ks < 0.03, "{}", stats.ks);
    assert!(stats.survived_within_3se, "{stats:?}");
    assert!(stats.max_speed <= 1.0 + 1e-12);
}

#[test]
fn velocity_at_an_ideal_end_is_outward_c() {
    let grid = Grid::new(0.0, 12.0, 240).unwrap();
    let ev = Evolver::new(grid, Physics::default(), BoundarySpec::ideal()).unwrap();
    let (mut psi, _) = init_state(grid, packet(8.0, 1.0, 0.0, right_mover())).unwrap();
    let (hist, _) = FieldHistory::record(&ev, &mut psi, 200).unwrap();
    assert!((velocity_field(&hist, 3.0, 12.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((velocity_field(&hist, 3.0, 0.0).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn walls_never_detect() {
    let grid = Grid::new(0.0, 8.0, 160).unwrap();
    let ev = Evolver::new(grid, Physics::default(), BoundarySpec::walls()).unwrap();
    let (mut psi, _) = init_state(grid, packet(4.0, 0.7, 2.0, right_mover())).unwrap();
    let starts = sample_initial(&psi, 2, 500).unwrap();
    let (hist, _) = FieldHistory::record(&ev, &mut psi, 800).unwrap();
    for tr in integrate_all(&hist, &starts, 0).unwrap() {
        assert_eq!(tr.terminal, Terminal::Survived);
    }
}

#[test]
fn sweep_catches_trajectories_inside_the_region() {
    let grid = Grid::new(0.0, 10.0, 200).unwrap();
    let boundary = BoundarySpec::ideal().with_sweep(Sweep { time: 0.0, x_lo: 0.0, x_hi: 5.0 });
    let ev = Evolver::new(grid, Physics::massless(), boundary).unwrap();
    let (mut psi, _) = init_state(grid, packet(5.0, 1.0, 0.0, right_mover())).unwrap();
    let (hist, record) = FieldHistory::record(&ev, &mut psi, 240).unwrap();
    for x0 in [1.0, 4.9] {
        let tr = integrate_trajectory(&hist, x0, false).unwrap();
        assert_eq!(tr.terminal, Terminal::Swept { t: 0.0, sweep: 0 });
    }
    let tr = integrate_trajectory(&hist, 6.0, true).unwrap();
    assert_eq!(tr.detection_time().map(|t| (t - 4.0).abs() < 1e-9), Some(true));
    assert!(tr.path.windows(2).all(|w| w[1].1 >= w[0].1));
    let dist = detection_distribution(&record).unwrap();
    assert!((dist.atom_total() - 0.5).abs() < 0.02);
}
