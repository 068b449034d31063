use dirac_detect::nonrel::{
    gaussian, kappa_from_theta, limit_experiment, theta_from_kappa, KappaTheta, LimitConfig,
    NrEnd, PauliField, PauliSolver,
};
use dirac_detect::evolution::Grid;
use dirac_detect::spinor::C64;
use dirac_detect::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn kappa_theta_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let theta = rng.gen_range(-5.0..5.0);
        let (m, c, hbar) = (rng.gen_range(0.1..3.0), rng.gen_range(0.5..50.0), rng.gen_range(0.5..2.0));
        let kappa = kappa_from_theta(theta, m, c, hbar);
        assert!(kappa > 0.0);
        assert!((theta_from_kappa(kappa, m, c, hbar) - theta).abs() < 1e-9 * (1.0 + theta.abs()));
        let kt = KappaTheta::from_kappa(kappa, m, c, hbar);
        assert!((KappaTheta::from_theta(kt.theta, m, c, hbar).kappa - kappa).abs() < 1e-9 * kappa);
    }
    assert!((kappa_from_theta(0.0, 1.5, 2.0, 0.5) - 2.0 * 1.5 * 2.0 / 0.5).abs() < 1e-12);
}

#[test]
fn theta_over_c_approaches_the_limit() {
    let (kappa, m, hbar) = (1.5, 1.0, 1.0);
    let limit = m / (hbar * kappa);
    let mut last = f64::INFINITY;
    for c in [25.0, 50.0, 100.0, 200.0, 1e4] {
        let err = (theta_from_kappa(kappa, m, c, hbar) / c - limit).abs();
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-8);
}

/// Probability absorbed at the right end by a packet with mean wave number `k`.
fn absorbed(kappa: f64, k: f64) -> f64 {
    let grid = Grid::new(0.0, 40.0, 2000).unwrap();
    let robin = NrEnd::Robin { kappa };
    let solver = PauliSolver::new(grid, 1.0, 1.0, None, robin, robin, 0.005).unwrap();
    let mut phi = PauliField::from_fn(grid, |x| [gaussian(x, 15.0, 4.0, k), C64::from(0.0)]);
    phi.normalize().unwrap();
    let n_steps = (60.0 / k / solver.dt()).round() as usize;
    solver.evolve(&mut phi, n_steps).unwrap().right.total()
}

#[test]
fn absorption_peaks_when_k_matches_kappa() {
    let kappa = 2.0;
    let at = absorbed(kappa, kappa);
    let slow = absorbed(kappa, kappa / 4.0);
    let fast = absorbed(kappa, 4.0 * kappa);
    assert!(at > 0.95, "{at}");
    assert!(at > slow && at > fast, "{slow} {at} {fast}");
}

#[test]
fn solver_rejects_bad_parameters() {
    let grid = Grid::new(0.0, 1.0, 10).unwrap();
    let bad = PauliSolver::new(grid, 1.0, 1.0, None, NrEnd::Robin { kappa: -1.0 }, NrEnd::Wall, 0.01);
    assert!(matches!(bad, Err(Error::Physics(_))));
    let bad = PauliSolver::new(grid, 1.0, 0.0, None, NrEnd::Wall, NrEnd::Wall, 0.01);
    assert!(matches!(bad, Err(Error::Physics(_))));
}

#[test]
fn ladder_needs_three_rungs() {
    let err = limit_experiment(&LimitConfig::default(), &[25.0, 50.0]).unwrap_err();
    assert!(matches!(err, Error::LadderTooShort(2)));
}
