#![allow(dead_code)]

use dirac_detect::nonrel::gaussian;
use dirac_detect::spinor::{Spinor, C64};

pub fn c(x: f64) -> C64 {
    C64::from(x)
}

pub fn right_mover() -> Spinor {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Spinor::new(c(h), c(0.0), c(0.0), c(h))
}

pub fn left_mover() -> Spinor {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Spinor::new(c(h), c(0.0), c(0.0), c(-h))
}

/// Gaussian packet with `|psi|^2` of standard deviation `sigma`.
pub fn packet(x0: f64, sigma: f64, k0: f64, spin: Spinor) -> impl Fn(f64) -> Spinor {
    move |x| spin * gaussian(x, x0, sigma, k0)
}
