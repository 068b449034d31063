//! Spin-space algebra in the Dirac (standard) representation.
//!
//! Everything here is exact finite-dimensional linear algebra on `C^4`:
//! the Dirac matrices, the probability current of a spinor, the
//! two-dimensional boundary subspaces selected by absorbing boundary
//! conditions, spinor boosts, and the map from outgoing to incoming
//! characteristic amplitudes that the solver applies at a boundary.
//!
//! Conventions: metric signature `(+,-,-,-)`. Four-vectors such as the
//! detector velocity `u` are stored with contravariant components. Surface
//! normals are stored as [`Covector`]s, i.e. with covariant components, so
//! that the outward normal of the plane `x^1 = 0` bounding `{x^1 < 0}` is
//! `n_mu = (0, 1, 0, 0)` and `n_mu j^mu` is the outward flux.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type SpinMatrix = Matrix4<C64>;
pub type Spinor = Vector4<C64>;
pub type Mat2 = Matrix2<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used when validating unit / orthogonality conditions on inputs.
pub const VECTOR_TOL: f64 = 1e-10;

/// Projector Frobenius distance below which two subspaces are considered equal.
pub const SUBSPACE_TOL: f64 = 1e-10;

/// Pauli matrices `sigma_1, sigma_2, sigma_3`.
pub fn pauli() -> [Mat2; 3] {
    [
        Mat2::new(ZERO, ONE, ONE, ZERO),
        Mat2::new(ZERO, -I, I, ZERO),
        Mat2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

/// `a . sigma` for a real 3-vector.
pub fn sigma_dot(a: [f64; 3]) -> Mat2 {
    let s = pauli();
    s[0] * C64::from(a[0]) + s[1] * C64::from(a[1]) + s[2] * C64::from(a[2])
}

fn block(tl: Mat2, tr: Mat2, bl: Mat2, br: Mat2) -> SpinMatrix {
    let mut m = SpinMatrix::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&tl);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&tr);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&bl);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&br);
    m
}

/// The Dirac-basis matrices.
#[derive(Clone, Debug)]
pub struct DiracMatrices {
    pub alpha: [SpinMatrix; 3],
    pub beta: SpinMatrix,
    /// `gamma[0] = beta`, `gamma[i] = beta * alpha[i-1]`.
    pub gamma: [SpinMatrix; 4],
}

pub fn dirac_matrices() -> DiracMatrices {
    let s = pauli();
    let id = Mat2::identity();
    let z = Mat2::zeros();
    let beta = block(id, z, z, -id);
    let alpha = [
        block(z, s[0], s[0], z),
        block(z, s[1], s[1], z),
        block(z, s[2], s[2], z),
    ];
    let gamma = [
        beta,
        block(z, s[0], -s[0], z),
        block(z, s[1], -s[1], z),
        block(z, s[2], -s[2], z),
    ];
    DiracMatrices { alpha, beta, gamma }
}

/// `a . alpha` for a real 3-vector.
pub fn alpha_dot(a: [f64; 3]) -> SpinMatrix {
    let d = dirac_matrices();
    d.alpha[0] * C64::from(a[0]) + d.alpha[1] * C64::from(a[1]) + d.alpha[2] * C64::from(a[2])
}

/// Contravariant four-vector `(v^0, v^1, v^2, v^3)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FourVector(pub [f64; 4]);

impl FourVector {
    pub const REST: FourVector = FourVector([1.0, 0.0, 0.0, 0.0]);

    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self([t, x, y, z])
    }

    /// Minkowski product with signature `(+,-,-,-)`.
    pub fn dot(&self, other: &FourVector) -> f64 {
        let (a, b) = (self.0, other.0);
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    }

    pub fn spatial(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    /// Detector velocity with rapidity `xi` along the unit transverse
    /// direction `(0, cos phi, sin phi)` in the `x^2 x^3` plane.
    pub fn transverse_velocity(xi: f64, phi: f64) -> Self {
        let (ch, sh) = (xi.cosh(), xi.sinh());
        Self([ch, 0.0, sh * phi.cos(), sh * phi.sin()])
    }

    /// `v_mu gamma^mu`.
    pub fn slash(&self) -> SpinMatrix {
        let g = dirac_matrices().gamma;
        g[0] * C64::from(self.0[0])
            - g[1] * C64::from(self.0[1])
            - g[2] * C64::from(self.0[2])
            - g[3] * C64::from(self.0[3])
    }

    pub fn transform(&self, lambda: &Matrix4<f64>) -> Self {
        let v = lambda * nalgebra::Vector4::from(self.0);
        Self([v[0], v[1], v[2], v[3]])
    }

    pub fn is_future_timelike_unit(&self) -> bool {
        (self.dot(self) - 1.0).abs() < VECTOR_TOL && self.0[0] > 0.0
    }
}

/// Covariant four-vector `(n_0, n_1, n_2, n_3)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Covector(pub [f64; 4]);

impl Covector {
    /// Outward normal covector of a static surface with outward spatial normal `n`.
    pub fn spatial_normal(n: [f64; 3]) -> Self {
        Self([0.0, n[0], n[1], n[2]])
    }

    /// Outward normal of the right end of a 1+1 domain whose boundary moves
    /// with velocity `v` (in units of `c`); `outward = -1` gives the left end.
    pub fn moving_normal(beta: f64, outward: f64) -> Self {
        let g = 1.0 / (1.0 - beta * beta).sqrt();
        Self([-outward * beta * g, outward * g, 0.0, 0.0])
    }

    /// `eta^{mu nu} n_mu n_nu`.
    pub fn norm_sq(&self) -> f64 {
        let a = self.0;
        a[0] * a[0] - a[1] * a[1] - a[2] * a[2] - a[3] * a[3]
    }

    /// `n_mu v^mu`.
    pub fn contract(&self, v: &FourVector) -> f64 {
        self.0.iter().zip(v.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// `n_mu gamma^mu`.
    pub fn slash(&self) -> SpinMatrix {
        let g = dirac_matrices().gamma;
        g.iter()
            .zip(self.0.iter())
            .fold(SpinMatrix::zeros(), |acc, (gm, &c)| acc + gm * C64::from(c))
    }

    /// Covectors transform with the inverse transpose of the vector map.
    pub fn transform(&self, lambda: &Matrix4<f64>) -> Self {
        let inv_t = lambda
            .try_inverse()
            .expect("Lorentz transformations are invertible")
            .transpose();
        let v = inv_t * nalgebra::Vector4::from(self.0);
        Self([v[0], v[1], v[2], v[3]])
    }
}

/// Probability current `j = (|psi|^2, psi^dagger alpha psi)`.
pub fn current(psi: &Spinor) -> FourVector {
    let d = dirac_matrices();
    let j0 = psi.norm_squared();
    let ji = |a: &SpinMatrix| (psi.adjoint() * a * psi)[(0, 0)].re;
    FourVector([j0, ji(&d.alpha[0]), ji(&d.alpha[1]), ji(&d.alpha[2])])
}

/// A two-dimensional subspace of spin space imposed as a boundary condition.
#[derive(Clone, Debug)]
pub struct BoundarySubspace {
    basis: [Spinor; 2],
    projector: SpinMatrix,
}

impl BoundarySubspace {
    /// Build from two linearly independent spinors (orthonormalized here).
    pub fn from_spanning(a: Spinor, b: Spinor) -> Result<Self> {
        let na = a.norm();
        if na < 1e-12 {
            return Err(Error::DegenerateBoundary("zero spanning vector".into()));
        }
        let e1 = a / C64::from(na);
        let b_perp = b - e1 * e1.dotc(&b);
        let nb = b_perp.norm();
        if nb < 1e-12 {
            return Err(Error::DegenerateBoundary("spanning vectors are parallel".into()));
        }
        let e2 = b_perp / C64::from(nb);
        let projector = e1 * e1.adjoint() + e2 * e2.adjoint();
        Ok(Self { basis: [e1, e2], projector })
    }

    pub fn basis(&self) -> &[Spinor; 2] {
        &self.basis
    }

    pub fn projector(&self) -> &SpinMatrix {
        &self.projector
    }

    /// Frobenius distance between the orthogonal projectors.
    pub fn distance(&self, other: &BoundarySubspace) -> f64 {
        (self.projector - other.projector).norm()
    }

    pub fn same_as(&self, other: &BoundarySubspace) -> bool {
        self.distance(other) < SUBSPACE_TOL
    }

    /// Image under a (not necessarily unitary) spin transformation.
    pub fn transformed(&self, s: &SpinMatrix) -> Result<Self> {
        Self::from_spanning(s * self.basis[0], s * self.basis[1])
    }

    /// Subspace `{(chi, rho (n.sigma) chi)}`; `rho` real positive gives the
    /// semi-ideal family, `rho = 1` the ideal one, `rho = i` the bag wall.
    pub fn lower_map(n: [f64; 3], rho: C64) -> Self {
        let ns = sigma_dot(n);
        let scale = C64::from(1.0 / (1.0 + rho.norm_sqr()).sqrt());
        let make = |chi: Vector2<C64>| {
            let low = ns * chi * rho;
            Spinor::new(chi[0], chi[1], low[0], low[1]) * scale
        };
        let e1 = make(Vector2::new(ONE, ZERO));
        let e2 = make(Vector2::new(ZERO, ONE));
        let projector = e1 * e1.adjoint() + e2 * e2.adjoint();
        Self { basis: [e1, e2], projector }
    }
}

fn check_unit3(n: [f64; 3]) -> Result<()> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > VECTOR_TOL {
        return Err(Error::InvalidVector(format!("normal {n:?} is not a unit vector")));
    }
    Ok(())
}

/// Kernel of `n_slash - u_slash` for a static surface with outward unit normal `n`.
pub fn ideal_subspace(n: [f64; 3], u: FourVector) -> Result<BoundarySubspace> {
    check_unit3(n)?;
    ideal_subspace_covariant(Covector::spatial_normal(n), u)
}

/// Kernel of `n_slash - u_slash` for an arbitrary spacelike unit normal
/// covector `n` and a future-timelike unit `u` tangent to the surface.
pub fn ideal_subspace_covariant(n: Covector, u: FourVector) -> Result<BoundarySubspace> {
    if (n.norm_sq() + 1.0).abs() > VECTOR_TOL {
        return Err(Error::InvalidVector(format!("normal {:?} is not spacelike unit", n.0)));
    }
    if !u.is_future_timelike_unit() {
        return Err(Error::InvalidVector(format!("u = {:?} is not future-timelike unit", u.0)));
    }
    if n.contract(&u).abs() > VECTOR_TOL {
        return Err(Error::InvalidVector(format!(
            "u = {:?} is not tangent to the surface with normal {:?}",
            u.0, n.0
        )));
    }
    let a = n.slash() - u.slash();
    let gram = a.adjoint() * a;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues[order[1]] > 1e-10 * scale || eig.eigenvalues[order[2]] < 1e-8 * scale {
        return Err(Error::DegenerateBoundary(format!(
            "kernel of n_slash - u_slash is not two-dimensional (spectrum {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let col = |k: usize| -> Spinor { eig.eigenvectors.column(k).into_owned() };
    BoundarySubspace::from_spanning(col(order[0]), col(order[1]))
}

/// `rho(theta) = sqrt(1 + theta^2) - theta`, evaluated without cancellation.
pub fn semiideal_ratio(theta: f64) -> f64 {
    let root = (1.0 + theta * theta).sqrt();
    if theta > 0.0 {
        1.0 / (root + theta)
    } else {
        root - theta
    }
}

/// `+sqrt(1 + theta^2)` eigenspace of `n.alpha + theta beta`.
pub fn semiideal_subspace(n: [f64; 3], theta: f64) -> Result<BoundarySubspace> {
    check_unit3(n)?;
    Ok(BoundarySubspace::lower_map(n, C64::from(semiideal_ratio(theta))))
}

/// Zero-flux bag condition `-i n_slash psi = psi`.
pub fn wall_subspace(n: [f64; 3]) -> Result<BoundarySubspace> {
    check_unit3(n)?;
    Ok(BoundarySubspace::lower_map(n, I))
}

/// Lorentz boost with rapidity `xi` along `axis` (1, 2 or 3):
/// `x'^0 = x^0 cosh xi + x^a sinh xi`, `x'^a = x^0 sinh xi + x^a cosh xi`.
pub fn lorentz_boost(xi: f64, axis: usize) -> Matrix4<f64> {
    assert!((1..=3).contains(&axis), "boost axis must be 1, 2 or 3");
    let mut m = Matrix4::identity();
    m[(0, 0)] = xi.cosh();
    m[(axis, axis)] = xi.cosh();
    m[(0, axis)] = xi.sinh();
    m[(axis, 0)] = xi.sinh();
    m
}

/// Spin representative `S = exp(xi alpha_axis / 2)` of [`lorentz_boost`],
/// satisfying `S^-1 gamma^mu S = Lambda^mu_nu gamma^nu`.
pub fn boost_spinor(xi: f64, axis: usize) -> SpinMatrix {
    assert!((1..=3).contains(&axis), "boost axis must be 1, 2 or 3");
    let a = dirac_matrices().alpha[axis - 1];
    SpinMatrix::identity() * C64::from((xi / 2.0).cosh()) + a * C64::from((xi / 2.0).sinh())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of the outward normal along `x^1`.
    pub fn outward(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn normal(self) -> [f64; 3] {
        [self.outward(), 0.0, 0.0]
    }
}

/// Eigenbasis of `alpha^1`: right movers `(r1, r2)` with eigenvalue `+1`
/// followed by left movers `(l1, l2)` with eigenvalue `-1`. `r_k` and `l_k`
/// share the Dirac-basis components `{1,4}` (k = 1) or `{2,3}` (k = 2).
pub fn characteristic_basis() -> [Spinor; 4] {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    [
        Spinor::new(h, ZERO, ZERO, h),
        Spinor::new(ZERO, h, h, ZERO),
        Spinor::new(h, ZERO, ZERO, -h),
        Spinor::new(ZERO, h, -h, ZERO),
    ]
}

/// Unitary `T` with `T psi` = characteristic amplitudes `(r1, r2, l1, l2)`.
pub fn to_characteristic() -> SpinMatrix {
    let b = characteristic_basis();
    SpinMatrix::from_rows(&[
        b[0].adjoint(),
        b[1].adjoint(),
        b[2].adjoint(),
        b[3].adjoint(),
    ])
}

/// Linear map from outgoing to incoming characteristic amplitudes of
/// spinors in `bs` at the given end. At the right end the outgoing
/// amplitudes are the right movers.
pub fn reflection_map(bs: &BoundarySubspace, side: Side) -> Result<Mat2> {
    let chars = characteristic_basis();
    let (out, inc) = match side {
        Side::Right => ([chars[0], chars[1]], [chars[2], chars[3]]),
        Side::Left => ([chars[2], chars[3]], [chars[0], chars[1]]),
    };
    let coords = |vs: &[Spinor; 2]| {
        Mat2::from_fn(|i, k| vs[i].dotc(&bs.basis[k]))
    };
    let o = coords(&out);
    let inc_coords = coords(&inc);
    if o.determinant().norm() < 1e-10 {
        return Err(Error::DegenerateBoundary(
            "subspace meets the incoming characteristic subspace".into(),
        ));
    }
    let o_inv = o.try_inverse().ok_or_else(|| {
        Error::DegenerateBoundary("outgoing projection not invertible".into())
    })?;
    Ok(inc_coords * o_inv)
}

/// Largest singular value of a 2x2 complex matrix.
pub fn operator_norm(m: &Mat2) -> f64 {
    m.singular_values()[0]
}

/// `|| (a.sigma)(b.sigma) - (a.b) I - i (a x b).sigma ||_F`.
pub fn pauli_identity_residual(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let lhs = sigma_dot(a) * sigma_dot(b);
    let rhs = Mat2::identity() * C64::from(dot) + sigma_dot(cross) * I;
    (lhs - rhs).norm()
}
