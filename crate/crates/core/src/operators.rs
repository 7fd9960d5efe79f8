//! Dense 2×2 complex operators, pure qubit states and the two state metrics
//! used throughout the crate: the fidelity `⟨ψ|ρ|ψ⟩` against a pure target and
//! the Bures angle `arccos √F`.
//!
//! Basis ordering is `(|↑⟩, |↓⟩)`: index 0 is spin up, index 1 is spin down,
//! and `σ_z = diag(+1, −1)`. Every other module relies on this convention.

use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};

/// Absolute tolerance for exact algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Absolute tolerance applied to states produced by numerical solvers.
pub const SOLVER_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// A dense 2×2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Operator2 {
    pub m: [[Complex64; 2]; 2],
}

impl fmt::Debug for Operator2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

impl Operator2 {
    pub const fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub const fn zero() -> Self {
        Self::new([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn identity() -> Self {
        Self::new([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn sigma_x() -> Self {
        Self::new([[ZERO, ONE], [ONE, ZERO]])
    }

    pub const fn sigma_y() -> Self {
        Self::new([[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]])
    }

    pub const fn sigma_z() -> Self {
        Self::new([[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]])
    }

    /// `a₀·I + aₓσ_x + a_yσ_y + a_zσ_z` for real coefficients.
    pub fn from_pauli(a0: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self::new([
            [Complex64::new(a0 + az, 0.0), Complex64::new(ax, -ay)],
            [Complex64::new(ax, ay), Complex64::new(a0 - az, 0.0)],
        ])
    }

    /// Real Pauli coefficients `(a₀, aₓ, a_y, a_z)` of the Hermitian part.
    pub fn pauli_coefficients(&self) -> [f64; 4] {
        let m = &self.m;
        [
            0.5 * (m[0][0].re + m[1][1].re),
            0.5 * (m[0][1].re + m[1][0].re),
            0.5 * (m[1][0].im - m[0][1].im),
            0.5 * (m[0][0].re - m[1][1].re),
        ]
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &PureState2, b: &PureState2) -> Self {
        let (a, b) = (a.amps, b.amps);
        Self::new([
            [a[0] * b[0].conj(), a[0] * b[1].conj()],
            [a[1] * b[0].conj(), a[1] * b[1].conj()],
        ])
    }

    /// The projector `|ψ⟩⟨ψ|`.
    pub fn projector(psi: &PureState2) -> Self {
        Self::outer(psi, psi)
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let m = &self.m;
        Self::new([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        *self * *other + *other * *self
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0, |acc: f64, z| acc.max(z.norm()))
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.dagger()).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Eigenvalues of a Hermitian operator in ascending order.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let [a0, ax, ay, az] = self.pauli_coefficients();
        let r = (ax * ax + ay * ay + az * az).sqrt();
        [a0 - r, a0 + r]
    }

    /// `exp(−i H t)` for Hermitian `H`, in closed form.
    pub fn unitary_exp(&self, t: f64) -> Self {
        let [a0, ax, ay, az] = self.pauli_coefficients();
        let r = (ax * ax + ay * ay + az * az).sqrt();
        let phase = Complex64::new(0.0, -a0 * t).exp();
        let (s, c) = (r * t).sin_cos();
        let body = if r > 0.0 {
            let k = s / r;
            // cos(rt)·I − i sin(rt)·(n̂·σ)
            Self::new([
                [Complex64::new(c, -k * az), Complex64::new(-k * ay, -k * ax)],
                [Complex64::new(k * ay, -k * ax), Complex64::new(c, k * az)],
            ])
        } else {
            Self::identity()
        };
        body.scale(phase)
    }

    pub fn apply(&self, psi: &PureState2) -> [Complex64; 2] {
        let (m, v) = (&self.m, &psi.amps);
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, psi: &PureState2) -> Complex64 {
        let av = self.apply(psi);
        psi.amps[0].conj() * av[0] + psi.amps[1].conj() * av[1]
    }

    /// Checks the density-matrix invariants to absolute tolerance `tol`:
    /// Hermitian, unit trace, eigenvalues ≥ −tol.
    pub fn validate_density(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_defect();
        if !(herm <= tol) {
            return Err(Error::InvalidState(alloc::format!(
                "density matrix is not Hermitian: max |ρ − ρ†| = {herm:e}"
            )));
        }
        let tr = self.trace();
        if !((tr.re - 1.0).abs() <= tol && tr.im.abs() <= tol) {
            return Err(Error::InvalidState(alloc::format!(
                "density matrix trace deviates from 1: tr ρ = {tr}"
            )));
        }
        let [lo, _] = self.hermitian_eigenvalues();
        if !(lo >= -tol) {
            return Err(Error::InvalidState(alloc::format!(
                "density matrix is not positive: smallest eigenvalue {lo:e}"
            )));
        }
        Ok(())
    }
}

impl Add for Operator2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl AddAssign for Operator2 {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Operator2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl Neg for Operator2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl Mul for Operator2 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Mul<f64> for Operator2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale_re(rhs)
    }
}

impl Mul<Complex64> for Operator2 {
    type Output = Self;
    fn mul(self, rhs: Complex64) -> Self {
        self.scale(rhs)
    }
}

/// A normalized two-level pure state, amplitudes ordered `(↑, ↓)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState2 {
    pub amps: [Complex64; 2],
}

impl PureState2 {
    pub const UP: Self = Self { amps: [ONE, ZERO] };
    pub const DOWN: Self = Self { amps: [ZERO, ONE] };

    /// Normalizes `amps`. Fails on the zero vector.
    pub fn new(amps: [Complex64; 2]) -> Result<Self> {
        let norm = (amps[0].norm_sqr() + amps[1].norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            amps: [amps[0] / norm, amps[1] / norm],
        })
    }

    /// Real amplitudes `(up, down)`; normalizes.
    pub fn from_real(up: f64, down: f64) -> Result<Self> {
        Self::new([Complex64::new(up, 0.0), Complex64::new(down, 0.0)])
    }

    pub fn norm(&self) -> f64 {
        (self.amps[0].norm_sqr() + self.amps[1].norm_sqr()).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps[0].conj() * other.amps[0] + self.amps[1].conj() * other.amps[1]
    }

    pub fn with_phase(&self, phase: f64) -> Self {
        let p = Complex64::new(0.0, phase).exp();
        Self {
            amps: [self.amps[0] * p, self.amps[1] * p],
        }
    }
}

/// Fidelity `⟨ψ|ρ|ψ⟩` of a density matrix against a pure target, clamped to
/// `[0, 1]` after validation.
pub fn fidelity(target: &PureState2, state: &Operator2) -> Result<f64> {
    state.validate_density(SOLVER_TOL)?;
    if (target.norm() - 1.0).abs() > ALGEBRAIC_TOL {
        return Err(Error::InvalidState(alloc::format!(
            "target state is not normalized: ‖ψ‖ = {}",
            target.norm()
        )));
    }
    let f = state.expectation(target);
    if f.im.abs() > SOLVER_TOL {
        return Err(Error::InvalidState(alloc::format!(
            "fidelity has imaginary part {:e}",
            f.im
        )));
    }
    Ok(f.re.clamp(0.0, 1.0))
}

/// Bures angle `arccos √F` between a pure target and a density matrix.
pub fn bures_angle(target: &PureState2, state: &Operator2) -> Result<f64> {
    fidelity(target, state).map(bures_angle_from_fidelity)
}

pub fn bures_angle_from_fidelity(f: f64) -> f64 {
    f.clamp(0.0, 1.0).sqrt().acos()
}

/// The Landau-Zener Hamiltonian `H₀ = (q/2)σ_z + (Δ/2)σ_x`.
pub fn lz_hamiltonian(q: f64, delta: f64) -> Operator2 {
    Operator2::from_pauli(0.0, 0.5 * delta, 0.0, 0.5 * q)
}

/// Mixing angle `θ = ½ atan2(Δ, q)`, the continuous branch of `½ arccot(q/Δ)`
/// taking values in `(0, π/2)`.
pub fn mixing_angle(q: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(domain!("minimum gap Δ must be positive, got {delta}"));
    }
    Ok(0.5 * delta.atan2(q))
}

/// Ground state `cos θ|↓⟩ − sin θ|↑⟩` for a given mixing angle.
pub fn ground_state_at_angle(theta: f64) -> PureState2 {
    let (s, c) = theta.sin_cos();
    PureState2 {
        amps: [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
    }
}

/// Instantaneous ground state of `H₀(q, Δ)`, eigenvalue `−½√(Δ² + q²)`.
pub fn ground_state(q: f64, delta: f64) -> Result<PureState2> {
    mixing_angle(q, delta).map(ground_state_at_angle)
}
