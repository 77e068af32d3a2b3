//! Two-component Pauli spinors and the Euler-angle description of a spin.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Spin direction `(theta, phi)` plus the global phase angle `chi`.
///
/// `theta` is kept in `[0, pi]` and `phi` in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinOrientation {
    pub theta: f64,
    pub phi: f64,
    #[serde(default)]
    pub chi: f64,
}

impl SpinOrientation {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self::with_phase(theta, phi, 0.0)
    }

    pub fn with_phase(theta: f64, phi: f64, chi: f64) -> Self {
        Self {
            theta: theta.clamp(0.0, PI),
            phi: reduce_angle(phi),
            chi,
        }
    }

    pub fn up() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn down() -> Self {
        Self::new(PI, 0.0)
    }

    /// `cos(theta / 2)`, exactly 0 at `theta = pi`.
    pub fn cos_half(&self) -> f64 {
        ((PI - self.theta) * 0.5).sin()
    }

    /// `sin(theta / 2)`, exactly 0 at `theta = 0`.
    ///
    /// Equals [`cos_half`](Self::cos_half) bit for bit at `theta = pi/2`.
    pub fn sin_half(&self) -> f64 {
        (self.theta * 0.5).sin()
    }

    /// `cos(theta)`, exactly 0 at `theta = pi/2`.
    pub fn cos_theta(&self) -> f64 {
        (FRAC_PI_2 - self.theta).sin()
    }

    /// Unit spin direction in the `(sin t sin p, sin t cos p, cos t)` convention.
    pub fn direction(&self) -> [f64; 3] {
        let s = self.theta.sin();
        [s * self.phi.sin(), s * self.phi.cos(), self.cos_theta()]
    }

    /// Recovers the angles from a spinor written as
    /// `sqrt(rho) e^{i chi/2} (cos(t/2) e^{i p/2}, i sin(t/2) e^{-i p/2})`.
    ///
    /// Returns `None` for the zero spinor. At the poles `phi` is undefined and
    /// is reported as the value that keeps `chi` consistent with the non-zero
    /// component.
    pub fn from_spinor(spinor: &Spinor) -> Option<Self> {
        let (a, b) = (spinor.plus.norm(), spinor.minus.norm());
        if a == 0.0 && b == 0.0 {
            return None;
        }
        let theta = 2.0 * b.atan2(a);
        let (phi, chi) = if b == 0.0 {
            (0.0, 2.0 * spinor.plus.arg())
        } else if a == 0.0 {
            (0.0, 2.0 * spinor.minus.arg() - PI)
        } else {
            let (pa, ma) = (spinor.plus.arg(), spinor.minus.arg());
            (pa - ma + FRAC_PI_2, pa + ma - FRAC_PI_2)
        };
        Some(Self::with_phase(theta, phi, chi))
    }
}

/// Reduces an angle to `[0, 2 pi)`.
pub fn reduce_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Value of a Pauli spinor at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub plus: Complex64,
    pub minus: Complex64,
}

impl Spinor {
    pub const ZERO: Spinor = Spinor {
        plus: Complex64::new(0.0, 0.0),
        minus: Complex64::new(0.0, 0.0),
    };

    pub fn new(plus: Complex64, minus: Complex64) -> Self {
        Self { plus, minus }
    }

    /// Unit spinor in the polar form whose spin vector is
    /// `(hbar/2)(sin t sin p, sin t cos p, cos t)`.
    pub fn from_orientation(spin: &SpinOrientation) -> Self {
        let global = Complex64::from_polar(1.0, 0.5 * spin.chi);
        let half_phi = 0.5 * spin.phi;
        Self {
            plus: global * Complex64::from_polar(spin.cos_half(), half_phi),
            minus: global * Complex64::i() * Complex64::from_polar(spin.sin_half(), -half_phi),
        }
    }

    /// `|plus|^2 + |minus|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.plus.norm_sqr() + self.minus.norm_sqr()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Spinor) -> Complex64 {
        self.plus.conj() * other.plus + self.minus.conj() * other.minus
    }

    pub fn is_finite(&self) -> bool {
        self.plus.is_finite() && self.minus.is_finite()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            plus: self.plus * factor,
            minus: self.minus * factor,
        }
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, rhs: Spinor) -> Spinor {
        Spinor::new(self.plus + rhs.plus, self.minus + rhs.minus)
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, rhs: Spinor) -> Spinor {
        Spinor::new(self.plus - rhs.plus, self.minus - rhs.minus)
    }
}

impl Mul<f64> for Spinor {
    type Output = Spinor;
    fn mul(self, rhs: f64) -> Spinor {
        Spinor::new(self.plus * rhs, self.minus * rhs)
    }
}

impl Mul<Complex64> for Spinor {
    type Output = Spinor;
    fn mul(self, rhs: Complex64) -> Spinor {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_angles_are_exact_at_special_points() {
        assert_eq!(SpinOrientation::up().sin_half(), 0.0);
        assert_eq!(SpinOrientation::down().cos_half(), 0.0);
        let eq = SpinOrientation::new(FRAC_PI_2, 0.0);
        assert_eq!(eq.cos_half(), eq.sin_half());
        assert_eq!(eq.cos_theta(), 0.0);
        assert_eq!(SpinOrientation::down().cos_theta(), -1.0);
    }

    #[test]
    fn construction_clamps_and_reduces() {
        let s = SpinOrientation::new(4.0, -0.5);
        assert_eq!(s.theta, PI);
        assert!((s.phi - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(reduce_angle(-1e-300), 0.0);
        assert_eq!(SpinOrientation::new(-0.1, TAU).phi, 0.0);
    }

    proptest! {
        #[test]
        fn orientation_round_trips_through_spinor(
            theta in 0.01f64..3.13, phi in 0.0f64..std::f64::consts::TAU, chi in -3.0f64..3.0,
        ) {
            let spin = SpinOrientation::with_phase(theta, phi, chi);
            let back = SpinOrientation::from_spinor(&Spinor::from_orientation(&spin)).unwrap();
            prop_assert!((back.theta - spin.theta).abs() < 1e-12);
            let dphi = reduce_angle(back.phi - spin.phi + 1.0) - 1.0;
            prop_assert!(dphi.abs() < 1e-12);
            prop_assert!((Spinor::from_orientation(&spin).norm_sqr() - 1.0).abs() < 1e-14);
        }
    }
}
