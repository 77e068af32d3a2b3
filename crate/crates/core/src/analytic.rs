//! Closed-form wave functions of the Stern-Gerlach problem.
//!
//! Inside the magnet each spin component is a Gaussian packet accelerated
//! by `+-mu B'` along z; after the exit the packets drift apart at `+-u`.
//! Packet spreading is neglected (it is below 1e-5 relative over the whole
//! flight for silver atoms); the Pauli-equation oracle measures what that
//! approximation costs.
//!
//! Times are split into two clocks: in-field functions take the time since
//! the magnet entry, post-field functions take the time since the exit.
//! [`PureStateWave`] hides the split behind a single clock.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::config::Apparatus;
use crate::error::{Error, Result};
use crate::outcome::Sign;
use crate::spinor::{SpinOrientation, Spinor};

/// A point of the transverse plane; `y` is classical (`y = v0 t`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub z: f64,
}

impl Position2D {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }
}

/// Phase of one moving packet: `linear_coeff * z / hbar + accumulated`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketPhase {
    /// Packet momentum, kg m/s (`+-m u` after the magnet).
    pub linear_coeff: f64,
    /// z-independent phase collected so far, rad.
    pub accumulated: f64,
}

impl WavePacketPhase {
    pub fn at(&self, z: f64, hbar: f64) -> f64 {
        self.linear_coeff * z / hbar + self.accumulated
    }
}

/// Transverse structure of the evaluated packet.
#[derive(Debug, Clone, Copy)]
enum Transverse {
    /// Full `(x, z)` packet, normalized over the plane.
    Plane(f64),
    /// z-only profile, normalized over the line.
    Line,
}

impl Transverse {
    fn log_norm(self, sigma: f64) -> f64 {
        let two_pi_var = (2.0 * PI * sigma * sigma).ln();
        match self {
            Transverse::Plane(x) => -0.5 * two_pi_var - x * x / (4.0 * sigma * sigma),
            Transverse::Line => -0.25 * two_pi_var,
        }
    }

    fn x_log_slope(self, sigma: f64) -> f64 {
        match self {
            Transverse::Plane(x) => -x / (2.0 * sigma * sigma),
            Transverse::Line => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    center: f64,
    phase: WavePacketPhase,
}

impl Packet {
    fn in_field(t: f64, sign: Sign, app: &Apparatus) -> Self {
        let cfg = &app.config;
        let force = cfg.mu * cfg.signed_gradient();
        let s = sign.value();
        Packet {
            center: s * force * t * t / (2.0 * cfg.mass),
            phase: WavePacketPhase {
                linear_coeff: s * force * t,
                accumulated: (-(force * force) * t * t * t / (6.0 * cfg.mass)
                    - s * cfg.mu * cfg.signed_offset() * t)
                    / cfg.hbar,
            },
        }
    }

    fn after_field(t_after: f64, sign: Sign, app: &Apparatus) -> Self {
        let cfg = &app.config;
        let exit = Packet::in_field(app.t_exit(), sign, app);
        let momentum = exit.phase.linear_coeff;
        let drift = momentum / cfg.mass;
        Packet {
            center: exit.center + drift * t_after,
            phase: WavePacketPhase {
                linear_coeff: momentum,
                accumulated: exit.phase.accumulated
                    - momentum * momentum * t_after / (2.0 * cfg.mass * cfg.hbar),
            },
        }
    }

    /// Log-space Gaussian times the packet phase.
    fn value(&self, tr: Transverse, z: f64, sigma: f64, hbar: f64) -> Complex64 {
        let dz = z - self.center;
        let log_amp = tr.log_norm(sigma) - dz * dz / (4.0 * sigma * sigma);
        Complex64::from_polar(log_amp.exp(), self.phase.at(z, hbar))
    }

    /// `(d/dx, d/dz)` of the packet divided by its value.
    fn log_gradient(&self, tr: Transverse, z: f64, sigma: f64, hbar: f64) -> [Complex64; 2] {
        [
            Complex64::new(tr.x_log_slope(sigma), 0.0),
            Complex64::new(
                -(z - self.center) / (2.0 * sigma * sigma),
                self.phase.linear_coeff / hbar,
            ),
        ]
    }
}

fn check_in_field(t: f64, app: &Apparatus) -> Result<()> {
    let end = app.t_exit();
    if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
        return Err(Error::TimeOutOfRange { t, min: 0.0, max: end });
    }
    Ok(())
}

fn check_after_field(t_after: f64) -> Result<()> {
    if !(t_after >= 0.0 && t_after.is_finite()) {
        return Err(Error::TimeOutOfRange {
            t: t_after,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(())
}

/// Spin factors of the polar form `e^{i chi/2}(cos e^{i phi/2}, i sin e^{-i phi/2})`.
fn spin_weights(spin: &SpinOrientation) -> (Complex64, Complex64) {
    let global = Complex64::from_polar(1.0, 0.5 * spin.chi);
    (
        global * Complex64::from_polar(spin.cos_half(), 0.5 * spin.phi),
        global * Complex64::i() * Complex64::from_polar(spin.sin_half(), -0.5 * spin.phi),
    )
}

/// Gaussian spinor prepared with orientation `(theta0, phi0)`:
/// `(2 pi s^2)^{-1/2} e^{-(x^2+z^2)/4 s^2} (cos e^{i phi/2}, sin e^{-i phi/2})`.
///
/// The lower component carries no factor `i`; the time-dependent solutions
/// below use the polar form, which differs from this one by `i` on the
/// lower component.
pub fn initial_spinor(r: Position2D, spin: &SpinOrientation, sigma0: f64) -> Spinor {
    let amp = (Transverse::Plane(r.x).log_norm(sigma0) - r.z * r.z / (4.0 * sigma0 * sigma0)).exp();
    let global = Complex64::from_polar(amp, 0.5 * spin.chi);
    Spinor::new(
        global * Complex64::from_polar(spin.cos_half(), 0.5 * spin.phi),
        global * Complex64::from_polar(spin.sin_half(), -0.5 * spin.phi),
    )
}

/// Spin-free packet of branch `sign` inside the magnet (`t` from the entry).
pub fn envelope_in_field(r: Position2D, t: f64, sign: Sign, app: &Apparatus) -> Result<Complex64> {
    check_in_field(t, app)?;
    let cfg = &app.config;
    Ok(Packet::in_field(t, sign, app).value(Transverse::Plane(r.x), r.z, cfg.sigma0, cfg.hbar))
}

/// Phase of branch `sign` inside the magnet.
pub fn packet_phase_in_field(t: f64, sign: Sign, app: &Apparatus) -> Result<WavePacketPhase> {
    check_in_field(t, app)?;
    Ok(Packet::in_field(t, sign, app).phase)
}

/// Phase of branch `sign` after `t_after` seconds of free flight.
pub fn packet_phase_after_field(t_after: f64, sign: Sign, app: &Apparatus) -> Result<WavePacketPhase> {
    check_after_field(t_after)?;
    Ok(Packet::after_field(t_after, sign, app).phase)
}

/// Post-magnet packet `f^{+-}(r, t) = f(x, z -+ (z_delta + u t)) e^{i(+-m u z/hbar + phi_+-(t))}`.
pub fn f_envelope(r: Position2D, t_after: f64, sign: Sign, app: &Apparatus) -> Result<Complex64> {
    check_after_field(t_after)?;
    let cfg = &app.config;
    Ok(Packet::after_field(t_after, sign, app).value(Transverse::Plane(r.x), r.z, cfg.sigma0, cfg.hbar))
}

/// Initial Gaussian `f(r) = (2 pi s^2)^{-1/2} e^{-(x^2+z^2)/4 s^2}`.
pub fn gaussian_envelope(r: Position2D, sigma0: f64) -> f64 {
    (Transverse::Plane(r.x).log_norm(sigma0) - r.z * r.z / (4.0 * sigma0 * sigma0)).exp()
}

/// z profile of [`gaussian_envelope`], normalized on the line.
pub fn gaussian_envelope_1d(z: f64, sigma0: f64) -> f64 {
    (Transverse::Line.log_norm(sigma0) - z * z / (4.0 * sigma0 * sigma0)).exp()
}

fn branch_packet(t: f64, sign: Sign, app: &Apparatus) -> Result<Packet> {
    if t <= app.t_exit() {
        check_in_field(t, app)?;
        Ok(Packet::in_field(t, sign, app))
    } else {
        Ok(Packet::after_field(t - app.t_exit(), sign, app))
    }
}

/// Packet of branch `sign` with `t` measured from the magnet entry: the
/// in-field packet up to the exit, `f^{+-}` afterwards.
pub fn branch_envelope(r: Position2D, t: f64, sign: Sign, app: &Apparatus) -> Result<Complex64> {
    let cfg = &app.config;
    Ok(branch_packet(t, sign, app)?.value(Transverse::Plane(r.x), r.z, cfg.sigma0, cfg.hbar))
}

/// z profile of [`branch_envelope`], normalized on the line.
pub fn branch_envelope_1d(z: f64, t: f64, sign: Sign, app: &Apparatus) -> Result<Complex64> {
    let cfg = &app.config;
    Ok(branch_packet(t, sign, app)?.value(Transverse::Line, z, cfg.sigma0, cfg.hbar))
}

fn build(
    spin: &SpinOrientation,
    tr: Transverse,
    z: f64,
    up: Packet,
    down: Packet,
    app: &Apparatus,
) -> Spinor {
    let (wp, wm) = spin_weights(spin);
    let (sigma, hbar) = (app.config.sigma0, app.config.hbar);
    Spinor::new(wp * up.value(tr, z, sigma, hbar), wm * down.value(tr, z, sigma, hbar))
}

/// Spinor inside the magnet, `t` in `[0, dt]` from the entry.
pub fn spinor_in_field(r: Position2D, t: f64, spin: &SpinOrientation, app: &Apparatus) -> Result<Spinor> {
    check_in_field(t, app)?;
    Ok(build(
        spin,
        Transverse::Plane(r.x),
        r.z,
        Packet::in_field(t, Sign::Plus, app),
        Packet::in_field(t, Sign::Minus, app),
        app,
    ))
}

/// Spinor after `t_after` seconds of free flight past the magnet exit.
pub fn spinor_after_field(
    r: Position2D,
    t_after: f64,
    spin: &SpinOrientation,
    app: &Apparatus,
) -> Result<Spinor> {
    check_after_field(t_after)?;
    Ok(build(
        spin,
        Transverse::Plane(r.x),
        r.z,
        Packet::after_field(t_after, Sign::Plus, app),
        Packet::after_field(t_after, Sign::Minus, app),
        app,
    ))
}

/// z-only profile of [`spinor_in_field`], normalized on the line.
pub fn spinor_in_field_1d(z: f64, t: f64, spin: &SpinOrientation, app: &Apparatus) -> Result<Spinor> {
    check_in_field(t, app)?;
    Ok(build(
        spin,
        Transverse::Line,
        z,
        Packet::in_field(t, Sign::Plus, app),
        Packet::in_field(t, Sign::Minus, app),
        app,
    ))
}

/// z-only profile of [`spinor_after_field`], normalized on the line.
pub fn spinor_after_field_1d(
    z: f64,
    t_after: f64,
    spin: &SpinOrientation,
    app: &Apparatus,
) -> Result<Spinor> {
    check_after_field(t_after)?;
    Ok(build(
        spin,
        Transverse::Line,
        z,
        Packet::after_field(t_after, Sign::Plus, app),
        Packet::after_field(t_after, Sign::Minus, app),
        app,
    ))
}

/// The pure-state solution on a single clock `t` measured from the magnet
/// entry: in-field form up to `dt`, post-field form afterwards.
#[derive(Debug, Clone, Copy)]
pub struct PureStateWave {
    pub apparatus: Apparatus,
    pub spin: SpinOrientation,
}

impl PureStateWave {
    pub fn new(apparatus: Apparatus, spin: SpinOrientation) -> Self {
        Self { apparatus, spin }
    }

    fn packets(&self, t: f64) -> Result<(Packet, Packet)> {
        let app = &self.apparatus;
        Ok((branch_packet(t, Sign::Plus, app)?, branch_packet(t, Sign::Minus, app)?))
    }

    pub fn spinor(&self, r: Position2D, t: f64) -> Result<Spinor> {
        let (up, down) = self.packets(t)?;
        Ok(build(&self.spin, Transverse::Plane(r.x), r.z, up, down, &self.apparatus))
    }

    /// Value and `(d/dx, d/dz)` gradient of the spinor.
    pub fn spinor_with_gradient(&self, r: Position2D, t: f64) -> Result<(Spinor, [Spinor; 2])> {
        let (up, down) = self.packets(t)?;
        let tr = Transverse::Plane(r.x);
        let value = build(&self.spin, tr, r.z, up, down, &self.apparatus);
        let (sigma, hbar) = (self.apparatus.config.sigma0, self.apparatus.config.hbar);
        let gu = up.log_gradient(tr, r.z, sigma, hbar);
        let gd = down.log_gradient(tr, r.z, sigma, hbar);
        let grad = [
            Spinor::new(value.plus * gu[0], value.minus * gd[0]),
            Spinor::new(value.plus * gu[1], value.minus * gd[1]),
        ];
        Ok((value, grad))
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn normal_pdf(z: f64, mean: f64, sigma: f64) -> f64 {
    let d = (z - mean) / sigma;
    (-0.5 * d * d).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Screen density of the isotropic mixture after `t_after` seconds of free
/// flight: two equal Gaussian spots centered at `+-(z_delta + u t)`.
pub fn sg_mixture_density(z: f64, t_after: f64, app: &Apparatus) -> Result<f64> {
    check_after_field(t_after)?;
    let a = app.packet_offset(t_after);
    let s = app.config.sigma0;
    Ok(0.5 * (normal_pdf(z, a, s) + normal_pdf(z, -a, s)))
}

/// Cumulative distribution of [`sg_mixture_density`].
pub fn sg_mixture_cdf(z: f64, t_after: f64, app: &Apparatus) -> Result<f64> {
    check_after_field(t_after)?;
    let a = app.packet_offset(t_after);
    let s = app.config.sigma0;
    Ok(0.5 * (std_normal_cdf((z - a) / s) + std_normal_cdf((z + a) / s)))
}

/// z-density of a pure state prepared at polar angle `theta0`.
pub fn pure_state_density(z: f64, t_after: f64, theta0: f64, app: &Apparatus) -> Result<f64> {
    check_after_field(t_after)?;
    let spin = SpinOrientation::new(theta0, 0.0);
    let (c2, s2) = (spin.cos_half().powi(2), spin.sin_half().powi(2));
    let a = app.packet_offset(t_after);
    let s = app.config.sigma0;
    Ok(c2 * normal_pdf(z, a, s) + s2 * normal_pdf(z, -a, s))
}

/// Cumulative distribution of [`pure_state_density`].
pub fn pure_state_cdf(z: f64, t_after: f64, theta0: f64, app: &Apparatus) -> Result<f64> {
    check_after_field(t_after)?;
    let spin = SpinOrientation::new(theta0, 0.0);
    let (c2, s2) = (spin.cos_half().powi(2), spin.sin_half().powi(2));
    let a = app.packet_offset(t_after);
    let s = app.config.sigma0;
    Ok(c2 * std_normal_cdf((z - a) / s) + s2 * std_normal_cdf((z + a) / s))
}

/// Joint `(z_A, z_B)` density of the singlet pair `t_after` seconds after A
/// leaves its magnet: B is a stationary Gaussian, A the two-spot mixture.
pub fn eprb_joint_density(z_a: f64, z_b: f64, t_after: f64, app: &Apparatus) -> Result<f64> {
    let rho_a = sg_mixture_density(z_a, t_after, app)?;
    Ok(normal_pdf(z_b, 0.0, app.config.sigma0) * rho_a)
}

/// One row of a grid dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub x: f64,
    pub z: f64,
    /// Time since the magnet entry.
    pub t: f64,
    pub spinor: Spinor,
    pub density: f64,
}

/// Evaluates `wave` on the tensor grid `xs` x `zs` at time `t` (from the
/// entry), x-major.
pub fn evaluate_grid(wave: &PureStateWave, xs: &[f64], zs: &[f64], t: f64) -> Result<Vec<GridSample>> {
    let mut out = Vec::with_capacity(xs.len() * zs.len());
    for &x in xs {
        for &z in zs {
            let spinor = wave.spinor(Position2D::new(x, z), t)?;
            out.push(GridSample {
                x,
                z,
                t,
                spinor,
                density: spinor.norm_sqr(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn silver() -> Apparatus {
        Apparatus::silver()
    }

    /// Trapezoid rule on a uniform grid; spectrally accurate for Gaussians.
    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            acc += f(lo + i as f64 * h);
        }
        acc * h
    }

    fn trapezoid_2d(f: impl Fn(f64, f64) -> f64, half_width: f64, n: usize) -> f64 {
        trapezoid(|x| trapezoid(|z| f(x, z), -half_width, half_width, n), -half_width, half_width, n)
    }

    #[test]
    fn initial_spin_up_at_origin() {
        let s0 = 1e-4;
        let psi = initial_spinor(Position2D::default(), &SpinOrientation::up(), s0);
        let peak = (2.0 * PI * s0 * s0).powf(-0.5);
        assert!(((psi.plus.re - peak) / peak).abs() < 1e-14);
        assert_eq!(psi.plus.im, 0.0);
        assert_eq!(psi.minus.norm(), 0.0);
    }

    #[test]
    fn initial_equatorial_components_have_equal_modulus() {
        let psi = initial_spinor(Position2D::default(), &SpinOrientation::new(FRAC_PI_2, 0.0), 1e-4);
        assert_eq!(psi.plus.norm(), psi.minus.norm());
    }

    #[test]
    fn initial_spinor_is_normalized() {
        let s0 = 1e-4;
        let spin = SpinOrientation::new(1.1, 2.3);
        let norm = trapezoid_2d(
            |x, z| initial_spinor(Position2D::new(x, z), &spin, s0).norm_sqr(),
            12.0 * s0,
            240,
        );
        assert!((norm - 1.0).abs() < 1e-10, "norm = {norm}");
    }

    #[test]
    fn in_field_at_entry_is_the_initial_spinor_up_to_i_on_the_lower_component() {
        let app = silver();
        let spin = SpinOrientation::new(1.0, 0.7);
        for &(x, z) in &[(0.0, 0.0), (1e-4, -2e-4), (-3e-5, 5e-5)] {
            let r = Position2D::new(x, z);
            let a = initial_spinor(r, &spin, app.config.sigma0);
            let b = spinor_in_field(r, 0.0, &spin, &app).unwrap();
            assert!((a.plus - b.plus).norm() <= 1e-12 * a.plus.norm());
            assert!((a.minus * Complex64::i() - b.minus).norm() <= 1e-12 * a.minus.norm());
        }
    }

    #[test]
    fn spin_up_packet_reaches_z_delta_at_the_exit() {
        let app = silver();
        let dt = app.t_exit();
        let zd = app.derived.z_delta;
        let up = SpinOrientation::up();
        let at = |z| spinor_in_field(Position2D::new(0.0, z), dt, &up, &app).unwrap();
        let peak = at(zd);
        assert_eq!(peak.minus.norm(), 0.0);
        // the modulus is maximal at z_delta and symmetric around it
        for k in [0.1, 0.5, 1.0] {
            let h = k * app.config.sigma0;
            let (l, r) = (at(zd - h).plus.norm(), at(zd + h).plus.norm());
            assert!(l < peak.plus.norm() && r < peak.plus.norm());
            assert!(((l - r) / l).abs() < 1e-12);
        }
    }

    #[test]
    fn in_field_rejects_times_outside_the_magnet() {
        let app = silver();
        let spin = SpinOrientation::up();
        assert!(spinor_in_field(Position2D::default(), -1e-9, &spin, &app).is_err());
        assert!(spinor_in_field(Position2D::default(), 2.0 * app.t_exit(), &spin, &app).is_err());
        assert!(spinor_after_field(Position2D::default(), -1.0, &spin, &app).is_err());
    }

    #[test]
    fn exit_continuity_is_pointwise() {
        let app = silver();
        let spin = SpinOrientation::with_phase(1.2, 0.4, 0.3);
        for i in -20..=20 {
            let r = Position2D::new(0.3e-4, i as f64 * 0.25e-4);
            let a = spinor_in_field(r, app.t_exit(), &spin, &app).unwrap();
            let b = spinor_after_field(r, 0.0, &spin, &app).unwrap();
            let scale = a.norm_sqr().sqrt();
            assert!((a - b).norm_sqr().sqrt() <= 1e-9 * scale);
        }
    }

    #[test]
    fn envelope_peak_and_mirror_symmetry() {
        let app = silver();
        let s0 = app.config.sigma0;
        let peak = f_envelope(Position2D::new(0.0, app.derived.z_delta), 0.0, Sign::Plus, &app).unwrap();
        let expected = (2.0 * PI * s0 * s0).powf(-0.5);
        assert!(((peak.norm() - expected) / expected).abs() < 1e-12);
        for t in [0.0, 1e-4, 3e-4] {
            for z in [-4e-4, -1e-4, 0.0, 2.5e-4] {
                let p = f_envelope(Position2D::new(1e-5, z), t, Sign::Plus, &app).unwrap();
                let m = f_envelope(Position2D::new(1e-5, -z), t, Sign::Minus, &app).unwrap();
                assert!((p.norm() - m.norm()).abs() <= 1e-12 * p.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn packets_are_three_sigma_apart_at_decoherence() {
        // At t_D the offset z_delta + u t_D is exactly 3 sigma by definition, so
        // the amplitude ratio at the upper center is exp(9) up to rounding.
        let app = silver();
        let td = app.derived.t_decoherence;
        let z = app.packet_offset(td);
        let r = Position2D::new(0.0, z);
        let ratio = f_envelope(r, td, Sign::Plus, &app).unwrap().norm()
            / f_envelope(r, td, Sign::Minus, &app).unwrap().norm();
        assert!((ratio / 9f64.exp() - 1.0).abs() < 1e-9, "ratio = {ratio}");
    }

    #[test]
    fn eigenstate_passes_unsplit_and_packets_are_disjoint_at_the_screen() {
        let app = silver();
        let up = SpinOrientation::up();
        for t in [0.0, 1e-4, 4e-4] {
            for z in [-3e-4, 0.0, 3e-4] {
                let psi = spinor_after_field(Position2D::new(0.0, z), t, &up, &app).unwrap();
                assert_eq!(psi.minus.norm(), 0.0);
            }
        }
        let ts = app.screen_time();
        assert!((ts - 4e-4).abs() < 1e-18);
        assert!(2.0 * app.packet_offset(ts) > 6.0 * app.config.sigma0);
    }

    #[test]
    fn mixture_density_is_symmetric_and_normalized() {
        let app = silver();
        for t in [0.0, 1e-4, 3e-4, 4e-4] {
            let norm = trapezoid(|z| sg_mixture_density(z, t, &app).unwrap(), -2e-3, 2e-3, 4000);
            assert!((norm - 1.0).abs() < 1e-10);
            for z in [1e-5, 1e-4, 3.3e-4] {
                let (a, b) = (
                    sg_mixture_density(z, t, &app).unwrap(),
                    sg_mixture_density(-z, t, &app).unwrap(),
                );
                assert!((a - b).abs() <= 1e-15 * a);
            }
            let c = sg_mixture_cdf(0.0, t, &app).unwrap();
            assert!((c - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_density_factorizes_and_integrates_to_one() {
        let app = silver();
        let t = 2e-4;
        let s0 = app.config.sigma0;
        let norm = trapezoid_2d(|za, zb| eprb_joint_density(za, zb, t, &app).unwrap(), 12.0 * s0, 300);
        assert!((norm - 1.0).abs() < 1e-9);
        // marginal over z_B reproduces the single-particle mixture
        for za in [-3e-4, 0.0, 1.7e-4] {
            let m = trapezoid(|zb| eprb_joint_density(za, zb, t, &app).unwrap(), -12.0 * s0, 12.0 * s0, 400);
            let single = sg_mixture_density(za, t, &app).unwrap();
            assert!((m - single).abs() <= 1e-10 * single);
        }
    }

    #[test]
    fn chi_shift_is_a_global_phase() {
        let app = silver();
        let a = PureStateWave::new(app, SpinOrientation::with_phase(0.9, 1.3, 0.0));
        let b = PureStateWave::new(app, SpinOrientation::with_phase(0.9, 1.3, 0.8));
        let factor = Complex64::from_polar(1.0, 0.4);
        for t in [0.0, 1e-5, 2e-5, 1e-4] {
            let r = Position2D::new(2e-5, -4e-5);
            let (pa, pb) = (a.spinor(r, t).unwrap(), b.spinor(r, t).unwrap());
            assert!((pa.scale(factor) - pb).norm_sqr().sqrt() <= 1e-12 * pa.norm_sqr().sqrt());
            assert!((pa.norm_sqr() - pb.norm_sqr()).abs() <= 1e-14 * pa.norm_sqr());
        }
    }

    #[test]
    fn closed_form_stays_normalized() {
        let app = silver();
        let wave = PureStateWave::new(app, SpinOrientation::new(2.0, 0.3));
        let s0 = app.config.sigma0;
        for t in [0.0, 1e-5, 2e-5, 1.5e-4, 3.2e-4, 4.2e-4] {
            let norm = trapezoid_2d(|x, z| wave.spinor(Position2D::new(x, z), t).unwrap().norm_sqr(), 16.0 * s0, 400);
            assert!((norm - 1.0).abs() < 1e-6, "t = {t}: norm = {norm}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let app = silver();
        let wave = PureStateWave::new(app, SpinOrientation::new(1.0, 0.2));
        // complex step is not available; use the phase-free quantity |psi|^2
        for t in [5e-6, 1.5e-4] {
            let r = Position2D::new(3e-5, 4e-5);
            let (v, g) = wave.spinor_with_gradient(r, t).unwrap();
            let h = 1e-9;
            let d = |dx: f64, dz: f64| wave.spinor(Position2D::new(r.x + dx, r.z + dz), t).unwrap().norm_sqr();
            let fd_x = (d(h, 0.0) - d(-h, 0.0)) / (2.0 * h);
            let fd_z = (d(0.0, h) - d(0.0, -h)) / (2.0 * h);
            let an_x = 2.0 * v.inner(&g[0]).re;
            let an_z = 2.0 * v.inner(&g[1]).re;
            assert!((fd_x - an_x).abs() <= 1e-5 * an_x.abs());
            assert!((fd_z - an_z).abs() <= 1e-5 * an_z.abs());
        }
    }

    proptest::proptest! {
        #[test]
        fn exit_continuity_and_phase_covariance(
            theta in 0.0f64..PI,
            phi in 0.0f64..std::f64::consts::TAU,
            chi in -3.0f64..3.0,
            x in -4e-4f64..4e-4,
            z in -4e-4f64..4e-4,
            t in 0.0f64..4e-4,
        ) {
            let app = silver();
            let r = Position2D::new(x, z);
            let spin = SpinOrientation::with_phase(theta, phi, chi);
            let a = spinor_in_field(r, app.t_exit(), &spin, &app).unwrap();
            let b = spinor_after_field(r, 0.0, &spin, &app).unwrap();
            proptest::prop_assert!((a - b).norm_sqr().sqrt() <= 1e-9 * a.norm_sqr().sqrt());

            let base = PureStateWave::new(app, SpinOrientation::new(theta, phi)).spinor(r, t).unwrap();
            let shifted = PureStateWave::new(app, spin).spinor(r, t).unwrap();
            let factor = Complex64::from_polar(1.0, 0.5 * chi);
            let scale = base.norm_sqr().sqrt();
            proptest::prop_assert!((base.scale(factor) - shifted).norm_sqr().sqrt() <= 1e-12 * scale);
        }
    }
}
