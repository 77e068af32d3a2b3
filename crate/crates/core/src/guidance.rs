//! Bohmian dynamics: the guidance velocity, the spin-vector field and the
//! closed-form trajectory equations inside and after the magnet.
//!
//! For a pure state prepared at polar angle `theta0` the spin orientation at
//! the particle position obeys
//!
//! ```text
//! tan(theta/2) = tan(theta0/2) exp(-w),
//! w = a t^2 z / (2 s^2)          inside the magnet (a = mu B'/m),
//! w = (z_delta + u t') z / s^2   after it (t' since the exit),
//! ```
//!
//! and the particle moves along z with `a t cos(theta)` resp. `u cos(theta)`.
//! `cos(theta)` is evaluated in a form that stays finite for any `w` and is
//! exactly zero on the symmetry point of an equatorial spin.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::analytic::{Position2D, PureStateWave};
use crate::config::{Apparatus, PhysicalConfig};
use crate::error::{Error, Result};
use crate::outcome::Outcome;
use crate::spinor::{SpinOrientation, Spinor};

/// Density below which the guidance and spin fields are undefined.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-300;

/// Position and spin orientation of one particle at time `t` (from the
/// magnet entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    /// Classical coordinate along the beam, `v0 t`.
    pub y: f64,
    pub spin: SpinOrientation,
}

/// The spin vector `s = (hbar / 2 rho) Psi^dag sigma Psi`, J s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl SpinVector {
    pub fn norm(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    /// `(hbar/2)(sin t sin p, sin t cos p, cos t)` for an orientation.
    pub fn from_orientation(spin: &SpinOrientation, hbar: f64) -> Self {
        let [a, b, c] = spin.direction();
        let h = 0.5 * hbar;
        Self {
            sx: h * a,
            sy: h * b,
            sz: h * c,
        }
    }
}

/// Guidance velocity `(hbar / m rho) Im(Psi^dag grad Psi)` in the `(x, z)`
/// plane, with `rho = Psi^dag Psi`.
pub fn velocity_from_spinor(value: &Spinor, gradient: &[Spinor; 2], mass: f64, hbar: f64) -> Result<[f64; 2]> {
    velocity_from_spinor_with_floor(value, gradient, mass, hbar, DEFAULT_DENSITY_FLOOR)
}

pub fn velocity_from_spinor_with_floor(
    value: &Spinor,
    gradient: &[Spinor; 2],
    mass: f64,
    hbar: f64,
    floor: f64,
) -> Result<[f64; 2]> {
    let rho = value.norm_sqr();
    if !(rho >= floor) || rho == 0.0 {
        return Err(Error::NodeDensityZero { rho, floor });
    }
    let k = hbar / (mass * rho);
    Ok([k * value.inner(&gradient[0]).im, k * value.inner(&gradient[1]).im])
}

/// Spin vector of a spinor value, using the Pauli matrices.
pub fn spin_vector(value: &Spinor, hbar: f64) -> Result<SpinVector> {
    let rho = value.norm_sqr();
    if !(rho >= DEFAULT_DENSITY_FLOOR) || rho == 0.0 {
        return Err(Error::NodeDensityZero {
            rho,
            floor: DEFAULT_DENSITY_FLOOR,
        });
    }
    let cross = value.plus.conj() * value.minus;
    let k = 0.5 * hbar / rho;
    Ok(SpinVector {
        sx: k * 2.0 * cross.re,
        sy: k * 2.0 * cross.im,
        sz: k * (value.plus.norm_sqr() - value.minus.norm_sqr()),
    })
}

/// `cos(theta)` for `tan(theta/2) = (s/c) e^{-w}`.
fn cos_theta_of(c2: f64, s2: f64, w: f64) -> f64 {
    if w >= 0.0 {
        let e = (-2.0 * w).exp();
        (c2 - s2 * e) / (c2 + s2 * e)
    } else {
        let e = (2.0 * w).exp();
        (c2 * e - s2) / (c2 * e + s2)
    }
}

/// `theta` for `tan(theta/2) = (s/c) e^{-w}`.
fn theta_of(c: f64, s: f64, w: f64) -> f64 {
    if w >= 0.0 {
        2.0 * (s * (-w).exp()).atan2(c)
    } else {
        2.0 * s.atan2(c * w.exp())
    }
}

fn in_field_exponent(z: f64, t: f64, app: &Apparatus) -> f64 {
    let s0 = app.config.sigma0;
    app.derived.field_acceleration * t * t * z / (2.0 * s0 * s0)
}

fn after_field_exponent(z: f64, t_after: f64, app: &Apparatus) -> f64 {
    let s0 = app.config.sigma0;
    app.packet_offset(t_after) * z / (s0 * s0)
}

/// Spin polar angle at `z` inside the magnet, `t` from the entry.
pub fn theta_in_field(z: f64, t: f64, theta0: f64, app: &Apparatus) -> f64 {
    let spin = SpinOrientation::new(theta0, 0.0);
    theta_of(spin.cos_half(), spin.sin_half(), in_field_exponent(z, t, app))
}

/// Spin polar angle at `z`, `t_after` seconds after the magnet exit.
pub fn theta_after_field(z: f64, t_after: f64, theta0: f64, app: &Apparatus) -> f64 {
    let spin = SpinOrientation::new(theta0, 0.0);
    theta_of(spin.cos_half(), spin.sin_half(), after_field_exponent(z, t_after, app))
}

/// Post-magnet z velocity written with `tanh`, exactly as the textbook form
/// `u (tanh(w) + cos t0) / (1 + tanh(w) cos t0)`. Loses precision when
/// `cos t0 = -1` and `tanh(w)` rounds to 1; the integrator uses the
/// equivalent [`PureStateGuide::velocity`].
pub fn drift_velocity_tanh_form(z: f64, t_after: f64, theta0: f64, app: &Apparatus) -> f64 {
    let th = after_field_exponent(z, t_after, app).tanh();
    let c0 = SpinOrientation::new(theta0, 0.0).cos_theta();
    app.derived.u * (th + c0) / (1.0 + th * c0)
}

/// Integration step sizes for the two phases of the flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub in_field: f64,
    pub after_field: f64,
}

impl StepSizes {
    /// `dt / 2000` inside the magnet, `t_D / 5000` after it.
    pub fn default_for(app: &Apparatus) -> Self {
        Self {
            in_field: app.derived.dt_transit / 2000.0,
            after_field: app.derived.t_decoherence / 5000.0,
        }
    }

    pub fn uniform(dt: f64) -> Self {
        Self {
            in_field: dt,
            after_field: dt,
        }
    }
}

/// States recorded by a run besides the full sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_state: ParticleState,
    /// State at `dt + t_D`, when the run reaches it.
    pub decision_state: Option<ParticleState>,
    pub steps: usize,
}

/// A sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<ParticleState>,
    pub outcome: Outcome,
    pub initial_spin: SpinOrientation,
    pub config: PhysicalConfig,
}

/// Closed-form guidance for a particle whose spinor was prepared in a pure
/// spin state.
#[derive(Debug, Clone, Copy)]
pub struct PureStateGuide {
    apparatus: Apparatus,
    initial_spin: SpinOrientation,
    cos_half: f64,
    sin_half: f64,
}

impl PureStateGuide {
    pub fn new(apparatus: Apparatus, initial_spin: SpinOrientation) -> Self {
        Self {
            apparatus,
            initial_spin,
            cos_half: initial_spin.cos_half(),
            sin_half: initial_spin.sin_half(),
        }
    }

    pub fn apparatus(&self) -> &Apparatus {
        &self.apparatus
    }

    pub fn initial_spin(&self) -> &SpinOrientation {
        &self.initial_spin
    }

    /// The analytic spinor that drives this guide.
    pub fn wave(&self) -> PureStateWave {
        PureStateWave::new(self.apparatus, self.initial_spin)
    }

    fn exponent(&self, z: f64, t: f64) -> f64 {
        let exit = self.apparatus.t_exit();
        if t <= exit {
            in_field_exponent(z, t, &self.apparatus)
        } else {
            after_field_exponent(z, t - exit, &self.apparatus)
        }
    }

    /// `cos(theta)` at `(z, t)`, `t` from the magnet entry.
    pub fn cos_theta(&self, z: f64, t: f64) -> f64 {
        cos_theta_of(self.cos_half * self.cos_half, self.sin_half * self.sin_half, self.exponent(z, t))
    }

    pub fn theta(&self, z: f64, t: f64) -> f64 {
        theta_of(self.cos_half, self.sin_half, self.exponent(z, t))
    }

    /// z velocity at `(z, t)`.
    pub fn velocity(&self, z: f64, t: f64) -> f64 {
        let exit = self.apparatus.t_exit();
        let scale = if t <= exit {
            self.apparatus.derived.field_acceleration * t
        } else {
            self.apparatus.derived.u
        };
        scale * self.cos_theta(z, t)
    }

    /// Spin orientation carried by the particle; the azimuth stays at its
    /// initial value.
    pub fn spin_at(&self, z: f64, t: f64) -> SpinOrientation {
        SpinOrientation::with_phase(self.theta(z, t), self.initial_spin.phi, self.initial_spin.chi)
    }

    /// Initial state at the magnet entry.
    pub fn start(&self, x0: f64, z0: f64) -> ParticleState {
        ParticleState {
            t: 0.0,
            x: x0,
            z: z0,
            y: 0.0,
            spin: self.spin_at(z0, 0.0),
        }
    }

    /// Classifies the spin at a state: `+` when it points to the up side.
    pub fn outcome_of(&self, state: &ParticleState) -> Outcome {
        let c = self.cos_theta(state.z, state.t);
        if c > 0.0 {
            Outcome::Plus
        } else if c < 0.0 {
            Outcome::Minus
        } else {
            Outcome::Undecided
        }
    }

    /// RK4 step-size limit `1 / L` from the Lipschitz constant of the z
    /// velocity at the end of the step.
    pub fn stability_bound(&self, t_end: f64) -> f64 {
        let app = &self.apparatus;
        let s2 = app.config.sigma0 * app.config.sigma0;
        let exit = app.t_exit();
        let lipschitz = if t_end <= exit {
            let a = app.derived.field_acceleration.abs();
            a * t_end * (a * t_end * t_end / (2.0 * s2))
        } else {
            app.derived.u.abs() * app.packet_offset(t_end - exit).abs() / s2
        };
        if lipschitz > 0.0 {
            1.0 / lipschitz
        } else {
            f64::INFINITY
        }
    }

    fn rk4(&self, state: &ParticleState, dt: f64) -> ParticleState {
        let (t, z) = (state.t, state.z);
        let h2 = 0.5 * dt;
        let k1 = self.velocity(z, t);
        let k2 = self.velocity(z + h2 * k1, t + h2);
        let k3 = self.velocity(z + h2 * k2, t + h2);
        let k4 = self.velocity(z + dt * k3, t + dt);
        let z_new = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_new = t + dt;
        ParticleState {
            t: t_new,
            x: state.x,
            z: z_new,
            y: self.apparatus.config.v0 * t_new,
            spin: self.spin_at(z_new, t_new),
        }
    }

    fn check_step(&self, state: &ParticleState, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSpec(format!("step must be positive, got {dt}")));
        }
        let bound = self.stability_bound(state.t + dt);
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
        Ok(())
    }

    /// One RK4 step inside the magnet; the step may end at the exit but not
    /// beyond it.
    pub fn step_in_field(&self, state: &ParticleState, dt: f64) -> Result<ParticleState> {
        let exit = self.apparatus.t_exit();
        if state.t + dt > exit * (1.0 + 1e-12) || state.t < 0.0 {
            return Err(Error::PhaseBoundary {
                t: state.t,
                dt,
                boundary: exit,
            });
        }
        self.check_step(state, dt)?;
        Ok(self.rk4(state, dt))
    }

    /// One RK4 step in free flight after the magnet.
    pub fn step_after_field(&self, state: &ParticleState, dt: f64) -> Result<ParticleState> {
        let exit = self.apparatus.t_exit();
        if state.t < exit * (1.0 - 1e-12) {
            return Err(Error::PhaseBoundary {
                t: state.t,
                dt,
                boundary: exit,
            });
        }
        self.check_step(state, dt)?;
        Ok(self.rk4(state, dt))
    }

    /// Integrates from `initial` to `t_end`, calling `observer` on every
    /// state including the first. Steps are shortened so that the magnet
    /// exit and the decision time `dt + t_D` are hit exactly.
    pub fn run<F>(&self, initial: &ParticleState, t_end: f64, steps: StepSizes, mut observer: F) -> Result<RunSummary>
    where
        F: FnMut(&ParticleState),
    {
        if !(t_end > initial.t) {
            return Err(Error::InvalidSpec(format!(
                "t_end = {t_end} must exceed the start time {}",
                initial.t
            )));
        }
        if !(steps.in_field > 0.0 && steps.after_field > 0.0) {
            return Err(Error::InvalidSpec("step sizes must be positive".into()));
        }
        let exit = self.apparatus.t_exit();
        let decision = self.apparatus.t_decision();
        let mut marks = vec![initial.t];
        for m in [exit, decision] {
            if m > initial.t && m < t_end {
                marks.push(m);
            }
        }
        marks.push(t_end);

        let mut state = *initial;
        observer(&state);
        let mut decision_state = (initial.t == decision).then_some(state);
        let mut count = 0;
        for seg in marks.windows(2) {
            let (t0, t1) = (seg[0], seg[1]);
            let in_field = t1 <= exit;
            let target = if in_field { steps.in_field } else { steps.after_field };
            let n = (((t1 - t0) / target) - 1e-9).ceil().max(1.0) as usize;
            let h = (t1 - t0) / n as f64;
            for k in 1..=n {
                let t_next = if k == n { t1 } else { t0 + k as f64 * h };
                let dt = t_next - state.t;
                let next = if in_field {
                    self.step_in_field(&state, dt)?
                } else {
                    self.step_after_field(&state, dt)?
                };
                state = ParticleState { t: t_next, ..next };
                count += 1;
                observer(&state);
            }
            if t1 == decision {
                decision_state = Some(state);
            }
        }
        Ok(RunSummary {
            final_state: state,
            decision_state,
            steps: count,
        })
    }

    /// Dense trajectory from `initial` to `t_end`. The outcome is decided
    /// only when `t_end` reaches `dt + t_D`.
    pub fn trajectory(&self, initial: &ParticleState, t_end: f64, steps: StepSizes) -> Result<Trajectory> {
        let mut samples = Vec::new();
        let summary = self.run(initial, t_end, steps, |s| samples.push(*s))?;
        let outcome = if t_end >= self.apparatus.t_decision() {
            self.outcome_of(&summary.final_state)
        } else {
            Outcome::Undecided
        };
        Ok(Trajectory {
            samples,
            outcome,
            initial_spin: self.initial_spin,
            config: self.apparatus.config,
        })
    }

    /// Spin vector at a state, computed from the spinor at the particle
    /// position rather than from the closed-form angle.
    pub fn spin_vector_at(&self, state: &ParticleState) -> Result<SpinVector> {
        let psi = self.wave().spinor(Position2D::new(state.x, state.z), state.t)?;
        spin_vector(&psi, self.apparatus.config.hbar)
    }
}

/// Integrates with a single step size `dt_max` in both phases.
pub fn integrate(initial: &ParticleState, t_end: f64, dt_max: f64, guide: &PureStateGuide) -> Result<Trajectory> {
    guide.trajectory(initial, t_end, StepSizes::uniform(dt_max))
}

/// `true` when `theta` lies on the up side of the equator.
pub fn points_up(theta: f64) -> bool {
    theta < FRAC_PI_2
}

/// `theta_a + theta_b - pi`, the defect of spin opposition.
pub fn opposition_defect(theta_a: f64, theta_b: f64) -> f64 {
    theta_a + theta_b - PI
}
