//! Apparatus constants and the quantities derived from them.
//!
//! Everything is SI. The magnet is the idealized gradient field
//! `B = (B'x, 0, B0 - B'z)` of length `delta_l`, crossed at constant speed
//! `v0` along `y`; the screen sits `screen_distance` after the magnet exit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bohr magneton, J/T (CODATA 2018).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant, J s (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Physical parameters of a Stern-Gerlach apparatus and the atoms crossing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConfig {
    /// Atomic mass, kg.
    pub mass: f64,
    /// Beam speed along y, m/s.
    pub v0: f64,
    /// Width of the Gaussian wave packet, m.
    pub sigma0: f64,
    /// Uniform field offset, T.
    #[serde(rename = "B0")]
    pub b0: f64,
    /// Magnitude of the field gradient, T/m.
    #[serde(rename = "Bprime0")]
    pub bprime0: f64,
    /// Length of the magnet along y, m.
    pub delta_l: f64,
    /// Magnetic moment, J/T.
    pub mu: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Distance from the magnet exit to the screen, m.
    pub screen_distance: f64,
    /// Reverses the whole field (`B -> -B`), which flips the sign of the
    /// gradient seen by the atoms.
    pub field_reversed: bool,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Silver atoms in the textbook Stern-Gerlach setup.
pub fn default_config() -> PhysicalConfig {
    PhysicalConfig {
        mass: 1.8e-25,
        v0: 500.0,
        sigma0: 1e-4,
        b0: 5.0,
        bprime0: 1e3,
        delta_l: 1e-2,
        mu: BOHR_MAGNETON,
        hbar: HBAR,
        screen_distance: 0.2,
        field_reversed: false,
    }
}

impl PhysicalConfig {
    /// Reads a JSON document; absent keys keep their default values.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: PhysicalConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("malformed config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("v0", self.v0),
            ("sigma0", self.sigma0),
            ("B0", self.b0),
            ("Bprime0", self.bprime0),
            ("delta_l", self.delta_l),
            ("mu", self.mu),
            ("hbar", self.hbar),
            ("screen_distance", self.screen_distance),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        let dt = self.delta_l / self.v0;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "transit time delta_l / v0 = {dt} is not finite and positive"
            )));
        }
        Ok(())
    }

    /// The same apparatus with the field direction flipped.
    pub fn reversed(mut self) -> Self {
        self.field_reversed = !self.field_reversed;
        self
    }

    /// +1 for the nominal field orientation, -1 when reversed.
    pub fn field_sign(&self) -> f64 {
        if self.field_reversed {
            -1.0
        } else {
            1.0
        }
    }

    /// Signed field gradient `-dBz/dz` as seen by the atoms, T/m.
    pub fn signed_gradient(&self) -> f64 {
        self.field_sign() * self.bprime0
    }

    /// Signed uniform field component, T.
    pub fn signed_offset(&self) -> f64 {
        self.field_sign() * self.b0
    }

    /// Flight time from the magnet exit to the screen.
    pub fn screen_time(&self) -> f64 {
        self.screen_distance / self.v0
    }
}

/// Quantities fixed by the apparatus: transit time, exit displacement,
/// drift speed and the time at which the two spin packets separate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Time spent inside the magnet, s.
    pub dt_transit: f64,
    /// Displacement of the spin-up packet at the magnet exit, m (signed).
    pub z_delta: f64,
    /// Post-magnet drift speed of the spin-up packet, m/s (signed).
    pub u: f64,
    /// Time after the exit at which the packets are 3 sigma apart, s.
    pub t_decoherence: f64,
    /// `mu B' / m`, the acceleration of the spin-up packet, m/s^2 (signed).
    pub field_acceleration: f64,
}

/// Computes the derived apparatus quantities.
///
/// With a reversed field `u` and `z_delta` change sign; `t_decoherence`
/// depends only on their magnitudes.
pub fn derive(config: &PhysicalConfig) -> Result<DerivedQuantities> {
    config.validate()?;
    let gradient = config.signed_gradient();
    let dt = config.delta_l / config.v0;
    let z_delta = config.mu * gradient * dt * dt / (2.0 * config.mass);
    let u = config.mu * gradient * dt / config.mass;
    if !(u.is_finite() && u.abs() > 0.0) {
        return Err(Error::NonPositiveDrift(u));
    }
    let t_decoherence = (3.0 * config.sigma0 - z_delta.abs()) / u.abs();
    if !(t_decoherence.is_finite() && t_decoherence > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "packets already separated at the magnet exit (z_delta = {z_delta} m >= 3 sigma0)"
        )));
    }
    Ok(DerivedQuantities {
        dt_transit: dt,
        z_delta,
        u,
        t_decoherence,
        field_acceleration: config.mu * gradient / config.mass,
    })
}

/// A validated configuration bundled with its derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Apparatus {
    pub config: PhysicalConfig,
    pub derived: DerivedQuantities,
}

impl Apparatus {
    pub fn new(config: PhysicalConfig) -> Result<Self> {
        let derived = derive(&config)?;
        Ok(Self { config, derived })
    }

    /// The default silver-atom apparatus.
    pub fn silver() -> Self {
        Self::new(default_config()).expect("default configuration is valid")
    }

    /// The same apparatus with the field reversed.
    pub fn reversed(&self) -> Self {
        Self::new(self.config.reversed()).expect("reversal preserves validity")
    }

    /// Magnet exit time measured from the magnet entry.
    pub fn t_exit(&self) -> f64 {
        self.derived.dt_transit
    }

    /// Time from magnet entry at which the outcome is read off (`dt + t_D`).
    pub fn t_decision(&self) -> f64 {
        self.derived.dt_transit + self.derived.t_decoherence
    }

    /// Post-exit time at which atoms reach the screen.
    pub fn screen_time(&self) -> f64 {
        self.config.screen_time()
    }

    /// Packet separation `z_delta + u t` after `t_after` seconds of free flight (signed).
    pub fn packet_offset(&self, t_after: f64) -> f64 {
        self.derived.z_delta + self.derived.u * t_after
    }
}
