//! Pilot-wave (de Broglie-Bohm) simulation of spin measurement.
//!
//! The crate covers the single-particle Stern-Gerlach experiment and the
//! two-step EPR-B experiment in which the singlet is carried by two
//! single-particle spinors whose spin orientations stay opposite.
//!
//! * [`config`]: apparatus constants and derived quantities.
//! * [`analytic`]: closed-form spinors and densities.
//! * [`guidance`]: velocity and spin fields, trajectory integration.
//! * [`sterngerlach`]: outcome threshold and Monte-Carlo ensembles.
//! * [`eprb`]: the two-step EPR-B experiment and correlation statistics.
//! * [`oracle`]: split-operator Pauli solver used to check the closed forms.
//! * [`io`]: CSV and JSON output.

pub mod analytic;
pub mod guidance;
pub mod io;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod sterngerlach;
pub mod config;
pub mod eprb;
pub mod error;
pub mod outcome;
pub mod spinor;

pub use analytic::Position2D;
pub use config::{default_config, derive, Apparatus, DerivedQuantities, PhysicalConfig};
pub use error::{Error, Result};
pub use guidance::{ParticleState, PureStateGuide, SpinVector, StepSizes, Trajectory};
pub use outcome::{Outcome, Sign};
pub use spinor::{SpinOrientation, Spinor};
