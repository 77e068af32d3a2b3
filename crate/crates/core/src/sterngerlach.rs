//! Single-particle Stern-Gerlach experiment: outcome prediction from the
//! initial position, trajectory ensembles and screen statistics.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{pure_state_cdf, sg_mixture_cdf};
use crate::config::Apparatus;
use crate::error::{Error, Result};
use crate::guidance::{ParticleState, PureStateGuide, StepSizes};
use crate::outcome::Outcome;
use crate::rng;
use crate::spinor::SpinOrientation;
use crate::stats::{chi_square_against_cdf, normal_quantile, ChiSquareTest, Histogram, Proportion};

/// Initial positions below this distance from the threshold, in units of
/// `sigma0`, are excluded from the predictor-agreement count.
pub const SEPARATRIX_BAND: f64 = 1e-3;

/// Position `sigma0 Phi^-1(sin^2(theta0/2))` separating the `+` and `-`
/// outcomes of a pure state.
pub fn threshold(theta0: f64, sigma0: f64) -> Result<f64> {
    if !(theta0 > 0.0 && theta0 < PI) {
        return Err(Error::InvalidAngle(theta0));
    }
    // (1 - cos t)/2 is exactly 1/2 on the equator
    let p = 0.5 * (1.0 - SpinOrientation::new(theta0, 0.0).cos_theta());
    Ok(sigma0 * normal_quantile(p))
}

/// Outcome predicted from the initial position alone. The poles are
/// eigenstates and give a certain result.
pub fn predict(z0: f64, theta0: f64, sigma0: f64) -> Outcome {
    if theta0 <= 0.0 {
        return Outcome::Plus;
    }
    if theta0 >= PI {
        return Outcome::Minus;
    }
    let zt = threshold(theta0, sigma0).expect("angle checked above");
    if z0 > zt {
        Outcome::Plus
    } else if z0 < zt {
        Outcome::Minus
    } else {
        Outcome::Undecided
    }
}

/// [`predict`] for a given apparatus: a reversed field mirrors the
/// trajectories, so the up side becomes the down side.
pub fn predict_in(app: &Apparatus, z0: f64, theta0: f64) -> Outcome {
    let z = if app.config.field_reversed { -z0 } else { z0 };
    predict(z, theta0, app.config.sigma0)
}

/// Law of the polar angle in a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixtureLaw {
    /// `theta0` uniform on `[0, pi]`.
    #[default]
    Uniform,
    /// `cos(theta0)` uniform on `[-1, 1]`, the rotation-invariant measure.
    SinTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Pure { theta0: f64, phi0: f64 },
    Mixture { law: MixtureLaw },
}

/// Ensemble run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGRunSpec {
    pub n_particles: u64,
    pub source: Source,
    pub seed: u64,
    /// Free-flight time after the magnet exit; defaults to the screen time.
    pub t_final: Option<f64>,
}

impl SGRunSpec {
    pub fn pure(n_particles: u64, theta0: f64, seed: u64) -> Self {
        Self {
            n_particles,
            source: Source::Pure { theta0, phi0: 0.0 },
            seed,
            t_final: None,
        }
    }

    pub fn mixture(n_particles: u64, seed: u64) -> Self {
        Self {
            n_particles,
            source: Source::Mixture {
                law: MixtureLaw::Uniform,
            },
            seed,
            t_final: None,
        }
    }

    pub fn t_final_or_default(&self, app: &Apparatus) -> f64 {
        self.t_final.unwrap_or_else(|| app.screen_time())
    }

    pub fn validate(&self, app: &Apparatus) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidSpec("n_particles must be at least 1".into()));
        }
        let tf = self.t_final_or_default(app);
        if !(tf >= app.derived.t_decoherence) || !tf.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "t_final = {tf} s is shorter than the decoherence time {} s",
                app.derived.t_decoherence
            )));
        }
        if let Source::Pure { theta0, phi0 } = self.source {
            if !(0.0..=PI).contains(&theta0) {
                return Err(Error::InvalidAngle(theta0));
            }
            if !phi0.is_finite() {
                return Err(Error::InvalidAngle(phi0));
            }
        }
        Ok(())
    }
}

/// Knobs of an ensemble run that do not change the physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub steps: Option<StepSizes>,
    /// Recompute `|s|` from the spinor at every sample.
    pub check_spin_norm: bool,
    /// Number of leading particles whose trajectories are kept.
    pub trace: u64,
    /// Keep every `trace_stride`-th sample of a traced trajectory.
    pub trace_stride: usize,
    pub histogram_bins: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            steps: None,
            check_spin_norm: false,
            trace: 0,
            trace_stride: 50,
            histogram_bins: 60,
        }
    }
}

/// Initial condition of one particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleDraw {
    pub index: u64,
    pub x0: f64,
    pub z0: f64,
    pub theta0: f64,
    pub phi0: f64,
}

/// Draws particle `index`: `z0`, `x0` from `N(0, sigma0^2)` then, for a
/// mixture, `theta0` and `phi0`.
pub fn sample_particle(spec: &SGRunSpec, index: u64, sigma0: f64) -> ParticleDraw {
    let mut r = rng::stream(spec.seed, index);
    let z0 = sigma0 * r.sample::<f64, _>(StandardNormal);
    let x0 = sigma0 * r.sample::<f64, _>(StandardNormal);
    let (theta0, phi0) = match spec.source {
        Source::Pure { theta0, phi0 } => (theta0, phi0),
        Source::Mixture { law } => {
            let u: f64 = r.random();
            let theta = match law {
                MixtureLaw::Uniform => PI * u,
                MixtureLaw::SinTheta => (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(),
            };
            (theta, TAU * r.random::<f64>())
        }
    };
    ParticleDraw {
        index,
        x0,
        z0,
        theta0,
        phi0,
    }
}

/// Result for one particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub draw: ParticleDraw,
    /// Outcome read at `dt + t_D`.
    pub outcome: Outcome,
    pub predicted: Outcome,
    pub z_decision: f64,
    /// Impact position at the end of the run.
    pub z_final: f64,
    /// Largest `| |s| / (hbar/2) - 1 |` seen, when checked.
    pub spin_norm_deviation: Option<f64>,
    /// Thinned samples, for traced particles.
    pub trace: Option<Vec<ParticleState>>,
}

/// Integrates one particle from its draw.
pub fn simulate_particle(
    app: &Apparatus,
    draw: &ParticleDraw,
    t_final: f64,
    options: &RunOptions,
) -> Result<ParticleRecord> {
    let guide = PureStateGuide::new(*app, SpinOrientation::new(draw.theta0, draw.phi0));
    let steps = options.steps.unwrap_or_else(|| StepSizes::default_for(app));
    let start = guide.start(draw.x0, draw.z0);
    let keep = draw.index < options.trace;
    let stride = options.trace_stride.max(1);
    let half_hbar = 0.5 * app.config.hbar;
    let mut trace = Vec::new();
    let mut worst: f64 = 0.0;
    let mut check_error = None;
    let mut k = 0usize;
    let summary = guide.run(&start, app.t_exit() + t_final, steps, |s| {
        if keep && k % stride == 0 {
            trace.push(*s);
        }
        k += 1;
        if options.check_spin_norm && check_error.is_none() {
            match guide.spin_vector_at(s) {
                Ok(v) => worst = worst.max((v.norm() / half_hbar - 1.0).abs()),
                Err(e) => check_error = Some(e),
            }
        }
    });
    let summary = summary.and_then(|s| check_error.map_or(Ok(s), Err));
    let summary = summary.map_err(|e| Error::IntegrationFailure {
        index: draw.index,
        source: Box::new(e),
    })?;
    if keep && trace.last().map(|s| s.t) != Some(summary.final_state.t) {
        trace.push(summary.final_state);
    }
    let decision = summary
        .decision_state
        .expect("t_final >= t_D puts the decision time inside the run");
    Ok(ParticleRecord {
        draw: *draw,
        outcome: guide.outcome_of(&decision),
        predicted: predict_in(app, draw.z0, draw.theta0),
        z_decision: decision.z,
        z_final: summary.final_state.z,
        spin_norm_deviation: options.check_spin_norm.then_some(worst),
        trace: keep.then_some(trace),
    })
}

/// Aggregated ensemble statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGOutcomeStats {
    pub n_particles: u64,
    pub n_plus: u64,
    pub n_minus: u64,
    pub n_undecided: u64,
    pub empirical_p_plus: Proportion,
    pub impact_histogram: Histogram,
    /// Goodness of fit of the impact histogram against the analytic density.
    pub impact_chi_square: Option<ChiSquareTest>,
    /// Particles whose computed and predicted outcomes differ.
    pub predictor_mismatches: u64,
    /// Particles farther than the separatrix band from the threshold.
    pub n_outside_band: u64,
    pub mismatches_outside_band: u64,
    pub max_spin_norm_deviation: Option<f64>,
}

/// An ensemble run: statistics plus per-particle records in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGRun {
    pub spec: SGRunSpec,
    pub t_final: f64,
    pub stats: SGOutcomeStats,
    pub records: Vec<ParticleRecord>,
}

fn outside_band(app: &Apparatus, draw: &ParticleDraw) -> bool {
    let s = app.config.sigma0;
    match threshold(draw.theta0, s) {
        Ok(zt) => {
            let z = if app.config.field_reversed { -draw.z0 } else { draw.z0 };
            (z - zt).abs() > SEPARATRIX_BAND * s
        }
        Err(_) => true,
    }
}

/// Runs the ensemble in parallel on the current rayon pool. Results do not
/// depend on the number of workers.
pub fn run_ensemble(spec: &SGRunSpec, app: &Apparatus, options: &RunOptions) -> Result<SGRun> {
    spec.validate(app)?;
    let t_final = spec.t_final_or_default(app);
    let sigma0 = app.config.sigma0;
    let records: Vec<ParticleRecord> = (0..spec.n_particles)
        .into_par_iter()
        .map(|i| simulate_particle(app, &sample_particle(spec, i, sigma0), t_final, options))
        .collect::<Result<_>>()?;
    let stats = aggregate(spec, app, t_final, &records, options.histogram_bins)?;
    Ok(SGRun {
        spec: *spec,
        t_final,
        stats,
        records,
    })
}

fn aggregate(
    spec: &SGRunSpec,
    app: &Apparatus,
    t_final: f64,
    records: &[ParticleRecord],
    bins: usize,
) -> Result<SGOutcomeStats> {
    let sigma0 = app.config.sigma0;
    let reach = app.packet_offset(t_final).abs() + 5.0 * sigma0;
    let mut hist = Histogram::new(-reach, reach, bins.max(1))?;
    let (mut n_plus, mut n_minus, mut n_undecided) = (0, 0, 0);
    let (mut mismatches, mut outside, mut mismatches_outside) = (0, 0, 0);
    let mut worst: Option<f64> = None;
    for r in records {
        match r.outcome {
            Outcome::Plus => n_plus += 1,
            Outcome::Minus => n_minus += 1,
            Outcome::Undecided => n_undecided += 1,
        }
        hist.add(r.z_final);
        let out = outside_band(app, &r.draw);
        outside += u64::from(out);
        if r.outcome != r.predicted {
            mismatches += 1;
            mismatches_outside += u64::from(out);
        }
        if let Some(d) = r.spin_norm_deviation {
            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
        }
    }
    // packet offsets are signed, so a reversed field is already accounted for
    let chi = match spec.source {
        Source::Mixture { .. } => {
            chi_square_against_cdf(&hist, |z| sg_mixture_cdf(z, t_final, app).unwrap_or(f64::NAN))
        }
        Source::Pure { theta0, .. } => {
            chi_square_against_cdf(&hist, |z| pure_state_cdf(z, t_final, theta0, app).unwrap_or(f64::NAN))
        }
    }
    .ok();
    Ok(SGOutcomeStats {
        n_particles: records.len() as u64,
        n_plus,
        n_minus,
        n_undecided,
        empirical_p_plus: Proportion::new(n_plus, records.len() as u64),
        impact_histogram: hist,
        impact_chi_square: chi,
        predictor_mismatches: mismatches,
        n_outside_band: outside,
        mismatches_outside_band: mismatches_outside,
        max_spin_norm_deviation: worst,
    })
}
