//! Two-step EPR-B experiment with the singlet replaced by two one-body
//! spinors.
//!
//! Step 1: particle A crosses a Stern-Gerlach magnet along z while B sits
//! still; B's spin is slaved to A's, `theta_B = pi - theta_A` and
//! `phi_B = phi_A - pi`. Step 2: once A is decided, B is in a spin
//! eigenstate along z and crosses a second magnet whose axis `z'` makes an
//! angle `delta` with z. That is a single-particle run with the polar angle
//! of B's spin measured from `z'`.
//!
//! Joint amplitudes use the basis order `(++, +-, -+, --)`, A first.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{branch_envelope, branch_envelope_1d, gaussian_envelope, gaussian_envelope_1d, f_envelope, Position2D};
use crate::config::Apparatus;
use crate::error::{Error, Result};
use crate::guidance::{spin_vector, PureStateGuide, StepSizes};
use crate::outcome::Sign;
use crate::rng;
use crate::spinor::{reduce_angle, SpinOrientation, Spinor};
use crate::stats::Proportion;

/// Four complex amplitudes in the order `(++, +-, -+, --)`.
pub type PairAmplitudes = [Complex64; 4];

/// Spin pattern of the singlet, `|+-> - |-+>`, without the `1/sqrt 2`.
pub const SINGLET_PATTERN: [f64; 4] = [0.0, 1.0, -1.0, 0.0];

/// Initial condition of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInitial {
    pub pair_id: u64,
    pub theta_a0: f64,
    pub phi_a0: f64,
    pub theta_b0: f64,
    pub phi_b0: f64,
    pub z0a: f64,
    pub x0a: f64,
    pub z0b: f64,
    pub x0b: f64,
}

impl PairInitial {
    /// A pair with opposite spins built from A's angles.
    pub fn new(pair_id: u64, theta_a0: f64, phi_a0: f64, a: Position2D, b: Position2D) -> Self {
        let spin_b = slave_b_spin(theta_a0, phi_a0);
        Self {
            pair_id,
            theta_a0,
            phi_a0,
            theta_b0: spin_b.theta,
            phi_b0: spin_b.phi,
            z0a: a.z,
            x0a: a.x,
            z0b: b.z,
            x0b: b.x,
        }
    }

    pub fn spin_a(&self) -> SpinOrientation {
        SpinOrientation::new(self.theta_a0, self.phi_a0)
    }

    pub fn spin_b(&self) -> SpinOrientation {
        SpinOrientation::new(self.theta_b0, self.phi_b0)
    }
}

/// Draws pair `pair_id`: `theta_A ~ U[0, pi]`, `phi_A ~ U[0, 2 pi)`, then
/// `z0A, z0B, x0A, x0B ~ N(0, sigma0^2)`.
pub fn sample_pair(pair_id: u64, seed: u64, sigma0: f64) -> PairInitial {
    let mut r = rng::stream(seed, pair_id);
    let theta = PI * r.random::<f64>();
    let phi = TAU * r.random::<f64>();
    let mut g = || sigma0 * r.sample::<f64, _>(StandardNormal);
    let (z0a, z0b, x0a, x0b) = (g(), g(), g(), g());
    PairInitial::new(pair_id, theta, phi, Position2D::new(x0a, z0a), Position2D::new(x0b, z0b))
}

/// Singlet outcome probabilities for analyzers at relative angle `delta`.
pub fn singlet_probabilities(delta: f64) -> [f64; 4] {
    let s2 = 0.5 * (0.5 * delta).sin().powi(2);
    let c2 = 0.5 * (0.5 * delta).cos().powi(2);
    [s2, c2, c2, s2]
}

/// `E(delta) = -cos(delta)`.
pub fn singlet_correlation(delta: f64) -> f64 {
    -delta.cos()
}

/// Rows give `|+_B>` and `|-_B>` in the rotated basis `(|+'_B>, |-'_B>)`.
pub fn rotated_basis_coefficients(delta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (0.5 * delta).sin_cos();
    [[c, s], [-s, c]]
}

/// Singlet coefficients on `(|+A +'B>, |+A -'B>, |-A +'B>, |-A -'B>)`.
pub fn singlet_in_rotated_basis(delta: f64) -> [f64; 4] {
    let m = rotated_basis_coefficients(delta);
    let k = FRAC_1_SQRT_2;
    // (|+A>|-B> - |-A>|+B>) / sqrt 2 with |+-B> expanded
    [k * m[1][0], k * m[1][1], -k * m[0][0], -k * m[0][1]]
}

/// Spin factor `(cos(t/2), sin(t/2) e^{i p})` of a one-body spinor.
fn spin_column(spin: &SpinOrientation) -> [Complex64; 2] {
    [
        Complex64::new(spin.cos_half(), 0.0),
        Complex64::from_polar(spin.sin_half(), spin.phi),
    ]
}

/// Antisymmetrized product of the two initial one-body spinors,
/// `Psi_A(r_A) Psi_B(r_B) - Psi_A(r_B) Psi_B(r_A)` in spin components.
/// Both particles start in the Gaussian of width `sigma0`.
pub fn antisymmetrized_initial(pair: &PairInitial, r_a: Position2D, r_b: Position2D, sigma0: f64) -> PairAmplitudes {
    let one_body = |spin: &SpinOrientation, r: Position2D| spin_column(spin).map(|c| c * gaussian_envelope(r, sigma0));
    let (spin_a, spin_b) = (pair.spin_a(), pair.spin_b());
    let (a_at_a, b_at_b) = (one_body(&spin_a, r_a), one_body(&spin_b, r_b));
    let (a_at_b, b_at_a) = (one_body(&spin_a, r_b), one_body(&spin_b, r_a));
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            out[2 * i + j] = a_at_a[i] * b_at_b[j] - a_at_b[j] * b_at_a[i];
        }
    }
    out
}

/// A's spinor after its magnet, `t_after` seconds past the exit:
/// `cos(t/2) f+ |+> + sin(t/2) e^{i p} f- |->`.
pub fn psi_a_after_step1(r_a: Position2D, t_after: f64, pair: &PairInitial, app: &Apparatus) -> Result<Spinor> {
    let c = spin_column(&pair.spin_a());
    Ok(Spinor::new(
        c[0] * f_envelope(r_a, t_after, Sign::Plus, app)?,
        c[1] * f_envelope(r_a, t_after, Sign::Minus, app)?,
    ))
}

/// B's spin orientation slaved to A's.
pub fn slave_b_spin(theta_a: f64, phi_a: f64) -> SpinOrientation {
    SpinOrientation::new(PI - theta_a, reduce_angle(phi_a - PI))
}

/// B's spinor during step 1: the stationary initial Gaussian times the
/// slaved spin.
pub fn psi_b_during_step1(r_b: Position2D, theta_b: f64, phi_b: f64, sigma0: f64) -> Spinor {
    let c = spin_column(&SpinOrientation::new(theta_b, phi_b));
    let f = gaussian_envelope(r_b, sigma0);
    Spinor::new(c[0] * f, c[1] * f)
}

/// Guidance velocity of B during step 1. For `f(r) chi` with a real `f`,
/// `Im(Psi^dag grad Psi) = f grad f Im(chi^dag chi)` and `chi^dag chi` is
/// real, so the result is exactly zero.
pub fn b_velocity_step1(r_b: Position2D, spin_b: &SpinOrientation, app: &Apparatus) -> [f64; 2] {
    let s2 = app.config.sigma0 * app.config.sigma0;
    let chi = Spinor::from_orientation(spin_b);
    let overlap = chi.inner(&chi);
    let k = app.config.hbar / app.config.mass * overlap.im / overlap.re;
    [k * (-r_b.x / (2.0 * s2)), k * (-r_b.z / (2.0 * s2))]
}

/// Signs of the two measurements and when they were completed (from A's
/// magnet entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub a: Sign,
    pub b: Sign,
    pub delta: f64,
    pub t_a_decided: f64,
    pub t_b_decided: f64,
}

/// Everything recorded for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair: PairInitial,
    pub outcome: PairOutcome,
    /// Polar angle of B's spin from the `z'` axis at the start of step 2.
    pub theta_b_step2: f64,
    pub z0b_prime: f64,
    pub x0b_prime: f64,
    /// Largest `|theta_A + theta_B - pi|` over the step-1 samples.
    pub max_opposition_defect: f64,
    /// Largest `|phi_B - (phi_A - pi)|` (mod 2 pi) over the step-1 samples.
    pub max_azimuth_defect: f64,
    /// Largest `|r_B(t) - r_B(0)|` over step 1.
    pub b_displacement: f64,
    /// Largest `| |s| / (hbar/2) - 1 |` for A and B over step 1 and for B
    /// over step 2, when checked.
    pub spin_norm_deviation: Option<f64>,
    pub samples_step1: usize,
}

/// Options of a pair run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairOptions {
    pub steps: Option<StepSizes>,
    pub check_spin_norm: bool,
}

/// Effective polar angle of B's spin, relative to `z'`, after A's result:
/// B is `|->` when A is `+` and `|+>` when A is `-`.
pub fn step2_polar_angle(a: Sign, delta: f64) -> f64 {
    match a {
        Sign::Plus => (-delta.cos()).clamp(-1.0, 1.0).acos(),
        Sign::Minus => delta.cos().clamp(-1.0, 1.0).acos(),
    }
}

/// B's initial position in the rotated frame of the second magnet,
/// inverting `x = x' cos d + z' sin d`, `z = -x' sin d + z' cos d`.
pub fn rotate_into_b_frame(r_b: Position2D, delta: f64) -> Position2D {
    let (s, c) = delta.sin_cos();
    Position2D::new(r_b.x * c - r_b.z * s, r_b.x * s + r_b.z * c)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = reduce_angle(a - b);
    d.min(TAU - d)
}

/// Runs both steps for one pair.
pub fn run_pair(pair: &PairInitial, delta: f64, app: &Apparatus, options: &PairOptions) -> Result<PairRecord> {
    let fail = |e: Error| Error::IntegrationFailure {
        index: pair.pair_id,
        source: Box::new(e),
    };
    let steps = options.steps.unwrap_or_else(|| StepSizes::default_for(app));
    let half_hbar = 0.5 * app.config.hbar;
    let sigma0 = app.config.sigma0;

    // step 1
    let guide_a = PureStateGuide::new(*app, pair.spin_a());
    let start = guide_a.start(pair.x0a, pair.z0a);
    let r_b0 = Position2D::new(pair.x0b, pair.z0b);
    let mut r_b = r_b0;
    let mut last_t = start.t;
    let (mut opposition, mut azimuth, mut moved) = (0.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    let mut check_error = None;
    let mut samples = 0usize;
    let summary = guide_a.run(&start, app.t_decision(), steps, |s| {
        samples += 1;
        let spin_b = slave_b_spin(s.spin.theta, s.spin.phi);
        opposition = opposition.max((s.spin.theta + spin_b.theta - PI).abs());
        azimuth = azimuth.max(angle_gap(spin_b.phi, s.spin.phi - PI));
        let v = b_velocity_step1(r_b, &spin_b, app);
        let dt = s.t - last_t;
        last_t = s.t;
        r_b = Position2D::new(r_b.x + v[0] * dt, r_b.z + v[1] * dt);
        moved = moved.max((r_b.x - r_b0.x).abs().max((r_b.z - r_b0.z).abs()));
        if options.check_spin_norm && check_error.is_none() {
            let sb = spin_vector(&psi_b_during_step1(r_b, spin_b.theta, spin_b.phi, sigma0), app.config.hbar);
            match (guide_a.spin_vector_at(s), sb) {
                (Ok(va), Ok(vb)) => {
                    worst = worst.max((va.norm() / half_hbar - 1.0).abs());
                    worst = worst.max((vb.norm() / half_hbar - 1.0).abs());
                }
                (Err(e), _) | (_, Err(e)) => check_error = Some(e),
            }
        }
    });
    let summary = summary.map_err(fail)?;
    if let Some(e) = check_error.take() {
        return Err(fail(e));
    }
    let decided = summary.decision_state.expect("the run ends at the decision time");
    let a = guide_a.outcome_of(&decided).sign().ok_or(Error::UndecidedOutcome {
        pair_id: pair.pair_id,
        particle: 'A',
    })?;
    let t1 = decided.t;

    // step 2
    let theta_b = step2_polar_angle(a, delta);
    let r_prime = rotate_into_b_frame(r_b, delta);
    let spin_b = SpinOrientation::new(theta_b, pair.phi_b0);
    let guide_b = PureStateGuide::new(*app, spin_b);
    let start_b = guide_b.start(r_prime.x, r_prime.z);
    let summary_b = guide_b
        .run(&start_b, app.t_decision(), steps, |s| {
            if options.check_spin_norm && check_error.is_none() {
                match guide_b.spin_vector_at(s) {
                    Ok(v) => worst = worst.max((v.norm() / half_hbar - 1.0).abs()),
                    Err(e) => check_error = Some(e),
                }
            }
        })
        .map_err(fail)?;
    if let Some(e) = check_error {
        return Err(fail(e));
    }
    let decided_b = summary_b.decision_state.expect("the run ends at the decision time");
    let b = guide_b.outcome_of(&decided_b).sign().ok_or(Error::UndecidedOutcome {
        pair_id: pair.pair_id,
        particle: 'B',
    })?;

    Ok(PairRecord {
        pair: *pair,
        outcome: PairOutcome {
            a,
            b,
            delta,
            t_a_decided: t1,
            t_b_decided: t1 + decided_b.t,
        },
        theta_b_step2: theta_b,
        z0b_prime: r_prime.z,
        x0b_prime: r_prime.x,
        max_opposition_defect: opposition,
        max_azimuth_defect: azimuth,
        b_displacement: moved,
        spin_norm_deviation: options.check_spin_norm.then_some(worst),
        samples_step1: samples,
    })
}

/// Joint statistics at one analyzer angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub delta: f64,
    pub n_pairs: u64,
    /// Tallies in the order `(++, +-, -+, --)`.
    pub counts: [u64; 4],
    pub p_hat: [Proportion; 4],
    pub expected: [f64; 4],
    pub e_delta: f64,
    /// `sqrt((1 - E^2) / n)`.
    pub e_std_error: f64,
    pub e_expected: f64,
    pub marginal_a_plus: Proportion,
    pub marginal_b_plus: Proportion,
}

impl CorrelationReport {
    pub fn from_outcomes(delta: f64, outcomes: impl IntoIterator<Item = PairOutcome>) -> Self {
        let mut counts = [0u64; 4];
        for o in outcomes {
            let i = match (o.a, o.b) {
                (Sign::Plus, Sign::Plus) => 0,
                (Sign::Plus, Sign::Minus) => 1,
                (Sign::Minus, Sign::Plus) => 2,
                (Sign::Minus, Sign::Minus) => 3,
            };
            counts[i] += 1;
        }
        let n: u64 = counts.iter().sum();
        let p_hat = counts.map(|c| Proportion::new(c, n));
        let e = if n > 0 {
            (counts[0] as f64 + counts[3] as f64 - counts[1] as f64 - counts[2] as f64) / n as f64
        } else {
            f64::NAN
        };
        Self {
            delta,
            n_pairs: n,
            counts,
            p_hat,
            expected: singlet_probabilities(delta),
            e_delta: e,
            e_std_error: ((1.0 - e * e).max(0.0) / n as f64).sqrt(),
            e_expected: singlet_correlation(delta),
            marginal_a_plus: Proportion::new(counts[0] + counts[1], n),
            marginal_b_plus: Proportion::new(counts[0] + counts[2], n),
        }
    }
}

/// Pairs and their report at one angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprRun {
    pub report: CorrelationReport,
    pub records: Vec<PairRecord>,
}

/// Runs `n_pairs` pairs with ids `first_id..first_id + n_pairs`.
pub fn run_pairs(
    delta: f64,
    n_pairs: u64,
    first_id: u64,
    seed: u64,
    app: &Apparatus,
    options: &PairOptions,
) -> Result<EprRun> {
    if n_pairs == 0 {
        return Err(Error::InvalidSpec("n_pairs must be at least 1".into()));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidAngle(delta));
    }
    let sigma0 = app.config.sigma0;
    let records: Vec<PairRecord> = (first_id..first_id + n_pairs)
        .into_par_iter()
        .map(|id| run_pair(&sample_pair(id, seed, sigma0), delta, app, options))
        .collect::<Result<_>>()?;
    let report = CorrelationReport::from_outcomes(delta, records.iter().map(|r| r.outcome));
    Ok(EprRun { report, records })
}

/// One independent batch per angle; batch `k` uses pair ids starting at
/// `k n_pairs`, so repeated angles get fresh pairs.
pub fn correlation_sweep(
    deltas: &[f64],
    n_pairs: u64,
    seed: u64,
    app: &Apparatus,
    options: &PairOptions,
) -> Result<Vec<EprRun>> {
    deltas
        .iter()
        .enumerate()
        .map(|(k, &d)| run_pairs(d, n_pairs, k as u64 * n_pairs, seed, app, options))
        .collect()
}

/// Analyzer settings of a CHSH test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// `a = 0, a' = pi/2, b = pi/4, b' = 3 pi/4`, where the singlet reaches
    /// `|S| = 2 sqrt 2`.
    pub fn optimal() -> Self {
        Self {
            a: 0.0,
            a_prime: 0.5 * PI,
            b: 0.25 * PI,
            b_prime: 0.75 * PI,
        }
    }

    /// Relative angles of `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn deltas(&self) -> [f64; 4] {
        [
            self.b - self.a,
            self.b_prime - self.a,
            self.b - self.a_prime,
            self.b_prime - self.a_prime,
        ]
    }
}

/// `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s: f64,
    pub std_error: f64,
    pub correlations: [f64; 4],
}

pub fn chsh(reports: &[CorrelationReport; 4]) -> ChshResult {
    let e = [reports[0].e_delta, reports[1].e_delta, reports[2].e_delta, reports[3].e_delta];
    let var: f64 = reports.iter().map(|r| r.e_std_error * r.e_std_error).sum();
    ChshResult {
        s: e[0] - e[1] + e[2] + e[3],
        std_error: var.sqrt(),
        correlations: e,
    }
}

/// CHSH value of the singlet at the given settings.
pub fn chsh_expected(settings: &ChshSettings) -> f64 {
    let e = settings.deltas().map(singlet_correlation);
    e[0] - e[1] + e[2] + e[3]
}

fn pair_step1(f_b: Complex64, up: Complex64, down: Complex64) -> PairAmplitudes {
    let k = FRAC_1_SQRT_2;
    let zero = Complex64::new(0.0, 0.0);
    [zero, up * f_b * k, -(down * f_b * k), zero]
}

/// Singlet after (or during) step 1, `t` from A's magnet entry:
/// `(1/sqrt 2) f(r_B) (f+(r_A)|+-> - f-(r_A)|-+>)`.
pub fn configspace_step1(r_a: Position2D, r_b: Position2D, t: f64, app: &Apparatus) -> Result<PairAmplitudes> {
    let f_b = Complex64::new(gaussian_envelope(r_b, app.config.sigma0), 0.0);
    Ok(pair_step1(
        f_b,
        branch_envelope(r_a, t, Sign::Plus, app)?,
        branch_envelope(r_a, t, Sign::Minus, app)?,
    ))
}

/// [`configspace_step1`] on the `(z_A, z_B)` plane, normalized there.
pub fn configspace_step1_1d(z_a: f64, z_b: f64, t: f64, app: &Apparatus) -> Result<PairAmplitudes> {
    let f_b = Complex64::new(gaussian_envelope_1d(z_b, app.config.sigma0), 0.0);
    Ok(pair_step1(
        f_b,
        branch_envelope_1d(z_a, t, Sign::Plus, app)?,
        branch_envelope_1d(z_a, t, Sign::Minus, app)?,
    ))
}

fn pair_step2(delta: f64, a: [Complex64; 2], b: [Complex64; 2]) -> PairAmplitudes {
    let c = singlet_in_rotated_basis(delta);
    [c[0] * a[0] * b[0], c[1] * a[0] * b[1], c[2] * a[1] * b[0], c[3] * a[1] * b[1]]
}

/// Pair state once B has been measured along `z'`, in the basis
/// `(+A +'B, +A -'B, -A +'B, -A -'B)`. B's packets are taken `t_D` after its
/// magnet exit and A's packets at the same instant.
pub fn configspace_step2(r_a: Position2D, r_b_prime: Position2D, app: &Apparatus, delta: f64) -> Result<PairAmplitudes> {
    let (ta, tb) = step2_clocks(app);
    let f = |r, t, s| f_envelope(r, t, s, app);
    Ok(pair_step2(
        delta,
        [f(r_a, ta, Sign::Plus)?, f(r_a, ta, Sign::Minus)?],
        [f(r_b_prime, tb, Sign::Plus)?, f(r_b_prime, tb, Sign::Minus)?],
    ))
}

/// [`configspace_step2`] on the `(z_A, z'_B)` plane.
pub fn configspace_step2_1d(z_a: f64, z_b_prime: f64, app: &Apparatus, delta: f64) -> Result<PairAmplitudes> {
    let (ta, tb) = step2_clocks(app);
    let exit = app.t_exit();
    let f = |z, t: f64, s| branch_envelope_1d(z, exit + t, s, app);
    Ok(pair_step2(
        delta,
        [f(z_a, ta, Sign::Plus)?, f(z_a, ta, Sign::Minus)?],
        [f(z_b_prime, tb, Sign::Plus)?, f(z_b_prime, tb, Sign::Minus)?],
    ))
}

/// Post-exit times of A and B at `t1 + dt + t_D`.
fn step2_clocks(app: &Apparatus) -> (f64, f64) {
    let td = app.derived.t_decoherence;
    (td + app.t_decision(), td)
}

/// `|amplitude|^2` per component.
pub fn component_densities(amps: &PairAmplitudes) -> [f64; 4] {
    amps.map(|a| a.norm_sqr())
}
