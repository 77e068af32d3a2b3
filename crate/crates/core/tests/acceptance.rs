//! Acceptance criteria 1-12, one PASS/FAIL line each.
//!
//! `cargo test -p bohmspin --test acceptance` runs everything; trailing
//! numbers (`-- 3 7`) select criteria. The process fails when a criterion
//! outside `EXPECTED_FAILURES` fails, or when an expected failure passes.

use std::cell::OnceCell;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::time::Instant;

use bohmspin::analytic::{gaussian_envelope, sg_mixture_density};
use bohmspin::eprb::{
    antisymmetrized_initial, chsh, chsh_expected, component_densities, configspace_step1_1d, run_pairs, sample_pair,
    ChshSettings, EprRun, PairOptions, SINGLET_PATTERN,
};
use bohmspin::io;
use bohmspin::oracle::{run_case, GridSpec};
use bohmspin::sterngerlach::{run_ensemble, RunOptions, SGRun, SGRunSpec, SEPARATRIX_BAND};
use bohmspin::{Apparatus, Outcome, Position2D};
use num_complex::Complex64;

/// Reversing the field maps the outcome at `z0` to the original outcome at
/// `-z0`. At `theta0 = pi/3` the threshold sits at `-0.674 sigma0`, so every
/// draw with `|z0| < 0.674 sigma0` keeps its outcome and criterion 11 cannot
/// hold as stated.
const EXPECTED_FAILURES: &[u32] = &[11];

const N: u64 = 10_000;
const SEED_SG: u64 = 20_100;
const SEED_EPR: u64 = 20_200;
const BORN_ANGLES: [f64; 4] = [FRAC_PI_6, FRAC_PI_3, FRAC_PI_2, 2.0 * FRAC_PI_3];
const EPR_DELTAS: [f64; 5] = [0.0, FRAC_PI_4, FRAC_PI_2, 2.0 * FRAC_PI_3, PI];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Runs shared between criteria, computed on first use.
struct Runs {
    app: Apparatus,
    born: OnceCell<Vec<SGRun>>,
    mixture: OnceCell<SGRun>,
    epr: OnceCell<Vec<EprRun>>,
}

impl Runs {
    fn pure_spec(&self, theta0: f64) -> SGRunSpec {
        let mut spec = SGRunSpec::pure(N, theta0, SEED_SG);
        spec.t_final = Some(self.app.derived.t_decoherence);
        spec
    }

    fn checked() -> RunOptions {
        RunOptions {
            check_spin_norm: true,
            ..RunOptions::default()
        }
    }

    /// One ensemble per Born angle; index 1 is `pi/3`.
    fn born(&self) -> &[SGRun] {
        self.born.get_or_init(|| {
            BORN_ANGLES
                .iter()
                .map(|&t| run_ensemble(&self.pure_spec(t), &self.app, &Self::checked()).expect("ensemble runs"))
                .collect()
        })
    }

    fn mixture(&self) -> &SGRun {
        self.mixture.get_or_init(|| {
            run_ensemble(&SGRunSpec::mixture(N, SEED_SG + 1), &self.app, &Self::checked()).expect("ensemble runs")
        })
    }

    /// The five criterion angles, then three more CHSH batches; the CHSH
    /// set reuses the `pi/4` batch for its first setting.
    fn epr(&self) -> &[EprRun] {
        self.epr.get_or_init(|| {
            let chsh = ChshSettings::optimal().deltas();
            let deltas: Vec<f64> = EPR_DELTAS.iter().copied().chain(chsh[1..].iter().copied()).collect();
            deltas
                .iter()
                .enumerate()
                .map(|(k, &d)| {
                    run_pairs(d, N, k as u64 * N, SEED_EPR, &self.app, &PairOptions::default()).expect("pairs run")
                })
                .collect()
        })
    }
}

fn criterion_1(r: &Runs) -> Verdict {
    let d = r.app.derived;
    let ok = (d.z_delta / 1e-5 - 1.0).abs() <= 0.05
        && (d.u / 1.0 - 1.0).abs() <= 0.05
        && (d.t_decoherence / 3e-4 - 1.0).abs() <= 0.10;
    verdict(
        ok,
        format!("z_delta = {:.4e} m, u = {:.4} m/s, t_D = {:.4e} s", d.z_delta, d.u, d.t_decoherence),
    )
}

fn criterion_2(r: &Runs) -> Verdict {
    let spec = GridSpec::default_for(&r.app, 64);
    let mut ok = true;
    let mut parts = Vec::new();
    for theta0 in [0.0, FRAC_PI_3, FRAC_PI_2, 2.0 * FRAC_PI_3] {
        let start = Instant::now();
        let c = run_case(&r.app, theta0, &spec).expect("oracle runs");
        let secs = start.elapsed().as_secs_f64();
        ok &= c.passes(1e-3, 1e-8) && secs < 60.0;
        parts.push(format!(
            "theta0={theta0:.3}: L2 {:.1e}/{:.1e}, drift {:.0e}, {secs:.0}s",
            c.in_field_corrected, c.after_field_corrected, c.norm_drift
        ));
    }
    verdict(ok, format!("n_z = {}, {} steps; {}", spec.z.n, spec.n_steps, parts.join("; ")))
}

fn criterion_3(r: &Runs) -> Verdict {
    let s = &r.born()[1].stats;
    let agree = (s.n_outside_band - s.mismatches_outside_band) as f64 / s.n_outside_band as f64;
    verdict(
        agree >= 0.999,
        format!(
            "{} of {} draws outside the band agree ({:.4}%), {} mismatches overall",
            s.n_outside_band - s.mismatches_outside_band,
            s.n_outside_band,
            100.0 * agree,
            s.predictor_mismatches
        ),
    )
}

fn criterion_4(r: &Runs) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (run, &theta0) in r.born().iter().zip(&BORN_ANGLES) {
        let p = (0.5 * theta0).cos().powi(2);
        let e = &run.stats.empirical_p_plus;
        ok &= e.within_sigma(p, 3.0);
        parts.push(format!("{:.4} vs {:.4}", e.estimate, p));
    }
    verdict(ok, format!("P(+) at pi/6, pi/3, pi/2, 2pi/3: {}", parts.join(", ")))
}

fn criterion_5(r: &Runs) -> Verdict {
    let s = &r.mixture().stats;
    let n = s.n_particles as f64;
    let (up, down) = (s.n_plus as f64 / n, s.n_minus as f64 / n);
    let chi = s.impact_chi_square.expect("histogram has enough cells");
    let ok = (up - 0.5).abs() <= 0.015 && (down - 0.5).abs() <= 0.015 && chi.p_value > 0.01;
    verdict(
        ok,
        format!(
            "spots {up:.4} / {down:.4}, chi2 = {:.2} on {} dof, p = {:.3}",
            chi.statistic, chi.dof, chi.p_value
        ),
    )
}

fn criterion_6(r: &Runs) -> Verdict {
    let worst = r
        .born()
        .iter()
        .chain(std::iter::once(r.mixture()))
        .map(|run| run.stats.max_spin_norm_deviation.expect("spin norm tracked"))
        .fold(0.0f64, f64::max);
    let n = r.born().len() as u64 * N + N;
    verdict(worst < 1e-10, format!("max | |s|/(hbar/2) - 1 | = {worst:.2e} over {n} trajectories"))
}

fn criterion_7(r: &Runs) -> Verdict {
    let runs = r.epr();
    let mut ok = true;
    let mut parts = Vec::new();
    for run in &runs[..EPR_DELTAS.len()] {
        let rep = &run.report;
        let probs = rep.p_hat.iter().zip(&rep.expected).all(|(p, &e)| p.within_sigma(e, 3.0));
        let e_ok = (rep.e_delta - rep.e_expected).abs() <= 3.0 * rep.e_std_error;
        ok &= probs && e_ok;
        parts.push(format!("E({:.3}) = {:+.4} vs {:+.4}", rep.delta, rep.e_delta, rep.e_expected));
    }
    let settings = ChshSettings::optimal();
    let reports = [1, 5, 6, 7].map(|i| runs[i].report.clone());
    let c = chsh(&reports);
    let want = chsh_expected(&settings).abs();
    ok &= (c.s.abs() - want).abs() <= 3.0 * c.std_error;
    parts.push(format!("|S| = {:.4} +- {:.4} vs {want:.4}", c.s.abs(), c.std_error));
    verdict(ok, parts.join(", "))
}

fn criterion_8(r: &Runs) -> Verdict {
    let runs = r.epr();
    let marginals_ok = runs.iter().all(|run| run.report.marginal_a_plus.within_sigma(0.5, 3.0));
    let worst_marginal = runs
        .iter()
        .map(|run| (run.report.marginal_a_plus.estimate - 0.5).abs())
        .fold(0.0f64, f64::max);
    let moved = runs
        .iter()
        .flat_map(|run| &run.records)
        .map(|rec| rec.b_displacement)
        .fold(0.0f64, f64::max);

    // configspace density on a (z_A, z_B) grid at A's decision time
    let app = &r.app;
    let s = app.config.sigma0;
    let t_after = app.derived.t_decoherence;
    let t = app.t_exit() + t_after;
    let reach_a = app.packet_offset(t_after).abs() + 8.0 * s;
    let (na, nb) = (801, 801);
    let za: Vec<f64> = (0..na).map(|i| -reach_a + 2.0 * reach_a * i as f64 / (na - 1) as f64).collect();
    let zb: Vec<f64> = (0..nb).map(|i| -8.0 * s + 16.0 * s * i as f64 / (nb - 1) as f64).collect();
    let (ha, hb) = (za[1] - za[0], zb[1] - zb[0]);
    let rho: Vec<Vec<f64>> = za
        .iter()
        .map(|&a| {
            zb.iter()
                .map(|&b| component_densities(&configspace_step1_1d(a, b, t, app).expect("in range")).iter().sum())
                .collect()
        })
        .collect();
    let trapz = |v: &mut dyn Iterator<Item = f64>, h: f64, n: usize| {
        v.enumerate()
            .map(|(i, x)| if i == 0 || i + 1 == n { 0.5 * x } else { x })
            .sum::<f64>()
            * h
    };
    let m_a: Vec<f64> = rho.iter().map(|row| trapz(&mut row.iter().copied(), hb, nb)).collect();
    let m_b: Vec<f64> = (0..nb).map(|j| trapz(&mut rho.iter().map(|row| row[j]), ha, na)).collect();
    let peak = rho.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let mut factor_err: f64 = 0.0;
    for i in 0..na {
        for j in 0..nb {
            factor_err = factor_err.max((rho[i][j] - m_a[i] * m_b[j]).abs() / peak);
        }
    }
    let single_peak = m_a.iter().fold(0.0f64, |m, &x| m.max(x));
    let marginal_err = za
        .iter()
        .zip(&m_a)
        .map(|(&z, &m)| (m - sg_mixture_density(z, t_after, app).expect("in range")).abs() / single_peak)
        .fold(0.0f64, f64::max);

    let ok = marginals_ok && moved == 0.0 && factor_err < 1e-9 && marginal_err < 1e-6;
    verdict(
        ok,
        format!(
            "max |P_A(+) - 0.5| = {worst_marginal:.4}, max B displacement = {moved:e} m, factorization {factor_err:.1e}, A marginal vs single particle {marginal_err:.1e}"
        ),
    )
}

fn criterion_9(r: &Runs) -> Verdict {
    let records = r.epr().iter().flat_map(|run| &run.records);
    let (mut worst, mut samples) = (0.0f64, 0usize);
    for rec in records {
        worst = worst.max(rec.max_opposition_defect);
        samples += rec.samples_step1;
    }
    let bound = 4.0 * f64::EPSILON * PI;
    verdict(
        worst <= bound && samples > 0,
        format!("max |theta_A + theta_B - pi| = {worst:.2e} over {samples} samples (roundoff bound {bound:.1e})"),
    )
}

fn criterion_10(r: &Runs) -> Verdict {
    let s = r.app.config.sigma0;
    let mut worst = 0.0f64;
    for id in 0..100 {
        let pair = sample_pair(id, 20_300, s);
        let ra = Position2D::new(pair.x0a, pair.z0a);
        let rb = Position2D::new(pair.x0b, pair.z0b);
        let amps = antisymmetrized_initial(&pair, ra, rb, s);
        let ff = gaussian_envelope(ra, s) * gaussian_envelope(rb, s);
        let scale = -Complex64::from_polar(ff, pair.phi_a0);
        for (a, &p) in amps.iter().zip(&SINGLET_PATTERN) {
            worst = worst.max((a - scale * p).norm() / ff);
        }
    }
    verdict(worst < 1e-12, format!("max componentwise error / (f f) = {worst:.2e} over 100 draws"))
}

fn criterion_11(r: &Runs) -> Verdict {
    let original = &r.born()[1];
    let reversed_app = r.app.reversed();
    let spec = r.pure_spec(FRAC_PI_3);
    let reversed = run_ensemble(&spec, &reversed_app, &RunOptions::default()).expect("ensemble runs");
    let sigma0 = r.app.config.sigma0;
    let threshold = bohmspin::sterngerlach::threshold(FRAC_PI_3, sigma0).expect("interior angle");
    let deterministic = original.stats.n_outside_band;
    let unflipped = original
        .records
        .iter()
        .zip(&reversed.records)
        .filter(|(o, _)| (o.draw.z0 - threshold).abs() > SEPARATRIX_BAND * sigma0)
        .filter(|(o, rv)| rv.outcome != o.outcome.flipped())
        .count();

    // at pi/2 the threshold is 0 and the mirror image flips every outcome
    let mut half = SGRunSpec::pure(2_000, FRAC_PI_2, SEED_SG + 2);
    half.t_final = Some(r.app.derived.t_decoherence);
    let a = run_ensemble(&half, &r.app, &RunOptions::default()).expect("ensemble runs");
    let b = run_ensemble(&half, &reversed_app, &RunOptions::default()).expect("ensemble runs");
    let half_unflipped = a
        .records
        .iter()
        .zip(&b.records)
        .filter(|(o, rv)| rv.outcome != o.outcome.flipped() || o.outcome == Outcome::Undecided)
        .count();
    verdict(
        unflipped == 0,
        format!(
            "theta0 = pi/3: {unflipped} of {deterministic} deterministic draws keep their outcome; theta0 = pi/2: {half_unflipped} of {} keep it; reversed-field predictor mismatches outside the band: {}",
            a.records.len(),
            reversed.stats.mismatches_outside_band
        ),
    )
}

fn criterion_12(r: &Runs) -> Verdict {
    let app = r.app;
    let outputs = |threads: usize| -> Vec<String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        pool.install(|| {
            let options = RunOptions {
                trace: 3,
                ..RunOptions::default()
            };
            let sg = run_ensemble(&SGRunSpec::mixture(300, 99), &app, &options).expect("ensemble runs");
            let epr = run_pairs(FRAC_PI_4, 200, 0, 99, &app, &PairOptions::default()).expect("pairs run");
            let mut traj = Vec::new();
            io::write_traced_csv(&mut traj, &app, &sg.records).expect("in memory");
            let mut impacts = Vec::new();
            io::write_impacts_csv(&mut impacts, &sg.records).expect("in memory");
            let mut pairs = Vec::new();
            io::write_pairs_csv(&mut pairs, &epr.records).expect("in memory");
            vec![
                String::from_utf8(traj).expect("utf-8"),
                String::from_utf8(impacts).expect("utf-8"),
                io::to_json(&sg.stats).expect("serializes"),
                String::from_utf8(pairs).expect("utf-8"),
                io::to_json(&[epr.report]).expect("serializes"),
            ]
        })
    };
    let one = outputs(1);
    let again = outputs(1);
    let four = outputs(4);
    let bytes: usize = one.iter().map(String::len).sum();
    verdict(
        one == again && one == four,
        format!("{bytes} bytes of CSV/JSON identical across repeats and 1 vs 4 workers"),
    )
}

type Criterion = (u32, &'static str, fn(&Runs) -> Verdict);

const CRITERIA: [Criterion; 12] = [
    (1, "derived constants", criterion_1),
    (2, "oracle agreement", criterion_2),
    (3, "threshold determinism", criterion_3),
    (4, "Born statistics", criterion_4),
    (5, "mixture spots", criterion_5),
    (6, "spin-norm conservation", criterion_6),
    (7, "EPR-B correlations", criterion_7),
    (8, "no-signaling and locality", criterion_8),
    (9, "spin opposition", criterion_9),
    (10, "antisymmetrization identity", criterion_10),
    (11, "contextuality under field reversal", criterion_11),
    (12, "determinism", criterion_12),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let runs = Runs {
        app: Apparatus::silver(),
        born: OnceCell::new(),
        mixture: OnceCell::new(),
        epr: OnceCell::new(),
    };
    let mut unexpected = Vec::new();
    for (id, title, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check(&runs);
        let expected_fail = EXPECTED_FAILURES.contains(&id);
        let tag = match (v.pass, expected_fail) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        println!(
            "{tag} criterion {id:>2} {title} [{:.1}s]: {}",
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if v.pass == expected_fail {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected results for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
