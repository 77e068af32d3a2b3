use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bohmspin::analytic::{evaluate_grid, PureStateWave};
use bohmspin::eprb::{chsh, chsh_expected, correlation_sweep, ChshSettings, CorrelationReport, PairOptions};
use bohmspin::io;
use bohmspin::oracle::{run_case, GridSpec, OracleCase};
use bohmspin::sterngerlach::{run_ensemble, MixtureLaw, RunOptions, SGOutcomeStats, SGRunSpec, Source};
use bohmspin::{Apparatus, PhysicalConfig, SpinOrientation};
use serde::Serialize;

use crate::args::{Cli, Command, ConfigArgs, DensityArgs, EprRunArgs, MixtureLawArg, SgRunArgs, ValidateArgs};
use crate::manifest::{manifest_path, RunManifest, CODE_VERSION};
use crate::CliError;

struct Context {
    config: PhysicalConfig,
    app: Apparatus,
    jobs: Option<usize>,
    manifest: Option<PathBuf>,
    started: Instant,
}

impl Context {
    fn finish<A: Serialize>(&self, subcommand: &'static str, seed: Option<u64>, arguments: &A, outputs: Vec<PathBuf>) -> Result<(), CliError> {
        let path = manifest_path(self.manifest.as_deref(), &outputs, subcommand);
        let m = RunManifest {
            subcommand,
            config: self.config,
            derived: self.app.derived,
            seed,
            code_version: CODE_VERSION,
            arguments,
            jobs: self.jobs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        io::write_json(&path, &m)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failed(format!("cannot create {}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(p) => PhysicalConfig::from_json_file(p)?,
        None => bohmspin::default_config(),
    };
    if cli.reverse_field {
        config = config.reversed();
    }
    let app = Apparatus::new(config)?;
    let ctx = Context {
        config,
        app,
        jobs: cli.jobs,
        manifest: cli.manifest,
        started,
    };
    match cli.command {
        Command::Config(a) => config_cmd(&ctx, &a),
        Command::SgRun(a) => sg_run(&ctx, &a),
        Command::EprRun(a) => epr_run(&ctx, &a),
        Command::Validate(a) => validate(&ctx, &a),
        Command::Density(a) => density(&ctx, &a),
    }
}

#[derive(Serialize)]
struct Resolved {
    #[serde(flatten)]
    config: PhysicalConfig,
    derived: bohmspin::DerivedQuantities,
    t_exit: f64,
    t_decision: f64,
    screen_time: f64,
}

fn config_cmd(ctx: &Context, a: &ConfigArgs) -> Result<(), CliError> {
    let text = io::to_json(&Resolved {
        config: ctx.config,
        derived: ctx.app.derived,
        t_exit: ctx.app.t_exit(),
        t_decision: ctx.app.t_decision(),
        screen_time: ctx.app.screen_time(),
    })?;
    print!("{text}");
    if let Some(p) = &a.out {
        std::fs::write(p, &text).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SgSummary<'a> {
    spec: SGRunSpec,
    t_final: f64,
    expected_p_plus: Option<f64>,
    stats: &'a SGOutcomeStats,
}

fn sg_run(ctx: &Context, a: &SgRunArgs) -> Result<(), CliError> {
    let source = match a.theta0 {
        Some(theta0) => Source::Pure {
            theta0: theta0.0,
            phi0: a.phi0.0,
        },
        None => Source::Mixture {
            law: match a.mixture_law {
                MixtureLawArg::Uniform => MixtureLaw::Uniform,
                MixtureLawArg::SinTheta => MixtureLaw::SinTheta,
            },
        },
    };
    let spec = SGRunSpec {
        n_particles: a.n,
        source,
        seed: a.seed,
        t_final: a.t_final,
    };
    let options = RunOptions {
        steps: None,
        check_spin_norm: a.check_spin_norm,
        trace: if a.out.is_some() { a.trace } else { 0 },
        trace_stride: a.trace_stride.max(1),
        histogram_bins: a.bins,
    };
    let run = run_ensemble(&spec, &ctx.app, &options)?;
    let s = &run.stats;
    let expected = match source {
        Source::Pure { theta0, .. } => Some((0.5 * theta0).cos().powi(2)),
        Source::Mixture { .. } => None,
    };
    println!("particles      {}", s.n_particles);
    println!(
        "P(+)           {:.6} +- {:.6}{}",
        s.empirical_p_plus.estimate,
        s.empirical_p_plus.std_error,
        expected.map_or(String::new(), |p| format!("   (cos^2(theta0/2) = {p:.6})"))
    );
    println!("undecided      {}", s.n_undecided);
    println!(
        "predictor      {} mismatches, {} outside the separatrix band",
        s.predictor_mismatches, s.mismatches_outside_band
    );
    if let Some(chi) = &s.impact_chi_square {
        println!("impact chi2    {:.3} on {} dof, p = {:.4}", chi.statistic, chi.dof, chi.p_value);
    }
    if let Some(d) = s.max_spin_norm_deviation {
        println!("max | |s|/(hbar/2) - 1 |  {d:.3e}");
    }
    let mut outputs = Vec::new();
    if let Some(p) = &a.out {
        io::write_traced_csv(create(p)?, &ctx.app, &run.records)?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.impacts {
        io::write_impacts_csv(create(p)?, &run.records)?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.summary {
        io::write_json(
            p,
            &SgSummary {
                spec,
                t_final: run.t_final,
                expected_p_plus: expected,
                stats: s,
            },
        )?;
        outputs.push(p.clone());
    }
    ctx.finish("sg-run", Some(a.seed), a, outputs)
}

fn epr_run(ctx: &Context, a: &EprRunArgs) -> Result<(), CliError> {
    let settings = ChshSettings::optimal();
    let deltas: Vec<f64> = if a.chsh {
        settings.deltas().to_vec()
    } else if let Some(list) = &a.sweep {
        list.0.clone()
    } else {
        vec![a.delta.map(|d| d.0).unwrap_or(0.0)]
    };
    let options = PairOptions {
        steps: None,
        check_spin_norm: a.check_spin_norm,
    };
    let runs = correlation_sweep(&deltas, a.n_pairs, a.seed, &ctx.app, &options)?;
    let reports: Vec<CorrelationReport> = runs.iter().map(|r| r.report.clone()).collect();
    println!("{:>12} {:>8} {:>9} {:>9} {:>9} {:>9} {:>10} {:>10}", "delta", "pairs", "P(+,+)", "P(+,-)", "P(-,+)", "P(-,-)", "E", "-cos");
    for r in &reports {
        println!(
            "{:>12.6} {:>8} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>10.5} {:>10.5}",
            r.delta,
            r.n_pairs,
            r.p_hat[0].estimate,
            r.p_hat[1].estimate,
            r.p_hat[2].estimate,
            r.p_hat[3].estimate,
            r.e_delta,
            r.e_expected
        );
    }
    if a.chsh {
        let c = chsh(&[reports[0].clone(), reports[1].clone(), reports[2].clone(), reports[3].clone()]);
        println!("CHSH S = {:.5} +- {:.5}   (expected {:.5})", c.s, c.std_error, chsh_expected(&settings));
    }
    let mut outputs = Vec::new();
    if let Some(p) = &a.out_pairs {
        let records: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
        io::write_pairs_csv(create(p)?, &records)?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.report {
        io::write_json(p, &reports)?;
        outputs.push(p.clone());
    }
    ctx.finish("epr-run", Some(a.seed), a, outputs)
}

fn validate(ctx: &Context, a: &ValidateArgs) -> Result<(), CliError> {
    if a.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let mut spec = GridSpec::default_for(&ctx.app, a.steps);
    if let Some(n) = a.n_z {
        spec.z.n = n;
    }
    spec.validate()?;
    let mut cases: Vec<OracleCase> = Vec::new();
    println!("{:<26} {:>12} {:>12} {:>12} {:>6}", "case", "L2", "L2_raw", "Linf", "pass");
    let mut all_pass = true;
    for &theta0 in &a.thetas.0 {
        let c = run_case(&ctx.app, theta0, &spec)?;
        let rows = [
            ("exit", c.in_field_corrected, &c.in_field),
            ("exit+t_D", c.after_field_corrected, &c.after_field),
        ];
        for (tag, l2, rep) in rows {
            let pass = l2 < a.tolerance;
            all_pass &= pass;
            println!(
                "{:<26} {:>12.3e} {:>12.3e} {:>12.3e} {:>6}",
                format!("theta0={theta0:.4} {tag}"),
                l2,
                rep.l2,
                rep.linf_phase_aligned,
                if pass { "PASS" } else { "FAIL" }
            );
        }
        let norm_ok = c.norm_drift < 1e-8;
        all_pass &= norm_ok;
        println!(
            "{:<26} {:>12.3e} {:>12} {:>12} {:>6}",
            format!("theta0={theta0:.4} norm"),
            c.norm_drift,
            "",
            "",
            if norm_ok { "PASS" } else { "FAIL" }
        );
        cases.push(c);
    }
    let mut outputs = Vec::new();
    if let Some(p) = &a.report {
        io::write_json(p, &cases)?;
        outputs.push(p.clone());
    }
    ctx.finish("validate", None, a, outputs)?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Failed("oracle validation failed".into()))
    }
}

fn linspace(half: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

fn density(ctx: &Context, a: &DensityArgs) -> Result<(), CliError> {
    if a.nx == 0 || a.nz == 0 {
        return Err(CliError::Usage("--nx and --nz must be at least 1".into()));
    }
    let app = &ctx.app;
    let sigma0 = app.config.sigma0;
    let t = a.t.unwrap_or(app.t_exit() + app.derived.t_decoherence);
    let t_after = (t - app.t_exit()).max(0.0);
    let offset = if t_after > 0.0 {
        app.packet_offset(t_after).abs()
    } else {
        app.derived.z_delta.abs()
    };
    let xs = linspace(a.x_half.unwrap_or(4.0 * sigma0), a.nx);
    let zs = linspace(a.z_half.unwrap_or(offset + 5.0 * sigma0), a.nz);
    let wave = PureStateWave::new(*app, SpinOrientation::new(a.theta0.0, a.phi0.0));
    let samples = evaluate_grid(&wave, &xs, &zs, t)?;
    io::write_grid_csv(create(&a.out)?, &samples)?;
    println!("{} grid points at t = {t:e} s written to {}", samples.len(), a.out.display());
    ctx.finish("density", None, a, vec![a.out.clone()])
}
