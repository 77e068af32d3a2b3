use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// An angle in radians, or in degrees with a `deg` suffix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Angle(pub f64);

impl FromStr for Angle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (num, deg) = match t.strip_suffix("deg") {
            Some(rest) => (rest.trim_end(), true),
            None => (t.strip_suffix("rad").map_or(t, str::trim_end), false),
        };
        let v: f64 = num.parse().map_err(|_| format!("`{s}` is not an angle (radians, or degrees with a `deg` suffix)"))?;
        if !v.is_finite() {
            return Err(format!("angle `{s}` is not finite"));
        }
        Ok(Angle(if deg { v.to_radians() } else { v }))
    }
}

/// Comma-separated angles.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AngleList(pub Vec<f64>);

pub fn parse_angles(s: &str) -> Result<AngleList, String> {
    let out: Result<Vec<f64>, String> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse::<Angle>().map(|a| a.0))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty angle list".into());
    }
    Ok(AngleList(out))
}

#[derive(Debug, Parser)]
#[command(name = "bohmspin", version, about = "Pilot-wave simulation of Stern-Gerlach and EPR-B spin measurements")]
pub struct Cli {
    /// JSON file with apparatus constants; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Reverse the sign of the field and its gradient.
    #[arg(long, global = true)]
    pub reverse_field: bool,

    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Where to write the run manifest. Defaults to `<first output>.manifest.json`.
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved configuration and derived quantities as JSON.
    Config(ConfigArgs),
    /// Single-particle Stern-Gerlach ensemble.
    SgRun(SgRunArgs),
    /// Two-step EPR-B pair experiment.
    EprRun(EprRunArgs),
    /// Check the closed-form spinors against the split-operator solver.
    Validate(ValidateArgs),
    /// Dump the closed-form spinor and density on a grid.
    Density(DensityArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ConfigArgs {
    /// Also write the JSON to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureLawArg {
    Uniform,
    SinTheta,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["theta0", "mixture"]))]
pub struct SgRunArgs {
    /// Number of particles.
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,

    /// Polar angle of the prepared spin.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<Angle>,

    /// Azimuth of the prepared spin.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub phi0: Angle,

    /// Draw each particle's spin from a mixture instead.
    #[arg(long)]
    pub mixture: bool,

    #[arg(long, value_enum, default_value_t = MixtureLawArg::Uniform)]
    pub mixture_law: MixtureLawArg,

    #[arg(long, env = "BOHMSPIN_SEED", default_value_t = 1)]
    pub seed: u64,

    /// Free-flight time after the magnet exit in seconds; defaults to the screen.
    #[arg(long, value_name = "SECONDS")]
    pub t_final: Option<f64>,

    /// Trajectory CSV of the first `--trace` particles.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Number of trajectories written to `--out`.
    #[arg(long, default_value_t = 20)]
    pub trace: u64,

    /// Keep every k-th integrator sample in `--out`.
    #[arg(long, default_value_t = 50)]
    pub trace_stride: usize,

    /// Per-particle CSV of initial conditions, outcomes and impacts.
    #[arg(long, value_name = "FILE")]
    pub impacts: Option<PathBuf>,

    /// JSON statistics.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,

    /// Track |s| along every trajectory.
    #[arg(long)]
    pub check_spin_norm: bool,

    /// Impact histogram bins.
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("angles").required(true).args(["delta", "sweep", "chsh"]))]
pub struct EprRunArgs {
    /// Angle between the two magnets.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<Angle>,

    /// Comma-separated list of angles, one batch each.
    #[arg(long, value_parser = parse_angles, allow_hyphen_values = true)]
    pub sweep: Option<AngleList>,

    /// Run the four CHSH angle differences and report S.
    #[arg(long)]
    pub chsh: bool,

    #[arg(long, default_value_t = 10_000)]
    pub n_pairs: u64,

    #[arg(long, env = "BOHMSPIN_SEED", default_value_t = 1)]
    pub seed: u64,

    /// Per-pair CSV.
    #[arg(long, value_name = "FILE")]
    pub out_pairs: Option<PathBuf>,

    /// JSON list of correlation reports.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    #[arg(long)]
    pub check_spin_norm: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Prepared polar angles.
    #[arg(long, value_parser = parse_angles, default_value = "0,60deg,90deg,120deg")]
    pub thetas: AngleList,

    /// Strang steps across the magnet.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,

    /// Override the number of grid cells (power of two).
    #[arg(long)]
    pub n_z: Option<usize>,

    /// L2 tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,

    /// JSON with the full error reports.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Angle,

    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub phi0: Angle,

    /// Time since the magnet entry in seconds; defaults to the exit plus t_D.
    #[arg(long, value_name = "SECONDS")]
    pub t: Option<f64>,

    #[arg(long, default_value_t = 41)]
    pub nx: usize,

    #[arg(long, default_value_t = 401)]
    pub nz: usize,

    /// Half-width of the x range; defaults to 4 sigma0.
    #[arg(long)]
    pub x_half: Option<f64>,

    /// Half-width of the z range; defaults to the packet offset plus 5 sigma0.
    #[arg(long)]
    pub z_half: Option<f64>,

    /// Grid CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
