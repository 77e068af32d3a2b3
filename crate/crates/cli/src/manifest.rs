use std::path::{Path, PathBuf};

use bohmspin::{DerivedQuantities, PhysicalConfig};
use serde::Serialize;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to repeat a run. Only `wall_time_s` varies between
/// repetitions.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, A: Serialize> {
    pub subcommand: &'static str,
    pub config: PhysicalConfig,
    pub derived: DerivedQuantities,
    pub seed: Option<u64>,
    pub code_version: &'static str,
    pub arguments: &'a A,
    pub jobs: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

/// `explicit`, else `<first output>.manifest.json`, else
/// `bohmspin-<subcommand>.manifest.json` in the working directory.
pub fn manifest_path(explicit: Option<&Path>, outputs: &[PathBuf], subcommand: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match outputs.first() {
        Some(first) => {
            let mut name = first.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".manifest.json");
            first.with_file_name(name)
        }
        None => PathBuf::from(format!("bohmspin-{subcommand}.manifest.json")),
    }
}
