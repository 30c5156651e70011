//! Experiment configuration: a TOML file layered under command-line flags.
//!
//! Resolution order is defaults, then the `memory` preset, then explicit
//! file keys, then flags. Bandwidth keys are GB/s, frequency is GHz, and
//! energy keys are picojoules, so a file reads in the units the numbers
//! are usually quoted in.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcm_core::costmodel::{CostParams, ModelOptions};
use mcm_core::{GridSpec, GridType};
use serde::Deserialize;

/// Raw file schema. Every key is optional; omitted keys keep defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Cost-parameter preset: "dram" or "hbm".
    pub memory: Option<String>,
    pub freq_ghz: Option<f64>,
    /// Workload file evaluated when the command line names none.
    pub workload: Option<PathBuf>,
    /// Directory for CSV artifacts; stdout when absent.
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub time_limit_s: Option<f64>,
    pub redistribute: Option<bool>,
    pub async_fuse: Option<bool>,
    pub grid: Option<GridSection>,
    pub bw: Option<BwSection>,
    pub array: Option<ArraySection>,
    pub energy: Option<EnergySection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x: Option<usize>,
    pub y: Option<usize>,
    #[serde(rename = "type")]
    pub grid_type: Option<GridType>,
    pub diagonal_links: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BwSection {
    pub nop_gbps: Option<f64>,
    pub mem_gbps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub r: Option<u64>,
    pub c: Option<u64>,
}

/// Per-event energies in picojoules.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub sram: Option<f64>,
    pub mac: Option<f64>,
    pub nop: Option<f64>,
    pub offchip: Option<f64>,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: GridSpec,
    pub params: CostParams,
    pub workload: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub time_limit_s: f64,
    pub options: ModelOptions,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            spec: GridSpec::new(4, 4, GridType::A, false),
            params: CostParams::dram_defaults(),
            workload: None,
            output_dir: None,
            seed: None,
            time_limit_s: 60.0,
            options: ModelOptions::default(),
        }
    }
}

/// Looks up the cost-parameter preset by name.
pub fn memory_preset(name: &str) -> Result<CostParams> {
    match name.to_ascii_lowercase().as_str() {
        "dram" => Ok(CostParams::dram_defaults()),
        "hbm" => Ok(CostParams::hbm_defaults()),
        other => bail!("memory preset must be \"dram\" or \"hbm\", got {other:?}"),
    }
}

/// Parses and resolves a config file. Parse errors keep the line and
/// column reported by the TOML parser.
pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let file: FileConfig =
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    resolve(file)
}

fn resolve(file: FileConfig) -> Result<Experiment> {
    let mut exp = Experiment::default();
    if let Some(name) = &file.memory {
        exp.params = memory_preset(name)?;
    }
    if let Some(ghz) = file.freq_ghz {
        exp.params.freq_hz = ghz * 1e9;
    }
    if let Some(grid) = file.grid {
        if let Some(x) = grid.x {
            exp.spec.x = x;
        }
        if let Some(y) = grid.y {
            exp.spec.y = y;
        }
        if let Some(t) = grid.grid_type {
            exp.spec.grid_type = t;
        }
        if let Some(d) = grid.diagonal_links {
            exp.spec.diagonal_links = d;
        }
    }
    if let Some(bw) = file.bw {
        if let Some(g) = bw.nop_gbps {
            exp.params.bw_nop = g * 1e9;
        }
        if let Some(g) = bw.mem_gbps {
            exp.params.bw_mem = g * 1e9;
        }
    }
    if let Some(array) = file.array {
        if let Some(r) = array.r {
            exp.params.r = r;
        }
        if let Some(c) = array.c {
            exp.params.c = c;
        }
    }
    if let Some(e) = file.energy {
        if let Some(v) = e.sram {
            exp.params.e_sram = v * 1e-12;
        }
        if let Some(v) = e.mac {
            exp.params.e_mac = v * 1e-12;
        }
        if let Some(v) = e.nop {
            exp.params.e_nop = v * 1e-12;
        }
        if let Some(v) = e.offchip {
            exp.params.e_offchip = v * 1e-12;
        }
    }
    exp.workload = file.workload;
    exp.output_dir = file.output_dir;
    exp.seed = file.seed;
    if let Some(t) = file.time_limit_s {
        exp.time_limit_s = t;
    }
    if let Some(r) = file.redistribute {
        exp.options.redistribute = r;
    }
    if let Some(a) = file.async_fuse {
        exp.options.async_fuse = a;
    }
    if exp.spec.x == 0 || exp.spec.y == 0 {
        bail!("grid.x and grid.y must be positive");
    }
    if exp.params.r == 0 || exp.params.c == 0 {
        bail!("array.r and array.c must be positive");
    }
    if !(exp.params.bw_nop > 0.0) || !(exp.params.bw_mem > 0.0) {
        bail!("bw.nop_gbps and bw.mem_gbps must be positive");
    }
    if !(exp.params.freq_hz > 0.0) {
        bail!("freq_ghz must be positive");
    }
    Ok(exp)
}
