//! TOML run configuration. Every table rejects unknown keys; command-line
//! flags override whatever the file sets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_DIR_ENV: &str = "NVEPR_CONFIG_DIR";
pub const DEFAULT_CONFIG_NAME: &str = "nvepr.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub detector: Option<DetectorConfig>,
    pub sequence: Option<SequenceConfig>,
    pub truth: Option<TruthConfig>,
    pub field: Option<FieldConfig>,
    pub fit: Option<FitConfig>,
    pub eseem: Option<EseemConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub counts_bright: Option<f64>,
    pub counts_dark: Option<f64>,
    pub n_avg: Option<u64>,
    /// "per-point" or "total"
    pub averaging: Option<String>,
    pub noiseless: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub kind: Option<String>,
    pub grid: Option<GridConfig>,
    /// μs
    pub tau: Option<f64>,
    pub n_pulses: Option<u32>,
    /// ns
    pub pi_pulse_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TruthConfig {
    pub pulsed_odmr: Option<OdmrTruth>,
    pub rabi: Option<RabiTruth>,
    pub cpmg8: Option<CpmgTruth>,
    pub cpmg_deer: Option<SpectrumTruth>,
    pub deer_rabi: Option<DeerRabiTruth>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrTruth {
    pub b0: Option<f64>,
    pub theta_deg: Option<f64>,
    pub depth: Option<f64>,
    /// FWHM, MHz
    pub linewidth: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiTruth {
    pub f: Option<f64>,
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpmgTruth {
    /// Labels from the bundled hyperfine table.
    pub nuclei: Option<Vec<String>>,
    /// μT
    pub b_rms: Option<f64>,
    pub t2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTruth {
    pub center: Option<f64>,
    pub fwhm: Option<f64>,
    pub amplitude: Option<f64>,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeerRabiTruth {
    pub couplings_mhz: Option<Vec<f64>>,
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// mT
    pub b0: Option<f64>,
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub n_spins: Option<usize>,
    pub max_n: Option<usize>,
    pub k_fixed: Option<usize>,
    pub normalize: Option<bool>,
    pub poisson_weights: Option<bool>,
    /// One-sigma ODMR center errors (MHz) used when inverting the field.
    pub freq_errors: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EseemConfig {
    pub nuclei: Option<Vec<String>>,
    pub b_rms: Option<f64>,
    pub n_pulses: Option<u32>,
    pub tau_max: Option<f64>,
    pub points: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    /// Load `explicit` (resolved against the config directory when relative and
    /// absent), or the default file from the config directory, or nothing.
    pub fn load(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>), CliError> {
        let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
        let path = match explicit {
            Some(p) if p.exists() || p.is_absolute() => Some(p.to_path_buf()),
            Some(p) => match &dir {
                Some(d) if d.join(p).exists() => Some(d.join(p)),
                _ => Some(p.to_path_buf()),
            },
            None => dir.map(|d| d.join(DEFAULT_CONFIG_NAME)).filter(|p| p.exists()),
        };
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text, &path)?, Some(path)))
    }
}
