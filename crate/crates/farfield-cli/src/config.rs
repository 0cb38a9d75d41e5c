//! Config file schema and resolution. Runs are many-parameter, so the
//! primary interface is a TOML file; a handful of flags override the
//! corresponding keys. The resolved configuration is echoed into each run's
//! manifest, which is itself a loadable config.

use anyhow::{bail, Context, Result};
use farfield::models::{CosK, LatticeModel};
use farfield::numeric::parse_rat;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub carrier: CarrierSection,
    #[serde(default)]
    pub scales: ScalesSection,
    #[serde(default)]
    pub dispersion: DispersionSection,
    #[serde(default)]
    pub admissible: AdmissibleSection,
    #[serde(default)]
    pub packet: PacketSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub derive: DeriveSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub kind: String,
    pub p: Option<String>,
    pub q: Option<String>,
    pub e1: Option<String>,
    pub e2: Option<String>,
    pub o1: Option<String>,
    pub alpha: Option<String>,
    pub beta: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: "mkdv".into(),
            p: None,
            q: None,
            e1: None,
            e2: None,
            o1: None,
            alpha: None,
            beta: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CarrierSection {
    /// rational string, e.g. "0", "1/3", "-3/5"
    pub cos_k: String,
    pub sin_sign: i8,
}

impl Default for CarrierSection {
    fn default() -> Self {
        Self { cos_k: "0".into(), sin_sign: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalesSection {
    pub m2: i64,
    pub branch: u8,
}

impl Default for ScalesSection {
    fn default() -> Self {
        Self { m2: 4, branch: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DispersionSection {
    pub k_min: f64,
    pub k_max: f64,
    pub steps: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self { k_min: 0.05, k_max: 3.1, steps: 62 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmissibleSection {
    pub m2_max: i64,
    pub cosk_denominator_max: i64,
    pub region_r_min: f64,
    pub region_r_max: f64,
    pub region_steps: usize,
}

impl Default for AdmissibleSection {
    fn default() -> Self {
        Self {
            m2_max: 4,
            cosk_denominator_max: 3,
            region_r_min: -4.0,
            region_r_max: 4.0,
            region_steps: 33,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PacketSection {
    pub profile: String,
    pub amplitude: f64,
    pub width: f64,
    pub n: i64,
    pub harmonics: u8,
}

impl Default for PacketSection {
    fn default() -> Self {
        Self { profile: "sech".into(), amplitude: 0.25, width: 12.0, n: 8, harmonics: 2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSection {
    pub slow_time: usize,
    pub write_grid: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { slow_time: 2, write_grid: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateSection {
    pub n_list: Vec<i64>,
    pub slow_time: usize,
    pub amplitude: f64,
    pub width_per_n: f64,
    pub width_fixed: Option<f64>,
    pub second_harmonic_rows: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            n_list: vec![8, 16],
            slow_time: 5,
            amplitude: 0.25,
            width_per_n: 1.5,
            width_fixed: None,
            second_harmonic_rows: 12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DeriveSection {
    pub samples: usize,
    pub seed: u64,
    pub verify: bool,
}

impl Default for DeriveSection {
    fn default() -> Self {
        Self { samples: 5, seed: 42, verify: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).context("cannot parse config")?;
        Ok(cfg)
    }

    pub fn build_model(&self) -> Result<LatticeModel> {
        let need = |v: &Option<String>, name: &str| -> Result<String> {
            v.clone().ok_or_else(|| anyhow::anyhow!("model.{name} is required for kind {}", self.model.kind))
        };
        let m = match self.model.kind.as_str() {
            "mkdv" => LatticeModel::mkdv(&need(&self.model.p, "p")?, &need(&self.model.q, "q")?),
            "hietarinta" => LatticeModel::hietarinta_real(
                &need(&self.model.e1, "e1")?,
                &need(&self.model.e2, "e2")?,
                &need(&self.model.o1, "o1")?,
            ),
            "vkvm" => LatticeModel::vkvm(&need(&self.model.alpha, "alpha")?),
            "nikdv" => LatticeModel::nikdv(
                &need(&self.model.alpha, "alpha")?,
                &need(&self.model.beta, "beta")?,
            ),
            other => bail!("unknown model kind '{other}'"),
        };
        m.map_err(|e| anyhow::anyhow!("invalid model parameters: {e}"))
    }

    pub fn build_cos_k(&self) -> Result<CosK> {
        let cos = parse_rat(&self.carrier.cos_k)
            .ok_or_else(|| anyhow::anyhow!("bad carrier.cos_k '{}'", self.carrier.cos_k))?;
        CosK::new(cos, self.carrier.sin_sign).map_err(|e| anyhow::anyhow!("bad carrier: {e}"))
    }

    /// Serialize the resolved configuration as a manifest that can be loaded
    /// back as a config.
    pub fn manifest(&self, subcommand: &str) -> Result<String> {
        let body = toml::to_string_pretty(self).context("manifest serialization")?;
        Ok(format!(
            "# farfield run manifest v1\n# subcommand = {subcommand}\n# rerun: farfield {subcommand} --config <this file>\n{body}"
        ))
    }
}
