use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use linkerr::ci_baseline::CiConfig;
use linkerr::neighbourhood::NeighbourhoodSpec;
use linkerr::simgen::{SimConfig, StudyConfig};
use linkerr::FitConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Aligned human-readable tables.
    Table,
    /// Structured JSON document embedding the resolved configuration.
    #[default]
    Doc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeRule {
    /// Use every record.
    #[default]
    All,
    /// `factor * ceil(N^(2/5))`.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Fixed(u64),
    Rule(SizeRule),
}

impl Default for SampleSize {
    fn default() -> Self {
        SampleSize::Rule(SizeRule::All)
    }
}

impl FromStr for SampleSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SampleSize::Rule(SizeRule::Auto)),
            "all" => Ok(SampleSize::Rule(SizeRule::All)),
            _ => s
                .parse()
                .map(SampleSize::Fixed)
                .map_err(|_| format!("`{s}` is not `auto`, `all` or a record count")),
        }
    }
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Fixed(m) => write!(f, "{m}"),
            SampleSize::Rule(SizeRule::All) => f.write_str("all"),
            SampleSize::Rule(SizeRule::Auto) => f.write_str("auto"),
        }
    }
}

/// Where the neighbour counts come from: a counts table, or a pair of
/// record files counted under `neighbourhood`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub counts: Option<PathBuf>,
    pub file_a: Option<PathBuf>,
    pub file_b: Option<PathBuf>,
    /// Column holding truth ids in record files; ignored when absent.
    pub truth_column: String,
    pub delimiter: char,
    pub neighbourhood: NeighbourhoodSpec,
    /// Population size `N`. Defaults to the size of the second record file,
    /// or to the total of the counts table when it is subsampled.
    pub population: Option<u64>,
    pub sample_size: SampleSize,
    pub sample_factor: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            counts: None,
            file_a: None,
            file_b: None,
            truth_column: "id".into(),
            delimiter: ',',
            neighbourhood: NeighbourhoodSpec::ExactMatchAll,
            population: None,
            sample_size: SampleSize::default(),
            sample_factor: 2.0,
        }
    }
}

impl InputConfig {
    pub fn delimiter_byte(&self) -> Result<u8, CliError> {
        u8::try_from(self.delimiter).map_err(|_| CliError::config("delimiter must be a single ASCII character"))
    }
}

/// A preset scenario with optional overrides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub n: Option<u64>,
    pub k: Option<usize>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta0p: Option<f64>,
    pub beta1p: Option<f64>,
    pub sigma_u: Option<f64>,
    pub sigma_up: Option<f64>,
}

impl ScenarioConfig {
    pub fn resolve(&self, seed: u64) -> Result<SimConfig, CliError> {
        let name = self.preset.as_deref().unwrap_or("scenario1");
        let base = SimConfig::preset(name).ok_or_else(|| CliError::config(format!("unknown preset `{name}`")))?;
        let sim = SimConfig {
            n: self.n.unwrap_or(base.n),
            k: self.k.unwrap_or(base.k),
            beta0: self.beta0.unwrap_or(base.beta0),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta0p: self.beta0p.unwrap_or(base.beta0p),
            beta1p: self.beta1p.unwrap_or(base.beta1p),
            sigma_u: self.sigma_u.unwrap_or(base.sigma_u),
            sigma_up: self.sigma_up.unwrap_or(base.sigma_up),
            seed,
        };
        sim.validate()?;
        Ok(sim)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioConfig,
    /// Output directory for `a.csv` and `b.csv`.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountConfig {
    /// Also write the matched/unmatched split when truth ids are present.
    pub split: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCmdConfig {
    pub g: usize,
    pub em: FitConfig,
}

impl Default for FitCmdConfig {
    fn default() -> Self {
        Self {
            g: 1,
            em: FitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCiCmdConfig {
    /// Pattern-frequency table (`pattern,count`) used instead of record files.
    pub table: Option<PathBuf>,
    pub em: CiConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapCmdConfig {
    pub b: usize,
    pub alpha: f64,
    /// Per-replicate estimates are written here when set.
    pub replicates: Option<PathBuf>,
}

impl Default for BootstrapCmdConfig {
    fn default() -> Self {
        Self {
            b: 250,
            alpha: 0.05,
            replicates: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrtCmdConfig {
    pub gmax: usize,
    /// Null component counts; `1..gmax` when empty.
    pub g_list: Vec<usize>,
    pub b: usize,
    pub alpha: f64,
}

impl Default for LrtCmdConfig {
    fn default() -> Self {
        Self {
            gmax: 4,
            g_list: Vec::new(),
            b: 250,
            alpha: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyCmdConfig {
    pub scenario: ScenarioConfig,
    pub reps: usize,
    pub g_list: Vec<usize>,
    pub m_factor: f64,
    pub include_ci: bool,
    pub em: FitConfig,
    pub ci: CiConfig,
    /// QQ-plot data is written here when set.
    pub qq: Option<PathBuf>,
}

impl Default for StudyCmdConfig {
    fn default() -> Self {
        let d = StudyConfig::default();
        Self {
            scenario: ScenarioConfig::default(),
            reps: d.reps,
            g_list: d.g_list,
            m_factor: d.m_factor,
            include_ci: d.include_ci,
            em: d.fit,
            ci: d.ci,
            qq: None,
        }
    }
}

impl StudyCmdConfig {
    pub fn resolve(&self) -> Result<StudyConfig, CliError> {
        Ok(StudyConfig {
            sim: self.scenario.resolve(0)?,
            reps: self.reps,
            g_list: self.g_list.clone(),
            m_factor: self.m_factor,
            include_ci: self.include_ci,
            fit: self.em,
            ci: self.ci.clone(),
        })
    }
}

/// Everything a run reads. Each subcommand uses the global fields, `input`
/// where it consumes counts, and its own block.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub input: InputConfig,
    pub simulate: SimulateConfig,
    pub count: CountConfig,
    pub fit: FitCmdConfig,
    pub fit_ci: FitCiCmdConfig,
    pub bootstrap: BootstrapCmdConfig,
    pub lrt: LrtCmdConfig,
    pub study: StudyCmdConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }
}
