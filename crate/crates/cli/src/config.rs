use std::path::{Path, PathBuf};

use podtann_core::ensemble::{Ensemble, InclusionCellSpec, PathSettings};
use podtann_core::macroelement::{BlockNormalization, ForcePathSettings, IwanSpec};
use podtann_core::plasticity::MaterialParams;
use podtann_core::pod::EnergyNorm;
use podtann_core::random_field::GridSpec;
use podtann_core::tann::{EvolutionConfig, InferMode, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Configs that carry a seed the command line may override.
pub trait CommandConfig: Serialize + DeserializeOwned {
    fn set_seed(&mut self, _seed: u64) {}
    /// Makes every relative path absolute against `base`.
    fn resolve_paths(&mut self, _base: &Path) {}
}

fn resolve(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub params: MaterialParams,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleConfig {
    Inclusion(InclusionCellSpec),
    Points { points: Vec<WeightedPoint> },
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig::Inclusion(InclusionCellSpec::default())
    }
}

impl EnsembleConfig {
    pub fn build(&self) -> Result<Ensemble, CliError> {
        let r = match self {
            EnsembleConfig::Inclusion(spec) => spec.build(),
            EnsembleConfig::Points { points } => Ensemble::new(points.iter().map(|p| (p.params, p.weight)).collect()),
        };
        r.map_err(|e| CliError::Config(format!("ensemble: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RucConfig {
    pub ensemble: EnsembleConfig,
    pub paths: PathSettings,
    pub n_paths: usize,
    pub n_rotations: usize,
    pub seed: u64,
}

impl Default for RucConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            paths: PathSettings::default(),
            n_paths: 5,
            n_rotations: 5,
            seed: 1,
        }
    }
}

impl CommandConfig for RucConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub grid: GridSpec,
    pub kappa: f64,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub histogram_bins: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::cube(1.0, 16),
            kappa: 5.0,
            seed: 0,
            mean: 0.0,
            std: 1.0,
            histogram_bins: 20,
        }
    }
}

impl CommandConfig for FieldConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

/// A mode count or the word `"full"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rank {
    Count(usize),
    Word(RankWord),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankWord {
    Full,
}

impl Rank {
    pub fn resolve(&self, full: usize) -> usize {
        match self {
            Rank::Count(n) => *n,
            Rank::Word(RankWord::Full) => full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodConfig {
    pub dataset: PathBuf,
    pub r_list: Vec<Rank>,
    /// Modes kept in the saved basis; defaults to the largest of `r_list`.
    pub rank: Option<Rank>,
    pub norm: EnergyNorm,
    pub threshold: f64,
    /// Split groups left out of the basis, e.g. to hold them out for reconstruction.
    pub exclude_groups: Vec<usize>,
}

impl Default for PodConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset.json"),
            r_list: vec![Rank::Count(5), Rank::Count(10), Rank::Count(25)],
            rank: None,
            norm: EnergyNorm::Max,
            threshold: 1e-4,
            exclude_groups: Vec::new(),
        }
    }
}

impl CommandConfig for PodConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.dataset, base);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub dataset: PathBuf,
    pub basis: PathBuf,
    /// Retrain on the leading `r` modes of the basis.
    pub r: Option<usize>,
    pub train: TrainConfig,
    pub evolution: Option<EvolutionConfig>,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset.json"),
            basis: PathBuf::from("basis.json"),
            r: None,
            train: TrainConfig::default(),
            evolution: None,
        }
    }
}

impl CommandConfig for TrainCmdConfig {
    fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        if let Some(e) = self.evolution.as_mut() {
            e.seed = seed;
        }
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.dataset, base);
        resolve(&mut self.basis, base);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub model: PathBuf,
    pub basis: PathBuf,
    /// Dataset whose records supply drives and, teacher-forced, the ICs.
    pub dataset: PathBuf,
    pub mode: InferMode,
    pub evolution: Option<PathBuf>,
    pub records: Option<Vec<usize>>,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            basis: PathBuf::from("basis.json"),
            dataset: PathBuf::from("dataset.json"),
            mode: InferMode::TeacherForced,
            evolution: None,
            records: None,
        }
    }
}

impl CommandConfig for InferConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.model, base);
        resolve(&mut self.basis, base);
        resolve(&mut self.dataset, base);
        if let Some(e) = self.evolution.as_mut() {
            resolve(e, base);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub basis: PathBuf,
    pub dataset: PathBuf,
    pub r_list: Vec<Rank>,
    pub records: Option<Vec<usize>>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            basis: PathBuf::from("basis.json"),
            dataset: PathBuf::from("dataset.json"),
            r_list: vec![Rank::Count(5), Rank::Count(10), Rank::Count(25), Rank::Word(RankWord::Full)],
            records: None,
        }
    }
}

impl CommandConfig for ReconstructConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.basis, base);
        resolve(&mut self.dataset, base);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroGenConfig {
    pub iwan: IwanSpec,
    pub paths: ForcePathSettings,
    pub n_paths: usize,
    pub seed: u64,
    /// Extra cycle records, each a list of force peaks reached from zero.
    pub cycles: Vec<Vec<f64>>,
    pub cycle_steps: usize,
}

impl Default for MacroGenConfig {
    fn default() -> Self {
        Self {
            iwan: IwanSpec::default(),
            paths: ForcePathSettings::default(),
            n_paths: 10,
            seed: 1,
            cycles: Vec::new(),
            cycle_steps: 100,
        }
    }
}

impl CommandConfig for MacroGenConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub manifest: PathBuf,
    pub normalization: BlockNormalization,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("export.json"),
            normalization: BlockNormalization::None,
        }
    }
}

impl CommandConfig for IngestConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.manifest, base);
    }
}

/// Reads a config file, unwrapping a run manifest if one is given.
pub fn load_config<C: CommandConfig>(path: &Path, command: &str) -> Result<C, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let inner = match (v.get("command"), v.get("config")) {
        (Some(Value::String(cmd)), Some(cfg)) => {
            if cmd != command {
                return Err(CliError::Config(format!("manifest is for '{cmd}', not '{command}'")));
            }
            cfg.clone()
        }
        _ => v,
    };
    let mut cfg: C = serde_json::from_value(inner).map_err(|e| CliError::Config(e.to_string()))?;
    let base = path
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    cfg.resolve_paths(&base);
    Ok(cfg)
}
