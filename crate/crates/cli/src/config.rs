use std::path::{Path, PathBuf};

use greybox::data::{
    make_example_datasets, read_dyn_csv, read_steady_csv, DynDataset, ExampleRecipe, SimSystem,
    SteadyDataset,
};
use greybox::estimation::{Algorithm, Structure, TrainConfig};
use greybox::steady_state::FixedPointConfig;
use greybox::sweep::LambdaGrid;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::Overrides;

/// Generated example data or CSV files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zd: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zt: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zv: Option<PathBuf>,
}

/// `"example1"`, `"example2"` or an inline structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum StructureRef {
    Named(String),
    Custom(Structure),
}

impl TryFrom<Value> for StructureRef {
    type Error = String;

    fn try_from(v: Value) -> Result<Self, String> {
        match v {
            Value::String(s) => Ok(StructureRef::Named(s)),
            other => serde_json::from_value(other)
                .map(StructureRef::Custom)
                .map_err(|e| format!("invalid structure: {e}")),
        }
    }
}

impl From<StructureRef> for Value {
    fn from(s: StructureRef) -> Value {
        match s {
            StructureRef::Named(n) => Value::String(n),
            StructureRef::Custom(c) => serde_json::to_value(c).expect("structure serializes"),
        }
    }
}

fn default_fixed_point() -> FixedPointConfig {
    FixedPointConfig::with_horizon(15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureRef>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<LambdaGrid>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_fixed_point")]
    pub fixed_point: FixedPointConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structure: None,
            data: DataConfig::default(),
            grid: None,
            train: TrainConfig::default(),
            fixed_point: default_fixed_point(),
            out: None,
        }
    }
}

pub struct Datasets {
    pub zd: DynDataset,
    pub zt: DynDataset,
    pub zs: SteadyDataset,
    pub zv: Option<DynDataset>,
}

/// Fully resolved experiment; `config` is what the manifest records.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub structure: Structure,
    pub data: Datasets,
    pub out: PathBuf,
}

/// Absolute path, so that a manifest can be replayed from its own directory.
fn resolve_path(base: Option<&Path>, p: &Path) -> PathBuf {
    let joined = match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    };
    std::path::absolute(&joined).unwrap_or(joined)
}

/// Reads a config file. A manifest is accepted in place of a config.
fn read_config(path: &Path) -> Result<(ExperimentConfig, bool), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config_error = |source| CliError::Config {
        path: path.to_path_buf(),
        source,
    };
    let mut value: Value = serde_json::from_str(&text).map_err(config_error)?;
    if value.get("command").is_some() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    let algorithm_given = value.pointer("/train/algorithm").is_some();
    let mut config: ExperimentConfig = serde_json::from_value(value).map_err(config_error)?;
    let base = path.parent();
    for slot in [
        &mut config.data.zd,
        &mut config.data.zt,
        &mut config.data.zs,
        &mut config.data.zv,
    ] {
        if let Some(p) = slot.as_mut() {
            *p = resolve_path(base, p);
        }
    }
    Ok((config, algorithm_given))
}

impl Experiment {
    pub fn load(
        overrides: &Overrides,
        lambda: Option<f64>,
        grid: Option<&str>,
    ) -> Result<Self, CliError> {
        let (mut config, mut algorithm_given) = match &overrides.config {
            Some(path) => read_config(path)?,
            None => (ExperimentConfig::default(), false),
        };
        if let Some(example) = &overrides.example {
            config.data.example = Some(example.clone());
        }
        if let Some(seed) = overrides.seed {
            config.data.seed = Some(seed);
            config.train.init_seed = seed;
            config.train.ga.seed = seed;
        }
        if let Some(name) = &overrides.algorithm {
            config.train.algorithm = Algorithm::parse(name)
                .ok_or_else(|| CliError::usage(format!("unknown algorithm {name:?}")))?;
            algorithm_given = true;
        }
        if let Some(out) = &overrides.out {
            config.out = Some(out.clone());
        }
        if let Some(l) = lambda {
            config.train.lambda = l;
        }
        if let Some(g) = grid {
            config.grid = Some(LambdaGrid::parse(g)?);
        }

        let structure = match &config.structure {
            Some(StructureRef::Custom(s)) => s.clone(),
            Some(StructureRef::Named(n)) => named_structure(n)?,
            None => match &config.data.example {
                Some(e) => named_structure(e)?,
                None => return Err(CliError::usage("no structure given and no example to infer it from")),
            },
        };
        if !algorithm_given {
            config.train.algorithm = match structure {
                Structure::Polynomial { .. } => Algorithm::Wls,
                Structure::Mlp { .. } => Algorithm::WeightedLm,
            };
        }
        config.train.validate()?;
        let data = load_data(&config.data)?;
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        config.out = Some(out.clone());
        Ok(Self {
            config,
            structure,
            data,
            out,
        })
    }
}

pub fn parse_example(id: &str) -> Result<SimSystem, CliError> {
    SimSystem::parse(id).ok_or_else(|| {
        CliError::usage(format!("unknown example {id:?} (expected example1 or example2)"))
    })
}

fn named_structure(name: &str) -> Result<Structure, CliError> {
    match parse_example(name)? {
        SimSystem::Example1 => Ok(Structure::example1()),
        SimSystem::Example2 => Ok(Structure::example2()),
    }
}

fn load_data(cfg: &DataConfig) -> Result<Datasets, CliError> {
    let files = [&cfg.zd, &cfg.zt, &cfg.zs];
    match &cfg.example {
        Some(example) => {
            if files.iter().any(|f| f.is_some()) || cfg.zv.is_some() {
                return Err(CliError::usage("give either an example or dataset files, not both"));
            }
            let recipe = ExampleRecipe::for_system(parse_example(example)?);
            let ds = make_example_datasets(&recipe, cfg.seed.unwrap_or(0))?;
            Ok(Datasets {
                zd: ds.zd,
                zt: ds.zt,
                zs: ds.zs,
                zv: Some(ds.zv),
            })
        }
        None => {
            let (Some(zd), Some(zt), Some(zs)) = (&cfg.zd, &cfg.zt, &cfg.zs) else {
                return Err(CliError::usage("data needs an example id or the zd, zt and zs files"));
            };
            let read_dyn = |p: &PathBuf| read_dyn_csv(p).map_err(|e| file_error(p, e));
            Ok(Datasets {
                zd: read_dyn(zd)?,
                zt: read_dyn(zt)?,
                zs: read_steady_csv(zs).map_err(|e| file_error(zs, e))?,
                zv: cfg.zv.as_ref().map(read_dyn).transpose()?,
            })
        }
    }
}

fn file_error(path: &Path, e: greybox::Error) -> CliError {
    match e {
        greybox::Error::Io(source) => CliError::io(path, source),
        other => CliError::usage(format!("{}: {other}", path.display())),
    }
}
