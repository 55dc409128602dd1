//! Parameter estimation: weighted least squares for polynomial models,
//! weighted Levenberg-Marquardt for MLPs and the evolutionary baseline that
//! needs model fixed points at every objective evaluation.

mod ga;
mod lm;
mod trace;
mod wls;

pub use ga::{fit_ga_legacy, GaConfig, GaGeneration, GaTrace};
pub use lm::{error_vector, fit_weighted_lm, mlp_jacobian, LmConfig, LmStop, LmTrace};
pub use trace::{StaticCostKind, TraceEntry, TrainingTrace};
pub use wls::{fit_ols, fit_wls, pseudo_sample_system, solve_normal_equations, StackedSystem};

use serde::{Deserialize, Serialize};

use crate::data::{DynDataset, SteadyDataset};
use crate::models::{
    build_regression_matrix, build_static_regressors, Factor, MlpModel, Model, Monomial,
    PolynomialModel, Regression, RegressorSpec, StaticRegressor,
};
use crate::steady_state::FixedPointConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ols,
    Wls,
    WeightedLm,
    GaLegacy,
}

impl Algorithm {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ols" => Some(Self::Ols),
            "wls" => Some(Self::Wls),
            "weighted_lm" | "lm" => Some(Self::WeightedLm),
            "ga_legacy" | "ga" => Some(Self::GaLegacy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub algorithm: Algorithm,
    pub lm: LmConfig,
    pub ga: GaConfig,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            algorithm: Algorithm::Wls,
            lm: LmConfig::default(),
            ga: GaConfig::default(),
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        self.lm.validate()?;
        self.ga.validate()
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(
            "lambda",
            format!("{lambda} is outside [0, 1]"),
        ));
    }
    Ok(())
}

/// Model structure to be estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Structure {
    /// Polynomial terms over the smallest regressor covering them.
    Polynomial {
        inputs: usize,
        terms: Vec<Monomial>,
    },
    Mlp {
        spec: RegressorSpec,
        hidden: usize,
    },
}

impl Structure {
    pub fn example1() -> Self {
        Structure::Polynomial {
            inputs: 1,
            terms: vec![
                vec![Factor::y(2)],
                vec![Factor::u(0, 1)],
                vec![Factor::u(0, 1), Factor::y(2)],
                vec![Factor::u(0, 1), Factor::y(1)],
                vec![Factor::u(0, 2), Factor::y(1)],
            ],
        }
    }

    pub fn example2() -> Self {
        Structure::Mlp {
            spec: MlpModel::example2_spec(),
            hidden: 1,
        }
    }

    /// Zero coefficients for polynomials, seeded random weights for MLPs.
    pub fn initial_model(&self, seed: u64) -> Result<Model> {
        Ok(match self {
            Structure::Polynomial { inputs, terms } => {
                PolynomialModel::with_terms(terms.clone(), *inputs, vec![0.0; terms.len()])?.into()
            }
            Structure::Mlp { spec, hidden } => {
                MlpModel::random(spec.clone(), *hidden, seed)?.into()
            }
        })
    }
}

/// Dynamic regression rows and static pseudo-regressors built once per fit.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub dynamic: Regression,
    pub statics: Vec<StaticRegressor>,
    pub static_targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(spec: &RegressorSpec, zd: &DynDataset, zs: &SteadyDataset) -> Result<Self> {
        Ok(Self {
            dynamic: build_regression_matrix(spec, zd)?,
            statics: build_static_regressors(spec, zs)?,
            static_targets: zs.pairs().iter().map(|p| p.y_bar).collect(),
        })
    }

    pub fn dynamic_rows(&self) -> usize {
        self.dynamic.n_rows()
    }

    pub fn static_rows(&self) -> usize {
        self.statics.len()
    }
}

/// A fitted model with its optimisation history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: TrainingTrace,
}

/// Single-λ estimation dispatching on `config.algorithm`.
///
/// `ga_legacy` first trains a black-box (λ = 0) MLP with Levenberg-Marquardt
/// to seed the initial population, unless `seed` is supplied.
pub fn train(
    structure: &Structure,
    zd: &DynDataset,
    zs: &SteadyDataset,
    config: &TrainConfig,
    fixed_point: &FixedPointConfig,
    seed: Option<&MlpModel>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let initial = structure.initial_model(config.init_seed)?;
    match (config.algorithm, initial) {
        (Algorithm::Ols, Model::Polynomial(m)) => {
            let start = std::time::Instant::now();
            let fitted = fit_ols(&m, zd)?;
            let rows = zd.sample_count().saturating_sub(m.spec().max_lag()) as u64;
            let trace = TrainingTrace::single(&fitted, zd, zs, 0.0, start.elapsed(), rows)?;
            Ok(TrainOutcome {
                model: fitted.into(),
                trace,
            })
        }
        (Algorithm::Wls, Model::Polynomial(m)) => {
            let start = std::time::Instant::now();
            let fitted = fit_wls(&m, zd, zs, config.lambda)?;
            let rows = (zd.sample_count().saturating_sub(m.spec().max_lag()) + zs.len()) as u64;
            let trace =
                TrainingTrace::single(&fitted, zd, zs, config.lambda, start.elapsed(), rows)?;
            Ok(TrainOutcome {
                model: fitted.into(),
                trace,
            })
        }
        (Algorithm::WeightedLm, Model::Mlp(m)) => {
            let (fitted, trace) = fit_weighted_lm(&m, zd, zs, config.lambda, &config.lm)?;
            Ok(TrainOutcome {
                model: fitted.into(),
                trace: trace.into(),
            })
        }
        (Algorithm::GaLegacy, Model::Mlp(m)) => {
            let seed_model = match seed {
                Some(s) => s.clone(),
                None => fit_weighted_lm(&m, zd, zs, 0.0, &config.lm)?.0,
            };
            let (fitted, trace) =
                fit_ga_legacy(&seed_model, zd, zs, config.lambda, &config.ga, fixed_point)?;
            Ok(TrainOutcome {
                model: fitted.into(),
                trace: trace.into(),
            })
        }
        (algorithm, model) => Err(Error::invalid(
            "train config",
            format!("{algorithm:?} cannot train a {} model", model.kind()),
        )),
    }
}
