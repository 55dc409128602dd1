//! NARX model representations, regressor construction, one-step prediction
//! and free-run simulation.

mod mlp;
mod polynomial;
mod regressor;
mod simulate;

pub use mlp::{mlp_parameter_count, MlpModel};
pub use polynomial::{Monomial, PolynomialModel};
pub use regressor::{
    build_regression_matrix, build_static_regressors, Factor, Regression, RegressorSpec,
    StaticRegressor,
};
pub use simulate::{free_run, free_run_on, FreeRun, DEFAULT_DIVERGENCE_BOUND};

use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::data::SimSystem;
use crate::{Error, Result};

/// A one-step map `y(k) = F(psi(k-1))`.
pub trait Predictor {
    fn spec(&self) -> &RegressorSpec;

    /// Evaluates `F` at `psi`. The length of `psi` must equal `spec().len()`.
    fn predict(&self, psi: &[f64]) -> f64;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn spec(&self) -> &RegressorSpec {
        (**self).spec()
    }

    fn predict(&self, psi: &[f64]) -> f64 {
        (**self).predict(psi)
    }
}

/// Length-checked one-step-ahead prediction.
pub fn predict_one_step<P: Predictor + ?Sized>(model: &P, psi: &[f64]) -> Result<f64> {
    let expected = model.spec().len();
    if psi.len() != expected {
        return Err(Error::Shape {
            what: "regressor",
            expected,
            found: psi.len(),
        });
    }
    Ok(model.predict(psi))
}

static PLANT_SPEC: LazyLock<RegressorSpec> = LazyLock::new(|| RegressorSpec::siso(2, 2, true));

/// The benchmark plants viewed as noiseless NARX maps over
/// `[1, y(k-1), y(k-2), u(k-1), u(k-2)]`.
impl Predictor for SimSystem {
    fn spec(&self) -> &RegressorSpec {
        &PLANT_SPEC
    }

    fn predict(&self, psi: &[f64]) -> f64 {
        self.step(psi[1], psi[2], psi[3], psi[4])
    }
}

/// Version tag written into serialized models.
pub const PACKING_VERSION: u32 = 1;

/// Any trainable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub enum Model {
    Polynomial(PolynomialModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn theta(&self) -> &[f64] {
        match self {
            Model::Polynomial(m) => m.theta(),
            Model::Mlp(m) => m.theta(),
        }
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Ok(match self {
            Model::Polynomial(m) => Model::Polynomial(m.with_theta(theta)?),
            Model::Mlp(m) => Model::Mlp(m.with_theta(theta)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Polynomial(_) => "polynomial",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Predictor for Model {
    fn spec(&self) -> &RegressorSpec {
        match self {
            Model::Polynomial(m) => m.spec(),
            Model::Mlp(m) => m.spec(),
        }
    }

    fn predict(&self, psi: &[f64]) -> f64 {
        match self {
            Model::Polynomial(m) => m.predict(psi),
            Model::Mlp(m) => m.predict(psi),
        }
    }
}

impl From<PolynomialModel> for Model {
    fn from(m: PolynomialModel) -> Self {
        Model::Polynomial(m)
    }
}

impl From<MlpModel> for Model {
    fn from(m: MlpModel) -> Self {
        Model::Mlp(m)
    }
}

/// On-disk model:
///
/// ```json
/// {"kind": "mlp", "packing_version": 1, "spec": {...}, "hidden": 1, "theta": [...]}
/// {"kind": "polynomial", "packing_version": 1, "spec": {...}, "terms": [[{"y": 2}], ...], "theta": [...]}
/// ```
#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    packing_version: u32,
    spec: RegressorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<Monomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    theta: Vec<f64>,
}

impl From<&Model> for ModelFile {
    fn from(model: &Model) -> Self {
        match model {
            Model::Polynomial(m) => {
                let parts = polynomial::PolynomialParts {
                    spec: m.spec().clone(),
                    terms: m.terms().to_vec(),
                    theta: m.theta().to_vec(),
                };
                ModelFile {
                    kind: "polynomial".into(),
                    packing_version: PACKING_VERSION,
                    spec: parts.spec,
                    terms: Some(parts.terms),
                    hidden: None,
                    theta: parts.theta,
                }
            }
            Model::Mlp(m) => {
                let parts = mlp::MlpParts {
                    spec: m.spec().clone(),
                    hidden: m.hidden(),
                    theta: m.theta().to_vec(),
                };
                ModelFile {
                    kind: "mlp".into(),
                    packing_version: PACKING_VERSION,
                    spec: parts.spec,
                    terms: None,
                    hidden: Some(parts.hidden),
                    theta: parts.theta,
                }
            }
        }
    }
}

impl From<Model> for ModelFile {
    fn from(model: Model) -> Self {
        ModelFile::from(&model)
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.packing_version != PACKING_VERSION {
            return Err(Error::invalid(
                "model file",
                format!("unsupported packing version {}", file.packing_version),
            ));
        }
        match file.kind.as_str() {
            "polynomial" => {
                let terms = file.terms.ok_or_else(|| {
                    Error::invalid("model file", "polynomial model without terms")
                })?;
                Ok(PolynomialModel::new(file.spec, terms, file.theta)?.into())
            }
            "mlp" => {
                let hidden = file
                    .hidden
                    .ok_or_else(|| Error::invalid("model file", "mlp model without hidden size"))?;
                Ok(MlpModel::new(file.spec, hidden, file.theta)?.into())
            }
            other => Err(Error::invalid(
                "model file",
                format!("unknown kind {other:?}"),
            )),
        }
    }
}
