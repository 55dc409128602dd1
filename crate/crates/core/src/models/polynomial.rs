use serde::{Deserialize, Serialize};

use super::regressor::{Factor, RegressorSpec};
use super::Predictor;
use crate::{Error, Result};

/// Product of lagged variables; the empty product is the constant term.
pub type Monomial = Vec<Factor>;

/// Polynomial NARX model `y(k) = sum_t theta_t * prod(term_t)`, linear in `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    spec: RegressorSpec,
    terms: Vec<Monomial>,
    slots: Vec<Vec<usize>>,
    theta: Vec<f64>,
}

impl PolynomialModel {
    pub fn new(spec: RegressorSpec, terms: Vec<Monomial>, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != terms.len() {
            return Err(Error::Shape {
                what: "polynomial theta",
                expected: terms.len(),
                found: theta.len(),
            });
        }
        let mut canonical: Vec<Monomial> = terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.sort_unstable();
                t
            })
            .collect();
        let mut slots = Vec::with_capacity(terms.len());
        for term in &canonical {
            let idx = term
                .iter()
                .map(|&f| {
                    spec.slot_of(f).ok_or_else(|| {
                        Error::invalid("model term", format!("{f:?} is not in the regressor spec"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            slots.push(idx);
        }
        canonical.sort_unstable();
        if canonical.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("polynomial model", "duplicate terms"));
        }
        Ok(Self {
            spec,
            terms,
            slots,
            theta,
        })
    }

    /// Builds the model over the smallest regressor spec covering `terms`.
    pub fn with_terms(terms: Vec<Monomial>, input_count: usize, theta: Vec<f64>) -> Result<Self> {
        let spec = RegressorSpec::covering(&terms, input_count, true)?;
        Self::new(spec, terms, theta)
    }

    /// Structure of the first benchmark:
    /// `y(k-2), u(k-1), u(k-1)y(k-2), u(k-1)y(k-1), u(k-2)y(k-1)`.
    pub fn example1_structure(theta: Vec<f64>) -> Result<Self> {
        let terms = vec![
            vec![Factor::y(2)],
            vec![Factor::u(0, 1)],
            vec![Factor::u(0, 1), Factor::y(2)],
            vec![Factor::u(0, 1), Factor::y(1)],
            vec![Factor::u(0, 2), Factor::y(1)],
        ];
        Self::with_terms(terms, 1, theta)
    }

    /// First benchmark with its true coefficients.
    pub fn example1_true() -> Self {
        Self::example1_structure(vec![0.75, 0.25, -0.2, 0.0, 0.0]).expect("valid structure")
    }

    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.terms.len() {
            return Err(Error::Shape {
                what: "polynomial theta",
                expected: self.terms.len(),
                found: theta.len(),
            });
        }
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Term values at `psi`, i.e. one row of the linear regression.
    pub fn features_into(&self, psi: &[f64], out: &mut [f64]) {
        for (o, idx) in out.iter_mut().zip(&self.slots) {
            *o = idx.iter().map(|&i| psi[i]).product();
        }
    }

    pub fn features(&self, psi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        self.features_into(psi, &mut out);
        out
    }
}

impl Predictor for PolynomialModel {
    fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    fn predict(&self, psi: &[f64]) -> f64 {
        self.slots
            .iter()
            .zip(&self.theta)
            .map(|(idx, t)| t * idx.iter().map(|&i| psi[i]).product::<f64>())
            .sum()
    }
}

#[derive(Serialize, Deserialize)]
pub(super) struct PolynomialParts {
    pub spec: RegressorSpec,
    pub terms: Vec<Monomial>,
    pub theta: Vec<f64>,
}
