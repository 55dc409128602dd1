use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::regressor::RegressorSpec;
use super::Predictor;
use crate::{Error, Result};

/// Single-hidden-layer tanh network
/// `F = t0 + sum_i t_i tanh(t_i0 + sum_j t_ij x_j)`, where `x` are the lagged
/// (non-constant) regressor entries.
///
/// Parameter packing, version 1:
///
/// ```text
/// [ t0 | t_1 .. t_nh | t_10 t_11 .. t_1d | t_20 .. t_2d | ... | t_nh0 .. t_nhd ]
/// ```
///
/// so `q = 1 + nh + nh * (1 + d)` with `d` the number of lagged entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    spec: RegressorSpec,
    hidden: usize,
    theta: Vec<f64>,
}

pub fn mlp_parameter_count(spec: &RegressorSpec, hidden: usize) -> usize {
    1 + hidden + hidden * (1 + spec.lagged_len())
}

impl MlpModel {
    pub fn new(spec: RegressorSpec, hidden: usize, theta: Vec<f64>) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid(
                "mlp",
                "at least one hidden node is required",
            ));
        }
        let q = mlp_parameter_count(&spec, hidden);
        if theta.len() != q {
            return Err(Error::Shape {
                what: "mlp theta",
                expected: q,
                found: theta.len(),
            });
        }
        Ok(Self {
            spec,
            hidden,
            theta,
        })
    }

    pub fn zeros(spec: RegressorSpec, hidden: usize) -> Result<Self> {
        let q = mlp_parameter_count(&spec, hidden);
        Self::new(spec, hidden, vec![0.0; q])
    }

    /// Seeded uniform initialisation on `[-0.5, 0.5] / fan_in` per layer.
    pub fn random(spec: RegressorSpec, hidden: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = model.inputs();
        let out_fan = (hidden + 1) as f64;
        let hid_fan = (d + 1) as f64;
        for (p, t) in model.theta.iter_mut().enumerate() {
            let fan = if p <= hidden { out_fan } else { hid_fan };
            *t = rng.random_range(-0.5..0.5) / fan;
        }
        Ok(model)
    }

    /// Structure of the second benchmark:
    /// `t1 + t2 tanh(t3 + t4 y(k-1) + t5 y(k-2) + t6 u(k-1) + t7 u(k-2))`.
    pub fn example2_spec() -> RegressorSpec {
        RegressorSpec::siso(2, 2, true)
    }

    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Number of lagged inputs feeding each hidden node.
    pub fn inputs(&self) -> usize {
        self.spec.lagged_len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), self.hidden, theta)
    }

    pub(crate) fn hidden_offset(&self, node: usize) -> usize {
        1 + self.hidden + node * (1 + self.inputs())
    }

    #[inline]
    fn lagged<'a>(&self, psi: &'a [f64]) -> &'a [f64] {
        &psi[self.spec.include_constant() as usize..]
    }

    #[inline]
    fn activation(&self, node: usize, x: &[f64]) -> f64 {
        let off = self.hidden_offset(node);
        let w = &self.theta[off..off + 1 + x.len()];
        let z = w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        z.tanh()
    }

    /// Writes `dF/dtheta` at `psi` into `grad` and returns `F(psi)`.
    pub fn gradient_into(&self, psi: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.lagged(psi);
        let d = x.len();
        let mut out = self.theta[0];
        grad[0] = 1.0;
        for node in 0..self.hidden {
            let t = self.activation(node, x);
            let v = self.theta[1 + node];
            out += v * t;
            grad[1 + node] = t;
            let s = v * (1.0 - t * t);
            let off = self.hidden_offset(node);
            grad[off] = s;
            for (g, xj) in grad[off + 1..off + 1 + d].iter_mut().zip(x) {
                *g = s * xj;
            }
        }
        out
    }

    /// Bound on `|F|` from tanh saturation.
    pub fn output_bound(&self) -> f64 {
        self.theta[0].abs()
            + self.theta[1..=self.hidden]
                .iter()
                .map(|t| t.abs())
                .sum::<f64>()
    }
}

impl Predictor for MlpModel {
    fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    fn predict(&self, psi: &[f64]) -> f64 {
        let x = self.lagged(psi);
        let mut out = self.theta[0];
        for node in 0..self.hidden {
            out += self.theta[1 + node] * self.activation(node, x);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
pub(super) struct MlpParts {
    pub spec: RegressorSpec,
    pub hidden: usize,
    pub theta: Vec<f64>,
}
