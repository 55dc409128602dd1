use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::trace::{StaticCostKind, TraceEntry, TrainingTrace};
use super::{check_lambda, TrainingSet};
use crate::data::{DynDataset, SteadyDataset};
use crate::models::{MlpModel, Predictor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_damping: f64,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_damping: 1e10,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_damping", self.initial_damping),
            ("max_damping", self.max_damping),
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "lm config",
                    format!("{name} must be positive, got {v}"),
                ));
            }
        }
        if !(self.damping_up > 1.0 && self.damping_down > 1.0) {
            return Err(Error::invalid("lm config", "damping factors must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStop {
    Budget,
    Gradient,
    Step,
    Damping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmTrace {
    pub entries: Vec<TraceEntry>,
    /// `‖E‖²` and damping after each iteration, aligned with `entries`.
    pub cost: Vec<f64>,
    pub damping: Vec<f64>,
    pub stop: LmStop,
}

impl From<LmTrace> for TrainingTrace {
    fn from(t: LmTrace) -> Self {
        TrainingTrace {
            static_cost: StaticCostKind::Hat,
            entries: t.entries,
        }
    }
}

/// Stacked error `[(1-λ)(y - F(ψ)); λ(ȳ - F(ψ̄))]`.
pub fn error_vector<P: Predictor + ?Sized>(
    model: &P,
    set: &TrainingSet,
    lambda: f64,
) -> DVector<f64> {
    let n_d = set.dynamic_rows();
    let mut e = DVector::zeros(n_d + set.static_rows());
    for (i, (row, y)) in set.dynamic.rows().zip(set.dynamic.targets()).enumerate() {
        e[i] = (1.0 - lambda) * (y - model.predict(row));
    }
    for (j, (r, y)) in set.statics.iter().zip(&set.static_targets).enumerate() {
        e[n_d + j] = lambda * (y - model.predict(&r.psi_bar));
    }
    e
}

/// `∂F/∂θ`, one row per regressor.
pub fn mlp_jacobian(model: &MlpModel, regressors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let q = model.theta().len();
    let width = model.spec().len();
    let mut jac = DMatrix::zeros(regressors.len(), q);
    let mut grad = vec![0.0; q];
    for (i, psi) in regressors.iter().enumerate() {
        if psi.len() != width {
            return Err(Error::Shape {
                what: "regressor length",
                expected: width,
                found: psi.len(),
            });
        }
        model.gradient_into(psi, &mut grad);
        jac.row_mut(i).copy_from_slice(&grad);
    }
    Ok(jac)
}

/// Jacobian of the stacked error vector, `-∂E/∂θ`, with the residuals.
fn weighted_system(
    model: &MlpModel,
    set: &TrainingSet,
    lambda: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n_d = set.dynamic_rows();
    let n = n_d + set.static_rows();
    let q = model.theta().len();
    let mut jac = DMatrix::zeros(n, q);
    let mut e = DVector::zeros(n);
    let mut grad = vec![0.0; q];
    let dynamic = set
        .dynamic
        .rows()
        .zip(set.dynamic.targets())
        .map(|(r, y)| (r, *y, 1.0 - lambda));
    let statics = set
        .statics
        .iter()
        .zip(&set.static_targets)
        .map(|(r, y)| (r.psi_bar.as_slice(), *y, lambda));
    for (i, (psi, y, w)) in dynamic.chain(statics).enumerate() {
        let f = model.gradient_into(psi, &mut grad);
        e[i] = w * (y - f);
        for (c, g) in grad.iter().enumerate() {
            jac[(i, c)] = w * g;
        }
    }
    (jac, e)
}

fn entry(
    model: &MlpModel,
    set: &TrainingSet,
    lambda: f64,
    iteration: usize,
    start: &Instant,
    evaluations: u64,
) -> TraceEntry {
    let n_d = set.dynamic_rows();
    let mean_sq = |rows: &mut dyn Iterator<Item = f64>, n: usize| {
        if n == 0 {
            0.0
        } else {
            rows.map(|r| r * r).sum::<f64>() / n as f64
        }
    };
    let j_d = mean_sq(
        &mut set
            .dynamic
            .rows()
            .zip(set.dynamic.targets())
            .map(|(r, y)| y - model.predict(r)),
        n_d,
    );
    let j_s = mean_sq(
        &mut set
            .statics
            .iter()
            .zip(&set.static_targets)
            .map(|(r, y)| y - model.predict(&r.psi_bar)),
        set.static_rows(),
    );
    TraceEntry {
        iteration,
        j_d,
        j_s,
        j_sd: (1.0 - lambda) * j_d + lambda * j_s,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        model_evaluations: evaluations,
    }
}

/// Minimises `‖E(θ)‖²` by Levenberg-Marquardt with the analytic Jacobian.
/// Running out of iterations is a normal stop.
pub fn fit_weighted_lm(
    model: &MlpModel,
    zd: &DynDataset,
    zs: &SteadyDataset,
    lambda: f64,
    config: &LmConfig,
) -> Result<(MlpModel, LmTrace)> {
    check_lambda(lambda)?;
    config.validate()?;
    if model.theta().iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("initial parameters", "must be finite"));
    }
    let set = TrainingSet::new(model.spec(), zd, zs)?;
    fit_weighted_lm_on(model, &set, lambda, config)
}

pub(crate) fn fit_weighted_lm_on(
    model: &MlpModel,
    set: &TrainingSet,
    lambda: f64,
    config: &LmConfig,
) -> Result<(MlpModel, LmTrace)> {
    let start = Instant::now();
    let rows = (set.dynamic_rows() + set.static_rows()) as u64;
    let q = model.theta().len();
    let mut current = model.clone();
    let mut cost = error_vector(&current, set, lambda).norm_squared();
    let mut evaluations = rows;
    let mut mu = config.initial_damping;
    let mut trace = LmTrace {
        entries: vec![entry(&current, set, lambda, 0, &start, evaluations)],
        cost: vec![cost],
        damping: vec![mu],
        stop: LmStop::Budget,
    };

    for iteration in 1..=config.max_iterations {
        let (jac, residual) = weighted_system(&current, set, lambda);
        evaluations += rows;
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteJacobian { iteration });
        }
        let gradient = jac.transpose() * &residual;
        if gradient.amax() < config.gradient_tolerance {
            trace.stop = LmStop::Gradient;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let theta = DVector::from_column_slice(current.theta());
        let mut accepted = false;
        loop {
            let mut damped = jtj.clone();
            for d in 0..q {
                damped[(d, d)] += mu;
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&gradient),
                None => {
                    mu *= config.damping_up;
                    if mu > config.max_damping {
                        break;
                    }
                    continue;
                }
            };
            if step.norm() <= config.step_tolerance * (theta.norm() + config.step_tolerance) {
                trace.stop = LmStop::Step;
                break;
            }
            let candidate = current.with_theta((&theta + &step).as_slice().to_vec())?;
            let cost_new = error_vector(&candidate, set, lambda).norm_squared();
            evaluations += rows;
            if cost_new.is_finite() && cost_new < cost {
                current = candidate;
                cost = cost_new;
                mu = (mu / config.damping_down).max(f64::MIN_POSITIVE);
                accepted = true;
                break;
            }
            mu *= config.damping_up;
            if mu > config.max_damping {
                break;
            }
        }
        if !accepted {
            if trace.stop != LmStop::Step {
                trace.stop = LmStop::Damping;
            }
            break;
        }
        trace
            .entries
            .push(entry(&current, set, lambda, iteration, &start, evaluations));
        trace.cost.push(cost);
        trace.damping.push(mu);
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SteadyPair;
    use crate::models::RegressorSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psi(rng: &mut ChaCha8Rng, spec: &RegressorSpec) -> Vec<f64> {
        let mut psi: Vec<f64> = (0..spec.len())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        if spec.include_constant() {
            psi[0] = 1.0;
        }
        psi
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let spec = RegressorSpec::siso(2, 2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let hidden = 1 + trial % 3;
            let q = crate::models::mlp_parameter_count(&spec, hidden);
            let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-1.5..1.5)).collect();
            let m = MlpModel::new(spec.clone(), hidden, theta.clone()).unwrap();
            let rows: Vec<Vec<f64>> = (0..5).map(|_| random_psi(&mut rng, &spec)).collect();
            let jac = mlp_jacobian(&m, &rows).unwrap();
            let h = 1e-6;
            for c in 0..q {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[c] += h;
                minus[c] -= h;
                let mp = m.with_theta(plus).unwrap();
                let mm = m.with_theta(minus).unwrap();
                for (i, psi) in rows.iter().enumerate() {
                    let fd = (mp.predict(psi) - mm.predict(psi)) / (2.0 * h);
                    assert!(
                        (fd - jac[(i, c)]).abs() <= 1e-6,
                        "col {c}: {fd} vs {}",
                        jac[(i, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn bias_column_is_ones_and_dead_nodes_vanish() {
        let spec = RegressorSpec::siso(2, 2, true);
        let mut m = MlpModel::random(spec.clone(), 2, 4).unwrap();
        let mut theta = m.theta().to_vec();
        theta[1] = 0.0;
        m = m.with_theta(theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| random_psi(&mut rng, &spec)).collect();
        let jac = mlp_jacobian(&m, &rows).unwrap();
        assert!(jac.column(0).iter().all(|v| *v == 1.0));
        let off = m.hidden_offset(0);
        for c in off..off + 5 {
            assert!(jac.column(c).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn jacobian_rejects_short_regressor() {
        let m = MlpModel::zeros(RegressorSpec::siso(2, 2, true), 1).unwrap();
        assert!(matches!(
            mlp_jacobian(&m, &[vec![1.0, 0.0]]),
            Err(Error::Shape { .. })
        ));
    }

    fn synthetic(truth: &MlpModel, n: usize) -> (DynDataset, SteadyDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let run = crate::models::free_run(truth, std::slice::from_ref(&u), &[0.0, 0.0], 1e6).unwrap();
        let zd = DynDataset::siso(u, run.output).unwrap();
        let zs = SteadyDataset::new(vec![SteadyPair::siso(0.0, 0.0), SteadyPair::siso(0.5, 0.1)])
            .unwrap();
        (zd, zs)
    }

    #[test]
    fn recovers_generating_network() {
        let spec = RegressorSpec::siso(2, 2, true);
        let truth =
            MlpModel::new(spec.clone(), 1, vec![0.1, 0.8, 0.05, 0.6, -0.2, 0.9, 0.3]).unwrap();
        let (zd, zs) = synthetic(&truth, 300);
        let start: Vec<f64> = truth.theta().iter().map(|t| t * 1.1 + 0.01).collect();
        let init = truth.with_theta(start).unwrap();
        let (fit, trace) = fit_weighted_lm(&init, &zd, &zs, 0.0, &LmConfig::default()).unwrap();
        assert!(trace.entries.last().unwrap().j_d <= 1e-4 * 1e-4);
        for (a, b) in fit.theta().iter().zip(truth.theta()) {
            assert!((a - b).abs() < 1e-4, "{:?}", fit.theta());
        }
    }

    #[test]
    fn static_only_interpolates() {
        let spec = RegressorSpec::siso(2, 2, true);
        let pairs = [(-1.0, -0.4), (0.0, 0.05), (1.0, 0.3)]
            .iter()
            .map(|&(u, y)| SteadyPair::siso(u, y))
            .collect();
        let zs = SteadyDataset::new(pairs).unwrap();
        let zd = DynDataset::siso(vec![0.0; 10], vec![0.0; 10]).unwrap();
        let init = MlpModel::random(spec, 1, 3).unwrap();
        let (fit, _) = fit_weighted_lm(&init, &zd, &zs, 1.0, &LmConfig::default()).unwrap();
        assert!(crate::steady_state::cost_js_hat(&fit, &zs).unwrap() <= 1e-8);
    }

    #[test]
    fn zero_budget_is_identity() {
        let spec = RegressorSpec::siso(2, 2, true);
        let truth = MlpModel::random(spec.clone(), 1, 1).unwrap();
        let (zd, zs) = synthetic(&truth, 50);
        let init = MlpModel::random(spec, 1, 2).unwrap();
        let cfg = LmConfig {
            max_iterations: 0,
            ..LmConfig::default()
        };
        let (fit, trace) = fit_weighted_lm(&init, &zd, &zs, 0.4, &cfg).unwrap();
        assert_eq!(fit.theta(), init.theta());
        assert_eq!(trace.entries.len(), 1);
    }

    #[test]
    fn accepted_costs_decrease_and_static_block_vanishes_at_zero() {
        let spec = RegressorSpec::siso(2, 2, true);
        let truth =
            MlpModel::new(spec.clone(), 1, vec![0.0, 1.2, 0.1, 0.7, -0.1, 0.4, 0.2]).unwrap();
        let (zd, zs) = synthetic(&truth, 200);
        let init = MlpModel::random(spec.clone(), 1, 8).unwrap();
        let (fit, trace) = fit_weighted_lm(&init, &zd, &zs, 0.3, &LmConfig::default()).unwrap();
        assert!(trace.cost.windows(2).all(|w| w[1] <= w[0]));
        let set = TrainingSet::new(&spec, &zd, &zs).unwrap();
        let e = error_vector(&fit, &set, 0.0);
        assert!(e
            .rows(set.dynamic_rows(), set.static_rows())
            .iter()
            .all(|v| *v == 0.0));
    }
}
