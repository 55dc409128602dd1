//! Fixed-point machinery and the static cost functions.
//!
//! `J_s` compares measured steady-state outputs with model fixed points found
//! by iterating the model under constant input. `Ĵ_s` replaces the fixed point
//! with a single model step started from the measured pair itself, which costs
//! one evaluation per pair and vanishes exactly when every pair is a fixed
//! point of the model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DynDataset, SteadyDataset, SteadyPair};
use crate::models::{
    build_regression_matrix, build_static_regressors, Predictor, Regression, StaticRegressor,
};
use crate::{Error, Result};

/// Where the output history starts when searching for a model fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointStart {
    #[default]
    Zero,
    /// Start at the measured `y_bar` of the pair being evaluated.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub max_iterations: usize,
    /// Run exactly this many steps instead of stopping on the tolerance.
    pub fixed_horizon: Option<usize>,
    pub tolerance: f64,
    pub divergence_bound: f64,
    pub start: FixedPointStart,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            fixed_horizon: None,
            tolerance: 1e-10,
            divergence_bound: 1e6,
            start: FixedPointStart::Zero,
        }
    }
}

impl FixedPointConfig {
    pub fn with_horizon(horizon: usize) -> Self {
        Self {
            fixed_horizon: Some(horizon),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(
                "fixed-point config",
                "tolerance must be > 0",
            ));
        }
        if self.max_iterations == 0 || self.fixed_horizon == Some(0) {
            return Err(Error::invalid(
                "fixed-point config",
                "iteration budgets must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointStatus {
    Converged,
    /// Fixed horizon completed without leaving the divergence bound.
    HorizonReached,
    BudgetExhausted,
    /// Left the divergence bound at this iteration (1-based).
    Diverged {
        at: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub y_bar: f64,
    pub iterations: usize,
    pub status: FixedPointStatus,
}

impl FixedPoint {
    pub fn converged(&self) -> bool {
        self.status == FixedPointStatus::Converged
    }

    /// Whether `y_bar` can be used as the model's steady-state estimate.
    pub fn usable(&self) -> bool {
        matches!(
            self.status,
            FixedPointStatus::Converged | FixedPointStatus::HorizonReached
        )
    }
}

/// Iterates `model` from a zero output history with the input held at `u_bar`.
pub fn fixed_point_iterate<P: Predictor + ?Sized>(
    model: &P,
    u_bar: &[f64],
    config: &FixedPointConfig,
) -> Result<FixedPoint> {
    fixed_point_iterate_from(model, u_bar, 0.0, config)
}

/// As [`fixed_point_iterate`] with every output lag initialised at `y0`.
///
/// Tolerance-based stopping requires the last `max_output_lag` successive
/// differences to all be below `tolerance`, since the state is the whole lag
/// vector.
pub fn fixed_point_iterate_from<P: Predictor + ?Sized>(
    model: &P,
    u_bar: &[f64],
    y0: f64,
    config: &FixedPointConfig,
) -> Result<FixedPoint> {
    let spec = model.spec();
    spec.check_inputs(u_bar.len())?;
    let lags = spec.output_lags();
    let offset = spec.output_offset();
    let depth = spec.max_output_lag();
    let mut psi = spec.constant_regressor(y0, u_bar);
    let mut trail = Vec::with_capacity(depth + config.fixed_horizon.unwrap_or(16));
    trail.extend(std::iter::repeat_n(y0, depth));

    if let Some(horizon) = config.fixed_horizon {
        let mut diverged = None;
        let mut y = y0;
        for it in 1..=horizon {
            y = model.predict(&psi);
            if diverged.is_none() && (!y.is_finite() || y.abs() > config.divergence_bound) {
                diverged = Some(it);
            }
            trail.push(y);
            let len = trail.len();
            for (i, &lag) in lags.iter().enumerate() {
                psi[offset + i] = trail[len - lag];
            }
        }
        let status = match diverged {
            Some(at) => FixedPointStatus::Diverged { at },
            None => FixedPointStatus::HorizonReached,
        };
        return Ok(FixedPoint {
            y_bar: y,
            iterations: horizon,
            status,
        });
    }

    let mut settled = depth.saturating_sub(1);
    let mut prev = y0;
    for it in 1..=config.max_iterations {
        let y = model.predict(&psi);
        if !y.is_finite() || y.abs() > config.divergence_bound {
            return Ok(FixedPoint {
                y_bar: y,
                iterations: it,
                status: FixedPointStatus::Diverged { at: it },
            });
        }
        if depth == 0 {
            return Ok(FixedPoint {
                y_bar: y,
                iterations: it,
                status: FixedPointStatus::Converged,
            });
        }
        if (y - prev).abs() < config.tolerance {
            settled += 1;
        } else {
            settled = 0;
        }
        prev = y;
        trail.push(y);
        if settled >= depth {
            return Ok(FixedPoint {
                y_bar: y,
                iterations: it,
                status: FixedPointStatus::Converged,
            });
        }
        let len = trail.len();
        for (i, &lag) in lags.iter().enumerate() {
            psi[offset + i] = trail[len - lag];
        }
    }
    Ok(FixedPoint {
        y_bar: prev,
        iterations: config.max_iterations,
        status: FixedPointStatus::BudgetExhausted,
    })
}

fn mean_square(residuals: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = residuals.fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean squared one-step-ahead error over prebuilt regression rows.
pub fn cost_jd_on<P: Predictor + ?Sized>(model: &P, regression: &Regression) -> f64 {
    mean_square(
        regression
            .rows()
            .zip(regression.targets())
            .map(|(psi, y)| y - model.predict(psi)),
    )
}

/// `J_d`: mean squared one-step-ahead prediction error over `zd`.
pub fn cost_jd<P: Predictor + ?Sized>(model: &P, zd: &DynDataset) -> Result<f64> {
    Ok(cost_jd_on(
        model,
        &build_regression_matrix(model.spec(), zd)?,
    ))
}

pub fn cost_js_hat_on<P: Predictor + ?Sized>(
    model: &P,
    regressors: &[StaticRegressor],
    zs: &SteadyDataset,
) -> f64 {
    mean_square(
        regressors
            .iter()
            .zip(zs.pairs())
            .map(|(r, p)| p.y_bar - model.predict(&r.psi_bar)),
    )
}

/// `Ĵ_s = mean_j [y_bar_j - F(psi_bar_j)]^2`, one model evaluation per pair.
pub fn cost_js_hat<P: Predictor + ?Sized>(model: &P, zs: &SteadyDataset) -> Result<f64> {
    let regressors = build_static_regressors(model.spec(), zs)?;
    Ok(cost_js_hat_on(model, &regressors, zs))
}

/// Legacy static cost together with the number of model evaluations spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegacyStaticCost {
    pub value: f64,
    pub evaluations: u64,
}

fn legacy_term<P: Predictor + ?Sized>(
    model: &P,
    pair: &SteadyPair,
    config: &FixedPointConfig,
) -> Result<(f64, u64)> {
    let y0 = match config.start {
        FixedPointStart::Zero => 0.0,
        FixedPointStart::Target => pair.y_bar,
    };
    let fp = fixed_point_iterate_from(model, &pair.u_bar, y0, config)?;
    let cap = config.divergence_bound * config.divergence_bound;
    let term = if fp.usable() {
        (pair.y_bar - fp.y_bar).powi(2).min(cap)
    } else {
        cap
    };
    Ok((term, fp.iterations as u64))
}

/// `J_s` with fixed points found by iteration. Points whose iteration fails
/// contribute the squared divergence bound.
pub fn legacy_static_cost<P: Predictor + ?Sized>(
    model: &P,
    zs: &SteadyDataset,
    config: &FixedPointConfig,
) -> Result<LegacyStaticCost> {
    let mut sum = 0.0;
    let mut evaluations = 0;
    for pair in zs.pairs() {
        let (term, evals) = legacy_term(model, pair, config)?;
        sum += term;
        evaluations += evals;
    }
    Ok(LegacyStaticCost {
        value: sum / zs.len() as f64,
        evaluations,
    })
}

pub fn cost_js_legacy<P: Predictor + ?Sized>(
    model: &P,
    zs: &SteadyDataset,
    config: &FixedPointConfig,
) -> Result<f64> {
    Ok(legacy_static_cost(model, zs, config)?.value)
}

/// All cost terms of one model at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub lambda: f64,
    pub j_d: f64,
    pub j_s_hat: f64,
    pub j_s_legacy: Option<f64>,
    pub j_sd: f64,
}

impl CostReport {
    pub fn evaluate<P: Predictor + ?Sized>(
        model: &P,
        zd: &DynDataset,
        zs: &SteadyDataset,
        lambda: f64,
        legacy: Option<&FixedPointConfig>,
    ) -> Result<Self> {
        let j_d = cost_jd(model, zd)?;
        let j_s_hat = cost_js_hat(model, zs)?;
        let j_s_legacy = legacy
            .map(|cfg| cost_js_legacy(model, zs, cfg))
            .transpose()?;
        Ok(Self {
            lambda,
            j_d,
            j_s_hat,
            j_s_legacy,
            j_sd: (1.0 - lambda) * j_d + lambda * j_s_hat,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticCurvePoint {
    pub u_bar: Vec<f64>,
    /// `None` when the iteration did not converge.
    pub y_bar: Option<f64>,
    pub status: FixedPointStatus,
}

/// Model static behaviour sampled on a grid of constant inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticCurve {
    pub points: Vec<StaticCurvePoint>,
}

impl StaticCurve {
    /// Converged points only.
    pub fn to_steady_dataset(&self) -> Result<SteadyDataset> {
        SteadyDataset::new(
            self.points
                .iter()
                .filter_map(|p| {
                    p.y_bar.map(|y_bar| SteadyPair {
                        u_bar: p.u_bar.clone(),
                        y_bar,
                    })
                })
                .collect(),
        )
    }

    /// Same layout as steady-state CSV plus a `converged` column; the
    /// `y_bar` cell is empty for non-converged points.
    pub fn write_csv_to<W: Write>(&self, mut w: W) -> Result<()> {
        let channels = self.points.first().map_or(1, |p| p.u_bar.len());
        let mut header: Vec<String> = (1..=channels).map(|c| format!("u{c}_bar")).collect();
        header.push("y_bar".into());
        header.push("converged".into());
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let mut cells: Vec<String> = p.u_bar.iter().map(f64::to_string).collect();
            cells.push(p.y_bar.map(|y| y.to_string()).unwrap_or_default());
            cells.push(p.y_bar.is_some().to_string());
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(file)
    }
}

/// Maps [`fixed_point_iterate`] over a grid of constant inputs.
pub fn model_static_curve<P: Predictor + ?Sized>(
    model: &P,
    u_bar_grid: &[Vec<f64>],
    config: &FixedPointConfig,
) -> Result<StaticCurve> {
    let points = u_bar_grid
        .iter()
        .map(|u| {
            let fp = fixed_point_iterate(model, u, config)?;
            Ok(StaticCurvePoint {
                u_bar: u.clone(),
                y_bar: fp.usable().then_some(fp.y_bar),
                status: fp.status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StaticCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{linspace, make_example1_datasets, simulate_system, NoiseSpec, SimSystem};
    use crate::models::{Factor, MlpModel, PolynomialModel, RegressorSpec};
    use proptest::prelude::*;

    fn zero_poly() -> PolynomialModel {
        PolynomialModel::example1_structure(vec![0.0; 5]).unwrap()
    }

    fn doubling() -> PolynomialModel {
        let spec = RegressorSpec::new(vec![1], vec![vec![1]], true).unwrap();
        PolynomialModel::new(spec, vec![vec![Factor::y(1)]], vec![2.0]).unwrap()
    }

    fn grid(low: f64, high: f64, n: usize) -> Vec<Vec<f64>> {
        linspace(low, high, n)
            .into_iter()
            .map(|u| vec![u])
            .collect()
    }

    #[test]
    fn zero_model_converges_immediately() {
        let fp = fixed_point_iterate(&zero_poly(), &[3.7], &FixedPointConfig::default()).unwrap();
        assert_eq!((fp.y_bar, fp.iterations, fp.converged()), (0.0, 1, true));
    }

    #[test]
    fn example1_unit_input() {
        let cfg = FixedPointConfig {
            max_iterations: 5000,
            ..Default::default()
        };
        let fp = fixed_point_iterate(&PolynomialModel::example1_true(), &[1.0], &cfg).unwrap();
        assert!(fp.converged());
        assert!((fp.y_bar - 0.25 / 0.45).abs() < 1e-8);
    }

    #[test]
    fn unstable_map_does_not_converge() {
        let fp = fixed_point_iterate_from(&doubling(), &[0.3], 1.0, &FixedPointConfig::default())
            .unwrap();
        assert!(!fp.converged());
        assert!(matches!(fp.status, FixedPointStatus::Diverged { at: 20 }));
    }

    #[test]
    fn fixed_horizon_runs_exactly() {
        let cfg = FixedPointConfig::with_horizon(15);
        let fp = fixed_point_iterate(&PolynomialModel::example1_true(), &[1.0], &cfg).unwrap();
        assert_eq!(fp.iterations, 15);
        assert_eq!(fp.status, FixedPointStatus::HorizonReached);
        let fp = fixed_point_iterate_from(
            &doubling(),
            &[0.0],
            1.0,
            &FixedPointConfig::with_horizon(30),
        )
        .unwrap();
        assert_eq!(fp.iterations, 30);
        assert!(matches!(fp.status, FixedPointStatus::Diverged { at: 20 }));
    }

    #[test]
    fn budget_exhaustion_reported() {
        let cfg = FixedPointConfig {
            max_iterations: 5,
            ..Default::default()
        };
        let fp = fixed_point_iterate(&PolynomialModel::example1_true(), &[2.0], &cfg).unwrap();
        assert_eq!(fp.status, FixedPointStatus::BudgetExhausted);
        assert!(!fp.usable());
    }

    #[test]
    fn jd_examples() {
        let sets = make_example1_datasets(1).unwrap();
        let clean = simulate_system(
            SimSystem::Example1,
            sets.zd.input(0),
            &NoiseSpec::none(),
            [0.0; 2],
        )
        .unwrap()
        .data;
        assert!(cost_jd(&PolynomialModel::example1_true(), &clean).unwrap() < 1e-20);
        let flat = DynDataset::siso(vec![0.3; 10], vec![2.5; 10]).unwrap();
        assert!((cost_jd(&zero_poly(), &flat).unwrap() - 6.25).abs() < 1e-15);
    }

    #[test]
    fn js_examples() {
        let zs = SteadyDataset::new(vec![SteadyPair::siso(1.0, 2.0)]).unwrap();
        assert_eq!(cost_js_hat(&zero_poly(), &zs).unwrap(), 4.0);
        assert_eq!(
            cost_js_legacy(&zero_poly(), &zs, &FixedPointConfig::default()).unwrap(),
            4.0
        );

        let clean = crate::data::steady_curve_of_system(
            SimSystem::Example1,
            &linspace(-1.0, 3.0, 50),
            &NoiseSpec::none(),
        )
        .unwrap();
        assert!(cost_js_hat(&PolynomialModel::example1_true(), &clean).unwrap() < 1e-20);
        let cfg = FixedPointConfig {
            max_iterations: 5000,
            start: FixedPointStart::Target,
            ..Default::default()
        };
        assert!(cost_js_legacy(&PolynomialModel::example1_true(), &clean, &cfg).unwrap() < 1e-20);
    }

    #[test]
    fn legacy_cost_caps_divergent_points() {
        let zs = SteadyDataset::new(vec![SteadyPair::siso(0.0, 1.0)]).unwrap();
        let cfg = FixedPointConfig {
            start: FixedPointStart::Target,
            ..Default::default()
        };
        let cost = legacy_static_cost(&doubling(), &zs, &cfg).unwrap();
        assert_eq!(cost.value, 1e12);
        assert_eq!(cost.evaluations, 20);
    }

    #[test]
    fn legacy_evaluation_count_with_horizon() {
        let sets = make_example1_datasets(3).unwrap();
        let cost = legacy_static_cost(
            &PolynomialModel::example1_true(),
            &sets.zs,
            &FixedPointConfig::with_horizon(15),
        )
        .unwrap();
        assert_eq!(cost.evaluations, 50 * 15);
    }

    #[test]
    fn cost_report_combines_terms() {
        let sets = make_example1_datasets(5).unwrap();
        let r = CostReport::evaluate(
            &PolynomialModel::example1_true(),
            &sets.zd,
            &sets.zs,
            0.3,
            None,
        )
        .unwrap();
        assert!((r.j_sd - (0.7 * r.j_d + 0.3 * r.j_s_hat)).abs() < 1e-15);
        assert!(r.j_s_legacy.is_none());
    }

    #[test]
    fn static_curve_examples() {
        let cfg = FixedPointConfig {
            max_iterations: 5000,
            ..Default::default()
        };
        let curve = model_static_curve(&zero_poly(), &grid(-1.0, 3.0, 9), &cfg).unwrap();
        assert!(curve.points.iter().all(|p| p.y_bar == Some(0.0)));

        let curve = model_static_curve(
            &PolynomialModel::example1_true(),
            &grid(-1.0, 3.0, 50),
            &cfg,
        )
        .unwrap();
        for p in &curve.points {
            let u = p.u_bar[0];
            assert!((p.y_bar.unwrap() - 0.25 * u / (0.25 + 0.2 * u)).abs() < 1e-8);
        }

        let curve = model_static_curve(&doubling(), &grid(0.5, 1.0, 3), &cfg).unwrap();
        // starts at zero, which is the (unstable) fixed point of y -> 2y
        assert!(curve.points.iter().all(|p| p.y_bar == Some(0.0)));
        let spec = RegressorSpec::new(vec![1], vec![vec![1]], true).unwrap();
        let unstable = PolynomialModel::new(
            spec,
            vec![vec![Factor::y(1)], vec![Factor::u(0, 1)]],
            vec![2.0, 1.0],
        )
        .unwrap();
        let curve = model_static_curve(&unstable, &grid(0.5, 1.0, 3), &cfg).unwrap();
        assert!(curve.points.iter().all(|p| p.y_bar.is_none()));
        let mut buf = Vec::new();
        curve.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u1_bar,y_bar,converged\n0.5,,false\n"));
    }

    proptest! {
        // A pair that is an exact fixed point zeroes both summands; a zero
        // summand of the one-step cost means the pair satisfies the fixed-point
        // equation.
        #[test]
        fn fixed_point_summands_vanish_together(
            theta in proptest::collection::vec(-0.4..0.4f64, 7),
            u in -3.0..3.0f64,
        ) {
            let m = MlpModel::new(MlpModel::example2_spec(), 1, theta).unwrap();
            let cfg = FixedPointConfig { max_iterations: 10_000, tolerance: 1e-14, ..Default::default() };
            let fp = fixed_point_iterate(&m, &[u], &cfg).unwrap();
            prop_assume!(fp.converged());
            let psi = m.spec().constant_regressor(fp.y_bar, &[u]);
            prop_assert!((m.predict(&psi) - fp.y_bar).abs() < 1e-12);
            let zs = SteadyDataset::new(vec![SteadyPair::siso(u, m.predict(&psi))]).unwrap();
            prop_assert!(cost_js_hat(&m, &zs).unwrap() < 1e-24);
        }
    }
}
