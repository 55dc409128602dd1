//! λ sweeps, decision makers and free-run metrics.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DynDataset, SteadyDataset};
use crate::estimation::{fit_weighted_lm, train, Algorithm, Structure, TrainConfig};
use crate::models::{free_run_on, Model, Predictor, DEFAULT_DIVERGENCE_BOUND};
use crate::steady_state::{cost_jd, cost_js_hat, cost_js_legacy, FixedPointConfig};
use crate::{Error, Result};

/// RMSE reported for diverged or runaway simulations.
pub const RMSE_CAP: f64 = 1e6;

/// Environment variable limiting the sweep thread pool.
pub const THREADS_ENV: &str = "GREYBOX_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    /// Sorts the values and drops duplicates.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("lambda grid", "is empty"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(
                "lambda grid",
                format!("{v} is outside [0, 1]"),
            ));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::invalid("lambda grid", "is empty")),
            1 => Self::new(vec![start]),
            _ => Self::new(
                (0..count)
                    .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                    .collect(),
            ),
        }
    }

    /// `0.1, 0.2, ..., 0.9`.
    pub fn tenths() -> Self {
        Self::new((1..10).map(|i| i as f64 / 10.0).collect()).expect("valid grid")
    }

    /// 49 values from 0.02 to 0.98.
    pub fn fine() -> Self {
        Self::new((1..50).map(|i| i as f64 / 50.0).collect()).expect("valid grid")
    }

    /// Accepts `a,b,c` or `start:stop:count`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |s: &str| Error::invalid("lambda grid", format!("cannot parse {s:?}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(s));
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            [start, stop, count] => {
                let count = count.trim().parse::<usize>().map_err(|_| bad(count))?;
                Self::linspace(num(start)?, num(stop)?, count)
            }
            [list] => Self::new(list.split(',').map(num).collect::<Result<_>>()?),
            _ => Err(bad(text)),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.values
    }
}

/// One trained model of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub model: Option<Model>,
    pub j_d: Option<f64>,
    pub j_s_hat: Option<f64>,
    pub j_s_legacy: Option<f64>,
    pub rmse_zt: Option<f64>,
    pub zt_diverged: bool,
    pub rmse_zv: Option<f64>,
    pub zv_diverged: bool,
    /// Absolute correlation between the free-run error over `Z_d` and the
    /// measured output; `None` when that free run diverged.
    pub corr_dm: Option<f64>,
    pub train_time_ms: f64,
    pub eval_count: u64,
    pub error: Option<String>,
}

impl ParetoPoint {
    fn failed(lambda: f64, train_time_ms: f64, error: &Error) -> Self {
        Self {
            lambda,
            model: None,
            j_d: None,
            j_s_hat: None,
            j_s_legacy: None,
            rmse_zt: None,
            zt_diverged: false,
            rmse_zv: None,
            zv_diverged: false,
            corr_dm: None,
            train_time_ms,
            eval_count: 0,
            error: Some(error.to_string()),
        }
    }
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape {
            what: "rmse lengths",
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::invalid("rmse", "no samples"));
    }
    let sum: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Free-run RMSE over the predicted part of `data`, with a divergence flag.
/// Diverged or non-finite runs report [`RMSE_CAP`].
pub fn free_run_rmse<P: Predictor + ?Sized>(model: &P, data: &DynDataset) -> Result<(f64, bool)> {
    let run = free_run_on(model, data, DEFAULT_DIVERGENCE_BOUND)?;
    if run.diverged() {
        return Ok((RMSE_CAP, true));
    }
    let value = rmse(run.predicted(), &data.output()[run.start..])?;
    Ok(if value.is_finite() {
        (value.min(RMSE_CAP), false)
    } else {
        (RMSE_CAP, true)
    })
}

/// `|corr(y - ŷ, y)|` over the free run on `zd`; `None` if it diverged.
pub fn correlation_statistic<P: Predictor + ?Sized>(
    model: &P,
    zd: &DynDataset,
) -> Result<Option<f64>> {
    let run = free_run_on(model, zd, DEFAULT_DIVERGENCE_BOUND)?;
    if run.diverged() {
        return Ok(None);
    }
    let y = &zd.output()[run.start..];
    let err: Vec<f64> = y.iter().zip(run.predicted()).map(|(a, p)| a - p).collect();
    Ok(Some(pearson(&err, y).abs()))
}

/// Pearson correlation; zero when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn select_by(
    points: &[ParetoPoint],
    key: impl Fn(&ParetoPoint) -> Option<f64>,
) -> Result<&ParetoPoint> {
    points
        .iter()
        .filter_map(|p| key(p).filter(|v| v.is_finite()).map(|v| (v, p)))
        .min_by(|(va, pa), (vb, pb)| va.total_cmp(vb).then(pa.lambda.total_cmp(&pb.lambda)))
        .map(|(_, p)| p)
        .ok_or(Error::NoCandidates)
}

/// Point with the least correlated free-run error; ties go to the smaller λ.
pub fn decide_min_corr(points: &[ParetoPoint]) -> Result<&ParetoPoint> {
    select_by(points, |p| p.model.as_ref().and(p.corr_dm))
}

/// Point with the smallest free-run RMSE over `Z_t`; diverged runs never win
/// and ties go to the smaller λ.
pub fn decide_min_rmse_zt(points: &[ParetoPoint]) -> Result<&ParetoPoint> {
    select_by(points, |p| {
        if p.zt_diverged || p.model.is_none() {
            None
        } else {
            p.rmse_zt
        }
    })
}

/// Non-dominated points in `(j_d, j_s_hat)`, sorted by λ. Failed points are
/// ignored.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let coords: Vec<Option<(f64, f64)>> = points
        .iter()
        .map(|p| match (p.j_d, p.j_s_hat) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((a, b)),
            _ => None,
        })
        .collect();
    let dominates =
        |a: (f64, f64), b: (f64, f64)| a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1);
    let mut front: Vec<ParetoPoint> = coords
        .iter()
        .zip(points)
        .filter_map(|(c, p)| {
            let c = (*c)?;
            (!coords.iter().flatten().any(|o| dominates(*o, c))).then(|| p.clone())
        })
        .collect();
    front.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    front
}

/// Datasets used by a sweep. `zv` is optional.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub zd: &'a DynDataset,
    pub zt: &'a DynDataset,
    pub zs: &'a SteadyDataset,
    pub zv: Option<&'a DynDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub train: TrainConfig,
    pub fixed_point: FixedPointConfig,
    /// Report the fixed-point static cost for every point.
    pub report_legacy: bool,
    /// Worker threads; `None` reads `GREYBOX_THREADS`, then falls back to
    /// rayon's default.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            fixed_point: FixedPointConfig::with_horizon(15),
            report_legacy: false,
            threads: None,
        }
    }
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n| *n > 0)
}

/// Trains and evaluates one model per λ. A failing λ is recorded in its point
/// and the sweep continues. Output order follows the grid and does not depend
/// on the thread count.
pub fn run_sweep(
    structure: &Structure,
    data: SweepData<'_>,
    grid: &LambdaGrid,
    config: &SweepConfig,
) -> Result<Vec<ParetoPoint>> {
    config.train.validate()?;
    config.fixed_point.validate()?;
    let seed = match (config.train.algorithm, structure) {
        (Algorithm::GaLegacy, Structure::Mlp { .. }) => {
            let Model::Mlp(init) = structure.initial_model(config.train.init_seed)? else {
                unreachable!("mlp structure builds an mlp")
            };
            Some(fit_weighted_lm(&init, data.zd, data.zs, 0.0, &config.train.lm)?.0)
        }
        _ => None,
    };
    let one = |&lambda: &f64| -> ParetoPoint {
        let cfg = TrainConfig {
            lambda,
            ..config.train.clone()
        };
        let start = Instant::now();
        let outcome = train(
            structure,
            data.zd,
            data.zs,
            &cfg,
            &config.fixed_point,
            seed.as_ref(),
        );
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        match outcome.and_then(|o| {
            evaluate_point(
                lambda,
                o.model,
                o.trace.model_evaluations(),
                elapsed,
                data,
                config,
            )
        }) {
            Ok(p) => p,
            Err(e) => ParetoPoint::failed(lambda, elapsed, &e),
        }
    };
    let threads = config.threads.or_else(threads_from_env);
    match threads {
        Some(1) => Ok(grid.values().iter().map(one).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("thread pool", e.to_string()))?;
            Ok(pool.install(|| grid.values().par_iter().map(one).collect()))
        }
        None => Ok(grid.values().par_iter().map(one).collect()),
    }
}

fn evaluate_point(
    lambda: f64,
    model: Model,
    eval_count: u64,
    train_time_ms: f64,
    data: SweepData<'_>,
    config: &SweepConfig,
) -> Result<ParetoPoint> {
    let (rmse_zt, zt_diverged) = free_run_rmse(&model, data.zt)?;
    let zv = data.zv.map(|zv| free_run_rmse(&model, zv)).transpose()?;
    let j_s_legacy = if config.report_legacy || config.train.algorithm == Algorithm::GaLegacy {
        Some(cost_js_legacy(&model, data.zs, &config.fixed_point)?)
    } else {
        None
    };
    Ok(ParetoPoint {
        lambda,
        j_d: Some(cost_jd(&model, data.zd)?),
        j_s_hat: Some(cost_js_hat(&model, data.zs)?),
        j_s_legacy,
        rmse_zt: Some(rmse_zt),
        zt_diverged,
        rmse_zv: zv.map(|v| v.0),
        zv_diverged: zv.is_some_and(|v| v.1),
        corr_dm: correlation_statistic(&model, data.zd)?,
        train_time_ms,
        eval_count,
        error: None,
        model: Some(model),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv_to<W: Write>(points: &[ParetoPoint], mut w: W) -> Result<()> {
    writeln!(
        w,
        "lambda,j_d,j_s_hat,j_s_legacy,rmse_zt,zt_diverged,rmse_zv,zv_diverged,corr_dm,train_time_ms,eval_count,error"
    )?;
    for p in points {
        let error = p
            .error
            .as_deref()
            .unwrap_or("")
            .replace(['"', ',', '\n'], " ");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            p.lambda,
            cell(p.j_d),
            cell(p.j_s_hat),
            cell(p.j_s_legacy),
            cell(p.rmse_zt),
            p.zt_diverged,
            cell(p.rmse_zv),
            p.zv_diverged,
            cell(p.corr_dm),
            p.train_time_ms,
            p.eval_count,
            error
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(points: &[ParetoPoint], path: impl AsRef<Path>) -> Result<()> {
    write_sweep_csv_to(
        points,
        std::io::BufWriter::new(std::fs::File::create(path)?),
    )
}
