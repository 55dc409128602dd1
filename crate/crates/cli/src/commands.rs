use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use greybox::data::{
    make_example_datasets, read_dyn_csv, read_steady_csv, write_dyn_csv, write_steady_csv,
    DynDataset, ExampleRecipe,
};
use greybox::estimation::{train as fit, Algorithm};
use greybox::models::{build_regression_matrix, free_run_on, Model, Predictor, DEFAULT_DIVERGENCE_BOUND};
use greybox::steady_state::{
    cost_jd, cost_js_hat, cost_js_legacy, model_static_curve, CostReport, FixedPointConfig,
};
use greybox::sweep::{
    decide_min_corr, decide_min_rmse_zt, free_run_rmse, pareto_front, rmse, run_sweep,
    write_sweep_csv, LambdaGrid, ParetoPoint, SweepConfig, SweepData,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_example, Experiment};
use crate::error::CliError;
use crate::{EvalMode, Overrides};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(greybox::Error::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn at_path<T>(path: &Path, r: greybox::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        greybox::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    })
}

pub fn generate(example: &str, seed: u64, out: &Path) -> Result<(), CliError> {
    let system = parse_example(example)?;
    let recipe = ExampleRecipe::for_system(system);
    let ds = make_example_datasets(&recipe, seed)?;
    create_dir(out)?;
    for (name, data) in [("zd.csv", &ds.zd), ("zt.csv", &ds.zt), ("zv.csv", &ds.zv)] {
        let path = out.join(name);
        at_path(&path, write_dyn_csv(&path, data))?;
    }
    let zs = out.join("zs.csv");
    at_path(&zs, write_steady_csv(&zs, &ds.zs))?;
    let manifest = json!({
        "command": "generate",
        "version": env!("CARGO_PKG_VERSION"),
        "example": system.id(),
        "seed": seed,
        "recipe": recipe,
        "files": {"zd": "zd.csv", "zt": "zt.csv", "zs": "zs.csv", "zv": "zv.csv"},
        "rows": {
            "zd": ds.zd.sample_count(),
            "zt": ds.zt.sample_count(),
            "zs": ds.zs.len(),
            "zv": ds.zv.sample_count(),
        },
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {} datasets for {} (seed {seed}) to {}", 4, system.id(), out.display());
    Ok(())
}

fn manifest(command: &str, exp: &Experiment, outputs: &[&str]) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": exp.config,
        "outputs": outputs,
    })
}

pub fn train(overrides: &Overrides, lambda: Option<f64>) -> Result<(), CliError> {
    let exp = Experiment::load(overrides, lambda, None)?;
    let cfg = &exp.config;
    let d = &exp.data;
    let outcome = fit(&exp.structure, &d.zd, &d.zs, &cfg.train, &cfg.fixed_point, None)?;
    let legacy = (cfg.train.algorithm == Algorithm::GaLegacy).then_some(&cfg.fixed_point);
    let costs = CostReport::evaluate(&outcome.model, &d.zd, &d.zs, cfg.train.lambda, legacy)?;
    let (rmse_zt, zt_diverged) = free_run_rmse(&outcome.model, &d.zt)?;
    let zv = d.zv.as_ref().map(|zv| free_run_rmse(&outcome.model, zv)).transpose()?;

    create_dir(&exp.out)?;
    let model_path = exp.out.join("model.json");
    at_path(&model_path, outcome.model.save(&model_path))?;
    let trace_path = exp.out.join("trace.csv");
    at_path(&trace_path, outcome.trace.write_csv(&trace_path))?;
    let metrics = json!({
        "lambda": cfg.train.lambda,
        "algorithm": cfg.train.algorithm,
        "costs": costs,
        "rmse_zt": rmse_zt,
        "zt_diverged": zt_diverged,
        "rmse_zv": zv.map(|v| v.0),
        "zv_diverged": zv.map(|v| v.1),
        "train_time_ms": outcome.trace.wall_time_ms(),
        "model_evaluations": outcome.trace.model_evaluations(),
    });
    write_json(&exp.out.join("metrics.json"), &metrics)?;
    write_json(
        &exp.out.join("manifest.json"),
        &manifest("train", &exp, &["model.json", "trace.csv", "metrics.json"]),
    )?;
    println!(
        "λ={} j_d={:e} j_s_hat={:e} rmse_zt={rmse_zt:.6}{}",
        cfg.train.lambda,
        costs.j_d,
        costs.j_s_hat,
        zv.map(|v| format!(" rmse_zv={:.6}", v.0)).unwrap_or_default()
    );
    Ok(())
}

/// Fixed-point settings for plotting static curves: tolerance based with a
/// generous budget.
fn curve_config() -> FixedPointConfig {
    FixedPointConfig {
        max_iterations: 20_000,
        ..FixedPointConfig::default()
    }
}

fn write_free_run(path: &Path, model: &Model, data: &DynDataset) -> Result<(), CliError> {
    let run = free_run_on(model, data, DEFAULT_DIVERGENCE_BOUND)?;
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?);
    let mut body = String::from("k,y,y_hat\n");
    for (k, y) in data.output().iter().enumerate() {
        let y_hat = run.output.get(k).map(|v| v.to_string()).unwrap_or_default();
        body.push_str(&format!("{k},{y},{y_hat}\n"));
    }
    w.write_all(body.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn sweep(overrides: &Overrides, grid: Option<&str>) -> Result<(), CliError> {
    let mut exp = Experiment::load(overrides, None, grid)?;
    let grid = exp.config.grid.clone().unwrap_or_else(LambdaGrid::tenths);
    exp.config.grid = Some(grid.clone());
    let d = &exp.data;
    let sweep_cfg = SweepConfig {
        train: exp.config.train.clone(),
        fixed_point: exp.config.fixed_point,
        report_legacy: exp.config.train.algorithm == Algorithm::GaLegacy,
        threads: None,
    };
    let data = SweepData {
        zd: &d.zd,
        zt: &d.zt,
        zs: &d.zs,
        zv: d.zv.as_ref(),
    };
    let points = run_sweep(&exp.structure, data, &grid, &sweep_cfg)?;

    create_dir(&exp.out)?;
    let mut outputs = vec!["sweep.csv", "pareto.csv", "sweep.json"];
    let sweep_path = exp.out.join("sweep.csv");
    at_path(&sweep_path, write_sweep_csv(&points, &sweep_path))?;
    let front = pareto_front(&points);
    let front_path = exp.out.join("pareto.csv");
    at_path(&front_path, write_sweep_csv(&front, &front_path))?;
    write_json(&exp.out.join("sweep.json"), &points)?;

    let selections: [(&str, greybox::Result<&ParetoPoint>); 2] = [
        ("min_corr", decide_min_corr(&points)),
        ("min_rmse_zt", decide_min_rmse_zt(&points)),
    ];
    let mut summary = serde_json::Map::new();
    let mut failure = None;
    let grid_u: Vec<Vec<f64>> = d.zs.pairs().iter().map(|p| p.u_bar.clone()).collect();
    for (name, chosen) in selections {
        let point = match chosen {
            Ok(p) => p,
            Err(e) => {
                summary.insert(name.into(), json!({"error": e.to_string()}));
                failure = Some(e);
                continue;
            }
        };
        let model = point.model.as_ref().expect("selected points carry a model");
        let files = [
            format!("selected_{name}.json"),
            format!("selected_{name}_static_curve.csv"),
            format!("selected_{name}_free_run_zt.csv"),
        ];
        let model_path = exp.out.join(&files[0]);
        at_path(&model_path, model.save(&model_path))?;
        let curve = model_static_curve(model, &grid_u, &curve_config())?;
        let curve_path = exp.out.join(&files[1]);
        at_path(&curve_path, curve.write_csv(&curve_path))?;
        write_free_run(&exp.out.join(&files[2]), model, &d.zt)?;
        if let Some(zv) = &d.zv {
            write_free_run(&exp.out.join(format!("selected_{name}_free_run_zv.csv")), model, zv)?;
        }
        summary.insert(
            name.into(),
            json!({"lambda": point.lambda, "rmse_zt": point.rmse_zt, "rmse_zv": point.rmse_zv, "corr_dm": point.corr_dm}),
        );
        println!(
            "{name}: λ={} rmse_zt={}{}",
            point.lambda,
            point.rmse_zt.map(|v| format!("{v:.6}")).unwrap_or_default(),
            point.rmse_zv.map(|v| format!(" rmse_zv={v:.6}")).unwrap_or_default()
        );
    }
    write_json(&exp.out.join("selection.json"), &summary)?;
    outputs.push("selection.json");
    let failed = points.iter().filter(|p| p.error.is_some()).count();
    println!(
        "{} points, {} on the Pareto front, {failed} failed; report in {}",
        points.len(),
        front.len(),
        exp.out.display()
    );
    write_json(&exp.out.join("manifest.json"), &manifest("sweep", &exp, &outputs))?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub data: Option<PathBuf>,
    pub mode: EvalMode,
    pub grid: Option<String>,
    pub max_iterations: usize,
    pub out: Option<PathBuf>,
}

fn need_data(args: &EvalArgs) -> Result<&Path, CliError> {
    args.data
        .as_deref()
        .ok_or_else(|| CliError::usage("this mode needs --data"))
}

fn read_dyn(path: &Path) -> Result<DynDataset, CliError> {
    read_dyn_csv(path).map_err(|e| match e {
        greybox::Error::Io(source) => CliError::io(path, source),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = Model::load(&args.model).map_err(|e| match e {
        greybox::Error::Io(source) => CliError::io(&args.model, source),
        other => CliError::usage(format!("{}: {other}", args.model.display())),
    })?;
    let (metrics, csv) = match args.mode {
        EvalMode::OneStep => {
            let data = read_dyn(need_data(args)?)?;
            let regression = build_regression_matrix(model.spec(), &data)?;
            let j_d = cost_jd(&model, &data)?;
            let mut csv = String::from("k,y,y_hat\n");
            let offset = model.spec().max_lag();
            for (i, (row, y)) in regression.rows().zip(regression.targets()).enumerate() {
                csv.push_str(&format!("{},{y},{}\n", i + offset, model.predict(row)));
            }
            (json!({"mode": "one-step", "j_d": j_d, "rmse": j_d.sqrt(), "rows": regression.n_rows()}), csv)
        }
        EvalMode::FreeRun => {
            let data = read_dyn(need_data(args)?)?;
            let run = free_run_on(&model, &data, DEFAULT_DIVERGENCE_BOUND)?;
            let (value, diverged) = free_run_rmse(&model, &data)?;
            let mut csv = String::from("k,y,y_hat\n");
            for (k, y) in data.output().iter().enumerate() {
                let y_hat = run.output.get(k).map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!("{k},{y},{y_hat}\n"));
            }
            (
                json!({"mode": "free-run", "rmse": value, "diverged": diverged, "diverged_at": run.diverged_at}),
                csv,
            )
        }
        EvalMode::StaticCurve => {
            let steady = match &args.data {
                Some(p) => Some(read_steady_csv(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?),
                None => None,
            };
            let grid: Vec<Vec<f64>> = match (&steady, &args.grid) {
                (Some(s), _) => s.pairs().iter().map(|p| p.u_bar.clone()).collect(),
                (None, Some(g)) => grid_values(g)?.into_iter().map(|u| vec![u]).collect(),
                (None, None) => return Err(CliError::usage("static-curve needs --data or --grid")),
            };
            let cfg = FixedPointConfig {
                max_iterations: args.max_iterations,
                ..FixedPointConfig::default()
            };
            let curve = model_static_curve(&model, &grid, &cfg)?;
            let converged = curve.points.iter().filter(|p| p.y_bar.is_some()).count();
            let mut metrics = json!({"mode": "static-curve", "points": curve.points.len(), "converged": converged});
            if let Some(s) = &steady {
                let (pred, meas): (Vec<f64>, Vec<f64>) = curve
                    .points
                    .iter()
                    .zip(s.pairs())
                    .filter_map(|(c, p)| c.y_bar.map(|y| (y, p.y_bar)))
                    .unzip();
                metrics["j_s_hat"] = json!(cost_js_hat(&model, s)?);
                metrics["j_s_legacy"] = json!(cost_js_legacy(&model, s, &cfg)?);
                metrics["rmse"] = json!(if pred.is_empty() { None } else { Some(rmse(&pred, &meas)?) });
            }
            let mut buf = Vec::new();
            curve.write_csv_to(&mut buf)?;
            (metrics, String::from_utf8(buf).expect("csv is utf-8"))
        }
    };
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &metrics)?;
        let path = out.join("eval.csv");
        fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    }
    let text = serde_json::to_string_pretty(&metrics).map_err(greybox::Error::from)?;
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn grid_values(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("cannot parse grid {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            Ok(greybox::data::linspace(a, b, n))
        }
        [list] => list.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}
