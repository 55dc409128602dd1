use super::regressor::RegressorSpec;
use super::Predictor;
use crate::data::DynDataset;
use crate::{Error, Result};

pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

/// Result of a free-run simulation.
///
/// `output[..start]` is the supplied initial history; later entries are model
/// predictions. If the trajectory left the divergence bound at sample `i`,
/// `diverged_at = Some(i)` and `output` stops just before `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeRun {
    pub output: Vec<f64>,
    pub start: usize,
    pub diverged_at: Option<usize>,
}

impl FreeRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Predicted part of the trajectory.
    pub fn predicted(&self) -> &[f64] {
        &self.output[self.start..]
    }
}

/// Iterates `model` on its own past outputs, driven by measured `inputs`.
/// `init` must hold at least `spec.max_lag()` values; the first `max_lag`
/// samples are taken from it verbatim.
pub fn free_run<P: Predictor + ?Sized>(
    model: &P,
    inputs: &[Vec<f64>],
    init: &[f64],
    bound: f64,
) -> Result<FreeRun> {
    let spec: &RegressorSpec = model.spec();
    spec.check_inputs(inputs.len())?;
    let n = inputs.first().map_or(0, Vec::len);
    if inputs.iter().any(|c| c.len() != n) {
        return Err(Error::invalid(
            "free run",
            "input channels differ in length",
        ));
    }
    let start = spec.max_lag();
    if init.len() < start {
        return Err(Error::TooShort {
            needed: start,
            available: init.len(),
        });
    }
    if n < start {
        return Err(Error::TooShort {
            needed: start,
            available: n,
        });
    }
    let mut output = Vec::with_capacity(n);
    output.extend_from_slice(&init[..start]);
    let mut psi = vec![0.0; spec.len()];
    for k in start..n {
        spec.fill(&output, inputs, k, &mut psi);
        let y = model.predict(&psi);
        if !y.is_finite() || y.abs() > bound {
            return Ok(FreeRun {
                output,
                start,
                diverged_at: Some(k),
            });
        }
        output.push(y);
    }
    Ok(FreeRun {
        output,
        start,
        diverged_at: None,
    })
}

/// Free run over a dataset's inputs, initialised from its measured outputs.
pub fn free_run_on<P: Predictor + ?Sized>(
    model: &P,
    data: &DynDataset,
    bound: f64,
) -> Result<FreeRun> {
    free_run(model, data.inputs(), data.output(), bound)
}
