//! Dataset containers, benchmark simulators and CSV serialization.

mod csv_io;
mod noise;
mod systems;

pub use csv_io::{
    read_dyn_csv, read_dyn_from, read_steady_csv, read_steady_from, write_dyn_csv, write_dyn_to,
    write_steady_csv, write_steady_to,
};
pub use noise::{derive_seed, NoiseSpec, ScaleMode};
pub use systems::{
    example2_static_output, linspace, make_example1_datasets, make_example2_datasets,
    make_example_datasets, simulate_system, steady_curve_of_system, ExampleDatasets, ExampleRecipe,
    InputSignal, SimSystem, Simulation,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sampled input/output record. `inputs[c][k]` is channel `c` at sample `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynDataset {
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl DynDataset {
    pub fn new(inputs: Vec<Vec<f64>>, output: Vec<f64>) -> Result<Self> {
        if output.is_empty() {
            return Err(Error::invalid("dataset", "no samples"));
        }
        for channel in &inputs {
            if channel.len() != output.len() {
                return Err(Error::Shape {
                    what: "input channel length",
                    expected: output.len(),
                    found: channel.len(),
                });
            }
        }
        Ok(Self { inputs, output })
    }

    /// Single-input convenience constructor.
    pub fn siso(input: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        Self::new(vec![input], output)
    }

    pub fn sample_count(&self) -> usize {
        self.output.len()
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn input(&self, channel: usize) -> &[f64] {
        &self.inputs[channel]
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// One steady-state measurement: constant input per channel and the output it settles to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyPair {
    pub u_bar: Vec<f64>,
    pub y_bar: f64,
}

impl SteadyPair {
    pub fn siso(u_bar: f64, y_bar: f64) -> Self {
        Self {
            u_bar: vec![u_bar],
            y_bar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyDataset {
    pairs: Vec<SteadyPair>,
}

impl SteadyDataset {
    pub fn new(pairs: Vec<SteadyPair>) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(Error::invalid("steady-state dataset", "no pairs"));
        };
        let channels = first.u_bar.len();
        for (j, pair) in pairs.iter().enumerate() {
            if pair.u_bar.len() != channels {
                return Err(Error::Shape {
                    what: "steady-state input channels",
                    expected: channels,
                    found: pair.u_bar.len(),
                });
            }
            if !pair.y_bar.is_finite() || pair.u_bar.iter().any(|u| !u.is_finite()) {
                return Err(Error::invalid(
                    "steady-state dataset",
                    format!("pair {j} is not finite"),
                ));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[SteadyPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn input_count(&self) -> usize {
        self.pairs[0].u_bar.len()
    }
}
