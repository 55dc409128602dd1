use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DynDataset, SteadyDataset, SteadyPair};
use crate::{Error, Result};

/// A lagged variable appearing in a model term.
///
/// Serialized as `{"y": lag}` or `{"u": [channel, lag]}` with 0-based channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    #[serde(rename = "y")]
    Output(usize),
    #[serde(rename = "u")]
    Input(usize, usize),
}

impl Factor {
    pub fn y(lag: usize) -> Self {
        Factor::Output(lag)
    }

    pub fn u(channel: usize, lag: usize) -> Self {
        Factor::Input(channel, lag)
    }
}

/// Layout of the regressor vector
/// `psi(k-1) = [1, y(k-a1)..., u1(k-b1)..., u2(k-c1)..., ...]`.
///
/// The constant slot (when present) is always index 0, output lags follow in
/// the listed order, then the lags of each input channel in turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct RegressorSpec {
    output_lags: Vec<usize>,
    input_lags: Vec<Vec<usize>>,
    include_constant: bool,
}

#[derive(Deserialize)]
struct RawSpec {
    output_lags: Vec<usize>,
    input_lags: Vec<Vec<usize>>,
    include_constant: bool,
}

impl TryFrom<RawSpec> for RegressorSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        RegressorSpec::new(raw.output_lags, raw.input_lags, raw.include_constant)
    }
}

fn check_lags(lags: &[usize]) -> Result<()> {
    if lags.contains(&0) {
        return Err(Error::invalid(
            "regressor spec",
            "lags must be strictly positive",
        ));
    }
    if lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "regressor spec",
            "lags must be sorted and duplicate-free",
        ));
    }
    Ok(())
}

impl RegressorSpec {
    pub fn new(
        output_lags: Vec<usize>,
        input_lags: Vec<Vec<usize>>,
        include_constant: bool,
    ) -> Result<Self> {
        check_lags(&output_lags)?;
        for lags in &input_lags {
            check_lags(lags)?;
        }
        Ok(Self {
            output_lags,
            input_lags,
            include_constant,
        })
    }

    /// Consecutive lags `1..=n_y` and `1..=n_u` for a single input.
    pub fn siso(n_y: usize, n_u: usize, include_constant: bool) -> Self {
        Self {
            output_lags: (1..=n_y).collect(),
            input_lags: vec![(1..=n_u).collect()],
            include_constant,
        }
    }

    /// Smallest spec containing every lag used by `terms`.
    pub fn covering(
        terms: &[Vec<Factor>],
        input_count: usize,
        include_constant: bool,
    ) -> Result<Self> {
        let mut output = Vec::new();
        let mut inputs = vec![Vec::new(); input_count];
        for factor in terms.iter().flatten() {
            match *factor {
                Factor::Output(lag) => output.push(lag),
                Factor::Input(channel, lag) => {
                    let Some(lags) = inputs.get_mut(channel) else {
                        return Err(Error::invalid(
                            "model term",
                            format!("input channel {channel} out of range"),
                        ));
                    };
                    lags.push(lag);
                }
            }
        }
        for lags in std::iter::once(&mut output).chain(inputs.iter_mut()) {
            lags.sort_unstable();
            lags.dedup();
        }
        Self::new(output, inputs, include_constant)
    }

    pub fn output_lags(&self) -> &[usize] {
        &self.output_lags
    }

    pub fn input_lags(&self) -> &[Vec<usize>] {
        &self.input_lags
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    pub fn input_count(&self) -> usize {
        self.input_lags.len()
    }

    /// Total regressor length, constant slot included.
    pub fn len(&self) -> usize {
        self.include_constant as usize + self.lagged_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of lagged (non-constant) entries.
    pub fn lagged_len(&self) -> usize {
        self.output_lags.len() + self.input_lags.iter().map(Vec::len).sum::<usize>()
    }

    pub fn max_output_lag(&self) -> usize {
        self.output_lags.last().copied().unwrap_or(0)
    }

    pub fn max_lag(&self) -> usize {
        self.input_lags
            .iter()
            .filter_map(|l| l.last().copied())
            .fold(self.max_output_lag(), usize::max)
    }

    /// Index of the first output-lag slot.
    pub fn output_offset(&self) -> usize {
        self.include_constant as usize
    }

    pub fn input_offset(&self, channel: usize) -> usize {
        self.output_offset()
            + self.output_lags.len()
            + self.input_lags[..channel]
                .iter()
                .map(Vec::len)
                .sum::<usize>()
    }

    pub fn slot_of(&self, factor: Factor) -> Option<usize> {
        match factor {
            Factor::Output(lag) => self
                .output_lags
                .binary_search(&lag)
                .ok()
                .map(|i| self.output_offset() + i),
            Factor::Input(channel, lag) => {
                let lags = self.input_lags.get(channel)?;
                lags.binary_search(&lag)
                    .ok()
                    .map(|i| self.input_offset(channel) + i)
            }
        }
    }

    /// Writes `psi(k-1)` into `out` from a measured output history and inputs.
    /// The caller guarantees `k >= max_lag()`.
    pub(crate) fn fill(&self, output: &[f64], inputs: &[Vec<f64>], k: usize, out: &mut [f64]) {
        let mut i = 0;
        if self.include_constant {
            out[0] = 1.0;
            i = 1;
        }
        for &lag in &self.output_lags {
            out[i] = output[k - lag];
            i += 1;
        }
        for (channel, lags) in self.input_lags.iter().enumerate() {
            for &lag in lags {
                out[i] = inputs[channel][k - lag];
                i += 1;
            }
        }
    }

    /// `psi_bar = [1, y_bar..., u_bar_1..., ...]`.
    pub fn static_regressor(&self, pair: &SteadyPair) -> Result<StaticRegressor> {
        if pair.u_bar.len() != self.input_count() {
            return Err(Error::Shape {
                what: "steady-state input channels",
                expected: self.input_count(),
                found: pair.u_bar.len(),
            });
        }
        Ok(StaticRegressor {
            psi_bar: self.constant_regressor(pair.y_bar, &pair.u_bar),
        })
    }

    /// Regressor with every output slot at `y` and every channel-`c` slot at `u[c]`.
    pub(crate) fn constant_regressor(&self, y: f64, u: &[f64]) -> Vec<f64> {
        let mut psi = Vec::with_capacity(self.len());
        if self.include_constant {
            psi.push(1.0);
        }
        psi.extend(std::iter::repeat_n(y, self.output_lags.len()));
        for (lags, &value) in self.input_lags.iter().zip(u) {
            psi.extend(std::iter::repeat_n(value, lags.len()));
        }
        psi
    }

    pub(crate) fn check_inputs(&self, input_count: usize) -> Result<()> {
        if input_count != self.input_count() {
            return Err(Error::Shape {
                what: "input channels",
                expected: self.input_count(),
                found: input_count,
            });
        }
        Ok(())
    }
}

/// Regressor vector built from one steady-state pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticRegressor {
    pub psi_bar: Vec<f64>,
}

/// Regression rows `psi(k-1)` with targets `y(k)` for `k = max_lag .. N-1`
/// (0-based), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    rows: Vec<f64>,
    cols: usize,
    targets: Vec<f64>,
}

impl Regression {
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::Shape {
                what: "regression targets",
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let cols = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    what: "regression row",
                    expected: cols,
                    found: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Ok(Self {
            rows: flat,
            cols,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows(), self.cols, &self.rows)
    }

    pub fn target_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.targets)
    }
}

pub fn build_regression_matrix(spec: &RegressorSpec, data: &DynDataset) -> Result<Regression> {
    spec.check_inputs(data.input_count())?;
    let m = spec.max_lag();
    let n = data.sample_count();
    if n < m + 1 {
        return Err(Error::TooShort {
            needed: m + 1,
            available: n,
        });
    }
    let cols = spec.len();
    let mut rows = vec![0.0; (n - m) * cols];
    for (i, k) in (m..n).enumerate() {
        spec.fill(
            data.output(),
            data.inputs(),
            k,
            &mut rows[i * cols..(i + 1) * cols],
        );
    }
    Ok(Regression {
        rows,
        cols,
        targets: data.output()[m..].to_vec(),
    })
}

pub fn build_static_regressors(
    spec: &RegressorSpec,
    zs: &SteadyDataset,
) -> Result<Vec<StaticRegressor>> {
    zs.pairs()
        .iter()
        .map(|p| spec.static_regressor(p))
        .collect()
}
