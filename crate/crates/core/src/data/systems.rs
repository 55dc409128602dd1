use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::noise::{derive_seed, population_std, NoiseSpec};
use super::{DynDataset, SteadyDataset, SteadyPair};
use crate::{Error, Result};

// Example 2 coefficients; the static equation uses their lag sums.
const EX2_Y1: f64 = 1.7826;
const EX2_Y2: f64 = -0.8187;
const EX2_U1: f64 = 0.01867;
const EX2_U2: f64 = 0.01746;

/// Benchmark plants used to generate synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimSystem {
    /// `w(k) = 0.75 w(k-2) + 0.25 u(k-1) - 0.2 w(k-2) u(k-1)`
    Example1,
    /// `w(k) = atan(1.7826 w(k-1) - 0.8187 w(k-2) + 0.01867 u(k-1) + 0.01746 u(k-2))`
    Example2,
}

impl SimSystem {
    pub fn parse(id: &str) -> Option<Self> {
        match id {
            "example1" => Some(Self::Example1),
            "example2" => Some(Self::Example2),
            _ => None,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Example1 => "example1",
            Self::Example2 => "example2",
        }
    }

    /// Noiseless one-step map from `w(k-1), w(k-2), u(k-1), u(k-2)`.
    pub fn step(&self, w1: f64, w2: f64, u1: f64, u2: f64) -> f64 {
        match self {
            Self::Example1 => 0.75 * w2 + 0.25 * u1 - 0.2 * w2 * u1,
            Self::Example2 => (EX2_Y1 * w1 + EX2_Y2 * w2 + EX2_U1 * u1 + EX2_U2 * u2).atan(),
        }
    }

    /// Exact steady-state output for a constant input.
    pub fn static_output(&self, u_bar: f64) -> Result<f64> {
        match self {
            Self::Example1 => {
                let denominator = 0.25 + 0.2 * u_bar;
                if denominator.abs() < 1e-12 {
                    return Err(Error::SingularStaticCurve { u_bar });
                }
                Ok(0.25 * u_bar / denominator)
            }
            Self::Example2 => Ok(example2_static_output(u_bar)),
        }
    }
}

/// Solves `y = atan(a y + b u)` for Example 2, where `a` and `b` are the lag
/// sums of the plant coefficients. The residual is strictly increasing and the
/// root lies in `(-pi/2, pi/2)`, so a bracketed Newton iteration is enough.
pub fn example2_static_output(u_bar: f64) -> f64 {
    let a = EX2_Y1 + EX2_Y2;
    let c = (EX2_U1 + EX2_U2) * u_bar;
    let residual = |y: f64| y - (a * y + c).atan();
    let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
    let mut y = 0.0;
    for _ in 0..200 {
        let g = residual(y);
        if g == 0.0 {
            return y;
        }
        if g < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let z = a * y + c;
        let slope = 1.0 - a / (1.0 + z * z);
        let mut next = y - g / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) {
            return next;
        }
        y = next;
    }
    y
}

/// Output of [`simulate_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: DynDataset,
    pub noiseless: Vec<f64>,
}

/// Runs a benchmark plant from the history `init = [w(-1), w(-2)]` with
/// `u(-1) = u(-2) = 0`, then adds output noise.
pub fn simulate_system(
    system: SimSystem,
    input: &[f64],
    noise: &NoiseSpec,
    init: [f64; 2],
) -> Result<Simulation> {
    if input.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            available: input.len(),
        });
    }
    let n = input.len();
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
        let w1 = if k >= 1 { w[k - 1] } else { init[0] };
        let w2 = if k >= 2 { w[k - 2] } else { init[1 - k] };
        let u1 = if k >= 1 { input[k - 1] } else { 0.0 };
        let u2 = if k >= 2 { input[k - 2] } else { 0.0 };
        let next = system.step(w1, w2, u1, u2);
        if !next.is_finite() {
            return Err(Error::Divergence { index: k });
        }
        w.push(next);
    }
    let e = noise.sample(n, population_std(&w))?;
    let y = w.iter().zip(&e).map(|(w, e)| w + e).collect();
    Ok(Simulation {
        data: DynDataset::siso(input.to_vec(), y)?,
        noiseless: w,
    })
}

/// Samples the plant static curve on `u_bar_grid`, with additive noise on `y_bar`.
pub fn steady_curve_of_system(
    system: SimSystem,
    u_bar_grid: &[f64],
    noise: &NoiseSpec,
) -> Result<SteadyDataset> {
    let mut clean = Vec::with_capacity(u_bar_grid.len());
    for &u in u_bar_grid {
        if !u.is_finite() {
            return Err(Error::invalid("static grid", "values must be finite"));
        }
        clean.push(system.static_output(u)?);
    }
    let e = noise.sample(clean.len(), population_std(&clean))?;
    SteadyDataset::new(
        u_bar_grid
            .iter()
            .zip(clean.iter().zip(&e))
            .map(|(&u, (y, e))| SteadyPair::siso(u, y + e))
            .collect(),
    )
}

pub fn linspace(low: f64, high: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![low],
        _ => {
            let step = (high - low) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        high
                    } else {
                        low + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// Excitation signal used by the dataset recipes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSignal {
    WhiteGaussian {
        mean: f64,
        std: f64,
    },
    /// Levels drawn uniformly from `[low, high]`, each held for `hold`
    /// samples, plus white Gaussian jitter.
    PiecewiseConstant {
        low: f64,
        high: f64,
        hold: usize,
        jitter_std: f64,
    },
}

impl InputSignal {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |std: f64| {
            Normal::new(0.0, std).map_err(|e| Error::invalid("input signal", e.to_string()))
        };
        match *self {
            InputSignal::WhiteGaussian { mean, std } => {
                let dist = normal(std)?;
                Ok((0..n).map(|_| mean + dist.sample(&mut rng)).collect())
            }
            InputSignal::PiecewiseConstant {
                low,
                high,
                hold,
                jitter_std,
            } => {
                if hold == 0 || !(high >= low) {
                    return Err(Error::invalid(
                        "input signal",
                        "hold must be positive and high >= low",
                    ));
                }
                let dist = normal(jitter_std)?;
                let mut out = Vec::with_capacity(n);
                let mut level = 0.0;
                for k in 0..n {
                    if k % hold == 0 {
                        level = rng.random_range(low..=high);
                    }
                    out.push(level + dist.sample(&mut rng));
                }
                Ok(out)
            }
        }
    }
}

/// Everything needed to regenerate the four datasets of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecipe {
    pub system: SimSystem,
    pub dynamic_len: usize,
    pub test_len: usize,
    pub validation_len: usize,
    pub train_input: InputSignal,
    pub validation_input: InputSignal,
    /// Output noise on `Z_d` and `Z_t`; its seed is replaced per dataset.
    pub output_noise: NoiseSpec,
    pub static_low: f64,
    pub static_high: f64,
    pub static_points: usize,
    /// Noise on the steady-state outputs; its seed is replaced per dataset.
    pub static_noise: NoiseSpec,
}

impl ExampleRecipe {
    pub fn example1() -> Self {
        Self {
            system: SimSystem::Example1,
            dynamic_len: 100,
            test_len: 400,
            validation_len: 2000,
            // variance 0.04
            train_input: InputSignal::WhiteGaussian {
                mean: -0.02,
                std: 0.2,
            },
            validation_input: InputSignal::PiecewiseConstant {
                low: -1.0,
                high: 3.0,
                hold: 100,
                jitter_std: 0.04,
            },
            output_noise: NoiseSpec::fraction_of_signal(0.1, 0),
            static_low: -1.0,
            static_high: 3.0,
            static_points: 50,
            static_noise: NoiseSpec::std_dev(0.0, 0.02, 0),
        }
    }

    pub fn example2() -> Self {
        Self {
            system: SimSystem::Example2,
            dynamic_len: 1700,
            test_len: 300,
            validation_len: 2000,
            // variance 0.02
            train_input: InputSignal::WhiteGaussian {
                mean: 0.0,
                std: 0.02f64.sqrt(),
            },
            validation_input: InputSignal::PiecewiseConstant {
                low: -10.0,
                high: 10.0,
                hold: 100,
                jitter_std: 0.02,
            },
            // variance 0.01 sigma_w^2, i.e. std 0.1 sigma_w
            output_noise: NoiseSpec::fraction_of_signal(0.1, 0),
            static_low: -20.0,
            static_high: 20.0,
            static_points: 50,
            static_noise: NoiseSpec::fraction_of_signal(0.1, 0),
        }
    }

    pub fn for_system(system: SimSystem) -> Self {
        match system {
            SimSystem::Example1 => Self::example1(),
            SimSystem::Example2 => Self::example2(),
        }
    }

    pub fn static_grid(&self) -> Vec<f64> {
        linspace(self.static_low, self.static_high, self.static_points)
    }
}

/// `Z_d`, `Z_t`, `Z_s` and `Z_v` for one benchmark realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleDatasets {
    pub zd: DynDataset,
    pub zt: DynDataset,
    pub zs: SteadyDataset,
    pub zv: DynDataset,
}

pub fn make_example_datasets(recipe: &ExampleRecipe, seed: u64) -> Result<ExampleDatasets> {
    let dynamic = |len: usize, input_tag: u64, noise_tag: u64| -> Result<DynDataset> {
        let input = recipe
            .train_input
            .generate(len, derive_seed(seed, input_tag))?;
        let noise = recipe.output_noise.with_seed(derive_seed(seed, noise_tag));
        Ok(simulate_system(recipe.system, &input, &noise, [0.0; 2])?.data)
    };
    let zd = dynamic(recipe.dynamic_len, 1, 2)?;
    let zt = dynamic(recipe.test_len, 3, 4)?;
    let zs = steady_curve_of_system(
        recipe.system,
        &recipe.static_grid(),
        &recipe.static_noise.with_seed(derive_seed(seed, 5)),
    )?;
    let v_input = recipe
        .validation_input
        .generate(recipe.validation_len, derive_seed(seed, 6))?;
    let zv = simulate_system(recipe.system, &v_input, &NoiseSpec::none(), [0.0; 2])?.data;
    Ok(ExampleDatasets { zd, zt, zs, zv })
}

pub fn make_example1_datasets(seed: u64) -> Result<ExampleDatasets> {
    make_example_datasets(&ExampleRecipe::example1(), seed)
}

pub fn make_example2_datasets(seed: u64) -> Result<ExampleDatasets> {
    make_example_datasets(&ExampleRecipe::example2(), seed)
}
