use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How [`NoiseSpec::scale`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// `scale` is the standard deviation.
    StdDev,
    /// `scale` is the variance.
    Variance,
    /// Standard deviation is `scale` times the standard deviation of the clean signal.
    FractionOfSignalStd,
}

/// Additive white Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub scale: f64,
    pub scale_mode: ScaleMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            mean: 0.0,
            scale: 0.0,
            scale_mode: ScaleMode::StdDev,
            seed: 0,
        }
    }

    pub fn std_dev(mean: f64, std: f64, seed: u64) -> Self {
        Self {
            mean,
            scale: std,
            scale_mode: ScaleMode::StdDev,
            seed,
        }
    }

    pub fn fraction_of_signal(fraction: f64, seed: u64) -> Self {
        Self {
            mean: 0.0,
            scale: fraction,
            scale_mode: ScaleMode::FractionOfSignalStd,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn is_silent(&self) -> bool {
        self.mean == 0.0 && self.scale == 0.0
    }

    pub fn std_for(&self, signal_std: f64) -> f64 {
        match self.scale_mode {
            ScaleMode::StdDev => self.scale,
            ScaleMode::Variance => self.scale.sqrt(),
            ScaleMode::FractionOfSignalStd => self.scale * signal_std,
        }
    }

    /// Draws `n` samples; `signal_std` only matters for [`ScaleMode::FractionOfSignalStd`].
    pub fn sample(&self, n: usize, signal_std: f64) -> Result<Vec<f64>> {
        if !(self.scale >= 0.0) || !self.mean.is_finite() {
            return Err(Error::invalid(
                "noise spec",
                "scale must be >= 0 and mean finite",
            ));
        }
        let std = self.std_for(signal_std);
        if std == 0.0 {
            return Ok(vec![self.mean; n]);
        }
        let normal =
            Normal::new(self.mean, std).map_err(|e| Error::invalid("noise spec", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
    }
}

/// Mixes a base seed with a stream tag (splitmix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
