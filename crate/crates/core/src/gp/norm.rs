use serde::{Deserialize, Serialize};

/// Floor applied to any standard deviation so constant columns stay finite.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension affine normalization to zero mean and unit standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_FLOOR))
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; dim],
            input_std: vec![1.0; dim],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    /// Population statistics of `inputs` (row per point) and `targets`.
    pub fn from_data(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let dim = inputs.first().map_or(0, Vec::len);
        let (input_mean, input_std) = (0..dim)
            .map(|j| mean_std(inputs.iter().map(move |row| row[j])))
            .unzip();
        let (target_mean, target_std) = mean_std(targets.iter().copied());
        Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn normalize_input(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize_input(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn normalize_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    pub fn denormalize_std(&self, s: f64) -> f64 {
        s * self.target_std
    }
}
