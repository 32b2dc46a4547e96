//! JSON run configuration. Vertex and component indices in config files are
//! 1-based, matching the usual numbering of the worked examples; everything
//! internal is 0-based.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VelocityModel;
use crate::spectral::{GaussianBump, Grid, InitialDatum};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub initial: Option<Vec<BumpConfig>>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
    #[serde(default)]
    pub particles: Option<ParticlesConfig>,
    #[serde(default)]
    pub outputs: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub velocities: Vec<Vec<f64>>,
    /// Arc list `[i, j, mu]`, 1-based. Symmetric by default (each entry sets
    /// both directions); with `asymmetric: true` entries are directed.
    pub rates: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub asymmetric: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpConfig {
    /// 1-based component index.
    pub component: usize,
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub per_decade: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticlesConfig {
    pub count: usize,
    pub dt: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.velocities.len();
        let d = self.model.d;
        if n < 2 {
            return Err(Error::Invalid("model.velocities: need at least 2 entries".into()));
        }
        for (i, v) in self.model.velocities.iter().enumerate() {
            if v.len() != d {
                return Err(Error::Invalid(format!(
                    "model.velocities[{i}]: expected {d} components, got {}",
                    v.len()
                )));
            }
        }
        for (k, &(i, j, mu)) in self.model.rates.iter().enumerate() {
            if i < 1 || i > n {
                return Err(Error::Invalid(format!(
                    "model.rates[{k}]: source index {i} out of range 1..={n}"
                )));
            }
            if j < 1 || j > n {
                return Err(Error::Invalid(format!(
                    "model.rates[{k}]: target index {j} out of range 1..={n}"
                )));
            }
            if i == j {
                return Err(Error::Invalid(format!(
                    "model.rates[{k}]: self-transition {i} -> {j} is not allowed"
                )));
            }
            if !(mu >= 0.0) {
                return Err(Error::Invalid(format!("model.rates[{k}]: rate {mu} is negative")));
            }
        }
        if let Some(grid) = &self.grid {
            if !(grid.half_width > 0.0) {
                return Err(Error::Invalid("grid.L: must be positive".into()));
            }
            if grid.points < 8 || !grid.points.is_power_of_two() {
                return Err(Error::Invalid(
                    "grid.N: must be a power of two >= 8".into(),
                ));
            }
        }
        if let Some(initial) = &self.initial {
            for (k, bump) in initial.iter().enumerate() {
                if bump.component < 1 || bump.component > n {
                    return Err(Error::Invalid(format!(
                        "initial[{k}].component: {} out of range 1..={n}",
                        bump.component
                    )));
                }
                if bump.center.len() != d {
                    return Err(Error::Invalid(format!(
                        "initial[{k}].center: expected {d} components"
                    )));
                }
                if !(bump.width > 0.0) {
                    return Err(Error::Invalid(format!("initial[{k}].width: must be positive")));
                }
            }
        }
        if let Some(times) = &self.times {
            if times.iter().any(|&t| !(t >= 0.0)) {
                return Err(Error::Invalid("times: entries must be nonnegative".into()));
            }
            if times.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Invalid("times: entries must be nondecreasing".into()));
            }
        }
        if let Some(decay) = &self.decay {
            if !(decay.t_min > 0.0 && decay.t_max > decay.t_min) {
                return Err(Error::Invalid("decay: need 0 < t_min < t_max".into()));
            }
            if decay.per_decade == 0 {
                return Err(Error::Invalid("decay.per_decade: must be positive".into()));
            }
        }
        if let Some(p) = &self.particles {
            if p.count == 0 {
                return Err(Error::Invalid("particles.count: must be positive".into()));
            }
            if !(p.dt > 0.0) {
                return Err(Error::Invalid("particles.dt: must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<VelocityModel> {
        let n = self.model.velocities.len();
        let d = self.model.d;
        let mut velocities = Array2::zeros((n, d));
        for (i, v) in self.model.velocities.iter().enumerate() {
            for (l, &x) in v.iter().enumerate() {
                velocities[[i, l]] = x;
            }
        }
        let mut rates = Array2::zeros((n, n));
        for (k, &(i, j, mu)) in self.model.rates.iter().enumerate() {
            let (a, b) = (i - 1, j - 1);
            if rates[[a, b]] != 0.0 {
                return Err(Error::Invalid(format!(
                    "model.rates[{k}]: duplicate arc {i} -> {j}"
                )));
            }
            rates[[a, b]] = mu;
            if !self.model.asymmetric {
                rates[[b, a]] = mu;
            }
        }
        VelocityModel::new(velocities, rates)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Invalid("grid: section missing".into()))?;
        Grid::new(self.model.d, grid.half_width, grid.points)
    }

    pub fn build_initial(&self) -> Result<InitialDatum> {
        let bumps = self
            .initial
            .as_ref()
            .ok_or_else(|| Error::Invalid("initial: section missing".into()))?;
        Ok(InitialDatum {
            bumps: bumps
                .iter()
                .map(|b| GaussianBump {
                    component: b.component - 1,
                    amplitude: b.amplitude,
                    center: b.center.clone(),
                    width: b.width,
                })
                .collect(),
            offsets: Vec::new(),
        })
    }
}
