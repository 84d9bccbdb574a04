//! Pipeline configuration and its TOML form.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Image width and height of FOF grids.
    pub resolution: usize,
    pub channels: usize,
    /// Depth samples when decoding; recarving uses an R^3 lattice.
    pub depth: usize,
    pub iso: f64,
    pub margin: f64,
    /// Joint sphere radius in normalized units. Unset means 10 cm converted
    /// through the frame sidecar.
    pub joint_radius: Option<f64>,
    pub joint_channels: usize,
    pub plan: PlanConfig,
    pub refiner: String,
    /// First channel zeroed by the band-zero refiner.
    pub band_low: usize,
    /// Seed for surface sampling in metrics.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Auxiliary yaw angles in radians.
    pub angles: Vec<f64>,
    /// Canonical weight first.
    pub weights: Vec<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            angles: vec![PI / 2.0],
            weights: vec![0.5, 0.5],
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resolution: 512,
            channels: 32,
            depth: 512,
            iso: 0.5,
            margin: 0.05,
            joint_radius: None,
            joint_channels: 8,
            plan: PlanConfig::default(),
            refiner: "identity".into(),
            band_low: 16,
            seed: fofkit::meshing::CHAMFER_SEED,
        }
    }
}

impl PipelineConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::format(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::format(format!("config: {m}")));
        if self.resolution == 0 || self.channels == 0 || self.joint_channels == 0 {
            return bad("resolution and channel counts must be positive".into());
        }
        if self.depth < 2 {
            return bad(format!("depth {} < 2", self.depth));
        }
        if !(self.iso > 0.0 && self.iso < 1.0) {
            return bad(format!("iso {} outside (0, 1)", self.iso));
        }
        if !(self.margin >= 0.0 && self.margin < 1.0) {
            return bad(format!("margin {} outside [0, 1)", self.margin));
        }
        if let Some(r) = self.joint_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("joint radius {r}"));
            }
        }
        Ok(())
    }
}

/// Parses one angle: a number of radians, `<n>deg`, or a product/quotient
/// involving `pi` such as `pi/2`, `3*pi/4` or `-pi`.
pub fn parse_angle(text: &str) -> Result<f64, CliError> {
    let bad = || CliError::format(format!("cannot parse angle {text:?}"));
    let t = text.trim();
    if let Some(deg) = t.strip_suffix("deg") {
        return deg
            .trim()
            .parse::<f64>()
            .map(f64::to_radians)
            .map_err(|_| bad());
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t),
    };
    let (numerator, denominator) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (body, None),
    };
    let mut value = 1.0;
    for factor in numerator.split('*') {
        value *= match factor.trim() {
            "pi" => PI,
            f => f.parse::<f64>().map_err(|_| bad())?,
        };
    }
    if let Some(d) = denominator {
        let d: f64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0.0 {
            return Err(bad());
        }
        value /= d;
    }
    Ok(sign * value)
}

/// Comma-separated angles; an empty string means no views.
pub fn parse_angles(text: &str) -> Result<Vec<f64>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(parse_angle).collect()
}

pub fn parse_weights(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|_| CliError::format(format!("cannot parse weight {w:?}")))
        })
        .collect()
}
