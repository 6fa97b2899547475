//! Flat `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::event::{Micros, SensorGeometry};
use crate::lifetime::RansacParams;
use crate::stereo::StereoParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {content:?}")]
    Syntax { line: usize, content: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub width: u32,
    pub height: u32,
    pub baseline: f64,
    pub max_disparity: u32,
    pub dt_max_us: Micros,
    pub window_n: usize,
    pub mu: f64,
    pub min_inliers: usize,
    pub max_iterations: usize,
    pub reliability_threshold_us: Micros,
    pub descriptor_window: usize,
    pub cost_window: usize,
    pub aggregation_region: usize,
    pub aggregation_iterations: usize,
    pub confidence_ratio: f64,
    pub match_window: usize,
    pub accumulation_interval_us: Micros,
    pub seed: u64,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Instants (µs) at which frames and disparity maps are rendered.
    pub render_times: Vec<Micros>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let geometry = SensorGeometry::davis240();
        let ransac = RansacParams::default();
        let stereo = StereoParams::default();
        Self {
            width: geometry.width,
            height: geometry.height,
            baseline: geometry.baseline,
            max_disparity: stereo.max_disparity,
            dt_max_us: ransac.dt_max,
            window_n: ransac.window_n,
            mu: ransac.mu,
            min_inliers: ransac.min_inliers,
            max_iterations: ransac.max_iterations,
            reliability_threshold_us: ransac.reliability_threshold,
            descriptor_window: stereo.descriptor_window,
            cost_window: stereo.cost_window,
            aggregation_region: stereo.aggregation_region,
            aggregation_iterations: stereo.aggregation_iterations,
            confidence_ratio: stereo.confidence_ratio,
            match_window: stereo.match_window,
            accumulation_interval_us: 10_000,
            seed: 0,
            left: None,
            right: None,
            output_dir: PathBuf::from("out"),
            render_times: Vec::new(),
        }
    }
}

/// Key, description, in the order printed by [`PipelineConfig::dump`].
const KEYS: &[(&str, &str)] = &[
    ("width", "sensor width in pixels"),
    ("height", "sensor height in pixels"),
    ("baseline", "stereo baseline in meters (informational)"),
    ("max_disparity", "largest disparity searched, pixels"),
    ("dt_max_us", "SAE window depth and event retention, microseconds"),
    ("window_n", "plane-fit window side, odd pixels"),
    ("mu", "RANSAC inlier distance in (px, px, s) space"),
    ("min_inliers", "RANSAC consensus size"),
    ("max_iterations", "RANSAC hypotheses per event"),
    ("reliability_threshold_us", "largest prediction error for reusing a cached plane, microseconds"),
    ("descriptor_window", "descriptor window side, odd pixels"),
    ("cost_window", "matching window side, odd pixels"),
    ("aggregation_region", "aggregation region side, odd pixels"),
    ("aggregation_iterations", "aggregation passes"),
    ("confidence_ratio", "runner-up to best cost ratio required for a match (> 1)"),
    ("match_window", "side of the window whose lifetimes a match inherits, odd pixels"),
    ("accumulation_interval_us", "lifetime used by run-fixed, microseconds"),
    ("seed", "base RANSAC seed"),
    ("left", "left event file"),
    ("right", "right event file"),
    ("output_dir", "directory for augmented events and images"),
    ("render_times", "comma-separated render instants, microseconds"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _)| *k)
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                content: raw.to_string(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            content: assignment.to_string(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "width" => self.width = parse_value(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "baseline" => self.baseline = parse_value(key, value)?,
            "max_disparity" => self.max_disparity = parse_value(key, value)?,
            "dt_max_us" => self.dt_max_us = parse_value(key, value)?,
            "window_n" => self.window_n = parse_value(key, value)?,
            "mu" => self.mu = parse_value(key, value)?,
            "min_inliers" => self.min_inliers = parse_value(key, value)?,
            "max_iterations" => self.max_iterations = parse_value(key, value)?,
            "reliability_threshold_us" => self.reliability_threshold_us = parse_value(key, value)?,
            "descriptor_window" => self.descriptor_window = parse_value(key, value)?,
            "cost_window" => self.cost_window = parse_value(key, value)?,
            "aggregation_region" => self.aggregation_region = parse_value(key, value)?,
            "aggregation_iterations" => self.aggregation_iterations = parse_value(key, value)?,
            "confidence_ratio" => self.confidence_ratio = parse_value(key, value)?,
            "match_window" => self.match_window = parse_value(key, value)?,
            "accumulation_interval_us" => self.accumulation_interval_us = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "left" => self.left = optional_path(value),
            "right" => self.right = optional_path(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "render_times" => {
                self.render_times = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "width" => self.width.to_string(),
            "height" => self.height.to_string(),
            "baseline" => self.baseline.to_string(),
            "max_disparity" => self.max_disparity.to_string(),
            "dt_max_us" => self.dt_max_us.to_string(),
            "window_n" => self.window_n.to_string(),
            "mu" => self.mu.to_string(),
            "min_inliers" => self.min_inliers.to_string(),
            "max_iterations" => self.max_iterations.to_string(),
            "reliability_threshold_us" => self.reliability_threshold_us.to_string(),
            "descriptor_window" => self.descriptor_window.to_string(),
            "cost_window" => self.cost_window.to_string(),
            "aggregation_region" => self.aggregation_region.to_string(),
            "aggregation_iterations" => self.aggregation_iterations.to_string(),
            "confidence_ratio" => self.confidence_ratio.to_string(),
            "match_window" => self.match_window.to_string(),
            "accumulation_interval_us" => self.accumulation_interval_us.to_string(),
            "seed" => self.seed.to_string(),
            "left" => path(&self.left),
            "right" => path(&self.right),
            "output_dir" => self.output_dir.display().to_string(),
            "render_times" => self.render_times.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its current value and a one-line description; parses
    /// back to the same configuration.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (key, doc) in KEYS {
            let _ = writeln!(s, "# {doc}");
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    pub fn geometry(&self) -> Result<SensorGeometry, ConfigError> {
        let mut g = SensorGeometry::new(self.width, self.height, self.max_disparity).map_err(|e| {
            ConfigError::InvalidValue {
                key: "width/height".into(),
                value: format!("{}x{}", self.width, self.height),
                reason: e.to_string(),
            }
        })?;
        g.baseline = self.baseline;
        Ok(g)
    }

    pub fn ransac_params(&self) -> Result<RansacParams, ConfigError> {
        let p = RansacParams {
            mu: self.mu,
            min_inliers: self.min_inliers,
            max_iterations: self.max_iterations,
            window_n: self.window_n,
            dt_max: self.dt_max_us,
            reliability_threshold: self.reliability_threshold_us,
        };
        p.validate().map_err(|e| ConfigError::InvalidValue {
            key: "ransac".into(),
            value: String::new(),
            reason: e.0,
        })?;
        Ok(p)
    }

    pub fn stereo_params(&self) -> Result<StereoParams, ConfigError> {
        let p = StereoParams {
            cost_window: self.cost_window,
            aggregation_region: self.aggregation_region,
            aggregation_iterations: self.aggregation_iterations,
            max_disparity: self.max_disparity,
            confidence_ratio: self.confidence_ratio,
            match_window: self.match_window,
            descriptor_window: self.descriptor_window,
        };
        p.validate().map_err(|e| ConfigError::InvalidValue {
            key: "stereo".into(),
            value: String::new(),
            reason: e.0,
        })?;
        Ok(p)
    }
}
