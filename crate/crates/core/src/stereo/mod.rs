//! Event matching across rectified stereo sensors and the coupled lifetime
//! pipeline.

mod cost;
mod pipeline;

pub use cost::{
    aggregate_cost, estimate_disparity, matching_cost, median_lifetime, winner_takes_all, CostVolume, EmptyWindow,
};
pub use pipeline::{run_pipeline, PipelineMode, PipelineOutput, SideStats, StereoState};

use crate::lifetime::ParamError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoParams {
    /// Side of the matching window W_p (odd).
    pub cost_window: usize,
    /// Side of the aggregation region A (odd).
    pub aggregation_region: usize,
    pub aggregation_iterations: usize,
    pub max_disparity: u32,
    /// Runner-up cost must be at least this multiple of the best cost.
    pub confidence_ratio: f64,
    /// Side of the window M in which matched lifetimes are collected (odd).
    pub match_window: usize,
    /// Side of the descriptor window N (odd).
    pub descriptor_window: usize,
}

impl Default for StereoParams {
    fn default() -> Self {
        Self {
            cost_window: 15,
            aggregation_region: 3,
            aggregation_iterations: 1,
            max_disparity: 32,
            confidence_ratio: 1.25,
            match_window: 15,
            descriptor_window: 5,
        }
    }
}

impl StereoParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("cost_window", self.cost_window),
            ("aggregation_region", self.aggregation_region),
            ("match_window", self.match_window),
            ("descriptor_window", self.descriptor_window),
        ] {
            if v == 0 || v % 2 == 0 {
                return Err(ParamError(format!("{name} {v} must be odd")));
            }
        }
        if !(self.confidence_ratio > 1.0) || !self.confidence_ratio.is_finite() {
            return Err(ParamError(format!("confidence_ratio {} must exceed 1", self.confidence_ratio)));
        }
        Ok(())
    }
}
