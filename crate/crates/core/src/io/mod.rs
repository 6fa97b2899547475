//! File formats and rendering.

pub mod format;
pub mod render;

pub use format::{
    format_augmented, format_events, format_seconds, format_truth, parse_augmented, parse_events, parse_seconds,
    parse_truth, read_augmented_file, read_event_file, read_truth_file, write_augmented_file, write_event_file,
    write_truth_file, AugmentedFile, AugmentedRecord, FormatError,
};
pub use render::{render_active_frame, render_disparity_map, write_disparity_map, GrayImage, BACKGROUND};
