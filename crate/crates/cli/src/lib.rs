//! File formats, report writers, image segmentation and the command-line
//! front end for capacity-constrained deterministic annealing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod compare;
pub mod error;
pub mod instance;
pub mod ppm;
pub mod report;
pub mod segment;

pub use cli::run_cli;
pub use error::{CliError, Result};
pub use instance::{load_instance, read_instance, write_instance, CapacityValues, Format, Instance};
pub use ppm::{read_ppm, write_ppm, RgbImage};
pub use report::{write_report, ReportContext};
pub use segment::{segment_image, SegmentReport, Segmentation};
