//! Dataset ingestion and interchange.

mod json;
mod tu;

pub use json::{load_json_dataset, load_outlier_set, write_json_dataset, write_outlier_set};
pub use tu::{load_tu_dataset, FeaturePolicy};
