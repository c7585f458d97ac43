//! Feature/label files, dataset manifests and synthetic data.

pub mod features;
pub mod labels;
pub mod manifest;
pub mod synth;
pub mod validate;

pub use features::{read_feature_file, write_feature_file};
pub use labels::{read_labels, read_mapping, read_split, write_labels, ClassMapping};
pub use manifest::{DatasetManifest, VideoSample};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};
pub use validate::{validate_dataset, ValidationReport, Violation};
