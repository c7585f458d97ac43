use std::collections::{BTreeMap, BTreeSet};

use super::features::read_feature_file;
use super::labels::parse_labels;
use super::manifest::DatasetManifest;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub video: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub videos_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every video named by the train and test splits: files present
/// and parseable, label count equal to the frame count, label ids inside
/// the mapping, and one feature dimension shared by all videos (the most
/// common one is taken as reference).
pub fn validate_dataset(manifest: &DatasetManifest) -> ValidationReport {
    let ids: BTreeSet<&String> = manifest.train.iter().chain(&manifest.test).collect();
    let mut report = ValidationReport::default();
    let mut dims: BTreeMap<&String, usize> = BTreeMap::new();
    let mut push = |video: &str, message: String| {
        report.violations.push(Violation {
            video: video.to_string(),
            message,
        })
    };
    for id in &ids {
        let features = match read_feature_file(manifest.feature_path(id)) {
            Ok(f) => f,
            Err(e) => {
                push(id, format!("features: {e}"));
                continue;
            }
        };
        dims.insert(id, features.cols());
        let labels = std::fs::read_to_string(manifest.label_path(id))
            .map_err(|e| e.to_string())
            .and_then(|text| parse_labels(&text, features.rows()).map_err(|e| e.to_string()));
        match labels {
            Ok(labels) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= manifest.mapping.len()) {
                    push(
                        id,
                        format!("label {bad} outside the {} mapped classes", manifest.mapping.len()),
                    );
                }
            }
            Err(e) => push(id, format!("labels: {e}")),
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in dims.values() {
        *counts.entry(d).or_default() += 1;
    }
    if let Some((&reference, _)) = counts.iter().max_by_key(|(d, n)| (**n, std::cmp::Reverse(**d))) {
        for (id, &d) in &dims {
            if d != reference {
                push(id, format!("feature dimension {d} differs from dataset dimension {reference}"));
            }
        }
    }
    report.videos_checked = ids.len();
    report
}
