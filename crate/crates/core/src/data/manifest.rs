//! Dataset directory layout:
//!
//! ```text
//! <root>/features/<id>.msfeat
//! <root>/labels/<id>.txt
//! <root>/mapping.txt
//! <root>/splits/train.txt
//! <root>/splits/test.txt
//! ```

use std::path::{Path, PathBuf};

use super::features::{read_feature_file, write_feature_file};
use super::labels::{read_labels, read_mapping, read_split, write_labels, write_mapping, write_split, ClassMapping};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One video: per-second feature vectors and optional frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub id: String,
    pub features: Matrix<f32>,
    pub labels: Option<Vec<usize>>,
}

impl VideoSample {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data(format!("video {} has no labels", self.id)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub mapping: ClassMapping,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetManifest {
    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn feature_path(&self, id: &str) -> PathBuf {
        self.features_dir().join(format!("{id}.msfeat"))
    }

    pub fn label_path(&self, id: &str) -> PathBuf {
        self.labels_dir().join(format!("{id}.txt"))
    }

    pub fn split_path(root: &Path, name: &str) -> PathBuf {
        root.join("splits").join(format!("{name}.txt"))
    }

    /// Reads the mapping and whichever of the train/test splits exist.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mapping = read_mapping(root.join("mapping.txt"))?;
        let optional = |name: &str| -> Result<Vec<String>> {
            let p = Self::split_path(&root, name);
            if p.exists() {
                read_split(p)
            } else {
                Ok(Vec::new())
            }
        };
        let train = optional("train")?;
        let test = optional("test")?;
        Ok(DatasetManifest {
            root,
            mapping,
            train,
            test,
        })
    }

    /// Ids of a named split; the split file must exist.
    pub fn split(&self, name: &str) -> Result<Vec<String>> {
        let p = Self::split_path(&self.root, name);
        if !p.exists() {
            return Err(Error::Data(format!("split file {} does not exist", p.display())));
        }
        read_split(p)
    }

    pub fn load_video(&self, id: &str, with_labels: bool) -> Result<VideoSample> {
        let features = read_feature_file(self.feature_path(id))?;
        let labels = if with_labels {
            let labels = read_labels(self.label_path(id), features.rows())?;
            if let Some(&bad) = labels.iter().find(|&&l| l >= self.mapping.len()) {
                return Err(Error::Data(format!(
                    "video {id}: label {bad} outside the {} mapped classes",
                    self.mapping.len()
                )));
            }
            Some(labels)
        } else {
            None
        };
        Ok(VideoSample {
            id: id.to_string(),
            features,
            labels,
        })
    }

    pub fn load_split(&self, name: &str, with_labels: bool) -> Result<Vec<VideoSample>> {
        self.split(name)?
            .iter()
            .map(|id| self.load_video(id, with_labels))
            .collect()
    }

    /// Materializes a dataset tree at `root`.
    pub fn write(
        root: impl AsRef<Path>,
        mapping: &ClassMapping,
        train: &[VideoSample],
        test: &[VideoSample],
    ) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for dir in ["features", "labels", "splits"] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        write_mapping(root.join("mapping.txt"), mapping)?;
        let manifest = DatasetManifest {
            root: root.clone(),
            mapping: mapping.clone(),
            train: train.iter().map(|v| v.id.clone()).collect(),
            test: test.iter().map(|v| v.id.clone()).collect(),
        };
        for v in train.iter().chain(test) {
            write_feature_file(manifest.feature_path(&v.id), &v.features)?;
            if let Some(labels) = &v.labels {
                write_labels(manifest.label_path(&v.id), labels)?;
            }
        }
        write_split(Self::split_path(&root, "train"), &manifest.train)?;
        write_split(Self::split_path(&root, "test"), &manifest.test)?;
        Ok(manifest)
    }
}
