use super::{check_lengths, percent};
use crate::error::Result;

/// Frame counts of one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    /// The class occurs in the ground truth.
    pub fn in_gt(&self) -> bool {
        self.tp + self.fn_ > 0
    }

    pub fn scores(&self) -> ClassScores {
        ClassScores {
            precision: percent(self.tp, self.tp + self.fp),
            recall: percent(self.tp, self.tp + self.fn_),
            jaccard: percent(self.tp, self.tp + self.fp + self.fn_),
        }
    }
}

/// Per-class scores; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub jaccard: Option<f64>,
}

/// Pooled frame counts, indexed by class id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub correct: u64,
    pub total: u64,
    pub per_class: Vec<ClassCounts>,
}

impl FrameCounts {
    pub fn count(pred: &[usize], gt: &[usize]) -> Result<Self> {
        check_lengths(pred, gt)?;
        let classes = pred.iter().chain(gt).max().map_or(0, |m| m + 1);
        let mut counts = FrameCounts {
            correct: 0,
            total: gt.len() as u64,
            per_class: vec![ClassCounts::default(); classes],
        };
        for (&p, &g) in pred.iter().zip(gt) {
            if p == g {
                counts.correct += 1;
                counts.per_class[g].tp += 1;
            } else {
                counts.per_class[p].fp += 1;
                counts.per_class[g].fn_ += 1;
            }
        }
        Ok(counts)
    }

    pub fn merge(&mut self, other: &FrameCounts) {
        self.correct += other.correct;
        self.total += other.total;
        if self.per_class.len() < other.per_class.len() {
            self.per_class.resize(other.per_class.len(), ClassCounts::default());
        }
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
    }

    /// Macro averages over the classes present in the ground truth. A
    /// present class that is never predicted contributes precision 0.
    pub fn metrics(&self) -> FrameMetrics {
        let per_class: Vec<ClassScores> = self.per_class.iter().map(ClassCounts::scores).collect();
        let present: Vec<&ClassScores> = self
            .per_class
            .iter()
            .zip(&per_class)
            .filter(|(c, _)| c.in_gt())
            .map(|(_, s)| s)
            .collect();
        let mean = |f: fn(&ClassScores) -> Option<f64>| {
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|s| f(s).unwrap_or(0.0)).sum::<f64>() / present.len() as f64
            }
        };
        FrameMetrics {
            accuracy: percent(self.correct, self.total).unwrap_or(0.0),
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            jaccard: mean(|s| s.jaccard),
            per_class,
        }
    }
}

/// Frame accuracy plus per-class and macro precision, recall and Jaccard.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub per_class: Vec<ClassScores>,
}

pub fn frame_metrics(pred: &[usize], gt: &[usize]) -> Result<FrameMetrics> {
    Ok(FrameCounts::count(pred, gt)?.metrics())
}
