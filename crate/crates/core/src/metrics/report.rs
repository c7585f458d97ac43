use std::fmt::Write;

use super::frame::{FrameCounts, FrameMetrics};
use super::segmental::{f1_avg, f1_counts, levenshtein, segments_from_labels, F1Counts, OVERLAPS};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Raw counts behind every metric of one video, or of several pooled ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalReport {
    pub num_classes: usize,
    pub frames: FrameCounts,
    /// Summed segment-label Levenshtein distances.
    pub edit_distance: u64,
    /// Summed `max(|pred segments|, |gt segments|)`.
    pub edit_length: u64,
    /// Segment match counts at each of [`OVERLAPS`].
    pub f1: [F1Counts; 3],
    /// Row-major `C × C` counts, ground truth on rows.
    pub confusion: Vec<u64>,
}

impl EvalReport {
    pub fn evaluate(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<Self> {
        let mut frames = FrameCounts::count(pred, gt)?;
        if frames.per_class.len() > num_classes {
            return Err(Error::Data(format!(
                "label {} is outside [0, {num_classes})",
                frames.per_class.len() - 1
            )));
        }
        frames.per_class.resize(num_classes, Default::default());
        let ps = segments_from_labels(pred)?;
        let gs = segments_from_labels(gt)?;
        let labels = |s: &[super::Segment]| s.iter().map(|s| s.label).collect::<Vec<_>>();
        let mut f1 = [F1Counts::default(); 3];
        for (c, tau) in f1.iter_mut().zip(OVERLAPS) {
            *c = f1_counts(pred, gt, tau)?;
        }
        let mut confusion = vec![0; num_classes * num_classes];
        for (&p, &g) in pred.iter().zip(gt) {
            confusion[g * num_classes + p] += 1;
        }
        Ok(EvalReport {
            num_classes,
            frames,
            edit_distance: levenshtein(&labels(&ps), &labels(&gs)) as u64,
            edit_length: ps.len().max(gs.len()) as u64,
            f1,
            confusion,
        })
    }

    pub fn merge(&mut self, other: &EvalReport) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Data(format!(
                "cannot pool reports over {} and {} classes",
                self.num_classes, other.num_classes
            )));
        }
        self.frames.merge(&other.frames);
        self.edit_distance += other.edit_distance;
        self.edit_length += other.edit_length;
        for (a, b) in self.f1.iter_mut().zip(&other.f1) {
            a.merge(b);
        }
        for (a, b) in self.confusion.iter_mut().zip(&other.confusion) {
            *a += b;
        }
        Ok(())
    }

    pub fn frame_metrics(&self) -> FrameMetrics {
        self.frames.metrics()
    }

    pub fn edit(&self) -> f64 {
        if self.edit_length == 0 {
            return 0.0;
        }
        100.0 * (1.0 - self.edit_distance as f64 / self.edit_length as f64)
    }

    pub fn scores(&self) -> Scores {
        let m = self.frame_metrics();
        let f1 = self.f1.map(|c| c.f1());
        Scores {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            jaccard: m.jaccard,
            edit: self.edit(),
            f1,
            f1_avg: f1_avg(f1[0], f1[1], f1[2]),
        }
    }

    pub fn confusion_matrix(&self, normalize: bool) -> Matrix<f64> {
        let c = self.num_classes;
        let mut m = Matrix::zeros(c, c);
        for g in 0..c {
            let row = &self.confusion[g * c..(g + 1) * c];
            let sum: u64 = row.iter().sum();
            for (p, &n) in row.iter().enumerate() {
                let v = if normalize && sum > 0 { n as f64 / sum as f64 } else { n as f64 };
                m.set(g, p, v);
            }
        }
        m
    }
}

/// The headline scores, all in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub edit: f64,
    /// F1 at each of [`OVERLAPS`].
    pub f1: [f64; 3],
    pub f1_avg: f64,
}

impl Scores {
    /// Report keys, in the order of [`Scores::values`].
    pub const KEYS: [&'static str; 9] = [
        "accuracy",
        "precision",
        "recall",
        "jaccard",
        "edit",
        "f1@10",
        "f1@25",
        "f1@50",
        "f1_avg",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.jaccard,
            self.edit,
            self.f1[0],
            self.f1[1],
            self.f1[2],
            self.f1_avg,
        ]
    }

    fn from_values(v: [f64; 9]) -> Self {
        Scores {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            jaccard: v[3],
            edit: v[4],
            f1: [v[5], v[6], v[7]],
            f1_avg: v[8],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregateMode {
    /// Scores recomputed from counts pooled over all videos.
    Overall,
    /// Mean and population standard deviation of per-video scores.
    PerVideo,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Summary {
    Overall(EvalReport),
    PerVideo { mean: Scores, std: Scores },
}

pub fn aggregate(reports: &[EvalReport], mode: AggregateMode) -> Result<Summary> {
    let Some(first) = reports.first() else {
        return Err(Error::Data("cannot aggregate an empty list of reports".into()));
    };
    match mode {
        AggregateMode::Overall => {
            let mut pooled = first.clone();
            for r in &reports[1..] {
                pooled.merge(r)?;
            }
            Ok(Summary::Overall(pooled))
        }
        AggregateMode::PerVideo => {
            let n = reports.len() as f64;
            let all: Vec<[f64; 9]> = reports.iter().map(|r| r.scores().values()).collect();
            let mut mean = [0.0; 9];
            let mut std = [0.0; 9];
            for k in 0..9 {
                mean[k] = all.iter().map(|v| v[k]).sum::<f64>() / n;
                std[k] = (all.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
            }
            Ok(Summary::PerVideo {
                mean: Scores::from_values(mean),
                std: Scores::from_values(std),
            })
        }
    }
}

/// Renders `metric<TAB>value` lines:
///
/// - `<metric>`: scores of the pooled counts, for each of [`Scores::KEYS`];
/// - `class/<c>/{precision,recall,jaccard}`: pooled per-class scores, where
///   defined;
/// - `confusion/<gt>/<pred>`: pooled frame counts;
/// - `per_video/<metric>/{mean,std}`: summary over videos;
/// - `video/<id>/<metric>`: each video's scores, in the given order.
pub fn format_report(videos: &[(String, EvalReport)]) -> Result<String> {
    let reports: Vec<EvalReport> = videos.iter().map(|(_, r)| r.clone()).collect();
    let Summary::Overall(pooled) = aggregate(&reports, AggregateMode::Overall)? else {
        unreachable!()
    };
    let Summary::PerVideo { mean, std } = aggregate(&reports, AggregateMode::PerVideo)? else {
        unreachable!()
    };
    let mut out = String::new();
    let scores = pooled.scores();
    for (key, v) in Scores::KEYS.iter().zip(scores.values()) {
        let _ = writeln!(out, "{key}\t{v:.4}");
    }
    for (c, s) in pooled.frame_metrics().per_class.iter().enumerate() {
        for (name, v) in [("precision", s.precision), ("recall", s.recall), ("jaccard", s.jaccard)] {
            if let Some(v) = v {
                let _ = writeln!(out, "class/{c}/{name}\t{v:.4}");
            }
        }
    }
    let c = pooled.num_classes;
    for (i, n) in pooled.confusion.iter().enumerate() {
        let _ = writeln!(out, "confusion/{}/{}\t{n}", i / c, i % c);
    }
    for (k, key) in Scores::KEYS.iter().enumerate() {
        let _ = writeln!(out, "per_video/{key}/mean\t{:.4}", mean.values()[k]);
        let _ = writeln!(out, "per_video/{key}/std\t{:.4}", std.values()[k]);
    }
    for (id, r) in videos {
        for (key, v) in Scores::KEYS.iter().zip(r.scores().values()) {
            let _ = writeln!(out, "video/{id}/{key}\t{v:.4}");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(pred: &[usize], gt: &[usize]) -> EvalReport {
        EvalReport::evaluate(pred, gt, 3).unwrap()
    }

    #[test]
    fn single_video_summary() {
        let r = report(&[0, 0, 1, 2], &[0, 1, 1, 2]);
        let Summary::PerVideo { mean, std } = aggregate(std::slice::from_ref(&r), AggregateMode::PerVideo).unwrap()
        else {
            panic!()
        };
        assert_eq!(mean, r.scores());
        assert!(std.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_video_mean_and_std() {
        let a = report(&[0; 10], &[0; 10]);
        let mut pred = [0; 10];
        pred[9] = 1;
        let b = report(&pred, &[0; 10]);
        let Summary::PerVideo { mean, std } = aggregate(&[a, b], AggregateMode::PerVideo).unwrap()
        else {
            panic!()
        };
        assert!((mean.accuracy - 95.0).abs() < 1e-9);
        assert!((std.accuracy - 5.0).abs() < 1e-9);
    }

    #[test]
    fn pooled_accuracy_weights_by_frames() {
        // 2 of 2 correct and 1 of 8 correct: pooled 3 / 10.
        let a = report(&[1, 1], &[1, 1]);
        let b = report(&[0, 2, 2, 2, 2, 2, 2, 2], &[0; 8]);
        let Summary::Overall(p) = aggregate(&[a, b], AggregateMode::Overall).unwrap() else {
            panic!()
        };
        assert!((p.scores().accuracy - 30.0).abs() < 1e-9);
        assert_eq!(p.frames.per_class[0].tp, 1);
        assert_eq!(p.frames.per_class[2].fp, 7);
        // Edit over pooled counts: distances 0 and 1, lengths 1 and 2.
        assert_eq!((p.edit_distance, p.edit_length), (1, 3));
    }

    #[test]
    fn confusion_rows_sum_to_gt_counts() {
        let gt = [0, 0, 1, 2, 2, 2];
        let r = report(&[0, 1, 1, 0, 2, 2], &gt);
        let m = r.confusion_matrix(false);
        for c in 0..3 {
            let expected = gt.iter().filter(|&&g| g == c).count() as f64;
            assert_eq!(m.row(c).iter().sum::<f64>(), expected);
        }
    }

    #[test]
    fn empty_list_is_rejected() {
        assert!(aggregate(&[], AggregateMode::Overall).is_err());
    }

    #[test]
    fn label_outside_class_range() {
        assert!(EvalReport::evaluate(&[0, 3], &[0, 0], 3).is_err());
    }

    #[test]
    fn report_keys() {
        let r = report(&[0, 1], &[0, 1]);
        let text = format_report(&[("v1".into(), r)]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("accuracy\t100.0000"));
        for key in ["f1@10\t", "f1@25\t", "f1@50\t", "f1_avg\t", "per_video/edit/std\t"] {
            assert!(text.lines().any(|l| l.starts_with(key)), "{key}");
        }
        assert!(text.contains("video/v1/jaccard\t100.0000"));
        assert!(text.contains("confusion/1/1\t1\n"));
        assert!(text.lines().all(|l| l.split('\t').count() == 2));
    }
}
