use super::{check_lengths, percent};
use crate::error::{Error, Result};

/// Maximal run of one label over frames `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Frame intersection-over-union; zero for different labels.
    pub fn iou(&self, other: &Segment) -> f64 {
        if self.label != other.label {
            return 0.0;
        }
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

/// IoU thresholds of the segmental F1 scores, in reporting order.
pub const OVERLAPS: [f64; 3] = [0.10, 0.25, 0.50];

pub fn segments_from_labels(labels: &[usize]) -> Result<Vec<Segment>> {
    let Some(&first) = labels.first() else {
        return Err(Error::Data("cannot segment an empty label sequence".into()));
    };
    let mut segments = Vec::new();
    let mut current = Segment {
        label: first,
        start: 0,
        end: 1,
    };
    for (t, &label) in labels.iter().enumerate().skip(1) {
        if label == current.label {
            current.end = t + 1;
        } else {
            segments.push(current);
            current = Segment {
                label,
                start: t,
                end: t + 1,
            };
        }
    }
    segments.push(current);
    Ok(segments)
}

/// Unit-cost insert/delete/substitute distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn segment_labels(segments: &[Segment]) -> Vec<usize> {
    segments.iter().map(|s| s.label).collect()
}

/// `100 · (1 − lev / max(|pred|, |gt|))` over the segment label strings.
pub fn edit_score(pred: &[Segment], gt: &[Segment]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Data("edit score needs nonempty segment lists".into()));
    }
    let d = levenshtein(&segment_labels(pred), &segment_labels(gt));
    Ok(100.0 * (1.0 - d as f64 / pred.len().max(gt.len()) as f64))
}

/// Segment-level match counts at one IoU threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl F1Counts {
    pub fn precision(&self) -> f64 {
        percent(self.tp, self.tp + self.fp).unwrap_or(0.0)
    }

    pub fn recall(&self) -> f64 {
        percent(self.tp, self.tp + self.fn_).unwrap_or(0.0)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn merge(&mut self, other: &F1Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Each predicted segment, in temporal order, is matched to the gt segment
/// of highest IoU (first on ties). It is a true positive when that IoU is at
/// least `tau` and the gt segment is still unmatched, otherwise a false
/// positive. Unmatched gt segments are false negatives.
pub fn f1_counts(pred: &[usize], gt: &[usize], tau: f64) -> Result<F1Counts> {
    check_lengths(pred, gt)?;
    if gt.is_empty() {
        return Ok(F1Counts::default());
    }
    let pred = segments_from_labels(pred)?;
    let gt = segments_from_labels(gt)?;
    let mut matched = vec![false; gt.len()];
    let mut counts = F1Counts::default();
    for p in &pred {
        let mut best = (0.0, 0);
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou > best.0 {
                best = (iou, j);
            }
        }
        if best.0 > 0.0 && best.0 >= tau && !matched[best.1] {
            matched[best.1] = true;
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
    }
    counts.fn_ = matched.iter().filter(|m| !**m).count() as u64;
    Ok(counts)
}

/// `(precision, recall, f1)` in percent.
pub fn f1_at_overlap(pred: &[usize], gt: &[usize], tau: f64) -> Result<(f64, f64, f64)> {
    let c = f1_counts(pred, gt, tau)?;
    Ok((c.precision(), c.recall(), c.f1()))
}

pub fn f1_avg(f10: f64, f25: f64, f50: f64) -> f64 {
    (f10 + f25 + f50) / 3.0
}
