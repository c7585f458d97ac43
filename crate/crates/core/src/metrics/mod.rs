//! Frame-level and segmental evaluation of label sequences.
//!
//! All scores are percentages in `[0, 100]`. Reports keep raw counts so
//! that several videos can be pooled without losing information.

mod confusion;
mod frame;
mod report;
mod ribbon;
mod segmental;

pub use confusion::confusion_matrix;
pub use frame::{frame_metrics, ClassCounts, ClassScores, FrameCounts, FrameMetrics};
pub use report::{aggregate, format_report, AggregateMode, EvalReport, Scores, Summary};
pub use ribbon::{emit_ribbon, encode_ribbon, BAND_HEIGHT, PALETTE};
pub use segmental::{
    edit_score, f1_at_overlap, f1_avg, f1_counts, levenshtein, segments_from_labels, F1Counts,
    Segment, OVERLAPS,
};

use crate::error::{Error, Result};

pub(crate) fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!(
            "prediction has {} frames, ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

pub(crate) fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}
