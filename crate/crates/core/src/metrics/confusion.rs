use super::check_lengths;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `C × C` matrix with ground truth on rows and prediction on columns. With
/// `normalize` each row is divided by its sum; empty rows stay zero.
pub fn confusion_matrix(
    pred: &[usize],
    gt: &[usize],
    num_classes: usize,
    normalize: bool,
) -> Result<Matrix<f64>> {
    check_lengths(pred, gt)?;
    let mut m = Matrix::zeros(num_classes, num_classes);
    for (&p, &g) in pred.iter().zip(gt) {
        if p >= num_classes || g >= num_classes {
            return Err(Error::Data(format!(
                "label {} is outside [0, {num_classes})",
                p.max(g)
            )));
        }
        m.set(g, p, m.get(g, p) + 1.0);
    }
    if normalize {
        for r in 0..num_classes {
            let sum: f64 = m.row(r).iter().sum();
            if sum > 0.0 {
                m.row_mut(r).iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    Ok(m)
}
