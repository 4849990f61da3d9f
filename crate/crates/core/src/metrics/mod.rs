//! Evaluation metrics for binary segmentation of concealed objects, plus the
//! binary cross-entropy used as a training loss.

mod emeasure;
mod fmeasure;
mod report;
mod smeasure;

pub use emeasure::{adaptive_binarize, e_measure, e_measure_binary};
pub use fmeasure::{nearest_foreground, weighted_fmeasure, NearestForeground};
pub use report::{evaluate_batch, evaluate_maps, MetricMeans, MetricReport, MetricRow};
pub use smeasure::s_measure;

use crate::error::{Error, Result};
use crate::tensor::{Mask, SoftMap};

/// Probabilities are clamped into `[BCE_CLAMP, 1 − BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "prediction {a:?} vs ground truth {b:?}"
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(o: &SoftMap, gt: &Mask) -> Result<f64> {
    check_dims(o.dims(), gt.dims())?;
    let total: f64 = o
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p - f64::from(g)).abs())
        .sum();
    Ok(total / o.len() as f64)
}

/// Mean binary cross-entropy against a binary mask.
pub fn bce_loss(o: &SoftMap, gt: &Mask) -> Result<f64> {
    bce_soft(o, &gt.to_soft())
}

/// Mean binary cross-entropy against targets in `[0, 1]`.
pub fn bce_soft(o: &SoftMap, target: &SoftMap) -> Result<f64> {
    check_dims(o.dims(), target.dims())?;
    let total: f64 = o
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / o.len() as f64)
}

/// Gradient of [`bce_soft`]`(sigmoid(z), target)` with respect to the logits
/// `z`, given `probs = sigmoid(z)`. Zero where the clamp is active.
pub fn bce_logit_grad(probs: &SoftMap, target: &SoftMap) -> Result<SoftMap> {
    check_dims(probs.dims(), target.dims())?;
    let n = probs.len() as f64;
    probs.zip_with(target, |p, y| {
        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
            (p - y) / n
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sigmoid;

    fn mask(rows: &[&[u8]]) -> Mask {
        Mask::from_vec(rows.len(), rows[0].len(), rows.concat()).unwrap()
    }

    #[test]
    fn mae_cases() {
        let gt = mask(&[&[1, 0], &[0, 1]]);
        assert_eq!(mae(&gt.to_soft(), &gt).unwrap(), 0.0);
        assert_eq!(mae(&gt.invert().to_soft(), &gt).unwrap(), 1.0);
        let one_off = SoftMap::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(mae(&one_off, &gt).unwrap(), 0.25);
        assert!(mae(&SoftMap::zeros(3, 2), &gt).is_err());
    }

    #[test]
    fn bce_cases() {
        let gt = mask(&[&[1, 0], &[0, 1]]);
        let half = SoftMap::filled(2, 2, 0.5);
        assert!((bce_loss(&half, &gt).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&gt.to_soft(), &gt).unwrap() <= 1e-6);
        let single = SoftMap::filled(1, 1, 0.9);
        let bce = bce_loss(&single, &Mask::ones(1, 1)).unwrap();
        assert!((bce - 0.10536051565782628).abs() < 1e-12);
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let target = SoftMap::from_rows(&[&[1.0, 0.0, 0.3]]).unwrap();
        let z = [0.4, -1.3, 2.0];
        let probs = SoftMap::from_rows(&[&z.map(sigmoid)]).unwrap();
        let g = bce_logit_grad(&probs, &target).unwrap();
        for i in 0..3 {
            let f = |d: f64| {
                let mut zz = z;
                zz[i] += d;
                let p = SoftMap::from_rows(&[&zz.map(sigmoid)]).unwrap();
                bce_soft(&p, &target).unwrap()
            };
            let num = (f(1e-6) - f(-1e-6)) / 2e-6;
            assert!((num - g.data()[i]).abs() < 1e-8);
        }
    }
}
