//! Enhanced-alignment measure on an adaptively binarized prediction.

use crate::error::Result;
use crate::tensor::{Mask, SoftMap};

use super::check_dims;

/// Binarizes at `min(2·mean(o), 1)`; an all-zero map stays all-zero.
pub fn adaptive_binarize(o: &SoftMap) -> Mask {
    let t = (2.0 * o.mean()).min(1.0);
    Mask::from_fn(o.height(), o.width(), |y, x| {
        let v = o.get(y, x);
        v >= t && v > 0.0
    })
}

pub fn e_measure(o: &SoftMap, gt: &Mask) -> Result<f64> {
    check_dims(o.dims(), gt.dims())?;
    e_measure_binary(&adaptive_binarize(o), gt)
}

/// Mean of `((2·φ_FM·φ_GT)/(φ_FM² + φ_GT²) + 1)² / 4`, where `φ` are the
/// mean-centred maps. Empty or full ground truth reduce to the fraction of
/// correctly labelled pixels.
pub fn e_measure_binary(fm: &Mask, gt: &Mask) -> Result<f64> {
    check_dims(fm.dims(), gt.dims())?;
    let n = gt.len() as f64;
    let ones = gt.count_ones();
    if ones == 0 {
        return Ok(fm.data().iter().map(|&v| 1.0 - f64::from(v)).sum::<f64>() / n);
    }
    if ones == gt.len() {
        return Ok(fm.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n);
    }
    let mu_fm = fm.count_ones() as f64 / n;
    let mu_gt = ones as f64 / n;
    let total: f64 = fm
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&f, &g)| {
            let a = f64::from(f) - mu_fm;
            let b = f64::from(g) - mu_gt;
            let align = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
            (align + 1.0).powi(2) / 4.0
        })
        .sum();
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob() -> Mask {
        Mask::from_fn(16, 16, |y, x| (4..10).contains(&y) && (3..12).contains(&x))
    }

    #[test]
    fn perfect_is_one_complement_is_zero() {
        let gt = blob();
        assert!((e_measure(&gt.to_soft(), &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!(e_measure(&gt.invert().to_soft(), &gt).unwrap() < 1e-12);
    }

    #[test]
    fn empty_ground_truth() {
        let gt = Mask::zeros(8, 8);
        assert_eq!(e_measure(&SoftMap::zeros(8, 8), &gt).unwrap(), 1.0);
        // a flat map never reaches the clipped threshold
        assert_eq!(e_measure(&SoftMap::filled(8, 8, 0.9), &gt).unwrap(), 1.0);
        assert_eq!(e_measure_binary(&Mask::ones(8, 8), &gt).unwrap(), 0.0);
        let mut o = SoftMap::zeros(8, 8);
        o.set(0, 0, 0.9);
        assert_eq!(e_measure(&o, &gt).unwrap(), 63.0 / 64.0);
    }

    #[test]
    fn threshold_is_twice_the_mean() {
        let o = SoftMap::from_rows(&[&[0.1, 0.2, 0.3, 0.4]]).unwrap();
        // mean 0.25 → threshold 0.5 → nothing passes
        assert_eq!(adaptive_binarize(&o).count_ones(), 0);
        let o = SoftMap::from_rows(&[&[0.0, 0.0, 0.0, 0.8]]).unwrap();
        assert_eq!(adaptive_binarize(&o).data(), &[0, 0, 0, 1]);
        let o = SoftMap::from_rows(&[&[0.9, 0.9, 1.0, 0.95]]).unwrap();
        // threshold clips to 1
        assert_eq!(adaptive_binarize(&o).data(), &[0, 0, 1, 0]);
    }
}
