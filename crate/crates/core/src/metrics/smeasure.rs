//! Structure measure: `α·S_object + (1 − α)·S_region`.
//!
//! The object term compares foreground and background score distributions
//! through their means and standard deviations. The region term splits both
//! maps at the ground-truth centroid into four blocks and averages an
//! SSIM-style block score weighted by block area.

use crate::error::Result;
use crate::tensor::{Mask, SoftMap};

use super::check_dims;

const EPS: f64 = f64::EPSILON;

pub fn s_measure(o: &SoftMap, gt: &Mask, alpha: f64) -> Result<f64> {
    check_dims(o.dims(), gt.dims())?;
    let fg_ratio = gt.count_ones() as f64 / gt.len() as f64;
    if fg_ratio == 0.0 {
        return Ok(1.0 - o.mean());
    }
    if fg_ratio == 1.0 {
        return Ok(o.mean());
    }
    let score = alpha * object_score(o, gt) + (1.0 - alpha) * region_score(o, gt);
    Ok(score.max(0.0))
}

fn object_score(o: &SoftMap, gt: &Mask) -> f64 {
    let fg: Vec<f64> = o
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g == 1)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = o
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g == 0)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let u = fg.len() as f64 / gt.len() as f64;
    u * distribution_score(&fg) + (1.0 - u) * distribution_score(&bg)
}

/// `2x̄ / (x̄² + 1 + σ_x)` with the sample (n − 1) standard deviation.
fn distribution_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

/// Split column and row (exclusive ends of the left/top blocks): the
/// 1-based centroid rounded half away from zero.
fn centroid_split(gt: &Mask) -> (usize, usize) {
    let (h, w) = gt.dims();
    let total = gt.count_ones() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
            }
        }
    }
    ((sx / total).round() as usize, (sy / total).round() as usize)
}

fn region_score(o: &SoftMap, gt: &Mask) -> f64 {
    let (h, w) = gt.dims();
    let (cx, cy) = centroid_split(gt);
    let area = (h * w) as f64;
    let blocks = [
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    ];
    let weights = [
        (cx * cy) as f64 / area,
        ((w - cx) * cy) as f64 / area,
        (cx * (h - cy)) as f64 / area,
    ];
    let weights = [
        weights[0],
        weights[1],
        weights[2],
        1.0 - weights.iter().sum::<f64>(),
    ];
    blocks
        .iter()
        .zip(weights)
        .map(|(&(y0, y1, x0, x1), wt)| {
            if y1 <= y0 || x1 <= x0 {
                0.0
            } else {
                wt * block_ssim(o, gt, y0, y1, x0, x1)
            }
        })
        .sum()
}

fn block_ssim(o: &SoftMap, gt: &Mask, y0: usize, y1: usize, x0: usize, x1: usize) -> f64 {
    let n = ((y1 - y0) * (x1 - x0)) as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            mx += o.get(y, x);
            my += f64::from(u8::from(gt.get(y, x)));
        }
    }
    mx /= n;
    my /= n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = o.get(y, x) - mx;
            let dy = f64::from(u8::from(gt.get(y, x))) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    let denom = n - 1.0 + EPS;
    let (vx, vy, cxy) = (vx / denom, vy / denom, cxy / denom);
    let a = 4.0 * mx * my * cxy;
    let b = (mx * mx + my * my) * (vx + vy);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_is_one() {
        let gt = Mask::from_fn(20, 24, |y, x| {
            (y as i32 - 9).pow(2) + (x as i32 - 13).pow(2) < 30
        });
        let s = s_measure(&gt.to_soft(), &gt, 0.5).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn degenerate_ground_truth_falls_back_to_means() {
        let empty = Mask::zeros(8, 8);
        assert_eq!(s_measure(&SoftMap::zeros(8, 8), &empty, 0.5).unwrap(), 1.0);
        assert_eq!(
            s_measure(&SoftMap::filled(8, 8, 0.25), &empty, 0.5).unwrap(),
            0.75
        );
        let full = Mask::ones(8, 8);
        assert_eq!(
            s_measure(&SoftMap::filled(8, 8, 0.25), &full, 0.5).unwrap(),
            0.25
        );
    }

    #[test]
    fn centroid_uses_one_based_coordinates() {
        // single pixel at (row 2, col 5): 1-based centroid (6, 3)
        let gt = Mask::from_fn(6, 8, |y, x| y == 2 && x == 5);
        assert_eq!(centroid_split(&gt), (6, 3));
    }
}
