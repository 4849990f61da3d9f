//! Surrounding-area supervision: Gaussian-blur the ground truth, then mask
//! the object out so only the halo around it remains.

use crate::error::{Error, Result};
use crate::ops::{convolve2d_same, downsample_avg};
use crate::tensor::{Kernel2D, Mask, SoftMap};

/// Blur width used at the reference 352-pixel input size.
pub const REFERENCE_SIGMA: f64 = 50.0;
/// Input side the reference blur width is quoted for.
pub const REFERENCE_SIDE: usize = 352;

/// Blur width scaled proportionally to the image side.
pub fn sigma_for_side(side: usize) -> f64 {
    REFERENCE_SIGMA * side as f64 / REFERENCE_SIDE as f64
}

/// Kernel side covering ±3σ: `2·ceil(3σ) + 1`.
pub fn truncated_side(sigma: f64) -> usize {
    2 * (3.0 * sigma).ceil() as usize + 1
}

/// Normalized isotropic Gaussian, truncated at ±3σ.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    gaussian_kernel_with_side(sigma, truncated_side(sigma))
}

/// Normalized Gaussian with an explicit odd side.
pub fn gaussian_kernel_with_side(sigma: f64, side: usize) -> Result<Kernel2D> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if side.is_multiple_of(2) {
        return Err(Error::InvalidKernel(format!("side {side} is not odd")));
    }
    let r = (side / 2) as f64;
    // exp(-(i²+j²)/2σ²) factors into two 1-D profiles; the 1/(2πσ²)
    // prefactor cancels under normalization.
    let raw: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Kernel2D::from_profile(raw.into_iter().map(|v| v / total).collect())
}

/// Soft halo label around an object.
#[derive(Debug, Clone, PartialEq)]
pub struct SurroundingLabel {
    map: SoftMap,
    sigma: f64,
}

impl SurroundingLabel {
    pub fn map(&self) -> &SoftMap {
        &self.map
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn into_map(self) -> SoftMap {
        self.map
    }

    /// Wraps an existing map, checking the `[0, 1]` range and that it
    /// vanishes on the object.
    pub fn from_parts(map: SoftMap, sigma: f64, gt: &Mask) -> Result<Self> {
        if map.dims() != gt.dims() {
            return Err(Error::Dimension(format!(
                "label {:?} vs mask {:?}",
                map.dims(),
                gt.dims()
            )));
        }
        for (i, (&v, &g)) in map.data().iter().zip(gt.data()).enumerate() {
            if !(0.0..=1.0).contains(&v) || (g == 1 && v != 0.0) {
                return Err(Error::Validation(format!(
                    "label value {v} at flat index {i} violates the halo law"
                )));
            }
        }
        Ok(Self { map, sigma })
    }
}

/// `Lm = max(gt ∗ Gaussian_σ − gt, 0)`.
///
/// Object pixels are written as exact zeros so that `Lm · gt = 0` holds
/// bit-for-bit even where rounding pushes the blurred value above one.
pub fn surrounding_label(gt: &Mask, sigma: f64) -> Result<SurroundingLabel> {
    let kernel = gaussian_kernel(sigma)?;
    let blurred = convolve2d_same(&gt.to_soft(), &kernel)?;
    let mut map = blurred;
    for (v, &g) in map.data_mut().iter_mut().zip(gt.data()) {
        *v = if g == 1 { 0.0 } else { v.clamp(0.0, 1.0) };
    }
    Ok(SurroundingLabel { map, sigma })
}

/// Average-pooled copies of the label, one per scale, in the given order.
pub fn surrounding_pyramid(label: &SurroundingLabel, scales: &[usize]) -> Result<Vec<SoftMap>> {
    scales
        .iter()
        .map(|&s| downsample_avg(&label.map, s))
        .collect()
}

fn neighbours4(mask: &Mask, y: usize, x: usize) -> impl Iterator<Item = Option<bool>> + '_ {
    let (h, w) = mask.dims();
    [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
        .into_iter()
        .map(move |(dy, dx)| {
            let ny = y as isize + dy;
            let nx = x as isize + dx;
            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                None
            } else {
                Some(mask.get(ny as usize, nx as usize))
            }
        })
}

/// 4-connected erosion; pixels outside the frame count as background.
pub fn erode(mask: &Mask) -> Mask {
    Mask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x) && neighbours4(mask, y, x).all(|n| n == Some(true))
    })
}

/// 4-connected dilation.
pub fn dilate(mask: &Mask) -> Mask {
    Mask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x) || neighbours4(mask, y, x).any(|n| n == Some(true))
    })
}

/// One-pixel inner boundary: `mask ∖ erode(mask)`.
pub fn boundary(mask: &Mask) -> Mask {
    let inner = erode(mask);
    Mask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x) && !inner.get(y, x)
    })
}
