//! Spatial-compressed correlation transmission: a fixed space-to-depth
//! permutation that splits a feature map into `s²` interleaved sub-grids and
//! stacks them along the channel axis.
//!
//! For layer `k ∈ {2, 3, 4}` the stride is `s = 5 − k`. Part `p = i_h·s + i_w`
//! holds the pixels whose `(row mod s, col mod s)` residue is `(i_h, i_w)` and
//! occupies output channels `p·C .. (p+1)·C`. The output therefore has shape
//! `(C·s², H/s, W/s)`; the element count is conserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScctLayout {
    layer: u8,
    stride: usize,
}

impl ScctLayout {
    /// Layout for network layer `k`; only `k ∈ {2, 3, 4}` is defined.
    pub fn for_layer(k: u8) -> Result<Self> {
        if !(2..=4).contains(&k) {
            return Err(Error::Layout(format!("layer index {k} not in {{2, 3, 4}}")));
        }
        Ok(Self {
            layer: k,
            stride: 5 - k as usize,
        })
    }

    pub fn layer(&self) -> u8 {
        self.layer
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn part_count(&self) -> usize {
        self.stride * self.stride
    }

    pub fn is_identity(&self) -> bool {
        self.stride == 1
    }
}

pub fn scct_forward(f: &Tensor3, layout: ScctLayout) -> Result<Tensor3> {
    let (c, h, w) = f.shape();
    let s = layout.stride;
    if h % s != 0 || w % s != 0 {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not divisible by stride {s}"
        )));
    }
    if layout.is_identity() {
        return Ok(f.clone());
    }
    let (oh, ow) = (h / s, w / s);
    let mut out = Vec::with_capacity(f.data().len());
    for ih in 0..s {
        for iw in 0..s {
            for ch in 0..c {
                let plane = f.channel(ch);
                for oy in 0..oh {
                    let row = &plane[(oy * s + ih) * w..(oy * s + ih + 1) * w];
                    out.extend(row.iter().skip(iw).step_by(s).take(ow));
                }
            }
        }
    }
    Tensor3::from_vec(c * s * s, oh, ow, out)
}

/// Exact inverse of [`scct_forward`]; also its adjoint, since the transform
/// is a permutation.
pub fn scct_inverse(f: &Tensor3, layout: ScctLayout) -> Result<Tensor3> {
    let (cs, oh, ow) = f.shape();
    let s = layout.stride;
    let parts = s * s;
    if cs % parts != 0 {
        return Err(Error::Layout(format!(
            "{cs} channels are not divisible by {parts} parts"
        )));
    }
    if layout.is_identity() {
        return Ok(f.clone());
    }
    let c = cs / parts;
    let (h, w) = (oh * s, ow * s);
    let mut out = Tensor3::zeros(c, h, w);
    for ih in 0..s {
        for iw in 0..s {
            for ch in 0..c {
                let src = f.channel((ih * s + iw) * c + ch);
                let dst = out.channel_mut(ch);
                for oy in 0..oh {
                    for ox in 0..ow {
                        dst[(oy * s + ih) * w + ox * s + iw] = src[oy * ow + ox];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Ratio of candidate pixel pairs before and after the transform:
/// `(h·w)² / ((h/s)·(w/s))² = s⁴`.
pub fn pair_count_reduction(layout: ScctLayout, h: usize, w: usize) -> Result<f64> {
    let s = layout.stride;
    if h == 0 || w == 0 || !h.is_multiple_of(s) || !w.is_multiple_of(s) {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not divisible by stride {s}"
        )));
    }
    let before = ((h * w) as f64).powi(2);
    let after = (((h / s) * (w / s)) as f64).powi(2);
    Ok(before / after)
}
