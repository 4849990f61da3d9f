//! Array kernels: zero-padded convolution, logistic map, pooling, bilinear
//! resampling (with adjoints for the hand-written backward passes) and
//! channel concatenation.

use crate::error::{Error, Result};
use crate::tensor::{Kernel2D, SoftMap, Tensor3};

/// `map ∗ kernel` with zero padding; the output has the input's dimensions.
///
/// Separable kernels run as a row pass followed by a column pass.
pub fn convolve2d_same(map: &SoftMap, kernel: &Kernel2D) -> Result<SoftMap> {
    let (h, w) = map.dims();
    let limit = 2 * h.max(w) + 1;
    if kernel.side() > limit {
        return Err(Error::InvalidKernel(format!(
            "kernel side {} exceeds {limit} for a {h}x{w} map",
            kernel.side()
        )));
    }
    let data = match kernel.profile() {
        Some(profile) => {
            let rows = convolve_rows(map.data(), h, w, profile);
            convolve_cols(&rows, h, w, profile)
        }
        None => convolve_dense(map.data(), h, w, kernel),
    };
    SoftMap::from_vec(h, w, data)
}

fn convolve_dense(src: &[f64], h: usize, w: usize, kernel: &Kernel2D) -> Vec<f64> {
    let r = kernel.radius() as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = y - dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let sx = x - dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    acc += kernel.at(dy, dx) * src[sy as usize * w + sx as usize];
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

fn convolve_rows(src: &[f64], h: usize, w: usize, profile: &[f64]) -> Vec<f64> {
    let r = (profile.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w as isize {
            let mut acc = 0.0;
            for d in -r..=r {
                let sx = x - d;
                if sx >= 0 && sx < w as isize {
                    acc += profile[(d + r) as usize] * row[sx as usize];
                }
            }
            out[y * w + x as usize] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], h: usize, w: usize, profile: &[f64]) -> Vec<f64> {
    let r = (profile.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for d in -r..=r {
            let sy = y - d;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let k = profile[(d + r) as usize];
            let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
            let dst_row = &mut out[y as usize * w..(y as usize + 1) * w];
            for (o, s) in dst_row.iter_mut().zip(src_row) {
                *o += k * s;
            }
        }
    }
    out
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_map(map: &SoftMap) -> SoftMap {
    map.map(sigmoid)
}

fn check_divisible(h: usize, w: usize, factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::Parameter("pooling factor must be positive".into()));
    }
    if !h.is_multiple_of(factor) || !w.is_multiple_of(factor) {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not divisible by factor {factor}"
        )));
    }
    Ok(())
}

fn pool_plane(src: &[f64], h: usize, w: usize, f: usize, max: bool) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let norm = (f * f) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = if max { f64::NEG_INFINITY } else { 0.0 };
            for y in oy * f..(oy + 1) * f {
                for &v in &src[y * w + ox * f..y * w + (ox + 1) * f] {
                    if max {
                        acc = acc.max(v);
                    } else {
                        acc += v;
                    }
                }
            }
            out.push(if max { acc } else { acc / norm });
        }
    }
    out
}

/// Mean over non-overlapping `factor × factor` blocks.
pub fn downsample_avg(map: &SoftMap, factor: usize) -> Result<SoftMap> {
    let (h, w) = map.dims();
    check_divisible(h, w, factor)?;
    SoftMap::from_vec(
        h / factor,
        w / factor,
        pool_plane(map.data(), h, w, factor, false),
    )
}

/// Maximum over non-overlapping `factor × factor` blocks.
pub fn downsample_max(map: &SoftMap, factor: usize) -> Result<SoftMap> {
    let (h, w) = map.dims();
    check_divisible(h, w, factor)?;
    SoftMap::from_vec(
        h / factor,
        w / factor,
        pool_plane(map.data(), h, w, factor, true),
    )
}

/// Channel-wise [`downsample_avg`].
pub fn downsample_avg_tensor(t: &Tensor3, factor: usize) -> Result<Tensor3> {
    let (c, h, w) = t.shape();
    check_divisible(h, w, factor)?;
    let mut data = Vec::with_capacity(c * (h / factor) * (w / factor));
    for ch in 0..c {
        data.extend(pool_plane(t.channel(ch), h, w, factor, false));
    }
    Tensor3::from_vec(c, h / factor, w / factor, data)
}

/// Adjoint of [`downsample_avg_tensor`]: spreads each gradient uniformly over
/// its source block.
pub fn downsample_avg_tensor_adjoint(grad: &Tensor3, factor: usize) -> Tensor3 {
    let (c, oh, ow) = grad.shape();
    let norm = (factor * factor) as f64;
    Tensor3::from_fn(c, oh * factor, ow * factor, |ch, y, x| {
        grad.get(ch, y / factor, x / factor) / norm
    })
}

/// Channel concatenation: `a`'s channels precede `b`'s.
pub fn concat_channels(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Dimension(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor3::from_vec(a.channels() + b.channels(), a.height(), a.width(), data)
}

/// Interpolation taps `(lo, hi, frac)` for one output axis, half-pixel
/// centres, edge-clamped.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn resize_plane(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for (ox, &(lo, hi, f)) in tx.iter().enumerate() {
            rows[y * ow + ox] = (1.0 - f) * src[y * w + lo] + f * src[y * w + hi];
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (oy, &(lo, hi, f)) in ty.iter().enumerate() {
        for ox in 0..ow {
            out[oy * ow + ox] = (1.0 - f) * rows[lo * ow + ox] + f * rows[hi * ow + ox];
        }
    }
    out
}

fn resize_plane_adjoint(grad: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut rows = vec![0.0; h * ow];
    for (oy, &(lo, hi, f)) in ty.iter().enumerate() {
        for ox in 0..ow {
            let g = grad[oy * ow + ox];
            rows[lo * ow + ox] += (1.0 - f) * g;
            rows[hi * ow + ox] += f * g;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (ox, &(lo, hi, f)) in tx.iter().enumerate() {
            let g = rows[y * ow + ox];
            out[y * w + lo] += (1.0 - f) * g;
            out[y * w + hi] += f * g;
        }
    }
    out
}

/// Bilinear resampling with half-pixel centres (the `align_corners = false`
/// convention).
pub fn resize_bilinear(map: &SoftMap, out_h: usize, out_w: usize) -> Result<SoftMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize target must be non-empty".into()));
    }
    let (h, w) = map.dims();
    SoftMap::from_vec(out_h, out_w, resize_plane(map.data(), h, w, out_h, out_w))
}

/// Transpose of [`resize_bilinear`] as a linear map: takes a gradient at the
/// output resolution back to `in_h × in_w`.
pub fn resize_bilinear_adjoint(grad: &SoftMap, in_h: usize, in_w: usize) -> Result<SoftMap> {
    if in_h == 0 || in_w == 0 {
        return Err(Error::Dimension("adjoint target must be non-empty".into()));
    }
    let (oh, ow) = grad.dims();
    SoftMap::from_vec(
        in_h,
        in_w,
        resize_plane_adjoint(grad.data(), in_h, in_w, oh, ow),
    )
}

/// Sum of per-channel planes divided by the channel count.
pub fn channel_mean(t: &Tensor3) -> Result<SoftMap> {
    if t.channels() == 0 {
        return Err(Error::Dimension(
            "channel mean of a 0-channel tensor".into(),
        ));
    }
    let n = t.plane_len();
    let mut acc = vec![0.0; n];
    for c in 0..t.channels() {
        for (a, v) in acc.iter_mut().zip(t.channel(c)) {
            *a += v;
        }
    }
    let k = t.channels() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    SoftMap::from_vec(t.height(), t.width(), acc)
}
