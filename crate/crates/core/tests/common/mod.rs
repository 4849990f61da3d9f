//! Plain-loop reference implementations and random instance generators
//! shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use surround_cod::sacloss::SignConvention;
use surround_cod::{Mask, SoftMap, Tensor3};

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Random filled ellipse, guaranteed non-empty.
pub fn random_ellipse(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    let cy = rng.gen_range(0.0..h as f64);
    let cx = rng.gen_range(0.0..w as f64);
    let ry = rng.gen_range(1.0..(h as f64 / 2.0).max(1.5));
    let rx = rng.gen_range(1.0..(w as f64 / 2.0).max(1.5));
    let mut m = Mask::from_fn(h, w, |y, x| {
        ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2) <= 1.0
    });
    if m.count_ones() == 0 {
        m.set(cy as usize, cx as usize, true);
    }
    m
}

pub fn random_features(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
    Tensor3::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Prediction correlated with `gt`: a noisy, partially wrong soft map.
pub fn random_prediction(rng: &mut ChaCha8Rng, gt: &Mask) -> SoftMap {
    let (h, w) = gt.dims();
    let flip = rng.gen_range(0.0..0.3);
    SoftMap::from_fn(h, w, |y, x| {
        let base = if gt.get(y, x) { 0.8 } else { 0.15 };
        let v: f64 = if rng.gen_bool(flip) { 1.0 - base } else { base };
        (v + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0)
    })
}

fn euclid(t: &Tensor3, p: (usize, usize), q: (usize, usize)) -> f64 {
    let mut s = 0.0;
    for c in 0..t.channels() {
        let d = t.get(c, p.0, p.1) - t.get(c, q.0, q.1);
        s += d * d;
    }
    s.sqrt()
}

/// Double-loop contrastive loss on a map and labels of the same size.
/// `None` for a degenerate partition.
pub fn sac_oracle(
    f: &Tensor3,
    gt: &Mask,
    lm: &SoftMap,
    threshold: f64,
    margin: f64,
    sign: SignConvention,
) -> Option<f64> {
    let (h, w) = gt.dims();
    let mut s = Vec::new();
    let mut c = Vec::new();
    let mut b = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                c.push((y, x));
            } else if lm.get(y, x) >= threshold {
                s.push((y, x));
            } else {
                b.push((y, x));
            }
        }
    }
    if s.is_empty() || c.is_empty() || b.is_empty() {
        return None;
    }
    let mut sb = 0.0;
    let mut sc = 0.0;
    for &p in &s {
        for &q in &b {
            sb += euclid(f, p, q);
        }
        for &q in &c {
            sc += euclid(f, p, q);
        }
    }
    let mean_sb = sb / (s.len() * b.len()) as f64;
    let mean_sc = sc / (s.len() * c.len()) as f64;
    Some(match sign {
        SignConvention::PaperLiteral => -mean_sb + mean_sc + margin,
        SignConvention::ProseIntent => (mean_sb - mean_sc + margin).max(0.0),
    })
}

pub fn mae_oracle(o: &SoftMap, gt: &Mask) -> f64 {
    let (h, w) = gt.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            s += (o.get(y, x) - if gt.get(y, x) { 1.0 } else { 0.0 }).abs();
        }
    }
    s / (h * w) as f64
}

/// Weighted F-measure from its reference definition, with the nearest
/// foreground pixel found by exhaustive search in column-major order.
pub fn wfm_oracle(o: &SoftMap, gt: &Mask) -> Option<f64> {
    let (h, w) = gt.dims();
    let g = |y: usize, x: usize| if gt.get(y, x) { 1.0 } else { 0.0 };
    let mut fg = Vec::new();
    for x in 0..w {
        for y in 0..h {
            if gt.get(y, x) {
                fg.push((y, x));
            }
        }
    }
    if fg.is_empty() {
        return None;
    }
    let mut e = vec![vec![0.0; w]; h];
    let mut dist = vec![vec![0.0; w]; h];
    let mut et = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            e[y][x] = (o.get(y, x) - g(y, x)).abs();
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            let mut at = (0, 0);
            for &(fy, fx) in &fg {
                let d = ((fy as f64 - y as f64).powi(2) + (fx as f64 - x as f64).powi(2)).sqrt();
                if d < best {
                    best = d;
                    at = (fy, fx);
                }
            }
            dist[y][x] = best;
            et[y][x] = e[at.0][at.1];
        }
    }
    let sigma: f64 = 5.0;
    let mut k = [[0.0; 7]; 7];
    let mut ks = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            ks += *v;
        }
    }
    let mut tp_w_err = 0.0;
    let mut fp = 0.0;
    let mut nfg = 0.0;
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                let mut ea = 0.0;
                for i in 0..7 {
                    for j in 0..7 {
                        let (sy, sx) = (y as isize + i as isize - 3, x as isize + j as isize - 3);
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            ea += k[i][j] / ks * et[sy as usize][sx as usize];
                        }
                    }
                }
                tp_w_err += e[y][x].min(ea);
                nfg += 1.0;
            } else {
                let b = 2.0 - ((0.5f64).ln() / 5.0 * dist[y][x]).exp();
                fp += e[y][x] * b;
            }
        }
    }
    let eps = f64::EPSILON;
    let tp = nfg - tp_w_err;
    let r = 1.0 - tp_w_err / nfg;
    let p = tp / (eps + tp + fp);
    Some(2.0 * r * p / (eps + r + p))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn ssim_block(o: &[f64], g: &[f64]) -> f64 {
    let n = o.len() as f64;
    let eps = f64::EPSILON;
    let x = o.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    for i in 0..o.len() {
        sx += (o[i] - x).powi(2);
        sy += (g[i] - y).powi(2);
        sxy += (o[i] - x) * (g[i] - y);
    }
    let d = n - 1.0 + eps;
    let alpha = 4.0 * x * y * (sxy / d);
    let beta = (x * x + y * y) * (sx / d + sy / d);
    if alpha != 0.0 {
        alpha / (beta + eps)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Structure measure with α = 0.5.
pub fn s_oracle(o: &SoftMap, gt: &Mask) -> f64 {
    let (h, w) = gt.dims();
    let n = (h * w) as f64;
    let ones = gt.count_ones() as f64;
    let mean_o = o.data().iter().sum::<f64>() / n;
    if ones == 0.0 {
        return 1.0 - mean_o;
    }
    if ones == n {
        return mean_o;
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                fg.push(o.get(y, x));
            } else {
                bg.push(1.0 - o.get(y, x));
            }
        }
    }
    let eps = f64::EPSILON;
    let score = |v: &[f64]| {
        let (m, s) = mean_std(v);
        2.0 * m / (m * m + 1.0 + s + eps)
    };
    let u = ones / n;
    let s_obj = u * score(&fg) + (1.0 - u) * score(&bg);

    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
            }
        }
    }
    let cx = (sx / ones).round() as usize;
    let cy = (sy / ones).round() as usize;
    let mut s_reg = 0.0;
    let mut used = 0.0;
    for (qi, (y0, y1, x0, x1)) in [
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    ]
    .into_iter()
    .enumerate()
    {
        let weight = if qi < 3 {
            ((y1 - y0) * (x1 - x0)) as f64 / n
        } else {
            1.0 - used
        };
        if qi < 3 {
            used += weight;
        }
        if y1 <= y0 || x1 <= x0 {
            continue;
        }
        let mut ob = Vec::new();
        let mut gb = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                ob.push(o.get(y, x));
                gb.push(if gt.get(y, x) { 1.0 } else { 0.0 });
            }
        }
        s_reg += weight * ssim_block(&ob, &gb);
    }
    (0.5 * s_obj + 0.5 * s_reg).max(0.0)
}

/// Enhanced-alignment measure with the adaptive `2·mean` threshold.
pub fn e_oracle(o: &SoftMap, gt: &Mask) -> f64 {
    let (h, w) = gt.dims();
    let n = (h * w) as f64;
    let t = (2.0 * o.data().iter().sum::<f64>() / n).min(1.0);
    let fm: Vec<f64> = o
        .data()
        .iter()
        .map(|&v| if v >= t && v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let g: Vec<f64> = gt.data().iter().map(|&v| f64::from(v)).collect();
    let ones: f64 = g.iter().sum();
    let enhanced: Vec<f64> = if ones == 0.0 {
        fm.iter().map(|v| 1.0 - v).collect()
    } else if ones == n {
        fm.clone()
    } else {
        let mf = fm.iter().sum::<f64>() / n;
        let mg = ones / n;
        fm.iter()
            .zip(&g)
            .map(|(a, b)| {
                let (a, b) = (a - mf, b - mg);
                let align = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                (align + 1.0) * (align + 1.0) / 4.0
            })
            .collect()
    };
    enhanced.iter().sum::<f64>() / n
}

/// Bilinear ×2 upsampling with half-pixel centres and edge clamping.
pub fn upsample2_oracle(m: &SoftMap) -> SoftMap {
    let (h, w) = m.dims();
    let src = |v: usize, n: usize| -> (usize, usize, f64) {
        let p = ((v as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let i0 = (p.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    SoftMap::from_fn(2 * h, 2 * w, |y, x| {
        let (y0, y1, fy) = src(y, h);
        let (x0, x1, fx) = src(x, w);
        let top = m.get(y0, x0) * (1.0 - fx) + m.get(y0, x1) * fx;
        let bot = m.get(y1, x0) * (1.0 - fx) + m.get(y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}
