//! Joint objective: coarse-stage cross-entropies, per-layer prediction
//! cross-entropies and the surrounding-aware contrastive term.

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{bce_logit_grad, bce_soft};
use crate::ops::{resize_bilinear, resize_bilinear_adjoint, sigmoid_map};
use crate::sacloss::{labels_for_grid, sacloss_multi_layer_grad, LayerSac, SamplingMode};
use crate::scct::ScctLayout;
use crate::tensor::{Mask, SoftMap, Tensor3};

use super::config::TrainConfig;
use super::model::{ForwardOutput, OutputGrads, REFINE_LAYERS};
use super::synth::SynthSample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Coarse, edge and surrounding head terms.
    pub coarse_terms: [f64; 3],
    pub coarse: f64,
    /// One term per refinement step, deepest first.
    pub pred_terms: [f64; 3],
    pub pred: f64,
    /// Weighted contrastive term; zero when disabled.
    pub sac: f64,
    pub sac_layers: Vec<LayerSac>,
}

/// BCE of `sigmoid(upsample(logits))` against a full-resolution target and
/// its gradient with respect to the low-resolution logits.
fn upsampled_bce(logits: &SoftMap, target: &SoftMap) -> Result<(f64, SoftMap)> {
    let (h, w) = target.dims();
    let probs = sigmoid_map(&resize_bilinear(logits, h, w)?);
    let value = bce_soft(&probs, target)?;
    let g_up = bce_logit_grad(&probs, target)?;
    Ok((
        value,
        resize_bilinear_adjoint(&g_up, logits.height(), logits.width())?,
    ))
}

fn crop(t: &Tensor3, h: usize, w: usize) -> Result<Tensor3> {
    if (t.height(), t.width()) == (h, w) {
        return Ok(t.clone());
    }
    Tensor3::from_vec(
        t.channels(),
        h,
        w,
        (0..t.channels())
            .flat_map(|c| (0..h).flat_map(move |y| (0..w).map(move |x| t.get(c, y, x))))
            .collect(),
    )
}

fn crop_labels(gt: &Mask, lm: &SoftMap, h: usize, w: usize) -> Result<(Mask, SoftMap)> {
    let g = Mask::from_fn(h, w, |y, x| gt.get(y, x));
    let l = SoftMap::from_fn(h, w, |y, x| lm.get(y, x));
    Ok((g, l))
}

/// Loss value, per-layer breakdown and `(guidance index, gradient)` pairs.
type SacOutcome = (f64, Vec<LayerSac>, Vec<(usize, Tensor3)>);

/// Evaluated on each layer's fusion features. Layers are cropped at the
/// bottom/right to a multiple of their stride so the stacked transform
/// applies; cropped pixels receive no contrastive gradient.
fn sac_term(out: &ForwardOutput, sample: &SynthSample, cfg: &TrainConfig) -> Result<SacOutcome> {
    let Some(sac) = cfg.sac else {
        return Ok((0.0, Vec::new(), Vec::new()));
    };
    let mut value = 0.0;
    let mut layers = Vec::new();
    let mut grads = Vec::new();
    for (i, gl) in out.guidance.iter().enumerate() {
        let k = gl.layer;
        if sac.mode == SamplingMode::HighLayer && k != REFINE_LAYERS[0] {
            continue;
        }
        let f = &gl.fusion;
        let (h, w) = (f.height(), f.width());
        let s = match sac.mode {
            SamplingMode::Scct | SamplingMode::SubSample => ScctLayout::for_layer(k)?.stride(),
            _ => 1,
        };
        let (ch, cw) = (h - h % s, w - w % s);
        let (g_full, lm_full) = labels_for_grid(&sample.gt, sample.lm.map(), h, w)?;
        let (g_l, lm_l) = crop_labels(&g_full, &lm_full, ch, cw)?;
        let (r, g) = sacloss_multi_layer_grad(&[(crop(f, ch, cw)?, k)], &g_l, &lm_l, &sac)?;
        value += r.value;
        layers.extend(r.layers);
        let g_crop = &g[0];
        let padded = Tensor3::from_fn(f.channels(), h, w, |c, y, x| {
            if y < ch && x < cw {
                g_crop.get(c, y, x) * cfg.sac_weight
            } else {
                0.0
            }
        });
        grads.push((i, padded));
    }
    Ok((cfg.sac_weight * value, layers, grads))
}

/// Loss breakdown and the gradient with respect to every output the loss
/// reads.
pub fn joint_loss(
    out: &ForwardOutput,
    sample: &SynthSample,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, OutputGrads)> {
    let mut grads = OutputGrads::zeros_like(out);
    let gt = sample.gt.to_soft();
    let sur_target = if cfg.soft_surround_target {
        sample.lm.map().clone()
    } else {
        sample.lm.map().binarize(cfg.surround_threshold()).to_soft()
    };

    let (c0, g) = upsampled_bce(&out.o_c, &gt)?;
    grads.o_c = g;
    let (c1, g) = upsampled_bce(&out.o_edge, &sample.edge.to_soft())?;
    grads.o_edge = g;
    let (c2, g) = upsampled_bce(&out.o_sur, &sur_target)?;
    grads.o_sur = g;

    let mut pred_terms = [0.0; 3];
    for (i, term) in pred_terms.iter_mut().enumerate() {
        let (v, g) = upsampled_bce(&out.trace[i + 1], &gt)?;
        *term = v;
        grads.trace[i + 1] = g;
    }

    let (sac, sac_layers, sac_grads) = sac_term(out, sample, cfg)?;
    for (i, g) in sac_grads {
        grads.fusion[i] = g;
    }

    let coarse = c0 + c1 + c2;
    let pred = pred_terms.iter().sum::<f64>();
    Ok((
        LossBreakdown {
            total: coarse + pred + sac,
            coarse_terms: [c0, c1, c2],
            coarse,
            pred_terms,
            pred,
            sac,
            sac_layers,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_slice, max_relative_error};
    use crate::pipeline::model::{ToyArch, ToyModel};
    use crate::pipeline::synth::synth_sample;
    use crate::surround::surrounding_label;
    use crate::tensor::Tensor3;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            side: 48,
            channels: [3, 4, 5, 6],
            fusion_channels: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn disabled_contrastive_term_is_exactly_additive() {
        let mut cfg = small_cfg();
        cfg.sac = None;
        let s = synth_sample(4, 48, 0.3).unwrap();
        let m = ToyModel::init(ToyArch::from_config(&cfg), 2);
        let (l, _) = joint_loss(&m.forward(&s.image).unwrap(), &s, &cfg).unwrap();
        assert_eq!(l.sac, 0.0);
        assert_eq!(l.total, l.coarse + l.pred);
        let sum = l.coarse_terms.iter().sum::<f64>() + l.pred_terms.iter().sum::<f64>();
        assert!((l.total - sum).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_outputs_cost_almost_nothing() {
        // empty scene: every target is zero, so a strongly negative model is perfect
        let cfg = small_cfg();
        let gt = Mask::zeros(48, 48);
        let sample = SynthSample {
            image: Tensor3::filled(3, 48, 48, 0.5),
            lm: surrounding_label(&gt, cfg.sigma).unwrap(),
            edge: gt.clone(),
            gt,
        };
        let mut m = ToyModel::zeros(ToyArch::from_config(&cfg));
        for slot in [4, 5, 6] {
            m.slot_mut(slot).1[0] = -40.0;
        }
        let (l, _) = joint_loss(&m.forward(&sample.image).unwrap(), &sample, &cfg).unwrap();
        assert!(l.total <= 3e-6, "{l:?}");
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let s = synth_sample(21, 48, 0.2).unwrap();
        let arch = ToyArch::from_config(&cfg);
        let m = ToyModel::init(arch, 5);
        let out = m.forward(&s.image).unwrap();
        let (_, g_out) = joint_loss(&out, &s, &cfg).unwrap();
        let analytic = m.backward(&out, &g_out).unwrap();
        let n = m.param_count();
        let idx: Vec<usize> = (0..40).map(|i| (i * 7919) % n).collect();
        let f = |p: &[f64]| {
            let mm = ToyModel::from_params(arch, p.to_vec()).unwrap();
            joint_loss(&mm.forward(&s.image).unwrap(), &s, &cfg)
                .unwrap()
                .0
                .total
        };
        let numeric = finite_diff_slice(f, m.params(), &idx, 1e-5).unwrap();
        let picked: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        let err = max_relative_error(&picked, &numeric);
        assert!(err < 1e-4, "relative error {err}");
    }
}
