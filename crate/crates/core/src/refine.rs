//! Surrounding-aware enhancement arithmetic.
//!
//! A surrounding map is squashed into a constraint map, texture and edge
//! features are fused, the fused features are gated by the constraint map,
//! and the coarse logit map is refined layer by layer:
//! `O⁽ᵏ⁻¹⁾ = up₂(O⁽ᵏ⁾ + mean_c G_obj⁽ᵏ⁾ − mean_c G_sur⁽ᵏ⁾)` for `k = 4, 3, 2`.
//! All maps here are logits; probabilities only appear at the output.

use crate::conv::ConvLayer;
use crate::error::{Error, Result};
use crate::ops::{channel_mean, concat_channels, resize_bilinear, sigmoid_map};
use crate::tensor::{SoftMap, Tensor3};

/// Logistic squashing of the surrounding map.
pub fn constraint_map(o_sur: &SoftMap) -> SoftMap {
    sigmoid_map(o_sur)
}

/// Concatenates texture and edge features along channels and applies the
/// mixing convolution.
pub fn fuse_features(f_t: &Tensor3, f_e: &Tensor3, conv: &ConvLayer) -> Result<Tensor3> {
    let stacked = concat_channels(f_t, f_e)?;
    let out = conv.forward(&stacked)?;
    if (out.height(), out.width()) != (f_t.height(), f_t.width()) {
        return Err(Error::Dimension(format!(
            "mixing convolution changed spatial size to {}x{}",
            out.height(),
            out.width()
        )));
    }
    Ok(out)
}

/// Gates every channel of the fused features by the constraint map.
pub fn group_guidance(c_sur: &SoftMap, f_fusion: &Tensor3) -> Result<Tensor3> {
    if c_sur.dims() != (f_fusion.height(), f_fusion.width()) {
        return Err(Error::Dimension(format!(
            "constraint map {:?} vs features {:?}",
            c_sur.dims(),
            f_fusion.shape()
        )));
    }
    let mut out = f_fusion.clone();
    for ch in 0..out.channels() {
        for (v, g) in out.channel_mut(ch).iter_mut().zip(c_sur.data()) {
            *v *= g;
        }
    }
    Ok(out)
}

/// Guidance for one refinement step.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceLayer {
    pub layer: u8,
    pub g_obj: Tensor3,
    pub g_sur: Tensor3,
}

/// Per-layer object and surrounding guidance, ordered from the deepest layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuidanceBundle {
    layers: Vec<GuidanceLayer>,
}

impl GuidanceBundle {
    pub fn new(layers: Vec<GuidanceLayer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if !(2..=4).contains(&l.layer) {
                return Err(Error::Layout(format!(
                    "layer {} not in {{2, 3, 4}}",
                    l.layer
                )));
            }
            if i > 0 && l.layer >= layers[i - 1].layer {
                return Err(Error::Layout("guidance must be ordered k = 4, 3, 2".into()));
            }
            if (l.g_obj.height(), l.g_obj.width()) != (l.g_sur.height(), l.g_sur.width()) {
                return Err(Error::Dimension(format!(
                    "layer {}: object guidance {:?} vs surrounding guidance {:?}",
                    l.layer,
                    l.g_obj.shape(),
                    l.g_sur.shape()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[GuidanceLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// `mean_c g_obj − mean_c g_sur`, computed before it touches the logits so
/// that equal guidance cancels exactly.
pub fn guidance_delta(g_obj: &Tensor3, g_sur: &Tensor3) -> Result<SoftMap> {
    channel_mean(g_obj)?.zip_with(&channel_mean(g_sur)?, |a, b| a - b)
}

/// One refinement step; the result is bilinearly upsampled ×2.
pub fn refine_step(o_c_k: &SoftMap, g_obj_k: &Tensor3, g_sur_k: &Tensor3) -> Result<SoftMap> {
    let delta = guidance_delta(g_obj_k, g_sur_k)?;
    let updated = o_c_k.zip_with(&delta, |o, d| o + d)?;
    resize_bilinear(&updated, 2 * o_c_k.height(), 2 * o_c_k.width())
}

/// Folds [`refine_step`] over the bundle, returning every intermediate map:
/// `trace[0]` is the input, the last entry is the final prediction.
pub fn refine_chain_trace(o_c4: &SoftMap, bundle: &GuidanceBundle) -> Result<Vec<SoftMap>> {
    let mut trace = vec![o_c4.clone()];
    for l in bundle.layers() {
        let next = refine_step(trace.last().expect("non-empty"), &l.g_obj, &l.g_sur)?;
        trace.push(next);
    }
    Ok(trace)
}

/// Final refined logit map. An empty bundle returns the input unchanged.
pub fn refine_chain(o_c4: &SoftMap, bundle: &GuidanceBundle) -> Result<SoftMap> {
    Ok(refine_chain_trace(o_c4, bundle)?
        .pop()
        .expect("trace holds at least the input"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvShape;

    #[test]
    fn constraint_map_values() {
        let c = constraint_map(&SoftMap::zeros(3, 3));
        assert!(c.data().iter().all(|&v| v == 0.5));
        let c = constraint_map(&SoftMap::from_rows(&[&[-2.0, 40.0]]).unwrap());
        assert!((c.get(0, 0) - 0.11920).abs() < 1e-5);
        assert!(1.0 - c.get(0, 1) < 1e-12);
    }

    #[test]
    fn fusion_selecting_texture_block_is_identity() {
        let ft = Tensor3::from_fn(2, 4, 4, |c, y, x| (c * 16 + y * 4 + x) as f64);
        let fe = Tensor3::from_fn(2, 4, 4, |c, y, x| -((c + y + x) as f64));
        let shape = ConvShape::same(4, 2, 3);
        let mut conv = ConvLayer::zeros(shape);
        for o in 0..2 {
            // centre tap of input channel o
            conv.weights[((o * 4 + o) * 3 + 1) * 3 + 1] = 1.0;
        }
        assert_eq!(fuse_features(&ft, &fe, &conv).unwrap(), ft);
        let zero = fuse_features(&ft, &fe, &ConvLayer::zeros(shape)).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert!(fuse_features(&ft, &Tensor3::zeros(2, 3, 4), &conv).is_err());
    }

    #[test]
    fn guidance_gating() {
        let f = Tensor3::from_fn(3, 4, 4, |c, y, x| (c as f64 - 1.0) * (y * 4 + x) as f64);
        assert_eq!(group_guidance(&SoftMap::filled(4, 4, 1.0), &f).unwrap(), f);
        let z = group_guidance(&SoftMap::zeros(4, 4), &f).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let half = SoftMap::from_fn(4, 4, |_, x| if x < 2 { 1.0 } else { 0.0 });
        let g = group_guidance(&half, &f).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 2..4 {
                    assert_eq!(g.get(c, y, x), 0.0);
                }
                for x in 0..2 {
                    assert_eq!(g.get(c, y, x), f.get(c, y, x));
                }
            }
        }
        assert!(group_guidance(&SoftMap::zeros(3, 4), &f).is_err());
    }

    #[test]
    fn cancellation_is_exact() {
        let o = SoftMap::from_fn(4, 4, |y, x| ((y * 4 + x) as f64 * 0.3).sin());
        let g = Tensor3::from_fn(3, 4, 4, |c, y, x| ((c + y * x) as f64).cos());
        let out = refine_step(&o, &g, &g).unwrap();
        assert_eq!(out, resize_bilinear(&o, 8, 8).unwrap());
        let zero = Tensor3::zeros(2, 4, 4);
        assert_eq!(
            refine_step(&o, &zero, &zero).unwrap(),
            resize_bilinear(&o, 8, 8).unwrap()
        );
    }

    #[test]
    fn empty_bundle_is_identity() {
        let o = SoftMap::from_fn(2, 2, |y, x| (y + x) as f64);
        assert_eq!(refine_chain(&o, &GuidanceBundle::default()).unwrap(), o);
    }

    #[test]
    fn bundle_ordering_is_enforced() {
        let t = Tensor3::zeros(1, 2, 2);
        let l = |k| GuidanceLayer {
            layer: k,
            g_obj: t.clone(),
            g_sur: t.clone(),
        };
        assert!(GuidanceBundle::new(vec![l(4), l(3), l(2)]).is_ok());
        assert!(GuidanceBundle::new(vec![l(3), l(4)]).is_err());
        assert!(GuidanceBundle::new(vec![l(5)]).is_err());
    }
}
