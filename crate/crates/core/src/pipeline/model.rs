//! Toy encoder with coarse/edge/surrounding heads and the layer-by-layer
//! refinement decoder, with a hand-written backward pass.
//!
//! Shapes for a `side × side` image and channels `[c1, c2, c3, c4]`:
//!
//! | tensor            | shape                         |
//! |-------------------|-------------------------------|
//! | `f_k`, k = 1..4   | `c_k × side/2^k × side/2^k`   |
//! | coarse logits     | `side/16` (from `f_4`)        |
//! | edge logits       | `side/2` (from `f_1`)         |
//! | surround logits   | `side/4` (from `f_2`)         |
//! | refined `O⁽ᵏ⁻¹⁾`  | `side/2^(k−1)`, k = 4, 3, 2   |
//! | final logits      | `side` (bilinear from `O⁽¹⁾`) |

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d_backward, conv2d_forward, ConvShape};
use crate::error::{Error, Result};
use crate::ops::{
    concat_channels, downsample_avg, downsample_avg_tensor, downsample_avg_tensor_adjoint,
    resize_bilinear, resize_bilinear_adjoint,
};
use crate::refine::{
    constraint_map, group_guidance, refine_chain_trace, GuidanceBundle, GuidanceLayer,
};
use crate::tensor::{SoftMap, Tensor3};

use super::config::TrainConfig;

/// Refinement layers, deepest first.
pub const REFINE_LAYERS: [u8; 3] = [4, 3, 2];

const HEAD_COARSE: usize = 4;
const HEAD_EDGE: usize = 5;
const HEAD_SURROUND: usize = 6;

fn fuse_slot(k: u8) -> usize {
    7 + 2 * (4 - k as usize)
}

fn obj_slot(k: u8) -> usize {
    8 + 2 * (4 - k as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArch {
    pub side: usize,
    pub channels: [usize; 4],
    pub fusion_channels: usize,
}

impl ToyArch {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            side: cfg.side,
            channels: cfg.channels,
            fusion_channels: cfg.fusion_channels,
        }
    }

    /// Convolutions in parameter order.
    pub fn shapes(&self) -> Vec<ConvShape> {
        let [c1, c2, c3, c4] = self.channels;
        let cf = self.fusion_channels;
        let down = |i, o| ConvShape {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        vec![
            down(3, c1),
            down(c1, c2),
            down(c2, c3),
            down(c3, c4),
            ConvShape::same(c4, 1, 1),
            ConvShape::same(c1, 1, 1),
            ConvShape::same(c2, 1, 1),
            ConvShape::same(c4 + c1, cf, 3),
            ConvShape::same(c4, cf, 1),
            ConvShape::same(c3 + c1, cf, 3),
            ConvShape::same(c3, cf, 1),
            ConvShape::same(c2 + c1, cf, 3),
            ConvShape::same(c2, cf, 1),
        ]
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::new();
        for s in self.shapes() {
            out.push(acc);
            acc += s.param_len();
        }
        out.push(acc);
        out
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(ConvShape::param_len).sum()
    }

    pub fn layer_side(&self, k: u8) -> usize {
        self.side >> k
    }
}

/// Guidance computed for one refinement layer.
#[derive(Debug, Clone)]
pub struct LayerGuidance {
    pub layer: u8,
    /// Pooled edge features fed into the fusion.
    pub edge_features: Tensor3,
    pub fusion: Tensor3,
    pub constraint: SoftMap,
    pub g_obj: Tensor3,
    pub g_sur: Tensor3,
}

/// Every intermediate needed by the loss and the backward pass. Maps are
/// logits.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub input: Tensor3,
    /// `f_1 .. f_4`.
    pub features: Vec<Tensor3>,
    pub o_c: SoftMap,
    pub o_edge: SoftMap,
    pub o_sur: SoftMap,
    /// `O⁽⁴⁾ = o_c`, then the output of each refinement step.
    pub trace: Vec<SoftMap>,
    pub o_f: SoftMap,
    pub guidance: Vec<LayerGuidance>,
}

impl ForwardOutput {
    /// Encoder features of layer `k` (1-based).
    pub fn layer_features(&self, k: u8) -> &Tensor3 {
        &self.features[k as usize - 1]
    }
}

/// Gradients of a scalar loss with respect to the quantities the loss reads.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub o_c: SoftMap,
    pub o_edge: SoftMap,
    pub o_sur: SoftMap,
    /// Aligned with [`ForwardOutput::trace`]; entry 0 adds to `o_c`.
    pub trace: Vec<SoftMap>,
    /// Aligned with [`ForwardOutput::features`].
    pub features: Vec<Tensor3>,
    /// Aligned with [`ForwardOutput::guidance`].
    pub fusion: Vec<Tensor3>,
}

impl OutputGrads {
    pub fn zeros_like(out: &ForwardOutput) -> Self {
        let z = |m: &SoftMap| SoftMap::zeros(m.height(), m.width());
        Self {
            o_c: z(&out.o_c),
            o_edge: z(&out.o_edge),
            o_sur: z(&out.o_sur),
            trace: out.trace.iter().map(z).collect(),
            features: out.features.iter().map(zeros3).collect(),
            fusion: out.guidance.iter().map(|g| zeros3(&g.fusion)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub arch: ToyArch,
    params: Vec<f64>,
}

fn zeros3(t: &Tensor3) -> Tensor3 {
    Tensor3::zeros(t.channels(), t.height(), t.width())
}

fn add_map(dst: &mut SoftMap, src: &SoftMap) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn add_tensor(dst: &mut Tensor3, src: &Tensor3) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn tanh_backward(act: &Tensor3, grad: &Tensor3) -> Tensor3 {
    let mut out = grad.clone();
    for (g, a) in out.data_mut().iter_mut().zip(act.data()) {
        *g *= 1.0 - a * a;
    }
    out
}

impl ToyModel {
    /// Xavier-uniform weights and zero biases.
    pub fn init(arch: ToyArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        for s in arch.shapes() {
            let kk = (s.kernel * s.kernel) as f64;
            let limit = (6.0 / ((s.in_channels as f64 + s.out_channels as f64) * kk)).sqrt();
            params.extend((0..s.weight_len()).map(|_| rng.gen_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, s.out_channels));
        }
        Self { arch, params }
    }

    pub fn zeros(arch: ToyArch) -> Self {
        Self {
            params: vec![0.0; arch.param_count()],
            arch,
        }
    }

    pub fn from_params(arch: ToyArch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(weights, bias)` of convolution `slot`.
    pub fn slot(&self, slot: usize) -> (&[f64], &[f64]) {
        let shapes = self.arch.shapes();
        let off = self.arch.offsets()[slot];
        let wl = shapes[slot].weight_len();
        let bl = shapes[slot].out_channels;
        (
            &self.params[off..off + wl],
            &self.params[off + wl..off + wl + bl],
        )
    }

    pub fn slot_mut(&mut self, slot: usize) -> (&mut [f64], &mut [f64]) {
        let shapes = self.arch.shapes();
        let off = self.arch.offsets()[slot];
        let wl = shapes[slot].weight_len();
        let bl = shapes[slot].out_channels;
        let (w, rest) = self.params[off..off + wl + bl].split_at_mut(wl);
        (w, rest)
    }

    fn conv(&self, slot: usize, x: &Tensor3) -> Result<Tensor3> {
        let shape = self.arch.shapes()[slot];
        let (w, b) = self.slot(slot);
        conv2d_forward(x, &shape, w, b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::from_params(m.arch, m.params)
    }

    pub fn forward(&self, image: &Tensor3) -> Result<ForwardOutput> {
        let side = self.arch.side;
        if image.shape() != (3, side, side) {
            return Err(Error::Config(format!(
                "model expects a 3x{side}x{side} image, got {:?}",
                image.shape()
            )));
        }
        let mut features: Vec<Tensor3> = Vec::with_capacity(4);
        for stage in 0..4 {
            let x = if stage == 0 {
                image
            } else {
                &features[stage - 1]
            };
            features.push(self.conv(stage, x)?.map(f64::tanh));
        }
        let o_c = self.conv(HEAD_COARSE, &features[3])?.channel_map(0);
        let o_edge = self.conv(HEAD_EDGE, &features[0])?.channel_map(0);
        let o_sur = self.conv(HEAD_SURROUND, &features[1])?.channel_map(0);

        let mut guidance = Vec::with_capacity(3);
        for k in REFINE_LAYERS {
            let f_k = &features[k as usize - 1];
            let edge_features = downsample_avg_tensor(&features[0], 1 << (k - 1))?;
            let fusion = self
                .conv(fuse_slot(k), &concat_channels(f_k, &edge_features)?)?
                .map(f64::tanh);
            let constraint = constraint_map(&downsample_avg(&o_sur, 1 << (k - 2))?);
            let g_sur = group_guidance(&constraint, &fusion)?;
            let g_obj = self.conv(obj_slot(k), f_k)?;
            guidance.push(LayerGuidance {
                layer: k,
                edge_features,
                fusion,
                constraint,
                g_obj,
                g_sur,
            });
        }
        let bundle = GuidanceBundle::new(
            guidance
                .iter()
                .map(|g| GuidanceLayer {
                    layer: g.layer,
                    g_obj: g.g_obj.clone(),
                    g_sur: g.g_sur.clone(),
                })
                .collect(),
        )?;
        let trace = refine_chain_trace(&o_c, &bundle)?;
        let o_f = resize_bilinear(trace.last().expect("non-empty"), side, side)?;
        Ok(ForwardOutput {
            input: image.clone(),
            features,
            o_c,
            o_edge,
            o_sur,
            trace,
            o_f,
            guidance,
        })
    }

    /// Parameter gradient given the loss gradients with respect to the
    /// forward outputs. `o_f` is not a separate input: its gradient must be
    /// folded into the last trace entry.
    pub fn backward(&self, out: &ForwardOutput, grads: &OutputGrads) -> Result<Vec<f64>> {
        let shapes = self.arch.shapes();
        let offsets = self.arch.offsets();
        let mut g_params = vec![0.0; self.params.len()];
        let mut g_feat = grads.features.clone();
        let mut g_sur_logits = grads.o_sur.clone();

        let mut accumulate = |slot: usize, x: &Tensor3, g_out: &Tensor3| -> Result<Tensor3> {
            let (w, _) = self.slot(slot);
            let cg = conv2d_backward(x, &shapes[slot], w, g_out)?;
            let off = offsets[slot];
            let wl = shapes[slot].weight_len();
            for (d, s) in g_params[off..off + wl].iter_mut().zip(&cg.weights) {
                *d += s;
            }
            for (d, s) in g_params[off + wl..offsets[slot + 1]]
                .iter_mut()
                .zip(&cg.bias)
            {
                *d += s;
            }
            Ok(cg.input)
        };

        // refinement chain, last step first
        let mut g_trace = grads.trace.clone();
        for (i, gl) in out.guidance.iter().enumerate().rev() {
            let (h, w) = out.trace[i].dims();
            let g_pre = resize_bilinear_adjoint(&g_trace[i + 1], h, w)?;
            add_map(&mut g_trace[i], &g_pre);
            let k = gl.layer;
            let cf = gl.fusion.channels() as f64;
            let g_obj = Tensor3::from_fn(gl.g_obj.channels(), h, w, |_, y, x| g_pre.get(y, x) / cf);
            let g_gsur = g_obj.scale(-1.0);

            let f_k = &out.features[k as usize - 1];
            let gf = accumulate(obj_slot(k), f_k, &g_obj)?;
            add_tensor(&mut g_feat[k as usize - 1], &gf);

            // G_sur = C ⊙ F
            let mut g_fusion = g_gsur.clone();
            let mut g_constraint = SoftMap::zeros(h, w);
            for ch in 0..g_fusion.channels() {
                let fch = gl.fusion.channel(ch);
                for (p, gv) in g_fusion.channel_mut(ch).iter_mut().enumerate() {
                    g_constraint.data_mut()[p] += *gv * fch[p];
                    *gv *= gl.constraint.data()[p];
                }
            }
            add_tensor(&mut g_fusion, &grads.fusion[i]);
            let g_pooled = g_constraint.zip_with(&gl.constraint, |g, c| g * c * (1.0 - c))?;
            let spread = downsample_avg_tensor_adjoint(&g_pooled.to_tensor(), 1 << (k - 2));
            add_map(&mut g_sur_logits, &spread.channel_map(0));

            let g_z = tanh_backward(&gl.fusion, &g_fusion);
            let stacked = concat_channels(f_k, &gl.edge_features)?;
            let g_stacked = accumulate(fuse_slot(k), &stacked, &g_z)?;
            let ck = f_k.channels();
            add_tensor(
                &mut g_feat[k as usize - 1],
                &g_stacked.slice_channels(0, ck)?,
            );
            let g_edge = g_stacked.slice_channels(ck, gl.edge_features.channels())?;
            add_tensor(
                &mut g_feat[0],
                &downsample_avg_tensor_adjoint(&g_edge, 1 << (k - 1)),
            );
        }
        let mut g_oc = grads.o_c.clone();
        add_map(&mut g_oc, &g_trace[0]);

        let g = accumulate(HEAD_COARSE, &out.features[3], &g_oc.to_tensor())?;
        add_tensor(&mut g_feat[3], &g);
        let g = accumulate(HEAD_EDGE, &out.features[0], &grads.o_edge.to_tensor())?;
        add_tensor(&mut g_feat[0], &g);
        let g = accumulate(HEAD_SURROUND, &out.features[1], &g_sur_logits.to_tensor())?;
        add_tensor(&mut g_feat[1], &g);

        for stage in (0..4).rev() {
            let g_z = tanh_backward(&out.features[stage], &g_feat[stage]);
            let x = if stage == 0 {
                &out.input
            } else {
                &out.features[stage - 1]
            };
            let g_x = accumulate(stage, x, &g_z)?;
            if stage > 0 {
                add_tensor(&mut g_feat[stage - 1], &g_x);
            }
        }
        Ok(g_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sigmoid_map;

    fn arch() -> ToyArch {
        ToyArch {
            side: 32,
            channels: [2, 3, 4, 5],
            fusion_channels: 3,
        }
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = ToyModel::zeros(arch());
        let img = Tensor3::from_fn(3, 32, 32, |c, y, x| ((c + y * x) % 7) as f64 / 7.0);
        let out = m.forward(&img).unwrap();
        for map in [&out.o_c, &out.o_edge, &out.o_sur, &out.o_f] {
            assert!(sigmoid_map(map).data().iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn output_shapes() {
        let m = ToyModel::init(arch(), 3);
        let out = m.forward(&Tensor3::filled(3, 32, 32, 0.3)).unwrap();
        for k in 1..=4u8 {
            let f = out.layer_features(k);
            assert_eq!((f.height(), f.width()), (32 >> k, 32 >> k));
        }
        assert_eq!(out.o_c.dims(), (2, 2));
        assert_eq!(out.o_edge.dims(), (16, 16));
        assert_eq!(out.o_sur.dims(), (8, 8));
        let dims: Vec<_> = out.trace.iter().map(SoftMap::dims).collect();
        assert_eq!(dims, vec![(2, 2), (4, 4), (8, 8), (16, 16)]);
        assert_eq!(out.o_f.dims(), (32, 32));
        assert!(m.forward(&Tensor3::zeros(3, 16, 16)).is_err());
    }

    #[test]
    fn param_layout_is_contiguous() {
        let a = arch();
        let m = ToyModel::init(a, 1);
        assert_eq!(m.param_count(), a.param_count());
        let total: usize = (0..a.shapes().len())
            .map(|s| {
                let (w, b) = m.slot(s);
                w.len() + b.len()
            })
            .sum();
        assert_eq!(total, m.param_count());
        let (_, b) = m.slot(HEAD_COARSE);
        assert_eq!(b, &[0.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ToyModel::init(arch(), 9);
        let p = dir.path().join("model.json");
        m.save(&p).unwrap();
        assert_eq!(ToyModel::load(&p).unwrap(), m);
    }
}
