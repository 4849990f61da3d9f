//! Surrounding-aware contrastive loss.
//!
//! Pixels are split into surrounding anchors `S`, object pixels `C` and
//! background pixels `B`. Each anchor is paired with every background pixel
//! (same-class pair) and every object pixel (different-class pair), and the
//! loss combines the mean Euclidean distances of the two pair families:
//!
//! * [`SignConvention::ProseIntent`] (default):
//!   `max(mean_SB ‖f_s − f_b‖ − mean_SC ‖f_s − f_c‖ + margin, 0)`, which pulls
//!   anchors toward the background and pushes them away from the object.
//! * [`SignConvention::PaperLiteral`]:
//!   `−mean_SB ‖f_s − f_b‖ + mean_SC ‖f_s − f_c‖ + margin`, the signs exactly
//!   as the pair distances are defined (`Dist₊ = −‖·‖`, `Dist₋ = ‖·‖`).
//!
//! Four sampling modes decide which maps the loss is evaluated on; see
//! [`SamplingMode`].

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{downsample_avg, downsample_max};
use crate::scct::{scct_forward, scct_inverse, ScctLayout};
use crate::tensor::{Mask, SoftMap, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Every layer, every pixel pair at the layer's native resolution.
    FullPairwise,
    /// Only the deepest layer supplied.
    HighLayer,
    /// SCCT separation, but only the first of the `s²` parts is used.
    SubSample,
    /// SCCT separation and channel stacking; the loss runs on the compact map.
    Scct,
}

impl SamplingMode {
    pub const ALL: [SamplingMode; 4] = [
        SamplingMode::FullPairwise,
        SamplingMode::HighLayer,
        SamplingMode::SubSample,
        SamplingMode::Scct,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingMode::FullPairwise => "full",
            SamplingMode::HighLayer => "high",
            SamplingMode::SubSample => "sub",
            SamplingMode::Scct => "scct",
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SamplingMode::FullPairwise),
            "high" => Ok(SamplingMode::HighLayer),
            "sub" => Ok(SamplingMode::SubSample),
            "scct" => Ok(SamplingMode::Scct),
            other => Err(Error::Parameter(format!("unknown sampling mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignConvention {
    /// `mean_SC − mean_SB + margin`, unclamped.
    PaperLiteral,
    /// `max(mean_SB − mean_SC + margin, 0)`.
    ProseIntent,
}

impl FromStr for SignConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" | "paper-literal" => Ok(SignConvention::PaperLiteral),
            "hinge" | "prose-intent" => Ok(SignConvention::ProseIntent),
            other => Err(Error::Parameter(format!(
                "unknown sign convention {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub margin: f64,
    pub surround_threshold: f64,
    pub mode: SamplingMode,
    pub sign_convention: SignConvention,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            margin: 0.0,
            surround_threshold: 0.1,
            mode: SamplingMode::Scct,
            sign_convention: SignConvention::ProseIntent,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Parameter(format!(
                "margin {} must be >= 0",
                self.margin
            )));
        }
        check_threshold(self.surround_threshold)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Parameter(format!(
            "threshold {t} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Disjoint cover of a `height × width` grid by surrounding, object and
/// background pixel sets (flat row-major indices, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    height: usize,
    width: usize,
    surrounding: Vec<usize>,
    object: Vec<usize>,
    background: Vec<usize>,
}

impl RegionPartition {
    /// Builds a partition from explicit sets, checking that they are
    /// disjoint and cover the grid.
    pub fn from_sets(
        height: usize,
        width: usize,
        mut surrounding: Vec<usize>,
        mut object: Vec<usize>,
        mut background: Vec<usize>,
    ) -> Result<Self> {
        let n = height * width;
        let mut seen = vec![false; n];
        for &i in surrounding.iter().chain(&object).chain(&background) {
            if i >= n {
                return Err(Error::Validation(format!(
                    "pixel {i} outside {height}x{width}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("pixel {i} assigned twice")));
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::Validation(format!("pixel {i} is unassigned")));
        }
        surrounding.sort_unstable();
        object.sort_unstable();
        background.sort_unstable();
        Ok(Self {
            height,
            width,
            surrounding,
            object,
            background,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn surrounding(&self) -> &[usize] {
        &self.surrounding
    }

    pub fn object(&self) -> &[usize] {
        &self.object
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.surrounding.len(),
            self.object.len(),
            self.background.len(),
        )
    }

    /// The loss is undefined unless all three sets are non-empty.
    pub fn is_degenerate(&self) -> bool {
        self.surrounding.is_empty() || self.object.is_empty() || self.background.is_empty()
    }

    /// Number of anchor/partner distance evaluations for one loss value.
    pub fn distance_evals(&self) -> usize {
        self.surrounding.len() * (self.object.len() + self.background.len())
    }
}

/// `C = {gt = 1}`, `S = {gt = 0 ∧ lm ≥ threshold}`, `B` = the rest.
///
/// Degenerate partitions are returned as-is; callers decide how to treat
/// them (see [`RegionPartition::is_degenerate`]).
pub fn partition_regions(gt: &Mask, lm: &SoftMap, threshold: f64) -> Result<RegionPartition> {
    check_threshold(threshold)?;
    if gt.dims() != lm.dims() {
        return Err(Error::Dimension(format!(
            "mask {:?} vs label {:?}",
            gt.dims(),
            lm.dims()
        )));
    }
    let (mut s, mut c, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (&g, &l)) in gt.data().iter().zip(lm.data()).enumerate() {
        if g == 1 {
            c.push(i);
        } else if l >= threshold {
            s.push(i);
        } else {
            b.push(i);
        }
    }
    Ok(RegionPartition {
        height: gt.height(),
        width: gt.width(),
        surrounding: s,
        object: c,
        background: b,
    })
}

/// Euclidean distance, negated for same-class pairs.
pub fn pair_distance(f_i: &[f64], f_j: &[f64], positive: bool) -> Result<f64> {
    if f_i.len() != f_j.len() {
        return Err(Error::Dimension(format!(
            "feature lengths {} and {}",
            f_i.len(),
            f_j.len()
        )));
    }
    let d = euclid(f_i, f_j);
    Ok(if positive { -d } else { d })
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Value and its constituent terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacTerms {
    pub value: f64,
    /// Mean surrounding–background distance.
    pub mean_surround_background: f64,
    /// Mean surrounding–object distance.
    pub mean_surround_object: f64,
    pub margin: f64,
    pub distance_evals: usize,
    pub degenerate: bool,
}

impl SacTerms {
    fn skipped(margin: f64) -> Self {
        Self {
            value: 0.0,
            mean_surround_background: 0.0,
            mean_surround_object: 0.0,
            margin,
            distance_evals: 0,
            degenerate: true,
        }
    }
}

/// Pixel-major copy of the features: `out[p·C + c]`.
fn gather(fusion: &Tensor3) -> Vec<f64> {
    let (c, h, w) = fusion.shape();
    let n = h * w;
    let mut out = vec![0.0; n * c];
    for ch in 0..c {
        for (p, &v) in fusion.channel(ch).iter().enumerate() {
            out[p * c + ch] = v;
        }
    }
    out
}

fn check_inputs(fusion: &Tensor3, partition: &RegionPartition, cfg: &SacConfig) -> Result<()> {
    cfg.validate()?;
    if (fusion.height(), fusion.width()) != partition.dims() {
        return Err(Error::Dimension(format!(
            "features {:?} vs partition {:?}",
            fusion.shape(),
            partition.dims()
        )));
    }
    if fusion.channels() == 0 {
        return Err(Error::Dimension("features have no channels".into()));
    }
    Ok(())
}

/// Signs applied to the two mean-distance terms, or `None` when the hinge
/// is inactive.
fn term_signs(cfg: &SacConfig, raw: f64) -> Option<(f64, f64)> {
    match cfg.sign_convention {
        SignConvention::PaperLiteral => Some((-1.0, 1.0)),
        SignConvention::ProseIntent if raw > 0.0 => Some((1.0, -1.0)),
        SignConvention::ProseIntent => None,
    }
}

fn evaluate(
    fusion: &Tensor3,
    partition: &RegionPartition,
    cfg: &SacConfig,
    want_grad: bool,
) -> Result<(SacTerms, Option<Tensor3>)> {
    check_inputs(fusion, partition, cfg)?;
    let (c, h, w) = fusion.shape();
    if partition.is_degenerate() {
        let (ns, nc, nb) = partition.counts();
        warn!("degenerate partition on {h}x{w} grid (S={ns}, C={nc}, B={nb}); loss skipped");
        let grad = want_grad.then(|| Tensor3::zeros(c, h, w));
        return Ok((SacTerms::skipped(cfg.margin), grad));
    }
    let feats = gather(fusion);
    let vec_at = |p: usize| &feats[p * c..(p + 1) * c];
    let (s_set, c_set, b_set) = (
        &partition.surrounding,
        &partition.object,
        &partition.background,
    );

    let per_anchor: Vec<(f64, f64)> = s_set
        .par_iter()
        .map(|&s| {
            let fs = vec_at(s);
            let sb: f64 = b_set.iter().map(|&b| euclid(fs, vec_at(b))).sum();
            let sc: f64 = c_set.iter().map(|&o| euclid(fs, vec_at(o))).sum();
            (sb, sc)
        })
        .collect();
    let (mut sum_sb, mut sum_sc) = (0.0, 0.0);
    for (sb, sc) in &per_anchor {
        sum_sb += sb;
        sum_sc += sc;
    }
    let ns = s_set.len() as f64;
    let mean_sb = sum_sb / (ns * b_set.len() as f64);
    let mean_sc = sum_sc / (ns * c_set.len() as f64);

    let (value, raw) = match cfg.sign_convention {
        SignConvention::PaperLiteral => {
            let v = -mean_sb + mean_sc + cfg.margin;
            (v, v)
        }
        SignConvention::ProseIntent => {
            let raw = mean_sb - mean_sc + cfg.margin;
            (raw.max(0.0), raw)
        }
    };
    let terms = SacTerms {
        value,
        mean_surround_background: mean_sb,
        mean_surround_object: mean_sc,
        margin: cfg.margin,
        distance_evals: partition.distance_evals(),
        degenerate: false,
    };
    if !want_grad {
        return Ok((terms, None));
    }

    let mut grad_pix = vec![0.0; h * w * c];
    if let Some((sign_sb, sign_sc)) = term_signs(cfg, raw) {
        let coef_sb = sign_sb / (ns * b_set.len() as f64);
        let coef_sc = sign_sc / (ns * c_set.len() as f64);
        // accumulate Σ_j coef·(f_p − f_j)/‖f_p − f_j‖, zero at zero distance
        let unit_sum = |p: usize, partners: &[usize], coef: f64, acc: &mut [f64]| {
            let fp = vec_at(p);
            for &j in partners {
                let fj = vec_at(j);
                let d = euclid(fp, fj);
                if d > 0.0 {
                    let k = coef / d;
                    for ((a, x), y) in acc.iter_mut().zip(fp).zip(fj) {
                        *a += k * (x - y);
                    }
                }
            }
        };
        let anchor_grads: Vec<Vec<f64>> = s_set
            .par_iter()
            .map(|&s| {
                let mut g = vec![0.0; c];
                unit_sum(s, b_set, coef_sb, &mut g);
                unit_sum(s, c_set, coef_sc, &mut g);
                g
            })
            .collect();
        // d‖f_s − f_j‖/df_j = (f_j − f_s)/d, i.e. the same unit sum seen from j
        let partner_grads = |set: &[usize], coef: f64| -> Vec<Vec<f64>> {
            set.par_iter()
                .map(|&j| {
                    let mut g = vec![0.0; c];
                    unit_sum(j, s_set, coef, &mut g);
                    g
                })
                .collect()
        };
        let b_grads = partner_grads(b_set, coef_sb);
        let c_grads = partner_grads(c_set, coef_sc);
        for (set, grads) in [(s_set, &anchor_grads), (b_set, &b_grads), (c_set, &c_grads)] {
            for (&p, g) in set.iter().zip(grads) {
                grad_pix[p * c..(p + 1) * c].copy_from_slice(g);
            }
        }
    }
    let mut grad = Tensor3::zeros(c, h, w);
    for ch in 0..c {
        for (p, v) in grad.channel_mut(ch).iter_mut().enumerate() {
            *v = grad_pix[p * c + ch];
        }
    }
    Ok((terms, Some(grad)))
}

/// Loss value with its breakdown. Degenerate partitions yield a zero value
/// flagged `degenerate` and a logged warning.
pub fn sacloss_value(
    fusion: &Tensor3,
    partition: &RegionPartition,
    cfg: &SacConfig,
) -> Result<SacTerms> {
    Ok(evaluate(fusion, partition, cfg, false)?.0)
}

/// Analytic gradient of [`sacloss_value`] with respect to every feature
/// element. Zero-distance pairs and an inactive hinge contribute the zero
/// subgradient.
pub fn sacloss_grad(
    fusion: &Tensor3,
    partition: &RegionPartition,
    cfg: &SacConfig,
) -> Result<Tensor3> {
    Ok(evaluate(fusion, partition, cfg, true)?
        .1
        .expect("gradient requested"))
}

/// Value and gradient in one pass.
pub fn sacloss_value_and_grad(
    fusion: &Tensor3,
    partition: &RegionPartition,
    cfg: &SacConfig,
) -> Result<(SacTerms, Tensor3)> {
    let (terms, grad) = evaluate(fusion, partition, cfg, true)?;
    Ok((terms, grad.expect("gradient requested")))
}

/// Per-layer outcome of [`sacloss_multi_layer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSac {
    pub layer: u8,
    /// Whether the sampling mode evaluates this layer at all.
    pub included: bool,
    /// Spatial grid the loss was computed on.
    pub grid: (usize, usize),
    /// Length of the compared feature vectors.
    pub feature_dim: usize,
    /// `(grid pixels)²`, the size of the unrestricted pair space.
    pub candidate_pairs: u64,
    pub terms: SacTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLayerSac {
    pub value: f64,
    pub layers: Vec<LayerSac>,
}

impl MultiLayerSac {
    pub fn distance_evals(&self) -> usize {
        self.layers.iter().map(|l| l.terms.distance_evals).sum()
    }

    pub fn candidate_pairs(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.included)
            .map(|l| l.candidate_pairs)
            .sum()
    }
}

/// Pools full-resolution labels onto a `h × w` grid: max for the mask,
/// mean for the soft label.
pub fn labels_for_grid(gt: &Mask, lm: &SoftMap, h: usize, w: usize) -> Result<(Mask, SoftMap)> {
    let (gh, gw) = gt.dims();
    if lm.dims() != (gh, gw) {
        return Err(Error::Dimension(format!(
            "mask {:?} vs label {:?}",
            gt.dims(),
            lm.dims()
        )));
    }
    if h == 0 || w == 0 || gh % h != 0 || gw % w != 0 || gh / h != gw / w {
        return Err(Error::Dimension(format!(
            "labels {gh}x{gw} cannot be pooled onto a {h}x{w} grid"
        )));
    }
    let f = gh / h;
    let g = downsample_max(&gt.to_soft(), f)?.binarize(0.5);
    Ok((g, downsample_avg(lm, f)?))
}

/// One layer's map as the mode sees it, plus the channel window of the
/// SCCT-stacked tensor it occupies.
fn layer_view(f: &Tensor3, k: u8, mode: SamplingMode) -> Result<(Tensor3, Option<ScctLayout>)> {
    match mode {
        SamplingMode::FullPairwise | SamplingMode::HighLayer => Ok((f.clone(), None)),
        SamplingMode::Scct => {
            let l = ScctLayout::for_layer(k)?;
            Ok((scct_forward(f, l)?, Some(l)))
        }
        SamplingMode::SubSample => {
            let l = ScctLayout::for_layer(k)?;
            let stacked = scct_forward(f, l)?;
            Ok((stacked.slice_channels(0, f.channels())?, Some(l)))
        }
    }
}

fn run_multi_layer(
    features: &[(Tensor3, u8)],
    gt: &Mask,
    lm: &SoftMap,
    cfg: &SacConfig,
    want_grad: bool,
) -> Result<(MultiLayerSac, Vec<Tensor3>)> {
    cfg.validate()?;
    let deepest = features.iter().map(|(_, k)| *k).max();
    let mut layers = Vec::with_capacity(features.len());
    let mut grads = Vec::new();
    let mut total = 0.0;
    for (f, k) in features {
        let k = *k;
        if !(2..=4).contains(&k) {
            return Err(Error::Layout(format!("layer index {k} not in {{2, 3, 4}}")));
        }
        let included = cfg.mode != SamplingMode::HighLayer || Some(k) == deepest;
        let (view, layout) = layer_view(f, k, cfg.mode)?;
        let (vh, vw) = (view.height(), view.width());
        let candidate_pairs = ((vh * vw) as u64).pow(2);
        if !included {
            layers.push(LayerSac {
                layer: k,
                included,
                grid: (vh, vw),
                feature_dim: view.channels(),
                candidate_pairs,
                terms: SacTerms {
                    distance_evals: 0,
                    degenerate: false,
                    ..SacTerms::skipped(cfg.margin)
                },
            });
            if want_grad {
                grads.push(Tensor3::zeros(f.channels(), f.height(), f.width()));
            }
            continue;
        }
        let (g_l, lm_l) = labels_for_grid(gt, lm, vh, vw)?;
        let partition = partition_regions(&g_l, &lm_l, cfg.surround_threshold)?;
        let (terms, grad_view) = evaluate(&view, &partition, cfg, want_grad)?;
        total += terms.value;
        layers.push(LayerSac {
            layer: k,
            included,
            grid: (vh, vw),
            feature_dim: view.channels(),
            candidate_pairs,
            terms,
        });
        if let Some(gv) = grad_view {
            let g = match (cfg.mode, layout) {
                (SamplingMode::Scct, Some(l)) => scct_inverse(&gv, l)?,
                (SamplingMode::SubSample, Some(l)) => {
                    let mut stacked = Tensor3::zeros(f.channels() * l.part_count(), vh, vw);
                    stacked.data_mut()[..gv.data().len()].copy_from_slice(gv.data());
                    scct_inverse(&stacked, l)?
                }
                _ => gv,
            };
            grads.push(g);
        }
    }
    Ok((
        MultiLayerSac {
            value: total,
            layers,
        },
        grads,
    ))
}

/// Sum of per-layer losses selected by `cfg.mode`. `gt` and `lm` are at
/// image resolution and are pooled onto each evaluated grid.
pub fn sacloss_multi_layer(
    features: &[(Tensor3, u8)],
    gt: &Mask,
    lm: &SoftMap,
    cfg: &SacConfig,
) -> Result<MultiLayerSac> {
    Ok(run_multi_layer(features, gt, lm, cfg, false)?.0)
}

/// [`sacloss_multi_layer`] plus the gradient with respect to each input
/// layer, in input order.
pub fn sacloss_multi_layer_grad(
    features: &[(Tensor3, u8)],
    gt: &Mask,
    lm: &SoftMap,
    cfg: &SacConfig,
) -> Result<(MultiLayerSac, Vec<Tensor3>)> {
    run_multi_layer(features, gt, lm, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error};
    use crate::surround::surrounding_label;

    fn literal_cfg(margin: f64) -> SacConfig {
        SacConfig {
            margin,
            sign_convention: SignConvention::PaperLiteral,
            mode: SamplingMode::FullPairwise,
            ..SacConfig::default()
        }
    }

    fn two_by_two() -> (Tensor3, RegionPartition) {
        let f = Tensor3::from_vec(1, 2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let p = RegionPartition::from_sets(2, 2, vec![1], vec![0], vec![2, 3]).unwrap();
        (f, p)
    }

    #[test]
    fn pair_distance_cases() {
        assert_eq!(pair_distance(&[1.0, 2.0], &[1.0, 2.0], true).unwrap(), 0.0);
        assert_eq!(pair_distance(&[1.0, 2.0], &[1.0, 2.0], false).unwrap(), 0.0);
        assert_eq!(pair_distance(&[0.0, 0.0], &[3.0, 4.0], false).unwrap(), 5.0);
        assert_eq!(pair_distance(&[0.0, 0.0], &[3.0, 4.0], true).unwrap(), -5.0);
        assert!(matches!(
            pair_distance(&[0.0], &[3.0, 4.0], true),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn partition_of_full_mask_is_all_object() {
        let gt = Mask::ones(4, 4);
        let lm = SoftMap::zeros(4, 4);
        let p = partition_regions(&gt, &lm, 0.1).unwrap();
        assert_eq!(p.counts(), (0, 16, 0));
        assert!(p.is_degenerate());
    }

    #[test]
    fn partition_ring_matches_enumeration() {
        let gt = Mask::from_fn(8, 8, |y, x| (3..5).contains(&y) && (3..5).contains(&x));
        let lm = surrounding_label(&gt, 1.0).unwrap();
        let p = partition_regions(&gt, lm.map(), 0.1).unwrap();
        let mut s = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                if !gt.get(y, x) && lm.map().get(y, x) >= 0.1 {
                    s.push(y * 8 + x);
                }
            }
        }
        assert_eq!(p.surrounding(), &s[..]);
        assert_eq!(p.counts().1, 4);
        // every anchor touches the object within Chebyshev distance 2
        for &i in p.surrounding() {
            let (y, x) = (i / 8, i % 8);
            assert!((1..=6).contains(&y) && (1..=6).contains(&x));
        }
        assert_eq!(p.counts().0 + p.counts().1 + p.counts().2, 64);
    }

    #[test]
    fn lowering_threshold_grows_surrounding() {
        let gt = Mask::from_fn(12, 12, |y, x| (4..8).contains(&y) && (4..8).contains(&x));
        let lm = surrounding_label(&gt, 1.5).unwrap();
        let mut last = 0;
        for t in [0.4, 0.3, 0.2, 0.1, 0.05, 0.01] {
            let n = partition_regions(&gt, lm.map(), t).unwrap().counts().0;
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn from_sets_rejects_overlap_and_gaps() {
        assert!(RegionPartition::from_sets(1, 3, vec![0], vec![0], vec![1, 2]).is_err());
        assert!(RegionPartition::from_sets(1, 3, vec![0], vec![1], vec![]).is_err());
        assert!(RegionPartition::from_sets(1, 3, vec![0], vec![1], vec![5]).is_err());
    }

    #[test]
    fn identical_features_give_margin() {
        let f = Tensor3::filled(3, 2, 2, 0.7);
        let (_, p) = two_by_two();
        for m in [0.0, 0.25] {
            let v = sacloss_value(&f, &p, &literal_cfg(m)).unwrap();
            assert_eq!(v.value, m);
            let prose = SacConfig {
                margin: m,
                sign_convention: SignConvention::ProseIntent,
                ..literal_cfg(m)
            };
            assert_eq!(sacloss_value(&f, &p, &prose).unwrap().value, m.max(0.0));
            let g = sacloss_grad(&f, &p, &prose).unwrap();
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hand_computed_two_by_two() {
        // anchor value 0; background {0, 2} → mean 1; object {1} → mean 1
        let (f, p) = two_by_two();
        let v = sacloss_value(&f, &p, &literal_cfg(0.3)).unwrap();
        assert!((v.value - 0.3).abs() < 1e-15);
        assert_eq!(v.mean_surround_background, 1.0);
        assert_eq!(v.mean_surround_object, 1.0);
        assert_eq!(v.distance_evals, 3);
    }

    #[test]
    fn two_by_two_gradient_matches_finite_differences() {
        let (f, p) = two_by_two();
        let cfg = literal_cfg(0.0);
        let g = sacloss_grad(&f, &p, &cfg).unwrap();
        let n = finite_diff_grad(|t| sacloss_value(t, &p, &cfg).unwrap().value, &f, 1e-5).unwrap();
        assert!(max_relative_error(g.data(), n.data()) < 1e-4);
    }

    #[test]
    fn scaling_doubles_distance_terms() {
        let f = Tensor3::from_fn(2, 3, 3, |c, y, x| ((c * 9 + y * 3 + x) as f64 * 0.37).sin());
        let p =
            RegionPartition::from_sets(3, 3, vec![1, 3], vec![4], vec![0, 2, 5, 6, 7, 8]).unwrap();
        let cfg = literal_cfg(0.5);
        let a = sacloss_value(&f, &p, &cfg).unwrap();
        let b = sacloss_value(&f.scale(2.0), &p, &cfg).unwrap();
        assert!((b.mean_surround_background - 2.0 * a.mean_surround_background).abs() < 1e-12);
        assert!((b.mean_surround_object - 2.0 * a.mean_surround_object).abs() < 1e-12);
        assert!(((b.value - 0.5) - 2.0 * (a.value - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_partition_is_skipped() {
        let f = Tensor3::filled(1, 2, 2, 1.0);
        let p = RegionPartition::from_sets(2, 2, vec![], vec![0], vec![1, 2, 3]).unwrap();
        let v = sacloss_value(&f, &p, &SacConfig::default()).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.value, 0.0);
        assert!(sacloss_grad(&f, &p, &SacConfig::default())
            .unwrap()
            .data()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let f = Tensor3::zeros(1, 3, 3);
        let (_, p) = two_by_two();
        assert!(matches!(
            sacloss_value(&f, &p, &SacConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad = SacConfig {
            margin: -1.0,
            ..SacConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SacConfig {
            surround_threshold: 1.0,
            ..SacConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("scct".parse::<SamplingMode>().unwrap(), SamplingMode::Scct);
        assert!("nope".parse::<SamplingMode>().is_err());
    }
}
