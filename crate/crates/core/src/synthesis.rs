//! Forward passes of the miniature style-based generator.
//!
//! Everything is expressed on the autodiff tape so the same code path serves
//! plain inference (constant leaves) and gradient-based use (latent or weight
//! leaves). In fixed noise mode a forward pass is a pure function of
//! (weights, latent, noise_seed) and repeated calls are bit-identical.

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, NodeId};
use crate::config::{GeneratorConfig, LayerKind, NoiseMode, BASE_RESOLUTION};
use crate::error::{Error, Result};
use crate::image_io::ImageTensor;
use crate::latent::{LatentW, LatentZ, StyleCode, StyleEntry, WPlusCode};
use crate::weights::GeneratorWeights;

const LRELU_SLOPE: f32 = 0.2;
const LRELU_GAIN: f32 = std::f32::consts::SQRT_2;

/// Sample count and seed used for the Monte-Carlo estimate of w_avg.
pub const W_AVG_SAMPLES: usize = 10_000;
pub const W_AVG_SEED: u64 = 0x57a7_ab1e;

/// Tape handles for one generator's tensors.
pub(crate) struct GenNodes {
    pub mapping: Vec<(NodeId, NodeId)>,
    pub const_input: NodeId,
    pub layers: Vec<LayerNodes>,
    noise: Vec<Option<ArrayD<f32>>>,
}

pub(crate) struct LayerNodes {
    pub conv: NodeId,
    pub conv_bias: NodeId,
    pub affine_w: NodeId,
    pub affine_b: NodeId,
}

/// Resolves per-layer noise buffers for a forward pass.
fn resolve_noise(weights: &GeneratorWeights, noise_seed: u64) -> Vec<Option<ArrayD<f32>>> {
    weights
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| match (&weights.config.noise_mode, &layer.noise) {
            (NoiseMode::Fixed, Some(n)) => Some(n.clone().into_dyn()),
            (NoiseMode::Random, Some(n)) => {
                let mut rng = ChaCha12Rng::seed_from_u64(
                    noise_seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                );
                let len = n.len();
                let data: Vec<f32> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                Some(ArrayD::from_shape_vec(IxDyn(&n.shape().to_vec()), data).unwrap())
            }
            (_, None) => None,
        })
        .collect()
}

/// Inserts all generator tensors as tape leaves.
pub(crate) fn insert_generator(
    g: &mut Graph,
    weights: &GeneratorWeights,
    trainable: bool,
    noise_seed: u64,
) -> GenNodes {
    let leaf = |g: &mut Graph, v: ArrayD<f32>| {
        if trainable {
            g.var(v)
        } else {
            g.constant(v)
        }
    };
    let mapping = weights
        .mapping
        .iter()
        .map(|lin| {
            let w = leaf(g, lin.weight.clone().into_dyn());
            let b = leaf(g, lin.bias.clone().into_dyn());
            (w, b)
        })
        .collect();
    let const_input = leaf(g, weights.const_input.clone().into_dyn());
    let layers = weights
        .layers
        .iter()
        .map(|layer| LayerNodes {
            conv: leaf(g, layer.conv.clone().into_dyn()),
            conv_bias: leaf(g, layer.conv_bias.clone().into_dyn()),
            affine_w: leaf(g, layer.affine.weight.clone().into_dyn()),
            affine_b: leaf(g, layer.affine.bias.clone().into_dyn()),
        })
        .collect();
    GenNodes {
        mapping,
        const_input,
        layers,
        noise: resolve_noise(weights, noise_seed),
    }
}

impl GenNodes {
    /// Leaves in the same order as `GeneratorWeights::named_tensors`, for
    /// pairing gradients with parameter tensors during training.
    pub(crate) fn trainable_leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (w, b) in &self.mapping {
            out.push(*w);
            out.push(*b);
        }
        out.push(self.const_input);
        for l in &self.layers {
            out.push(l.conv);
            out.push(l.conv_bias);
            out.push(l.affine_w);
            out.push(l.affine_b);
        }
        out
    }
}

/// z -> w through the mapping network; input normalized to unit second moment.
pub(crate) fn mapping_forward(g: &mut Graph, gen: &GenNodes, z: NodeId) -> NodeId {
    let shape = g.value(z).shape().to_vec();
    let (n, d) = (shape[0], shape[1]);
    let sq = g.square(z);
    let ms = g.sum_to(sq, &[n, 1]);
    let ms = g.scale(ms, 1.0 / d as f32);
    let ms = g.add_scalar(ms, 1e-8);
    let inv = g.powf(ms, -0.5);
    let inv = g.expand(inv, &[n, d]);
    let mut x = g.mul(z, inv);
    for (w, b) in &gen.mapping {
        let wt = g.transpose(*w);
        let y = g.matmul(x, wt);
        let brow = g.reshape(*b, &[1, d]);
        let brow = g.expand(brow, &[n, d]);
        let y = g.add(y, brow);
        let y = g.leaky_relu(y, LRELU_SLOPE);
        x = g.scale(y, LRELU_GAIN);
    }
    x
}

/// Applies layer `li`'s affine to a batch of W rows: `[N, d] -> [N, width]`.
pub(crate) fn affine_forward(g: &mut Graph, gen: &GenNodes, li: usize, w_row: NodeId) -> NodeId {
    let layer = &gen.layers[li];
    let n = g.value(w_row).shape()[0];
    let width = g.value(layer.affine_b).shape()[0];
    let at = g.transpose(layer.affine_w);
    let s = g.matmul(w_row, at);
    let b = g.reshape(layer.affine_b, &[1, width]);
    let b = g.expand(b, &[n, width]);
    g.add(s, b)
}

/// Per-layer styles from per-row latent nodes (`rows[w_row]` feeds layer i).
pub(crate) fn styles_from_rows(
    g: &mut Graph,
    gen: &GenNodes,
    weights: &GeneratorWeights,
    rows: &[NodeId],
) -> Vec<NodeId> {
    weights
        .table
        .entries()
        .iter()
        .enumerate()
        .map(|(li, entry)| affine_forward(g, gen, li, rows[entry.w_row]))
        .collect()
}

fn modulated_conv(
    g: &mut Graph,
    x: NodeId,
    style: NodeId,
    conv_w: NodeId,
    demodulate: bool,
    eps: f32,
) -> NodeId {
    let xshape = g.value(x).shape().to_vec();
    let (n, c) = (xshape[0], xshape[1]);
    let wshape = g.value(conv_w).shape().to_vec();
    let (o, kh, kw) = (wshape[0], wshape[2], wshape[3]);
    debug_assert_eq!(wshape[1], c);

    let s4 = g.reshape(style, &[n, c, 1, 1]);
    let s4 = g.expand(s4, &xshape);
    let xm = g.mul(x, s4);
    let mut y = g.conv2d(xm, conv_w, 1, kh / 2);

    if demodulate {
        let w5 = g.reshape(conv_w, &[1, o, c, kh, kw]);
        let w5 = g.expand(w5, &[n, o, c, kh, kw]);
        let s5 = g.reshape(style, &[n, 1, c, 1, 1]);
        let s5 = g.expand(s5, &[n, o, c, kh, kw]);
        let wm = g.mul(w5, s5);
        let sq = g.square(wm);
        let ssum = g.sum_to(sq, &[n, o, 1, 1, 1]);
        let ssum = g.add_scalar(ssum, eps);
        let dcoef = g.powf(ssum, -0.5);
        let dcoef = g.reshape(dcoef, &[n, o, 1, 1]);
        let yshape = g.value(y).shape().to_vec();
        let dcoef = g.expand(dcoef, &yshape);
        y = g.mul(y, dcoef);
    }
    y
}

pub(crate) struct SynthOut {
    pub image: NodeId,
    /// Feature tensor entering each tRGB layer, in table order.
    pub pre_trgb: Vec<NodeId>,
}

/// Runs the synthesis network from per-layer style nodes (`[N, width]` each).
pub(crate) fn synthesis_forward(
    g: &mut Graph,
    gen: &GenNodes,
    weights: &GeneratorWeights,
    styles: &[NodeId],
    batch: usize,
) -> SynthOut {
    let cfg = &weights.config;
    assert_eq!(styles.len(), weights.table.len());
    let eps = cfg.demod_epsilon;

    let c4 = cfg.channels(BASE_RESOLUTION);
    let x0 = g.reshape(gen.const_input, &[1, c4, 4, 4]);
    let mut x = g.expand(x0, &[batch, c4, 4, 4]);

    let mut li = 0usize;
    let mut img: Option<NodeId> = None;
    let mut pre_trgb = Vec::new();

    for res in cfg.resolutions() {
        if res == BASE_RESOLUTION {
            x = conv_layer(g, gen, li, x, styles[li], eps);
            li += 1;
        } else {
            x = g.upsample2x(x);
            x = conv_layer(g, gen, li, x, styles[li], eps);
            li += 1;
            x = conv_layer(g, gen, li, x, styles[li], eps);
            li += 1;
        }
        pre_trgb.push(x);
        let rgb = trgb_layer(g, gen, li, x, styles[li], eps);
        li += 1;
        img = Some(match img {
            None => rgb,
            Some(prev) => {
                let up = g.upsample2x(prev);
                g.add(up, rgb)
            }
        });
    }
    let image = g.clamp(img.unwrap(), -1.0, 1.0);
    SynthOut { image, pre_trgb }
}

fn conv_layer(
    g: &mut Graph,
    gen: &GenNodes,
    li: usize,
    x: NodeId,
    style: NodeId,
    eps: f32,
) -> NodeId {
    let nodes = &gen.layers[li];
    let mut y = modulated_conv(g, x, style, nodes.conv, true, eps);
    let yshape = g.value(y).shape().to_vec();
    if let Some(noise) = &gen.noise[li] {
        let (h, w) = (noise.shape()[0], noise.shape()[1]);
        let nv = g.constant(noise.clone());
        let nv = g.reshape(nv, &[1, 1, h, w]);
        let nv = g.expand(nv, &yshape);
        y = g.add(y, nv);
    }
    let oc = yshape[1];
    let b = g.reshape(nodes.conv_bias, &[1, oc, 1, 1]);
    let b = g.expand(b, &yshape);
    let y = g.add(y, b);
    let y = g.leaky_relu(y, LRELU_SLOPE);
    g.scale(y, LRELU_GAIN)
}

fn trgb_layer(
    g: &mut Graph,
    gen: &GenNodes,
    li: usize,
    x: NodeId,
    style: NodeId,
    eps: f32,
) -> NodeId {
    let nodes = &gen.layers[li];
    let y = modulated_conv(g, x, style, nodes.conv, false, eps);
    let yshape = g.value(y).shape().to_vec();
    let b = g.reshape(nodes.conv_bias, &[1, 3, 1, 1]);
    let b = g.expand(b, &yshape);
    g.add(y, b)
}

// --- public operations -------------------------------------------------------

/// Feeds z through the mapping network.
pub fn map_z_to_w(weights: &GeneratorWeights, z: &LatentZ) -> Result<LatentW> {
    let d = weights.config.latent_dim;
    if z.0.len() != d {
        return Err(Error::Shape(format!(
            "latent has {} entries, config expects {d}",
            z.0.len()
        )));
    }
    let mut g = Graph::new();
    let gen = insert_generator(&mut g, weights, false, 0);
    let zn = g.constant(
        ArrayD::from_shape_vec(IxDyn(&[1, d]), z.0.to_vec()).unwrap(),
    );
    let w = mapping_forward(&mut g, &gen, zn);
    let out = g.value(w);
    Ok(LatentW(Array1::from_vec(out.iter().copied().collect())))
}

/// Embeds W into W+ by repeating w on every row.
pub fn broadcast_w(w: &LatentW, config: &GeneratorConfig) -> WPlusCode {
    let num_ws = config.num_ws();
    let d = w.0.len();
    let mut rows = Array2::zeros((num_ws, d));
    for mut row in rows.rows_mut() {
        row.assign(&w.0);
    }
    WPlusCode { rows }
}

/// Applies the per-layer affines: W+ code -> style code in S.
pub fn styles_from_wplus(weights: &GeneratorWeights, wplus: &WPlusCode) -> Result<StyleCode> {
    wplus.validate(&weights.config)?;
    let d = weights.config.latent_dim;
    let mut g = Graph::new();
    let gen = insert_generator(&mut g, weights, false, 0);
    let rows: Vec<NodeId> = (0..wplus.num_rows())
        .map(|r| {
            g.constant(
                ArrayD::from_shape_vec(IxDyn(&[1, d]), wplus.rows.row(r).to_vec()).unwrap(),
            )
        })
        .collect();
    let styles = styles_from_rows(&mut g, &gen, weights, &rows);
    let entries = styles
        .iter()
        .zip(weights.table.entries())
        .map(|(id, entry)| StyleEntry {
            values: Array1::from_vec(g.value(*id).iter().copied().collect()),
            is_trgb: entry.kind == LayerKind::TRgb,
        })
        .collect();
    Ok(StyleCode {
        entries,
        table: weights.table.clone(),
    })
}

/// Image plus captured pre-tRGB feature maps for structural comparisons.
pub struct SynthesisTrace {
    pub image: ImageTensor,
    /// `(layer name of the tRGB, feature tensor [C,H,W])` per resolution.
    pub pre_trgb: Vec<(String, ArrayD<f32>)>,
}

fn style_nodes_from_code(g: &mut Graph, styles: &StyleCode) -> Vec<NodeId> {
    styles
        .entries
        .iter()
        .map(|e| {
            g.constant(
                ArrayD::from_shape_vec(IxDyn(&[1, e.values.len()]), e.values.to_vec()).unwrap(),
            )
        })
        .collect()
}

fn check_styles(weights: &GeneratorWeights, styles: &StyleCode) -> Result<()> {
    styles.validate()?;
    if styles.table != weights.table {
        return Err(Error::TableMismatch(
            "style code belongs to a different generator architecture".into(),
        ));
    }
    Ok(())
}

/// Decodes a style code into an image.
pub fn synthesize_from_styles(
    weights: &GeneratorWeights,
    styles: &StyleCode,
    noise_seed: u64,
) -> Result<ImageTensor> {
    Ok(synthesize_from_styles_traced(weights, styles, noise_seed)?.image)
}

/// Like [`synthesize_from_styles`] but also returns all pre-tRGB feature maps.
pub fn synthesize_from_styles_traced(
    weights: &GeneratorWeights,
    styles: &StyleCode,
    noise_seed: u64,
) -> Result<SynthesisTrace> {
    check_styles(weights, styles)?;
    let mut g = Graph::new();
    let gen = insert_generator(&mut g, weights, false, noise_seed);
    let nodes = style_nodes_from_code(&mut g, styles);
    let out = synthesis_forward(&mut g, &gen, weights, &nodes, 1);
    let image = ImageTensor::from_chw(g.value(out.image));
    let trgb_names: Vec<String> = weights
        .table
        .entries()
        .iter()
        .filter(|e| e.kind == LayerKind::TRgb)
        .map(|e| e.name.clone())
        .collect();
    let pre_trgb = trgb_names
        .into_iter()
        .zip(out.pre_trgb)
        .map(|(name, id)| (name, g.value(id).to_owned()))
        .collect();
    Ok(SynthesisTrace { image, pre_trgb })
}

/// A latent in any of the three spaces accepted by [`synthesize`].
#[derive(Debug, Clone)]
pub enum LatentInput {
    Z(LatentZ),
    W(LatentW),
    WPlus(WPlusCode),
}

/// Full forward pass from any latent space.
pub fn synthesize(
    weights: &GeneratorWeights,
    latent: &LatentInput,
    noise_seed: u64,
) -> Result<ImageTensor> {
    let wplus = match latent {
        LatentInput::Z(z) => {
            let w = map_z_to_w(weights, z)?;
            broadcast_w(&w, &weights.config)
        }
        LatentInput::W(w) => broadcast_w(w, &weights.config),
        LatentInput::WPlus(wp) => wp.clone(),
    };
    let styles = styles_from_wplus(weights, &wplus)?;
    synthesize_from_styles(weights, &styles, noise_seed)
}

/// Monte-Carlo estimate of the mean mapping output, used as projector start.
pub fn estimate_w_avg(weights: &GeneratorWeights, samples: usize, seed: u64) -> LatentW {
    let d = weights.config.latent_dim;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; d];
    let chunk = 256usize;
    let mut done = 0usize;
    while done < samples {
        let n = chunk.min(samples - done);
        let data: Vec<f32> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut g = Graph::new();
        let gen = insert_generator(&mut g, weights, false, 0);
        let z = g.constant(ArrayD::from_shape_vec(IxDyn(&[n, d]), data).unwrap());
        let w = mapping_forward(&mut g, &gen, z);
        let v = g.value(w);
        for r in 0..n {
            for c in 0..d {
                acc[c] += v[[r, c]] as f64;
            }
        }
        done += n;
    }
    LatentW(Array1::from_vec(
        acc.into_iter().map(|s| (s / samples as f64) as f32).collect(),
    ))
}

/// Default w_avg used by the projector.
pub fn default_w_avg(weights: &GeneratorWeights) -> LatentW {
    estimate_w_avg(weights, W_AVG_SAMPLES, W_AVG_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::init_weights;
    use ndarray::Array2;

    fn toy(res: usize) -> GeneratorWeights {
        let cfg = GeneratorConfig {
            output_resolution: res,
            ..GeneratorConfig::default()
        };
        init_weights(&cfg, 42).unwrap()
    }

    fn random_wplus(weights: &GeneratorWeights, seed: u64) -> WPlusCode {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (n, d) = (weights.config.num_ws(), weights.config.latent_dim);
        let data: Vec<f32> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        WPlusCode {
            rows: Array2::from_shape_vec((n, d), data).unwrap(),
        }
    }

    #[test]
    fn mapping_is_reproducible() {
        let w = toy(16);
        let z = LatentZ(Array1::from_vec((0..64).map(|i| i as f32 * 0.03 - 1.0).collect()));
        let a = map_z_to_w(&w, &z).unwrap();
        let b = map_z_to_w(&w, &z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mapping_rejects_wrong_dim() {
        let w = toy(16);
        let z = LatentZ(Array1::zeros(13));
        assert!(map_z_to_w(&w, &z).is_err());
    }

    #[test]
    fn w_avg_band_across_seeds() {
        // Two independent 10k-sample estimates agree within a small band.
        let w = toy(16);
        let a = estimate_w_avg(&w, W_AVG_SAMPLES, 1);
        let b = estimate_w_avg(&w, W_AVG_SAMPLES, 2);
        let max_diff = a
            .0
            .iter()
            .zip(b.0.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 0.05, "resampled w_avg drifted by {max_diff}");
    }

    #[test]
    fn broadcast_rows_are_identical() {
        let w = toy(16);
        let lat = LatentW(Array1::from_vec((0..64).map(|i| (i as f32).sin()).collect()));
        let wp = broadcast_w(&lat, &w.config);
        assert_eq!(wp.num_rows(), w.config.num_ws());
        for r in wp.rows.rows() {
            assert_eq!(r.to_vec(), lat.0.to_vec());
        }
    }

    #[test]
    fn zero_wplus_gives_unit_styles() {
        let w = toy(16);
        let wp = WPlusCode {
            rows: Array2::zeros((w.config.num_ws(), w.config.latent_dim)),
        };
        let styles = styles_from_wplus(&w, &wp).unwrap();
        for e in &styles.entries {
            assert!(e.values.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn affine_is_affine() {
        let w = toy(16);
        let a = random_wplus(&w, 5);
        let b = random_wplus(&w, 6);
        let alpha = 0.3f32;
        let mixed = WPlusCode {
            rows: &a.rows * alpha + &b.rows * (1.0 - alpha),
        };
        let sa = styles_from_wplus(&w, &a).unwrap();
        let sb = styles_from_wplus(&w, &b).unwrap();
        let sm = styles_from_wplus(&w, &mixed).unwrap();
        for ((ea, eb), em) in sa.entries.iter().zip(&sb.entries).zip(&sm.entries) {
            for ((x, y), z) in ea.values.iter().zip(eb.values.iter()).zip(em.values.iter()) {
                let expect = alpha * x + (1.0 - alpha) * y;
                assert!((expect - z).abs() <= 1e-4 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn style_widths_match_channel_schedule() {
        // 16x16 config: channels 4->64, 8->64, 16->32.
        let w = toy(16);
        let wp = random_wplus(&w, 7);
        let styles = styles_from_wplus(&w, &wp).unwrap();
        let widths: Vec<usize> = styles.entries.iter().map(|e| e.values.len()).collect();
        assert_eq!(widths, vec![64, 64, 64, 64, 64, 64, 32, 32]);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let w = toy(16);
        let wp = random_wplus(&w, 8);
        let styles = styles_from_wplus(&w, &wp).unwrap();
        let a = synthesize_from_styles(&w, &styles, 0).unwrap();
        let b = synthesize_from_styles(&w, &styles, 0).unwrap();
        assert!(a.bits_eq(&b));
        assert_eq!(a.resolution(), 16);
        assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn trgb_only_changes_leave_features_bit_identical() {
        let w = toy(16);
        let wp = random_wplus(&w, 9);
        let mut styles = styles_from_wplus(&w, &wp).unwrap();
        let base = synthesize_from_styles_traced(&w, &styles, 0).unwrap();
        for e in styles.entries.iter_mut().filter(|e| e.is_trgb) {
            e.values.mapv_inplace(|v| v * 1.7 + 0.1);
        }
        let pert = synthesize_from_styles_traced(&w, &styles, 0).unwrap();
        for ((_, a), (_, b)) in base.pre_trgb.iter().zip(&pert.pre_trgb) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(!base.image.bits_eq(&pert.image));
    }

    #[test]
    fn zero_styles_give_trgb_bias_image() {
        // With all-zero styles every conv output is killed by modulation, so
        // the image is the skip-accumulated tRGB biases. Trace the 8x8 sum by
        // hand: up2(bias_4 plane) + bias_8 plane.
        let cfg = GeneratorConfig {
            output_resolution: 8,
            ..GeneratorConfig::default()
        };
        let mut w = init_weights(&cfg, 21).unwrap();
        // give the tRGB biases distinct nonzero values
        for (i, layer) in w.layers.iter_mut().enumerate() {
            if layer.kind == LayerKind::TRgb {
                layer
                    .conv_bias
                    .iter_mut()
                    .enumerate()
                    .for_each(|(c, v)| *v = 0.05 * (i as f32 + 1.0) + 0.01 * c as f32);
            }
        }
        let zero = StyleCode {
            entries: w
                .table
                .entries()
                .iter()
                .map(|e| StyleEntry {
                    values: Array1::zeros(e.style_width),
                    is_trgb: e.kind == LayerKind::TRgb,
                })
                .collect(),
            table: w.table.clone(),
        };
        let img = synthesize_from_styles(&w, &zero, 0).unwrap();
        let b4 = w.layer("trgb_4").unwrap().conv_bias.clone();
        let b8 = w.layer("trgb_8").unwrap().conv_bias.clone();
        // constant planes: bilinear upsampling preserves constants
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let expect = (b4[c] + b8[c]).clamp(-1.0, 1.0);
                    assert!((img.data[[y, x, c]] - expect).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn composed_synthesize_matches_explicit_chain() {
        let w = toy(16);
        let z = LatentZ(Array1::from_vec((0..64).map(|i| (i as f32 * 0.11).cos()).collect()));
        let via_op = synthesize(&w, &LatentInput::Z(z.clone()), 3).unwrap();
        let wlat = map_z_to_w(&w, &z).unwrap();
        let wp = broadcast_w(&wlat, &w.config);
        let styles = styles_from_wplus(&w, &wp).unwrap();
        let explicit = synthesize_from_styles(&w, &styles, 3).unwrap();
        assert!(via_op.bits_eq(&explicit));

        let via_w = synthesize(&w, &LatentInput::W(wlat), 3).unwrap();
        assert!(via_op.bits_eq(&via_w));
    }

    #[test]
    fn distinct_latents_give_distinct_images() {
        let w = toy(16);
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for _ in 0..100 {
            let z1: Vec<f32> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z2: Vec<f32> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = synthesize(&w, &LatentInput::Z(LatentZ(Array1::from_vec(z1))), 0).unwrap();
            let b = synthesize(&w, &LatentInput::Z(LatentZ(Array1::from_vec(z2))), 0).unwrap();
            assert!(!a.bits_eq(&b));
        }
    }

    #[test]
    fn random_noise_mode_is_seed_deterministic() {
        let cfg = GeneratorConfig {
            output_resolution: 16,
            noise_mode: NoiseMode::Random,
            ..GeneratorConfig::default()
        };
        let w = init_weights(&cfg, 4).unwrap();
        let wp = random_wplus(&w, 10);
        let styles = styles_from_wplus(&w, &wp).unwrap();
        let a = synthesize_from_styles(&w, &styles, 5).unwrap();
        let b = synthesize_from_styles(&w, &styles, 5).unwrap();
        let c = synthesize_from_styles(&w, &styles, 6).unwrap();
        assert!(a.bits_eq(&b));
        assert!(!a.bits_eq(&c));
    }
}
