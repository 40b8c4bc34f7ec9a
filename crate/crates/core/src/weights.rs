//! Generator weight tensors: deterministic initialization and the canonical
//! named-tensor enumeration used by the archive, layer swapping and audits.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{GeneratorConfig, LayerKind, LayerTable};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    /// `[out, in]`
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

/// Weights of one styled layer (conv or tRGB) plus its affine style map.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub name: String,
    pub kind: LayerKind,
    pub resolution: usize,
    /// `[out_c, in_c, k, k]`; 3x3 for convs, 1x1 with out_c = 3 for tRGB.
    pub conv: Array4<f32>,
    pub conv_bias: Array1<f32>,
    /// Affine A realizing style = A(w); bias initialized to 1.
    pub affine: LinearWeights,
    /// Fixed noise buffer `[res, res]`, conv layers only.
    pub noise: Option<Array2<f32>>,
}

/// Immutable weight set of the miniature generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorWeights {
    pub config: GeneratorConfig,
    pub table: LayerTable,
    pub mapping: Vec<LinearWeights>,
    /// Learned constant input `[channels(4), 4, 4]`.
    pub const_input: Array3<f32>,
    /// Styled layers in canonical table order.
    pub layers: Vec<LayerWeights>,
}

fn randn_vec(rng: &mut ChaCha12Rng, n: usize, std: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f32 = StandardNormal.sample(rng);
            v * std
        })
        .collect()
}

/// Initializes generator weights deterministically from a seed.
///
/// Affine biases start at 1 so that A(0) yields unit styles; all other biases
/// start at 0. Weight scales follow 1/sqrt(fan_in), with tRGB weights drawn
/// smaller so freshly initialized images stay mostly inside `[-1, 1]`.
pub fn init_weights(config: &GeneratorConfig, seed: u64) -> Result<GeneratorWeights> {
    config.validate()?;
    let table = LayerTable::build(config)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = config.latent_dim;

    let mapping = (0..config.mapping_depth)
        .map(|_| LinearWeights {
            weight: Array2::from_shape_vec(
                (d, d),
                randn_vec(&mut rng, d * d, 1.0 / (d as f32).sqrt()),
            )
            .unwrap(),
            bias: Array1::zeros(d),
        })
        .collect();

    let c4 = config.channels(crate::config::BASE_RESOLUTION);
    let const_input =
        Array3::from_shape_vec((c4, 4, 4), randn_vec(&mut rng, c4 * 16, 1.0)).unwrap();

    let mut layers = Vec::with_capacity(table.len());
    for entry in table.entries() {
        let in_c = entry.style_width;
        let (out_c, k, std) = match entry.kind {
            LayerKind::Conv => (
                config.channels(entry.resolution),
                3usize,
                1.0 / ((in_c * 9) as f32).sqrt(),
            ),
            LayerKind::TRgb => (3usize, 1usize, 0.3 / (in_c as f32).sqrt()),
        };
        let conv = Array4::from_shape_vec(
            (out_c, in_c, k, k),
            randn_vec(&mut rng, out_c * in_c * k * k, std),
        )
        .unwrap();
        let affine = LinearWeights {
            weight: Array2::from_shape_vec(
                (in_c, d),
                randn_vec(&mut rng, in_c * d, 1.0 / (d as f32).sqrt()),
            )
            .unwrap(),
            bias: Array1::from_elem(in_c, 1.0),
        };
        let noise = match entry.kind {
            LayerKind::Conv => Some(
                Array2::from_shape_vec(
                    (entry.resolution, entry.resolution),
                    randn_vec(&mut rng, entry.resolution * entry.resolution, 1.0),
                )
                .unwrap(),
            ),
            LayerKind::TRgb => None,
        };
        layers.push(LayerWeights {
            name: entry.name.clone(),
            kind: entry.kind,
            resolution: entry.resolution,
            conv,
            conv_bias: Array1::zeros(out_c),
            affine,
            noise,
        });
    }

    Ok(GeneratorWeights {
        config: config.clone(),
        table,
        mapping,
        const_input,
        layers,
    })
}

/// A named tensor reference in canonical archive order.
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
}

impl GeneratorWeights {
    pub fn layer(&self, name: &str) -> Option<&LayerWeights> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// All tensors in canonical order: mapping layers, the constant input,
    /// then per styled layer its conv, bias, affine pair and noise buffer.
    pub fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        for (i, lin) in self.mapping.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("mapping_{i}.weight"),
                shape: lin.weight.shape().to_vec(),
                data: lin.weight.as_slice().unwrap(),
            });
            out.push(NamedTensor {
                name: format!("mapping_{i}.bias"),
                shape: lin.bias.shape().to_vec(),
                data: lin.bias.as_slice().unwrap(),
            });
        }
        out.push(NamedTensor {
            name: "const_input".into(),
            shape: self.const_input.shape().to_vec(),
            data: self.const_input.as_slice().unwrap(),
        });
        for layer in &self.layers {
            out.push(NamedTensor {
                name: format!("{}.weight", layer.name),
                shape: layer.conv.shape().to_vec(),
                data: layer.conv.as_slice().unwrap(),
            });
            out.push(NamedTensor {
                name: format!("{}.bias", layer.name),
                shape: layer.conv_bias.shape().to_vec(),
                data: layer.conv_bias.as_slice().unwrap(),
            });
            out.push(NamedTensor {
                name: format!("affine_{}.weight", layer.name),
                shape: layer.affine.weight.shape().to_vec(),
                data: layer.affine.weight.as_slice().unwrap(),
            });
            out.push(NamedTensor {
                name: format!("affine_{}.bias", layer.name),
                shape: layer.affine.bias.shape().to_vec(),
                data: layer.affine.bias.as_slice().unwrap(),
            });
            if let Some(noise) = &layer.noise {
                out.push(NamedTensor {
                    name: format!("noise_{}", layer.name),
                    shape: noise.shape().to_vec(),
                    data: noise.as_slice().unwrap(),
                });
            }
        }
        out
    }

    /// Bit-level equality across every named tensor.
    pub fn bits_eq(&self, other: &GeneratorWeights) -> bool {
        if self.config != other.config {
            return false;
        }
        let a = self.named_tensors();
        let b = other.named_tensors();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.name == y.name
                    && x.shape == y.shape
                    && x.data
                        .iter()
                        .zip(y.data.iter())
                        .all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let a = init_weights(&cfg, 7).unwrap();
        let b = init_weights(&cfg, 7).unwrap();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = GeneratorConfig::default();
        let a = init_weights(&cfg, 1).unwrap();
        let b = init_weights(&cfg, 2).unwrap();
        assert!(!a.bits_eq(&b));
    }

    #[test]
    fn affine_bias_is_one() {
        let cfg = GeneratorConfig::default();
        let w = init_weights(&cfg, 3).unwrap();
        for layer in &w.layers {
            assert!(layer.affine.bias.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn every_table_entry_has_one_affine_pair() {
        let cfg = GeneratorConfig {
            output_resolution: 16,
            ..GeneratorConfig::default()
        };
        let w = init_weights(&cfg, 0).unwrap();
        assert_eq!(w.layers.len(), w.table.len());
        for (layer, entry) in w.layers.iter().zip(w.table.entries()) {
            assert_eq!(layer.name, entry.name);
            assert_eq!(layer.affine.weight.nrows(), entry.style_width);
            assert_eq!(layer.conv.shape()[1], entry.style_width);
        }
    }

    #[test]
    fn named_tensor_order_is_stable() {
        let cfg = GeneratorConfig {
            output_resolution: 8,
            mapping_depth: 2,
            ..GeneratorConfig::default()
        };
        let w = init_weights(&cfg, 0).unwrap();
        let names: Vec<String> = w.named_tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(
            names,
            vec![
                "mapping_0.weight",
                "mapping_0.bias",
                "mapping_1.weight",
                "mapping_1.bias",
                "const_input",
                "conv_4.weight",
                "conv_4.bias",
                "affine_conv_4.weight",
                "affine_conv_4.bias",
                "noise_conv_4",
                "trgb_4.weight",
                "trgb_4.bias",
                "affine_trgb_4.weight",
                "affine_trgb_4.bias",
                "conv0_8.weight",
                "conv0_8.bias",
                "affine_conv0_8.weight",
                "affine_conv0_8.bias",
                "noise_conv0_8",
                "conv1_8.weight",
                "conv1_8.bias",
                "affine_conv1_8.weight",
                "affine_conv1_8.bias",
                "noise_conv1_8",
                "trgb_8.weight",
                "trgb_8.bias",
                "affine_trgb_8.weight",
                "affine_trgb_8.bias",
            ]
        );
    }
}
