//! Generator architecture description and the canonical styled-layer table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASE_RESOLUTION: usize = 4;

/// How per-layer noise buffers are sourced during synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Buffers drawn once at weight init and shared by every forward pass.
    Fixed,
    /// Buffers derived from the `noise_seed` argument of each forward pass.
    Random,
}

/// Architecture description of the miniature style-based generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub mapping_depth: usize,
    pub output_resolution: usize,
    /// Channel schedule: channels(res) = clamp(channel_base / res, 4, channel_max).
    pub channel_base: usize,
    pub channel_max: usize,
    pub noise_mode: NoiseMode,
    pub demod_epsilon: f32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            latent_dim: 64,
            mapping_depth: 4,
            output_resolution: 32,
            channel_base: 512,
            channel_max: 64,
            noise_mode: NoiseMode::Fixed,
            demod_epsilon: 1e-8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.mapping_depth == 0 {
            return Err(Error::Config("mapping_depth must be positive".into()));
        }
        let r = self.output_resolution;
        if !r.is_power_of_two() || r < 2 * BASE_RESOLUTION {
            return Err(Error::Config(format!(
                "output_resolution must be a power of two >= {}, got {r}",
                2 * BASE_RESOLUTION
            )));
        }
        if self.channel_base < 4 || self.channel_max < 4 {
            return Err(Error::Config("channel schedule must allow >= 4 channels".into()));
        }
        if !(self.demod_epsilon > 0.0) {
            return Err(Error::Config("demod_epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn log2_resolution(&self) -> usize {
        self.output_resolution.trailing_zeros() as usize
    }

    /// Number of rows in a W+ code: 2*log2(R) - 2.
    pub fn num_ws(&self) -> usize {
        2 * self.log2_resolution() - 2
    }

    /// Number of styled layers: (2*log2(R) - 3) convs + (log2(R) - 1) tRGBs.
    pub fn num_styled_layers(&self) -> usize {
        3 * self.log2_resolution() - 4
    }

    /// Feature channels at a given resolution.
    pub fn channels(&self, resolution: usize) -> usize {
        (self.channel_base / resolution).clamp(4, self.channel_max)
    }

    /// Block resolutions from the base up to the output, doubling.
    pub fn resolutions(&self) -> impl Iterator<Item = usize> + '_ {
        (2..=self.log2_resolution()).map(|p| 1usize << p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    TRgb,
}

/// One styled layer in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    /// 1-based canonical index.
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub resolution: usize,
    /// Width of the layer's style vector (= input channels of the conv).
    pub style_width: usize,
    /// W+ row feeding this layer's affine.
    pub w_row: usize,
}

/// The canonical ordered list of styled layers with W+-row association.
///
/// Ordering is (resolution, conv0 -> conv1 -> tRGB); the base block has a
/// single conv. The tRGB of block b shares its W+ row with the first conv of
/// block b+1; the base block uses rows 0 (conv) and 1 (tRGB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTable {
    entries: Vec<LayerEntry>,
    num_ws: usize,
}

impl LayerTable {
    pub fn build(config: &GeneratorConfig) -> Result<LayerTable> {
        config.validate()?;
        let mut entries = Vec::with_capacity(config.num_styled_layers());
        let mut index = 1usize;
        let mut row = 0usize;
        for res in config.resolutions() {
            if res == BASE_RESOLUTION {
                entries.push(LayerEntry {
                    index,
                    name: format!("conv_{res}"),
                    kind: LayerKind::Conv,
                    resolution: res,
                    style_width: config.channels(res),
                    w_row: row,
                });
                index += 1;
            } else {
                entries.push(LayerEntry {
                    index,
                    name: format!("conv0_{res}"),
                    kind: LayerKind::Conv,
                    resolution: res,
                    // conv0 consumes the features of the previous block
                    style_width: config.channels(res / 2),
                    w_row: row,
                });
                index += 1;
                row += 1;
                entries.push(LayerEntry {
                    index,
                    name: format!("conv1_{res}"),
                    kind: LayerKind::Conv,
                    resolution: res,
                    style_width: config.channels(res),
                    w_row: row,
                });
                index += 1;
            }
            row += 1;
            entries.push(LayerEntry {
                index,
                name: format!("trgb_{res}"),
                kind: LayerKind::TRgb,
                resolution: res,
                style_width: config.channels(res),
                w_row: row,
            });
            index += 1;
        }
        let table = LayerTable {
            entries,
            num_ws: config.num_ws(),
        };
        debug_assert_eq!(table.len(), config.num_styled_layers());
        debug_assert!(table.entries.last().unwrap().w_row == config.num_ws() - 1);
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_ws(&self) -> usize {
        self.num_ws
    }

    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    /// Entry by 1-based canonical index.
    pub fn entry(&self, index: usize) -> &LayerEntry {
        &self.entries[index - 1]
    }

    pub fn trgb_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == LayerKind::TRgb)
            .count()
    }
}

/// Builds the canonical layer table for a config.
pub fn build_layer_table(config: &GeneratorConfig) -> Result<LayerTable> {
    LayerTable::build(config)
}
