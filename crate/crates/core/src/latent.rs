//! Latent-space value types: Z, W, W+ codes, style codes and mixing levels.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::{GeneratorConfig, LayerKind, LayerTable};
use crate::error::{Error, Result};

/// A point in the input latent space Z.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentZ(pub Array1<f32>);

/// A point in the intermediate latent space W.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentW(pub Array1<f32>);

/// Per-layer latent matrix in W+: one row per mapping-network output slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPlusCode {
    /// Shape `[num_ws, latent_dim]`.
    pub rows: Array2<f32>,
}

impl WPlusCode {
    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn validate(&self, config: &GeneratorConfig) -> Result<()> {
        if self.num_rows() != config.num_ws() || self.latent_dim() != config.latent_dim {
            return Err(Error::Shape(format!(
                "W+ code is {}x{}, config expects {}x{}",
                self.num_rows(),
                self.latent_dim(),
                config.num_ws(),
                config.latent_dim
            )));
        }
        if !self.rows.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("W+ code has non-finite entries".into()));
        }
        Ok(())
    }
}

/// One style vector with its tRGB flag, in canonical layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEntry {
    pub values: Array1<f32>,
    pub is_trgb: bool,
}

/// Style parameters in S: one post-affine vector per styled layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleCode {
    pub entries: Vec<StyleEntry>,
    pub table: LayerTable,
}

impl StyleCode {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks widths and flags against the owning table.
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.table.len() {
            return Err(Error::Shape(format!(
                "style code has {} entries, table has {}",
                self.entries.len(),
                self.table.len()
            )));
        }
        for (entry, layer) in self.entries.iter().zip(self.table.entries()) {
            if entry.values.len() != layer.style_width {
                return Err(Error::Shape(format!(
                    "style width {} at layer {} (expected {})",
                    entry.values.len(),
                    layer.name,
                    layer.style_width
                )));
            }
            if entry.is_trgb != (layer.kind == LayerKind::TRgb) {
                return Err(Error::Shape(format!(
                    "tRGB flag mismatch at layer {}",
                    layer.name
                )));
            }
        }
        Ok(())
    }

    pub fn same_table(&self, other: &StyleCode) -> Result<()> {
        if self.table != other.table {
            return Err(Error::TableMismatch(
                "style codes come from different layer tables".into(),
            ));
        }
        Ok(())
    }

    /// Bit-level equality of all entries.
    pub fn bits_eq(&self, other: &StyleCode) -> bool {
        self.table == other.table
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| {
                    a.is_trgb == b.is_trgb
                        && a.values.len() == b.values.len()
                        && a.values
                            .iter()
                            .zip(b.values.iter())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}

/// Style mixing level m, validated against `num_ws` (0..=num_ws inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixLevel(usize);

impl MixLevel {
    pub fn new(m: usize, config: &GeneratorConfig) -> Result<MixLevel> {
        Self::for_num_ws(m, config.num_ws())
    }

    pub fn for_num_ws(m: usize, num_ws: usize) -> Result<MixLevel> {
        if m > num_ws {
            return Err(Error::MixLevelOutOfRange { m, max: num_ws });
        }
        Ok(MixLevel(m))
    }

    pub fn get(self) -> usize {
        self.0
    }
}
