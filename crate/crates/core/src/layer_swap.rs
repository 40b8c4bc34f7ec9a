//! Construction of a hybrid generator by transplanting high-resolution layers
//! of a fine-tuned weight set onto a source weight set.

use crate::config::BASE_RESOLUTION;
use crate::error::{Error, Result};
use crate::weights::GeneratorWeights;

/// Which side the layers at exactly `swap_resolution` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Layers at the swap resolution come from the target (default).
    Inclusive,
    /// Layers at the swap resolution stay with the source.
    Exclusive,
}

fn check_swap_args(
    source: &GeneratorWeights,
    target: &GeneratorWeights,
    swap_resolution: usize,
) -> Result<()> {
    if source.config != target.config {
        return Err(Error::Config(
            "source and target generators have different configs".into(),
        ));
    }
    let out = source.config.output_resolution;
    if !swap_resolution.is_power_of_two()
        || swap_resolution <= BASE_RESOLUTION
        || swap_resolution > out
    {
        return Err(Error::Config(format!(
            "swap_resolution {swap_resolution} must be a power of two in ({BASE_RESOLUTION}, {out}]"
        )));
    }
    Ok(())
}

/// Builds the hybrid: mapping network, constant input and every layer below
/// the threshold from `source`; every layer at/above it (per `boundary`) from
/// `target`. Each transplanted layer carries its conv, bias, affine pair and
/// noise buffer together.
pub fn swap_layers_with(
    source: &GeneratorWeights,
    target: &GeneratorWeights,
    swap_resolution: usize,
    boundary: Boundary,
) -> Result<GeneratorWeights> {
    check_swap_args(source, target, swap_resolution)?;
    let mut out = source.clone();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        let from_target = match boundary {
            Boundary::Inclusive => layer.resolution >= swap_resolution,
            Boundary::Exclusive => layer.resolution > swap_resolution,
        };
        if from_target {
            *layer = target.layers[i].clone();
        }
    }
    Ok(out)
}

/// [`swap_layers_with`] using the inclusive boundary.
pub fn swap_layers(
    source: &GeneratorWeights,
    target: &GeneratorWeights,
    swap_resolution: usize,
) -> Result<GeneratorWeights> {
    swap_layers_with(source, target, swap_resolution, Boundary::Inclusive)
}

/// Byte-level classification of one tensor in a swapped weight set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Matches the source (also reported when both parents are identical).
    Source,
    Target,
    /// Matches neither parent bit-for-bit; indicates a blend or corruption.
    Neither,
}

/// Classifies every named tensor of `swapped` against both parents by exact
/// byte equality. Ties resolve to `Source`.
pub fn provenance_report(
    swapped: &GeneratorWeights,
    source: &GeneratorWeights,
    target: &GeneratorWeights,
) -> Result<Vec<(String, Provenance)>> {
    if swapped.config != source.config || swapped.config != target.config {
        return Err(Error::Config(
            "provenance report requires identical configs".into(),
        ));
    }
    let sw = swapped.named_tensors();
    let src = source.named_tensors();
    let tgt = target.named_tensors();
    let bits_eq = |a: &[f32], b: &[f32]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    };
    Ok(sw
        .iter()
        .zip(src.iter().zip(tgt.iter()))
        .map(|(s, (a, b))| {
            debug_assert_eq!(s.name, a.name);
            let p = if bits_eq(s.data, a.data) {
                Provenance::Source
            } else if bits_eq(s.data, b.data) {
                Provenance::Target
            } else {
                Provenance::Neither
            };
            (s.name.clone(), p)
        })
        .collect())
}
