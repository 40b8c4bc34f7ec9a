//! Cross-domain style mixing on a miniature style-based generator.
//!
//! The crate provides the full pipeline: a from-scratch generator with
//! modulated convolutions and tRGB skips, layer swapping between two weight
//! sets, optimization-based projection into W or W+, per-character latent
//! banks, StyleSpace mixing with tRGB replacement, a desk-scale adversarial
//! fine-tuning loop on procedural datasets, and the tRGB perturbation
//! analysis used to isolate color effects from structure.

pub mod analysis;
pub mod archive;
pub mod autodiff;
pub mod bank;
pub mod config;
pub mod dataset;
pub mod error;
pub mod image_io;
pub mod inversion;
pub mod latent;
pub mod latent_ops;
pub mod layer_swap;
pub mod optim;
pub mod pipeline;
pub mod selfcheck;
pub mod synthesis;
pub mod training;
pub mod weights;

pub use config::{build_layer_table, GeneratorConfig, LayerKind, LayerTable, NoiseMode};
pub use error::{Error, Result};
pub use image_io::ImageTensor;
pub use latent::{LatentW, LatentZ, MixLevel, StyleCode, StyleEntry, WPlusCode};
pub use weights::{init_weights, GeneratorWeights};
