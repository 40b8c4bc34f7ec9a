//! Image values: `[-1, 1]` floats internally, 8-bit RGB PNG at file boundaries.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use ndarray::{Array3, ArrayD};

use crate::error::{Error, Result};

/// An RGB image, `[height, width, 3]` with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Array3<f32>,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>) -> ImageTensor {
        debug_assert_eq!(data.shape()[2], 3);
        ImageTensor { data }
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn resolution(&self) -> usize {
        debug_assert_eq!(self.height(), self.width());
        self.height()
    }

    /// Bit-level equality of all pixels.
    pub fn bits_eq(&self, other: &ImageTensor) -> bool {
        self.data.shape() == other.data.shape()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Converts a `[1, 3, H, W]` or `[3, H, W]` tensor into HWC layout.
    pub fn from_chw(chw: &ArrayD<f32>) -> ImageTensor {
        let v = if chw.ndim() == 4 {
            assert_eq!(chw.shape()[0], 1);
            chw.index_axis(ndarray::Axis(0), 0).to_owned()
        } else {
            chw.to_owned().into_dimensionality().unwrap()
        };
        let (c, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        assert_eq!(c, 3);
        let mut out = Array3::zeros((h, w, 3));
        for ci in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out[[y, x, ci]] = v[[ci, y, x]];
                }
            }
        }
        ImageTensor::new(out)
    }

    /// CHW view `[3, H, W]` used by synthesis and the discriminator.
    pub fn to_chw(&self) -> Array3<f32> {
        let (h, w) = (self.height(), self.width());
        let mut out = Array3::zeros((3, h, w));
        for y in 0..h {
            for x in 0..w {
                for ci in 0..3 {
                    out[[ci, y, x]] = self.data[[y, x, ci]];
                }
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = (self.height(), self.width());
        let mut img: RgbImage = ImageBuffer::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = [
                    float_to_u8(self.data[[y, x, 0]]),
                    float_to_u8(self.data[[y, x, 1]]),
                    float_to_u8(self.data[[y, x, 2]]),
                ];
                img.put_pixel(x as u32, y as u32, Rgb(px));
            }
        }
        img
    }

    pub fn from_rgb8(img: &RgbImage) -> ImageTensor {
        let (w, h) = img.dimensions();
        let mut data = Array3::zeros((h as usize, w as usize, 3));
        for y in 0..h {
            for x in 0..w {
                let px = img.get_pixel(x, y);
                for ci in 0..3 {
                    data[[y as usize, x as usize, ci]] = u8_to_float(px.0[ci]);
                }
            }
        }
        ImageTensor::new(data)
    }

    /// Encodes to PNG bytes (deterministic for identical pixels).
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<ImageTensor> {
        let img = image::open(path)?.to_rgb8();
        Ok(ImageTensor::from_rgb8(&img))
    }

    /// Horizontally mirrored copy.
    pub fn flipped_horizontal(&self) -> ImageTensor {
        let (h, w) = (self.height(), self.width());
        let mut out = Array3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                for ci in 0..3 {
                    out[[y, x, ci]] = self.data[[y, w - 1 - x, ci]];
                }
            }
        }
        ImageTensor::new(out)
    }

    /// Number of distinct 8-bit RGB triples after quantization.
    pub fn unique_color_count(&self) -> usize {
        let mut set = std::collections::BTreeSet::new();
        let (h, w) = (self.height(), self.width());
        for y in 0..h {
            for x in 0..w {
                let key = [
                    float_to_u8(self.data[[y, x, 0]]),
                    float_to_u8(self.data[[y, x, 1]]),
                    float_to_u8(self.data[[y, x, 2]]),
                ];
                set.insert(key);
            }
        }
        set.len()
    }

    pub fn check_resolution(&self, expected: usize) -> Result<()> {
        if self.height() != expected || self.width() != expected {
            return Err(Error::Shape(format!(
                "image is {}x{}, expected {expected}x{expected}",
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }
}

pub fn float_to_u8(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

pub fn u8_to_float(v: u8) -> f32 {
    v as f32 / 255.0 * 2.0 - 1.0
}
