//! Time-series to image encodings.
//!
//! Two images are produced per window: an RGB line plot of the four channels
//! in a 2x2 grid, and a texture image whose three channels are the recurrence
//! plot, Markov transition field and Gramian angular summation field of the
//! (PAA-downsampled) load channel.

mod fields;
mod lineplot;
mod paa;
pub mod png;
mod resize;

pub use fields::{
    encode_gasf, encode_mtf, encode_rp, mtf_bins, mtf_transition_matrix, rescale_unit, rp_epsilon_from_quantile,
    SquareMatrix,
};
pub use lineplot::{draw_line, encode_line_plot, Canvas, Rgb, LINE_PALETTE, QUADRANT_MARGIN};
pub use paa::paa_downsample;
pub use resize::{resize_area, resize_bilinear, resize_bilinear_plane};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Window;

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("png: {0}")]
    Png(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    /// Load-channel length after PAA, the side of the RP/MTF/GASF matrices.
    pub series_len_n: usize,
    pub rp_epsilon_quantile: f64,
    pub mtf_bins_q: usize,
    pub image_size: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { series_len_n: 224, rp_epsilon_quantile: 0.10, mtf_bins_q: 8, image_size: 224 }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<(), ImagingError> {
        let bad = |msg: String| Err(ImagingError::InvalidParam(msg));
        if self.series_len_n < 2 || self.image_size < 2 {
            return bad("series_len_n and image_size must be at least 2".into());
        }
        if self.series_len_n > self.image_size * 4 {
            return bad(format!("series_len_n {} exceeds 4 x image_size", self.series_len_n));
        }
        if self.mtf_bins_q < 2 || self.mtf_bins_q > self.series_len_n {
            return bad(format!("mtf_bins_q {} must lie in 2..=series_len_n", self.mtf_bins_q));
        }
        if !(self.rp_epsilon_quantile > 0.0 && self.rp_epsilon_quantile <= 1.0) {
            return bad(format!("rp_epsilon_quantile {} must lie in (0, 1]", self.rp_epsilon_quantile));
        }
        Ok(())
    }
}

/// `height x width x 3` image with values in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ImagingError> {
        if height == 0 || width == 0 || data.len() != height * width * CHANNELS {
            return Err(ImagingError::Shape(format!("{} values for {height}x{width}x3", data.len())));
        }
        // branch-free so the scan vectorizes; NaN fails both comparisons
        if !data.iter().fold(true, |ok, &v| ok & (v >= 0.0) & (v <= 1.0)) {
            let v = data.iter().find(|v| !(0.0..=1.0).contains(*v)).expect("some value is out of range");
            return Err(ImagingError::InvalidParam(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; height * width * CHANNELS]).expect("valid fill")
    }

    /// Interleaves three `height x width` planes.
    pub fn from_planes(height: usize, width: usize, planes: [&[f64]; 3]) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for i in 0..height * width {
            for p in planes {
                data.push(p[i].clamp(0.0, 1.0) as f32);
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).map(|&v| f64::from(v)).collect()
    }

    /// 8-bit quantization, `round(v * 255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self, ImagingError> {
        Self::new(height, width, bytes.iter().map(|&b| f32::from(b) / 255.0).collect())
    }

    /// Round trip through 8-bit storage, as the image would be read back from PNG.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.height, self.width, &self.to_rgb8()).expect("quantized image is valid")
    }
}

/// RP, MTF and GASF of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMatrices {
    pub rp: SquareMatrix,
    pub mtf: SquareMatrix,
    pub gasf: SquareMatrix,
}

impl TextureMatrices {
    pub fn compute(series: &[f64], config: &EncodingConfig) -> Result<Self, ImagingError> {
        let eps = rp_epsilon_from_quantile(series, config.rp_epsilon_quantile)?;
        Ok(Self {
            rp: encode_rp(series, eps)?,
            mtf: encode_mtf(series, config.mtf_bins_q)?,
            gasf: encode_gasf(series)?,
        })
    }
}

/// Stacks RP, MTF and `(GASF + 1) / 2` as channels, each bilinearly resized
/// to `image_size`.
pub fn stack_texture_image(tm: &TextureMatrices, image_size: usize) -> Result<ImageTensor, ImagingError> {
    let n = tm.rp.n();
    if tm.mtf.n() != n || tm.gasf.n() != n {
        return Err(ImagingError::Shape(format!(
            "texture sides differ: {} / {} / {}",
            n,
            tm.mtf.n(),
            tm.gasf.n()
        )));
    }
    let gasf: Vec<f64> = tm.gasf.data().iter().map(|g| (g + 1.0) / 2.0).collect();
    let planes = [tm.rp.data(), tm.mtf.data(), &gasf[..]]
        .map(|p| resize_bilinear_plane(p, n, n, image_size, image_size));
    ImageTensor::from_planes(image_size, image_size, [&planes[0], &planes[1], &planes[2]])
}

/// Texture image of the window's load channel.
pub fn encode_texture(window: &Window, config: &EncodingConfig) -> Result<ImageTensor, ImagingError> {
    config.validate()?;
    let series = paa_downsample(&window.load, config.series_len_n)?;
    stack_texture_image(&TextureMatrices::compute(&series, config)?, config.image_size)
}

/// Line-plot and texture images of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub line: ImageTensor,
    pub texture: ImageTensor,
}

pub fn encode_window(window: &Window, config: &EncodingConfig) -> Result<ImagePair, ImagingError> {
    Ok(ImagePair { line: encode_line_plot(window, config.image_size)?, texture: encode_texture(window, config)? })
}
