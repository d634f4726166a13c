use super::{ImageTensor, ImagingError};
use crate::signal::Window;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

/// Channel colors in plotting order: load, vibration, occupancy, in-bed duration.
pub const LINE_PALETTE: [Rgb; 4] = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [0, 0, 0]];

/// Blank border inside each quadrant, pixels.
pub const QUADRANT_MARGIN: usize = 4;

/// 8-bit RGB raster with a software line primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, background: Rgb) -> Self {
        Self { width, height, pixels: vec![background; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Sets a pixel; coordinates outside the canvas are ignored.
    pub fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn to_image(&self) -> ImageTensor {
        ImageTensor::from_rgb8(self.height, self.width, &self.to_rgb8()).expect("canvas is a valid image")
    }

    /// Polyline through `values`, spread evenly across columns `x0..=x1` and
    /// min-max scaled into rows `y_top..=y_bottom` (larger values higher).
    /// A constant series is drawn at mid-height.
    pub fn plot_series(&mut self, values: &[f64], x0: i64, x1: i64, y_top: i64, y_bottom: i64, color: Rgb) {
        self.plot_series_scaled(values, None, x0, x1, y_top, y_bottom, color);
    }

    /// As [`Canvas::plot_series`] with an explicit `(min, max)` value range.
    #[allow(clippy::too_many_arguments)]
    pub fn plot_series_scaled(
        &mut self,
        values: &[f64],
        range: Option<(f64, f64)>,
        x0: i64,
        x1: i64,
        y_top: i64,
        y_bottom: i64,
        color: Rgb,
    ) {
        let n = values.len();
        if n == 0 {
            return;
        }
        let (lo, hi) = range.unwrap_or_else(|| {
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        });
        let span = hi - lo;
        let rows = (y_bottom - y_top) as f64;
        let cols = (x1 - x0) as f64;
        let map = |i: usize, v: f64| -> (i64, i64) {
            let x = if n == 1 { x0 } else { x0 + round_nonneg(i as f64 * cols / (n - 1) as f64) };
            let y = if span > 0.0 && span.is_finite() {
                y_bottom - round_nonneg(((v - lo) / span).clamp(0.0, 1.0) * rows)
            } else {
                y_top + (y_bottom - y_top) / 2
            };
            (x, y)
        };
        // Segments inside one column only cover the rows between their
        // endpoints, so a run of same-column points is one vertical span.
        let mut prev = map(0, values[0]);
        let (mut low, mut high) = (prev.1, prev.1);
        for (i, &v) in values.iter().enumerate().skip(1) {
            let p = map(i, v);
            if p.0 == prev.0 {
                low = low.min(p.1);
                high = high.max(p.1);
            } else {
                self.fill_column(prev.0, low, high, color);
                draw_line(self, prev, p, color);
                (low, high) = (p.1, p.1);
            }
            prev = p;
        }
        self.fill_column(prev.0, low, high, color);
    }

    fn fill_column(&mut self, x: i64, y0: i64, y1: i64, color: Rgb) {
        for y in y0..=y1 {
            self.put(x, y, color);
        }
    }
}

/// `t.round()` for finite `t >= 0` without the libm call.
fn round_nonneg(t: f64) -> i64 {
    let k = t as i64;
    if t - k as f64 >= 0.5 {
        k + 1
    } else {
        k
    }
}

/// Integer Bresenham segment, both endpoints inclusive.
pub fn draw_line(canvas: &mut Canvas, from: (i64, i64), to: (i64, i64), color: Rgb) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        canvas.put(x, y, color);
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Renders the four channels into a 2x2 grid on white: load top-left,
/// vibration top-right, occupancy bottom-left, in-bed duration bottom-right.
pub fn encode_line_plot(window: &Window, image_size: usize) -> Result<ImageTensor, ImagingError> {
    let channels = window.channels();
    let n = channels[0].len();
    if n == 0 || channels.iter().any(|c| c.len() != n) {
        return Err(ImagingError::Shape("window channels must be non-empty and equal length".into()));
    }
    let half = image_size / 2;
    if half <= 2 * QUADRANT_MARGIN {
        return Err(ImagingError::InvalidParam(format!("image size {image_size} too small for the 2x2 grid")));
    }
    let mut canvas = Canvas::new(image_size, image_size, WHITE);
    for (k, (series, color)) in channels.iter().zip(LINE_PALETTE).enumerate() {
        let (ox, oy) = ((k % 2 * half) as i64, (k / 2 * half) as i64);
        let m = QUADRANT_MARGIN as i64;
        let last = half as i64 - 1 - m;
        canvas.plot_series(series, ox + m, ox + last, oy + m, oy + last, color);
    }
    Ok(canvas.to_image())
}
