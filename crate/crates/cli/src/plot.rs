//! Probability-trace figure: load on top, probability below with a dashed
//! alarm-threshold line.

use bedexit::imaging::{draw_line, Canvas, Rgb};
use bedexit::pipeline::TracePoint;

pub const WIDTH: usize = 960;
pub const HEIGHT: usize = 480;
const MARGIN: i64 = 10;
const LOAD_COLOR: Rgb = [0, 0, 0];
const PROBABILITY_COLOR: Rgb = [0, 160, 0];
const THRESHOLD_COLOR: Rgb = [220, 0, 0];
const DASH: i64 = 8;
const GAP: i64 = 6;

/// `load` spans `[start_s, start_s + duration_s)`; trace points are placed on
/// the same time axis.
pub fn render_trace(load: &[f64], start_s: f64, duration_s: f64, trace: &[TracePoint], threshold: f64) -> Canvas {
    let mut canvas = Canvas::new(WIDTH, HEIGHT, [255, 255, 255]);
    let (x0, x1) = (MARGIN, WIDTH as i64 - 1 - MARGIN);
    let half = HEIGHT as i64 / 2;
    canvas.plot_series_scaled(load, None, x0, x1, MARGIN, half - MARGIN, LOAD_COLOR);

    let (top, bottom) = (half + MARGIN, HEIGHT as i64 - 1 - MARGIN);
    let y_of = |p: f64| bottom - (p.clamp(0.0, 1.0) * (bottom - top) as f64).round() as i64;
    let x_of = |t: f64| x0 + (((t - start_s) / duration_s).clamp(0.0, 1.0) * (x1 - x0) as f64).round() as i64;

    let y_thr = y_of(threshold);
    let mut x = x0;
    while x <= x1 {
        draw_line(&mut canvas, (x, y_thr), ((x + DASH - 1).min(x1), y_thr), THRESHOLD_COLOR);
        x += DASH + GAP;
    }

    let points: Vec<(i64, i64)> = trace.iter().map(|p| (x_of(p.t_s), y_of(p.probability))).collect();
    if let Some(&first) = points.first() {
        canvas.put(first.0, first.1, PROBABILITY_COLOR);
    }
    for w in points.windows(2) {
        draw_line(&mut canvas, w[0], w[1], PROBABILITY_COLOR);
    }
    canvas
}
