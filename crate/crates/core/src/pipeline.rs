//! Glue between windows, images and the classifier.
//!
//! Model inputs always go through 8-bit quantization before the area resize,
//! so an image pair encoded in memory and the same pair read back from PNG
//! give identical predictions.

use thiserror::Error;

use crate::imaging::{encode_window, resize_area, EncodingConfig, ImagePair, ImagingError};
use crate::model::train::LabeledSet;
use crate::model::{Model, ModelError, ModelInput, Prediction};
use crate::signal::{window_at, window_ends, DeriveConfig, SignalError, SignalFrame, Window, WindowSpec};
use crate::synth::{visit_windows, SynthConfig, SynthError, WindowRef};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Shrinks a stored image pair to the model input size.
pub fn model_input(pair: &ImagePair, input_size: usize) -> ModelInput {
    let shrink = |img: &crate::imaging::ImageTensor| resize_area(&img.quantized(), input_size, input_size);
    ModelInput { line: shrink(&pair.line), texture: shrink(&pair.texture) }
}

pub fn encode_input(window: &Window, encoding: &EncodingConfig, input_size: usize) -> Result<ModelInput, ImagingError> {
    Ok(model_input(&encode_window(window, encoding)?, input_size))
}

/// Settings shared by every stage that turns signal into model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub derive: DeriveConfig,
    pub window: WindowSpec,
    pub encoding: EncodingConfig,
    pub input_size: usize,
}

/// Generates, encodes and labels the referenced synthetic windows.
pub fn synth_labeled_set(
    synth: &SynthConfig,
    spec: &InputSpec,
    refs: &[WindowRef],
) -> Result<LabeledSet, PipelineError> {
    let mut set = LabeledSet::default();
    visit_windows(synth, &spec.derive, &spec.window, refs, |r, w| -> Result<(), PipelineError> {
        let target = r.label.target().expect("planned windows are annotated");
        set.push(encode_input(&w, &spec.encoding, spec.input_size)?, target);
        Ok(())
    })?;
    Ok(set)
}

/// One decision on the stride grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    /// Window end time, seconds.
    pub t_s: f64,
    pub probability: f64,
    pub alarm: bool,
}

const TRACE_BATCH: usize = 16;

/// Predictions for every stride-grid window whose end time lies in
/// `[from_s, to_s]`.
pub fn trace(
    model: &Model<f32>,
    frame: &SignalFrame,
    spec: &InputSpec,
    from_s: f64,
    to_s: f64,
    threshold: f64,
) -> Result<Vec<TracePoint>, PipelineError> {
    let (lookback, stride) = spec.window.samples(frame.sample_rate_hz)?;
    let ends: Vec<usize> = window_ends(frame.len(), stride)
        .filter(|&e| {
            let t = frame.start_time + e as f64 / frame.sample_rate_hz;
            from_s <= t && t <= to_s
        })
        .collect();
    let mut out = Vec::with_capacity(ends.len());
    for chunk in ends.chunks(TRACE_BATCH) {
        let mut inputs = Vec::with_capacity(chunk.len());
        let mut times = Vec::with_capacity(chunk.len());
        for &end in chunk {
            let w = window_at(frame, end, lookback);
            times.push(w.t_end);
            inputs.push(encode_input(&w, &spec.encoding, spec.input_size)?);
        }
        for (t_s, p) in times.into_iter().zip(model.predict_proba(&inputs)?) {
            let Prediction { probability, alarm } = Prediction::new(p, threshold);
            out.push(TracePoint { t_s, probability, alarm });
        }
    }
    Ok(out)
}

/// Time of the first alarm in a trace.
pub fn first_alarm(trace: &[TracePoint]) -> Option<f64> {
    trace.iter().find(|p| p.alarm).map(|p| p.t_s)
}
