use std::io::Write;
use std::path::Path;

use bedexit::imaging::encode_window;
use bedexit::imaging::png::{encode_canvas, encode_image};
use bedexit::metrics::EvalReport;
use bedexit::model::checkpoint::{load_expecting, to_bytes};
use bedexit::model::train::{train as fit, write_log, TrainOutcome};
use bedexit::model::{Model, Prediction};
use bedexit::pipeline::{trace as trace_frame, TracePoint};
use bedexit::signal::io::{write_labels, write_raw_csv};
use bedexit::signal::{derive_frame, SignalFrame};
use bedexit::synth::{cut_windows, generate_episode, plan_windows, split_episodes, EpisodeIndex, Split};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::files::{
    echo_config, episode_dir, episode_id, image_paths, load_split, manifest_path, read_episode, read_file,
    read_raw_file, read_splits, write_atomic, write_with, ManifestRow, SplitRow,
};
use crate::plot::render_trace;

/// Writes every episode's raw stream and annotations plus the split table.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<usize, CliError> {
    let assignment = split_episodes(cfg.synth.n_episodes, cfg.seed);
    for episode in 0..cfg.synth.n_episodes {
        let ep = generate_episode(&cfg.synth, episode as u64)?;
        let dir = episode_dir(out, episode);
        write_with(&dir.join("raw.csv"), |w| write_raw_csv(w, &ep.raw))?;
        write_with(&dir.join("labels.csv"), |w| write_labels(w, &ep.intervals))?;
    }
    write_with(&out.join("splits.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (episode, &split) in assignment.iter().enumerate() {
            csv.serialize(SplitRow { episode, split })?;
        }
        csv.flush().map_err(csv::Error::from)
    })?;
    echo_config(out, cfg)?;
    Ok(cfg.synth.n_episodes)
}

fn window_id(episode: usize, end: usize) -> String {
    format!("{}_{end:09}", episode_id(episode))
}

/// Selects windows from a synth directory and writes their image pairs.
/// Returns the number of pairs per split.
pub fn encode(cfg: &RunConfig, data: &Path, out: &Path) -> Result<[usize; 3], CliError> {
    let fs = cfg.signal.sample_rate_hz;
    let spec = cfg.window_spec();
    let (lookback, _) = spec.samples(fs)?;
    let splits = read_splits(data)?;
    let mut episodes = Vec::with_capacity(splits.len());
    for row in &splits {
        let (raw, intervals) = read_episode(data, row.episode, fs)?;
        episodes.push(EpisodeIndex {
            episode: row.episode,
            split: row.split,
            n_samples: raw.len(),
            start_time: raw.start_time(),
            intervals,
        });
    }
    let plan = plan_windows(&episodes, fs, &spec, cfg.synth.positive_fraction, cfg.seed)?;
    let derive = cfg.derive_config();
    let mut counts = [0; 3];
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let refs = plan.split(split);
        let mut manifest = Vec::with_capacity(refs.len());
        for group in refs.chunk_by(|a, b| a.episode == b.episode) {
            let (raw, _) = read_episode(data, group[0].episode, fs)?;
            let frame = derive_frame(&raw, &derive)?;
            cut_windows(&frame, lookback, group, |r, w| -> Result<(), CliError> {
                let id = window_id(r.episode, r.end);
                let pair = encode_window(&w, &cfg.encoding)?;
                let (line, texture) = image_paths(out, split, &id);
                write_atomic(&line, &encode_image(&pair.line)?)?;
                write_atomic(&texture, &encode_image(&pair.texture)?)?;
                manifest.push(ManifestRow { id, label: r.label, t_end: r.t_end });
                Ok(())
            })?;
        }
        write_with(&manifest_path(out, split), |w| {
            let mut csv = csv::Writer::from_writer(w);
            for row in &manifest {
                csv.serialize(row)?;
            }
            csv.flush().map_err(csv::Error::from)
        })?;
        counts[k] = manifest.len();
    }
    echo_config(out, cfg)?;
    Ok(counts)
}

/// Trains on the encoded train split with early stopping on val.
pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<TrainOutcome, CliError> {
    let (_, train_set) = load_split(data, Split::Train, cfg.model.input_size)?;
    let (_, val_set) = load_split(data, Split::Val, cfg.model.input_size)?;
    let outcome = fit(&cfg.model, &cfg.training, &train_set, &val_set)?;
    write_atomic(&out.join("model.ckpt"), &to_bytes(&outcome.model))?;
    write_with(&out.join("train_log.csv"), |w| write_log(w, &outcome.log))?;
    echo_config(out, cfg)?;
    Ok(outcome)
}

pub fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<Model<f32>, CliError> {
    Ok(load_expecting(&read_file(checkpoint)?, &cfg.model)?)
}

/// Scores one encoded split and writes `metrics.json`.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, data: &Path, split: Split, out: &Path) -> Result<EvalReport, CliError> {
    let model = load_model(cfg, checkpoint)?;
    let (_, set) = load_split(data, split, cfg.model.input_size)?;
    let probs = model.predict_proba(&set.inputs)?;
    let report = EvalReport::compute(&probs, &set.labels, cfg.alarm_threshold)?;
    write_with(&out.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n").map_err(serde_json::Error::io)
    })?;
    echo_config(out, cfg)?;
    Ok(report)
}

/// Where predictions come from.
#[derive(Debug, Clone, Copy)]
pub enum PredictInput<'a> {
    /// Every stride-grid window of a raw recording.
    Raw(&'a Path),
    /// The windows of an encoded split.
    Split { data: &'a Path, split: Split },
}

#[derive(Debug, Serialize)]
struct WindowPrediction<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    t_end: f64,
    #[serde(flatten)]
    prediction: Prediction,
}

fn frame_from_raw(cfg: &RunConfig, path: &Path) -> Result<SignalFrame, CliError> {
    let raw = read_raw_file(path, cfg.signal.sample_rate_hz)?;
    Ok(derive_frame(&raw, &cfg.derive_config())?)
}

/// Writes one JSON object per window to `predictions.jsonl`.
pub fn predict(cfg: &RunConfig, checkpoint: &Path, input: PredictInput<'_>, out: &Path) -> Result<usize, CliError> {
    let model = load_model(cfg, checkpoint)?;
    let mut buf = Vec::new();
    let mut emit = |row: &WindowPrediction<'_>| -> Result<(), CliError> {
        serde_json::to_writer(&mut buf, row).map_err(|e| CliError::Data(e.to_string()))?;
        buf.push(b'\n');
        Ok(())
    };
    let n = match input {
        PredictInput::Raw(path) => {
            let frame = frame_from_raw(cfg, path)?;
            let points = trace_frame(&model, &frame, &cfg.input_spec(), f64::NEG_INFINITY, f64::INFINITY, cfg.alarm_threshold)?;
            for p in &points {
                let prediction = Prediction { probability: p.probability, alarm: p.alarm };
                emit(&WindowPrediction { id: None, label: None, t_end: p.t_s, prediction })?;
            }
            points.len()
        }
        PredictInput::Split { data, split } => {
            let (rows, set) = load_split(data, split, cfg.model.input_size)?;
            let preds = model.predict(&set.inputs, cfg.alarm_threshold)?;
            for (row, prediction) in rows.iter().zip(preds) {
                emit(&WindowPrediction {
                    id: Some(&row.id),
                    label: Some(row.label.as_str()),
                    t_end: row.t_end,
                    prediction,
                })?;
            }
            rows.len()
        }
    };
    write_atomic(&out.join("predictions.jsonl"), &buf)?;
    echo_config(out, cfg)?;
    Ok(n)
}

#[derive(Debug, Clone, Copy)]
pub enum TraceInput<'a> {
    Raw(&'a Path),
    Episode { data: &'a Path, episode: usize },
}

#[derive(Debug, Serialize)]
struct TraceRow {
    t_s: f64,
    probability: f64,
    alarm: bool,
}

/// Probability at every stride step of a recording, as `trace.csv` and
/// `trace.png`.
pub fn trace(cfg: &RunConfig, checkpoint: &Path, input: TraceInput<'_>, out: &Path) -> Result<Vec<TracePoint>, CliError> {
    let model = load_model(cfg, checkpoint)?;
    let frame = match input {
        TraceInput::Raw(path) => frame_from_raw(cfg, path)?,
        TraceInput::Episode { data, episode } => {
            let (raw, _) = read_episode(data, episode, cfg.signal.sample_rate_hz)?;
            derive_frame(&raw, &cfg.derive_config())?
        }
    };
    let points = trace_frame(&model, &frame, &cfg.input_spec(), f64::NEG_INFINITY, f64::INFINITY, cfg.alarm_threshold)?;
    write_with(&out.join("trace.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for p in &points {
            csv.serialize(TraceRow { t_s: p.t_s, probability: p.probability, alarm: p.alarm })?;
        }
        csv.flush().map_err(csv::Error::from)
    })?;
    let canvas = render_trace(&frame.load, frame.start_time, frame.duration_s(), &points, cfg.alarm_threshold);
    write_atomic(&out.join("trace.png"), &encode_canvas(&canvas)?)?;
    echo_config(out, cfg)?;
    Ok(points)
}
