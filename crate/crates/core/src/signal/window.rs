use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{SignalError, SignalFrame};

/// Look-back length and decision stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub lookback_s: f64,
    pub stride_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { lookback_s: 10_800.0, stride_s: 60.0 }
    }
}

impl WindowSpec {
    /// Look-back and stride converted to whole samples.
    pub fn samples(&self, sample_rate_hz: f64) -> Result<(usize, usize), SignalError> {
        let to_samples = |secs: f64, what: &str| {
            let exact = secs * sample_rate_hz;
            let n = exact.round();
            if !(secs > 0.0) || !exact.is_finite() || n < 1.0 || (exact - n).abs() > 1e-6 {
                return Err(SignalError::WindowSpec(format!(
                    "{what} {secs} s is not a positive whole number of samples at {sample_rate_hz} Hz"
                )));
            }
            Ok(n as usize)
        };
        Ok((to_samples(self.lookback_s, "lookback")?, to_samples(self.stride_s, "stride")?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Transition,
    NonActive,
    Exit,
    Empty,
}

impl Label {
    /// Binary classification target, defined only for the two annotated classes.
    pub fn target(self) -> Option<u8> {
        match self {
            Label::Transition => Some(1),
            Label::NonActive => Some(0),
            Label::Exit | Label::Empty => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Transition => "transition",
            Label::NonActive => "non_active",
            Label::Exit => "exit",
            Label::Empty => "empty",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transition" => Ok(Label::Transition),
            "non_active" => Ok(Label::NonActive),
            "exit" => Ok(Label::Exit),
            "empty" => Ok(Label::Empty),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Annotated time span `[start_s, end_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
}

impl LabelInterval {
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }
}

/// Trailing slice of a frame ending (exclusively) at `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub load: Vec<f64>,
    pub vibration: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub in_bed_duration: Vec<f64>,
    pub t_end: f64,
    pub label: Option<Label>,
    /// Set when the look-back reached before the first sample and was left-padded.
    pub padded: bool,
}

impl Window {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn channels(&self) -> [&[f64]; 4] {
        [&self.load, &self.vibration, &self.occupancy, &self.in_bed_duration]
    }

    pub fn target(&self) -> Option<u8> {
        self.label.and_then(Label::target)
    }
}

/// Window end positions (exclusive sample indices) on the stride grid.
pub fn window_ends(frame_len: usize, stride: usize) -> impl Iterator<Item = usize> {
    (1..).map(move |k| k * stride).take_while(move |&e| e <= frame_len)
}

/// Cuts the `lookback`-sample window ending at sample index `end` (exclusive).
pub fn window_at(frame: &SignalFrame, end: usize, lookback: usize) -> Window {
    assert!(end >= 1 && end <= frame.len(), "window end {end} outside frame of {}", frame.len());
    let start = end.saturating_sub(lookback);
    let pad = lookback - (end - start);
    let cut = |series: &[f64]| -> Vec<f64> {
        let mut v = Vec::with_capacity(lookback);
        v.resize(pad, series[0]);
        v.extend_from_slice(&series[start..end]);
        v
    };
    let mut occupancy = Vec::with_capacity(lookback);
    occupancy.resize(pad, f64::from(frame.occupancy[0]));
    occupancy.extend(frame.occupancy[start..end].iter().map(|&o| f64::from(o)));
    Window {
        load: cut(&frame.load),
        vibration: cut(&frame.vibration),
        occupancy,
        in_bed_duration: cut(&frame.in_bed_duration),
        t_end: frame.start_time + end as f64 / frame.sample_rate_hz,
        label: None,
        padded: pad > 0,
    }
}

/// First annotated (transition / non-active) interval containing `t`.
pub fn label_at(intervals: &[LabelInterval], t: f64) -> Option<Label> {
    intervals
        .iter()
        .find(|iv| iv.label.target().is_some() && iv.contains(t))
        .map(|iv| iv.label)
}

/// One labeled window per stride step whose end time falls inside an
/// annotated interval.
pub fn extract_windows(
    frame: &SignalFrame,
    spec: &WindowSpec,
    intervals: &[LabelInterval],
) -> Result<Vec<Window>, SignalError> {
    let (lookback, stride) = spec.samples(frame.sample_rate_hz)?;
    Ok(window_ends(frame.len(), stride)
        .filter_map(|end| {
            let t_end = frame.start_time + end as f64 / frame.sample_rate_hz;
            label_at(intervals, t_end).map(|label| {
                let mut w = window_at(frame, end, lookback);
                w.label = Some(label);
                w
            })
        })
        .collect())
}
