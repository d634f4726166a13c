//! Seeded generator of labeled bed-load episodes and the window sets built
//! from them.
//!
//! An episode runs: empty bed, entry ramp, stable in-bed period with sparse
//! repositioning bumps, pre-exit transition (growing oscillation plus a slow
//! drift toward the bed edge), exit drop, empty bed. Shapes are drawn from
//! the `EpisodeShape` stream and measurement noise from `EpisodeNoise`, both
//! keyed by `(seed, episode index)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, Purpose};
use crate::signal::{
    derive_frame, label_at, window_at, window_ends, DeriveConfig, Label, LabelInterval, RawStream, SignalError,
    SignalFrame, Window, WindowSpec,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("infeasible dataset: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Closed range `[min, max]`, written as a two-element array in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        self.0 + (self.1 - self.0) * rng.random::<f64>()
    }

    fn check(self, name: &str) -> Result<(), SynthError> {
        if !(self.0.is_finite() && self.1.is_finite() && 0.0 <= self.0 && self.0 <= self.1) {
            return Err(SynthError::Config(format!("{name} = [{}, {}] must satisfy 0 <= min <= max", self.0, self.1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
    /// Set from the run-level sample rate.
    #[serde(skip)]
    pub sample_rate_hz: f64,
    pub n_episodes: usize,
    pub body_weight_kg: Span,
    pub tare_kg: Span,
    pub transition_minutes: Span,
    pub stable_hours: Span,
    pub reposition_rate_per_hour: f64,
    pub noise_std_kg: f64,
    pub positive_fraction: f64,
    pub empty_before_minutes: Span,
    pub empty_after_minutes: Span,
    pub entry_seconds: Span,
    pub exit_seconds: Span,
    /// Bump height as a fraction of body weight.
    pub reposition_fraction: Span,
    pub reposition_seconds: Span,
    pub oscillation_hz: Span,
    /// Peak oscillation amplitude, fraction of body weight.
    pub oscillation_fraction: Span,
    /// Load lost to edge drift by the end of the transition, fraction of body weight.
    pub drift_fraction: Span,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sample_rate_hz: 25.0,
            n_episodes: 200,
            body_weight_kg: Span(45.0, 95.0),
            tare_kg: Span(3.0, 8.0),
            transition_minutes: Span(1.0, 10.0),
            stable_hours: Span(2.0, 8.0),
            reposition_rate_per_hour: 2.0,
            noise_std_kg: 0.05,
            positive_fraction: 0.5,
            empty_before_minutes: Span(10.0, 30.0),
            empty_after_minutes: Span(5.0, 15.0),
            entry_seconds: Span(2.0, 5.0),
            exit_seconds: Span(2.0, 5.0),
            reposition_fraction: Span(0.03, 0.10),
            reposition_seconds: Span(5.0, 20.0),
            oscillation_hz: Span(0.7, 3.0),
            oscillation_fraction: Span(0.05, 0.15),
            drift_fraction: Span(0.08, 0.20),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let spans = [
            (self.body_weight_kg, "body_weight_kg"),
            (self.tare_kg, "tare_kg"),
            (self.transition_minutes, "transition_minutes"),
            (self.stable_hours, "stable_hours"),
            (self.empty_before_minutes, "empty_before_minutes"),
            (self.empty_after_minutes, "empty_after_minutes"),
            (self.entry_seconds, "entry_seconds"),
            (self.exit_seconds, "exit_seconds"),
            (self.reposition_fraction, "reposition_fraction"),
            (self.reposition_seconds, "reposition_seconds"),
            (self.oscillation_hz, "oscillation_hz"),
            (self.oscillation_fraction, "oscillation_fraction"),
            (self.drift_fraction, "drift_fraction"),
        ];
        for (span, name) in spans {
            span.check(name)?;
        }
        let fail = |msg: String| Err(SynthError::Config(msg));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return fail(format!("sample_rate_hz {} must be positive", self.sample_rate_hz));
        }
        if self.n_episodes == 0 {
            return fail("n_episodes must be at least 1".into());
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return fail(format!("positive_fraction {} outside (0, 1)", self.positive_fraction));
        }
        if !(self.noise_std_kg >= 0.0 && self.reposition_rate_per_hour >= 0.0) {
            return fail("noise_std_kg and reposition_rate_per_hour must be >= 0".into());
        }
        if self.body_weight_kg.0 <= 0.0 {
            return fail("body weight must be positive".into());
        }
        if self.oscillation_hz.1 >= self.sample_rate_hz / 2.0 {
            return fail(format!("oscillation up to {} Hz is not below Nyquist", self.oscillation_hz.1));
        }
        if self.oscillation_fraction.1 + self.drift_fraction.1 + self.reposition_fraction.1 >= 1.0 {
            return fail("oscillation, drift and reposition fractions must sum below 1".into());
        }
        if self.transition_minutes.0 <= 0.0 || self.stable_hours.0 <= 0.0 {
            return fail("transition and stable phases must have positive length".into());
        }
        Ok(())
    }
}

/// A repositioning bump: Hann-shaped load change starting at `start_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reposition {
    pub start_s: f64,
    pub duration_s: f64,
    pub amplitude_kg: f64,
}

/// Everything about an episode except its measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    pub index: u64,
    pub tare_kg: f64,
    pub weight_kg: f64,
    pub entry_start_s: f64,
    pub entry_s: f64,
    pub transition_start_s: f64,
    pub transition_s: f64,
    pub exit_s: f64,
    pub end_s: f64,
    pub oscillation_hz: f64,
    pub oscillation_peak_kg: f64,
    pub oscillation_phase: f64,
    pub drift_kg: f64,
    pub repositions: Vec<Reposition>,
}

fn smoothstep(tau: f64) -> f64 {
    (1.0 - (PI * tau).cos()) / 2.0
}

impl EpisodePlan {
    /// Labeled exit time: end of the transition, start of the drop.
    pub fn exit_start_s(&self) -> f64 {
        self.transition_start_s + self.transition_s
    }

    pub fn exit_end_s(&self) -> f64 {
        self.exit_start_s() + self.exit_s
    }

    pub fn n_samples(&self, sample_rate_hz: f64) -> usize {
        (self.end_s * sample_rate_hz).ceil() as usize
    }

    /// Tiling of `[0, end_s]`: empty, non-active, transition, exit, empty.
    pub fn intervals(&self) -> Vec<LabelInterval> {
        let iv = |start_s, end_s, label| LabelInterval { start_s, end_s, label };
        vec![
            iv(0.0, self.entry_start_s, Label::Empty),
            iv(self.entry_start_s, self.transition_start_s, Label::NonActive),
            iv(self.transition_start_s, self.exit_start_s(), Label::Transition),
            iv(self.exit_start_s(), self.exit_end_s(), Label::Exit),
            iv(self.exit_end_s(), self.end_s, Label::Empty),
        ]
    }

    /// Occupied from the middle of the entry ramp to the middle of the exit drop.
    pub fn occupied_at(&self, t: f64) -> bool {
        self.entry_start_s + self.entry_s / 2.0 <= t && t < self.exit_start_s() + self.exit_s / 2.0
    }

    /// Noise-free load without repositioning bumps.
    fn base_load(&self, t: f64) -> f64 {
        let w = self.weight_kg;
        let body = if t < self.entry_start_s {
            0.0
        } else if t < self.entry_start_s + self.entry_s {
            w * smoothstep((t - self.entry_start_s) / self.entry_s)
        } else if t < self.transition_start_s {
            w
        } else if t < self.exit_start_s() {
            let dt = t - self.transition_start_s;
            let tau = dt / self.transition_s;
            let envelope = self.oscillation_peak_kg * (0.25 + 0.75 * tau);
            w - self.drift_kg * tau + envelope * (2.0 * PI * self.oscillation_hz * dt + self.oscillation_phase).sin()
        } else if t < self.exit_end_s() {
            (w - self.drift_kg) * (1.0 - smoothstep((t - self.exit_start_s()) / self.exit_s))
        } else {
            0.0
        };
        self.tare_kg + body
    }
}

pub fn plan_episode(config: &SynthConfig, index: u64) -> EpisodePlan {
    let mut rng = stream(config.seed, Purpose::EpisodeShape, index);
    let tare_kg = config.tare_kg.draw(&mut rng);
    let weight_kg = config.body_weight_kg.draw(&mut rng);
    let entry_start_s = config.empty_before_minutes.draw(&mut rng) * 60.0;
    let entry_s = config.entry_seconds.draw(&mut rng);
    let stable_s = config.stable_hours.draw(&mut rng) * 3600.0;
    let transition_s = config.transition_minutes.draw(&mut rng) * 60.0;
    let exit_s = config.exit_seconds.draw(&mut rng);
    let after_s = config.empty_after_minutes.draw(&mut rng) * 60.0;
    let oscillation_hz = config.oscillation_hz.draw(&mut rng);
    let oscillation_peak_kg = config.oscillation_fraction.draw(&mut rng) * weight_kg;
    let oscillation_phase = rng.random::<f64>() * 2.0 * PI;
    let drift_kg = config.drift_fraction.draw(&mut rng) * weight_kg;

    let stable_start = entry_start_s + entry_s;
    let transition_start_s = stable_start + stable_s;
    let mut repositions = Vec::new();
    if config.reposition_rate_per_hour > 0.0 {
        let rate_per_s = config.reposition_rate_per_hour / 3600.0;
        let mut t = stable_start;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / rate_per_s;
            let duration_s = config.reposition_seconds.draw(&mut rng);
            let size = config.reposition_fraction.draw(&mut rng) * weight_kg;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            if t + duration_s >= transition_start_s {
                break;
            }
            repositions.push(Reposition { start_s: t, duration_s, amplitude_kg: sign * size });
        }
    }
    EpisodePlan {
        index,
        tare_kg,
        weight_kg,
        entry_start_s,
        entry_s,
        transition_start_s,
        transition_s,
        exit_s,
        end_s: transition_start_s + transition_s + exit_s + after_s,
        oscillation_hz,
        oscillation_peak_kg,
        oscillation_phase,
        drift_kg,
        repositions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub plan: EpisodePlan,
    pub raw: RawStream,
    pub intervals: Vec<LabelInterval>,
    /// Generator ground-truth occupancy per sample.
    pub occupancy: Vec<u8>,
}

pub fn generate_episode(config: &SynthConfig, index: u64) -> Result<Episode, SynthError> {
    config.validate()?;
    let plan = plan_episode(config, index);
    let fs = config.sample_rate_hz;
    let n = plan.n_samples(fs);
    let mut load: Vec<f64> = (0..n).map(|i| plan.base_load(i as f64 / fs)).collect();
    for bump in &plan.repositions {
        let first = (bump.start_s * fs).ceil() as usize;
        let last = (((bump.start_s + bump.duration_s) * fs).floor() as usize).min(n - 1);
        for (i, v) in load.iter_mut().enumerate().take(last + 1).skip(first) {
            let tau = (i as f64 / fs - bump.start_s) / bump.duration_s;
            *v += bump.amplitude_kg * (PI * tau).sin().powi(2);
        }
    }
    let mut rng = stream(config.seed, Purpose::EpisodeNoise, index);
    for (i, v) in load.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        let t = i as f64 / fs;
        // the exit drop stays noise-free so it is monotone
        if !(plan.exit_start_s() <= t && t < plan.exit_end_s()) {
            *v += config.noise_std_kg * z;
        }
        *v = v.max(0.0);
    }
    let occupancy = (0..n).map(|i| u8::from(plan.occupied_at(i as f64 / fs))).collect();
    let raw = RawStream::from_uniform(fs, 0.0, load)?;
    Ok(Episode { intervals: plan.intervals(), plan, raw, occupancy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

/// Seeded episode-level 60/20/20 assignment (counts rounded, test takes the rest).
pub fn split_episodes(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut stream(seed, Purpose::Split, 0));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = ((0.2 * n as f64).round() as usize).min(n - n_train);
    let mut out = vec![Split::Test; n];
    for (rank, &ep) in order.iter().enumerate() {
        if rank < n_train {
            out[ep] = Split::Train;
        } else if rank < n_train + n_val {
            out[ep] = Split::Val;
        }
    }
    out
}

/// What window planning needs to know about one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeIndex {
    pub episode: usize,
    pub split: Split,
    pub n_samples: usize,
    pub start_time: f64,
    pub intervals: Vec<LabelInterval>,
}

/// A selected window: its episode and exclusive end sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRef {
    pub episode: usize,
    pub end: usize,
    pub t_end: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetPlan {
    pub train: Vec<WindowRef>,
    pub val: Vec<WindowRef>,
    pub test: Vec<WindowRef>,
}

impl DatasetPlan {
    pub fn split(&self, split: Split) -> &[WindowRef] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn positive_fraction(&self, split: Split) -> f64 {
        let refs = self.split(split);
        refs.iter().filter(|r| r.label == Label::Transition).count() as f64 / refs.len().max(1) as f64
    }
}

/// Keeps every transition window on the stride grid and draws non-active
/// windows without replacement so each split's positive share is
/// `positive_fraction`.
pub fn plan_windows(
    episodes: &[EpisodeIndex],
    sample_rate_hz: f64,
    spec: &WindowSpec,
    positive_fraction: f64,
    seed: u64,
) -> Result<DatasetPlan, SynthError> {
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(SynthError::Config(format!("positive_fraction {positive_fraction} outside (0, 1)")));
    }
    let (_, stride) = spec.samples(sample_rate_hz)?;
    let mut plan = DatasetPlan::default();
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for ep in episodes.iter().filter(|e| e.split == split) {
            for end in window_ends(ep.n_samples, stride) {
                let t_end = ep.start_time + end as f64 / sample_rate_hz;
                let wref = |label| WindowRef { episode: ep.episode, end, t_end, label };
                match label_at(&ep.intervals, t_end) {
                    Some(Label::Transition) => pos.push(wref(Label::Transition)),
                    Some(Label::NonActive) => neg.push(wref(Label::NonActive)),
                    _ => {}
                }
            }
        }
        if pos.is_empty() {
            return Err(SynthError::Infeasible(format!("{split} split has no transition windows")));
        }
        let wanted = (pos.len() as f64 * (1.0 - positive_fraction) / positive_fraction).round() as usize;
        if wanted > neg.len() {
            return Err(SynthError::Infeasible(format!(
                "{split} split needs {wanted} non-active windows for positive_fraction {positive_fraction}, only {} exist",
                neg.len()
            )));
        }
        let mut rng = stream(seed, Purpose::NegativeSampling, k as u64);
        let mut chosen = rand::seq::index::sample(&mut rng, neg.len(), wanted).into_vec();
        chosen.sort_unstable();
        let mut refs = pos;
        refs.extend(chosen.into_iter().map(|i| neg[i]));
        refs.sort_by_key(|r| (r.episode, r.end));
        match split {
            Split::Train => plan.train = refs,
            Split::Val => plan.val = refs,
            Split::Test => plan.test = refs,
        }
    }
    Ok(plan)
}

/// Episode split assignment plus the selected windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub assignment: Vec<Split>,
    pub plan: DatasetPlan,
}

/// Plans the windowed dataset from episode plans alone; no signal is generated.
pub fn build_dataset(config: &SynthConfig, spec: &WindowSpec) -> Result<Dataset, SynthError> {
    config.validate()?;
    if config.n_episodes < 10 {
        return Err(SynthError::Config(format!("n_episodes {} < 10", config.n_episodes)));
    }
    let assignment = split_episodes(config.n_episodes, config.seed);
    let episodes: Vec<EpisodeIndex> = assignment
        .iter()
        .enumerate()
        .map(|(i, &split)| {
            let plan = plan_episode(config, i as u64);
            EpisodeIndex {
                episode: i,
                split,
                n_samples: plan.n_samples(config.sample_rate_hz),
                start_time: 0.0,
                intervals: plan.intervals(),
            }
        })
        .collect();
    let plan = plan_windows(&episodes, config.sample_rate_hz, spec, config.positive_fraction, config.seed)?;
    Ok(Dataset { assignment, plan })
}

/// Cuts the referenced windows of one episode's frame; `refs` must all
/// belong to that episode.
pub fn cut_windows<E>(
    frame: &SignalFrame,
    lookback: usize,
    refs: &[WindowRef],
    mut f: impl FnMut(&WindowRef, Window) -> Result<(), E>,
) -> Result<(), E> {
    for r in refs {
        let mut w = window_at(frame, r.end, lookback);
        w.label = Some(r.label);
        f(r, w)?;
    }
    Ok(())
}

/// Generates each referenced episode once, derives its frame and hands
/// every referenced window to `f` in `refs` order.
pub fn visit_windows<E: From<SynthError>>(
    config: &SynthConfig,
    derive: &DeriveConfig,
    spec: &WindowSpec,
    refs: &[WindowRef],
    mut f: impl FnMut(&WindowRef, Window) -> Result<(), E>,
) -> Result<(), E> {
    let (lookback, _) = spec.samples(config.sample_rate_hz).map_err(SynthError::from)?;
    for group in refs.chunk_by(|a, b| a.episode == b.episode) {
        let episode = generate_episode(config, group[0].episode as u64)?;
        let frame = derive_frame(&episode.raw, derive).map_err(SynthError::from)?;
        cut_windows(&frame, lookback, group, &mut f)?;
    }
    Ok(())
}
