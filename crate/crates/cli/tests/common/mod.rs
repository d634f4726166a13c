#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A run small enough for the whole pipeline to finish in seconds.
pub const TINY_CONFIG: &str = r#"
seed = 42

[signal]
lookback_s = 600.0
stride_s = 60.0

[encoding]
series_len_n = 32
image_size = 32

[model]
input_size = 16
patch_size = 4
embed_dim = 8
attn_heads = 2
fusion_heads = 2
num_blocks_per_stream = 1

[training]
batch_size = 8
max_steps = 10
eval_every = 5

[synth]
n_episodes = 10
stable_hours = [0.5, 1.0]
empty_before_minutes = [3.0, 6.0]
empty_after_minutes = [2.0, 4.0]
"#;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bedexit"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Directories produced by [`pipeline`].
pub struct Run {
    pub synth: PathBuf,
    pub encoded: PathBuf,
    pub model: PathBuf,
    pub eval: PathBuf,
    pub predict: PathBuf,
    pub trace: PathBuf,
}

/// synth, encode, train, eval, predict and trace under `root`.
pub fn pipeline(root: &Path, config: &Path) -> Run {
    let d = |n: &str| root.join(n);
    let r = Run {
        synth: d("synth"),
        encoded: d("encoded"),
        model: d("model"),
        eval: d("eval"),
        predict: d("predict"),
        trace: d("trace"),
    };
    let c = s(config);
    run_ok(&["synth", "--config", c, "--out", s(&r.synth)]);
    run_ok(&["encode", "--config", c, "--data", s(&r.synth), "--out", s(&r.encoded)]);
    run_ok(&["train", "--config", c, "--data", s(&r.encoded), "--out", s(&r.model)]);
    let ckpt = r.model.join("model.ckpt");
    run_ok(&["eval", "--config", c, "--data", s(&r.encoded), "--checkpoint", s(&ckpt), "--split", "test", "--out", s(&r.eval)]);
    run_ok(&["predict", "--config", c, "--data", s(&r.encoded), "--checkpoint", s(&ckpt), "--split", "test", "--out", s(&r.predict)]);
    run_ok(&["trace", "--config", c, "--data", s(&r.synth), "--episode", "0", "--checkpoint", s(&ckpt), "--out", s(&r.trace)]);
    r
}
