use bedexit::imaging::ImageTensor;
use bedexit::model::checkpoint;
use bedexit::model::ops::sigmoid;
use bedexit::model::optim::AdamW;
use bedexit::model::train::{evaluate, train, LabeledSet, TrainConfig};
use bedexit::model::{FusionMode, Modality, Model, ModelConfig, ModelError, ModelInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, size: usize) -> ImageTensor {
    ImageTensor::new(size, size, (0..size * size * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn random_inputs(seed: u64, n: usize, size: usize) -> Vec<ModelInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| ModelInput { line: random_image(&mut rng, size), texture: random_image(&mut rng, size) }).collect()
}

fn tiny(mode: FusionMode) -> ModelConfig {
    ModelConfig {
        input_size: 32,
        patch_size: 8,
        embed_dim: 16,
        attn_heads: 4,
        fusion_heads: 4,
        fusion_mode: mode,
        ..ModelConfig::default()
    }
}

/// Parameters spread well beyond the init scale so every path carries signal.
fn randomize(model: &mut Model<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params_mut() {
        let around_one = t.name.ends_with("gamma");
        for v in &mut t.data {
            let u = rng.random::<f64>() - 0.5;
            *v = if around_one { 1.0 + 0.6 * u } else { 0.8 * u };
        }
    }
}

/// Worst per-tensor error `max |a - n| / max(max |a|, max |n|, 1e-8)` between
/// the analytic gradient and central differences. The floor keeps tensors with
/// an exactly zero gradient (key biases) from dividing rounding noise by itself.
fn gradient_check(cfg: &ModelConfig) -> (f64, String) {
    let mut model = Model::<f64>::new(cfg, 1).unwrap();
    randomize(&mut model, 2);
    let inputs = random_inputs(3, 2, cfg.input_size);
    let labels = [1u8, 0];
    let mut grads = model.zero_grads();
    let fwd = model.forward(&inputs, None).unwrap();
    model.backward(&fwd, &labels, &mut grads);
    let h = 1e-4;
    let mut worst = (0.0, String::new());
    for ti in 0..model.params().len() {
        let mut max_diff: f64 = 0.0;
        let mut scale: f64 = 1e-8;
        for j in 0..model.params()[ti].data.len() {
            let orig = model.params()[ti].data[j];
            model.params_mut()[ti].data[j] = orig + h;
            let up = model.loss(&model.forward(&inputs, None).unwrap(), &labels);
            model.params_mut()[ti].data[j] = orig - h;
            let down = model.loss(&model.forward(&inputs, None).unwrap(), &labels);
            model.params_mut()[ti].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[ti][j];
            max_diff = max_diff.max((numeric - analytic).abs());
            scale = scale.max(numeric.abs()).max(analytic.abs());
        }
        let err = max_diff / scale;
        if err > worst.0 {
            worst = (err, model.params()[ti].name.clone());
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_fusion() {
    for mode in [FusionMode::EarlyConcat, FusionMode::MidConcat, FusionMode::Gated, FusionMode::Cross] {
        let (err, name) = gradient_check(&tiny(mode));
        assert!(err <= 1e-3, "{mode}: {name} relative error {err:e}");
    }
    for modality in [Modality::Line, Modality::Texture] {
        let cfg = ModelConfig { modality, num_blocks_per_stream: 1, ..tiny(FusionMode::Cross) };
        let (err, name) = gradient_check(&cfg);
        assert!(err <= 1e-3, "{modality}: {name} relative error {err:e}");
    }
}

#[test]
fn gradients_cover_partial_windows_and_dropout_free_paths() {
    // 40 / 8 = 5 tokens per side: windows of 16, 4, 4 and 1 tokens
    let cfg = ModelConfig { input_size: 40, num_blocks_per_stream: 1, ..tiny(FusionMode::Gated) };
    let (err, name) = gradient_check(&cfg);
    assert!(err <= 1e-3, "{name} relative error {err:e}");
}

#[test]
fn saturated_correct_batch_has_vanishing_gradient() {
    let cfg = tiny(FusionMode::Cross);
    let mut model = Model::<f64>::new(&cfg, 5).unwrap();
    model.param_mut("head.fc2.bias").unwrap().data[0] = 60.0;
    let inputs = random_inputs(6, 2, 32);
    let fwd = model.forward(&inputs, None).unwrap();
    let mut g = model.zero_grads();
    let loss = model.backward(&fwd, &[1, 1], &mut g);
    let norm: f64 = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    assert!(loss < 1e-20 && norm <= 1e-6, "loss {loss:e} norm {norm:e}");
}

#[test]
fn gradients_are_deterministic() {
    let cfg = tiny(FusionMode::Cross);
    let model = Model::<f32>::new(&cfg, 9).unwrap();
    let inputs = random_inputs(10, 3, 32);
    let run = || {
        let mut g = model.zero_grads();
        model.backward(&model.forward(&inputs, None).unwrap(), &[0, 1, 1], &mut g);
        g
    };
    assert_eq!(run(), run());
}

#[test]
fn batch_loss_is_mean_of_per_sample_losses() {
    let model = Model::<f64>::new(&tiny(FusionMode::Gated), 4).unwrap();
    let inputs = random_inputs(8, 5, 32);
    let labels = [1u8, 0, 0, 1, 1];
    let batch = model.loss(&model.forward(&inputs, None).unwrap(), &labels);
    let mut total = 0.0;
    for i in 0..5 {
        let one = &inputs[i..i + 1];
        total += model.loss(&model.forward(one, None).unwrap(), &labels[i..i + 1]);
    }
    assert!((batch - total / 5.0).abs() < 1e-12);
}

/// Copies every tensor that exists under the same name and shape in `from`.
fn copy_shared(to: &mut Model<f64>, from: &Model<f64>) {
    for t in to.params_mut() {
        if let Some(src) = from.param(&t.name).filter(|s| s.shape == t.shape) {
            t.data.clone_from(&src.data);
        }
    }
}

#[test]
fn cross_with_zero_value_and_output_projections_is_mid_concat() {
    let mut cross = Model::<f64>::new(&tiny(FusionMode::Cross), 1).unwrap();
    randomize(&mut cross, 3);
    for t in cross.params_mut() {
        if t.name.starts_with("fusion.") && (t.name.contains(".attn.v.") || t.name.contains(".attn.o.")) {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut mid = Model::<f64>::new(&tiny(FusionMode::MidConcat), 7).unwrap();
    copy_shared(&mut mid, &cross);
    let inputs = random_inputs(4, 3, 32);
    assert_eq!(cross.fused(&inputs).unwrap(), mid.fused(&inputs).unwrap());
    assert_eq!(cross.logits(&inputs).unwrap(), mid.logits(&inputs).unwrap());
}

#[test]
fn gated_with_zero_gate_is_the_mean_of_pooled_streams() {
    let mut gated = Model::<f64>::new(&tiny(FusionMode::Gated), 1).unwrap();
    randomize(&mut gated, 5);
    for name in ["fusion.gate.weight", "fusion.gate.bias"] {
        gated.param_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut mid = Model::<f64>::new(&tiny(FusionMode::MidConcat), 2).unwrap();
    copy_shared(&mut mid, &gated);
    let inputs = random_inputs(11, 2, 32);
    let pooled = mid.fused(&inputs).unwrap();
    let fused = gated.fused(&inputs).unwrap();
    for (row, out) in pooled.chunks(32).zip(fused.chunks(16)) {
        for j in 0..16 {
            assert_eq!(out[j], (row[j] + row[16 + j]) / 2.0);
        }
    }
}

#[test]
fn mid_concat_fusion_concatenates_pooled_vectors() {
    let mid = Model::<f64>::new(&tiny(FusionMode::MidConcat), 2).unwrap();
    let (t, d) = (16, 16);
    let a: Vec<f64> = (0..t * d).map(|i| (i as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..t * d).map(|i| (i as f64 * 0.11).cos()).collect();
    let fused = mid.fuse(&[a.clone(), b.clone()], 1).unwrap();
    for j in 0..d {
        let ma: f64 = (0..t).map(|r| a[r * d + j]).sum::<f64>() / t as f64;
        let mb: f64 = (0..t).map(|r| b[r * d + j]).sum::<f64>() / t as f64;
        assert!((fused[j] - ma).abs() < 1e-15 && (fused[d + j] - mb).abs() < 1e-15);
    }
}

#[test]
fn pooled_fusions_ignore_a_shared_token_permutation() {
    let (t, d) = (16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a: Vec<f64> = (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect();
    let b: Vec<f64> = (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect();
    let perm: Vec<usize> = (0..t).map(|i| (i * 7 + 3) % t).collect();
    let permute = |x: &[f64]| -> Vec<f64> { perm.iter().flat_map(|&r| x[r * d..(r + 1) * d].to_vec()).collect() };
    for mode in [FusionMode::MidConcat, FusionMode::Gated, FusionMode::Cross] {
        let mut m = Model::<f64>::new(&tiny(mode), 3).unwrap();
        randomize(&mut m, 4);
        let x = m.fuse(&[a.clone(), b.clone()], 1).unwrap();
        let y = m.fuse(&[permute(&a), permute(&b)], 1).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12, "{mode}: {u} vs {v}");
        }
    }
}

#[test]
fn encoder_output_shape_and_determinism() {
    let cfg = ModelConfig::default();
    let model = Model::<f32>::new(&cfg, 1).unwrap();
    let inputs = random_inputs(1, 1, 64);
    let tokens = model.stream_tokens(&inputs).unwrap();
    assert_eq!(tokens.len(), 2);
    assert_eq!(tokens[0].len(), 64 * 64);
    assert_eq!(tokens, model.stream_tokens(&inputs).unwrap());
}

#[test]
fn wrong_input_size_is_rejected() {
    let model = Model::<f32>::new(&ModelConfig::default(), 1).unwrap();
    let inputs = random_inputs(1, 1, 32);
    assert!(matches!(model.logits(&inputs), Err(ModelError::Shape(_))));
}

#[test]
fn zero_model_predicts_one_half() {
    let model = Model::<f32>::zeros(&tiny(FusionMode::Cross)).unwrap();
    let inputs = random_inputs(2, 4, 32);
    for p in model.predict(&inputs, 0.5).unwrap() {
        assert_eq!(p.probability, 0.5);
        assert!(p.alarm);
    }
    assert!(model.predict(&inputs, 1.01).unwrap().iter().all(|p| !p.alarm));
}

#[test]
fn head_on_a_known_vector() {
    // with identity-like first layer and unit second layer the logit is
    // sum gelu(x_j) over the fused vector
    let mut model = Model::<f64>::zeros(&tiny(FusionMode::Gated)).unwrap();
    let d = 16;
    let w1 = &mut model.param_mut("head.fc1.weight").unwrap().data;
    for j in 0..d {
        w1[j * d + j] = 1.0;
    }
    model.param_mut("head.fc2.weight").unwrap().data.iter_mut().for_each(|v| *v = 1.0);
    // streams are all-zero so each pooled vector is the final layer-norm beta
    for name in ["line.norm.beta", "texture.norm.beta"] {
        let beta = &mut model.param_mut(name).unwrap().data;
        for (j, b) in beta.iter_mut().enumerate() {
            *b = j as f64 / 8.0 - 1.0;
        }
    }
    let gelu = |x: f64| 0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x.powi(3))).tanh());
    let want: f64 = (0..d).map(|j| gelu(j as f64 / 8.0 - 1.0)).sum();
    let got = model.logits(&random_inputs(3, 1, 32)).unwrap()[0];
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn raising_the_output_bias_raises_probability() {
    let mut model = Model::<f64>::new(&tiny(FusionMode::Cross), 8).unwrap();
    let inputs = random_inputs(12, 3, 32);
    let mut prev = model.predict_proba(&inputs).unwrap();
    for _ in 0..5 {
        model.param_mut("head.fc2.bias").unwrap().data[0] += 0.5;
        let next = model.predict_proba(&inputs).unwrap();
        assert!(next.iter().zip(&prev).all(|(n, p)| n > p));
        prev = next;
    }
    assert!(sigmoid(30.0f64) < 1.0);
}

#[test]
fn zero_lr_step_keeps_parameters_bit_identical() {
    let mut model = Model::<f32>::new(&tiny(FusionMode::Cross), 3).unwrap();
    let before = model.params().to_vec();
    let inputs = random_inputs(1, 2, 32);
    let mut g = model.zero_grads();
    model.backward(&model.forward(&inputs, None).unwrap(), &[0, 1], &mut g);
    AdamW::new(model.params()).step(model.params_mut(), &g, 0.0, 0.01);
    assert_eq!(model.params(), &before[..]);
}

/// Class 1 lights the left half of both images, class 0 the right half.
fn toy_set(n: usize, flip: bool) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut set = LabeledSet::default();
    for i in 0..n {
        let y = (i % 2) as u8;
        let img = |rng: &mut ChaCha8Rng| {
            let data = (0..16 * 16 * 3)
                .map(|k| {
                    let x = (k / 3) % 16;
                    let lit = (x < 8) == (y == 1);
                    let noise = 0.2 * rng.random::<f32>();
                    if lit { 0.8 + noise } else { noise }
                })
                .collect();
            ImageTensor::new(16, 16, data).unwrap()
        };
        let input = ModelInput { line: img(&mut rng), texture: img(&mut rng) };
        set.push(input, if flip { 1 - y } else { y });
    }
    set
}

fn toy_model() -> ModelConfig {
    ModelConfig {
        input_size: 16,
        patch_size: 4,
        embed_dim: 16,
        num_blocks_per_stream: 1,
        attn_heads: 2,
        fusion_heads: 2,
        ..ModelConfig::default()
    }
}

fn toy_train() -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, batch_size: 8, max_steps: 200, eval_every: 10, patience: 50, ..Default::default() }
}

#[test]
fn separable_toy_set_is_learned_and_flips_with_labels() {
    let set = toy_set(40, false);
    let out = train(&toy_model(), &toy_train(), &set, &set).unwrap();
    assert_eq!(evaluate(&out.model, &set).unwrap().1, 1.0, "log: {:?}", out.log);

    let flipped = toy_set(40, true);
    let out_f = train(&toy_model(), &toy_train(), &flipped, &flipped).unwrap();
    let p = out.model.predict_proba(&set.inputs).unwrap();
    let q = out_f.model.predict_proba(&set.inputs).unwrap();
    for (a, b) in p.iter().zip(&q) {
        assert_ne!(*a > 0.5, *b > 0.5);
    }
}

#[test]
fn patience_runs_out_after_exactly_patience_evaluations() {
    let set = toy_set(12, false);
    let cfg = TrainConfig { learning_rate: 0.0, batch_size: 4, max_steps: 1000, eval_every: 3, patience: 4, ..Default::default() };
    let out = train(&toy_model(), &cfg, &set, &set).unwrap();
    assert_eq!(out.steps_run, 12);
    assert_eq!(out.evaluations, 5);
    assert_eq!(out.best_step, 0);
    assert_eq!(out.log.iter().filter(|r| r.split == "val").count(), 5);
}

#[test]
fn training_is_reproducible_to_the_byte() {
    let set = toy_set(16, false);
    let cfg = TrainConfig { max_steps: 20, eval_every: 5, batch_size: 4, ..Default::default() };
    let a = train(&toy_model(), &cfg, &set, &set).unwrap();
    let b = train(&toy_model(), &cfg, &set, &set).unwrap();
    assert_eq!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&b.model));
    assert_eq!(a.log, b.log);
    let dropout = ModelConfig { dropout: 0.2, ..toy_model() };
    let c = train(&dropout, &cfg, &set, &set).unwrap();
    let d = train(&dropout, &cfg, &set, &set).unwrap();
    assert_eq!(checkpoint::to_bytes(&c.model), checkpoint::to_bytes(&d.model));
}

#[test]
fn empty_splits_are_rejected() {
    let set = toy_set(4, false);
    let empty = LabeledSet::default();
    assert_eq!(train(&toy_model(), &toy_train(), &empty, &set).unwrap_err(), ModelError::EmptySplit("train"));
    assert_eq!(train(&toy_model(), &toy_train(), &set, &empty).unwrap_err(), ModelError::EmptySplit("val"));
}
