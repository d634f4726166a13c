use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{
    attention, attention_backward, bce_with_logit, gelu, gelu_backward, layer_norm, layer_norm_backward, linear,
    linear_backward, sigmoid, AttnCache, AttnGrads, AttnWeights, LnCache,
};
use super::{Attn, CrossDir, Fusion, Lin, Ln, Modality, Model, ModelError, ModelInput, Scalar, Stream};
use crate::imaging::ImageTensor;

/// One gradient buffer per parameter tensor, in parameter order.
pub type Grads<T> = Vec<Vec<T>>;

struct BlockCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    attn: AttnCache<T>,
    mask1: Option<Vec<T>>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    f1: Vec<T>,
    a1: Vec<T>,
    mask2: Option<Vec<T>>,
}

struct StreamCache<T> {
    patches: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    norm: LnCache<T>,
    out: Vec<T>,
}

struct CrossCache<T> {
    ln_q: LnCache<T>,
    nq: Vec<T>,
    ln_kv: LnCache<T>,
    nkv: Vec<T>,
    attn: AttnCache<T>,
}

enum FusionCache<T> {
    Pooled,
    Gated { z: Vec<T>, g: Vec<T>, a: Vec<T>, b: Vec<T> },
    Cross { line: CrossCache<T>, texture: CrossCache<T> },
}

/// Activations kept from a forward pass for the matching backward pass.
pub struct Forward<T> {
    batch: usize,
    streams: Vec<StreamCache<T>>,
    fusion: FusionCache<T>,
    fused: Vec<T>,
    f1: Vec<T>,
    a1: Vec<T>,
    pub logits: Vec<T>,
}

#[derive(Clone, Copy)]
enum Source {
    Line,
    Texture,
    Joint,
}

fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

fn sum<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

fn mean_pool<T: Scalar>(x: &[T], tokens: usize, d: usize) -> Vec<T> {
    let inv = T::of(1.0 / tokens as f64);
    x.chunks(tokens * d)
        .flat_map(|sample| {
            let mut acc = vec![T::zero(); d];
            for row in sample.chunks(d) {
                add_into(&mut acc, row);
            }
            acc.into_iter().map(move |v| v * inv)
        })
        .collect()
}

fn mean_pool_backward<T: Scalar>(dp: &[T], tokens: usize, d: usize) -> Vec<T> {
    let inv = T::of(1.0 / tokens as f64);
    dp.chunks(d).flat_map(|row| (0..tokens).flat_map(move |_| row.iter().map(move |&v| v * inv))).collect()
}

/// Row-wise `[a | b]`.
fn concat_cols<T: Scalar>(a: &[T], b: &[T], d: usize) -> Vec<T> {
    a.chunks(d).zip(b.chunks(d)).flat_map(|(x, y)| x.iter().chain(y).copied()).collect()
}

fn split_cols<T: Scalar>(x: &[T], d: usize) -> (Vec<T>, Vec<T>) {
    let (mut a, mut b) = (Vec::with_capacity(x.len() / 2), Vec::with_capacity(x.len() / 2));
    for row in x.chunks(2 * d) {
        a.extend_from_slice(&row[..d]);
        b.extend_from_slice(&row[d..]);
    }
    (a, b)
}

fn dropout_mask<T: Scalar>(rng: Option<&mut ChaCha8Rng>, n: usize, p: f64) -> Option<Vec<T>> {
    let rng = rng.filter(|_| p > 0.0)?;
    let keep = T::of(1.0 / (1.0 - p));
    Some((0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect())
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v = *v * k;
        }
    }
}

fn pair<'a, T>(g: &'a mut Grads<T>, l: &Lin) -> (&'a mut [T], &'a mut [T]) {
    let [w, b] = g.get_disjoint_mut([l.w, l.b]).expect("distinct parameter ids");
    (w, b)
}

fn ln_pair<'a, T>(g: &'a mut Grads<T>, l: &Ln) -> (&'a mut [T], &'a mut [T]) {
    let [a, b] = g.get_disjoint_mut([l.g, l.b]).expect("distinct parameter ids");
    (a, b)
}

fn attn_grads<'a, T>(g: &'a mut Grads<T>, a: &Attn) -> AttnGrads<'a, T> {
    let [wq, bq, wk, bk, wv, bv, wo, bo] = g
        .get_disjoint_mut([a.q.w, a.q.b, a.k.w, a.k.b, a.v.w, a.v.b, a.o.w, a.o.b])
        .expect("distinct parameter ids");
    AttnGrads { wq, bq, wk, bk, wv, bv, wo, bo }
}

impl<T: Scalar> Model<T> {
    fn attn_weights(&self, a: &Attn) -> AttnWeights<'_, T> {
        AttnWeights {
            wq: self.p(a.q.w),
            bq: self.p(a.q.b),
            wk: self.p(a.k.w),
            bk: self.p(a.k.b),
            wv: self.p(a.v.w),
            bv: self.p(a.v.b),
            wo: self.p(a.o.w),
            bo: self.p(a.o.b),
        }
    }

    fn lin(&self, x: &[T], l: &Lin) -> Vec<T> {
        linear(x, self.p(l.w), self.p(l.b), l.din, l.dout)
    }

    fn lin_back(&self, x: &[T], dy: &[T], l: &Lin, g: &mut Grads<T>, want_dx: bool) -> Vec<T> {
        let (dw, db) = pair(g, l);
        linear_backward(x, dy, self.p(l.w), dw, db, l.din, l.dout, want_dx)
    }

    fn ln(&self, x: &[T], l: &Ln) -> (Vec<T>, LnCache<T>) {
        layer_norm(x, self.p(l.g), self.p(l.b))
    }

    fn ln_back(&self, cache: &LnCache<T>, dy: &[T], l: &Ln, g: &mut Grads<T>) -> Vec<T> {
        let (dg, db) = ln_pair(g, l);
        layer_norm_backward(cache, dy, self.p(l.g), dg, db)
    }

    fn sources(&self) -> Vec<Source> {
        match (self.config.modality, &self.layout.fusion) {
            (Modality::Line, _) => vec![Source::Line],
            (Modality::Texture, _) => vec![Source::Texture],
            (Modality::Both, Fusion::Single) => vec![Source::Joint],
            (Modality::Both, _) => vec![Source::Line, Source::Texture],
        }
    }

    /// Patch vectors `(p, p, channel)`-ordered, tokens in window order.
    fn patchify(&self, inputs: &[ModelInput], source: Source) -> Vec<T> {
        let cfg = &self.config;
        let (ps, s, grid) = (cfg.patch_size, cfg.input_size, cfg.grid());
        let images: Vec<Vec<&ImageTensor>> = inputs
            .iter()
            .map(|i| match source {
                Source::Line => vec![&i.line],
                Source::Texture => vec![&i.texture],
                Source::Joint => vec![&i.line, &i.texture],
            })
            .collect();
        let channels = 3 * images[0].len();
        let mut out = Vec::with_capacity(inputs.len() * cfg.tokens() * ps * ps * channels);
        for imgs in &images {
            for &pidx in &self.layout.order {
                let (pr, pc) = (pidx / grid, pidx % grid);
                for py in 0..ps {
                    for px in 0..ps {
                        let at = ((pr * ps + py) * s + pc * ps + px) * 3;
                        for img in imgs {
                            out.extend(img.data()[at..at + 3].iter().map(|&v| T::of(f64::from(v))));
                        }
                    }
                }
            }
        }
        out
    }

    fn window_groups(&self, batch: usize) -> Vec<(Range<usize>, Range<usize>)> {
        let t = self.config.tokens();
        (0..batch)
            .flat_map(|b| {
                self.layout.windows.iter().map(move |w| {
                    let r = b * t + w.start..b * t + w.end;
                    (r.clone(), r)
                })
            })
            .collect()
    }

    fn sample_groups(&self, batch: usize) -> Vec<(Range<usize>, Range<usize>)> {
        let t = self.config.tokens();
        (0..batch).map(|b| (b * t..(b + 1) * t, b * t..(b + 1) * t)).collect()
    }

    fn stream_forward(
        &self,
        st: &Stream,
        patches: Vec<T>,
        batch: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> StreamCache<T> {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let groups = self.window_groups(batch);
        let mut x = self.lin(&patches, &st.patch);
        let pos = self.p(st.pos);
        for sample in x.chunks_mut(cfg.tokens() * d) {
            add_into(sample, pos);
        }
        let mut blocks = Vec::with_capacity(st.blocks.len());
        for blk in &st.blocks {
            let (h1, ln1) = self.ln(&x, &blk.ln1);
            let (mut a, attn) = attention(&h1, &h1, &self.attn_weights(&blk.attn), &groups, d, cfg.attn_heads);
            let mask1 = dropout_mask(rng.as_deref_mut(), a.len(), cfg.dropout);
            apply_mask(&mut a, &mask1);
            add_into(&mut x, &a);
            let (h2, ln2) = self.ln(&x, &blk.ln2);
            let f1 = self.lin(&h2, &blk.fc1);
            let a1 = gelu(&f1);
            let mut m = self.lin(&a1, &blk.fc2);
            let mask2 = dropout_mask(rng.as_deref_mut(), m.len(), cfg.dropout);
            apply_mask(&mut m, &mask2);
            add_into(&mut x, &m);
            blocks.push(BlockCache { ln1, h1, attn, mask1, ln2, h2, f1, a1, mask2 });
        }
        let (out, norm) = self.ln(&x, &st.norm);
        StreamCache { patches, blocks, norm, out }
    }

    fn stream_backward(&self, st: &Stream, cache: &StreamCache<T>, dout: &[T], batch: usize, g: &mut Grads<T>) {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let groups = self.window_groups(batch);
        let mut dx = self.ln_back(&cache.norm, dout, &st.norm, g);
        for (blk, bc) in st.blocks.iter().zip(&cache.blocks).rev() {
            let mut dm = dx.clone();
            apply_mask(&mut dm, &bc.mask2);
            let da1 = self.lin_back(&bc.a1, &dm, &blk.fc2, g, true);
            let df1 = gelu_backward(&bc.f1, &da1);
            let dh2 = self.lin_back(&bc.h2, &df1, &blk.fc1, g, true);
            add_into(&mut dx, &self.ln_back(&bc.ln2, &dh2, &blk.ln2, g));
            let mut da = dx.clone();
            apply_mask(&mut da, &bc.mask1);
            let w = self.attn_weights(&blk.attn);
            let (dq, dkv) =
                attention_backward(&bc.h1, &bc.h1, &bc.attn, &da, &w, &mut attn_grads(g, &blk.attn), &groups, d, cfg.attn_heads);
            add_into(&mut dx, &self.ln_back(&bc.ln1, &sum(&dq, &dkv), &blk.ln1, g));
        }
        for sample in dx.chunks(cfg.tokens() * d) {
            add_into(&mut g[st.pos], sample);
        }
        self.lin_back(&cache.patches, &dx, &st.patch, g, false);
    }

    fn cross_forward(&self, dir: &CrossDir, queries: &[T], keys: &[T], batch: usize) -> (Vec<T>, CrossCache<T>) {
        let (nq, ln_q) = self.ln(queries, &dir.norm_q);
        let (nkv, ln_kv) = self.ln(keys, &dir.norm_kv);
        let groups = self.sample_groups(batch);
        let (a, attn) =
            attention(&nq, &nkv, &self.attn_weights(&dir.attn), &groups, self.config.embed_dim, self.config.fusion_heads);
        (sum(queries, &a), CrossCache { ln_q, nq, ln_kv, nkv, attn })
    }

    /// Adds the gradients flowing into the query and key sequences.
    fn cross_backward(
        &self,
        dir: &CrossDir,
        c: &CrossCache<T>,
        dy: &[T],
        batch: usize,
        g: &mut Grads<T>,
        dqueries: &mut [T],
        dkeys: &mut [T],
    ) {
        let groups = self.sample_groups(batch);
        let w = self.attn_weights(&dir.attn);
        let (d, h) = (self.config.embed_dim, self.config.fusion_heads);
        let (dnq, dnkv) = attention_backward(&c.nq, &c.nkv, &c.attn, dy, &w, &mut attn_grads(g, &dir.attn), &groups, d, h);
        add_into(dqueries, dy);
        add_into(dqueries, &self.ln_back(&c.ln_q, &dnq, &dir.norm_q, g));
        add_into(dkeys, &self.ln_back(&c.ln_kv, &dnkv, &dir.norm_kv, g));
    }

    fn fuse_forward(&self, outs: &[&[T]], batch: usize) -> (FusionCache<T>, Vec<T>) {
        let (t, d) = (self.config.tokens(), self.config.embed_dim);
        match &self.layout.fusion {
            Fusion::Single => (FusionCache::Pooled, mean_pool(outs[0], t, d)),
            Fusion::Mid => {
                let (a, b) = (mean_pool(outs[0], t, d), mean_pool(outs[1], t, d));
                (FusionCache::Pooled, concat_cols(&a, &b, d))
            }
            Fusion::Gated(gate) => {
                let (a, b) = (mean_pool(outs[0], t, d), mean_pool(outs[1], t, d));
                let z = concat_cols(&a, &b, d);
                let g: Vec<T> = self.lin(&z, gate).into_iter().map(sigmoid).collect();
                let out = g.iter().zip(a.iter().zip(&b)).map(|(&g, (&a, &b))| g * a + (T::one() - g) * b).collect();
                (FusionCache::Gated { z, g, a, b }, out)
            }
            Fusion::Cross { line_queries, texture_queries } => {
                let (l, tx) = (outs[0], outs[1]);
                let (ya, line) = self.cross_forward(line_queries, l, tx, batch);
                let (yb, texture) = self.cross_forward(texture_queries, tx, l, batch);
                let fused = concat_cols(&mean_pool(&ya, t, d), &mean_pool(&yb, t, d), d);
                (FusionCache::Cross { line, texture }, fused)
            }
        }
    }

    /// Fuses per-stream token sequences (`batch * tokens` rows each, in
    /// stream order) into the head input.
    pub fn fuse(&self, streams: &[Vec<T>], batch: usize) -> Result<Vec<T>, ModelError> {
        let rows = batch * self.config.tokens() * self.config.embed_dim;
        if streams.len() != self.layout.streams.len() || streams.iter().any(|s| s.len() != rows) {
            return Err(ModelError::Shape(format!(
                "fusion expects {} sequences of {rows} values",
                self.layout.streams.len()
            )));
        }
        let outs: Vec<&[T]> = streams.iter().map(Vec::as_slice).collect();
        Ok(self.fuse_forward(&outs, batch).1)
    }

    /// Full forward pass. With `dropout_rng` set (training) dropout masks are
    /// drawn from it; otherwise dropout is the identity.
    pub fn forward(
        &self,
        inputs: &[ModelInput],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward<T>, ModelError> {
        if inputs.is_empty() {
            return Err(ModelError::Shape("empty batch".into()));
        }
        for input in inputs {
            self.check_input(input)?;
        }
        let batch = inputs.len();
        let streams: Vec<StreamCache<T>> = self
            .layout
            .streams
            .iter()
            .zip(self.sources())
            .map(|(st, src)| self.stream_forward(st, self.patchify(inputs, src), batch, dropout_rng.as_deref_mut()))
            .collect();
        let outs: Vec<&[T]> = streams.iter().map(|s| s.out.as_slice()).collect();
        let (fusion, fused) = self.fuse_forward(&outs, batch);
        let f1 = self.lin(&fused, &self.layout.fc1);
        let a1 = gelu(&f1);
        let logits = self.lin(&a1, &self.layout.fc2);
        Ok(Forward { batch, streams, fusion, fused, f1, a1, logits })
    }

    /// Mean binary cross-entropy of a forward pass.
    pub fn loss(&self, fwd: &Forward<T>, labels: &[u8]) -> T {
        assert_eq!(labels.len(), fwd.batch, "one label per sample");
        let total: T = fwd.logits.iter().zip(labels).map(|(&z, &y)| bce_with_logit(z, T::of(f64::from(y)))).sum();
        total / T::of(fwd.batch as f64)
    }

    /// Accumulates gradients of the mean batch loss into `g` and returns the loss.
    pub fn backward(&self, fwd: &Forward<T>, labels: &[u8], g: &mut Grads<T>) -> T {
        let loss = self.loss(fwd, labels);
        let (t, d) = (self.config.tokens(), self.config.embed_dim);
        let batch = fwd.batch;
        let inv_b = T::of(1.0 / batch as f64);
        let dz: Vec<T> = fwd.logits.iter().zip(labels).map(|(&z, &y)| (sigmoid(z) - T::of(f64::from(y))) * inv_b).collect();
        let da1 = self.lin_back(&fwd.a1, &dz, &self.layout.fc2, g, true);
        let df1 = gelu_backward(&fwd.f1, &da1);
        let dfused = self.lin_back(&fwd.fused, &df1, &self.layout.fc1, g, true);
        let douts: Vec<Vec<T>> = match (&self.layout.fusion, &fwd.fusion) {
            (Fusion::Single, _) => vec![mean_pool_backward(&dfused, t, d)],
            (Fusion::Mid, _) => {
                let (da, db) = split_cols(&dfused, d);
                vec![mean_pool_backward(&da, t, d), mean_pool_backward(&db, t, d)]
            }
            (Fusion::Gated(gate), FusionCache::Gated { z, g: gv, a, b }) => {
                let mut da: Vec<T> = dfused.iter().zip(gv).map(|(&dy, &gi)| dy * gi).collect();
                let mut db: Vec<T> = dfused.iter().zip(gv).map(|(&dy, &gi)| dy * (T::one() - gi)).collect();
                let ds: Vec<T> = dfused
                    .iter()
                    .zip(gv)
                    .zip(a.iter().zip(b))
                    .map(|((&dy, &gi), (&ai, &bi))| dy * (ai - bi) * gi * (T::one() - gi))
                    .collect();
                let dzv = self.lin_back(z, &ds, gate, g, true);
                let (dza, dzb) = split_cols(&dzv, d);
                add_into(&mut da, &dza);
                add_into(&mut db, &dzb);
                vec![mean_pool_backward(&da, t, d), mean_pool_backward(&db, t, d)]
            }
            (Fusion::Cross { line_queries, texture_queries }, FusionCache::Cross { line, texture }) => {
                let (dpa, dpb) = split_cols(&dfused, d);
                let (dya, dyb) = (mean_pool_backward(&dpa, t, d), mean_pool_backward(&dpb, t, d));
                let mut dl = vec![T::zero(); batch * t * d];
                let mut dt = vec![T::zero(); batch * t * d];
                self.cross_backward(line_queries, line, &dya, batch, g, &mut dl, &mut dt);
                self.cross_backward(texture_queries, texture, &dyb, batch, g, &mut dt, &mut dl);
                vec![dl, dt]
            }
            _ => unreachable!("fusion cache matches layout"),
        };
        for ((st, cache), dout) in self.layout.streams.iter().zip(&fwd.streams).zip(&douts) {
            self.stream_backward(st, cache, dout, batch, g);
        }
        loss
    }

    /// Pooled (or fused) representation fed to the head.
    pub fn fused(&self, inputs: &[ModelInput]) -> Result<Vec<T>, ModelError> {
        Ok(self.forward(inputs, None)?.fused)
    }

    /// Per-stream output token sequences (after the final layer norm).
    pub fn stream_tokens(&self, inputs: &[ModelInput]) -> Result<Vec<Vec<T>>, ModelError> {
        Ok(self.forward(inputs, None)?.streams.into_iter().map(|s| s.out).collect())
    }
}
