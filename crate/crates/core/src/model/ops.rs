//! Row-major dense kernels with explicit backward passes. Activations are
//! `rows x cols` matrices where each row is one token (or one pooled sample).

use std::ops::Range;

use num_traits::Float;

/// Element type of the model: `f32` for training, `f64` for gradient checks.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
    /// `c = alpha * a * b + beta * c` over raw strided storage.
    ///
    /// # Safety
    /// Every strided index must lie inside the referenced buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn f64(self) -> f64 {
        f64::from(self)
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn f64(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Strided matrix view: element `(i, j)` is `data[off + i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    /// Contiguous `? x cols` matrix.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        Self { data, off: 0, rs: cols, cs: 1 }
    }

    /// Transpose of a contiguous `? x cols` matrix.
    pub fn trans(data: &'a [T], cols: usize) -> Self {
        Self { data, off: 0, rs: 1, cs: cols }
    }

    pub fn at(self, off: usize) -> Self {
        Self { off, ..self }
    }

    pub fn t(self) -> Self {
        Self { rs: self.cs, cs: self.rs, ..self }
    }
}

fn last_index(off: usize, m: usize, n: usize, rs: usize, cs: usize) -> usize {
    if m == 0 || n == 0 {
        off
    } else {
        off + (m - 1) * rs + (n - 1) * cs
    }
}

/// `C[m x n] = alpha * A[m x k] * B[k x n] + beta * C` with `C` at `c_off`
/// and row stride `rsc`, unit column stride.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: View<T>,
    b: View<T>,
    beta: T,
    c: &mut [T],
    c_off: usize,
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(last_index(a.off, m, k, a.rs, a.cs) < a.data.len(), "gemm: A out of bounds");
        assert!(last_index(b.off, k, n, b.rs, b.cs) < b.data.len(), "gemm: B out of bounds");
    }
    assert!(last_index(c_off, m, n, rsc, 1) < c.len(), "gemm: C out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            1,
        );
    }
}

/// `x[n x din] * w[din x dout] + b`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T], din: usize, dout: usize) -> Vec<T> {
    let n = x.len() / din;
    let mut y = Vec::with_capacity(n * dout);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    gemm(n, din, dout, T::one(), View::rows(x, din), View::rows(w, dout), T::one(), &mut y, 0, dout);
    y
}

/// Accumulates `dw += x^T dy`, `db += colsum(dy)` and returns `dx = dy w^T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    din: usize,
    dout: usize,
    want_dx: bool,
) -> Vec<T> {
    let n = x.len() / din;
    gemm(din, n, dout, T::one(), View::trans(x, din), View::rows(dy, dout), T::one(), dw, 0, dout);
    for row in dy.chunks(dout) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g = *g + v;
        }
    }
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); n * din];
    gemm(n, dout, din, T::one(), View::rows(dy, dout), View::trans(w, dout), T::zero(), &mut dx, 0, din);
    dx
}

pub const LN_EPS: f64 = 1e-5;

pub struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &[T], gamma: &[T], beta: &[T]) -> (Vec<T>, LnCache<T>) {
    let d = gamma.len();
    let inv_d = T::of(1.0 / d as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.len() / d);
    for ((row, yr), hr) in x.chunks(d).zip(y.chunks_mut(d)).zip(xhat.chunks_mut(d)) {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = (var + T::of(LN_EPS)).sqrt().recip();
        rstd.push(r);
        for (((&v, &g), &b), (yo, ho)) in row.iter().zip(gamma).zip(beta).zip(yr.iter_mut().zip(hr.iter_mut())) {
            let h = (v - mean) * r;
            *ho = h;
            *yo = h * g + b;
        }
    }
    (y, LnCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    dy: &[T],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let d = gamma.len();
    let inv_d = T::of(1.0 / d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dh = vec![T::zero(); d];
    for (((dyr, xr), &r), dxr) in dy.chunks(d).zip(cache.xhat.chunks(d)).zip(&cache.rstd).zip(dx.chunks_mut(d)) {
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for j in 0..d {
            dgamma[j] = dgamma[j] + dyr[j] * xr[j];
            dbeta[j] = dbeta[j] + dyr[j];
            dh[j] = dyr[j] * gamma[j];
            s1 = s1 + dh[j];
            s2 = s2 + dh[j] * xr[j];
        }
        for ((o, &h), &xh) in dxr.iter_mut().zip(&dh).zip(xr) {
            *o = r * (h - (s1 + xh * s2) * inv_d);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through a single `exp`; libm's `tanh` dominated the MLP cost.
fn tanh_fast<T: Scalar>(u: T) -> T {
    let two = T::of(2.0);
    T::one() - two / ((two * u).exp() + T::one())
}

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: &[T]) -> Vec<T> {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    x.iter().map(|&v| half * v * (T::one() + tanh_fast(c * (v + a * v * v * v)))).collect()
}

pub fn gelu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    let (c, a, half, three) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5), T::of(3.0));
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let t = tanh_fast(c * (v + a * v * v * v));
            let du = c * (T::one() + three * a * v * v);
            g * (half * (T::one() + t) + half * v * (T::one() - t * t) * du)
        })
        .collect()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy on a logit: `max(z, 0) - z y + ln(1 + exp(-|z|))`.
pub fn bce_with_logit<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

/// Attention weights referenced by index into a parameter list.
pub struct AttnWeights<'a, T> {
    pub wq: &'a [T],
    pub bq: &'a [T],
    pub wk: &'a [T],
    pub bk: &'a [T],
    pub wv: &'a [T],
    pub bv: &'a [T],
    pub wo: &'a [T],
    pub bo: &'a [T],
}

pub struct AttnGrads<'a, T> {
    pub wq: &'a mut [T],
    pub bq: &'a mut [T],
    pub wk: &'a mut [T],
    pub bk: &'a mut [T],
    pub wv: &'a mut [T],
    pub bv: &'a mut [T],
    pub wo: &'a mut [T],
    pub bo: &'a mut [T],
}

/// Query rows attend to key rows; one entry per independent attention group.
pub type Groups = [(Range<usize>, Range<usize>)];

pub struct AttnCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Softmax weights, group by group, head by head.
    p: Vec<T>,
    o: Vec<T>,
}

/// Multi-head scaled dot-product attention with output projection.
pub fn attention<T: Scalar>(
    xq: &[T],
    xkv: &[T],
    w: &AttnWeights<T>,
    groups: &Groups,
    d: usize,
    heads: usize,
) -> (Vec<T>, AttnCache<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let q = linear(xq, w.wq, w.bq, d, d);
    let k = linear(xkv, w.wk, w.bk, d, d);
    let v = linear(xkv, w.wv, w.bv, d, d);
    let mut o = vec![T::zero(); q.len()];
    let p_len: usize = groups.iter().map(|(qr, kr)| qr.len() * kr.len() * heads).sum();
    let mut p = Vec::with_capacity(p_len);
    for (qr, kr) in groups {
        let (lq, lk) = (qr.len(), kr.len());
        for h in 0..heads {
            let start = p.len();
            p.resize(start + lq * lk, T::zero());
            let s = &mut p[start..];
            let qv = View::rows(&q, d).at(qr.start * d + h * dh);
            let kt = View::rows(&k, d).at(kr.start * d + h * dh).t();
            gemm(lq, dh, lk, scale, qv, kt, T::zero(), s, 0, lk);
            for row in s.chunks_mut(lk) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for e in row.iter_mut() {
                    *e = (*e - max).exp();
                    total = total + *e;
                }
                for e in row.iter_mut() {
                    *e = *e / total;
                }
            }
            let pv = View::rows(&p[start..], lk);
            let vv = View::rows(&v, d).at(kr.start * d + h * dh);
            gemm(lq, lk, dh, T::one(), pv, vv, T::zero(), &mut o, qr.start * d + h * dh, d);
        }
    }
    let y = linear(&o, w.wo, w.bo, d, d);
    (y, AttnCache { q, k, v, p, o })
}

/// Returns `(dxq, dxkv)`; for self-attention the caller adds them.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    xq: &[T],
    xkv: &[T],
    cache: &AttnCache<T>,
    dy: &[T],
    w: &AttnWeights<T>,
    g: &mut AttnGrads<T>,
    groups: &Groups,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let do_ = linear_backward(&cache.o, dy, w.wo, g.wo, g.bo, d, d, true);
    let mut dq = vec![T::zero(); cache.q.len()];
    let mut dk = vec![T::zero(); cache.k.len()];
    let mut dv = vec![T::zero(); cache.v.len()];
    let mut dp = Vec::new();
    let mut offset = 0;
    for (qr, kr) in groups {
        let (lq, lk) = (qr.len(), kr.len());
        for h in 0..heads {
            let p = &cache.p[offset..offset + lq * lk];
            offset += lq * lk;
            let (qo, ko) = (qr.start * d + h * dh, kr.start * d + h * dh);
            dp.clear();
            dp.resize(lq * lk, T::zero());
            let dov = View::rows(&do_, d).at(qo);
            gemm(lq, dh, lk, T::one(), dov, View::rows(&cache.v, d).at(ko).t(), T::zero(), &mut dp, 0, lk);
            gemm(lk, lq, dh, T::one(), View::rows(p, lk).t(), dov, T::one(), &mut dv, ko, d);
            for (dpr, pr) in dp.chunks_mut(lk).zip(p.chunks(lk)) {
                let dot = dpr.iter().zip(pr).map(|(&a, &b)| a * b).sum::<T>();
                for (e, &pe) in dpr.iter_mut().zip(pr) {
                    *e = pe * (*e - dot) * scale;
                }
            }
            let ds = View::rows(&dp[..], lk);
            gemm(lq, lk, dh, T::one(), ds, View::rows(&cache.k, d).at(ko), T::one(), &mut dq, qo, d);
            gemm(lk, lq, dh, T::one(), ds.t(), View::rows(&cache.q, d).at(qo), T::one(), &mut dk, ko, d);
        }
    }
    let dxq = linear_backward(xq, &dq, w.wq, g.wq, g.bq, d, d, true);
    let mut dxkv = linear_backward(xkv, &dk, w.wk, g.wk, g.bk, d, d, true);
    let dxv = linear_backward(xkv, &dv, w.wv, g.wv, g.bv, d, d, true);
    for (a, b) in dxkv.iter_mut().zip(dxv) {
        *a = *a + b;
    }
    (dxq, dxkv)
}
