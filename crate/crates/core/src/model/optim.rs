use super::{Grads, Scalar, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay:
/// `p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)`.
/// Decay applies to every tensor.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &Grads<T>, lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), grads.len(), "one gradient per tensor");
        self.t += 1;
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let bc1 = T::of(1.0 - BETA1.powi(self.t));
        let bc2 = T::of(1.0 - BETA2.powi(self.t));
        let (lr_t, decay) = (T::of(lr), T::of(1.0 - lr * weight_decay));
        let eps = T::of(EPS);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.data.len(), g.len(), "gradient shape for {}", p.name);
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                if lr == 0.0 {
                    continue;
                }
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] = p.data[i] * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor { name: "p".into(), shape: vec![1], data: vec![v] }]
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut opt = AdamW::new(&p);
        opt.step(&mut p, &vec![vec![1.0]], 0.1, 0.0);
        // m_hat = 1, v_hat = 1 -> step = 0.1 / (1 + 1e-8)
        assert!((p[0].data[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decay_is_decoupled() {
        let (mut a, mut b) = (scalar(1.0), scalar(1.0));
        let (mut oa, mut ob) = (AdamW::new(&a), AdamW::new(&b));
        oa.step(&mut a, &vec![vec![0.5]], 0.1, 0.01);
        ob.step(&mut b, &vec![vec![0.5]], 0.1, 0.0);
        assert!((b[0].data[0] - a[0].data[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_decay_and_zero_lr_leave_params() {
        let mut p = scalar(0.37);
        let mut opt = AdamW::new(&p);
        opt.step(&mut p, &vec![vec![0.0]], 0.1, 0.0);
        assert_eq!(p[0].data[0], 0.37);
        let mut q = scalar(-0.0);
        let mut opt = AdamW::new(&q);
        opt.step(&mut q, &vec![vec![3.0]], 0.0, 0.01);
        assert_eq!(q[0].data[0].to_bits(), (-0.0f64).to_bits());
    }
}
