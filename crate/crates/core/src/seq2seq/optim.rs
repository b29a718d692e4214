use super::params::{Gradients, ModelParams};
use super::Hyperparams;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: ModelParams,
    v: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// Factor that brings `grads` to global L2 norm at most `max_norm`.
pub fn clip_factor(grads: &Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        max_norm / norm
    } else {
        1.0
    }
}

/// Scales `grads` in place to global norm at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    let f = clip_factor(grads, max_norm);
    if f != 1.0 {
        grads.scale(f);
    }
    norm
}

/// Global-norm clipping followed by one Adam step.
pub fn apply_update(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    hyper: &Hyperparams,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Training("non-finite gradient".into()));
    }
    let clip = clip_factor(grads, hyper.grad_clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let lr = hyper.learning_rate;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    let tensors = params
        .named_mut()
        .into_iter()
        .zip(grads.named())
        .zip(state.m.named_mut())
        .zip(state.v.named_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            let g = g * clip;
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::init_uniform(6, 3, 4, 0.1, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let mut st = OptimizerState::new(&p);
        let g = p.zeros_like();
        apply_update(&mut p, &g, &mut st, &Hyperparams::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn clipping_halves_norm_ten_to_five() {
        let p = params();
        let mut g = p.zeros_like();
        g.out_b[[0, 0]] = 6.0;
        g.attn[[1, 2]] = 8.0;
        assert!((g.norm() - 10.0).abs() < 1e-12);
        assert!((clip_factor(&g, 5.0) - 0.5).abs() < 1e-15);
        let pre = clip_global_norm(&mut g, 5.0);
        assert!((pre - 10.0).abs() < 1e-12);
        assert_eq!(g.out_b[[0, 0]], 3.0);
        assert_eq!(g.attn[[1, 2]], 4.0);
        assert_eq!(clip_factor(&g, 5.0), 1.0);
    }

    #[test]
    fn clipped_and_preclipped_updates_agree() {
        let h = Hyperparams { grad_clip_norm: 5.0, ..Hyperparams::default() };
        let mut g = params().zeros_like();
        g.out_b[[0, 0]] = 6.0;
        g.attn[[1, 2]] = 8.0;
        let mut a = params();
        let mut sa = OptimizerState::new(&a);
        apply_update(&mut a, &g, &mut sa, &h).unwrap();
        let mut half = g.clone();
        half.scale(0.5);
        let mut b = params();
        let mut sb = OptimizerState::new(&b);
        apply_update(&mut b, &half, &mut sb, &h).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn deterministic_and_rejects_nan() {
        let h = Hyperparams::default();
        let mut g = params().zeros_like();
        g.src_embed[[2, 1]] = 0.3;
        let mut a = params();
        let mut b = params();
        let (mut sa, mut sb) = (OptimizerState::new(&a), OptimizerState::new(&b));
        apply_update(&mut a, &g, &mut sa, &h).unwrap();
        apply_update(&mut b, &g, &mut sb, &h).unwrap();
        assert_eq!(a, b);
        // First Adam step moves a touched weight by exactly lr (up to eps).
        let moved = params().src_embed[[2, 1]] - a.src_embed[[2, 1]];
        assert!((moved - h.learning_rate).abs() < 1e-9);

        g.out_w[[0, 0]] = f64::NAN;
        assert!(matches!(apply_update(&mut a, &g, &mut sa, &h), Err(Error::Training(_))));
    }
}
