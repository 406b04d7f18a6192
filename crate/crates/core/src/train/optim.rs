use super::TrainConfig;
use crate::tensor::{Real, Tensor};

/// First and second moment estimates plus the step count.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<T: Real>(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.numel()]).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One AdamW update with bias correction. Weight decay is decoupled and
/// applied only where `decay[i]` is set.
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
    decay: &[bool],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let wd = if decay[i] { cfg.weight_decay } else { 0.0 };
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i][j].as_f64();
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let (mh, vh) = (m[j] / c1, v[j] / c2);
            let x = w.as_f64();
            *w = T::from_f64(x - lr * (mh / (vh.sqrt() + cfg.eps) + wd * x));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_normalized_gradient() {
        let cfg = TrainConfig::default();
        let g: [f64; 4] = [0.3, -2.0, 1e-9, 0.0];
        let start: [f64; 4] = [1.0, -1.0, 0.5, 2.0];
        let mut params = vec![Tensor::new(vec![4], start.to_vec()).unwrap()];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[g.to_vec()], &[false], &mut state, &cfg, 1e-3);
        for j in 0..4 {
            let want = start[j] - 1e-3 * g[j] / (g[j].abs() + 1e-8);
            assert!((params[0].data()[j] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_only_decays_weights() {
        let cfg = TrainConfig::default();
        let mut params = vec![
            Tensor::new(vec![2], vec![1.0, -2.0]).unwrap(),
            Tensor::new(vec![2], vec![1.0, -2.0]).unwrap(),
        ];
        let mut state = AdamState::new(&params);
        let zero = vec![vec![0.0; 2]; 2];
        for _ in 0..3 {
            adam_step(&mut params, &zero, &[true, false], &mut state, &cfg, 0.1);
        }
        let f = (1.0 - 0.1 * cfg.weight_decay).powi(3);
        assert!((params[0].data()[0] - f).abs() < 1e-15);
        assert!((params[0].data()[1] + 2.0 * f).abs() < 1e-15);
        assert_eq!(params[1].data(), &[1.0, -2.0]);
    }
}
