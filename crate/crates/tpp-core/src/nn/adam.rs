//! Canonical Adam with bias correction, operating on flat parameter
//! slices. One state per parameter tensor; the step counter advances on
//! every update.

/// Optimizer hyperparameters. Defaults: β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamParams) {
    assert_eq!(params.len(), grads.len(), "adam_step: shape mismatch");
    assert_eq!(params.len(), state.m.len(), "adam_step: state mismatch");
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_and_moments() {
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.0; 3];
        let mut state = AdamState::new(3);
        let cfg = AdamParams::with_learning_rate(0.01);
        for _ in 0..5 {
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        let (m, v) = state.moments();
        assert!(m.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gradient_step_size_approaches_lr() {
        // With a constant gradient Adam's update magnitude tends to lr.
        let mut params = vec![0.0];
        let grads = vec![3.7];
        let mut state = AdamState::new(1);
        let cfg = AdamParams::with_learning_rate(0.05);
        let mut prev = params[0];
        for _ in 0..300 {
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        for _ in 0..5 {
            prev = params[0];
            adam_step(&mut params, &grads, &mut state, &cfg);
            let step = (params[0] - prev).abs();
            assert!((step - cfg.learning_rate).abs() < 1e-3, "step {step}");
        }
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(x) = ‖x‖², gradient 2x.
        let mut params = vec![2.0, -1.5, 0.75, 3.1];
        let mut state = AdamState::new(4);
        let cfg = AdamParams::with_learning_rate(0.05);
        for _ in 0..200 {
            let grads: Vec<f64> = params.iter().map(|&x| 2.0 * x).collect();
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        let norm = params.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-3, "‖params‖ = {norm}");
    }
}
