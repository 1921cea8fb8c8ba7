use super::{Mat, Param, ParamSet};

/// Adam moments and hyperparameters.
///
/// Moment buffers are sized lazily on the first step from the parameter
/// list, which must keep the same order and shapes afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    first: Vec<Mat>,
    second: Vec<Mat>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update; grads are zeroed afterwards.
pub fn adam_step(state: &mut AdamState, params: &mut [&mut Param]) {
    if state.first.is_empty() {
        state.first = params.iter().map(|p| Mat::zeros(p.value.rows(), p.value.cols())).collect();
        state.second = state.first.clone();
    }
    assert_eq!(state.first.len(), params.len(), "parameter list changed between Adam steps");
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let m = state.first[k].as_mut_slice();
        let v = state.second[k].as_mut_slice();
        let g = p.grad.as_slice();
        let w = p.value.as_mut_slice();
        for i in 0..w.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        p.zero_grad();
    }
}

/// Update rule applied to one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    /// Plain gradient descent.
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam(AdamState::new(lr))
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        match self {
            Optimizer::Adam(state) => adam_step(state, params),
            Optimizer::Sgd { lr } => {
                for p in params.iter_mut() {
                    let g = p.grad.as_slice().to_vec();
                    super::axpy(-*lr, &g, p.value.as_mut_slice());
                    p.zero_grad();
                }
            }
        }
    }

    pub fn step_set<S: ParamSet + ?Sized>(&mut self, set: &mut S) {
        let mut params = set.params_mut();
        self.step(&mut params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_values() {
        let mut p = Param::new(Mat::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
        let before = p.value.clone();
        let mut s = AdamState::new(0.001);
        adam_step(&mut s, &mut [&mut p]);
        assert_eq!(p.value, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let grads = [3.0, -0.02, 1e-3];
        let mut p = Param::zeros(1, 3);
        p.grad.as_mut_slice().copy_from_slice(&grads);
        let mut s = AdamState::new(0.001);
        adam_step(&mut s, &mut [&mut p]);
        for (w, g) in p.value.as_slice().iter().zip(grads) {
            // m_hat = g, v_hat = g^2 after bias correction
            let expect = -0.001 * g / (g.abs() + 1e-8);
            assert!((w - expect).abs() < 1e-15);
        }
        assert!(p.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = Param::zeros(1, 1);
        let mut opt = Optimizer::adam(0.1);
        for _ in 0..500 {
            let w = p.value.get(0, 0);
            p.grad.set(0, 0, w - 3.0);
            opt.step(&mut [&mut p]);
        }
        assert!((p.value.get(0, 0) - 3.0).abs() < 1e-2);
    }

    #[test]
    fn sgd_step() {
        let mut p = Param::new(Mat::from_vec(1, 2, vec![1.0, 1.0]).unwrap());
        p.grad.as_mut_slice().copy_from_slice(&[2.0, -4.0]);
        Optimizer::Sgd { lr: 0.5 }.step(&mut [&mut p]);
        assert_eq!(p.value.as_slice(), &[0.0, 3.0]);
    }
}
