//! Bias-corrected Adam on flat parameter slices.

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter first and second moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
        }
    }
}

/// One Adam update of `theta` in place.
pub fn adam_step(theta: &mut [f64], grad: &[f64], st: &mut AdamState, lr: f64) {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(theta.len(), st.m.len());
    st.step_count += 1;
    let t = st.step_count as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..theta.len() {
        let g = grad[i];
        st.m[i] = ADAM_BETA1 * st.m[i] + (1.0 - ADAM_BETA1) * g;
        st.v[i] = ADAM_BETA2 * st.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = st.m[i] / bc1;
        let v_hat = st.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}
