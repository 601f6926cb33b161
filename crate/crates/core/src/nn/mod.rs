//! Dense tensors, a reverse-mode autodiff tape and Adam, covering exactly
//! the operations the partial VAE needs.

mod graph;
mod params;
mod tensor;

pub use graph::{Activation, Gradients, Graph, NodeId};
pub use params::{AdamConfig, ParamSet};
pub use tensor::Tensor;

/// Decoder probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;
/// Log-variance heads are clamped to `[-LOGVAR_LIMIT, LOGVAR_LIMIT]`.
pub const LOGVAR_LIMIT: f64 = 10.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// KL divergence of `N(mu, exp(logvar))` from the unit diagonal Gaussian.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    debug_assert_eq!(mu.len(), logvar.len());
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Bernoulli negative log-likelihood with `p` clamped away from 0 and 1.
pub fn bernoulli_nll(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
