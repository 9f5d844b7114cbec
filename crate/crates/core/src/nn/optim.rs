use super::params::ModelParams;

/// RMSProp with a per-weight running mean of squared gradients:
/// `cache = rho * cache + (1 - rho) * g^2`,
/// `theta -= lr * g / (sqrt(cache) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    cache: ModelParams,
}

impl RmsProp {
    pub const LEARNING_RATE: f64 = 0.001;
    pub const SMOOTHING: f64 = 0.9;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(params: &ModelParams) -> Self {
        Self::with_hyper(params, Self::LEARNING_RATE, Self::SMOOTHING, Self::EPSILON)
    }

    pub fn with_hyper(params: &ModelParams, lr: f64, rho: f64, eps: f64) -> Self {
        RmsProp { lr, rho, eps, cache: params.zeros_like() }
    }

    pub fn cache(&self) -> &ModelParams {
        &self.cache
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let (lr, rho, eps) = (self.lr, self.rho, self.eps);
        for ((p, g), c) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.cache.tensors_mut())
        {
            assert_eq!(p.data.len(), g.data.len(), "gradient shape mismatch");
            for ((w, &gi), ci) in p.data.iter_mut().zip(&g.data).zip(c.data.iter_mut()) {
                *ci = rho * *ci + (1.0 - rho) * gi * gi;
                *w -= lr * gi / (libm::sqrt(*ci) + eps);
            }
        }
    }
}
