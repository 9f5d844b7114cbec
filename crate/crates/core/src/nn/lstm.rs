use alloc::vec::Vec;

use super::params::LstmParams;
use super::tensor::sigmoid;

/// Activations of one LSTM step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    /// `[x; h_prev]`
    pub input: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `i, f, o, g`, each `hidden` wide.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Gradients flowing out of one step.
pub struct CellGrad {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// `c = f * c_prev + i * g`, `h = o * tanh(c)`.
pub fn forward(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellCache {
    let hidden = p.hidden();
    let mut input = Vec::with_capacity(x.len() + hidden);
    input.extend_from_slice(x);
    input.extend_from_slice(h_prev);

    let mut gates = alloc::vec![0.0; 4 * hidden];
    p.w.affine(&p.b.data, &input, &mut gates);
    for z in &mut gates[..3 * hidden] {
        *z = sigmoid(*z);
    }
    for z in &mut gates[3 * hidden..] {
        *z = libm::tanh(*z);
    }

    let mut c = alloc::vec![0.0; hidden];
    let mut tanh_c = alloc::vec![0.0; hidden];
    let mut h = alloc::vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, o, g) = (gates[k], gates[hidden + k], gates[2 * hidden + k], gates[3 * hidden + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = libm::tanh(c[k]);
        h[k] = o * tanh_c[k];
    }
    CellCache { input, c_prev: c_prev.to_vec(), gates, c, tanh_c, h }
}

/// Backpropagates `dh`/`dc` (gradients w.r.t. this step's `h` and `c`),
/// accumulating weight gradients into `grad`.
pub fn backward(
    p: &LstmParams,
    grad: &mut LstmParams,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
) -> CellGrad {
    let hidden = p.hidden();
    let g = &cache.gates;
    let mut dz = alloc::vec![0.0; 4 * hidden];
    let mut dc_prev = alloc::vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, o, cand) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
        let t = cache.tanh_c[k];
        let dc_total = dc[k] + dh[k] * o * (1.0 - t * t);
        let d_o = dh[k] * t;
        let d_i = dc_total * cand;
        let d_f = dc_total * cache.c_prev[k];
        let d_g = dc_total * i;
        dc_prev[k] = dc_total * f;
        dz[k] = d_i * i * (1.0 - i);
        dz[hidden + k] = d_f * f * (1.0 - f);
        dz[2 * hidden + k] = d_o * o * (1.0 - o);
        dz[3 * hidden + k] = d_g * (1.0 - cand * cand);
    }
    grad.w.outer_add(&dz, &cache.input);
    grad.b.add_assign(&dz);

    let mut d_input = alloc::vec![0.0; cache.input.len()];
    p.w.tr_mul_add(&dz, &mut d_input);
    let dh_prev = d_input.split_off(p.input_size());
    CellGrad { dx: d_input, dh_prev, dc_prev }
}
