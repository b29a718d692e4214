use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(scores: ArrayView1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut e = scores.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

/// Weights and context for one decoder state against precomputed keys
/// (`keys = H . attn^T`, one row per encoder position).
pub(crate) fn attend_keys(s: ArrayView1<f64>, keys: ArrayView2<f64>, states: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let weights = softmax(keys.dot(&s).view());
    let context = weights.dot(&states);
    (context, weights)
}

/// Luong "general" attention: `score_i = dec_h^T W_a H_i`, weights are the
/// softmax of the scores and the context is the weighted sum of encoder states.
pub fn attend(dec_h: &Array1<f64>, states: &Array2<f64>, w_a: &Array2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if states.nrows() == 0 {
        return Err(Error::Empty("attention over zero encoder states"));
    }
    let h = dec_h.len();
    if states.ncols() != h || w_a.dim() != (h, h) {
        return Err(Error::Shape(format!(
            "attend: dec_h[{h}], states {:?}, W_a {:?}",
            states.dim(),
            w_a.dim()
        )));
    }
    let keys = states.dot(&w_a.t());
    Ok(attend_keys(dec_h.view(), keys.view(), states.view()))
}
