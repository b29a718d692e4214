use ndarray::{Array1, Array2, Axis};

use super::params::GruParams;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one batched GRU step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    pub rh: Array2<f64>,
    pub cand: Array2<f64>,
    pub h: Array2<f64>,
}

impl GruParams {
    /// One step over a batch of row vectors.
    ///
    /// `z = σ(x Wz + h Uz + bz)`, `r = σ(x Wr + h Ur + br)`,
    /// `h~ = tanh(x Wh + (r ⊙ h) Uh + bh)`, `h' = (1 - z) ⊙ h + z ⊙ h~`.
    pub fn forward(&self, x: Array2<f64>, h_prev: Array2<f64>) -> GruCache {
        let z = (x.dot(&self.w_z) + h_prev.dot(&self.u_z) + &self.b_z).mapv_into(sigmoid);
        let r = (x.dot(&self.w_r) + h_prev.dot(&self.u_r) + &self.b_r).mapv_into(sigmoid);
        let rh = &r * &h_prev;
        let cand = (x.dot(&self.w_h) + rh.dot(&self.u_h) + &self.b_h).mapv_into(f64::tanh);
        let h = &h_prev + &(&z * &(&cand - &h_prev));
        GruCache { x, h_prev, z, r, rh, cand, h }
    }

    /// Accumulates parameter gradients into `grads` and returns
    /// `(d x, d h_prev)` given `d h` for this step's output.
    pub fn backward(&self, cache: &GruCache, dh: &Array2<f64>, grads: &mut GruParams) -> (Array2<f64>, Array2<f64>) {
        let GruCache { x, h_prev, z, r, rh, cand, .. } = cache;
        let dz = dh * &(cand - h_prev);
        let dcand = dh * z;
        let mut dh_prev = dh * &z.mapv(|v| 1.0 - v);

        let da_h = dcand * &cand.mapv(|v| 1.0 - v * v);
        grads.w_h += &x.t().dot(&da_h);
        grads.u_h += &rh.t().dot(&da_h);
        grads.b_h += &da_h.sum_axis(Axis(0)).insert_axis(Axis(0));
        let drh = da_h.dot(&self.u_h.t());
        let dr = &drh * h_prev;
        dh_prev += &(&drh * r);

        let da_z = dz * &z.mapv(|v| v * (1.0 - v));
        let da_r = dr * &r.mapv(|v| v * (1.0 - v));
        grads.w_z += &x.t().dot(&da_z);
        grads.u_z += &h_prev.t().dot(&da_z);
        grads.b_z += &da_z.sum_axis(Axis(0)).insert_axis(Axis(0));
        grads.w_r += &x.t().dot(&da_r);
        grads.u_r += &h_prev.t().dot(&da_r);
        grads.b_r += &da_r.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dx = da_z.dot(&self.w_z.t()) + da_r.dot(&self.w_r.t()) + da_h.dot(&self.w_h.t());
        dh_prev += &(da_z.dot(&self.u_z.t()) + da_r.dot(&self.u_r.t()));
        (dx, dh_prev)
    }
}

/// Single-vector GRU step.
pub fn gru_cell(x: &Array1<f64>, h: &Array1<f64>, params: &GruParams) -> Result<Array1<f64>> {
    if x.len() != params.input_size() || h.len() != params.hidden_size() {
        return Err(Error::Shape(format!(
            "gru_cell expects x[{}] and h[{}], got x[{}] and h[{}]",
            params.input_size(),
            params.hidden_size(),
            x.len(),
            h.len()
        )));
    }
    let xb = x.clone().insert_axis(Axis(0));
    let hb = h.clone().insert_axis(Axis(0));
    Ok(params.forward(xb, hb).h.index_axis_move(Axis(0), 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::seq2seq::ModelParams;

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(3, 4);
        let h = array![0.4, -1.0, 0.0, 0.9];
        let out = gru_cell(&array![1.0, 2.0, 3.0], &h, &p).unwrap();
        assert_eq!(out, &h * 0.5);
        let zero = gru_cell(&array![1.0, 2.0, 3.0], &Array1::zeros(4), &p).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let p = GruParams::zeros(3, 4);
        assert!(matches!(gru_cell(&array![1.0], &Array1::zeros(4), &p), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn state_stays_in_unit_box(seed in 0u64..1000, xs in prop::collection::vec(-5.0f64..5.0, 3), hs in prop::collection::vec(-1.0f64..=1.0, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = ModelParams::init_uniform(2, 3, 4, 2.0, &mut rng).encoder;
            let out = gru_cell(&Array1::from(xs), &Array1::from(hs), &p).unwrap();
            prop_assert!(out.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
