use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Hyperparams;

pub const INIT_RANGE: f64 = 0.08;

/// Weights of one GRU layer. Input weights are `in x hidden`, recurrent
/// weights `hidden x hidden`, biases `1 x hidden`, so a batch of row vectors
/// maps as `x.dot(w) + h.dot(u) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array2<f64>,
    pub b_r: Array2<f64>,
    pub b_h: Array2<f64>,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Array2::zeros((input, hidden)),
            w_r: Array2::zeros((input, hidden)),
            w_h: Array2::zeros((input, hidden)),
            u_z: Array2::zeros((hidden, hidden)),
            u_r: Array2::zeros((hidden, hidden)),
            u_h: Array2::zeros((hidden, hidden)),
            b_z: Array2::zeros((1, hidden)),
            b_r: Array2::zeros((1, hidden)),
            b_h: Array2::zeros((1, hidden)),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.nrows()
    }

    fn tensors(&self) -> [&Array2<f64>; 9] {
        [&self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

pub const TENSOR_NAMES: [&str; 23] = [
    "src_embed",
    "tgt_embed",
    "encoder.w_z",
    "encoder.w_r",
    "encoder.w_h",
    "encoder.u_z",
    "encoder.u_r",
    "encoder.u_h",
    "encoder.b_z",
    "encoder.b_r",
    "encoder.b_h",
    "decoder.w_z",
    "decoder.w_r",
    "decoder.w_h",
    "decoder.u_z",
    "decoder.u_r",
    "decoder.u_h",
    "decoder.b_z",
    "decoder.b_r",
    "decoder.b_h",
    "attn",
    "out_w",
    "out_b",
];

/// All trainable tensors of the encoder-decoder. Also used as the gradient
/// container, since gradients share every shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `vocab x embed`, looked up for encoder inputs.
    pub src_embed: Array2<f64>,
    /// `vocab x embed`, looked up for decoder inputs.
    pub tgt_embed: Array2<f64>,
    pub encoder: GruParams,
    pub decoder: GruParams,
    /// Bilinear attention form: `score_i = s . (attn . h_i)`.
    pub attn: Array2<f64>,
    /// `2*hidden x vocab`, applied to `[decoder state; context]`.
    pub out_w: Array2<f64>,
    pub out_b: Array2<f64>,
}

pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize) -> Self {
        ModelParams {
            src_embed: Array2::zeros((vocab, embed)),
            tgt_embed: Array2::zeros((vocab, embed)),
            encoder: GruParams::zeros(embed, hidden),
            decoder: GruParams::zeros(embed, hidden),
            attn: Array2::zeros((hidden, hidden)),
            out_w: Array2::zeros((2 * hidden, vocab)),
            out_b: Array2::zeros((1, vocab)),
        }
    }

    /// Weights uniform in `[-0.08, 0.08)`, biases zero.
    pub fn init(vocab: usize, hyper: &Hyperparams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        Self::init_uniform(vocab, hyper.embed_size, hyper.hidden_size, INIT_RANGE, &mut rng)
    }

    pub fn init_uniform<R: Rng + ?Sized>(vocab: usize, embed: usize, hidden: usize, range: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab, embed, hidden);
        for (name, t) in p.named_mut() {
            if name.contains(".b_") || name == "out_b" {
                continue;
            }
            t.mapv_inplace(|_| rng.random_range(-range..range));
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.embed_size(), self.hidden_size())
    }

    pub fn vocab_size(&self) -> usize {
        self.src_embed.nrows()
    }

    pub fn embed_size(&self) -> usize {
        self.src_embed.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.attn.nrows()
    }

    pub fn named(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut v: Vec<&Array2<f64>> = vec![&self.src_embed, &self.tgt_embed];
        v.extend(self.encoder.tensors());
        v.extend(self.decoder.tensors());
        v.extend([&self.attn, &self.out_w, &self.out_b]);
        TENSOR_NAMES.into_iter().zip(v).collect()
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
        let mut v: Vec<&mut Array2<f64>> = vec![&mut self.src_embed, &mut self.tgt_embed];
        v.extend(self.encoder.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.extend([&mut self.attn, &mut self.out_w, &mut self.out_b]);
        TENSOR_NAMES.into_iter().zip(v).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.named_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    /// `self += other * factor`
    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.scaled_add(factor, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_names() {
        let p = ModelParams::zeros(12, 8, 6);
        let named = p.named();
        assert_eq!(named.len(), 23);
        assert_eq!(named[0].1.dim(), (12, 8));
        assert_eq!(named[2].0, "encoder.w_z");
        assert_eq!(named[2].1.dim(), (8, 6));
        assert_eq!(named[5].1.dim(), (6, 6));
        assert_eq!(named[8].1.dim(), (1, 6));
        assert_eq!(named[21].1.dim(), (12, 12));
        assert_eq!(named[22].1.dim(), (1, 12));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let h = Hyperparams { hidden_size: 5, embed_size: 4, ..Hyperparams::default() };
        let a = ModelParams::init(10, &h);
        assert_eq!(a, ModelParams::init(10, &h));
        for (name, t) in a.named() {
            if name.contains(".b_") || name == "out_b" {
                assert!(t.iter().all(|&v| v == 0.0));
            } else {
                assert!(t.iter().all(|&v| v.abs() <= INIT_RANGE));
                assert!(t.iter().any(|&v| v != 0.0));
            }
        }
    }
}
