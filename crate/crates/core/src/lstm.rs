//! LSTM cell, single-layer unrolling and the two-layer stacked encoder.
//!
//! Each gate reads the concatenation `z = [a<t-1>, x<t>]`:
//!
//! ```text
//! e  = σ(W_e·z + b_e)          forget gate
//! r  = σ(W_r·z + b_r)          input gate
//! C̃ = tanh(W_C·z + b_C)        candidate
//! C<t> = e ⊙ C<t-1> + r ⊙ C̃
//! o  = σ(W_o·z + b_o)          output gate
//! a<t> = o ⊙ tanh(C<t>)
//! ```
//!
//! Tensors are always stored and serialized in gate order forget, input,
//! candidate, output, each matrix followed by its bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{sigmoid, Matrix};
use crate::rng::SeededRng;

/// Gate parameters of one LSTM layer. Matrices are `hidden × (hidden + input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellWeights {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_forget: Matrix,
    pub b_forget: Vec<f64>,
    pub w_input: Matrix,
    pub b_input: Vec<f64>,
    pub w_candidate: Matrix,
    pub b_candidate: Vec<f64>,
    pub w_output: Matrix,
    pub b_output: Vec<f64>,
}

impl LstmCellWeights {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let cols = hidden_size + input_size;
        LstmCellWeights {
            input_size,
            hidden_size,
            w_forget: Matrix::zeros(hidden_size, cols),
            b_forget: vec![0.0; hidden_size],
            w_input: Matrix::zeros(hidden_size, cols),
            b_input: vec![0.0; hidden_size],
            w_candidate: Matrix::zeros(hidden_size, cols),
            b_candidate: vec![0.0; hidden_size],
            w_output: Matrix::zeros(hidden_size, cols),
            b_output: vec![0.0; hidden_size],
        }
    }

    /// Glorot-uniform gate matrices, zero biases except the forget bias at 1.0.
    pub fn glorot<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(input_size, hidden_size);
        let cols = hidden_size + input_size;
        let limit = (6.0 / (cols + hidden_size) as f64).sqrt();
        for m in [&mut w.w_forget, &mut w.w_input, &mut w.w_candidate, &mut w.w_output] {
            for v in m.data_mut() {
                *v = rng.gen_range(-limit..=limit);
            }
        }
        w.b_forget.iter_mut().for_each(|b| *b = 1.0);
        w
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_size * (self.hidden_size + self.input_size + 1)
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w_forget.data(),
            &self.b_forget,
            self.w_input.data(),
            &self.b_input,
            self.w_candidate.data(),
            &self.b_candidate,
            self.w_output.data(),
            &self.b_output,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_forget.data_mut(),
            &mut self.b_forget,
            self.w_input.data_mut(),
            &mut self.b_input,
            self.w_candidate.data_mut(),
            &mut self.b_candidate,
            self.w_output.data_mut(),
            &mut self.b_output,
        ]
    }

    /// Checks the internal shape invariants (all four gates agree).
    pub fn validate(&self) -> Result<()> {
        let want = (self.hidden_size, self.hidden_size + self.input_size);
        for m in [&self.w_forget, &self.w_input, &self.w_candidate, &self.w_output] {
            if m.shape() != want {
                return Err(Error::shape("LstmCellWeights", format!("{want:?}"), format!("{:?}", m.shape())));
            }
        }
        for b in [&self.b_forget, &self.b_input, &self.b_candidate, &self.b_output] {
            if b.len() != self.hidden_size {
                return Err(Error::shape("LstmCellWeights bias", self.hidden_size, b.len()));
            }
        }
        Ok(())
    }
}

/// Hidden and cell state after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmStepState {
    pub fn zeros(hidden_size: usize) -> Self {
        LstmStepState {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

/// Gate values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub z: Vec<f64>,
    pub prev_cell: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub tanh_cell: Vec<f64>,
}

pub fn cell_forward(w: &LstmCellWeights, prev: &LstmStepState, x: &[f64]) -> Result<(LstmStepState, CellCache)> {
    if x.len() != w.input_size {
        return Err(Error::shape("cell_forward", format!("input size {}", w.input_size), format!("x has length {}", x.len())));
    }
    if prev.hidden.len() != w.hidden_size || prev.cell.len() != w.hidden_size {
        return Err(Error::shape(
            "cell_forward",
            format!("hidden size {}", w.hidden_size),
            format!("state lengths {}/{}", prev.hidden.len(), prev.cell.len()),
        ));
    }
    Ok(cell_step(w, &prev.hidden, &prev.cell, x))
}

fn cell_step(w: &LstmCellWeights, prev_hidden: &[f64], prev_cell: &[f64], x: &[f64]) -> (LstmStepState, CellCache) {
    let h = w.hidden_size;
    let mut z = Vec::with_capacity(h + x.len());
    z.extend_from_slice(prev_hidden);
    z.extend_from_slice(x);

    let mut forget = vec![0.0; h];
    let mut input = vec![0.0; h];
    let mut candidate = vec![0.0; h];
    let mut output = vec![0.0; h];
    w.w_forget.affine_into(&z, &w.b_forget, &mut forget);
    w.w_input.affine_into(&z, &w.b_input, &mut input);
    w.w_candidate.affine_into(&z, &w.b_candidate, &mut candidate);
    w.w_output.affine_into(&z, &w.b_output, &mut output);

    let mut cell = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut tanh_cell = vec![0.0; h];
    for j in 0..h {
        forget[j] = sigmoid(forget[j]);
        input[j] = sigmoid(input[j]);
        candidate[j] = candidate[j].tanh();
        output[j] = sigmoid(output[j]);
        cell[j] = forget[j] * prev_cell[j] + input[j] * candidate[j];
        tanh_cell[j] = cell[j].tanh();
        hidden[j] = output[j] * tanh_cell[j];
    }
    (
        LstmStepState { hidden, cell },
        CellCache {
            z,
            prev_cell: prev_cell.to_vec(),
            forget,
            input,
            candidate,
            output,
            tanh_cell,
        },
    )
}

/// Gradients flowing out of one cell step.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub d_prev_hidden: Vec<f64>,
    pub d_prev_cell: Vec<f64>,
    pub d_input: Vec<f64>,
}

/// Backward through one step. `d_hidden` is the total gradient on `a<t>`,
/// `d_cell` the gradient on `C<t>` arriving from step `t+1`. Parameter
/// gradients are accumulated into `grads`.
pub fn cell_backward(
    w: &LstmCellWeights,
    cache: &CellCache,
    d_hidden: &[f64],
    d_cell: &[f64],
    grads: &mut LstmCellWeights,
) -> CellGrads {
    let h = w.hidden_size;
    let mut d_f = vec![0.0; h];
    let mut d_i = vec![0.0; h];
    let mut d_c = vec![0.0; h];
    let mut d_o = vec![0.0; h];
    let mut d_prev_cell = vec![0.0; h];
    for j in 0..h {
        let (f, i, c, o, tc) = (
            cache.forget[j],
            cache.input[j],
            cache.candidate[j],
            cache.output[j],
            cache.tanh_cell[j],
        );
        let dc_total = d_cell[j] + d_hidden[j] * o * (1.0 - tc * tc);
        d_o[j] = d_hidden[j] * tc * o * (1.0 - o);
        d_f[j] = dc_total * cache.prev_cell[j] * f * (1.0 - f);
        d_i[j] = dc_total * c * i * (1.0 - i);
        d_c[j] = dc_total * i * (1.0 - c * c);
        d_prev_cell[j] = dc_total * f;
    }

    let mut d_z = vec![0.0; cache.z.len()];
    for (wm, gm, gb, d) in [
        (&w.w_forget, &mut grads.w_forget, &mut grads.b_forget, &d_f),
        (&w.w_input, &mut grads.w_input, &mut grads.b_input, &d_i),
        (&w.w_candidate, &mut grads.w_candidate, &mut grads.b_candidate, &d_c),
        (&w.w_output, &mut grads.w_output, &mut grads.b_output, &d_o),
    ] {
        gm.add_outer(d, &cache.z);
        gb.iter_mut().zip(d.iter()).for_each(|(b, di)| *b += di);
        wm.tr_mul_add(d, &mut d_z);
    }
    let d_input = d_z.split_off(h);
    CellGrads {
        d_prev_hidden: d_z,
        d_prev_cell,
        d_input,
    }
}

/// Forward mode. Training draws dropout masks from the supplied generator.
pub enum Mode<'a> {
    Train { rng: &'a mut SeededRng },
    Infer,
}

/// Per-layer forward record.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub steps: Vec<CellCache>,
    /// Inverted-dropout multipliers (0 or 1/(1−p)) applied to the outputs.
    pub masks: Option<Matrix>,
}

/// Unrolls one layer over `sequence` (rows are time steps) from a zero state.
pub fn layer_forward(w: &LstmCellWeights, sequence: &Matrix, dropout_rate: f64, mode: &mut Mode<'_>) -> Result<(Matrix, LayerCache)> {
    if sequence.rows() == 0 {
        return Err(Error::Data("layer_forward on an empty sequence".into()));
    }
    if sequence.cols() != w.input_size {
        return Err(Error::shape(
            "layer_forward",
            format!("input size {}", w.input_size),
            format!("sequence is {}x{}", sequence.rows(), sequence.cols()),
        ));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!("dropout rate {dropout_rate} outside [0, 1)")));
    }
    let h = w.hidden_size;
    let steps_n = sequence.rows();
    let mut outputs = Matrix::zeros(steps_n, h);
    let mut steps = Vec::with_capacity(steps_n);
    let mut prev_hidden = vec![0.0; h];
    let mut prev_cell = vec![0.0; h];
    for t in 0..steps_n {
        let (state, cache) = cell_step(w, &prev_hidden, &prev_cell, sequence.row(t));
        outputs.row_mut(t).copy_from_slice(&state.hidden);
        prev_hidden = state.hidden;
        prev_cell = state.cell;
        steps.push(cache);
    }

    let masks = match mode {
        Mode::Train { rng } if dropout_rate > 0.0 => {
            let keep = 1.0 / (1.0 - dropout_rate);
            let mut m = Matrix::zeros(steps_n, h);
            for v in m.data_mut() {
                *v = if rng.gen::<f64>() < dropout_rate { 0.0 } else { keep };
            }
            for (o, k) in outputs.data_mut().iter_mut().zip(m.data()) {
                *o *= k;
            }
            Some(m)
        }
        _ => None,
    };
    Ok((outputs, LayerCache { steps, masks }))
}

/// Backpropagation through time for one layer. Returns the gradient on the inputs.
pub fn layer_backward(w: &LstmCellWeights, cache: &LayerCache, d_outputs: &Matrix, grads: &mut LstmCellWeights) -> Result<Matrix> {
    let steps_n = cache.steps.len();
    if d_outputs.shape() != (steps_n, w.hidden_size) {
        return Err(Error::shape(
            "layer_backward",
            format!("{}x{}", steps_n, w.hidden_size),
            format!("{}x{}", d_outputs.rows(), d_outputs.cols()),
        ));
    }
    let h = w.hidden_size;
    let mut d_inputs = Matrix::zeros(steps_n, w.input_size);
    let mut d_next_hidden = vec![0.0; h];
    let mut d_next_cell = vec![0.0; h];
    let mut d_hidden = vec![0.0; h];
    for t in (0..steps_n).rev() {
        let upstream = d_outputs.row(t);
        for j in 0..h {
            let mask = cache.masks.as_ref().map_or(1.0, |m| m.get(t, j));
            d_hidden[j] = upstream[j] * mask + d_next_hidden[j];
        }
        let g = cell_backward(w, &cache.steps[t], &d_hidden, &d_next_cell, grads);
        d_inputs.row_mut(t).copy_from_slice(&g.d_input);
        d_next_hidden = g.d_prev_hidden;
        d_next_cell = g.d_prev_cell;
    }
    Ok(d_inputs)
}

/// Shape of the two-layer encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout_rate: f64,
    pub seq_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_dim: 9,
            hidden1: 128,
            hidden2: 50,
            dropout_rate: 0.2,
            seq_len: 30,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("hidden sizes must be at least 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("encoder input dimension must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden1 * (self.hidden1 + self.input_dim + 1) + 4 * self.hidden2 * (self.hidden2 + self.hidden1 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub layer1: LstmCellWeights,
    pub layer2: LstmCellWeights,
}

impl EncoderWeights {
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        EncoderWeights {
            layer1: LstmCellWeights::zeros(cfg.input_dim, cfg.hidden1),
            layer2: LstmCellWeights::zeros(cfg.hidden1, cfg.hidden2),
        }
    }

    pub fn glorot<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let layer1 = LstmCellWeights::glorot(cfg.input_dim, cfg.hidden1, rng);
        let layer2 = LstmCellWeights::glorot(cfg.hidden1, cfg.hidden2, rng);
        EncoderWeights { layer1, layer2 }
    }

    pub fn matches(&self, cfg: &EncoderConfig) -> Result<()> {
        self.layer1.validate()?;
        self.layer2.validate()?;
        let got = (self.layer1.input_size, self.layer1.hidden_size, self.layer2.input_size, self.layer2.hidden_size);
        let want = (cfg.input_dim, cfg.hidden1, cfg.hidden1, cfg.hidden2);
        if got != want {
            return Err(Error::shape("encoder weights", format!("{want:?}"), format!("{got:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub layer1: LayerCache,
    pub layer2: LayerCache,
}

/// Annotations `a<1..T_x>` (rows) from the second layer.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub annotations: Matrix,
    pub cache: EncoderCache,
}

impl Encoded {
    pub fn final_annotation(&self) -> &[f64] {
        self.annotations.row(self.annotations.rows() - 1)
    }
}

pub fn stacked_encode(cfg: &EncoderConfig, weights: &EncoderWeights, sequence: &Matrix, mode: &mut Mode<'_>) -> Result<Encoded> {
    weights.matches(cfg)?;
    if sequence.rows() != cfg.seq_len || sequence.cols() != cfg.input_dim {
        return Err(Error::shape(
            "stacked_encode",
            format!("{}x{}", cfg.seq_len, cfg.input_dim),
            format!("{}x{}", sequence.rows(), sequence.cols()),
        ));
    }
    let (first, layer1) = layer_forward(&weights.layer1, sequence, cfg.dropout_rate, mode)?;
    let (annotations, layer2) = layer_forward(&weights.layer2, &first, cfg.dropout_rate, mode)?;
    Ok(Encoded {
        annotations,
        cache: EncoderCache { layer1, layer2 },
    })
}

/// Exact gradients of the loss through both layers; returns the input gradient.
pub fn bptt_backward(weights: &EncoderWeights, cache: &EncoderCache, d_annotations: &Matrix, grads: &mut EncoderWeights) -> Result<Matrix> {
    let d_first = layer_backward(&weights.layer2, &cache.layer2, d_annotations, &mut grads.layer2)?;
    layer_backward(&weights.layer1, &cache.layer1, &d_first, &mut grads.layer1)
}
