//! Soft temporal attention over encoder annotations.
//!
//! Scores are a single affine map of each annotation, weights are their
//! softmax, and the context is the weighted sum of annotations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{axpy, dot, softmax, Matrix};

/// Alignment layer: one weight per annotation unit plus a scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl AttentionParams {
    pub fn zeros(hidden: usize) -> Self {
        AttentionParams {
            weights: vec![0.0; hidden],
            bias: 0.0,
        }
    }

    pub fn glorot<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (hidden + 1) as f64).sqrt();
        AttentionParams {
            weights: (0..hidden).map(|_| rng.gen_range(-limit..=limit)).collect(),
            bias: 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + 1
    }
}

/// Attention weights of one record, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub record_id: String,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Attended {
    pub context: Vec<f64>,
    pub scores: Vec<f64>,
    pub alphas: Vec<f64>,
}

pub fn attend(params: &AttentionParams, annotations: &Matrix) -> Result<Attended> {
    if annotations.rows() == 0 {
        return Err(Error::Data("attention over an empty annotation sequence".into()));
    }
    if annotations.cols() != params.weights.len() {
        return Err(Error::shape(
            "attend",
            format!("alignment width {}", params.weights.len()),
            format!("annotations {}x{}", annotations.rows(), annotations.cols()),
        ));
    }
    let scores: Vec<f64> = (0..annotations.rows())
        .map(|t| dot(&params.weights, annotations.row(t)) + params.bias)
        .collect();
    let alphas = softmax(&scores);
    let mut context = vec![0.0; annotations.cols()];
    for (t, &a) in alphas.iter().enumerate() {
        axpy(a, annotations.row(t), &mut context);
    }
    Ok(Attended { context, scores, alphas })
}

/// Backward through context → softmax → scores. Parameter gradients are
/// accumulated into `grads`; the annotation gradient is returned.
pub fn attend_backward(
    params: &AttentionParams,
    annotations: &Matrix,
    alphas: &[f64],
    d_context: &[f64],
    grads: &mut AttentionParams,
) -> Result<Matrix> {
    let (steps, hidden) = annotations.shape();
    if alphas.len() != steps || d_context.len() != hidden || params.weights.len() != hidden || grads.weights.len() != hidden {
        return Err(Error::shape(
            "attend_backward",
            format!("annotations {steps}x{hidden}"),
            format!(
                "alphas {}, d_context {}, params {}, grads {}",
                alphas.len(),
                d_context.len(),
                params.weights.len(),
                grads.weights.len()
            ),
        ));
    }
    // dL/dα_t = d_context · a_t; softmax Jacobian gives dL/de_t = α_t (dα_t − Σ_s α_s dα_s).
    let d_alpha: Vec<f64> = (0..steps).map(|t| dot(d_context, annotations.row(t))).collect();
    let mean: f64 = alphas.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let mut d_annotations = Matrix::zeros(steps, hidden);
    for t in 0..steps {
        let d_score = alphas[t] * (d_alpha[t] - mean);
        let row = d_annotations.row_mut(t);
        axpy(alphas[t], d_context, row);
        axpy(d_score, &params.weights, row);
        axpy(d_score, annotations.row(t), &mut grads.weights);
        grads.bias += d_score;
    }
    Ok(d_annotations)
}
