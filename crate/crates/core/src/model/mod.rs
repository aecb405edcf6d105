//! The two regressors, their static-feature wiring, training and prediction.
//!
//! Both kinds share the two-layer encoder. The stacked kind regresses on the
//! final annotation; the attention kind regresses on the attention context.
//! Maturity group and genotype cluster can be appended to every time step,
//! to the encoder output, or both.

pub mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, attend_backward, AttentionMap, AttentionParams, Attended};
use crate::error::{Error, Result};
use crate::lstm::{bptt_backward, stacked_encode, EncoderConfig, EncoderWeights, Encoded, Mode};
use crate::numcore::{axpy, dot, Matrix};
use crate::pipeline::{Sample, Scaler, WeatherVar, N_WEATHER};
use crate::rng::seeded;

pub use train::{train, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stacked,
    Attention,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Stacked => "stacked",
            ModelKind::Attention => "attention",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stacked" => Ok(ModelKind::Stacked),
            "attention" => Ok(ModelKind::Attention),
            _ => Err(Error::Config(format!("unknown model kind '{s}' (expected stacked or attention)"))),
        }
    }
}

/// Where maturity group and cluster enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticMode {
    None,
    EveryStep,
    AfterEncoder,
    Both,
}

impl StaticMode {
    pub fn every_step(self) -> bool {
        matches!(self, StaticMode::EveryStep | StaticMode::Both)
    }

    pub fn after_encoder(self) -> bool {
        matches!(self, StaticMode::AfterEncoder | StaticMode::Both)
    }
}

impl FromStr for StaticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(StaticMode::None),
            "every_step" => Ok(StaticMode::EveryStep),
            "after_encoder" => Ok(StaticMode::AfterEncoder),
            "both" => Ok(StaticMode::Both),
            _ => Err(Error::Config(format!("unknown static mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub encoder: EncoderConfig,
    pub static_mode: StaticMode,
    pub use_weather: bool,
    /// Weather columns fed to the encoder; always used in canonical order.
    pub weather_vars: Vec<WeatherVar>,
    pub use_mg: bool,
    pub use_cluster: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Global gradient-norm ceiling; off when `None`.
    pub grad_clip: Option<f64>,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Stacked,
            encoder: EncoderConfig::default(),
            static_mode: StaticMode::Both,
            use_weather: true,
            weather_vars: WeatherVar::ALL.to_vec(),
            use_mg: true,
            use_cluster: true,
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.001,
            seed: 0,
            grad_clip: None,
            patience: None,
        }
    }
}

impl ModelConfig {
    /// Selected weather variables in canonical order, or none when weather is off.
    pub fn weather_columns(&self) -> Vec<WeatherVar> {
        if !self.use_weather {
            return Vec::new();
        }
        WeatherVar::ALL.iter().copied().filter(|v| self.weather_vars.contains(v)).collect()
    }

    pub fn n_statics(&self) -> usize {
        self.use_mg as usize + self.use_cluster as usize
    }

    pub fn step_statics(&self) -> usize {
        if self.static_mode.every_step() {
            self.n_statics()
        } else {
            0
        }
    }

    pub fn head_statics(&self) -> usize {
        if self.static_mode.after_encoder() {
            self.n_statics()
        } else {
            0
        }
    }

    pub fn expected_input_dim(&self) -> usize {
        self.weather_columns().len() + self.step_statics()
    }

    /// Sets the encoder input width from the feature flags.
    pub fn sync_input_dim(&mut self) {
        self.encoder.input_dim = self.expected_input_dim();
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let expected = self.expected_input_dim();
        if expected == 0 {
            return Err(Error::Config("the encoder receives no inputs; enable weather or per-step statics".into()));
        }
        if self.encoder.input_dim != expected {
            return Err(Error::Config(format!(
                "encoder input_dim is {} but the feature flags imply {expected}",
                self.encoder.input_dim
            )));
        }
        if self.use_weather && self.weather_columns().is_empty() {
            return Err(Error::Config("use_weather is set but no weather variables are selected".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Builds model inputs for one prepared sample.
    pub fn features(&self, sample: &Sample) -> Result<Features> {
        let (t, c) = sample.weather.shape();
        if t != self.encoder.seq_len || c != N_WEATHER {
            return Err(Error::shape(
                "features",
                format!("{}x{N_WEATHER} weather sequence", self.encoder.seq_len),
                format!("{t}x{c} for record {}", sample.record.record_id),
            ));
        }
        let mut statics = Vec::with_capacity(2);
        if self.use_mg {
            statics.push(sample.mg);
        }
        if self.use_cluster {
            statics.push(sample.cluster_feature);
        }
        let cols = self.weather_columns();
        let per_step = if self.static_mode.every_step() { statics.len() } else { 0 };
        let width = cols.len() + per_step;
        let mut sequence = Matrix::zeros(t, width);
        for step in 0..t {
            let src = sample.weather.row(step);
            let dst = sequence.row_mut(step);
            for (j, v) in cols.iter().enumerate() {
                dst[j] = src[v.index()];
            }
            dst[cols.len()..].copy_from_slice(&statics[..per_step]);
        }
        if !sequence.is_finite() || statics.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of record {}", sample.record.record_id)));
        }
        let head = if self.static_mode.after_encoder() { statics } else { Vec::new() };
        Ok(Features { sequence, statics: head })
    }
}

/// Encoder sequence plus the statics appended after the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub sequence: Matrix,
    pub statics: Vec<f64>,
}

/// Learnable parameter count implied by a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let h2 = cfg.encoder.hidden2;
    let attention = match cfg.kind {
        ModelKind::Attention => h2 + 1,
        ModelKind::Stacked => 0,
    };
    cfg.encoder.param_count() + (h2 + cfg.head_statics() + 1) + attention
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub encoder: EncoderWeights,
    pub attention: Option<AttentionParams>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl ModelWeights {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelWeights {
            encoder: EncoderWeights::zeros(&cfg.encoder),
            attention: (cfg.kind == ModelKind::Attention).then(|| AttentionParams::zeros(cfg.encoder.hidden2)),
            head_weights: vec![0.0; cfg.encoder.hidden2 + cfg.head_statics()],
            head_bias: 0.0,
        }
    }

    pub fn kind(&self) -> ModelKind {
        if self.attention.is_some() {
            ModelKind::Attention
        } else {
            ModelKind::Stacked
        }
    }

    /// All tensors in serialization order: layer 1 gates, layer 2 gates,
    /// attention weights and bias, head weights and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(20);
        out.extend(self.encoder.layer1.tensors());
        out.extend(self.encoder.layer2.tensors());
        if let Some(a) = &self.attention {
            out.push(&a.weights);
            out.push(std::slice::from_ref(&a.bias));
        }
        out.push(&self.head_weights);
        out.push(std::slice::from_ref(&self.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(20);
        out.extend(self.encoder.layer1.tensors_mut());
        out.extend(self.encoder.layer2.tensors_mut());
        if let Some(a) = &mut self.attention {
            out.push(&mut a.weights);
            out.push(std::slice::from_mut(&mut a.bias));
        }
        out.push(&mut self.head_weights);
        out.push(std::slice::from_mut(&mut self.head_bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in [`tensors`](Self::tensors) order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape("set_flat", self.param_count(), flat.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn matches(&self, cfg: &ModelConfig) -> Result<()> {
        self.encoder.matches(&cfg.encoder)?;
        if self.kind() != cfg.kind {
            return Err(Error::Config(format!("weights are for a {} model, config says {}", self.kind(), cfg.kind)));
        }
        if let Some(a) = &self.attention {
            if a.weights.len() != cfg.encoder.hidden2 {
                return Err(Error::shape("attention", cfg.encoder.hidden2, a.weights.len()));
            }
        }
        let head = cfg.encoder.hidden2 + cfg.head_statics();
        if self.head_weights.len() != head {
            return Err(Error::shape("head", head, self.head_weights.len()));
        }
        Ok(())
    }
}

/// Glorot-initialized weights for `cfg`.
pub fn build(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut rng = seeded(seed);
    let encoder = EncoderWeights::glorot(&cfg.encoder, &mut rng);
    let attention = (cfg.kind == ModelKind::Attention).then(|| AttentionParams::glorot(cfg.encoder.hidden2, &mut rng));
    let fan_in = cfg.encoder.hidden2 + cfg.head_statics();
    let limit = (6.0 / (fan_in + 1) as f64).sqrt();
    let head_weights = (0..fan_in).map(|_| rng.gen_range(-limit..=limit)).collect();
    Ok(ModelWeights {
        encoder,
        attention,
        head_weights,
        head_bias: 0.0,
    })
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Pass {
    pub prediction: f64,
    encoded: Encoded,
    attended: Option<Attended>,
    head_input: Vec<f64>,
}

impl Pass {
    pub fn attention(&self) -> Option<&[f64]> {
        self.attended.as_ref().map(|a| a.alphas.as_slice())
    }
}

pub(crate) fn forward_pass(weights: &ModelWeights, cfg: &ModelConfig, features: &Features, mode: &mut Mode<'_>) -> Result<Pass> {
    if features.statics.len() != cfg.head_statics() {
        return Err(Error::shape("forward", format!("{} head statics", cfg.head_statics()), features.statics.len()));
    }
    let encoded = stacked_encode(&cfg.encoder, &weights.encoder, &features.sequence, mode)?;
    let (summary, attended) = match &weights.attention {
        Some(params) => {
            let a = attend(params, &encoded.annotations)?;
            (a.context.clone(), Some(a))
        }
        None => (encoded.final_annotation().to_vec(), None),
    };
    let mut head_input = summary;
    head_input.extend_from_slice(&features.statics);
    let prediction = dot(&weights.head_weights, &head_input) + weights.head_bias;
    Ok(Pass {
        prediction,
        encoded,
        attended,
        head_input,
    })
}

/// Accumulates parameter gradients for upstream gradient `d_out` on the prediction.
pub(crate) fn backward_pass(weights: &ModelWeights, pass: &Pass, d_out: f64, grads: &mut ModelWeights) -> Result<()> {
    axpy(d_out, &pass.head_input, &mut grads.head_weights);
    grads.head_bias += d_out;
    let annotations = &pass.encoded.annotations;
    let (steps, h2) = annotations.shape();
    let d_summary: Vec<f64> = weights.head_weights[..h2].iter().map(|w| w * d_out).collect();
    let d_annotations = match (&weights.attention, &pass.attended, &mut grads.attention) {
        (Some(params), Some(att), Some(g)) => attend_backward(params, annotations, &att.alphas, &d_summary, g)?,
        (None, None, None) => {
            let mut d = Matrix::zeros(steps, h2);
            d.row_mut(steps - 1).copy_from_slice(&d_summary);
            d
        }
        _ => return Err(Error::Config("gradient buffers do not match the model kind".into())),
    };
    bptt_backward(&weights.encoder, &pass.encoded.cache, &d_annotations, &mut grads.encoder)?;
    Ok(())
}

/// Mean squared error over a batch and its exact gradient, without dropout.
pub fn mse_gradient(weights: &ModelWeights, cfg: &ModelConfig, batch: &[Features], targets: &[f64]) -> Result<(f64, ModelWeights)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::shape("mse_gradient", batch.len(), targets.len()));
    }
    weights.matches(cfg)?;
    let n = batch.len() as f64;
    let mut grads = ModelWeights::zeros(cfg);
    let mut loss = 0.0;
    for (f, t) in batch.iter().zip(targets) {
        let pass = forward_pass(weights, cfg, f, &mut Mode::Infer)?;
        let r = pass.prediction - t;
        loss += r * r / n;
        backward_pass(weights, &pass, 2.0 * r / n, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Scaled prediction and, for the attention kind, the attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub attention: Option<Vec<f64>>,
}

/// Inference-mode forward pass on prepared features.
pub fn forward(weights: &ModelWeights, cfg: &ModelConfig, features: &Features) -> Result<Prediction> {
    let pass = forward_pass(weights, cfg, features, &mut Mode::Infer)?;
    Ok(Prediction {
        value: pass.prediction,
        attention: pass.attended.map(|a| a.alphas),
    })
}

/// Predictions on the scaled target axis.
pub fn predict_scaled(weights: &ModelWeights, cfg: &ModelConfig, samples: &[Sample]) -> Result<Vec<f64>> {
    weights.matches(cfg)?;
    samples
        .iter()
        .map(|s| {
            let p = forward(weights, cfg, &cfg.features(s)?)?.value;
            if p.is_finite() {
                Ok(p)
            } else {
                Err(Error::NonFinite(format!("prediction for record {}", s.record.record_id)))
            }
        })
        .collect()
}

/// Predictions in bu/acre.
pub fn predict(weights: &ModelWeights, cfg: &ModelConfig, samples: &[Sample], scaler: &Scaler) -> Result<Vec<f64>> {
    Ok(predict_scaled(weights, cfg, samples)?
        .into_iter()
        .map(|p| scaler.target.invert(p))
        .collect())
}

/// Attention weights per record; fails for the stacked kind.
pub fn attention_maps(weights: &ModelWeights, cfg: &ModelConfig, samples: &[Sample]) -> Result<Vec<AttentionMap>> {
    weights.matches(cfg)?;
    if cfg.kind != ModelKind::Attention {
        return Err(Error::Config("attention maps need an attention model".into()));
    }
    samples
        .iter()
        .map(|s| {
            let p = forward(weights, cfg, &cfg.features(s)?)?;
            Ok(AttentionMap {
                record_id: s.record.record_id.clone(),
                weights: p.attention.unwrap_or_default(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GRAD_CHECK_STEP};
    use crate::pipeline::{MinMax, PerformanceRecord};

    pub(crate) fn toy_config(kind: ModelKind, static_mode: StaticMode) -> ModelConfig {
        let mut cfg = ModelConfig {
            kind,
            static_mode,
            encoder: EncoderConfig {
                input_dim: 0,
                hidden1: 3,
                hidden2: 2,
                dropout_rate: 0.0,
                seq_len: 5,
            },
            ..ModelConfig::default()
        };
        cfg.sync_input_dim();
        cfg
    }

    pub(crate) fn toy_sample(seq_len: usize, seed: u64) -> Sample {
        let mut rng = seeded(seed);
        let data = (0..seq_len * N_WEATHER).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Sample {
            record: PerformanceRecord {
                record_id: format!("r{seed}"),
                year: 2010,
                location_id: "L1".into(),
                genotype_id: "G1".into(),
                maturity_group: 3,
                yield_bu_ac: 50.0,
            },
            cluster: 1,
            weather: Matrix::from_vec(seq_len, N_WEATHER, data).unwrap(),
            mg: rng.gen_range(-1.0..1.0),
            cluster_feature: rng.gen_range(-1.0..1.0),
            target: rng.gen_range(-1.0..1.0),
        }
    }

    #[test]
    fn parameter_counts() {
        let mut tiny = ModelConfig {
            encoder: EncoderConfig {
                input_dim: 1,
                hidden1: 1,
                hidden2: 1,
                dropout_rate: 0.0,
                seq_len: 3,
            },
            static_mode: StaticMode::None,
            use_mg: false,
            use_cluster: false,
            weather_vars: vec![WeatherVar::Ap],
            ..ModelConfig::default()
        };
        assert_eq!(count_params(&tiny), 26);
        tiny.sync_input_dim();
        assert_eq!(build(&tiny, 0).unwrap().param_count(), 26);

        let stacked = ModelConfig::default();
        assert_eq!(stacked.encoder.input_dim, 9);
        assert_eq!(count_params(&stacked), 106_509);
        assert_eq!(build(&stacked, 1).unwrap().param_count(), 106_509);
        let attention = ModelConfig {
            kind: ModelKind::Attention,
            ..ModelConfig::default()
        };
        assert_eq!(count_params(&attention), 106_560);
        assert_eq!(build(&attention, 1).unwrap().param_count() - build(&stacked, 1).unwrap().param_count(), 51);
    }

    #[test]
    fn structural_count_matches_formula_for_every_static_mode() {
        for kind in [ModelKind::Stacked, ModelKind::Attention] {
            for mode in [StaticMode::None, StaticMode::EveryStep, StaticMode::AfterEncoder, StaticMode::Both] {
                let cfg = toy_config(kind, mode);
                assert_eq!(build(&cfg, 3).unwrap().param_count(), count_params(&cfg), "{kind:?} {mode:?}");
            }
        }
    }

    #[test]
    fn inconsistent_input_dim_is_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.use_cluster = false;
        assert!(matches!(build(&cfg, 0), Err(Error::Config(_))));
        cfg.sync_input_dim();
        assert_eq!(cfg.encoder.input_dim, 8);
        assert!(build(&cfg, 0).is_ok());
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = toy_config(ModelKind::Attention, StaticMode::Both);
        assert_eq!(build(&cfg, 9).unwrap(), build(&cfg, 9).unwrap());
        assert_ne!(build(&cfg, 9).unwrap(), build(&cfg, 10).unwrap());
    }

    #[test]
    fn zero_network_predicts_the_head_bias() {
        let cfg = toy_config(ModelKind::Attention, StaticMode::Both);
        let mut w = ModelWeights::zeros(&cfg);
        w.head_bias = 0.37;
        let samples: Vec<Sample> = (0..6).map(|i| toy_sample(5, i)).collect();
        assert!(predict_scaled(&w, &cfg, &samples).unwrap().iter().all(|&p| p == 0.37));
        let scaler = Scaler {
            weather: vec![MinMax { min: 0.0, max: 1.0 }; N_WEATHER],
            maturity_group: MinMax { min: 0.0, max: 8.0 },
            cluster: MinMax { min: 0.0, max: 4.0 },
            target: MinMax { min: 10.0, max: 90.0 },
        };
        let want = scaler.target.invert(0.37);
        assert!(predict(&w, &cfg, &samples, &scaler).unwrap().iter().all(|&p| p == want));
    }

    #[test]
    fn attention_with_constant_annotations_matches_stacked_head_input() {
        // Zero gate matrices and a closed forget gate make every annotation the same vector.
        let stacked_cfg = toy_config(ModelKind::Stacked, StaticMode::Both);
        let att_cfg = toy_config(ModelKind::Attention, StaticMode::Both);
        let mut stacked = ModelWeights::zeros(&stacked_cfg);
        for layer in [&mut stacked.encoder.layer1, &mut stacked.encoder.layer2] {
            layer.b_forget.iter_mut().for_each(|b| *b = -50.0);
            layer.b_candidate.iter_mut().for_each(|b| *b = 0.8);
            layer.b_output.iter_mut().for_each(|b| *b = 0.4);
        }
        stacked.head_weights = vec![0.3, -0.2, 0.5, 0.1];
        let att = ModelWeights {
            attention: Some(AttentionParams {
                weights: vec![1.5, -2.0],
                bias: 0.2,
            }),
            ..stacked.clone()
        };
        let f = stacked_cfg.features(&toy_sample(5, 1)).unwrap();
        let a = forward_pass(&stacked, &stacked_cfg, &f, &mut Mode::Infer).unwrap();
        let b = forward_pass(&att, &att_cfg, &f, &mut Mode::Infer).unwrap();
        for (x, y) in a.head_input.iter().zip(&b.head_input) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.prediction - b.prediction).abs() < 1e-12);
    }

    #[test]
    fn attention_kind_emits_a_distribution() {
        let cfg = toy_config(ModelKind::Attention, StaticMode::Both);
        let w = build(&cfg, 4).unwrap();
        let samples: Vec<Sample> = (0..4).map(|i| toy_sample(5, i)).collect();
        for m in attention_maps(&w, &cfg, &samples).unwrap() {
            assert_eq!(m.weights.len(), 5);
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let stacked = toy_config(ModelKind::Stacked, StaticMode::Both);
        assert!(attention_maps(&build(&stacked, 4).unwrap(), &stacked, &samples).is_err());
    }

    #[test]
    fn feature_layout() {
        let mut cfg = toy_config(ModelKind::Stacked, StaticMode::Both);
        cfg.weather_vars = vec![WeatherVar::MinSur, WeatherVar::Adni];
        cfg.sync_input_dim();
        assert_eq!(cfg.encoder.input_dim, 4);
        let s = toy_sample(5, 2);
        let f = cfg.features(&s).unwrap();
        assert_eq!(f.sequence.row(3), &[s.weather.get(3, 0), s.weather.get(3, 5), s.mg, s.cluster_feature]);
        assert_eq!(f.statics, vec![s.mg, s.cluster_feature]);

        let weather_only = ModelConfig {
            use_mg: false,
            use_cluster: false,
            ..ModelConfig::default()
        };
        assert_eq!(weather_only.expected_input_dim(), 7);
        assert!(ModelConfig::default().features(&toy_sample(7, 0)).is_err());
    }

    fn model_grad_check(kind: ModelKind, mode: StaticMode) -> f64 {
        let cfg = toy_config(kind, mode);
        let mut w = build(&cfg, 21).unwrap();
        w.head_bias = 0.1;
        if let Some(a) = &mut w.attention {
            a.bias = -0.2;
        }
        let samples: Vec<Sample> = (0..3).map(|i| toy_sample(5, 30 + i)).collect();
        let feats: Vec<Features> = samples.iter().map(|s| cfg.features(s).unwrap()).collect();
        let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();

        let (_, grads) = mse_gradient(&w, &cfg, &feats, &targets).unwrap();
        let mut probe = w.clone();
        grad_check(
            |p| {
                probe.set_flat(p).unwrap();
                mse_gradient(&probe, &cfg, &feats, &targets).unwrap().0
            },
            &w.to_flat(),
            &grads.to_flat(),
            GRAD_CHECK_STEP,
        )
        .unwrap()
    }

    #[test]
    fn end_to_end_gradients_match_central_differences() {
        for kind in [ModelKind::Stacked, ModelKind::Attention] {
            for mode in [StaticMode::None, StaticMode::EveryStep, StaticMode::AfterEncoder, StaticMode::Both] {
                let err = model_grad_check(kind, mode);
                assert!(err < 1e-4, "{kind:?} {mode:?}: {err}");
            }
        }
    }

    #[test]
    fn kind_and_mode_parse() {
        assert_eq!("Attention".parse::<ModelKind>().unwrap(), ModelKind::Attention);
        assert_eq!("after-encoder".parse::<StaticMode>().unwrap(), StaticMode::AfterEncoder);
        assert!("both-ish".parse::<StaticMode>().is_err());
    }
}
