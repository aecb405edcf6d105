//! Flat-feature baselines: LASSO by coordinate descent and a random forest.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rmse;
use crate::numcore::Matrix;
use crate::pipeline::{Sample, N_WEATHER};
use crate::rng::seeded;

/// Flattens each sample to `T_x · 7` weather values followed by the selected statics.
pub fn flat_features(samples: &[Sample], use_mg: bool, use_cluster: bool) -> Result<Matrix> {
    let Some(first) = samples.first() else {
        return Ok(Matrix::zeros(0, 0));
    };
    let steps = first.weather.rows();
    let width = steps * N_WEATHER + use_mg as usize + use_cluster as usize;
    let mut out = Matrix::zeros(samples.len(), width);
    for (i, s) in samples.iter().enumerate() {
        if s.weather.shape() != (steps, N_WEATHER) {
            return Err(Error::shape("flat_features", format!("{steps}x{N_WEATHER}"), format!("{:?}", s.weather.shape())));
        }
        let row = out.row_mut(i);
        row[..steps * N_WEATHER].copy_from_slice(s.weather.data());
        let mut k = steps * N_WEATHER;
        if use_mg {
            row[k] = s.mg;
            k += 1;
        }
        if use_cluster {
            row[k] = s.cluster_feature;
        }
    }
    Ok(out)
}

pub fn soft_threshold(b: f64, lambda: f64) -> f64 {
    b.signum() * (b.abs() - lambda).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
}

impl LassoModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coefficients.len() {
            return Err(Error::shape("lasso predict", self.coefficients.len(), x.cols()));
        }
        Ok((0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}

/// `(1/2n)‖y − Xβ − β₀‖² + λ‖β‖₁`.
pub fn lasso_objective(x: &Matrix, y: &[f64], beta: &[f64], intercept: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = (0..x.rows())
        .map(|i| {
            let fit = intercept + x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            (y[i] - fit).powi(2)
        })
        .sum();
    rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent with an unpenalized intercept.
///
/// Stops once no coefficient (or the intercept) moves by `tol` or more in a
/// sweep, or after `max_sweeps` sweeps.
pub fn lasso_fit(x: &Matrix, y: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Result<LassoModel> {
    let (n, p) = x.shape();
    if n == 0 || y.len() != n {
        return Err(Error::shape("lasso_fit", format!("{n} rows"), format!("{} targets", y.len())));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) || !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::NonFinite("lasso input".into()));
    }
    let nf = n as f64;
    // Column-major copy for contiguous coordinate updates.
    let cols: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| x.get(i, j)).collect()).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut intercept = 0.0;
    let mut resid = y.to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        sweeps += 1;
        let shift = resid.iter().sum::<f64>() / nf;
        intercept += shift;
        resid.iter_mut().for_each(|r| *r -= shift);
        let mut max_change = shift.abs();
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= delta * a;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        trace.push(rss / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>());
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(LassoModel {
        coefficients: beta,
        intercept,
        lambda,
        sweeps,
        converged,
        objective_trace: trace,
    })
}

/// Fits one model per penalty and keeps the lowest validation RMSE; ties keep the earlier penalty.
pub fn lasso_select(x: &Matrix, y: &[f64], x_val: &Matrix, y_val: &[f64], lambdas: &[f64], tol: f64, max_sweeps: usize) -> Result<(LassoModel, f64)> {
    let mut best: Option<(LassoModel, f64)> = None;
    for &lambda in lambdas {
        let model = lasso_fit(x, y, lambda, tol, max_sweeps)?;
        if !model.converged {
            log::warn!("LASSO with lambda {lambda} stopped after {} sweeps without converging", model.sweeps);
        }
        let score = rmse(&model.predict(x_val)?, y_val)?;
        log::info!("LASSO lambda {lambda}: validation RMSE {score:.4}");
        if best.as_ref().is_none_or(|(_, b)| score < *b) {
            best = Some((model, score));
        }
    }
    best.ok_or_else(|| Error::Config("LASSO needs at least one penalty".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Share of features considered at each split.
    pub feature_fraction: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 5,
            feature_fraction: 1.0 / 3.0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a ForestParams,
    n_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    leaf_sizes: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.leaf_sizes.push(idx.len());
        self.nodes.len() - 1
    }

    /// Best (feature, threshold, split position) by variance reduction, or `None`.
    fn best_split(&mut self, idx: &mut [usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let p = self.x.cols();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample_indices(self.rng, p, self.n_features).into_vec() {
            idx.sort_by(|&a, &b| self.x.get(a, feature).total_cmp(&self.x.get(b, feature)));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[idx[k - 1]];
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.x.get(idx[k - 1], feature);
                let hi = self.x.get(idx[k], feature);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - parent;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        best.filter(|(g, _, _)| *g > 1e-12 * parent.abs().max(1.0)).map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || idx.len() < 2 * min_leaf {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(f64::NAN));
        let mut left: Vec<usize> = idx.iter().copied().filter(|&i| self.x.get(i, feature) <= threshold).collect();
        let mut right: Vec<usize> = idx.iter().copied().filter(|&i| self.x.get(i, feature) > threshold).collect();
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
    /// Training rows (with bootstrap multiplicity) per leaf, per tree.
    pub leaf_sizes: Vec<Vec<usize>>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Bagged regression trees. Tree `i` draws from its own ChaCha stream of
/// `seed`, so results do not depend on the order trees are built in.
pub fn forest_fit(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let n = x.rows();
    if n == 0 || y.len() != n {
        return Err(Error::Data(format!("forest_fit needs matching nonempty data ({n} rows, {} targets)", y.len())));
    }
    if n < params.min_samples_leaf {
        return Err(Error::Data(format!("{n} rows is fewer than min_samples_leaf {}", params.min_samples_leaf)));
    }
    if params.n_trees == 0 || !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::Config("forest needs at least one tree and a feature fraction in (0, 1]".into()));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest input".into()));
    }
    let n_features = ((x.cols() as f64 * params.feature_fraction).round() as usize).clamp(1, x.cols().max(1));
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut leaf_sizes = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = seeded(seed);
        rng.set_stream(t as u64);
        let mut idx: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut b = Builder {
            x,
            y,
            params,
            n_features,
            rng: &mut rng,
            nodes: Vec::new(),
            leaf_sizes: Vec::new(),
        };
        if x.cols() == 0 {
            b.leaf(&idx);
        } else {
            b.grow(&mut idx, 0);
        }
        leaf_sizes.push(b.leaf_sizes);
        trees.push(Tree { nodes: b.nodes });
    }
    Ok(ForestModel {
        params: *params,
        seed,
        trees,
        leaf_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn hadamard4() -> Matrix {
        // Zero-mean orthogonal columns with XᵀX = 4I.
        Matrix::from_rows(&[[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0], [-1.0, -1.0, 1.0]]).unwrap()
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let x = hadamard4();
        // y = 3 + X·b with b = (0.9, -0.2, 0.6).
        let b = [0.9, -0.2, 0.6];
        let y: Vec<f64> = (0..4).map(|i| 3.0 + x.row(i).iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()).collect();
        let m = lasso_fit(&x, &y, 0.5, 1e-12, 10_000).unwrap();
        assert!((m.coefficients[0] - 0.4).abs() < 1e-10);
        assert_eq!(m.coefficients[1], 0.0);
        assert!((m.coefficients[2] - 0.1).abs() < 1e-10);
        assert!((m.intercept - 3.0).abs() < 1e-12);

        let ols = lasso_fit(&x, &y, 0.0, 1e-12, 10_000).unwrap();
        for (c, want) in ols.coefficients.iter().zip(b) {
            assert!((c - want).abs() < 1e-10);
        }
    }

    #[test]
    fn full_shrinkage_threshold() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 0.5], [3.0, -1.0], [4.0, 0.0], [5.0, 1.5]]).unwrap();
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let ybar = y.iter().sum::<f64>() / 5.0;
        let lambda_max = (0..2)
            .map(|j| {
                let xbar = (0..5).map(|i| x.get(i, j)).sum::<f64>() / 5.0;
                ((0..5).map(|i| (x.get(i, j) - xbar) * (y[i] - ybar)).sum::<f64>() / 5.0).abs()
            })
            .fold(0.0, f64::max);
        let m = lasso_fit(&x, &y, lambda_max * 1.0001, 1e-12, 10_000).unwrap();
        assert!(m.coefficients.iter().all(|&c| c == 0.0), "{:?}", m.coefficients);
        assert!((m.intercept - ybar).abs() < 1e-12);
        let m = lasso_fit(&x, &y, lambda_max * 0.9, 1e-12, 10_000).unwrap();
        assert!(m.coefficients.iter().any(|&c| c != 0.0));
    }

    #[test]
    fn lasso_rejects_non_finite() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]).unwrap();
        assert!(matches!(lasso_fit(&x, &[1.0, 2.0], 0.1, 1e-8, 10), Err(Error::NonFinite(_))));
    }

    #[test]
    fn selection_keeps_the_best_validation_penalty() {
        let x = hadamard4();
        let y = [4.0, 2.5, 1.0, 0.2];
        let (m, score) = lasso_select(&x, &y, &x, &y, &[10.0, 0.0, 0.5], 1e-12, 10_000).unwrap();
        // On its own training rows the unpenalized fit is exact.
        assert_eq!(m.lambda, 0.0);
        assert!(score < 1e-9);
        assert!(lasso_select(&x, &y, &x, &y, &[], 1e-8, 10).is_err());
    }

    #[test]
    fn depth_zero_forest_is_the_mean() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]).unwrap();
        let y = [1.0, 4.0, 2.0, 8.0, 5.0, 10.0];
        let params = ForestParams {
            n_trees: 5,
            max_depth: 0,
            min_samples_leaf: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let f = forest_fit(&x, &y, &params, 1).unwrap();
        for p in f.predict(&x) {
            assert!((p - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_is_seeded_and_respects_leaf_size() {
        let mut rng = seeded(5);
        let rows: Vec<[f64; 4]> = (0..200).map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| (6.0 * r[0]).sin() + r[1] * r[1]).collect();
        let params = ForestParams {
            n_trees: 10,
            min_samples_leaf: 7,
            ..ForestParams::default()
        };
        let a = forest_fit(&x, &y, &params, 9).unwrap();
        let b = forest_fit(&x, &y, &params, 9).unwrap();
        assert_eq!(a.predict(&x), b.predict(&x));
        assert!(a.leaf_sizes.iter().flatten().all(|&s| s >= 7));
        assert_ne!(forest_fit(&x, &y, &params, 10).unwrap().predict(&x), a.predict(&x));

        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let rmse = |p: &[f64]| (p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        assert!(rmse(&a.predict(&x)) < rmse(&vec![mean; y.len()]));
    }

    #[test]
    fn forest_errors() {
        assert!(forest_fit(&Matrix::zeros(0, 2), &[], &ForestParams::default(), 0).is_err());
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(forest_fit(&x, &[1.0, 2.0], &ForestParams::default(), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lasso_objective_never_increases(seed in 0u64..1000, lambda in 0.0f64..0.5) {
            let mut rng = seeded(seed);
            let rows: Vec<[f64; 4]> = (0..12).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let y: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = lasso_fit(&x, &y, lambda, 1e-10, 500).unwrap();
            for w in m.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            let obj = lasso_objective(&x, &y, &m.coefficients, m.intercept, lambda);
            prop_assert!((obj - m.objective_trace.last().unwrap()).abs() < 1e-9);
        }

        #[test]
        fn forest_predictions_stay_in_target_range(seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let rows: Vec<[f64; 3]> = (0..40).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let params = ForestParams { n_trees: 4, min_samples_leaf: 2, ..ForestParams::default() };
            let f = forest_fit(&x, &y, &params, seed).unwrap();
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let probe: Vec<[f64; 3]> = (0..20).map(|_| [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)]).collect();
            for p in f.predict(&Matrix::from_rows(&probe).unwrap()) {
                prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
            }
        }
    }
}
