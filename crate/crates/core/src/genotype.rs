//! Genotype relatedness: correlation-matrix intake and k-means clustering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng::seeded;

/// Square genotype correlation matrix with its row/column identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub ids: Vec<String>,
    pub values: Matrix,
}

impl CorrelationMatrix {
    pub fn new(ids: Vec<String>, values: Matrix) -> Result<Self> {
        let n = ids.len();
        if values.shape() != (n, n) {
            return Err(Error::shape("CorrelationMatrix", format!("{n} ids"), format!("{:?} values", values.shape())));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Data("duplicate genotype ids in correlation matrix".into()));
        }
        for i in 0..n {
            if (values.get(i, i) - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!("correlation diagonal for '{}' is {}, expected 1", ids[i], values.get(i, i))));
            }
            for j in 0..n {
                let v = values.get(i, j);
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite correlation between '{}' and '{}'", ids[i], ids[j])));
                }
                if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::Data(format!("correlation {v} between '{}' and '{}' outside [-1, 1]", ids[i], ids[j])));
                }
                if (v - values.get(j, i)).abs() > 1e-9 {
                    return Err(Error::Data(format!("correlation matrix not symmetric at ('{}', '{}')", ids[i], ids[j])));
                }
            }
        }
        Ok(CorrelationMatrix { ids, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Reads a dense CSV whose first row and first column hold genotype ids.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, path)
    }

    pub fn parse<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let header = rdr.headers()?.clone();
        let ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let n = ids.len();
        let mut values = Matrix::zeros(n, n);
        let mut rows = 0;
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |msg: String| Error::Data(format!("{}:{line}: {msg}", source.display()));
            if rows >= n {
                return Err(bad("more rows than header columns".into()));
            }
            if row.get(0).map(str::trim) != Some(ids[rows].as_str()) {
                return Err(bad(format!("row id '{}' does not match column id '{}'", row.get(0).unwrap_or(""), ids[rows])));
            }
            if row.len() != n + 1 {
                return Err(bad(format!("expected {} values, found {}", n, row.len().saturating_sub(1))));
            }
            for (j, cell) in row.iter().skip(1).enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| bad(format!("unparseable value '{cell}'")))?;
                values.set(rows, j, v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Data(format!("{}: {rows} rows for {n} columns", source.display())));
        }
        Self::new(ids, values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("genotype_id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.values.row(i) {
                out.push(',');
                out.push_str(&format!("{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Lloyd run summary on a point set (rows of a matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment pass, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point; ties go to the lowest centroid index.
fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.rows());
    let mut dists = Vec::with_capacity(points.rows());
    for i in 0..points.rows() {
        let p = points.row(i);
        let mut best = (0, f64::INFINITY);
        for c in 0..centroids.rows() {
            let d = sq_dist(p, centroids.row(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    (labels, dists)
}

fn plus_plus_seed<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if nearest[chosen] == 0.0 {
                chosen = (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops when assignments stop changing, when the total squared centroid
/// shift drops below `tol`, or after `max_iters` updates. An empty cluster is
/// reseeded at the point farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds the number of points ({n})")));
    }
    if !points.is_finite() {
        return Err(Error::Data("k-means input contains non-finite values".into()));
    }
    let d = points.cols();
    let mut rng = seeded(seed);
    let mut centroids = plus_plus_seed(points, k, &mut rng);
    let (mut labels, mut dists) = assign(points, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, p) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += p;
            }
        }
        let mut next = Matrix::zeros(k, d);
        let mut taken = BTreeSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (x, s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *x = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                taken.insert(far);
                next.row_mut(c).copy_from_slice(points.row(far));
            }
        }
        let shift: f64 = (0..k).map(|c| sq_dist(centroids.row(c), next.row(c))).sum();
        centroids = next;
        let (new_labels, new_dists) = assign(points, &centroids);
        history.push(new_dists.iter().sum());
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        if !changed || shift < tol {
            converged = true;
            break;
        }
    }

    Ok(KMeansResult {
        inertia: dists.iter().sum(),
        labels,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Cluster id per genotype.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub clusters: BTreeMap<String, usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

impl ClusterAssignment {
    /// Cluster id of a genotype, used as a model feature before scaling.
    pub fn cluster_of(&self, genotype_id: &str) -> Result<usize> {
        self.clusters
            .get(genotype_id)
            .copied()
            .ok_or_else(|| Error::UnknownGenotype(genotype_id.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("genotype_id,cluster_id\n");
        for (id, c) in &self.clusters {
            out.push_str(&format!("{id},{c}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        File::create(path)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads an exported assignment. Centroids are not part of the file and come back empty.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut clusters = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let id = row.get(0).unwrap_or("").trim().to_string();
            let c: usize = row
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("{}:{line}: unparseable cluster id", path.display())))?;
            clusters.insert(id, c);
        }
        let k = clusters.values().max().map_or(0, |m| m + 1);
        Ok(ClusterAssignment {
            k,
            clusters,
            centroids: Matrix::zeros(0, 0),
            inertia: f64::NAN,
        })
    }
}

/// Clusters genotypes by their correlation rows.
///
/// Points are visited in sorted-id order so the partition does not depend on
/// the order of the input file.
pub fn cluster_genotypes(corr: &CorrelationMatrix, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<ClusterAssignment> {
    let mut order: Vec<usize> = (0..corr.len()).collect();
    order.sort_by(|&a, &b| corr.ids[a].cmp(&corr.ids[b]));
    let n = order.len();
    let mut points = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for (c, &j) in order.iter().enumerate() {
            points.set(r, c, corr.values.get(i, j));
        }
    }
    let fit = kmeans(&points, k, seed, max_iters, tol)?;
    let clusters = order.iter().zip(&fit.labels).map(|(&i, &l)| (corr.ids[i].clone(), l)).collect();
    Ok(ClusterAssignment {
        k,
        clusters,
        centroids: fit.centroids,
        inertia: fit.inertia,
    })
}
