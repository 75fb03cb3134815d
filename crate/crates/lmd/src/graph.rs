//! Graph construction over datasets: Gaussian-kernel complete graphs,
//! symmetrized kNN graphs, Laplacians and spectral embeddings.

use crate::error::{Error, Result};
use crate::linalg::{eig_symmetric, Matrix};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// p samples of dimension d, with optional paired targets.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub points: Matrix,
    pub targets: Option<Matrix>,
}

impl DataSet {
    pub fn new(points: Matrix, targets: Option<Matrix>) -> Result<Self> {
        if let Some(t) = &targets {
            if t.rows() != points.rows() {
                return Err(Error::ShapeMismatch {
                    op: "dataset targets",
                    lhs: (points.rows(), points.cols()),
                    rhs: (t.rows(), t.cols()),
                });
            }
        }
        Ok(Self { points, targets })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    /// Row-wise concatenation of points and targets (the product-space
    /// coordinates used for latent-graph construction).
    pub fn joined(&self) -> Matrix {
        match &self.targets {
            None => self.points.clone(),
            Some(t) => {
                let p = self.points.rows();
                let d = self.points.cols() + t.cols();
                let mut m = Matrix::zeros(p, d);
                for i in 0..p {
                    for j in 0..self.points.cols() {
                        m.set(i, j, self.points.get(i, j));
                    }
                    for j in 0..t.cols() {
                        m.set(i, self.points.cols() + j, t.get(i, j));
                    }
                }
                m
            }
        }
    }
}

/// Undirected weighted graph: symmetric nonnegative adjacency with zero
/// diagonal, plus the row-sum degree vector.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub adjacency: Matrix,
    pub degree: Vec<f64>,
}

impl Graph {
    pub fn new(adjacency: Matrix) -> Result<Self> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "graph adjacency",
                lhs: (adjacency.rows(), adjacency.cols()),
                rhs: (n, n),
            });
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency diagonal entry ({i},{i}) must be zero"
                )));
            }
            for j in 0..n {
                let a = adjacency.get(i, j);
                if a < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency entry ({i},{j}) is negative"
                    )));
                }
                if (a - adjacency.get(j, i)).abs() > 1.0e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let degree = (0..n).map(|i| adjacency.row(i).iter().sum()).collect();
        Ok(Self { n, adjacency, degree })
    }
}

/// Gaussian kernel bandwidth: explicit, or the median pairwise distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// Which Laplacian eigenvectors a spectral embedding selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingPolicy {
    /// Ascending from the smallest nonzero eigenvalue (Laplacian-eigenmap
    /// convention); wraps into the zero block if more are requested than
    /// nonzero eigenpairs exist.
    SmallestNonzero,
    /// Descending from the largest eigenvalue.
    Largest,
}

/// Laplacian together with its full ascending eigendecomposition.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub laplacian: Matrix,
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns ordered to match `values`.
    pub vectors: Matrix,
    pub zero_multiplicity: usize,
}

/// Symmetric matrix of pairwise Euclidean distances between rows.
pub fn pairwise_distances(points: &Matrix) -> Matrix {
    let p = points.rows();
    let rows = distance_rows(points);
    let mut m = Matrix::zeros(p, p);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            m.set(i, j, row[j]);
        }
    }
    m
}

fn distance_row(points: &Matrix, i: usize) -> Vec<f64> {
    let p = points.rows();
    let ri = points.row(i);
    (0..p)
        .map(|j| {
            ri.iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn distance_rows(points: &Matrix) -> Vec<Vec<f64>> {
    (0..points.rows())
        .into_par_iter()
        .map(|i| distance_row(points, i))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn distance_rows(points: &Matrix) -> Vec<Vec<f64>> {
    (0..points.rows()).map(|i| distance_row(points, i)).collect()
}

fn resolve_bandwidth(dist: &Matrix, bandwidth: Bandwidth) -> Result<f64> {
    match bandwidth {
        Bandwidth::Fixed(b) => {
            if b > 0.0 && b.is_finite() {
                Ok(b)
            } else {
                Err(Error::InvalidArgument(format!("bandwidth must be positive, got {b}")))
            }
        }
        Bandwidth::Auto => {
            let p = dist.rows();
            let mut all: Vec<f64> = Vec::with_capacity(p * (p - 1) / 2);
            for i in 0..p {
                for j in (i + 1)..p {
                    all.push(dist.get(i, j));
                }
            }
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if all.len() % 2 == 1 {
                all[all.len() / 2]
            } else {
                0.5 * (all[all.len() / 2 - 1] + all[all.len() / 2])
            };
            if median <= 0.0 {
                return Err(Error::InvalidArgument(
                    "auto bandwidth is zero: all points coincide".into(),
                ));
            }
            Ok(median)
        }
    }
}

fn gaussian_weight(d: f64, bandwidth: f64) -> f64 {
    (-d * d / (2.0 * bandwidth * bandwidth)).exp()
}

/// Complete graph with Gaussian edge weights
/// `a_ij = exp(-||x_i - x_j||^2 / (2 b^2))`.
pub fn build_full_graph(data: &DataSet, bandwidth: Bandwidth) -> Result<Graph> {
    let p = data.len();
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph construction needs at least 2 points, got {p}"
        )));
    }
    let dist = pairwise_distances(&data.points);
    let b = resolve_bandwidth(&dist, bandwidth)?;
    let mut adj = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                adj.set(i, j, gaussian_weight(dist.get(i, j), b));
            }
        }
    }
    Graph::new(adj)
}

/// Symmetrized kNN graph: an edge exists iff either endpoint lists the other
/// among its k nearest (ties broken toward the smaller index); weights are
/// the same Gaussian kernel as [`build_full_graph`].
pub fn build_knn_graph(data: &DataSet, k: usize, bandwidth: Bandwidth) -> Result<Graph> {
    let p = data.len();
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph construction needs at least 2 points, got {p}"
        )));
    }
    if k == 0 || k > p - 1 {
        return Err(Error::InvalidArgument(format!(
            "k = {k} out of range 1..={}",
            p - 1
        )));
    }
    let dist = pairwise_distances(&data.points);
    let b = resolve_bandwidth(&dist, bandwidth)?;
    let mut adj = Matrix::zeros(p, p);
    for i in 0..p {
        let mut order: Vec<usize> = (0..p).filter(|&j| j != i).collect();
        order.sort_by(|&x, &y| {
            dist.get(i, x)
                .partial_cmp(&dist.get(i, y))
                .unwrap()
                .then(x.cmp(&y))
        });
        for &j in order.iter().take(k) {
            let w = gaussian_weight(dist.get(i, j), b);
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
    }
    Graph::new(adj)
}

/// `L = D - A`.
pub fn laplacian(g: &Graph) -> Matrix {
    let mut l = Matrix::zeros(g.n, g.n);
    for i in 0..g.n {
        for j in 0..g.n {
            if i == j {
                l.set(i, j, g.degree[i]);
            } else {
                l.set(i, j, -g.adjacency.get(i, j));
            }
        }
    }
    l
}

pub fn laplacian_spectrum(g: &Graph) -> Result<LaplacianSpectrum> {
    let l = laplacian(g);
    let e = eig_symmetric(&l)?;
    let n = g.n;
    // eig_symmetric is descending; reorder ascending.
    let values: Vec<f64> = e.values.iter().rev().cloned().collect();
    let mut vectors = Matrix::zeros(n, n);
    for j in 0..n {
        let src = n - 1 - j;
        for i in 0..n {
            vectors.set(i, j, e.vectors.get(i, src));
        }
    }
    let lam_max = values.last().cloned().unwrap_or(0.0);
    let tol = 1.0e-8 * lam_max.max(1.0);
    let zero_multiplicity = values.iter().filter(|&&v| v.abs() <= tol).count();
    Ok(LaplacianSpectrum {
        laplacian: l,
        values,
        vectors,
        zero_multiplicity,
    })
}

/// Indices (into the ascending spectrum) selected by a policy.
pub fn embedding_indices(
    spec: &LaplacianSpectrum,
    n_prime: usize,
    policy: EmbeddingPolicy,
) -> Result<Vec<usize>> {
    let n = spec.values.len();
    if n_prime == 0 || n_prime > n {
        return Err(Error::InvalidArgument(format!(
            "n_prime = {n_prime} out of range 1..={n}"
        )));
    }
    let z = spec.zero_multiplicity.min(n);
    Ok(match policy {
        EmbeddingPolicy::SmallestNonzero => (z..n).chain(0..z).take(n_prime).collect(),
        EmbeddingPolicy::Largest => (0..n).rev().take(n_prime).collect(),
    })
}

/// n x n_prime matrix of eigenvector coordinates per vertex.
pub fn spectral_embedding(
    spec: &LaplacianSpectrum,
    n_prime: usize,
    policy: EmbeddingPolicy,
) -> Result<Matrix> {
    let idxs = embedding_indices(spec, n_prime, policy)?;
    let n = spec.values.len();
    let mut m = Matrix::zeros(n, n_prime);
    for (col, &src) in idxs.iter().enumerate() {
        for i in 0..n {
            m.set(i, col, spec.vectors.get(i, src));
        }
    }
    Ok(m)
}

/// Connected-component count by breadth-first traversal over nonzero edges.
pub fn connected_components(g: &Graph) -> usize {
    let mut seen = vec![false; g.n];
    let mut count = 0;
    for start in 0..g.n {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for w in 0..g.n {
                if !seen[w] && g.adjacency.get(v, w) > 0.0 {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    count
}
