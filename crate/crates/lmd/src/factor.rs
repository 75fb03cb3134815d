//! Five-factor layer decomposition `W = U * O_dist * S' * I_dist * V^T`.
//!
//! Trivial mode collapses the discarded dimensions with identity-block
//! metric transforms, which makes the factorization exactly the truncated
//! SVD. Graph mode builds the metric transforms from graph-Laplacian
//! products `I_dist = C (L L_in+)` and `O_dist = (L_out L+) C'`, with the
//! reshape bases C, C' taken from Laplacian eigenvectors, and fits the
//! diagonal latent factor by least squares.

use crate::error::{Error, Result};
use crate::graph::{
    build_full_graph, build_knn_graph, laplacian, laplacian_spectrum, spectral_embedding,
    Bandwidth, DataSet, EmbeddingPolicy, Graph,
};
use crate::linalg::{pseudo_inverse, rank_tolerance, svd, Matrix};
use crate::mlp::{ConvergenceCertificate, MLPModel};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMode {
    Trivial,
    Graph,
}

/// The five factors plus residual diagnostics.
///
/// Shapes for a weight matrix mapping i-dimensional inputs to o-dimensional
/// outputs (`w` is o x i): `u` o x o, `o_dist` o x n', `s_prime` n' x n'
/// diagonal, `i_dist` n' x i, `vt` i x i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LMDFactorization {
    pub u: Matrix,
    pub o_dist: Matrix,
    pub s_prime: Matrix,
    pub i_dist: Matrix,
    pub vt: Matrix,
    pub n_prime: usize,
    pub mode: FactorMode,
    /// `||U O S' I V^T - W||_F / ||W||_F`.
    pub residual_to_w: f64,
    /// Defect of `O_dist S' I_dist = S`: restricted to the leading n' x n'
    /// block in trivial mode (where it holds exactly), relative to the full
    /// singular-value matrix in graph mode (reported, never asserted small).
    pub residual_eq4: f64,
    /// Set when the graph-mode diagonal least-squares system was
    /// rank-deficient and solved through the pseudo-inverse.
    pub rank_deficient_fit: bool,
}

impl LMDFactorization {
    pub fn input_dim(&self) -> usize {
        self.vt.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.u.rows()
    }

    /// `U O_dist S' I_dist V^T` as an explicit matrix.
    pub fn reconstruct_matrix(&self) -> Result<Matrix> {
        self.u
            .matmul(&self.o_dist)?
            .matmul(&self.s_prime)?
            .matmul(&self.i_dist)?
            .matmul(&self.vt)
    }

    pub fn s_prime_diag(&self) -> Vec<f64> {
        (0..self.n_prime).map(|k| self.s_prime.get(k, k)).collect()
    }
}

fn check_n_prime(w: &Matrix, n_prime: usize) -> Result<()> {
    let max = w.rows().min(w.cols());
    if n_prime == 0 || n_prime > max {
        return Err(Error::InvalidArgument(format!(
            "n_prime = {n_prime} out of range 1..={max} for a {}x{} weight matrix",
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// Embed singular values into the o x i diagonal-rectangle shape of Eq. 2.
fn singular_matrix(s: &[f64], o: usize, i: usize) -> Matrix {
    let mut m = Matrix::zeros(o, i);
    for (k, &v) in s.iter().enumerate().take(o.min(i)) {
        m.set(k, k, v);
    }
    m
}

fn relative(err: f64, norm: f64) -> f64 {
    if norm == 0.0 {
        err
    } else {
        err / norm
    }
}

/// Identity-block metric transforms: the factorization reduces to the
/// rank-n' truncated SVD of `w`.
pub fn factorize_trivial(w: &Matrix, n_prime: usize) -> Result<LMDFactorization> {
    check_n_prime(w, n_prime)?;
    let (o, i) = (w.rows(), w.cols());
    let f = svd(w)?;

    let mut o_dist = Matrix::zeros(o, n_prime);
    let mut i_dist = Matrix::zeros(n_prime, i);
    for k in 0..n_prime {
        o_dist.set(k, k, 1.0);
        i_dist.set(k, k, 1.0);
    }
    let s_prime = Matrix::diagonal(&f.s[..n_prime])?;

    let fact = LMDFactorization {
        u: f.u,
        o_dist,
        s_prime,
        i_dist,
        vt: f.vt,
        n_prime,
        mode: FactorMode::Trivial,
        residual_to_w: 0.0,
        residual_eq4: 0.0,
        rank_deficient_fit: false,
    };
    let rec = fact.reconstruct_matrix()?;
    let residual_to_w = relative(rec.frobenius_distance(w)?, w.frobenius_norm());

    // Eq. 4 defect on the leading n' x n' block.
    let osi = fact
        .o_dist
        .matmul(&fact.s_prime)?
        .matmul(&fact.i_dist)?;
    let s_full = singular_matrix(&f.s, o, i);
    let mut block_err = 0.0;
    for a in 0..n_prime {
        for b in 0..n_prime {
            let d = osi.get(a, b) - s_full.get(a, b);
            block_err += d * d;
        }
    }
    Ok(LMDFactorization {
        residual_to_w,
        residual_eq4: block_err.sqrt(),
        ..fact
    })
}

/// Graph-Laplacian metric transforms. All three graphs must share a vertex
/// count p with p >= max(i, o): the Laplacian products live on graph
/// vertices and the eigenvector reshape bases project them down to the
/// feature dimensions.
pub fn factorize_graph(
    w: &Matrix,
    in_graph: &Graph,
    out_graph: &Graph,
    latent_graph: &Graph,
    n_prime: usize,
    policy: EmbeddingPolicy,
) -> Result<LMDFactorization> {
    check_n_prime(w, n_prime)?;
    let (o, i) = (w.rows(), w.cols());
    let p = latent_graph.n;
    if in_graph.n != p || out_graph.n != p {
        return Err(Error::InvalidArgument(format!(
            "graphs are dimension-incompatible: vertex counts in={}, out={}, latent={p} must match",
            in_graph.n, out_graph.n
        )));
    }
    if p < i || p < o {
        return Err(Error::InvalidArgument(format!(
            "graphs are dimension-incompatible: {p} vertices cannot be projected onto feature dimensions i={i}, o={o}"
        )));
    }

    let in_spec = laplacian_spectrum(in_graph)?;
    let out_spec = laplacian_spectrum(out_graph)?;
    let lat_spec = laplacian_spectrum(latent_graph)?;

    let e_lat = spectral_embedding(&lat_spec, n_prime, policy)?; // p x n'
    let e_in = spectral_embedding(&in_spec, i, policy)?; // p x i
    let e_out = spectral_embedding(&out_spec, o, policy)?; // p x o

    let l_in_pinv = pseudo_inverse(&laplacian(in_graph))?;
    let l_lat = laplacian(latent_graph);
    let l_lat_pinv = pseudo_inverse(&l_lat)?;
    let l_out = laplacian(out_graph);

    // I_dist = C (L L_in+) projected to i columns, C = E_lat^T.
    let mut i_dist = e_lat
        .transpose()
        .matmul(&l_lat)?
        .matmul(&l_in_pinv)?
        .matmul(&e_in)?;
    // O_dist = (L_out L+) C' projected to o rows, C' = E_lat.
    let o_dist = e_out
        .transpose()
        .matmul(&l_out)?
        .matmul(&l_lat_pinv)?
        .matmul(&e_lat)?;

    let f = svd(w)?;
    let s_full = singular_matrix(&f.s, o, i);

    // Diagonal least squares: minimize ||O diag(d) I - S||_F over d.
    // Normal equations: (O^T O  hadamard  I I^T) d = diag(O^T S I^T).
    let gram_o = o_dist.transpose().matmul(&o_dist)?;
    let gram_i = i_dist.matmul(&i_dist.transpose())?;
    let mut system = Matrix::zeros(n_prime, n_prime);
    for a in 0..n_prime {
        for b in 0..n_prime {
            system.set(a, b, gram_o.get(a, b) * gram_i.get(a, b));
        }
    }
    let rhs_m = o_dist
        .transpose()
        .matmul(&s_full)?
        .matmul(&i_dist.transpose())?;
    let rhs: Vec<f64> = (0..n_prime).map(|k| rhs_m.get(k, k)).collect();

    let sys_svd = svd(&system)?;
    let smax = sys_svd.s.first().copied().unwrap_or(0.0);
    let rank_deficient_fit =
        sys_svd.numerical_rank(n_prime, n_prime) < n_prime || smax == 0.0;
    let solution = pseudo_inverse(&system)?.matvec(&rhs)?;

    // Keep the diagonal nonnegative and descending without changing the
    // product: a negative entry flips its i_dist row; sorting permutes the
    // o_dist columns and i_dist rows jointly.
    let mut diag = solution;
    for k in 0..n_prime {
        if diag[k] < 0.0 {
            diag[k] = -diag[k];
            for c in 0..i {
                i_dist.set(k, c, -i_dist.get(k, c));
            }
        }
    }
    let mut order: Vec<usize> = (0..n_prime).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap());
    let sorted_diag: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    let mut o_sorted = Matrix::zeros(o, n_prime);
    let mut i_sorted = Matrix::zeros(n_prime, i);
    for (slot, &k) in order.iter().enumerate() {
        for r in 0..o {
            o_sorted.set(r, slot, o_dist.get(r, k));
        }
        for c in 0..i {
            i_sorted.set(slot, c, i_dist.get(k, c));
        }
    }

    let fact = LMDFactorization {
        u: f.u,
        o_dist: o_sorted,
        s_prime: Matrix::diagonal(&sorted_diag)?,
        i_dist: i_sorted,
        vt: f.vt,
        n_prime,
        mode: FactorMode::Graph,
        residual_to_w: 0.0,
        residual_eq4: 0.0,
        rank_deficient_fit,
    };
    let osi = fact.o_dist.matmul(&fact.s_prime)?.matmul(&fact.i_dist)?;
    let residual_eq4 = relative(osi.frobenius_distance(&s_full)?, s_full.frobenius_norm());
    let rec = fact.reconstruct_matrix()?;
    let residual_to_w = relative(rec.frobenius_distance(w)?, w.frobenius_norm());
    Ok(LMDFactorization {
        residual_to_w,
        residual_eq4,
        ..fact
    })
}

/// Apply the factored map to an input vector.
pub fn reconstruct(f: &LMDFactorization, x: &[f64]) -> Result<Vec<f64>> {
    let v = f.vt.matvec(x)?;
    let v = f.i_dist.matvec(&v)?;
    let v: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(k, t)| t * f.s_prime.get(k, k))
        .collect();
    let v = f.o_dist.matvec(&v)?;
    f.u.matvec(&v)
}

/// Smallest k whose leading singular values carry at least `energy` of the
/// total squared spectrum. Values below the numerical-rank cutoff count as
/// zero.
pub fn estimate_latent_dim(s: &[f64], energy: f64) -> Result<usize> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction must be in (0, 1], got {energy}"
        )));
    }
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    let smax = s[0];
    let cutoff = rank_tolerance(s.len(), s.len(), smax);
    let effective: Vec<f64> = s.iter().map(|&v| if v > cutoff { v } else { 0.0 }).collect();
    let total: f64 = effective.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("all-zero spectrum".into()));
    }
    let mut acc = 0.0;
    for (k, v) in effective.iter().enumerate() {
        acc += v * v;
        if acc >= energy * total {
            return Ok(k + 1);
        }
    }
    Ok(effective.iter().filter(|&&v| v > 0.0).count())
}

/// Per-layer analysis settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub energy_levels: Vec<f64>,
    pub policy: EmbeddingPolicy,
    pub graph: Option<GraphModeConfig>,
    /// Analyze even without a stable convergence certificate.
    pub force: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            energy_levels: vec![0.9, 0.95, 0.99],
            policy: EmbeddingPolicy::SmallestNonzero,
            graph: None,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphModeConfig {
    /// kNN parameter of the latent graph; defaults to min(10, p-1).
    pub knn_k: Option<usize>,
    /// Latent dimension; defaults to the 0.95-energy estimate.
    pub n_prime: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentDimEstimate {
    pub energy: f64,
    pub n_prime: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphModeRecord {
    pub n_prime: usize,
    pub knn_k: usize,
    pub residual_to_w: f64,
    pub residual_eq4: f64,
    pub rank_deficient_fit: bool,
    /// Principal angles (radians, ascending) between the image of the top
    /// n' right singular directions of the layer-input activations and the
    /// spectral embedding of the activation graph.
    pub principal_angles: Vec<f64>,
    pub embedding_policy: EmbeddingPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer_index: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub singular_values: Vec<f64>,
    pub latent_dim_estimates: Vec<LatentDimEstimate>,
    /// Trivial-mode relative residual at n' = 1, 2, ..., min(i, o).
    pub trivial_residuals: Vec<f64>,
    pub graph: Option<GraphModeRecord>,
}

/// Principal angles between the column spans of two p x k matrices,
/// ascending, in radians.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    let qa = orthonormal_columns(a)?;
    let qb = orthonormal_columns(b)?;
    let m = qa.transpose().matmul(&qb)?;
    let f = svd(&m)?;
    let mut angles: Vec<f64> = f
        .s
        .iter()
        .map(|&c| c.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

fn orthonormal_columns(a: &Matrix) -> Result<Matrix> {
    let f = svd(a)?;
    let k = f.numerical_rank(a.rows(), a.cols()).max(1);
    let mut q = Matrix::zeros(a.rows(), k);
    for i in 0..a.rows() {
        for j in 0..k {
            q.set(i, j, f.u.get(i, j));
        }
    }
    Ok(q)
}

/// Spectral report for every layer of a trained model, in layer order.
pub fn layer_report(
    model: &MLPModel,
    certificate: Option<&ConvergenceCertificate>,
    dataset: &DataSet,
    config: &AnalysisConfig,
) -> Result<Vec<LayerRecord>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if !config.force && !certificate.map(|c| c.stable).unwrap_or(false) {
        return Err(Error::NotConverged);
    }

    // Inputs each layer sees, bias column included, one row per sample.
    let activations = model.layer_inputs(dataset)?;
    let indices: Vec<usize> = (0..model.layers.len()).collect();
    let records: Vec<Result<LayerRecord>> = map_layers(&indices, |&l| {
        analyze_layer(model, dataset, &activations[l], l, config)
    });
    records.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn map_layers<F>(indices: &[usize], f: F) -> Vec<Result<LayerRecord>>
where
    F: Fn(&usize) -> Result<LayerRecord> + Sync + Send,
{
    indices.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_layers<F>(indices: &[usize], f: F) -> Vec<Result<LayerRecord>>
where
    F: Fn(&usize) -> Result<LayerRecord> + Sync,
{
    indices.iter().map(f).collect()
}

fn analyze_layer(
    model: &MLPModel,
    dataset: &DataSet,
    layer_input: &Matrix,
    layer_index: usize,
    config: &AnalysisConfig,
) -> Result<LayerRecord> {
    // Stored layer is (i x o) with the bias row; the factored map is its
    // transpose, o x i.
    let w = model.layers[layer_index].transpose();
    let (o, i) = (w.rows(), w.cols());
    let f = svd(&w)?;

    let mut latent_dim_estimates = Vec::new();
    for &energy in &config.energy_levels {
        latent_dim_estimates.push(LatentDimEstimate {
            energy,
            n_prime: estimate_latent_dim(&f.s, energy)?,
        });
    }

    let kmax = o.min(i);
    let mut trivial_residuals = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        trivial_residuals.push(factorize_trivial(&w, k)?.residual_to_w);
    }

    let graph = match &config.graph {
        None => None,
        Some(gc) => {
            let p = dataset.len();
            let knn_k = gc.knn_k.unwrap_or_else(|| 10.min(p.saturating_sub(1)).max(1));
            let n_prime = match gc.n_prime {
                Some(k) => k,
                None => estimate_latent_dim(&f.s, 0.95)?,
            };

            let in_data = DataSet::new(layer_input.clone(), None)?;
            let out_mat = model.layer_outputs(dataset, layer_index)?;
            let out_data = DataSet::new(out_mat, None)?;
            let latent_points = DataSet::new(layer_input.clone(), dataset.targets.clone())?;
            let latent_joined = DataSet::new(latent_points.joined(), None)?;

            let in_graph = build_full_graph(&in_data, Bandwidth::Auto)?;
            let out_graph = build_full_graph(&out_data, Bandwidth::Auto)?;
            let latent_graph = build_knn_graph(&latent_joined, knn_k, Bandwidth::Auto)?;

            let fact = factorize_graph(&w, &in_graph, &out_graph, &latent_graph, n_prime, config.policy)?;

            // Subspace alignment: image of the top-n' right singular
            // directions of the activation matrix vs the Laplacian embedding.
            let act_svd = svd(layer_input)?;
            let k = n_prime.min(act_svd.s.len()).max(1);
            let mut left = Matrix::zeros(p, k);
            for r in 0..p {
                for c in 0..k {
                    left.set(r, c, act_svd.u.get(r, c));
                }
            }
            let spec = laplacian_spectrum(&in_graph)?;
            let embed = spectral_embedding(&spec, k, config.policy)?;
            let angles = principal_angles(&left, &embed)?;

            Some(GraphModeRecord {
                n_prime,
                knn_k,
                residual_to_w: fact.residual_to_w,
                residual_eq4: fact.residual_eq4,
                rank_deficient_fit: fact.rank_deficient_fit,
                principal_angles: angles,
                embedding_policy: config.policy,
            })
        }
    };

    Ok(LayerRecord {
        layer_index,
        input_dim: i,
        output_dim: o,
        singular_values: f.s.clone(),
        latent_dim_estimates,
        trivial_residuals,
        graph,
    })
}
