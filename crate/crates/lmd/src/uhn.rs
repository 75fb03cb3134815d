//! Single-shot associative memory: `z = Proj * Sep(Sim(M, q))` with a
//! pluggable similarity/separation menu, plus seeded capacity sweeps over
//! bipolar patterns.

use crate::error::{Error, Result};
use crate::factor::LMDFactorization;
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Stored pattern matrix with paired output patterns; auto-association
/// stores the patterns themselves as projections.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    pub patterns: Matrix,
    pub projections: Matrix,
}

impl MemoryBank {
    pub fn auto(patterns: Matrix) -> Self {
        let projections = patterns.clone();
        Self {
            patterns,
            projections,
        }
    }

    pub fn hetero(patterns: Matrix, projections: Matrix) -> Result<Self> {
        if patterns.rows() != projections.rows() {
            return Err(Error::ShapeMismatch {
                op: "memory bank",
                lhs: (patterns.rows(), patterns.cols()),
                rhs: (projections.rows(), projections.cols()),
            });
        }
        Ok(Self {
            patterns,
            projections,
        })
    }

    pub fn stored(&self) -> usize {
        self.patterns.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Dot,
    NegEuclidean,
    NegManhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    Identity,
    /// Signed power after shifting scores to a zero minimum; degree >= 1.
    Poly(u32),
    /// Max-subtracted softmax with inverse temperature beta > 0.
    Softmax(f64),
    ThresholdLinear(f64),
}

impl Separation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Separation::Poly(n) if n < 1 => {
                Err(Error::InvalidArgument("poly degree must be >= 1".into()))
            }
            Separation::Softmax(beta) if beta <= 0.0 || beta.is_nan() => {
                Err(Error::InvalidArgument("softmax beta must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Separation::Identity => "identity".into(),
            Separation::Poly(n) => format!("poly:{n}"),
            Separation::Softmax(b) => format!("softmax:{b}"),
            Separation::ThresholdLinear(t) => format!("threshold:{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UHNConfig {
    pub similarity: Similarity,
    pub separation: Separation,
}

/// Score of the query against every stored pattern.
pub fn similarity(bank: &MemoryBank, q: &[f64], kind: Similarity) -> Result<Vec<f64>> {
    if q.len() != bank.patterns.cols() {
        return Err(Error::ShapeMismatch {
            op: "similarity",
            lhs: (1, q.len()),
            rhs: (bank.patterns.rows(), bank.patterns.cols()),
        });
    }
    Ok((0..bank.stored())
        .map(|i| {
            let row = bank.patterns.row(i);
            match kind {
                Similarity::Dot => row.iter().zip(q).map(|(a, b)| a * b).sum(),
                Similarity::NegEuclidean => -row
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                Similarity::NegManhattan => {
                    -row.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
                }
            }
        })
        .collect())
}

/// Sharpen a score vector into retrieval weights.
pub fn separation(scores: &[f64], kind: Separation) -> Result<Vec<f64>> {
    kind.validate()?;
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "separation scores".into(),
        });
    }
    Ok(match kind {
        Separation::Identity => scores.to_vec(),
        Separation::Poly(n) => {
            let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            scores.iter().map(|&v| (v - min).powi(n as i32)).collect()
        }
        Separation::Softmax(beta) => {
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|&v| (beta * (v - max)).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        }
        Separation::ThresholdLinear(theta) => {
            scores.iter().map(|&v| (v - theta).max(0.0)).collect()
        }
    })
}

/// `z = Proj^T * Sep(Sim(M, q))`.
pub fn retrieve(bank: &MemoryBank, q: &[f64], cfg: &UHNConfig) -> Result<Vec<f64>> {
    let scores = similarity(bank, q, cfg.similarity)?;
    let weights = separation(&scores, cfg.separation)?;
    bank.projections.transpose().matvec(&weights)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    pub visible_n: usize,
    pub separation_order: String,
    pub similarity: Similarity,
    pub stored_counts: Vec<usize>,
    pub retrieval_rates: Vec<f64>,
    pub corruption_fraction: f64,
    pub trials: usize,
    pub seed: u64,
}

fn bipolar_sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn trial_success(
    dim: usize,
    stored: usize,
    corruption: f64,
    cfg: &UHNConfig,
    seed: u64,
    trial: usize,
) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial as u64);
    let data: Vec<f64> = (0..stored * dim)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let patterns = Matrix::new(stored, dim, data)?;
    let target = rng.gen_range(0..stored);
    let mut q: Vec<f64> = patterns.row(target).to_vec();
    let flips = ((corruption * dim as f64).floor() as usize).min(dim);
    let chosen = rand::seq::index::sample(&mut rng, dim, flips);
    for idx in chosen.iter() {
        q[idx] = -q[idx];
    }
    let bank = MemoryBank::auto(patterns);
    let z = retrieve(&bank, &q, cfg)?;
    let expect = bank.patterns.row(target);
    Ok(z.iter().zip(expect).all(|(&a, &b)| bipolar_sign(a) == b))
}

/// Retrieval-rate sweep over stored-pattern counts on random bipolar
/// patterns with seeded sign-flip corruption. Trial seeds derive from
/// `seed XOR trial`, so results do not depend on scheduling and runs with
/// shared seeds are paired across configs.
pub fn capacity_sweep(
    dim: usize,
    stored_counts: &[usize],
    corruption: f64,
    cfg: &UHNConfig,
    trials: usize,
    seed: u64,
) -> Result<CapacityReport> {
    if dim < 8 {
        return Err(Error::InvalidArgument(format!("dim must be >= 8, got {dim}")));
    }
    if trials < 10 {
        return Err(Error::InvalidArgument(format!(
            "trials must be >= 10, got {trials}"
        )));
    }
    if !(0.0..1.0).contains(&corruption) {
        return Err(Error::InvalidArgument(format!(
            "corruption fraction must be in [0, 1), got {corruption}"
        )));
    }
    if stored_counts.contains(&0) {
        return Err(Error::InvalidArgument("stored counts must be positive".into()));
    }
    cfg.separation.validate()?;

    let mut retrieval_rates = Vec::with_capacity(stored_counts.len());
    for &stored in stored_counts {
        let successes = run_trials(dim, stored, corruption, cfg, seed, trials)?;
        retrieval_rates.push(successes as f64 / trials as f64);
    }
    Ok(CapacityReport {
        visible_n: dim,
        separation_order: cfg.separation.label(),
        similarity: cfg.similarity,
        stored_counts: stored_counts.to_vec(),
        retrieval_rates,
        corruption_fraction: corruption,
        trials,
        seed,
    })
}

#[cfg(feature = "parallel")]
fn run_trials(
    dim: usize,
    stored: usize,
    corruption: f64,
    cfg: &UHNConfig,
    seed: u64,
    trials: usize,
) -> Result<usize> {
    let results: Vec<Result<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| trial_success(dim, stored, corruption, cfg, seed, t))
        .collect();
    let mut ok = 0;
    for r in results {
        if r? {
            ok += 1;
        }
    }
    Ok(ok)
}

#[cfg(not(feature = "parallel"))]
fn run_trials(
    dim: usize,
    stored: usize,
    corruption: f64,
    cfg: &UHNConfig,
    seed: u64,
    trials: usize,
) -> Result<usize> {
    let mut ok = 0;
    for t in 0..trials {
        if trial_success(dim, stored, corruption, cfg, seed, t)? {
            ok += 1;
        }
    }
    Ok(ok)
}

/// The structural mapping between a five-factor layer decomposition and the
/// associative-memory stages: similarity <-> `I_dist V^T`, separation <->
/// `S'`, projection <-> `U O_dist`. Purely descriptive; no numerical claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    pub similarity_matrix: Matrix,
    pub separation_diagonal: Vec<f64>,
    pub projection_matrix: Matrix,
    pub similarity_norm: f64,
    pub separation_norm: f64,
    pub projection_norm: f64,
    pub n_prime: usize,
}

pub fn lmd_uhn_correspondence(f: &LMDFactorization) -> Result<CorrespondenceRecord> {
    let similarity_matrix = f.i_dist.matmul(&f.vt)?;
    let projection_matrix = f.u.matmul(&f.o_dist)?;
    let sep = f.s_prime_diag();
    let separation_norm = sep.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(CorrespondenceRecord {
        similarity_norm: similarity_matrix.frobenius_norm(),
        projection_norm: projection_matrix.frobenius_norm(),
        separation_norm,
        similarity_matrix,
        separation_diagonal: sep,
        projection_matrix,
        n_prime: f.n_prime,
    })
}
