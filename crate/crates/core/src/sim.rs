//! Gaussian models on a pair of graphs, data sampling, and distribution-level
//! diagnostics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphTriple};
use crate::matrix::{cholesky, invert_spd, DataMatrix, SymMatrix};
use crate::seeds;

/// Margin added to the absolute off-diagonal row sum on the diagonal.
pub const DIAGONAL_MARGIN: f64 = 0.1;
pub const WEIGHT_MIN: f64 = 0.6;
pub const WEIGHT_MAX: f64 = 0.9;

#[derive(Clone, Debug)]
pub struct ModelPair {
    pub omega1: SymMatrix,
    pub omega2: SymMatrix,
    pub sigma1: SymMatrix,
    pub sigma2: SymMatrix,
    pub graphs: GraphTriple,
    pub seed: u64,
}

/// Draws from `[−0.9, −0.6] ∪ [0.6, 0.9]`: a fair sign, then a uniform magnitude.
fn edge_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    sign * rng.gen_range(WEIGHT_MIN..=WEIGHT_MAX)
}

fn diagonally_dominant(p: usize, weights: impl Iterator<Item = ((usize, usize), f64)>) -> SymMatrix {
    let mut omega = SymMatrix::zeros(p);
    let mut row_abs = vec![0.0; p];
    for ((i, j), w) in weights {
        omega.set(i, j, w);
        row_abs[i] += w.abs();
        row_abs[j] += w.abs();
    }
    for (i, r) in row_abs.into_iter().enumerate() {
        omega.set(i, i, r + DIAGONAL_MARGIN);
    }
    omega
}

/// Precision and covariance matrices for both conditions.
///
/// Every edge of G⁽¹⁾ ∪ G⁽²⁾ gets one weight, so common edges carry the same
/// value in both matrices. Diagonals are set per matrix to the absolute row
/// sum plus 0.1.
pub fn build_models(graphs: &GraphTriple, seed: u64) -> Result<ModelPair> {
    let p = graphs.g1.p();
    if graphs.g2.p() != p {
        return Err(Error::arg("graphs in the triple have different vertex counts"));
    }
    let mut rng = seeds::rng(seed);
    let union: std::collections::BTreeSet<(usize, usize)> = graphs
        .g1
        .edges()
        .chain(graphs.g2.edges())
        .collect();
    let weights: Vec<((usize, usize), f64)> =
        union.into_iter().map(|e| (e, edge_weight(&mut rng))).collect();
    let pick = |g: &Graph| {
        weights
            .iter()
            .copied()
            .filter(|&((i, j), _)| g.has_edge(i, j))
            .collect::<Vec<_>>()
    };
    let omega1 = diagonally_dominant(p, pick(&graphs.g1).into_iter());
    let omega2 = diagonally_dominant(p, pick(&graphs.g2).into_iter());
    let sigma1 = invert_spd(&omega1)?;
    let sigma2 = invert_spd(&omega2)?;
    Ok(ModelPair {
        omega1,
        omega2,
        sigma1,
        sigma2,
        graphs: graphs.clone(),
        seed,
    })
}

/// `n` i.i.d. rows from `N(0, Σ)` as `x = L z`, `L = chol(Σ)`, `z` standard
/// normal from `rand_distr`'s ziggurat sampler on a ChaCha8 stream.
pub fn sample_gaussian(sigma: &SymMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 {
        return Err(Error::arg(format!("need n >= 2 observations, got {n}")));
    }
    let l = cholesky(sigma)?;
    let p = sigma.dim();
    let mut rng = seeds::rng(seed);
    // row-major fill so the stream order is row by row
    let z = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    DataMatrix::new(z * l.transpose())
}

/// `KL(N(0, Σa) ‖ N(0, Σb)) = ½{tr(Σb⁻¹Σa) − log(det Σa / det Σb) − p}`.
pub fn kl_divergence(sigma_a: &SymMatrix, sigma_b: &SymMatrix) -> Result<f64> {
    if sigma_a.dim() != sigma_b.dim() {
        return Err(Error::arg("covariance dimensions differ"));
    }
    let la = cholesky(sigma_a)?;
    let lb = cholesky(sigma_b)?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let inv_b = invert_spd(sigma_b)?;
    let tr = inv_b.inner(sigma_a);
    let p = sigma_a.dim() as f64;
    Ok(0.5 * (tr - (logdet(&la) - logdet(&lb)) - p))
}

pub fn symmetrized_kl(sigma1: &SymMatrix, sigma2: &SymMatrix) -> Result<f64> {
    let total = kl_divergence(sigma1, sigma2)? + kl_divergence(sigma2, sigma1)?;
    Ok(total.max(0.0))
}

/// Highest vertex degree of the differential graph divided by `p`.
pub fn max_degree_normalized(gdiff: &Graph) -> f64 {
    if gdiff.p() == 0 {
        return 0.0;
    }
    gdiff.max_degree() as f64 / gdiff.p() as f64
}

/// The three ways of reading a differential edge off two precision matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definition {
    Value,
    Sign,
    Support,
}

pub fn differential_graph(omega1: &SymMatrix, omega2: &SymMatrix, def: Definition) -> Result<Graph> {
    let p = omega1.dim();
    if omega2.dim() != p {
        return Err(Error::arg("precision dimensions differ"));
    }
    let sgn = |x: f64| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut g = Graph::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (omega1[(i, j)], omega2[(i, j)]);
            let differs = match def {
                Definition::Value => a != b,
                Definition::Sign => sgn(a) != sgn(b),
                Definition::Support => (a != 0.0) != (b != 0.0),
            };
            if differs {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}
