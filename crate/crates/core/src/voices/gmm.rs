use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

use super::{Origin, SpeakerEmbedding};

pub const DEFAULT_COMPONENTS: usize = 3;
pub const MAX_EM_ITERATIONS: usize = 200;
/// Stop once the objective improves by less than this per data point.
pub const EM_TOLERANCE: f64 = 1e-6;
/// Covariance floor relative to the mean per-dimension data variance.
pub const FLOOR_RELATIVE: f64 = 1e-4;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Parameter("Cholesky of a non-square matrix".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Degenerate(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
fn solve_lower(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Mixture of full-covariance Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceGmm {
    pub dim: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

/// Per-iteration traces of an EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Plain data log-likelihood before each M-step.
    pub log_likelihood: Vec<f64>,
    /// The quantity EM maximizes with the covariance floor in place: each
    /// component density carries an extra `exp(-lambda/2 tr(Sigma^-1))`.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub floor: f64,
}

struct Component {
    weight: f64,
    mean: Array1<f64>,
    chol: Array2<f64>,
    log_det: f64,
    trace_inv: f64,
}

impl Component {
    fn new(weight: f64, mean: Array1<f64>, cov: &Array2<f64>) -> Result<Self> {
        let chol = cholesky(cov)?;
        let log_det = 2.0 * chol.diag().iter().map(|d| d.ln()).sum::<f64>();
        // tr(Sigma^-1) = ||L^-1||_F^2
        let n = mean.len();
        let mut trace_inv = 0.0;
        for i in 0..n {
            let mut e = Array1::zeros(n);
            e[i] = 1.0;
            let y = solve_lower(&chol, e.view());
            trace_inv += y.dot(&y);
        }
        Ok(Self {
            weight,
            mean,
            chol,
            log_det,
            trace_inv,
        })
    }

    fn log_density(&self, x: ArrayView1<f64>) -> f64 {
        let diff = &x - &self.mean;
        let y = solve_lower(&self.chol, diff.view());
        let d = x.len() as f64;
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + y.dot(&y))
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn data_matrix(data: &[SpeakerEmbedding]) -> Result<Array2<f64>> {
    let dim = data.first().map(|e| e.dim()).unwrap_or(0);
    let mut m = Array2::zeros((data.len(), dim));
    for (i, e) in data.iter().enumerate() {
        if e.dim() != dim {
            return Err(Error::Parameter(format!(
                "embedding {i} has dimension {}, expected {dim}",
                e.dim()
            )));
        }
        m.row_mut(i).assign(&ArrayView1::from(&e.values[..]));
    }
    Ok(m)
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
fn kmeans_pp(x: &Array2<f64>, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut centres = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            let d = &x.row(i) - &x.row(centres[0]);
            d.dot(&d)
        })
        .collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centres.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            let diff = &x.row(i) - &x.row(next);
            *d = d.min(diff.dot(&diff));
        }
    }
    centres
}

/// EM fit of a `k`-component full-covariance GMM.
///
/// Means start at k-means++ seeds, covariances at the data covariance,
/// weights uniform. Every M-step adds `lambda I` to each covariance with
/// `lambda = 1e-4 * mean per-dimension variance`. Iterates until the
/// objective gains less than 1e-6 per point, or 200 iterations.
pub fn fit_gmm(data: &[SpeakerEmbedding], k: usize, seed: u64) -> Result<(VoiceGmm, FitTrace)> {
    if k == 0 {
        return Err(Error::Config("GMM needs at least one component".into()));
    }
    if data.len() < 10 * k {
        return Err(Error::Config(format!(
            "{} embeddings are too few for a {k}-component GMM (need {})",
            data.len(),
            10 * k
        )));
    }
    let x = data_matrix(data)?;
    let (n, dim) = x.dim();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centred = &x - &mean;
    let data_cov = centred.t().dot(&centred) / n as f64;
    let floor = FLOOR_RELATIVE * data_cov.diag().mean().unwrap_or(0.0);
    if !(floor > 0.0) {
        return Err(Error::Degenerate("embeddings have zero variance".into()));
    }
    let eye = Array2::<f64>::eye(dim);

    let mut rng = seed::derive_rng(seed, "gmm-init", "");
    let seeds = kmeans_pp(&x, k, &mut rng);
    let init_cov = &data_cov + &(&eye * floor);
    let mut comps: Vec<Component> = seeds
        .iter()
        .map(|&i| Component::new(1.0 / k as f64, x.row(i).to_owned(), &init_cov))
        .collect::<Result<_>>()?;

    let mut trace = FitTrace {
        log_likelihood: Vec::new(),
        objective: Vec::new(),
        iterations: 0,
        converged: false,
        floor,
    };
    let mut resp = Array2::<f64>::zeros((n, k));
    let mut covs = vec![init_cov.clone(); k];
    let mut buf = vec![0.0; k];
    let mut pen = vec![0.0; k];
    for iter in 0..MAX_EM_ITERATIONS {
        // E-step
        let mut ll = 0.0;
        let mut obj = 0.0;
        for (c, p) in comps.iter().zip(&mut pen) {
            *p = -0.5 * floor * c.trace_inv;
        }
        for i in 0..n {
            for (j, c) in comps.iter().enumerate() {
                buf[j] = c.weight.ln() + c.log_density(x.row(i));
            }
            ll += log_sum_exp(&buf);
            for j in 0..k {
                buf[j] += pen[j];
            }
            let z = log_sum_exp(&buf);
            obj += z;
            for j in 0..k {
                resp[[i, j]] = (buf[j] - z).exp();
            }
        }
        trace.log_likelihood.push(ll);
        trace.objective.push(obj);
        trace.iterations = iter + 1;
        if iter > 0 {
            let prev = trace.objective[iter - 1];
            if (obj - prev) / (n as f64) < EM_TOLERANCE {
                trace.converged = true;
                break;
            }
        }

        // M-step
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let r = resp.column(j);
            let nk = r.sum().max(1e-300);
            let mu = x.t().dot(&r) / nk;
            let d = &x - &mu;
            let weighted = &d * &r.view().insert_axis(Axis(1));
            let cov = weighted.t().dot(&d) / nk + &eye * floor;
            covs[j] = cov;
            next.push(Component::new(nk / n as f64, mu, &covs[j])?);
        }
        comps = next;
    }

    let gmm = VoiceGmm {
        dim,
        seed,
        weights: comps.iter().map(|c| c.weight).collect(),
        means: comps.iter().map(|c| c.mean.to_vec()).collect(),
        covariances: covs
            .iter()
            .map(|c| c.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
    };
    Ok((gmm, trace))
}

impl VoiceGmm {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            return Err(Error::Format("GMM component counts disagree".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Format(format!("GMM weights sum to {sum}")));
        }
        for (m, c) in self.means.iter().zip(&self.covariances) {
            if m.len() != self.dim || c.len() != self.dim || c.iter().any(|r| r.len() != self.dim) {
                return Err(Error::Format("GMM dimension mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn covariance(&self, j: usize) -> Array2<f64> {
        let d = self.dim;
        Array2::from_shape_fn((d, d), |(a, b)| self.covariances[j][a][b])
    }

    /// Mixture mean and covariance.
    pub fn moments(&self) -> (Array1<f64>, Array2<f64>) {
        let d = self.dim;
        let mut mean = Array1::<f64>::zeros(d);
        for (w, m) in self.weights.iter().zip(&self.means) {
            mean.scaled_add(*w, &ArrayView1::from(&m[..]));
        }
        let mut cov = Array2::<f64>::zeros((d, d));
        for (j, (w, m)) in self.weights.iter().zip(&self.means).enumerate() {
            let diff = &ArrayView1::from(&m[..]) - &mean;
            let outer = diff
                .view()
                .insert_axis(Axis(1))
                .dot(&diff.view().insert_axis(Axis(0)));
            cov.scaled_add(*w, &(self.covariance(j) + outer));
        }
        (mean, cov)
    }

    /// Draws a component by weight, then `mean + L z` with `z ~ N(0, I)`.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<SpeakerEmbedding>> {
        self.validate()?;
        let chols: Vec<Array2<f64>> = (0..self.k())
            .map(|j| cholesky(&self.covariance(j)))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut j = self.k() - 1;
            for (c, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = c;
                    break;
                }
            }
            let z = Array1::from_shape_simple_fn(self.dim, || StandardNormal.sample(rng));
            let x = chols[j].dot(&z) + ArrayView1::from(&self.means[j][..]);
            out.push(SpeakerEmbedding {
                speaker_id: String::new(),
                values: x.to_vec(),
                origin: Origin::Sampled,
                source_model_dim: self.dim,
            });
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::manifest::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g: Self = crate::manifest::read_json(path)?;
        g.validate()?;
        Ok(g)
    }
}
