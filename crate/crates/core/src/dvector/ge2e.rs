use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ge2eOutput {
    pub loss: f64,
    /// Same shape as the input embeddings.
    pub d_emb: Array2<f64>,
    pub d_w: f64,
    pub d_b: f64,
}

/// Cosine with the gradients w.r.t. both arguments. Zero-norm arguments
/// give a zero cosine and zero gradients.
fn cosine_grad(e: ArrayView1<f64>, c: ArrayView1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
    let ne = e.dot(&e).sqrt();
    let nc = c.dot(&c).sqrt();
    if ne == 0.0 || nc == 0.0 {
        return (0.0, Array1::zeros(e.len()), Array1::zeros(c.len()));
    }
    let cos = e.dot(&c) / (ne * nc);
    let de = &c / (ne * nc) - &e * (cos / (ne * ne));
    let dc = &e / (ne * nc) - &c * (cos / (nc * nc));
    (cos, de, dc)
}

/// GE2E softmax loss over `n` speakers x `m` utterances.
///
/// Rows of `emb` are speaker-major: row `j * m + i` is utterance `i` of
/// speaker `j`. The own-speaker centroid leaves the utterance out. The
/// loss is the mean over utterances of `-S_own + log sum_k exp(S_k)` with
/// `S_k = w cos(e, c_k) + b`.
pub fn ge2e_loss(emb: &Array2<f64>, n: usize, m: usize, w: f64, b: f64) -> Result<Ge2eOutput> {
    if n < 2 {
        return Err(Error::Config(format!("GE2E needs at least 2 speakers, got {n}")));
    }
    if m < 2 {
        return Err(Error::Config(format!(
            "GE2E needs at least 2 utterances per speaker, got {m}"
        )));
    }
    if emb.nrows() != n * m {
        return Err(Error::Parameter(format!(
            "{} embeddings for a {n} x {m} batch",
            emb.nrows()
        )));
    }
    let dim = emb.ncols();
    let total = (n * m) as f64;

    let mut sums = Array2::<f64>::zeros((n, dim));
    for j in 0..n {
        for i in 0..m {
            let mut s = sums.row_mut(j);
            s += &emb.row(j * m + i);
        }
    }
    let centroids = &sums / m as f64;

    let mut loss = 0.0;
    let mut d_emb = Array2::<f64>::zeros(emb.raw_dim());
    let mut d_sums = Array2::<f64>::zeros((n, dim));
    let mut d_w = 0.0;
    let mut d_b = 0.0;

    let mut cos = vec![0.0; n];
    let mut grads_e = Vec::with_capacity(n);
    let mut grads_c = Vec::with_capacity(n);
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            let e = emb.row(row);
            let own = (&sums.row(j) - &e) / (m - 1) as f64;
            grads_e.clear();
            grads_c.clear();
            for k in 0..n {
                let (c, de, dc) = if k == j {
                    cosine_grad(e, own.view())
                } else {
                    cosine_grad(e, centroids.row(k))
                };
                cos[k] = c;
                grads_e.push(de);
                grads_c.push(dc);
            }
            let s: Vec<f64> = cos.iter().map(|c| w * c + b).collect();
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - max).exp()).sum();
            loss += -s[j] + max + z.ln();

            for k in 0..n {
                let p = (s[k] - max).exp() / z;
                let g = (p - if k == j { 1.0 } else { 0.0 }) / total;
                d_w += g * cos[k];
                d_b += g;
                let a = g * w;
                let mut de = d_emb.row_mut(row);
                de.scaled_add(a, &grads_e[k]);
                if k == j {
                    // own = (sum_j - e) / (m - 1)
                    let scale = a / (m - 1) as f64;
                    d_sums.row_mut(j).scaled_add(scale, &grads_c[k]);
                    d_emb.row_mut(row).scaled_add(-scale, &grads_c[k]);
                } else {
                    d_sums.row_mut(k).scaled_add(a / m as f64, &grads_c[k]);
                }
            }
        }
    }
    for j in 0..n {
        for i in 0..m {
            let mut de = d_emb.row_mut(j * m + i);
            de += &d_sums.row(j);
        }
    }
    Ok(Ge2eOutput {
        loss: loss / total,
        d_emb,
        d_w,
        d_b,
    })
}
