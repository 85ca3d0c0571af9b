//! Loss functions with hand-derived gradients: softmax cross-entropy for
//! node classification and the contrastive objective used for backbone
//! pretraining.

use ndarray::Array2;

use crate::error::{Result, TppError};

/// Mean softmax cross-entropy over the selected rows.
///
/// Returns the scalar loss and its gradient w.r.t. the logits,
/// `(softmax − one-hot) / rows`.
pub fn cross_entropy_loss(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let rows = logits.nrows();
    let classes = logits.ncols();
    assert_eq!(rows, labels.len(), "one label per logit row");
    let mut grad = Array2::<f64>::zeros((rows, classes));
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < classes, "label {label} out of range");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row.iter() {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += log_denom - row[label];
        for c in 0..classes {
            let p = (row[c] - log_denom).exp();
            grad[[i, c]] = (p - if c == label { 1.0 } else { 0.0 }) / rows as f64;
        }
    }
    (loss / rows as f64, grad)
}

/// Row-wise softmax probabilities (no gradient).
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

struct CosineContext {
    norms_a: Vec<f64>,
    norms_b: Vec<f64>,
    /// sim[i * n + j] = cos(a_i, b_j)
    sim: Vec<f64>,
}

fn cosine_matrix(a: &Array2<f64>, b: &Array2<f64>) -> Result<CosineContext> {
    let n = a.nrows();
    let row_norm = |m: &Array2<f64>, i: usize| -> Result<f64> {
        let norm = m.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(TppError::ZeroNormRow(i));
        }
        Ok(norm)
    };
    let norms_a: Vec<f64> = (0..n).map(|i| row_norm(a, i)).collect::<Result<_>>()?;
    let norms_b: Vec<f64> = (0..n).map(|i| row_norm(b, i)).collect::<Result<_>>()?;
    let mut sim = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot = a.row(i).dot(&b.row(j));
            sim[i * n + j] = dot / (norms_a[i] * norms_b[j]);
        }
    }
    Ok(CosineContext {
        norms_a,
        norms_b,
        sim,
    })
}

/// Normalized-temperature cross-entropy over two views of the same nodes.
///
/// For each anchor the positive is its counterpart in the other view; the
/// negatives are all other nodes of both views. Symmetrized over the two
/// anchor directions and averaged over 2N terms. Similarity is cosine, so
/// the loss is invariant to rescaling either view.
///
/// Returns (loss, grad w.r.t. view 1, grad w.r.t. view 2).
pub fn ntxent_loss(
    z_view1: &Array2<f64>,
    z_view2: &Array2<f64>,
    temperature: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let n = z_view1.nrows();
    let d = z_view1.ncols();
    if z_view2.nrows() != n || z_view2.ncols() != d {
        return Err(TppError::DimensionMismatch(format!(
            "views differ: {}x{} vs {}x{}",
            n,
            d,
            z_view2.nrows(),
            z_view2.ncols()
        )));
    }
    if n < 2 {
        return Err(TppError::DimensionMismatch(
            "contrastive loss needs at least 2 nodes".into(),
        ));
    }
    if temperature <= 0.0 {
        return Err(TppError::InvalidConfig(format!(
            "temperature {temperature} must be positive"
        )));
    }

    let uv = cosine_matrix(z_view1, z_view2)?; // cos(u_i, v_j)
    let uu = cosine_matrix(z_view1, z_view1)?;
    let vv = cosine_matrix(z_view2, z_view2)?;

    // Similarity-level gradients, filled by both anchor directions.
    let mut g_uv = vec![0.0f64; n * n];
    let mut g_uu = vec![0.0f64; n * n];
    let mut g_vv = vec![0.0f64; n * n];
    let weight = 1.0 / (2.0 * n as f64);
    let mut loss = 0.0;

    // Anchor in view 1: positive uv[i][i], negatives uv[i][j] and uu[i][j].
    for i in 0..n {
        let pos = uv.sim[i * n + i];
        let mut max = pos;
        let mut entries = Vec::with_capacity(2 * n - 1);
        entries.push((pos, usize::MAX)); // positive marker
        for j in 0..n {
            if j != i {
                let s = uv.sim[i * n + j];
                if s > max {
                    max = s;
                }
                entries.push((s, j));
            }
        }
        for j in 0..n {
            if j != i {
                let s = uu.sim[i * n + j];
                if s > max {
                    max = s;
                }
                entries.push((s, n + j));
            }
        }
        let denom: f64 = entries
            .iter()
            .map(|&(s, _)| ((s - max) / temperature).exp())
            .sum();
        let log_denom = denom.ln() + max / temperature;
        loss += log_denom - pos / temperature;

        for &(s, slot) in &entries {
            let p = ((s - max) / temperature).exp() / denom;
            let g = weight * p / temperature;
            if slot == usize::MAX {
                g_uv[i * n + i] += g - weight / temperature;
            } else if slot < n {
                g_uv[i * n + slot] += g;
            } else {
                g_uu[i * n + (slot - n)] += g;
            }
        }
    }

    // Anchor in view 2: positive uv[i][i] (cos is symmetric in its pair),
    // negatives cos(v_i, u_j) = uv[j][i] and vv[i][j].
    for i in 0..n {
        let pos = uv.sim[i * n + i];
        let mut max = pos;
        let mut entries = Vec::with_capacity(2 * n - 1);
        entries.push((pos, usize::MAX)); // positive marker
        for j in 0..n {
            if j != i {
                let s = uv.sim[j * n + i];
                if s > max {
                    max = s;
                }
                entries.push((s, j));
            }
        }
        for j in 0..n {
            if j != i {
                let s = vv.sim[i * n + j];
                if s > max {
                    max = s;
                }
                entries.push((s, n + j));
            }
        }
        let denom: f64 = entries
            .iter()
            .map(|&(s, _)| ((s - max) / temperature).exp())
            .sum();
        let log_denom = denom.ln() + max / temperature;
        loss += log_denom - pos / temperature;

        for &(s, slot) in &entries {
            let p = ((s - max) / temperature).exp() / denom;
            let g = weight * p / temperature;
            if slot == usize::MAX {
                g_uv[i * n + i] += g - weight / temperature;
            } else if slot < n {
                g_uv[slot * n + i] += g;
            } else {
                g_vv[i * n + (slot - n)] += g;
            }
        }
    }
    loss *= weight;

    // Backpropagate similarity-level gradients through the cosine.
    let mut grad_u = Array2::<f64>::zeros((n, d));
    let mut grad_v = Array2::<f64>::zeros((n, d));
    let cos_backward = |g: f64,
                        s: f64,
                        xi: ndarray::ArrayView1<f64>,
                        ni: f64,
                        yj: ndarray::ArrayView1<f64>,
                        nj: f64,
                        gi: &mut ndarray::ArrayViewMut1<f64>| {
        let inv = 1.0 / (ni * nj);
        for c in 0..xi.len() {
            gi[c] += g * (yj[c] * inv - s * xi[c] / (ni * ni));
        }
    };
    for i in 0..n {
        for j in 0..n {
            let g = g_uv[i * n + j];
            if g != 0.0 {
                let s = uv.sim[i * n + j];
                cos_backward(
                    g,
                    s,
                    z_view1.row(i),
                    uv.norms_a[i],
                    z_view2.row(j),
                    uv.norms_b[j],
                    &mut grad_u.row_mut(i),
                );
                cos_backward(
                    g,
                    s,
                    z_view2.row(j),
                    uv.norms_b[j],
                    z_view1.row(i),
                    uv.norms_a[i],
                    &mut grad_v.row_mut(j),
                );
            }
            let g = g_uu[i * n + j];
            if g != 0.0 {
                let s = uu.sim[i * n + j];
                cos_backward(
                    g,
                    s,
                    z_view1.row(i),
                    uu.norms_a[i],
                    z_view1.row(j),
                    uu.norms_b[j],
                    &mut grad_u.row_mut(i),
                );
                cos_backward(
                    g,
                    s,
                    z_view1.row(j),
                    uu.norms_b[j],
                    z_view1.row(i),
                    uu.norms_a[i],
                    &mut grad_u.row_mut(j),
                );
            }
            let g = g_vv[i * n + j];
            if g != 0.0 {
                let s = vv.sim[i * n + j];
                cos_backward(
                    g,
                    s,
                    z_view2.row(i),
                    vv.norms_a[i],
                    z_view2.row(j),
                    vv.norms_b[j],
                    &mut grad_v.row_mut(i),
                );
                cos_backward(
                    g,
                    s,
                    z_view2.row(j),
                    vv.norms_b[j],
                    z_view2.row(i),
                    vv.norms_a[i],
                    &mut grad_v.row_mut(j),
                );
            }
        }
    }

    Ok((loss, grad_u, grad_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn finite_diff_check<F>(x: &Array2<f64>, grad: &Array2<f64>, coords: &[(usize, usize)], mut f: F, tol: f64)
    where
        F: FnMut(&Array2<f64>) -> f64,
    {
        let h = 1e-5;
        for &(i, j) in coords {
            let mut plus = x.clone();
            plus[[i, j]] += h;
            let mut minus = x.clone();
            minus[[i, j]] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let g = grad[[i, j]];
            let denom = fd.abs().max(g.abs()).max(1e-8);
            assert!(
                (fd - g).abs() / denom <= tol,
                "coord ({i},{j}): fd {fd} vs grad {g}"
            );
        }
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Array2::<f64>::zeros((7, 2));
        let labels = vec![0usize, 1, 0, 1, 0, 1, 0];
        let (loss, _) = cross_entropy_loss(&logits, &labels);
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_drive_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for margin in [2.0, 8.0, 32.0] {
            let logits = array![[margin, 0.0], [0.0, margin]];
            let (loss, _) = cross_entropy_loss(&logits, &[0, 1]);
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = array![
            [0.3, -1.2, 0.8, 0.1],
            [1.5, 0.2, -0.4, 0.9],
            [-0.7, 0.6, 0.25, -1.1]
        ];
        let labels = vec![2usize, 0, 3];
        let (_, grad) = cross_entropy_loss(&logits, &labels);
        let coords: Vec<(usize, usize)> =
            (0..3).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        finite_diff_check(
            &logits,
            &grad,
            &coords,
            |x| cross_entropy_loss(x, &labels).0,
            1e-6,
        );
    }

    #[test]
    fn ntxent_orthonormal_identical_views_closed_form() {
        // n = 2, both views equal, rows orthonormal, τ = 1:
        // every term is −log(e / (e + 2)).
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let (loss, _, _) = ntxent_loss(&z, &z, 1.0).unwrap();
        let want = -(1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert!((loss - want).abs() < 1e-12, "loss {loss} want {want}");
        assert!((loss - 0.5514).abs() < 5e-4);
    }

    #[test]
    fn ntxent_scale_invariance() {
        let z1 = array![[0.4, -0.9, 1.1], [1.3, 0.2, -0.5], [-0.8, 0.7, 0.3]];
        let z2 = array![[0.1, 0.6, -1.0], [0.9, -0.3, 0.2], [-0.5, -0.2, 0.8]];
        let (a, _, _) = ntxent_loss(&z1, &z2, 0.5).unwrap();
        let (b, _, _) = ntxent_loss(&(&z1 * 3.7), &(&z2 * 0.2), 0.5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ntxent_gradients_match_finite_differences() {
        let z1 = array![
            [0.4, -0.9, 1.1, 0.3, -0.2],
            [1.3, 0.2, -0.5, 0.8, 0.6],
            [-0.8, 0.7, 0.3, -1.2, 0.5],
            [0.2, 0.9, -0.6, 0.4, -0.7]
        ];
        let z2 = array![
            [0.1, 0.6, -1.0, 0.5, 0.9],
            [0.9, -0.3, 0.2, -0.4, 0.1],
            [-0.5, -0.2, 0.8, 0.7, -0.9],
            [0.6, -1.1, 0.4, 0.2, 0.3]
        ];
        let tau = 0.5;
        let (_, g1, g2) = ntxent_loss(&z1, &z2, tau).unwrap();
        let coords = [(0, 0), (1, 2), (2, 4), (3, 1), (0, 3), (2, 0)];
        finite_diff_check(
            &z1,
            &g1,
            &coords,
            |x| ntxent_loss(x, &z2, tau).unwrap().0,
            1e-5,
        );
        finite_diff_check(
            &z2,
            &g2,
            &coords,
            |x| ntxent_loss(&z1, x, tau).unwrap().0,
            1e-5,
        );
    }

    #[test]
    fn ntxent_rejects_zero_rows_and_tiny_batches() {
        let z = array![[0.0, 0.0], [1.0, 0.0]];
        let ok = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            ntxent_loss(&z, &ok, 1.0),
            Err(TppError::ZeroNormRow(0))
        ));
        let single = array![[1.0, 0.0]];
        assert!(ntxent_loss(&single, &single, 1.0).is_err());
    }
}
