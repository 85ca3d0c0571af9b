//! The two-stage SGC backbone: each stage propagates with
//! `D̂^{-1/2} Â D̂^{-1/2}` and applies an affine-free linear transform, with
//! no nonlinearity anywhere. Backward passes are hand-derived; the
//! propagation operator is symmetric, so backprop through it is just
//! another application of the same kernel.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TppError};
use crate::graph::Graph;

/// Scaled-uniform (Glorot) initialization with bound √(6 / (fan_in + fan_out)).
pub fn xavier_uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// FNV-1a over the little-endian bit patterns of the given tensors.
pub fn weights_hash(tensors: &[&Array2<f64>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for t in tensors {
        for &dim in &[t.nrows() as u64, t.ncols() as u64] {
            for b in dim.to_le_bytes() {
                eat(b);
            }
        }
        for &v in t.iter() {
            for b in v.to_bits().to_le_bytes() {
                eat(b);
            }
        }
    }
    h
}

/// Frozen-after-pretraining linear propagation model.
#[derive(Debug, Clone)]
pub struct SgcBackbone {
    w1: Array2<f64>, // feature_dim x hidden_dim
    w2: Array2<f64>, // hidden_dim x hidden_dim
    steps_per_layer: usize,
    frozen: bool,
    freeze_hash: Option<u64>,
}

impl SgcBackbone {
    pub fn init(feature_dim: usize, hidden_dim: usize, steps_per_layer: usize, seed: u64) -> Self {
        Self {
            w1: xavier_uniform(feature_dim, hidden_dim, seed ^ 0x51),
            w2: xavier_uniform(hidden_dim, hidden_dim, seed ^ 0x52),
            steps_per_layer,
            frozen: false,
            freeze_hash: None,
        }
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>, steps_per_layer: usize) -> Result<Self> {
        if w1.ncols() != w2.nrows() || w2.nrows() != w2.ncols() {
            return Err(TppError::DimensionMismatch(format!(
                "backbone weights {}x{} / {}x{}",
                w1.nrows(),
                w1.ncols(),
                w2.nrows(),
                w2.ncols()
            )));
        }
        Ok(Self {
            w1,
            w2,
            steps_per_layer,
            frozen: false,
            freeze_hash: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn steps_per_layer(&self) -> usize {
        self.steps_per_layer
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn weights_hash(&self) -> u64 {
        weights_hash(&[&self.w1, &self.w2])
    }

    /// Freeze the weights, recording their hash for later integrity checks.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.freeze_hash = Some(self.weights_hash());
    }

    /// Verify the frozen weights still hash to their freeze-time value.
    pub fn check_frozen_integrity(&self) -> Result<()> {
        match self.freeze_hash {
            None => Err(TppError::BackboneNotFrozen),
            Some(expected) => {
                let got = self.weights_hash();
                if got != expected {
                    Err(TppError::FrozenWeightsChanged { expected, got })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Mutable weight access for the training loops; refused once frozen.
    pub(crate) fn weights_mut(&mut self) -> Result<(&mut Array2<f64>, &mut Array2<f64>)> {
        if self.frozen {
            return Err(TppError::BackboneFrozen);
        }
        Ok((&mut self.w1, &mut self.w2))
    }
}

/// Intermediate activations kept for the backward pass.
pub struct SgcTrace {
    /// P^r X'
    pub propagated_input: Array2<f64>,
    /// P^r (P^r X' · W1)
    pub propagated_hidden: Array2<f64>,
    /// Final embeddings.
    pub output: Array2<f64>,
}

/// Gradients of a scalar loss w.r.t. the backbone weights and its input.
pub struct SgcGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub input: Array2<f64>,
}

fn check_input(backbone: &SgcBackbone, g: &Graph, x_override: Option<&Array2<f64>>) -> Result<()> {
    let (rows, cols) = match x_override {
        Some(x) => (x.nrows(), x.ncols()),
        None => (g.node_count(), g.feature_dim()),
    };
    if rows != g.node_count() || cols != backbone.feature_dim() {
        return Err(TppError::DimensionMismatch(format!(
            "input {}x{} vs graph n={} and backbone f={}",
            rows,
            cols,
            g.node_count(),
            backbone.feature_dim()
        )));
    }
    Ok(())
}

/// Forward pass keeping the activations needed for backprop.
///
/// `x_override` substitutes the graph's stored features; this is how
/// prompted features enter the frozen backbone.
pub fn sgc_forward_trace(
    backbone: &SgcBackbone,
    g: &Graph,
    x_override: Option<&Array2<f64>>,
) -> Result<SgcTrace> {
    check_input(backbone, g, x_override)?;
    let x = match x_override {
        Some(x) => x.clone(),
        None => g.features_f64(),
    };
    let propagated_input = g.propagate_n(&x, backbone.steps_per_layer);
    let hidden = propagated_input.dot(&backbone.w1);
    let propagated_hidden = g.propagate_n(&hidden, backbone.steps_per_layer);
    let output = propagated_hidden.dot(&backbone.w2);
    Ok(SgcTrace {
        propagated_input,
        propagated_hidden,
        output,
    })
}

/// Forward pass returning only the embedding matrix.
pub fn sgc_forward(
    backbone: &SgcBackbone,
    g: &Graph,
    x_override: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    Ok(sgc_forward_trace(backbone, g, x_override)?.output)
}

/// Backward pass from a gradient w.r.t. the embeddings.
///
/// The propagation operator is symmetric, so its transpose is itself.
pub fn sgc_backward(
    backbone: &SgcBackbone,
    g: &Graph,
    trace: &SgcTrace,
    grad_output: &Array2<f64>,
) -> SgcGrads {
    let grad_w2 = trace.propagated_hidden.t().dot(grad_output);
    let grad_prop_hidden = grad_output.dot(&backbone.w2.t());
    let grad_hidden = g.propagate_n(&grad_prop_hidden, backbone.steps_per_layer);
    let grad_w1 = trace.propagated_input.t().dot(&grad_hidden);
    let grad_prop_input = grad_hidden.dot(&backbone.w1.t());
    let grad_input = g.propagate_n(&grad_prop_input, backbone.steps_per_layer);
    SgcGrads {
        w1: grad_w1,
        w2: grad_w2,
        input: grad_input,
    }
}

/// Two affine maps with a rectifier between them; used only during
/// contrastive pretraining and discarded afterward.
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    pub wa: Array2<f64>,
    pub ba: Vec<f64>,
    pub wb: Array2<f64>,
    pub bb: Vec<f64>,
}

pub struct ProjectionTrace {
    input: Array2<f64>,
    hidden_pre: Array2<f64>,
    pub output: Array2<f64>,
}

pub struct ProjectionGrads {
    pub wa: Array2<f64>,
    pub ba: Vec<f64>,
    pub wb: Array2<f64>,
    pub bb: Vec<f64>,
    pub input: Array2<f64>,
}

impl ProjectionHead {
    pub fn init(dim: usize, seed: u64) -> Self {
        Self {
            wa: xavier_uniform(dim, dim, seed ^ 0xA1),
            ba: vec![0.0; dim],
            wb: xavier_uniform(dim, dim, seed ^ 0xA2),
            bb: vec![0.0; dim],
        }
    }

    pub fn forward_trace(&self, input: &Array2<f64>) -> ProjectionTrace {
        let mut hidden_pre = input.dot(&self.wa);
        for mut row in hidden_pre.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.ba) {
                *v += b;
            }
        }
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let mut output = hidden.dot(&self.wb);
        for mut row in output.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.bb) {
                *v += b;
            }
        }
        ProjectionTrace {
            input: input.clone(),
            hidden_pre,
            output,
        }
    }

    pub fn backward(&self, trace: &ProjectionTrace, grad_output: &Array2<f64>) -> ProjectionGrads {
        let hidden = trace.hidden_pre.mapv(|v| v.max(0.0));
        let grad_wb = hidden.t().dot(grad_output);
        let grad_bb: Vec<f64> = (0..self.bb.len())
            .map(|c| grad_output.column(c).sum())
            .collect();
        let mut grad_hidden = grad_output.dot(&self.wb.t());
        // Rectifier gate.
        for (gh, &pre) in grad_hidden.iter_mut().zip(trace.hidden_pre.iter()) {
            if pre <= 0.0 {
                *gh = 0.0;
            }
        }
        let grad_wa = trace.input.t().dot(&grad_hidden);
        let grad_ba: Vec<f64> = (0..self.ba.len())
            .map(|c| grad_hidden.column(c).sum())
            .collect();
        let grad_input = grad_hidden.dot(&self.wa.t());
        ProjectionGrads {
            wa: grad_wa,
            ba: grad_ba,
            wb: grad_wb,
            bb: grad_bb,
            input: grad_input,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy_graph(seed: u64, n: usize, f: usize) -> Graph {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.gen::<f64>() < 0.5 {
                    edges.push((u, v));
                }
            }
        }
        let feats: Vec<f32> = (0..n * f).map(|_| rng.gen::<f32>() - 0.5).collect();
        Graph::from_undirected_edges(n, f, &edges, feats, None).unwrap()
    }

    fn dense_operator(g: &Graph) -> Array2<f64> {
        let n = g.node_count();
        let mut p = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            p[[i, i]] = 1.0 / g.degrees().dhat[i];
            for &j in g.neighbors(i) {
                p[[i, j as usize]] = g.degrees().inv_sqrt[i] * g.degrees().inv_sqrt[j as usize];
            }
        }
        p
    }

    #[test]
    fn identity_weights_on_edgeless_graph_pass_features_through() {
        let n = 3;
        let g = Graph::from_undirected_edges(
            n,
            2,
            &[],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            None,
        )
        .unwrap();
        let backbone =
            SgcBackbone::from_weights(Array2::eye(2), Array2::eye(2), 1).unwrap();
        let h = sgc_forward(&backbone, &g, None).unwrap();
        assert_eq!(h, g.features_f64());
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let g = toy_graph(3, 5, 4);
        let backbone =
            SgcBackbone::from_weights(Array2::zeros((4, 3)), Array2::zeros((3, 3)), 1).unwrap();
        let h = sgc_forward(&backbone, &g, None).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let g = toy_graph(11, 6, 4);
        let backbone = SgcBackbone::init(4, 3, 1, 99);
        let h = sgc_forward(&backbone, &g, None).unwrap();
        let p = dense_operator(&g);
        let want = p
            .dot(&p.dot(&g.features_f64()).dot(backbone.w1()))
            .dot(backbone.w2());
        for (a, b) in h.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn forward_is_linear_in_input() {
        let g = toy_graph(5, 7, 3);
        let backbone = SgcBackbone::init(3, 4, 1, 7);
        let x1 = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let x2 = Array2::from_shape_fn((7, 3), |(i, j)| (i * j) as f64 * 0.1 - 0.4);
        let (a, b) = (0.7, -1.3);
        let combined = sgc_forward(&backbone, &g, Some(&(&x1 * a + &x2 * b))).unwrap();
        let separate = sgc_forward(&backbone, &g, Some(&x1)).unwrap() * a
            + sgc_forward(&backbone, &g, Some(&x2)).unwrap() * b;
        for (x, y) in combined.iter().zip(separate.iter()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = toy_graph(5, 7, 3);
        let backbone = SgcBackbone::init(3, 4, 1, 7);
        let bad = Array2::<f64>::zeros((7, 5));
        assert!(sgc_forward(&backbone, &g, Some(&bad)).is_err());
    }

    #[test]
    fn freeze_blocks_mutation_and_detects_tampering() {
        let mut backbone = SgcBackbone::init(3, 4, 1, 7);
        assert!(backbone.weights_mut().is_ok());
        backbone.freeze();
        assert!(matches!(
            backbone.weights_mut(),
            Err(TppError::BackboneFrozen)
        ));
        backbone.check_frozen_integrity().unwrap();
        // Simulate corruption through a raw clone.
        let mut tampered = backbone.clone();
        tampered.w1[[0, 0]] += 1.0;
        assert!(matches!(
            tampered.check_frozen_integrity(),
            Err(TppError::FrozenWeightsChanged { .. })
        ));
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let g = toy_graph(13, 6, 3);
        let backbone = SgcBackbone::init(3, 4, 1, 19);
        // Scalar loss: sum of squared embeddings.
        let loss_of = |bb: &SgcBackbone| {
            let h = sgc_forward(bb, &g, None).unwrap();
            h.iter().map(|v| v * v).sum::<f64>()
        };
        let trace = sgc_forward_trace(&backbone, &g, None).unwrap();
        let grad_out = &trace.output * 2.0;
        let grads = sgc_backward(&backbone, &g, &trace, &grad_out);

        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (1, 2), (2, 3), (0, 1)] {
            let mut plus = backbone.clone();
            plus.w1[[i, j]] += h;
            let mut minus = backbone.clone();
            minus.w1[[i, j]] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grads.w1[[i, j]].abs()).max(1e-8);
            assert!((fd - grads.w1[[i, j]]).abs() / denom <= 1e-4);
        }
        for &(i, j) in &[(0usize, 0usize), (1, 3), (3, 2)] {
            let mut plus = backbone.clone();
            plus.w2[[i, j]] += h;
            let mut minus = backbone.clone();
            minus.w2[[i, j]] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grads.w2[[i, j]].abs()).max(1e-8);
            assert!((fd - grads.w2[[i, j]]).abs() / denom <= 1e-4);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let g = toy_graph(23, 5, 3);
        let backbone = SgcBackbone::init(3, 4, 1, 31);
        let x0 = Array2::from_shape_fn((5, 3), |(i, j)| 0.2 * i as f64 - 0.3 * j as f64 + 0.1);
        let loss_of = |x: &Array2<f64>| {
            let h = sgc_forward(&backbone, &g, Some(x)).unwrap();
            h.iter().map(|v| v * v).sum::<f64>()
        };
        let trace = sgc_forward_trace(&backbone, &g, Some(&x0)).unwrap();
        let grad_out = &trace.output * 2.0;
        let grads = sgc_backward(&backbone, &g, &trace, &grad_out);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (2, 1), (4, 2), (3, 0)] {
            let mut plus = x0.clone();
            plus[[i, j]] += h;
            let mut minus = x0.clone();
            minus[[i, j]] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grads.input[[i, j]].abs()).max(1e-8);
            assert!((fd - grads.input[[i, j]]).abs() / denom <= 1e-4);
        }
    }

    #[test]
    fn projection_head_gradients_match_finite_differences() {
        let head = ProjectionHead::init(4, 55);
        let input = Array2::from_shape_fn((6, 4), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64 + 0.05);
        let loss_of = |hd: &ProjectionHead, x: &Array2<f64>| {
            let t = hd.forward_trace(x);
            t.output.iter().map(|v| v * v).sum::<f64>()
        };
        let trace = head.forward_trace(&input);
        let grad_out = &trace.output * 2.0;
        let grads = head.backward(&trace, &grad_out);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (1, 2), (3, 3)] {
            let mut plus = head.clone();
            plus.wa[[i, j]] += h;
            let mut minus = head.clone();
            minus.wa[[i, j]] -= h;
            let fd = (loss_of(&plus, &input) - loss_of(&minus, &input)) / (2.0 * h);
            let denom = fd.abs().max(grads.wa[[i, j]].abs()).max(1e-8);
            assert!((fd - grads.wa[[i, j]]).abs() / denom <= 1e-4);
        }
        for c in 0..4 {
            let mut plus = head.clone();
            plus.bb[c] += h;
            let mut minus = head.clone();
            minus.bb[c] -= h;
            let fd = (loss_of(&plus, &input) - loss_of(&minus, &input)) / (2.0 * h);
            let denom = fd.abs().max(grads.bb[c].abs()).max(1e-8);
            assert!((fd - grads.bb[c]).abs() / denom <= 1e-4);
        }
        // Input gradient, used by nothing today but part of the contract.
        for &(i, j) in &[(0usize, 1usize), (5, 3)] {
            let mut plus = input.clone();
            plus[[i, j]] += h;
            let mut minus = input.clone();
            minus[[i, j]] -= h;
            let fd = (loss_of(&head, &plus) - loss_of(&head, &minus)) / (2.0 * h);
            let denom = fd.abs().max(grads.input[[i, j]].abs()).max(1e-8);
            assert!((fd - grads.input[[i, j]]).abs() / denom <= 1e-4);
        }
    }
}
