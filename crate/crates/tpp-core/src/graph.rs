//! Immutable sparse graphs and the symmetric-normalized propagation kernel.
//!
//! Graphs are undirected, stored in CSR layout with both edge directions
//! materialized and no stored self-loops. The propagation operator
//! `D^{-1/2} (A + I) D^{-1/2}` adds the self-loop term analytically, so the
//! CSR stays canonical. Feature storage is 32-bit; all smoothing math is
//! 64-bit.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, TppError};

/// Self-loop-augmented degrees d̂[i] = 1 + degree(i), with the inverse
/// square roots precomputed for the propagation kernel.
#[derive(Debug, Clone)]
pub struct AugmentedDegrees {
    pub dhat: Vec<f64>,
    pub inv_sqrt: Vec<f64>,
}

impl AugmentedDegrees {
    fn from_row_ptr(row_ptr: &[usize]) -> Self {
        let n = row_ptr.len() - 1;
        let mut dhat = Vec::with_capacity(n);
        let mut inv_sqrt = Vec::with_capacity(n);
        for i in 0..n {
            let d = 1.0 + (row_ptr[i + 1] - row_ptr[i]) as f64;
            dhat.push(d);
            inv_sqrt.push(1.0 / d.sqrt());
        }
        Self { dhat, inv_sqrt }
    }
}

/// Parameters for the contrastive-view augmentation: independent edge
/// removal plus a single attribute mask shared by every node.
#[derive(Debug, Clone, Copy)]
pub struct AugmentationParams {
    pub edge_removal_prob: f64,
    pub attr_mask_prob: f64,
    pub rng_seed: u64,
}

impl AugmentationParams {
    pub fn new(edge_removal_prob: f64, attr_mask_prob: f64, rng_seed: u64) -> Result<Self> {
        check_probability("edge_removal_prob", edge_removal_prob)?;
        check_probability("attr_mask_prob", attr_mask_prob)?;
        Ok(Self {
            edge_removal_prob,
            attr_mask_prob,
            rng_seed,
        })
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(TppError::InvalidProbability { name, value });
    }
    Ok(())
}

/// An immutable undirected graph with dense node features and optional
/// integer class labels.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    feature_dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    features: Vec<f32>,
    labels: Option<Vec<u32>>,
    degrees: AugmentedDegrees,
}

impl Graph {
    /// Build a graph from an undirected edge list (each edge listed once).
    ///
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn from_undirected_edges(
        n: usize,
        feature_dim: usize,
        edges: &[(u32, u32)],
        features: Vec<f32>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if features.len() != n * feature_dim {
            return Err(TppError::DimensionMismatch(format!(
                "features has {} entries, expected {}x{}",
                features.len(),
                n,
                feature_dim
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(TppError::InconsistentNodeCount {
                    left_name: "labels".into(),
                    left: l.len(),
                    right_name: "graph".into(),
                    right: n,
                });
            }
        }

        let mut directed: Vec<(u32, u32)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(TppError::InvalidEdge {
                    u: u as usize,
                    v: v as usize,
                    reason: format!("endpoint out of range for n={n}"),
                });
            }
            if u == v {
                return Err(TppError::InvalidEdge {
                    u: u as usize,
                    v: v as usize,
                    reason: "self-loop (self-loops are added virtually)".into(),
                });
            }
            directed.push((u, v));
            directed.push((v, u));
        }
        directed.sort_unstable();
        for w in directed.windows(2) {
            if w[0] == w[1] {
                return Err(TppError::InvalidEdge {
                    u: w[0].0 as usize,
                    v: w[0].1 as usize,
                    reason: "duplicate edge".into(),
                });
            }
        }

        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _) in &directed {
            row_ptr[u as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<u32> = directed.iter().map(|&(_, v)| v).collect();

        let degrees = AugmentedDegrees::from_row_ptr(&row_ptr);
        Ok(Self {
            n,
            feature_dim,
            row_ptr,
            col_idx,
            features,
            labels,
            degrees,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn degrees(&self) -> &AugmentedDegrees {
        &self.degrees
    }

    /// Plain degree (self-loop excluded).
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Raw 32-bit feature storage, row-major.
    pub fn features_raw(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Features widened to the 64-bit compute type.
    pub fn features_f64(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.n, self.feature_dim),
            self.features.iter().map(|&x| x as f64).collect(),
        )
        .expect("shape checked at construction")
    }

    /// Undirected edge list with u < v, sorted; the inverse of
    /// [`Graph::from_undirected_edges`].
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.col_idx.len() / 2);
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// One application of the propagation operator `D̂^{-1/2} Â D̂^{-1/2}`.
    ///
    /// Each output row is accumulated by a single thread in a fixed order
    /// (self-loop term, then neighbors ascending), so the result is bitwise
    /// independent of the rayon thread count.
    pub fn propagate(&self, m: &Array2<f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n, "propagate: row count mismatch");
        let cols = m.ncols();
        let src_owned = m.as_standard_layout();
        let src = src_owned.as_slice().expect("standard layout");
        let mut out = vec![0.0f64; self.n * cols];
        out.par_chunks_mut(cols.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                let self_w = 1.0 / self.degrees.dhat[i];
                let irow = &src[i * cols..(i + 1) * cols];
                for c in 0..cols {
                    row[c] = self_w * irow[c];
                }
                let scale_i = self.degrees.inv_sqrt[i];
                for &j in self.neighbors(i) {
                    let j = j as usize;
                    let w = scale_i * self.degrees.inv_sqrt[j];
                    let jrow = &src[j * cols..(j + 1) * cols];
                    for c in 0..cols {
                        row[c] += w * jrow[c];
                    }
                }
            });
        Array2::from_shape_vec((self.n, cols), out).expect("shape preserved")
    }

    /// Apply the propagation operator `steps` times to an arbitrary dense
    /// matrix.
    pub fn propagate_n(&self, m: &Array2<f64>, steps: usize) -> Array2<f64> {
        let mut z = m.clone();
        for _ in 0..steps {
            z = self.propagate(&z);
        }
        z
    }

    /// Node ids with no edges at all.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degree(i) == 0).collect()
    }

    /// True when every node can reach every other node.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1usize;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }
}

/// Laplacian smoothing: `steps` repeated sparse passes of the propagation
/// operator over the node features. `steps = 0` returns the features
/// unchanged (widened to 64-bit).
pub fn smooth_features(g: &Graph, steps: usize) -> Array2<f64> {
    g.propagate_n(&g.features_f64(), steps)
}

/// Attach every isolated node to a uniformly chosen non-isolated node.
///
/// Returns the graph unchanged when nothing is isolated. A graph where
/// every node is isolated (n > 1) has no anchor to attach to and is an
/// error; a single-node graph is left alone.
pub fn connect_isolated_nodes(g: &Graph, seed: u64) -> Result<Graph> {
    let isolated = g.isolated_nodes();
    if isolated.is_empty() || g.node_count() == 1 {
        return Ok(g.clone());
    }
    if isolated.len() == g.node_count() {
        return Err(TppError::NoAnchorNode);
    }
    let anchors: Vec<u32> = (0..g.node_count())
        .filter(|&i| g.degree(i) > 0)
        .map(|i| i as u32)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = g.undirected_edges();
    for &node in &isolated {
        let anchor = anchors[rng.gen_range(0..anchors.len())];
        let (a, b) = (node as u32, anchor);
        edges.push((a.min(b), a.max(b)));
    }
    Graph::from_undirected_edges(
        g.node_count(),
        g.feature_dim(),
        &edges,
        g.features_raw().to_vec(),
        g.labels().map(|l| l.to_vec()),
    )
}

/// Contrastive-view corruption: drop each undirected edge independently
/// (both directions atomically, keeping the adjacency symmetric), then zero
/// a seeded subset of feature dimensions in every node.
///
/// The RNG draw order is fixed: one Bernoulli per undirected edge in
/// sorted (u, v) order, then one per feature dimension.
pub fn augment_contrastive(g: &Graph, params: &AugmentationParams) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let kept: Vec<(u32, u32)> = g
        .undirected_edges()
        .into_iter()
        .filter(|_| rng.gen::<f64>() >= params.edge_removal_prob)
        .collect();
    let mask: Vec<bool> = (0..g.feature_dim())
        .map(|_| rng.gen::<f64>() >= params.attr_mask_prob)
        .collect();
    let mut features = g.features_raw().to_vec();
    for row in features.chunks_mut(g.feature_dim()) {
        for (x, &keep) in row.iter_mut().zip(&mask) {
            if !keep {
                *x = 0.0;
            }
        }
    }
    Graph::from_undirected_edges(
        g.node_count(),
        g.feature_dim(),
        &kept,
        features,
        g.labels().map(|l| l.to_vec()),
    )
    .expect("filtered edge list stays valid")
}

/// Subgraph induced by `nodes`, with ids relabeled contiguously in the
/// order given. Returns the new graph and the new-to-old id mapping.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<(Graph, Vec<usize>)> {
    if nodes.is_empty() {
        return Err(TppError::EmptyNodeSet);
    }
    let mut old_to_new = vec![usize::MAX; g.node_count()];
    for (new, &old) in nodes.iter().enumerate() {
        if old >= g.node_count() {
            return Err(TppError::InvalidNodeSet(format!(
                "node {old} out of range for n={}",
                g.node_count()
            )));
        }
        if old_to_new[old] != usize::MAX {
            return Err(TppError::InvalidNodeSet(format!("duplicate node {old}")));
        }
        old_to_new[old] = new;
    }

    let mut edges = Vec::new();
    for (new_u, &old_u) in nodes.iter().enumerate() {
        for &old_v in g.neighbors(old_u) {
            let new_v = old_to_new[old_v as usize];
            if new_v != usize::MAX && new_u < new_v {
                edges.push((new_u as u32, new_v as u32));
            }
        }
    }

    let mut features = Vec::with_capacity(nodes.len() * g.feature_dim());
    for &old in nodes {
        features.extend_from_slice(g.feature_row(old));
    }
    let labels = g
        .labels()
        .map(|l| nodes.iter().map(|&old| l[old]).collect());

    let sub = Graph::from_undirected_edges(nodes.len(), g.feature_dim(), &edges, features, labels)?;
    Ok((sub, nodes.to_vec()))
}
