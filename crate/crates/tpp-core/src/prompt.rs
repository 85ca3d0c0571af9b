//! Per-task graph prompts and classification heads, trained against the
//! frozen backbone. A prompt is a small token matrix mixed into every
//! node's attributes through softmax-weighted learnable projections, so
//! each task ends up with its own tiny classification model while the
//! backbone never moves.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TppError};
use crate::graph::Graph;
use crate::nn::{
    adam_step, cross_entropy_loss, sgc_backward, sgc_forward_trace, softmax_rows, xavier_uniform,
    AdamState, SgcBackbone, TrainConfig,
};
use crate::subseed;

/// Learnable feature-space tokens plus one projection vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPrompt {
    /// k x f token matrix.
    tokens: Array2<f64>,
    /// k x f projection matrix; row j scores token j against a node.
    projections: Array2<f64>,
}

impl GraphPrompt {
    /// Near-zero Gaussian init so the untrained prompt behaves like no
    /// prompt at all.
    pub fn init(token_count: usize, feature_dim: usize, sigma: f64, seed: u64) -> Self {
        assert!(token_count >= 1, "prompts need at least one token");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = |(_, _)| {
            // Box-Muller, cosine branch.
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen::<f64>();
            sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let tokens = Array2::from_shape_fn((token_count, feature_dim), &mut gaussian);
        let projections = Array2::from_shape_fn((token_count, feature_dim), &mut gaussian);
        Self {
            tokens,
            projections,
        }
    }

    pub fn zeros(token_count: usize, feature_dim: usize) -> Self {
        Self {
            tokens: Array2::zeros((token_count, feature_dim)),
            projections: Array2::zeros((token_count, feature_dim)),
        }
    }

    pub fn from_parts(tokens: Array2<f64>, projections: Array2<f64>) -> Result<Self> {
        if tokens.dim() != projections.dim() || tokens.nrows() == 0 {
            return Err(TppError::DimensionMismatch(format!(
                "prompt tokens {:?} vs projections {:?}",
                tokens.dim(),
                projections.dim()
            )));
        }
        Ok(Self {
            tokens,
            projections,
        })
    }

    pub fn token_count(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn tokens(&self) -> &Array2<f64> {
        &self.tokens
    }

    pub fn projections(&self) -> &Array2<f64> {
        &self.projections
    }
}

/// Mix the prompt into one feature vector: x + Σ_j α_j φ_j with α the
/// softmax of the projection scores.
pub fn apply_prompt(prompt: &GraphPrompt, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), prompt.feature_dim(), "feature dim mismatch");
    let k = prompt.token_count();
    let mut scores = Vec::with_capacity(k);
    for j in 0..k {
        scores.push(
            prompt
                .projections
                .row(j)
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>(),
        );
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut alphas: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let denom: f64 = alphas.iter().sum();
    for a in &mut alphas {
        *a /= denom;
    }
    let mut out = x.to_vec();
    for j in 0..k {
        let a = alphas[j];
        for (o, t) in out.iter_mut().zip(prompt.tokens.row(j)) {
            *o += a * t;
        }
    }
    out
}

/// Batched prompt application over all nodes. Returns the prompted
/// features and the per-node token weights (n x k, each row a simplex).
pub fn apply_prompt_batch(prompt: &GraphPrompt, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    assert_eq!(x.ncols(), prompt.feature_dim(), "feature dim mismatch");
    let scores = x.dot(&prompt.projections.t());
    let alphas = softmax_rows(&scores);
    let prompted = x + &alphas.dot(&prompt.tokens);
    (prompted, alphas)
}

/// Backward through the batched prompt application.
///
/// Returns gradients w.r.t. the tokens and the projections given the
/// gradient w.r.t. the prompted features.
fn prompt_backward(
    prompt: &GraphPrompt,
    x: &Array2<f64>,
    alphas: &Array2<f64>,
    grad_prompted: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let grad_tokens = alphas.t().dot(grad_prompted);
    // d alpha[i][j] = grad_prompted[i] . token[j]
    let grad_alphas = grad_prompted.dot(&prompt.tokens.t());
    // Softmax jacobian per row: dq_j = alpha_j (da_j - Σ_l alpha_l da_l).
    let n = x.nrows();
    let k = prompt.token_count();
    let mut grad_scores = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let dot: f64 = (0..k).map(|l| alphas[[i, l]] * grad_alphas[[i, l]]).sum();
        for j in 0..k {
            grad_scores[[i, j]] = alphas[[i, j]] * (grad_alphas[[i, j]] - dot);
        }
    }
    let grad_projections = grad_scores.t().dot(x);
    (grad_tokens, grad_projections)
}

/// Single-layer classifier over backbone embeddings, with the task-local
/// to global class-id mapping carried alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// hidden_dim x class_count.
    pub weight: Array2<f64>,
    pub bias: Vec<f64>,
    /// class_map[local] = global class id.
    pub class_map: Vec<u32>,
}

impl ClassifierHead {
    pub fn init(hidden_dim: usize, class_map: Vec<u32>, seed: u64) -> Self {
        let classes = class_map.len();
        Self {
            weight: xavier_uniform(hidden_dim, classes, seed),
            bias: vec![0.0; classes],
            class_map,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_map.len()
    }

    pub fn logits(&self, embeddings: &Array2<f64>) -> Array2<f64> {
        let mut logits = embeddings.dot(&self.weight);
        for mut row in logits.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        logits
    }
}

/// Everything learned for one task. Immutable once training completes.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskArtifacts {
    pub task_id: usize,
    pub prompt: GraphPrompt,
    pub head: ClassifierHead,
    /// Nearest-class-mean readout in embedding space, used only by the
    /// prompt-and-head-off ablation (class_count x hidden_dim). Not part
    /// of the persisted artifact format.
    pub class_mean_readout: Option<Array2<f64>>,
}

impl TaskArtifacts {
    /// Trainable parameters this task added: 2·k·f prompt values plus the
    /// d·C + C head.
    pub fn parameter_count(&self) -> usize {
        2 * self.prompt.token_count() * self.prompt.feature_dim()
            + self.head.weight.len()
            + self.head.bias.len()
    }
}

/// Options for one task's prompt training.
#[derive(Debug, Clone)]
pub struct PromptTrainOptions {
    pub task_id: usize,
    pub token_count: usize,
    pub init_sigma: f64,
    /// Global class ids of this task, in task order.
    pub classes: Vec<u32>,
    /// Train the prompt (otherwise it stays all-zero: the no-prompt path).
    pub prompt_on: bool,
    /// Train the head (otherwise it stays at its random init; with the
    /// prompt also off, classification falls back to nearest class mean).
    pub head_on: bool,
}

impl PromptTrainOptions {
    pub fn new(task_id: usize, token_count: usize, classes: Vec<u32>) -> Self {
        Self {
            task_id,
            token_count,
            init_sigma: 0.01,
            classes,
            prompt_on: true,
            head_on: true,
        }
    }
}

const PROMPT_TAG: u64 = 0x60;
const HEAD_TAG: u64 = 0x61;

fn local_labels(g: &Graph, nodes: &[usize], classes: &[u32]) -> Result<Vec<usize>> {
    let labels = g.labels().ok_or(TppError::UnlabeledNode {
        node: *nodes.first().unwrap_or(&0),
    })?;
    nodes
        .iter()
        .map(|&i| {
            let label = labels[i];
            classes
                .iter()
                .position(|&c| c == label)
                .ok_or(TppError::UnknownClass { label })
        })
        .collect()
}

/// Optimize prompt tokens, projections and head on cross-entropy over the
/// train nodes, with gradients flowing through the frozen backbone into
/// the prompted features. The backbone hash is rechecked every epoch.
pub fn train_task(
    g: &Graph,
    train_nodes: &[usize],
    backbone: &SgcBackbone,
    cfg: &TrainConfig,
    opts: &PromptTrainOptions,
) -> Result<TaskArtifacts> {
    if !backbone.is_frozen() {
        return Err(TppError::BackboneNotFrozen);
    }
    if train_nodes.is_empty() {
        return Err(TppError::EmptyNodeSet);
    }
    let labels = local_labels(g, train_nodes, &opts.classes)?;

    let f = g.feature_dim();
    let d = backbone.hidden_dim();
    let mut prompt = if opts.prompt_on {
        GraphPrompt::init(
            opts.token_count,
            f,
            opts.init_sigma,
            subseed(cfg.rng_seed, PROMPT_TAG),
        )
    } else {
        GraphPrompt::zeros(opts.token_count, f)
    };
    let mut head = ClassifierHead::init(d, opts.classes.clone(), subseed(cfg.rng_seed, HEAD_TAG));

    if opts.prompt_on || opts.head_on {
        let adam = cfg.adam();
        let mut st_tokens = AdamState::new(prompt.tokens.len());
        let mut st_proj = AdamState::new(prompt.projections.len());
        let mut st_w = AdamState::new(head.weight.len());
        let mut st_b = AdamState::new(head.bias.len());
        let x = g.features_f64();

        for _epoch in 0..cfg.epochs {
            let (prompted, alphas) = apply_prompt_batch(&prompt, &x);
            let trace = sgc_forward_trace(backbone, g, Some(&prompted))?;
            let mut selected = Array2::<f64>::zeros((train_nodes.len(), d));
            for (row, &node) in train_nodes.iter().enumerate() {
                selected.row_mut(row).assign(&trace.output.row(node));
            }
            let logits = head.logits(&selected);
            let (_loss, grad_logits) = cross_entropy_loss(&logits, &labels);

            if opts.head_on {
                let grad_w = selected.t().dot(&grad_logits);
                let grad_b: Vec<f64> = (0..head.bias.len())
                    .map(|c| grad_logits.column(c).sum())
                    .collect();
                adam_step(
                    head.weight.as_slice_mut().expect("standard layout"),
                    grad_w.as_slice().expect("standard layout"),
                    &mut st_w,
                    &adam,
                );
                adam_step(&mut head.bias, &grad_b, &mut st_b, &adam);
            }

            if opts.prompt_on {
                let grad_selected = grad_logits.dot(&head.weight.t());
                let mut grad_output = Array2::<f64>::zeros((g.node_count(), d));
                for (row, &node) in train_nodes.iter().enumerate() {
                    grad_output.row_mut(node).assign(&grad_selected.row(row));
                }
                let grads = sgc_backward(backbone, g, &trace, &grad_output);
                let (grad_tokens, grad_proj) =
                    prompt_backward(&prompt, &x, &alphas, &grads.input);
                adam_step(
                    prompt.tokens.as_slice_mut().expect("standard layout"),
                    grad_tokens.as_slice().expect("standard layout"),
                    &mut st_tokens,
                    &adam,
                );
                adam_step(
                    prompt.projections.as_slice_mut().expect("standard layout"),
                    grad_proj.as_slice().expect("standard layout"),
                    &mut st_proj,
                    &adam,
                );
            }

            backbone.check_frozen_integrity()?;
        }
    }

    // With prompt and head both off the backbone is used directly; class
    // decisions fall back to nearest class mean in embedding space.
    let class_mean_readout = if !opts.prompt_on && !opts.head_on {
        let trace = sgc_forward_trace(backbone, g, None)?;
        let classes = opts.classes.len();
        let mut means = Array2::<f64>::zeros((classes, d));
        let mut counts = vec![0usize; classes];
        for (&node, &local) in train_nodes.iter().zip(&labels) {
            counts[local] += 1;
            let row = trace.output.row(node);
            for (m, &v) in means.row_mut(local).iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for (mut row, &count) in means.rows_mut().into_iter().zip(&counts) {
            if count > 0 {
                row.mapv_inplace(|v| v / count as f64);
            }
        }
        Some(means)
    } else {
        None
    };

    Ok(TaskArtifacts {
        task_id: opts.task_id,
        prompt,
        head,
        class_mean_readout,
    })
}

/// Per-node class scores for the given artifacts: softmax over head logits
/// (or over negative distances for the class-mean readout). Returns the
/// scores (rows = test nodes) and the local-to-global class map.
pub fn classify_scores(
    g: &Graph,
    test_nodes: &[usize],
    artifacts: &TaskArtifacts,
    backbone: &SgcBackbone,
) -> Result<(Array2<f64>, Vec<u32>)> {
    if g.feature_dim() != artifacts.prompt.feature_dim()
        || backbone.hidden_dim() != artifacts.head.weight.nrows()
    {
        return Err(TppError::DimensionMismatch(format!(
            "artifacts expect f={} d={}, got f={} d={}",
            artifacts.prompt.feature_dim(),
            artifacts.head.weight.nrows(),
            g.feature_dim(),
            backbone.hidden_dim()
        )));
    }
    let x = g.features_f64();
    let (prompted, _) = apply_prompt_batch(&artifacts.prompt, &x);
    let trace = sgc_forward_trace(backbone, g, Some(&prompted))?;
    let d = backbone.hidden_dim();
    let mut selected = Array2::<f64>::zeros((test_nodes.len(), d));
    for (row, &node) in test_nodes.iter().enumerate() {
        selected.row_mut(row).assign(&trace.output.row(node));
    }
    let scores = match &artifacts.class_mean_readout {
        Some(means) => {
            let mut logits = Array2::<f64>::zeros((test_nodes.len(), means.nrows()));
            for (i, emb) in selected.rows().into_iter().enumerate() {
                for (c, mean) in means.rows().into_iter().enumerate() {
                    let dist: f64 = emb
                        .iter()
                        .zip(mean.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    logits[[i, c]] = -dist;
                }
            }
            softmax_rows(&logits)
        }
        None => softmax_rows(&artifacts.head.logits(&selected)),
    };
    Ok((scores, artifacts.head.class_map.clone()))
}

/// Classify test nodes into global class ids with one task's artifacts.
/// Ties break toward the smaller global class id.
pub fn classify(
    g: &Graph,
    test_nodes: &[usize],
    artifacts: &TaskArtifacts,
    backbone: &SgcBackbone,
) -> Result<Vec<u32>> {
    let (scores, class_map) = classify_scores(g, test_nodes, artifacts, backbone)?;
    let mut out = Vec::with_capacity(test_nodes.len());
    for row in scores.rows() {
        let mut best_class = u32::MAX;
        let mut best = f64::NEG_INFINITY;
        for (local, &score) in row.iter().enumerate() {
            let global = class_map[local];
            if score > best || (score == best && global < best_class) {
                best = score;
                best_class = global;
            }
        }
        out.push(best_class);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::OrderingMode;
    use crate::synth::{generate_sbm_stream, SbmSpec};

    fn train_cfg(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.005,
            epochs,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            temperature: 0.5,
            rng_seed: seed,
            fresh_augmentation: true,
        }
    }

    fn separable_task(seed: u64) -> crate::harness::Task {
        let spec = SbmSpec {
            tasks: 1,
            nodes_per_class: 40,
            feature_mean_shift: 3.0,
            feature_noise: 0.3,
            seed,
            ..SbmSpec::default()
        };
        let stream = generate_sbm_stream(&spec, OrderingMode::Ascending).unwrap();
        stream.tasks.into_iter().next().unwrap()
    }

    fn frozen_backbone(f: usize, d: usize, seed: u64) -> SgcBackbone {
        let mut b = SgcBackbone::init(f, d, 1, seed);
        b.freeze();
        b
    }

    #[test]
    fn single_token_prompt_adds_the_token() {
        let mut prompt = GraphPrompt::zeros(1, 3);
        prompt.tokens = ndarray::array![[0.5, -1.0, 2.0]];
        let x = [1.0, 2.0, 3.0];
        let out = apply_prompt(&prompt, &x);
        assert_eq!(out, vec![1.5, 1.0, 5.0]);
    }

    #[test]
    fn zero_tokens_are_the_identity() {
        let mut prompt = GraphPrompt::zeros(4, 3);
        // Arbitrary projections must not matter when the tokens are zero.
        prompt.projections = xavier_uniform(4, 3, 5);
        let x = ndarray::array![[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        let (prompted, alphas) = apply_prompt_batch(&prompt, &x);
        assert_eq!(prompted, x);
        for row in alphas.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_two_token_softmax() {
        // w1·x = ln 3, w2·x = 0 → α = [0.75, 0.25].
        let mut prompt = GraphPrompt::zeros(2, 2);
        prompt.projections = ndarray::array![[3.0f64.ln(), 0.0], [0.0, 0.0]];
        prompt.tokens = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let x = [1.0, 0.0];
        let out = apply_prompt(&prompt, &x);
        assert!((out[0] - 1.75).abs() < 1e-12);
        assert!((out[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn alphas_form_a_simplex() {
        let prompt = GraphPrompt::init(3, 5, 0.5, 42);
        let x = Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - 2.0) * 0.7 + j as f64 * 0.3);
        let (_, alphas) = apply_prompt_batch(&prompt, &x);
        for row in alphas.rows() {
            assert!(row.iter().all(|&a| a >= 0.0));
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let task = separable_task(3);
        let backbone = frozen_backbone(16, 8, 3);
        let opts = PromptTrainOptions::new(1, 3, task.classes.clone());
        let art = train_task(
            &task.graph,
            &task.splits.train,
            &backbone,
            &train_cfg(0, 3),
            &opts,
        )
        .unwrap();
        let want_prompt = GraphPrompt::init(3, 16, 0.01, subseed(3, PROMPT_TAG));
        assert_eq!(art.prompt, want_prompt);
        assert_eq!(art.head.bias, vec![0.0, 0.0]);
    }

    #[test]
    fn separable_task_trains_to_high_accuracy() {
        let task = separable_task(11);
        let backbone = frozen_backbone(16, 8, 11);
        let opts = PromptTrainOptions::new(1, 3, task.classes.clone());
        let art = train_task(
            &task.graph,
            &task.splits.train,
            &backbone,
            &train_cfg(200, 11),
            &opts,
        )
        .unwrap();
        let preds = classify(&task.graph, &task.splits.train, &art, &backbone).unwrap();
        let labels = task.graph.labels().unwrap();
        let hits = task
            .splits
            .train
            .iter()
            .zip(&preds)
            .filter(|(&n, &p)| labels[n] == p)
            .count();
        let acc = hits as f64 / preds.len() as f64;
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn backbone_hash_unchanged_by_training() {
        let task = separable_task(5);
        let backbone = frozen_backbone(16, 8, 5);
        let before = backbone.weights_hash();
        let opts = PromptTrainOptions::new(1, 3, task.classes.clone());
        let _ = train_task(
            &task.graph,
            &task.splits.train,
            &backbone,
            &train_cfg(50, 5),
            &opts,
        )
        .unwrap();
        assert_eq!(backbone.weights_hash(), before);
        backbone.check_frozen_integrity().unwrap();
    }

    #[test]
    fn unfrozen_backbone_is_rejected() {
        let task = separable_task(5);
        let backbone = SgcBackbone::init(16, 8, 1, 5);
        let opts = PromptTrainOptions::new(1, 3, task.classes.clone());
        assert!(matches!(
            train_task(
                &task.graph,
                &task.splits.train,
                &backbone,
                &train_cfg(1, 5),
                &opts
            ),
            Err(TppError::BackboneNotFrozen)
        ));
    }

    #[test]
    fn unlabeled_graph_is_rejected() {
        let task = separable_task(5);
        let g = Graph::from_undirected_edges(
            task.graph.node_count(),
            task.graph.feature_dim(),
            &task.graph.undirected_edges(),
            task.graph.features_raw().to_vec(),
            None,
        )
        .unwrap();
        let backbone = frozen_backbone(16, 8, 5);
        let opts = PromptTrainOptions::new(1, 3, task.classes.clone());
        assert!(matches!(
            train_task(&g, &task.splits.train, &backbone, &train_cfg(1, 5), &opts),
            Err(TppError::UnlabeledNode { .. })
        ));
    }

    #[test]
    fn huge_bias_dominates_classification() {
        let task = separable_task(7);
        let backbone = frozen_backbone(16, 4, 7);
        let mut head = ClassifierHead::init(4, task.classes.clone(), 1);
        head.bias[0] = 1e6;
        let art = TaskArtifacts {
            task_id: 1,
            prompt: GraphPrompt::zeros(3, 16),
            head,
            class_mean_readout: None,
        };
        let preds = classify(&task.graph, &task.splits.test, &art, &backbone).unwrap();
        assert!(preds.iter().all(|&p| p == task.classes[0]));
    }

    #[test]
    fn classify_matches_dense_oracle_logits() {
        // Hand-set weights on a six-node toy task; compare against an
        // explicit dense forward pass.
        let g = Graph::from_undirected_edges(
            6,
            2,
            &[(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)],
            vec![1.0, 0.0, 0.8, 0.1, 0.9, 0.2, 0.1, 0.9, 0.2, 1.0, 0.0, 0.8],
            Some(vec![0, 0, 0, 1, 1, 1]),
        )
        .unwrap();
        let w1 = ndarray::array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]];
        let w2 = ndarray::array![[1.0, 0.0, 0.2], [0.0, 1.0, -0.1], [0.3, -0.3, 1.0]];
        let mut backbone = SgcBackbone::from_weights(w1.clone(), w2.clone(), 1).unwrap();
        backbone.freeze();
        let head = ClassifierHead {
            weight: ndarray::array![[0.5, -0.5], [0.2, 0.8], [-0.7, 0.3]],
            bias: vec![0.05, -0.05],
            class_map: vec![0, 1],
        };
        let art = TaskArtifacts {
            task_id: 1,
            prompt: GraphPrompt::zeros(1, 2),
            head: head.clone(),
            class_mean_readout: None,
        };

        // Dense oracle.
        let n = 6;
        let mut p = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            p[[i, i]] = 1.0 / g.degrees().dhat[i];
            for &j in g.neighbors(i) {
                p[[i, j as usize]] = g.degrees().inv_sqrt[i] * g.degrees().inv_sqrt[j as usize];
            }
        }
        let h = p.dot(&p.dot(&g.features_f64()).dot(&w1)).dot(&w2);
        let logits = head.logits(&h);

        let nodes: Vec<usize> = (0..n).collect();
        let preds = classify(&g, &nodes, &art, &backbone).unwrap();
        for (i, &pred) in preds.iter().enumerate() {
            let want = if logits[[i, 0]] >= logits[[i, 1]] { 0 } else { 1 };
            assert_eq!(pred, want as u32);
        }
    }

    #[test]
    fn parameter_count_formula() {
        let art = TaskArtifacts {
            task_id: 1,
            prompt: GraphPrompt::zeros(3, 16),
            head: ClassifierHead::init(8, vec![4, 5], 0),
            class_mean_readout: None,
        };
        // 2·k·f + d·C + C
        assert_eq!(art.parameter_count(), 2 * 3 * 16 + 8 * 2 + 2);
    }

    #[test]
    fn prompt_gradients_match_finite_differences() {
        let task = separable_task(13);
        let backbone = frozen_backbone(16, 6, 13);
        let x = task.graph.features_f64();
        let train = &task.splits.train;
        let labels = local_labels(&task.graph, train, &task.classes).unwrap();
        let head = ClassifierHead::init(6, task.classes.clone(), 9);
        let prompt = GraphPrompt::init(3, 16, 0.05, 77);

        let loss_of = |pr: &GraphPrompt| {
            let (prompted, _) = apply_prompt_batch(pr, &x);
            let trace = sgc_forward_trace(&backbone, &task.graph, Some(&prompted)).unwrap();
            let mut selected = Array2::<f64>::zeros((train.len(), 6));
            for (row, &node) in train.iter().enumerate() {
                selected.row_mut(row).assign(&trace.output.row(node));
            }
            cross_entropy_loss(&head.logits(&selected), &labels).0
        };

        let (prompted, alphas) = apply_prompt_batch(&prompt, &x);
        let trace = sgc_forward_trace(&backbone, &task.graph, Some(&prompted)).unwrap();
        let mut selected = Array2::<f64>::zeros((train.len(), 6));
        for (row, &node) in train.iter().enumerate() {
            selected.row_mut(row).assign(&trace.output.row(node));
        }
        let (_, grad_logits) = cross_entropy_loss(&head.logits(&selected), &labels);
        let grad_selected = grad_logits.dot(&head.weight.t());
        let mut grad_output = Array2::<f64>::zeros((task.graph.node_count(), 6));
        for (row, &node) in train.iter().enumerate() {
            grad_output.row_mut(node).assign(&grad_selected.row(row));
        }
        let grads = sgc_backward(&backbone, &task.graph, &trace, &grad_output);
        let (grad_tokens, grad_proj) = prompt_backward(&prompt, &x, &alphas, &grads.input);

        let h = 1e-5;
        for &(i, j) in &[(0usize, 0usize), (1, 5), (2, 10), (0, 15), (2, 3)] {
            let mut plus = prompt.clone();
            plus.tokens[[i, j]] += h;
            let mut minus = prompt.clone();
            minus.tokens[[i, j]] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad_tokens[[i, j]].abs()).max(1e-8);
            assert!(
                (fd - grad_tokens[[i, j]]).abs() / denom <= 1e-4,
                "token ({i},{j}): fd {fd} vs {}",
                grad_tokens[[i, j]]
            );

            let mut plus = prompt.clone();
            plus.projections[[i, j]] += h;
            let mut minus = prompt.clone();
            minus.projections[[i, j]] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad_proj[[i, j]].abs()).max(1e-8);
            assert!(
                (fd - grad_proj[[i, j]]).abs() / denom <= 1e-4,
                "projection ({i},{j}): fd {fd} vs {}",
                grad_proj[[i, j]]
            );
        }
    }
}
