//! Reference points for the continual protocol: naive sequential
//! fine-tuning, joint training on everything at once (optionally with
//! oracle task ids), one independently trained model per task routed by
//! the prototype predictor, and the attribute-only profiling variant.

use ndarray::Array2;

use crate::config::RunConfig;
use crate::error::{Result, TppError};
use crate::graph::Graph;
use crate::harness::engine::{profile_node_set, PhaseClock, ProfilingMode};
use crate::harness::{
    accuracy_score, compute_metrics, AblationFlags, AccuracyMatrix, RunResult, Task, TaskStream,
};
use crate::nn::{
    adam_step, cross_entropy_loss, sgc_backward, sgc_forward, sgc_forward_trace, AdamState,
    SgcBackbone, TrainConfig,
};
use crate::prompt::ClassifierHead;
use crate::profiler::{predict_task, PrototypePool};
use crate::subseed;

const FINE_TUNE_TAG: u64 = 0x2000;
const JOINT_TAG: u64 = 0x3000;
const PER_TASK_TAG: u64 = 0x4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FineTune,
    Joint,
    PerTaskModels,
    AttributeProfilingTpp,
}

impl std::str::FromStr for BaselineKind {
    type Err = TppError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine_tune" => Ok(Self::FineTune),
            "joint" => Ok(Self::Joint),
            "per_task_models" => Ok(Self::PerTaskModels),
            "attribute_profiling_tpp" => Ok(Self::AttributeProfilingTpp),
            other => Err(TppError::InvalidConfig(format!(
                "unknown baseline kind '{other}' (expected fine_tune, joint, per_task_models or attribute_profiling_tpp)"
            ))),
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::FineTune => "fine_tune",
            Self::Joint => "joint",
            Self::PerTaskModels => "per_task_models",
            Self::AttributeProfilingTpp => "attribute_profiling_tpp",
        };
        f.write_str(s)
    }
}

pub fn run_baseline(stream: &TaskStream, kind: BaselineKind, cfg: &RunConfig) -> Result<RunResult> {
    match kind {
        BaselineKind::FineTune => run_fine_tune(stream, cfg),
        BaselineKind::Joint => run_joint(stream, cfg),
        BaselineKind::PerTaskModels => run_per_task_models(stream, cfg),
        BaselineKind::AttributeProfilingTpp => crate::harness::engine::run_tpp_with(
            stream,
            cfg,
            AblationFlags::from_config(cfg),
            ProfilingMode::AttributeMean,
        ),
    }
}

/// A trainable SGC backbone plus linear head, used by the non-prompting
/// baselines.
struct FullModel {
    backbone: SgcBackbone,
    head: ClassifierHead,
}

impl FullModel {
    fn init(feature_dim: usize, cfg: &RunConfig, class_map: Vec<u32>, seed: u64) -> Self {
        Self {
            backbone: SgcBackbone::init(feature_dim, cfg.hidden_dim, cfg.steps_per_layer, seed),
            head: ClassifierHead::init(cfg.hidden_dim, class_map, seed ^ 0x7EAD),
        }
    }

    /// Full-batch cross-entropy training of backbone and head; a fresh
    /// optimizer per call.
    fn train(&mut self, g: &Graph, train_nodes: &[usize], labels: &[usize], cfg: &TrainConfig) -> Result<()> {
        let adam = cfg.adam();
        let d = self.backbone.hidden_dim();
        let mut st_w1 = AdamState::new(self.backbone.w1().len());
        let mut st_w2 = AdamState::new(self.backbone.w2().len());
        let mut st_hw = AdamState::new(self.head.weight.len());
        let mut st_hb = AdamState::new(self.head.bias.len());
        for _epoch in 0..cfg.epochs {
            let trace = sgc_forward_trace(&self.backbone, g, None)?;
            let mut selected = Array2::<f64>::zeros((train_nodes.len(), d));
            for (row, &node) in train_nodes.iter().enumerate() {
                selected.row_mut(row).assign(&trace.output.row(node));
            }
            let logits = self.head.logits(&selected);
            let (_loss, grad_logits) = cross_entropy_loss(&logits, labels);

            let grad_hw = selected.t().dot(&grad_logits);
            let grad_hb: Vec<f64> = (0..self.head.bias.len())
                .map(|c| grad_logits.column(c).sum())
                .collect();
            let grad_selected = grad_logits.dot(&self.head.weight.t());
            let mut grad_output = Array2::<f64>::zeros((g.node_count(), d));
            for (row, &node) in train_nodes.iter().enumerate() {
                grad_output.row_mut(node).assign(&grad_selected.row(row));
            }
            let grads = sgc_backward(&self.backbone, g, &trace, &grad_output);

            {
                let (w1, w2) = self.backbone.weights_mut()?;
                adam_step(
                    w1.as_slice_mut().expect("standard layout"),
                    grads.w1.as_slice().expect("standard layout"),
                    &mut st_w1,
                    &adam,
                );
                adam_step(
                    w2.as_slice_mut().expect("standard layout"),
                    grads.w2.as_slice().expect("standard layout"),
                    &mut st_w2,
                    &adam,
                );
            }
            adam_step(
                self.head.weight.as_slice_mut().expect("standard layout"),
                grad_hw.as_slice().expect("standard layout"),
                &mut st_hw,
                &adam,
            );
            adam_step(&mut self.head.bias, &grad_hb, &mut st_hb, &adam);
        }
        Ok(())
    }

    /// Predict global class ids; `restrict_to` limits the candidate
    /// classes (oracle task ids). Ties break to the smaller global id.
    fn predict(&self, g: &Graph, nodes: &[usize], restrict_to: Option<&[u32]>) -> Result<Vec<u32>> {
        let h = sgc_forward(&self.backbone, g, None)?;
        let d = self.backbone.hidden_dim();
        let mut selected = Array2::<f64>::zeros((nodes.len(), d));
        for (row, &node) in nodes.iter().enumerate() {
            selected.row_mut(row).assign(&h.row(node));
        }
        let logits = self.head.logits(&selected);
        let mut out = Vec::with_capacity(nodes.len());
        for row in logits.rows() {
            let mut best_class = u32::MAX;
            let mut best = f64::NEG_INFINITY;
            for (local, &score) in row.iter().enumerate() {
                let global = self.head.class_map[local];
                if let Some(allowed) = restrict_to {
                    if !allowed.contains(&global) {
                        continue;
                    }
                }
                if score > best || (score == best && global < best_class) {
                    best = score;
                    best_class = global;
                }
            }
            out.push(best_class);
        }
        Ok(out)
    }
}

fn union_local_labels(union_classes: &[u32], g: &Graph, nodes: &[usize]) -> Result<Vec<usize>> {
    let labels = g.labels().ok_or(TppError::UnlabeledNode {
        node: *nodes.first().unwrap_or(&0),
    })?;
    nodes
        .iter()
        .map(|&i| {
            let label = labels[i];
            union_classes
                .iter()
                .position(|&c| c == label)
                .ok_or(TppError::UnknownClass { label })
        })
        .collect()
}

fn test_truth(task: &Task) -> Vec<u32> {
    let labels = task.graph.labels().expect("validated stream");
    task.splits.test.iter().map(|&i| labels[i]).collect()
}

/// One shared model fine-tuned task after task over the union label
/// space, with no continual-learning protection at all.
fn run_fine_tune(stream: &TaskStream, cfg: &RunConfig) -> Result<RunResult> {
    stream.validate()?;
    cfg.validate()?;
    let t_count = stream.len();
    let union_classes = stream.union_classes();
    let feature_dim = stream.tasks[0].graph.feature_dim();
    let mut model = FullModel::init(
        feature_dim,
        cfg,
        union_classes.clone(),
        subseed(cfg.seed, FINE_TUNE_TAG),
    );
    let mut matrix = AccuracyMatrix::new(t_count);
    let mut phase = PhaseClock::new();

    for (t, task) in stream.tasks.iter().enumerate() {
        phase.start("train");
        let labels = union_local_labels(&union_classes, &task.graph, &task.splits.train)?;
        model.train(
            &task.graph,
            &task.splits.train,
            &labels,
            &cfg.task_train_config(subseed(cfg.seed, FINE_TUNE_TAG + 1 + t as u64)),
        )?;
        phase.stop();

        phase.start("evaluate");
        for (j, old_task) in stream.tasks.iter().enumerate().take(t + 1) {
            let preds = model.predict(&old_task.graph, &old_task.splits.test, None)?;
            let acc = accuracy_score(&test_truth(old_task), &preds, cfg.balanced_accuracy);
            matrix.set(t, j, acc)?;
        }
        phase.stop();
    }

    let (aa, af) = compute_metrics(&matrix)?;
    Ok(RunResult {
        seed: cfg.seed,
        config: cfg.clone(),
        matrix,
        average_accuracy: aa,
        average_forgetting: af,
        task_id_accuracy: Vec::new(),
        phase_seconds: phase.finish(),
    })
}

/// Disjoint union of every task graph, with splits carried over.
fn build_union_graph(stream: &TaskStream) -> Result<(Graph, Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    let feature_dim = stream.tasks[0].graph.feature_dim();
    let total: usize = stream.tasks.iter().map(|t| t.graph.node_count()).sum();
    let mut edges = Vec::new();
    let mut features = Vec::with_capacity(total * feature_dim);
    let mut labels = Vec::with_capacity(total);
    let mut train_sets = Vec::new();
    let mut test_sets = Vec::new();
    let mut offset = 0usize;
    for task in &stream.tasks {
        for (u, v) in task.graph.undirected_edges() {
            edges.push((u + offset as u32, v + offset as u32));
        }
        features.extend_from_slice(task.graph.features_raw());
        labels.extend_from_slice(task.graph.labels().expect("validated stream"));
        train_sets.push(task.splits.train.iter().map(|&i| i + offset).collect());
        test_sets.push(task.splits.test.iter().map(|&i| i + offset).collect());
        offset += task.graph.node_count();
    }
    let union = Graph::from_undirected_edges(total, feature_dim, &edges, features, Some(labels))?;
    Ok((union, train_sets, test_sets))
}

/// Train once on the union of all task graphs. Without task ids at test
/// time this is the plain joint baseline; with `oracle_task_ids` set the
/// prediction is confined to the true task's classes.
fn run_joint(stream: &TaskStream, cfg: &RunConfig) -> Result<RunResult> {
    stream.validate()?;
    cfg.validate()?;
    let t_count = stream.len();
    let union_classes = stream.union_classes();
    let (union, train_sets, test_sets) = build_union_graph(stream)?;
    let mut phase = PhaseClock::new();

    phase.start("train");
    let all_train: Vec<usize> = train_sets.iter().flatten().copied().collect();
    let labels = union_local_labels(&union_classes, &union, &all_train)?;
    let mut model = FullModel::init(
        union.feature_dim(),
        cfg,
        union_classes,
        subseed(cfg.seed, JOINT_TAG),
    );
    model.train(
        &union,
        &all_train,
        &labels,
        &cfg.task_train_config(subseed(cfg.seed, JOINT_TAG + 1)),
    )?;
    phase.stop();

    phase.start("evaluate");
    let mut per_task_acc = Vec::with_capacity(t_count);
    for (j, task) in stream.tasks.iter().enumerate() {
        let restrict = cfg.oracle_task_ids.then_some(&task.classes[..]);
        let preds = model.predict(&union, &test_sets[j], restrict)?;
        let acc = accuracy_score(&test_truth(task), &preds, cfg.balanced_accuracy);
        per_task_acc.push(acc);
    }
    phase.stop();

    // A single jointly trained model has no task sequence: every row
    // repeats the final evaluation and forgetting is not applicable.
    let mut matrix = AccuracyMatrix::new(t_count);
    for t in 0..t_count {
        for j in 0..=t {
            matrix.set(t, j, per_task_acc[j])?;
        }
    }
    let (aa, _) = compute_metrics(&matrix)?;
    Ok(RunResult {
        seed: cfg.seed,
        config: cfg.clone(),
        matrix,
        average_accuracy: aa,
        average_forgetting: None,
        task_id_accuracy: Vec::new(),
        phase_seconds: phase.finish(),
    })
}

/// An independently trained full model per task, routed at test time by
/// the same prototype-based task-ID predictor the main method uses.
fn run_per_task_models(stream: &TaskStream, cfg: &RunConfig) -> Result<RunResult> {
    stream.validate()?;
    cfg.validate()?;
    let t_count = stream.len();
    let feature_dim = stream.tasks[0].graph.feature_dim();
    let mut pool = PrototypePool::new();
    let mut models: Vec<FullModel> = Vec::with_capacity(t_count);
    let mut matrix = AccuracyMatrix::new(t_count);
    let mut task_id_hits: Vec<Vec<bool>> = vec![Vec::new(); t_count];
    let mut phase = PhaseClock::new();

    for (t, task) in stream.tasks.iter().enumerate() {
        phase.start("prototype");
        let proto = profile_node_set(
            task,
            &task.splits.train,
            ProfilingMode::LaplacianSmoothing,
            cfg.smoothing_steps,
            t + 1,
        )?;
        pool.push(proto)?;
        phase.stop();

        phase.start("train");
        let mut model = FullModel::init(
            feature_dim,
            cfg,
            task.classes.clone(),
            subseed(cfg.seed, PER_TASK_TAG + t as u64),
        );
        let labels = union_local_labels(&task.classes, &task.graph, &task.splits.train)?;
        model.train(
            &task.graph,
            &task.splits.train,
            &labels,
            &cfg.task_train_config(subseed(cfg.seed, PER_TASK_TAG + 0x100 + t as u64)),
        )?;
        models.push(model);
        phase.stop();

        phase.start("evaluate");
        for (j, old_task) in stream.tasks.iter().enumerate().take(t + 1) {
            let p_test = profile_node_set(
                old_task,
                &old_task.splits.test,
                ProfilingMode::LaplacianSmoothing,
                cfg.smoothing_steps,
                0,
            )?;
            let predicted = predict_task(&pool, &p_test)?;
            task_id_hits[j].push(predicted == j + 1);
            let preds = models[predicted - 1].predict(&old_task.graph, &old_task.splits.test, None)?;
            let acc = accuracy_score(&test_truth(old_task), &preds, cfg.balanced_accuracy);
            matrix.set(t, j, acc)?;
        }
        phase.stop();
    }

    let (aa, af) = compute_metrics(&matrix)?;
    let task_id_accuracy: Vec<f64> = task_id_hits
        .iter()
        .map(|hits| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
        .collect();
    Ok(RunResult {
        seed: cfg.seed,
        config: cfg.clone(),
        matrix,
        average_accuracy: aa,
        average_forgetting: af,
        task_id_accuracy,
        phase_seconds: phase.finish(),
    })
}
