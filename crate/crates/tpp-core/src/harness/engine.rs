//! The train/infer protocol: pretrain the backbone on the first task,
//! then per task enroll a prototype and train prompt+head artifacts;
//! after each task, evaluate every task seen so far through the full
//! inference path (predict task id from the test-node prototype, retrieve
//! that task's artifacts, classify within its classes).

use std::time::Instant;

use crate::config::RunConfig;
use crate::error::Result;
use crate::graph::AugmentationParams;
use crate::harness::{accuracy_score, compute_metrics, AccuracyMatrix, RunResult, Task, TaskStream};
use crate::nn::{pretrain_backbone, SgcBackbone};
use crate::profiler::{
    build_attribute_prototype, build_prototype, predict_task, PrototypePool, TaskPrototype,
};
use crate::prompt::{classify, classify_scores, train_task, PromptTrainOptions, TaskArtifacts};
use crate::subseed;

const PRETRAIN_TAG: u64 = 0x10;
const TASK_TRAIN_TAG: u64 = 0x1000;

/// Component switches mirroring the ablation grid. All on is the full
/// method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub prompt_on: bool,
    pub head_on: bool,
    pub task_id_on: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            prompt_on: true,
            head_on: true,
            task_id_on: true,
        }
    }
}

impl AblationFlags {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            prompt_on: cfg.prompt_on,
            head_on: cfg.head_on,
            task_id_on: cfg.task_id_on,
        }
    }
}

/// How task prototypes are built: full Laplacian smoothing with degree
/// correction, or the attribute-only mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfilingMode {
    LaplacianSmoothing,
    AttributeMean,
}

pub(crate) fn profile_node_set(
    task: &Task,
    node_set: &[usize],
    mode: ProfilingMode,
    smoothing_steps: usize,
    task_id: usize,
) -> Result<TaskPrototype> {
    match mode {
        ProfilingMode::LaplacianSmoothing => {
            build_prototype(&task.graph, node_set, smoothing_steps, task_id)
        }
        ProfilingMode::AttributeMean => build_attribute_prototype(&task.graph, node_set, task_id),
    }
}

/// Score a task's test nodes when no task id is available: every
/// artifact's class probabilities compete and the globally
/// highest-probability class wins (ties to the smaller class id).
fn cross_task_predictions(
    task: &Task,
    artifacts: &[TaskArtifacts],
    backbone: &SgcBackbone,
) -> Result<Vec<u32>> {
    let test = &task.splits.test;
    let mut best_score = vec![f64::NEG_INFINITY; test.len()];
    let mut best_class = vec![u32::MAX; test.len()];
    for art in artifacts {
        let (scores, class_map) = classify_scores(&task.graph, test, art, backbone)?;
        for (row, scores_row) in scores.rows().into_iter().enumerate() {
            for (local, &score) in scores_row.iter().enumerate() {
                let global = class_map[local];
                if score > best_score[row]
                    || (score == best_score[row] && global < best_class[row])
                {
                    best_score[row] = score;
                    best_class[row] = global;
                }
            }
        }
    }
    Ok(best_class)
}

fn truth_labels(task: &Task) -> Vec<u32> {
    let labels = task.graph.labels().expect("validated stream has labels");
    task.splits.test.iter().map(|&i| labels[i]).collect()
}

/// Everything the training half of the protocol produces: the frozen
/// backbone, the prototype pool, and one artifact set per task.
pub struct TrainedState {
    pub backbone: SgcBackbone,
    pub pool: PrototypePool,
    pub artifacts: Vec<TaskArtifacts>,
}

/// Contrastively pretrain the backbone on the stream's first task with
/// the run's seed derivation (the same backbone `run_tpp` would build).
pub fn pretrain_for_stream(stream: &TaskStream, cfg: &RunConfig) -> Result<SgcBackbone> {
    let aug = AugmentationParams::new(
        cfg.edge_removal_prob,
        cfg.attr_mask_prob,
        subseed(cfg.seed, PRETRAIN_TAG ^ 0xA),
    )?;
    let outcome = pretrain_backbone(
        &stream.tasks[0].graph,
        &aug,
        &cfg.contrastive_train_config(subseed(cfg.seed, PRETRAIN_TAG)),
        cfg.hidden_dim,
        cfg.steps_per_layer,
    )?;
    Ok(outcome.backbone)
}

/// Run the full pipeline with explicit component flags and profiling mode.
pub fn run_tpp_with(
    stream: &TaskStream,
    cfg: &RunConfig,
    flags: AblationFlags,
    profiling: ProfilingMode,
) -> Result<RunResult> {
    Ok(run_tpp_trained(stream, cfg, flags, profiling)?.0)
}

/// As [`run_tpp_with`], additionally returning the learned state for
/// persistence.
pub fn run_tpp_trained(
    stream: &TaskStream,
    cfg: &RunConfig,
    flags: AblationFlags,
    profiling: ProfilingMode,
) -> Result<(RunResult, TrainedState)> {
    stream.validate()?;
    cfg.validate()?;
    let t_count = stream.len();
    let mut phase = PhaseClock::new();

    phase.start("pretrain");
    let aug = AugmentationParams::new(
        cfg.edge_removal_prob,
        cfg.attr_mask_prob,
        subseed(cfg.seed, PRETRAIN_TAG ^ 0xA),
    )?;
    let pretrain = pretrain_backbone(
        &stream.tasks[0].graph,
        &aug,
        &cfg.contrastive_train_config(subseed(cfg.seed, PRETRAIN_TAG)),
        cfg.hidden_dim,
        cfg.steps_per_layer,
    )?;
    let backbone = pretrain.backbone;
    phase.stop();

    let mut pool = PrototypePool::new();
    let mut artifacts: Vec<TaskArtifacts> = Vec::with_capacity(t_count);
    let mut matrix = AccuracyMatrix::new(t_count);
    let mut task_id_hits: Vec<Vec<bool>> = vec![Vec::new(); t_count];

    for (t, task) in stream.tasks.iter().enumerate() {
        phase.start("prototype");
        let proto = profile_node_set(
            task,
            &task.splits.train,
            profiling,
            cfg.smoothing_steps,
            t + 1,
        )?;
        pool.push(proto)?;
        phase.stop();

        phase.start("prompt_train");
        let mut opts = PromptTrainOptions::new(t + 1, cfg.token_count, task.classes.clone());
        opts.init_sigma = cfg.prompt_init_sigma;
        opts.prompt_on = flags.prompt_on;
        opts.head_on = flags.head_on;
        let art = train_task(
            &task.graph,
            &task.splits.train,
            &backbone,
            &cfg.task_train_config(subseed(cfg.seed, TASK_TRAIN_TAG + t as u64)),
            &opts,
        )?;
        artifacts.push(art);
        phase.stop();

        phase.start("evaluate");
        for (j, old_task) in stream.tasks.iter().enumerate().take(t + 1) {
            let p_test =
                profile_node_set(old_task, &old_task.splits.test, profiling, cfg.smoothing_steps, 0)?;
            let predicted = predict_task(&pool, &p_test)?;
            task_id_hits[j].push(predicted == j + 1);

            let predictions = if flags.task_id_on {
                classify(
                    &old_task.graph,
                    &old_task.splits.test,
                    &artifacts[predicted - 1],
                    &backbone,
                )?
            } else {
                cross_task_predictions(old_task, &artifacts, &backbone)?
            };
            let truth = truth_labels(old_task);
            let acc = accuracy_score(&truth, &predictions, cfg.balanced_accuracy);
            matrix.set(t, j, acc)?;
        }
        phase.stop();

        backbone.check_frozen_integrity()?;
    }

    let (aa, af) = compute_metrics(&matrix)?;
    let task_id_accuracy: Vec<f64> = task_id_hits
        .iter()
        .map(|hits| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
        .collect();
    let result = RunResult {
        seed: cfg.seed,
        config: cfg.clone(),
        matrix,
        average_accuracy: aa,
        average_forgetting: af,
        task_id_accuracy,
        phase_seconds: phase.finish(),
    };
    Ok((
        result,
        TrainedState {
            backbone,
            pool,
            artifacts,
        },
    ))
}

/// The full method: all components on, Laplacian-smoothing profiling.
/// Component flags come from the config (all on by default).
pub fn run_tpp(stream: &TaskStream, cfg: &RunConfig) -> Result<RunResult> {
    run_tpp_with(
        stream,
        cfg,
        AblationFlags::from_config(cfg),
        ProfilingMode::LaplacianSmoothing,
    )
}

/// Run with some components disabled. With everything on this is
/// bit-identical to [`run_tpp`] at equal seed.
pub fn run_ablation(
    stream: &TaskStream,
    flags: AblationFlags,
    cfg: &RunConfig,
) -> Result<RunResult> {
    run_tpp_with(stream, cfg, flags, ProfilingMode::LaplacianSmoothing)
}

/// Wall-clock accumulator keyed by phase name, insertion-ordered.
pub(crate) struct PhaseClock {
    totals: Vec<(String, f64)>,
    current: Option<(usize, Instant)>,
}

impl PhaseClock {
    pub(crate) fn new() -> Self {
        Self {
            totals: Vec::new(),
            current: None,
        }
    }

    pub(crate) fn start(&mut self, name: &str) {
        assert!(self.current.is_none(), "phase already running");
        let idx = match self.totals.iter().position(|(n, _)| n == name) {
            Some(i) => i,
            None => {
                self.totals.push((name.to_string(), 0.0));
                self.totals.len() - 1
            }
        };
        self.current = Some((idx, Instant::now()));
    }

    pub(crate) fn stop(&mut self) {
        let (idx, started) = self.current.take().expect("no phase running");
        self.totals[idx].1 += started.elapsed().as_secs_f64();
    }

    pub(crate) fn finish(self) -> Vec<(String, f64)> {
        assert!(self.current.is_none(), "phase still running");
        self.totals
    }
}
