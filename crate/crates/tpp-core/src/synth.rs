//! Seeded stochastic-block-model task streams: one SBM graph per task,
//! per-class feature means plus Gaussian noise, and an adversarial mode
//! where the feature means repeat across tasks and only the block
//! structure (edge density) tells tasks apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TppError};
use crate::graph::{check_probability, induced_subgraph, Graph};
use crate::harness::{OrderingMode, Splits, Task, TaskStream};
use crate::subseed;

const ORDER_TAG: u64 = 0x04D4;
const EDGE_TAG: u64 = 0x0ED6;
const FEATURE_TAG: u64 = 0x0F1A;
const CROSS_TAG: u64 = 0x0C40;
const DIRECTION_TAG: u64 = 0x0D12;

/// Desk-scale defaults: 5 tasks x 2 classes x 50 nodes, 16 features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmSpec {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub nodes_per_class: usize,
    pub intra_prob: f64,
    pub inter_prob: f64,
    /// Probability of an edge between nodes of different tasks in the
    /// union graph. Tasks are separate graphs, so this stays 0 unless a
    /// robustness experiment asks otherwise; the per-task graphs never
    /// contain cross edges either way.
    pub cross_task_prob: f64,
    pub feature_dim: usize,
    /// Per-class feature mean magnitude along a one-hot direction.
    pub feature_mean_shift: f64,
    pub feature_noise: f64,
    /// Repeat the same per-class feature means in every task and spread
    /// the intra-block densities apart, so only structure separates tasks.
    pub adversarial: bool,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            tasks: 5,
            classes_per_task: 2,
            nodes_per_class: 50,
            intra_prob: 0.3,
            inter_prob: 0.05,
            cross_task_prob: 0.0,
            feature_dim: 16,
            feature_mean_shift: 2.0,
            feature_noise: 0.5,
            adversarial: false,
            seed: 7,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        check_probability("intra_prob", self.intra_prob)?;
        check_probability("inter_prob", self.inter_prob)?;
        check_probability("cross_task_prob", self.cross_task_prob)?;
        if self.tasks == 0 || self.classes_per_task == 0 || self.nodes_per_class == 0 {
            return Err(TppError::InvalidConfig(
                "tasks, classes_per_task and nodes_per_class must be positive".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(TppError::InvalidConfig("feature_dim must be positive".into()));
        }
        if self.feature_mean_shift < 0.0 || self.feature_noise < 0.0 {
            return Err(TppError::InvalidConfig(
                "feature_mean_shift and feature_noise must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn total_classes(&self) -> usize {
        self.tasks * self.classes_per_task
    }

    pub fn nodes_per_task(&self) -> usize {
        self.classes_per_task * self.nodes_per_class
    }

    pub fn total_nodes(&self) -> usize {
        self.tasks * self.nodes_per_task()
    }

    /// Intra-block edge probability for a given task position. In
    /// adversarial mode densities spread geometrically around the base so
    /// the tasks stay structurally distinguishable.
    pub fn intra_prob_for_task(&self, task_index: usize) -> f64 {
        if !self.adversarial {
            return self.intra_prob;
        }
        let center = (self.tasks / 2) as i32;
        let factor = 2.0f64.powi(task_index as i32 - center);
        (self.intra_prob * factor).clamp(0.02, 0.9)
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, cosine branch.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Seeded random unit direction for one class's feature mean.
///
/// Classes share the feature space rather than owning private axes, so
/// sequential baselines genuinely interfere across tasks. In adversarial
/// mode the direction depends only on the within-task class index, making
/// the feature means repeat across tasks.
pub fn class_mean_direction(spec: &SbmSpec, class: u32, local_index: usize) -> Vec<f64> {
    let tag = if spec.adversarial {
        DIRECTION_TAG + local_index as u64
    } else {
        DIRECTION_TAG + 0x100 + class as u64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(spec.seed, tag));
    let mut dir: Vec<f64> = (0..spec.feature_dim)
        .map(|_| standard_normal(&mut rng))
        .collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for v in &mut dir {
        *v /= norm;
    }
    dir
}

/// Class ids grouped into tasks under the requested ordering mode.
pub fn ordered_class_groups(spec: &SbmSpec, ordering: OrderingMode) -> Vec<Vec<u32>> {
    let mut classes: Vec<u32> = (0..spec.total_classes() as u32).collect();
    match ordering {
        OrderingMode::Ascending => {}
        OrderingMode::Descending => classes.reverse(),
        OrderingMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(spec.seed, ORDER_TAG));
            // Fisher-Yates.
            for i in (1..classes.len()).rev() {
                let j = rng.gen_range(0..=i);
                classes.swap(i, j);
            }
        }
    }
    classes
        .chunks(spec.classes_per_task)
        .map(|c| c.to_vec())
        .collect()
}

/// The union graph over all tasks (task-major node blocks, class-minor
/// within each block) plus the ordered class groups. Cross-task edges are
/// sampled only here; per-task graphs never see them.
pub fn generate_union_graph(
    spec: &SbmSpec,
    ordering: OrderingMode,
) -> Result<(Graph, Vec<Vec<u32>>)> {
    spec.validate()?;
    let groups = ordered_class_groups(spec, ordering);
    let npc = spec.nodes_per_class;
    let npt = spec.nodes_per_task();
    let n = spec.total_nodes();
    let f = spec.feature_dim;

    let mut labels = vec![0u32; n];
    let mut features = vec![0.0f32; n * f];
    for (t, group) in groups.iter().enumerate() {
        let base = t * npt;
        for (c_local, &class) in group.iter().enumerate() {
            let direction = class_mean_direction(spec, class, c_local);
            let mut rng =
                ChaCha8Rng::seed_from_u64(subseed(spec.seed, FEATURE_TAG + class as u64));
            for node in 0..npc {
                let i = base + c_local * npc + node;
                labels[i] = class;
                for dim in 0..f {
                    let mean = spec.feature_mean_shift * direction[dim];
                    features[i * f + dim] =
                        (mean + spec.feature_noise * standard_normal(&mut rng)) as f32;
                }
            }
        }
    }

    let mut edges: Vec<(u32, u32)> = Vec::new();
    for t in 0..spec.tasks {
        let base = t * npt;
        let intra = spec.intra_prob_for_task(t);
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(spec.seed, EDGE_TAG + t as u64));
        for a in 0..npt {
            for b in (a + 1)..npt {
                let same_class = a / npc == b / npc;
                let p = if same_class { intra } else { spec.inter_prob };
                if rng.gen::<f64>() < p {
                    edges.push(((base + a) as u32, (base + b) as u32));
                }
            }
        }
    }
    if spec.cross_task_prob > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(spec.seed, CROSS_TAG));
        for a in 0..n {
            for b in (a + 1)..n {
                if a / npt != b / npt && rng.gen::<f64>() < spec.cross_task_prob {
                    edges.push((a as u32, b as u32));
                }
            }
        }
    }

    let graph = Graph::from_undirected_edges(n, f, &edges, features, Some(labels))?;
    Ok((graph, groups))
}

/// Generate the full task stream: per-task SBM graphs (induced from the
/// union graph) with seeded 0.6/0.2/0.2 per-class splits.
pub fn generate_sbm_stream(spec: &SbmSpec, ordering: OrderingMode) -> Result<TaskStream> {
    let (union, groups) = generate_union_graph(spec, ordering)?;
    stream_from_union(&union, &groups, spec.seed, ordering)
}

/// Derive per-task graphs and splits from a labeled union graph and its
/// ordered class groups. Shared by the generator and the bundle loader so
/// a written-then-loaded stream reproduces the generated one exactly.
pub fn stream_from_union(
    union: &Graph,
    groups: &[Vec<u32>],
    seed: u64,
    ordering: OrderingMode,
) -> Result<TaskStream> {
    let labels = union.labels().ok_or_else(|| {
        TppError::InvalidConfig("union graph must carry labels".into())
    })?;

    // Validate the groups: known classes, disjoint across tasks.
    let mut seen = std::collections::BTreeSet::new();
    let present: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
    for group in groups {
        for &class in group {
            if !present.contains(&class) {
                return Err(TppError::UnknownClass { label: class });
            }
            if !seen.insert(class) {
                return Err(TppError::InvalidConfig(format!(
                    "class {class} appears in more than one task"
                )));
            }
        }
    }

    let mut tasks = Vec::with_capacity(groups.len());
    for group in groups {
        let members: Vec<usize> = (0..union.node_count())
            .filter(|&i| group.contains(&labels[i]))
            .collect();
        if members.is_empty() {
            return Err(TppError::EmptyNodeSet);
        }
        let (graph, _mapping) = induced_subgraph(union, &members)?;
        let splits = Splits::draw_per_class(&graph, group, seed)?;
        tasks.push(Task {
            graph,
            classes: group.clone(),
            splits,
        });
    }
    let stream = TaskStream { tasks, ordering };
    stream.validate()?;
    Ok(stream)
}
