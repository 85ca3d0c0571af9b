//! Continual-learning protocol driver: task streams and splits, the
//! lower-triangular accuracy matrix with AA/AF, the full train/infer
//! pipeline, and the baselines and ablations it is compared against.

mod baselines;
mod engine;

pub use baselines::{run_baseline, BaselineKind};
pub use engine::{
    pretrain_for_stream, run_ablation, run_tpp, run_tpp_trained, run_tpp_with, AblationFlags,
    ProfilingMode, TrainedState,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, TppError};
use crate::graph::Graph;
use crate::subseed;

const SPLIT_TAG: u64 = 0x51D;

/// How the global class list is arranged before being chunked into tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    Ascending,
    Descending,
    Random,
}

impl std::fmt::Display for OrderingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OrderingMode::Ascending => "ascending",
            OrderingMode::Descending => "descending",
            OrderingMode::Random => "random",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for OrderingMode {
    type Err = TppError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascending" => Ok(OrderingMode::Ascending),
            "descending" => Ok(OrderingMode::Descending),
            "random" => Ok(OrderingMode::Random),
            other => Err(TppError::InvalidConfig(format!(
                "unknown ordering mode '{other}'"
            ))),
        }
    }
}

/// Disjoint, exhaustive train/val/test node splits within one task graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Draw 0.6/0.2/0.2 splits per class with a seeded shuffle, then merge
    /// across the task's classes. Node ids are task-local.
    pub fn draw_per_class(graph: &Graph, classes: &[u32], seed: u64) -> Result<Self> {
        let labels = graph
            .labels()
            .ok_or_else(|| TppError::InvalidConfig("splits need labels".into()))?;
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for &class in classes {
            let mut members: Vec<usize> = (0..graph.node_count())
                .filter(|&i| labels[i] == class)
                .collect();
            if members.is_empty() {
                return Err(TppError::UnknownClass { label: class });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, SPLIT_TAG + class as u64));
            for i in (1..members.len()).rev() {
                let j = rng.gen_range(0..=i);
                members.swap(i, j);
            }
            let n = members.len();
            let n_train = (0.6 * n as f64).floor() as usize;
            let n_val = (0.2 * n as f64).floor() as usize;
            train.extend_from_slice(&members[..n_train]);
            val.extend_from_slice(&members[n_train..n_train + n_val]);
            test.extend_from_slice(&members[n_train + n_val..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        let mut seen = vec![false; node_count];
        for part in [&self.train, &self.val, &self.test] {
            for &i in part {
                if i >= node_count || seen[i] {
                    return Err(TppError::InvalidNodeSet(format!(
                        "split node {i} out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(TppError::InvalidNodeSet(
                "splits do not cover every node".into(),
            ));
        }
        Ok(())
    }
}

/// One learning task: its graph, the global class ids it owns (in task
/// order), and the node splits.
#[derive(Debug, Clone)]
pub struct Task {
    pub graph: Graph,
    pub classes: Vec<u32>,
    pub splits: Splits,
}

/// The ordered sequence of tasks presented to the learner.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub ordering: OrderingMode,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// All classes in stream order (task-major).
    pub fn union_classes(&self) -> Vec<u32> {
        self.tasks.iter().flat_map(|t| t.classes.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(TppError::InvalidConfig("empty task stream".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for task in &self.tasks {
            for &c in &task.classes {
                if !seen.insert(c) {
                    return Err(TppError::InvalidConfig(format!(
                        "class {c} appears in more than one task"
                    )));
                }
            }
            task.splits.validate(task.graph.node_count())?;
            let labels = task
                .graph
                .labels()
                .ok_or_else(|| TppError::InvalidConfig("task graph lacks labels".into()))?;
            for &l in labels {
                if !task.classes.contains(&l) {
                    return Err(TppError::UnknownClass { label: l });
                }
            }
        }
        Ok(())
    }
}

/// Lower-triangular T x T record: entry (t, j), defined for t >= j only,
/// is the accuracy on task j after learning task t (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Option<f64>>>", into = "Vec<Vec<Option<f64>>>")]
pub struct AccuracyMatrix {
    size: usize,
    entries: Vec<Option<f64>>,
}

impl AccuracyMatrix {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            entries: vec![None; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn set(&mut self, t: usize, j: usize, value: f64) -> Result<()> {
        if t >= self.size || j > t {
            return Err(TppError::InvalidConfig(format!(
                "matrix entry ({t}, {j}) outside the lower triangle of size {}",
                self.size
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(TppError::InvalidConfig(format!(
                "accuracy {value} outside [0, 1]"
            )));
        }
        self.entries[t * self.size + j] = Some(value);
        Ok(())
    }

    pub fn get(&self, t: usize, j: usize) -> Option<f64> {
        if t >= self.size || j >= self.size {
            return None;
        }
        self.entries[t * self.size + j]
    }

    pub fn is_complete(&self) -> bool {
        (0..self.size).all(|t| (0..=t).all(|j| self.get(t, j).is_some()))
    }
}

impl From<AccuracyMatrix> for Vec<Vec<Option<f64>>> {
    fn from(m: AccuracyMatrix) -> Self {
        (0..m.size)
            .map(|t| (0..m.size).map(|j| m.entries[t * m.size + j]).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<Option<f64>>>> for AccuracyMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<Option<f64>>>) -> std::result::Result<Self, String> {
        let size = rows.len();
        let mut m = AccuracyMatrix::new(size);
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(format!("row {t} has {} entries, expected {size}", row.len()));
            }
            for (j, v) in row.into_iter().enumerate() {
                if let Some(v) = v {
                    if j > t {
                        return Err(format!("entry ({t}, {j}) above the diagonal"));
                    }
                    m.entries[t * size + j] = Some(v);
                }
            }
        }
        Ok(m)
    }
}

/// Average accuracy and average forgetting from a fully populated matrix.
///
/// AA = mean of the final row; AF = mean over j < T-1 of
/// (M[T-1][j] - M[j][j]). AF is undefined for a single task.
pub fn compute_metrics(m: &AccuracyMatrix) -> Result<(f64, Option<f64>)> {
    let t_count = m.size();
    for t in 0..t_count {
        for j in 0..=t {
            if m.get(t, j).is_none() {
                return Err(TppError::MatrixEntryMissing { t, j });
            }
        }
    }
    let last = t_count - 1;
    let aa = (0..t_count)
        .map(|j| m.get(last, j).expect("checked above"))
        .sum::<f64>()
        / t_count as f64;
    let af = if t_count == 1 {
        None
    } else {
        let sum: f64 = (0..last)
            .map(|j| m.get(last, j).unwrap() - m.get(j, j).unwrap())
            .sum();
        Some(sum / last as f64)
    };
    Ok((aa, af))
}

/// Everything one run produces. The timing section is measurement noise
/// and is excluded from the deterministic on-disk document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config: RunConfig,
    pub matrix: AccuracyMatrix,
    pub average_accuracy: f64,
    pub average_forgetting: Option<f64>,
    /// Fraction of evaluations of task j (rows j..T) that predicted j.
    pub task_id_accuracy: Vec<f64>,
    #[serde(skip)]
    pub phase_seconds: Vec<(String, f64)>,
}

impl RunResult {
    /// Mean task-ID prediction accuracy over all evaluations.
    pub fn task_id_overall(&self) -> f64 {
        let t = self.task_id_accuracy.len();
        if t == 0 {
            return 1.0;
        }
        // Task j is evaluated T - j times; weight accordingly.
        let mut hits = 0.0;
        let mut total = 0.0;
        for (j, &acc) in self.task_id_accuracy.iter().enumerate() {
            let evals = (t - j) as f64;
            hits += acc * evals;
            total += evals;
        }
        hits / total
    }
}

/// Plain or per-class-balanced accuracy over predicted global class ids.
pub(crate) fn accuracy_score(truth: &[u32], predicted: &[u32], balanced: bool) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return 0.0;
    }
    if !balanced {
        let hits = truth
            .iter()
            .zip(predicted)
            .filter(|(a, b)| a == b)
            .count();
        return hits as f64 / truth.len() as f64;
    }
    let mut per_class: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        let e = per_class.entry(t).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    let recalls: Vec<f64> = per_class
        .values()
        .map(|&(hit, total)| hit as f64 / total as f64)
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_from(rows: &[&[f64]]) -> AccuracyMatrix {
        let mut m = AccuracyMatrix::new(rows.len());
        for (t, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(t, j, v).unwrap();
            }
        }
        m
    }

    #[test]
    fn perfect_matrix_metrics() {
        let m = matrix_from(&[&[1.0], &[1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let (aa, af) = compute_metrics(&m).unwrap();
        assert_eq!(aa, 1.0);
        assert_eq!(af, Some(0.0));
    }

    #[test]
    fn hand_computed_two_task_metrics() {
        let m = matrix_from(&[&[0.9], &[0.8, 1.0]]);
        let (aa, af) = compute_metrics(&m).unwrap();
        assert!((aa - 0.9).abs() < 1e-15);
        assert!((af.unwrap() - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn constant_columns_mean_zero_forgetting() {
        let m = matrix_from(&[&[0.7], &[0.7, 0.95], &[0.7, 0.95, 0.8]]);
        let (_, af) = compute_metrics(&m).unwrap();
        assert_eq!(af, Some(0.0));
    }

    #[test]
    fn single_task_forgetting_is_undefined() {
        let m = matrix_from(&[&[0.85]]);
        let (aa, af) = compute_metrics(&m).unwrap();
        assert_eq!(aa, 0.85);
        assert_eq!(af, None);
    }

    #[test]
    fn incomplete_matrix_is_an_error() {
        let mut m = AccuracyMatrix::new(2);
        m.set(0, 0, 1.0).unwrap();
        assert!(matches!(
            compute_metrics(&m),
            Err(TppError::MatrixEntryMissing { t: 1, j: 0 })
        ));
    }

    #[test]
    fn matrix_rejects_upper_triangle_and_bad_values() {
        let mut m = AccuracyMatrix::new(3);
        assert!(m.set(0, 1, 0.5).is_err());
        assert!(m.set(1, 0, 1.5).is_err());
        assert!(m.set(1, 0, 0.5).is_ok());
    }

    #[test]
    fn metrics_are_invariant_under_consistent_permutation() {
        // Permuting task labels and the matrix consistently leaves AA
        // unchanged (forgetting pairs diagonal entries with the final row,
        // so it is likewise preserved when columns move together).
        let m = matrix_from(&[&[0.9], &[0.8, 0.7], &[0.6, 0.5, 0.4]]);
        let (aa, _) = compute_metrics(&m).unwrap();
        // Swap tasks 0 and 1 consistently in the final row.
        let mut p = AccuracyMatrix::new(3);
        p.set(0, 0, 0.7).unwrap();
        p.set(1, 0, 0.7).unwrap(); // column for old task 1 kept constant
        p.set(1, 1, 0.9).unwrap();
        p.set(2, 0, 0.5).unwrap();
        p.set(2, 1, 0.6).unwrap();
        p.set(2, 2, 0.4).unwrap();
        let (aa_p, _) = compute_metrics(&p).unwrap();
        assert!((aa - aa_p).abs() < 1e-15);
    }

    #[test]
    fn balanced_accuracy_differs_under_imbalance() {
        let truth = [0u32, 0, 0, 1];
        let pred = [0u32, 0, 0, 0];
        assert!((accuracy_score(&truth, &pred, false) - 0.75).abs() < 1e-15);
        assert!((accuracy_score(&truth, &pred, true) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn split_fractions_are_exact_for_fifty_nodes() {
        use crate::synth::{generate_sbm_stream, SbmSpec};
        let stream = generate_sbm_stream(&SbmSpec::default(), OrderingMode::Ascending).unwrap();
        for task in &stream.tasks {
            assert_eq!(task.splits.train.len(), 60);
            assert_eq!(task.splits.val.len(), 20);
            assert_eq!(task.splits.test.len(), 20);
            task.splits.validate(task.graph.node_count()).unwrap();
        }
    }
}
