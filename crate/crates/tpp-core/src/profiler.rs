//! Task profiling: Laplacian-smoothing prototypes, the prototype pool,
//! nearest-prototype task-ID prediction, and the spectral suites that check
//! the convergence and separation claims the task-ID predictor rests on.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TppError};
use crate::graph::{connect_isolated_nodes, smooth_features, Graph};

/// Fixed seed for the internal isolated-node fix, so the train- and
/// test-side prototypes of one task always see the same repaired graph.
const ISOLATED_FIX_SEED: u64 = 0x1507_u64;

/// A per-task profiling vector: the degree-corrected mean of smoothed node
/// embeddings over some node set.
///
/// `task_id` is 1-based for enrolled prototypes; test-side prototypes that
/// were never enrolled carry the sentinel id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrototype {
    pub task_id: usize,
    pub vector: Vec<f64>,
    pub s_used: usize,
}

/// Ordered store of enrolled task prototypes, one per learned task.
/// Append-only during training; ids stay contiguous 1..T.
#[derive(Debug, Clone, Default)]
pub struct PrototypePool {
    prototypes: Vec<TaskPrototype>,
}

impl PrototypePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, prototype: TaskPrototype) -> Result<()> {
        let expected = self.prototypes.len() + 1;
        if prototype.task_id != expected {
            return Err(TppError::NonContiguousTaskId {
                got: prototype.task_id,
                expected,
            });
        }
        if let Some(first) = self.prototypes.first() {
            if first.vector.len() != prototype.vector.len() {
                return Err(TppError::DimensionMismatch(format!(
                    "prototype dim {} != pool dim {}",
                    prototype.vector.len(),
                    first.vector.len()
                )));
            }
        }
        self.prototypes.push(prototype);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, task_id: usize) -> Option<&TaskPrototype> {
        self.prototypes.get(task_id.checked_sub(1)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskPrototype> {
        self.prototypes.iter()
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn validate_node_set(g: &Graph, node_set: &[usize]) -> Result<()> {
    if node_set.is_empty() {
        return Err(TppError::EmptyNodeSet);
    }
    let mut seen = vec![false; g.node_count()];
    for &i in node_set {
        if i >= g.node_count() {
            return Err(TppError::InvalidNodeSet(format!(
                "node {i} out of range for n={}",
                g.node_count()
            )));
        }
        if seen[i] {
            return Err(TppError::InvalidNodeSet(format!("duplicate node {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Build the task prototype: smooth the full graph for `s` steps, correct
/// each selected row by d̂_i^{-1/2}, and average over the node set.
///
/// Isolated nodes are first attached to random anchors (fixed internal
/// seed) so the smoothing assumptions hold; smoothing always runs on the
/// full graph, the node set only selects which rows are averaged.
pub fn build_prototype(
    g: &Graph,
    node_set: &[usize],
    s: usize,
    task_id: usize,
) -> Result<TaskPrototype> {
    validate_node_set(g, node_set)?;
    let fixed;
    let g = if g.isolated_nodes().is_empty() || g.node_count() == 1 {
        g
    } else {
        fixed = connect_isolated_nodes(g, ISOLATED_FIX_SEED)?;
        &fixed
    };
    let z = smooth_features(g, s);
    let f = g.feature_dim();
    let mut vector = vec![0.0f64; f];
    for &i in node_set {
        let corr = g.degrees().inv_sqrt[i];
        let row = z.row(i);
        for (acc, &v) in vector.iter_mut().zip(row.iter()) {
            *acc += v * corr;
        }
    }
    let scale = 1.0 / node_set.len() as f64;
    for v in &mut vector {
        *v *= scale;
    }
    Ok(TaskPrototype {
        task_id,
        vector,
        s_used: s,
    })
}

/// Attribute-only profiling variant: the plain mean of raw node attributes
/// over the node set, no smoothing and no degree correction. Records
/// `s_used = 0`.
pub fn build_attribute_prototype(
    g: &Graph,
    node_set: &[usize],
    task_id: usize,
) -> Result<TaskPrototype> {
    validate_node_set(g, node_set)?;
    let f = g.feature_dim();
    let mut vector = vec![0.0f64; f];
    for &i in node_set {
        for (acc, &v) in vector.iter_mut().zip(g.feature_row(i)) {
            *acc += v as f64;
        }
    }
    let scale = 1.0 / node_set.len() as f64;
    for v in &mut vector {
        *v *= scale;
    }
    Ok(TaskPrototype {
        task_id,
        vector,
        s_used: 0,
    })
}

/// Return the task id whose prototype is nearest (Euclidean) to the query;
/// ties break toward the smallest task id.
pub fn predict_task(pool: &PrototypePool, p_test: &TaskPrototype) -> Result<usize> {
    if pool.is_empty() {
        return Err(TppError::EmptyPool);
    }
    let mut best_id = 0usize;
    let mut best_d = f64::INFINITY;
    for p in pool.iter() {
        if p.vector.len() != p_test.vector.len() {
            return Err(TppError::DimensionMismatch(format!(
                "query dim {} != pool dim {}",
                p_test.vector.len(),
                p.vector.len()
            )));
        }
        let d = euclidean_distance(&p.vector, &p_test.vector);
        if d < best_d {
            best_d = d;
            best_id = p.task_id;
        }
    }
    Ok(best_id)
}

/// Closed-form infinite-smoothing prototype (Σ_j d̂_j^{1/2} x_j) / (Σ_j d̂_j).
///
/// The smoothing operator projects onto its top eigenvector, proportional
/// to d̂^{1/2}, and the per-node degree correction then collapses every
/// row to this common vector. Unique only on connected graphs.
pub fn limit_prototype(g: &Graph) -> Result<Vec<f64>> {
    let fixed;
    let g = if g.isolated_nodes().is_empty() || g.node_count() == 1 {
        g
    } else {
        fixed = connect_isolated_nodes(g, ISOLATED_FIX_SEED)?;
        &fixed
    };
    if !g.is_connected() {
        return Err(TppError::Disconnected("limit not unique".into()));
    }
    let f = g.feature_dim();
    let mut num = vec![0.0f64; f];
    let mut volume = 0.0f64;
    for i in 0..g.node_count() {
        let w = g.degrees().dhat[i].sqrt();
        volume += g.degrees().dhat[i];
        for (acc, &x) in num.iter_mut().zip(g.feature_row(i)) {
            *acc += w * x as f64;
        }
    }
    for v in &mut num {
        *v /= volume;
    }
    Ok(num)
}

/// Dense eigendecomposition of the propagation operator
/// `D̂^{-1/2} Â D̂^{-1/2}`, for small graphs only. Eigenvalues ascending;
/// `eigenvectors[i]` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct SpectralOracle {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectralOracle {
    pub fn compute(g: &Graph) -> Self {
        let n = g.node_count();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0 / g.degrees().dhat[i];
            for &j in g.neighbors(i) {
                m[(i, j as usize)] = g.degrees().inv_sqrt[i] * g.degrees().inv_sqrt[j as usize];
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("finite eigenvalues")
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    /// Gap below the top eigenvalue: 1 − λ_{N−1}.
    pub fn spectral_gap(&self) -> f64 {
        match self.eigenvalues.len() {
            0 | 1 => 1.0,
            n => 1.0 - self.eigenvalues[n - 2],
        }
    }

    /// Worst-case per-step contraction of the non-top spectrum:
    /// max(|λ_1|, λ_{N−1}). Smoothing errors decay like this to the s.
    pub fn convergence_rate(&self) -> f64 {
        match self.eigenvalues.len() {
            0 | 1 => 0.0,
            n => self.eigenvalues[0].abs().max(self.eigenvalues[n - 2].abs()),
        }
    }
}

/// Thresholds for the prototype-convergence check. All configurable;
/// defaults: distance ratio 1e-3, absolute floor 1e-6, spectral-gap
/// threshold 0.1.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceThresholds {
    pub distance_ratio: f64,
    pub absolute_floor: f64,
    pub gap_threshold: f64,
}

impl Default for ConvergenceThresholds {
    fn default() -> Self {
        Self {
            distance_ratio: 1e-3,
            absolute_floor: 1e-6,
            gap_threshold: 0.1,
        }
    }
}

/// Outcome of [`verify_theorem1`]: prototype distances per smoothing step
/// plus the oracle spectrum context and the pass verdict.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// (smoothing steps, d(p_a, p_b)) in ascending step order.
    pub distances: Vec<(usize, f64)>,
    pub spectral_gap: f64,
    pub convergence_rate: f64,
    /// d at the largest s divided by d at the smallest s; `None` when the
    /// latter is exactly zero (identical splits).
    pub ratio: Option<f64>,
    pub distance_at_max_s: f64,
    pub gap_exceeds_threshold: bool,
    pub passed: bool,
}

/// Check that two prototypes of the same graph converge to each other as
/// the smoothing step grows.
///
/// The ratio/floor verdict only binds on graphs whose oracle-measured
/// spectral gap exceeds the configured threshold; below it the report is
/// informational and `passed` stays true.
pub fn verify_theorem1(
    g: &Graph,
    split_a: &[usize],
    split_b: &[usize],
    s_values: &[usize],
    thresholds: &ConvergenceThresholds,
) -> Result<ConvergenceReport> {
    if !g.is_connected() {
        return Err(TppError::Disconnected(
            "prototype convergence requires one connected component".into(),
        ));
    }
    validate_node_set(g, split_a)?;
    validate_node_set(g, split_b)?;
    if s_values.is_empty() {
        return Err(TppError::InvalidConfig("no smoothing steps given".into()));
    }

    let mut steps: Vec<usize> = s_values.to_vec();
    steps.sort_unstable();
    steps.dedup();
    let max_s = *steps.last().expect("nonempty");

    // One incremental smoothing sweep; prototypes read off at each
    // requested step.
    let mut z = g.features_f64();
    let mut distances = Vec::with_capacity(steps.len());
    let corr = &g.degrees().inv_sqrt;
    let mut record = |s: usize, z: &ndarray::Array2<f64>| {
        let proto = |set: &[usize]| -> Vec<f64> {
            let mut v = vec![0.0f64; g.feature_dim()];
            for &i in set {
                for (acc, &x) in v.iter_mut().zip(z.row(i).iter()) {
                    *acc += x * corr[i];
                }
            }
            let scale = 1.0 / set.len() as f64;
            v.iter().map(|x| x * scale).collect()
        };
        let d = euclidean_distance(&proto(split_a), &proto(split_b));
        distances.push((s, d));
    };

    let mut next = steps.iter().peekable();
    if let Some(&&0) = next.peek() {
        record(0, &z);
        next.next();
    }
    for s in 1..=max_s {
        z = g.propagate(&z);
        if let Some(&&want) = next.peek() {
            if want == s {
                record(s, &z);
                next.next();
            }
        }
    }

    let oracle = SpectralOracle::compute(g);
    let gap = oracle.spectral_gap();
    let rate = oracle.convergence_rate();
    let d_min_s = distances.first().expect("nonempty").1;
    let d_max_s = distances.last().expect("nonempty").1;
    let ratio = if d_min_s == 0.0 {
        None
    } else {
        Some(d_max_s / d_min_s)
    };
    let gate = gap >= thresholds.gap_threshold;
    let passed = if gate {
        // When the prototypes already agree to below the floor at the
        // smallest step (rank-deficient operators converge immediately),
        // the ratio carries no information.
        let ratio_ok =
            d_min_s <= thresholds.absolute_floor || ratio.map_or(true, |r| r <= thresholds.distance_ratio);
        ratio_ok && d_max_s <= thresholds.absolute_floor
    } else {
        true
    };
    Ok(ConvergenceReport {
        distances,
        spectral_gap: gap,
        convergence_rate: rate,
        ratio,
        distance_at_max_s: d_max_s,
        gap_exceeds_threshold: gate,
        passed,
    })
}

/// Norms of the degree and attribute differences between two aligned
/// graphs.
#[derive(Debug, Clone, Copy)]
pub struct TaskDifference {
    /// ‖e‖_2 where e_i = d̂_j(i)^{1/2} − d̂_t(i)^{1/2} over the alignment.
    pub degree_gap_norm: f64,
    /// ‖ε‖_F where ε = X^j − X^t over the alignment.
    pub attribute_gap_norm: f64,
}

/// How to pair nodes across the two graphs for the gap diagnostic.
#[derive(Debug, Clone)]
pub enum Alignment {
    /// Sort both graphs' nodes by (degree, then feature mean) and pair
    /// positionally; unequal node counts truncate to the smaller side.
    DegreeThenFeatureMean,
    /// Caller-supplied bijection (node in first graph, node in second);
    /// must cover every node of two equal-size graphs.
    Explicit(Vec<(usize, usize)>),
}

/// Output of [`theorem2_gap_diagnostic`].
///
/// `formula_value` uses the unnormalized top eigenvector d̂^{1/2}·1 of the
/// first graph, so it predicts the measured large-s distance only up to a
/// normalization constant; both are reported rather than compared.
#[derive(Debug, Clone)]
pub struct GapDiagnostic {
    pub difference: TaskDifference,
    /// ‖(e_N^t)ᵀ ε + eᵀ X^j‖_2 under the alignment.
    pub formula_value: f64,
    /// Distance between the two graphs' all-node prototypes at `large_s`.
    pub measured_distance: f64,
    pub large_s: usize,
    /// Set when the canonical alignment truncated the larger graph.
    pub truncated: bool,
}

fn canonical_order(g: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    let f = g.feature_dim() as f64;
    let mean = |i: usize| g.feature_row(i).iter().map(|&x| x as f64).sum::<f64>() / f;
    order.sort_by(|&a, &b| {
        g.degree(a)
            .cmp(&g.degree(b))
            .then_with(|| mean(a).partial_cmp(&mean(b)).expect("finite features"))
            .then_with(|| a.cmp(&b))
    });
    order
}

/// Compare two graphs' structure and attributes under a node alignment and
/// report the predicted large-s prototype gap alongside the measured one.
pub fn theorem2_gap_diagnostic(
    g_t: &Graph,
    g_j: &Graph,
    alignment: &Alignment,
    large_s: usize,
) -> Result<GapDiagnostic> {
    if g_t.feature_dim() != g_j.feature_dim() {
        return Err(TppError::DimensionMismatch(format!(
            "feature dims differ: {} vs {}",
            g_t.feature_dim(),
            g_j.feature_dim()
        )));
    }
    let (pairs, truncated) = match alignment {
        Alignment::Explicit(pairs) => {
            if pairs.len() != g_t.node_count() || g_t.node_count() != g_j.node_count() {
                return Err(TppError::AlignmentSizeMismatch {
                    left: g_t.node_count(),
                    right: g_j.node_count(),
                });
            }
            let mut seen_t = vec![false; g_t.node_count()];
            let mut seen_j = vec![false; g_j.node_count()];
            for &(a, b) in pairs {
                if a >= g_t.node_count() || b >= g_j.node_count() || seen_t[a] || seen_j[b] {
                    return Err(TppError::InvalidNodeSet(
                        "explicit alignment is not a bijection".into(),
                    ));
                }
                seen_t[a] = true;
                seen_j[b] = true;
            }
            (pairs.clone(), false)
        }
        Alignment::DegreeThenFeatureMean => {
            let ord_t = canonical_order(g_t);
            let ord_j = canonical_order(g_j);
            let m = ord_t.len().min(ord_j.len());
            let truncated = ord_t.len() != ord_j.len();
            (
                ord_t[..m]
                    .iter()
                    .copied()
                    .zip(ord_j[..m].iter().copied())
                    .collect(),
                truncated,
            )
        }
    };

    let f = g_t.feature_dim();
    let mut degree_sq = 0.0f64;
    let mut attr_sq = 0.0f64;
    // Accumulates (e_N^t)ᵀ ε + eᵀ X^j, a length-f vector.
    let mut combo = vec![0.0f64; f];
    for &(a, b) in &pairs {
        let e_i = g_j.degrees().dhat[b].sqrt() - g_t.degrees().dhat[a].sqrt();
        degree_sq += e_i * e_i;
        let top_t = g_t.degrees().dhat[a].sqrt();
        let row_t = g_t.feature_row(a);
        let row_j = g_j.feature_row(b);
        for c in 0..f {
            let eps = row_j[c] as f64 - row_t[c] as f64;
            attr_sq += eps * eps;
            combo[c] += top_t * eps + e_i * row_j[c] as f64;
        }
    }
    let formula_value = combo.iter().map(|x| x * x).sum::<f64>().sqrt();

    let all_t: Vec<usize> = (0..g_t.node_count()).collect();
    let all_j: Vec<usize> = (0..g_j.node_count()).collect();
    let p_t = build_prototype(g_t, &all_t, large_s, 0)?;
    let p_j = build_prototype(g_j, &all_j, large_s, 0)?;
    let measured = euclidean_distance(&p_t.vector, &p_j.vector);

    Ok(GapDiagnostic {
        difference: TaskDifference {
            degree_gap_norm: degree_sq.sqrt(),
            attribute_gap_norm: attr_sq.sqrt(),
        },
        formula_value,
        measured_distance: measured,
        large_s,
        truncated,
    })
}

/// Outcome of the randomized theorem suites over a family of connected
/// graphs with oracle-verified spectral gaps.
#[derive(Debug, Clone)]
pub struct VerificationSummary {
    /// Graphs examined (each with gap ≥ the configured threshold).
    pub graphs: usize,
    pub theorem1_reports: Vec<ConvergenceReport>,
    /// Worst d(s_max)/d(s_min) over the family (skipping exact zeros).
    pub worst_ratio: f64,
    /// Worst d(s_max) over the family.
    pub worst_distance: f64,
    /// Worst relative deviation of the deep-smoothing prototype from the
    /// closed-form limit at s = 400.
    pub worst_limit_deviation: f64,
    pub limit_tolerance: f64,
    pub all_passed: bool,
}

/// Random connected Erdős–Rényi graph with uniform [0, 1) features, kept
/// only if the oracle confirms both spectral conditions: 1 − λ_{N−1}
/// above the gap threshold and |λ_1| bounded away from 1 (the absolute
/// convergence floor depends on the two-sided rate, not just the top gap).
fn random_gapped_graph(rng: &mut ChaCha8Rng, gap_threshold: f64) -> (Graph, SpectralOracle) {
    use rand::Rng;
    loop {
        let n = rng.gen_range(8..=40);
        let f = rng.gen_range(3..=8);
        let p = rng.gen_range(0.2..0.6);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let feats: Vec<f32> = (0..n * f).map(|_| rng.gen::<f32>()).collect();
        let g = match Graph::from_undirected_edges(n, f, &edges, feats, None) {
            Ok(g) => g,
            Err(_) => continue,
        };
        if !g.is_connected() {
            continue;
        }
        let oracle = SpectralOracle::compute(&g);
        if oracle.spectral_gap() >= gap_threshold && oracle.convergence_rate() <= 1.0 - gap_threshold
        {
            return (g, oracle);
        }
    }
}

/// Run the prototype-convergence and limit-prototype checks over
/// `graph_count` random connected graphs.
pub fn run_verification_suite(
    graph_count: usize,
    seed: u64,
    thresholds: &ConvergenceThresholds,
    s_max: usize,
) -> Result<VerificationSummary> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(graph_count);
    let mut worst_ratio = 0.0f64;
    let mut worst_distance = 0.0f64;
    let mut worst_limit_deviation = 0.0f64;
    let limit_tolerance = 1e-6;
    let mut all_passed = true;

    for _ in 0..graph_count {
        let (g, _oracle) = random_gapped_graph(&mut rng, thresholds.gap_threshold);
        let n = g.node_count();
        let split_a: Vec<usize> = (0..n).step_by(2).collect();
        let split_b: Vec<usize> = (1..n).step_by(2).collect();
        let report = verify_theorem1(&g, &split_a, &split_b, &[1, s_max], thresholds)?;
        if let Some(r) = report.ratio {
            worst_ratio = worst_ratio.max(r);
        }
        worst_distance = worst_distance.max(report.distance_at_max_s);
        all_passed &= report.passed;
        reports.push(report);

        let limit = limit_prototype(&g)?;
        let all_nodes: Vec<usize> = (0..n).collect();
        let deep = build_prototype(&g, &all_nodes, 2 * s_max, 0)?;
        let norm = limit.iter().map(|x| x * x).sum::<f64>().sqrt();
        let deviation = euclidean_distance(&deep.vector, &limit) / norm;
        worst_limit_deviation = worst_limit_deviation.max(deviation);
        all_passed &= deviation <= limit_tolerance;
    }

    Ok(VerificationSummary {
        graphs: graph_count,
        theorem1_reports: reports,
        worst_ratio,
        worst_distance,
        worst_limit_deviation,
        limit_tolerance,
        all_passed,
    })
}
