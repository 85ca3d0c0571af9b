//! On-disk formats and persistence.
//!
//! Dataset bundles: edges as text (`src<TAB>dst`, one undirected edge per
//! line, 0-indexed), features as a binary dense matrix (`GCILF1` magic,
//! u64 node and feature counts, 32-bit little-endian reals row-major),
//! labels as one integer per line, and a task spec listing each task's
//! class ids on its own line. Learned state uses the `TPPPOOL1` /
//! `TPPBKB1` / `TPPART1` binary records; all multi-byte values are
//! little-endian and all learned reals 64-bit. Every write goes through a
//! write-temp-then-rename so readers never observe partial files.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Result, TppError};
use crate::graph::Graph;
use crate::harness::{compute_metrics, OrderingMode, RunResult, TaskStream};
use crate::nn::SgcBackbone;
use crate::profiler::{PrototypePool, TaskPrototype};
use crate::prompt::{ClassifierHead, GraphPrompt, TaskArtifacts};
use crate::synth::stream_from_union;

const FEATURES_MAGIC: &[u8; 6] = b"GCILF1";
const POOL_MAGIC: &[u8; 8] = b"TPPPOOL1";
const BACKBONE_MAGIC: &[u8; 7] = b"TPPBKB1";
const ARTIFACT_MAGIC: &[u8; 7] = b"TPPART1";

/// Write bytes to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    let mut attempts = 0;
    while tmp.exists() {
        attempts += 1;
        tmp = tempfile_path(&path.with_extension(format!("tmp{attempts}")));
    }
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tempfile_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(".tmp");
    path.with_file_name(name)
}

fn malformed(path: &Path, reason: impl Into<String>) -> TppError {
    TppError::MalformedFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(malformed(self.path, "unexpected end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn magic(&mut self, expect: &[u8]) -> Result<()> {
        let got = self.take(expect.len())?;
        if got != expect {
            return Err(malformed(
                self.path,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expect),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let b = self.take(len * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn f32_vec(&mut self, len: usize) -> Result<Vec<f32>> {
        let b = self.take(len * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(malformed(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s<'a>(buf: &mut Vec<u8>, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn matrix_f64(reader: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let data = reader.f64_vec(rows * cols)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| malformed(reader.path, format!("bad matrix shape: {e}")))
}

// ---------------------------------------------------------------------
// Dataset bundle files
// ---------------------------------------------------------------------

pub fn write_features(path: &Path, n: usize, feature_dim: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), n * feature_dim);
    let mut buf = Vec::with_capacity(22 + data.len() * 4);
    buf.extend_from_slice(FEATURES_MAGIC);
    push_u64(&mut buf, n as u64);
    push_u64(&mut buf, feature_dim as u64);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

pub fn read_features(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(FEATURES_MAGIC)?;
    let n = r.u64()? as usize;
    let f = r.u64()? as usize;
    let data = r.f32_vec(n * f)?;
    r.done()?;
    Ok((n, f, data))
}

pub fn write_edges(path: &Path, edges: &[(u32, u32)]) -> Result<()> {
    let mut buf = String::new();
    for &(u, v) in edges {
        buf.push_str(&format!("{u}\t{v}\n"));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_edges(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |s: Option<&str>| -> Result<u32> {
            s.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| malformed(path, format!("bad edge on line {}", lineno + 1)))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(malformed(path, format!("extra fields on line {}", lineno + 1)));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut buf = String::new();
    for l in labels {
        buf.push_str(&format!("{l}\n"));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim()
                .parse()
                .map_err(|_| malformed(path, format!("bad label on line {}", lineno + 1)))
        })
        .collect()
}

/// One line per task: the task's global class ids, space-separated, in
/// stream order.
pub fn write_task_spec(path: &Path, groups: &[Vec<u32>]) -> Result<()> {
    let mut buf = String::new();
    for group in groups {
        let line: Vec<String> = group.iter().map(|c| c.to_string()).collect();
        buf.push_str(&line.join(" "));
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_task_spec(path: &Path) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path)?;
    let mut groups = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let group: Vec<u32> = line
            .split_whitespace()
            .map(|s| {
                s.parse().map_err(|_| {
                    malformed(path, format!("bad class id on line {}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if group.is_empty() {
            return Err(malformed(path, format!("empty task on line {}", lineno + 1)));
        }
        groups.push(group);
    }
    if groups.is_empty() {
        return Err(malformed(path, "no tasks listed"));
    }
    Ok(groups)
}

/// Paths of the four files making up one dataset.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub edges_path: PathBuf,
    pub features_path: PathBuf,
    pub labels_path: PathBuf,
    pub task_spec_path: PathBuf,
}

impl DatasetBundle {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            edges_path: dir.join("edges.txt"),
            features_path: dir.join("features.bin"),
            labels_path: dir.join("labels.txt"),
            task_spec_path: dir.join("tasks.txt"),
        }
    }
}

/// Write a labeled union graph and its task groups as a bundle.
pub fn write_bundle(dir: &Path, union: &Graph, groups: &[Vec<u32>]) -> Result<DatasetBundle> {
    let labels = union
        .labels()
        .ok_or_else(|| TppError::InvalidConfig("bundle graphs must carry labels".into()))?;
    let bundle = DatasetBundle::in_dir(dir);
    write_edges(&bundle.edges_path, &union.undirected_edges())?;
    write_features(
        &bundle.features_path,
        union.node_count(),
        union.feature_dim(),
        union.features_raw(),
    )?;
    write_labels(&bundle.labels_path, labels)?;
    write_task_spec(&bundle.task_spec_path, groups)?;
    Ok(bundle)
}

/// Load a bundle into a task stream: assemble and validate the union
/// graph, slice per-task subgraphs by class membership, and draw the
/// 0.6/0.2/0.2 per-class splits from the given seed.
pub fn load_bundle(bundle: &DatasetBundle, seed: u64) -> Result<TaskStream> {
    let (n, feature_dim, features) = read_features(&bundle.features_path)?;
    let labels = read_labels(&bundle.labels_path)?;
    if labels.len() != n {
        return Err(TppError::InconsistentNodeCount {
            left_name: bundle.features_path.display().to_string(),
            left: n,
            right_name: bundle.labels_path.display().to_string(),
            right: labels.len(),
        });
    }
    let edges = read_edges(&bundle.edges_path)?;
    let groups = read_task_spec(&bundle.task_spec_path)?;
    let union = Graph::from_undirected_edges(n, feature_dim, &edges, features, Some(labels))?;
    stream_from_union(&union, &groups, seed, OrderingMode::Ascending)
}

// ---------------------------------------------------------------------
// Learned state
// ---------------------------------------------------------------------

pub fn save_pool(path: &Path, pool: &PrototypePool) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(POOL_MAGIC);
    for p in pool.iter() {
        push_u64(&mut buf, p.task_id as u64);
        push_u64(&mut buf, p.s_used as u64);
        push_u64(&mut buf, p.vector.len() as u64);
        push_f64s(&mut buf, &p.vector);
    }
    atomic_write(path, &buf)
}

pub fn load_pool(path: &Path) -> Result<PrototypePool> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(POOL_MAGIC)?;
    let mut pool = PrototypePool::new();
    while r.pos < r.bytes.len() {
        let task_id = r.u64()? as usize;
        let s_used = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let vector = r.f64_vec(dim)?;
        pool.push(TaskPrototype {
            task_id,
            vector,
            s_used,
        })?;
    }
    Ok(pool)
}

/// Backbones are persisted after pretraining, so loading returns them
/// frozen.
pub fn save_backbone(path: &Path, backbone: &SgcBackbone) -> Result<()> {
    let f = backbone.feature_dim();
    let d = backbone.hidden_dim();
    let mut buf = Vec::new();
    buf.extend_from_slice(BACKBONE_MAGIC);
    push_u64(&mut buf, f as u64);
    push_u64(&mut buf, d as u64);
    push_u64(&mut buf, backbone.steps_per_layer() as u64);
    push_f64s(&mut buf, backbone.w1().iter());
    push_f64s(&mut buf, backbone.w2().iter());
    atomic_write(path, &buf)
}

pub fn load_backbone(path: &Path) -> Result<SgcBackbone> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(BACKBONE_MAGIC)?;
    let f = r.u64()? as usize;
    let d = r.u64()? as usize;
    let steps = r.u64()? as usize;
    let w1 = matrix_f64(&mut r, f, d)?;
    let w2 = matrix_f64(&mut r, d, d)?;
    r.done()?;
    let mut backbone = SgcBackbone::from_weights(w1, w2, steps)?;
    backbone.freeze();
    Ok(backbone)
}

/// The class-id table after the header is the head's local-to-global map
/// (C little-endian u64 values), which generalizes a single offset to
/// class groups that are not contiguous under reordered streams.
pub fn save_artifacts(path: &Path, artifacts: &TaskArtifacts) -> Result<()> {
    let prompt = &artifacts.prompt;
    let head = &artifacts.head;
    let k = prompt.token_count();
    let f = prompt.feature_dim();
    let d = head.weight.nrows();
    let c = head.class_count();
    let mut buf = Vec::new();
    buf.extend_from_slice(ARTIFACT_MAGIC);
    push_u64(&mut buf, artifacts.task_id as u64);
    push_u64(&mut buf, k as u64);
    push_u64(&mut buf, f as u64);
    push_u64(&mut buf, d as u64);
    push_u64(&mut buf, c as u64);
    for &class in &head.class_map {
        push_u64(&mut buf, class as u64);
    }
    push_f64s(&mut buf, prompt.tokens().iter());
    push_f64s(&mut buf, prompt.projections().iter());
    push_f64s(&mut buf, head.weight.iter());
    push_f64s(&mut buf, &head.bias);
    atomic_write(path, &buf)
}

pub fn load_artifacts(path: &Path) -> Result<TaskArtifacts> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(ARTIFACT_MAGIC)?;
    let task_id = r.u64()? as usize;
    let k = r.u64()? as usize;
    let f = r.u64()? as usize;
    let d = r.u64()? as usize;
    let c = r.u64()? as usize;
    let mut class_map = Vec::with_capacity(c);
    for _ in 0..c {
        class_map.push(r.u64()? as u32);
    }
    let tokens = matrix_f64(&mut r, k, f)?;
    let projections = matrix_f64(&mut r, k, f)?;
    let weight = matrix_f64(&mut r, d, c)?;
    let bias = r.f64_vec(c)?;
    r.done()?;
    Ok(TaskArtifacts {
        task_id,
        prompt: GraphPrompt::from_parts(tokens, projections)?,
        head: ClassifierHead {
            weight,
            bias,
            class_map,
        },
        class_mean_readout: None,
    })
}

// ---------------------------------------------------------------------
// Run results
// ---------------------------------------------------------------------

/// Persist a run: `result.json` (the deterministic document), `matrix.csv`
/// (the accuracy matrix), and `timings.txt` (wall-clock per phase, kept
/// out of the deterministic document on purpose).
pub fn save_run_result(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| TppError::InvalidConfig(format!("serialize run result: {e}")))?;
    atomic_write(&dir.join("result.json"), json.as_bytes())?;

    let t = result.matrix.size();
    let mut csv = String::from("after_task");
    for j in 1..=t {
        csv.push_str(&format!(",task_{j}"));
    }
    csv.push('\n');
    for row in 1..=t {
        csv.push_str(&row.to_string());
        for j in 1..=t {
            csv.push(',');
            if let Some(v) = result.matrix.get(row - 1, j - 1) {
                csv.push_str(&format!("{v}"));
            }
        }
        csv.push('\n');
    }
    atomic_write(&dir.join("matrix.csv"), csv.as_bytes())?;

    let mut timings = String::new();
    for (name, secs) in &result.phase_seconds {
        timings.push_str(&format!("{name}\t{secs:.6}\n"));
    }
    atomic_write(&dir.join("timings.txt"), timings.as_bytes())?;
    Ok(())
}

/// Load `result.json` from a run directory and recompute AA/AF from the
/// stored matrix; a disagreement with the stored values is an error.
pub fn load_run_result(dir: &Path) -> Result<RunResult> {
    let path = dir.join("result.json");
    let mut text = String::new();
    fs::File::open(&path)?.read_to_string(&mut text)?;
    let result: RunResult =
        serde_json::from_str(&text).map_err(|e| malformed(&path, e.to_string()))?;
    let (aa, af) = compute_metrics(&result.matrix)?;
    let af_matches = match (af, result.average_forgetting) {
        (_, None) => true, // joint-style results report forgetting as n/a
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, Some(_)) => false,
    };
    if (aa - result.average_accuracy).abs() > 1e-12 || !af_matches {
        return Err(malformed(
            &path,
            format!(
                "stored metrics (AA {}, AF {:?}) disagree with recomputation (AA {aa}, AF {af:?})",
                result.average_accuracy, result.average_forgetting
            ),
        ));
    }
    Ok(result)
}

/// Convenience for tests and the CLI: write bytes with std::io semantics.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())
}

/// Print-and-save helper for benchmark tables.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::OrderingMode;
    use crate::synth::{generate_union_graph, SbmSpec};

    #[test]
    fn features_round_trip_and_reject_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        write_features(&path, 4, 3, &data).unwrap();
        let (n, f, back) = read_features(&path).unwrap();
        assert_eq!((n, f), (4, 3));
        assert_eq!(back, data);

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        match read_features(&path) {
            Err(TppError::MalformedFile { reason, .. }) => {
                assert!(reason.contains("magic"), "{reason}")
            }
            other => panic!("expected malformed file, got {other:?}"),
        }
    }

    #[test]
    fn bundle_round_trip_reproduces_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SbmSpec {
            tasks: 3,
            nodes_per_class: 20,
            ..SbmSpec::default()
        };
        let (union, groups) = generate_union_graph(&spec, OrderingMode::Ascending).unwrap();
        let bundle = write_bundle(dir.path(), &union, &groups).unwrap();
        let loaded = load_bundle(&bundle, spec.seed).unwrap();
        let direct = crate::synth::generate_sbm_stream(&spec, OrderingMode::Ascending).unwrap();
        assert_eq!(loaded.len(), direct.len());
        for (a, b) in loaded.tasks.iter().zip(&direct.tasks) {
            assert_eq!(a.classes, b.classes);
            assert_eq!(a.graph.undirected_edges(), b.graph.undirected_edges());
            assert_eq!(a.graph.features_raw(), b.graph.features_raw());
            assert_eq!(a.graph.labels(), b.graph.labels());
            assert_eq!(a.splits.train, b.splits.train);
            assert_eq!(a.splits.test, b.splits.test);
        }
    }

    #[test]
    fn node_count_mismatch_names_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SbmSpec {
            tasks: 2,
            nodes_per_class: 10,
            ..SbmSpec::default()
        };
        let (union, groups) = generate_union_graph(&spec, OrderingMode::Ascending).unwrap();
        let bundle = write_bundle(dir.path(), &union, &groups).unwrap();
        // Truncate the labels file.
        let labels = read_labels(&bundle.labels_path).unwrap();
        write_labels(&bundle.labels_path, &labels[..labels.len() - 1]).unwrap();
        match load_bundle(&bundle, 1) {
            Err(TppError::InconsistentNodeCount { left, right, .. }) => {
                assert_eq!(left, union.node_count());
                assert_eq!(right, union.node_count() - 1);
            }
            other => panic!("expected InconsistentNodeCount, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_in_task_spec_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SbmSpec {
            tasks: 2,
            nodes_per_class: 10,
            ..SbmSpec::default()
        };
        let (union, groups) = generate_union_graph(&spec, OrderingMode::Ascending).unwrap();
        let bundle = write_bundle(dir.path(), &union, &groups).unwrap();
        write_task_spec(&bundle.task_spec_path, &[vec![0, 1], vec![2, 99]]).unwrap();
        assert!(matches!(
            load_bundle(&bundle, 1),
            Err(TppError::UnknownClass { label: 99 })
        ));
    }

    #[test]
    fn pool_persistence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.bin");
        let mut pool = PrototypePool::new();
        for id in 1..=3 {
            pool.push(TaskPrototype {
                task_id: id,
                vector: (0..4).map(|c| id as f64 * 0.25 + c as f64).collect(),
                s_used: 3,
            })
            .unwrap();
        }
        save_pool(&path, &pool).unwrap();
        let back = load_pool(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(pool.iter()) {
            assert_eq!(a, b);
        }
        // Header check.
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"TPPPOOL1");
    }

    #[test]
    fn backbone_persistence_round_trips_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backbone.bin");
        let mut backbone = SgcBackbone::init(5, 4, 1, 33);
        backbone.freeze();
        save_backbone(&path, &backbone).unwrap();
        let back = load_backbone(&path).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.weights_hash(), backbone.weights_hash());
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..7], b"TPPBKB1");
    }

    #[test]
    fn artifacts_persistence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("task3.bin");
        let artifacts = TaskArtifacts {
            task_id: 3,
            prompt: GraphPrompt::init(3, 6, 0.01, 9),
            head: ClassifierHead::init(4, vec![7, 2], 5),
            class_mean_readout: None,
        };
        save_artifacts(&path, &artifacts).unwrap();
        let back = load_artifacts(&path).unwrap();
        assert_eq!(back.task_id, 3);
        assert_eq!(back.prompt, artifacts.prompt);
        assert_eq!(back.head, artifacts.head);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..7], b"TPPART1");
        // Non-contiguous class ids survive the round trip.
        assert_eq!(back.head.class_map, vec![7, 2]);
    }

    #[test]
    fn truncated_binary_is_malformed_not_panic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backbone.bin");
        let mut backbone = SgcBackbone::init(5, 4, 1, 33);
        backbone.freeze();
        save_backbone(&path, &backbone).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_backbone(&path),
            Err(TppError::MalformedFile { .. })
        ));
    }
}
