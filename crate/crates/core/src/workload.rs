//! Workload description: sequences of GEMM operators.
//!
//! Every operator is a dense GEMM `A (M x K) * B (K x N) -> out (M x N)`.
//! Convolutions are lowered to GEMMs with the usual im2col mapping at load
//! time, so the rest of the crate only ever sees GEMM shapes. A sequence
//! may mark an operator as *chained* to its predecessor, meaning its `A`
//! input is the predecessor's output (which requires `N_prev == K`); chained
//! pairs are the candidates for on-package output redistribution.
//!
//! Workload files are TOML with one `[[op]]` table per operator, using
//! either GEMM shape keys (`m`, `k`, `n`) or conv shape keys (`cout`,
//! `cin`, `kh`, `kw`, `hout`, `wout`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One GEMM operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmOp {
    pub name: String,
    /// Output rows.
    pub m: u64,
    /// Contraction depth.
    pub k: u64,
    /// Output columns.
    pub n: u64,
    /// Whether the operator's output must be synchronized across chiplets
    /// (softmax/normalization boundaries). Synchronizing operators carry no
    /// arithmetic of their own here; the flag only forbids overlapping this
    /// operator's boundary when composing latencies.
    #[serde(default)]
    pub sync: bool,
    /// Output rows are replicated across the chiplets of each grid row.
    #[serde(default)]
    pub shared_row: bool,
    /// Output columns are replicated across the chiplets of each grid column.
    #[serde(default)]
    pub shared_col: bool,
    /// Element width in bytes.
    #[serde(default = "default_bpe")]
    pub bytes_per_element: u32,
}

fn default_bpe() -> u32 {
    1
}

impl GemmOp {
    pub fn new(name: &str, m: u64, k: u64, n: u64) -> Self {
        GemmOp {
            name: name.to_string(),
            m,
            k,
            n,
            sync: false,
            shared_row: false,
            shared_col: false,
            bytes_per_element: 1,
        }
    }

    /// Bytes of the `A` operand (M x K).
    pub fn a_bytes(&self) -> u64 {
        self.m * self.k * u64::from(self.bytes_per_element)
    }

    /// Bytes of the `B` operand (K x N).
    pub fn b_bytes(&self) -> u64 {
        self.k * self.n * u64::from(self.bytes_per_element)
    }

    /// Bytes of the output (M x N).
    pub fn out_bytes(&self) -> u64 {
        self.m * self.n * u64::from(self.bytes_per_element)
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::InvalidWorkload(format!(
                "op '{}' has a zero dimension ({}, {}, {})",
                self.name, self.m, self.k, self.n
            )));
        }
        if self.bytes_per_element == 0 {
            return Err(Error::InvalidWorkload(format!(
                "op '{}' has zero bytes_per_element",
                self.name
            )));
        }
        if self.shared_row && self.shared_col {
            return Err(Error::InvalidWorkload(format!(
                "op '{}' cannot be both row- and column-shared",
                self.name
            )));
        }
        Ok(())
    }
}

/// An ordered operator sequence with chain structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskSequence {
    pub ops: Vec<GemmOp>,
    /// `chain_prev[i]` is true when op `i` consumes op `i-1`'s output as its
    /// `A` operand; index 0 is always false.
    pub chain_prev: Vec<bool>,
}

impl TaskSequence {
    /// Builds and validates a sequence.
    pub fn new(ops: Vec<GemmOp>, chain_prev: Vec<bool>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidWorkload("task has no operators".into()));
        }
        if ops.len() != chain_prev.len() {
            return Err(Error::InvalidWorkload(format!(
                "{} ops but {} chain flags",
                ops.len(),
                chain_prev.len()
            )));
        }
        if chain_prev[0] {
            return Err(Error::InvalidWorkload(
                "first operator cannot be chained to a predecessor".into(),
            ));
        }
        for op in &ops {
            op.validate()?;
        }
        for i in 1..ops.len() {
            if chain_prev[i] && ops[i - 1].n != ops[i].k {
                return Err(Error::NotChained(format!(
                    "'{}' (N = {}) feeds '{}' (K = {})",
                    ops[i - 1].name,
                    ops[i - 1].n,
                    ops[i].name,
                    ops[i].k
                )));
            }
        }
        Ok(TaskSequence { ops, chain_prev })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Indices `i` such that ops `i` and `i+1` form a chained pair.
    pub fn chained_pairs(&self) -> Vec<usize> {
        (1..self.ops.len())
            .filter(|&i| self.chain_prev[i])
            .map(|i| i - 1)
            .collect()
    }
}

/// Batch size for pipelined execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub samples: usize,
}

impl BatchSpec {
    pub fn new(samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidWorkload("batch must be at least 1".into()));
        }
        Ok(BatchSpec { samples })
    }
}

/// im2col lowering of a convolution to GEMM shape:
/// `M = Hout * Wout`, `K = Cin * kh * kw`, `N = Cout`.
pub fn conv_to_gemm(cout: u64, cin: u64, kh: u64, kw: u64, hout: u64, wout: u64) -> (u64, u64, u64) {
    (hout * wout, cin * kh * kw, cout)
}

/// Raw TOML form of one operator entry; either GEMM or conv shape keys.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOp {
    name: String,
    m: Option<u64>,
    k: Option<u64>,
    n: Option<u64>,
    cout: Option<u64>,
    cin: Option<u64>,
    kh: Option<u64>,
    kw: Option<u64>,
    hout: Option<u64>,
    wout: Option<u64>,
    #[serde(default)]
    sync: bool,
    #[serde(default)]
    shared_row: bool,
    #[serde(default)]
    shared_col: bool,
    bytes_per_element: Option<u32>,
    #[serde(default)]
    chain_prev: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    bytes_per_element: Option<u32>,
    #[serde(default)]
    op: Vec<RawOp>,
}

/// Parses a workload from TOML text. Conv entries are lowered immediately,
/// so the returned sequence contains only GEMM shapes.
pub fn parse_task(text: &str) -> Result<TaskSequence> {
    let raw: RawTask = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let default_bpe = raw.bytes_per_element.unwrap_or(1);
    let mut ops = Vec::with_capacity(raw.op.len());
    let mut chain = Vec::with_capacity(raw.op.len());
    for r in raw.op {
        let (m, k, n) = match (r.m, r.k, r.n) {
            (Some(m), Some(k), Some(n)) => (m, k, n),
            (None, None, None) => match (r.cout, r.cin, r.kh, r.kw, r.hout, r.wout) {
                (Some(cout), Some(cin), Some(kh), Some(kw), Some(hout), Some(wout)) => {
                    conv_to_gemm(cout, cin, kh, kw, hout, wout)
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "op '{}' needs either m/k/n or cout/cin/kh/kw/hout/wout",
                        r.name
                    )))
                }
            },
            _ => {
                return Err(Error::Parse(format!(
                    "op '{}' mixes partial GEMM and conv shape keys",
                    r.name
                )))
            }
        };
        ops.push(GemmOp {
            name: r.name,
            m,
            k,
            n,
            sync: r.sync,
            shared_row: r.shared_row,
            shared_col: r.shared_col,
            bytes_per_element: r.bytes_per_element.unwrap_or(default_bpe),
        });
        chain.push(r.chain_prev);
    }
    TaskSequence::new(ops, chain)
}

/// Loads a workload file; see [`parse_task`].
pub fn load_task(path: &Path) -> Result<TaskSequence> {
    let text = std::fs::read_to_string(path)?;
    parse_task(&text)
}

/// Serializes a sequence back to the file format (GEMM shape keys only).
/// `parse_task` on the result reproduces the sequence exactly.
pub fn to_toml_string(task: &TaskSequence) -> String {
    let mut out = String::new();
    for (op, &chained) in task.ops.iter().zip(&task.chain_prev) {
        out.push_str("[[op]]\n");
        out.push_str(&format!("name = {:?}\n", op.name));
        out.push_str(&format!("m = {}\nk = {}\nn = {}\n", op.m, op.k, op.n));
        out.push_str(&format!("sync = {}\n", op.sync));
        out.push_str(&format!("shared_row = {}\n", op.shared_row));
        out.push_str(&format!("shared_col = {}\n", op.shared_col));
        out.push_str(&format!("bytes_per_element = {}\n", op.bytes_per_element));
        out.push_str(&format!("chain_prev = {}\n\n", chained));
    }
    out
}

/// A synthetic chain of `count` square GEMMs of side `dim`, every
/// consecutive pair chained.
pub fn gemm_chain(count: usize, dim: u64) -> TaskSequence {
    let ops = (0..count)
        .map(|i| GemmOp::new(&format!("gemm{i}"), dim, dim, dim))
        .collect::<Vec<_>>();
    let chain = (0..count).map(|i| i > 0).collect();
    TaskSequence::new(ops, chain).expect("synthetic chain is always valid")
}

/// Desk-scale bundled workloads, keyed by name:
///
/// * `alexnet-mini` — five pointwise conv GEMMs plus three per-position FC
///   GEMMs, fully sequential (every consecutive pair chained), every matrix
///   at most one million elements;
/// * `vit-block` — one transformer block: QKV projections, attention
///   score/apply (synchronizing), output projection, and a chained MLP pair;
/// * `gemm-chain-2`, `gemm-chain-4` — synthetic square chains of side 64.
pub fn bundled_tasks() -> BTreeMap<String, TaskSequence> {
    let mut map = BTreeMap::new();

    // Convolution channel chain, lowered through the same im2col mapping as
    // file loading. Pointwise kernels keep the spatial extent constant so
    // every consecutive pair chains.
    let spatial = 28u64;
    let channels = [16u64, 96, 256, 384, 384, 256];
    let mut ops = Vec::new();
    for i in 0..5 {
        let (m, k, n) = conv_to_gemm(channels[i + 1], channels[i], 1, 1, spatial, spatial);
        ops.push(GemmOp::new(&format!("conv{}", i + 1), m, k, n));
    }
    for (i, &(k, n)) in [(256u64, 512u64), (512, 512), (512, 16)].iter().enumerate() {
        ops.push(GemmOp::new(&format!("fc{}", i + 1), spatial * spatial, k, n));
    }
    let chain = (0..ops.len()).map(|i| i > 0).collect();
    map.insert(
        "alexnet-mini".to_string(),
        TaskSequence::new(ops, chain).expect("bundled chain is valid"),
    );

    // One transformer block at sequence length 64, width 64, MLP expansion 4.
    let (seq, d) = (64u64, 64u64);
    let mut ops = vec![
        GemmOp::new("q-proj", seq, d, d),
        GemmOp::new("k-proj", seq, d, d),
        GemmOp::new("v-proj", seq, d, d),
        GemmOp::new("attn-scores", seq, d, seq),
        GemmOp::new("attn-out", seq, seq, d),
        GemmOp::new("out-proj", seq, d, d),
        GemmOp::new("mlp-up", seq, d, 4 * d),
        GemmOp::new("mlp-down", seq, 4 * d, d),
    ];
    // Softmax sits after the scores and the head merge after the weighted
    // sum; both synchronize. Head outputs are replicated row-wise.
    ops[3].sync = true;
    ops[3].shared_row = true;
    ops[4].sync = true;
    ops[4].shared_row = true;
    let chain = vec![false, false, false, false, true, true, true, true];
    map.insert(
        "vit-block".to_string(),
        TaskSequence::new(ops, chain).expect("bundled block is valid"),
    );

    map.insert("gemm-chain-2".to_string(), gemm_chain(2, 64));
    map.insert("gemm-chain-4".to_string(), gemm_chain(4, 64));
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_lowering_examples() {
        assert_eq!(conv_to_gemm(96, 3, 11, 11, 55, 55), (3025, 363, 96));
        assert_eq!(conv_to_gemm(16, 8, 3, 3, 8, 8), (64, 72, 16));
    }

    #[test]
    fn parse_gemm_and_conv_forms() {
        let text = r#"
            bytes_per_element = 2

            [[op]]
            name = "conv"
            cout = 16
            cin = 8
            kh = 3
            kw = 3
            hout = 8
            wout = 8

            [[op]]
            name = "fc"
            m = 64
            k = 16
            n = 32
            chain_prev = true
        "#;
        let task = parse_task(text).unwrap();
        assert_eq!(task.ops[0].m, 64);
        assert_eq!(task.ops[0].k, 72);
        assert_eq!(task.ops[0].n, 16);
        assert_eq!(task.ops[0].bytes_per_element, 2);
        assert!(task.chain_prev[1]);
        assert_eq!(task.chained_pairs(), vec![0]);
    }

    #[test]
    fn serialization_round_trips() {
        let original = bundled_tasks().remove("vit-block").unwrap();
        let text = to_toml_string(&original);
        let reparsed = parse_task(&text).unwrap();
        assert_eq!(original, reparsed);
    }

    #[test]
    fn chain_requires_matching_shapes() {
        let ops = vec![GemmOp::new("a", 8, 8, 32), GemmOp::new("b", 8, 64, 8)];
        let err = TaskSequence::new(ops, vec![false, true]).unwrap_err();
        assert!(err.to_string().contains("N = 32"));
    }

    #[test]
    fn shared_flags_are_exclusive() {
        let mut op = GemmOp::new("a", 8, 8, 8);
        op.shared_row = true;
        op.shared_col = true;
        assert!(TaskSequence::new(vec![op], vec![false]).is_err());
    }

    #[test]
    fn zero_dimension_rejected() {
        let op = GemmOp::new("a", 0, 8, 8);
        assert!(TaskSequence::new(vec![op], vec![false]).is_err());
    }

    #[test]
    fn bundled_alexnet_mini_is_fully_sequential_and_desk_scale() {
        let task = &bundled_tasks()["alexnet-mini"];
        assert_eq!(task.len(), 8);
        assert!(task.chain_prev[1..].iter().all(|&c| c));
        for op in &task.ops {
            assert!(op.m * op.k <= 1_000_000, "{} A too large", op.name);
            assert!(op.k * op.n <= 1_000_000, "{} B too large", op.name);
            assert!(op.m * op.n <= 1_000_000, "{} out too large", op.name);
        }
    }

    #[test]
    fn bundled_vit_block_structure() {
        let task = &bundled_tasks()["vit-block"];
        assert_eq!(task.len(), 8);
        let scores = task.ops.iter().find(|o| o.name == "attn-scores").unwrap();
        let attn_out = task.ops.iter().find(|o| o.name == "attn-out").unwrap();
        assert!(scores.sync && attn_out.sync);
        // The MLP pair is chained.
        assert!(task.chain_prev[7]);
        assert_eq!(task.ops[6].n, task.ops[7].k);
    }

    #[test]
    fn bundled_gemm_chains() {
        let task = &bundled_tasks()["gemm-chain-4"];
        assert_eq!(task.len(), 4);
        assert!(task.chain_prev[1..].iter().all(|&c| c));
        assert_eq!(gemm_chain(3, 32).chained_pairs(), vec![0, 1]);
    }

    #[test]
    fn batch_spec_requires_at_least_one_sample() {
        assert!(BatchSpec::new(0).is_err());
        assert_eq!(BatchSpec::new(4).unwrap().samples, 4);
    }
}
