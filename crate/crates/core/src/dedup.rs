//! Duplicate detection for phase encodings.
//!
//! Many bit-strings decode to the same phase because every node carries the
//! same operation: renumbering nodes yields an isomorphic DAG. A phase is
//! reduced to its connectivity matrix over the active nodes plus a virtual
//! input (row 0) and virtual output (last row), and the canonical key is the
//! lexicographically smallest serialization of that matrix over all
//! simultaneous row/column permutations of the node block.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{decode_phase, phase_bit_len, NetworkGenome, PhaseGenome, PhaseGraph};

/// Largest `n_o` for which canonicalization enumerates all node permutations.
pub const MAX_CANONICAL_NODES: usize = 8;
/// Largest `n_o` accepted by [`redundancy_census`].
pub const MAX_CENSUS_NODES: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DedupError {
    #[error("canonicalization supports at most {max} nodes per phase, got {nodes}")]
    Unsupported { nodes: usize, max: usize },
    #[error("genomes have different shapes: {0}")]
    ConfigMismatch(String),
}

/// Signed adjacency over `[input, nodes.., output]`.
///
/// `get(i, j) == 1` means `j` feeds `i`; the mirrored entry is `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMatrix {
    size: usize,
    entries: Vec<i8>,
    pub skip: bool,
}

impl ConnectivityMatrix {
    /// Full matrix over all `n_o` nodes (inactive nodes keep all-zero rows).
    pub fn from_graph(graph: &PhaseGraph) -> Self {
        let size = graph.nodes + 2;
        let output = size - 1;
        let mut m = ConnectivityMatrix {
            size,
            entries: vec![0; size * size],
            skip: graph.skip,
        };
        for &(from, to) in &graph.edges {
            m.connect(from, to);
        }
        for &n in &graph.input_attached {
            m.connect(0, n);
        }
        for &n in &graph.output_attached {
            m.connect(n, output);
        }
        m
    }

    fn connect(&mut self, from: usize, to: usize) {
        self.entries[to * self.size + from] = 1;
        self.entries[from * self.size + to] = -1;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.size + col]
    }

    pub fn is_antisymmetric(&self) -> bool {
        (0..self.size).all(|i| (0..self.size).all(|j| self.get(i, j) == -self.get(j, i)))
    }
}

pub fn connectivity_matrix(p: &PhaseGenome) -> ConnectivityMatrix {
    ConnectivityMatrix::from_graph(&decode_phase(p))
}

/// Identifier of a phase-isomorphism class.
///
/// Layout: skip flag, active node count, then the strict lower triangle of the
/// minimal permuted matrix (entries shifted by one so they fit in a byte).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalPhaseKey(Vec<u8>);

impl CanonicalPhaseKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn skip(&self) -> bool {
        self.0[0] == 1
    }

    pub fn active_nodes(&self) -> usize {
        self.0[1] as usize
    }
}

impl fmt::Display for CanonicalPhaseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Canonical key of a whole network: phase keys in phase order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkKey(pub Vec<CanonicalPhaseKey>);

impl NetworkKey {
    /// Short stable hex digest, used in archive files and as a hashing seed.
    pub fn digest(&self) -> String {
        let bytes = self.digest_bytes();
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (i, k) in self.0.iter().enumerate() {
            hasher.update((i as u32).to_le_bytes());
            hasher.update((k.0.len() as u32).to_le_bytes());
            hasher.update(&k.0);
        }
        hasher.finalize().into()
    }
}

/// Canonical key of one phase.
pub fn canonical_phase(p: &PhaseGenome) -> Result<CanonicalPhaseKey, DedupError> {
    if p.nodes() > MAX_CANONICAL_NODES {
        return Err(DedupError::Unsupported {
            nodes: p.nodes(),
            max: MAX_CANONICAL_NODES,
        });
    }
    Ok(canonical_graph(&decode_phase(p)))
}

pub fn canonical_network(g: &NetworkGenome) -> Result<NetworkKey, DedupError> {
    g.phases()
        .iter()
        .map(canonical_phase)
        .collect::<Result<Vec<_>, _>>()
        .map(NetworkKey)
}

/// Whether two genomes decode to the same network, phase by phase in order.
pub fn is_duplicate(a: &NetworkGenome, b: &NetworkGenome) -> Result<bool, DedupError> {
    if a.phases().len() != b.phases().len() || a.nodes() != b.nodes() {
        return Err(DedupError::ConfigMismatch(format!(
            "{}x{} vs {}x{} (phases x nodes)",
            a.phases().len(),
            a.nodes(),
            b.phases().len(),
            b.nodes()
        )));
    }
    Ok(canonical_network(a)? == canonical_network(b)?)
}

/// Compact matrix over the active nodes only; index 0 is the input, `k + 1` the output.
struct ActiveMatrix {
    k: usize,
    size: usize,
    entries: Vec<i8>,
}

impl ActiveMatrix {
    fn new(graph: &PhaseGraph) -> Self {
        let ids: Vec<usize> = graph.active_nodes.iter().copied().collect();
        let k = ids.len();
        let size = k + 2;
        let pos = |id: usize| 1 + ids.binary_search(&id).expect("edge touches inactive node");
        let mut entries = vec![0i8; size * size];
        let mut connect = |from: usize, to: usize| {
            entries[to * size + from] = 1;
            entries[from * size + to] = -1;
        };
        for &(a, b) in &graph.edges {
            connect(pos(a), pos(b));
        }
        for &n in &graph.input_attached {
            connect(0, pos(n));
        }
        for &n in &graph.output_attached {
            connect(pos(n), size - 1);
        }
        ActiveMatrix { k, size, entries }
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.size + col]
    }
}

/// Lexicographically minimal lower triangle under node relabelling.
///
/// `order[p]` is the original matrix index placed at position `p`; positions 0
/// and `k + 1` stay pinned to input and output. Permutations are enumerated
/// position by position and a branch is abandoned as soon as its prefix
/// compares greater than the best serialization found so far.
fn canonical_graph(graph: &PhaseGraph) -> CanonicalPhaseKey {
    let m = ActiveMatrix::new(graph);
    let k = m.k;
    let size = m.size;
    let mut best: Vec<i8> = Vec::new();
    let mut current: Vec<i8> = Vec::with_capacity(size * (size - 1) / 2);
    let mut order: Vec<usize> = Vec::with_capacity(size);
    order.push(0);
    let mut used = vec![false; size];

    fn push_row(m: &ActiveMatrix, order: &[usize], row_orig: usize, current: &mut Vec<i8>) {
        for &col_orig in order {
            current.push(m.get(row_orig, col_orig));
        }
    }

    fn search(
        m: &ActiveMatrix,
        k: usize,
        order: &mut Vec<usize>,
        used: &mut [bool],
        current: &mut Vec<i8>,
        best: &mut Vec<i8>,
    ) {
        let last = order.len() == k + 1;
        let candidates = if last { k + 1..=k + 1 } else { 1..=k };
        for node in candidates {
            if !last && used[node] {
                continue;
            }
            let mark = current.len();
            push_row(m, order, node, current);
            // best only ever decreases, so a prefix above it can never win.
            let ord = if best.is_empty() {
                Ordering::Less
            } else {
                current[..].cmp(&best[..current.len()])
            };
            if last {
                if ord == Ordering::Less {
                    best.clear();
                    best.extend_from_slice(current);
                }
            } else if ord != Ordering::Greater {
                used[node] = true;
                order.push(node);
                search(m, k, order, used, current, best);
                order.pop();
                used[node] = false;
            }
            current.truncate(mark);
        }
    }

    search(&m, k, &mut order, &mut used, &mut current, &mut best);

    let mut bytes = Vec::with_capacity(best.len() + 2);
    bytes.push(graph.skip as u8);
    bytes.push(k as u8);
    bytes.extend(best.iter().map(|v| (v + 1) as u8));
    CanonicalPhaseKey(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub nodes: usize,
    pub total: u64,
    pub unique: u64,
}

impl CensusRow {
    pub fn ratio(&self) -> f64 {
        self.unique as f64 / self.total as f64
    }
}

/// Enumerate every phase string for `nodes` nodes and count distinct canonical keys.
pub fn redundancy_census(nodes: usize) -> Result<CensusRow, DedupError> {
    if !(2..=MAX_CENSUS_NODES).contains(&nodes) {
        return Err(DedupError::Unsupported {
            nodes,
            max: MAX_CENSUS_NODES,
        });
    }
    let total = 1u64 << phase_bit_len(nodes);
    let mut keys: Vec<CanonicalPhaseKey> = (0..total)
        .into_par_iter()
        .map(|v| canonical_graph(&decode_phase(&PhaseGenome::from_index(nodes, v))))
        .collect();
    keys.par_sort_unstable();
    keys.dedup();
    Ok(CensusRow {
        nodes,
        total,
        unique: keys.len() as u64,
    })
}
