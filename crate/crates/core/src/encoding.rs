//! Phase-wise binary genotype, its textual form and decoding to phase DAGs.
//!
//! A network is a sequence of phases. Each phase is a bit-string over `n_o`
//! nodes: for node `i` (1-based, `i >= 2`) a group of `i - 1` bits says which
//! of the nodes `1..i` feed into it, groups are concatenated in node order and
//! a final bit marks the phase-level input-to-output skip connection.
//!
//! ```text
//! 1-01-001-0001-00001-1    (n_o = 6, 16 bits)
//! ```
//!
//! Spatial resolution is fixed per phase and never searched.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kernel size of every node's convolution.
pub const NODE_KERNEL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("invalid encoding config: {0}")]
    InvalidConfig(String),
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("genome has {found} phases, expected {expected}")]
    PhaseCount { expected: usize, found: usize },
    #[error("phase length {found} bits does not match {expected} bits")]
    PhaseLength { expected: usize, found: usize },
    #[error("search space size overflows for n_p = {phases}, n_o = {nodes}")]
    Overflow { phases: usize, nodes: usize },
}

/// Number of bits in one phase string for `nodes` nodes (connection bits plus the skip bit).
pub fn phase_bit_len(nodes: usize) -> usize {
    nodes * (nodes - 1) / 2 + 1
}

/// Index of the connection bit `from -> to` (1-based nodes, `from < to`) inside a phase string.
fn connection_index(from: usize, to: usize) -> usize {
    debug_assert!(from >= 1 && from < to);
    (to - 1) * (to - 2) / 2 + (from - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Number of phases (`n_p`).
    pub phases: usize,
    /// Nodes per phase (`n_o`).
    pub nodes: usize,
    /// Spatial size (pixels per side) of each phase, non-increasing.
    pub resolution_schedule: Vec<u64>,
    /// Channels per node during search.
    pub channel_width: u64,
    /// Channels of the tensor entering phase 1.
    pub input_channels: u64,
    /// Pixels per side entering phase 1.
    pub input_resolution: u64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig::halving(3, 6, 32, 3, 16)
    }
}

impl EncodingConfig {
    /// Config where a stride-2 pooling sits between consecutive phases, so phase `i`
    /// runs at `input_resolution / 2^i`.
    pub fn halving(
        phases: usize,
        nodes: usize,
        input_resolution: u64,
        input_channels: u64,
        channel_width: u64,
    ) -> Self {
        let resolution_schedule = (0..phases)
            .map(|i| (input_resolution >> i.min(63)).max(1))
            .collect();
        EncodingConfig {
            phases,
            nodes,
            resolution_schedule,
            channel_width,
            input_channels,
            input_resolution,
        }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.phases < 1 {
            return Err(EncodingError::InvalidConfig(
                "n_p must be at least 1".into(),
            ));
        }
        if self.nodes < 2 {
            return Err(EncodingError::InvalidConfig(
                "n_o must be at least 2".into(),
            ));
        }
        if self.resolution_schedule.len() != self.phases {
            return Err(EncodingError::InvalidConfig(format!(
                "resolution schedule has {} entries, expected {}",
                self.resolution_schedule.len(),
                self.phases
            )));
        }
        if self.resolution_schedule.windows(2).any(|w| w[1] > w[0]) {
            return Err(EncodingError::InvalidConfig(
                "resolution schedule must be non-increasing".into(),
            ));
        }
        if self.resolution_schedule.contains(&0) {
            return Err(EncodingError::InvalidConfig(
                "resolutions must be positive".into(),
            ));
        }
        if self.channel_width == 0 || self.input_channels == 0 {
            return Err(EncodingError::InvalidConfig(
                "channel counts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn phase_bits(&self) -> usize {
        phase_bit_len(self.nodes)
    }

    pub fn genome_bits(&self) -> usize {
        self.phases * self.phase_bits()
    }
}

/// Bit-string of a single phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseGenome {
    nodes: usize,
    bits: Vec<bool>,
}

impl PhaseGenome {
    pub fn new(nodes: usize, bits: Vec<bool>) -> Result<Self, EncodingError> {
        if nodes < 2 {
            return Err(EncodingError::InvalidConfig(
                "n_o must be at least 2".into(),
            ));
        }
        let expected = phase_bit_len(nodes);
        if bits.len() != expected {
            return Err(EncodingError::PhaseLength {
                expected,
                found: bits.len(),
            });
        }
        Ok(PhaseGenome { nodes, bits })
    }

    pub fn zeros(nodes: usize) -> Self {
        PhaseGenome {
            nodes,
            bits: vec![false; phase_bit_len(nodes)],
        }
    }

    /// Phase whose bits are the binary digits of `value`, bit 0 first.
    pub fn from_index(nodes: usize, value: u64) -> Self {
        let len = phase_bit_len(nodes);
        let bits = (0..len).map(|i| (value >> i) & 1 == 1).collect();
        PhaseGenome { nodes, bits }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn skip(&self) -> bool {
        self.bits[self.bits.len() - 1]
    }

    /// Whether node `from` feeds node `to` (1-based).
    pub fn connected(&self, from: usize, to: usize) -> bool {
        self.bits[connection_index(from, to)]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Phase with the given edge set and skip flag. Node ids are 1-based.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)], skip: bool) -> Self {
        let mut phase = PhaseGenome::zeros(nodes);
        for &(from, to) in edges {
            assert!(
                from >= 1 && from < to && to <= nodes,
                "edge {from}->{to} out of range"
            );
            phase.bits[connection_index(from, to)] = true;
        }
        let last = phase.bits.len() - 1;
        phase.bits[last] = skip;
        phase
    }

    fn write_text(&self, out: &mut String) {
        let mut pos = 0;
        for group in 1..self.nodes {
            if group > 1 {
                out.push('-');
            }
            for _ in 0..group {
                out.push(if self.bits[pos] { '1' } else { '0' });
                pos += 1;
            }
        }
        out.push('-');
        out.push(if self.skip() { '1' } else { '0' });
    }
}

impl fmt::Display for PhaseGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::with_capacity(self.bits.len() * 2);
        self.write_text(&mut s);
        f.write_str(&s)
    }
}

/// The full genotype: one bit-string per phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkGenome {
    phases: Vec<PhaseGenome>,
}

impl NetworkGenome {
    pub fn new(phases: Vec<PhaseGenome>) -> Result<Self, EncodingError> {
        let Some(first) = phases.first() else {
            return Err(EncodingError::PhaseCount {
                expected: 1,
                found: 0,
            });
        };
        let expected = first.bits.len();
        if let Some(bad) = phases.iter().find(|p| p.bits.len() != expected) {
            return Err(EncodingError::PhaseLength {
                expected,
                found: bad.bits.len(),
            });
        }
        Ok(NetworkGenome { phases })
    }

    /// Rebuild a genome from a flat bit vector laid out phase after phase.
    pub fn from_flat_bits(nodes: usize, bits: &[bool]) -> Result<Self, EncodingError> {
        let per_phase = phase_bit_len(nodes);
        if bits.is_empty() || !bits.len().is_multiple_of(per_phase) {
            return Err(EncodingError::PhaseLength {
                expected: per_phase,
                found: bits.len(),
            });
        }
        let phases = bits
            .chunks(per_phase)
            .map(|chunk| PhaseGenome {
                nodes,
                bits: chunk.to_vec(),
            })
            .collect();
        NetworkGenome::new(phases)
    }

    pub fn phases(&self) -> &[PhaseGenome] {
        &self.phases
    }

    pub fn nodes(&self) -> usize {
        self.phases[0].nodes
    }

    pub fn flat_bits(&self) -> Vec<bool> {
        self.phases
            .iter()
            .flat_map(|p| p.bits.iter().copied())
            .collect()
    }

    pub fn bit_len(&self) -> usize {
        self.phases.len() * self.phases[0].bits.len()
    }

    pub fn ones(&self) -> usize {
        self.phases.iter().map(PhaseGenome::ones).sum()
    }

    pub fn hamming(&self, other: &NetworkGenome) -> usize {
        self.phases
            .iter()
            .zip(&other.phases)
            .flat_map(|(a, b)| a.bits.iter().zip(&b.bits))
            .filter(|(x, y)| x != y)
            .count()
    }

    pub fn matches(&self, cfg: &EncodingConfig) -> bool {
        self.phases.len() == cfg.phases && self.nodes() == cfg.nodes
    }

    pub fn check_config(&self, cfg: &EncodingConfig) -> Result<(), EncodingError> {
        if self.phases.len() != cfg.phases {
            return Err(EncodingError::PhaseCount {
                expected: cfg.phases,
                found: self.phases.len(),
            });
        }
        if self.nodes() != cfg.nodes {
            return Err(EncodingError::PhaseLength {
                expected: cfg.phase_bits(),
                found: self.phases[0].bits.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for NetworkGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_genome(self))
    }
}

/// Parse the dash/space separated textual genome.
pub fn parse_genome(text: &str, cfg: &EncodingConfig) -> Result<NetworkGenome, EncodingError> {
    let genome = parse_genome_inferred(text)?;
    if genome.phases.len() != cfg.phases {
        return Err(EncodingError::PhaseCount {
            expected: cfg.phases,
            found: genome.phases.len(),
        });
    }
    if genome.nodes() != cfg.nodes {
        // Report where the first phase diverges from the expected grouping.
        return Err(group_mismatch(text, cfg.nodes));
    }
    Ok(genome)
}

/// Parse a genome, inferring `n_p` from the phase count and `n_o` from the
/// number of dash groups in the first phase.
pub fn parse_genome_inferred(text: &str) -> Result<NetworkGenome, EncodingError> {
    if text.is_empty() {
        return Err(EncodingError::Parse {
            position: 0,
            message: "empty genome string".into(),
        });
    }
    if let Some((pos, c)) = text
        .char_indices()
        .find(|(_, c)| !matches!(c, '0' | '1' | '-' | ' '))
    {
        return Err(EncodingError::Parse {
            position: pos,
            message: format!("illegal character {c:?}"),
        });
    }

    let mut phases = Vec::new();
    let mut start = 0;
    let mut nodes: Option<usize> = None;
    for part in text.split(' ') {
        if part.is_empty() {
            return Err(EncodingError::Parse {
                position: start,
                message: "empty phase (phases are separated by exactly one space)".into(),
            });
        }
        let phase = parse_phase(part, start, nodes)?;
        nodes.get_or_insert(phase.nodes);
        phases.push(phase);
        start += part.len() + 1;
    }
    NetworkGenome::new(phases)
}

fn parse_phase(
    part: &str,
    offset: usize,
    expected_nodes: Option<usize>,
) -> Result<PhaseGenome, EncodingError> {
    let groups: Vec<&str> = part.split('-').collect();
    let group_count = groups.len();
    if group_count < 2 {
        return Err(EncodingError::Parse {
            position: offset,
            message: "a phase needs at least one node group and the skip-bit group".into(),
        });
    }
    let nodes = group_count;
    if let Some(expected) = expected_nodes {
        if nodes != expected {
            return Err(EncodingError::Parse {
                position: offset,
                message: format!(
                    "phase has {} groups, expected {} (n_o = {expected})",
                    group_count, expected
                ),
            });
        }
    }
    let mut bits = Vec::with_capacity(phase_bit_len(nodes));
    let mut pos = offset;
    for (g, group) in groups.iter().enumerate() {
        // Groups 0..n_o-2 hold g+1 connection bits; the final group is the skip bit.
        let expected_len = if g + 1 == group_count { 1 } else { g + 1 };
        if group.len() != expected_len {
            return Err(EncodingError::Parse {
                position: pos,
                message: format!(
                    "group {} has {} bits, expected {}",
                    g + 1,
                    group.len(),
                    expected_len
                ),
            });
        }
        bits.extend(group.bytes().map(|b| b == b'1'));
        pos += group.len() + 1;
    }
    PhaseGenome::new(nodes, bits)
}

fn group_mismatch(text: &str, nodes: usize) -> EncodingError {
    let mut pos = 0;
    for (g, group) in text.split(' ').next().unwrap_or("").split('-').enumerate() {
        let expected_len = if g + 1 == nodes { 1 } else { g + 1 };
        if g >= nodes || group.len() != expected_len {
            return EncodingError::Parse {
                position: pos,
                message: format!(
                    "group {} has {} bits, expected {} for n_o = {nodes}",
                    g + 1,
                    group.len(),
                    if g >= nodes { 0 } else { expected_len }
                ),
            };
        }
        pos += group.len() + 1;
    }
    EncodingError::Parse {
        position: pos.saturating_sub(1),
        message: format!("missing groups for n_o = {nodes} (the last group is the skip bit)"),
    }
}

pub fn format_genome(g: &NetworkGenome) -> String {
    let mut out = String::with_capacity(g.bit_len() * 2);
    for (i, phase) in g.phases.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        phase.write_text(&mut out);
    }
    out
}

/// Decoded DAG of one phase. Node ids are the 1-based positions from the genome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseGraph {
    pub nodes: usize,
    pub active_nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    pub input_attached: BTreeSet<usize>,
    pub output_attached: BTreeSet<usize>,
    pub skip: bool,
}

impl PhaseGraph {
    /// No active nodes: the phase is either an identity (skip set) or a
    /// degenerate pass-through; both cost nothing.
    pub fn is_pass_through(&self) -> bool {
        self.active_nodes.is_empty()
    }

    /// Edges plus input and output attachments.
    pub fn connection_count(&self) -> usize {
        self.edges.len() + self.input_attached.len() + self.output_attached.len()
    }
}

pub fn decode_phase(p: &PhaseGenome) -> PhaseGraph {
    let n = p.nodes;
    let mut has_in = vec![false; n + 1];
    let mut has_out = vec![false; n + 1];
    let mut edges = BTreeSet::new();
    for to in 2..=n {
        for from in 1..to {
            if p.connected(from, to) {
                edges.insert((from, to));
                has_in[to] = true;
                has_out[from] = true;
            }
        }
    }
    let active_nodes: BTreeSet<usize> = (1..=n).filter(|&i| has_in[i] || has_out[i]).collect();
    let input_attached = active_nodes
        .iter()
        .copied()
        .filter(|&i| !has_in[i])
        .collect();
    let output_attached = active_nodes
        .iter()
        .copied()
        .filter(|&i| !has_out[i])
        .collect();
    PhaseGraph {
        nodes: n,
        active_nodes,
        edges,
        input_attached,
        output_attached,
        skip: p.skip(),
    }
}

/// The fixed per-node operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOp {
    pub kernel: u64,
    pub batch_norm: bool,
    pub relu: bool,
}

impl Default for NodeOp {
    fn default() -> Self {
        NodeOp {
            kernel: NODE_KERNEL,
            batch_norm: true,
            relu: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    pub phases: Vec<PhaseGraph>,
    pub resolutions: Vec<u64>,
    pub node_op: NodeOp,
    pub channel_width: u64,
    pub input_channels: u64,
}

impl NetworkArchitecture {
    pub fn active_nodes(&self) -> usize {
        self.phases.iter().map(|p| p.active_nodes.len()).sum()
    }

    pub fn active_connections(&self) -> usize {
        self.phases.iter().map(PhaseGraph::connection_count).sum()
    }

    /// Structured graph document: nodes, edges, per-phase resolution and channels.
    pub fn to_json(&self) -> serde_json::Value {
        let phases: Vec<serde_json::Value> = self
            .phases
            .iter()
            .zip(&self.resolutions)
            .enumerate()
            .map(|(i, (p, res))| {
                serde_json::json!({
                    "phase": i + 1,
                    "resolution": res,
                    "channels": self.channel_width,
                    "nodes": p.active_nodes,
                    "edges": p.edges.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
                    "input_attached": p.input_attached,
                    "output_attached": p.output_attached,
                    "skip": p.skip,
                })
            })
            .collect();
        serde_json::json!({
            "input_channels": self.input_channels,
            "channel_width": self.channel_width,
            "node_op": {
                "kernel": self.node_op.kernel,
                "batch_norm": self.node_op.batch_norm,
                "relu": self.node_op.relu,
            },
            "phases": phases,
        })
    }

    /// Graphviz digraph. Each phase is a cluster with `input` and `output` terminals;
    /// consecutive phases are chained through a pooling node.
    pub fn to_dot(&self, name: &str) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "'"));
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  node [shape=box];");
        for (i, (phase, res)) in self.phases.iter().zip(&self.resolutions).enumerate() {
            let pi = i + 1;
            let _ = writeln!(out, "  subgraph cluster_p{pi} {{");
            let _ = writeln!(
                out,
                "    label=\"phase {pi} ({res}x{res}, {} ch)\";",
                self.channel_width
            );
            let _ = writeln!(out, "    p{pi}_in [label=\"input\", shape=ellipse];");
            let _ = writeln!(out, "    p{pi}_out [label=\"output\", shape=ellipse];");
            for n in &phase.active_nodes {
                let _ = writeln!(out, "    p{pi}_n{n} [label=\"{n}: conv3x3-bn-relu\"];");
            }
            for n in &phase.input_attached {
                let _ = writeln!(out, "    p{pi}_in -> p{pi}_n{n};");
            }
            for (a, b) in &phase.edges {
                let _ = writeln!(out, "    p{pi}_n{a} -> p{pi}_n{b};");
            }
            for n in &phase.output_attached {
                let _ = writeln!(out, "    p{pi}_n{n} -> p{pi}_out;");
            }
            if phase.skip || phase.active_nodes.is_empty() {
                let style = if phase.skip { "dashed" } else { "dotted" };
                let _ = writeln!(out, "    p{pi}_in -> p{pi}_out [style={style}];");
            }
            let _ = writeln!(out, "  }}");
            if pi < self.phases.len() {
                let _ = writeln!(out, "  pool{pi} [label=\"maxpool 2x2\", shape=diamond];");
                let _ = writeln!(out, "  p{pi}_out -> pool{pi};");
                let _ = writeln!(out, "  pool{pi} -> p{}_in;", pi + 1);
            }
        }
        out.push_str("}\n");
        out
    }
}

pub fn decode_network(g: &NetworkGenome, cfg: &EncodingConfig) -> NetworkArchitecture {
    debug_assert!(g.matches(cfg), "genome does not match encoding config");
    NetworkArchitecture {
        phases: g.phases.iter().map(decode_phase).collect(),
        resolutions: cfg.resolution_schedule.clone(),
        node_op: NodeOp::default(),
        channel_width: cfg.channel_width,
        input_channels: cfg.input_channels,
    }
}

/// Uniformly random genome: every bit is an independent fair coin.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, cfg: &EncodingConfig) -> NetworkGenome {
    let phases = (0..cfg.phases)
        .map(|_| PhaseGenome {
            nodes: cfg.nodes,
            bits: (0..cfg.phase_bits()).map(|_| rng.gen_bool(0.5)).collect(),
        })
        .collect();
    NetworkGenome { phases }
}

/// `n_p * 2^(n_o(n_o-1)/2 + 1)`.
pub fn search_space_size(phases: usize, nodes: usize) -> Result<u128, EncodingError> {
    let overflow = EncodingError::Overflow { phases, nodes };
    let exponent = nodes
        .checked_mul(nodes.saturating_sub(1))
        .map(|v| v / 2 + 1)
        .ok_or(overflow.clone())?;
    let power = u32::try_from(exponent)
        .ok()
        .and_then(|e| 1u128.checked_shl(e))
        .filter(|_| exponent < 128)
        .ok_or(overflow.clone())?;
    power.checked_mul(phases as u128).ok_or(overflow)
}

/// Number of distinct joint genotypes, `2^(n_p (n_o(n_o-1)/2 + 1))`.
pub fn genotype_configurations(phases: usize, nodes: usize) -> Result<u128, EncodingError> {
    let overflow = EncodingError::Overflow { phases, nodes };
    let exponent = nodes
        .checked_mul(nodes.saturating_sub(1))
        .map(|v| v / 2 + 1)
        .and_then(|v| v.checked_mul(phases))
        .ok_or(overflow.clone())?;
    if exponent >= 128 {
        return Err(overflow);
    }
    Ok(1u128 << exponent)
}
