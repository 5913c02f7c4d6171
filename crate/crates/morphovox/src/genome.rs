//! Compositional pattern-producing networks (CPPNs) and what they express.
//!
//! A genome is a small feed-forward network evaluated once per voxel. Its
//! five inputs are the voxel's position (normalized about the body centroid),
//! the radial distance of that normalized position, and a constant bias; its
//! single output, squashed by `tanh` into [-1, 1], is mapped affinely onto
//! either a per-voxel phase offset (a [`Controller`]) or a per-voxel rest
//! length (a [`Shape`]). Because nearby voxels feed the network similar
//! inputs, expressed patterns vary smoothly across the body.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::morphology::{Coord, VoxelStructure};

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("node ids 0..=4 must be the five inputs; node {id} is {found}")]
    BadInputNode { id: u32, found: &'static str },
    #[error("genome must have exactly one output node, found {0}")]
    OutputCount(usize),
    #[error("edge references missing node {0}")]
    DanglingEdge(u32),
    #[error("duplicate edge {from_id} -> {to_id}")]
    DuplicateEdge { from_id: u32, to_id: u32 },
    #[error("edge {from_id} -> {to_id} is not allowed (inputs cannot be targets, the output cannot be a source)")]
    BadEndpoint { from_id: u32, to_id: u32 },
    #[error("edge weight {0} is not finite")]
    BadWeight(f64),
    #[error("network contains a cycle")]
    Cyclic,
    #[error("genome role is {found}, expected {expected}")]
    RoleMismatch { expected: GenomeRole, found: GenomeRole },
    #[error("attribute {value} for voxel ({x}, {y}, {z}) outside [{lo}, {hi}]")]
    AttributeOutOfRange {
        value: f64,
        x: i32,
        y: i32,
        z: i32,
        lo: f64,
        hi: f64,
    },
    #[error("controller needs finite amplitude >= 0 and frequency > 0, got A = {amplitude}, f = {frequency}")]
    BadOscillation { amplitude: f64, frequency: f64 },
    #[error("unsupported genome document format `{0}`")]
    BadFormat(String),
    #[error("genome io: {0}")]
    Io(#[from] std::io::Error),
    #[error("genome json: {0}")]
    Json(#[from] serde_json::Error),
}

/// What a genome's output is interpreted as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenomeRole {
    /// Output maps to per-voxel oscillation phase offsets.
    Controller,
    /// Output maps to per-voxel rest lengths.
    Shape,
}

impl std::fmt::Display for GenomeRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GenomeRole::Controller => "controller",
            GenomeRole::Shape => "shape",
        })
    }
}

/// Activation functions available to hidden and output nodes: four bases and
/// their negations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sin,
    Abs,
    Square,
    SqrtAbs,
    NegSin,
    NegAbs,
    NegSquare,
    NegSqrtAbs,
}

impl Activation {
    pub const ALL: [Activation; 8] = [
        Activation::Sin,
        Activation::Abs,
        Activation::Square,
        Activation::SqrtAbs,
        Activation::NegSin,
        Activation::NegAbs,
        Activation::NegSquare,
        Activation::NegSqrtAbs,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sin => x.sin(),
            Activation::Abs => x.abs(),
            Activation::Square => x * x,
            Activation::SqrtAbs => x.abs().sqrt(),
            Activation::NegSin => -x.sin(),
            Activation::NegAbs => -x.abs(),
            Activation::NegSquare => -(x * x),
            Activation::NegSqrtAbs => -x.abs().sqrt(),
        }
    }
}

/// Node role. Inputs carry no activation (they pass their value through);
/// hidden and output nodes apply one of the eight activations to their
/// weighted input sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Hidden(Activation),
    Output(Activation),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
}

/// Ids of the five fixed input nodes, in the order values are supplied to
/// [`CppnGenome::evaluate`]: x, y, z, radial distance, bias.
pub const INPUT_IDS: [u32; 5] = [0, 1, 2, 3, 4];

/// Hidden/output node sums are clamped to this magnitude before activation so
/// chained `Square` nodes cannot overflow to infinity (and from there to NaN).
const NODE_CLAMP: f64 = 1.0e6;

/// A feed-forward CPPN. Invariants, checked by [`CppnGenome::validate`]: node
/// ids unique; ids 0..=4 are the inputs; exactly one output node; edges
/// connect existing nodes, never target an input or leave the output, and
/// contain no duplicates; the graph is acyclic; weights are finite and within
/// [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppnGenome {
    pub role: GenomeRole,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Next fresh node id; kept monotone so ids are never reused within a
    /// lineage.
    pub next_node_id: u32,
}

impl CppnGenome {
    pub const MIN_WEIGHT: f64 = -1.0;
    pub const MAX_WEIGHT: f64 = 1.0;

    /// Minimal random genome: the five inputs, one output with a random
    /// activation, and one edge from every input to the output with a random
    /// weight.
    pub fn random<R: Rng>(role: GenomeRole, rng: &mut R) -> Self {
        let mut nodes: Vec<Node> = INPUT_IDS
            .iter()
            .map(|&id| Node {
                id,
                kind: NodeKind::Input,
            })
            .collect();
        let output_id = 5;
        nodes.push(Node {
            id: output_id,
            kind: NodeKind::Output(random_activation(rng)),
        });
        let edges = INPUT_IDS
            .iter()
            .map(|&source| Edge {
                source,
                target: output_id,
                weight: rng.random_range(Self::MIN_WEIGHT..=Self::MAX_WEIGHT),
            })
            .collect();
        CppnGenome {
            role,
            nodes,
            edges,
            next_node_id: output_id + 1,
        }
    }

    pub fn output_id(&self) -> u32 {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Output(_)))
            .map(|n| n.id)
            .expect("validated genome has an output node")
    }

    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut ids = BTreeSet::new();
        let mut outputs = 0usize;
        for node in &self.nodes {
            if !ids.insert(node.id) {
                return Err(GenomeError::DuplicateNode(node.id));
            }
            if node.id <= 4 && !matches!(node.kind, NodeKind::Input) {
                return Err(GenomeError::BadInputNode {
                    id: node.id,
                    found: "not an input",
                });
            }
            if node.id > 4 && matches!(node.kind, NodeKind::Input) {
                return Err(GenomeError::BadInputNode {
                    id: node.id,
                    found: "an input outside ids 0..=4",
                });
            }
            if matches!(node.kind, NodeKind::Output(_)) {
                outputs += 1;
            }
        }
        for &id in &INPUT_IDS {
            if !ids.contains(&id) {
                return Err(GenomeError::BadInputNode {
                    id,
                    found: "missing",
                });
            }
        }
        if outputs != 1 {
            return Err(GenomeError::OutputCount(outputs));
        }
        let output_id = self.output_id();
        let mut seen_edges = BTreeSet::new();
        for edge in &self.edges {
            for end in [edge.source, edge.target] {
                if !ids.contains(&end) {
                    return Err(GenomeError::DanglingEdge(end));
                }
            }
            if edge.target <= 4 || edge.source == output_id {
                return Err(GenomeError::BadEndpoint {
                    from_id: edge.source,
                    to_id: edge.target,
                });
            }
            if !seen_edges.insert((edge.source, edge.target)) {
                return Err(GenomeError::DuplicateEdge {
                    from_id: edge.source,
                    to_id: edge.target,
                });
            }
            if !(Self::MIN_WEIGHT..=Self::MAX_WEIGHT).contains(&edge.weight) {
                return Err(GenomeError::BadWeight(edge.weight));
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Kahn's algorithm over node ids; `Err(Cyclic)` when edges form a loop.
    fn topological_order(&self) -> Result<Vec<u32>, GenomeError> {
        let mut indegree: BTreeMap<u32, usize> =
            self.nodes.iter().map(|n| (n.id, 0)).collect();
        let mut outgoing: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for e in &self.edges {
            *indegree.entry(e.target).or_default() += 1;
            outgoing.entry(e.source).or_default().push(e.target);
        }
        let mut ready: BTreeSet<u32> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(&id) = ready.iter().next() {
            ready.remove(&id);
            order.push(id);
            if let Some(targets) = outgoing.get(&id) {
                for &t in targets {
                    let d = indegree.get_mut(&t).expect("edge targets known node");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(t);
                    }
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(GenomeError::Cyclic)
        }
    }

    /// Evaluate the network on one input vector (x, y, z, d, bias) and return
    /// the tanh-squashed output in [-1, 1].
    pub fn evaluate(&self, inputs: [f64; 5]) -> Result<f64, GenomeError> {
        let order = self.topological_order()?;
        let kinds: BTreeMap<u32, NodeKind> =
            self.nodes.iter().map(|n| (n.id, n.kind)).collect();
        let mut incoming: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for e in &self.edges {
            incoming
                .entry(e.target)
                .or_default()
                .push((e.source, e.weight));
        }
        let mut values: BTreeMap<u32, f64> = BTreeMap::new();
        let mut raw = 0.0;
        for id in order {
            let value = match kinds[&id] {
                NodeKind::Input => inputs[id as usize],
                NodeKind::Hidden(act) | NodeKind::Output(act) => {
                    let sum: f64 = incoming
                        .get(&id)
                        .map(|ins| ins.iter().map(|(s, w)| w * values[s]).sum())
                        .unwrap_or(0.0);
                    act.apply(sum.clamp(-NODE_CLAMP, NODE_CLAMP))
                        .clamp(-NODE_CLAMP, NODE_CLAMP)
                }
            };
            if matches!(kinds[&id], NodeKind::Output(_)) {
                raw = value.tanh();
            }
            values.insert(id, value);
        }
        Ok(raw)
    }

    /// Produce a child genome one mutation away from `self`. Operator choice
    /// is uniform over the six operators, resampling whenever the drawn
    /// operator does not apply to this genome, so the child always differs
    /// from the parent by exactly one effective change.
    pub fn mutated<R: Rng>(&self, rng: &mut R) -> CppnGenome {
        loop {
            let op = MutationOp::ALL[rng.random_range(0..MutationOp::ALL.len())];
            if let Some(child) = self.try_mutation(op, rng) {
                debug_assert!(child.validate().is_ok(), "mutation {op:?} broke validity");
                return child;
            }
        }
    }

    /// Apply one specific operator, or `None` when it does not apply.
    pub(crate) fn try_mutation<R: Rng>(&self, op: MutationOp, rng: &mut R) -> Option<CppnGenome> {
        let mut child = self.clone();
        match op {
            MutationOp::AddNode => {
                if child.edges.is_empty() {
                    return None;
                }
                // Split a random edge: the new node inherits the downstream
                // weight while the upstream edge gets weight 1, the usual way
                // to keep the disruption to the expressed pattern small.
                let idx = rng.random_range(0..child.edges.len());
                let old = child.edges.remove(idx);
                let id = child.next_node_id;
                child.next_node_id += 1;
                child.nodes.push(Node {
                    id,
                    kind: NodeKind::Hidden(random_activation(rng)),
                });
                child.edges.push(Edge {
                    source: old.source,
                    target: id,
                    weight: 1.0,
                });
                child.edges.push(Edge {
                    source: id,
                    target: old.target,
                    weight: old.weight,
                });
            }
            MutationOp::AddEdge => {
                let candidates = child.missing_edges();
                if candidates.is_empty() {
                    return None;
                }
                let (source, target) = candidates[rng.random_range(0..candidates.len())];
                child.edges.push(Edge {
                    source,
                    target,
                    weight: rng.random_range(Self::MIN_WEIGHT..=Self::MAX_WEIGHT),
                });
            }
            MutationOp::RemoveNode => {
                let hidden: Vec<u32> = child
                    .nodes
                    .iter()
                    .filter(|n| matches!(n.kind, NodeKind::Hidden(_)))
                    .map(|n| n.id)
                    .collect();
                if hidden.is_empty() {
                    return None;
                }
                let id = hidden[rng.random_range(0..hidden.len())];
                child.nodes.retain(|n| n.id != id);
                child.edges.retain(|e| e.source != id && e.target != id);
            }
            MutationOp::RemoveEdge => {
                if child.edges.is_empty() {
                    return None;
                }
                let idx = rng.random_range(0..child.edges.len());
                child.edges.remove(idx);
            }
            MutationOp::Reweight => {
                if child.edges.is_empty() {
                    return None;
                }
                let idx = rng.random_range(0..child.edges.len());
                let normal = Normal::new(0.0, 0.5).expect("valid normal");
                let old = child.edges[idx].weight;
                let mut new = old;
                while new == old {
                    new = (old + normal.sample(rng)).clamp(Self::MIN_WEIGHT, Self::MAX_WEIGHT);
                }
                child.edges[idx].weight = new;
            }
            MutationOp::ChangeActivation => {
                let mutable: Vec<u32> = child
                    .nodes
                    .iter()
                    .filter(|n| !matches!(n.kind, NodeKind::Input))
                    .map(|n| n.id)
                    .collect();
                // Always non-empty: the output node is always present.
                let id = mutable[rng.random_range(0..mutable.len())];
                let node = child
                    .nodes
                    .iter_mut()
                    .find(|n| n.id == id)
                    .expect("chosen node exists");
                let old = match node.kind {
                    NodeKind::Hidden(a) | NodeKind::Output(a) => a,
                    NodeKind::Input => unreachable!("inputs filtered out"),
                };
                let others: Vec<Activation> = Activation::ALL
                    .into_iter()
                    .filter(|&a| a != old)
                    .collect();
                let new = others[rng.random_range(0..others.len())];
                node.kind = match node.kind {
                    NodeKind::Hidden(_) => NodeKind::Hidden(new),
                    NodeKind::Output(_) => NodeKind::Output(new),
                    NodeKind::Input => unreachable!(),
                };
            }
        }
        Some(child)
    }

    /// Legal (source, target) pairs not yet present and not creating a cycle.
    fn missing_edges(&self) -> Vec<(u32, u32)> {
        let present: BTreeSet<(u32, u32)> =
            self.edges.iter().map(|e| (e.source, e.target)).collect();
        let output_id = self.output_id();
        let mut result = Vec::new();
        for source in &self.nodes {
            if source.id == output_id {
                continue;
            }
            for target in &self.nodes {
                if matches!(target.kind, NodeKind::Input) || target.id == source.id {
                    continue;
                }
                let pair = (source.id, target.id);
                if present.contains(&pair) {
                    continue;
                }
                if self.reaches(target.id, source.id) {
                    continue; // would close a cycle
                }
                result.push(pair);
            }
        }
        result
    }

    /// Is there a directed path `from -> ... -> to`?
    fn reaches(&self, from: u32, to: u32) -> bool {
        let mut outgoing: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for e in &self.edges {
            outgoing.entry(e.source).or_default().push(e.target);
        }
        let mut stack = vec![from];
        let mut seen = BTreeSet::from([from]);
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if let Some(next) = outgoing.get(&id) {
                for &n in next {
                    if seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        false
    }

    /// Content hash over the canonical form (sorted nodes and edges), so two
    /// genomes that differ only in storage order hash identically.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update([match self.role {
            GenomeRole::Controller => 0u8,
            GenomeRole::Shape => 1u8,
        }]);
        let mut nodes = self.nodes.clone();
        nodes.sort_by_key(|n| n.id);
        hasher.update((nodes.len() as u64).to_le_bytes());
        for n in &nodes {
            hasher.update(n.id.to_le_bytes());
            let (tag, act): (u8, u8) = match n.kind {
                NodeKind::Input => (0, 0),
                NodeKind::Hidden(a) => (1, activation_tag(a)),
                NodeKind::Output(a) => (2, activation_tag(a)),
            };
            hasher.update([tag, act]);
        }
        let mut edges = self.edges.clone();
        edges.sort_by_key(|e| (e.source, e.target));
        hasher.update((edges.len() as u64).to_le_bytes());
        for e in &edges {
            hasher.update(e.source.to_le_bytes());
            hasher.update(e.target.to_le_bytes());
            hasher.update(e.weight.to_bits().to_le_bytes());
        }
        hasher.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MutationOp {
    AddNode,
    AddEdge,
    RemoveNode,
    RemoveEdge,
    Reweight,
    ChangeActivation,
}

impl MutationOp {
    pub(crate) const ALL: [MutationOp; 6] = [
        MutationOp::AddNode,
        MutationOp::AddEdge,
        MutationOp::RemoveNode,
        MutationOp::RemoveEdge,
        MutationOp::Reweight,
        MutationOp::ChangeActivation,
    ];
}

fn random_activation<R: Rng>(rng: &mut R) -> Activation {
    Activation::ALL[rng.random_range(0..Activation::ALL.len())]
}

fn activation_tag(a: Activation) -> u8 {
    Activation::ALL
        .iter()
        .position(|&x| x == a)
        .expect("activation in catalogue") as u8
}

/// CPPN input vector for one voxel: coordinates normalized into [-1, 1] about
/// the structure centroid (per-axis max-abs scaling; a flat axis maps to 0),
/// the radial distance of the normalized point, and the bias constant 1.
pub fn cppn_inputs(structure: &VoxelStructure) -> Vec<(Coord, [f64; 5])> {
    let (cx, cy, cz) = structure.centroid();
    let mut half = [0.0f64; 3];
    for c in structure.iter() {
        half[0] = half[0].max((c.x as f64 - cx).abs());
        half[1] = half[1].max((c.y as f64 - cy).abs());
        half[2] = half[2].max((c.z as f64 - cz).abs());
    }
    let norm = |v: f64, h: f64| if h > 0.0 { v / h } else { 0.0 };
    structure
        .iter()
        .map(|c| {
            let nx = norm(c.x as f64 - cx, half[0]);
            let ny = norm(c.y as f64 - cy, half[1]);
            let nz = norm(c.z as f64 - cz, half[2]);
            let d = (nx * nx + ny * ny + nz * nz).sqrt();
            (c, [nx, ny, nz, d, 1.0])
        })
        .collect()
}

/// Map a squashed network output in [-1, 1] to a phase offset in [-tau, tau].
pub fn phase_from_raw(raw: f64) -> f64 {
    TAU * raw
}

/// Map a squashed network output in [-1, 1] to a rest length in
/// [[`Shape::MIN_REST_LENGTH`], [`Shape::MAX_REST_LENGTH`]] cm.
pub fn rest_length_from_raw(raw: f64) -> f64 {
    Shape::MIN_REST_LENGTH
        + (raw + 1.0) / 2.0 * (Shape::MAX_REST_LENGTH - Shape::MIN_REST_LENGTH)
}

/// Express a controller-role genome over a structure.
pub fn express_controller(
    genome: &CppnGenome,
    structure: &VoxelStructure,
    amplitude: f64,
    frequency: f64,
) -> Result<Controller, GenomeError> {
    if genome.role != GenomeRole::Controller {
        return Err(GenomeError::RoleMismatch {
            expected: GenomeRole::Controller,
            found: genome.role,
        });
    }
    let mut phases = BTreeMap::new();
    for (coord, inputs) in cppn_inputs(structure) {
        phases.insert(coord, phase_from_raw(genome.evaluate(inputs)?));
    }
    Controller::new(phases, amplitude, frequency)
}

/// Express a shape-role genome over a structure.
pub fn express_shape(
    genome: &CppnGenome,
    structure: &VoxelStructure,
) -> Result<Shape, GenomeError> {
    if genome.role != GenomeRole::Shape {
        return Err(GenomeError::RoleMismatch {
            expected: GenomeRole::Shape,
            found: genome.role,
        });
    }
    let mut values = BTreeMap::new();
    for (coord, inputs) in cppn_inputs(structure) {
        values.insert(coord, rest_length_from_raw(genome.evaluate(inputs)?));
    }
    Shape::new(values)
}

/// Per-voxel rest lengths in cm. Values are bounded to the physically
/// printable range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    values: BTreeMap<Coord, f64>,
}

impl Shape {
    pub const MIN_REST_LENGTH: f64 = 0.25;
    pub const MAX_REST_LENGTH: f64 = 2.0;

    pub fn new(values: BTreeMap<Coord, f64>) -> Result<Self, GenomeError> {
        for (&c, &v) in &values {
            if !(v.is_finite() && (Self::MIN_REST_LENGTH..=Self::MAX_REST_LENGTH).contains(&v)) {
                return Err(GenomeError::AttributeOutOfRange {
                    value: v,
                    x: c.x,
                    y: c.y,
                    z: c.z,
                    lo: Self::MIN_REST_LENGTH,
                    hi: Self::MAX_REST_LENGTH,
                });
            }
        }
        Ok(Shape { values })
    }

    /// Every voxel of `structure` at rest length `value`.
    pub fn uniform(structure: &VoxelStructure, value: f64) -> Result<Self, GenomeError> {
        Shape::new(structure.iter().map(|c| (c, value)).collect())
    }

    /// The nominal resting shape: every voxel at 1 cm.
    pub fn nominal(structure: &VoxelStructure) -> Self {
        Shape::uniform(structure, 1.0).expect("1 cm is in range")
    }

    pub fn get(&self, c: Coord) -> Option<f64> {
        self.values.get(&c).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coord, f64)> + '_ {
        self.values.iter().map(|(&c, &v)| (c, v))
    }

    /// Keep only the voxels of `structure`; `Err` carries the first voxel of
    /// `structure` this shape has no value for.
    pub fn restricted_to(&self, structure: &VoxelStructure) -> Result<Shape, Coord> {
        let mut values = BTreeMap::new();
        for c in structure.iter() {
            match self.values.get(&c) {
                Some(&v) => {
                    values.insert(c, v);
                }
                None => return Err(c),
            }
        }
        Ok(Shape { values })
    }

    /// Multiply every value by `factor`; `Err` carries the first out-of-range
    /// product.
    pub fn scaled(&self, factor: f64) -> Result<Shape, f64> {
        let mut values = BTreeMap::new();
        for (&c, &v) in &self.values {
            let s = v * factor;
            if !(Self::MIN_REST_LENGTH..=Self::MAX_REST_LENGTH).contains(&s) {
                return Err(s);
            }
            values.insert(c, s);
        }
        Ok(Shape { values })
    }

    /// Total resting volume in cm^3 (each voxel contributes its rest length
    /// cubed).
    pub fn total_volume(&self) -> f64 {
        self.values.values().map(|v| v * v * v).sum()
    }
}

/// Per-voxel phase offsets plus the shared oscillation amplitude (cm) and
/// frequency (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    phases: BTreeMap<Coord, f64>,
    amplitude: f64,
    frequency: f64,
}

impl Controller {
    pub const MIN_PHASE: f64 = -TAU;
    pub const MAX_PHASE: f64 = TAU;

    pub fn new(
        phases: BTreeMap<Coord, f64>,
        amplitude: f64,
        frequency: f64,
    ) -> Result<Self, GenomeError> {
        if !(amplitude.is_finite() && amplitude >= 0.0 && frequency.is_finite() && frequency > 0.0)
        {
            return Err(GenomeError::BadOscillation {
                amplitude,
                frequency,
            });
        }
        for (&c, &v) in &phases {
            if !(v.is_finite() && (Self::MIN_PHASE..=Self::MAX_PHASE).contains(&v)) {
                return Err(GenomeError::AttributeOutOfRange {
                    value: v,
                    x: c.x,
                    y: c.y,
                    z: c.z,
                    lo: Self::MIN_PHASE,
                    hi: Self::MAX_PHASE,
                });
            }
        }
        Ok(Controller {
            phases,
            amplitude,
            frequency,
        })
    }

    pub fn uniform(
        structure: &VoxelStructure,
        phase: f64,
        amplitude: f64,
        frequency: f64,
    ) -> Result<Self, GenomeError> {
        Controller::new(
            structure.iter().map(|c| (c, phase)).collect(),
            amplitude,
            frequency,
        )
    }

    pub fn phase(&self, c: Coord) -> Option<f64> {
        self.phases.get(&c).copied()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coord, f64)> + '_ {
        self.phases.iter().map(|(&c, &v)| (c, v))
    }

    pub fn restricted_to(&self, structure: &VoxelStructure) -> Result<Controller, Coord> {
        let mut phases = BTreeMap::new();
        for c in structure.iter() {
            match self.phases.get(&c) {
                Some(&v) => {
                    phases.insert(c, v);
                }
                None => return Err(c),
            }
        }
        Ok(Controller {
            phases,
            amplitude: self.amplitude,
            frequency: self.frequency,
        })
    }
}

/// On-disk wrapper for a genome: a format marker, the tool version that wrote
/// it, and the genome itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenomeDocument {
    pub format: String,
    pub tool_version: String,
    pub genome: CppnGenome,
}

pub const GENOME_FORMAT: &str = "morphovox/cppn-v1";

impl GenomeDocument {
    pub fn new(genome: CppnGenome) -> Self {
        GenomeDocument {
            format: GENOME_FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            genome,
        }
    }
}

pub fn save_genome(path: &Path, genome: &CppnGenome) -> Result<(), GenomeError> {
    let doc = GenomeDocument::new(genome.clone());
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_genome(path: &Path) -> Result<CppnGenome, GenomeError> {
    let text = std::fs::read_to_string(path)?;
    let doc: GenomeDocument = serde_json::from_str(&text)?;
    if doc.format != GENOME_FORMAT {
        return Err(GenomeError::BadFormat(doc.format));
    }
    doc.genome.validate()?;
    Ok(doc.genome)
}
