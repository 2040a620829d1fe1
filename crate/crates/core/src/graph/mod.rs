//! The program-hypergraph elaborator.
//!
//! A graph is a set of typed value nodes connected by k-ary hyperedges.
//! [`load_spec`] parses and validates the JSON spec format; [`elaborate`]
//! runs the whole design-time chain: constraint generation, unification,
//! grade propagation, interval propagation, representation selection,
//! footprint, escape classification, allocation planning, sparsity
//! statistics, and description-length scoring. All violations are collected
//! into one report rather than stopping at the first.

mod elaborate;
mod escape;
mod interval;
mod repr;
mod report;

pub use elaborate::{elaborate, generate_constraints, propagate_grades, Config, ReprMode};
pub(crate) use elaborate::solve_dimensions as solve_dimensions_of;
pub use escape::{classify_escape, plan_allocation, Allocation, EscapeClass};
pub use interval::Interval;
pub use repr::{select_representation, Representation, ReprKind, SelectError};
pub use report::{ElaborationReport, ErrorReport, MdlReport, NodeReport, SparsityReport};

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::clifford::{GradeSet, Signature};
use crate::dims::{parse_dimension, Basis, DimError, Dimension, VarTable};

pub type NodeIdx = usize;
pub type EdgeIdx = usize;

/// What a node is to the graph's callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Input,
    Intermediate,
    Output,
    Parameter,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Intermediate => "intermediate",
            Role::Output => "output",
            Role::Parameter => "parameter",
        }
    }

    /// Inputs and parameters are graph boundary values: they have no
    /// producing edge and must declare their dimension.
    pub fn is_boundary(&self) -> bool {
        matches!(self, Role::Input | Role::Parameter)
    }
}

/// A typed value node.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub role: Role,
    /// Tensor extents; empty means scalar.
    pub shape: Vec<u64>,
    /// Declared or freshly-variable dimension.
    pub dim: Dimension,
    /// Declared grade set, when the graph has a Clifford signature.
    pub declared_grades: Option<GradeSet>,
    /// Declared closed interval of values.
    pub range: Option<Interval>,
}

/// Operation kinds for hyperedges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Pow(i64),
    Neg,
    SumReduce,
    Geometric,
    Wedge,
    GradeProject(u8),
    Dot,
    ConsumeExternal,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Pow(_) => "pow",
            OpKind::Neg => "neg",
            OpKind::SumReduce => "sum_reduce",
            OpKind::Geometric => "geometric",
            OpKind::Wedge => "wedge",
            OpKind::GradeProject(_) => "grade_project",
            OpKind::Dot => "dot",
            OpKind::ConsumeExternal => "consume_external",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::Div
            | OpKind::Geometric
            | OpKind::Wedge
            | OpKind::Dot => 2,
            OpKind::Pow(_)
            | OpKind::Neg
            | OpKind::SumReduce
            | OpKind::GradeProject(_)
            | OpKind::ConsumeExternal => 1,
        }
    }

    /// Sinks consume a value without producing one.
    pub fn is_sink(&self) -> bool {
        matches!(self, OpKind::ConsumeExternal)
    }

    /// Unary edges through which a value flows unchanged in kind; escape
    /// classification treats reaching an output through these as escaping.
    pub fn is_identity_like(&self) -> bool {
        matches!(self, OpKind::Neg | OpKind::SumReduce | OpKind::GradeProject(_))
    }
}

/// A k-ary operation hyperedge.
#[derive(Debug, Clone)]
pub struct Hyperedge {
    pub op: OpKind,
    pub inputs: Vec<NodeIdx>,
    pub output: Option<NodeIdx>,
    pub deferred: bool,
}

/// A validated computation graph.
#[derive(Debug, Clone)]
pub struct Graph {
    pub basis: Basis,
    pub signature: Option<Signature>,
    pub nodes: Vec<Node>,
    pub edges: Vec<Hyperedge>,
    pub outputs: Vec<NodeIdx>,
    pub vars: VarTable,
    index: BTreeMap<String, NodeIdx>,
    /// Producing edge per node, fixed at validation.
    producer: Vec<Option<EdgeIdx>>,
    /// Node evaluation order (producers before consumers).
    topo: Vec<NodeIdx>,
}

impl Graph {
    pub fn node_idx(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn node(&self, idx: NodeIdx) -> &Node {
        &self.nodes[idx]
    }

    pub fn producer(&self, idx: NodeIdx) -> Option<EdgeIdx> {
        self.producer[idx]
    }

    pub fn topo_order(&self) -> &[NodeIdx] {
        &self.topo
    }

    pub fn is_output(&self, idx: NodeIdx) -> bool {
        self.outputs.contains(&idx)
    }

    /// Human-readable description of an edge, used as provenance.
    pub fn edge_label(&self, idx: EdgeIdx) -> String {
        let e = &self.edges[idx];
        let inputs: Vec<&str> =
            e.inputs.iter().map(|&i| self.nodes[i].id.as_str()).collect();
        match e.output {
            Some(o) => format!(
                "edge {idx}: {}({}) -> {}",
                e.op.name(),
                inputs.join(", "),
                self.nodes[o].id
            ),
            None => format!("edge {idx}: {}({})", e.op.name(), inputs.join(", ")),
        }
    }
}

/// Errors that make a spec file malformed (exit code 2 territory).
#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid basis: {0}")]
    Basis(DimError),
    #[error("invalid signature: p+q+r exceeds the supported maximum")]
    Signature,
    #[error("duplicate node id `{id}`")]
    DuplicateId { id: String },
    #[error("edge {edge} references unknown node `{id}`")]
    UnknownNode { edge: usize, id: String },
    #[error("unknown op `{op}` on edge {edge}")]
    UnknownOp { edge: usize, op: String },
    #[error("edge {edge} ({op}) expects {expected} inputs, got {got}")]
    ArityMismatch { edge: usize, op: String, expected: usize, got: usize },
    #[error("edge {edge} ({op}) requires an integer parameter `k`")]
    MissingOpParam { edge: usize, op: String },
    #[error("edge {edge} ({op}) must not declare an output")]
    SinkWithOutput { edge: usize, op: String },
    #[error("edge {edge} ({op}) requires an output node")]
    MissingOutput { edge: usize, op: String },
    #[error("node `{id}` is produced by more than one edge")]
    MultipleProducers { id: String },
    #[error("{role} node `{id}` must not be produced by an edge")]
    BoundaryProduced { id: String, role: String },
    #[error("node `{id}` has no producing edge")]
    MissingProducer { id: String },
    #[error("cycle detected through node `{id}`")]
    Cycle { id: String },
    #[error("bad dimension on node `{id}`: {source}")]
    Dim { id: String, source: DimError },
    #[error("{role} node `{id}` must declare a dimension")]
    MissingDim { id: String, role: String },
    #[error("node `{id}` must declare a grade set (graph has a Clifford signature)")]
    MissingGrades { id: String },
    #[error("node `{id}` declares grade {grade}, outside 0..={max}")]
    GradeOutOfRange { id: String, grade: u8, max: u8 },
    #[error("node `{id}` declares grades but the graph has no signature")]
    GradesWithoutSignature { id: String },
    #[error("node `{id}` has an empty or reversed range [{lo}, {hi}]")]
    BadRange { id: String, lo: f64, hi: f64 },
    #[error("node `{id}` has a zero extent in its shape")]
    BadShape { id: String },
    #[error("edge {edge} ({op}): input shapes {left:?} and {right:?} are incompatible")]
    ShapeMismatch { edge: usize, op: String, left: Vec<u64>, right: Vec<u64> },
    #[error("edge {edge} ({op}): output `{id}` has shape {got:?}, expected {expected:?}")]
    OutputShape { edge: usize, op: String, id: String, got: Vec<u64>, expected: Vec<u64> },
    #[error("output list names unknown node `{id}`")]
    UnknownOutput { id: String },
    #[error("node `{id}` has role `output` but is not in the outputs list (or vice versa)")]
    OutputRoleMismatch { id: String },
    #[error("grade_project parameter {k} on edge {edge} exceeds the algebra dimension {max}")]
    ProjectOutOfRange { edge: usize, k: i64, max: u8 },
}

// -- JSON schema -------------------------------------------------------------

#[derive(Deserialize)]
struct SpecFile {
    #[serde(default)]
    base_dims: Option<Vec<String>>,
    #[serde(default)]
    signature: Option<SigSpec>,
    nodes: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
    outputs: Vec<String>,
}

#[derive(Deserialize)]
struct SigSpec {
    p: u8,
    q: u8,
    r: u8,
}

#[derive(Deserialize)]
struct NodeSpec {
    id: String,
    role: String,
    #[serde(default)]
    shape: Option<Vec<u64>>,
    #[serde(default)]
    dim: Option<String>,
    #[serde(default)]
    grades: Option<Vec<u8>>,
    #[serde(default)]
    range: Option<[f64; 2]>,
}

#[derive(Deserialize)]
struct EdgeSpec {
    op: String,
    #[serde(default)]
    k: Option<i64>,
    inputs: Vec<String>,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    deferred: bool,
}

/// Parses and validates a JSON spec into a [`Graph`]. When the file omits
/// `base_dims`, `default_basis` (or SI) is used.
pub fn load_spec(text: &str, default_basis: Option<&Basis>) -> Result<Graph, SpecError> {
    let spec: SpecFile = serde_json::from_str(text)?;

    let basis = match &spec.base_dims {
        Some(symbols) => Basis::new(symbols).map_err(SpecError::Basis)?,
        None => default_basis.cloned().unwrap_or_else(Basis::si),
    };
    let signature = match &spec.signature {
        Some(s) => {
            Some(Signature::new(s.p, s.q, s.r).map_err(|_| SpecError::Signature)?)
        }
        None => None,
    };

    let mut vars = VarTable::new();
    let mut nodes = Vec::with_capacity(spec.nodes.len());
    let mut index = BTreeMap::new();
    for ns in &spec.nodes {
        if index.contains_key(&ns.id) {
            return Err(SpecError::DuplicateId { id: ns.id.clone() });
        }
        let role = match ns.role.as_str() {
            "input" => Role::Input,
            "intermediate" => Role::Intermediate,
            "output" => Role::Output,
            "parameter" => Role::Parameter,
            other => {
                return Err(SpecError::UnknownOp { edge: usize::MAX, op: other.to_string() })
            }
        };
        let dim = match &ns.dim {
            Some(text) => parse_dimension(text, &basis, &mut vars)
                .map_err(|source| SpecError::Dim { id: ns.id.clone(), source })?,
            None => {
                if role.is_boundary() {
                    return Err(SpecError::MissingDim {
                        id: ns.id.clone(),
                        role: role.as_str().to_string(),
                    });
                }
                let fresh = fresh_node_var(&ns.id, &mut vars);
                Dimension::var(fresh, 1)
            }
        };
        let declared_grades = match (&ns.grades, signature) {
            (Some(grades), Some(sig)) => {
                let n = sig.total();
                for &g in grades {
                    if g > n {
                        return Err(SpecError::GradeOutOfRange {
                            id: ns.id.clone(),
                            grade: g,
                            max: n,
                        });
                    }
                }
                Some(GradeSet::from_grades(grades.iter().copied()))
            }
            (Some(_), None) => {
                return Err(SpecError::GradesWithoutSignature { id: ns.id.clone() })
            }
            (None, Some(_)) if role.is_boundary() => {
                return Err(SpecError::MissingGrades { id: ns.id.clone() })
            }
            _ => None,
        };
        let range = match ns.range {
            Some([lo, hi]) => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(SpecError::BadRange { id: ns.id.clone(), lo, hi });
                }
                Some(Interval::new(lo, hi))
            }
            None => None,
        };
        let shape = ns.shape.clone().unwrap_or_default();
        if shape.iter().any(|&e| e == 0) {
            return Err(SpecError::BadShape { id: ns.id.clone() });
        }
        index.insert(ns.id.clone(), nodes.len());
        nodes.push(Node { id: ns.id.clone(), role, shape, dim, declared_grades, range });
    }

    let mut edges = Vec::with_capacity(spec.edges.len());
    for (i, es) in spec.edges.iter().enumerate() {
        let op = parse_op(i, &es.op, es.k, signature)?;
        if es.inputs.len() != op.arity() {
            return Err(SpecError::ArityMismatch {
                edge: i,
                op: es.op.clone(),
                expected: op.arity(),
                got: es.inputs.len(),
            });
        }
        let mut inputs = Vec::with_capacity(es.inputs.len());
        for id in &es.inputs {
            let idx = index
                .get(id)
                .copied()
                .ok_or_else(|| SpecError::UnknownNode { edge: i, id: id.clone() })?;
            inputs.push(idx);
        }
        let output = match (&es.output, op.is_sink()) {
            (Some(_), true) => {
                return Err(SpecError::SinkWithOutput { edge: i, op: es.op.clone() })
            }
            (None, true) => None,
            (Some(id), false) => Some(
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| SpecError::UnknownNode { edge: i, id: id.clone() })?,
            ),
            (None, false) => {
                return Err(SpecError::MissingOutput { edge: i, op: es.op.clone() })
            }
        };
        edges.push(Hyperedge { op, inputs, output, deferred: es.deferred });
    }

    let mut outputs = Vec::with_capacity(spec.outputs.len());
    for id in &spec.outputs {
        let idx = index
            .get(id)
            .copied()
            .ok_or_else(|| SpecError::UnknownOutput { id: id.clone() })?;
        outputs.push(idx);
    }

    build_graph(basis, signature, nodes, edges, outputs, vars, index)
}

/// Fresh variable for a node that omits its dimension, named after the node.
fn fresh_node_var(node_id: &str, vars: &mut VarTable) -> crate::dims::DimVar {
    let sanitized: String = node_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let mut candidate = format!("_{sanitized}");
    let mut salt = 0;
    while vars.len() > 0 && vars_contains(vars, &candidate) {
        candidate = format!("_{sanitized}_{salt}");
        salt += 1;
    }
    vars.intern_with_origin(&candidate, node_id)
}

fn vars_contains(vars: &VarTable, name: &str) -> bool {
    (0..vars.len()).any(|i| vars.name(crate::dims::DimVar(i as u32)) == name)
}

fn parse_op(
    edge: usize,
    op: &str,
    k: Option<i64>,
    signature: Option<Signature>,
) -> Result<OpKind, SpecError> {
    Ok(match op {
        "add" => OpKind::Add,
        "sub" => OpKind::Sub,
        "mul" => OpKind::Mul,
        "div" => OpKind::Div,
        "neg" => OpKind::Neg,
        "sum_reduce" => OpKind::SumReduce,
        "geometric" => OpKind::Geometric,
        "wedge" => OpKind::Wedge,
        "dot" => OpKind::Dot,
        "consume_external" => OpKind::ConsumeExternal,
        "pow" => {
            let k = k.ok_or_else(|| SpecError::MissingOpParam {
                edge,
                op: op.to_string(),
            })?;
            OpKind::Pow(k)
        }
        "grade_project" => {
            let k = k.ok_or_else(|| SpecError::MissingOpParam {
                edge,
                op: op.to_string(),
            })?;
            let max = signature.map(|s| s.total()).unwrap_or(0);
            if k < 0 || k > max as i64 {
                return Err(SpecError::ProjectOutOfRange { edge, k, max });
            }
            OpKind::GradeProject(k as u8)
        }
        other => return Err(SpecError::UnknownOp { edge, op: other.to_string() }),
    })
}

/// Structural validation shared by the JSON loader and programmatic builders:
/// producer uniqueness, output/role agreement, shape rules, and acyclicity.
pub fn build_graph(
    basis: Basis,
    signature: Option<Signature>,
    nodes: Vec<Node>,
    edges: Vec<Hyperedge>,
    outputs: Vec<NodeIdx>,
    vars: VarTable,
    index: BTreeMap<String, NodeIdx>,
) -> Result<Graph, SpecError> {
    let mut producer: Vec<Option<EdgeIdx>> = vec![None; nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        if let Some(out) = e.output {
            let node = &nodes[out];
            if node.role.is_boundary() {
                return Err(SpecError::BoundaryProduced {
                    id: node.id.clone(),
                    role: node.role.as_str().to_string(),
                });
            }
            if producer[out].is_some() {
                return Err(SpecError::MultipleProducers { id: node.id.clone() });
            }
            producer[out] = Some(i);
        }
    }
    for (idx, node) in nodes.iter().enumerate() {
        if !node.role.is_boundary() && producer[idx].is_none() {
            return Err(SpecError::MissingProducer { id: node.id.clone() });
        }
        let listed = outputs.contains(&idx);
        let marked = node.role == Role::Output;
        if listed != marked {
            return Err(SpecError::OutputRoleMismatch { id: node.id.clone() });
        }
    }

    check_shapes(&nodes, &edges)?;

    // Kahn's algorithm over nodes; producers before consumers.
    let mut indegree: Vec<usize> = nodes
        .iter()
        .enumerate()
        .map(|(idx, _)| producer[idx].map_or(0, |e| edges[e].inputs.len()))
        .collect();
    let mut ready: Vec<NodeIdx> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    ready.sort_unstable();
    let mut queue = std::collections::VecDeque::from(ready);
    let mut topo = Vec::with_capacity(nodes.len());
    // consumers[i] = nodes whose producing edge reads node i.
    let mut consumers: Vec<Vec<NodeIdx>> = vec![Vec::new(); nodes.len()];
    for e in &edges {
        if let Some(out) = e.output {
            for &inp in &e.inputs {
                consumers[inp].push(out);
            }
        }
    }
    while let Some(n) = queue.pop_front() {
        topo.push(n);
        for &c in &consumers[n] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if topo.len() != nodes.len() {
        let stuck = (0..nodes.len())
            .find(|&i| !topo.contains(&i))
            .expect("some node is unsorted");
        return Err(SpecError::Cycle { id: nodes[stuck].id.clone() });
    }

    Ok(Graph { basis, signature, nodes, edges, outputs, vars, index, producer, topo })
}

/// Shapes must agree elementwise, with scalars broadcasting into tensors for
/// mul/div; dot and sum_reduce collapse to scalar.
fn check_shapes(nodes: &[Node], edges: &[Hyperedge]) -> Result<(), SpecError> {
    for (i, e) in edges.iter().enumerate() {
        let shape_of = |idx: NodeIdx| nodes[idx].shape.clone();
        let expected: Option<Vec<u64>> = match e.op {
            OpKind::Add | OpKind::Sub => {
                let (a, b) = (shape_of(e.inputs[0]), shape_of(e.inputs[1]));
                if a != b {
                    return Err(SpecError::ShapeMismatch {
                        edge: i,
                        op: e.op.name().to_string(),
                        left: a,
                        right: b,
                    });
                }
                Some(a)
            }
            OpKind::Mul | OpKind::Div | OpKind::Geometric | OpKind::Wedge => {
                let (a, b) = (shape_of(e.inputs[0]), shape_of(e.inputs[1]));
                if a == b {
                    Some(a)
                } else if a.is_empty() {
                    Some(b)
                } else if b.is_empty() {
                    Some(a)
                } else {
                    return Err(SpecError::ShapeMismatch {
                        edge: i,
                        op: e.op.name().to_string(),
                        left: a,
                        right: b,
                    });
                }
            }
            OpKind::Dot => {
                let (a, b) = (shape_of(e.inputs[0]), shape_of(e.inputs[1]));
                if a != b {
                    return Err(SpecError::ShapeMismatch {
                        edge: i,
                        op: e.op.name().to_string(),
                        left: a,
                        right: b,
                    });
                }
                Some(Vec::new())
            }
            OpKind::SumReduce => Some(Vec::new()),
            OpKind::Pow(_) | OpKind::Neg | OpKind::GradeProject(_) => {
                Some(shape_of(e.inputs[0]))
            }
            OpKind::ConsumeExternal => None,
        };
        if let (Some(expected), Some(out)) = (expected, e.output) {
            if nodes[out].shape != expected {
                return Err(SpecError::OutputShape {
                    edge: i,
                    op: e.op.name().to_string(),
                    id: nodes[out].id.clone(),
                    got: nodes[out].shape.clone(),
                    expected,
                });
            }
        }
    }
    Ok(())
}
