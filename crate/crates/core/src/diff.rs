//! Forward-mode tangent graphs over elaborated computation graphs.
//!
//! [`derive_tangent_graph`] extends a graph with one tangent node per original
//! node, wired by the usual forward-mode rules (sum rule, product rule,
//! quotient rule, power rule, and the bilinear rule for the Clifford
//! products). The seed's tangent is the dimensionless constant 1 and every
//! other boundary tangent is a dimensioned 0, so re-elaborating the combined
//! graph solves each tangent dimension; closure of the decidable fragment
//! under differentiation means that must succeed whenever the base graph was
//! accepted, with every tangent dimension equal to `dim(node) / dim(seed)`.
//!
//! [`evaluate_forward`] computes primal and tangent values in one pass,
//! releasing each buffer as its last consumer finishes; the trace records the
//! peak number of simultaneously live tangent buffers, which is what makes
//! forward-mode training memory depth-independent.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clifford::GradeSet;
use crate::dims::{gradient_dimension, Dimension, VarTable};
use crate::graph::{
    build_graph, elaborate, Config, ElaborationReport, Graph, Hyperedge, Node, NodeIdx,
    OpKind, Role,
};

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("seed `{id}` is not an input or parameter")]
    SeedNotBoundary { id: String },
    #[error("unknown seed node `{id}`")]
    UnknownSeed { id: String },
    #[error("base graph is rejected: {message}")]
    BaseRejected { message: String },
    #[error("tangent construction produced an invalid graph: {0}")]
    Construction(#[from] crate::graph::SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing value for input `{id}`")]
    MissingInput { id: String },
    #[error("value for `{id}` has {got} elements, shape wants {want}")]
    ShapeMismatch { id: String, got: usize, want: usize },
    #[error("division by zero while computing `{id}`")]
    DivisionByZero { id: String },
    #[error("evaluation does not support `{op}` (verification-only operation)")]
    Unsupported { op: &'static str },
}

/// A tangent graph: the combined primal+tangent graph plus bookkeeping.
#[derive(Debug, Clone)]
pub struct TangentGraph {
    pub graph: Graph,
    /// Seed node index (same index in base and combined graphs).
    pub seed: NodeIdx,
    /// Original node index -> its tangent node index.
    pub tangent_of: BTreeMap<NodeIdx, NodeIdx>,
    /// Constant-valued inputs introduced by the construction (seed tangent,
    /// zero tangents, power-rule coefficients).
    pub constants: BTreeMap<NodeIdx, f64>,
    /// Nodes below this index belong to the base graph.
    pub base_node_count: usize,
}

impl TangentGraph {
    pub fn tangent_idx(&self, base: NodeIdx) -> Option<NodeIdx> {
        self.tangent_of.get(&base).copied()
    }
}

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Hyperedge>,
    index: BTreeMap<String, NodeIdx>,
    vars: VarTable,
    constants: BTreeMap<NodeIdx, f64>,
    signature_declared: bool,
}

impl Builder {
    fn uniq_id(&self, base: &str) -> String {
        if !self.index.contains_key(base) {
            return base.to_string();
        }
        let mut n = 0;
        loop {
            let candidate = format!("{base}.{n}");
            if !self.index.contains_key(&candidate) {
                return candidate;
            }
            n += 1;
        }
    }

    fn fresh_dim(&mut self, origin: &str) -> Dimension {
        Dimension::var(self.vars.fresh(origin), 1)
    }

    fn add_node(&mut self, node: Node) -> NodeIdx {
        let idx = self.nodes.len();
        self.index.insert(node.id.clone(), idx);
        self.nodes.push(node);
        idx
    }

    fn intermediate(&mut self, id_hint: &str, shape: Vec<u64>) -> NodeIdx {
        let id = self.uniq_id(id_hint);
        let dim = self.fresh_dim(&id);
        self.add_node(Node {
            id,
            role: Role::Intermediate,
            shape,
            dim,
            declared_grades: None,
            range: None,
        })
    }

    fn constant(
        &mut self,
        id_hint: &str,
        shape: Vec<u64>,
        dim: Dimension,
        grades: Option<GradeSet>,
        value: f64,
    ) -> NodeIdx {
        let id = self.uniq_id(id_hint);
        let idx = self.add_node(Node {
            id,
            role: Role::Input,
            shape,
            dim,
            declared_grades: if self.signature_declared { grades } else { None },
            range: Some(crate::graph::Interval::point(value)),
        });
        self.constants.insert(idx, value);
        idx
    }

    fn edge(&mut self, op: OpKind, inputs: Vec<NodeIdx>, output: NodeIdx) {
        self.edges.push(Hyperedge { op, inputs, output: Some(output), deferred: false });
    }
}

/// Builds the combined primal+tangent graph for differentiation along `seed`.
pub fn derive_tangent_graph(g: &Graph, seed_id: &str) -> Result<TangentGraph, DiffError> {
    let seed = g
        .node_idx(seed_id)
        .ok_or_else(|| DiffError::UnknownSeed { id: seed_id.to_string() })?;
    if !g.nodes[seed].role.is_boundary() {
        return Err(DiffError::SeedNotBoundary { id: seed_id.to_string() });
    }

    // Solved base dimensions pin the boundary tangent dimensions.
    let (_, solved, errors, vars) = crate::graph::solve_dimensions_of(g);
    if let Some(first) = errors.first() {
        return Err(DiffError::BaseRejected { message: first.message.clone() });
    }

    let mut b = Builder {
        nodes: g.nodes.clone(),
        edges: g.edges.clone(),
        index: (0..g.nodes.len()).map(|i| (g.nodes[i].id.clone(), i)).collect(),
        vars,
        constants: BTreeMap::new(),
        signature_declared: g.signature.is_some(),
    };
    let base_node_count = g.nodes.len();
    let mut tangent_of: BTreeMap<NodeIdx, NodeIdx> = BTreeMap::new();

    // Boundary tangents: the seed gets the dimensionless constant 1, every
    // other input or parameter a dimensioned 0. Grade sets take the base
    // node's grades plus the scalar grade so constant values stay admissible.
    for idx in 0..base_node_count {
        let node = &g.nodes[idx];
        if !node.role.is_boundary() {
            continue;
        }
        let grades = node.declared_grades.map(|s| s.union(GradeSet::singleton(0)));
        let (dim, value) = if idx == seed {
            (Dimension::identity(), 1.0)
        } else {
            (gradient_dimension(&solved[idx], &solved[seed]), 0.0)
        };
        let id_hint = format!("{}@tan", node.id);
        let shape = node.shape.clone();
        let t = b.constant(&id_hint, shape, dim, grades, value);
        tangent_of.insert(idx, t);
    }

    // Produced tangents, in producer order so inputs' tangents exist.
    for &idx in g.topo_order() {
        let Some(edge_idx) = g.producer(idx) else { continue };
        let e = g.edges[edge_idx].clone();
        let y = idx;
        let y_id = g.nodes[y].id.clone();
        let y_shape = g.nodes[y].shape.clone();
        let id_hint = format!("{y_id}@tan");

        let t_y = b.intermediate(&id_hint, y_shape.clone());
        tangent_of.insert(y, t_y);

        match e.op {
            OpKind::Add | OpKind::Sub => {
                let (tu, tv) = (tangent_of[&e.inputs[0]], tangent_of[&e.inputs[1]]);
                b.edge(e.op, vec![tu, tv], t_y);
            }
            OpKind::Neg | OpKind::SumReduce | OpKind::GradeProject(_) => {
                let tu = tangent_of[&e.inputs[0]];
                b.edge(e.op, vec![tu], t_y);
            }
            OpKind::Mul | OpKind::Geometric | OpKind::Wedge | OpKind::Dot => {
                // Bilinear rule: d(u o v) = du o v + u o dv.
                let (u, v) = (e.inputs[0], e.inputs[1]);
                let (tu, tv) = (tangent_of[&u], tangent_of[&v]);
                let p1 = b.intermediate(&format!("{y_id}@tan.l"), y_shape.clone());
                let p2 = b.intermediate(&format!("{y_id}@tan.r"), y_shape.clone());
                b.edge(e.op, vec![tu, v], p1);
                b.edge(e.op, vec![u, tv], p2);
                b.edge(OpKind::Add, vec![p1, p2], t_y);
            }
            OpKind::Div => {
                // d(u/v) = (du*v - u*dv) / v^2.
                let (u, v) = (e.inputs[0], e.inputs[1]);
                let (tu, tv) = (tangent_of[&u], tangent_of[&v]);
                let a = b.intermediate(&format!("{y_id}@tan.l"), y_shape.clone());
                let c = b.intermediate(&format!("{y_id}@tan.r"), y_shape.clone());
                let num = b.intermediate(&format!("{y_id}@tan.num"), y_shape.clone());
                let den_shape = g.nodes[v].shape.clone();
                let den = b.intermediate(&format!("{y_id}@tan.den"), den_shape);
                b.edge(OpKind::Mul, vec![tu, v], a);
                b.edge(OpKind::Mul, vec![u, tv], c);
                b.edge(OpKind::Sub, vec![a, c], num);
                b.edge(OpKind::Pow(2), vec![v], den);
                b.edge(OpKind::Div, vec![num, den], t_y);
            }
            OpKind::Pow(0) => {
                // d(u^0) = 0 * du, giving the zero the right dimension.
                let u = e.inputs[0];
                let tu = tangent_of[&u];
                let zero = b.constant(
                    &format!("{y_id}@tan.z"),
                    Vec::new(),
                    solved[u].inverse(),
                    Some(GradeSet::singleton(0)),
                    0.0,
                );
                b.edge(OpKind::Mul, vec![zero, tu], t_y);
            }
            OpKind::Pow(k) => {
                // d(u^k) = k * u^(k-1) * du.
                let u = e.inputs[0];
                let tu = tangent_of[&u];
                let u_shape = g.nodes[u].shape.clone();
                let p = b.intermediate(&format!("{y_id}@tan.p"), u_shape.clone());
                let q = b.intermediate(&format!("{y_id}@tan.q"), u_shape);
                let kconst = b.constant(
                    &format!("{y_id}@tan.k"),
                    Vec::new(),
                    Dimension::identity(),
                    Some(GradeSet::singleton(0)),
                    k as f64,
                );
                b.edge(OpKind::Pow(k - 1), vec![u], p);
                b.edge(OpKind::Mul, vec![p, tu], q);
                b.edge(OpKind::Mul, vec![kconst, q], t_y);
            }
            OpKind::ConsumeExternal => unreachable!("sinks produce nothing"),
        }
    }

    // Tangents of graph outputs become outputs themselves.
    let mut outputs = g.outputs.clone();
    for &o in &g.outputs {
        let t = tangent_of[&o];
        b.nodes[t].role = Role::Output;
        outputs.push(t);
    }

    let graph = build_graph(
        g.basis.clone(),
        g.signature,
        b.nodes,
        b.edges,
        outputs,
        b.vars,
        b.index,
    )?;
    Ok(TangentGraph {
        graph,
        seed,
        tangent_of,
        constants: b.constants,
        base_node_count,
    })
}

/// A closure violation: the tangent graph of an accepted base graph was
/// rejected. This indicates a bug in the fragment, not bad user input.
#[derive(Debug, Error)]
#[error("closure-violation: tangent graph rejected with {} error(s)", report.errors.len())]
pub struct ClosureViolation {
    pub report: ElaborationReport,
}

/// Re-elaborates the combined graph; acceptance is the closure property.
pub fn check_closure(
    tg: &TangentGraph,
    config: &Config,
) -> Result<ElaborationReport, ClosureViolation> {
    let report = elaborate(&tg.graph, config);
    if report.accepted {
        Ok(report)
    } else {
        Err(ClosureViolation { report })
    }
}

/// Evaluation trace: what the memory story of forward mode rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalTrace {
    /// Peak number of simultaneously live tangent-side value buffers.
    /// Constant immediates are not buffers; they fold into the instruction
    /// stream.
    pub peak_live_tangent_buffers: usize,
    pub total_nodes_evaluated: usize,
}

/// Result of a combined primal+tangent evaluation, keyed by the base graph's
/// output ids.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub primal: BTreeMap<String, Vec<f64>>,
    pub tangent: BTreeMap<String, Vec<f64>>,
    pub trace: EvalTrace,
}

/// Evaluates primal and tangent in a single liveness-tracked pass.
pub fn evaluate_forward(
    tg: &TangentGraph,
    inputs: &BTreeMap<String, Vec<f64>>,
) -> Result<EvalResult, EvalError> {
    let g = &tg.graph;
    let state = eval_graph(g, inputs, &tg.constants, tg.base_node_count)?;
    let mut primal = BTreeMap::new();
    let mut tangent = BTreeMap::new();
    for &o in g.outputs.iter().filter(|&&o| o < tg.base_node_count) {
        let id = g.nodes[o].id.clone();
        primal.insert(id.clone(), state.values[o].clone().expect("outputs stay live"));
        let t = tg.tangent_of[&o];
        tangent.insert(id, state.values[t].clone().expect("outputs stay live"));
    }
    Ok(EvalResult { primal, tangent, trace: state.trace })
}

/// Evaluates a plain graph (no tangent side), returning output values.
pub fn evaluate_primal(
    g: &Graph,
    inputs: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, Vec<f64>>, EvalError> {
    let state = eval_graph(g, inputs, &BTreeMap::new(), g.nodes.len())?;
    let mut out = BTreeMap::new();
    for &o in &g.outputs {
        out.insert(
            g.nodes[o].id.clone(),
            state.values[o].clone().expect("outputs stay live"),
        );
    }
    Ok(out)
}

struct EvalState {
    values: Vec<Option<Vec<f64>>>,
    trace: EvalTrace,
}

fn eval_graph(
    g: &Graph,
    inputs: &BTreeMap<String, Vec<f64>>,
    constants: &BTreeMap<NodeIdx, f64>,
    tangent_floor: usize,
) -> Result<EvalState, EvalError> {
    let n = g.nodes.len();
    let mut values: Vec<Option<Vec<f64>>> = vec![None; n];
    // Remaining uses per node, with multiplicity; sinks fire immediately.
    let mut uses = vec![0usize; n];
    for e in &g.edges {
        if e.op.is_sink() {
            continue;
        }
        for &i in &e.inputs {
            uses[i] += 1;
        }
    }
    let is_output: Vec<bool> = (0..n).map(|i| g.is_output(i)).collect();

    let mut live_tangent = 0usize;
    let mut peak = 0usize;
    let mut evaluated = 0usize;

    let elems_of = |idx: NodeIdx| -> usize {
        g.nodes[idx].shape.iter().product::<u64>().max(1) as usize
    };

    let counts_as_tangent_buffer =
        |idx: NodeIdx| idx >= tangent_floor && !constants.contains_key(&idx);

    let free_if_dead = |idx: NodeIdx,
                            uses: &[usize],
                            values: &mut [Option<Vec<f64>>],
                            live_tangent: &mut usize| {
        if uses[idx] == 0 && !is_output[idx] && values[idx].is_some() {
            values[idx] = None;
            if counts_as_tangent_buffer(idx) {
                *live_tangent -= 1;
            }
        }
    };

    for &idx in g.topo_order() {
        let node = &g.nodes[idx];
        let value: Vec<f64> = match g.producer(idx) {
            None => {
                let want = elems_of(idx);
                if let Some(&c) = constants.get(&idx) {
                    vec![c; want]
                } else {
                    let v = inputs
                        .get(&node.id)
                        .ok_or_else(|| EvalError::MissingInput { id: node.id.clone() })?;
                    if v.len() != want {
                        return Err(EvalError::ShapeMismatch {
                            id: node.id.clone(),
                            got: v.len(),
                            want,
                        });
                    }
                    v.clone()
                }
            }
            Some(edge_idx) => {
                let e = &g.edges[edge_idx];
                let arg = |i: usize| values[e.inputs[i]].as_ref().expect("topo order");
                match e.op {
                    OpKind::Add => zip_broadcast(arg(0), arg(1), |a, b| a + b),
                    OpKind::Sub => zip_broadcast(arg(0), arg(1), |a, b| a - b),
                    OpKind::Mul => zip_broadcast(arg(0), arg(1), |a, b| a * b),
                    OpKind::Div => {
                        if arg(1).iter().any(|&v| v == 0.0) {
                            return Err(EvalError::DivisionByZero { id: node.id.clone() });
                        }
                        zip_broadcast(arg(0), arg(1), |a, b| a / b)
                    }
                    OpKind::Neg => arg(0).iter().map(|v| -v).collect(),
                    OpKind::Pow(k) => {
                        if k < 0 && arg(0).iter().any(|&v| v == 0.0) {
                            return Err(EvalError::DivisionByZero { id: node.id.clone() });
                        }
                        arg(0).iter().map(|v| v.powi(k as i32)).collect()
                    }
                    OpKind::SumReduce => vec![arg(0).iter().sum()],
                    OpKind::Dot => {
                        vec![arg(0).iter().zip(arg(1)).map(|(a, b)| a * b).sum()]
                    }
                    OpKind::Geometric => {
                        return Err(EvalError::Unsupported { op: "geometric" })
                    }
                    OpKind::Wedge => return Err(EvalError::Unsupported { op: "wedge" }),
                    OpKind::GradeProject(_) => {
                        return Err(EvalError::Unsupported { op: "grade_project" })
                    }
                    OpKind::ConsumeExternal => unreachable!("sinks have no output"),
                }
            }
        };

        values[idx] = Some(value);
        evaluated += 1;
        if counts_as_tangent_buffer(idx) {
            live_tangent += 1;
            peak = peak.max(live_tangent);
        }

        // Retire this node's producer inputs whose last use this was.
        if let Some(edge_idx) = g.producer(idx) {
            let inputs_of_edge = g.edges[edge_idx].inputs.clone();
            for i in inputs_of_edge {
                uses[i] -= 1;
                free_if_dead(i, &uses, &mut values, &mut live_tangent);
            }
        }
        // A node consumed by nothing (sink-only or dangling) dies at birth.
        free_if_dead(idx, &uses, &mut values, &mut live_tangent);
    }

    Ok(EvalState {
        values,
        trace: EvalTrace { peak_live_tangent_buffers: peak, total_nodes_evaluated: evaluated },
    })
}

fn zip_broadcast(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.len(), b.len()) {
        (1, _) => b.iter().map(|&y| f(a[0], y)).collect(),
        (_, 1) => a.iter().map(|&x| f(x, b[0])).collect(),
        _ => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Central-difference oracle: perturbs the seed by `h` elementwise and
/// compares against the tangent values, returning the maximum relative error
/// over all outputs.
pub fn finite_difference_check(
    g: &Graph,
    inputs: &BTreeMap<String, Vec<f64>>,
    seed_id: &str,
    h: f64,
) -> Result<f64, DiffError> {
    let tg = derive_tangent_graph(g, seed_id)?;
    finite_difference_check_with(&tg, g, inputs, seed_id, h)
}

/// As [`finite_difference_check`], reusing an already-built tangent graph.
pub fn finite_difference_check_with(
    tg: &TangentGraph,
    g: &Graph,
    inputs: &BTreeMap<String, Vec<f64>>,
    seed_id: &str,
    h: f64,
) -> Result<f64, DiffError> {
    let forward = evaluate_forward(tg, inputs)?;

    let perturb = |delta: f64| -> BTreeMap<String, Vec<f64>> {
        let mut m = inputs.clone();
        if let Some(v) = m.get_mut(seed_id) {
            for x in v.iter_mut() {
                *x += delta;
            }
        }
        m
    };
    let plus = evaluate_primal(g, &perturb(h))?;
    let minus = evaluate_primal(g, &perturb(-h))?;

    let mut max_rel = 0.0f64;
    for (id, tans) in &forward.tangent {
        let p = &plus[id];
        let m = &minus[id];
        for ((t, hi), lo) in tans.iter().zip(p).zip(m) {
            let fd = (hi - lo) / (2.0 * h);
            let denom = t.abs().max(fd.abs());
            if denom > 0.0 {
                max_rel = max_rel.max((fd - t).abs() / denom);
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dims::{format_dimension, parse_dimension};
    use crate::graph::load_spec;

    fn scalar_inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), vec![*v])).collect()
    }

    fn square_spec() -> Graph {
        load_spec(
            r#"{
                "nodes": [
                    {"id": "x", "role": "input", "dim": "m", "range": [0.5, 4.0]},
                    {"id": "y", "role": "output"}
                ],
                "edges": [{"op": "pow", "k": 2, "inputs": ["x"], "output": "y"}],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap()
    }

    #[test]
    fn square_tangent_dimension_is_linear() {
        let g = square_spec();
        let tg = derive_tangent_graph(&g, "x").unwrap();
        let report = check_closure(&tg, &Config::default()).unwrap();
        let y = g.node_idx("y").unwrap();
        let ty = tg.tangent_idx(y).unwrap();
        let dim = format_dimension(
            &report.solved_dims[ty],
            &tg.graph.basis,
            &tg.graph.vars,
        );
        assert_eq!(dim, "m");
    }

    #[test]
    fn square_evaluates_with_power_rule() {
        let g = square_spec();
        let tg = derive_tangent_graph(&g, "x").unwrap();
        let r = evaluate_forward(&tg, &scalar_inputs(&[("x", 3.0)])).unwrap();
        assert_eq!(r.primal["y"], vec![9.0]);
        assert_eq!(r.tangent["y"], vec![6.0]);
    }

    #[test]
    fn product_tangent_takes_the_other_factor() {
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "u", "role": "input", "dim": "m"},
                    {"id": "v", "role": "input", "dim": "s"},
                    {"id": "y", "role": "output"}
                ],
                "edges": [{"op": "mul", "inputs": ["u", "v"], "output": "y"}],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap();
        let tg = derive_tangent_graph(&g, "u").unwrap();
        let r = evaluate_forward(&tg, &scalar_inputs(&[("u", 2.0), ("v", 5.0)])).unwrap();
        assert_eq!(r.primal["y"], vec![10.0]);
        assert_eq!(r.tangent["y"], vec![5.0]);
    }

    #[test]
    fn seed_must_be_boundary() {
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "x", "role": "input", "dim": "m"},
                    {"id": "t", "role": "intermediate"},
                    {"id": "y", "role": "output"}
                ],
                "edges": [
                    {"op": "mul", "inputs": ["x", "x"], "output": "t"},
                    {"op": "neg", "inputs": ["t"], "output": "y"}
                ],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap();
        assert!(matches!(
            derive_tangent_graph(&g, "t"),
            Err(DiffError::SeedNotBoundary { .. })
        ));
        assert!(matches!(
            derive_tangent_graph(&g, "ghost"),
            Err(DiffError::UnknownSeed { .. })
        ));
    }

    #[test]
    fn force_loss_tangent_dimension() {
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "F", "role": "input", "dim": "N"},
                    {"id": "mass", "role": "parameter", "dim": "kg"},
                    {"id": "accel", "role": "input", "dim": "m*s^-2"},
                    {"id": "ma", "role": "intermediate"},
                    {"id": "loss", "role": "output"}
                ],
                "edges": [
                    {"op": "mul", "inputs": ["mass", "accel"], "output": "ma"},
                    {"op": "sub", "inputs": ["F", "ma"], "output": "loss"}
                ],
                "outputs": ["loss"]
            }"#,
            None,
        )
        .unwrap();
        let tg = derive_tangent_graph(&g, "mass").unwrap();
        let report = check_closure(&tg, &Config::default()).unwrap();
        let loss = g.node_idx("loss").unwrap();
        let t_loss = tg.tangent_idx(loss).unwrap();
        let mut vars = tg.graph.vars.clone();
        let expect = parse_dimension("m*s^-2", &tg.graph.basis, &mut vars).unwrap();
        assert_eq!(report.solved_dims[t_loss], expect);
    }

    fn unary_chain(depth: usize) -> Graph {
        let mut nodes = vec![
            r#"{"id": "x", "role": "input", "dim": "1", "range": [0.5, 2.0]}"#.to_string(),
        ];
        let mut edges = Vec::new();
        let ops = ["neg", "sum_reduce"];
        for i in 0..depth {
            let prev = if i == 0 { "x".to_string() } else { format!("n{}", i - 1) };
            let id = if i + 1 == depth { "y".to_string() } else { format!("n{i}") };
            let role = if i + 1 == depth { "output" } else { "intermediate" };
            nodes.push(format!(r#"{{"id": "{id}", "role": "{role}"}}"#));
            let op = ops[i % ops.len()];
            edges.push(format!(
                r#"{{"op": "{op}", "inputs": ["{prev}"], "output": "{id}"}}"#
            ));
        }
        let text = format!(
            r#"{{"nodes": [{}], "edges": [{}], "outputs": ["y"]}}"#,
            nodes.join(","),
            edges.join(",")
        );
        load_spec(&text, None).unwrap()
    }

    #[test]
    fn tangent_memory_is_depth_independent() {
        let mut peaks = Vec::new();
        for depth in [10usize, 100, 1000] {
            let g = unary_chain(depth);
            let tg = derive_tangent_graph(&g, "x").unwrap();
            let r = evaluate_forward(&tg, &scalar_inputs(&[("x", 1.25)])).unwrap();
            peaks.push(r.trace.peak_live_tangent_buffers);
            assert_eq!(r.trace.total_nodes_evaluated, tg.graph.nodes.len());
        }
        assert_eq!(peaks[0], peaks[1]);
        assert_eq!(peaks[1], peaks[2]);
    }

    #[test]
    fn central_difference_matches_simple_cases() {
        // y = x^2 at x = 3.
        let g = square_spec();
        let err = finite_difference_check(&g, &scalar_inputs(&[("x", 3.0)]), "x", 1e-5)
            .unwrap();
        assert!(err <= 1e-8, "relative error {err}");

        // Linear y = 3x: central difference is exact up to rounding.
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "c", "role": "input", "dim": "1"},
                    {"id": "x", "role": "input", "dim": "m"},
                    {"id": "y", "role": "output"}
                ],
                "edges": [{"op": "mul", "inputs": ["c", "x"], "output": "y"}],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap();
        let inputs = scalar_inputs(&[("c", 3.0), ("x", 1.0)]);
        let err = finite_difference_check(&g, &inputs, "x", 1e-5).unwrap();
        assert!(err <= 1e-12, "relative error {err}");

        // y = 1/x at x = 2.
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "one", "role": "input", "dim": "1"},
                    {"id": "x", "role": "input", "dim": "s"},
                    {"id": "y", "role": "output"}
                ],
                "edges": [{"op": "div", "inputs": ["one", "x"], "output": "y"}],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap();
        let inputs = scalar_inputs(&[("one", 1.0), ("x", 2.0)]);
        let err = finite_difference_check(&g, &inputs, "x", 1e-5).unwrap();
        assert!(err <= 1e-7, "relative error {err}");
    }

    #[test]
    fn division_by_zero_is_reported() {
        let g = load_spec(
            r#"{
                "nodes": [
                    {"id": "a", "role": "input", "dim": "m"},
                    {"id": "b", "role": "input", "dim": "s"},
                    {"id": "y", "role": "output"}
                ],
                "edges": [{"op": "div", "inputs": ["a", "b"], "output": "y"}],
                "outputs": ["y"]
            }"#,
            None,
        )
        .unwrap();
        let tg = derive_tangent_graph(&g, "a").unwrap();
        let err = evaluate_forward(&tg, &scalar_inputs(&[("a", 1.0), ("b", 0.0)]));
        assert!(matches!(err, Err(EvalError::DivisionByZero { .. })));
    }

    #[test]
    fn missing_input_is_reported() {
        let g = square_spec();
        let tg = derive_tangent_graph(&g, "x").unwrap();
        let err = evaluate_forward(&tg, &BTreeMap::new());
        assert!(matches!(err, Err(EvalError::MissingInput { .. })));
    }
}
