//! The elaboration chain: constraints, unification, grades, intervals,
//! representations, footprints, escape, allocation, sparsity, and scoring.

use std::collections::BTreeSet;
use std::time::Instant;

use crate::clifford::{build_cayley, grade_outer, CayleyTable, GradeSet};
use crate::dims::{DimVar, Dimension};
use crate::mdl::MdlScore;
use crate::unify::{
    free_variable_count, solve_system_collect, DimEquation, Substitution, UnifyError,
};

use super::escape::{classify_escape, plan_allocation, Allocation, EscapeClass};
use super::interval::Interval;
use super::repr::{select_representation, Representation};
use super::report::{ElaborationReport, SparsityReport};
use super::{Graph, OpKind};

/// Representation-selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReprMode {
    /// Select wherever an interval is derivable; stay quiet elsewhere.
    #[default]
    Auto,
    /// Every input and parameter must declare a range; missing ones are
    /// elaboration errors.
    Require,
    /// Skip representation selection entirely.
    Off,
}

/// Elaboration configuration.
#[derive(Debug, Clone)]
pub struct Config {
    /// Worst-case relative-spacing budget for representation selection.
    pub eps_budget: f64,
    /// Stack placement limit in bytes.
    pub stack_limit: u64,
    pub representations: ReprMode,
}

impl Default for Config {
    fn default() -> Self {
        Config { eps_budget: 1e-6, stack_limit: 65536, representations: ReprMode::Auto }
    }
}

/// Per-edge dimension constraints. Add/sub force all three dimensions equal;
/// mul and the bilinear Clifford ops multiply; div divides; pow raises to the
/// edge's integer parameter; the unary shape ops pass the dimension through.
pub fn generate_constraints(g: &Graph) -> Vec<DimEquation> {
    let mut eqs = Vec::new();
    for (i, e) in g.edges.iter().enumerate() {
        let prov = g.edge_label(i);
        let dim = |idx: usize| g.nodes[idx].dim.clone();
        let Some(out) = e.output else { continue };
        match e.op {
            OpKind::Add | OpKind::Sub => {
                eqs.push(DimEquation::new(dim(out), dim(e.inputs[0]), prov.clone()));
                eqs.push(DimEquation::new(dim(out), dim(e.inputs[1]), prov));
            }
            OpKind::Mul | OpKind::Geometric | OpKind::Wedge | OpKind::Dot => {
                let rhs = dim(e.inputs[0]).mul(&dim(e.inputs[1]));
                eqs.push(DimEquation::new(dim(out), rhs, prov));
            }
            OpKind::Div => {
                let rhs = dim(e.inputs[0]).div(&dim(e.inputs[1]));
                eqs.push(DimEquation::new(dim(out), rhs, prov));
            }
            OpKind::Pow(k) => {
                eqs.push(DimEquation::new(dim(out), dim(e.inputs[0]).pow(k), prov));
            }
            OpKind::Neg | OpKind::SumReduce | OpKind::GradeProject(_) => {
                eqs.push(DimEquation::new(dim(out), dim(e.inputs[0]), prov));
            }
            OpKind::ConsumeExternal => {}
        }
    }
    eqs
}

/// Typed elaboration failure, collected rather than thrown.
#[derive(Debug, Clone)]
pub struct ElabError {
    pub kind: ElabErrorKind,
    pub message: String,
    pub residual: Option<Dimension>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElabErrorKind {
    Inconsistent,
    Divisibility,
    StructurallyZero,
    GradeMismatch,
    NonScalarOperand,
    RangeUndetermined,
    RepresentationInadequate,
    MissingRange,
}

impl ElabErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElabErrorKind::Inconsistent => "inconsistent",
            ElabErrorKind::Divisibility => "divisibility",
            ElabErrorKind::StructurallyZero => "structurally-zero",
            ElabErrorKind::GradeMismatch => "grade-mismatch",
            ElabErrorKind::NonScalarOperand => "non-scalar-operand",
            ElabErrorKind::RangeUndetermined => "range-undetermined",
            ElabErrorKind::RepresentationInadequate => "representation-inadequate",
            ElabErrorKind::MissingRange => "missing-range",
        }
    }
}

fn from_unify(e: UnifyError, g: &Graph, vars: &crate::dims::VarTable) -> ElabError {
    let kind = match e.kind {
        crate::unify::UnifyErrorKind::Inconsistent => ElabErrorKind::Inconsistent,
        crate::unify::UnifyErrorKind::Divisibility => ElabErrorKind::Divisibility,
    };
    ElabError {
        kind,
        message: e.message(&g.basis, vars),
        residual: Some(e.residual),
        provenance: e.provenance,
    }
}

/// Forward topological grade propagation. Returns per-node grade sets (None
/// where an upstream failure blocks inference) and the violations found.
pub fn propagate_grades(
    g: &Graph,
    table: &CayleyTable,
) -> (Vec<Option<GradeSet>>, Vec<ElabError>) {
    let n = table.signature().total();
    let scalar = GradeSet::singleton(0);
    let mut sets: Vec<Option<GradeSet>> = vec![None; g.nodes.len()];
    let mut errors = Vec::new();

    for &idx in g.topo_order() {
        let node = &g.nodes[idx];
        let Some(edge_idx) = g.producer(idx) else {
            sets[idx] = node.declared_grades;
            continue;
        };
        let e = &g.edges[edge_idx];
        let prov = g.edge_label(edge_idx);
        let input_set = |i: usize| sets[e.inputs[i]];
        let computed: Option<GradeSet> = match e.op {
            OpKind::Geometric => match (input_set(0), input_set(1)) {
                (Some(a), Some(b)) => Some(table.grade_product_set(a, b)),
                _ => None,
            },
            OpKind::Wedge => match (input_set(0), input_set(1)) {
                (Some(a), Some(b)) => {
                    let mut out = GradeSet::EMPTY;
                    for j in a.iter() {
                        for k in b.iter() {
                            out = out.union(grade_outer(j, k, n));
                        }
                    }
                    Some(out)
                }
                _ => None,
            },
            OpKind::GradeProject(k) => {
                input_set(0).map(|s| s.intersect(GradeSet::singleton(k)))
            }
            OpKind::Add | OpKind::Sub => match (input_set(0), input_set(1)) {
                (Some(a), Some(b)) => Some(a.union(b)),
                _ => None,
            },
            OpKind::Dot => match (input_set(0), input_set(1)) {
                (Some(_), Some(_)) => Some(scalar),
                _ => None,
            },
            OpKind::Mul => match (input_set(0), input_set(1)) {
                (Some(a), Some(b)) => {
                    if a == scalar {
                        Some(b)
                    } else if b == scalar {
                        Some(a)
                    } else {
                        errors.push(ElabError {
                            kind: ElabErrorKind::NonScalarOperand,
                            message: format!(
                                "mul of grade sets {a} and {b}: use geometric for multivector products"
                            ),
                            residual: None,
                            provenance: vec![prov.clone()],
                        });
                        None
                    }
                }
                _ => None,
            },
            OpKind::Div => match (input_set(0), input_set(1)) {
                (Some(a), Some(b)) => {
                    if b == scalar {
                        Some(a)
                    } else {
                        errors.push(ElabError {
                            kind: ElabErrorKind::NonScalarOperand,
                            message: format!("division by a grade-{b} value"),
                            residual: None,
                            provenance: vec![prov.clone()],
                        });
                        None
                    }
                }
                _ => None,
            },
            OpKind::Pow(_) => match input_set(0) {
                Some(a) if a == scalar => Some(scalar),
                Some(a) => {
                    errors.push(ElabError {
                        kind: ElabErrorKind::NonScalarOperand,
                        message: format!("pow of a grade-{a} value"),
                        residual: None,
                        provenance: vec![prov.clone()],
                    });
                    None
                }
                None => None,
            },
            OpKind::Neg | OpKind::SumReduce => input_set(0),
            OpKind::ConsumeExternal => None,
        };

        let Some(computed) = computed else {
            sets[idx] = None;
            continue;
        };
        if computed.is_empty() {
            errors.push(ElabError {
                kind: ElabErrorKind::StructurallyZero,
                message: format!(
                    "node `{}` is structurally zero but used as a value",
                    node.id
                ),
                residual: None,
                provenance: vec![prov],
            });
            sets[idx] = None;
            continue;
        }
        if let Some(declared) = node.declared_grades {
            if !computed.is_subset_of(declared) {
                errors.push(ElabError {
                    kind: ElabErrorKind::GradeMismatch,
                    message: format!(
                        "node `{}` declares grades {declared} but computes {computed}",
                        node.id
                    ),
                    residual: None,
                    provenance: vec![prov],
                });
            }
        }
        sets[idx] = Some(computed);
    }
    (sets, errors)
}

/// Forward interval propagation; division or negative powers over intervals
/// containing zero produce range-undetermined errors instead of widening.
fn propagate_intervals(
    g: &Graph,
    grade_sets: &[Option<GradeSet>],
    table: Option<&CayleyTable>,
    errors: &mut Vec<ElabError>,
) -> Vec<Option<Interval>> {
    let mut out: Vec<Option<Interval>> = vec![None; g.nodes.len()];
    for &idx in g.topo_order() {
        let node = &g.nodes[idx];
        if let Some(declared) = node.range {
            out[idx] = Some(declared);
            continue;
        }
        let Some(edge_idx) = g.producer(idx) else { continue };
        let e = &g.edges[edge_idx];
        let prov = g.edge_label(edge_idx);
        let iv = |i: usize| out[e.inputs[i]];
        let shape_len = |i: usize| -> u64 {
            g.nodes[e.inputs[i]].shape.iter().product::<u64>().max(1)
        };
        let computed = match e.op {
            OpKind::Add => iv(0).zip(iv(1)).map(|(a, b)| a.add(&b)),
            OpKind::Sub => iv(0).zip(iv(1)).map(|(a, b)| a.sub(&b)),
            OpKind::Neg => iv(0).map(|a| a.neg()),
            OpKind::Mul => iv(0).zip(iv(1)).map(|(a, b)| a.mul(&b)),
            OpKind::Div => match iv(0).zip(iv(1)) {
                Some((a, b)) => match a.div(&b) {
                    Some(r) => Some(r),
                    None => {
                        errors.push(range_undetermined(&node.id, &prov, "divisor"));
                        None
                    }
                },
                None => None,
            },
            OpKind::Pow(k) => match iv(0) {
                Some(a) => match a.powi(k) {
                    Some(r) => Some(r),
                    None => {
                        errors.push(range_undetermined(&node.id, &prov, "base"));
                        None
                    }
                },
                None => None,
            },
            OpKind::SumReduce => iv(0).map(|a| a.sum_of(shape_len(0))),
            OpKind::Dot => iv(0).zip(iv(1)).map(|(a, b)| a.dot_of(&b, shape_len(0))),
            OpKind::Geometric | OpKind::Wedge => match (iv(0), iv(1), table) {
                (Some(a), Some(b), Some(t)) => {
                    let terms = max_blade_fan_in(
                        t,
                        grade_sets[e.inputs[0]],
                        grade_sets[e.inputs[1]],
                        e.op == OpKind::Wedge,
                    );
                    Some(a.bilinear_bound(&b, terms))
                }
                _ => None,
            },
            OpKind::GradeProject(_) => iv(0).map(|a| a.with_zero()),
            OpKind::ConsumeExternal => None,
        };
        out[idx] = computed;
    }
    out
}

fn range_undetermined(node: &str, prov: &str, what: &str) -> ElabError {
    ElabError {
        kind: ElabErrorKind::RangeUndetermined,
        message: format!("node `{node}`: {what} interval contains zero"),
        residual: None,
        provenance: vec![prov.to_string()],
    }
}

/// Largest number of signed coefficient products that can land on a single
/// output blade for the given input grade sets.
fn max_blade_fan_in(
    table: &CayleyTable,
    a: Option<GradeSet>,
    b: Option<GradeSet>,
    wedge_only: bool,
) -> u64 {
    let n = table.signature().total();
    let a = a.unwrap_or_else(|| GradeSet::full(n));
    let b = b.unwrap_or_else(|| GradeSet::full(n));
    let mut counts = vec![0u64; table.blade_count()];
    for x in table.blades() {
        if !a.contains(x.grade()) {
            continue;
        }
        for y in table.blades() {
            if !b.contains(y.grade()) {
                continue;
            }
            if wedge_only && x.0 & y.0 != 0 {
                continue;
            }
            if table.sign(x, y) != 0 {
                counts[(x.0 ^ y.0) as usize] += 1;
            }
        }
    }
    counts.into_iter().max().unwrap_or(0).max(1)
}

/// Runs the full elaboration chain, collecting every violation.
pub fn elaborate(g: &Graph, config: &Config) -> ElaborationReport {
    let started = Instant::now();
    let mut vars = g.vars.clone();
    let mut errors: Vec<ElabError> = Vec::new();

    // Dimensions.
    let eqs = generate_constraints(g);
    let (subst, unify_errors) = solve_system_collect(&eqs, &mut vars);
    for e in unify_errors {
        errors.push(from_unify(e, g, &vars));
    }
    let solved: Vec<Dimension> =
        g.nodes.iter().map(|n| subst.apply(&n.dim)).collect();

    // Grades.
    let table = g
        .signature
        .map(|sig| build_cayley(sig).expect("signature validated at load"));
    let grade_sets: Vec<Option<GradeSet>> = match &table {
        Some(t) => {
            let (sets, grade_errors) = propagate_grades(g, t);
            errors.extend(grade_errors);
            sets
        }
        None => vec![None; g.nodes.len()],
    };

    // Value ranges.
    let intervals = propagate_intervals(g, &grade_sets, table.as_ref(), &mut errors);

    // Representation -> footprint -> allocation, behind escape analysis.
    let escapes = classify_escape(g);
    let mut reprs: Vec<Option<Representation>> = vec![None; g.nodes.len()];
    let mut footprints: Vec<Option<u64>> = vec![None; g.nodes.len()];
    let mut allocations: Vec<Option<Allocation>> = vec![None; g.nodes.len()];
    if config.representations != ReprMode::Off {
        for idx in 0..g.nodes.len() {
            let node = &g.nodes[idx];
            match intervals[idx] {
                Some(iv) => match select_representation(&iv, config.eps_budget) {
                    Ok(r) => {
                        let elems: u64 = node.shape.iter().product::<u64>().max(1);
                        let bytes = (r.width_bits as u64 / 8) * elems;
                        reprs[idx] = Some(r);
                        footprints[idx] = Some(bytes);
                        allocations[idx] =
                            Some(plan_allocation(escapes[idx], bytes, config.stack_limit));
                    }
                    Err(e) => errors.push(ElabError {
                        kind: ElabErrorKind::RepresentationInadequate,
                        message: format!("node `{}`: {e}", node.id),
                        residual: None,
                        provenance: vec![node.id.clone()],
                    }),
                },
                None => {
                    if config.representations == ReprMode::Require
                        && node.role.is_boundary()
                    {
                        errors.push(ElabError {
                            kind: ElabErrorKind::MissingRange,
                            message: format!(
                                "{} node `{}` declares no value range",
                                node.role.as_str(),
                                node.id
                            ),
                            residual: None,
                            provenance: vec![node.id.clone()],
                        });
                    }
                }
            }
            // Escape alone fixes non-stack placement even without a footprint.
            if allocations[idx].is_none() && escapes[idx] > EscapeClass::StackScoped {
                allocations[idx] = Some(plan_allocation(escapes[idx], 0, config.stack_limit));
            }
        }
    }

    // Sparsity statistics per geometric edge.
    let mut sparsity = Vec::new();
    if let Some(t) = &table {
        for (i, e) in g.edges.iter().enumerate() {
            if e.op != OpKind::Geometric {
                continue;
            }
            let (Some(a), Some(b)) =
                (grade_sets[e.inputs[0]], grade_sets[e.inputs[1]])
            else {
                continue;
            };
            let (nonzero, total) = t.sparsity_count(a, b);
            let result = t.grade_product_set(a, b);
            sparsity.push(SparsityReport {
                edge: i,
                output: e.output.map(|o| g.nodes[o].id.clone()).unwrap_or_default(),
                left_grades: a.grades(),
                right_grades: b.grades(),
                nonzero,
                total,
                result_grades: result.grades(),
            });
        }
    }

    // Description length: free variables over everything the system mentions.
    let mut sys_vars: BTreeSet<DimVar> = BTreeSet::new();
    for n in &g.nodes {
        for (v, _) in n.dim.vars_iter() {
            sys_vars.insert(v);
        }
    }
    for eq in &eqs {
        for (v, _) in eq.lhs.vars_iter().chain(eq.rhs.vars_iter()) {
            sys_vars.insert(v);
        }
    }
    let free = free_variable_count(&subst, &sys_vars);
    let score = MdlScore::from_free_vars(free);
    let grade_entries = table
        .as_ref()
        .map(|_| sparsity.iter().map(|s| s.nonzero).sum::<u64>());

    let elapsed = started.elapsed();
    ElaborationReport::assemble(
        g,
        &vars,
        &subst,
        solved,
        grade_sets,
        intervals,
        escapes,
        reprs,
        footprints,
        allocations,
        sparsity,
        score,
        grade_entries,
        errors,
        elapsed,
    )
}

/// Convenience: the substitution and raw errors behind a report, for callers
/// that need typed access (tests, the differentiation module).
pub(crate) fn solve_dimensions(
    g: &Graph,
) -> (Substitution, Vec<Dimension>, Vec<ElabError>, crate::dims::VarTable) {
    let mut vars = g.vars.clone();
    let eqs = generate_constraints(g);
    let (subst, unify_errors) = solve_system_collect(&eqs, &mut vars);
    let solved: Vec<Dimension> = g.nodes.iter().map(|n| subst.apply(&n.dim)).collect();
    let errors = unify_errors
        .into_iter()
        .map(|e| from_unify(e, g, &vars))
        .collect();
    (subst, solved, errors, vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_spec;

    fn fma_spec(accel_dim: &str) -> String {
        format!(
            r#"{{
                "nodes": [
                    {{"id": "F", "role": "input", "dim": "N", "range": [0.5, 2.0]}},
                    {{"id": "mass", "role": "parameter", "dim": "kg", "range": [1.0, 10.0]}},
                    {{"id": "accel", "role": "input", "dim": "{accel_dim}", "range": [0.1, 2.0]}},
                    {{"id": "ma", "role": "intermediate"}},
                    {{"id": "loss", "role": "output"}}
                ],
                "edges": [
                    {{"op": "mul", "inputs": ["mass", "accel"], "output": "ma"}},
                    {{"op": "sub", "inputs": ["F", "ma"], "output": "loss"}}
                ],
                "outputs": ["loss"]
            }}"#
        )
    }

    #[test]
    fn force_equals_mass_times_acceleration_is_accepted() {
        let g = load_spec(&fma_spec("m*s^-2"), None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(report.accepted, "{:?}", report.errors);
        let loss = report.nodes.iter().find(|n| n.id == "loss").unwrap();
        assert_eq!(loss.dim, "kg*m*s^-2");
        assert_eq!(report.mdl.free_vars, 0);
        assert_eq!(report.mdl.score, "2^-0");
    }

    #[test]
    fn force_minus_momentum_rate_is_rejected_with_residual() {
        let g = load_spec(&fma_spec("m*s^-1"), None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(!report.accepted);
        let err = &report.errors[0];
        assert_eq!(err.kind, "inconsistent");
        let residual = err.residual.as_deref().unwrap();
        assert!(residual == "s^-1" || residual == "s", "residual {residual}");
    }

    #[test]
    fn mixed_gradient_accumulation_is_rejected() {
        // Accumulating a stiffness-like gradient with a power-like gradient.
        let text = r#"{
            "nodes": [
                {"id": "g1", "role": "input", "dim": "N/m", "range": [0.1, 1.0]},
                {"id": "g2", "role": "input", "dim": "J/s", "range": [0.1, 1.0]},
                {"id": "acc", "role": "output"}
            ],
            "edges": [{"op": "add", "inputs": ["g1", "g2"], "output": "acc"}],
            "outputs": ["acc"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(!report.accepted);
        assert_eq!(report.errors[0].kind, "inconsistent");
    }

    #[test]
    fn every_violation_is_collected_in_one_pass() {
        // Two independent dimension errors surface together.
        let text = r#"{
            "nodes": [
                {"id": "a", "role": "input", "dim": "m"},
                {"id": "b", "role": "input", "dim": "s"},
                {"id": "c", "role": "input", "dim": "kg"},
                {"id": "u", "role": "output"},
                {"id": "v", "role": "output"}
            ],
            "edges": [
                {"op": "add", "inputs": ["a", "b"], "output": "u"},
                {"op": "add", "inputs": ["b", "c"], "output": "v"}
            ],
            "outputs": ["u", "v"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert_eq!(report.errors.len(), 2);
    }

    #[test]
    fn elaboration_is_deterministic_byte_for_byte() {
        let g1 = load_spec(&fma_spec("m*s^-2"), None).unwrap();
        let g2 = load_spec(&fma_spec("m*s^-2"), None).unwrap();
        let r1 = elaborate(&g1, &Config::default()).to_json();
        let r2 = elaborate(&g2, &Config::default()).to_json();
        assert_eq!(r1, r2);
    }

    fn bivector_product_spec() -> &'static str {
        r#"{
            "signature": {"p": 3, "q": 0, "r": 1},
            "nodes": [
                {"id": "a", "role": "input", "dim": "1", "grades": [2], "range": [-1.0, 1.0]},
                {"id": "b", "role": "input", "dim": "1", "grades": [2], "range": [-1.0, 1.0]},
                {"id": "p", "role": "output"}
            ],
            "edges": [{"op": "geometric", "inputs": ["a", "b"], "output": "p"}],
            "outputs": ["p"]
        }"#
    }

    #[test]
    fn bivector_product_grades_are_even() {
        let g = load_spec(bivector_product_spec(), None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(report.accepted, "{:?}", report.errors);
        let p = report.nodes.iter().find(|n| n.id == "p").unwrap();
        let grades = p.grades.clone().unwrap();
        assert!(grades.iter().all(|g| g % 2 == 0));
        assert!(!grades.contains(&1) && !grades.contains(&3));
        // Sparsity statistics ride along on the geometric edge.
        assert_eq!(report.sparsity.len(), 1);
        assert_eq!(report.sparsity[0].total, 36);
        assert_eq!(report.sparsity[0].nonzero, 27);
        assert_eq!(report.mdl.grade_nonzero_entries, Some(27));
    }

    #[test]
    fn projecting_a_structurally_zero_grade_fails() {
        let text = r#"{
            "signature": {"p": 3, "q": 0, "r": 1},
            "nodes": [
                {"id": "a", "role": "input", "dim": "1", "grades": [2], "range": [-1.0, 1.0]},
                {"id": "b", "role": "input", "dim": "1", "grades": [2], "range": [-1.0, 1.0]},
                {"id": "p", "role": "intermediate"},
                {"id": "v", "role": "output"}
            ],
            "edges": [
                {"op": "geometric", "inputs": ["a", "b"], "output": "p"},
                {"op": "grade_project", "k": 1, "inputs": ["p"], "output": "v"}
            ],
            "outputs": ["v"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(!report.accepted);
        assert!(report.errors.iter().any(|e| e.kind == "structurally-zero"));
    }

    #[test]
    fn scalar_chains_stay_scalar() {
        let text = r#"{
            "signature": {"p": 2, "q": 0, "r": 0},
            "nodes": [
                {"id": "a", "role": "input", "dim": "1", "grades": [0], "range": [0.5, 1.0]},
                {"id": "b", "role": "input", "dim": "1", "grades": [0], "range": [0.5, 1.0]},
                {"id": "c", "role": "intermediate"},
                {"id": "d", "role": "output"}
            ],
            "edges": [
                {"op": "mul", "inputs": ["a", "b"], "output": "c"},
                {"op": "add", "inputs": ["c", "c"], "output": "d"}
            ],
            "outputs": ["d"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(report.accepted, "{:?}", report.errors);
        for n in &report.nodes {
            assert_eq!(n.grades, Some(vec![0]), "node {}", n.id);
        }
    }

    #[test]
    fn declared_grade_must_contain_computed() {
        let text = r#"{
            "signature": {"p": 2, "q": 0, "r": 0},
            "nodes": [
                {"id": "a", "role": "input", "dim": "1", "grades": [1], "range": [-1.0, 1.0]},
                {"id": "b", "role": "input", "dim": "1", "grades": [1], "range": [-1.0, 1.0]},
                {"id": "p", "role": "output", "grades": [0]}
            ],
            "edges": [{"op": "geometric", "inputs": ["a", "b"], "output": "p"}],
            "outputs": ["p"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(!report.accepted);
        assert!(report.errors.iter().any(|e| e.kind == "grade-mismatch"));
    }

    #[test]
    fn division_by_zero_spanning_interval_is_an_error() {
        let text = r#"{
            "nodes": [
                {"id": "a", "role": "input", "dim": "m", "range": [1.0, 2.0]},
                {"id": "b", "role": "input", "dim": "s", "range": [-1.0, 1.0]},
                {"id": "y", "role": "output"}
            ],
            "edges": [{"op": "div", "inputs": ["a", "b"], "output": "y"}],
            "outputs": ["y"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let report = elaborate(&g, &Config::default());
        assert!(!report.accepted);
        assert!(report.errors.iter().any(|e| e.kind == "range-undetermined"));
    }

    #[test]
    fn representation_chain_populates_on_ranged_graphs() {
        let g = load_spec(&fma_spec("m*s^-2"), None).unwrap();
        let report = elaborate(&g, &Config::default());
        for n in &report.nodes {
            assert!(n.range.is_some(), "node {} has no interval", n.id);
            assert!(n.representation.is_some(), "node {} has no format", n.id);
            assert!(n.footprint_bytes.is_some());
            assert!(n.allocation.is_some());
        }
        let loss = report.nodes.iter().find(|n| n.id == "loss").unwrap();
        assert_eq!(loss.escape.as_str(), "return_escaping");
        assert_eq!(loss.allocation.unwrap().as_str(), "caller-region");
    }

    #[test]
    fn repr_require_mode_flags_missing_ranges() {
        let text = r#"{
            "nodes": [
                {"id": "x", "role": "input", "dim": "m"},
                {"id": "y", "role": "output"}
            ],
            "edges": [{"op": "neg", "inputs": ["x"], "output": "y"}],
            "outputs": ["y"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let strict = Config { representations: ReprMode::Require, ..Config::default() };
        let report = elaborate(&g, &strict);
        assert!(!report.accepted);
        assert!(report.errors.iter().any(|e| e.kind == "missing-range"));
        // Auto mode shrugs and reports no formats.
        let report = elaborate(&g, &Config::default());
        assert!(report.accepted, "{:?}", report.errors);
    }

    #[test]
    fn representation_inadequate_when_budget_is_impossible() {
        let text = r#"{
            "nodes": [
                {"id": "x", "role": "input", "dim": "m", "range": [1e300, 1e305]},
                {"id": "y", "role": "output"}
            ],
            "edges": [{"op": "neg", "inputs": ["x"], "output": "y"}],
            "outputs": ["y"]
        }"#;
        let g = load_spec(text, None).unwrap();
        let tight = Config { eps_budget: 1e-17, ..Config::default() };
        let report = elaborate(&g, &tight);
        assert!(!report.accepted);
        assert!(report
            .errors
            .iter()
            .any(|e| e.kind == "representation-inadequate"));
    }

    #[test]
    fn interval_soundness_on_corner_evaluations() {
        use crate::diff::evaluate_primal;
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        // Random scalar graphs; every corner combination of input ranges must
        // land inside each node's propagated interval.
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..500 {
            let (g, input_ids) = random_scalar_graph(&mut rng);
            let report = elaborate(&g, &Config::default());
            if !report.accepted {
                continue; // division ranges may straddle zero; skip those
            }
            let corners = 1usize << input_ids.len();
            for mask in 0..corners {
                let mut binds = std::collections::BTreeMap::new();
                for (i, id) in input_ids.iter().enumerate() {
                    let idx = g.node_idx(id).unwrap();
                    let iv = g.node(idx).range.unwrap();
                    let v = if mask >> i & 1 == 1 { iv.hi } else { iv.lo };
                    binds.insert(id.clone(), vec![v]);
                }
                let Ok(values) = evaluate_primal(&g, &binds) else { continue };
                for (id, value) in &values {
                    let node_report =
                        report.nodes.iter().find(|n| &n.id == id).unwrap();
                    let [lo, hi] = node_report.range.unwrap();
                    for v in value {
                        assert!(
                            *v >= lo && *v <= hi,
                            "corner value {v} escaped [{lo}, {hi}] for {id}"
                        );
                    }
                }
            }
        }
    }

    fn random_scalar_graph(rng: &mut rand::rngs::StdRng) -> (crate::graph::Graph, Vec<String>) {
        use rand::Rng;
        let n_inputs = rng.gen_range(1..=3usize);
        let mut nodes = Vec::new();
        let mut ids = Vec::new();
        for i in 0..n_inputs {
            let lo = rng.gen_range(0.5..1.0);
            let hi = lo + rng.gen_range(0.1..1.0);
            nodes.push(format!(
                r#"{{"id": "in{i}", "role": "input", "dim": "1", "range": [{lo}, {hi}]}}"#
            ));
            ids.push(format!("in{i}"));
        }
        let mut edges = Vec::new();
        let n_ops = rng.gen_range(1..=5usize);
        let mut avail: Vec<String> = ids.clone();
        for k in 0..n_ops {
            let id = if k + 1 == n_ops { "out".to_string() } else { format!("t{k}") };
            let role = if k + 1 == n_ops { "output" } else { "intermediate" };
            let a = avail[rng.gen_range(0..avail.len())].clone();
            let bid = avail[rng.gen_range(0..avail.len())].clone();
            let op = match rng.gen_range(0..6) {
                0 => "add",
                1 => "sub",
                2 => "mul",
                3 => "div",
                4 => "neg",
                _ => "pow",
            };
            nodes.push(format!(r#"{{"id": "{id}", "role": "{role}"}}"#));
            let edge = match op {
                "neg" => format!(r#"{{"op": "neg", "inputs": ["{a}"], "output": "{id}"}}"#),
                "pow" => {
                    let k = rng.gen_range(0..=3);
                    format!(r#"{{"op": "pow", "k": {k}, "inputs": ["{a}"], "output": "{id}"}}"#)
                }
                _ => format!(
                    r#"{{"op": "{op}", "inputs": ["{a}", "{bid}"], "output": "{id}"}}"#
                ),
            };
            edges.push(edge);
            avail.push(id);
        }
        let text = format!(
            r#"{{"nodes": [{}], "edges": [{}], "outputs": ["out"]}}"#,
            nodes.join(","),
            edges.join(",")
        );
        (load_spec(&text, None).unwrap(), ids)
    }
}
