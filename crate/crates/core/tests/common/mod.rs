//! Shared generators and oracles for the integration suites.
//!
//! Not every test target uses every helper.
#![allow(dead_code)]

use std::collections::BTreeSet;

use abelia::clifford::{build_cayley, grade_outer, CayleyTable, GradeSet, Signature};
use abelia::dims::{DimVar, Dimension, VarTable};
use abelia::graph::{load_spec, Graph};
use abelia::unify::{solve_system, DimEquation, Substitution};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::rngs::StdRng;
use rand::Rng;

// -- random graphs ------------------------------------------------------------

/// A generated graph plus the ids a test needs to drive it.
pub struct GeneratedGraph {
    pub graph: Graph,
    pub boundary_ids: Vec<String>,
}

const DIM_POOL: [&str; 6] = ["m", "s", "kg", "m*s^-1", "kg*m*s^-2", "1"];

/// Random scalar graph with positive input ranges; division only by inputs so
/// propagated divisor intervals cannot straddle zero.
pub fn random_scalar_graph(rng: &mut StdRng, max_ops: usize) -> GeneratedGraph {
    let n_inputs = rng.gen_range(1..=3usize);
    let mut nodes_json = Vec::new();
    let mut boundary = Vec::new();
    // (id, dim-expression) for dimension-equality decisions.
    let mut dims: Vec<(String, String)> = Vec::new();
    for i in 0..n_inputs {
        let dim = DIM_POOL[rng.gen_range(0..DIM_POOL.len())];
        let lo = rng.gen_range(0.5..1.2);
        let hi = lo + rng.gen_range(0.2..1.3);
        let role = if rng.gen_bool(0.3) { "parameter" } else { "input" };
        nodes_json.push(format!(
            r#"{{"id": "in{i}", "role": "{role}", "dim": "{dim}", "range": [{lo}, {hi}]}}"#
        ));
        boundary.push(format!("in{i}"));
        dims.push((format!("in{i}"), dim.to_string()));
    }
    let mut edges_json = Vec::new();
    let n_ops = rng.gen_range(1..=max_ops);
    for k in 0..n_ops {
        let id = if k + 1 == n_ops { "out".to_string() } else { format!("t{k}") };
        let role = if k + 1 == n_ops { "output" } else { "intermediate" };
        nodes_json.push(format!(r#"{{"id": "{id}", "role": "{role}"}}"#));
        let pick = |rng: &mut StdRng, dims: &[(String, String)]| -> usize {
            rng.gen_range(0..dims.len())
        };
        let edge = match rng.gen_range(0..7) {
            0 | 1 => {
                // add/sub need equal dimensions; doubling a node always works.
                let a = pick(rng, &dims);
                let b = dims
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, d))| *d == dims[a].1)
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>();
                let b = b[rng.gen_range(0..b.len())];
                let op = if rng.gen_bool(0.5) { "add" } else { "sub" };
                dims.push((id.clone(), dims[a].1.clone()));
                format!(
                    r#"{{"op": "{op}", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                    dims[a].0.clone(),
                    dims[b].0.clone()
                )
            }
            2 => {
                let a = pick(rng, &dims);
                let b = pick(rng, &dims);
                dims.push((id.clone(), format!("{}*{}", dims[a].1, dims[b].1)));
                format!(
                    r#"{{"op": "mul", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                    dims[a].0.clone(),
                    dims[b].0.clone()
                )
            }
            3 => {
                // Divide only by boundary nodes (positive declared ranges).
                let a = pick(rng, &dims);
                let b = rng.gen_range(0..n_inputs);
                dims.push((id.clone(), format!("{}*({})^-1", dims[a].1, dims[b].1)));
                format!(
                    r#"{{"op": "div", "inputs": ["{}", "in{b}"], "output": "{id}"}}"#,
                    dims[a].0.clone()
                )
            }
            4 => {
                let a = pick(rng, &dims);
                let k = rng.gen_range(0..=3);
                dims.push((id.clone(), format!("({})^{k}", dims[a].1)));
                format!(
                    r#"{{"op": "pow", "k": {k}, "inputs": ["{}"], "output": "{id}"}}"#,
                    dims[a].0.clone()
                )
            }
            5 => {
                let a = pick(rng, &dims);
                dims.push((id.clone(), dims[a].1.clone()));
                format!(
                    r#"{{"op": "neg", "inputs": ["{}"], "output": "{id}"}}"#,
                    dims[a].0.clone()
                )
            }
            _ => {
                let a = pick(rng, &dims);
                dims.push((id.clone(), dims[a].1.clone()));
                format!(
                    r#"{{"op": "sum_reduce", "inputs": ["{}"], "output": "{id}"}}"#,
                    dims[a].0.clone()
                )
            }
        };
        edges_json.push(edge);
    }
    let text = format!(
        r#"{{"nodes": [{}], "edges": [{}], "outputs": ["out"]}}"#,
        nodes_json.join(","),
        edges_json.join(",")
    );
    let graph = load_spec(&text, None).expect("generated scalar spec is well-formed");
    GeneratedGraph { graph, boundary_ids: boundary }
}

const GRADE_POOL: [&[u8]; 5] = [&[0], &[1], &[2], &[0, 2], &[1, 2]];

/// Random Clifford graph over a small signature; grade sets are tracked by
/// the same rules the elaborator uses so the result is accepted by
/// construction (up to rare range artifacts the caller filters).
pub fn random_clifford_graph(rng: &mut StdRng, max_ops: usize) -> GeneratedGraph {
    let sig = match rng.gen_range(0..3) {
        0 => Signature::new(3, 0, 1).unwrap(),
        1 => Signature::new(2, 0, 0).unwrap(),
        _ => Signature::new(3, 0, 0).unwrap(),
    };
    let table = build_cayley(sig).unwrap();
    let n = sig.total();

    let mut nodes_json = Vec::new();
    let mut boundary = Vec::new();
    let mut dims: Vec<(String, String)> = Vec::new();
    let mut grades: Vec<GradeSet> = Vec::new();

    let n_inputs = rng.gen_range(2..=3usize);
    for i in 0..n_inputs {
        let grade_list: &[u8] = if i == 0 {
            &[0] // always keep one scalar around for mul/div
        } else {
            GRADE_POOL[rng.gen_range(0..GRADE_POOL.len())]
        };
        let grade_list: Vec<u8> =
            grade_list.iter().copied().filter(|&g| g <= n).collect();
        let grade_set = GradeSet::from_grades(grade_list.iter().copied());
        let dim = DIM_POOL[rng.gen_range(0..DIM_POOL.len())];
        let grades_json: Vec<String> = grade_list.iter().map(u8::to_string).collect();
        nodes_json.push(format!(
            r#"{{"id": "in{i}", "role": "input", "dim": "{dim}", "grades": [{}], "range": [0.5, 1.5]}}"#,
            grades_json.join(",")
        ));
        boundary.push(format!("in{i}"));
        dims.push((format!("in{i}"), dim.to_string()));
        grades.push(grade_set);
    }

    let mut edges_json = Vec::new();
    let n_ops = rng.gen_range(1..=max_ops);
    for k in 0..n_ops {
        let id = if k + 1 == n_ops { "out".to_string() } else { format!("t{k}") };
        let role = if k + 1 == n_ops { "output" } else { "intermediate" };
        let a = rng.gen_range(0..dims.len());
        let b = rng.gen_range(0..dims.len());
        let (edge, dim, set) = match rng.gen_range(0..5) {
            0 => {
                let set = table.grade_product_set(grades[a], grades[b]);
                (
                    format!(
                        r#"{{"op": "geometric", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                        dims[a].0, dims[b].0
                    ),
                    format!("{}*{}", dims[a].1, dims[b].1),
                    set,
                )
            }
            1 => {
                let mut set = GradeSet::EMPTY;
                for j in grades[a].iter() {
                    for l in grades[b].iter() {
                        set = set.union(grade_outer(j, l, n));
                    }
                }
                if set.is_empty() {
                    // Wedge would be structurally zero; use the full product.
                    let set = table.grade_product_set(grades[a], grades[b]);
                    (
                        format!(
                            r#"{{"op": "geometric", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                            dims[a].0, dims[b].0
                        ),
                        format!("{}*{}", dims[a].1, dims[b].1),
                        set,
                    )
                } else {
                    (
                        format!(
                            r#"{{"op": "wedge", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                            dims[a].0, dims[b].0
                        ),
                        format!("{}*{}", dims[a].1, dims[b].1),
                        set,
                    )
                }
            }
            2 => {
                // add needs equal dims; reuse one operand twice.
                (
                    format!(
                        r#"{{"op": "add", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                        dims[a].0, dims[a].0
                    ),
                    dims[a].1.clone(),
                    grades[a],
                )
            }
            3 => {
                let choices: Vec<u8> = grades[a].iter().collect();
                let k = choices[rng.gen_range(0..choices.len())];
                (
                    format!(
                        r#"{{"op": "grade_project", "k": {k}, "inputs": ["{}"], "output": "{id}"}}"#,
                        dims[a].0
                    ),
                    dims[a].1.clone(),
                    GradeSet::singleton(k),
                )
            }
            _ => (
                format!(
                    r#"{{"op": "dot", "inputs": ["{}", "{}"], "output": "{id}"}}"#,
                    dims[a].0, dims[b].0
                ),
                format!("{}*{}", dims[a].1, dims[b].1),
                GradeSet::singleton(0),
            ),
        };
        nodes_json.push(format!(r#"{{"id": "{id}", "role": "{role}"}}"#));
        edges_json.push(edge);
        dims.push((id, dim));
        grades.push(set);
    }

    let text = format!(
        r#"{{"signature": {{"p": {}, "q": {}, "r": {}}}, "nodes": [{}], "edges": [{}], "outputs": ["out"]}}"#,
        sig.p(),
        sig.q(),
        sig.r(),
        nodes_json.join(","),
        edges_json.join(",")
    );
    let graph = load_spec(&text, None).expect("generated clifford spec is well-formed");
    GeneratedGraph { graph, boundary_ids: boundary }
}

// -- random systems and the principality box oracle ---------------------------

pub struct RandomSystem {
    pub eqs: Vec<DimEquation>,
    pub ids: Vec<DimVar>,
    pub vars: VarTable,
}

/// Random system with at most 4 variables, exponents in [-3, 3], two base
/// axes; 20% get an inconsistent perturbation.
pub fn random_small_system(rng: &mut StdRng) -> RandomSystem {
    let mut vars = VarTable::new();
    let v = rng.gen_range(1..=4usize);
    let ids: Vec<DimVar> = (0..v).map(|i| vars.intern(&format!("p{i}"))).collect();
    let n_eqs = rng.gen_range(1..=3usize);
    let n_axes = 2usize;
    let ground: Vec<Vec<i64>> = (0..v)
        .map(|_| (0..n_axes).map(|_| rng.gen_range(-2..=2)).collect())
        .collect();
    let sabotage = rng.gen_bool(0.2);
    let mut eqs = Vec::new();
    for e in 0..n_eqs {
        let coeffs: Vec<i64> = (0..v).map(|_| rng.gen_range(-3..=3)).collect();
        let mut lhs = Dimension::identity();
        for (j, &c) in coeffs.iter().enumerate() {
            lhs.add_scaled(&Dimension::var(ids[j], 1), &BigInt::from(c));
        }
        let mut rhs = Dimension::identity();
        for axis in 0..n_axes {
            let mut total: i64 = coeffs.iter().zip(&ground).map(|(&c, g)| c * g[axis]).sum();
            if sabotage && e == 0 && axis == 0 {
                total += 1;
            }
            rhs.add_scaled(&Dimension::base_unit(axis, 1), &BigInt::from(total));
        }
        eqs.push(DimEquation::new(lhs, rhs, format!("sys eq {e}")));
    }
    RandomSystem { eqs, ids, vars }
}

const SOLUTION_BOX: i64 = 6;

/// Exhaustive principality check: the ground solutions of the system inside
/// the box [-6, 6] must exactly equal the box-restricted ground instances of
/// the returned unifier. Panics with diagnostics on any mismatch.
pub fn assert_principal_on_box(sys: &mut RandomSystem) {
    let solved = solve_system(&sys.eqs, &mut sys.vars);
    let axes = collect_axes(&sys.eqs);

    match solved {
        Err(_) => {
            // The solver rejected; brute force must find no full solution on
            // некоторый axis (independent axes: unsolvable iff some axis is).
            let unsolvable_somewhere = axes
                .iter()
                .any(|&axis| enumerate_axis_solutions(sys, axis).is_empty());
            assert!(
                unsolvable_somewhere,
                "solver rejected a system with box solutions on every axis"
            );
        }
        Ok(subst) => {
            for &axis in &axes {
                let solutions = enumerate_axis_solutions(sys, axis);
                compare_axis_instances(sys, &subst, axis, &solutions);
            }
        }
    }
}

fn collect_axes(eqs: &[DimEquation]) -> Vec<usize> {
    let mut axes = BTreeSet::new();
    for eq in eqs {
        let h = eq.homogeneous();
        for (&axis, _) in h.base_exponents() {
            axes.insert(axis);
        }
    }
    if axes.is_empty() {
        axes.insert(0);
    }
    axes.into_iter().collect()
}

/// All per-axis assignments of the system variables in the box.
fn enumerate_axis_solutions(sys: &RandomSystem, axis: usize) -> BTreeSet<Vec<i64>> {
    let v = sys.ids.len();
    let rows: Vec<(Vec<i64>, i64)> = sys
        .eqs
        .iter()
        .map(|eq| {
            let h = eq.homogeneous();
            let coeffs: Vec<i64> = sys
                .ids
                .iter()
                .map(|&id| h.var_exponent(id).to_i64().unwrap())
                .collect();
            (coeffs, h.base_exponent(axis).to_i64().unwrap())
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut x = vec![-SOLUTION_BOX; v];
    loop {
        if rows.iter().all(|(c, r)| {
            c.iter().zip(&x).map(|(a, b)| a * b).sum::<i64>() + r == 0
        }) {
            out.insert(x.clone());
        }
        let mut i = 0;
        loop {
            if i == v {
                return out;
            }
            x[i] += 1;
            if x[i] <= SOLUTION_BOX {
                break;
            }
            x[i] = -SOLUTION_BOX;
            i += 1;
        }
    }
}

/// Enumerates ground instances of the unifier on one axis, escalating the
/// parameter box until the instance set covers every box solution (larger
/// parameter boxes only add instances, so escalation converges) or the
/// budget runs out.
fn compare_axis_instances(
    sys: &RandomSystem,
    subst: &Substitution,
    axis: usize,
    solutions: &BTreeSet<Vec<i64>>,
) {
    // Parameters: the unifier's free set plus any system variable the
    // equations never constrained (zero columns are free too).
    let mut params: Vec<DimVar> = subst.free().iter().copied().collect();
    for &id in &sys.ids {
        if subst.binding(id).is_none() && !params.contains(&id) {
            params.push(id);
        }
    }
    params.sort();
    let f = params.len();

    // Per-variable affine form: offset + coefficients over params.
    let forms: Vec<(i128, Vec<i128>)> = sys
        .ids
        .iter()
        .map(|&id| match subst.binding(id) {
            Some(b) => {
                let offset = b.base_exponent(axis).to_i128().unwrap();
                let coeffs = params
                    .iter()
                    .map(|&p| b.var_exponent(p).to_i128().unwrap())
                    .collect();
                (offset, coeffs)
            }
            None => {
                let coeffs = params
                    .iter()
                    .map(|&p| if p == id { 1i128 } else { 0 })
                    .collect();
                (0, coeffs)
            }
        })
        .collect();

    let ladder: &[i64] = match f {
        0 | 1 | 2 => &[9, 18, 36, 72],
        3 => &[9, 18, 36],
        _ => &[9, 18],
    };

    let mut instances: BTreeSet<Vec<i64>> = BTreeSet::new();
    for &pbox in ladder {
        instances.clear();
        let mut p = vec![-pbox; f];
        'enumerate: loop {
            let mut tuple = Vec::with_capacity(sys.ids.len());
            let mut in_box = true;
            for (offset, coeffs) in &forms {
                let val: i128 = *offset
                    + coeffs.iter().zip(&p).map(|(c, x)| c * *x as i128).sum::<i128>();
                if val.abs() > SOLUTION_BOX as i128 {
                    in_box = false;
                    break;
                }
                tuple.push(val as i64);
            }
            if in_box {
                assert!(
                    solutions.contains(&tuple),
                    "unsound: instance {tuple:?} is not a solution (axis {axis})"
                );
                instances.insert(tuple);
            }
            if f == 0 {
                break 'enumerate;
            }
            let mut i = 0;
            loop {
                if i == f {
                    break 'enumerate;
                }
                p[i] += 1;
                if p[i] <= pbox {
                    break;
                }
                p[i] = -pbox;
                i += 1;
            }
        }
        if solutions.iter().all(|s| instances.contains(s)) {
            return; // sets equal: instances subset of solutions checked above
        }
    }
    let missing: Vec<&Vec<i64>> =
        solutions.iter().filter(|s| !instances.contains(*s)).collect();
    panic!(
        "incomplete: {} box solution(s) are not instances of the unifier \
         (axis {axis}), e.g. {:?}",
        missing.len(),
        missing.first()
    );
}

/// Symbolic generator-list product, independent of the bitmask table: sorts
/// the concatenated factor list counting transpositions, then cancels
/// adjacent equal generators through the metric.
pub fn symbolic_blade_product(sig: Signature, a: u16, b: u16) -> (i8, u16) {
    let gens = |mask: u16| -> Vec<u8> {
        (0..16u8).filter(|i| mask >> i & 1 == 1).collect()
    };
    let mut list: Vec<u8> = gens(a);
    list.extend(gens(b));

    // Bubble sort, counting swaps.
    let mut swaps = 0usize;
    let len = list.len();
    for i in 0..len {
        for j in 0..len.saturating_sub(1 + i) {
            if list[j] > list[j + 1] {
                list.swap(j, j + 1);
                swaps += 1;
            }
        }
    }
    let mut sign: i8 = if swaps % 2 == 0 { 1 } else { -1 };

    // Adjacent duplicates square to the metric.
    let mut result: Vec<u8> = Vec::new();
    for g in list {
        if result.last() == Some(&g) {
            result.pop();
            match sig.metric(g) {
                0 => return (0, 0),
                -1 => sign = -sign,
                _ => {}
            }
        } else {
            result.push(g);
        }
    }
    let mut mask = 0u16;
    for g in result {
        mask |= 1 << g;
    }
    (sign, mask)
}

/// Full-table comparison against the symbolic oracle.
pub fn assert_table_matches_symbolic(table: &CayleyTable) {
    let sig = table.signature();
    for a in table.blades() {
        for b in table.blades() {
            let (sign, result) = table.product(a, b);
            let (oracle_sign, oracle_mask) = symbolic_blade_product(sig, a.0, b.0);
            assert_eq!(sign, oracle_sign, "sign mismatch at {a:?} * {b:?} in {sig}");
            if sign != 0 {
                assert_eq!(result.0, oracle_mask, "blade mismatch at {a:?} * {b:?}");
            }
        }
    }
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let den: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    num / den
}
