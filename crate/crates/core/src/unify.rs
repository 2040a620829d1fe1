//! Principal unification over the free abelian group.
//!
//! A system of dimension equations is a linear system over `Z`: each equation
//! `lhs = rhs` is stored in homogeneous form `lhs * rhs^-1 = 1`, whose variable
//! exponents form one row of an integer matrix and whose base exponents form
//! the row's residual. Solving is Hermite-style integer elimination: pick the
//! smallest-magnitude pivot coefficient (ties to the lowest variable id), bind
//! the pivot variable when it divides the rest of the row, otherwise apply a
//! Euclidean change of variables through a fresh variable and retry. The
//! result is a most general unifier: every other solution is an instance of
//! it, and the number of unbound variables equals the nullity of the matrix.
//!
//! Failures are typed: `inconsistent` when a variable-free residual has
//! nonzero base exponents (the two sides differ as ground dimensions), and
//! `divisibility` when no integer exponent assignment exists (for example
//! `'x^2 = m`).

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::dims::{Basis, DimVar, Dimension, VarTable};

/// One dimension equation with provenance for error reporting.
#[derive(Debug, Clone)]
pub struct DimEquation {
    pub lhs: Dimension,
    pub rhs: Dimension,
    pub provenance: String,
}

impl DimEquation {
    pub fn new(lhs: Dimension, rhs: Dimension, provenance: impl Into<String>) -> Self {
        DimEquation { lhs, rhs, provenance: provenance.into() }
    }

    /// The homogeneous term `lhs * rhs^-1`.
    pub fn homogeneous(&self) -> Dimension {
        self.lhs.div(&self.rhs)
    }
}

/// The principal unifier: an idempotent map from bound variables to
/// dimensions, plus the set of variables left free (including any fresh
/// variables introduced by elimination).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<DimVar, Dimension>,
    free: BTreeSet<DimVar>,
}

impl Substitution {
    pub fn empty() -> Self {
        Substitution::default()
    }

    pub fn bindings(&self) -> &BTreeMap<DimVar, Dimension> {
        &self.bindings
    }

    pub fn free(&self) -> &BTreeSet<DimVar> {
        &self.free
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn binding(&self, v: DimVar) -> Option<&Dimension> {
        self.bindings.get(&v)
    }

    /// Replaces each bound variable by its binding raised to the variable's
    /// exponent; the result is canonical.
    pub fn apply(&self, d: &Dimension) -> Dimension {
        let mut out = Dimension::identity();
        for (&idx, exp) in d.base_exponents() {
            out.add_scaled(&Dimension::base_unit(idx, 1), exp);
        }
        for (v, exp) in d.vars_iter() {
            match self.bindings.get(&v) {
                Some(b) => out.add_scaled(b, exp),
                None => out.add_scaled(&Dimension::var(v, 1), exp),
            }
        }
        out
    }

    /// Composes `{v -> b}` into the substitution, keeping idempotency:
    /// existing bindings are rewritten through the new one. Test scaffolding
    /// for building substitutions by hand.
    #[cfg(test)]
    fn bind(&mut self, v: DimVar, binding: Dimension) {
        debug_assert!(binding.var_exponent(v).is_zero(), "occurs check");
        for existing in self.bindings.values_mut() {
            let exp = existing.var_exponent(v);
            if !exp.is_zero() {
                existing.add_scaled(&Dimension::var(v, 1), &(-&exp));
                existing.add_scaled(&binding, &exp);
            }
        }
        self.free.remove(&v);
        for (fv, _) in binding.vars_iter() {
            self.free.insert(fv);
        }
        self.bindings.insert(v, binding);
    }
}

/// Typed unification failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifyError {
    pub kind: UnifyErrorKind,
    /// The unsatisfiable homogeneous term: variable-free with nonzero base
    /// exponents for `Inconsistent`, the obstructed row for `Divisibility`.
    pub residual: Dimension,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnifyErrorKind {
    Inconsistent,
    Divisibility,
}

impl UnifyErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnifyErrorKind::Inconsistent => "inconsistent",
            UnifyErrorKind::Divisibility => "divisibility",
        }
    }
}

impl UnifyError {
    pub fn message(&self, basis: &Basis, vars: &VarTable) -> String {
        let residual = crate::dims::format_dimension(&self.residual, basis, vars);
        match self.kind {
            UnifyErrorKind::Inconsistent => format!(
                "dimension mismatch: residual {residual} is not the identity"
            ),
            UnifyErrorKind::Divisibility => format!(
                "no integer exponents solve {residual} = 1"
            ),
        }
    }
}

/// Unifies two dimensions, returning the most general unifier or a typed
/// failure.
pub fn unify(
    a: &Dimension,
    b: &Dimension,
    vars: &mut VarTable,
) -> Result<Substitution, UnifyError> {
    solve_system(
        &[DimEquation::new(a.clone(), b.clone(), "unify")],
        vars,
    )
}

/// Solves a simultaneous system, returning the most general unifier or the
/// first failing row's error.
pub fn solve_system(
    eqs: &[DimEquation],
    vars: &mut VarTable,
) -> Result<Substitution, UnifyError> {
    let (subst, mut errors) = solve_system_collect(eqs, vars);
    match errors.is_empty() {
        true => Ok(subst),
        false => Err(errors.remove(0)),
    }
}

/// Collect-all variant used by the elaborator: failing rows are skipped and
/// reported individually while the remaining rows are still solved.
///
/// Two phases. Triangularization eliminates each pivot from the later rows
/// with cross-multiplied row combinations (`a * row_j - c * row_i`), which
/// never needs divisibility; dividing every touched row by its content keeps
/// the exponents at fraction-free sizes. Back-substitution then solves the
/// triangular system over the integers from the last pivot upward; this is
/// where divisibility is checked and where Euclidean steps may introduce
/// fresh variables.
pub fn solve_system_collect(
    eqs: &[DimEquation],
    vars: &mut VarTable,
) -> (Substitution, Vec<UnifyError>) {
    let mut rows: Vec<Option<Dimension>> =
        eqs.iter().map(|eq| Some(eq.homogeneous())).collect();
    let mut seen: BTreeSet<DimVar> = BTreeSet::new();
    for row in rows.iter().flatten() {
        for (v, _) in row.vars_iter() {
            seen.insert(v);
        }
    }

    // Fully determined systems usually have small unique solutions; a
    // modular image finds the candidate in O(n^3) word operations and an
    // exact verification makes it unconditional. Anything else (rank
    // deficiency, non-integer or oversized solutions, inconsistency) falls
    // through to exact elimination.
    if let Some(bindings) = modular_fast_path(eqs, &seen) {
        let mut subst = Substitution::empty();
        subst.bindings = bindings;
        return (subst, Vec::new());
    }

    // (input row index, error) pairs, sorted before returning so the first
    // error reported is the first failing row.
    let mut errors: Vec<(usize, UnifyError)> = Vec::new();
    // (input row index, pivot variable, triangular row) in elimination order.
    let mut pivot_rows: Vec<(usize, DimVar, Dimension)> = Vec::new();

    // Phase 1: triangularize.
    for i in 0..rows.len() {
        let mut row = rows[i].take().expect("each row is visited once");
        reduce_content(&mut row);
        if row.var_exponents().is_empty() {
            if !row.is_identity() {
                errors.push((
                    i,
                    UnifyError {
                        kind: UnifyErrorKind::Inconsistent,
                        residual: row,
                        provenance: vec![eqs[i].provenance.clone()],
                    },
                ));
            }
            continue;
        }
        let pivot = select_pivot(&row);
        if row.var_exponent(pivot).is_negative() {
            row = row.inverse();
        }
        let a = row.var_exponent(pivot);
        for later in rows.iter_mut().skip(i + 1) {
            let Some(r) = later else { continue };
            let c = r.var_exponent(pivot);
            if c.is_zero() {
                continue;
            }
            // a * r - c * row zeroes the pivot column exactly.
            let mut combined = Dimension::identity();
            combined.add_scaled(r, &a);
            combined.add_scaled(&row, &(-&c));
            reduce_content(&mut combined);
            *later = Some(combined);
        }
        pivot_rows.push((i, pivot, row));
    }

    // Phase 2: integer back-substitution, last pivot first.
    let mut resolved: BTreeMap<DimVar, Dimension> = BTreeMap::new();
    for (row_index, pivot, row) in pivot_rows.into_iter().rev() {
        let substituted = apply_map(&resolved, &row);
        debug_assert!(!substituted.var_exponent(pivot).is_zero());
        if let Err(e) = solve_single_row(
            substituted,
            &eqs[row_index].provenance,
            &mut resolved,
            vars,
        ) {
            errors.push((row_index, e));
        }
    }

    let mut subst = Substitution::empty();
    for (pivot, binding) in resolved {
        for (v, _) in binding.vars_iter() {
            subst.free.insert(v);
        }
        subst.bindings.insert(pivot, binding);
    }
    for v in seen {
        if !subst.bindings.contains_key(&v) {
            subst.free.insert(v);
        }
    }
    errors.sort_by_key(|(i, _)| *i);
    (subst, errors.into_iter().map(|(_, e)| e).collect())
}

/// Word-sized prime for the modular fast path (Mersenne, 2^61 - 1).
const FAST_PRIME: u64 = 2_305_843_009_213_693_951;

/// Attempts the whole solve in one modular image. Returns total bindings
/// (every variable mapped to a variable-free dimension) only when the system
/// has full column rank mod the prime and the symmetric lift of the modular
/// solution verifies exactly over the integers; otherwise None.
fn modular_fast_path(
    eqs: &[DimEquation],
    seen: &BTreeSet<DimVar>,
) -> Option<BTreeMap<DimVar, Dimension>> {
    let var_list: Vec<DimVar> = seen.iter().copied().collect();
    let v = var_list.len();
    if v == 0 || eqs.len() < v {
        return None;
    }
    let col_of: BTreeMap<DimVar, usize> =
        var_list.iter().enumerate().map(|(i, &x)| (x, i)).collect();

    let homogeneous: Vec<Dimension> = eqs.iter().map(DimEquation::homogeneous).collect();
    let mut axes: BTreeSet<usize> = BTreeSet::new();
    for h in &homogeneous {
        for (&idx, _) in h.base_exponents() {
            axes.insert(idx);
        }
    }
    let axes: Vec<usize> = axes.into_iter().collect();

    let p = FAST_PRIME;
    let to_mod = |e: &BigInt| -> u64 {
        let m = e.mod_floor(&BigInt::from(p));
        m.to_u64_digits().1.first().copied().unwrap_or(0)
    };

    // Augmented rows [A | -R] mod p.
    let width = v + axes.len();
    let mut m: Vec<Vec<u64>> = Vec::with_capacity(homogeneous.len());
    for h in &homogeneous {
        let mut row = vec![0u64; width];
        for (var, e) in h.vars_iter() {
            row[col_of[&var]] = to_mod(e);
        }
        for (ai, &axis) in axes.iter().enumerate() {
            // Sum(a x) = -r.
            let r = h.base_exponent(axis);
            row[v + ai] = to_mod(&(-r));
        }
        m.push(row);
    }

    // Row echelon over GF(p); bail unless the variable block has full rank.
    let mulmod = |a: u64, b: u64| -> u64 { ((a as u128 * b as u128) % p as u128) as u64 };
    let mut row_at = 0usize;
    let mut pivot_rows: Vec<usize> = Vec::with_capacity(v);
    for col in 0..v {
        let Some(pr) = (row_at..m.len()).find(|&r| m[r][col] != 0) else {
            return None;
        };
        m.swap(row_at, pr);
        let inv = mod_inverse(m[row_at][col], p);
        for r in 0..m.len() {
            if r != row_at && m[r][col] != 0 {
                let factor = mulmod(m[r][col], inv);
                for c in col..width {
                    let sub = mulmod(factor, m[row_at][c]);
                    m[r][c] = (m[r][c] + p - sub) % p;
                }
            }
        }
        pivot_rows.push(row_at);
        row_at += 1;
    }

    // Candidate integer solution by symmetric lift.
    let half = p / 2;
    let mut candidate: Vec<Vec<BigInt>> = vec![vec![BigInt::zero(); axes.len()]; v];
    for (col, &pr) in pivot_rows.iter().enumerate() {
        let inv = mod_inverse(m[pr][col], p);
        for ai in 0..axes.len() {
            let value = mulmod(m[pr][v + ai], inv);
            let lifted = if value > half {
                BigInt::from(value) - BigInt::from(p)
            } else {
                BigInt::from(value)
            };
            candidate[col][ai] = lifted;
        }
    }

    // Exact verification of every equation on every axis.
    for h in &homogeneous {
        for (ai, &axis) in axes.iter().enumerate() {
            let mut total = h.base_exponent(axis);
            for (var, e) in h.vars_iter() {
                total += e * &candidate[col_of[&var]][ai];
            }
            if !total.is_zero() {
                return None;
            }
        }
        // Axes outside the collected set are identically zero, but the
        // variable assignments must not reintroduce them; they cannot, since
        // candidates only carry collected axes.
    }

    let mut bindings = BTreeMap::new();
    for (col, &var) in var_list.iter().enumerate() {
        let mut dim = Dimension::identity();
        for (ai, &axis) in axes.iter().enumerate() {
            dim.add_scaled(&Dimension::base_unit(axis, 1), &candidate[col][ai]);
        }
        bindings.insert(var, dim);
    }
    Some(bindings)
}

fn mod_inverse(a: u64, p: u64) -> u64 {
    // Fermat: a^(p-2) mod p.
    let mut base = a as u128;
    let mut exp = p - 2;
    let mut acc: u128 = 1;
    let modulus = p as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc as u64
}

/// Smallest-magnitude coefficient, ties broken by the lowest variable id.
fn select_pivot(row: &Dimension) -> DimVar {
    row.var_exponents()
        .iter()
        .min_by(|(va, ea), (vb, eb)| ea.abs().cmp(&eb.abs()).then(va.cmp(vb)))
        .map(|(&v, _)| v)
        .expect("nonempty variable part")
}

fn apply_map(map: &BTreeMap<DimVar, Dimension>, d: &Dimension) -> Dimension {
    let mut out = Dimension::identity();
    for (&idx, e) in d.base_exponents() {
        out.add_scaled(&Dimension::base_unit(idx, 1), e);
    }
    for (v, e) in d.vars_iter() {
        match map.get(&v) {
            Some(b) => out.add_scaled(b, e),
            None => out.add_scaled(&Dimension::var(v, 1), e),
        }
    }
    out
}

/// Solves one fully-substituted row over the integers, composing each new
/// binding into `resolved` so the map stays idempotent. Euclidean steps
/// introduce fresh re-parameterizing variables when no coefficient divides
/// the rest of its row.
fn solve_single_row(
    mut row: Dimension,
    provenance: &str,
    resolved: &mut BTreeMap<DimVar, Dimension>,
    vars: &mut VarTable,
) -> Result<(), UnifyError> {
    loop {
        if row.var_exponents().is_empty() {
            if row.is_identity() {
                return Ok(());
            }
            return Err(UnifyError {
                kind: UnifyErrorKind::Inconsistent,
                residual: row,
                provenance: vec![provenance.to_string()],
            });
        }

        reduce_content(&mut row);

        let pivot = select_pivot(&row);
        if row.var_exponent(pivot).is_negative() {
            row = row.inverse();
        }
        let a = row.var_exponent(pivot);

        let divides_rest = row
            .var_exponents()
            .iter()
            .filter(|(&v, _)| v != pivot)
            .all(|(_, e)| e.mod_floor(&a).is_zero())
            && row.base_exponents().values().all(|e| e.mod_floor(&a).is_zero());

        if divides_rest {
            // pivot = -(rest / a): the row is eliminated.
            let mut binding = Dimension::identity();
            for (&idx, e) in row.base_exponents() {
                binding.add_scaled(&Dimension::base_unit(idx, 1), &(-(e / &a)));
            }
            for (v, e) in row.vars_iter() {
                if v != pivot {
                    binding.add_scaled(&Dimension::var(v, 1), &(-(e / &a)));
                }
            }
            compose_binding(resolved, pivot, binding);
            return Ok(());
        }

        if row.var_exponents().len() == 1 {
            // Single variable whose coefficient does not divide the residual:
            // no integer solution exists.
            return Err(UnifyError {
                kind: UnifyErrorKind::Divisibility,
                residual: row,
                provenance: vec![provenance.to_string()],
            });
        }

        // Euclidean step: pivot = t - sum(floor(e/a) * x) - floor(r/a), which
        // rewrites the row with coefficients reduced mod a and a fresh t.
        let t = vars.fresh(provenance);
        let mut binding = Dimension::var(t, 1);
        let mut new_row = Dimension::identity();
        new_row.add_scaled(&Dimension::var(t, 1), &a);
        for (&idx, e) in row.base_exponents() {
            let q = e.div_floor(&a);
            let r = e.mod_floor(&a);
            binding.add_scaled(&Dimension::base_unit(idx, 1), &(-q));
            new_row.add_scaled(&Dimension::base_unit(idx, 1), &r);
        }
        for (v, e) in row.vars_iter() {
            if v == pivot {
                continue;
            }
            let q = e.div_floor(&a);
            let r = e.mod_floor(&a);
            binding.add_scaled(&Dimension::var(v, 1), &(-q));
            new_row.add_scaled(&Dimension::var(v, 1), &r);
        }
        compose_binding(resolved, pivot, binding);
        row = new_row;
    }
}

/// Inserts `pivot -> binding`, rewriting existing values through it first so
/// no resolved value mentions a bound variable.
fn compose_binding(
    resolved: &mut BTreeMap<DimVar, Dimension>,
    pivot: DimVar,
    binding: Dimension,
) {
    debug_assert!(binding.var_exponent(pivot).is_zero(), "occurs check");
    for value in resolved.values_mut() {
        let exp = value.var_exponent(pivot);
        if !exp.is_zero() {
            value.add_scaled(&Dimension::var(pivot, 1), &(-&exp));
            value.add_scaled(&binding, &exp);
        }
    }
    resolved.insert(pivot, binding);
}

/// Divides a row by the gcd of all its exponents; sound because the gcd
/// divides every term of the equation.
fn reduce_content(row: &mut Dimension) {
    let mut g = BigInt::zero();
    for e in row.var_exponents().values() {
        g = g.gcd(e);
    }
    for e in row.base_exponents().values() {
        g = g.gcd(e);
    }
    if g > BigInt::from(1) {
        let mut reduced = Dimension::identity();
        for (&idx, e) in row.base_exponents() {
            reduced.add_scaled(&Dimension::base_unit(idx, 1), &(e / &g));
        }
        for (v, e) in row.vars_iter() {
            reduced.add_scaled(&Dimension::var(v, 1), &(e / &g));
        }
        *row = reduced;
    }
}

/// Applies a substitution to a dimension (free-function form).
pub fn apply_substitution(s: &Substitution, d: &Dimension) -> Dimension {
    s.apply(d)
}

/// The number of variables left undetermined by the unifier over the given
/// system: the nullity of the constraint matrix. Counts system variables left
/// unbound (including ones the equations never constrain, which are zero
/// columns) plus any live fresh variables introduced by elimination.
pub fn free_variable_count(s: &Substitution, system_vars: &BTreeSet<DimVar>) -> usize {
    let unbound_system = system_vars
        .iter()
        .filter(|v| !s.bindings().contains_key(v))
        .count();
    let live_fresh = s
        .free()
        .iter()
        .filter(|v| !system_vars.contains(v))
        .count();
    unbound_system + live_fresh
}

/// Collects every variable mentioned by a system.
pub fn system_vars(eqs: &[DimEquation]) -> BTreeSet<DimVar> {
    let mut out = BTreeSet::new();
    for eq in eqs {
        for (v, _) in eq.lhs.vars_iter() {
            out.insert(v);
        }
        for (v, _) in eq.rhs.vars_iter() {
            out.insert(v);
        }
    }
    out
}
