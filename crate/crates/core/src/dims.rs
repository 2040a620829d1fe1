//! The free abelian group of physical dimensions.
//!
//! A [`Dimension`] is a pair of sparse integer exponent vectors: one over the
//! declared base dimensions (the `Z^n` lattice) and one over dimension
//! variables. Multiplication adds exponents, inversion negates them, and the
//! identity is the empty vector. Exponents are arbitrary-width integers;
//! intermediate elimination in the unifier can exceed machine width even for
//! small inputs.
//!
//! Base symbols live in a [`Basis`]. The default basis is the seven SI base
//! dimensions orderd mass-first (`kg, m, s, A, K, mol, cd`), with the common
//! derived units (N, J, Pa, W, Hz, C, V) installed as parse-time aliases that
//! expand to base form, so equality stays decidable by exponent comparison.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

/// A dimension variable, identified by a session-scoped id.
///
/// Names and origins live in the session's [`VarTable`]; the id alone is what
/// exponent vectors carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DimVar(pub u32);

/// Session-scoped allocation of dimension variables.
///
/// Variables are interned in order of first textual occurrence so that
/// principal unifiers are reproducible byte-for-byte. Fresh variables
/// introduced by elimination get synthetic names that never collide with
/// interned ones.
#[derive(Debug, Clone, Default)]
pub struct VarTable {
    names: Vec<String>,
    origins: Vec<Option<String>>,
    by_name: BTreeMap<String, DimVar>,
    fresh_counter: u32,
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns `name`, returning the existing id on repeat occurrences.
    pub fn intern(&mut self, name: &str) -> DimVar {
        if let Some(&v) = self.by_name.get(name) {
            return v;
        }
        let v = DimVar(self.names.len() as u32);
        self.names.push(name.to_string());
        self.origins.push(None);
        self.by_name.insert(name.to_string(), v);
        v
    }

    /// Interns `name` and records where it came from (node or edge id).
    pub fn intern_with_origin(&mut self, name: &str, origin: &str) -> DimVar {
        let v = self.intern(name);
        let slot = &mut self.origins[v.0 as usize];
        if slot.is_none() {
            *slot = Some(origin.to_string());
        }
        v
    }

    /// Allocates a variable with a unique synthetic name (`_0`, `_1`, ...).
    pub fn fresh(&mut self, origin: &str) -> DimVar {
        loop {
            let name = format!("_{}", self.fresh_counter);
            self.fresh_counter += 1;
            if !self.by_name.contains_key(&name) {
                return self.intern_with_origin(&name, origin);
            }
        }
    }

    pub fn name(&self, v: DimVar) -> &str {
        &self.names[v.0 as usize]
    }

    pub fn origin(&self, v: DimVar) -> Option<&str> {
        self.origins[v.0 as usize].as_deref()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// An ordered set of base-dimension symbols plus derived-unit aliases.
#[derive(Debug, Clone)]
pub struct Basis {
    symbols: Vec<String>,
    by_symbol: BTreeMap<String, usize>,
    aliases: BTreeMap<String, Dimension>,
}

/// Default basis symbols: the seven SI base dimensions, mass first.
pub const SI_SYMBOLS: [&str; 7] = ["kg", "m", "s", "A", "K", "mol", "cd"];

impl Basis {
    /// Builds a basis from an ordered symbol list. Symbols must be unique,
    /// non-empty, start with a letter, and contain only letters and digits.
    pub fn new<S: AsRef<str>>(symbols: &[S]) -> Result<Self, DimError> {
        let mut by_symbol = BTreeMap::new();
        let mut list = Vec::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            let s = s.as_ref();
            if !is_valid_symbol(s) {
                return Err(DimError::BadSymbol { symbol: s.to_string() });
            }
            if by_symbol.insert(s.to_string(), i).is_some() {
                return Err(DimError::DuplicateSymbol { symbol: s.to_string() });
            }
            list.push(s.to_string());
        }
        let mut basis = Basis { symbols: list, by_symbol, aliases: BTreeMap::new() };
        basis.install_si_aliases();
        Ok(basis)
    }

    /// The default SI basis with derived-unit aliases installed.
    pub fn si() -> Self {
        Basis::new(&SI_SYMBOLS).expect("SI basis is well-formed")
    }

    /// Installs the standard derived-unit aliases whose base symbols exist in
    /// this basis. Aliases never shadow a base symbol.
    fn install_si_aliases(&mut self) {
        let tables: [(&str, &[(&str, i64)]); 7] = [
            ("N", &[("kg", 1), ("m", 1), ("s", -2)]),
            ("J", &[("kg", 1), ("m", 2), ("s", -2)]),
            ("Pa", &[("kg", 1), ("m", -1), ("s", -2)]),
            ("W", &[("kg", 1), ("m", 2), ("s", -3)]),
            ("Hz", &[("s", -1)]),
            ("C", &[("s", 1), ("A", 1)]),
            ("V", &[("kg", 1), ("m", 2), ("s", -3), ("A", -1)]),
        ];
        'alias: for (name, parts) in tables {
            if self.by_symbol.contains_key(name) {
                continue;
            }
            let mut dim = Dimension::identity();
            for &(sym, exp) in parts {
                match self.by_symbol.get(sym) {
                    Some(&idx) => dim.base.insert(idx, BigInt::from(exp)),
                    None => continue 'alias,
                };
            }
            self.aliases.insert(name.to_string(), dim);
        }
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.by_symbol.get(symbol).copied()
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn alias(&self, symbol: &str) -> Option<&Dimension> {
        self.aliases.get(symbol)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn is_valid_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric())
}

fn is_valid_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// An element of the free abelian group over base dimensions and dimension
/// variables, stored in canonical sparse form (no zero exponents).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dimension {
    base: BTreeMap<usize, BigInt>,
    vars: BTreeMap<DimVar, BigInt>,
}

impl Dimension {
    /// The group identity (dimensionless).
    pub fn identity() -> Self {
        Dimension::default()
    }

    /// A single base dimension raised to `exp`.
    pub fn base_unit(index: usize, exp: i64) -> Self {
        let mut d = Dimension::identity();
        if exp != 0 {
            d.base.insert(index, BigInt::from(exp));
        }
        d
    }

    /// A single variable raised to `exp`.
    pub fn var(v: DimVar, exp: i64) -> Self {
        let mut d = Dimension::identity();
        if exp != 0 {
            d.vars.insert(v, BigInt::from(exp));
        }
        d
    }

    pub fn is_identity(&self) -> bool {
        self.base.is_empty() && self.vars.is_empty()
    }

    pub fn is_var_free(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn base_exponents(&self) -> &BTreeMap<usize, BigInt> {
        &self.base
    }

    pub fn var_exponents(&self) -> &BTreeMap<DimVar, BigInt> {
        &self.vars
    }

    pub fn base_exponent(&self, index: usize) -> BigInt {
        self.base.get(&index).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn var_exponent(&self, v: DimVar) -> BigInt {
        self.vars.get(&v).cloned().unwrap_or_else(BigInt::zero)
    }

    /// Adds `k` copies of `other`'s exponents into `self` (the group
    /// operation `self * other^k`), keeping canonical form.
    pub fn add_scaled(&mut self, other: &Dimension, k: &BigInt) {
        if k.is_zero() {
            return;
        }
        for (&idx, exp) in &other.base {
            let entry = self.base.entry(idx).or_insert_with(BigInt::zero);
            *entry += exp * k;
            if entry.is_zero() {
                self.base.remove(&idx);
            }
        }
        for (&v, exp) in &other.vars {
            let entry = self.vars.entry(v).or_insert_with(BigInt::zero);
            *entry += exp * k;
            if entry.is_zero() {
                self.vars.remove(&v);
            }
        }
    }

    /// The group operation `a * b^k`; covers mul (k = 1), div (k = -1), and
    /// pow (a = identity).
    pub fn combine(&self, other: &Dimension, k: i64) -> Dimension {
        let mut out = self.clone();
        out.add_scaled(other, &BigInt::from(k));
        out
    }

    pub fn mul(&self, other: &Dimension) -> Dimension {
        self.combine(other, 1)
    }

    pub fn div(&self, other: &Dimension) -> Dimension {
        self.combine(other, -1)
    }

    pub fn pow(&self, k: i64) -> Dimension {
        Dimension::identity().combine(self, k)
    }

    pub fn inverse(&self) -> Dimension {
        self.pow(-1)
    }

    /// Iterates over variables with nonzero exponent.
    pub fn vars_iter(&self) -> impl Iterator<Item = (DimVar, &BigInt)> {
        self.vars.iter().map(|(&v, e)| (v, e))
    }
}

/// The dimension of `df/dx` given the dimensions of output and input:
/// subtraction in the exponent algebra, `d_out * d_in^-1`.
pub fn gradient_dimension(d_out: &Dimension, d_in: &Dimension) -> Dimension {
    d_out.combine(d_in, -1)
}

/// The group operation `a * b^k` as a free function.
pub fn dim_combine(a: &Dimension, b: &Dimension, k: i64) -> Dimension {
    a.combine(b, k)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimError {
    #[error("unknown symbol `{symbol}`")]
    UnknownSymbol { symbol: String },
    #[error("malformed exponent `{text}`")]
    MalformedExponent { text: String },
    #[error("empty dimension expression (write `1` for the dimensionless identity)")]
    Empty,
    #[error("malformed dimension expression at `{text}`")]
    Malformed { text: String },
    #[error("invalid base symbol `{symbol}`")]
    BadSymbol { symbol: String },
    #[error("duplicate base symbol `{symbol}`")]
    DuplicateSymbol { symbol: String },
}

/// Parses the grammar `unit (("*"|"/") unit)*` with
/// `unit = symbol ("^" signed-int)?`. Symbols are declared base dimensions,
/// derived aliases (expanded to base form), variables prefixed `'`, or the
/// literal `1`. Variables are interned in `vars` in order of first occurrence.
pub fn parse_dimension(
    text: &str,
    basis: &Basis,
    vars: &mut VarTable,
) -> Result<Dimension, DimError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(DimError::Empty);
    }
    let mut out = Dimension::identity();
    let mut rest = text;
    let mut sign: i64 = 1;
    loop {
        rest = rest.trim_start();
        let (factor, tail) = take_factor(rest)?;
        apply_factor(&mut out, factor, sign, basis, vars)?;
        rest = tail.trim_start();
        if rest.is_empty() {
            return Ok(out);
        }
        sign = match rest.as_bytes()[0] {
            b'*' => 1,
            b'/' => -1,
            _ => return Err(DimError::Malformed { text: rest.to_string() }),
        };
        rest = &rest[1..];
        if rest.trim_start().is_empty() {
            return Err(DimError::Malformed { text: text.to_string() });
        }
    }
}

struct Factor<'a> {
    symbol: &'a str,
    is_var: bool,
    exponent: BigInt,
}

fn take_factor(text: &str) -> Result<(Factor<'_>, &str), DimError> {
    if text.is_empty() {
        return Err(DimError::Empty);
    }
    let bytes = text.as_bytes();
    let (is_var, start) = if bytes[0] == b'\'' { (true, 1) } else { (false, 0) };
    let mut end = start;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let ok = if is_var {
            c.is_ascii_alphanumeric() || c == '_'
        } else {
            c.is_ascii_alphanumeric()
        };
        if !ok {
            break;
        }
        end += 1;
    }
    if end == start {
        return Err(DimError::Malformed { text: text.to_string() });
    }
    let symbol = &text[start..end];
    let mut rest = &text[end..];
    let mut exponent = BigInt::one();
    if let Some(stripped) = rest.strip_prefix('^') {
        let mut num_end = 0;
        let nb = stripped.as_bytes();
        if num_end < nb.len() && (nb[num_end] == b'-' || nb[num_end] == b'+') {
            num_end += 1;
        }
        let digits_start = num_end;
        while num_end < nb.len() && nb[num_end].is_ascii_digit() {
            num_end += 1;
        }
        if num_end == digits_start {
            return Err(DimError::MalformedExponent { text: stripped.to_string() });
        }
        exponent = stripped[..num_end]
            .parse::<BigInt>()
            .map_err(|_| DimError::MalformedExponent { text: stripped[..num_end].to_string() })?;
        rest = &stripped[num_end..];
    }
    Ok((Factor { symbol, is_var, exponent }, rest))
}

fn apply_factor(
    out: &mut Dimension,
    factor: Factor<'_>,
    sign: i64,
    basis: &Basis,
    vars: &mut VarTable,
) -> Result<(), DimError> {
    let k = BigInt::from(sign) * &factor.exponent;
    if factor.is_var {
        if !is_valid_var_name(factor.symbol) {
            return Err(DimError::Malformed { text: factor.symbol.to_string() });
        }
        let v = vars.intern(factor.symbol);
        out.add_scaled(&Dimension::var(v, 1), &k);
        return Ok(());
    }
    if factor.symbol == "1" {
        return Ok(());
    }
    if let Some(idx) = basis.index_of(factor.symbol) {
        out.add_scaled(&Dimension::base_unit(idx, 1), &k);
        return Ok(());
    }
    if let Some(alias) = basis.alias(factor.symbol) {
        out.add_scaled(alias, &k);
        return Ok(());
    }
    Err(DimError::UnknownSymbol { symbol: factor.symbol.to_string() })
}

/// Deterministic, round-trippable rendering: variables in id order, then base
/// symbols in basis order, `^k` for exponents other than 1, factors joined by
/// `*`. The identity renders as `1`.
pub fn format_dimension(d: &Dimension, basis: &Basis, vars: &VarTable) -> String {
    if d.is_identity() {
        return "1".to_string();
    }
    let mut parts = Vec::with_capacity(d.vars.len() + d.base.len());
    for (v, exp) in &d.vars {
        parts.push(render_factor(&format!("'{}", vars.name(*v)), exp));
    }
    for (idx, exp) in &d.base {
        parts.push(render_factor(basis.symbol(*idx), exp));
    }
    parts.join("*")
}

fn render_factor(symbol: &str, exp: &BigInt) -> String {
    if exp.is_one() {
        symbol.to_string()
    } else {
        format!("{symbol}^{exp}")
    }
}

/// Display adapter that pairs a dimension with its naming context.
pub struct DisplayDim<'a> {
    pub dim: &'a Dimension,
    pub basis: &'a Basis,
    pub vars: &'a VarTable,
}

impl fmt::Display for DisplayDim<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_dimension(self.dim, self.basis, self.vars))
    }
}
