//! Cayley tables and grade arithmetic for Cl(p,q,r).
//!
//! Generators are ordered degenerate-first: indices `0..r` square to 0,
//! `r..r+p` to +1, and `r+p..r+p+q` to -1, so Cl(3,0,1) comes out in the
//! common PGA layout with `e0` degenerate. A basis blade is a bit mask over
//! generators; its grade is the popcount. The product of two blades always
//! lands on `a XOR b`, with a sign in `{-1, 0, +1}`: the transposition parity
//! of interleaving the factor lists, times the metric of every shared
//! generator. Sharing a degenerate generator kills the product outright,
//! which is where structural sparsity comes from.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::numeric::ExactAccumulator;

/// Maximum total generator count; keeps tables and exhaustive oracles at desk
/// scale (2^12 x 2^12 entries at most).
pub const MAX_GENERATORS: u8 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CliffordError {
    #[error("signature ({p},{q},{r}) has {total} generators; maximum is {max}", total = p + q + r, max = MAX_GENERATORS)]
    SignatureTooLarge { p: u8, q: u8, r: u8 },
    #[error("multivector signatures differ")]
    SignatureMismatch,
}

/// Algebra signature: `p` generators squaring to +1, `q` to -1, `r` to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    p: u8,
    q: u8,
    r: u8,
}

impl Signature {
    pub fn new(p: u8, q: u8, r: u8) -> Result<Self, CliffordError> {
        if p as u16 + q as u16 + r as u16 > MAX_GENERATORS as u16 {
            return Err(CliffordError::SignatureTooLarge { p, q, r });
        }
        Ok(Signature { p, q, r })
    }

    pub fn p(&self) -> u8 {
        self.p
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn r(&self) -> u8 {
        self.r
    }

    /// Total generator count n = p + q + r.
    pub fn total(&self) -> u8 {
        self.p + self.q + self.r
    }

    /// Metric of generator `i` under degenerate-first ordering.
    pub fn metric(&self, i: u8) -> i8 {
        if i < self.r {
            0
        } else if i < self.r + self.p {
            1
        } else {
            -1
        }
    }

    /// Mask of degenerate generators (the low `r` bits).
    pub fn degenerate_mask(&self) -> u16 {
        (1u16 << self.r) - 1
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cl({},{},{})", self.p, self.q, self.r)
    }
}

/// A basis blade: bit `i` set iff generator `i` is a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Blade(pub u16);

impl Blade {
    pub const SCALAR: Blade = Blade(0);

    pub fn grade(&self) -> u8 {
        self.0.count_ones() as u8
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }

    /// Canonical name: `1` for the scalar, else `e` followed by generator
    /// indices (comma-separated once indices exceed one digit).
    pub fn name(&self) -> String {
        if self.0 == 0 {
            return "1".to_string();
        }
        let indices: Vec<u8> = (0..16).filter(|i| self.0 >> i & 1 == 1).collect();
        if indices.iter().all(|&i| i < 10) {
            let digits: String = indices.iter().map(|i| i.to_string()).collect();
            format!("e{digits}")
        } else {
            let parts: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
            format!("e({})", parts.join(","))
        }
    }
}

/// A set of grades, stored as a bit set over 0..=12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct GradeSet(u16);

impl GradeSet {
    pub const EMPTY: GradeSet = GradeSet(0);

    pub fn singleton(grade: u8) -> Self {
        GradeSet(1 << grade)
    }

    /// All grades 0..=n.
    pub fn full(n: u8) -> Self {
        GradeSet(((1u32 << (n + 1)) - 1) as u16)
    }

    pub fn from_grades<I: IntoIterator<Item = u8>>(grades: I) -> Self {
        let mut s = GradeSet::EMPTY;
        for g in grades {
            s.0 |= 1 << g;
        }
        s
    }

    pub fn contains(&self, grade: u8) -> bool {
        self.0 >> grade & 1 == 1
    }

    pub fn insert(&mut self, grade: u8) {
        self.0 |= 1 << grade;
    }

    pub fn union(&self, other: GradeSet) -> GradeSet {
        GradeSet(self.0 | other.0)
    }

    pub fn intersect(&self, other: GradeSet) -> GradeSet {
        GradeSet(self.0 & other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(&self, other: GradeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0u8..16).filter(|&g| self.contains(g))
    }

    pub fn grades(&self) -> Vec<u8> {
        self.iter().collect()
    }
}

impl fmt::Display for GradeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|g| g.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Precomputed geometric-product table. The result blade is always
/// `a XOR b`, so only signs are stored.
#[derive(Debug, Clone)]
pub struct CayleyTable {
    signature: Signature,
    signs: Vec<i8>,
}

/// Builds the Cayley table for a signature.
pub fn build_cayley(sig: Signature) -> Result<CayleyTable, CliffordError> {
    let n = sig.total();
    let blades = 1usize << n;
    let mut signs = vec![0i8; blades * blades];
    for a in 0..blades as u16 {
        for b in 0..blades as u16 {
            signs[a as usize * blades + b as usize] = product_sign(&sig, a, b);
        }
    }
    Ok(CayleyTable { signature: sig, signs })
}

/// Sign of `e_A * e_B`: transposition parity of interleaving the sorted factor
/// lists, times the metric of each shared generator.
fn product_sign(sig: &Signature, a: u16, b: u16) -> i8 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let low = rest & rest.wrapping_neg();
        let pos = low.trailing_zeros();
        swaps += (a >> (pos + 1)).count_ones();
        rest &= !low;
    }
    let mut sign: i8 = if swaps % 2 == 0 { 1 } else { -1 };
    let mut shared = a & b;
    while shared != 0 {
        let low = shared & shared.wrapping_neg();
        let i = low.trailing_zeros() as u8;
        match sig.metric(i) {
            0 => return 0,
            -1 => sign = -sign,
            _ => {}
        }
        shared &= !low;
    }
    sign
}

impl CayleyTable {
    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn blade_count(&self) -> usize {
        1usize << self.signature.total()
    }

    pub fn blades(&self) -> impl Iterator<Item = Blade> {
        (0..self.blade_count() as u16).map(Blade)
    }

    pub fn sign(&self, a: Blade, b: Blade) -> i8 {
        self.signs[a.index() * self.blade_count() + b.index()]
    }

    /// The product entry `(sign, result)`; `result = a XOR b` always, with
    /// sign 0 iff the blades share a degenerate generator.
    pub fn product(&self, a: Blade, b: Blade) -> (i8, Blade) {
        (self.sign(a, b), Blade(a.0 ^ b.0))
    }

    /// Grades reachable by products of blades drawn from `a` and `b`,
    /// counting only nonzero table entries. This refines the grade formula by
    /// accounting for degenerate generators.
    pub fn grade_product_set(&self, a: GradeSet, b: GradeSet) -> GradeSet {
        let mut out = GradeSet::EMPTY;
        for x in self.blades() {
            if !a.contains(x.grade()) {
                continue;
            }
            for y in self.blades() {
                if !b.contains(y.grade()) {
                    continue;
                }
                if self.sign(x, y) != 0 {
                    out.insert(Blade(x.0 ^ y.0).grade());
                }
            }
        }
        out
    }

    /// Counts nonzero entries among ordered blade pairs drawn from the two
    /// grade sets, and the total number of such pairs.
    pub fn sparsity_count(&self, a: GradeSet, b: GradeSet) -> (u64, u64) {
        let mut nonzero = 0u64;
        let mut total = 0u64;
        for x in self.blades() {
            if !a.contains(x.grade()) {
                continue;
            }
            for y in self.blades() {
                if !b.contains(y.grade()) {
                    continue;
                }
                total += 1;
                if self.sign(x, y) != 0 {
                    nonzero += 1;
                }
            }
        }
        (nonzero, total)
    }
}

/// Outer (wedge) product grade rule: grade j wedge grade k lands on j + k, or
/// nowhere when that exceeds the algebra dimension (structurally zero).
pub fn grade_outer(j: u8, k: u8, n: u8) -> GradeSet {
    if j + k <= n {
        GradeSet::singleton(j + k)
    } else {
        GradeSet::EMPTY
    }
}

/// Geometric product grade rule: grades |k - j| + 2i for 0 <= i <= min(j,k),
/// clipped to the algebra.
pub fn grade_geometric(j: u8, k: u8, n: u8) -> GradeSet {
    let mut out = GradeSet::EMPTY;
    let lo = j.abs_diff(k);
    for i in 0..=j.min(k) {
        let g = lo + 2 * i;
        if g <= n {
            out.insert(g);
        }
    }
    out
}

/// Sparse multivector with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Multivector {
    signature: Signature,
    coeffs: BTreeMap<Blade, f64>,
}

impl Multivector {
    pub fn zero(signature: Signature) -> Self {
        Multivector { signature, coeffs: BTreeMap::new() }
    }

    pub fn scalar(signature: Signature, value: f64) -> Self {
        let mut mv = Multivector::zero(signature);
        mv.set(Blade::SCALAR, value);
        mv
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn set(&mut self, blade: Blade, value: f64) {
        if value == 0.0 {
            self.coeffs.remove(&blade);
        } else {
            self.coeffs.insert(blade, value);
        }
    }

    pub fn get(&self, blade: Blade) -> f64 {
        self.coeffs.get(&blade).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (Blade, f64)> + '_ {
        self.coeffs.iter().map(|(&b, &c)| (b, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The set of grades present in the support.
    pub fn grade_set(&self) -> GradeSet {
        GradeSet::from_grades(self.coeffs.keys().map(Blade::grade))
    }
}

/// Dense-oracle geometric product: each output coefficient is the exactly
/// accumulated sum of signed coefficient products, rounded once.
pub fn mv_geometric_product(
    table: &CayleyTable,
    x: &Multivector,
    y: &Multivector,
) -> Result<Multivector, CliffordError> {
    if x.signature() != table.signature() || y.signature() != table.signature() {
        return Err(CliffordError::SignatureMismatch);
    }
    let mut accs: BTreeMap<Blade, ExactAccumulator> = BTreeMap::new();
    for (a, ca) in x.support() {
        for (b, cb) in y.support() {
            let (sign, result) = table.product(a, b);
            if sign == 0 {
                continue;
            }
            accs.entry(result)
                .or_insert_with(ExactAccumulator::new)
                .add_product(sign as f64 * ca, cb);
        }
    }
    let mut out = Multivector::zero(table.signature());
    for (blade, acc) in accs {
        out.set(blade, acc.to_f64());
    }
    Ok(out)
}
