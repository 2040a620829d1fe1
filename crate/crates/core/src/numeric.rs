//! Exact accumulation and structural-zero drift probes.
//!
//! [`ExactAccumulator`] is a software quire: a 4288-bit two's-complement
//! fixed-point register wide enough to hold any sum of products of binary64
//! values without rounding (product exponents span 2^-2148 ..= 2^2048, plus
//! 92 carry-guard bits). Adding a product is exact, so accumulation order
//! never affects the result; rounding happens once, at final conversion.
//!
//! [`drift_probe`] contrasts exact and per-step-rounded arithmetic on a
//! closed loop of geometric products, recording the largest magnitude that
//! ever appears in grades the algebra says must stay zero.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::One;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::clifford::{Blade, CayleyTable, GradeSet};

/// Total accumulator width in bits (67 limbs of 64 bits).
const ACC_BITS: usize = 4288;
const LIMBS: usize = ACC_BITS / 64;
/// Weight of bit 0 is 2^-FRAC_BITS: the smallest binary64 product is
/// 2^-1074 * 2^-1074 = 2^-2148.
const FRAC_BITS: i64 = 2148;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },
}

/// Floating-point formats for the rounded (naive) accumulation paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatFormat {
    Binary32,
    Binary64,
}

impl FloatFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            FloatFormat::Binary32 => "f32",
            FloatFormat::Binary64 => "f64",
        }
    }
}

/// Kulisch-style exact accumulator covering the full binary64 product range.
#[derive(Clone)]
pub struct ExactAccumulator {
    limbs: [u64; LIMBS],
}

impl Default for ExactAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactAccumulator {
    pub fn new() -> Self {
        ExactAccumulator { limbs: [0u64; LIMBS] }
    }

    /// Adds the exact product `a * b` to the register. Both inputs must be
    /// finite; the product itself is never rounded.
    pub fn add_product(&mut self, a: f64, b: f64) {
        debug_assert!(a.is_finite() && b.is_finite());
        let Some((neg_a, mant_a, exp_a)) = decompose(a) else { return };
        let Some((neg_b, mant_b, exp_b)) = decompose(b) else { return };
        let product = mant_a as u128 * mant_b as u128;
        let shift = (exp_a + exp_b + FRAC_BITS) as usize;
        self.add_shifted(product, shift, neg_a != neg_b);
    }

    /// Adds a single value exactly.
    pub fn add(&mut self, v: f64) {
        self.add_product(v, 1.0);
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    fn add_shifted(&mut self, p: u128, shift: usize, negative: bool) {
        if p == 0 {
            return;
        }
        let limb = shift / 64;
        let off = shift % 64;
        // p << off spans at most three limbs (106 + 63 < 192 bits).
        let chunk = if off == 0 {
            [p as u64, (p >> 64) as u64, 0]
        } else {
            [
                (p << off) as u64,
                (p >> (64 - off)) as u64,
                (p >> (128 - off)) as u64,
            ]
        };
        if negative {
            self.sub_at(limb, chunk);
        } else {
            self.add_at(limb, chunk);
        }
    }

    fn add_at(&mut self, limb: usize, chunk: [u64; 3]) {
        let mut carry = 0u64;
        for (i, &c) in chunk.iter().enumerate() {
            let slot = &mut self.limbs[limb + i];
            let (s1, o1) = slot.overflowing_add(c);
            let (s2, o2) = s1.overflowing_add(carry);
            *slot = s2;
            carry = (o1 as u64) + (o2 as u64);
        }
        let mut i = limb + 3;
        while carry != 0 && i < LIMBS {
            let (s, o) = self.limbs[i].overflowing_add(carry);
            self.limbs[i] = s;
            carry = o as u64;
            i += 1;
        }
    }

    fn sub_at(&mut self, limb: usize, chunk: [u64; 3]) {
        let mut borrow = 0u64;
        for (i, &c) in chunk.iter().enumerate() {
            let slot = &mut self.limbs[limb + i];
            let (s1, o1) = slot.overflowing_sub(c);
            let (s2, o2) = s1.overflowing_sub(borrow);
            *slot = s2;
            borrow = (o1 as u64) + (o2 as u64);
        }
        let mut i = limb + 3;
        while borrow != 0 && i < LIMBS {
            let (s, o) = self.limbs[i].overflowing_sub(borrow);
            self.limbs[i] = s;
            borrow = o as u64;
            i += 1;
        }
    }

    fn is_negative(&self) -> bool {
        self.limbs[LIMBS - 1] >> 63 == 1
    }

    /// Sign and magnitude of the register contents.
    fn magnitude(&self) -> (bool, [u64; LIMBS]) {
        if !self.is_negative() {
            return (false, self.limbs);
        }
        let mut mag = [0u64; LIMBS];
        let mut carry = 1u64;
        for (m, &l) in mag.iter_mut().zip(self.limbs.iter()) {
            let (s, o) = (!l).overflowing_add(carry);
            *m = s;
            carry = o as u64;
        }
        (true, mag)
    }

    /// One round-to-nearest-even conversion of the exact contents.
    pub fn to_f64(&self) -> f64 {
        let (negative, mag) = self.magnitude();
        let Some(high) = highest_bit(&mag) else { return 0.0 };
        let exp = high as i64 - FRAC_BITS; // value in [2^exp, 2^(exp+1))

        let (mantissa, half, sticky, out_exp) = if exp >= -1022 {
            // Normal range: take 53 bits from the top.
            let m = extract_bits(&mag, high as i64 - 52, 53);
            let half = high as i64 - 53 >= 0 && bit(&mag, (high as i64 - 53) as usize);
            let sticky = any_bits_below(&mag, high as i64 - 53);
            (m, half, sticky, exp)
        } else {
            // Subnormal: align to 2^-1074 (bit position FRAC_BITS - 1074).
            let lsb = FRAC_BITS - 1074;
            let m = extract_bits(&mag, lsb, 53);
            let half = lsb - 1 >= 0 && bit(&mag, (lsb - 1) as usize);
            let sticky = any_bits_below(&mag, lsb - 1);
            (m, half, sticky, -1023)
        };

        let mut m = mantissa;
        if half && (sticky || m & 1 == 1) {
            m += 1;
        }
        let mut out_exp = out_exp;
        if m == 1u64 << 53 {
            m = 1u64 << 52;
            out_exp += 1;
        }
        let bits = if out_exp == -1023 || m < (1u64 << 52) {
            // Subnormal (or rounded up into the minimum normal naturally).
            m
        } else {
            if out_exp > 1023 {
                return if negative { f64::NEG_INFINITY } else { f64::INFINITY };
            }
            ((out_exp + 1023) as u64) << 52 | (m & ((1u64 << 52) - 1))
        };
        let value = f64::from_bits(bits);
        if negative {
            -value
        } else {
            value
        }
    }

    /// The exact register contents as a rational number.
    pub fn to_rational(&self) -> BigRational {
        let (negative, mag) = self.magnitude();
        let bytes: Vec<u8> = mag.iter().flat_map(|l| l.to_le_bytes()).collect();
        let mut numer = BigInt::from_bytes_le(Sign::Plus, &bytes);
        if negative {
            numer = -numer;
        }
        BigRational::new(numer, BigInt::one() << FRAC_BITS as usize)
    }
}

/// Splits a finite f64 into (negative, integer mantissa, exponent) with
/// `|x| = mantissa * 2^exponent`. Returns None for zero.
fn decompose(x: f64) -> Option<(bool, u64, i64)> {
    if x == 0.0 {
        return None;
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        Some((negative, frac, -1074))
    } else {
        Some((negative, frac | (1u64 << 52), raw_exp - 1023 - 52))
    }
}

fn highest_bit(mag: &[u64; LIMBS]) -> Option<usize> {
    for i in (0..LIMBS).rev() {
        if mag[i] != 0 {
            return Some(i * 64 + 63 - mag[i].leading_zeros() as usize);
        }
    }
    None
}

fn bit(mag: &[u64; LIMBS], pos: usize) -> bool {
    mag[pos / 64] >> (pos % 64) & 1 == 1
}

/// Extracts `count` bits starting at bit position `lo` (clamped at 0).
fn extract_bits(mag: &[u64; LIMBS], lo: i64, count: usize) -> u64 {
    let mut out = 0u64;
    for i in 0..count {
        let pos = lo + i as i64;
        if pos >= 0 && pos < ACC_BITS as i64 && bit(mag, pos as usize) {
            out |= 1u64 << i;
        }
    }
    out
}

fn any_bits_below(mag: &[u64; LIMBS], pos: i64) -> bool {
    if pos <= 0 {
        return false;
    }
    let pos = pos as usize;
    let full = pos / 64;
    for &l in &mag[..full] {
        if l != 0 {
            return true;
        }
    }
    let rem = pos % 64;
    rem > 0 && mag[full] & ((1u64 << rem) - 1) != 0
}

/// Exactly accumulated dot product: the true rational sum of products and its
/// one-rounding conversion to f64.
pub fn exact_dot(a: &[f64], b: &[f64]) -> Result<(BigRational, f64), NumericError> {
    check_inputs(a, b)?;
    let mut acc = ExactAccumulator::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add_product(x, y);
    }
    Ok((acc.to_rational(), acc.to_f64()))
}

/// Left-to-right accumulation with per-step rounding in the chosen format.
pub fn naive_dot(a: &[f64], b: &[f64], format: FloatFormat) -> Result<f64, NumericError> {
    check_inputs(a, b)?;
    match format {
        FloatFormat::Binary64 => {
            let mut s = 0.0f64;
            for (&x, &y) in a.iter().zip(b) {
                s += x * y;
            }
            Ok(s)
        }
        FloatFormat::Binary32 => {
            let mut s = 0.0f32;
            for (&x, &y) in a.iter().zip(b) {
                s += x as f32 * y as f32;
            }
            Ok(s as f64)
        }
    }
}

fn check_inputs(a: &[f64], b: &[f64]) -> Result<(), NumericError> {
    if a.len() != b.len() {
        return Err(NumericError::LengthMismatch { left: a.len(), right: b.len() });
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(NumericError::NonFinite { index: i });
        }
    }
    Ok(())
}

/// Result of a [`drift_probe`] run: the largest magnitude that appeared in a
/// structurally-zero grade under each accumulation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub exact_max: f64,
    pub naive_max: f64,
    pub steps: u64,
}

/// Closed-loop structural-zero probe.
///
/// Each step draws a fresh random bivector `B` and replaces the running
/// multivector `M` by the normalized commutator `M*B - B*M`. For bivectors the
/// commutator is algebraically pure grade 2: the grade-0 and grade-4
/// contributions of the two product orders cancel term-by-term, and odd grades
/// receive no contributions at all. A grade-unaware implementation still
/// computes all the cancelling terms; with per-step rounding their partial
/// sums leave residue in the structurally-zero grades, which then feeds the
/// next step. Exact accumulation sums each blade's contributions in a quire,
/// so the cancellation is exact and the structurally-zero grades stay at 0.0
/// through every step.
///
/// A single plain geometric product cannot exhibit this drift: a blade outside
/// the sparsity set receives either no contributions or only zero-signed ones,
/// which every rounding mode sums to exactly zero. The antisymmetrized pair is
/// the minimal loop whose structural zeros are cancellation-based.
pub fn drift_probe(table: &CayleyTable, steps: u64, format: FloatFormat) -> DriftReport {
    let n = table.signature().total();
    assert!(n >= 2, "drift probe needs at least two generators for bivectors");
    let bivectors: Vec<Blade> = table
        .blades()
        .filter(|b| b.grade() == 2)
        .collect();
    let blade_count = table.blade_count();
    let legitimate = GradeSet::singleton(2);

    let mut rng = StdRng::seed_from_u64(0x5eed_ab11);
    let random_bivector = |rng: &mut StdRng| -> Vec<f64> {
        let mut coeffs = vec![0.0f64; blade_count];
        for b in &bivectors {
            coeffs[b.index()] = round_format(rng.gen_range(-1.0..1.0), format);
        }
        coeffs
    };

    let mut exact_m = random_bivector(&mut rng);
    let mut naive_m = exact_m.clone();
    let mut exact_max = 0.0f64;
    let mut naive_max = 0.0f64;

    for _ in 0..steps {
        let b = random_bivector(&mut rng);

        let exact_next = commutator_exact(table, &exact_m, &b, format);
        let naive_next = commutator_naive(table, &naive_m, &b, format);

        for blade in table.blades() {
            if !legitimate.contains(blade.grade()) {
                exact_max = exact_max.max(exact_next[blade.index()].abs());
                naive_max = naive_max.max(naive_next[blade.index()].abs());
            }
        }

        exact_m = normalize(exact_next, format);
        naive_m = normalize(naive_next, format);
    }

    DriftReport { exact_max, naive_max, steps }
}

/// Commutator x*y - y*x with one quire per output blade; rounded once.
fn commutator_exact(
    table: &CayleyTable,
    x: &[f64],
    y: &[f64],
    format: FloatFormat,
) -> Vec<f64> {
    let blade_count = table.blade_count();
    let mut accs: Vec<ExactAccumulator> =
        (0..blade_count).map(|_| ExactAccumulator::new()).collect();
    for a in table.blades() {
        for b in table.blades() {
            let (sign, result) = table.product(a, b);
            if sign == 0 {
                continue;
            }
            let acc = &mut accs[result.index()];
            // x*y term, then the negated y*x term of the same blade pair.
            acc.add_product(sign as f64 * x[a.index()], y[b.index()]);
            acc.add_product(-(sign as f64) * y[a.index()], x[b.index()]);
        }
    }
    accs.iter().map(|acc| round_format(acc.to_f64(), format)).collect()
}

/// Commutator with left-to-right per-term rounding in the working format:
/// all x*y contributions in blade-pair order, then all y*x contributions.
fn commutator_naive(
    table: &CayleyTable,
    x: &[f64],
    y: &[f64],
    format: FloatFormat,
) -> Vec<f64> {
    let blade_count = table.blade_count();
    match format {
        FloatFormat::Binary32 => {
            let mut out = vec![0.0f32; blade_count];
            for a in table.blades() {
                for b in table.blades() {
                    let (sign, result) = table.product(a, b);
                    if sign == 0 {
                        continue;
                    }
                    out[result.index()] +=
                        sign as f32 * x[a.index()] as f32 * y[b.index()] as f32;
                }
            }
            for a in table.blades() {
                for b in table.blades() {
                    let (sign, result) = table.product(a, b);
                    if sign == 0 {
                        continue;
                    }
                    out[result.index()] -=
                        sign as f32 * y[a.index()] as f32 * x[b.index()] as f32;
                }
            }
            out.into_iter().map(|v| v as f64).collect()
        }
        FloatFormat::Binary64 => {
            let mut out = vec![0.0f64; blade_count];
            for a in table.blades() {
                for b in table.blades() {
                    let (sign, result) = table.product(a, b);
                    if sign == 0 {
                        continue;
                    }
                    out[result.index()] += sign as f64 * x[a.index()] * y[b.index()];
                }
            }
            for a in table.blades() {
                for b in table.blades() {
                    let (sign, result) = table.product(a, b);
                    if sign == 0 {
                        continue;
                    }
                    out[result.index()] -= sign as f64 * y[a.index()] * x[b.index()];
                }
            }
            out
        }
    }
}

fn normalize(mut coeffs: Vec<f64>, format: FloatFormat) -> Vec<f64> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max > 0.0 {
        for c in coeffs.iter_mut() {
            *c = round_format(*c / max, format);
        }
    }
    coeffs
}

fn round_format(v: f64, format: FloatFormat) -> f64 {
    match format {
        FloatFormat::Binary32 => v as f32 as f64,
        FloatFormat::Binary64 => v,
    }
}
