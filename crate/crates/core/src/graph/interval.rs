//! Closed-interval arithmetic for range propagation.
//!
//! Standard oriented interval rules: add/sub by endpoint orientation, mul and
//! div by four-corner products, integer powers split by parity. Division by
//! an interval containing zero is not widened silently; the elaborator turns
//! it into a range-undetermined error. Multi-term reductions nudge their
//! bounds outward a few ulps so that any left-to-right evaluation order stays
//! inside the propagated interval.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Largest absolute value over the interval.
    pub fn max_magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest nonzero absolute value, or None when the interval includes 0
    /// (zero itself is exactly representable everywhere).
    pub fn min_nonzero_magnitude(&self) -> Option<f64> {
        if self.contains_zero() {
            None
        } else {
            Some(self.lo.abs().min(self.hi.abs()))
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval::new(self.lo - other.hi, self.hi - other.lo)
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let corners = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        Interval::new(min4(corners), max4(corners))
    }

    /// Four-corner division; None when the divisor straddles zero.
    pub fn div(&self, other: &Interval) -> Option<Interval> {
        if other.contains_zero() {
            return None;
        }
        let corners = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        Some(Interval::new(min4(corners), max4(corners)))
    }

    /// Integer power; None when a negative exponent meets a zero-straddling
    /// base.
    pub fn powi(&self, k: i64) -> Option<Interval> {
        if k == 0 {
            return Some(Interval::point(1.0));
        }
        if k < 0 {
            if self.contains_zero() {
                return None;
            }
            let recip = Interval::new(1.0 / self.hi, 1.0 / self.lo);
            return recip.powi(-k);
        }
        let k32 = k as i32;
        if k % 2 == 1 {
            Some(Interval::new(self.lo.powi(k32), self.hi.powi(k32)))
        } else {
            let a = self.lo.abs().powi(k32);
            let b = self.hi.abs().powi(k32);
            let hi = a.max(b);
            let lo = if self.contains_zero() { 0.0 } else { a.min(b) };
            Some(Interval::new(lo, hi))
        }
    }

    /// Sum of `n` values drawn from this interval, with outward slack for
    /// reassociation rounding.
    pub fn sum_of(&self, n: u64) -> Interval {
        let n = n as f64;
        Interval::new(next_down_ulps(self.lo * n, 8), next_up_ulps(self.hi * n, 8))
    }

    /// Dot product of `n` element pairs drawn from two intervals.
    pub fn dot_of(&self, other: &Interval, n: u64) -> Interval {
        let per = self.mul(other);
        per.sum_of(n)
    }

    /// Symmetric bound scaled by a term count: used for multivector products
    /// where up to `terms` signed coefficient products land on one blade.
    pub fn bilinear_bound(&self, other: &Interval, terms: u64) -> Interval {
        let m = self.max_magnitude() * other.max_magnitude() * terms as f64;
        let m = next_up_ulps(m, 8);
        Interval::new(-m, m)
    }

    pub fn union(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Widen to include zero (projections may drop every component).
    pub fn with_zero(&self) -> Interval {
        Interval::new(self.lo.min(0.0), self.hi.max(0.0))
    }
}

fn min4(v: [f64; 4]) -> f64 {
    v[0].min(v[1]).min(v[2]).min(v[3])
}

fn max4(v: [f64; 4]) -> f64 {
    v[0].max(v[1]).max(v[2]).max(v[3])
}

fn next_up_ulps(v: f64, n: u32) -> f64 {
    let mut v = v;
    for _ in 0..n {
        v = next_after_up(v);
    }
    v
}

fn next_down_ulps(v: f64, n: u32) -> f64 {
    let mut v = v;
    for _ in 0..n {
        v = -next_after_up(-v);
    }
    v
}

fn next_after_up(v: f64) -> f64 {
    if v.is_nan() || v == f64::INFINITY {
        return v;
    }
    if v == 0.0 {
        return f64::from_bits(1);
    }
    let bits = v.to_bits();
    if v > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oriented_rules() {
        let a = Interval::new(1.0, 2.0);
        let b = Interval::new(-3.0, 5.0);
        assert_eq!(a.add(&b), Interval::new(-2.0, 7.0));
        assert_eq!(a.sub(&b), Interval::new(-4.0, 5.0));
        assert_eq!(a.neg(), Interval::new(-2.0, -1.0));
        assert_eq!(a.mul(&b), Interval::new(-6.0, 10.0));
    }

    #[test]
    fn division_guards_zero() {
        let a = Interval::new(1.0, 2.0);
        assert!(a.div(&Interval::new(-1.0, 1.0)).is_none());
        assert_eq!(a.div(&Interval::new(2.0, 4.0)), Some(Interval::new(0.25, 1.0)));
        assert_eq!(a.div(&Interval::new(-4.0, -2.0)), Some(Interval::new(-1.0, -0.25)));
    }

    #[test]
    fn powers_split_by_parity() {
        let spans_zero = Interval::new(-2.0, 3.0);
        assert_eq!(spans_zero.powi(2), Some(Interval::new(0.0, 9.0)));
        assert_eq!(spans_zero.powi(3), Some(Interval::new(-8.0, 27.0)));
        assert_eq!(spans_zero.powi(0), Some(Interval::point(1.0)));
        assert!(spans_zero.powi(-1).is_none());

        let neg = Interval::new(-3.0, -2.0);
        assert_eq!(neg.powi(2), Some(Interval::new(4.0, 9.0)));
        assert_eq!(neg.powi(-2).unwrap().lo, 1.0 / 9.0);
    }

    #[test]
    fn reductions_have_outward_slack() {
        let a = Interval::new(0.1, 0.1);
        let s = a.sum_of(3);
        // Any summation order of three 0.1s stays inside.
        let eval = 0.1 + 0.1 + 0.1;
        assert!(s.contains(eval));
        assert!(s.contains(3.0 * 0.1));
    }
}
