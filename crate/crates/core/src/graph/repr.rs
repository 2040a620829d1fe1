//! Numeric representation metadata and range-driven selection.
//!
//! Candidates are ordered narrowest-first, posits before floats at equal
//! width: posit8, posit16, float16, posit32, float32, float64. A candidate is
//! adequate when it covers the interval's magnitude span and its worst-case
//! relative spacing at the interval endpoints fits the error budget. Posit
//! metadata follows the standard es=2 layout, where precision tapers with the
//! regime length, so spacing is evaluated at the endpoint farthest from 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprKind {
    Posit8,
    Posit16,
    Posit32,
    Float16,
    Float32,
    Float64,
    Fixed,
}

impl ReprKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReprKind::Posit8 => "posit8",
            ReprKind::Posit16 => "posit16",
            ReprKind::Posit32 => "posit32",
            ReprKind::Float16 => "float16",
            ReprKind::Float32 => "float32",
            ReprKind::Float64 => "float64",
            ReprKind::Fixed => "fixed",
        }
    }
}

/// Format metadata used by selection and footprint accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub kind: ReprKind,
    pub width_bits: u32,
    pub max_magnitude: f64,
    pub min_positive: f64,
    pub epsilon_at_1: f64,
}

impl Representation {
    fn float(kind: ReprKind, width: u32, precision: i32, emax: i32) -> Self {
        // max = (2 - 2^(1-p)) * 2^emax; min subnormal = 2^(emin - (p-1)).
        let emin = 1 - emax;
        let max_magnitude = (2.0 - (0.5f64).powi(precision - 1)) * (2.0f64).powi(emax);
        let min_positive = (2.0f64).powi(emin - (precision - 1));
        Representation {
            kind,
            width_bits: width,
            max_magnitude,
            min_positive,
            epsilon_at_1: (0.5f64).powi(precision - 1),
        }
    }

    fn posit(kind: ReprKind, width: u32) -> Self {
        // Standard posit, es = 2: useed = 16, dynamic range useed^(n-2).
        let n = width as i32;
        let span = 4 * (n - 2);
        Representation {
            kind,
            width_bits: width,
            max_magnitude: (2.0f64).powi(span),
            min_positive: (2.0f64).powi(-span),
            epsilon_at_1: (0.5f64).powi(n - 5),
        }
    }

    /// A fixed-point format with `i` integer and `f` fraction bits (plus
    /// sign). Constructible for per-target layouts; never auto-selected.
    pub fn fixed(i: u32, f: u32) -> Self {
        Representation {
            kind: ReprKind::Fixed,
            width_bits: 1 + i + f,
            max_magnitude: (2.0f64).powi(i as i32),
            min_positive: (2.0f64).powi(-(f as i32)),
            epsilon_at_1: (0.5f64).powi(f as i32),
        }
    }

    pub fn of(kind: ReprKind) -> Self {
        match kind {
            ReprKind::Posit8 => Self::posit(ReprKind::Posit8, 8),
            ReprKind::Posit16 => Self::posit(ReprKind::Posit16, 16),
            ReprKind::Posit32 => Self::posit(ReprKind::Posit32, 32),
            ReprKind::Float16 => Self::float(ReprKind::Float16, 16, 11, 15),
            ReprKind::Float32 => Self::float(ReprKind::Float32, 32, 24, 127),
            ReprKind::Float64 => Self::float(ReprKind::Float64, 64, 53, 1023),
            ReprKind::Fixed => panic!("fixed-point layouts need explicit (i, f) bits"),
        }
    }

    /// Worst-case relative spacing near magnitude `m`.
    pub fn relative_spacing_at(&self, m: f64) -> f64 {
        debug_assert!(m > 0.0);
        let s = m.log2().floor() as i32;
        match self.kind {
            ReprKind::Float16 | ReprKind::Float32 | ReprKind::Float64 => {
                let (precision, emax) = match self.kind {
                    ReprKind::Float16 => (11, 15),
                    ReprKind::Float32 => (24, 127),
                    _ => (53, 1023),
                };
                let emin = 1 - emax;
                let e = s.max(emin);
                let ulp = (2.0f64).powi(e - (precision - 1));
                ulp / m
            }
            ReprKind::Posit8 | ReprKind::Posit16 | ReprKind::Posit32 => {
                let n = self.width_bits as i32;
                let k = s.div_euclid(4);
                let regime_bits = if k >= 0 { k + 2 } else { -k + 1 };
                let fraction_bits = n - 1 - regime_bits - 2;
                if fraction_bits <= 0 {
                    // Between-posit gaps grow by whole regime steps here.
                    return f64::MAX;
                }
                (2.0f64).powi(s - fraction_bits) / m
            }
            ReprKind::Fixed => {
                let ulp = self.min_positive;
                ulp / m
            }
        }
    }
}

/// Selection order: narrowest width first, posit before float at equal width.
pub const CANDIDATES: [ReprKind; 6] = [
    ReprKind::Posit8,
    ReprKind::Posit16,
    ReprKind::Float16,
    ReprKind::Posit32,
    ReprKind::Float32,
    ReprKind::Float64,
];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("no numeric format covers range [{lo}, {hi}] within relative error {eps_budget}")]
pub struct SelectError {
    pub lo: f64,
    pub hi: f64,
    pub eps_budget: f64,
}

/// Picks the narrowest adequate representation for values in `range` with a
/// worst-case relative-spacing budget of `eps_budget`.
pub fn select_representation(
    range: &Interval,
    eps_budget: f64,
) -> Result<Representation, SelectError> {
    debug_assert!(eps_budget > 0.0);
    let max_mag = range.max_magnitude();
    if max_mag == 0.0 {
        // The constant zero is exactly representable everywhere.
        return Ok(Representation::of(CANDIDATES[0]));
    }
    let min_mag = range.min_nonzero_magnitude();
    for kind in CANDIDATES {
        let repr = Representation::of(kind);
        if repr.max_magnitude < max_mag {
            continue;
        }
        if let Some(min_mag) = min_mag {
            if repr.min_positive > min_mag {
                continue;
            }
        }
        // Spacing is worst at the endpoint magnitudes; check both.
        let mut worst = repr.relative_spacing_at(max_mag);
        if let Some(min_mag) = min_mag {
            worst = worst.max(repr.relative_spacing_at(min_mag));
        }
        if worst <= eps_budget {
            return Ok(repr);
        }
    }
    Err(SelectError { lo: range.lo, hi: range.hi, eps_budget })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_constants() {
        let f32r = Representation::of(ReprKind::Float32);
        assert_eq!(f32r.epsilon_at_1, (0.5f64).powi(23));
        assert_eq!(f32r.max_magnitude, f32::MAX as f64);
        assert_eq!(f32r.min_positive, f32::from_bits(1) as f64);

        let f64r = Representation::of(ReprKind::Float64);
        assert_eq!(f64r.max_magnitude, f64::MAX);
        assert_eq!(f64r.min_positive, f64::from_bits(1));
        assert_eq!(f64r.epsilon_at_1, (0.5f64).powi(52));

        let p8 = Representation::of(ReprKind::Posit8);
        assert_eq!(p8.max_magnitude, (2.0f64).powi(24));
        assert_eq!(p8.epsilon_at_1, 0.125);

        let p32 = Representation::of(ReprKind::Posit32);
        assert_eq!(p32.max_magnitude, (2.0f64).powi(120));
        assert_eq!(p32.epsilon_at_1, (0.5f64).powi(27));
    }

    #[test]
    fn tight_budget_selects_posit32_over_float32() {
        // Spacing near [0.5, 2]: posit16 and float16 are too coarse, posit32
        // wins the 32-bit tie by candidate order.
        let r = select_representation(&Interval::new(0.5, 2.0), (0.5f64).powi(20)).unwrap();
        assert_eq!(r.kind, ReprKind::Posit32);
    }

    #[test]
    fn constant_zero_takes_the_narrowest_format() {
        let r = select_representation(&Interval::point(0.0), 1e-6).unwrap();
        assert_eq!(r.kind, ReprKind::Posit8);
    }

    #[test]
    fn huge_dynamic_range_requires_float64() {
        let r = select_representation(&Interval::new(1e300, 1e305), 1e-2).unwrap();
        assert_eq!(r.kind, ReprKind::Float64);
    }

    #[test]
    fn loose_budget_prefers_narrow_posits() {
        let r = select_representation(&Interval::new(0.5, 2.0), 0.2).unwrap();
        assert_eq!(r.kind, ReprKind::Posit8);
    }

    #[test]
    fn nothing_fits_an_impossible_budget() {
        // Requires spacing below 2^-52 at 1e300: even float64 fails.
        let err = select_representation(&Interval::new(1e300, 1e305), 1e-17);
        assert!(err.is_err());
    }

    #[test]
    fn posit_spacing_tapers_away_from_one() {
        let p16 = Representation::of(ReprKind::Posit16);
        let near_one = p16.relative_spacing_at(1.5);
        let far = p16.relative_spacing_at(1.0e6);
        assert!(near_one < far);
    }
}
