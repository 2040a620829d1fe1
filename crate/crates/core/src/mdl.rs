//! Description-length scoring of principal unifiers and a brute-force MAP
//! oracle for small systems.
//!
//! The prior over dimensional hypotheses is `2^(-h)` where `h` counts free
//! dimension variables, so the principal unifier (fewest free variables) is
//! the maximum a posteriori hypothesis among all consistent assignments.
//! [`brute_force_map`] checks this literally on desk-scale systems: it
//! enumerates every ground assignment with exponents in a box and counts the
//! independent directions of the solution set, which is the dimension of the
//! hypothesis family the unifier must also report.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::dims::{DimVar, Dimension, VarTable};
use crate::unify::{free_variable_count, solve_system, DimEquation};

/// A description-length score for a solved system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdlScore {
    /// Number of free dimension variables (the hypothesis length).
    pub free_vars: usize,
    /// The exact prior mass 2^(-free_vars).
    pub score: BigRational,
    /// Constraints violated; always 0 for scores derived from a successful
    /// unifier (the unifier never returns partially-violating hypotheses).
    pub constraints_violated: usize,
}

impl MdlScore {
    pub fn from_free_vars(free_vars: usize) -> Self {
        let score = BigRational::new(BigInt::one(), BigInt::one() << free_vars);
        MdlScore { free_vars, score, constraints_violated: 0 }
    }

    pub fn score_f64(&self) -> f64 {
        self.score.to_f64().unwrap_or(0.0)
    }

    /// Stable rendering, e.g. `2^-3`.
    pub fn score_text(&self) -> String {
        format!("2^-{}", self.free_vars)
    }
}

/// Scores a substitution produced by `solve_system` over `system_vars`.
pub fn description_length(
    s: &crate::unify::Substitution,
    system_vars: &BTreeSet<DimVar>,
) -> MdlScore {
    MdlScore::from_free_vars(free_variable_count(s, system_vars))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BruteForceError {
    #[error("no ground solution with exponents in [-{bound},{bound}] (possibly a box artifact)")]
    NoSolutionInBox { bound: i64 },
    #[error("system too large for enumeration: {vars} vars (max 4), bound {bound} (max 6)")]
    TooLarge { vars: usize, bound: i64 },
}

/// Enumerates all ground assignments with exponents in `[-bound, bound]` and
/// returns the dimension of the solution set: the number of independent
/// directions among box solutions. Because a dimension equation constrains
/// each base axis by the same coefficient matrix, the enumeration runs per
/// axis and pools the observed directions.
pub fn brute_force_map(
    eqs: &[DimEquation],
    vars: &BTreeSet<DimVar>,
    bound: i64,
) -> Result<usize, BruteForceError> {
    let var_list: Vec<DimVar> = vars.iter().copied().collect();
    let v = var_list.len();
    if v > 4 || bound > 6 {
        return Err(BruteForceError::TooLarge { vars: v, bound });
    }
    if v == 0 {
        // No variables: solvable iff every homogeneous term is the identity.
        let ok = eqs.iter().all(|e| e.homogeneous().is_identity());
        return if ok {
            Ok(0)
        } else {
            Err(BruteForceError::NoSolutionInBox { bound })
        };
    }

    // Coefficient rows are shared across axes; residuals are per axis.
    let mut axes: BTreeSet<usize> = BTreeSet::new();
    let mut rows: Vec<(Vec<i64>, Dimension)> = Vec::new();
    for eq in eqs {
        let h = eq.homogeneous();
        let coeffs: Vec<i64> = var_list
            .iter()
            .map(|&var| h.var_exponent(var).to_i64().expect("desk-scale exponent"))
            .collect();
        for (&axis, _) in h.base_exponents() {
            axes.insert(axis);
        }
        rows.push((coeffs, h));
    }
    if axes.is_empty() {
        // Fully homogeneous system: enumerate one synthetic axis with zero
        // residuals.
        axes.insert(usize::MAX);
    }

    let mut directions: Vec<Vec<i64>> = Vec::new();
    for &axis in &axes {
        let residuals: Vec<i64> = rows
            .iter()
            .map(|(_, h)| {
                if axis == usize::MAX {
                    0
                } else {
                    h.base_exponent(axis).to_i64().expect("desk-scale exponent")
                }
            })
            .collect();
        let solutions = enumerate_axis(&rows, &residuals, v, bound);
        let Some(first) = solutions.first() else {
            return Err(BruteForceError::NoSolutionInBox { bound });
        };
        for sol in &solutions[1..] {
            let dir: Vec<i64> = sol.iter().zip(first).map(|(a, b)| a - b).collect();
            directions.push(dir);
        }
    }

    Ok(direction_rank(&directions))
}

/// All assignments x in [-bound, bound]^v with `coeffs . x + residual = 0`
/// for every row.
fn enumerate_axis(
    rows: &[(Vec<i64>, Dimension)],
    residuals: &[i64],
    v: usize,
    bound: i64,
) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut assignment = vec![-bound; v];
    loop {
        let ok = rows.iter().zip(residuals).all(|((coeffs, _), &r)| {
            let lhs: i64 = coeffs.iter().zip(&assignment).map(|(c, x)| c * x).sum();
            lhs + r == 0
        });
        if ok {
            out.push(assignment.clone());
        }
        // Odometer step.
        let mut i = 0;
        loop {
            if i == v {
                return out;
            }
            assignment[i] += 1;
            if assignment[i] <= bound {
                break;
            }
            assignment[i] = -bound;
            i += 1;
        }
    }
}

/// Rank of an integer vector set via fraction-free elimination.
fn direction_rank(directions: &[Vec<i64>]) -> usize {
    let mut basis: Vec<Vec<i128>> = Vec::new();
    for d in directions {
        let mut d: Vec<i128> = d.iter().map(|&x| x as i128).collect();
        for b in &basis {
            let col = b.iter().position(|&x| x != 0).expect("basis rows nonzero");
            if d[col] != 0 {
                let (p, q) = (b[col], d[col]);
                for i in 0..d.len() {
                    d[i] = d[i] * p - b[i] * q;
                }
                reduce_row(&mut d);
            }
        }
        if d.iter().any(|&x| x != 0) {
            reduce_row(&mut d);
            basis.push(d);
            basis.sort_by_key(|row| row.iter().position(|&x| x != 0));
        }
    }
    basis.len()
}

fn reduce_row(row: &mut [i128]) {
    let mut g: i128 = 0;
    for &x in row.iter() {
        g = gcd(g, x.abs());
    }
    if g > 1 {
        for x in row.iter_mut() {
            *x /= g;
        }
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Outcome of comparing the unifier against the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapAgreement {
    /// Both solved; free-variable counts match.
    Agrees,
    /// Both solved; counts differ (a MAP violation).
    Disagrees,
    /// Both sides report the system unsolvable.
    BothUnsolvable,
    /// The unifier solved but no ground witness fits the box.
    SkippedNoSolutionInBox,
}

/// Checks agreement between the principal unifier's free-variable count and
/// the brute-force minimum description length.
pub fn map_agreement(
    eqs: &[DimEquation],
    vars: &BTreeSet<DimVar>,
    bound: i64,
    table: &mut VarTable,
) -> MapAgreement {
    let solved = solve_system(eqs, table);
    let brute = brute_force_map(eqs, vars, bound);
    match (solved, brute) {
        (Ok(s), Ok(oracle)) => {
            if free_variable_count(&s, vars) == oracle {
                MapAgreement::Agrees
            } else {
                MapAgreement::Disagrees
            }
        }
        (Err(_), Err(BruteForceError::NoSolutionInBox { .. })) => MapAgreement::BothUnsolvable,
        (Ok(_), Err(BruteForceError::NoSolutionInBox { .. })) => {
            MapAgreement::SkippedNoSolutionInBox
        }
        (Err(_), Ok(_)) => MapAgreement::Disagrees,
        (_, Err(BruteForceError::TooLarge { .. })) => {
            panic!("trial generator exceeded oracle limits")
        }
    }
}

/// Aggregate statistics from randomized MAP-agreement trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialStats {
    pub trials: usize,
    pub agreements: usize,
    pub disagreements: usize,
    pub both_unsolvable: usize,
    pub skipped: usize,
}

impl TrialStats {
    /// Agreement rate over cases where both sides produced an answer.
    pub fn agreement_rate(&self) -> f64 {
        let considered = self.agreements + self.disagreements;
        if considered == 0 {
            1.0
        } else {
            self.agreements as f64 / considered as f64
        }
    }
}

/// Runs `trials` randomized agreement checks with at most `n_vars` variables
/// and enumeration bound `bound`. Coefficients are drawn from {-1, 0, 1} so
/// every kernel direction of a 4-variable system fits well inside the box;
/// right-hand sides are consistent by construction or perturbed to exercise
/// the unsolvable path.
pub fn run_trials(trials: usize, n_vars: usize, bound: i64, seed: u64) -> TrialStats {
    assert!((1..=4).contains(&n_vars), "oracle supports 1..=4 variables");
    assert!((1..=6).contains(&bound), "oracle supports bounds 1..=6");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut stats = TrialStats::default();
    for _ in 0..trials {
        let mut table = VarTable::new();
        let v = rng.gen_range(1..=n_vars);
        let ids: Vec<DimVar> = (0..v).map(|i| table.intern(&format!("h{i}"))).collect();
        let n_eqs = rng.gen_range(1..=3usize);
        let n_axes = 2usize;
        let ground: Vec<Vec<i64>> = (0..v)
            .map(|_| (0..n_axes).map(|_| rng.gen_range(-1..=1)).collect())
            .collect();
        let sabotage = rng.gen_bool(0.2);

        let mut eqs = Vec::new();
        for e in 0..n_eqs {
            let coeffs: Vec<i64> =
                (0..v).map(|_| [-1i64, 0, 0, 1][rng.gen_range(0..4)]).collect();
            let mut lhs = Dimension::identity();
            for (j, &c) in coeffs.iter().enumerate() {
                lhs.add_scaled(&Dimension::var(ids[j], 1), &BigInt::from(c));
            }
            let mut rhs = Dimension::identity();
            for axis in 0..n_axes {
                let mut total: i64 =
                    coeffs.iter().zip(&ground).map(|(&c, g)| c * g[axis]).sum();
                if sabotage && e == 0 && axis == 0 {
                    total += 1;
                }
                rhs.add_scaled(&Dimension::base_unit(axis, 1), &BigInt::from(total));
            }
            eqs.push(DimEquation::new(lhs, rhs, format!("trial eq {e}")));
        }

        let var_set: BTreeSet<DimVar> = ids.iter().copied().collect();
        stats.trials += 1;
        match map_agreement(&eqs, &var_set, bound, &mut table) {
            MapAgreement::Agrees => stats.agreements += 1,
            MapAgreement::Disagrees => stats.disagreements += 1,
            MapAgreement::BothUnsolvable => stats.both_unsolvable += 1,
            MapAgreement::SkippedNoSolutionInBox => stats.skipped += 1,
        }
    }
    stats
}
