//! The consultation gate: KL divergences and the typed-response checks.
//!
//! An external consultation is admitted only when the state change it causes
//! is smaller than the disagreement that motivated it:
//! `KL(after || before) < KL(before || domain)`, strict. Distribution
//! families are diagonal Gaussians and categoricals, the minimal families
//! with closed-form divergences. A categorical support violation makes the
//! divergence infinite, which is reported as a distinct outcome rather than
//! a float; an infinite right-hand side admits any finite update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dims::{Dimension, VarTable};
use crate::unify::unify;

/// Sum tolerance for categorical probability vectors.
const PROB_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoherenceError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-positive variance at index {index}")]
    NonPositiveVariance { index: usize },
    #[error("negative probability at index {index}")]
    NegativeProbability { index: usize },
    #[error("probabilities sum to {sum}, not 1")]
    ProbabilitiesDoNotSumToOne { sum: f64 },
    #[error("distribution families differ")]
    FamilyMismatch,
}

/// A diagonal Gaussian with elementwise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self, CoherenceError> {
        if mean.len() != variance.len() {
            return Err(CoherenceError::DimensionMismatch {
                left: mean.len(),
                right: variance.len(),
            });
        }
        for (i, &v) in variance.iter().enumerate() {
            if !(v > 0.0) {
                return Err(CoherenceError::NonPositiveVariance { index: i });
            }
        }
        Ok(DiagGaussian { mean, variance })
    }
}

/// A categorical distribution over a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    pub probabilities: Vec<f64>,
}

impl Categorical {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, CoherenceError> {
        for (i, &p) in probabilities.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                return Err(CoherenceError::NegativeProbability { index: i });
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(CoherenceError::ProbabilitiesDoNotSumToOne { sum });
        }
        Ok(Categorical { probabilities })
    }
}

/// A divergence value; support violations are infinite, kept distinct from
/// finite results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn is_finite(&self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(*v),
            Divergence::Infinite => None,
        }
    }

    /// Strict comparison with infinity handled: nothing is smaller than a
    /// finite value once the left side is infinite, and any finite value is
    /// smaller than an infinite one.
    pub fn strictly_less_than(&self, other: &Divergence) -> bool {
        match (self, other) {
            (Divergence::Finite(a), Divergence::Finite(b)) => a < b,
            (Divergence::Finite(_), Divergence::Infinite) => true,
            (Divergence::Infinite, _) => false,
        }
    }
}

/// KL divergence between diagonal Gaussians:
/// sum over i of (log(qv/pv) + (pv + (pm - qm)^2) / qv - 1) / 2.
pub fn kl_gaussian_diag(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, CoherenceError> {
    if p.mean.len() != q.mean.len() {
        return Err(CoherenceError::DimensionMismatch {
            left: p.mean.len(),
            right: q.mean.len(),
        });
    }
    let mut total = 0.0;
    for i in 0..p.mean.len() {
        let (pm, pv) = (p.mean[i], p.variance[i]);
        let (qm, qv) = (q.mean[i], q.variance[i]);
        if !(pv > 0.0) || !(qv > 0.0) {
            return Err(CoherenceError::NonPositiveVariance { index: i });
        }
        let delta = pm - qm;
        total += 0.5 * ((qv / pv).ln() + (pv + delta * delta) / qv - 1.0);
    }
    Ok(total)
}

/// KL divergence between categoricals with 0 log 0 = 0; a point where
/// p > 0 but q = 0 makes the divergence infinite.
pub fn kl_categorical(p: &Categorical, q: &Categorical) -> Result<Divergence, CoherenceError> {
    if p.probabilities.len() != q.probabilities.len() {
        return Err(CoherenceError::DimensionMismatch {
            left: p.probabilities.len(),
            right: q.probabilities.len(),
        });
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.probabilities.iter().zip(&q.probabilities) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(Divergence::Infinite);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(Divergence::Finite(total))
}

/// A model-state distribution, tagged by family for the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian(DiagGaussian),
    Categorical(Categorical),
}

impl Distribution {
    pub fn validate(&self) -> Result<(), CoherenceError> {
        match self {
            Distribution::Gaussian(g) => {
                DiagGaussian::new(g.mean.clone(), g.variance.clone()).map(|_| ())
            }
            Distribution::Categorical(c) => {
                Categorical::new(c.probabilities.clone()).map(|_| ())
            }
        }
    }
}

/// KL divergence between two distributions of the same family.
pub fn kl(p: &Distribution, q: &Distribution) -> Result<Divergence, CoherenceError> {
    match (p, q) {
        (Distribution::Gaussian(a), Distribution::Gaussian(b)) => {
            kl_gaussian_diag(a, b).map(Divergence::Finite)
        }
        (Distribution::Categorical(a), Distribution::Categorical(b)) => kl_categorical(a, b),
        _ => Err(CoherenceError::FamilyMismatch),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// The accept/reject outcome with both divergences, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub state_change: Divergence,
    pub disagreement: Divergence,
    pub decision: Decision,
}

/// Admits a consultation iff the state change it causes is strictly smaller
/// than the disagreement that motivated it:
/// `KL(after || before) < KL(before || domain)`.
pub fn accept_consultation(
    before: &Distribution,
    after: &Distribution,
    domain: &Distribution,
) -> Result<GateOutcome, CoherenceError> {
    let state_change = kl(after, before)?;
    let disagreement = kl(before, domain)?;
    let decision = if state_change.strictly_less_than(&disagreement) {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Ok(GateOutcome { state_change, disagreement, decision })
}

/// The typed record a domain model returns across the consultation boundary.
#[derive(Debug, Clone)]
pub struct TypedResponse {
    pub value: f64,
    pub dim: Dimension,
    pub confidence: (f64, f64),
    pub certificate: String,
}

/// The individual checks a response must pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseCheck {
    ConfidenceContainsValue,
    DimensionUnifies,
    CertificatePresent,
}

impl ResponseCheck {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseCheck::ConfidenceContainsValue => "confidence-containment",
            ResponseCheck::DimensionUnifies => "dimension-unification",
            ResponseCheck::CertificatePresent => "certificate-present",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("typed response rejected: {}", failed_names(.failed))]
pub struct TypedResponseError {
    pub failed: Vec<ResponseCheck>,
}

fn failed_names(failed: &[ResponseCheck]) -> String {
    failed.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
}

/// Runs all three response checks; a response failing any is rejected, and
/// every failed check is named.
pub fn validate_typed_response(
    response: &TypedResponse,
    query_dim: &Dimension,
    vars: &mut VarTable,
) -> Result<(), TypedResponseError> {
    let mut failed = Vec::new();
    let (lo, hi) = response.confidence;
    if !(lo <= response.value && response.value <= hi) {
        failed.push(ResponseCheck::ConfidenceContainsValue);
    }
    if unify(&response.dim, query_dim, vars).is_err() {
        failed.push(ResponseCheck::DimensionUnifies);
    }
    if response.certificate.is_empty() {
        failed.push(ResponseCheck::CertificatePresent);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(TypedResponseError { failed })
    }
}
