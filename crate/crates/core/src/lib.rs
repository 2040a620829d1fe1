//! abelia: a design-time verification engine for typed computation graphs.
//!
//! The library elaborates computation-graph specifications before anything runs:
//! it infers physical dimensions and Clifford grades by unification over finitely
//! generated abelian groups, derives geometric-product sparsity from Cayley
//! tables, classifies value escape, selects numeric representations from value
//! ranges, verifies that forward-mode derivative graphs stay in the same
//! decidable fragment, and scores principal unifiers by description length.
//!
//! Module map:
//! - [`dims`]: exponent-vector dimensions, parsing/formatting, gradient rule
//! - [`unify`]: principal unification by integer elimination
//! - [`clifford`]: Cayley tables for Cl(p,q,r), grade arithmetic, sparsity
//! - [`numeric`]: exact (quire-style) accumulation and drift probes
//! - [`graph`]: the hypergraph elaborator and its report
//! - [`diff`]: forward-mode tangent graphs, evaluation, finite differences
//! - [`mdl`]: description-length scores and the brute-force MAP oracle
//! - [`coherence`]: KL divergences, the consultation gate, typed responses

pub mod clifford;
pub mod coherence;
pub mod diff;
pub mod dims;
pub mod graph;
pub mod mdl;
pub mod numeric;
pub mod unify;

pub use dims::{Basis, DimVar, Dimension, VarTable};
pub use graph::{Config, ElaborationReport, Graph};
pub use unify::{DimEquation, Substitution, UnifyError};
