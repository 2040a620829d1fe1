//! The elaboration report: a stable JSON schema plus a human rendering.
//!
//! The JSON form is deterministic: node entries follow declaration order,
//! substitution bindings follow variable-id order, and no timing or other
//! run-varying field is serialized. Elapsed time is carried separately for
//! the human rendering only.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clifford::GradeSet;
use crate::dims::{format_dimension, Dimension, VarTable};
use crate::mdl::MdlScore;
use crate::unify::Substitution;

use super::elaborate::ElabError;
use super::escape::{Allocation, EscapeClass};
use super::interval::Interval;
use super::repr::Representation;
use super::Graph;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElaborationReport {
    pub accepted: bool,
    pub substitution: Vec<BindingReport>,
    pub free_vars: Vec<String>,
    pub nodes: Vec<NodeReport>,
    pub sparsity: Vec<SparsityReport>,
    pub mdl: MdlReport,
    pub errors: Vec<ErrorReport>,
    /// Typed view of per-node results, for programmatic callers; not part of
    /// the wire schema.
    #[serde(skip)]
    pub solved_dims: Vec<Dimension>,
    #[serde(skip)]
    pub grade_sets: Vec<Option<GradeSet>>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingReport {
    pub var: String,
    pub dim: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: String,
    pub role: String,
    pub shape: Vec<u64>,
    pub dim: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grades: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    pub escape: EscapeClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representation: Option<Representation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub footprint_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Allocation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsityReport {
    pub edge: usize,
    pub output: String,
    pub left_grades: Vec<u8>,
    pub right_grades: Vec<u8>,
    pub nonzero: u64,
    pub total: u64,
    pub result_grades: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdlReport {
    pub free_vars: usize,
    pub score: String,
    pub score_value: f64,
    pub constraints_violated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grade_nonzero_entries: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<String>,
    pub provenance: Vec<String>,
}

impl ElaborationReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        g: &Graph,
        vars: &VarTable,
        subst: &Substitution,
        solved: Vec<Dimension>,
        grade_sets: Vec<Option<GradeSet>>,
        intervals: Vec<Option<Interval>>,
        escapes: Vec<EscapeClass>,
        reprs: Vec<Option<Representation>>,
        footprints: Vec<Option<u64>>,
        allocations: Vec<Option<Allocation>>,
        sparsity: Vec<SparsityReport>,
        score: MdlScore,
        grade_nonzero_entries: Option<u64>,
        errors: Vec<ElabError>,
        elapsed: Duration,
    ) -> Self {
        let substitution = subst
            .bindings()
            .iter()
            .map(|(v, d)| BindingReport {
                var: format!("'{}", vars.name(*v)),
                dim: format_dimension(d, &g.basis, vars),
            })
            .collect();
        let free_vars = subst
            .free()
            .iter()
            .map(|v| format!("'{}", vars.name(*v)))
            .collect();
        let nodes = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeReport {
                id: n.id.clone(),
                role: n.role.as_str().to_string(),
                shape: n.shape.clone(),
                dim: format_dimension(&solved[i], &g.basis, vars),
                grades: grade_sets[i].map(|s| s.grades()),
                range: intervals[i].map(|iv| [iv.lo, iv.hi]),
                escape: escapes[i],
                representation: reprs[i],
                footprint_bytes: footprints[i],
                allocation: allocations[i],
            })
            .collect();
        let error_reports = errors
            .into_iter()
            .map(|e| ErrorReport {
                kind: e.kind.as_str().to_string(),
                message: e.message,
                residual: e.residual.map(|d| format_dimension(&d, &g.basis, vars)),
                provenance: e.provenance,
            })
            .collect::<Vec<_>>();
        ElaborationReport {
            accepted: error_reports.is_empty(),
            substitution,
            free_vars,
            nodes,
            sparsity,
            mdl: MdlReport {
                free_vars: score.free_vars,
                score: score.score_text(),
                score_value: score.score_f64(),
                constraints_violated: score.constraints_violated,
                grade_nonzero_entries,
            },
            errors: error_reports,
            solved_dims: solved,
            grade_sets,
            elapsed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Solved dimension of a node by id, for programmatic callers.
    pub fn solved_dim(&self, g: &Graph, id: &str) -> Option<&Dimension> {
        g.node_idx(id).map(|i| &self.solved_dims[i])
    }

    /// Human rendering: one line per node tracing the inference chain.
    pub fn render_human(&self) -> String {
        let mut out = String::new();
        let verdict = if self.accepted { "ACCEPTED" } else { "REJECTED" };
        out.push_str(&format!(
            "{verdict} ({} error{})\n",
            self.errors.len(),
            if self.errors.len() == 1 { "" } else { "s" }
        ));
        if !self.substitution.is_empty() || !self.free_vars.is_empty() {
            out.push_str("substitution:\n");
            for b in &self.substitution {
                out.push_str(&format!("  {} = {}\n", b.var, b.dim));
            }
            if !self.free_vars.is_empty() {
                out.push_str(&format!("  free: {}\n", self.free_vars.join(", ")));
            }
        }
        out.push_str("nodes:\n");
        for n in &self.nodes {
            let mut line = format!("  {:<12} {:<12} dim {}", n.id, n.role, n.dim);
            if let Some(grades) = &n.grades {
                let parts: Vec<String> = grades.iter().map(u8::to_string).collect();
                line.push_str(&format!("  grades {{{}}}", parts.join(",")));
            }
            if let Some([lo, hi]) = n.range {
                line.push_str(&format!("  range [{lo}, {hi}]"));
            }
            if let Some(r) = &n.representation {
                line.push_str(&format!(" -> {} ({} bits)", r.kind.as_str(), r.width_bits));
            }
            if let Some(bytes) = n.footprint_bytes {
                line.push_str(&format!(" -> {bytes} B"));
            }
            line.push_str(&format!("  escape {}", n.escape.as_str()));
            if let Some(a) = &n.allocation {
                line.push_str(&format!(" -> {}", a.as_str()));
            }
            out.push_str(&line);
            out.push('\n');
        }
        if !self.sparsity.is_empty() {
            out.push_str("sparsity:\n");
            for s in &self.sparsity {
                out.push_str(&format!(
                    "  edge {} -> {}: {}/{} nonzero, result grades {:?}\n",
                    s.edge, s.output, s.nonzero, s.total, s.result_grades
                ));
            }
        }
        out.push_str(&format!(
            "mdl: free_vars {} score {}{}\n",
            self.mdl.free_vars,
            self.mdl.score,
            match self.mdl.grade_nonzero_entries {
                Some(n) => format!(", grade entries {n}"),
                None => String::new(),
            }
        ));
        for e in &self.errors {
            out.push_str(&format!("error[{}]: {}", e.kind, e.message));
            if let Some(r) = &e.residual {
                out.push_str(&format!(" (residual {r})"));
            }
            if !e.provenance.is_empty() {
                out.push_str(&format!(" at {}", e.provenance.join("; ")));
            }
            out.push('\n');
        }
        out.push_str(&format!("elapsed: {:.3} ms\n", self.elapsed.as_secs_f64() * 1e3));
        out
    }
}
