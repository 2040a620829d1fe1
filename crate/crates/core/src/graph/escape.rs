//! Escape classification and allocation planning.
//!
//! Classes form a totally ordered lattice; a node reached by several rules
//! takes the join (maximum). The rules are syntactic: graph outputs escape by
//! return, and so does anything that flows to an output through identity-like
//! unary edges; inputs of deferred edges are closure captured; inputs of
//! `consume_external` sinks escape by reference.

use serde::{Deserialize, Serialize};

use super::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeClass {
    StackScoped,
    ClosureCaptured,
    ReturnEscaping,
    ByRefEscaping,
}

impl EscapeClass {
    pub fn join(self, other: EscapeClass) -> EscapeClass {
        self.max(other)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EscapeClass::StackScoped => "stack_scoped",
            EscapeClass::ClosureCaptured => "closure_captured",
            EscapeClass::ReturnEscaping => "return_escaping",
            EscapeClass::ByRefEscaping => "by_ref_escaping",
        }
    }
}

/// Least fixed point of the escape rules, per node.
pub fn classify_escape(g: &Graph) -> Vec<EscapeClass> {
    let mut class = vec![EscapeClass::StackScoped; g.nodes.len()];

    // Nodes reaching a graph output through identity-like edges (including
    // the outputs themselves) escape by return.
    let mut reaches_output = vec![false; g.nodes.len()];
    for &o in &g.outputs {
        reaches_output[o] = true;
    }
    let mut changed = true;
    while changed {
        changed = false;
        for e in &g.edges {
            if !e.op.is_identity_like() {
                continue;
            }
            let Some(out) = e.output else { continue };
            if reaches_output[out] && !reaches_output[e.inputs[0]] {
                reaches_output[e.inputs[0]] = true;
                changed = true;
            }
        }
    }
    for (idx, reaches) in reaches_output.iter().enumerate() {
        if *reaches {
            class[idx] = class[idx].join(EscapeClass::ReturnEscaping);
        }
    }

    for e in &g.edges {
        if e.deferred {
            for &i in &e.inputs {
                class[i] = class[i].join(EscapeClass::ClosureCaptured);
            }
        }
        if e.op.is_sink() {
            for &i in &e.inputs {
                class[i] = class[i].join(EscapeClass::ByRefEscaping);
            }
        }
    }
    class
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    Stack,
    Region,
    CallerRegion,
}

impl Allocation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Allocation::Stack => "stack",
            Allocation::Region => "region",
            Allocation::CallerRegion => "caller-region",
        }
    }
}

/// Footprint plus escape class determine placement.
pub fn plan_allocation(
    escape: EscapeClass,
    footprint_bytes: u64,
    stack_limit: u64,
) -> Allocation {
    match escape {
        EscapeClass::StackScoped => {
            if footprint_bytes <= stack_limit {
                Allocation::Stack
            } else {
                Allocation::Region
            }
        }
        EscapeClass::ClosureCaptured => Allocation::Region,
        EscapeClass::ReturnEscaping | EscapeClass::ByRefEscaping => Allocation::CallerRegion,
    }
}
