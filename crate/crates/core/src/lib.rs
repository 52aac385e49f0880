//! Two-layer permission control for Android-style systems.
//!
//! The lower layer turns a tree of Linux users into MLS levels and checks
//! file and process accesses against them. The upper layer evaluates
//! per-application permission requests against a signer-scoped XML policy,
//! replays request traces through it and measures decision latency.

pub mod constraints;
pub mod engine;
pub mod harness;
pub mod lattice;
pub mod levelgen;
pub mod policy;
pub mod store;
pub mod synth;
pub mod tree;

pub use constraints::{
    check_access, check_user_access, AccessClass, Constraint, FileOperation, MlsDecision, MlsError,
    Operation, Verdict,
};
pub use engine::{
    evaluate_request, evaluate_rule_set, reference_oracle_evaluate, resolve_scope, Decision,
    PermissionRequest, Reason, RequestError, ScopeKind,
};
pub use harness::{
    benchmark, parse_trace, replay, BenchError, DecisionRecord, LatencyReport, TraceError,
    TraceEvent, TraceEventKind, WorkloadMix,
};
pub use lattice::{compare, dominates, parse_level, DominanceOrdering, LevelParseError, SecurityLevel};
pub use levelgen::{
    assign_category_indices, export_contexts, generate_levels, ContextFormat, LevelAssignment,
};
pub use policy::{
    apply_mutation, parse_policy, serialize, validate, MutationAction, MutationTarget,
    PermissionRuleSet, PolicyDocument, PolicyError, PolicyMutation, ScopeRef, Signature,
    SignerPolicy, Violation,
};
pub use store::{PolicyStore, StoreError};
pub use tree::{
    build_tree, default_android_tree, parse_tree_file, ContainmentEdge, PermissionTree, TreeError,
};
