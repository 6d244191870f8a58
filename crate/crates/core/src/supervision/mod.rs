//! Classifier heads under every supervision regime, and semantic target
//! tables.

mod head;
mod oracle;
mod targets;

pub use head::{
    build_random_head, build_semantic_head, build_table_head, orthogonal_table, orthogonalize,
    BlockClasses, ClassifierHead, HeadBlock, Regime,
};
pub use oracle::{build_oracle_head, OracleArtifact, OracleConfig};
pub use targets::{fallback_targets, load_targets, FallbackSource, SemanticTargetTable};
