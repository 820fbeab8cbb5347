//! Shared domain types and scoring formulas.

pub mod message;
pub mod plan;
pub mod score;
pub mod template;
pub mod trajectory;

pub use message::{ChatMessage, Role, ToolCall};
pub use plan::{ApiEndpoint, BackendPlan, DevelopmentPlan, FrontendPlan, PlanError, PlanViolation, SchemaField};
pub use score::{
    accuracy_binary, accuracy_frontend, aggregate_score, backend_call_score, keep_trajectory, round1, score_aggregates,
    FilterConfig, MetricError, ScoreKind, ScoreRecord,
};
pub use template::{TemplateDescriptor, TemplateKind, TemplateRegistry, DB_ENV_KEYS};
pub use trajectory::{TemplateIds, Trajectory, TrajectoryError};
