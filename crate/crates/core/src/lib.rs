//! Verification, reward and densification engine for rigid-body SE(2)
//! planning through sequential narrow openings.

pub mod densifier;
pub mod eval;
pub mod geometry;
pub mod plot;
pub mod reward;
pub mod scene;
pub mod textio;
pub mod verifier;

pub use densifier::{densify, densify_with_fallback, plan_segment, LatticeConfig, Trajectory};
pub use geometry::{Point2, Polygon, Pose, Rect};
pub use reward::{CostBreakdown, CostWeights};
pub use scene::{DistributionTag, GenParams, ObjectShape, Scene};
pub use verifier::{VerificationReport, VerifyConfig, ViolationType};

/// Engine version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
