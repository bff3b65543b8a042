//! Reachability-envelope mesh refinement for curvature-bounded trajectory optimization.

pub mod collision;
pub mod dubins;
pub mod envelope;
pub mod oracle;
pub mod qp;
pub mod refine;
pub mod roots;
pub mod scalar;
pub mod scp;
pub mod transcription;

pub use scalar::Scalar;

pub type Pose = dubins::OrientedPoint<f64>;
pub type Pose32 = dubins::OrientedPoint<f32>;
pub type Query = envelope::EnvelopeQuery<f64>;
pub type Query32 = envelope::EnvelopeQuery<f32>;
pub type Patch = envelope::RectPatch<f64>;
pub type Motion = dubins::RigidMotion<f64>;
pub type Word = dubins::CurveWord<f64>;
