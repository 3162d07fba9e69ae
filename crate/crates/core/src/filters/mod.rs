//! Filter implementations: the cascaded sigma-point filter and the reference
//! estimators it is compared against.

pub mod ahrs;
pub mod cascade;
pub mod full;
pub mod joint;
pub mod kf;
pub mod linearized;
pub mod spci;

pub use ahrs::{Ahrs, AhrsParams, AttitudeEstimate};
pub use cascade::{
    apply_psi, cascade_correct, cascade_predict, cascade_step, naive_correct, naive_predict,
    CascadeBelief, CascadeModel, CorrectionGain, FeedingOutput,
};
pub use full::{FullSpkf, FullSpkfParams};
pub use joint::{FeedbackMode, StackedKf};
pub use kf::{kf_step, kf_step_detailed, KfStep, LinearFeedingKf};
pub use linearized::{
    linearized_correct, linearized_correct_about, linearized_predict, linearized_predict_about,
    LinearCascadeModel,
};
pub use spci::{spci_correct, spci_predict};
