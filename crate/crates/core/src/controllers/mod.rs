//! Controller family over the decision vector `𝒳 = (q̈, u, λ[, δ])`:
//! feedback linearization, the classical CLF-QP on `u`, ID-QP, and the
//! inverse-dynamics CLF-QPs with optional convergence incentive and δ
//! relaxation.

mod assemble;
mod session;
mod spec;

pub use assemble::{
    assemble, assemble_clf_qp, assemble_id_clf_qp, assemble_id_qp, classical_terms, contact_rows, fbl_control,
    friction_pyramid_rows, Assembled, ClassicalTerms, Decoded, TickContext,
};
pub use session::{control_tick, ControlTick, ControllerSession, TickStatus};
pub use spec::{
    ControllerSpec, DecisionLayout, Holonomic, OutputReference, RegularizationWeights, SoftConstraint, Variant,
};
