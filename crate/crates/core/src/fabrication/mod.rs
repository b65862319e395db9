//! Joint inference, fabrication-aware refinement, joint forming and spec export.

pub mod csg;
mod forming;
mod joints;
mod kind;
pub mod qp;
mod refine;
mod spec;
pub mod voxel;

pub use forming::{form_joint_geometry, lap_notches, obb_gap, tenon_prism, FormedJoints, JointGeometry, LAP_PARALLEL_DEG};
pub use joints::{
    classify_joint, infer_joint_types, log_joint_potential, tenon_mortise_roles, JointAssignment, JointInferenceParams, JointQuery,
    JointType, AMBIGUITY_MARGIN, DEFAULT_K,
};
pub use kind::{JointCategory, JointKind};
pub use refine::{
    apply_refinement, box_rescale, build_refine_problem, refine_part_dimensions, support_weights, tenon_axis, PartRefinement,
    RefineParams, RefineProblem, RefineReport, TenonJoint, MIN_HALF_EXTENT, PENETRATION, TENON_SCALE, WALL_MARGIN,
};
pub use spec::{export_spec, FabricationSpec, SpecJoint, SpecPart, SPEC_VERSION};
