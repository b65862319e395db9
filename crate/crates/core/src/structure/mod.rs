//! Contact and repetition graphs over a model's parts.

mod contact;
mod repetition;

pub use contact::{
    build_contact_graph, contact_leg, estimate_contact_angle, folded_angle, ground_contacts, local_direction,
    part_contact, ContactEdge, ContactGraph, CURVILINEAR_RADIUS, DEFAULT_CONTACT_DISTANCE, GROUND,
};
pub use repetition::{
    build_repetition_graph, congruence_rms, extents_match, signed_permutations, RepetitionGraph, CONGRUENCE_RMS,
    EXTENT_TOLERANCE,
};
