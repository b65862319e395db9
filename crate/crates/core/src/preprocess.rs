//! Normalization, per-part analysis and graph construction in one pass.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{normalize_model, Model};
use crate::part_analysis::{analyze_model, AnalyzedModel, SAMPLES_PER_PART, THICKNESS_BIN};
use crate::structure::{
    build_contact_graph, build_repetition_graph, ContactGraph, RepetitionGraph, DEFAULT_CONTACT_DISTANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub samples_per_part: usize,
    pub contact_distance: f64,
    pub thickness_bin: f64,
    pub seed: u64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            samples_per_part: SAMPLES_PER_PART,
            contact_distance: DEFAULT_CONTACT_DISTANCE,
            thickness_bin: THICKNESS_BIN,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub analyzed: AnalyzedModel,
    pub contacts: ContactGraph,
    pub repetition: RepetitionGraph,
}

/// Normalizes the model to unit diagonal, analyzes every part and builds both graphs.
pub fn preprocess(model: &Model, params: &AnalysisParams) -> Result<Preprocessed> {
    let normalized = normalize_model(model)?;
    preprocess_normalized(&normalized, params)
}

/// As [`preprocess`] for a model that is already in normalized units.
pub fn preprocess_normalized(model: &Model, params: &AnalysisParams) -> Result<Preprocessed> {
    let analyzed = analyze_model(model, params.samples_per_part, params.seed, params.thickness_bin)?;
    let contacts = build_contact_graph(&analyzed, params.contact_distance)?;
    let repetition = build_repetition_graph(&analyzed);
    Ok(Preprocessed {
        analyzed,
        contacts,
        repetition,
    })
}
