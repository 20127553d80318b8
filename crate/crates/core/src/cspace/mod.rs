//! Configuration-space analysis: candidate base positions, reachable views
//! and the dictionary of what each configuration sees.

mod candidates;
mod dictionary;
mod kneedle;
mod workspace;

pub use candidates::{enumerate_base_candidates, enumerate_base_candidates_with, CandidateSettings};
pub use dictionary::{
    analyze_base_position, build_dictionary, build_dictionary_with, params_hash, view_targets, AnalysisSettings,
    Analyzer, ConfigDictionary, ConfigRecord, ViewSettings, DICTIONARY_VERSION,
};
pub use kneedle::{kneedle, select_resolution_kneedle};
pub use workspace::{Rect, Side, WorkspaceKind, WorkspaceSpec, FULL_MARGIN, NARROW_CORRIDOR};
