//! Interface extraction, curve metrics and the singular-limit experiments.

pub mod convergence;
pub mod envelope;
pub mod generation;
pub mod interface;

pub use convergence::{convergence_study, fit_loglog, ConvergenceRecord, LogLogFit, StudySetup};
pub use envelope::{check_bracket, check_residual_signs, envelope_fields, residual_lv, Side};
pub use generation::{check_generation, fit_m0, generation_time, GenerationReport};
pub use interface::{extract_level_curve, hausdorff, one_sided_sup_distance, LevelCurves};
