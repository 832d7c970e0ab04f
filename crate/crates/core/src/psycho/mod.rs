//! Psychoacoustic masking thresholds and the masked-excess penalty.

mod mask;
mod penalty;
mod scales;

pub use mask::{
    compute_masking_thresholds, find_maskers, reference_db, Masker, MaskerSet,
    MaskingThresholdMatrix, thresholds_from_maskers, CEILING_DB, FLOOR_DB,
};
pub use penalty::{f_pam, f_pam_gradient, level_db, PamEvaluator};
pub use scales::{absolute_threshold, bin_absolute_threshold, hz_to_bark};
