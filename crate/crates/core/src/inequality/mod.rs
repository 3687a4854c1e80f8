//! Numerical oracles for the inequalities: the Hardy constant μ(γ), the
//! Hardy, Sobolev and Picone inequalities, the elementary pointwise
//! inequality, the complement-integral bound, the level-set bound and the
//! sequence lemma.

pub mod complement;
pub mod elementary;
pub mod hardy;
pub mod levelset;
pub mod mu;
pub mod picone;

pub use complement::{
    ball_mask, complement_constant, complement_integral, complement_integral_brute,
    complement_integral_check, ComplementReport,
};
pub use elementary::{elementary_inequality_check, elementary_slack, ElementaryReport};
pub use hardy::{
    hardy_check, hardy_weighted_norm, sobolev_ratio, sobolev_ratio_scan, HardyReport, SobolevReport,
};
pub use levelset::{
    level_set_profile, levelset_lower_bound, levelset_sum, sequence_lemma_check, LevelSetBound,
    LevelSetProfile, SequenceReport,
};
pub use mu::{
    admissible_gamma_grid, default_base_points, gamma_max, hardy_mu, mu_direct, MuOptions, MuRow,
    MuSolver, MuTable, SphereIntegral,
};
pub use picone::{picone_check, picone_remainder, PiconeReport};
