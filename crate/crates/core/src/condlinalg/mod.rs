//! Conditional linear algebra over a factor: Gram–Schmidt normal forms,
//! finitely generated modules and fiberwise operator tools.

mod appendix;
mod frame;

pub use appendix::{
    bessel_check, cond_orthonormal_extract, cond_orthonormality_defect, greedy_orthonormal_extract, normalize_truncate,
    opnorm_diagnostic, BesselReport, OpNormReport, Truncation,
};
pub use frame::{
    cdim, gram_schmidt, gram_schmidt_with_cutoff, module_project, CondFrame, CondFrameDoc, CondModule, FrameBlock,
    DEFAULT_RANK_CUTOFF,
};
