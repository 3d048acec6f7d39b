//! Histogram estimators of multi-point and derivative PDFs, and verifiers
//! for the identities and side conditions they satisfy.

pub mod bootstrap;
pub mod estimate;
pub mod histogram;
pub mod report;
pub mod testfn;
pub mod verify;

pub use bootstrap::Bootstrap;
pub use estimate::{
    conditional_laplacian, covering_axis, estimate_joint, estimate_joint_2pt, estimate_point_stats, estimate_qn,
    ConditionalEstimate,
};
pub use histogram::{BinAxis, CdfEstimate, DensityEstimate};
pub use report::{CheckRow, Verdict};
pub use testfn::{Bump, PowerTest, ProductBump, TestFunction};
pub use verify::{
    chain_rule_check, residual_f1, residual_q0, side_condition_report, verify_hier_identity, ChainReport, Eta,
    HierReport, SideReport, WeakResidual,
};
