//! Exact first and higher Chern classes in a liftable-chart model of
//! rigid cohomology, over truncated p-adic coefficients.
//!
//! The crate computes explicit Cech-de Rham cocycles on the standard
//! toric covers of `P^n` and of projective bundles of split bundles,
//! checks the cocycle-level identities (closure, gauge and lift
//! independence, multiplicativity, the projective-bundle decomposition,
//! Whitney additivity, Frobenius scaling, level-m divided-power
//! comparisons), and certifies exactness questions with an echelon
//! solver over `Z/p^N`.

pub mod bundle;
pub mod cech;
pub mod chern;
pub mod error;
pub mod laurent;
mod linalg;
pub mod mpd;
pub mod padic;
pub mod sampling;

pub use bundle::{chern_classes, cohomology_ranks, decompose, whitney_check, xi_cocycle, ChernVector};
pub use cech::{
    class_coeff, cup, delta, residue_coeff, solve_coboundary, total_cohomology_ranks, total_diff,
    Cochain, CoboundaryWitness, RankTable, SolveVerdict, TotalCochain,
};
pub use chern::{
    c1_class, c1_cocycle, frobenius_check, line_bundle_cocycle, zeta_witness, GaugeCochain,
    LiftedUnitCocycle,
};
pub use error::{Error, Result};
pub use laurent::{
    build_space, build_space_with_window, d, dlog, transition, transition_form, ChartedSpace,
    DiffForm, LaurentSection, SpaceDescriptor, UnitSection,
};
pub use mpd::{compatible_lift_cocycle, level_rescale_check, mpd_reduce, psi_m, MpdContext, MpdTerm};
pub use padic::{inv_one_unit, log_one_unit, vp_factorial, PAdicContext, PAdicElem};
