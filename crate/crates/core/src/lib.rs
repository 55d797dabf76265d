//! Numerical laboratory for point clouds on the d-torus obtained by dilating
//! analytic curves and sampling them at sparse parameters.
//!
//! The crate provides:
//!
//! * [`curvekit`] — exact curve-family descriptions (polynomial, trigonometric,
//!   affine-composed), derivatives of any order, frequency pairings, and a
//!   non-degeneracy order estimator;
//! * [`phase`] — reduction of `rho * <h, phi(x,t)>` mod 1 with a certified
//!   error bound, for dilations far beyond double precision;
//! * [`equidist`] — sample clouds, exponential-sum reports, toroidal box
//!   discrepancy, and an equidistribution verdict;
//! * [`vdc`] — exponent bookkeeping for derivative-based exponential-sum
//!   bounds and the associated schedule sweeps;
//! * [`sublevel`] — interval structure of `{t : |F(x,t)| >= delta}` and the
//!   polynomial-window exponent fit;
//! * [`dioph`] — simultaneous rational approximation and the dilation
//!   constructions that defeat equidistribution, with verifiable certificates;
//! * [`moments`] — fourth moments of exponential sums over a rotation
//!   parameter and the singular-tuple geometry that governs them.

pub mod bigfix;
pub mod curvekit;
pub mod dioph;
pub mod equidist;
pub mod moments;
pub mod phase;
pub mod sublevel;
pub mod vdc;

pub use curvekit::{Coeff, CurveFamily, OrderReport, PairingSeries};
pub use dioph::{BadDilation, DirichletSolution};
pub use equidist::{SampleCloud, WeylReport};
pub use moments::{MomentReport, SingularGeometry};
pub use phase::{Dilation, ReducedPhase};
pub use sublevel::SublevelProfile;
pub use vdc::ExponentSchedule;
