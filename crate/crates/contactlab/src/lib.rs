//! contactlab: a numerical verification engine for immersed submanifolds of
//! almost contact metric manifolds.
//!
//! Given a parametrized immersion into an ambient structure (φ, ξ, η, g) on
//! R^(2n+1), the engine computes orthonormal frames, the tangential/normal
//! decompositions of φ, slant functions, second fundamental forms, and
//! warped-product structure, and evaluates the associated tensor identities
//! as residuals at sampled points.
//!
//! Modules:
//!
//! - [`numjet`] — expression parsing, second-order forward jets, and the
//!   small dense metric linear algebra everything else consumes.
//! - [`ambient`] — almost contact metric structures on R^(2n+1), structure
//!   axiom checks, Christoffel symbols, ambient covariant derivatives.
//! - [`immersion`] — parametrized immersions, framed points, ξ-tangency.
//! - [`catalog`] — built-in example instances with their declared splits.
//! - [`tangency`] — P/F and t/f decompositions, slant angles and reports.
//! - [`secondform`] — second fundamental form, shape operators, the normal
//!   connection, mixed totally-geodesic tests.
//! - [`semislant`] — distribution splits, classification, the normal-bundle
//!   split, and the induced-connection identities on split tangent vectors.
//! - [`warped`] — warped-product detection and the warped identity suite.
//! - [`runner`] — batch configuration, suite execution, JSON reports.

pub mod ambient;
pub mod catalog;
pub mod error;
pub mod immersion;
pub mod numjet;
pub mod report;
pub mod runner;
pub mod secondform;
pub mod semislant;
pub mod tangency;
pub mod warped;

pub use error::GeomError;
