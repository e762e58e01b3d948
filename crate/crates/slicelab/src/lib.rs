//! Discretized incidence geometry at finite resolution.
//!
//! The crate provides dyadic square/tube systems on `[0,1)²` under
//! point–line duality, exact ball–strip incidence counting, sub-uniform
//! decompositions, a multiscale high-low scan over incidence quotients,
//! heavy-tube content covers, and the explicit sheared-grid / Cantor-type
//! constructions those pipelines are verified against.
//!
//! Everything is exact: scales are powers of two stored as exponents, cell
//! geometry lives in dyadic rationals, and the incidence predicate reduces
//! to integer comparisons. Identical inputs produce byte-identical reports.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `slicelab` binary for the batch driver.

pub mod analysis;
pub mod constructions;
pub mod dyadic;
pub mod error;
pub mod incidence;
pub mod report;
pub mod scan;
pub mod uniformity;
pub mod verify;

pub use dyadic::{
    ball_of, cover_points, duality_line, rat, std_tube_of, Ball, CubeSet, DyadicSquare,
    DyadicTube, Line, Rat, Scale, ScaleSequence, StdTube, TubeSet,
};
pub use error::{Error, Result};
pub use incidence::{
    coarsen, count_incidences, incidence_count, incidence_quotient, incident,
    incident_thickened, IncidencePair, IncidenceSet, ProductCube, QuotientRecord,
};
