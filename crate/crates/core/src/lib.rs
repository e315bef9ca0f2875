//! Exact computational toolkit for planar dyadic-grid fractal geometry:
//! covering numbers, discrete Frostman/Ahlfors-regular measures,
//! projections and tube decompositions, fiber multiplicity fields,
//! dyadic entropy / Kullback-Leibler machinery, and branching analysis
//! of one-dimensional lattice sets.
//!
//! Combinatorial quantities (counts, masses, set memberships) are exact
//! rational arithmetic; only logarithmic quantities (entropy, KL) use
//! floating point.

pub mod branching;
pub mod dyadic;
pub mod entropy;
pub mod exact;
pub mod gen;
pub mod measure;
pub mod multiplicity;
pub mod projection;

pub use dyadic::{ball_cells, DyadicCell, DyadicInterval, GridSet, Point, ScaleLadder};
pub use exact::{Exp, Scale, ScaledRational};
pub use gen::{ArcMeasure, DigitSystem};
pub use measure::{Ball, GridMeasure, RegularityReport};
pub use projection::Direction;
