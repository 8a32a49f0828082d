//! Perturbative BV renormalization at desk scale.
//!
//! * [`superspace`]: odd symplectic spaces, heat kernels and propagators.
//! * [`functionals`]: truncated functionals, BV operators and the RG flow Γ.
//! * [`eps_algebra`]: ε-expansions, renormalization schemes, fitting.
//! * [`schwinger`]: Feynman graphs, graph polynomials and Schwinger-parameter weights.
//! * [`renorm`]: counterterms, effective-action systems, obstructions.

pub mod coeff;
pub mod eps_algebra;
pub mod functionals;
pub mod linalg;
pub mod qme;
pub mod quad;
pub mod renorm;
pub mod schwinger;
pub mod superspace;

pub use coeff::{Coeff, EpsExpansion, ExpRat, Forms, Grass, Poly, Q};
pub use functionals::{Functional, Mono, Trunc};
pub use superspace::{Kernel, OddSymplecticSpace, Scale};
