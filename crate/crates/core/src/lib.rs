//! Optimal transport with subspace detours for Gromov-Wasserstein losses.
//!
//! The crate combines:
//!
//! - validated measure, coupling and subspace types ([`measures`]),
//! - an exact discrete Kantorovich solver (network simplex) and the monotone
//!   1D coupling ([`exact_ot`]),
//! - the closed-form 1D inner-product Gromov-Wasserstein solver ([`gw_1d`]),
//! - conditional-gradient solvers with exact tensor contractions for
//!   square-loss / inner-product GW ([`gw_solver`]) and for the separable
//!   Hadamard-Wasserstein cost with its degenerated family ([`hadamard`]),
//! - classical and alternate Knothe-Rosenblatt couplings ([`kr`]),
//! - Monge-Independent and Monge-Knothe subspace-detour plans
//!   ([`subspace_detour`]),
//! - closed-form transport maps and plans between Gaussians ([`gaussian`]),
//! - graph Laplacians, Fiedler vectors and 1D spectral mesh registration
//!   ([`spectral_mesh`]).

pub mod datasets;
pub mod error;
pub mod exact_ot;
pub mod gaussian;
pub mod gw_1d;
pub mod gw_solver;
pub mod hadamard;
pub mod kr;
pub mod measures;
pub mod spectral_mesh;
pub mod subspace_detour;

mod cg;

pub use error::{Error, Result};
pub use measures::{Coupling, DiscreteMeasure, GaussianMeasure, Subspace};
