//! Finitary sofic machinery for Baumslag–Solitar groups and the exponential
//! map on `Z/nZ`.
//!
//! The crate is organised bottom-up:
//!
//! * [`perm`]: permutations of `{0..n-1}`, exact Hamming distance, periodic points.
//! * [`bsgroup`]: `BS(1,m)` in affine normal form, words, presentations, Følner sets.
//! * [`sofic`]: sofic approximations as data, the arithmetic model `ψ`, amplification.
//! * [`tiling`]: ε-disjoint extraction and the quasi-tiling construction with an
//!   independent certificate verifier.
//! * [`conjugacy`]: conjugators between two sofic approximations built from tilings.
//! * [`expcycles`]: `x ↦ m^x mod n`, periodic-point censuses and sweeps.
//! * [`localexp`]: defect analysis of bijections that locally look exponential,
//!   p-adic fixed points, and a searcher.
//! * [`heuristics`]: the exact probability that a random permutation has order
//!   dividing 4, and counting bounds.

pub mod arith;
pub mod bsgroup;
pub mod conjugacy;
pub mod error;
pub mod expcycles;
mod flow;
pub mod heuristics;
pub mod localexp;
pub mod perm;
pub mod rational;
pub mod sofic;
pub mod tiling;

pub use error::{Error, Result};
pub use perm::{HammingValue, Permutation};
