//! Word approximation on matrix Lie groups.
//!
//! The crate covers five concrete groups (SU(2), SO(3), SL(2,R), SL(3,R) and the
//! orientation-preserving affine group of the line) and builds on them:
//!
//! * [`lie`]: group operations, exp/log charts, adjoint maps, proximality.
//! * [`words`]: free-group words, evaluation and left-trivialized derivatives.
//! * [`net`]: word nets over balls, nearest queries, composition and a disk cache.
//! * [`commutator`]: bracket decompositions in the algebra and group commutator factoring.
//! * [`sk`]: recursive refinement of a base net and rate reports.
//! * [`dynamics`]: iterated commutator maps and the limit map of commutator powers.
//! * [`relation`]: pairs near a given pair that satisfy a nontrivial relation.

pub mod commutator;
pub mod dynamics;
pub mod error;
pub mod lie;
pub mod net;
pub mod relation;
pub mod sampling;
pub mod sk;
pub mod stats;
pub mod words;

pub use error::{CacheError, LieError, Result};
pub use lie::{
    ad, adjoint, classify_proximal, distance, group_op, AlgebraElement, GroupElement, GroupKind,
    GroupOp, GroupSpec, ProximalData, ProximalKind,
};
pub use net::{Ball, WordNet};
pub use words::{Tuple, Word};
