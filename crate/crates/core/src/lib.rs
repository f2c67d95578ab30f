//! Numerical laboratory for halting in quantum computers.
//!
//! * [`hilbert`]: sparse complex vectors, Gram matrices and reduced density
//!   matrices over arbitrary ordered basis labels.
//! * [`qtm`]: quantum Turing machines on a cyclic tape, their global step
//!   operator and the unitarity and halting-scheme checks.
//! * [`halting_nogo`]: the orthogonality relations that force a unitary
//!   machine obeying the halting scheme never to halt, a randomized table
//!   generator and a numerical search for the largest halting amplitude.
//! * [`ancilla_model`]: branches with a halt qubit and a post-halt ancilla
//!   clock; coherence between branches and the effect of monitoring.

pub mod ancilla_model;
pub mod halting_nogo;
pub mod hilbert;
pub mod qtm;

pub use hilbert::{gram, inner_product, reduced_density, DensityMatrix, SparseState};
pub use num_complex::Complex64;
pub use qtm::{Configuration, MachineDims, Move, Outcome, RuleKey, TransitionTable};
