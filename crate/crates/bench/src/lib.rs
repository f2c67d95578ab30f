//! Shared fixtures for the benchmarks.

use qhalt::halting_nogo::generate::complex_normal;
use qhalt::halting_nogo::{random_compliant_table, seeded_rng};
use qhalt::{Complex64, Configuration, MachineDims, SparseState, TransitionTable};
use rand::Rng;

pub fn dims() -> MachineDims {
    MachineDims::new(2, 2, 6).expect("valid dims")
}

pub fn compliant_table(seed: u64) -> TransitionTable {
    random_compliant_table(dims(), &mut seeded_rng(seed, 0))
}

/// Normalized state on `terms` random configurations.
pub fn random_state(terms: usize, seed: u64) -> SparseState<Configuration> {
    let dims = dims();
    let d = dims.dimension().expect("small");
    let mut rng = seeded_rng(seed, 1);
    let s: SparseState<Configuration> = (0..terms)
        .map(|_| (Configuration::from_index(&dims, rng.random_range(0..d)), complex_normal(&mut rng)))
        .collect();
    s.scaled(Complex64::new(1.0 / s.norm(), 0.0))
}
