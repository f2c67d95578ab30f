//! Random globally unitary transition tables.
//!
//! Every generated table has the form `U = M_P * C`, where `C` applies a
//! unitary to the head state and the scanned cell (controlled on the halt
//! bit) and `M_P = S_+ (x) P + S_- (x) (1 - P)` moves the head right on the
//! range of a projector `P` on head space and left on its complement. Both
//! factors are unitary on the cyclic tape, hence so is `U`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::qtm::{MachineDims, Move, Outcome, RuleKey, TransitionTable};

/// Amplitudes smaller than this are not stored as outcomes.
const STORE_FLOOR: f64 = 1e-300;

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Orthonormalizes the columns of `m` in place by modified Gram-Schmidt,
/// run twice per column. Returns `false` if a column collapses.
pub fn gram_schmidt_columns(m: &mut DMatrix<Complex64>) -> bool {
    for k in 0..m.ncols() {
        for _pass in 0..2 {
            for j in 0..k {
                let proj = m.column(j).dotc(&m.column(k));
                let qj = m.column(j).clone_owned();
                m.column_mut(k).axpy(-proj, &qj, Complex64::new(1.0, 0.0));
            }
        }
        let norm = m.column(k).norm();
        if norm < 1e-12 {
            return false;
        }
        m.column_mut(k).unscale_mut(norm);
    }
    true
}

/// Haar-random `n x n` unitary: Gram-Schmidt on a complex Ginibre matrix.
/// Normalizing each column leaves the implied `R` with a positive diagonal,
/// which is what makes the distribution Haar.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    loop {
        let mut m = DMatrix::from_fn(n, n, |_, _| complex_normal(rng));
        if gram_schmidt_columns(&mut m) {
            return m;
        }
    }
}

/// Orthogonal projector onto a Haar-random subspace of random rank in `0..=n`.
pub fn random_projector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let rank = rng.random_range(0..=n);
    let v = haar_unitary(n, rng);
    let vr = v.columns(0, rank);
    vr * vr.adjoint()
}

fn push(outs: &mut Vec<Outcome>, head: usize, symbol: usize, movement: Move, halted: bool, amp: Complex64) {
    if amp.norm() > STORE_FLOOR {
        outs.push(Outcome::new(head, symbol, movement, halted, amp));
    }
}

/// Splits a head-space amplitude vector into right and left movers.
fn split_moves(p: &DMatrix<Complex64>, v: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
    let right = p * v;
    let left = v - &right;
    (right, left)
}

/// A random globally unitary table that satisfies the halting scheme: the
/// halted sector never rewrites the tape or clears the halt bit.
///
/// Halted sector: for each scanned symbol a Haar unitary `W` on head space,
/// split by a shared random projector into `Q+ = P W`, `Q- = (1-P) W`, so
/// `Q+^dagger Q+ + Q-^dagger Q- = 1` and `Q-^dagger Q+ = 0` hold by
/// construction. Running sector: a Haar unitary on `(head, scanned cell)`
/// with its own move projector.
pub fn random_compliant_table<R: Rng + ?Sized>(dims: MachineDims, rng: &mut R) -> TransitionTable {
    let (m, s) = (dims.heads, dims.symbols);
    let mut table = TransitionTable::new(dims);

    let p_halt = random_projector(m, rng);
    for xi in 0..s {
        let w = haar_unitary(m, rng);
        for j in 0..m {
            let (right, left) = split_moves(&p_halt, &w.column(j).clone_owned());
            let mut outs = Vec::new();
            for q in 0..m {
                push(&mut outs, q, xi, Move::Right, true, right[q]);
                push(&mut outs, q, xi, Move::Left, true, left[q]);
            }
            table.set_rule(RuleKey { head: j, symbol: xi, halted: true }, outs).expect("in range");
        }
    }

    let p_run = random_projector(m, rng);
    let v = haar_unitary(m * s, rng);
    for q in 0..m {
        for sigma in 0..s {
            let col = v.column(q * s + sigma);
            let mut outs = Vec::new();
            for sigma2 in 0..s {
                let head_vec = DVector::from_fn(m, |q2, _| col[q2 * s + sigma2]);
                let (right, left) = split_moves(&p_run, &head_vec);
                for q2 in 0..m {
                    push(&mut outs, q2, sigma2, Move::Right, false, right[q2]);
                    push(&mut outs, q2, sigma2, Move::Left, false, left[q2]);
                }
            }
            table.set_rule(RuleKey { head: q, symbol: sigma, halted: false }, outs).expect("in range");
        }
    }
    table
}

/// A random globally unitary table in which the halt bit is treated as part
/// of the head state. Such tables generally violate the halting scheme and
/// carry nonzero halting amplitude.
pub fn random_unitary_table<R: Rng + ?Sized>(dims: MachineDims, rng: &mut R) -> TransitionTable {
    let (m, s) = (dims.heads, dims.symbols);
    let ext = 2 * m;
    let ext_index = |q: usize, h: bool| q * 2 + h as usize;
    let mut table = TransitionTable::new(dims);
    let p = random_projector(ext, rng);
    let v = haar_unitary(ext * s, rng);
    for key in dims.keys().collect::<Vec<_>>() {
        let col = v.column(ext_index(key.head, key.halted) * s + key.symbol);
        let mut outs = Vec::new();
        for sigma2 in 0..s {
            let head_vec = DVector::from_fn(ext, |e, _| col[e * s + sigma2]);
            let (right, left) = split_moves(&p, &head_vec);
            for q2 in 0..m {
                for h2 in [false, true] {
                    let e = ext_index(q2, h2);
                    push(&mut outs, q2, sigma2, Move::Right, h2, right[e]);
                    push(&mut outs, q2, sigma2, Move::Left, h2, left[e]);
                }
            }
        }
        table.set_rule(key, outs).expect("in range");
    }
    table
}
