//! Executable form of the halting no-go argument.
//!
//! For a table obeying the halting scheme, the halted sector scanning symbol
//! `xi` is described by vectors `Q+_j`, `Q-_j` in head space: the head-state
//! amplitudes for moving right and left from head state `j`. A running key
//! `(q0, eta)` that could halt is described by `Phi+_mu`, `Phi-_mu`: the
//! head-state amplitudes of halting outcomes that write `mu` and move right
//! or left. Global unitarity forces a chain of orthogonality relations
//! between these vectors, and together they force every `Phi` to vanish.
//! [`verify_nogo`] measures each relation and the surviving halting mass.

pub mod generate;
mod penalty;
pub mod search;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::qtm::{
    check_global_unitarity, check_ozawa_compliance, ComplianceReport, Move, QtmError, RuleKey, TransitionTable,
    DEFAULT_UNITARITY_TOL,
};

pub use generate::{random_compliant_table, random_unitary_table, seeded_rng};
pub use search::{search_max_halting_mass, SearchConfig, SearchError, SearchResult, TracePoint};

/// Residual tolerance used when none is given.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NogoError {
    #[error("table violates the halting scheme ({} violation(s), first at {})", .0.violations.len(), .0.violations[0].key)]
    NotCompliant(ComplianceReport),
    #[error("table is not globally unitary: max |U^dagger U - I| = {deviation:e} > {tol:e}")]
    NotUnitary { deviation: f64, tol: f64 },
    #[error("symbol {symbol} outside alphabet of size {size}")]
    InvalidSymbol { symbol: usize, size: usize },
    #[error("head state {head} outside range {size}")]
    InvalidHead { head: usize, size: usize },
    #[error(transparent)]
    Qtm(#[from] QtmError),
}

type Vector = DVector<Complex64>;

/// Head-space vectors of the halted sector for one scanned symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct HaltedSectorVectors {
    pub scanned_symbol: usize,
    pub plus: Vec<Vector>,
    pub minus: Vec<Vector>,
}

impl HaltedSectorVectors {
    /// `E_k = Q+_k + Q-_k`.
    pub fn sums(&self) -> Vec<Vector> {
        self.plus.iter().zip(&self.minus).map(|(p, m)| p + m).collect()
    }
}

/// Halting outcomes of one running key, grouped by written symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct HaltingCandidateVectors {
    pub source_state: usize,
    pub source_symbol: usize,
    pub plus: Vec<Vector>,
    pub minus: Vec<Vector>,
}

impl HaltingCandidateVectors {
    /// Total squared amplitude that leaves the running sector in one step.
    pub fn mass(&self) -> f64 {
        self.plus.iter().chain(&self.minus).map(|v| v.norm_squared()).sum()
    }
}

fn ensure_compliant(table: &TransitionTable) -> Result<(), NogoError> {
    let report = check_ozawa_compliance(table);
    if report.pass() {
        Ok(())
    } else {
        Err(NogoError::NotCompliant(report))
    }
}

fn halted_vectors_unchecked(table: &TransitionTable, xi: usize) -> HaltedSectorVectors {
    let m = table.dims().heads;
    let mut plus = vec![Vector::zeros(m); m];
    let mut minus = vec![Vector::zeros(m); m];
    for j in 0..m {
        for o in table.rule(&RuleKey { head: j, symbol: xi, halted: true }) {
            match o.movement {
                Move::Right => plus[j][o.head] += o.amp,
                Move::Left => minus[j][o.head] += o.amp,
            }
        }
    }
    HaltedSectorVectors { scanned_symbol: xi, plus, minus }
}

/// Extracts `Q+_j`, `Q-_j` for scanned symbol `xi`.
///
/// Rules carry no position dependence, so the vectors are the same at every
/// head position.
pub fn compute_q_vectors(table: &TransitionTable, xi: usize) -> Result<HaltedSectorVectors, NogoError> {
    let dims = table.dims();
    if xi >= dims.symbols {
        return Err(NogoError::InvalidSymbol { symbol: xi, size: dims.symbols });
    }
    ensure_compliant(table)?;
    Ok(halted_vectors_unchecked(table, xi))
}

/// Extracts `Phi+_mu`, `Phi-_mu` for running key `(q0, eta, 0)`. Outcomes
/// that stay in the running sector are ignored.
pub fn compute_phi_vectors(
    table: &TransitionTable,
    q0: usize,
    eta: usize,
) -> Result<HaltingCandidateVectors, NogoError> {
    let dims = table.dims();
    if q0 >= dims.heads {
        return Err(NogoError::InvalidHead { head: q0, size: dims.heads });
    }
    if eta >= dims.symbols {
        return Err(NogoError::InvalidSymbol { symbol: eta, size: dims.symbols });
    }
    let (m, s) = (dims.heads, dims.symbols);
    let mut plus = vec![Vector::zeros(m); s];
    let mut minus = vec![Vector::zeros(m); s];
    for o in table.rule(&RuleKey { head: q0, symbol: eta, halted: false }).iter().filter(|o| o.halted) {
        match o.movement {
            Move::Right => plus[o.symbol][o.head] += o.amp,
            Move::Left => minus[o.symbol][o.head] += o.amp,
        }
    }
    Ok(HaltingCandidateVectors { source_state: q0, source_symbol: eta, plus, minus })
}

/// Halted-sector identities for one scanned symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaltedSectorResiduals {
    /// `max |<Q+_j|Q+_k> + <Q-_j|Q-_k> - delta_jk|`
    pub halted_orthonormality: f64,
    /// `max |<Q-_j|Q+_k>|`
    pub halted_cross: f64,
    /// `max |<E_j|E_k> - delta_jk|`
    pub sum_basis: f64,
}

fn delta(j: usize, k: usize) -> f64 {
    if j == k {
        1.0
    } else {
        0.0
    }
}

/// Location of a worst residual, ordered lexicographically as
/// `(xi, eta, q0, j, k)`. Unused coordinates are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Site {
    pub xi: usize,
    pub eta: usize,
    pub q0: usize,
    pub j: usize,
    pub k: usize,
}

/// Running maximum that keeps the first site attaining it.
#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    value: f64,
    site: Option<Site>,
}

impl Worst {
    fn offer(&mut self, value: f64, site: Site) {
        if self.site.is_none() || value > self.value {
            self.value = value;
            self.site = Some(site);
        }
    }
}

fn halted_residuals_at(qv: &HaltedSectorVectors, xi: usize, out: &mut [Worst; 3]) {
    let m = qv.plus.len();
    let e = qv.sums();
    for j in 0..m {
        for k in 0..m {
            let site = Site { xi, j, k, ..Site::default() };
            let orth = qv.plus[j].dotc(&qv.plus[k]) + qv.minus[j].dotc(&qv.minus[k]) - delta(j, k);
            out[0].offer(orth.norm(), site);
            out[1].offer(qv.minus[j].dotc(&qv.plus[k]).norm(), site);
            out[2].offer((e[j].dotc(&e[k]) - delta(j, k)).norm(), site);
        }
    }
}

/// Measures the halted-sector orthonormality relations for one symbol.
pub fn check_gram_identities(qv: &HaltedSectorVectors) -> HaltedSectorResiduals {
    let mut w = [Worst::default(); 3];
    halted_residuals_at(qv, qv.scanned_symbol, &mut w);
    HaltedSectorResiduals { halted_orthonormality: w[0].value, halted_cross: w[1].value, sum_basis: w[2].value }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WorstSites {
    pub halted_orthonormality: Option<Site>,
    pub halted_cross: Option<Site>,
    pub sum_basis: Option<Site>,
    pub same_site: Option<Site>,
    pub overlap_from_right: Option<Site>,
    pub overlap_from_left: Option<Site>,
    pub halting_mass: Option<Site>,
}

/// Worst-case residuals of every orthogonality relation, over all scanned
/// symbols and running keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramReport {
    /// `max |<Q+_j|Q+_k> + <Q-_j|Q-_k> - delta_jk|`
    pub halted_orthonormality: f64,
    /// `max |<Q-_j|Q+_k>|`
    pub halted_cross: f64,
    /// `max |<E_j|E_k> - delta_jk|` with `E = Q+ + Q-`
    pub sum_basis: f64,
    /// `max |<Q+_j|Phi+_nu> + <Q-_j|Phi-_nu>|`, halted sector scanning `nu`;
    /// halted and running configurations at the same position.
    pub same_site: f64,
    /// `max |<Q-_j|Phi+_nu>|`; halted configuration two cells to the right.
    pub overlap_from_right: f64,
    /// `max |<Q+_j|Phi-_nu>|`; halted configuration two cells to the left.
    pub overlap_from_left: f64,
    /// `max` over running keys of `sum_mu |Phi+_mu|^2 + |Phi-_mu|^2`.
    pub halting_mass: f64,
    pub worst: WorstSites,
    pub tol: f64,
    pub pass: bool,
}

impl GramReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.halted_orthonormality,
            self.halted_cross,
            self.sum_basis,
            self.same_site,
            self.overlap_from_right,
            self.overlap_from_left,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Computes all residuals without checking preconditions. The halted-sector
/// vectors are read only from halting-scheme outcomes, so the numbers are
/// meaningful only for compliant tables.
pub fn gram_report(table: &TransitionTable, tol: f64) -> GramReport {
    let dims = table.dims();
    let (m, s) = (dims.heads, dims.symbols);
    let halted: Vec<HaltedSectorVectors> = (0..s).map(|xi| halted_vectors_unchecked(table, xi)).collect();
    let candidates: Vec<Vec<HaltingCandidateVectors>> = (0..s)
        .map(|eta| (0..m).map(|q0| compute_phi_vectors(table, q0, eta).expect("indices in range")).collect())
        .collect();

    let mut sector = [Worst::default(); 3];
    for (xi, qv) in halted.iter().enumerate() {
        halted_residuals_at(qv, xi, &mut sector);
    }

    let (mut same, mut right, mut left, mut mass) =
        (Worst::default(), Worst::default(), Worst::default(), Worst::default());
    for (xi, qv) in halted.iter().enumerate() {
        for (eta, row) in candidates.iter().enumerate() {
            for (q0, phi) in row.iter().enumerate() {
                if xi == 0 {
                    mass.offer(phi.mass(), Site { eta, q0, ..Site::default() });
                }
                for j in 0..m {
                    // Same position: the halted configuration scans `nu = xi`
                    // and only the outcome writing `xi` can overlap it.
                    let v = qv.plus[j].dotc(&phi.plus[xi]) + qv.minus[j].dotc(&phi.minus[xi]);
                    same.offer(v.norm(), Site { xi, eta, q0, j, k: 0 });
                    for nu in 0..s {
                        let site = Site { xi, eta, q0, j, k: nu };
                        right.offer(qv.minus[j].dotc(&phi.plus[nu]).norm(), site);
                        left.offer(qv.plus[j].dotc(&phi.minus[nu]).norm(), site);
                    }
                }
            }
        }
    }

    let mut report = GramReport {
        halted_orthonormality: sector[0].value,
        halted_cross: sector[1].value,
        sum_basis: sector[2].value,
        same_site: same.value,
        overlap_from_right: right.value,
        overlap_from_left: left.value,
        halting_mass: mass.value,
        worst: WorstSites {
            halted_orthonormality: sector[0].site,
            halted_cross: sector[1].site,
            sum_basis: sector[2].site,
            same_site: same.site,
            overlap_from_right: right.site,
            overlap_from_left: left.site,
            halting_mass: mass.site,
        },
        tol,
        pass: false,
    };
    report.pass = report.max_residual() <= tol && report.halting_mass <= tol;
    report
}

/// Runs every relation of the no-go argument on a table that is globally
/// unitary (at `1e-12`) and obeys the halting scheme; refuses otherwise.
pub fn verify_nogo(table: &TransitionTable, tol: f64) -> Result<GramReport, NogoError> {
    ensure_compliant(table)?;
    let unitarity = check_global_unitarity(table, DEFAULT_UNITARITY_TOL)?;
    if !unitarity.pass {
        return Err(NogoError::NotUnitary { deviation: unitarity.max_deviation, tol: DEFAULT_UNITARITY_TOL });
    }
    Ok(gram_report(table, tol))
}

/// Per-key halting mass `sum_mu |Phi+_mu|^2 + |Phi-_mu|^2` of every running key.
pub fn halting_mass_by_key(table: &TransitionTable) -> Vec<(RuleKey, f64)> {
    let dims = *table.dims();
    dims.keys()
        .filter(|k| !k.halted)
        .map(|k| (k, compute_phi_vectors(table, k.head, k.symbol).expect("in range").mass()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtm::{machines, MachineDims, Outcome};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn unit(m: usize, i: usize) -> Vector {
        let mut v = Vector::zeros(m);
        v[i] = c(1.0);
        v
    }

    #[test]
    fn identity_halted_sector() {
        let dims = MachineDims::new(3, 2, 6).unwrap();
        let t = machines::right_shift(dims);
        let qv = compute_q_vectors(&t, 1).unwrap();
        for j in 0..3 {
            assert_eq!(qv.plus[j], unit(3, j));
            assert_eq!(qv.minus[j], Vector::zeros(3));
        }
        let r = check_gram_identities(&qv);
        assert_eq!((r.halted_orthonormality, r.halted_cross, r.sum_basis), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hadamard_halted_sector() {
        let dims = MachineDims::new(2, 1, 6).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = machines::right_shift(dims);
        for j in 0..2 {
            let sign = if j == 0 { 1.0 } else { -1.0 };
            t.set_rule(
                RuleKey { head: j, symbol: 0, halted: true },
                vec![Outcome::new(0, 0, Move::Right, true, c(s)), Outcome::new(1, 0, Move::Right, true, c(sign * s))],
            )
            .unwrap();
        }
        let qv = compute_q_vectors(&t, 0).unwrap();
        assert_eq!(qv.plus[0].as_slice(), &[c(s), c(s)]);
        assert_eq!(qv.plus[1].as_slice(), &[c(s), c(-s)]);
        assert!(qv.minus.iter().all(|v| v.norm() == 0.0));
        let r = check_gram_identities(&qv);
        assert!(r.halted_orthonormality < 1e-15 && r.sum_basis < 1e-15);
    }

    #[test]
    fn split_sector_passes_orthonormality_but_fails_cross_relation() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let qv = HaltedSectorVectors {
            scanned_symbol: 0,
            plus: vec![unit(2, 0) * c(h), unit(2, 1) * c(h)],
            minus: vec![unit(2, 0) * c(h), unit(2, 1) * c(h)],
        };
        let r = check_gram_identities(&qv);
        assert!(r.halted_orthonormality < 1e-15);
        assert!((r.halted_cross - 0.5).abs() < 1e-15);
        assert!((r.sum_basis - 1.0).abs() < 1e-15);
    }

    #[test]
    fn q_vectors_require_compliance() {
        let dims = MachineDims::new(1, 2, 6).unwrap();
        assert!(matches!(compute_q_vectors(&machines::halt_flipper(dims), 0), Err(NogoError::NotCompliant(_))));
        assert!(matches!(compute_q_vectors(&machines::right_shift(dims), 2), Err(NogoError::InvalidSymbol { .. })));
    }

    #[test]
    fn phi_vectors_of_non_halting_table_vanish() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let t = machines::right_shift(dims);
        for q0 in 0..2 {
            for eta in 0..2 {
                let phi = compute_phi_vectors(&t, q0, eta).unwrap();
                assert_eq!(phi.mass(), 0.0);
            }
        }
        assert!(compute_phi_vectors(&t, 2, 0).is_err());
    }

    #[test]
    fn single_halting_outcome() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let mut t = TransitionTable::new(dims);
        let k = RuleKey { head: 1, symbol: 1, halted: false };
        t.set_rule(k, vec![Outcome::new(0, 0, Move::Right, true, c(0.3))]).unwrap();
        let phi = compute_phi_vectors(&t, 1, 1).unwrap();
        assert_eq!(phi.plus[0], unit(2, 0) * c(0.3));
        assert_eq!(phi.plus[1], Vector::zeros(2));
        assert!(phi.minus.iter().all(|v| v.norm() == 0.0));
        assert!((phi.mass() - 0.09).abs() < 1e-16);
    }

    #[test]
    fn right_shift_passes_with_zero_residuals() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let r = verify_nogo(&machines::right_shift(dims), DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(r.max_residual(), 0.0);
        assert_eq!(r.halting_mass, 0.0);
        assert!(r.pass);
        assert_eq!(r.worst.halted_orthonormality, Some(Site::default()));
    }

    #[test]
    fn non_unitary_halting_table_is_refused() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let mut t = machines::right_shift(dims);
        t.add_outcome(RuleKey { head: 0, symbol: 0, halted: false }, Outcome::new(0, 0, Move::Right, true, c(0.3)))
            .unwrap();
        assert!(check_ozawa_compliance(&t).pass());
        assert!((gram_report(&t, 1e-10).halting_mass - 0.09).abs() < 1e-15);
        assert!(matches!(verify_nogo(&t, 1e-10), Err(NogoError::NotUnitary { .. })));
    }

    #[test]
    fn worst_site_tie_break_is_lexicographic() {
        // Two running keys carry identical halting mass; the first is named.
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let mut t = machines::right_shift(dims);
        for (q0, eta) in [(1, 0), (0, 1)] {
            t.add_outcome(
                RuleKey { head: q0, symbol: eta, halted: false },
                Outcome::new(0, 0, Move::Left, true, c(0.5)),
            )
            .unwrap();
        }
        let r = gram_report(&t, 1e-10);
        assert_eq!(r.worst.halting_mass, Some(Site { xi: 0, eta: 0, q0: 1, j: 0, k: 0 }));
    }
}
