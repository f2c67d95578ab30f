//! Quantum Turing machine on a cyclic tape.
//!
//! A configuration is `|q>|h>|T>|H>`: head state, head position, tape
//! contents and halt bit. One step reads the scanned cell and applies the
//! local rule for `(q, T[h], H)`, which writes a new symbol, sets the head
//! state and halt bit, and moves the head one cell left or right.

mod global;

pub use global::{build_global_matrix, check_global_unitarity, GlobalMatrix, UnitarityReport, DENSE_CAP};

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::hilbert::SparseState;

/// Unitarity tolerance used when none is given.
pub const DEFAULT_UNITARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QtmError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("configuration space dimension {dim} exceeds the dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("invalid configuration {0}")]
    InvalidConfiguration(String),
    #[error("invalid rule for {key}: {reason}")]
    InvalidRule { key: RuleKey, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MachineDims {
    /// Number of head states `M`.
    pub heads: usize,
    /// Alphabet size `S`.
    pub symbols: usize,
    /// Tape length `N`; the tape is cyclic.
    pub cells: usize,
}

impl MachineDims {
    pub fn new(heads: usize, symbols: usize, cells: usize) -> Result<Self, QtmError> {
        if heads == 0 || symbols == 0 || cells == 0 {
            return Err(QtmError::InvalidDims(format!("M={heads}, S={symbols}, N={cells}: all must be positive")));
        }
        if symbols > u8::MAX as usize + 1 {
            return Err(QtmError::InvalidDims(format!("alphabet size {symbols} exceeds 256")));
        }
        Ok(Self { heads, symbols, cells })
    }

    /// Number of distinct tapes `S^N`, if it fits in a `usize`.
    pub fn tape_count(&self) -> Option<usize> {
        self.symbols.checked_pow(u32::try_from(self.cells).ok()?)
    }

    /// Configuration-space dimension `D = M * N * S^N * 2`.
    pub fn dimension(&self) -> Option<usize> {
        self.tape_count()?.checked_mul(self.heads)?.checked_mul(self.cells)?.checked_mul(2)
    }

    /// Number of local rule keys `(q, sigma, H)`.
    pub fn key_count(&self) -> usize {
        self.heads * self.symbols * 2
    }

    pub fn keys(&self) -> impl Iterator<Item = RuleKey> + '_ {
        (0..self.heads).flat_map(move |head| {
            (0..self.symbols)
                .flat_map(move |symbol| [false, true].into_iter().map(move |halted| RuleKey { head, symbol, halted }))
        })
    }

    pub(crate) fn check_dense(&self) -> Result<usize, QtmError> {
        match self.dimension() {
            Some(dim) if dim <= DENSE_CAP => Ok(dim),
            Some(dim) => Err(QtmError::DimensionCap { dim, cap: DENSE_CAP }),
            None => Err(QtmError::DimensionCap { dim: usize::MAX, cap: DENSE_CAP }),
        }
    }
}

impl fmt::Display for MachineDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M={},S={},N={}", self.heads, self.symbols, self.cells)
    }
}

/// Head displacement. There is no stay-put move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Move {
    Left,
    Right,
}

impl Move {
    pub fn offset(self) -> i64 {
        match self {
            Move::Left => -1,
            Move::Right => 1,
        }
    }

    pub fn from_offset(d: i64) -> Option<Self> {
        match d {
            -1 => Some(Move::Left),
            1 => Some(Move::Right),
            _ => None,
        }
    }

    pub(crate) fn apply(self, pos: usize, cells: usize) -> usize {
        match self {
            Move::Left => (pos + cells - 1) % cells,
            Move::Right => (pos + 1) % cells,
        }
    }
}

/// Basis label of the configuration space, ordered by `(q, h, tape, H)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub head: usize,
    pub pos: usize,
    pub tape: Vec<u8>,
    pub halted: bool,
}

impl Configuration {
    pub fn new(head: usize, pos: usize, tape: Vec<u8>, halted: bool) -> Self {
        Self { head, pos, tape, halted }
    }

    pub fn validate(&self, dims: &MachineDims) -> Result<(), QtmError> {
        let ok = self.head < dims.heads
            && self.pos < dims.cells
            && self.tape.len() == dims.cells
            && self.tape.iter().all(|&s| (s as usize) < dims.symbols);
        if ok {
            Ok(())
        } else {
            Err(QtmError::InvalidConfiguration(format!("{self:?} for {dims}")))
        }
    }

    pub fn scanned(&self) -> usize {
        self.tape[self.pos] as usize
    }

    pub fn key(&self) -> RuleKey {
        RuleKey { head: self.head, symbol: self.scanned(), halted: self.halted }
    }

    /// Position in the lexicographic ordering of all configurations.
    pub fn index(&self, dims: &MachineDims) -> usize {
        let tape_idx = self.tape.iter().fold(0usize, |acc, &s| acc * dims.symbols + s as usize);
        let tapes = dims.tape_count().expect("validated dims");
        ((self.head * dims.cells + self.pos) * tapes + tape_idx) * 2 + self.halted as usize
    }

    /// Inverse of [`Configuration::index`].
    pub fn from_index(dims: &MachineDims, mut idx: usize) -> Self {
        let tapes = dims.tape_count().expect("validated dims");
        let halted = idx % 2 == 1;
        idx /= 2;
        let mut tape_idx = idx % tapes;
        idx /= tapes;
        let pos = idx % dims.cells;
        let head = idx / dims.cells;
        let mut tape = vec![0u8; dims.cells];
        for cell in tape.iter_mut().rev() {
            *cell = (tape_idx % dims.symbols) as u8;
            tape_idx /= dims.symbols;
        }
        Self { head, pos, tape, halted }
    }
}

/// Local rule selector `(q, sigma, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RuleKey {
    pub head: usize,
    pub symbol: usize,
    pub halted: bool,
}

impl fmt::Display for RuleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(q={}, sym={}, halt={})", self.head, self.symbol, self.halted as u8)
    }
}

/// One weighted branch of a local rule: `(q', sigma', d, H')` with amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub head: usize,
    pub symbol: usize,
    pub movement: Move,
    pub halted: bool,
    pub amp: Complex64,
}

impl Outcome {
    pub fn new(head: usize, symbol: usize, movement: Move, halted: bool, amp: Complex64) -> Self {
        Self { head, symbol, movement, halted, amp }
    }

    pub fn target(&self) -> (usize, usize, Move, bool) {
        (self.head, self.symbol, self.movement, self.halted)
    }
}

/// Local transition rules for every key in `[0,M) x [0,S) x {0,1}`.
///
/// Keys without outcomes annihilate their configurations; such tables are
/// representable but never unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    dims: MachineDims,
    rules: BTreeMap<RuleKey, Vec<Outcome>>,
}

impl TransitionTable {
    /// A table with every rule empty.
    pub fn new(dims: MachineDims) -> Self {
        let rules = dims.keys().map(|k| (k, Vec::new())).collect();
        Self { dims, rules }
    }

    pub fn dims(&self) -> &MachineDims {
        &self.dims
    }

    fn check_key(&self, key: &RuleKey) -> Result<(), QtmError> {
        if key.head >= self.dims.heads || key.symbol >= self.dims.symbols {
            return Err(QtmError::InvalidRule { key: *key, reason: format!("key outside {}", self.dims) });
        }
        Ok(())
    }

    /// Replaces the outcome list of `key`.
    pub fn set_rule(&mut self, key: RuleKey, outcomes: Vec<Outcome>) -> Result<(), QtmError> {
        self.check_key(&key)?;
        for (i, o) in outcomes.iter().enumerate() {
            if o.head >= self.dims.heads || o.symbol >= self.dims.symbols {
                return Err(QtmError::InvalidRule {
                    key,
                    reason: format!("outcome {i} targets (q={}, sym={}) outside {}", o.head, o.symbol, self.dims),
                });
            }
            if !(o.amp.re.is_finite() && o.amp.im.is_finite()) {
                return Err(QtmError::InvalidRule { key, reason: format!("outcome {i} has a non-finite amplitude") });
            }
            if outcomes[..i].iter().any(|p| p.target() == o.target()) {
                return Err(QtmError::InvalidRule { key, reason: format!("outcome {i} duplicates an earlier target") });
            }
        }
        self.rules.insert(key, outcomes);
        Ok(())
    }

    /// Adds one outcome to `key`, accumulating into an existing target.
    pub fn add_outcome(&mut self, key: RuleKey, outcome: Outcome) -> Result<(), QtmError> {
        self.check_key(&key)?;
        let mut list = self.rules[&key].clone();
        match list.iter_mut().find(|p| p.target() == outcome.target()) {
            Some(p) => p.amp += outcome.amp,
            None => list.push(outcome),
        }
        self.set_rule(key, list)
    }

    pub fn rule(&self, key: &RuleKey) -> &[Outcome] {
        self.rules.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All rules in key order.
    pub fn rules(&self) -> impl Iterator<Item = (&RuleKey, &[Outcome])> {
        self.rules.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Amplitude of a specific outcome target of `key` (zero if absent).
    pub fn amplitude(&self, key: &RuleKey, head: usize, symbol: usize, movement: Move, halted: bool) -> Complex64 {
        self.rule(key)
            .iter()
            .find(|o| o.target() == (head, symbol, movement, halted))
            .map(|o| o.amp)
            .unwrap_or_default()
    }

    /// Applies the rule of `cfg` and calls `emit` for every resulting
    /// configuration with its amplitude.
    pub(crate) fn apply_config(&self, cfg: &Configuration, mut emit: impl FnMut(Configuration, Complex64)) {
        for o in self.rule(&cfg.key()) {
            let mut tape = cfg.tape.clone();
            tape[cfg.pos] = o.symbol as u8;
            let next =
                Configuration { head: o.head, pos: o.movement.apply(cfg.pos, self.dims.cells), tape, halted: o.halted };
            emit(next, o.amp);
        }
    }
}

/// One application of the global step operator `U`.
pub fn step(
    state: &SparseState<Configuration>,
    table: &TransitionTable,
) -> Result<SparseState<Configuration>, QtmError> {
    let mut out = SparseState::with_prune(state.prune_threshold());
    for (cfg, amp) in state.iter() {
        cfg.validate(table.dims())?;
        table.apply_config(cfg, |next, a| out.add(next, amp * a));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceViolation {
    pub key: RuleKey,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub violations: Vec<ComplianceViolation>,
}

impl ComplianceReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that halted configurations never rewrite the scanned cell and never
/// clear the halt bit; only the head state and position may change.
pub fn check_ozawa_compliance(table: &TransitionTable) -> ComplianceReport {
    let violations = table
        .rules()
        .filter(|(k, _)| k.halted)
        .flat_map(|(k, outs)| {
            outs.iter()
                .filter(|o| o.symbol != k.symbol || !o.halted)
                .map(|o| ComplianceViolation { key: *k, outcome: *o })
        })
        .collect();
    ComplianceReport { violations }
}

/// Deterministic example tables.
pub mod machines {
    use super::*;

    /// Every key maps to itself and moves right with amplitude one.
    pub fn right_shift(dims: MachineDims) -> TransitionTable {
        let mut t = TransitionTable::new(dims);
        for k in dims.keys().collect::<Vec<_>>() {
            let o = Outcome::new(k.head, k.symbol, Move::Right, k.halted, Complex64::new(1.0, 0.0));
            t.set_rule(k, vec![o]).expect("in range");
        }
        t
    }

    /// Flips the halt bit on every step and cycles the scanned symbol.
    ///
    /// Globally unitary (it is a permutation) but not halting-compliant:
    /// every running configuration halts in one step.
    pub fn halt_flipper(dims: MachineDims) -> TransitionTable {
        let mut t = TransitionTable::new(dims);
        for k in dims.keys().collect::<Vec<_>>() {
            let o =
                Outcome::new(k.head, (k.symbol + 1) % dims.symbols, Move::Right, !k.halted, Complex64::new(1.0, 0.0));
            t.set_rule(k, vec![o]).expect("in range");
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn dims_validation() {
        assert!(MachineDims::new(0, 2, 6).is_err());
        assert!(MachineDims::new(2, 300, 6).is_err());
        let d = MachineDims::new(2, 2, 6).unwrap();
        assert_eq!(d.dimension(), Some(1536));
        assert_eq!(d.key_count(), 8);
        assert_eq!(d.keys().count(), 8);
    }

    #[test]
    fn index_round_trip_is_lexicographic() {
        let d = MachineDims::new(2, 3, 3).unwrap();
        let all: Vec<Configuration> = (0..d.dimension().unwrap()).map(|i| Configuration::from_index(&d, i)).collect();
        for (i, cfg) in all.iter().enumerate() {
            assert_eq!(cfg.index(&d), i);
            cfg.validate(&d).unwrap();
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn right_shift_moves_basis_state() {
        let d = MachineDims::new(1, 2, 6).unwrap();
        let t = machines::right_shift(d);
        let cfg = Configuration::new(0, 0, vec![1, 0, 1, 1, 0, 0], false);
        let out = step(&SparseState::basis(cfg.clone()), &t).unwrap();
        let expected = Configuration { pos: 1, ..cfg };
        assert_eq!(out.len(), 1);
        assert_eq!(out.get(&expected), c(1.0));
    }

    #[test]
    fn right_shift_wraps_around() {
        let d = MachineDims::new(1, 1, 6).unwrap();
        let t = machines::right_shift(d);
        let cfg = Configuration::new(0, 5, vec![0; 6], true);
        let out = step(&SparseState::basis(cfg.clone()), &t).unwrap();
        assert_eq!(out.get(&Configuration { pos: 0, ..cfg }), c(1.0));
    }

    #[test]
    fn head_state_hadamard() {
        let d = MachineDims::new(2, 1, 6).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = TransitionTable::new(d);
        for k in d.keys().collect::<Vec<_>>() {
            let sign = if k.head == 0 { 1.0 } else { -1.0 };
            t.set_rule(
                k,
                vec![
                    Outcome::new(0, 0, Move::Right, k.halted, c(s)),
                    Outcome::new(1, 0, Move::Right, k.halted, c(sign * s)),
                ],
            )
            .unwrap();
        }
        let cfg = Configuration::new(0, 2, vec![0; 6], false);
        let out = step(&SparseState::basis(cfg), &t).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.get(&Configuration::new(0, 3, vec![0; 6], false)), c(s));
        assert_eq!(out.get(&Configuration::new(1, 3, vec![0; 6], false)), c(s));
    }

    #[test]
    fn step_rejects_invalid_configuration() {
        let d = MachineDims::new(1, 2, 6).unwrap();
        let t = machines::right_shift(d);
        let bad = Configuration::new(0, 0, vec![0, 5, 0, 0, 0, 0], false);
        assert!(matches!(step(&SparseState::basis(bad), &t), Err(QtmError::InvalidConfiguration(_))));
        let short = Configuration::new(0, 0, vec![0; 3], false);
        assert!(step(&SparseState::basis(short), &t).is_err());
    }

    #[test]
    fn interfering_paths_accumulate() {
        // Two head states both map to head 0; with opposite signs they cancel.
        let d = MachineDims::new(2, 1, 6).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = TransitionTable::new(d);
        t.set_rule(RuleKey { head: 0, symbol: 0, halted: false }, vec![Outcome::new(0, 0, Move::Right, false, c(s))])
            .unwrap();
        t.set_rule(RuleKey { head: 1, symbol: 0, halted: false }, vec![Outcome::new(0, 0, Move::Right, false, c(-s))])
            .unwrap();
        let state: SparseState<Configuration> =
            [(Configuration::new(0, 0, vec![0; 6], false), c(s)), (Configuration::new(1, 0, vec![0; 6], false), c(s))]
                .into_iter()
                .collect();
        assert!(step(&state, &t).unwrap().is_empty());
    }

    #[test]
    fn duplicate_outcomes_are_rejected() {
        let d = MachineDims::new(1, 1, 6).unwrap();
        let mut t = TransitionTable::new(d);
        let o = Outcome::new(0, 0, Move::Right, false, c(0.5));
        let k = RuleKey { head: 0, symbol: 0, halted: false };
        assert!(t.set_rule(k, vec![o, o]).is_err());
        t.add_outcome(k, o).unwrap();
        t.add_outcome(k, o).unwrap();
        assert_eq!(t.rule(&k).len(), 1);
        assert_eq!(t.rule(&k)[0].amp, c(1.0));
    }

    #[test]
    fn out_of_range_outcome_is_rejected() {
        let d = MachineDims::new(1, 2, 6).unwrap();
        let mut t = TransitionTable::new(d);
        let k = RuleKey { head: 0, symbol: 0, halted: false };
        assert!(t.set_rule(k, vec![Outcome::new(1, 0, Move::Left, false, c(1.0))]).is_err());
        assert!(t.set_rule(RuleKey { head: 0, symbol: 2, halted: true }, vec![]).is_err());
        let nan = Outcome::new(0, 0, Move::Left, false, Complex64::new(f64::NAN, 0.0));
        assert!(t.set_rule(k, vec![nan]).is_err());
    }

    #[test]
    fn compliance_flags_tape_writes() {
        let d = MachineDims::new(1, 2, 6).unwrap();
        let mut t = machines::right_shift(d);
        let k = RuleKey { head: 0, symbol: 0, halted: true };
        t.set_rule(k, vec![Outcome::new(0, 1, Move::Right, true, c(1.0))]).unwrap();
        let r = check_ozawa_compliance(&t);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].key, k);
    }

    #[test]
    fn compliance_flags_halt_reset() {
        let d = MachineDims::new(1, 2, 6).unwrap();
        let mut t = machines::right_shift(d);
        let k = RuleKey { head: 0, symbol: 1, halted: true };
        t.set_rule(k, vec![Outcome::new(0, 1, Move::Left, false, c(1.0))]).unwrap();
        assert_eq!(check_ozawa_compliance(&t).violations.len(), 1);
    }

    #[test]
    fn compliance_allows_head_and_position_changes() {
        let d = MachineDims::new(2, 2, 6).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = machines::right_shift(d);
        for k in d.keys().filter(|k| k.halted).collect::<Vec<_>>() {
            t.set_rule(
                k,
                vec![
                    Outcome::new(0, k.symbol, Move::Left, true, c(s)),
                    Outcome::new(1, k.symbol, Move::Right, true, c(s)),
                ],
            )
            .unwrap();
        }
        assert!(check_ozawa_compliance(&t).pass());
        assert!(!check_ozawa_compliance(&machines::halt_flipper(d)).pass());
    }
}
