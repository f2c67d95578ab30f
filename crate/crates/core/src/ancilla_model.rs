//! Branches of a computation with a halt qubit and an ancilla clock.
//!
//! Each branch follows an orbit of computational labels and halts, with
//! certainty and in a single step, at its own halt step `t_i`. Before
//! halting the halt qubit reads 0 and the ancilla sits in `|a_0>`. From
//! `t_i` on the computational label is frozen, the halt qubit reads 1 and the
//! ancilla steps through mutually orthogonal states `|a_rho_i(t - t_i)>`,
//! where `rho_i` is the branch's ancilla map under the chosen
//! [`AncillaPolicy`].
//!
//! Two branches can interfere on the computational register only while they
//! carry the same halt bit and the same ancilla index.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::halting_nogo::generate::complex_normal;
use crate::hilbert::{reduced_density, DensityMatrix, SparseState};

/// Amplitude normalization tolerance for branch superpositions.
pub const NORMALIZATION_TOL: f64 = 1e-12;

pub type CompLabel = u64;
pub type BranchId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AncillaError {
    #[error("no branches given")]
    NoBranches,
    #[error("{amps} amplitudes for {branches} branches")]
    AmplitudeCount { amps: usize, branches: usize },
    #[error("amplitudes are not normalized: sum |a|^2 = {0}")]
    NotNormalized(f64),
    #[error("duplicate branch id {0}")]
    DuplicateBranch(BranchId),
    #[error("invalid orbit for branch {id}: {reason}")]
    InvalidOrbit { id: BranchId, reason: String },
    #[error("ancilla map of branch {branch} is not injective: index {index} repeats")]
    NonInjective { branch: BranchId, index: usize },
    #[error("ancilla map of branch {0} is not a permutation of 0..len")]
    NotPermutation(BranchId),
    #[error("ancilla policy names unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("ancilla map of branch {branch} covers {len} post-halt steps, {needed} needed")]
    MapTooShort { branch: BranchId, len: usize, needed: usize },
    #[error("branches {a} and {b} share the label {label:?} at t = {t}; evolution would not be an isometry")]
    BranchCollision { t: usize, a: BranchId, b: BranchId, label: BranchLabel },
    #[error("branch index {index} out of range for {len} branches")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("time {t} beyond t_max = {t_max}")]
    TimeOutOfRange { t: usize, t_max: usize },
    #[error("branches {i} and {j} share computational label {label} at t = {t}")]
    DegenerateObservable { i: usize, j: usize, t: usize, label: CompLabel },
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("input vectors must be unit vectors of equal length")]
    NotUnitVectors,
}

/// Composite basis label `|c>_C |H>_H |k>_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BranchLabel {
    pub comp: CompLabel,
    pub halted: bool,
    pub ancilla: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchSpec {
    id: BranchId,
    orbit: Vec<CompLabel>,
    halt_step: usize,
}

impl BranchSpec {
    /// `orbit[t]` is the computational label at step `t`; it must extend at
    /// least to `halt_step`, and every entry from `halt_step` on must equal
    /// `orbit[halt_step]`, the frozen result.
    pub fn new(id: BranchId, orbit: Vec<CompLabel>, halt_step: usize) -> Result<Self, AncillaError> {
        if orbit.len() <= halt_step {
            return Err(AncillaError::InvalidOrbit {
                id,
                reason: format!("orbit of length {} ends before halt step {halt_step}", orbit.len()),
            });
        }
        let result = orbit[halt_step];
        if let Some(t) = (halt_step..orbit.len()).find(|&t| orbit[t] != result) {
            return Err(AncillaError::InvalidOrbit { id, reason: format!("label changes after halting (t = {t})") });
        }
        Ok(Self { id, orbit, halt_step })
    }

    pub fn id(&self) -> BranchId {
        self.id
    }

    pub fn orbit(&self) -> &[CompLabel] {
        &self.orbit
    }

    pub fn halt_step(&self) -> usize {
        self.halt_step
    }

    pub fn post_halt_label(&self) -> CompLabel {
        self.orbit[self.halt_step]
    }

    pub fn label_at(&self, t: usize) -> CompLabel {
        self.orbit.get(t).copied().unwrap_or_else(|| self.post_halt_label())
    }

    pub fn halted_at(&self, t: usize) -> bool {
        t >= self.halt_step
    }

    /// Halt-qubit record up to and including step `t`.
    pub fn record_at(&self, t: usize) -> Option<usize> {
        self.halted_at(t).then_some(self.halt_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolicyKind {
    /// Every branch runs through `|a_0>, |a_1>, ...` after halting.
    SharedOrbit,
    /// Branch `i` runs through `|a_pi_i(0)>, |a_pi_i(1)>, ...`; `pi_i` is a
    /// permutation of `0..len`, extended by the identity.
    PermutedOrbit,
    /// Branch `i` runs through an arbitrary injective sequence of indices.
    CustomOrbit,
}

/// Post-halt ancilla maps `rho_i`, each injective so that the ancilla states
/// a branch visits after halting are mutually orthogonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AncillaPolicy {
    kind: PolicyKind,
    maps: BTreeMap<BranchId, Vec<usize>>,
}

fn check_injective(branch: BranchId, map: &[usize]) -> Result<(), AncillaError> {
    let mut seen = BTreeSet::new();
    for &index in map {
        if !seen.insert(index) {
            return Err(AncillaError::NonInjective { branch, index });
        }
    }
    Ok(())
}

impl AncillaPolicy {
    pub fn shared() -> Self {
        Self { kind: PolicyKind::SharedOrbit, maps: BTreeMap::new() }
    }

    /// Branches absent from `maps` use the identity.
    pub fn permuted(maps: BTreeMap<BranchId, Vec<usize>>) -> Result<Self, AncillaError> {
        for (&b, map) in &maps {
            check_injective(b, map)?;
            if map.iter().any(|&k| k >= map.len()) {
                return Err(AncillaError::NotPermutation(b));
            }
        }
        Ok(Self { kind: PolicyKind::PermutedOrbit, maps })
    }

    /// Branches absent from `maps` use the identity; listed maps must cover
    /// every post-halt step that is simulated.
    pub fn custom(maps: BTreeMap<BranchId, Vec<usize>>) -> Result<Self, AncillaError> {
        for (&b, map) in &maps {
            check_injective(b, map)?;
        }
        Ok(Self { kind: PolicyKind::CustomOrbit, maps })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn maps(&self) -> &BTreeMap<BranchId, Vec<usize>> {
        &self.maps
    }

    /// `rho_branch(k)`, the ancilla index `k` steps after halting.
    pub fn ancilla_index(&self, branch: BranchId, k: usize) -> Result<usize, AncillaError> {
        match (self.kind, self.maps.get(&branch)) {
            (PolicyKind::SharedOrbit, _) | (_, None) => Ok(k),
            (PolicyKind::PermutedOrbit, Some(map)) => Ok(map.get(k).copied().unwrap_or(k)),
            (PolicyKind::CustomOrbit, Some(map)) => {
                map.get(k).copied().ok_or(AncillaError::MapTooShort { branch, len: map.len(), needed: k + 1 })
            }
        }
    }
}

/// Evolution of a branch superposition for `t = 0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    branches: Vec<BranchSpec>,
    amps: Vec<Complex64>,
    t_max: usize,
    /// `labels[t][i]`: composite label of branch `i` at step `t`.
    labels: Vec<Vec<BranchLabel>>,
    states: Vec<SparseState<BranchLabel>>,
}

impl RunTrace {
    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn state(&self, t: usize) -> &SparseState<BranchLabel> {
        &self.states[t]
    }

    pub fn label(&self, t: usize, branch: usize) -> BranchLabel {
        self.labels[t][branch]
    }

    /// Index of the branch with the given id.
    pub fn position(&self, id: BranchId) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    fn check(&self, t: usize, i: usize, j: usize) -> Result<(), AncillaError> {
        let len = self.branches.len();
        for index in [i, j] {
            if index >= len {
                return Err(AncillaError::IndexOutOfRange { index, len });
            }
        }
        if t > self.t_max {
            return Err(AncillaError::TimeOutOfRange { t, t_max: self.t_max });
        }
        Ok(())
    }

    /// Reduced density matrix of the computational register at step `t`.
    pub fn computational_density(&self, t: usize) -> DensityMatrix<CompLabel> {
        reduced_density(&self.states[t], |l| (l.comp, (l.halted, l.ancilla)))
    }
}

/// Builds `sum_i a_i |c_i(t)>|H_i(t)>|anc_i(t)>` for every `t <= t_max`.
pub fn run_superposition(
    branches: &[BranchSpec],
    amps: &[Complex64],
    policy: &AncillaPolicy,
    t_max: usize,
) -> Result<RunTrace, AncillaError> {
    if branches.is_empty() {
        return Err(AncillaError::NoBranches);
    }
    if amps.len() != branches.len() {
        return Err(AncillaError::AmplitudeCount { amps: amps.len(), branches: branches.len() });
    }
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(AncillaError::NotNormalized(norm));
    }
    let mut ids = BTreeSet::new();
    for b in branches {
        if !ids.insert(b.id) {
            return Err(AncillaError::DuplicateBranch(b.id));
        }
    }
    if let Some(&unknown) = policy.maps.keys().find(|id| !ids.contains(id)) {
        return Err(AncillaError::UnknownBranch(unknown));
    }

    let mut labels = Vec::with_capacity(t_max + 1);
    let mut states = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let mut row = Vec::with_capacity(branches.len());
        for b in branches {
            let ancilla = if b.halted_at(t) { policy.ancilla_index(b.id, t - b.halt_step)? } else { 0 };
            row.push(BranchLabel { comp: b.label_at(t), halted: b.halted_at(t), ancilla });
        }
        let mut seen: BTreeMap<BranchLabel, BranchId> = BTreeMap::new();
        for (b, l) in branches.iter().zip(&row) {
            if let Some(&a) = seen.get(l) {
                return Err(AncillaError::BranchCollision { t, a, b: b.id, label: *l });
            }
            seen.insert(*l, b.id);
        }
        states.push(row.iter().copied().zip(amps.iter().copied()).collect());
        labels.push(row);
    }
    Ok(RunTrace { branches: branches.to_vec(), amps: amps.to_vec(), t_max, labels, states })
}

/// `a_i conj(a_j) [H_i(t) = H_j(t)] [anc_i(t) = anc_j(t)]`: the coefficient of
/// `|c_i(t)><c_j(t)|` contributed by the pair of branches.
pub fn coherence(trace: &RunTrace, t: usize, i: usize, j: usize) -> Result<Complex64, AncillaError> {
    trace.check(t, i, j)?;
    let (li, lj) = (trace.label(t, i), trace.label(t, j));
    if li.halted == lj.halted && li.ancilla == lj.ancilla {
        Ok(trace.amps[i] * trace.amps[j].conj())
    } else {
        Ok(Complex64::default())
    }
}

/// The same coefficient read off the reduced computational density matrix.
/// Requires the two branches to carry different computational labels.
pub fn coherence_from_density(trace: &RunTrace, t: usize, i: usize, j: usize) -> Result<Complex64, AncillaError> {
    trace.check(t, i, j)?;
    let (ci, cj) = (trace.label(t, i).comp, trace.label(t, j).comp);
    if ci == cj {
        return Err(AncillaError::DegenerateObservable { i, j, t, label: ci });
    }
    Ok(trace.computational_density(t).entry(&ci, &cj))
}

/// Branches sharing one halt-time record, with their conditional final state.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    /// Step at which the halt qubit was first seen as 1, if at all.
    pub halt_step: Option<usize>,
    pub probability: f64,
    pub branch_ids: Vec<BranchId>,
    /// Normalized post-measurement state at `t_max`.
    pub state: SparseState<BranchLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeProbability {
    pub halt_step: Option<usize>,
    pub label: CompLabel,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoredOutcome {
    pub records: Vec<RecordOutcome>,
    /// Joint distribution of halt record and final computational label.
    pub distribution: Vec<OutcomeProbability>,
}

impl MonitoredOutcome {
    /// Marginal over final computational labels.
    pub fn label_marginal(&self) -> BTreeMap<CompLabel, f64> {
        let mut m = BTreeMap::new();
        for o in &self.distribution {
            *m.entry(o.label).or_insert(0.0) += o.probability;
        }
        m
    }
}

/// Groups branch indices by their halt record up to step `t`.
fn records_at(trace: &RunTrace, t: usize) -> BTreeMap<Option<usize>, Vec<usize>> {
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, b) in trace.branches.iter().enumerate() {
        groups.entry(b.record_at(t)).or_default().push(i);
    }
    groups
}

fn group_state(trace: &RunTrace, t: usize, members: &[usize]) -> SparseState<BranchLabel> {
    members.iter().map(|&i| (trace.label(t, i), trace.amps[i])).collect()
}

/// Exact outcome distribution when the halt qubit is measured after every
/// step. Each halt-time record selects the branches that halted at that
/// step; the distribution enumerates all records rather than sampling.
pub fn monitored_run(
    branches: &[BranchSpec],
    amps: &[Complex64],
    policy: &AncillaPolicy,
    t_max: usize,
) -> Result<MonitoredOutcome, AncillaError> {
    let trace = run_superposition(branches, amps, policy, t_max)?;
    let mut records = Vec::new();
    let mut distribution = Vec::new();
    for (halt_step, members) in records_at(&trace, t_max) {
        let unnormalized = group_state(&trace, t_max, &members);
        let probability = unnormalized.norm_sqr();
        if probability == 0.0 {
            continue;
        }
        let rho = reduced_density(&unnormalized, |l| (l.comp, (l.halted, l.ancilla)));
        for label in rho.labels() {
            distribution.push(OutcomeProbability { halt_step, label: *label, probability: rho.entry(label, label).re });
        }
        records.push(RecordOutcome {
            halt_step,
            probability,
            branch_ids: members.iter().map(|&i| trace.branches[i].id).collect(),
            state: unnormalized.scaled(Complex64::new(1.0 / probability.sqrt(), 0.0)),
        });
    }
    Ok(MonitoredOutcome { records, distribution })
}

/// Distribution of final computational labels without monitoring.
pub fn unmonitored_distribution(trace: &RunTrace) -> BTreeMap<CompLabel, f64> {
    let rho = trace.computational_density(trace.t_max);
    rho.labels().iter().map(|l| (*l, rho.entry(l, l).re)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitoringEffect {
    pub unmonitored_expectation: f64,
    pub monitored_expectation: f64,
    pub delta: f64,
}

/// Expectation of the projector onto `(|c_i(t)> + |c_j(t)>)/sqrt 2` with and
/// without halt-qubit monitoring up to step `t`.
///
/// Monitoring turns the state into a mixture over halt records, which
/// removes every coherence between branches whose records differ.
pub fn monitoring_effect(trace: &RunTrace, pair: (usize, usize), t: usize) -> Result<MonitoringEffect, AncillaError> {
    let (i, j) = pair;
    trace.check(t, i, j)?;
    let (ci, cj) = (trace.label(t, i).comp, trace.label(t, j).comp);
    if ci == cj {
        return Err(AncillaError::DegenerateObservable { i, j, t, label: ci });
    }
    let expectation = |rho: &DensityMatrix<CompLabel>| {
        0.5 * (rho.entry(&ci, &ci).re + rho.entry(&cj, &cj).re) + rho.entry(&ci, &cj).re
    };
    let unmonitored = expectation(&trace.computational_density(t));
    let parts: Vec<DensityMatrix<CompLabel>> = records_at(trace, t)
        .values()
        .map(|members| reduced_density(&group_state(trace, t, members), |l| (l.comp, (l.halted, l.ancilla))))
        .collect();
    let monitored = expectation(&DensityMatrix::sum(&parts));
    Ok(MonitoringEffect {
        unmonitored_expectation: unmonitored,
        monitored_expectation: monitored,
        delta: (unmonitored - monitored).abs(),
    })
}

/// Numerical witness that a state reached in one step cannot also be a fixed
/// point of the same unitary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointCertificate {
    /// `<psi_prev|psi>`
    pub overlap: Complex64,
    /// `|U psi - psi|`
    pub residual: f64,
    /// `sqrt(2 - 2 Re <psi_prev|psi>)`
    pub lower_bound: f64,
    /// `|U psi_prev - psi|`
    pub construction_error: f64,
    /// `max |U^dagger U - I|`
    pub unitarity_deviation: f64,
}

/// Builds a unitary with `U psi_prev = psi` and measures how far `psi` is
/// from being a fixed point of it.
///
/// `U = e^{i phi} H`, where `e^{i phi}` is the phase of the overlap and `H`
/// is the Householder reflection taking `psi_prev` to `e^{-i phi} psi`. Since
/// `U psi - psi = U (psi - psi_prev)`, the residual equals the lower bound.
pub fn fixed_point_certificate(
    psi_prev: &DVector<Complex64>,
    psi: &DVector<Complex64>,
) -> Result<FixedPointCertificate, AncillaError> {
    let n = psi.len();
    if n < 2 {
        return Err(AncillaError::InvalidDimension(n));
    }
    if psi_prev.len() != n || (psi_prev.norm() - 1.0).abs() > 1e-12 || (psi.norm() - 1.0).abs() > 1e-12 {
        return Err(AncillaError::NotUnitVectors);
    }
    let overlap = psi_prev.dotc(psi);
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
    let target = psi * phase.conj();
    let w = psi_prev - &target;
    let ww = w.norm_squared();
    let mut u = nalgebra::DMatrix::<Complex64>::identity(n, n);
    if ww > 0.0 {
        u -= (&w * w.adjoint()) * Complex64::new(2.0 / ww, 0.0);
    }
    u *= phase;

    let unitarity_deviation = (u.adjoint() * &u - nalgebra::DMatrix::<Complex64>::identity(n, n))
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    Ok(FixedPointCertificate {
        overlap,
        residual: (&u * psi - psi).norm(),
        lower_bound: (2.0 - 2.0 * overlap.re).max(0.0).sqrt(),
        construction_error: (&u * psi_prev - psi).norm(),
        unitarity_deviation,
    })
}

/// Random instance of [`fixed_point_certificate`] with real overlap `overlap`.
pub fn fixed_point_impossibility<R: Rng + ?Sized>(
    dim: usize,
    overlap: f64,
    rng: &mut R,
) -> Result<FixedPointCertificate, AncillaError> {
    if dim < 2 {
        return Err(AncillaError::InvalidDimension(dim));
    }
    let random_unit = |rng: &mut R| {
        let v = DVector::from_fn(dim, |_, _| complex_normal(rng));
        let n = v.norm();
        v / Complex64::new(n, 0.0)
    };
    let prev = random_unit(rng);
    let mut perp = random_unit(rng);
    perp -= &prev * prev.dotc(&perp);
    let pn = perp.norm();
    perp /= Complex64::new(pn, 0.0);
    let psi = &prev * Complex64::new(overlap, 0.0) + perp * Complex64::new((1.0 - overlap * overlap).sqrt(), 0.0);
    fixed_point_certificate(&prev, &psi)
}
