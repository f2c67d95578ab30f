//! Sparse complex vectors over opaque, totally ordered basis labels.
//!
//! Both the Turing-machine configuration space and the branch/ancilla space
//! are represented with [`SparseState`]; the label type is chosen by the
//! caller. Entries are kept in a `BTreeMap`, so every reduction iterates in
//! label order and results are bit-stable across runs.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Amplitudes below this magnitude are dropped from sparse states.
pub const DEFAULT_PRUNE: f64 = 1e-15;

#[derive(Clone, PartialEq)]
pub struct SparseState<L: Ord> {
    entries: BTreeMap<L, Complex64>,
    prune: f64,
}

impl<L: Ord> Default for SparseState<L> {
    fn default() -> Self {
        Self::new()
    }
}

impl<L: Ord + fmt::Debug> fmt::Debug for SparseState<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.entries.iter()).finish()
    }
}

impl<L: Ord> SparseState<L> {
    pub fn new() -> Self {
        Self::with_prune(DEFAULT_PRUNE)
    }

    /// Creates an empty state with a custom prune threshold.
    pub fn with_prune(prune: f64) -> Self {
        assert!(prune >= 0.0 && prune.is_finite(), "prune threshold must be finite and >= 0");
        Self { entries: BTreeMap::new(), prune }
    }

    /// The normalized basis vector `|label>`.
    pub fn basis(label: L) -> Self {
        let mut s = Self::new();
        s.add(label, Complex64::new(1.0, 0.0));
        s
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune
    }

    /// Adds `amp` to the amplitude stored at `label`.
    ///
    /// Non-finite amplitudes are rejected with a panic: a stored state must
    /// never contain NaN or infinity.
    pub fn add(&mut self, label: L, amp: Complex64) {
        assert!(amp.re.is_finite() && amp.im.is_finite(), "non-finite amplitude");
        let prune = self.prune;
        match self.entries.entry(label) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = *e.get() + amp;
                if v.norm() < prune {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                if amp.norm() >= prune {
                    e.insert(amp);
                }
            }
        }
    }

    pub fn get(&self, label: &L) -> Complex64 {
        self.entries.get(label).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending label order.
    pub fn iter(&self) -> impl Iterator<Item = (&L, &Complex64)> {
        self.entries.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &L> {
        self.entries.keys()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> Self
    where
        L: Clone,
    {
        let mut out = Self::with_prune(self.prune);
        for (l, a) in &self.entries {
            out.add(l.clone(), a * factor);
        }
        out
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: Complex64, other: &Self) -> Self
    where
        L: Clone,
    {
        let mut out = self.clone();
        for (l, a) in &other.entries {
            out.add(l.clone(), a * factor);
        }
        out
    }
}

impl<L: Ord> FromIterator<(L, Complex64)> for SparseState<L> {
    fn from_iter<I: IntoIterator<Item = (L, Complex64)>>(iter: I) -> Self {
        let mut s = Self::new();
        for (l, a) in iter {
            s.add(l, a);
        }
        s
    }
}

/// `<x|y>`, conjugate-linear in `x`.
pub fn inner_product<L: Ord>(x: &SparseState<L>, y: &SparseState<L>) -> Complex64 {
    // Walk the smaller map and probe the larger one.
    if x.len() <= y.len() {
        x.iter().filter_map(|(l, a)| y.entries.get(l).map(|b| a.conj() * b)).sum()
    } else {
        y.iter().filter_map(|(l, b)| x.entries.get(l).map(|a| a.conj() * b)).sum()
    }
}

/// Gram matrix `G[j][k] = <v_j|v_k>`.
///
/// # Panics
/// If `vectors` is empty.
pub fn gram<L: Ord>(vectors: &[SparseState<L>]) -> DMatrix<Complex64> {
    assert!(!vectors.is_empty(), "gram of an empty list");
    let n = vectors.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = inner_product(&vectors[j], &vectors[k]);
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
    }
    g
}

/// Reduced density matrix of a subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<S> {
    labels: Vec<S>,
    matrix: DMatrix<Complex64>,
}

impl<S: Ord> DensityMatrix<S> {
    pub fn labels(&self) -> &[S] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    fn index_of(&self, label: &S) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }

    /// `rho[a][b]`, zero when either label lies outside the support.
    pub fn entry(&self, a: &S, b: &S) -> Complex64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => Complex64::default(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Largest `|rho - rho^dagger|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sum of the given density matrices over the union of their supports.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a DensityMatrix<S>>) -> DensityMatrix<S>
    where
        S: Clone + 'a,
    {
        let parts: Vec<&DensityMatrix<S>> = parts.into_iter().collect();
        let mut labels: Vec<S> = parts.iter().flat_map(|p| p.labels.iter().cloned()).collect();
        labels.sort();
        labels.dedup();
        let mut matrix = DMatrix::zeros(labels.len(), labels.len());
        for p in parts {
            let map: Vec<usize> = p.labels.iter().map(|l| labels.binary_search(l).expect("label in union")).collect();
            for (i, &gi) in map.iter().enumerate() {
                for (j, &gj) in map.iter().enumerate() {
                    matrix[(gi, gj)] += p.matrix[(i, j)];
                }
            }
        }
        DensityMatrix { labels, matrix }
    }
}

/// Traces out the environment of `state`.
///
/// `split` maps each basis label to `(subsystem, environment)`; the result
/// satisfies `rho[c][c'] = sum_e amp(c, e) * conj(amp(c', e))`.
pub fn reduced_density<L, S, E, F>(state: &SparseState<L>, split: F) -> DensityMatrix<S>
where
    L: Ord,
    S: Ord + Clone,
    E: Ord,
    F: Fn(&L) -> (S, E),
{
    let mut by_env: BTreeMap<E, Vec<(S, Complex64)>> = BTreeMap::new();
    for (l, a) in state.iter() {
        let (s, e) = split(l);
        by_env.entry(e).or_default().push((s, *a));
    }
    let mut labels: Vec<S> = by_env.values().flat_map(|v| v.iter().map(|(s, _)| s.clone())).collect();
    labels.sort();
    labels.dedup();

    let mut matrix = DMatrix::zeros(labels.len(), labels.len());
    for column in by_env.values() {
        for (s1, a1) in column {
            let i = labels.binary_search(s1).expect("label collected above");
            for (s2, a2) in column {
                let j = labels.binary_search(s2).expect("label collected above");
                matrix[(i, j)] += a1 * a2.conj();
            }
        }
    }
    DensityMatrix { labels, matrix }
}
