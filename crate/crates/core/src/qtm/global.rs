use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{Configuration, MachineDims, QtmError, TransitionTable};
use crate::hilbert::SparseState;

/// Largest configuration-space dimension for which `U` is materialized.
pub const DENSE_CAP: usize = 4096;

/// The global step operator `U` as a `D x D` matrix.
///
/// Rows and columns are configurations in lexicographic order. Storage is
/// column-compressed because each column has at most `4 M S` nonzeros; use
/// [`GlobalMatrix::to_dense`] for a dense copy.
#[derive(Debug, Clone)]
pub struct GlobalMatrix {
    dims: MachineDims,
    columns: Vec<Vec<(usize, Complex64)>>,
}

impl GlobalMatrix {
    pub fn dims(&self) -> &MachineDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Nonzero entries of column `col`, sorted by row.
    pub fn column(&self, col: usize) -> &[(usize, Complex64)] {
        &self.columns[col]
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let c = &self.columns[col];
        c.binary_search_by_key(&row, |&(r, _)| r).map(|i| c[i].1).unwrap_or_default()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (col, entries) in self.columns.iter().enumerate() {
            for &(row, v) in entries {
                m[(row, col)] = v;
            }
        }
        m
    }

    /// Matrix-vector product on a dense amplitude vector.
    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        assert_eq!(x.len(), self.dim(), "vector length mismatch");
        let mut y = DVector::zeros(self.dim());
        for (col, entries) in self.columns.iter().enumerate() {
            let xc = x[col];
            if xc == Complex64::default() {
                continue;
            }
            for &(row, v) in entries {
                y[row] += v * xc;
            }
        }
        y
    }

    /// Largest entry of `|U^dagger U - I|`.
    ///
    /// Only column pairs sharing a nonzero row can overlap, so the Gram
    /// matrix is accumulated row by row; all other entries are exactly zero.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for (col, entries) in self.columns.iter().enumerate() {
            for &(row, v) in entries {
                rows[row].push((col, v));
            }
        }
        let mut worst = 0.0_f64;
        let mut acc: Vec<Complex64> = vec![Complex64::default(); n];
        let mut touched: Vec<usize> = Vec::new();
        for (col, entries) in self.columns.iter().enumerate() {
            for &(row, v) in entries {
                for &(other, w) in &rows[row] {
                    if acc[other] == Complex64::default() {
                        touched.push(other);
                    }
                    acc[other] += v.conj() * w;
                }
            }
            let mut diag_seen = false;
            touched.sort_unstable();
            touched.dedup();
            for &other in &touched {
                let target = if other == col { 1.0 } else { 0.0 };
                diag_seen |= other == col;
                worst = worst.max((acc[other] - target).norm());
                acc[other] = Complex64::default();
            }
            if !diag_seen {
                // Column with no nonzero entries, or whose self-overlap cancelled.
                let self_overlap: f64 = entries.iter().map(|(_, v)| v.norm_sqr()).sum();
                worst = worst.max((self_overlap - 1.0).abs());
            }
            touched.clear();
        }
        worst
    }

    /// Squared amplitude carried from running column `col` into halted rows.
    pub fn halting_flow(&self, col: usize) -> f64 {
        self.columns[col].iter().filter(|(r, _)| r % 2 == 1).map(|(_, v)| v.norm_sqr()).sum()
    }

    /// Total squared amplitude flowing from halt = 0 columns into halt = 1 rows.
    pub fn total_halting_flow(&self) -> f64 {
        (0..self.dim()).filter(|c| c % 2 == 0).map(|c| self.halting_flow(c)).sum()
    }
}

/// Materializes `U` with column `C` equal to the step applied to `|C>`.
pub fn build_global_matrix(table: &TransitionTable) -> Result<GlobalMatrix, QtmError> {
    let dims = *table.dims();
    let dim = dims.check_dense()?;
    let columns = (0..dim)
        .map(|col| {
            let cfg = Configuration::from_index(&dims, col);
            let mut out = SparseState::new();
            table.apply_config(&cfg, |next, a| out.add(next, a));
            let mut entries: Vec<(usize, Complex64)> = out.iter().map(|(c, a)| (c.index(&dims), *a)).collect();
            entries.sort_unstable_by_key(|&(r, _)| r);
            entries
        })
        .collect();
    Ok(GlobalMatrix { dims, columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks `max |U^dagger U - I| <= tol` on the full configuration space.
pub fn check_global_unitarity(table: &TransitionTable, tol: f64) -> Result<UnitarityReport, QtmError> {
    let max_deviation = build_global_matrix(table)?.unitarity_deviation();
    Ok(UnitarityReport { max_deviation, pass: max_deviation <= tol })
}
