//! `U^dagger U - I` expressed through the local rules.
//!
//! With moves of exactly one cell and `N >= 5`, two configuration columns of
//! `U` can overlap only if
//!
//! * the heads sit on the same cell and the tapes agree elsewhere: the
//!   overlap is the inner product of the two full local outcome vectors; or
//! * the heads sit two cells apart and the tapes agree outside those two
//!   cells: the left configuration moving right meets the right one moving
//!   left, and the overlap pairs right-moving outcomes of one key with
//!   left-moving outcomes of the other.
//!
//! Each local relation is repeated `N S^(N-1)` times (same cell) or
//! `2 N S^(N-2)` times (two apart, both orientations) in the global matrix,
//! which gives the Frobenius weights below.

use num_complex::Complex64;

use crate::qtm::{MachineDims, Move, Outcome, RuleKey, TransitionTable};

/// Free amplitude slot: one outcome target of one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Slot {
    pub key: usize,
    pub target: usize,
}

/// Dense local layout of a table: `K = 2MS` keys, `L = 4MS` targets each.
#[derive(Debug, Clone)]
pub(crate) struct LocalLayout {
    pub dims: MachineDims,
    pub keys: usize,
    pub targets: usize,
    pub slots: Vec<Slot>,
    weight_same: f64,
    weight_apart: f64,
}

pub(crate) fn target_index(dims: &MachineDims, head: usize, symbol: usize, movement: Move, halted: bool) -> usize {
    ((head * dims.symbols + symbol) * 2 + (movement == Move::Right) as usize) * 2 + halted as usize
}

pub(crate) fn decode_key(dims: &MachineDims, idx: usize) -> RuleKey {
    let halted = idx % 2 == 1;
    let hs = idx / 2;
    RuleKey { head: hs / dims.symbols, symbol: hs % dims.symbols, halted }
}

pub(crate) fn decode_target(dims: &MachineDims, idx: usize) -> (usize, usize, Move, bool) {
    let halted = idx % 2 == 1;
    let movement = if (idx / 2) % 2 == 1 { Move::Right } else { Move::Left };
    let hs = idx / 4;
    (hs / dims.symbols, hs % dims.symbols, movement, halted)
}

impl LocalLayout {
    /// Layout whose free slots are every target of every key, or, when
    /// `halting_scheme` is set, only targets allowed by the halting scheme.
    pub fn new(dims: MachineDims, halting_scheme: bool) -> Self {
        assert!(dims.cells >= 5, "local overlap structure requires N >= 5");
        let keys = dims.key_count();
        let targets = 4 * dims.heads * dims.symbols;
        let mut slots = Vec::new();
        for key in 0..keys {
            let k = decode_key(&dims, key);
            for target in 0..targets {
                let (_, symbol, _, halted) = decode_target(&dims, target);
                if halting_scheme && k.halted && (symbol != k.symbol || !halted) {
                    continue;
                }
                slots.push(Slot { key, target });
            }
        }
        let n = dims.cells as f64;
        let s = dims.symbols as f64;
        Self {
            dims,
            keys,
            targets,
            slots,
            weight_same: n * s.powi(dims.cells as i32 - 1),
            weight_apart: 2.0 * n * s.powi(dims.cells as i32 - 2),
        }
    }

    pub fn param_len(&self) -> usize {
        2 * self.slots.len()
    }

    pub fn residual_len(&self) -> usize {
        let ks = self.keys * self.dims.symbols;
        self.keys * self.keys + ks * ks
    }

    /// Expands the real parameter vector into dense local vectors.
    pub fn deltas(&self, x: &[f64]) -> Vec<Complex64> {
        let mut d = vec![Complex64::default(); self.keys * self.targets];
        for (i, s) in self.slots.iter().enumerate() {
            d[s.key * self.targets + s.target] = Complex64::new(x[2 * i], x[2 * i + 1]);
        }
        d
    }

    pub fn params_from_table(&self, table: &TransitionTable) -> Vec<f64> {
        let mut x = vec![0.0; self.param_len()];
        for (i, s) in self.slots.iter().enumerate() {
            let k = decode_key(&self.dims, s.key);
            let (h, sym, mv, halted) = decode_target(&self.dims, s.target);
            let a = table.amplitude(&k, h, sym, mv, halted);
            x[2 * i] = a.re;
            x[2 * i + 1] = a.im;
        }
        x
    }

    pub fn table(&self, x: &[f64]) -> TransitionTable {
        let mut t = TransitionTable::new(self.dims);
        let mut rules: Vec<Vec<Outcome>> = vec![Vec::new(); self.keys];
        for (i, s) in self.slots.iter().enumerate() {
            let amp = Complex64::new(x[2 * i], x[2 * i + 1]);
            if amp == Complex64::default() {
                continue;
            }
            let (h, sym, mv, halted) = decode_target(&self.dims, s.target);
            rules[s.key].push(Outcome::new(h, sym, mv, halted, amp));
        }
        for (key, outs) in rules.into_iter().enumerate() {
            t.set_rule(decode_key(&self.dims, key), outs).expect("layout indices are in range");
        }
        t
    }

    fn right(&self, d: &[Complex64], key: usize, written: usize, head: usize, halted: bool) -> Complex64 {
        d[key * self.targets + target_index(&self.dims, head, written, Move::Right, halted)]
    }

    fn left(&self, d: &[Complex64], key: usize, written: usize, head: usize, halted: bool) -> Complex64 {
        d[key * self.targets + target_index(&self.dims, head, written, Move::Left, halted)]
    }

    fn apart_index(&self, k1: usize, b: usize, k2: usize, a: usize) -> usize {
        let s = self.dims.symbols;
        self.keys * self.keys + ((k1 * s + b) * self.keys + k2) * s + a
    }

    /// Weight of residual `i` in the Frobenius norm of `U^dagger U - I`.
    pub fn weight(&self, i: usize) -> f64 {
        if i < self.keys * self.keys {
            self.weight_same
        } else {
            self.weight_apart
        }
    }

    /// Distinct entries of `U^dagger U - I`.
    ///
    /// The first `K^2` are `<delta_k|delta_k'> - delta_kk'`; the rest are
    /// `sum_{q,H} conj(right_{k1}(q, b, H)) left_{k2}(q, a, H)` for a left
    /// configuration with key `k1` whose right neighbour-but-one cell holds
    /// `a`, and a right configuration with key `k2` whose left
    /// neighbour-but-one cell holds `b`.
    pub fn residuals(&self, d: &[Complex64]) -> Vec<Complex64> {
        let (m, s, kk, l) = (self.dims.heads, self.dims.symbols, self.keys, self.targets);
        let mut r = vec![Complex64::default(); self.residual_len()];
        for k in 0..kk {
            for k2 in 0..kk {
                let mut acc = Complex64::default();
                for t in 0..l {
                    acc += d[k * l + t].conj() * d[k2 * l + t];
                }
                if k == k2 {
                    acc -= 1.0;
                }
                r[k * kk + k2] = acc;
            }
        }
        for k1 in 0..kk {
            for b in 0..s {
                for k2 in 0..kk {
                    for a in 0..s {
                        let mut acc = Complex64::default();
                        for q in 0..m {
                            for h in [false, true] {
                                acc += self.right(d, k1, b, q, h).conj() * self.left(d, k2, a, q, h);
                            }
                        }
                        r[self.apart_index(k1, b, k2, a)] = acc;
                    }
                }
            }
        }
        r
    }

    /// Derivative of every residual along slot `slot` in direction `dir`.
    /// Calls `emit(residual_index, derivative)`; an index may repeat.
    pub fn residual_derivative(
        &self,
        d: &[Complex64],
        slot: Slot,
        dir: Complex64,
        mut emit: impl FnMut(usize, Complex64),
    ) {
        let (s, kk, l) = (self.dims.symbols, self.keys, self.targets);
        let (k, t) = (slot.key, slot.target);
        for other in 0..kk {
            emit(k * kk + other, dir.conj() * d[other * l + t]);
            emit(other * kk + k, d[other * l + t].conj() * dir);
        }
        let (q, written, mv, h) = decode_target(&self.dims, t);
        match mv {
            Move::Right => {
                for k2 in 0..kk {
                    for a in 0..s {
                        emit(self.apart_index(k, written, k2, a), dir.conj() * self.left(d, k2, a, q, h));
                    }
                }
            }
            Move::Left => {
                for k1 in 0..kk {
                    for b in 0..s {
                        emit(self.apart_index(k1, b, k, written), self.right(d, k1, b, q, h).conj() * dir);
                    }
                }
            }
        }
    }

    /// `||U^dagger U - I||_F^2`.
    pub fn penalty(&self, residuals: &[Complex64]) -> f64 {
        residuals.iter().enumerate().map(|(i, r)| self.weight(i) * r.norm_sqr()).sum()
    }

    /// `max |U^dagger U - I|`.
    pub fn max_deviation(&self, residuals: &[Complex64]) -> f64 {
        residuals.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    /// Whether slot `i` carries amplitude from a running key into a halted target.
    pub fn is_halting_slot(&self, i: usize) -> bool {
        let s = self.slots[i];
        s.key.is_multiple_of(2) && !s.target.is_multiple_of(2)
    }

    /// `sum` over running keys of the squared halting amplitude.
    pub fn total_halting_mass(&self, x: &[f64]) -> f64 {
        (0..self.slots.len())
            .filter(|&i| self.is_halting_slot(i))
            .map(|i| x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1])
            .sum()
    }

    /// Gradient of the penalty with respect to the real parameters.
    pub fn penalty_gradient(&self, d: &[Complex64], residuals: &[Complex64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_len()];
        for (i, &slot) in self.slots.iter().enumerate() {
            for (p, dir) in [(2 * i, Complex64::new(1.0, 0.0)), (2 * i + 1, Complex64::new(0.0, 1.0))] {
                let mut acc = 0.0;
                self.residual_derivative(d, slot, dir, |ri, dr| {
                    acc += 2.0 * self.weight(ri) * (residuals[ri].conj() * dr).re;
                });
                g[p] = acc;
            }
        }
        g
    }

    /// Real Jacobian of the weighted residual vector `sqrt(w_i) * r_i`, with
    /// real and imaginary parts as separate rows. Row-major.
    pub fn weighted_jacobian(&self, d: &[Complex64]) -> (usize, Vec<f64>) {
        let rows = 2 * self.residual_len();
        let cols = self.param_len();
        let mut j = vec![0.0; rows * cols];
        for (i, &slot) in self.slots.iter().enumerate() {
            for (p, dir) in [(2 * i, Complex64::new(1.0, 0.0)), (2 * i + 1, Complex64::new(0.0, 1.0))] {
                self.residual_derivative(d, slot, dir, |ri, dr| {
                    let w = self.weight(ri).sqrt();
                    j[(2 * ri) * cols + p] += w * dr.re;
                    j[(2 * ri + 1) * cols + p] += w * dr.im;
                });
            }
        }
        (rows, j)
    }

    pub fn weighted_residual_vector(&self, residuals: &[Complex64]) -> Vec<f64> {
        residuals
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                let w = self.weight(i).sqrt();
                [w * r.re, w * r.im]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halting_nogo::generate::{random_compliant_table, random_unitary_table, seeded_rng};
    use crate::qtm::build_global_matrix;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn dense_frobenius_defect(t: &TransitionTable) -> (f64, f64) {
        let u = build_global_matrix(t).unwrap().to_dense();
        let n = u.nrows();
        let e = u.adjoint() * &u - DMatrix::<Complex64>::identity(n, n);
        (e.iter().map(|v| v.norm_sqr()).sum(), e.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }

    fn random_params(layout: &LocalLayout, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed, 0);
        (0..layout.param_len()).map(|_| rng.random_range(-0.6..0.6)).collect()
    }

    #[test]
    fn local_penalty_matches_dense_matrix() {
        for (dims, scheme, seed) in [
            (MachineDims::new(1, 2, 5).unwrap(), false, 1),
            (MachineDims::new(2, 1, 6).unwrap(), true, 2),
            (MachineDims::new(2, 2, 5).unwrap(), true, 3),
            (MachineDims::new(2, 2, 5).unwrap(), false, 4),
        ] {
            let layout = LocalLayout::new(dims, scheme);
            let x = random_params(&layout, seed);
            let t = layout.table(&x);
            let r = layout.residuals(&layout.deltas(&x));
            let (frob, maxabs) = dense_frobenius_defect(&t);
            assert!((layout.penalty(&r) - frob).abs() <= 1e-10 * frob.max(1.0), "{dims}");
            assert!((layout.max_deviation(&r) - maxabs).abs() <= 1e-13, "{dims}");
        }
    }

    #[test]
    fn generated_unitary_tables_have_zero_local_residuals() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let mut rng = seeded_rng(5, 0);
        let layout = LocalLayout::new(dims, true);
        let t = random_compliant_table(dims, &mut rng);
        let x = layout.params_from_table(&t);
        assert!(layout.max_deviation(&layout.residuals(&layout.deltas(&x))) < 1e-14);
        let free = LocalLayout::new(dims, false);
        let g = random_unitary_table(dims, &mut rng);
        let xg = free.params_from_table(&g);
        assert!(free.max_deviation(&free.residuals(&free.deltas(&xg))) < 1e-14);
        assert_eq!(free.table(&xg).rules().count(), g.rules().count());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let dims = MachineDims::new(2, 2, 5).unwrap();
        let layout = LocalLayout::new(dims, false);
        let x = random_params(&layout, 11);
        let pen = |x: &[f64]| layout.penalty(&layout.residuals(&layout.deltas(x)));
        let d = layout.deltas(&x);
        let g = layout.penalty_gradient(&d, &layout.residuals(&d));
        let h = 1e-6;
        for p in (0..layout.param_len()).step_by(7) {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[p] += h;
            xm[p] -= h;
            let fd = (pen(&xp) - pen(&xm)) / (2.0 * h);
            assert!((fd - g[p]).abs() <= 1e-5 * (1.0 + fd.abs()), "param {p}: fd {fd} analytic {}", g[p]);
        }
    }

    #[test]
    fn jacobian_reproduces_gradient() {
        let dims = MachineDims::new(1, 2, 6).unwrap();
        let layout = LocalLayout::new(dims, true);
        let x = random_params(&layout, 12);
        let d = layout.deltas(&x);
        let r = layout.residuals(&d);
        let rv = layout.weighted_residual_vector(&r);
        let (rows, j) = layout.weighted_jacobian(&d);
        let cols = layout.param_len();
        let g = layout.penalty_gradient(&d, &r);
        for p in 0..cols {
            let jt_r: f64 = (0..rows).map(|i| j[i * cols + p] * rv[i]).sum();
            assert!((2.0 * jt_r - g[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn halting_scheme_layout_excludes_forbidden_slots() {
        let dims = MachineDims::new(2, 2, 6).unwrap();
        let constrained = LocalLayout::new(dims, true);
        let free = LocalLayout::new(dims, false);
        // Halted keys keep only (q', same symbol, d, halted): 2M of 4MS targets.
        assert_eq!(free.slots.len(), 8 * 16);
        assert_eq!(constrained.slots.len(), 4 * 16 + 4 * 4);
        let t = constrained.table(&random_params(&constrained, 3));
        assert!(crate::qtm::check_ozawa_compliance(&t).pass());
    }
}
