//! Numerical search for the largest halting amplitude a unitary machine can
//! carry.
//!
//! Each restart maximizes `mass - lambda * ||U^dagger U - I||_F^2` with
//! L-BFGS, starting near a random unitary table, while `lambda` grows
//! tenfold per phase, then drives the penalty to
//! zero with Levenberg-Marquardt. The winning table is projected onto the
//! nearest unitary (polar factor of the dense `U`) and refit to local rules.
//! Restarts run in parallel; each one depends only on `(seed, restart)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use rand::Rng;
use rand_distr::StandardNormal;

use super::generate::{random_compliant_table, random_unitary_table, seeded_rng};
use super::halting_mass_by_key;
use super::penalty::{decode_key, decode_target, LocalLayout};
use crate::qtm::{build_global_matrix, Configuration, MachineDims, QtmError, TransitionTable};

/// A restart counts as feasible when `max |U^dagger U - I|` is at most this.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Polar refits with residual above this are reported but not applied.
pub const REFIT_TOL: f64 = 1e-12;

/// Standard deviation of the noise added to the random unitary start.
const START_JITTER: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Qtm(#[from] QtmError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub restarts: usize,
    /// Penalty-phase L-BFGS iterations per restart.
    pub iterations: usize,
    pub seed: u64,
    /// Restrict halted keys to the halting scheme.
    pub halting_scheme: bool,
    pub initial_penalty: f64,
    pub phases: usize,
    /// Levenberg-Marquardt iteration cap for the feasibility phase.
    pub restoration_iterations: usize,
    pub polar_projection: bool,
}

impl SearchConfig {
    pub fn new(restarts: usize, iterations: usize, seed: u64) -> Self {
        Self {
            restarts,
            iterations,
            seed,
            halting_scheme: true,
            initial_penalty: 1.0,
            phases: 7,
            restoration_iterations: 200,
            polar_projection: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// `mass - lambda * penalty` at the current `lambda`.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub mass: f64,
    pub unitarity_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Largest per-key halting mass of the selected table.
    pub best_mass: f64,
    /// `max |U^dagger U - I|` of the selected table.
    pub best_unitarity_deviation: f64,
    /// `max |U_refit - polar(U)|`, when the projection ran.
    pub projection_residual: Option<f64>,
    pub projection_applied: bool,
    pub best_restart: usize,
    pub table: TransitionTable,
    /// Objective trace of the selected restart.
    pub trace: Vec<TracePoint>,
    pub restarts: Vec<RestartSummary>,
}

struct RestartOutcome {
    summary: RestartSummary,
    params: Vec<f64>,
    trace: Vec<TracePoint>,
}

/// Maximizes halting mass over tables of shape `dims`.
pub fn search_max_halting_mass(dims: MachineDims, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    if config.restarts == 0 {
        return Err(SearchError::InvalidArgument("restarts must be positive".into()));
    }
    if config.phases == 0 {
        return Err(SearchError::InvalidArgument("phases must be positive".into()));
    }
    if dims.cells < 5 {
        return Err(SearchError::InvalidArgument(format!("search needs N >= 5, got {}", dims.cells)));
    }
    dims.check_dense()?;
    let layout = LocalLayout::new(dims, config.halting_scheme);

    let outcomes: Vec<RestartOutcome> =
        (0..config.restarts).into_par_iter().map(|r| run_restart(&layout, config, r)).collect();

    let feasible = |o: &&RestartOutcome| o.summary.unitarity_deviation <= FEASIBILITY_TOL;
    let best = if outcomes.iter().any(|o| feasible(&o)) {
        // Largest mass; ties go to the lowest restart index.
        outcomes.iter().filter(feasible).fold(None::<&RestartOutcome>, |acc, o| match acc {
            Some(b) if b.summary.mass >= o.summary.mass => Some(b),
            _ => Some(o),
        })
    } else {
        outcomes.iter().fold(None::<&RestartOutcome>, |acc, o| match acc {
            Some(b) if b.summary.unitarity_deviation <= o.summary.unitarity_deviation => Some(b),
            _ => Some(o),
        })
    }
    .expect("at least one restart");

    let mut table = layout.table(&best.params);
    let mut projection_residual = None;
    let mut projection_applied = false;
    if config.polar_projection {
        let (refit, residual) = polar_refit(&table, config.halting_scheme)?;
        projection_residual = Some(residual);
        if residual <= REFIT_TOL {
            table = refit;
            projection_applied = true;
        }
    }

    let deviation = build_global_matrix(&table)?.unitarity_deviation();
    let mass = max_key_mass(&table);
    Ok(SearchResult {
        best_mass: mass,
        best_unitarity_deviation: deviation,
        projection_residual,
        projection_applied,
        best_restart: best.summary.restart,
        table,
        trace: best.trace.clone(),
        restarts: outcomes.iter().map(|o| o.summary).collect(),
    })
}

fn max_key_mass(table: &TransitionTable) -> f64 {
    halting_mass_by_key(table).into_iter().map(|(_, m)| m).fold(0.0, f64::max)
}

fn run_restart(layout: &LocalLayout, config: &SearchConfig, restart: usize) -> RestartOutcome {
    let mut rng = seeded_rng(config.seed, restart as u64);
    let start = if config.halting_scheme {
        random_compliant_table(layout.dims, &mut rng)
    } else {
        random_unitary_table(layout.dims, &mut rng)
    };
    let mut x = layout.params_from_table(&start);
    for v in x.iter_mut() {
        *v += START_JITTER * rng.sample::<f64, _>(StandardNormal);
    }

    let mut trace = Vec::new();
    let mut iteration = 0;
    let per_phase = config.iterations.div_ceil(config.phases);
    let mut lambda = config.initial_penalty;
    let mut remaining = config.iterations;
    for _ in 0..config.phases {
        let budget = per_phase.min(remaining);
        remaining -= budget;
        let objective = |x: &[f64]| -> (f64, Vec<f64>) {
            let d = layout.deltas(x);
            let r = layout.residuals(&d);
            let mut g = layout.penalty_gradient(&d, &r);
            for v in g.iter_mut() {
                *v *= lambda;
            }
            for i in (0..layout.slots.len()).filter(|&i| layout.is_halting_slot(i)) {
                g[2 * i] -= 2.0 * x[2 * i];
                g[2 * i + 1] -= 2.0 * x[2 * i + 1];
            }
            (lambda * layout.penalty(&r) - layout.total_halting_mass(x), g)
        };
        lbfgs(&mut x, objective, budget, |f| {
            iteration += 1;
            trace.push(TracePoint { iteration, objective: -f });
        });
        lambda *= 10.0;
    }
    let last_lambda = lambda / 10.0;

    restore_feasibility(layout, &mut x, config.restoration_iterations, |x, pen| {
        iteration += 1;
        trace.push(TracePoint { iteration, objective: layout.total_halting_mass(x) - last_lambda * pen });
    });

    let table = layout.table(&x);
    let deviation = layout.max_deviation(&layout.residuals(&layout.deltas(&x)));
    RestartOutcome {
        summary: RestartSummary { restart, mass: max_key_mass(&table), unitarity_deviation: deviation },
        params: x,
        trace,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. `on_iter` receives the
/// objective after each accepted step.
fn lbfgs(x: &mut [f64], f: impl Fn(&[f64]) -> (f64, Vec<f64>), max_iter: usize, mut on_iter: impl FnMut(f64)) {
    const MEMORY: usize = 8;
    let n = x.len();
    let (mut fx, mut g) = f(x);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    for _ in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if !gnorm.is_finite() || gnorm < 1e-14 {
            break;
        }
        // Two-loop recursion.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &dir);
            for i in 0..n {
                dir[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = match hist.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        for v in dir.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for i in 0..n {
                dir[i] += (a - b) * s[i];
            }
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else { break };
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&trial);
        fx = ft;
        g = gt;
        on_iter(fx);
    }
}

/// Levenberg-Marquardt on the weighted residuals of `U^dagger U - I`.
fn restore_feasibility(layout: &LocalLayout, x: &mut Vec<f64>, max_iter: usize, mut on_iter: impl FnMut(&[f64], f64)) {
    let cols = layout.param_len();
    let mut mu = 1e-3;
    let mut r = layout.residuals(&layout.deltas(x));
    let mut pen = layout.penalty(&r);
    for _ in 0..max_iter {
        if layout.max_deviation(&r) <= 1e-15 {
            break;
        }
        let d = layout.deltas(x);
        let (rows, jac) = layout.weighted_jacobian(&d);
        let j = DMatrix::from_row_slice(rows, cols, &jac);
        let rv = DVector::from_vec(layout.weighted_residual_vector(&r));
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &rv;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..cols {
                a[(i, i)] += mu * (1.0 + jtj[(i, i)]);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let rt = layout.residuals(&layout.deltas(&trial));
            let pt = layout.penalty(&rt);
            if pt < pen {
                *x = trial;
                r = rt;
                pen = pt;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        on_iter(x, pen);
        if !improved {
            break;
        }
    }
}

/// Complex product through four real products, which lets the dense
/// kernel do the work.
fn complex_matmul(a: &(DMatrix<f64>, DMatrix<f64>), b: &(DMatrix<f64>, DMatrix<f64>)) -> (DMatrix<f64>, DMatrix<f64>) {
    let re = &a.0 * &b.0 - &a.1 * &b.1;
    let im = &a.0 * &b.1 + &a.1 * &b.0;
    (re, im)
}

fn split(m: &DMatrix<Complex64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// Unitary polar factor of a square matrix by Newton-Schulz iteration
/// `X <- X (3I - X^dagger X) / 2`, valid while the singular values lie in
/// `(0, sqrt 3)`. Returns `None` if the iteration does not converge.
pub fn polar_factor(u: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = u.nrows();
    assert_eq!(n, u.ncols(), "polar factor of a non-square matrix");
    let mut x = split(u);
    for _ in 0..60 {
        let xh = (x.0.transpose(), -x.1.transpose());
        let (gre, gim) = complex_matmul(&xh, &x);
        let mut defect = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max(Complex64::new(gre[(i, j)] - target, gim[(i, j)]).norm());
            }
        }
        if !defect.is_finite() || defect > 2.0 {
            return None;
        }
        if defect <= 4.0 * f64::EPSILON {
            return Some(DMatrix::from_fn(n, n, |i, j| Complex64::new(x.0[(i, j)], x.1[(i, j)])));
        }
        let mut y = (-gre, -gim);
        for i in 0..n {
            y.0[(i, i)] += 3.0;
        }
        let (re, im) = complex_matmul(&x, &y);
        x = (re * 0.5, im * 0.5);
    }
    None
}

/// Projects `table` onto the nearest unitary global matrix and reads local
/// rules back from one column per key. Returns the refit table and the
/// largest entry of `|U_refit - polar(U)|`.
fn polar_refit(table: &TransitionTable, halting_scheme: bool) -> Result<(TransitionTable, f64), SearchError> {
    let dims = *table.dims();
    let global = build_global_matrix(table)?;
    let Some(polar) = polar_factor(&global.to_dense()) else {
        return Ok((table.clone(), f64::INFINITY));
    };
    let layout = LocalLayout::new(dims, halting_scheme);
    let mut x = vec![0.0; layout.param_len()];
    for (i, slot) in layout.slots.iter().enumerate() {
        let key = decode_key(&dims, slot.key);
        let (head, symbol, movement, halted) = decode_target(&dims, slot.target);
        let mut tape = vec![0u8; dims.cells];
        tape[0] = key.symbol as u8;
        let col = Configuration::new(key.head, 0, tape.clone(), key.halted).index(&dims);
        tape[0] = symbol as u8;
        let row = Configuration::new(head, movement.apply(0, dims.cells), tape, halted).index(&dims);
        let z = polar[(row, col)];
        x[2 * i] = z.re;
        x[2 * i + 1] = z.im;
    }
    let refit = layout.table(&x);
    let refit_global = build_global_matrix(&refit)?;
    let n = polar.nrows();
    let mut residual = 0.0_f64;
    for col in 0..n {
        for row in 0..n {
            residual = residual.max((refit_global.get(row, col) - polar[(row, col)]).norm());
        }
    }
    Ok((refit, residual))
}
